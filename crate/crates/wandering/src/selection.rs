//! Inductive five-parameter selection of tangency chains `(p_i, c_i)`, the δ-schedule,
//! the word-selection rule and the historic word extension.

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExactModel, ModelParams, SystemAC};
use crate::numeric::{linear_fit, rational_to_f64, LogScale};
use crate::stats::{wasserstein1, EmpiricalMeasure, Point};
use crate::symbolic::{OneSidedSequence, TransitionGraph, Word};
use crate::tangency::{fd_step, psi_solve, ExactBackend, Tail};

/// Constants of the inductive construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub beta: f64,
    pub delta0: f64,
    pub eps: f64,
    pub c1: f64,
    pub l0: f64,
    /// Trust radius of the Ψ solve, in units of `δ_i`.
    pub theta: f64,
    /// Budget ratio of the historic extension.
    pub nu: f64,
    pub m_beta: f64,
}

impl ScheduleParams {
    /// Schedule with `β = 3/2`, `ε = 1/10`, `L₀ = 1` and `C₁ = 4√5`.
    pub fn new(delta0: f64) -> Result<Self> {
        let c1 = 2.0 * 5f64.sqrt() * 2.0;
        Self::with(1.5, delta0, 0.1, c1, 1.0)
    }

    pub fn with(beta: f64, delta0: f64, eps: f64, c1: f64, l0: f64) -> Result<Self> {
        if !(beta > 1.0 && beta < 2.0) {
            return Err(Error::Precondition(format!("β = {beta} is outside (1, 2)")));
        }
        if !(delta0 > 0.0 && delta0 < 1.0) {
            return Err(Error::Precondition(format!("δ₀ = {delta0} is outside (0, 1)")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Precondition(format!("ε = {eps} is outside (0, 1]")));
        }
        let k = 1.0 + eps + 2.0 * eps * eps;
        if beta.powi(5) <= k * beta / (2.0 - beta) {
            return Err(Error::Precondition(format!("β⁵ = {} does not exceed (1+ε+2ε²)β/(2−β) = {}", beta.powi(5), k * beta / (2.0 - beta))));
        }
        Ok(ScheduleParams { beta, delta0, eps, c1, l0, theta: 1.0, nu: 1.0, m_beta: m_beta(beta, delta0) })
    }

    /// Exponent `1 + ε + 2ε²` of the lower width bound.
    pub fn sandwich_exponent(&self) -> f64 {
        1.0 + self.eps + 2.0 * self.eps * self.eps
    }

    pub fn ln_delta(&self, j: usize) -> f64 {
        self.beta.powi(j as i32) * self.delta0.ln()
    }
}

/// `M_β = Σ_{j≥0} δ₀^{β^j − 1}`, so that `Σ δ_j ≤ M_β·δ₀`.
pub fn m_beta(beta: f64, delta0: f64) -> f64 {
    let l = delta0.ln();
    let mut sum = 0.0;
    for j in 0..200 {
        let term = ((beta.powi(j) - 1.0) * l).exp();
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// `δ_j = δ₀^{β^j}` in log-space.
pub fn delta_schedule(j: usize, sched: &ScheduleParams) -> LogScale {
    LogScale::from_ln(sched.ln_delta(j))
}

/// `C₁ = 2√5·L₀·(sup‖D(π∘F^□)‖ + 1)` with the sup sampled over every fold box.
pub fn calibrate_c1(system: &SystemAC, l0: f64, grid: usize) -> f64 {
    let mut sup = 0.0f64;
    for f in system.folds() {
        for i in 0..grid {
            for k in 0..grid {
                let t = |a: usize| if grid == 1 { 0.5 } else { a as f64 / (grid - 1) as f64 };
                let x = -f.x_half + 2.0 * f.x_half * t(i);
                let y = f.y_range.0 + (f.y_range.1 - f.y_range.0) * t(k);
                let img = f.map.eval(x, y);
                let h = 1e-7;
                let g0 = (system.project(img[0] + h, img[1], f.target) - system.project(img[0] - h, img[1], f.target)) / (2.0 * h);
                let g1 = (system.project(img[0], img[1] + h, f.target) - system.project(img[0], img[1] - h, f.target)) / (2.0 * h);
                let df = f.map.jacobian(x, y);
                let row = [g0 * df[0][0] + g1 * df[1][0], g0 * df[0][1] + g1 * df[1][1]];
                sup = sup.max(row[0].hypot(row[1]));
            }
        }
    }
    2.0 * 5f64.sqrt() * l0 * (sup + 1.0)
}

/// Width sandwich `δ ≥ w̄(c) ≥ w̲(c) ≥ δ^{1+ε+2ε²}` in log-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub ln_delta: f64,
    pub ln_lower: f64,
    pub ln_w_min: f64,
    pub ln_w_max: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
}

impl Sandwich {
    pub fn ok(&self) -> bool {
        self.upper_ok && self.lower_ok
    }
}

/// A selected word with the cut points used to build it.
#[derive(Clone, Debug)]
pub struct WordChoice {
    pub word: Word,
    /// Letters taken from the stable sequence, minus one.
    pub m: usize,
    /// Letters taken from the unstable sequence, minus one.
    pub m_prime: usize,
    pub sandwich: Sandwich,
}

/// Largest `m ≥ 0` with `m·rate > ln_delta` (rate < 0).
pub(crate) fn largest_above(ln_delta: f64, rate: f64) -> usize {
    let mut m = ((ln_delta / rate).ceil() - 1.0).max(0.0) as usize;
    while ((m + 1) as f64) * rate > ln_delta {
        m += 1;
    }
    while m > 0 && (m as f64) * rate <= ln_delta {
        m -= 1;
    }
    m
}

/// `c = p_{m+1}(s)·p_{m'+1}(u)` with `m`, `m'` maximal such that `w̄(p_m(s)) > δ` and `h̄(p_{m'}(u)) > δ`.
pub fn choose_word(
    s: &OneSidedSequence,
    u: &OneSidedSequence,
    ln_delta: f64,
    params: &ModelParams,
    graph: &TransitionGraph,
    sched: &ScheduleParams,
    strict: bool,
) -> Result<WordChoice> {
    let (ln_s, _, ln_rs) = params.log_rates();
    if ln_delta >= ln_s {
        return Err(Error::Precondition(format!("δ = e^{ln_delta:.3} is not below the letter width e^{ln_s:.3}")));
    }
    let m = largest_above(ln_delta, ln_s);
    let m_prime = largest_above(ln_delta, ln_rs);
    let mut letters = s.truncate(m + 1).letters().to_vec();
    letters.extend_from_slice(u.truncate(m_prime + 1).letters());
    let word = Word::from_letters(letters, graph)?;
    // affine model: every point of Y^c has the same width s^{|c|}
    let ln_w = word.len() as f64 * ln_s;
    let ln_lower = sched.sandwich_exponent() * ln_delta;
    let sandwich = Sandwich { ln_delta, ln_lower, ln_w_min: ln_w, ln_w_max: ln_w, upper_ok: ln_w <= ln_delta, lower_ok: ln_w >= ln_lower };
    if strict && !sandwich.ok() {
        return Err(Error::Selection(format!(
            "width e^{ln_w:.3} of a {}-letter word misses [δ^{:.2}, δ] = [e^{ln_lower:.3}, e^{ln_delta:.3}]",
            word.len(),
            sched.sandwich_exponent()
        )));
    }
    Ok(WordChoice { word, m, m_prime, sandwich })
}

/// Certificates appended by one inductive step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub step: usize,
    /// (C1) for each word created at this step.
    pub sandwiches: Vec<Sandwich>,
    /// (C2″) `|𝒱|` of the five solved equations.
    pub residuals: Vec<f64>,
    pub residual_ok: bool,
    /// (C3) `‖p_{i+1} − p_i‖` against `C₁δ_{i+5}`.
    pub displacement: f64,
    pub displacement_bound: f64,
    pub displacement_ok: bool,
    pub newton_steps: usize,
    /// `‖p_{i+1} − p₀‖ ≤ C₁M_βδ₀`.
    pub in_ball: bool,
    pub admissible: bool,
    /// `C₁δ_{i+5}` is below the float resolution of `p`.
    pub below_float_resolution: bool,
}

/// The chain built so far.
#[derive(Clone, Debug)]
pub struct SelectionState {
    pub step: usize,
    pub p: Vec<BigRational>,
    pub p_history: Vec<Vec<BigRational>>,
    /// `c_1, c_2, …`.
    pub words: Vec<Word>,
    /// 0-based fold entered after each word.
    pub folds: Vec<usize>,
    /// `s_{i+5}`, the stable tail of the newest equation.
    pub pending: Option<OneSidedSequence>,
    pub choices: Vec<(usize, usize)>,
    pub certificates: Vec<StepCertificate>,
}

impl SelectionState {
    pub fn empty(p0: Vec<BigRational>) -> Self {
        SelectionState { step: 0, p: p0.clone(), p_history: vec![p0], words: vec![], folds: vec![], pending: None, choices: vec![], certificates: vec![] }
    }

    pub fn p_f64(&self) -> Vec<f64> {
        self.p.iter().map(rational_to_f64).collect()
    }

    /// All (C1), (C2″), (C3) certificates hold.
    pub fn all_green(&self) -> bool {
        self.certificates.iter().all(|c| c.residual_ok && c.displacement_ok && c.sandwiches.iter().all(Sandwich::ok))
    }
}

/// Fold (0-based) after word `i` (1-based) in a chain cycling through `dim` folds.
pub fn chain_fold(i: usize, dim: usize) -> usize {
    (i + dim - 1) % dim
}

/// Length of the stable expansion needed at scale `δ`: `s^D ≤ δ·e^{-46}`.
fn pair_depth(ln_delta: f64, ln_s: f64) -> usize {
    ((ln_delta - 46.0) / ln_s).ceil().max(1.0) as usize
}

fn norm2(v: &[BigRational]) -> f64 {
    v.iter().map(|x| rational_to_f64(x).powi(2)).sum::<f64>().sqrt()
}

fn diff(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

struct Ctx<'a> {
    model: ExactModel,
    params: &'a ModelParams,
    graph: &'a TransitionGraph,
    sched: &'a ScheduleParams,
    tol: f64,
    strict: bool,
}

impl Ctx<'_> {
    fn dim(&self) -> usize {
        self.params.n - 1
    }

    fn pair(&self, p: &[BigRational], fold: usize, ln_delta: f64) -> Result<(OneSidedSequence, OneSidedSequence)> {
        let (ln_s, _, _) = self.params.log_rates();
        self.model.with_p(p.to_vec()).tangency_pair(fold, pair_depth(ln_delta, ln_s))
    }

    fn word(&self, s: &OneSidedSequence, u: &OneSidedSequence, j: usize) -> Result<WordChoice> {
        choose_word(s, u, self.sched.ln_delta(j), self.params, self.graph, self.sched, self.strict)
    }

    /// Solves Ψ for `words` and `tail` from `p` and assembles the certificate.
    fn solve(&self, step: usize, words: &[Word], tail: &OneSidedSequence, p: &[BigRational], p0: &[BigRational], j_bound: usize, sandwiches: Vec<Sandwich>) -> Result<(Vec<BigRational>, StepCertificate)> {
        let backend = ExactBackend { model: self.model.clone() };
        let ln_d = self.sched.ln_delta(j_bound);
        // exact arithmetic: solve to zero, the tolerance only gates the certificate
        let sol = psi_solve(&backend, words, &Tail::Seq(tail.clone()), p, fd_step(ln_d.exp()), 0.0, 8)?;
        let residuals = crate::tangency::psi(&backend, words, &Tail::Seq(tail.clone()), &sol.p)?.iter().map(|v| rational_to_f64(v).abs()).collect::<Vec<_>>();
        let displacement = norm2(&diff(&sol.p, p));
        let bound = self.sched.c1 * ln_d.exp();
        let ln_bound = self.sched.c1.ln() + ln_d;
        let pn = norm2(&sol.p);
        let cert = StepCertificate {
            step,
            sandwiches,
            residual_ok: residuals.iter().all(|r| *r <= self.tol),
            residuals,
            // compare in log-space: the bound underflows f64 late in the chain
            displacement_ok: displacement == 0.0 || displacement.ln() < ln_bound,
            displacement,
            displacement_bound: bound,
            newton_steps: sol.steps,
            in_ball: norm2(&diff(&sol.p, p0)) <= self.sched.c1 * self.sched.m_beta * self.sched.delta0,
            admissible: self.params.admissible(&sol.p),
            below_float_resolution: ln_bound < (f64::EPSILON * pn.max(1e-300)).ln(),
        };
        Ok((sol.p, cert))
    }
}

fn check_certificate(cert: &StepCertificate, strict: bool) -> Result<()> {
    if !cert.residual_ok {
        return Err(Error::Selection(format!("tangency residual {:.3e} above tolerance", cert.residuals.iter().fold(0.0f64, |a, b| a.max(*b)))));
    }
    if !cert.displacement_ok {
        return Err(Error::Selection(format!("(C3) fails: displacement {:.3e} ≥ {:.3e}", cert.displacement, cert.displacement_bound)));
    }
    if !cert.admissible {
        return Err(Error::Selection("parameter left the admissible set".into()));
    }
    if strict && !cert.sandwiches.iter().all(Sandwich::ok) {
        return Err(Error::Selection("(C1) width sandwich fails".into()));
    }
    Ok(())
}

/// Initialization: words `c_1…c_5` and a parameter with five simultaneous tangencies.
pub fn init_state(system: &SystemAC, p0: Vec<BigRational>, sched: &ScheduleParams, tol: f64, strict: bool) -> Result<SelectionState> {
    let params = system.params();
    let ctx = Ctx { model: ExactModel::new(params), params, graph: crate::hyperbolic::RepSource::graph(system), sched, tol, strict };
    let dim = ctx.dim();
    let mut pairs = Vec::with_capacity(dim + 1);
    // pair for the fold before c_1, then for the folds after c_1..c_dim
    for i in 0..=dim {
        let fold = chain_fold(i, dim);
        pairs.push(ctx.pair(&p0, fold, sched.ln_delta(i + 1))?);
    }
    let mut words = Vec::with_capacity(dim);
    let mut sandwiches = Vec::with_capacity(dim);
    let mut choices = Vec::with_capacity(dim);
    for i in 1..=dim {
        let c = ctx.word(&pairs[i - 1].1, &pairs[i].0, i)?;
        sandwiches.push(c.sandwich.clone());
        choices.push((c.m, c.m_prime));
        words.push(c.word);
    }
    let tail = pairs[dim].1.clone();
    let (p1, cert) = ctx.solve(1, &words, &tail, &p0, &p0, 1, sandwiches)?;
    check_certificate(&cert, strict)?;
    let mut state = SelectionState::empty(p0);
    state.step = 1;
    state.p = p1.clone();
    state.p_history.push(p1);
    state.folds = (1..=dim).map(|i| chain_fold(i, dim)).collect();
    state.words = words;
    state.pending = Some(tail);
    state.choices = choices;
    state.certificates.push(cert);
    Ok(state)
}

/// Appends `c_{i+5}` and re-solves the five most recent tangencies.
pub fn selection_step(state: &SelectionState, system: &SystemAC, sched: &ScheduleParams, tol: f64, strict: bool) -> Result<SelectionState> {
    let params = system.params();
    let ctx = Ctx { model: ExactModel::new(params), params, graph: crate::hyperbolic::RepSource::graph(system), sched, tol, strict };
    let dim = ctx.dim();
    let i = state.step;
    if i == 0 {
        return Err(Error::Precondition("the chain is not initialized".into()));
    }
    let pending = state.pending.clone().ok_or_else(|| Error::Precondition("no pending stable tail".into()))?;
    let new_index = i + dim;
    let fold = chain_fold(new_index, dim);
    let (u, s_next) = ctx.pair(&state.p, fold, sched.ln_delta(new_index + 1))?;
    let choice = ctx.word(&pending, &u, new_index)?;
    let mut words = state.words.clone();
    words.push(choice.word.clone());
    let window = &words[words.len() - dim..];
    let p0 = &state.p_history[0];
    let (p, cert) = ctx.solve(i + 1, window, &s_next, &state.p, p0, new_index, vec![choice.sandwich.clone()])?;
    check_certificate(&cert, strict)?;
    let mut next = state.clone();
    next.step = i + 1;
    next.p = p.clone();
    next.p_history.push(p);
    next.words = words;
    next.folds.push(fold);
    next.pending = Some(s_next);
    next.choices.push((choice.m, choice.m_prime));
    next.certificates.push(cert);
    Ok(next)
}

/// `|𝒱^{c_i,c_{i+1}}|` at the final parameter against `C₁L₀M_βδ_{i+5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualBound {
    pub i: usize,
    pub ln_value: f64,
    pub ln_bound: f64,
    pub ok: bool,
}

/// A complete run, possibly stopped early.
#[derive(Clone, Debug)]
pub struct SelectionRun {
    pub state: SelectionState,
    pub stop_reason: Option<String>,
    pub total_displacement: f64,
    pub total_bound: f64,
    pub residual_bounds: Vec<ResidualBound>,
    /// Slope, intercept and `R²` of `ln|𝒱_i|` against `β^i` over the nonzero residuals.
    pub decay_fit: Option<(f64, f64, f64)>,
}

/// Runs the induction for up to `max_steps` steps from `p0`.
pub fn run_selection(system: &SystemAC, p0: Option<Vec<BigRational>>, sched: &ScheduleParams, max_steps: usize, tol: f64, strict: bool) -> Result<SelectionRun> {
    let params = system.params();
    let p0 = p0.unwrap_or_else(|| params.p.clone());
    if !params.admissible(&p0) {
        return Err(Error::Precondition("p₀ is not admissible".into()));
    }
    let mut state = SelectionState::empty(p0.clone());
    let mut stop_reason = None;
    if max_steps > 0 {
        match init_state(system, p0.clone(), sched, tol, strict) {
            Ok(s) => state = s,
            Err(e) => stop_reason = Some(e.to_string()),
        }
        while stop_reason.is_none() && state.step < max_steps {
            match selection_step(&state, system, sched, tol, strict) {
                Ok(s) => state = s,
                Err(e) => stop_reason = Some(e.to_string()),
            }
        }
    }
    let total_displacement = norm2(&diff(&state.p, &p0));
    let total_bound = sched.c1 * sched.m_beta * sched.delta0;
    let model = ExactModel::new(params).with_p(state.p.clone());
    let mut residual_bounds = Vec::new();
    for i in 1..state.words.len() {
        let v = model.v(state.words[i - 1].letters(), state.words[i].letters())?;
        let ln_value = if v.is_zero() { f64::NEG_INFINITY } else { crate::numeric::rational_ln_abs(&v) };
        let ln_bound = (sched.c1 * sched.l0 * sched.m_beta).ln() + sched.ln_delta(i + 5);
        residual_bounds.push(ResidualBound { i, ln_value, ln_bound, ok: ln_value <= ln_bound });
    }
    let pts: Vec<(f64, f64)> = residual_bounds.iter().filter(|r| r.ln_value.is_finite()).map(|r| (sched.beta.powi(r.i as i32), r.ln_value)).collect();
    let decay_fit = if pts.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    Ok(SelectionRun { state, stop_reason, total_displacement, total_bound, residual_bounds, decay_fit })
}

/// Best historic continuation of a prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub word: Vec<usize>,
    pub score: f64,
    pub exhaustive: bool,
    pub candidates: usize,
}

/// Shift-orbit measure `𝖾_n` of a word, each point truncated at `horizon` along the periodic extension.
fn word_measure(letters: &[usize], n: usize, horizon: usize) -> EmpiricalMeasure {
    let len = letters.len();
    let pts: Vec<Point> = (0..n).map(|i| Point::Symbols((0..horizon).map(|k| letters[(i + k) % len] as u16).collect())).collect();
    EmpiricalMeasure::from_weighted(pts, vec![1.0; n]).expect("n ≥ 1")
}

fn extension_score(prefix: &[usize], past: &[EmpiricalMeasure], d: &[usize], horizon: usize) -> Result<f64> {
    let mut full = prefix.to_vec();
    full.extend_from_slice(d);
    let e = word_measure(&full, full.len(), horizon);
    let mut best = f64::INFINITY;
    for m in past {
        best = best.min(wasserstein1(&e, m)?);
    }
    Ok(best)
}

/// The extension `d` with `|d| ≤ ν|prefix|` maximizing the distance of `𝖾_{|c·d|}(c·d)`
/// from `{𝖾_n(c) : 1 ≤ n ≤ |c|}`; exhaustive up to `exhaustive_cap` candidates, beam search beyond.
pub fn historic_extension(prefix: &Word, nu: f64, graph: &TransitionGraph, horizon: usize, exhaustive_cap: usize) -> Result<Extension> {
    if !(nu > 0.0) {
        return Err(Error::Precondition("ν must be positive".into()));
    }
    if prefix.is_empty() {
        return Err(Error::Precondition("prefix must be nonempty".into()));
    }
    let budget = (nu * prefix.len() as f64).floor() as usize;
    if budget == 0 {
        return Ok(Extension { word: vec![], score: 0.0, exhaustive: true, candidates: 0 });
    }
    let letters = prefix.letters();
    let past: Vec<EmpiricalMeasure> = (1..=letters.len()).map(|n| word_measure(letters, n, horizon)).collect();
    let alphabet: Vec<usize> = graph.hyperbolic_arrows();
    let admissible = |w: &[usize]| -> bool {
        let mut full = letters.to_vec();
        full.extend_from_slice(w);
        Word::from_letters(full, graph).is_ok()
    };
    let k = alphabet.len() as f64;
    let count: f64 = (1..=budget).map(|l| k.powi(l as i32)).sum();
    let exhaustive = count <= exhaustive_cap as f64;
    let mut best: (Vec<usize>, f64) = (vec![], 0.0);
    let mut seen = 0usize;
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    let beam = exhaustive_cap.max(1);
    for _ in 0..budget {
        let mut next: Vec<(Vec<usize>, f64)> = Vec::new();
        for w in &frontier {
            for &a in &alphabet {
                let mut c = w.clone();
                c.push(a);
                if !admissible(&c) {
                    continue;
                }
                let s = extension_score(letters, &past, &c, horizon)?;
                seen += 1;
                if s > best.1 {
                    best = (c.clone(), s);
                }
                next.push((c, s));
            }
        }
        if !exhaustive {
            next.sort_by(|a, b| b.1.total_cmp(&a.1));
            next.truncate(beam);
        }
        frontier = next.into_iter().map(|(c, _)| c).collect();
    }
    Ok(Extension { word: best.0, score: best.1, exhaustive, candidates: seen })
}
