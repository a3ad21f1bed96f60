//! Renormalization along a tangency chain: rescaling factors, rescaling charts,
//! the renormalized maps and their quadratic limit, and the wandering of a sample cloud.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::grid_points;
use crate::model::{build_model, ExactModel, ModelParams};
use crate::numeric::{parse_rational, rational_to_f64, LogScale};
use crate::selection::{largest_above, run_selection, ScheduleParams, SelectionRun};
use crate::symbolic::Word;

/// Verification settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormConfig {
    /// Bound on the ratios of the three block conditions.
    pub threshold: f64,
    /// Relative margin required of the image of a chart box.
    pub margin: f64,
    /// Samples per side of the box grid.
    pub grid: usize,
    /// Half-side `a` of the chart box `(−a, a)²`.
    pub box_half: f64,
    /// Number of predicted words past the chain kept in the rescaling products.
    pub horizon: usize,
}

impl Default for RenormConfig {
    fn default() -> Self {
        RenormConfig { threshold: 0.1, margin: 0.05, grid: 21, box_half: 0.3, horizon: 40 }
    }
}

/// Length of the word chosen at scale `δ_k`.
pub fn predicted_word_len(k: usize, params: &ModelParams, sched: &ScheduleParams) -> usize {
    let (ln_s, _, ln_rs) = params.log_rates();
    let ld = sched.ln_delta(k);
    largest_above(ld, ln_s) + largest_above(ld, ln_rs) + 2
}

/// A tangency chain `c_1 □_1 c_2 □_2 …` of the affine model at a fixed parameter.
#[derive(Clone, Debug)]
pub struct Chain {
    params: ModelParams,
    model: ExactModel,
    sched: ScheduleParams,
    words: Vec<Vec<usize>>,
    folds: Vec<usize>,
}

impl Chain {
    /// Checks that each word feeds its fold and that each fold lands on the next word.
    pub fn new(params: &ModelParams, sched: &ScheduleParams, words: &[Word], folds: &[usize], p: Vec<BigRational>) -> Result<Self> {
        if words.is_empty() || words.len() != folds.len() {
            return Err(Error::Precondition(format!("{} words for {} folds", words.len(), folds.len())));
        }
        if p.len() + 1 != params.n {
            return Err(Error::Precondition(format!("{} offsets for N = {}", p.len(), params.n)));
        }
        for (j, (w, &k)) in words.iter().zip(folds).enumerate() {
            if k + 1 >= params.n || w.last() != Some(k) {
                return Err(Error::Membership(format!("word c_{} does not feed fold f{}", j + 1, k + 1)));
            }
            if let Some(next) = words.get(j + 1) {
                if next.first() != Some(k + 1) {
                    return Err(Error::Membership(format!("fold f{} does not land on c_{}", k + 1, j + 2)));
                }
            }
        }
        Ok(Chain {
            params: params.clone(),
            model: ExactModel::new(params).with_p(p),
            sched: sched.clone(),
            words: words.iter().map(|w| w.letters().to_vec()).collect(),
            folds: folds.to_vec(),
        })
    }

    pub fn from_run(params: &ModelParams, sched: &ScheduleParams, run: &SelectionRun) -> Result<Self> {
        Chain::new(params, sched, &run.state.words, &run.state.folds, run.state.p.clone())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn p(&self) -> &[BigRational] {
        self.model.p()
    }

    /// Letters of `c_j`, `j` 1-based.
    pub fn word(&self, j: usize) -> &[usize] {
        &self.words[j - 1]
    }

    /// Fold (0-based) entered after `c_j`.
    pub fn fold(&self, j: usize) -> usize {
        self.folds[j - 1]
    }

    /// `|c_k|`; predicted from the schedule past the chain.
    pub fn word_len(&self, k: usize) -> usize {
        if (1..=self.len()).contains(&k) {
            self.words[k - 1].len()
        } else {
            predicted_word_len(k, &self.params, &self.sched)
        }
    }

    /// Height `h_j` of the image strip of `c_j`.
    pub fn h(&self, j: usize) -> BigRational {
        self.model.h_value(self.word(j))
    }

    /// Abscissa `b_j` of the fiber of `c_j` through the critical abscissa.
    pub fn b(&self, j: usize) -> BigRational {
        self.model.b_value(self.word(j))
    }

    /// Tangency offset `e_j = h_j + p_{□_j} − b_{j+1}`.
    pub fn offset(&self, j: usize) -> Result<BigRational> {
        if j == 0 || j >= self.len() {
            return Err(Error::Precondition(format!("no successor pair at index {j}")));
        }
        self.model.v(self.word(j), self.word(j + 1))
    }
}

/// Logarithmic scales of block `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub j: usize,
    pub len: usize,
    /// `ln σ_j = |c_j|·ln s`.
    pub ln_sigma: f64,
    /// `ln τ_j = |c_j|·ln(rs)`.
    pub ln_tau: f64,
    /// `ln γ_j = Σ_{k>j} 2^{j−k} ln σ_k`, cut at the common horizon.
    pub ln_gamma: f64,
    /// `ln γ̆_j = ln 2 + ln γ_j`.
    pub ln_gamma_breve: f64,
    /// Bound on the omitted part of `ln γ_j`.
    pub ln_tail: f64,
}

/// Rescaling factors of blocks `1..=len`, all cut at index `len + horizon`.
pub fn rescaling_factors(chain: &Chain, horizon: usize) -> Vec<Scales> {
    let (ln_s, _, ln_rs) = chain.params.log_rates();
    let cut = chain.len() + horizon;
    let lens: Vec<usize> = (0..=cut + 1).map(|k| if k == 0 { 0 } else { chain.word_len(k) }).collect();
    let ratio = chain.sched.beta / 2.0;
    (1..=chain.len())
        .map(|j| {
            let mut ln_gamma = 0.0;
            for k in (j + 1..=cut).rev() {
                ln_gamma += lens[k] as f64 * ln_s * 0.5f64.powi((k - j) as i32);
            }
            let ln_tail = lens[cut + 1] as f64 * ln_s.abs() * 0.5f64.powi((cut + 1 - j) as i32) / (1.0 - ratio).max(1e-3);
            Scales {
                j,
                len: lens[j],
                ln_sigma: lens[j] as f64 * ln_s,
                ln_tau: lens[j] as f64 * ln_rs,
                ln_gamma,
                ln_gamma_breve: std::f64::consts::LN_2 + ln_gamma,
                ln_tail,
            }
        })
        .collect()
}

/// Quadratic normal form `Δ(x, y) = q(x − x̆)² + b·y + r₀ + ρ(x, y)` of the fold-to-fiber offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalForm {
    pub j: usize,
    pub critical_x: f64,
    pub q: f64,
    pub b: f64,
    /// `r₀ = Δ(x̆, 0) = e_j`.
    pub offset: LogScale,
    /// `max |ρ| / t²` over a 5×5 stencil of half-side `t = δ²/4`.
    pub remainder: f64,
}

/// Fits the normal form of block `j` by exact finite differences.
pub fn normal_form(chain: &Chain, j: usize) -> Result<NormalForm> {
    let h = chain.h(j);
    let pk = chain.p()[chain.fold(j)].clone();
    if j == 0 || j >= chain.len() {
        return Err(Error::Precondition(format!("no successor pair at index {j}")));
    }
    let b_next = chain.b(j + 1);
    let delta = |x: &BigRational, y: &BigRational| x * x + (&h + y) + &pk - &b_next;
    let t = chain.model.fold_half_width().clone();
    let zero = BigRational::zero();
    let r0 = delta(&zero, &zero);
    let two = BigRational::from_integer(BigInt::from(2));
    let q = (delta(&t, &zero) - &r0 * &two + delta(&-&t, &zero)) / (&t * &t * &two);
    let b = (delta(&zero, &t) - delta(&zero, &-&t)) / (&t * &two);
    let critical = -(delta(&t, &zero) - delta(&-&t, &zero)) / (&q * &t * BigInt::from(4));
    let mut rem = BigRational::zero();
    for i in -2i64..=2 {
        for k in -2i64..=2 {
            let x = &t * BigRational::new(i.into(), 2.into());
            let y = &t * BigRational::new(k.into(), 2.into());
            let dx = &x - &critical;
            let rho = (delta(&x, &y) - &q * &dx * &dx - &b * &y - &r0).abs();
            rem = rem.max(rho);
        }
    }
    Ok(NormalForm {
        j,
        critical_x: rational_to_f64(&critical),
        q: rational_to_f64(&q),
        b: rational_to_f64(&b),
        offset: LogScale::from_rational(&r0),
        remainder: rational_to_f64(&(rem / (&t * &t))),
    })
}

/// `Φ_j(X, Y) = (x̆_j + γ_j X, h_j + γ_j² Y / 2)`, kept as exact anchor plus log-scale offsets.
#[derive(Clone, Debug)]
pub struct RescalingChart {
    pub j: usize,
    pub anchor: (BigRational, BigRational),
    pub gamma: LogScale,
}

impl RescalingChart {
    pub fn new(chain: &Chain, scales: &Scales) -> Self {
        RescalingChart { j: scales.j, anchor: (BigRational::zero(), chain.h(scales.j)), gamma: LogScale::from_ln(scales.ln_gamma) }
    }

    pub fn offsets(&self, x: f64, y: f64) -> (LogScale, LogScale) {
        (self.gamma * LogScale::from_f64(x), self.gamma * self.gamma * LogScale::from_f64(0.5 * y))
    }

    pub fn coords(&self, dx: LogScale, dy: LogScale) -> (f64, f64) {
        ((dx / self.gamma).to_f64(), (dy * LogScale::from_f64(2.0) / (self.gamma * self.gamma)).to_f64())
    }

    /// Largest `|Φ⁻¹Φ(z) − z|` over `points`.
    pub fn round_trip_error(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .map(|&(x, y)| {
                let (dx, dy) = self.offsets(x, y);
                let (u, v) = self.coords(dx, dy);
                (u - x).abs().max((v - y).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Diagonal of `Φ_j((−a, a)²)`.
    pub fn ln_diameter(&self, a: f64) -> f64 {
        let w = self.gamma * LogScale::from_f64(2.0 * a);
        let h = self.gamma * self.gamma * LogScale::from_f64(a);
        (w * w + h * h).powf(0.5).ln
    }
}

/// `F_j(X, Y) = (X² + Y/2 + R_j, κ_j X)` in the charts of blocks `j` and `j+1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedMap {
    pub j: usize,
    /// `R_j = e_j / γ_j²`.
    pub shift: LogScale,
    /// `κ_j = −2 τ_{j+1} r γ_j / γ_{j+1}²`.
    pub y_coef: LogScale,
}

impl RenormalizedMap {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [x * x + 0.5 * y + self.shift.to_f64(), self.y_coef.to_f64() * x]
    }

    /// `sup |F_j − (X² + Y/2, 0)|` over `(−a, a)²`.
    pub fn limit_distance(&self, a: f64) -> f64 {
        self.shift.abs().to_f64().max(self.y_coef.abs().to_f64() * a)
    }
}

pub fn renormalized_map(chain: &Chain, scales: &[Scales], j: usize) -> Result<RenormalizedMap> {
    if j == 0 || j >= scales.len() {
        return Err(Error::Precondition(format!("no renormalized map at index {j}")));
    }
    let (_, ln_r, _) = chain.params.log_rates();
    let (cur, next) = (&scales[j - 1], &scales[j]);
    let e = LogScale::from_rational(&chain.offset(j)?);
    Ok(RenormalizedMap {
        j,
        shift: e / LogScale::from_ln(2.0 * cur.ln_gamma),
        y_coef: -LogScale::from_ln(std::f64::consts::LN_2 + next.ln_tau + ln_r + cur.ln_gamma - 2.0 * next.ln_gamma),
    })
}

/// Region of the model's domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// Generator strip, by arrow index.
    Letter(usize),
    /// Fold box, 0-based.
    Fold(usize),
}

/// Sample cloud: an exact anchor and the log-scale offsets of every sample from it.
#[derive(Clone, Debug)]
struct Cloud {
    ax: BigRational,
    ay: BigRational,
    dx: Vec<LogScale>,
    dy: Vec<LogScale>,
}

fn inside(lo: &BigRational, hi: &BigRational, a: &BigRational, d: &[LogScale]) -> bool {
    if a < lo || a > hi {
        return false;
    }
    let (ml, mh) = (LogScale::from_rational(&(a - lo)), LogScale::from_rational(&(hi - a)));
    d.iter().all(|&v| (ml + v).sign >= 0 && (mh - v).sign >= 0)
}

fn signed_less(a: LogScale, b: LogScale) -> bool {
    (a - b).sign < 0
}

fn spread(v: &[LogScale]) -> LogScale {
    let mut lo = v[0];
    let mut hi = v[0];
    for &x in &v[1..] {
        if signed_less(x, lo) {
            lo = x;
        }
        if signed_less(hi, x) {
            hi = x;
        }
    }
    hi - lo
}

impl Cloud {
    fn from_chart(chart: &RescalingChart, points: &[(f64, f64)]) -> Self {
        let (dx, dy) = points.iter().map(|&(x, y)| chart.offsets(x, y)).unzip();
        Cloud { ax: chart.anchor.0.clone(), ay: chart.anchor.1.clone(), dx, dy }
    }

    /// Region holding every sample, if there is one.
    fn region(&self, model: &ExactModel) -> Option<Region> {
        for a in 0..model.n() {
            let (lo, hi) = model.interval(a);
            if inside(&lo, &hi, &self.ax, &self.dx) {
                return Some(Region::Letter(a));
            }
        }
        let hw = model.fold_half_width();
        for k in 0..model.n() - 1 {
            let (lo, hi) = model.interval(k);
            let r = model.r();
            if inside(&-hw, hw, &self.ax, &self.dx) && inside(&(r * lo), &(r * hi), &self.ay, &self.dy) {
                return Some(Region::Fold(k));
            }
        }
        None
    }

    fn apply(&mut self, region: Region, model: &ExactModel) {
        let r = model.r().clone();
        match region {
            Region::Letter(a) => {
                let s = model.s().clone();
                let c = model.mid(a).clone();
                let inv_s = LogScale::from_rational(&s).powf(-1.0);
                let rs = LogScale::from_rational(&(&r * &s));
                self.ax = (&self.ax - &c) / &s;
                self.ay = &r * (&c + &s * &self.ay);
                self.dx.iter_mut().for_each(|v| *v = *v * inv_s);
                self.dy.iter_mut().for_each(|v| *v = *v * rs);
            }
            Region::Fold(k) => {
                let lr = -LogScale::from_rational(&r);
                let two_ax = LogScale::from_rational(&(&self.ax * BigInt::from(2)));
                for (dx, dy) in self.dx.iter_mut().zip(self.dy.iter_mut()) {
                    let nx = two_ax * *dx + *dx * *dx + *dy;
                    *dy = lr * *dx;
                    *dx = nx;
                }
                let ax = std::mem::take(&mut self.ax);
                self.ax = &ax * &ax + &self.ay + &model.p()[k];
                self.ay = -&r * ax;
            }
        }
    }

    /// Bounding-box diagonal.
    fn ln_extent(&self) -> f64 {
        let (w, h) = (spread(&self.dx), spread(&self.dy));
        (w * w + h * h).powf(0.5).ln
    }
}

/// Image of the sampled box `B_j` under `F^{c_{j+1}} ∘ F^{□_j}`, read in the chart of block `j+1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    pub j: usize,
    pub samples: usize,
    pub ok: bool,
    pub reason: Option<String>,
    /// `max(|X'|, |Y'|) / a` over the samples.
    pub worst: f64,
    /// Largest deviation from the closed form of `F_j`.
    pub closed_form_error: f64,
}

fn inclusion(chain: &Chain, scales: &[Scales], j: usize, cfg: &RenormConfig) -> Result<Inclusion> {
    let map = renormalized_map(chain, scales, j)?;
    let chart = RescalingChart::new(chain, &scales[j - 1]);
    let next = RescalingChart::new(chain, &scales[j]);
    let points = grid_points(cfg.grid, cfg.box_half);
    let mut cloud = Cloud::from_chart(&chart, &points);
    let expected = std::iter::once(Region::Fold(chain.fold(j))).chain(chain.word(j + 1).iter().map(|&a| Region::Letter(a)));
    let fail = |reason: String| Inclusion { j, samples: points.len(), ok: false, reason: Some(reason), worst: f64::INFINITY, closed_form_error: f64::NAN };
    for (step, want) in expected.enumerate() {
        match cloud.region(&chain.model) {
            Some(got) if got == want => cloud.apply(got, &chain.model),
            got => return Ok(fail(format!("step {step}: samples in {got:?}, expected {want:?}"))),
        }
    }
    let h_next = chain.h(j + 1);
    let (bx, by) = (LogScale::from_rational(&cloud.ax), LogScale::from_rational(&(&cloud.ay - &h_next)));
    let mut worst = 0.0f64;
    let mut err = 0.0f64;
    for (k, &(x, y)) in points.iter().enumerate() {
        let (u, v) = next.coords(bx + cloud.dx[k], by + cloud.dy[k]);
        worst = worst.max(u.abs().max(v.abs()) / cfg.box_half);
        let cf = map.eval(x, y);
        err = err.max((u - cf[0]).abs().max((v - cf[1]).abs()));
    }
    let ok = worst <= 1.0 - cfg.margin;
    let reason = (!ok).then(|| format!("image reaches {worst:.4} of the box, above {:.2}", 1.0 - cfg.margin));
    Ok(Inclusion { j, samples: points.len(), ok, reason, worst, closed_form_error: err })
}

/// Verdicts for block `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub scales: Scales,
    /// (i): truncation tail over `|ln γ̆_j|`.
    pub ratio_i: f64,
    /// (ii): `ln(|e_j| / γ̆_j²)`, `−∞` at an exact tangency.
    pub ln_ratio_ii: f64,
    /// (iii): `ln |Y^{c_j}| = ln 2σ_j`.
    pub ln_width: f64,
    /// (iii): `ln(h̄_j / γ̆_j²)` with `h̄_j = 2τ_j`.
    pub ln_ratio_iii: f64,
    pub conditions: [bool; 3],
    /// `|2 ln γ_j − ln σ_{j+1} − ln γ_{j+1}| / |2 ln γ_j|`.
    pub gamma_identity_error: Option<f64>,
    /// `γ̆_j ≤ 2δ_j³`.
    pub upper_ok: bool,
    /// `γ̆_j ≥ 2δ_j^{3(1+ε+2ε²)}`.
    pub lower_ok: bool,
    pub map: Option<RenormalizedMap>,
    pub limit_distance: Option<f64>,
    pub round_trip_error: f64,
    pub inclusion: Option<Inclusion>,
}

impl BlockReport {
    /// Names of the failing items.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (ok, name) in self.conditions.iter().zip(["(i)", "(ii)", "(iii)"]) {
            if !ok {
                out.push(name);
            }
        }
        if self.inclusion.as_ref().is_some_and(|i| !i.ok) {
            out.push("inclusion");
        }
        out
    }

    pub fn pass(&self) -> bool {
        self.failures().is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub config: RenormConfig,
    pub blocks: Vec<BlockReport>,
    /// Smallest `J` such that every block from `J` on passes.
    pub start: Option<usize>,
    /// Limit distances do not grow by more than 10% from `J` on.
    pub limit_monotone: bool,
}

impl ChainReport {
    /// Failing items of the blocks before `J`.
    pub fn blocking(&self) -> Vec<(usize, Vec<&'static str>)> {
        self.blocks.iter().filter(|b| !b.pass()).map(|b| (b.scales.j, b.failures())).collect()
    }

    pub fn sandwich_upper_ok(&self) -> bool {
        self.blocks.iter().all(|b| b.upper_ok)
    }

    pub fn sandwich_lower_ok(&self) -> bool {
        self.blocks.iter().all(|b| b.lower_ok)
    }
}

/// Runs the block conditions, the sampled inclusions and the scale identities on a chain.
pub fn verify_chain(chain: &Chain, cfg: &RenormConfig) -> Result<ChainReport> {
    let scales = rescaling_factors(chain, cfg.horizon);
    let ln_t = cfg.threshold.ln();
    let k = chain.sched.sandwich_exponent();
    let grid = grid_points(cfg.grid, cfg.box_half);
    let mut blocks = Vec::with_capacity(scales.len());
    for sc in &scales {
        let j = sc.j;
        let ln_gb2 = 2.0 * sc.ln_gamma_breve;
        let ratio_i = sc.ln_tail / sc.ln_gamma_breve.abs();
        let ln_ratio_ii = if j < chain.len() {
            let e = chain.offset(j)?;
            if e.is_zero() {
                f64::NEG_INFINITY
            } else {
                LogScale::from_rational(&e).ln - ln_gb2
            }
        } else {
            f64::NEG_INFINITY
        };
        let ln_width = std::f64::consts::LN_2 + sc.ln_sigma;
        let ln_ratio_iii = std::f64::consts::LN_2 + sc.ln_tau - ln_gb2;
        let conditions = [
            sc.ln_gamma.is_finite() && ratio_i <= cfg.threshold,
            ln_ratio_ii <= ln_t,
            ln_width <= ln_t && ln_ratio_iii <= ln_t,
        ];
        let ln_d = chain.sched.ln_delta(j);
        let upper_ok = sc.ln_gamma_breve <= std::f64::consts::LN_2 + 3.0 * ln_d;
        let lower_ok = sc.ln_gamma_breve >= std::f64::consts::LN_2 + 3.0 * k * ln_d;
        let (map, gamma_identity_error, inclusion) = if j < scales.len() {
            let next = &scales[j];
            let err = (2.0 * sc.ln_gamma - next.ln_sigma - next.ln_gamma).abs() / (2.0 * sc.ln_gamma).abs();
            (Some(renormalized_map(chain, &scales, j)?), Some(err), Some(inclusion(chain, &scales, j, cfg)?))
        } else {
            (None, None, None)
        };
        blocks.push(BlockReport {
            scales: *sc,
            ratio_i,
            ln_ratio_ii,
            ln_width,
            ln_ratio_iii,
            conditions,
            gamma_identity_error,
            upper_ok,
            lower_ok,
            limit_distance: map.map(|m| m.limit_distance(cfg.box_half)),
            map,
            round_trip_error: RescalingChart::new(chain, sc).round_trip_error(&grid),
            inclusion,
        });
    }
    let start = (1..=blocks.len()).find(|&j| blocks[j - 1..].iter().all(BlockReport::pass));
    let limit_monotone = match start {
        Some(j) => {
            let d: Vec<f64> = blocks[j - 1..].iter().filter_map(|b| b.limit_distance).collect();
            d.windows(2).all(|w| w[1] <= 1.1 * w[0])
        }
        None => false,
    };
    Ok(ChainReport { config: cfg.clone(), blocks, start, limit_monotone })
}

/// Chain at a dissipation too weak for renormalization, with its report.
pub fn negative_control(n: usize, delta: &str, margin: f64, delta0: f64, steps: usize, tol: f64, cfg: &RenormConfig) -> Result<ChainReport> {
    let params = ModelParams::new(n, parse_rational(delta)?)?.with_margin(margin);
    let system = build_model(params.clone())?;
    let sched = ScheduleParams::new(delta0)?;
    let run = run_selection(&system, None, &sched, steps, tol, false)?;
    if run.state.words.is_empty() {
        return Err(Error::Selection(format!("no chain: {}", run.stop_reason.unwrap_or_default())));
    }
    verify_chain(&Chain::from_run(&params, &sched, &run)?, cfg)
}

/// Forward orbit of the sampled box `B_J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WanderingReport {
    pub start: usize,
    pub blocks: usize,
    pub expected: Vec<Region>,
    pub observed: Vec<Region>,
    pub itinerary_ok: bool,
    pub stop: Option<String>,
    /// `ln diam B_J`.
    pub ln_diam_box: f64,
    /// `ln diam` of the cloud after each completed block.
    pub ln_diams: Vec<f64>,
    /// Cloud diameter after the first block over `diam B_J`.
    pub first_block_ratio: f64,
    pub decaying: bool,
    /// Chain index of the box holding the cloud at each fold visit, and the fold.
    pub fold_visits: Vec<(usize, usize)>,
    pub no_revisit: bool,
}

/// Chain index `j` whose box `B_j` holds the cloud, if any.
fn locate(chain: &Chain, scales: &[Scales], cloud: &Cloud, a: f64) -> Option<usize> {
    scales.iter().map(|s| s.j).find(|&j| {
        let chart = RescalingChart::new(chain, &scales[j - 1]);
        let bx = LogScale::from_rational(&cloud.ax);
        let by = LogScale::from_rational(&(&cloud.ay - &chart.anchor.1));
        cloud.dx.iter().zip(&cloud.dy).all(|(&dx, &dy)| {
            let (u, v) = chart.coords(bx + dx, by + dy);
            u.abs() <= a * (1.0 + 1e-9) && v.abs() <= a * (1.0 + 1e-9)
        })
    })
}

/// Iterates the `grid²` cloud of `B_J` through `blocks` blocks, choosing each map by the region it sits in.
pub fn wandering_cloud(chain: &Chain, start: usize, blocks: usize, cfg: &RenormConfig) -> Result<WanderingReport> {
    if start == 0 || start + blocks > chain.len() {
        return Err(Error::Precondition(format!("blocks {start}..{} exceed a chain of length {}", start + blocks, chain.len())));
    }
    let scales = rescaling_factors(chain, cfg.horizon);
    let chart = RescalingChart::new(chain, &scales[start - 1]);
    let ln_diam_box = chart.ln_diameter(cfg.box_half);
    let mut cloud = Cloud::from_chart(&chart, &grid_points(cfg.grid, cfg.box_half));
    let mut expected = Vec::new();
    let mut block_ends = Vec::new();
    for j in start..start + blocks {
        expected.push(Region::Fold(chain.fold(j)));
        expected.extend(chain.word(j + 1).iter().map(|&a| Region::Letter(a)));
        block_ends.push(expected.len());
    }
    let mut observed = Vec::with_capacity(expected.len());
    let mut ln_diams = Vec::new();
    let mut fold_visits = Vec::new();
    let mut stop = None;
    for t in 0..expected.len() {
        let Some(region) = cloud.region(&chain.model) else {
            stop = Some(format!("the cloud leaves every region at step {t}"));
            break;
        };
        if let Region::Fold(k) = region {
            match locate(chain, &scales, &cloud, cfg.box_half) {
                Some(j) => fold_visits.push((j, k)),
                None => {
                    stop = Some(format!("fold visit at step {t} lies in no chain box"));
                    break;
                }
            }
        }
        observed.push(region);
        cloud.apply(region, &chain.model);
        if block_ends.contains(&(t + 1)) {
            ln_diams.push(cloud.ln_extent());
        }
    }
    let itinerary_ok = stop.is_none() && observed == expected;
    let first_block_ratio = ln_diams.first().map_or(f64::INFINITY, |d| (d - ln_diam_box).exp());
    let decaying = ln_diams.len() == blocks && ln_diams.windows(2).all(|w| w[1] < w[0]);
    let mut seen = std::collections::HashSet::new();
    let no_revisit = fold_visits.iter().all(|v| seen.insert(*v));
    Ok(WanderingReport { start, blocks, expected, observed, itinerary_ok, stop, ln_diam_box, ln_diams, first_block_ratio, decaying, fold_visits, no_revisit })
}

/// `sup_{|X|,|Y| ≤ a} (X² + |Y|/2)`, the reach of the quadratic limit on the box.
pub fn limit_reach(a: f64) -> f64 {
    a * a + 0.5 * a
}
