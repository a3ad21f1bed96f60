//! Critical tangency points, the offsets `a^c`, `b^c`, the tangency functions `𝒱`
//! and the five-dimensional map `Ψ` with its Newton solver.

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolic::{invariant_manifold, word_rep, RepSource};
use crate::model::{ExactModel, SystemAC, REP_TOL};
use crate::numeric::{gauss_solve, Real};
use crate::symbolic::{OneSidedSequence, Word};

/// Subintervals used to bracket the critical point on `I^□`.
pub const BRACKETS: usize = 64;

/// Critical tangency of `F^□(H^c)` with the projection fibers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangencyData {
    pub zeta: [f64; 2],
    /// `π∘F^□(ζ)`.
    pub a: f64,
    /// Second derivative of `x ↦ π∘F^□(x, h_c(x))` at `ζ`.
    pub curvature: f64,
    /// `|Δ̆'(ζ_x)|` at the returned point.
    pub residual: f64,
    pub word: Vec<usize>,
    /// Arrow index of the fold.
    pub fold: usize,
}

/// Tangency offset `𝒱^{c,c'} = a^c − b^{c'}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VRecord {
    pub value: f64,
    pub a: f64,
    pub b: f64,
    pub word: Vec<usize>,
    pub next: Vec<usize>,
    pub p: Vec<f64>,
}

fn fold_index(c: &Word, system: &SystemAC) -> Result<usize> {
    let last = c.last().ok_or_else(|| Error::Membership("empty word feeds no fold".into()))?;
    system
        .fold_after(last)
        .ok_or_else(|| Error::Membership(format!("words ending with {} feed no fold", system.graph().label(last))))
}

/// Gradient of the projection at the target of fold `k`.
fn projection_gradient(system: &SystemAC, x: f64, y: f64, vertex: usize) -> [f64; 2] {
    let h = 1e-6 * (1.0 + x.abs().max(y.abs()));
    let px = (system.project(x + h, y, vertex) - system.project(x - h, y, vertex)) / (2.0 * h);
    let py = (system.project(x, y + h, vertex) - system.project(x, y - h, vertex)) / (2.0 * h);
    [px, py]
}

/// Locates the unique critical point of `x ↦ π∘F^□(x, h_c(x))` on `I^□`.
pub fn critical_tangency(c: &Word, system: &SystemAC, tol: f64) -> Result<TangencyData> {
    let k = fold_index(c, system)?;
    let fold = system.fold(k);
    let rep = word_rep(c, system, REP_TOL)?;
    let target = fold.target;
    // derivative of the offset function, and the point it is evaluated at
    let deriv = |x: f64| -> Result<(f64, [f64; 2])> {
        let jet = rep.eval(x, 0.0)?;
        let z = [x, jet.y];
        let img = fold.map.eval(z[0], z[1]);
        let df = fold.map.jacobian(z[0], z[1]);
        let g = projection_gradient(system, img[0], img[1], target);
        let tx = df[0][0] + df[0][1] * jet.y_x;
        let ty = df[1][0] + df[1][1] * jet.y_x;
        Ok((g[0] * tx + g[1] * ty, z))
    };
    let half = fold.x_half;
    let xs: Vec<f64> = (0..=BRACKETS).map(|i| -half + 2.0 * half * i as f64 / BRACKETS as f64).collect();
    let ds = xs.iter().map(|&x| deriv(x).map(|d| d.0)).collect::<Result<Vec<_>>>()?;
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    for i in 0..=BRACKETS {
        if ds[i] == 0.0 {
            brackets.push((xs[i], xs[i]));
        } else if i < BRACKETS && ds[i] * ds[i + 1] < 0.0 {
            brackets.push((xs[i], xs[i + 1]));
        }
    }
    let (mut lo, mut hi) = match brackets.len() {
        0 => return Err(Error::NoTangency(format!("derivative keeps its sign on I^□ for {:?}", c.letters()))),
        1 => brackets[0],
        n => return Err(Error::Ambiguous { count: n }),
    };
    let mut x = 0.5 * (lo + hi);
    let fd = |x: f64, d: &dyn Fn(f64) -> Result<(f64, [f64; 2])>| -> Result<f64> {
        let h = 1e-4 * half;
        Ok((d(x + h)?.0 - d(x - h)?.0) / (2.0 * h))
    };
    let sign_lo = deriv(lo)?.0.signum();
    for _ in 0..100 {
        let (d, _) = deriv(x)?;
        if d.abs() <= tol || hi - lo <= f64::EPSILON * half {
            break;
        }
        if d.signum() == sign_lo {
            lo = x;
        } else {
            hi = x;
        }
        let dd = fd(x, &deriv)?;
        let newton = x - d / dd;
        x = if dd != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    let (d, zeta) = deriv(x)?;
    let curvature = fd(x, &deriv)?;
    let img = fold.map.eval(zeta[0], zeta[1]);
    let a = system.project(img[0], img[1], target);
    Ok(TangencyData { zeta, a, curvature, residual: d.abs(), word: c.letters().to_vec(), fold: system.fold_arrow(k) })
}

/// `b^{c2}`: projection of the pullback of `ζ^{c2}` through the word map of `c2`.
pub fn b_value(c2: &Word, system: &SystemAC, tol: f64) -> Result<f64> {
    let t = critical_tangency(c2, system, tol)?;
    let rep = word_rep(c2, system, REP_TOL)?;
    let jet = rep.eval(t.zeta[0], 0.0)?;
    let origin = c2.first().ok_or_else(|| Error::Membership("empty word".into()))?;
    Ok(system.project(jet.x, 0.0, origin))
}

/// `b^s = x^s` for a right-infinite sequence, through a truncation of length `depth`.
pub fn b_value_seq(s: &OneSidedSequence, depth: usize, system: &SystemAC) -> Result<f64> {
    let curve = invariant_manifold(s, depth, system, REP_TOL)?;
    let x = curve.eval(0.0)?;
    Ok(system.project(x, 0.0, s.letter(0)))
}

fn check_landing(c: &Word, first: usize, system: &SystemAC) -> Result<usize> {
    let k = fold_index(c, system)?;
    if system.fold(k).target != first {
        return Err(Error::Membership(format!(
            "fold {} lands in {}, not in {}",
            system.graph().label(system.fold_arrow(k)),
            system.graph().label(system.fold(k).target),
            system.graph().label(first)
        )));
    }
    Ok(k)
}

/// `𝒱^{c,c2} = a^c − b^{c2}`.
pub fn v_value(c: &Word, c2: &Word, system: &SystemAC, tol: f64) -> Result<VRecord> {
    check_landing(c, c2.first().ok_or_else(|| Error::Membership("empty word".into()))?, system)?;
    let a = critical_tangency(c, system, tol)?.a;
    let b = b_value(c2, system, tol)?;
    Ok(VRecord { value: a - b, a, b, word: c.letters().to_vec(), next: c2.letters().to_vec(), p: system.p() })
}

/// `𝒱^{c,s}` against a right-infinite sequence.
pub fn v_value_seq(c: &Word, s: &OneSidedSequence, depth: usize, system: &SystemAC, tol: f64) -> Result<VRecord> {
    check_landing(c, s.letter(0), system)?;
    let a = critical_tangency(c, system, tol)?.a;
    let b = b_value_seq(s, depth, system)?;
    Ok(VRecord { value: a - b, a, b, word: c.letters().to_vec(), next: s.truncate(depth).letters().to_vec(), p: system.p() })
}

/// Smallest word length from which every word into fold `k` has a unique tangency.
pub fn unique_tangency_length(system: &SystemAC, k: usize, max_len: usize, tol: f64) -> Option<usize> {
    let n = system.n();
    let source = system.fold(k).source;
    'len: for len in 1..=max_len {
        let count = n.pow(len as u32 - 1);
        for code in 0..count {
            let mut letters = Vec::with_capacity(len);
            let mut c = code;
            for _ in 1..len {
                letters.push(c % n);
                c /= n;
            }
            letters.push(source);
            let w = Word::from_letters(letters, system.graph()).ok()?;
            if critical_tangency(&w, system, tol).is_err() {
                continue 'len;
            }
        }
        return Some(len);
    }
    None
}

/// CSV rows `word,fold,zeta_x,zeta_y,a,b,v`.
pub fn tangency_table_csv(system: &SystemAC, rows: &[(TangencyData, VRecord)]) -> String {
    let mut out = String::from("word,fold,zeta_x,zeta_y,a,b,v\n");
    for (t, v) in rows {
        let w = Word::from_letters(t.word.clone(), system.graph()).map(|w| system.graph().format_word(&w)).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e},{:e}\n",
            w,
            system.graph().label(t.fold),
            t.zeta[0],
            t.zeta[1],
            t.a,
            v.b,
            v.value
        ));
    }
    out
}

/// Second argument of a tangency function.
#[derive(Clone, Debug)]
pub enum Tail {
    Word(Word),
    Seq(OneSidedSequence),
}

/// A parameter-dependent evaluator of `𝒱`.
pub trait VBackend {
    type Scalar: Real;
    fn v(&self, c: &Word, tail: &Tail, p: &[Self::Scalar]) -> Result<Self::Scalar>;
    /// Number of fold offsets.
    fn dim(&self) -> usize;
}

/// Exact rational evaluation on the model.
#[derive(Clone, Debug)]
pub struct ExactBackend {
    pub model: ExactModel,
}

impl VBackend for ExactBackend {
    type Scalar = BigRational;

    fn v(&self, c: &Word, tail: &Tail, p: &[BigRational]) -> Result<BigRational> {
        let m = self.model.with_p(p.to_vec());
        match tail {
            Tail::Word(w) => m.v(c.letters(), w.letters()),
            Tail::Seq(s) => m.v_seq(c.letters(), s),
        }
    }

    fn dim(&self) -> usize {
        self.model.n() - 1
    }
}

/// Floating-point evaluation through implicit representations.
#[derive(Clone, Debug)]
pub struct FloatBackend {
    pub system: SystemAC,
    pub tol: f64,
    /// Truncation depth for sequence tails.
    pub depth: usize,
}

impl VBackend for FloatBackend {
    type Scalar = f64;

    fn v(&self, c: &Word, tail: &Tail, p: &[f64]) -> Result<f64> {
        let sys = self.system.with_p_unchecked(p);
        let rec = match tail {
            Tail::Word(w) => v_value(c, w, &sys, self.tol)?,
            Tail::Seq(s) => v_value_seq(c, s, self.depth, &sys, self.tol)?,
        };
        Ok(rec.value)
    }

    fn dim(&self) -> usize {
        self.system.n() - 1
    }
}

/// Outcome of a Ψ solve.
#[derive(Clone, Debug)]
pub struct PsiSolution<T> {
    pub p: Vec<T>,
    pub steps: usize,
    pub residual_initial: f64,
    pub residual: f64,
    /// `‖p* − p₀‖ / ‖Ψ(p₀)‖`, the measured Lipschitz constant of `Ψ⁻¹`.
    pub lipschitz: f64,
    /// Last finite-difference Jacobian (empty rows if no step was taken).
    pub jacobian: Vec<Vec<f64>>,
}

/// `Ψ(p)`: the consecutive offsets of `words` followed by the offset against `tail`.
pub fn psi<B: VBackend>(backend: &B, words: &[Word], tail: &Tail, p: &[B::Scalar]) -> Result<Vec<B::Scalar>> {
    let mut out = Vec::with_capacity(words.len());
    for i in 0..words.len() {
        let next = if i + 1 < words.len() { Tail::Word(words[i + 1].clone()) } else { tail.clone() };
        out.push(backend.v(&words[i], &next, p)?);
    }
    Ok(out)
}

fn sup_norm<T: Real>(v: &[T]) -> f64 {
    v.iter().map(|x| x.to_f64().abs()).fold(0.0, f64::max)
}

/// Damped Newton with a finite-difference Jacobian on `Ψ(p) = 0`.
pub fn psi_solve<B: VBackend>(
    backend: &B,
    words: &[Word],
    tail: &Tail,
    p0: &[B::Scalar],
    fd_step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PsiSolution<B::Scalar>> {
    let dim = backend.dim();
    if words.len() != dim || p0.len() != dim {
        return Err(Error::Precondition(format!("Ψ needs {dim} words and {dim} offsets, got {} and {}", words.len(), p0.len())));
    }
    let h = B::Scalar::from_f64_exact(fd_step);
    let mut p = p0.to_vec();
    let mut f = psi(backend, words, tail, &p)?;
    let r0 = sup_norm(&f);
    let mut r = r0;
    let mut steps = 0;
    let mut jac_f64 = vec![vec![0.0; dim]; dim];
    while r > tol {
        if steps == max_iter {
            return Err(Error::Divergence { iterations: steps, residual: r });
        }
        let mut jac = vec![vec![B::Scalar::zero(); dim]; dim];
        for k in 0..dim {
            let mut q = p.clone();
            q[k] = q[k].clone() + h.clone();
            let fk = psi(backend, words, tail, &q)?;
            for i in 0..dim {
                jac[i][k] = (fk[i].clone() - f[i].clone()) / h.clone();
            }
        }
        jac_f64 = jac.iter().map(|row| row.iter().map(|x| x.to_f64()).collect()).collect();
        if !B::Scalar::is_exact() {
            let scale = jac_f64.iter().flatten().fold(0.0f64, |m, x: &f64| m.max(x.abs()));
            if scale < 1e-12 {
                return Err(Error::Degenerate("Ψ Jacobian vanishes".into()));
            }
        }
        let delta = gauss_solve(jac, f.clone()).map_err(|_| Error::Degenerate("singular Ψ Jacobian: unfolding is degenerate".into()))?;
        let mut t = B::Scalar::one();
        let half = B::Scalar::from_ratio(1, 2);
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<B::Scalar> = p.iter().zip(&delta).map(|(a, d)| a.clone() - t.clone() * d.clone()).collect();
            let fc = psi(backend, words, tail, &cand)?;
            let rc = sup_norm(&fc);
            if rc < r || rc <= tol {
                p = cand;
                f = fc;
                r = rc;
                accepted = true;
                break;
            }
            t = t * half.clone();
        }
        steps += 1;
        if !accepted {
            return Err(Error::Divergence { iterations: steps, residual: r });
        }
    }
    let disp: Vec<B::Scalar> = p.iter().zip(p0).map(|(a, b)| a.clone() - b.clone()).collect();
    let lipschitz = if r0 > 0.0 { sup_norm(&disp) / r0 } else { 0.0 };
    Ok(PsiSolution { p, steps, residual_initial: r0, residual: r, lipschitz, jacobian: jac_f64 })
}

/// Finite-difference step for the Ψ Jacobian at natural scale `delta_i`.
pub fn fd_step(delta_i: f64) -> f64 {
    (1e-3 * delta_i).max(1e-7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, build_model_cubic, model_v, ModelParams};
    use crate::numeric::{parse_rational, rational_to_f64};
    use crate::symbolic::Side;

    fn system(delta: &str) -> SystemAC {
        build_model(ModelParams::new(6, parse_rational(delta).unwrap()).unwrap()).unwrap()
    }

    fn w(sys: &SystemAC, letters: &[usize]) -> Word {
        Word::from_letters(letters.to_vec(), sys.graph()).unwrap()
    }

    #[test]
    fn model_tangency_is_at_the_fold_vertex() {
        let sys = system("1/10000");
        let c = w(&sys, &[3, 0, 1]);
        let t = critical_tangency(&c, &sys, 1e-14).unwrap();
        assert!(t.zeta[0].abs() < 1e-15);
        assert!((t.curvature - 2.0).abs() < 1e-6);
        assert!(t.residual < 1e-14);
        let exact = ExactModel::new(sys.params());
        let a = rational_to_f64(&exact.a_value(c.letters()).unwrap());
        assert!((t.a - a).abs() < 1e-12);
        assert_eq!(t.fold, sys.fold_arrow(1));
    }

    #[test]
    fn last_letter_without_fold_is_rejected() {
        let sys = system("1/10000");
        assert!(matches!(critical_tangency(&w(&sys, &[0, 5]), &sys, 1e-14), Err(Error::Membership(_))));
    }

    #[test]
    fn b_of_single_letter() {
        let sys = system("1/10000");
        let b = b_value(&w(&sys, &[0]), &sys, 1e-14).unwrap();
        assert!((b + 5.0 / 6.0).abs() < 1e-7);
    }

    #[test]
    fn b_moves_within_twice_the_width() {
        let sys = system("1/10000");
        let s = sys.params().s_f64();
        let b1 = b_value(&w(&sys, &[2, 1]), &sys, 1e-14).unwrap();
        let b2 = b_value(&w(&sys, &[2, 1, 2, 1]), &sys, 1e-14).unwrap();
        assert!((b1 - b2).abs() <= 2.0 * s * s);
    }

    #[test]
    fn v_matches_closed_form() {
        let sys = system("1/10000");
        let exact = ExactModel::new(sys.params());
        let (u, s) = exact.tangency_pair(2, 30).unwrap();
        let c = u.truncate_in(12, sys.graph());
        let rec = v_value_seq(&c, &s, 20, &sys, 1e-14).unwrap();
        let closed = rational_to_f64(&model_v(&u, &s, 3, sys.params()).unwrap());
        assert!((rec.value - closed).abs() < 1e-9, "{} vs {}", rec.value, closed);
        assert!((rec.value - (rec.a - rec.b)).abs() == 0.0);
        assert_eq!(u.side(), Side::Left);
    }

    #[test]
    fn v_moves_one_for_one_in_its_own_slot() {
        let sys = system("1/10000");
        let c = w(&sys, &[1, 2]);
        let c2 = w(&sys, &[3, 3]);
        let v0 = v_value(&c, &c2, &sys, 1e-14).unwrap().value;
        let mut p = sys.p();
        p[2] += 1e-6;
        let v1 = v_value(&c, &c2, &sys.with_p_unchecked(&p), 1e-14).unwrap().value;
        assert!(((v1 - v0) - 1e-6).abs() < 1e-12);
        p[0] += 1e-6;
        let v2 = v_value(&c, &c2, &sys.with_p_unchecked(&p), 1e-14).unwrap().value;
        assert!((v2 - v1).abs() < 1e-15);
    }

    #[test]
    fn wrong_landing_is_rejected() {
        let sys = system("1/10000");
        assert!(v_value(&w(&sys, &[1, 2]), &w(&sys, &[1]), &sys, 1e-14).is_err());
    }

    #[test]
    fn cubic_perturbation_moves_b_continuously() {
        let p = ModelParams::new(6, parse_rational("1/10000").unwrap()).unwrap();
        let c2 = |sys: &SystemAC| w(sys, &[3, 1]);
        let b = |cub: f64| {
            let sys = build_model_cubic(p.clone(), cub).unwrap();
            b_value(&c2(&sys), &sys, 1e-14).unwrap()
        };
        let (h, c) = (1e-4, 0.02);
        let slope_fd = (b(c + h) - b(c - h)) / (2.0 * h);
        let secant = (b(c) - b(0.0)) / c;
        assert!((slope_fd - secant).abs() <= 0.05 * secant.abs().max(1e-12));
    }

    #[test]
    fn model_tangencies_are_unique_from_length_one() {
        let sys = system("1/10000");
        assert_eq!(unique_tangency_length(&sys, 0, 2, 1e-14), Some(1));
    }

    #[test]
    fn exact_psi_converges_in_one_step() {
        let sys = system("1/1000000");
        let exact = ExactModel::new(sys.params());
        // a_k a_k feeds fold k, which lands where a_{k+1} a_{k+1} starts
        let chain: Vec<Word> = (0..5).map(|k| w(&sys, &[k, k])).collect();
        let tail = Tail::Seq(OneSidedSequence::constant(Side::Right, 5, sys.graph()).unwrap());
        let backend = ExactBackend { model: exact.clone() };
        let p0 = exact.p().to_vec();
        let sol = psi_solve(&backend, &chain, &tail, &p0, 1e-7, 0.0, 5).unwrap();
        assert_eq!(sol.steps, 1);
        assert_eq!(sol.residual, 0.0);
        assert!(sol.lipschitz <= 1.0 + 1e-12);
        let sol2 = psi_solve(&backend, &chain, &tail, &sol.p, 1e-7, 0.0, 5).unwrap();
        assert_eq!(sol2.steps, 0);
    }

    #[test]
    fn float_psi_agrees_with_exact() {
        let sys = system("1/1000000");
        let exact = ExactModel::new(sys.params());
        let chain: Vec<Word> = (0..5).map(|k| w(&sys, &[k, k])).collect();
        let tail = Tail::Seq(OneSidedSequence::constant(Side::Right, 5, sys.graph()).unwrap());
        let ex = psi_solve(&ExactBackend { model: exact.clone() }, &chain, &tail, exact.p(), 1e-7, 0.0, 5).unwrap();
        let fl = FloatBackend { system: sys.clone(), tol: 1e-14, depth: 24 };
        let sol = psi_solve(&fl, &chain, &tail, &sys.p(), fd_step(1e-3), 1e-12, 10).unwrap();
        assert!(sol.steps <= 2);
        for (a, b) in sol.p.iter().zip(&ex.p) {
            assert!((a - rational_to_f64(b)).abs() < 1e-11);
        }
    }

    #[test]
    fn psi_rejects_wrong_dimension() {
        let sys = system("1/10000");
        let exact = ExactModel::new(sys.params());
        let tail = Tail::Seq(OneSidedSequence::constant(Side::Right, 5, sys.graph()).unwrap());
        let r = psi_solve(&ExactBackend { model: exact.clone() }, &[w(&sys, &[0])], &tail, exact.p(), 1e-7, 0.0, 5);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sys = system("1/10000");
        let c = w(&sys, &[0]);
        let c2 = w(&sys, &[1]);
        let t = critical_tangency(&c, &sys, 1e-14).unwrap();
        let v = v_value(&c, &c2, &sys, 1e-14).unwrap();
        let csv = tangency_table_csv(&sys, &[(t, v)]);
        assert!(csv.starts_with("word,fold,"));
        assert_eq!(csv.lines().count(), 2);
    }
}
