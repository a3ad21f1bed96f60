//! The explicit affine-horseshoe model with quadratic folds, its Cantor sets,
//! the dissipation diagnostic and the degree-6 Hénon family.

pub mod cantor;
pub mod exact;
pub mod henon;

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hyperbolic::{implicit_from_map, BoxRegion, ImplicitRep, PlaneMap, RepSource};
use crate::numeric::{rational_to_f64, sqrt_rational, LogScale, Real};
use crate::symbolic::{ArrowKind, OneSidedSequence, TransitionGraph};

pub use cantor::{cantor_approx, gap_check, CantorApprox, CantorSide, GapVerdict};
pub use exact::ExactModel;
pub use henon::{henon_iterate, HenonParams, HenonOrbit};

/// Largest denominator accepted for the rational square root of δ.
pub const SQRT_MAX_DEN: u64 = 100_000_000;

/// Solver tolerance used for the generator representations.
pub const REP_TOL: f64 = 1e-14;

/// Parameters of the model: arrow count, δ and the fold offsets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub n: usize,
    /// δ as requested by the caller.
    #[serde(serialize_with = "ser_rational")]
    pub requested_delta: BigRational,
    /// Rational `r ≈ √δ` used by every map.
    #[serde(serialize_with = "ser_rational")]
    pub sqrt_delta: BigRational,
    /// Effective δ = r², exact.
    #[serde(serialize_with = "ser_rational")]
    pub delta: BigRational,
    pub sqrt_exact: bool,
    pub sqrt_rel_error: f64,
    /// Fold offsets `p_1..p_{N-1}`.
    #[serde(serialize_with = "ser_rational_vec")]
    pub p: Vec<BigRational>,
    /// Override for the boundary distance defining the admissible offsets (default δ^{1/3}).
    pub margin: Option<f64>,
}

fn ser_rational<S: serde::Serializer>(q: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&q.to_string())
}

fn ser_rational_vec<S: serde::Serializer>(v: &[BigRational], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|q| q.to_string()))
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl ModelParams {
    /// Offsets default to the midpoints of the target intervals.
    pub fn new(n: usize, delta: BigRational) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Construction(format!("N must be even and at least 2, got {n}")));
        }
        if !delta.is_positive() || delta >= BigRational::one() {
            return Err(Error::Construction(format!("δ must lie in (0, 1), got {delta}")));
        }
        let sq = sqrt_rational(&delta, SQRT_MAX_DEN)?;
        let r = sq.value.clone();
        let eff = &r * &r;
        let mut out = ModelParams {
            n,
            requested_delta: delta,
            sqrt_delta: r,
            delta: eff,
            sqrt_exact: sq.exact,
            sqrt_rel_error: sq.rel_error,
            p: Vec::new(),
            margin: None,
        };
        out.p = (1..n).map(|j| out.mid(j + 1)).collect();
        Ok(out)
    }

    pub fn with_p(mut self, p: Vec<BigRational>) -> Result<Self> {
        if p.len() != self.n - 1 {
            return Err(Error::Construction(format!("expected {} fold offsets, got {}", self.n - 1, p.len())));
        }
        self.p = p;
        Ok(self)
    }

    pub fn with_p_f64(self, p: &[f64]) -> Result<Self> {
        let v = p
            .iter()
            .map(|&x| BigRational::from_float(x).ok_or_else(|| Error::Construction(format!("non-finite offset {x}"))))
            .collect::<Result<Vec<_>>>()?;
        self.with_p(v)
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = Some(margin);
        self
    }

    /// `s = 1/N − δ²`, the common contraction of the `C_j`.
    pub fn s(&self) -> BigRational {
        rat(1, self.n as i64) - &self.delta * &self.delta
    }

    pub fn r(&self) -> BigRational {
        self.sqrt_delta.clone()
    }

    /// Midpoint `(2j−1)/N − 1` of `I_j`, `j` 1-based.
    pub fn mid(&self, j: usize) -> BigRational {
        rat(2 * j as i64 - 1 - self.n as i64, self.n as i64)
    }

    /// `I_j = [2(j−1)/N − 1 + δ², 2j/N − 1 − δ²]`.
    pub fn interval(&self, j: usize) -> (BigRational, BigRational) {
        let m = self.mid(j);
        let s = self.s();
        (&m - &s, m + s)
    }

    /// Half-width `δ²/4` of the fold box's horizontal side.
    pub fn fold_half_width(&self) -> BigRational {
        &self.delta * &self.delta / BigInt::from(4)
    }

    pub fn s_f64(&self) -> f64 {
        rational_to_f64(&self.s())
    }

    pub fn r_f64(&self) -> f64 {
        rational_to_f64(&self.sqrt_delta)
    }

    pub fn delta_f64(&self) -> f64 {
        rational_to_f64(&self.delta)
    }

    pub fn mid_f64(&self, j: usize) -> f64 {
        (2 * j) as f64 / self.n as f64 - 1.0 - 1.0 / self.n as f64
    }

    pub fn p_f64(&self) -> Vec<f64> {
        self.p.iter().map(rational_to_f64).collect()
    }

    /// Distance from the boundary of `I_{j+1}` required of `p_j`.
    pub fn margin_value(&self) -> f64 {
        self.margin.unwrap_or_else(|| self.delta_f64().cbrt())
    }

    /// Admissible interval for `p_j` (1-based fold index), as floats.
    pub fn offset_range(&self, j: usize) -> (f64, f64) {
        let (lo, hi) = self.interval(j + 1);
        let m = self.margin_value();
        (rational_to_f64(&lo) + m, rational_to_f64(&hi) - m)
    }

    /// Whether `p` lies in the admissible offset set.
    pub fn admissible(&self, p: &[BigRational]) -> bool {
        p.len() == self.n - 1
            && p.iter().enumerate().all(|(k, pj)| {
                let (lo, hi) = self.interval(k + 2);
                let m = self.margin_value();
                let d = rational_to_f64(&(pj - &lo)).min(rational_to_f64(&(&hi - pj)));
                d >= m
            })
    }

    /// `ln s`, `ln r` and `ln(rs)`.
    pub fn log_rates(&self) -> (f64, f64, f64) {
        let ls = crate::numeric::rational_ln_abs(&self.s());
        let lr = crate::numeric::rational_ln_abs(&self.sqrt_delta);
        (ls, lr, ls + lr)
    }
}

/// A generator arrow: its map, its box and its implicit representation.
#[derive(Clone, Debug)]
pub struct Generator {
    pub map: PlaneMap,
    pub region: BoxRegion,
    pub rep: ImplicitRep,
}

/// A fold arrow from `a_j` to `a_{j+1}`.
#[derive(Clone, Debug)]
pub struct Fold {
    pub map: PlaneMap,
    /// Generator arrow feeding the fold.
    pub source: usize,
    /// Generator arrow receiving the fold image.
    pub target: usize,
    /// Half-width of the horizontal side `I^□`.
    pub x_half: f64,
    /// Vertical side `J^□`.
    pub y_range: (f64, f64),
    pub offset: f64,
}

impl Fold {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.x_half && self.y_range.0 <= y && y <= self.y_range.1
    }
}

pub type Projection = Arc<dyn Fn(f64, f64, usize) -> f64 + Send + Sync>;

/// A system of hyperbolic and folding arrows with its adapted projection.
#[derive(Clone)]
pub struct SystemAC {
    params: ModelParams,
    graph: TransitionGraph,
    generators: Vec<Generator>,
    folds: Vec<Fold>,
    cubic: f64,
    projection: Projection,
}

impl std::fmt::Debug for SystemAC {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemAC").field("n", &self.params.n).field("cubic", &self.cubic).finish()
    }
}

fn check_inclusions(params: &ModelParams) -> Result<()> {
    let n = params.n;
    let s = params.s();
    if !s.is_positive() {
        return Err(Error::Construction("δ² ≥ 1/N: the intervals I_j are empty".into()));
    }
    let m = params.margin_value();
    if m >= rational_to_f64(&s) {
        return Err(Error::Construction(format!(
            "admissible offset set is empty: boundary distance {m:.4e} is not below the half-length {:.4e} of I_j",
            rational_to_f64(&s)
        )));
    }
    if !params.admissible(&params.p) {
        return Err(Error::Construction(format!("offsets {:?} are not at distance {m:.4e} from the interval ends", params.p_f64())));
    }
    let hw = params.fold_half_width();
    for j in 1..=n {
        let (lo, hi) = params.interval(j);
        if lo <= hw && -&hw <= hi {
            return Err(Error::Construction(format!("fold box I^□ meets I_{j}")));
        }
    }
    let r = params.r();
    for j in 1..n {
        let (lo, hi) = params.interval(j);
        let (tlo, thi) = params.interval(j + 1);
        let pj = &params.p[j - 1];
        let img_lo = pj + &r * &lo;
        let img_hi = pj + &r * &hi + &hw * &hw;
        if img_lo < tlo || img_hi > thi {
            return Err(Error::Construction(format!("fold image F^f{j}(Y^f{j}) is not inside Y^a{}", j + 1)));
        }
    }
    // fold images sit at heights |y| ≤ r·δ²/4, inside the central gap of the generator images
    let fold_h = &r * &hw;
    for j in 1..=n {
        let (lo, hi) = params.interval(j);
        if &r * &lo <= fold_h && -&fold_h <= &r * &hi {
            return Err(Error::Construction(format!("fold images meet the image of a{j}")));
        }
    }
    Ok(())
}

fn generator(params: &ModelParams, j: usize, cubic: f64) -> Generator {
    let s = params.s_f64();
    let r = params.r_f64();
    let c = params.mid_f64(j);
    let name = format!("a{j}");
    let (map, region) = if cubic == 0.0 {
        let map = PlaneMap::new(
            name,
            Arc::new(move |x, y| [(x - c) / s, r * (c + s * y)]),
            Arc::new(move |_, _| [[1.0 / s, 0.0], [0.0, r * s]]),
        );
        (map, BoxRegion::vertical_strip(c - s, c + s))
    } else {
        let map = PlaneMap::new(
            name,
            Arc::new(move |x, y| [(x - c) / s + cubic * y * y * y, r * (c + s * y)]),
            Arc::new(move |_, y| [[1.0 / s, 3.0 * cubic * y * y], [0.0, r * s]]),
        );
        let region = BoxRegion::new(
            Arc::new(move |y| c + s * (-1.0 - cubic * y * y * y)),
            Arc::new(move |y| c + s * (1.0 - cubic * y * y * y)),
            3.0 * cubic.abs() * s,
        );
        (map, region)
    };
    let rep = implicit_from_map(map.clone(), region.clone(), REP_TOL);
    Generator { map, region, rep }
}

fn fold(params: &ModelParams, j: usize, p: f64) -> Fold {
    let r = params.r_f64();
    let x_half = rational_to_f64(&params.fold_half_width());
    let (lo, hi) = params.interval(j);
    let rb = params.r();
    let y_range = (rational_to_f64(&(&rb * lo)), rational_to_f64(&(&rb * hi)));
    let map = PlaneMap::new(
        format!("f{j}"),
        Arc::new(move |x, y| [x * x + y + p, -r * x]),
        Arc::new(move |x, _| [[2.0 * x, 1.0], [-r, 0.0]]),
    );
    Fold { map, source: j - 1, target: j, x_half, y_range, offset: p }
}

/// Builds the model system; every disjointness and inclusion fact is checked exactly.
pub fn build_model(params: ModelParams) -> Result<SystemAC> {
    build_model_cubic(params, 0.0)
}

/// Model whose generators carry the perturbation `x ↦ C_j⁻¹(x) + c·y³`.
pub fn build_model_cubic(params: ModelParams, cubic: f64) -> Result<SystemAC> {
    check_inclusions(&params)?;
    let n = params.n;
    let graph = TransitionGraph::single_vertex(n, n - 1);
    let generators = (1..=n).map(|j| generator(&params, j, cubic)).collect();
    let pf = params.p_f64();
    let folds = (1..n).map(|j| fold(&params, j, pf[j - 1])).collect();
    Ok(SystemAC { params, graph, generators, folds, cubic, projection: Arc::new(|x, _, _| x) })
}

impl SystemAC {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn cubic(&self) -> f64 {
        self.cubic
    }

    pub fn generator(&self, arrow: usize) -> &Generator {
        &self.generators[arrow]
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// Fold `k` (0-based, label `f{k+1}`).
    pub fn fold(&self, k: usize) -> &Fold {
        &self.folds[k]
    }

    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    /// Arrow index of fold `k` in the graph.
    pub fn fold_arrow(&self, k: usize) -> usize {
        self.params.n + k
    }

    /// Fold entered after a word ending with `letter`, if any.
    pub fn fold_after(&self, letter: usize) -> Option<usize> {
        (letter + 1 < self.params.n).then_some(letter)
    }

    pub fn p(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.offset).collect()
    }

    /// Adapted projection `π^v(x, y)`.
    pub fn project(&self, x: f64, y: f64, vertex: usize) -> f64 {
        (self.projection)(x, y, vertex)
    }

    /// Same system with new fold offsets.
    pub fn with_p(&self, p: &[f64]) -> Result<SystemAC> {
        let params = self.params.clone().with_p_f64(p)?;
        build_model_cubic(params, self.cubic)
    }

    /// Same system with fold offsets replaced without re-checking admissibility.
    pub fn with_p_unchecked(&self, p: &[f64]) -> SystemAC {
        let mut out = self.clone();
        out.params.p = p.iter().map(|&v| BigRational::from_f64_exact(v)).collect();
        for (k, f) in out.folds.iter_mut().enumerate() {
            *f = fold(&self.params, k + 1, p[k]);
        }
        out
    }
}

impl RepSource for SystemAC {
    fn graph(&self) -> &TransitionGraph {
        &self.graph
    }

    fn letter_rep(&self, arrow: usize) -> Result<ImplicitRep> {
        if self.graph.kind(arrow) != ArrowKind::Hyperbolic {
            return Err(Error::Kind(format!("`{}` is a fold arrow", self.graph.label(arrow))));
        }
        Ok(self.generators[arrow].rep.clone())
    }
}

/// `max_a ‖DF^a‖·|det DF^a|^ε` in log-space; below 1 means moderately dissipative.
pub fn dissipation_margin(params: &ModelParams, eps: f64) -> f64 {
    let (ls, lr, _) = params.log_rates();
    (-ls + eps * lr).exp()
}

/// δ at which the dissipation margin equals 1 for an `N`-arrow model.
pub fn dissipation_threshold(n: usize, eps: f64) -> f64 {
    let mut ln_delta = -(2.0 / eps) * (n as f64).ln();
    for _ in 0..50 {
        let d = ln_delta.exp();
        let s = 1.0 / n as f64 - d * d;
        ln_delta = (2.0 / eps) * s.ln();
    }
    ln_delta.exp()
}

/// Tangency offset `y^u − x^s + p_j` for the model (fold `j` 1-based).
pub fn model_v(u_tail: &OneSidedSequence, s_head: &OneSidedSequence, j: usize, params: &ModelParams) -> Result<BigRational> {
    let exact = ExactModel::new(params);
    if u_tail.letter(0) + 1 != j {
        return Err(Error::Membership(format!("unstable sequence must end with a{j}")));
    }
    if j == 0 || j >= params.n {
        return Err(Error::Membership(format!("no fold with index {j}")));
    }
    Ok(exact.y_unstable(u_tail) - exact.x_stable(s_head) + &params.p[j - 1])
}

/// Log-width `ln s` of a single letter.
pub fn letter_width(params: &ModelParams) -> LogScale {
    LogScale::from_ln(params.log_rates().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::{check_hyperbolic, extremal_widths, word_rep, ConeParams};
    use crate::numeric::parse_rational;
    use crate::symbolic::Side;

    fn params(delta: &str) -> ModelParams {
        ModelParams::new(6, parse_rational(delta).unwrap()).unwrap()
    }

    #[test]
    fn six_arrows_five_folds() {
        let sys = build_model(params("1/10000")).unwrap();
        assert_eq!(sys.generators().len(), 6);
        assert_eq!(sys.folds().len(), 5);
        assert_eq!(sys.graph().vertices().len(), 1);
        assert!(sys.graph().is_transitive());
    }

    #[test]
    fn generators_are_hyperbolic_with_constant_det() {
        for d in ["1/10000", "1/1000000", "1/100000000"] {
            let sys = build_model(params(d)).unwrap();
            let r = sys.params().r_f64();
            for g in sys.generators() {
                assert!(check_hyperbolic(&g.map, &g.region, &ConeParams::default(), 9).pass());
                for (x, y) in [(0.1, 0.3), (-0.7, 0.9)] {
                    let j = g.map.jacobian(x, y);
                    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                    assert!((det - r).abs() <= 1e-14 * r);
                }
            }
        }
    }

    #[test]
    fn generator_images_are_disjoint() {
        let sys = build_model(params("1/10000")).unwrap();
        let r = sys.params().r_f64();
        let mut spans: Vec<(f64, f64)> = sys
            .generators()
            .iter()
            .map(|g| {
                let a = g.map.eval((g.region.phi_minus)(-1.0), -1.0)[1];
                let b = g.map.eval((g.region.phi_plus)(1.0), 1.0)[1];
                (a.min(b), a.max(b))
            })
            .collect();
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in spans.windows(2) {
            assert!(w[0].1 < w[1].0);
        }
        assert!(spans[0].0 >= -r && spans[5].1 <= r);
    }

    #[test]
    fn fold_fails_cones_at_critical_line() {
        let sys = build_model(params("1/10000")).unwrap();
        let f = sys.fold(0);
        let region = BoxRegion::vertical_strip(-f.x_half, f.x_half);
        let rep = check_hyperbolic(&f.map, &region, &ConeParams::default(), 5);
        assert!(!rep.expansion.pass);
    }

    #[test]
    fn fold_image_of_horizontal_is_parabola() {
        // x² must stay above f64 resolution next to y + p
        let sys = build_model(params("1/100").with_margin(0.05)).unwrap();
        let f = sys.fold(2);
        let y = 0.5 * (f.y_range.0 + f.y_range.1);
        let xs: Vec<f64> = (0..41).map(|k| -f.x_half + 2.0 * f.x_half * k as f64 / 40.0).collect();
        let pts: Vec<[f64; 2]> = xs.iter().map(|&x| f.map.eval(x, y)).collect();
        // the first coordinate is minimal exactly once, at the vertical tangency
        let imin = (0..pts.len()).min_by(|&a, &b| pts[a][0].partial_cmp(&pts[b][0]).unwrap()).unwrap();
        assert_eq!(imin, 20);
        // each vertical line meets the parabola at most twice
        let level = pts[imin][0] + 0.5 * (pts[0][0] - pts[imin][0]);
        let crossings = pts.windows(2).filter(|w| (w[0][0] - level).signum() != (w[1][0] - level).signum()).count();
        assert_eq!(crossings, 2);
    }

    #[test]
    fn large_delta_is_rejected() {
        let err = build_model(params("1/100")).unwrap_err();
        assert!(err.to_string().contains("empty"));
        assert!(build_model(params("1/100").with_margin(0.05)).is_ok());
    }

    #[test]
    fn dissipation_examples() {
        let m20 = dissipation_margin(&params("1e-20"), 0.1);
        assert!((m20 - 0.6).abs() < 1e-9);
        let m8 = dissipation_margin(&params("1e-8"), 0.1);
        assert!((m8 - 6.0 * 10f64.powf(-0.4)).abs() < 1e-6 && m8 > 1.0);
        let t = dissipation_threshold(6, 0.1);
        assert!((t.ln() - (-20.0 * 6f64.ln())).abs() < 1e-6);
        let p = ModelParams::new(6, BigRational::from_float(t).unwrap()).unwrap();
        assert!((dissipation_margin(&p, 0.1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn model_word_widths_are_products() {
        let sys = build_model(params("1/10000")).unwrap();
        let s = sys.params().s_f64();
        let rs = s * sys.params().r_f64();
        let w = sys.graph().word(&["a1", "a3", "a6", "a2", "a2"]).unwrap();
        let rep = word_rep(&w, &sys, 1e-14).unwrap();
        let wd = extremal_widths(&rep, 5).unwrap();
        assert!((wd.w_min.ln - 5.0 * s.ln()).abs() < 1e-12);
        assert!((wd.w_max.ln - 5.0 * s.ln()).abs() < 1e-12);
        assert!((wd.h_max.ln - 5.0 * rs.ln()).abs() < 1e-12);
    }

    #[test]
    fn model_v_is_affine_in_its_slot() {
        let pr = params("1/10000");
        let g = TransitionGraph::single_vertex(6, 5);
        let u = OneSidedSequence::constant(Side::Left, 1, &g).unwrap();
        let s = OneSidedSequence::new(Side::Right, vec![2, 0], vec![4], &g).unwrap();
        let v0 = model_v(&u, &s, 2, &pr).unwrap();
        let mut p = pr.p.clone();
        p[1] += rat(1, 1000);
        let v1 = model_v(&u, &s, 2, &pr.clone().with_p(p.clone()).unwrap()).unwrap();
        assert_eq!(v1 - &v0, rat(1, 1000));
        p[1] -= rat(1, 1000);
        p[3] += rat(1, 1000);
        let v2 = model_v(&u, &s, 2, &pr.clone().with_p(p).unwrap()).unwrap();
        assert_eq!(v2, v0);
        assert!(model_v(&u, &s, 3, &pr).is_err());
    }
}
