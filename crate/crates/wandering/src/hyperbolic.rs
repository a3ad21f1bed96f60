//! Boxes, plane maps and hyperbolic transformations stored through their
//! implicit representation `x0 = X(x1, y0)`, `y1 = Y(x1, y0)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::LogScale;
use crate::symbolic::{ArrowKind, OneSidedSequence, Side, TransitionGraph, Word};

/// Cone aperture and expansion factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub theta: f64,
    pub lambda: f64,
}

impl Default for ConeParams {
    fn default() -> Self {
        ConeParams { theta: 0.5, lambda: 2.0 }
    }
}

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MapFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
pub type JacFn = Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>;

/// Region `{φ⁻(y) ≤ x ≤ φ⁺(y), y ∈ [-1, 1]}`.
#[derive(Clone)]
pub struct BoxRegion {
    pub phi_minus: Fn1,
    pub phi_plus: Fn1,
    /// Claimed bound on |Dφ±|.
    pub dphi_bound: f64,
}

impl std::fmt::Debug for BoxRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BoxRegion[{:.6}, {:.6}]", (self.phi_minus)(0.0), (self.phi_plus)(0.0))
    }
}

impl BoxRegion {
    pub fn new(phi_minus: Fn1, phi_plus: Fn1, dphi_bound: f64) -> Self {
        BoxRegion { phi_minus, phi_plus, dphi_bound }
    }

    /// The square `I²`.
    pub fn full() -> Self {
        Self::vertical_strip(-1.0, 1.0)
    }

    /// `[l, r] × I`.
    pub fn vertical_strip(l: f64, r: f64) -> Self {
        BoxRegion { phi_minus: Arc::new(move |_| l), phi_plus: Arc::new(move |_| r), dphi_bound: 0.0 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (-1.0..=1.0).contains(&y) && (self.phi_minus)(y) <= x && x <= (self.phi_plus)(y)
    }

    /// Checks ordering, |φ±| ≤ 1 and the derivative bound against θ on a grid.
    pub fn validate(&self, cones: &ConeParams, grid: usize) -> Result<()> {
        if self.dphi_bound >= cones.theta {
            return Err(Error::Cone(format!("claimed |Dφ| bound {} is not below θ", self.dphi_bound)));
        }
        let h = 1e-6;
        for k in 0..grid {
            let y = -1.0 + 2.0 * k as f64 / (grid - 1) as f64;
            let (a, b) = ((self.phi_minus)(y), (self.phi_plus)(y));
            if a >= b || a.abs() > 1.0 || b.abs() > 1.0 {
                return Err(Error::Construction(format!("box sides invalid at y={y}: [{a}, {b}]")));
            }
            for phi in [&self.phi_minus, &self.phi_plus] {
                let d = (phi(y + h) - phi(y - h)) / (2.0 * h);
                if d.abs() > self.dphi_bound + 1e-6 || d.abs() >= cones.theta {
                    return Err(Error::Cone(format!("|Dφ| = {d} at y={y}")));
                }
            }
        }
        Ok(())
    }
}

/// C² map of the plane with its derivative.
#[derive(Clone)]
pub struct PlaneMap {
    pub name: String,
    f: MapFn,
    df: JacFn,
    identity: bool,
}

impl std::fmt::Debug for PlaneMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PlaneMap({})", self.name)
    }
}

impl PlaneMap {
    pub fn new(name: impl Into<String>, f: MapFn, df: JacFn) -> Self {
        PlaneMap { name: name.into(), f, df, identity: false }
    }

    pub fn identity() -> Self {
        PlaneMap {
            name: "id".into(),
            f: Arc::new(|x, y| [x, y]),
            df: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            identity: true,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        (self.f)(x, y)
    }

    pub fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        (self.df)(x, y)
    }

    /// Largest relative disagreement between the derivative and central differences.
    pub fn derivative_mismatch(&self, points: &[[f64; 2]]) -> f64 {
        let mut worst: f64 = 0.0;
        for p in points {
            let j = self.jacobian(p[0], p[1]);
            let scale = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (c, dir) in [[1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
                let h = 1e-6 * (1.0 + p[c].abs());
                let a = self.eval(p[0] + h * dir[0], p[1] + h * dir[1]);
                let b = self.eval(p[0] - h * dir[0], p[1] - h * dir[1]);
                for r in 0..2 {
                    let fd = (a[r] - b[r]) / (2.0 * h);
                    worst = worst.max((fd - j[r][c]).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Values and first partials of an implicit representation at one point.
///
/// `ln_x_x` and `ln_y_y` carry `ln|∂ₓX|` and `ln|∂_yY|` separately so that
/// widths of long words never underflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub x: f64,
    pub y: f64,
    pub x_x: f64,
    pub x_y: f64,
    pub y_x: f64,
    pub y_y: f64,
    pub ln_x_x: f64,
    pub ln_y_y: f64,
}

/// Origin of a representation, kept for reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub word: String,
    pub tol: f64,
}

enum Node {
    Identity,
    Map { map: PlaneMap, region: BoxRegion, tol: f64 },
    Star { first: ImplicitRep, second: ImplicitRep, tol: f64 },
}

/// Hyperbolic transformation through its cross-coordinate functions.
#[derive(Clone)]
pub struct ImplicitRep {
    node: Arc<Node>,
    pub provenance: Provenance,
}

impl std::fmt::Debug for ImplicitRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ImplicitRep({})", self.provenance.word)
    }
}

/// Contraction iteration budget for the ⋆-product solve.
pub const STAR_BUDGET: usize = 200;

/// Implicit representation of `map` on `region`; solves `pr₁F(·, y0) = x1` per point.
pub fn implicit_from_map(map: PlaneMap, region: BoxRegion, tol: f64) -> ImplicitRep {
    let word = map.name.clone();
    if map.is_identity() {
        return ImplicitRep::identity();
    }
    ImplicitRep { node: Arc::new(Node::Map { map, region, tol }), provenance: Provenance { word, tol } }
}

/// Composite `r1 ⋆ r2` (first `r1`, then `r2`).
pub fn star_product(r1: &ImplicitRep, r2: &ImplicitRep, tol: f64) -> ImplicitRep {
    if r1.is_identity() {
        return r2.clone();
    }
    if r2.is_identity() {
        return r1.clone();
    }
    let word = format!("{}{}", r1.provenance.word, r2.provenance.word);
    ImplicitRep {
        node: Arc::new(Node::Star { first: r1.clone(), second: r2.clone(), tol }),
        provenance: Provenance { word, tol },
    }
}

fn ln_abs(v: f64) -> f64 {
    v.abs().ln()
}

impl ImplicitRep {
    pub fn identity() -> Self {
        ImplicitRep { node: Arc::new(Node::Identity), provenance: Provenance { word: "e".into(), tol: 0.0 } }
    }

    pub fn is_identity(&self) -> bool {
        matches!(*self.node, Node::Identity)
    }

    /// `(X, Y)` and partials at `(x1, y0)`.
    pub fn eval(&self, x1: f64, y0: f64) -> Result<Jet> {
        match &*self.node {
            Node::Identity => Ok(Jet { x: x1, y: y0, x_x: 1.0, x_y: 0.0, y_x: 0.0, y_y: 1.0, ln_x_x: 0.0, ln_y_y: 0.0 }),
            Node::Map { map, region, tol } => eval_map(map, region, *tol, x1, y0),
            Node::Star { first, second, tol } => Ok(eval_star(first, second, *tol, x1, y0)?.0),
        }
    }

    /// For a composite: the composite jet plus the factor jets at the matched orbit point
    /// and `Δ = 1 − ∂_y X₁·∂ₓY₀`.
    pub fn star_diagnostics(&self, x2: f64, y0: f64) -> Result<Option<(Jet, Jet, Jet, f64)>> {
        match &*self.node {
            Node::Star { first, second, tol } => {
                let (jet, j0, j1, delta) = eval_star(first, second, *tol, x2, y0)?;
                Ok(Some((jet, j0, j1, delta)))
            }
            _ => Ok(None),
        }
    }

    /// Applies the underlying maps forward from the entry point `(x0, y0)`.
    pub fn forward(&self, x0: f64, y0: f64) -> [f64; 2] {
        match &*self.node {
            Node::Identity => [x0, y0],
            Node::Map { map, .. } => map.eval(x0, y0),
            Node::Star { first, second, .. } => {
                let p = first.forward(x0, y0);
                second.forward(p[0], p[1])
            }
        }
    }

    /// Determinant of the forward derivative at `(x0, y0)`.
    pub fn forward_det(&self, x0: f64, y0: f64) -> f64 {
        match &*self.node {
            Node::Identity => 1.0,
            Node::Map { map, .. } => {
                let j = map.jacobian(x0, y0);
                j[0][0] * j[1][1] - j[0][1] * j[1][0]
            }
            Node::Star { first, second, .. } => {
                let p = first.forward(x0, y0);
                first.forward_det(x0, y0) * second.forward_det(p[0], p[1])
            }
        }
    }

    /// `‖F(X(x1,y0), y0) − (x1, Y(x1,y0))‖` at one point.
    pub fn residual(&self, x1: f64, y0: f64) -> Result<f64> {
        let j = self.eval(x1, y0)?;
        let img = self.forward(j.x, y0);
        Ok((img[0] - x1).hypot(img[1] - j.y))
    }

    /// `(∂²_yy X, ∂²_xx Y)` by central differences of the first partials.
    pub fn second_derivatives(&self, x1: f64, y0: f64) -> Result<[f64; 2]> {
        let h = 1e-6;
        let yp = self.eval(x1, y0 + h)?;
        let ym = self.eval(x1, y0 - h)?;
        let xp = self.eval(x1 + h, y0)?;
        let xm = self.eval(x1 - h, y0)?;
        Ok([(yp.x_y - ym.x_y) / (2.0 * h), (xp.y_x - xm.y_x) / (2.0 * h)])
    }

    /// Largest `|∂ₓX| + |∂_yX|` and `|∂ₓY| + |∂_yY|` on a grid.
    pub fn cone_sums(&self, grid: usize) -> Result<[f64; 2]> {
        let mut out = [0.0f64; 2];
        for (x, y) in grid_points(grid, 1.0) {
            let j = self.eval(x, y)?;
            out[0] = out[0].max(j.x_x.abs() + j.x_y.abs());
            out[1] = out[1].max(j.y_x.abs() + j.y_y.abs());
        }
        Ok(out)
    }
}

fn solve_section(map: &PlaneMap, region: &BoxRegion, tol: f64, x1: f64, y0: f64) -> Result<f64> {
    let g = |x: f64| map.eval(x, y0)[0] - x1;
    let (mut lo, mut hi) = ((region.phi_minus)(y0), (region.phi_plus)(y0));
    let width = hi - lo;
    let (mut glo, mut ghi) = (g(lo), g(hi));
    // tolerate targets marginally outside I (finite-difference probes)
    let mut grow = 0;
    while glo.signum() == ghi.signum() && glo != 0.0 && ghi != 0.0 {
        grow += 1;
        if grow > 3 {
            return Err(Error::Domain(format!(
                "section solve for {} leaves the box at x1={x1}, y0={y0}",
                map.name
            )));
        }
        lo -= 0.02 * width;
        hi += 0.02 * width;
        glo = g(lo);
        ghi = g(hi);
    }
    if glo == 0.0 {
        return Ok(lo);
    }
    if ghi == 0.0 {
        return Ok(hi);
    }
    let increasing = ghi > glo;
    let mut x = lo - glo * (hi - lo) / (ghi - glo);
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return Ok(x);
        }
        if (gx > 0.0) == increasing {
            hi = x;
        } else {
            lo = x;
        }
        let slope = map.jacobian(x, y0)[0][0];
        if slope == 0.0 || (slope > 0.0) != increasing {
            return Err(Error::Cone(format!("section of {} is not monotone at x={x}", map.name)));
        }
        let mut next = x - gx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-3 * tol.min(1e-13) * width.max(1e-300) || hi - lo <= 4.0 * f64::EPSILON * x.abs().max(width) {
            return Ok(x);
        }
    }
    Ok(x)
}

fn eval_map(map: &PlaneMap, region: &BoxRegion, tol: f64, x1: f64, y0: f64) -> Result<Jet> {
    let x0 = solve_section(map, region, tol, x1, y0)?;
    let img = map.eval(x0, y0);
    let j = map.jacobian(x0, y0);
    let (fx, fy, gx, gy) = (j[0][0], j[0][1], j[1][0], j[1][1]);
    let x_x = 1.0 / fx;
    let x_y = -fy / fx;
    let y_x = gx * x_x;
    let y_y = gx * x_y + gy;
    Ok(Jet { x: x0, y: img[1], x_x, x_y, y_x, y_y, ln_x_x: ln_abs(x_x), ln_y_y: ln_abs(y_y) })
}

fn eval_star(first: &ImplicitRep, second: &ImplicitRep, _tol: f64, x2: f64, y0: f64) -> Result<(Jet, Jet, Jet, f64)> {
    let mut w = 0.0;
    let mut j1 = second.eval(x2, w)?;
    let mut prev_dx = f64::INFINITY;
    for it in 0..STAR_BUDGET {
        let j0 = first.eval(j1.x, y0)?;
        w = j0.y;
        let j1_new = second.eval(x2, w)?;
        let dx = (j1_new.x - j1.x).abs();
        let settled = dx == 0.0
            || dx <= 2.0 * f64::EPSILON * j1.x.abs().max(1e-300)
            || (it >= 3 && dx <= 1e-13 && dx >= prev_dx);
        j1 = j1_new;
        if settled {
            let j0 = if dx == 0.0 { j0 } else { first.eval(j1.x, y0)? };
            let delta = 1.0 - j1.x_y * j0.y_x;
            let jet = Jet {
                x: j0.x,
                y: j1.y,
                x_x: j0.x_x * j1.x_x / delta,
                x_y: j0.x_x * j1.x_y * j0.y_y / delta + j0.x_y,
                y_x: j1.y_x + j1.y_y * j0.y_x * j1.x_x / delta,
                y_y: j1.y_y * j0.y_y / delta,
                ln_x_x: j0.ln_x_x + j1.ln_x_x - ln_abs(delta),
                ln_y_y: j1.ln_y_y + j0.ln_y_y - ln_abs(delta),
            };
            return Ok((jet, j0, j1, delta));
        }
        prev_dx = dx;
    }
    Err(Error::Divergence { iterations: STAR_BUDGET, residual: prev_dx })
}

/// Supplies the generator representation of each hyperbolic arrow.
pub trait RepSource {
    fn graph(&self) -> &TransitionGraph;
    fn letter_rep(&self, arrow: usize) -> Result<ImplicitRep>;
}

/// Representation of a word by balanced binary folding of ⋆-products.
pub fn word_rep<S: RepSource + ?Sized>(word: &Word, source: &S, tol: f64) -> Result<ImplicitRep> {
    for &a in word.letters() {
        if source.graph().kind(a) != ArrowKind::Hyperbolic {
            return Err(Error::Kind(format!("fold arrow `{}` inside a hyperbolic word", source.graph().label(a))));
        }
    }
    let leaves = word.letters().iter().map(|&a| source.letter_rep(a)).collect::<Result<Vec<_>>>()?;
    Ok(balanced(&leaves, tol))
}

fn balanced(leaves: &[ImplicitRep], tol: f64) -> ImplicitRep {
    match leaves.len() {
        0 => ImplicitRep::identity(),
        1 => leaves[0].clone(),
        n => {
            let (a, b) = leaves.split_at(n / 2);
            star_product(&balanced(a, tol), &balanced(b, tol), tol)
        }
    }
}

/// Strict left fold, for comparison with the balanced fold.
pub fn word_rep_left_fold<S: RepSource + ?Sized>(word: &Word, source: &S, tol: f64) -> Result<ImplicitRep> {
    let mut acc = ImplicitRep::identity();
    for &a in word.letters() {
        acc = star_product(&acc, &source.letter_rep(a)?, tol);
    }
    Ok(acc)
}

/// Points of a `grid × grid` lattice of `[-r, r]²`.
pub fn grid_points(grid: usize, r: f64) -> Vec<(f64, f64)> {
    let g = grid.max(2);
    let t = |k: usize| -r + 2.0 * r * k as f64 / (g - 1) as f64;
    (0..g).flat_map(|i| (0..g).map(move |k| (t(i), t(k)))).collect()
}

/// The six distortion suprema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    pub dx_log_xx: f64,
    pub dy_log_xx: f64,
    pub dx_log_yy: f64,
    pub dy_log_yy: f64,
    pub d2_yy_x: f64,
    pub d2_xx_y: f64,
}

impl Distortion {
    pub fn max(&self) -> f64 {
        [self.dx_log_xx, self.dy_log_xx, self.dx_log_yy, self.dy_log_yy, self.d2_yy_x, self.d2_xx_y]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Distortion suprema on a grid (central differences of analytic first partials).
pub fn distortion(rep: &ImplicitRep, grid: usize) -> Result<Distortion> {
    let h = 1e-6;
    let mut d = Distortion { dx_log_xx: 0.0, dy_log_xx: 0.0, dx_log_yy: 0.0, dy_log_yy: 0.0, d2_yy_x: 0.0, d2_xx_y: 0.0 };
    for (x, y) in grid_points(grid, 1.0 - 2.0 * h) {
        let c = rep.eval(x, y)?;
        if c.x_x == 0.0 && c.ln_x_x == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!("∂ₓX vanishes at ({x}, {y})")));
        }
        let xp = rep.eval(x + h, y)?;
        let xm = rep.eval(x - h, y)?;
        let yp = rep.eval(x, y + h)?;
        let ym = rep.eval(x, y - h)?;
        let upd = |slot: &mut f64, v: f64| *slot = slot.max(v.abs());
        upd(&mut d.dx_log_xx, (xp.ln_x_x - xm.ln_x_x) / (2.0 * h));
        upd(&mut d.dy_log_xx, (yp.ln_x_x - ym.ln_x_x) / (2.0 * h));
        upd(&mut d.dx_log_yy, (xp.ln_y_y - xm.ln_y_y) / (2.0 * h));
        upd(&mut d.dy_log_yy, (yp.ln_y_y - ym.ln_y_y) / (2.0 * h));
        upd(&mut d.d2_yy_x, (yp.x_y - ym.x_y) / (2.0 * h));
        upd(&mut d.d2_xx_y, (xp.y_x - xm.y_x) / (2.0 * h));
    }
    Ok(d)
}

/// Extremal widths and heights in log-space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Widths {
    pub w_min: LogScale,
    pub w_max: LogScale,
    pub h_min: LogScale,
    pub h_max: LogScale,
}

fn refine_extremum(
    rep: &ImplicitRep,
    start: (f64, f64),
    spacing: f64,
    pick: impl Fn(&Jet) -> f64,
    maximize: bool,
) -> Result<f64> {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let mut best_pt = start;
    let mut best = pick(&rep.eval(start.0, start.1)?);
    let mut step = spacing;
    for _ in 0..3 {
        step /= 2.0;
        let (cx, cy) = best_pt;
        for i in -2i32..=2 {
            for k in -2i32..=2 {
                let (x, y) = ((cx + i as f64 * step).clamp(-1.0, 1.0), (cy + k as f64 * step).clamp(-1.0, 1.0));
                let v = pick(&rep.eval(x, y)?);
                if better(v, best) {
                    best = v;
                    best_pt = (x, y);
                }
            }
        }
    }
    Ok(best)
}

/// Min/max of `|∂ₓX|` and `|∂_yY|` on a grid with three refinement passes.
pub fn extremal_widths(rep: &ImplicitRep, grid: usize) -> Result<Widths> {
    let pts = grid_points(grid, 1.0);
    let mut ext = [(f64::INFINITY, (0.0, 0.0)), (f64::NEG_INFINITY, (0.0, 0.0)), (f64::INFINITY, (0.0, 0.0)), (f64::NEG_INFINITY, (0.0, 0.0))];
    for &(x, y) in &pts {
        let j = rep.eval(x, y)?;
        if j.ln_x_x < ext[0].0 {
            ext[0] = (j.ln_x_x, (x, y));
        }
        if j.ln_x_x > ext[1].0 {
            ext[1] = (j.ln_x_x, (x, y));
        }
        if j.ln_y_y < ext[2].0 {
            ext[2] = (j.ln_y_y, (x, y));
        }
        if j.ln_y_y > ext[3].0 {
            ext[3] = (j.ln_y_y, (x, y));
        }
    }
    let spacing = 2.0 / (grid.max(2) - 1) as f64;
    let w_min = refine_extremum(rep, ext[0].1, spacing, |j| j.ln_x_x, false)?;
    let w_max = refine_extremum(rep, ext[1].1, spacing, |j| j.ln_x_x, true)?;
    let h_min = refine_extremum(rep, ext[2].1, spacing, |j| j.ln_y_y, false)?;
    let h_max = refine_extremum(rep, ext[3].1, spacing, |j| j.ln_y_y, true)?;
    Ok(Widths {
        w_min: LogScale::from_ln(w_min),
        w_max: LogScale::from_ln(w_max),
        h_min: LogScale::from_ln(h_min),
        h_max: LogScale::from_ln(h_max),
    })
}

/// `|Y^c|`: largest horizontal slice length, `∫|∂ₓX(x1, y0)| dx1`, in log-space.
pub fn slice_width(rep: &ImplicitRep, grid: usize) -> Result<LogScale> {
    let n = (grid.max(3) / 2) * 2; // even number of Simpson panels
    let mut best = f64::NEG_INFINITY;
    for k in 0..grid.max(2) {
        let y0 = -1.0 + 2.0 * k as f64 / (grid.max(2) - 1) as f64;
        let lns = (0..=n)
            .map(|i| rep.eval(-1.0 + 2.0 * i as f64 / n as f64, y0).map(|j| j.ln_x_x))
            .collect::<Result<Vec<_>>>()?;
        let reference = lns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for (i, l) in lns.iter().enumerate() {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (l - reference).exp();
        }
        best = best.max(reference + (s * h / 3.0).ln());
    }
    Ok(LogScale::from_ln(best))
}

/// Invariant curve `W^s` (a graph over y) or `W^u` (a graph over x) at finite depth.
#[derive(Clone, Debug)]
pub struct InvariantCurve {
    pub side: Side,
    pub depth: usize,
    rep: ImplicitRep,
    /// Bound `2·w̄` (stable) or `2·h̄` (unstable) on the distance to the true curve.
    pub error: LogScale,
}

impl InvariantCurve {
    /// Stable: `x` at height `t`. Unstable: `y` at abscissa `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.side {
            Side::Right => Ok(self.rep.eval(0.0, t)?.x),
            Side::Left => Ok(self.rep.eval(t, 0.0)?.y),
        }
    }
}

/// Evaluates `W^s` or `W^u` of a one-sided sequence through its depth truncation.
pub fn invariant_manifold<S: RepSource + ?Sized>(seq: &OneSidedSequence, depth: usize, source: &S, tol: f64) -> Result<InvariantCurve> {
    if depth == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    let word = seq.truncate_in(depth, source.graph());
    let rep = word_rep(&word, source, tol)?;
    let widths = extremal_widths(&rep, 5)?;
    let two = LogScale::from_f64(2.0);
    let error = match seq.side() {
        Side::Right => two * widths.w_max,
        Side::Left => two * widths.h_max,
    };
    Ok(InvariantCurve { side: seq.side(), depth, rep, error })
}

/// Outcome of one item of the hyperbolicity check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemCheck {
    pub pass: bool,
    /// Worst normalized value (≤ 1 passes).
    pub worst: f64,
    pub witness: Option<[f64; 2]>,
}

impl ItemCheck {
    fn new() -> Self {
        ItemCheck { pass: true, worst: 0.0, witness: None }
    }

    fn record(&mut self, value: f64, at: [f64; 2]) {
        if value > self.worst || !value.is_finite() {
            self.worst = value;
            self.witness = Some(at);
        }
        if !(value <= 1.0) {
            self.pass = false;
        }
    }
}

/// Diagnostic of the three hyperbolic-transformation items on a sample grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicReport {
    pub boundary: ItemCheck,
    pub cones: ItemCheck,
    pub expansion: ItemCheck,
    pub identity_exception: bool,
}

impl HyperbolicReport {
    pub fn pass(&self) -> bool {
        self.boundary.pass && self.cones.pass && self.expansion.pass
    }
}

fn inv2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn apply(m: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Checks boundary mapping, cone invariance and expansion on a `grid × grid` sample of the box.
pub fn check_hyperbolic(map: &PlaneMap, region: &BoxRegion, cones: &ConeParams, grid: usize) -> HyperbolicReport {
    let g = grid.max(2);
    let ys: Vec<f64> = (0..g).map(|k| -1.0 + 2.0 * k as f64 / (g - 1) as f64).collect();
    let full = (region.phi_minus)(0.0) == -1.0 && (region.phi_plus)(0.0) == 1.0 && region.dphi_bound == 0.0;
    if full {
        let is_id = ys.iter().all(|&y| ys.iter().all(|&x| {
            let p = map.eval(x, y);
            p[0] == x && p[1] == y
        }));
        if is_id {
            return HyperbolicReport { boundary: ItemCheck::new(), cones: ItemCheck::new(), expansion: ItemCheck::new(), identity_exception: true };
        }
    }
    let (theta, lambda) = (cones.theta, cones.lambda);
    let mut boundary = ItemCheck::new();
    let mut cone = ItemCheck::new();
    let mut expansion = ItemCheck::new();
    for &y in &ys {
        let (l, r) = ((region.phi_minus)(y), (region.phi_plus)(y));
        let (pl, pr) = (map.eval(l, y), map.eval(r, y));
        // sides go to the vertical sides of I², image inside I²
        let side_err = ((pl[0].abs() - 1.0).abs()).max((pr[0].abs() - 1.0).abs()) + if pl[0] * pr[0] < 0.0 { 0.0 } else { 1.0 };
        boundary.record(side_err / 1e-9, [l, y]);
        for k in 0..g {
            let x = l + (r - l) * k as f64 / (g - 1) as f64;
            let p = map.eval(x, y);
            let outside = (p[0].abs() - 1.0).max(p[1].abs() - 1.0).max(0.0);
            boundary.record(outside / 1e-9, [x, y]);
            let j = map.jacobian(x, y);
            for v in [[1.0, 0.0], [1.0, theta], [1.0, -theta]] {
                let w = apply(j, v);
                cone.record(if w[0] == 0.0 { f64::INFINITY } else { w[1].abs() / (theta * w[0].abs()) }, [x, y]);
                let ratio = v[0].hypot(v[1]) * lambda / w[0].hypot(w[1]);
                expansion.record(ratio, [x, y]);
            }
            match inv2(j) {
                Some(ji) => {
                    for v in [[0.0, 1.0], [theta, 1.0], [-theta, 1.0]] {
                        let w = apply(ji, v);
                        cone.record(if w[1] == 0.0 { f64::INFINITY } else { w[0].abs() / (theta * w[1].abs()) }, [x, y]);
                        expansion.record(v[0].hypot(v[1]) * lambda / w[0].hypot(w[1]), [x, y]);
                    }
                }
                None => {
                    cone.record(f64::INFINITY, [x, y]);
                    expansion.record(f64::INFINITY, [x, y]);
                }
            }
        }
    }
    HyperbolicReport { boundary, cones: cone, expansion, identity_exception: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine_generator(c: f64, s: f64, r: f64) -> (PlaneMap, BoxRegion) {
        let map = PlaneMap::new(
            "g",
            Arc::new(move |x, y| [(x - c) / s, r * (c + s * y)]),
            Arc::new(move |_, _| [[1.0 / s, 0.0], [0.0, r * s]]),
        );
        (map, BoxRegion::vertical_strip(c - s, c + s))
    }

    fn cubic_generator(c: f64, s: f64, r: f64) -> (PlaneMap, BoxRegion) {
        let map = PlaneMap::new(
            "q",
            Arc::new(move |x, y| [(x - c) / s + 0.01 * y.powi(3), r * (c + s * y)]),
            Arc::new(move |_, y| [[1.0 / s, 0.03 * y * y], [0.0, r * s]]),
        );
        let region = BoxRegion::new(
            Arc::new(move |y| c + s * (-1.0 - 0.01 * y.powi(3))),
            Arc::new(move |y| c + s * (1.0 - 0.01 * y.powi(3))),
            0.03 * s,
        );
        (map, region)
    }

    #[test]
    fn identity_rep_is_identity() {
        let r = implicit_from_map(PlaneMap::identity(), BoxRegion::full(), 1e-14);
        let j = r.eval(0.3, -0.7).unwrap();
        assert_eq!((j.x, j.y), (0.3, -0.7));
    }

    #[test]
    fn affine_generator_closed_form() {
        let s = 1.0 / 6.0 - 1e-8;
        let r = 1e-2;
        let c = -5.0 / 6.0;
        let (m, b) = affine_generator(c, s, r);
        let rep = implicit_from_map(m, b, 1e-14);
        for (x, y) in grid_points(9, 1.0) {
            let j = rep.eval(x, y).unwrap();
            assert!((j.x - (c + s * x)).abs() < 1e-15);
            assert!((j.y - r * (c + s * y)).abs() < 1e-15);
            assert!(rep.residual(x, y).unwrap() < 1e-14);
        }
    }

    #[test]
    fn cubic_residual_and_jacobian_identity() {
        let (m, b) = cubic_generator(0.5, 1.0 / 6.0 - 1e-8, 1e-2);
        let rep = implicit_from_map(m.clone(), b, 1e-14);
        for (x, y) in grid_points(17, 1.0) {
            assert!(rep.residual(x, y).unwrap() < 1e-10);
            let j = rep.eval(x, y).unwrap();
            let jac = m.jacobian(j.x, y);
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            assert!(((det * j.x_x) - j.y_y).abs() <= 1e-8 * j.y_y.abs());
        }
    }

    #[test]
    fn star_of_affine_is_exact_product() {
        let s = 1.0 / 6.0 - 1e-8;
        let (m1, b1) = affine_generator(-5.0 / 6.0, s, 1e-2);
        let (m2, b2) = affine_generator(-0.5, s, 1e-2);
        let r = star_product(&implicit_from_map(m1, b1, 1e-14), &implicit_from_map(m2, b2, 1e-14), 1e-14);
        let (jet, j0, j1, delta) = r.star_diagnostics(0.2, 0.4).unwrap().unwrap();
        assert_eq!(delta, 1.0);
        assert_eq!(jet.x_x, j0.x_x * j1.x_x);
        assert!((jet.x_x - s * s).abs() < 1e-17);
        let res = r.residual(0.2, 0.4).unwrap(); assert!(res < 1e-13, "{res}");
    }

    #[test]
    fn star_with_identity_is_neutral() {
        let (m, b) = cubic_generator(0.5, 1.0 / 6.0, 1e-2);
        let r = implicit_from_map(m, b, 1e-14);
        let id = ImplicitRep::identity();
        for (x, y) in grid_points(5, 1.0) {
            let a = r.eval(x, y).unwrap();
            let l = star_product(&id, &r, 1e-14).eval(x, y).unwrap();
            let rr = star_product(&r, &id, 1e-14).eval(x, y).unwrap();
            assert!((a.x - l.x).abs() < 1e-14 && (a.y - rr.y).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_sandwich_holds() {
        let theta: f64 = 0.5;
        let (m1, b1) = cubic_generator(-0.5, 1.0 / 6.0 - 1e-8, 0.1);
        let (m2, b2) = cubic_generator(0.5, 1.0 / 6.0 - 1e-8, 0.1);
        let r = star_product(&implicit_from_map(m1, b1, 1e-14), &implicit_from_map(m2, b2, 1e-14), 1e-14);
        for (x, y) in grid_points(7, 1.0) {
            let (jet, j0, j1, _) = r.star_diagnostics(x, y).unwrap().unwrap();
            let ratio = jet.x_x.abs() / (j0.x_x.abs() * j1.x_x.abs());
            assert!(ratio >= 1.0 / (1.0 + theta * theta) - 1e-12 && ratio <= 1.0 / (1.0 - theta * theta) + 1e-12);
        }
    }

    #[test]
    fn affine_distortion_vanishes() {
        let (m, b) = affine_generator(-0.5, 1.0 / 6.0, 1e-2);
        let r = implicit_from_map(m, b, 1e-14);
        assert_eq!(distortion(&r, 9).unwrap().max(), 0.0);
        let rr = star_product(&r, &r, 1e-14);
        assert_eq!(distortion(&rr, 9).unwrap().max(), 0.0);
    }

    #[test]
    fn hyperbolic_check_examples() {
        let (m, b) = affine_generator(-0.5, 1.0 / 6.0 - 1e-8, 1e-2);
        assert!(check_hyperbolic(&m, &b, &ConeParams::default(), 9).pass());
        let id = check_hyperbolic(&PlaneMap::identity(), &BoxRegion::full(), &ConeParams::default(), 9);
        assert!(id.pass() && id.identity_exception);
        let r = 1e-2;
        let fold = PlaneMap::new(
            "fold",
            Arc::new(move |x, y| [x * x + y + 0.3, -r * x]),
            Arc::new(move |x, _| [[2.0 * x, 1.0], [-r, 0.0]]),
        );
        let rep = check_hyperbolic(&fold, &BoxRegion::vertical_strip(-1e-4, 1e-4), &ConeParams::default(), 9);
        assert!(!rep.cones.pass && !rep.expansion.pass);
    }
}
