//! The degree-6 real Hénon family `(x, y) ↦ (P_p(x) − y, b·x)` with
//! `P_p = T₆ + Σ p_i x^i` and `T₆` the Chebyshev polynomial of degree 6.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::gauss_solve;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HenonParams {
    pub b: f64,
    /// Perturbation coefficients `p_0..p_4`.
    pub p: [f64; 5],
}

impl HenonParams {
    pub fn new(b: f64, p: [f64; 5]) -> Self {
        HenonParams { b, p }
    }

    pub fn unperturbed(b: f64) -> Self {
        HenonParams { b, p: [0.0; 5] }
    }

    /// `P_p(x)`.
    pub fn poly(&self, x: f64) -> f64 {
        let x2 = x * x;
        let t6 = ((32.0 * x2 - 48.0) * x2 + 18.0) * x2 - 1.0;
        let pert = self.p.iter().rev().fold(0.0, |acc, &c| acc * x + c);
        t6 + pert
    }

    /// `P_p'(x)`.
    pub fn dpoly(&self, x: f64) -> f64 {
        let x2 = x * x;
        let d6 = ((192.0 * x2 - 192.0) * x2 + 36.0) * x;
        let dpert = (1..5).rev().fold(0.0, |acc, i| acc * x + i as f64 * self.p[i]);
        d6 + dpert
    }

    pub fn step(&self, z: [f64; 2]) -> [f64; 2] {
        [self.poly(z[0]) - z[1], self.b * z[0]]
    }
}

/// Chebyshev polynomial `T₆(x) = 32x⁶ − 48x⁴ + 18x² − 1` on exact rationals of `x²`.
pub fn t6_of_square(x2: num_rational::BigRational) -> num_rational::BigRational {
    use num_bigint::BigInt;
    let c = |v: i64| num_rational::BigRational::from_integer(BigInt::from(v));
    ((c(32) * &x2 - c(48)) * &x2 + c(18)) * &x2 - c(1)
}

/// Critical abscissae of `T₆`: `(−√3/2, −1/2, 0, 1/2, √3/2)`.
pub fn t6_critical_points() -> [f64; 5] {
    let h = 3f64.sqrt() / 2.0;
    [-h, -0.5, 0.0, 0.5, h]
}

/// Orbit with escape diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HenonOrbit {
    pub points: Vec<[f64; 2]>,
    /// Index of the first point beyond the escape radius.
    pub escape_time: Option<usize>,
}

/// Iterates from `z0` until `‖z‖ > escape_radius` or `steps` iterations.
pub fn henon_iterate(params: &HenonParams, z0: [f64; 2], steps: usize, escape_radius: f64) -> Result<HenonOrbit> {
    if steps == 0 {
        return Err(Error::Precondition("steps must be at least 1".into()));
    }
    let mut points = vec![z0];
    let mut z = z0;
    let escaped = |z: [f64; 2]| !(z[0].hypot(z[1]) <= escape_radius);
    if escaped(z) {
        return Ok(HenonOrbit { points, escape_time: Some(0) });
    }
    for k in 1..=steps {
        z = params.step(z);
        points.push(z);
        if escaped(z) {
            return Ok(HenonOrbit { points, escape_time: Some(k) });
        }
    }
    Ok(HenonOrbit { points, escape_time: None })
}

/// Escape time without storing the orbit.
pub fn escape_time(params: &HenonParams, z0: [f64; 2], steps: usize, escape_radius: f64) -> Option<usize> {
    let mut z = z0;
    for k in 0..=steps {
        if !(z[0].hypot(z[1]) <= escape_radius) {
            return Some(k);
        }
        z = params.step(z);
    }
    None
}

/// Escape times over a phase rectangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeScan {
    pub params: HenonParams,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    /// Row-major `ny × nx`; `None` means bounded over the step budget.
    pub times: Vec<Option<usize>>,
}

impl EscapeScan {
    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let t = |k: usize, n: usize, r: (f64, f64)| if n == 1 { 0.5 * (r.0 + r.1) } else { r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64 };
        [t(ix, self.nx, self.x_range), t(iy, self.ny, self.y_range)]
    }

    pub fn bounded_count(&self) -> usize {
        self.times.iter().filter(|t| t.is_none()).count()
    }
}

/// Grid scan of escape times.
pub fn escape_scan(
    params: &HenonParams,
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    steps: usize,
    escape_radius: f64,
) -> EscapeScan {
    let mut scan = EscapeScan { params: *params, x_range, y_range, nx, ny, times: Vec::with_capacity(nx * ny) };
    for iy in 0..ny {
        for ix in 0..nx {
            let z = scan.cell_center(ix, iy);
            scan.times.push(escape_time(params, z, steps, escape_radius));
        }
    }
    scan
}

/// Bounded-cell count at one `(b, p₀)` of a parameter scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabPoint {
    pub b: f64,
    pub p0: f64,
    pub bounded: usize,
}

/// Escape scans of `(−1.2, 1.2)²` over a grid of `b` and constant perturbations `p₀`.
pub fn slab_scan(bs: &[f64], p0s: &[f64], grid: usize, steps: usize, escape_radius: f64) -> Vec<SlabPoint> {
    let mut out = Vec::with_capacity(bs.len() * p0s.len());
    for &b in bs {
        for &p0 in p0s {
            let params = HenonParams::new(b, [p0, 0.0, 0.0, 0.0, 0.0]);
            let scan = escape_scan(&params, (-1.2, 1.2), (-1.2, 1.2), grid, grid, steps, escape_radius);
            out.push(SlabPoint { b, p0, bounded: scan.bounded_count() });
        }
    }
    out
}

/// Matrix of the unfolding of the critical-value images relative to the fixed point at `p = 0`.
pub fn unfolding_matrix() -> [[f64; 5]; 5] {
    let z = t6_critical_points();
    let mut m = [[0.0; 5]; 5];
    for (i0, row) in m.iter_mut().enumerate() {
        let i = i0 as i32 + 1;
        for (j, v) in row.iter_mut().enumerate() {
            let sign_i = if i % 2 == 0 { 1.0 } else { -1.0 };
            let sign_ij = if (i * j as i32) % 2 == 0 { 1.0 } else { -1.0 };
            *v = sign_i * 36.0 * z[i0].powi(j as i32) + sign_ij + 1.0 / 35.0;
        }
    }
    m
}

/// Whether the unfolding matrix is invertible (the linear solve succeeds).
pub fn unfolding_is_nondegenerate() -> bool {
    let m = unfolding_matrix();
    let a: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
    gauss_solve(a, vec![1.0; 5]).is_ok()
}
