//! Finite-depth approximations of the stable and unstable Cantor sets, their
//! thickness, and the interval-sweep intersection test.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::{rational_to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CantorSide {
    Stable,
    Unstable,
}

/// Level-`depth` cover of a Cantor set by sorted disjoint closed intervals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorApprox {
    pub depth: usize,
    pub intervals: Vec<(f64, f64)>,
    /// Brute-force thickness of the approximation (∞ when there is no bounded gap).
    pub thickness: f64,
    /// Closed-form thickness of the limit set, when known.
    pub closed_form: Option<f64>,
}

impl CantorApprox {
    /// Builds an approximation from intervals; sorts, merges overlaps and measures thickness.
    pub fn from_intervals(depth: usize, mut intervals: Vec<(f64, f64)>) -> Self {
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite endpoints"));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (a, b) in intervals {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let thickness = thickness_of(&merged).unwrap_or(f64::INFINITY);
        CantorApprox { depth, intervals: merged, thickness, closed_form: None }
    }

    /// Bounded gaps, left to right.
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.intervals.windows(2).map(|w| (w[0].1, w[1].0)).collect()
    }

    pub fn largest_gap(&self) -> f64 {
        self.gaps().iter().map(|g| g.1 - g.0).fold(0.0, f64::max)
    }

    pub fn hull(&self) -> (f64, f64) {
        (self.intervals[0].0, self.intervals[self.intervals.len() - 1].1)
    }

    /// Image under `x ↦ scale·x + shift`.
    pub fn affine_image(&self, scale: f64, shift: f64) -> CantorApprox {
        let iv = self
            .intervals
            .iter()
            .map(|&(a, b)| {
                let (u, v) = (scale * a + shift, scale * b + shift);
                (u.min(v), u.max(v))
            })
            .collect();
        let mut out = CantorApprox::from_intervals(self.depth, iv);
        out.closed_form = self.closed_form;
        out
    }

    /// Intervals inside `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> CantorApprox {
        let iv = self.intervals.iter().copied().filter(|&(a, b)| a >= lo && b <= hi).collect();
        CantorApprox::from_intervals(self.depth, iv)
    }
}

/// Minimum bridge-to-gap ratio over all bounded gaps.
///
/// The bridge at a gap end extends to the nearest gap at least as long, or to the hull.
pub fn thickness_of<T: Real>(intervals: &[(T, T)]) -> Option<T> {
    if intervals.len() < 2 {
        return None;
    }
    let gaps: Vec<(T, T)> = intervals.windows(2).map(|w| (w[0].1.clone(), w[1].0.clone())).collect();
    let len = |g: &(T, T)| g.1.clone() - g.0.clone();
    let hull = (intervals[0].0.clone(), intervals[intervals.len() - 1].1.clone());
    let n = gaps.len();
    // nearest gap to the left / right with length ≥ the current one (monotonic stack)
    let mut left_end = vec![hull.0.clone(); n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while let Some(&k) = stack.last() {
            if len(&gaps[k]) < len(&gaps[i]) {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&k) = stack.last() {
            left_end[i] = gaps[k].1.clone();
        }
        stack.push(i);
    }
    let mut right_end = vec![hull.1.clone(); n];
    stack.clear();
    for i in (0..n).rev() {
        while let Some(&k) = stack.last() {
            if len(&gaps[k]) < len(&gaps[i]) {
                stack.pop();
            } else {
                break;
            }
        }
        if let Some(&k) = stack.last() {
            right_end[i] = gaps[k].0.clone();
        }
        stack.push(i);
    }
    let mut best: Option<T> = None;
    for i in 0..n {
        let g = len(&gaps[i]);
        let lb = gaps[i].0.clone() - left_end[i].clone();
        let rb = right_end[i].clone() - gaps[i].1.clone();
        let b = if lb < rb { lb } else { rb };
        let ratio = b / g;
        best = Some(match best {
            Some(v) if v <= ratio => v,
            _ => ratio,
        });
    }
    best
}

/// Contraction data `(slope, offsets, hull)` of the IFS for one side.
pub fn ifs(side: CantorSide, params: &ModelParams) -> (BigRational, Vec<BigRational>, (BigRational, BigRational)) {
    let s = params.s();
    let r = params.r();
    let n = params.n;
    let one = BigRational::from_integer(1.into());
    let (slope, offs) = match side {
        CantorSide::Stable => (s.clone(), (1..=n).map(|j| params.mid(j)).collect::<Vec<_>>()),
        CantorSide::Unstable => (&r * &s, (1..=n).map(|j| &r * params.mid(j)).collect::<Vec<_>>()),
    };
    // right end of the hull is the fixed point of the last map
    let a = &offs[n - 1] / (&one - &slope);
    (slope, offs, (-a.clone(), a))
}

/// Sorted level-`depth` intervals of an affine IFS sharing one slope.
pub fn ifs_intervals<T: Real>(slope: &T, offsets: &[T], hull: &(T, T), depth: usize) -> Vec<(T, T)> {
    let mut cur = vec![hull.clone()];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cur.len() * offsets.len());
        for c in offsets {
            for (a, b) in &cur {
                next.push((c.clone() + slope.clone() * a.clone(), c.clone() + slope.clone() * b.clone()));
            }
        }
        cur = next;
    }
    cur.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("ordered endpoints"));
    cur
}

/// Closed-form thickness of the limit set.
pub fn closed_form_thickness(side: CantorSide, params: &ModelParams) -> f64 {
    let n = params.n as f64;
    let d = params.delta_f64();
    match side {
        CantorSide::Stable => (n - 1.0 + n * d * d) / (d * d * n * n) - 1.0,
        CantorSide::Unstable => {
            let rs = params.r_f64() * params.s_f64();
            (n - 1.0) * rs / (1.0 - n * rs)
        }
    }
}

/// Largest gap of `K_s`, `2δ²N/(N−1+Nδ²)`.
pub fn closed_form_gap(params: &ModelParams) -> f64 {
    let n = params.n as f64;
    let d = params.delta_f64();
    2.0 * d * d * n / (n - 1.0 + n * d * d)
}

/// Level-`depth` approximation of `K_s` (contractions `C_j`) or `K_u` (contractions `√δ·C_j`).
pub fn cantor_approx(side: CantorSide, depth: usize, params: &ModelParams) -> Result<CantorApprox> {
    if depth == 0 {
        return Err(Error::Precondition("depth must be at least 1".into()));
    }
    let (slope, offs, hull) = ifs(side, params);
    let sl = rational_to_f64(&slope);
    let a = rational_to_f64(&hull.1);
    // the smallest gaps live at the finest level; they must be resolvable next to the hull end
    let first_gap = (2.0 * a - params.n as f64 * 2.0 * a * sl) / (params.n as f64 - 1.0);
    let finest_gap = first_gap * sl.powi(depth as i32 - 1);
    if finest_gap < 8.0 * f64::EPSILON * a {
        return Err(Error::Precision(format!(
            "level-{depth} gaps ({finest_gap:.3e}) are below float resolution at positions of size {a:.3e}; use the rational backend"
        )));
    }
    let slope_f = sl;
    let offs_f: Vec<f64> = offs.iter().map(rational_to_f64).collect();
    let iv = ifs_intervals(&slope_f, &offs_f, &(-a, a), depth);
    let mut out = CantorApprox::from_intervals(depth, iv);
    out.closed_form = Some(closed_form_thickness(side, params));
    Ok(out)
}

/// Exact thickness of the level-`depth` approximation, for parameters beyond float resolution.
pub fn exact_thickness(side: CantorSide, depth: usize, params: &ModelParams) -> Option<BigRational> {
    let (slope, offs, hull) = ifs(side, params);
    thickness_of(&ifs_intervals(&slope, &offs, &hull, depth))
}

/// Outcome of the interval sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapVerdict {
    Intersect,
    K1InGapOfK2,
    K2InGapOfK1,
    /// Interleaved without a common point at this depth.
    Disjoint,
}

fn inside_one_gap(hull: (f64, f64), other: &CantorApprox) -> bool {
    let iv = &other.intervals;
    // index of the first interval whose right end is ≥ hull.0
    let k = iv.partition_point(|&(_, b)| b < hull.0);
    // only bounded gaps count
    k > 0 && k < iv.len() && iv[k].0 > hull.1
}

/// Intersection test of two approximations; nesting verdicts use convex hulls.
pub fn gap_check(k1: &CantorApprox, k2: &CantorApprox) -> GapVerdict {
    let (a, b) = (&k1.intervals, &k2.intervals);
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i].1 < b[j].0 {
            i += 1;
        } else if b[j].1 < a[i].0 {
            j += 1;
        } else {
            return GapVerdict::Intersect;
        }
    }
    if inside_one_gap(k1.hull(), k2) {
        GapVerdict::K1InGapOfK2
    } else if inside_one_gap(k2.hull(), k1) {
        GapVerdict::K2InGapOfK1
    } else {
        GapVerdict::Disjoint
    }
}

/// Verdicts of `K_u^j + p_j` (the piece of `K_u` at height `√δ·I_j`, shifted by the fold) against `K_s`, one per fold.
pub fn unfolded_gap_verdicts(params: &ModelParams, ks: &CantorApprox, ku: &CantorApprox, p: &[f64]) -> Vec<GapVerdict> {
    let (r, s) = (params.r_f64(), params.s_f64());
    (1..params.n)
        .map(|j| gap_check(&ku.affine_image(r * s, r * params.mid_f64(j) + p[j - 1]), ks))
        .collect()
}

/// Uniform sample of the admissible offset box.
pub fn sample_offsets<R: rand::Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Vec<f64> {
    (1..params.n)
        .map(|j| {
            let (lo, hi) = params.offset_range(j);
            rng.gen_range(lo..=hi)
        })
        .collect()
}
