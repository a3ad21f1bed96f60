//! Empirical measures, exact Wasserstein-1 distance, covering numbers of measure
//! families, emergence-order estimation and historic-behavior detection.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linear_fit;
use crate::symbolic::truncation_distance;

/// Default cap on the combined support size of a transport problem.
pub const SOLVER_CAP: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricTag {
    Euclidean,
    Cylinder,
}

/// A support point: a point of the plane or a symbol truncation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Point {
    Plane([f64; 2]),
    Symbols(Vec<u16>),
}

impl Point {
    pub fn tag(&self) -> MetricTag {
        match self {
            Point::Plane(_) => MetricTag::Euclidean,
            Point::Symbols(_) => MetricTag::Cylinder,
        }
    }

    /// Ground distance; points of different kinds are at distance `∞`.
    pub fn distance(&self, other: &Point) -> f64 {
        match (self, other) {
            (Point::Plane(a), Point::Plane(b)) => (a[0] - b[0]).hypot(a[1] - b[1]),
            (Point::Symbols(a), Point::Symbols(b)) => truncation_distance(a, b),
            _ => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Key {
    Plane(u64, u64),
    Symbols(Vec<u16>),
}

fn key(p: &Point) -> Key {
    // +0.0 and -0.0 are the same point
    let bits = |v: f64| if v == 0.0 { 0 } else { v.to_bits() };
    match p {
        Point::Plane(a) => Key::Plane(bits(a[0]), bits(a[1])),
        Point::Symbols(s) => Key::Symbols(s.clone()),
    }
}

/// Finitely supported probability measure with deduplicated support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub support: Vec<Point>,
    pub weights: Vec<f64>,
    pub metric: MetricTag,
}

impl EmpiricalMeasure {
    /// Merges duplicate points and normalizes the weights.
    pub fn from_weighted(points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::EmptyMeasure);
        }
        let metric = points[0].tag();
        if points.iter().any(|p| p.tag() != metric) {
            return Err(Error::Precondition("mixed metric tags in one measure".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Precondition("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyMeasure);
        }
        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut support = Vec::new();
        let mut merged: Vec<f64> = Vec::new();
        for (p, w) in points.into_iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            match index.get(&key(&p)) {
                Some(&i) => merged[i] += w,
                None => {
                    index.insert(key(&p), support.len());
                    support.push(p);
                    merged.push(w);
                }
            }
        }
        let weights = merged.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalMeasure { support, weights, metric })
    }

    pub fn dirac(p: Point) -> Self {
        let metric = p.tag();
        EmpiricalMeasure { support: vec![p], weights: vec![1.0], metric }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weight at `p`, zero off the support.
    pub fn mass_at(&self, p: &Point) -> f64 {
        let k = key(p);
        self.support.iter().zip(&self.weights).filter(|(q, _)| key(q) == k).map(|(_, w)| *w).sum()
    }

    /// `t·self + (1−t)·other`.
    pub fn mix(&self, other: &EmpiricalMeasure, t: f64) -> Result<Self> {
        let mut pts = self.support.clone();
        pts.extend(other.support.iter().cloned());
        let mut w: Vec<f64> = self.weights.iter().map(|x| t * x).collect();
        w.extend(other.weights.iter().map(|x| (1.0 - t) * x));
        EmpiricalMeasure::from_weighted(pts, w)
    }

    /// Pushforward by a map of the plane.
    pub fn push_forward(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let pts = self
            .support
            .iter()
            .map(|p| match p {
                Point::Plane(z) => Ok(Point::Plane(f(*z))),
                Point::Symbols(_) => Err(Error::Precondition("pushforward needs plane points".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        EmpiricalMeasure::from_weighted(pts, self.weights.clone())
    }

    /// Distance band from symbol truncation, `2^{-horizon}`; zero for plane measures.
    pub fn truncation_band(&self) -> f64 {
        self.support
            .iter()
            .map(|p| match p {
                Point::Symbols(s) => 0.5f64.powi(s.len() as i32),
                Point::Plane(_) => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

/// `𝖾_n`: uniform weights on the first `n` orbit points.
pub fn empirical_measure(orbit: &[Point], n: usize) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::EmptyMeasure);
    }
    if n > orbit.len() {
        return Err(Error::Precondition(format!("n = {n} exceeds the orbit length {}", orbit.len())));
    }
    EmpiricalMeasure::from_weighted(orbit[..n].to_vec(), vec![1.0; n])
}

/// Optimal transport plan with its dual certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transport {
    pub cost: f64,
    /// `(i, j, mass)` triples of the plan.
    pub plan: Vec<(usize, usize, f64)>,
    /// Kantorovich potentials `u_i` on the first support, `v_j` on the second.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `max(u_i + v_j − d_ij, 0)`.
    pub dual_violation: f64,
    /// `|cost − (Σ a_i u_i + Σ b_j v_j)|`.
    pub duality_gap: f64,
}

const MASS_EPS: f64 = 1e-15;

/// Exact transport between two measures by successive shortest augmenting paths.
pub fn transport(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<Transport> {
    if mu.metric != nu.metric {
        return Err(Error::Precondition("metric tags differ".into()));
    }
    let (n, m) = (mu.len(), nu.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyMeasure);
    }
    if n + m > SOLVER_CAP {
        return Err(Error::Capacity(format!(
            "combined support {} exceeds {SOLVER_CAP}; subsample each measure to k points (error O(k^-1/2) for plane measures)",
            n + m
        )));
    }
    let cost: Vec<Vec<f64>> = mu.support.iter().map(|a| nu.support.iter().map(|b| a.distance(b)).collect()).collect();
    let mut supply = mu.weights.clone();
    let mut demand = nu.weights.clone();
    let excess = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    if excess.abs() > 1e-9 {
        return Err(Error::Precondition("measures have different total mass".into()));
    }
    let mut flow = vec![vec![0.0; m]; n];
    // nodes: 0..n sources, n..n+m sinks
    let v = n + m;
    loop {
        let active = supply.iter().any(|&s| s > MASS_EPS) && demand.iter().any(|&d| d > MASS_EPS);
        if !active {
            break;
        }
        let mut dist = vec![f64::INFINITY; v];
        let mut prev = vec![usize::MAX; v];
        let mut in_queue = vec![false; v];
        let mut queue = VecDeque::new();
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
                queue.push_back(i);
                in_queue[i] = true;
            }
        }
        while let Some(x) = queue.pop_front() {
            in_queue[x] = false;
            if x < n {
                for j in 0..m {
                    let nd = dist[x] + cost[x][j];
                    if nd < dist[n + j] - 1e-15 {
                        dist[n + j] = nd;
                        prev[n + j] = x;
                        if !in_queue[n + j] {
                            in_queue[n + j] = true;
                            queue.push_back(n + j);
                        }
                    }
                }
            } else {
                let j = x - n;
                for i in 0..n {
                    if flow[i][j] > MASS_EPS {
                        let nd = dist[x] - cost[i][j];
                        if nd < dist[i] - 1e-15 {
                            dist[i] = nd;
                            prev[i] = x;
                            if !in_queue[i] {
                                in_queue[i] = true;
                                queue.push_back(i);
                            }
                        }
                    }
                }
            }
        }
        let end = (0..m)
            .filter(|&j| demand[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .ok_or_else(|| Error::Degenerate("no augmenting path".into()))?;
        // bottleneck along the path
        let mut path = Vec::new();
        let mut x = n + end;
        while prev[x] != usize::MAX {
            path.push((prev[x], x));
            x = prev[x];
        }
        let start = x;
        let mut amount = supply[start].min(demand[end]);
        for &(a, b) in &path {
            if a >= n {
                amount = amount.min(flow[b][a - n]);
            }
        }
        for &(a, b) in &path {
            if a < n {
                flow[a][b - n] += amount;
            } else {
                flow[b][a - n] -= amount;
                if flow[b][a - n] < MASS_EPS {
                    flow[b][a - n] = 0.0;
                }
            }
        }
        supply[start] -= amount;
        demand[end] -= amount;
    }
    let mut total = 0.0;
    let mut plan = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > 0.0 {
                total += flow[i][j] * cost[i][j];
                plan.push((i, j, flow[i][j]));
            }
        }
    }
    // potentials: shortest distances on the final residual graph from a virtual root
    let mut d = vec![0.0; v];
    for _ in 0..v {
        let mut changed = false;
        for i in 0..n {
            for j in 0..m {
                if d[i] + cost[i][j] < d[n + j] - 1e-15 {
                    d[n + j] = d[i] + cost[i][j];
                    changed = true;
                }
                if flow[i][j] > 0.0 && d[n + j] - cost[i][j] < d[i] - 1e-15 {
                    d[i] = d[n + j] - cost[i][j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let u: Vec<f64> = (0..n).map(|i| -d[i]).collect();
    let vv: Vec<f64> = (0..m).map(|j| d[n + j]).collect();
    let mut viol = 0.0f64;
    for i in 0..n {
        for j in 0..m {
            viol = viol.max(u[i] + vv[j] - cost[i][j]);
        }
    }
    let dual: f64 = mu.weights.iter().zip(&u).map(|(a, x)| a * x).sum::<f64>() + nu.weights.iter().zip(&vv).map(|(b, y)| b * y).sum::<f64>();
    Ok(Transport { cost: total, plan, u, v: vv, dual_violation: viol.max(0.0), duality_gap: (total - dual).abs() })
}

/// Tree formula for the cylinder ultrametric on truncations of a common length.
fn ultrametric_w1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Option<f64> {
    let len = |p: &Point| match p {
        Point::Symbols(s) => Some(s.len()),
        Point::Plane(_) => None,
    };
    let h = len(&mu.support[0])?;
    if mu.support.iter().chain(&nu.support).any(|p| len(p) != Some(h)) {
        return None;
    }
    // signed leaves in lexicographic order; cylinders are contiguous runs
    let mut leaves: Vec<(&[u16], f64)> = Vec::with_capacity(mu.len() + nu.len());
    for (m, sign) in [(mu, 1.0), (nu, -1.0)] {
        for (p, w) in m.support.iter().zip(&m.weights) {
            if let Point::Symbols(s) = p {
                leaves.push((s.as_slice(), sign * w));
            }
        }
    }
    leaves.sort_by(|x, y| x.0.cmp(y.0));
    // edge into a depth-l cylinder weighs 2^{-(l+2)}, into a leaf 2^{-(h+1)}
    let mut total = 0.0;
    for l in 1..=h {
        let w = if l == h { 0.5f64.powi(h as i32 + 1) } else { 0.5f64.powi(l as i32 + 2) };
        let mut i = 0;
        while i < leaves.len() {
            let mut mass = 0.0;
            let mut j = i;
            while j < leaves.len() && leaves[j].0[..l] == leaves[i].0[..l] {
                mass += leaves[j].1;
                j += 1;
            }
            total += w * f64::abs(mass);
            i = j;
        }
    }
    Some(total)
}

/// Wasserstein-1 distance; the cylinder metric on equal-length truncations uses the tree formula.
pub fn wasserstein1(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.metric != nu.metric {
        return Err(Error::Precondition("metric tags differ".into()));
    }
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyMeasure);
    }
    // one orientation per pair, so the float result is symmetric
    let order = |m: &EmpiricalMeasure| (m.support.iter().map(key).collect::<Vec<_>>(), m.weights.iter().map(|w| w.to_bits()).collect::<Vec<_>>());
    let (mu, nu) = if order(mu) <= order(nu) { (mu, nu) } else { (nu, mu) };
    if mu.metric == MetricTag::Cylinder {
        if let Some(w) = ultrametric_w1(mu, nu) {
            return Ok(w);
        }
    }
    Ok(transport(mu, nu)?.cost)
}

/// Symmetric matrix of pairwise distances.
pub fn distance_matrix(measures: &[EmpiricalMeasure]) -> Result<Vec<Vec<f64>>> {
    let k = measures.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let w = wasserstein1(&measures[i], &measures[j])?;
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    Ok(d)
}

/// An ε-cover by members of the family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub count: usize,
    pub centers: Vec<usize>,
}

/// Farthest-point traversal order starting from index 0.
pub fn farthest_point_order(d: &[Vec<f64>]) -> Vec<usize> {
    let k = d.len();
    if k == 0 {
        return vec![];
    }
    let mut order = vec![0];
    let mut near: Vec<f64> = d[0].clone();
    let mut used = vec![false; k];
    used[0] = true;
    while order.len() < k {
        let next = (0..k).filter(|&i| !used[i]).max_by(|&a, &b| near[a].total_cmp(&near[b]).then(b.cmp(&a))).expect("unused index");
        used[next] = true;
        order.push(next);
        for i in 0..k {
            near[i] = near[i].min(d[next][i]);
        }
    }
    order
}

/// Greedy cover from a distance matrix: most-new-coverage centers, ties by farthest-point order, then pruning.
pub fn cover_from_matrix(d: &[Vec<f64>], eps: f64) -> Cover {
    let k = d.len();
    if k == 0 {
        return Cover { count: 0, centers: vec![] };
    }
    let order = farthest_point_order(d);
    let mut covered = vec![false; k];
    let mut gain: Vec<usize> = (0..k).map(|c| (0..k).filter(|&i| d[c][i] <= eps).count()).collect();
    let mut left = k;
    let mut centers = Vec::new();
    while left > 0 {
        let top = order.iter().map(|&c| gain[c]).max().expect("nonempty");
        let pick = order.iter().copied().find(|&c| gain[c] == top).expect("a center attains the maximum");
        for i in 0..k {
            if !covered[i] && d[pick][i] <= eps {
                covered[i] = true;
                left -= 1;
                for c in 0..k {
                    if d[c][i] <= eps {
                        gain[c] -= 1;
                    }
                }
            }
        }
        centers.push(pick);
    }
    // drop centers whose members are all covered by the others
    let mut multiplicity = vec![0usize; k];
    for &c in &centers {
        for x in 0..k {
            if d[c][x] <= eps {
                multiplicity[x] += 1;
            }
        }
    }
    let mut i = 0;
    while i < centers.len() {
        let c = centers[i];
        if (0..k).all(|x| d[c][x] > eps || multiplicity[x] >= 2) {
            for x in 0..k {
                if d[c][x] <= eps {
                    multiplicity[x] -= 1;
                }
            }
            centers.remove(i);
        } else {
            i += 1;
        }
    }
    Cover { count: centers.len(), centers }
}

/// Greedy ε-cover of a measure family by balls centered at members.
pub fn covering_number(measures: &[EmpiricalMeasure], eps: f64) -> Result<Cover> {
    if !(eps > 0.0) {
        return Err(Error::Precondition("ε must be positive".into()));
    }
    Ok(cover_from_matrix(&distance_matrix(measures)?, eps))
}

/// Exact minimum cover by members, by subset enumeration (small families only).
pub fn covering_number_exact(d: &[Vec<f64>], eps: f64) -> Result<usize> {
    let k = d.len();
    if k > 20 {
        return Err(Error::Capacity(format!("exact covering is limited to 20 measures, got {k}")));
    }
    if k == 0 {
        return Ok(0);
    }
    let balls: Vec<u32> = (0..k).map(|c| (0..k).filter(|&i| d[c][i] <= eps).fold(0u32, |m, i| m | (1 << i))).collect();
    let full = (1u32 << k) - 1;
    for size in 1..=k {
        let mut best = false;
        // enumerate subsets of the given size
        let mut sub: u32 = (1 << size) - 1;
        while sub <= full {
            let cover = (0..k).filter(|&c| sub >> c & 1 == 1).fold(0u32, |m, c| m | balls[c]);
            if cover == full {
                best = true;
                break;
            }
            let t = sub | (sub - 1);
            sub = (t + 1) | (((!t & (!t).wrapping_neg()) - 1) >> (sub.trailing_zeros() + 1));
            if sub == 0 {
                break;
            }
        }
        if best {
            return Ok(size);
        }
    }
    Ok(k)
}

/// Greedy covers along an increasing ε-grid, reusing a smaller cover when it is cheaper,
/// so the counts never increase.
pub fn covers_over_grid(d: &[Vec<f64>], grid: &[f64]) -> Result<Vec<Cover>> {
    let mut out: Vec<Cover> = Vec::with_capacity(grid.len());
    for (t, &e) in grid.iter().enumerate() {
        if !(e > 0.0) {
            return Err(Error::Precondition("ε must be positive".into()));
        }
        if t > 0 && e < grid[t - 1] {
            return Err(Error::Precondition("ε-grid must be increasing".into()));
        }
        let mut c = cover_from_matrix(d, e);
        // a cover at a smaller ε stays a cover
        if let Some(prev) = out.last() {
            if prev.count < c.count {
                c = prev.clone();
            }
        }
        out.push(c);
    }
    Ok(out)
}

/// Covering numbers over an ε-grid and the fitted emergence slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub eps: Vec<f64>,
    pub counts: Vec<usize>,
    pub centers: Vec<Vec<usize>>,
    /// Indices into `eps` used for the fit.
    pub window: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub family_size: usize,
}

/// `N(ε)` per grid point (nonincreasing by net reuse) and the least-squares slope of
/// `log log N` against `−log ε` over the window `2 ≤ N ≤ family/2`.
pub fn emergence_order(measures: &[EmpiricalMeasure], eps_grid: &[f64]) -> Result<CoveringReport> {
    let d = distance_matrix(measures)?;
    let mut grid: Vec<f64> = eps_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let covers = covers_over_grid(&d, &grid)?;
    let (counts, centers): (Vec<usize>, Vec<Vec<usize>>) = covers.into_iter().map(|c| (c.count, c.centers)).unzip();
    let family = measures.len();
    if counts.iter().all(|&c| c <= 1) {
        return Ok(CoveringReport { eps: grid, counts, centers, window: vec![], slope: 0.0, intercept: 0.0, r2: 1.0, family_size: family });
    }
    let window: Vec<usize> = (0..grid.len()).filter(|&t| counts[t] >= 2 && 2 * counts[t] <= family).collect();
    if window.len() < 3 {
        return Err(Error::Fit(format!("scaling window has {} points, need 3", window.len())));
    }
    let xs: Vec<f64> = window.iter().map(|&t| -grid[t].ln()).collect();
    let ys: Vec<f64> = window.iter().map(|&t| (counts[t] as f64).ln().ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys)?;
    Ok(CoveringReport { eps: grid, counts, centers, window, slope, intercept, r2, family_size: family })
}

/// Lyndon words over `k` letters of length at most `max_len`, in lexicographic order.
pub fn lyndon_words(k: u16, max_len: usize) -> Vec<Vec<u16>> {
    let mut out = Vec::new();
    if k == 0 || max_len == 0 {
        return out;
    }
    let mut w: Vec<u16> = vec![0];
    loop {
        out.push(w.clone());
        let len = w.len();
        while w.len() < max_len {
            let c = w[w.len() - len];
            w.push(c);
        }
        while let Some(&last) = w.last() {
            if last == k - 1 {
                w.pop();
            } else {
                break;
            }
        }
        match w.last_mut() {
            Some(l) => *l += 1,
            None => break,
        }
    }
    out
}

/// Periodic-orbit measures of the full `k`-shift with period at most `max_period`,
/// each shift point truncated at `horizon`.
pub fn periodic_measures(k: u16, max_period: usize, horizon: usize) -> Vec<EmpiricalMeasure> {
    lyndon_words(k, max_period)
        .into_iter()
        .map(|w| {
            let q = w.len();
            let pts: Vec<Point> = (0..q).map(|s| Point::Symbols((0..horizon).map(|i| w[(s + i) % q]).collect())).collect();
            EmpiricalMeasure::from_weighted(pts, vec![1.0; q]).expect("nonempty orbit")
        })
        .collect()
}

/// Finite-horizon verdict on the divergence of empirical measures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricReport {
    pub windows: Vec<usize>,
    /// `d_W(𝖾_{n_k}, 𝖾_{n_{k+1}})` for consecutive windows.
    pub consecutive: Vec<f64>,
    /// Largest pairwise distance among the late half of the windows.
    pub amplitude: f64,
    pub historic: bool,
    /// Always true: verdicts concern the sampled horizon only.
    pub finite_horizon: bool,
}

/// Geometric window schedule `⌈n₀·ratio^k⌉` up to `max`.
pub fn geometric_windows(n0: usize, ratio: f64, max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut k = 0;
    loop {
        let n = (n0 as f64 * ratio.powi(k)).ceil() as usize;
        if n > max {
            break;
        }
        if out.last() != Some(&n) {
            out.push(n);
        }
        k += 1;
    }
    out
}

/// Compares `𝖾_n` along a window schedule.
pub fn historic_detector(orbit: &[Point], windows: &[usize], amplitude_min: f64) -> Result<HistoricReport> {
    if windows.is_empty() {
        return Err(Error::Precondition("empty window schedule".into()));
    }
    if windows.iter().any(|&n| n > orbit.len()) {
        return Err(Error::Precondition("orbit shorter than the largest window".into()));
    }
    let measures = windows.iter().map(|&n| empirical_measure(orbit, n)).collect::<Result<Vec<_>>>()?;
    let consecutive = measures.windows(2).map(|w| wasserstein1(&w[0], &w[1])).collect::<Result<Vec<_>>>()?;
    let late = &measures[measures.len() / 2..];
    let mut amplitude = 0.0f64;
    for i in 0..late.len() {
        for j in i + 1..late.len() {
            amplitude = amplitude.max(wasserstein1(&late[i], &late[j])?);
        }
    }
    Ok(HistoricReport { windows: windows.to_vec(), consecutive, amplitude, historic: amplitude > amplitude_min, finite_horizon: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(x: f64, y: f64) -> Point {
        Point::Plane([x, y])
    }

    fn random_measure(rng: &mut ChaCha8Rng, k: usize) -> EmpiricalMeasure {
        let pts = (0..k).map(|_| plane(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let w = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        EmpiricalMeasure::from_weighted(pts, w).unwrap()
    }

    #[test]
    fn constant_orbit_is_dirac() {
        let orbit = vec![plane(1.0, 2.0); 5];
        let m = empirical_measure(&orbit, 5).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn period_two_merges() {
        let orbit: Vec<Point> = (0..4).map(|i| plane(i as f64 % 2.0, 0.0)).collect();
        let m = empirical_measure(&orbit, 4).unwrap();
        assert_eq!(m.weights, vec![0.5, 0.5]);
        assert!(matches!(empirical_measure(&orbit, 0), Err(Error::EmptyMeasure)));
    }

    #[test]
    fn doubling_window_is_average_of_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let orbit: Vec<Point> = (0..8).map(|_| plane(rng.gen_range(0..3) as f64, 0.0)).collect();
        let e8 = empirical_measure(&orbit, 8).unwrap();
        let first = empirical_measure(&orbit[..4], 4).unwrap();
        let second = empirical_measure(&orbit[4..], 4).unwrap();
        let avg = first.mix(&second, 0.5).unwrap();
        assert!(wasserstein1(&e8, &avg).unwrap() < 1e-15);
    }

    #[test]
    fn dirac_distance_is_ground_distance() {
        let a = EmpiricalMeasure::dirac(plane(0.0, 0.0));
        let b = EmpiricalMeasure::dirac(plane(3.0, 4.0));
        assert!((wasserstein1(&a, &b).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn half_mass_moves_half() {
        let mu = EmpiricalMeasure::from_weighted(vec![plane(0.0, 0.0), plane(1.0, 0.0)], vec![1.0, 1.0]).unwrap();
        let nu = EmpiricalMeasure::dirac(plane(0.0, 0.0));
        assert!((wasserstein1(&mu, &nu).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn transport_is_certified_by_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_measure(&mut rng, 7);
            let b = random_measure(&mut rng, 5);
            let t = transport(&a, &b).unwrap();
            assert!(t.dual_violation < 1e-9);
            assert!(t.duality_gap < 1e-9);
            let moved: f64 = t.plan.iter().map(|p| p.2).sum();
            assert!((moved - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn transport_matches_assignment_brute_force() {
        // uniform measures of equal size: optimum is a permutation
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = 4;
            let a: Vec<Point> = (0..k).map(|_| plane(rng.gen(), rng.gen())).collect();
            let b: Vec<Point> = (0..k).map(|_| plane(rng.gen(), rng.gen())).collect();
            let mu = EmpiricalMeasure::from_weighted(a.clone(), vec![1.0; k]).unwrap();
            let nu = EmpiricalMeasure::from_weighted(b.clone(), vec![1.0; k]).unwrap();
            let mut best = f64::INFINITY;
            let mut perm: Vec<usize> = (0..k).collect();
            permute(&mut perm, 0, &mut |p| {
                let c: f64 = (0..k).map(|i| a[i].distance(&b[p[i]])).sum::<f64>() / k as f64;
                best = best.min(c);
            });
            assert!((wasserstein1(&mu, &nu).unwrap() - best).abs() < 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, i: usize, f: &mut dyn FnMut(&[usize])) {
        if i == p.len() {
            f(p);
            return;
        }
        for j in i..p.len() {
            p.swap(i, j);
            permute(p, i + 1, f);
            p.swap(i, j);
        }
    }

    #[test]
    fn ultrametric_formula_matches_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let mk = |rng: &mut ChaCha8Rng| {
                let pts: Vec<Point> = (0..6).map(|_| Point::Symbols((0..5).map(|_| rng.gen_range(0..2)).collect())).collect();
                let w: Vec<f64> = (0..6).map(|_| rng.gen_range(0.1..1.0)).collect();
                EmpiricalMeasure::from_weighted(pts, w).unwrap()
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let tree = ultrametric_w1(&a, &b).unwrap();
            let flow = transport(&a, &b).unwrap().cost;
            assert!((tree - flow).abs() < 1e-12, "{tree} vs {flow}");
        }
    }

    #[test]
    fn capacity_is_enforced() {
        let pts: Vec<Point> = (0..SOLVER_CAP).map(|i| plane(i as f64, 0.0)).collect();
        let a = EmpiricalMeasure::from_weighted(pts.clone(), vec![1.0; SOLVER_CAP]).unwrap();
        let b = EmpiricalMeasure::dirac(plane(0.5, 0.0));
        assert!(matches!(transport(&a, &b), Err(Error::Capacity(_))));
    }

    #[test]
    fn separated_diracs_need_one_ball_each() {
        let ms: Vec<EmpiricalMeasure> = (0..5).map(|i| EmpiricalMeasure::dirac(plane(i as f64, 0.0))).collect();
        assert_eq!(covering_number(&ms, 0.4).unwrap().count, 5);
        assert_eq!(covering_number(&ms[..1], 0.4).unwrap().count, 1);
        // greedy takes the middle point first; the optimum {1, 3} needs only 2
        assert_eq!(covering_number(&ms, 1.0).unwrap().count, 3);
    }

    #[test]
    fn exact_cover_small_cases() {
        let ms: Vec<EmpiricalMeasure> = (0..5).map(|i| EmpiricalMeasure::dirac(plane(i as f64, 0.0))).collect();
        let d = distance_matrix(&ms).unwrap();
        assert_eq!(covering_number_exact(&d, 1.0).unwrap(), 2);
        assert_eq!(covering_number_exact(&d, 2.0).unwrap(), 1);
        assert_eq!(covering_number_exact(&d, 0.5).unwrap(), 5);
    }

    #[test]
    fn lyndon_counts() {
        let counts: Vec<usize> = (1..=6).map(|q| lyndon_words(2, 6).iter().filter(|w| w.len() == q).count()).collect();
        assert_eq!(counts, vec![2, 1, 2, 3, 6, 9]);
    }

    #[test]
    fn single_measure_family_has_slope_zero() {
        let ms = vec![EmpiricalMeasure::dirac(plane(0.0, 0.0))];
        let r = emergence_order(&ms, &[0.1, 0.2, 0.4]).unwrap();
        assert_eq!(r.slope, 0.0);
    }

    #[test]
    fn periodic_orbit_is_not_historic() {
        let orbit: Vec<Point> = (0..3000).map(|i| plane((i % 3) as f64, 0.0)).collect();
        let w = geometric_windows(30, 1.5, 3000);
        let r = historic_detector(&orbit, &w, 1e-2).unwrap();
        assert!(!r.historic);
        assert!(r.consecutive.last().unwrap() < &r.consecutive[0].max(1e-3));
    }

    #[test]
    fn doubling_blocks_are_historic() {
        let mut orbit = Vec::new();
        let mut ends = Vec::new();
        for k in 0..12 {
            let x = if k % 2 == 0 { 0.0 } else { 3.0 };
            orbit.extend(std::iter::repeat(plane(x, 0.0)).take(1 << k));
            ends.push(orbit.len());
        }
        let r = historic_detector(&orbit, &ends, 1e-3).unwrap();
        assert!(r.historic);
        assert!(r.amplitude >= 1.0 - 1e-9);
    }
}
