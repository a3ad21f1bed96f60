//! Scenario execution.

use std::fmt::Write as _;

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wandering::hyperbolic::{check_hyperbolic, ConeParams};
use wandering::model::cantor::{closed_form_gap, closed_form_thickness, ifs, ifs_intervals, sample_offsets, thickness_of, unfolded_gap_verdicts};
use wandering::model::henon::{escape_scan, slab_scan};
use wandering::model::{build_model, cantor_approx, dissipation_margin, CantorSide, GapVerdict, HenonParams, ModelParams};
use wandering::numeric::rational_to_f64;
use wandering::renorm::{verify_chain, wandering_cloud, Chain, RenormConfig};
use wandering::selection::{run_selection, ScheduleParams, SelectionRun};
use wandering::stats::{emergence_order, historic_detector, periodic_measures, Point};

use crate::config::{Backend, Kind, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check { name: name.into(), pass, detail }
}

/// Everything a scenario produces besides the plots.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub data: Value,
    pub csv: Vec<(String, String)>,
    pub text: Option<String>,
}

/// The JSON report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub kind: Kind,
    pub seed: u64,
    pub backend: Backend,
    pub config: Scenario,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub error: Option<String>,
    pub data: Value,
}

pub fn execute(s: &Scenario) -> anyhow::Result<Outcome> {
    match s.kind {
        Kind::ModelBuild => model_build(s),
        Kind::Thickness => thickness(s),
        Kind::Gap => gap(s),
        Kind::Selection => selection(s),
        Kind::RenormVerify => renorm(s),
        Kind::HenonScan => henon(s),
        Kind::Emergence => emergence(s),
        Kind::Historic => historic(s),
    }
}

fn params(s: &Scenario) -> anyhow::Result<ModelParams> {
    s.model.as_ref().context("model section missing")?.params()
}

fn backend(s: &Scenario) -> Backend {
    s.model.as_ref().map(|m| m.backend).unwrap_or_default()
}

fn model_build(s: &Scenario) -> anyhow::Result<Outcome> {
    let params = params(s)?;
    let system = build_model(params.clone())?;
    let mut out = Outcome::default();
    for (j, g) in system.generators().iter().enumerate() {
        let rep = check_hyperbolic(&g.map, &g.region, &ConeParams::default(), 9);
        let det = g.map.jacobian(0.0, 0.0);
        let det = det[0][0] * det[1][1] - det[0][1] * det[1][0];
        out.checks.push(check(
            &format!("a{} hyperbolic", j + 1),
            rep.pass(),
            format!("boundary {:.3}, cones {:.3}, expansion {:.3}, det {det:.6e}", rep.boundary.worst, rep.cones.worst, rep.expansion.worst),
        ));
    }
    let intervals: Vec<[f64; 2]> = (1..=params.n).map(|j| params.interval(j)).map(|(a, b)| [rational_to_f64(&a), rational_to_f64(&b)]).collect();
    let folds: Vec<Value> = system
        .folds()
        .iter()
        .map(|f| json!({"source": f.source, "target": f.target, "x_half": f.x_half, "y_range": [f.y_range.0, f.y_range.1], "offset": f.offset}))
        .collect();
    out.data = json!({
        "n": params.n,
        "delta": params.delta.to_string(),
        "sqrt_delta": params.sqrt_delta.to_string(),
        "sqrt_exact": params.sqrt_exact,
        "s": params.s_f64(),
        "r": params.r_f64(),
        "p": params.p.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "intervals": intervals,
        "folds": folds,
        "dissipation_margin": dissipation_margin(&params, 0.1),
    });
    Ok(out)
}

fn max_gap<T: wandering::numeric::Real + PartialOrd>(iv: &[(T, T)]) -> Option<T> {
    iv.windows(2).map(|w| w[1].0.clone() - w[0].1.clone()).fold(None, |acc: Option<T>, g| match acc {
        Some(a) if a >= g => Some(a),
        _ => Some(g),
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn thickness(s: &Scenario) -> anyhow::Result<Outcome> {
    let params = params(s)?;
    let c = &s.thickness;
    let closed = closed_form_thickness(CantorSide::Stable, &params);
    let gap_closed = closed_form_gap(&params);
    let (brute, gap, intervals) = match backend(s) {
        Backend::Float => {
            let ks = cantor_approx(CantorSide::Stable, c.depth, &params)?;
            (ks.thickness, ks.largest_gap(), ks.intervals)
        }
        Backend::Rational => {
            let (slope, offs, hull) = ifs(CantorSide::Stable, &params);
            let iv = ifs_intervals(&slope, &offs, &hull, c.depth);
            let t = thickness_of(&iv).context("no bounded gap")?;
            let g = max_gap(&iv).context("no bounded gap")?;
            let ivf = iv.iter().map(|(a, b)| (rational_to_f64(a), rational_to_f64(b))).collect();
            (rational_to_f64(&t), rational_to_f64(&g), ivf)
        }
    };
    let mut out = Outcome::default();
    out.checks.push(check("stable thickness", rel(brute, closed) <= c.thickness_tol, format!("brute {brute:.6} vs closed form {closed:.6} (rel {:.3e})", rel(brute, closed))));
    out.checks.push(check("largest gap", rel(gap, gap_closed) <= c.gap_tol, format!("{gap:.6e} vs {gap_closed:.6e} (rel {:.3e})", rel(gap, gap_closed))));
    let unstable = match cantor_approx(CantorSide::Unstable, c.unstable_depth, &params) {
        Ok(ku) => json!({"depth": c.unstable_depth, "brute": ku.thickness, "closed_form": closed_form_thickness(CantorSide::Unstable, &params)}),
        Err(e) => json!({"depth": c.unstable_depth, "error": e.to_string()}),
    };
    let mut csv = String::from("lo,hi\n");
    for (a, b) in &intervals {
        let _ = writeln!(csv, "{a:.17e},{b:.17e}");
    }
    out.csv.push(("intervals.csv".into(), csv));
    out.data = json!({
        "depth": c.depth,
        "stable": {"brute": brute, "closed_form": closed, "largest_gap": gap, "gap_closed_form": gap_closed},
        "unstable": unstable,
        "intervals": intervals.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn gap(s: &Scenario) -> anyhow::Result<Outcome> {
    let params = params(s)?;
    let c = &s.gap;
    let ks = cantor_approx(CantorSide::Stable, c.stable_depth, &params)?;
    let ku = cantor_approx(CantorSide::Unstable, c.unstable_depth, &params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut csv = String::from("sample,fold,verdict\n");
    let mut failures = 0usize;
    for k in 0..c.samples {
        let p = sample_offsets(&params, &mut rng);
        for (j, v) in unfolded_gap_verdicts(&params, &ks, &ku, &p).into_iter().enumerate() {
            if v != GapVerdict::Intersect {
                failures += 1;
            }
            let _ = writeln!(csv, "{k},{},{v:?}", j + 1);
        }
    }
    let mut out = Outcome::default();
    let product = ks.thickness * ku.thickness;
    out.checks.push(check("every unfolded copy meets the stable set", failures == 0, format!("{failures} failures over {} samples × {} folds", c.samples, params.n - 1)));
    out.csv.push(("verdicts.csv".into(), csv));
    out.data = json!({
        "samples": c.samples,
        "failures": failures,
        "stable_thickness": ks.thickness,
        "unstable_thickness": ku.thickness,
        "thickness_product": product,
    });
    Ok(out)
}

fn schedule(s: &Scenario) -> anyhow::Result<ScheduleParams> {
    let c = &s.selection;
    let base = ScheduleParams::new(c.delta0)?;
    Ok(ScheduleParams::with(c.beta, c.delta0, c.eps, base.c1, base.l0)?)
}

fn letters(w: &[usize]) -> String {
    w.iter().map(|a| format!("a{}", a + 1)).collect()
}

fn run_chain(s: &Scenario) -> anyhow::Result<(ModelParams, ScheduleParams, SelectionRun)> {
    if backend(s) != Backend::Rational {
        bail!("selection runs on the rational backend only");
    }
    let params = params(s)?;
    let system = build_model(params.clone())?;
    let sched = schedule(s)?;
    let c = &s.selection;
    let run = run_selection(&system, None, &sched, c.max_steps, c.tol, c.strict)?;
    Ok((params, sched, run))
}

fn selection_checks(s: &Scenario, sched: &ScheduleParams, run: &SelectionRun) -> Vec<Check> {
    let certs = &run.state.certificates;
    let c = &s.selection;
    let sandwiches: Vec<_> = certs.iter().flat_map(|c| c.sandwiches.iter()).collect();
    let first_bad = sandwiches.iter().find(|w| !w.ok());
    vec![
        check("steps", run.state.step >= c.min_steps, format!("{} of at least {} (stop: {})", run.state.step, c.min_steps, run.stop_reason.as_deref().unwrap_or("none"))),
        check(
            "(C1) width sandwich",
            !sandwiches.is_empty() && first_bad.is_none(),
            match first_bad {
                Some(w) => format!("ln width {:.3} below ln δ^{:.3} = {:.3}", w.ln_w_min, sched.sandwich_exponent(), w.ln_lower),
                None => format!("{} words", sandwiches.len()),
            },
        ),
        check(
            "(C2) residuals",
            !certs.is_empty() && certs.iter().all(|c| c.residual_ok),
            format!("max {:.3e}", certs.iter().flat_map(|c| c.residuals.iter()).fold(0.0f64, |a, b| a.max(*b))),
        ),
        check("(C3) displacement", !certs.is_empty() && certs.iter().all(|c| c.displacement_ok), format!("{} steps", certs.len())),
        check("one Newton step per solve", !certs.is_empty() && certs.iter().all(|c| c.newton_steps == 1), format!("{:?}", certs.iter().map(|c| c.newton_steps).collect::<Vec<_>>())),
        check("total displacement", run.total_displacement <= run.total_bound, format!("{:.3e} ≤ {:.3e}", run.total_displacement, run.total_bound)),
    ]
}

fn selection_data(sched: &ScheduleParams, run: &SelectionRun) -> Value {
    json!({
        "schedule": sched,
        "steps": run.state.step,
        "stop_reason": run.stop_reason,
        "words": run.state.words.iter().map(|w| letters(w.letters())).collect::<Vec<_>>(),
        "word_lengths": run.state.words.iter().map(|w| w.len()).collect::<Vec<_>>(),
        "folds": run.state.folds,
        "choices": run.state.choices,
        "p": run.state.p.iter().map(|q| q.to_string()).collect::<Vec<_>>(),
        "p_f64": run.state.p_f64(),
        "certificates": run.state.certificates,
        "total_displacement": run.total_displacement,
        "total_bound": run.total_bound,
        "residual_bounds": run.residual_bounds,
        "decay_fit": run.decay_fit,
    })
}

fn selection(s: &Scenario) -> anyhow::Result<Outcome> {
    let (_, sched, run) = run_chain(s)?;
    let mut out = Outcome { checks: selection_checks(s, &sched, &run), data: selection_data(&sched, &run), ..Default::default() };
    let mut csv = String::from("step,displacement,bound,newton_steps,max_residual,sandwich_ok\n");
    let mut txt = format!("selection: {} steps, stop reason: {}\n", run.state.step, run.stop_reason.as_deref().unwrap_or("none"));
    for c in &run.state.certificates {
        let maxr = c.residuals.iter().fold(0.0f64, |a, b| a.max(*b));
        let sw = c.sandwiches.iter().all(|w| w.ok());
        let _ = writeln!(csv, "{},{:.6e},{:.6e},{},{:.6e},{}", c.step, c.displacement, c.displacement_bound, c.newton_steps, maxr, sw);
        let _ = writeln!(txt, "step {}: |Δp| = {:.3e} (bound {:.3e}), Newton steps {}, max |V| = {:.3e}, sandwich {}", c.step, c.displacement, c.displacement_bound, c.newton_steps, maxr, if sw { "ok" } else { "FAIL" });
    }
    for (i, w) in run.state.words.iter().enumerate() {
        let _ = writeln!(txt, "c_{} ({} letters): {}", i + 1, w.len(), letters(w.letters()));
    }
    for c in &out.checks {
        let _ = writeln!(txt, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    out.csv.push(("certificates.csv".into(), csv));
    out.text = Some(txt);
    Ok(out)
}

fn renorm(s: &Scenario) -> anyhow::Result<Outcome> {
    let (params, sched, run) = run_chain(s)?;
    if run.state.words.is_empty() {
        bail!("selection produced no chain: {}", run.stop_reason.unwrap_or_default());
    }
    let r = &s.renorm;
    let cfg = RenormConfig { threshold: r.threshold, margin: r.margin, grid: r.grid, box_half: r.box_half, horizon: r.horizon };
    let chain = Chain::from_run(&params, &sched, &run)?;
    let rep = verify_chain(&chain, &cfg)?;
    let mut out = Outcome::default();
    let blocking = rep.blocking();
    let wander = match rep.start {
        Some(j) if j < chain.len() => {
            let blocks = r.wander_blocks.min(chain.len() - j);
            Some(wandering_cloud(&chain, j, blocks, &cfg)?)
        }
        _ => None,
    };
    match &r.expect_blocking {
        Some(item) => {
            let all = !rep.blocks.is_empty() && rep.blocks.iter().all(|b| b.failures().contains(&item.as_str()));
            out.checks.push(check(&format!("{item} blocks every block"), all, format!("{blocking:?}")));
        }
        None => {
            out.checks.push(check("block conditions and inclusion from J", rep.start.is_some(), format!("J = {:?}, blocked before: {blocking:?}", rep.start)));
            let id = rep.blocks.iter().filter_map(|b| b.gamma_identity_error).fold(0.0f64, f64::max);
            out.checks.push(check("γ² identity", id <= 1e-12, format!("max relative log error {id:.3e}")));
            out.checks.push(check("γ̆ upper bound", rep.sandwich_upper_ok(), "γ̆_j ≤ 2δ_j³".into()));
            let lower_detail = rep
                .blocks
                .iter()
                .find(|b| !b.lower_ok)
                .map(|b| {
                    let k = sched.sandwich_exponent();
                    format!("j = {}: ln γ̆ = {:.3} below ln 2 + {:.3}·ln δ_j = {:.3}", b.scales.j, b.scales.ln_gamma_breve, 3.0 * k, std::f64::consts::LN_2 + 3.0 * k * sched.ln_delta(b.scales.j))
                })
                .unwrap_or_else(|| "all blocks".into());
            out.checks.push(check("γ̆ lower bound", rep.sandwich_lower_ok(), lower_detail));
            match &wander {
                Some(w) => {
                    out.checks.push(check("itinerary", w.itinerary_ok, format!("{} steps, stop: {:?}", w.observed.len(), w.stop)));
                    out.checks.push(check("cloud shrinks within one block", w.first_block_ratio < 0.1 && w.decaying, format!("ratio {:.3e}, ln diameters {:?}", w.first_block_ratio, w.ln_diams)));
                    out.checks.push(check("no fold block revisited", w.no_revisit, format!("{:?}", w.fold_visits)));
                }
                None => out.checks.push(check("wandering cloud", false, "no verified block with a successor".into())),
            }
        }
    }
    let mut csv = String::from("j,len,ln_sigma,ln_gamma,ln_gamma_breve,ratio_i,ln_ratio_ii,ln_ratio_iii,inclusion_worst,closed_form_error,limit_distance\n");
    for b in &rep.blocks {
        let inc = b.inclusion.as_ref();
        let _ = writeln!(
            csv,
            "{},{},{:.10e},{:.10e},{:.10e},{:.6e},{:.6e},{:.6e},{},{},{}",
            b.scales.j,
            b.scales.len,
            b.scales.ln_sigma,
            b.scales.ln_gamma,
            b.scales.ln_gamma_breve,
            b.ratio_i,
            b.ln_ratio_ii,
            b.ln_ratio_iii,
            inc.map_or(String::new(), |i| format!("{:.6}", i.worst)),
            inc.map_or(String::new(), |i| format!("{:.3e}", i.closed_form_error)),
            b.limit_distance.map_or(String::new(), |d| format!("{d:.6e}")),
        );
    }
    out.csv.push(("boxes.csv".into(), csv));
    if let Some(w) = &wander {
        let mut csv = String::from("block,ln_diameter\n");
        for (k, d) in w.ln_diams.iter().enumerate() {
            let _ = writeln!(csv, "{},{d:.10e}", k + 1);
        }
        out.csv.push(("orbit.csv".into(), csv));
    }
    out.data = json!({
        "selection": selection_data(&sched, &run),
        "renorm": rep,
        "blocking": blocking,
        "wandering": wander,
    });
    Ok(out)
}

fn henon(s: &Scenario) -> anyhow::Result<Outcome> {
    let h = &s.henon;
    let params = HenonParams::new(h.b, h.p);
    let scan = escape_scan(&params, h.x_range, h.y_range, h.nx, h.ny, h.steps, h.escape_radius);
    let mut out = Outcome::default();
    let slab = slab_scan(&h.slab_b, &h.slab_p0, h.slab_grid, h.steps, h.escape_radius);
    if h.require_bounded {
        out.checks.push(check("bounded orbits in the scan", scan.bounded_count() > 0, format!("{} of {} cells", scan.bounded_count(), h.nx * h.ny)));
        if !slab.is_empty() {
            let total: usize = slab.iter().map(|p| p.bounded).sum();
            out.checks.push(check("bounded orbits in the slab", total > 0, format!("{total} bounded cells over {} parameters", slab.len())));
        }
    }
    let mut csv = String::from("x,y,escape_time\n");
    for iy in 0..h.ny {
        for ix in 0..h.nx {
            let [x, y] = scan.cell_center(ix, iy);
            let t = scan.times[iy * h.nx + ix].map_or(String::new(), |t| t.to_string());
            let _ = writeln!(csv, "{x:.10},{y:.10},{t}");
        }
    }
    out.csv.push(("escape.csv".into(), csv));
    if !slab.is_empty() {
        let mut csv = String::from("b,p0,bounded\n");
        for p in &slab {
            let _ = writeln!(csv, "{},{},{}", p.b, p.p0, p.bounded);
        }
        out.csv.push(("slab.csv".into(), csv));
    }
    out.data = json!({
        "params": params,
        "x_range": [h.x_range.0, h.x_range.1],
        "y_range": [h.y_range.0, h.y_range.1],
        "nx": h.nx,
        "ny": h.ny,
        "steps": h.steps,
        "escape_radius": h.escape_radius,
        "times": scan.times,
        "bounded": scan.bounded_count(),
        "slab": slab,
    });
    Ok(out)
}

/// Geometric grid of `n` points from `lo` to `hi`.
fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn emergence(s: &Scenario) -> anyhow::Result<Outcome> {
    let e = &s.emergence;
    let ms = periodic_measures(e.alphabet, e.max_period, e.horizon);
    let grid = geometric(e.eps_min, e.eps_max, e.points);
    let rep = emergence_order(&ms, &grid)?;
    let mut out = Outcome::default();
    let ok = rep.slope >= e.slope_range.0 && rep.slope <= e.slope_range.1;
    out.checks.push(check(
        "emergence slope",
        ok,
        format!("{:.4} (R² {:.3}) over {} measures, window {:?}, expected in [{}, {}]", rep.slope, rep.r2, rep.family_size, rep.window, e.slope_range.0, e.slope_range.1),
    ));
    let mut csv = String::from("eps,count\n");
    for (x, n) in rep.eps.iter().zip(&rep.counts) {
        let _ = writeln!(csv, "{x:.10e},{n}");
    }
    out.csv.push(("covering.csv".into(), csv));
    out.data = serde_json::to_value(&rep)?;
    Ok(out)
}

/// Alternating constant blocks `0^{L₁} 1^{L₂} 0^{L₃} …`, each longer than `growth` times all before it.
fn block_sequence(first: usize, growth: f64, blocks: usize) -> (Vec<u16>, Vec<usize>) {
    let mut seq = Vec::new();
    let mut ends = Vec::new();
    for k in 0..blocks {
        let len = if k < 2 { first } else { (growth * seq.len() as f64).ceil() as usize };
        seq.extend(std::iter::repeat((k % 2) as u16).take(len));
        ends.push(seq.len());
    }
    (seq, ends)
}

fn historic(s: &Scenario) -> anyhow::Result<Outcome> {
    let h = &s.historic;
    let (mut seq, ends) = block_sequence(h.first_block, h.growth, h.blocks);
    let n = seq.len();
    // the next block supplies the future of the last points
    let next = (h.blocks % 2) as u16;
    seq.extend(std::iter::repeat(next).take(h.horizon));
    let orbit: Vec<Point> = (0..n).map(|i| Point::Symbols(seq[i..i + h.horizon].to_vec())).collect();
    let rep = historic_detector(&orbit, &ends, h.amplitude_min)?;
    let mut out = Outcome::default();
    out.checks.push(check("historic verdict", rep.historic == h.expect_historic, format!("amplitude {:.4} vs threshold {} over {n} points (finite horizon)", rep.amplitude, h.amplitude_min)));
    let mut csv = String::from("window,distance_to_next\n");
    for (w, d) in rep.windows.iter().zip(&rep.consecutive) {
        let _ = writeln!(csv, "{w},{d:.10e}");
    }
    out.csv.push(("windows.csv".into(), csv));
    out.data = serde_json::to_value(&rep)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_lengths_grow() {
        let (seq, ends) = block_sequence(4, 2.0, 4);
        assert_eq!(ends, vec![4, 8, 24, 72]);
        assert_eq!(seq.len(), 72);
        assert_eq!(&seq[..9], &[0, 0, 0, 0, 1, 1, 1, 1, 0]);
    }

    #[test]
    fn geometric_grid_hits_ends() {
        let g = geometric(0.25, 4.0, 5);
        assert!((g[0] - 0.25).abs() < 1e-15 && (g[4] - 4.0).abs() < 1e-12 && (g[2] - 1.0).abs() < 1e-12);
    }
}
