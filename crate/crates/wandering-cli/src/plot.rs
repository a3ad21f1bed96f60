//! SVG plots rendered from a report's `data`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde_json::Value;

use crate::svg::Plot;

pub const KINDS: &[&str] = &["phase", "cantor", "residuals", "renorm", "heatmap", "emergence", "trajectory"];

/// Plot kinds that a report of `kind` can feed.
pub fn applicable(kind: &str) -> &'static [&'static str] {
    match kind {
        "model-build" => &["phase"],
        "thickness" => &["cantor"],
        "selection" => &["residuals"],
        "renorm-verify" => &["renorm", "residuals"],
        "henon-scan" => &["heatmap"],
        "emergence" => &["emergence"],
        "historic" => &["trajectory"],
        _ => &[],
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn pair(v: &Value) -> (f64, f64) {
    (f(&v[0]), f(&v[1]))
}

fn arr(v: &Value) -> &[Value] {
    v.as_array().map(Vec::as_slice).unwrap_or(&[])
}

fn phase(d: &Value) -> Vec<(String, String)> {
    let r = f(&d["r"]);
    let mut p = Plot::new("boxes, images and folds", (-1.05, 1.05), (-1.05, 1.05), "x", "y");
    for iv in arr(&d["intervals"]) {
        let (lo, hi) = pair(iv);
        p.rect((lo, hi), (-1.0, 1.0), "#1f77b4", "#aec7e8");
        p.rect((-1.0, 1.0), (r * lo, r * hi), "#d62728", "#ff9896");
    }
    for fold in arr(&d["folds"]) {
        let (h, y) = (f(&fold["x_half"]), pair(&fold["y_range"]));
        let off = f(&fold["offset"]);
        p.rect((-h, h), y, "#2ca02c", "#98df8a");
        let yc = 0.5 * (y.0 + y.1);
        let pts: Vec<(f64, f64)> = (0..=40).map(|k| -h + 2.0 * h * k as f64 / 40.0).map(|x| (x * x + yc + off, -r * x)).collect();
        p.polyline(&pts, "#2ca02c");
    }
    vec![("phase.svg".into(), p.render())]
}

fn cantor(d: &Value) -> Vec<(String, String)> {
    let iv: Vec<(f64, f64)> = arr(&d["intervals"]).iter().map(pair).collect();
    let (x, _) = Plot::extent(iv.iter().flat_map(|&(a, b)| [(a, 0.0), (b, 0.0)]));
    let mut p = Plot::new("stable Cantor set approximation", x, (0.0, 1.0), "x", "");
    for (a, b) in iv {
        p.rect((a, b), (0.3, 0.7), "#1f77b4", "#1f77b4");
    }
    vec![("cantor.svg".into(), p.render())]
}

fn residuals(d: &Value) -> Vec<(String, String)> {
    let rb = arr(&d["residual_bounds"]);
    let vals: Vec<(f64, f64)> = rb.iter().map(|r| (f(&r["i"]), f(&r["ln_value"]) / std::f64::consts::LN_10)).collect();
    let bounds: Vec<(f64, f64)> = rb.iter().map(|r| (f(&r["i"]), f(&r["ln_bound"]) / std::f64::consts::LN_10)).collect();
    if vals.is_empty() {
        return vec![];
    }
    let (x, y) = Plot::extent(vals.iter().chain(&bounds).copied());
    let mut p = Plot::new("tangency residuals at the final parameter", x, y, "pair index i", "log10 |V|");
    p.polyline(&bounds, "#7f7f7f");
    p.points(&vals, "#d62728", 3.0);
    vec![("residuals.svg".into(), p.render())]
}

fn renorm(d: &Value) -> Vec<(String, String)> {
    let a = f(&d["config"]["box_half"]);
    let grid = d["config"]["grid"].as_u64().unwrap_or(21) as usize;
    let mut out = Vec::new();
    for b in arr(&d["blocks"]) {
        let Some(map) = b.get("map").filter(|m| !m.is_null()) else { continue };
        let j = b["scales"]["j"].as_u64().unwrap_or(0);
        let ls = |v: &Value| {
            let sign = v["sign"].as_f64().unwrap_or(0.0);
            if sign == 0.0 {
                0.0
            } else {
                sign * v["ln"].as_f64().unwrap_or(f64::NEG_INFINITY).exp()
            }
        };
        let (shift, coef) = (ls(&map["shift"]), ls(&map["y_coef"]));
        let g = grid.max(2);
        let t = |k: usize| -a + 2.0 * a * k as f64 / (g - 1) as f64;
        let pre: Vec<(f64, f64)> = (0..g).flat_map(|i| (0..g).map(move |k| (t(i), t(k)))).collect();
        let img: Vec<(f64, f64)> = pre.iter().map(|&(x, y)| (x * x + 0.5 * y + shift, coef * x)).collect();
        let lim = 1.15 * a;
        let mut p = Plot::new(&format!("B_{j} (grey) and its image in the chart of B_{}", j + 1), (-lim, lim), (-lim, lim), "X", "Y");
        p.rect((-a, a), (-a, a), "#000000", "none");
        p.points(&pre, "#c7c7c7", 1.2);
        p.points(&img, "#d62728", 1.6);
        out.push((format!("renorm_{j}.svg"), p.render()));
    }
    out
}

fn heatmap(d: &Value) -> Vec<(String, String)> {
    let (nx, ny) = (d["nx"].as_u64().unwrap_or(0) as usize, d["ny"].as_u64().unwrap_or(0) as usize);
    let times: Vec<Option<f64>> = arr(&d["times"]).iter().map(Value::as_f64).collect();
    if nx == 0 || ny == 0 || times.len() != nx * ny {
        return vec![];
    }
    let vmax = times.iter().flatten().fold(1.0f64, |a, &b| a.max(b));
    let mut p = Plot::new("escape time (black: bounded)", pair(&d["x_range"]), pair(&d["y_range"]), "x", "y");
    p.heatmap(nx, ny, &times, vmax);
    vec![("heatmap.svg".into(), p.render())]
}

fn emergence(d: &Value) -> Vec<(String, String)> {
    let pts: Vec<(f64, f64)> = arr(&d["eps"])
        .iter()
        .zip(arr(&d["counts"]))
        .map(|(e, n)| (-f(e).ln(), f(n).ln().ln()))
        .filter(|p| p.1.is_finite())
        .collect();
    if pts.is_empty() {
        return vec![];
    }
    let (x, y) = Plot::extent(pts.iter().copied());
    let mut p = Plot::new("covering numbers of periodic measures", x, y, "−ln ε", "ln ln N(ε)");
    p.polyline(&pts, "#1f77b4");
    p.points(&pts, "#1f77b4", 3.0);
    vec![("emergence.svg".into(), p.render())]
}

fn trajectory(d: &Value) -> Vec<(String, String)> {
    let pts: Vec<(f64, f64)> = arr(&d["windows"]).iter().zip(arr(&d["consecutive"])).map(|(w, c)| (f(w).ln(), f(c))).collect();
    if pts.is_empty() {
        return vec![];
    }
    let (x, y) = Plot::extent(pts.iter().copied().chain([(pts[0].0, 0.0)]));
    let mut p = Plot::new("distance between consecutive empirical measures", x, y, "ln n", "d_W(e_n, e_next)");
    p.polyline(&pts, "#9467bd");
    p.points(&pts, "#9467bd", 3.0);
    vec![("trajectory.svg".into(), p.render())]
}

fn render(kind: &str, data: &Value) -> Vec<(String, String)> {
    match kind {
        "phase" => phase(data),
        "cantor" => cantor(data),
        "residuals" => residuals(data.get("selection").unwrap_or(data)),
        "renorm" => renorm(&data["renorm"]),
        "heatmap" => heatmap(data),
        "emergence" => emergence(data),
        "trajectory" => trajectory(data),
        _ => vec![],
    }
}

/// Writes the requested plots (all applicable ones when `kinds` is empty); returns the files
/// written and the kinds skipped, with reasons.
pub fn emit(report: &Value, kinds: &[String], dir: &Path) -> anyhow::Result<(Vec<PathBuf>, Vec<String>)> {
    let Some(kind) = report.get("kind").and_then(Value::as_str) else {
        return Ok((vec![], vec![]));
    };
    let data = match report.get("data") {
        Some(d) if !d.is_null() => d,
        _ => return Ok((vec![], vec![])),
    };
    let ok = applicable(kind);
    let wanted: Vec<String> = if kinds.is_empty() { ok.iter().map(|s| s.to_string()).collect() } else { kinds.to_vec() };
    let mut written = Vec::new();
    let mut skipped = Vec::new();
    for k in &wanted {
        if !KINDS.contains(&k.as_str()) {
            skipped.push(format!("{k}: unknown kind"));
            continue;
        }
        if !ok.contains(&k.as_str()) {
            skipped.push(format!("{k}: not available for {kind} reports"));
            continue;
        }
        for (name, svg) in render(k, data) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            std::fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
    }
    Ok((written, skipped))
}
