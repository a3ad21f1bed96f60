//! Scenario files: TOML, with JSON as fallback.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use wandering::model::{build_model, ModelParams};
use wandering::numeric::parse_rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ModelBuild,
    Thickness,
    Gap,
    Selection,
    RenormVerify,
    HenonScan,
    Emergence,
    Historic,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::ModelBuild => "model-build",
            Kind::Thickness => "thickness",
            Kind::Gap => "gap",
            Kind::Selection => "selection",
            Kind::RenormVerify => "renorm-verify",
            Kind::HenonScan => "henon-scan",
            Kind::Emergence => "emergence",
            Kind::Historic => "historic",
        }
    }

    fn needs_model(self) -> bool {
        matches!(self, Kind::ModelBuild | Kind::Thickness | Kind::Gap | Kind::Selection | Kind::RenormVerify)
    }

    /// Kinds that construct the full model, not just its parameters.
    fn builds_model(self) -> bool {
        matches!(self, Kind::ModelBuild | Kind::Selection | Kind::RenormVerify)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Float,
    #[default]
    Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(alias = "N")]
    pub n: usize,
    /// Exact rational, e.g. `"1/100"` or `"1e-9"`.
    pub delta: String,
    #[serde(default)]
    pub p: Option<Vec<String>>,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub backend: Backend,
}

impl ModelConfig {
    pub fn params(&self) -> anyhow::Result<ModelParams> {
        let mut params = ModelParams::new(self.n, parse_rational(&self.delta)?)?;
        if let Some(m) = self.margin {
            params = params.with_margin(m);
        }
        if let Some(p) = &self.p {
            let p = p.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>()?;
            params = params.with_p(p)?;
        }
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThicknessConfig {
    pub depth: usize,
    pub unstable_depth: usize,
    pub thickness_tol: f64,
    pub gap_tol: f64,
}

impl Default for ThicknessConfig {
    fn default() -> Self {
        ThicknessConfig { depth: 4, unstable_depth: 3, thickness_tol: 0.01, gap_tol: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapConfig {
    pub stable_depth: usize,
    pub unstable_depth: usize,
    pub samples: usize,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig { stable_depth: 6, unstable_depth: 6, samples: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub beta: f64,
    pub delta0: f64,
    pub eps: f64,
    pub max_steps: usize,
    pub min_steps: usize,
    pub tol: f64,
    /// Stop at the first failed width sandwich.
    pub strict: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { beta: 1.5, delta0: 0.05, eps: 0.1, max_steps: 6, min_steps: 4, tol: 1e-10, strict: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormSection {
    pub threshold: f64,
    pub margin: f64,
    pub grid: usize,
    pub box_half: f64,
    pub horizon: usize,
    /// Blocks followed by the wandering cloud.
    pub wander_blocks: usize,
    /// When set, the run passes iff this item blocks every block.
    pub expect_blocking: Option<String>,
}

impl Default for RenormSection {
    fn default() -> Self {
        RenormSection { threshold: 0.1, margin: 0.05, grid: 21, box_half: 0.3, horizon: 40, wander_blocks: 3, expect_blocking: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HenonConfig {
    pub b: f64,
    pub p: [f64; 5],
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nx: usize,
    pub ny: usize,
    pub steps: usize,
    pub escape_radius: f64,
    /// Slab scan over `b` and the constant perturbation `p₀`.
    pub slab_b: Vec<f64>,
    pub slab_p0: Vec<f64>,
    pub slab_grid: usize,
    pub require_bounded: bool,
}

impl Default for HenonConfig {
    fn default() -> Self {
        HenonConfig {
            b: 0.0,
            p: [0.0; 5],
            x_range: (-1.2, 1.2),
            y_range: (-1.2, 1.2),
            nx: 101,
            ny: 101,
            steps: 10_000,
            escape_radius: 100.0,
            slab_b: vec![],
            slab_p0: vec![0.0],
            slab_grid: 41,
            require_bounded: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmergenceConfig {
    pub alphabet: u16,
    pub max_period: usize,
    pub horizon: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub points: usize,
    pub slope_range: (f64, f64),
}

impl Default for EmergenceConfig {
    fn default() -> Self {
        EmergenceConfig { alphabet: 2, max_period: 12, horizon: 16, eps_min: 2f64.powi(-8), eps_max: 2f64.powi(-3), points: 11, slope_range: (0.5, 1.5) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistoricConfig {
    /// Lengths of the first two constant blocks.
    pub first_block: usize,
    /// Each block is `growth` times the length of everything before it.
    pub growth: f64,
    pub blocks: usize,
    pub horizon: usize,
    pub amplitude_min: f64,
    pub expect_historic: bool,
}

impl Default for HistoricConfig {
    fn default() -> Self {
        HistoricConfig { first_block: 8, growth: 2.0, blocks: 6, horizon: 8, amplitude_min: 1e-2, expect_historic: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the output root.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub thickness: ThicknessConfig,
    #[serde(default)]
    pub gap: GapConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub renorm: RenormSection,
    #[serde(default)]
    pub henon: HenonConfig,
    #[serde(default)]
    pub emergence: EmergenceConfig,
    #[serde(default)]
    pub historic: HistoricConfig,
}

/// Parses TOML, falling back to JSON.
pub fn parse(text: &str) -> anyhow::Result<Scenario> {
    match toml::from_str::<Scenario>(text) {
        Ok(s) => Ok(s),
        Err(toml_err) => serde_json::from_str::<Scenario>(text).map_err(|json_err| anyhow::anyhow!("not a valid scenario\n  as TOML: {toml_err}\n  as JSON: {json_err}")),
    }
}

pub fn load(path: &Path) -> anyhow::Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text)
}

fn positive(errs: &mut Vec<String>, field: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errs.push(format!("{field}: must be positive and finite, got {v}"));
    }
}

fn at_least(errs: &mut Vec<String>, field: &str, v: usize, min: usize) {
    if v < min {
        errs.push(format!("{field}: must be at least {min}, got {v}"));
    }
}

/// Every violated field of the schema for the scenario's kind.
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut errs = Vec::new();
    if s.kind.needs_model() {
        match &s.model {
            None => errs.push(format!("model: required for kind {}", s.kind.name())),
            Some(m) => {
                at_least(&mut errs, "model.n", m.n, 2);
                if let Err(e) = parse_rational(&m.delta) {
                    errs.push(format!("model.delta: {e}"));
                }
                if let Some(p) = &m.p {
                    if p.len() + 1 != m.n {
                        errs.push(format!("model.p: expected {} offsets, got {}", m.n.saturating_sub(1), p.len()));
                    }
                    for (i, v) in p.iter().enumerate() {
                        if let Err(e) = parse_rational(v) {
                            errs.push(format!("model.p[{i}]: {e}"));
                        }
                    }
                }
                if let Some(mg) = m.margin {
                    positive(&mut errs, "model.margin", mg);
                }
                if errs.is_empty() {
                    let built = if s.kind.builds_model() { m.params().and_then(|p| build_model(p).map(drop).map_err(Into::into)) } else { m.params().map(drop) };
                    if let Err(e) = built {
                        errs.push(format!("model: {e}"));
                    }
                }
            }
        }
    }
    match s.kind {
        Kind::ModelBuild => {}
        Kind::Thickness => {
            at_least(&mut errs, "thickness.depth", s.thickness.depth, 1);
            at_least(&mut errs, "thickness.unstable_depth", s.thickness.unstable_depth, 1);
            positive(&mut errs, "thickness.thickness_tol", s.thickness.thickness_tol);
            positive(&mut errs, "thickness.gap_tol", s.thickness.gap_tol);
        }
        Kind::Gap => {
            at_least(&mut errs, "gap.stable_depth", s.gap.stable_depth, 1);
            at_least(&mut errs, "gap.unstable_depth", s.gap.unstable_depth, 1);
            at_least(&mut errs, "gap.samples", s.gap.samples, 1);
        }
        Kind::Selection | Kind::RenormVerify => {
            let c = &s.selection;
            if !(c.beta > 1.0 && c.beta < 2.0) {
                errs.push(format!("selection.beta: must lie in (1, 2), got {}", c.beta));
            }
            if !(c.delta0 > 0.0 && c.delta0 < 1.0) {
                errs.push(format!("selection.delta0: must lie in (0, 1), got {}", c.delta0));
            }
            if !(c.eps > 0.0 && c.eps <= 1.0) {
                errs.push(format!("selection.eps: must lie in (0, 1], got {}", c.eps));
            }
            at_least(&mut errs, "selection.max_steps", c.max_steps, 1);
            if c.min_steps > c.max_steps {
                errs.push(format!("selection.min_steps: {} exceeds max_steps {}", c.min_steps, c.max_steps));
            }
            positive(&mut errs, "selection.tol", c.tol);
            if s.model.as_ref().is_some_and(|m| m.backend == Backend::Float) {
                errs.push(format!("model.backend: {} requires the rational backend", s.kind.name()));
            }
            if s.kind == Kind::RenormVerify {
                let r = &s.renorm;
                positive(&mut errs, "renorm.threshold", r.threshold);
                if !(r.margin >= 0.0 && r.margin < 1.0) {
                    errs.push(format!("renorm.margin: must lie in [0, 1), got {}", r.margin));
                }
                at_least(&mut errs, "renorm.grid", r.grid, 2);
                positive(&mut errs, "renorm.box_half", r.box_half);
                at_least(&mut errs, "renorm.horizon", r.horizon, 1);
                if let Some(b) = &r.expect_blocking {
                    if !["(i)", "(ii)", "(iii)", "inclusion"].contains(&b.as_str()) {
                        errs.push(format!("renorm.expect_blocking: unknown item {b:?}"));
                    }
                }
            }
        }
        Kind::HenonScan => {
            let h = &s.henon;
            at_least(&mut errs, "henon.nx", h.nx, 1);
            at_least(&mut errs, "henon.ny", h.ny, 1);
            at_least(&mut errs, "henon.steps", h.steps, 1);
            positive(&mut errs, "henon.escape_radius", h.escape_radius);
            if !(h.x_range.0 < h.x_range.1) {
                errs.push("henon.x_range: must be increasing".into());
            }
            if !(h.y_range.0 < h.y_range.1) {
                errs.push("henon.y_range: must be increasing".into());
            }
            if !h.slab_b.is_empty() {
                at_least(&mut errs, "henon.slab_grid", h.slab_grid, 1);
                if h.slab_p0.is_empty() {
                    errs.push("henon.slab_p0: must be nonempty when slab_b is set".into());
                }
            }
        }
        Kind::Emergence => {
            let e = &s.emergence;
            if e.alphabet < 2 {
                errs.push(format!("emergence.alphabet: must be at least 2, got {}", e.alphabet));
            }
            at_least(&mut errs, "emergence.max_period", e.max_period, 1);
            at_least(&mut errs, "emergence.horizon", e.horizon, 1);
            at_least(&mut errs, "emergence.points", e.points, 3);
            positive(&mut errs, "emergence.eps_min", e.eps_min);
            if !(e.eps_max > e.eps_min) {
                errs.push("emergence.eps_max: must exceed eps_min".into());
            }
            if !(e.slope_range.0 <= e.slope_range.1) {
                errs.push("emergence.slope_range: must be ordered".into());
            }
        }
        Kind::Historic => {
            let h = &s.historic;
            at_least(&mut errs, "historic.first_block", h.first_block, 1);
            at_least(&mut errs, "historic.blocks", h.blocks, 3);
            at_least(&mut errs, "historic.horizon", h.horizon, 1);
            positive(&mut errs, "historic.growth", h.growth);
            positive(&mut errs, "historic.amplitude_min", h.amplitude_min);
        }
    }
    errs
}

/// `$WANDERING_OUT` (default `out`) joined with the scenario's output directory.
pub fn output_dir(s: &Scenario, override_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = override_dir {
        return d.to_path_buf();
    }
    let root = std::env::var_os("WANDERING_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let leaf = s.output.clone().unwrap_or_else(|| s.kind.name().to_string());
    let leaf = PathBuf::from(leaf);
    if leaf.is_absolute() {
        leaf
    } else {
        root.join(leaf)
    }
}

/// Loads and validates; the error lists every violation.
pub fn load_valid(path: &Path) -> anyhow::Result<Scenario> {
    let s = load(path)?;
    let errs = validate(&s);
    if !errs.is_empty() {
        bail!("invalid scenario {}:\n  {}", path.display(), errs.join("\n  "));
    }
    Ok(s)
}
