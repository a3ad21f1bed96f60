use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wandering"));
    c.env_remove("WANDERING_OUT");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wandering-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path) -> Output {
    bin().arg("run").arg(config).arg("--out").arg(out).output().unwrap()
}

const THICKNESS: &str = r#"
kind = "thickness"
[model]
N = 6
delta = "1/100"
"#;

const HENON: &str = r#"
kind = "henon-scan"
[henon]
x_range = [-1.5, 0.75]
y_range = [-0.25, 1.25]
nx = 23
ny = 17
steps = 500
"#;

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = scratch("malformed");
    let out = dir.join("out");
    for (name, text) in [("syntax.toml", "kind = \n"), ("field.toml", "kind = \"thickness\"\nbogus = 1\n"), ("range.toml", "kind = \"selection\"\n[model]\nN = 6\ndelta = \"1/0\"\n[selection]\nbeta = 3.0\n")] {
        let cfg = write(&dir, name, text);
        let o = run(&cfg, &out);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(!out.exists(), "{name} left artifacts");
    }
}

#[test]
fn validation_lists_every_violation() {
    let dir = scratch("violations");
    let cfg = write(&dir, "v.toml", "kind = \"selection\"\n[model]\nN = 6\ndelta = \"1/1000000000\"\nbackend = \"float\"\n[selection]\nbeta = 3.0\ndelta0 = 2.0\n");
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["selection.beta", "selection.delta0", "model.backend"] {
        assert!(err.contains(field), "missing {field} in {err}");
    }
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = scratch("validate");
    let cfg = write(&dir, "t.toml", THICKNESS);
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(!dir.join("out").exists());
}

#[test]
fn thickness_scenario_passes_and_embeds_config() {
    let dir = scratch("thickness");
    let out = dir.join("out");
    let o = run(&write(&dir, "t.toml", THICKNESS), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["backend"], "rational");
    assert_eq!(report["config"]["model"]["delta"], "1/100");
    assert!(out.join("intervals.csv").exists() && out.join("cantor.svg").exists());
}

#[test]
fn json_config_is_accepted() {
    let dir = scratch("json");
    let cfg = write(&dir, "t.json", r#"{"kind": "historic", "historic": {"blocks": 5}}"#);
    let o = run(&cfg, &dir.join("out"));
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reports_are_byte_identical() {
    let dir = scratch("determinism");
    let cfg = write(&dir, "g.toml", "kind = \"gap\"\nseed = 11\n[model]\nN = 6\ndelta = \"1/10000\"\n[gap]\nstable_depth = 4\nunstable_depth = 3\nsamples = 20\n");
    let a = run(&cfg, &dir.join("a"));
    let b = run(&cfg, &dir.join("b"));
    assert_eq!(a.status.code(), b.status.code());
    let ra = std::fs::read(dir.join("a/report.json")).unwrap();
    let rb = std::fs::read(dir.join("b/report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn output_root_comes_from_environment() {
    let dir = scratch("env");
    let cfg = write(&dir, "h.toml", "kind = \"historic\"\noutput = \"hist\"\n");
    let o = bin().arg("run").arg(&cfg).env("WANDERING_OUT", dir.join("root")).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.join("root/hist/report.json").exists());
}

#[test]
fn empty_report_plots_nothing() {
    let dir = scratch("empty");
    let rep = write(&dir, "report.json", "{}");
    let o = bin().arg("plot").arg(&rep).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(&dir).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn heatmap_extent_matches_scan_bounds() {
    let dir = scratch("heatmap");
    let out = dir.join("out");
    run(&write(&dir, "h.toml", HENON), &out);
    let svg = std::fs::read_to_string(out.join("heatmap.svg")).unwrap();
    assert!(svg.contains(r#"data-x-min="-1.5" data-x-max="0.75" data-y-min="-0.25" data-y-max="1.25""#));
    assert_eq!(svg.matches("<rect").count(), 23 * 17 + 2);
}

#[test]
fn unknown_plot_kinds_are_skipped() {
    let dir = scratch("kinds");
    let out = dir.join("out");
    run(&write(&dir, "h.toml", HENON), &out);
    let again = dir.join("again");
    let o = bin().arg("plot").arg(out.join("report.json")).arg("--kinds").arg("heatmap,bogus,cantor").arg("--out").arg(&again).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bogus: unknown kind") && err.contains("cantor: not available"));
    assert!(again.join("heatmap.svg").exists());
    assert_eq!(std::fs::read_dir(&again).unwrap().count(), 1);
}

#[test]
fn missing_report_is_a_usage_error() {
    let o = bin().arg("plot").arg("/nonexistent/report.json").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn renorm_report_gives_one_overlay_per_block() {
    let dir = scratch("renorm");
    let out = dir.join("out");
    let cfg = "kind = \"renorm-verify\"\n[model]\nN = 6\ndelta = \"1/100\"\nmargin = 0.05\n[selection]\nmax_steps = 3\nmin_steps = 1\n[renorm]\nexpect_blocking = \"(iii)\"\n";
    let o = run(&write(&dir, "r.toml", cfg), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let with_map = report["data"]["renorm"]["blocks"].as_array().unwrap().iter().filter(|b| !b["map"].is_null()).count();
    let svgs = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("renorm_")).count();
    assert!(with_map > 0);
    assert_eq!(svgs, with_map);
}
