use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const MINKOWSKI: &str = r#"
name = "minkowski"
grid_level = 2
s_max = 3.0
t_levels = [-1.0]
s_levels = [0.5]
deltas = [0.5, 1.0]

[metric]
family = "minkowski"
cutoff = 2.0

[budget]
N0 = 1.0

[inclusion]
t_level = -1.0
eps = 0.01

[energy]
t_range = [0.0, 0.5]
slices = 3
nodes = 4
"#;

const TORUS: &str = r#"
name = "torus"
seed = 11
grid_level = 3
s_max = 3.0
t_levels = [-0.25]
deltas = [0.2]

[metric]
family = "flat_torus"
period = 1.0

[[base_points]]
t = 0.0
x = [0.5, 0.5, 0.5]
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn nullcone(args: &[&str], scenario: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nullcone"))
        .args(args)
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .env_remove("NULLCONE_WORKERS")
        .output()
        .unwrap()
}

fn report(path: PathBuf) -> Value {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["report"].clone()
}

#[test]
fn verify_minkowski_passes_every_asserted_check() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "m.toml", MINKOWSKI);
    let out = nullcone(&["verify"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = report(dir.path().join("verify/verify.json"));
    let rows = rows.as_array().unwrap();
    assert!(rows.len() > 10);
    for r in rows {
        assert!(!r["anchor"].as_str().unwrap().is_empty());
        if r["asserted"].as_bool().unwrap() {
            assert_eq!(r["status"], "pass", "{r}");
        }
    }
    let checks: Vec<&str> = rows.iter().map(|r| r["check"].as_str().unwrap()).collect();
    for c in ["null_residual", "injectivity_min_rule", "ball_inner", "ball_outer", "transport_phi", "flux_positivity", "gronwall"] {
        assert!(checks.contains(&c), "missing {c}");
    }
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert!(!manifest["wall_times"].as_array().unwrap().is_empty());
    assert!(manifest["verdicts"].as_array().unwrap().iter().all(|v| v["anchor"].is_string()));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "bad.toml", "name = \"x\"\n[metric]\nfamily = \"klein_bottle\"\n");
    assert_eq!(nullcone(&["trace"], &sc, dir.path()).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(nullcone(&["trace"], &missing, dir.path()).status.code(), Some(2));
}

#[test]
fn budget_failure_exits_three_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "steep"
grid_level = 1
s_max = 0.5

[metric]
family = "exponential"
rate = 1.0
interval = [-1.0, 1.0]

[budget]
K0 = 0.1
"#;
    let sc = write(dir.path(), "steep.toml", text);
    let out = nullcone(&["trace"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("trace/manifest.json").exists());
    let out = nullcone(&["trace", "--force"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("trace/rays_p0.csv").exists());
}

#[test]
fn flux_beyond_injectivity_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "t.toml", &TORUS.replace("deltas = [0.2]", "deltas = [0.2, 0.6]"));
    let out = nullcone(&["flux", "--grid-level", "2"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("injectivity"));
}

#[test]
fn torus_injectivity_reports_half_period() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "t.toml", TORUS);
    let out = nullcone(&["injectivity"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path().join("injectivity/injectivity.json"));
    let ell = r["rows"][0]["report"]["ell_star_t"].as_f64().unwrap();
    assert!((ell - 0.5).abs() < 0.01, "{ell}");
    assert_eq!(r["rows"][0]["report"]["s_star"]["beyond"].as_f64(), Some(3.0));
    let events = std::fs::read_to_string(dir.path().join("injectivity/events.csv")).unwrap();
    assert!(events.lines().count() > 1);
}

#[test]
fn reports_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "t.toml", &TORUS.replace("[[base_points]]", "[random_points]\ncount = 1\n\n[[base_points]]"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, w) in [(&a, "1"), (&b, "4")] {
        let o = nullcone(&["injectivity", "--grid-level", "2", "--workers", w], &sc, out);
        assert_eq!(o.status.code(), Some(0));
        let o = nullcone(&["flux", "--grid-level", "2", "--workers", w], &sc, out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["injectivity/injectivity.json", "injectivity/events.csv", "flux/flux.json", "flux/flux.csv", "flux/coefficients.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn json_scenarios_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"name": "cyl", "grid_level": 1, "s_max": 1.0, "s_levels": [0.5],
        "metric": {"family": "spherical_cylinder", "radius": 1.0, "cutoff": 2.0},
        "base_points": [{"t": 0.0, "x": [1.5707963267948966, 0.0, 0.0]}]}"#;
    let sc = write(dir.path(), "cyl.json", text);
    let out = nullcone(&["trace"], &sc, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path().join("trace/trace.json"));
    assert_eq!(r[0]["rays"].as_u64(), Some(42));
    assert!(dir.path().join("trace/slices_p0.json").exists());
}
