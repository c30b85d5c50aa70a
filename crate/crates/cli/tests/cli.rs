use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use vasiplab::decay::{check_decay, DecayKind, DecayRequest};
use vasiplab::maps::MapSchedule;
use vasiplab::observable::Observable;
use vasiplab::params::{check_constraint_chain, clt_gamma1, vasip_gamma};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn vasiplab(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vasiplab"));
    c.args(args).env_remove("VASIPLAB_WORKERS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn params_reference_point_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = vasiplab(&["params", "--alpha", "0.25", "--d", "1", "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let got = read_json(&out.join("params.json"));
    assert!((got["params"]["gamma_inf"].as_f64().unwrap() - 426.0 / 427.0).abs() < 1e-12);

    let p = vasip_gamma(0.25, 1, 1e-4).unwrap();
    let expected = json!({
        "params": p,
        "constraints": check_constraint_chain(&p),
        "clt_gamma1": clt_gamma1(0.25).unwrap(),
    });
    assert_eq!(got, expected);
    let csv = std::fs::read_to_string(out.join("constraints.csv")).unwrap();
    assert!(csv.starts_with("name,slack,status\n") && !csv.contains('\r'));
}

#[test]
fn decay_report_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schedule": { "kind": "constant", "beta": 0.25, "alpha_max": 0.3 },
        "observable": { "components": [ { "polynomial": [-0.5, 1.0] } ] },
        "decay": { "kind": "A4", "n_min": 5, "n_max": 60, "n_bins": 1024 }
    });
    let path = write_config(tmp.path(), "decay.json", &cfg);
    let out = tmp.path().join("d");
    let o = vasiplab(&["decay", "--config", &path, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let s = MapSchedule::constant(0.25, 0.3).unwrap();
    let r = check_decay(&s, &Observable::linear(1.0, -0.5), &DecayRequest::new(DecayKind::A4, 5, 60, 1024)).unwrap();
    assert_eq!(read_json(&out.join("decay.json")), serde_json::to_value(&r).unwrap());
    let csv = std::fs::read_to_string(out.join("decay.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + r.points.len());
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schedule": { "kind": "periodic", "betas": [0.1, 0.25], "alpha_max": 0.3 },
        "observable": { "components": [ { "polynomial": [-0.5, 1.0] } ] },
        "seed": 9,
        "simulate": { "orbits": 16, "n": 200 },
        "clt": { "checkpoints": [100, 1000], "orbits": 500 }
    });
    let path = write_config(tmp.path(), "c.json", &cfg);
    for cmd in ["simulate", "clt"] {
        let runs: Vec<PathBuf> = [("1", "a"), ("4", "b")]
            .iter()
            .map(|(w, name)| {
                let out = tmp.path().join(format!("{cmd}_{name}"));
                let o = vasiplab(&["--workers", w, cmd, "--config", &path, "--out", out.to_str().unwrap()], &[]);
                assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
                out
            })
            .collect();
        let env_out = tmp.path().join(format!("{cmd}_env"));
        let o = vasiplab(&[cmd, "--config", &path, "--out", env_out.to_str().unwrap()], &[("VASIPLAB_WORKERS", "3")]);
        assert!(matches!(o.status.code(), Some(0 | 1)));
        for entry in std::fs::read_dir(&runs[0]).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(runs[0].join(&name)).unwrap();
            assert_eq!(a, std::fs::read(runs[1].join(&name)).unwrap(), "{cmd}/{name:?}");
            assert_eq!(a, std::fs::read(env_out.join(&name)).unwrap(), "{cmd}/{name:?}");
        }
    }
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schedule": { "kind": "constant", "beta": 0.25, "alpha_max": 0.3 },
        "decay": { "kind": "A4", "n_min": 5, "n_max": 60, "n_bins": "many" }
    });
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let out = tmp.path().join("never");
    let o = vasiplab(&["decay", "--config", &path, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("decay.n_bins"));
    assert!(!out.exists());

    let o = vasiplab(&["decay", "--config", tmp.path().join("missing.json").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = vasiplab(&["params"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = vasiplab(&["params", "--alpha", "0.25"], &[("VASIPLAB_WORKERS", "0")]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(vasiplab(&["no-such-command"], &[]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "schedule": { "kind": "constant", "beta": 0.25, "alpha_max": 0.3 },
        "observable": { "components": [ { "polynomial": [-0.5, 1.0] } ] },
        "decay": { "kind": "A4", "n_min": 5, "n_max": 40, "n_bins": 512, "slack": -20.0 }
    });
    let path = write_config(tmp.path(), "fail.json", &cfg);
    let out = tmp.path().join("f");
    let o = vasiplab(&["decay", "--config", &path, "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_json(&out.join("decay.json"))["pass"], json!(false));
}

#[test]
fn shipped_configs_follow_the_schema() {
    let schema = read_json(&root().join("docs/config.schema.json"));
    let validator = jsonschema::draft202012::new(&schema).expect("schema compiles");
    let mut seen = 0;
    for entry in std::fs::read_dir(root().join("configs")).unwrap() {
        let p = entry.unwrap().path();
        let errors: Vec<String> = validator.iter_errors(&read_json(&p)).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
        seen += 1;
    }
    assert_eq!(seen, 12);
    let bad = json!({ "decay": { "kind": "A7", "n_min": 1, "n_max": 2, "n_bins": 4 }, "extra": 1 });
    assert!(!validator.is_valid(&bad));
}

#[test]
fn quick_shipped_configs_run() {
    let tmp = tempfile::tempdir().unwrap();
    for (cmd, files) in [
        ("simulate", &["simulate.json", "orbits.csv"][..]),
        ("blocks", &["blocks.json", "blocks.csv"]),
        ("params", &["params.json", "constraints.csv"]),
        ("split", &["split.json", "split.csv"]),
        ("ulam", &["ulam.json", "density.csv"]),
    ] {
        let out = tmp.path().join(cmd);
        let cfg = root().join("configs").join(format!("{cmd}.json"));
        let o = vasiplab(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        for f in files {
            let body = std::fs::read_to_string(out.join(f)).unwrap();
            assert!(!body.is_empty() && body.ends_with('\n'), "{cmd}/{f}");
        }
    }
    let ulam = read_json(&tmp.path().join("ulam/ulam.json"));
    let gk = ulam["green_kubo"]["sigma2"][0][0].as_f64().unwrap();
    assert!((gk - 0.25).abs() < 0.005, "{gk}");
}
