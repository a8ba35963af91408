use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idset-mc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("IDSET_MC_THREADS")
        .output()
        .expect("spawn idset-mc")
}

fn ok(args: &[&str], out: &Path) {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn error_json(o: &Output) -> Value {
    serde_json::from_slice(o.stderr.trim_ascii()).expect("stderr is one JSON object")
}

fn cs_json(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("cs.json")).unwrap()).unwrap()
}

fn intervals(cs: &Value, kind: &str) -> Vec<(f64, f64, f64)> {
    cs["sets"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["kind"] == kind)
        .map(|s| (s["level"].as_f64().unwrap(), s["lo"].as_f64().unwrap(), s["hi"].as_f64().unwrap()))
        .collect()
}

#[test]
fn sample_writes_one_row_per_particle_deterministically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["sample", "--model", "missing-data-flat", "--n", "1000", "--eta2", "0.8", "--B", "500", "--seed", "7"];
    ok(&args, a.path());
    ok(&args, b.path());
    let particles = std::fs::read_to_string(a.path().join("particles.csv")).unwrap();
    let mut lines = particles.lines();
    assert_eq!(lines.next().unwrap(), "b,weight,mu,eta1,eta2,logL");
    assert_eq!(lines.count(), 500);
    for f in ["particles.csv", "diagnostics.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let diag = std::fs::read_to_string(a.path().join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("stage,phi,ess,sigma,accept_rate,logZ_increment"));
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["sample", "--B", "300", "--threads", "1"], a.path());
    ok(&["sample", "--B", "300", "--threads", "3"], b.path());
    assert_eq!(
        std::fs::read(a.path().join("particles.csv")).unwrap(),
        std::fs::read(b.path().join("particles.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2_with_json() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["sample", "--B", "1"],
        vec!["sample", "--set", "bogus=1"],
        vec!["sample", "--set", "smc.bogus=1"],
        vec!["cs", "--set", "coord=[0, 1]"],
        vec!["cs", "--model", "no-such-model"],
        vec!["cs", "--levels", "1.5"],
        vec!["sample", "--not-a-flag"],
    ] {
        let o = run(&args, d.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let e = error_json(&o);
        assert_eq!(e["exit_code"], 2);
        assert!(e["message"].as_str().is_some_and(|m| !m.is_empty()));
    }
    assert!(!d.path().join("particles.csv").exists());
}

#[test]
fn vector_subvector_allowed_for_full_vector_sets() {
    let d = tempfile::tempdir().unwrap();
    ok(&["cs", "--B", "300", "--procedures", "procedure1", "--set", "coord=[0, 1]"], d.path());
    let cs = cs_json(d.path());
    assert_eq!(cs["sets"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_and_env_threads() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "model = \"missing-data-flat\"\nn = 500\nseed = 4\n[smc]\nparticles = 300\n[dgp]\neta2 = 0.9\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_idset-mc"))
        .args(["sample", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(d.path())
        .env("IDSET_MC_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(d.path().join("particles.csv")).unwrap().lines().count(), 301);

    std::fs::write(&cfg, "typo = 1\n").unwrap();
    let o = run(&["sample", "--config", cfg.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cs_intervals_nested_in_level() {
    let d = tempfile::tempdir().unwrap();
    ok(&["cs", "--eta2", "0.8", "--B", "2000", "--seed", "11", "--levels", "0.9,0.95,0.99"], d.path());
    let cs = cs_json(d.path());
    for kind in ["procedure2", "procedure3", "projection", "percentile"] {
        let iv = intervals(&cs, kind);
        assert_eq!(iv.len(), 3, "{kind}");
        for w in iv.windows(2) {
            assert!(w[0].0 < w[1].0);
            assert!(w[1].1 <= w[0].1 + 1e-9 && w[0].2 <= w[1].2 + 1e-9, "{kind}: {w:?}");
        }
    }
}

#[test]
fn resolved_config_reproduces_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["cs", "--model", "uniform-support", "--B", "500", "--seed", "2", "--levels", "0.9"], a.path());
    let resolved = a.path().join("config.toml");
    ok(&["cs", "--config", resolved.to_str().unwrap()], b.path());
    assert_eq!(std::fs::read(a.path().join("cs.json")).unwrap(), std::fs::read(b.path().join("cs.json")).unwrap());
    assert_eq!(std::fs::read(&resolved).unwrap(), std::fs::read(b.path().join("config.toml")).unwrap());
}

#[test]
fn moment_inequality_procedure2_matches_closed_form() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &["cs", "--model", "moment-inequality", "--n", "1000", "--B", "5000", "--seed", "5", "--procedures", "procedure2", "--levels", "0.9,0.95"],
        d.path(),
    );
    let cs = cs_json(d.path());
    let xbar = cs["theta_hat"][0].as_f64().unwrap() * 2.0;
    let v = 1000f64.sqrt() * xbar;
    assert!(v > 0.0);
    for (level, lo, hi) in intervals(&cs, "procedure2") {
        // posterior quantile of the profile QLR is Φ⁻¹(1 − level)² when Φ(v) ≈ 1
        let q = idset_core::stats::normal_inv(1.0 - level).unwrap().powi(2);
        let expected_hi = xbar + (q / 1000.0).sqrt();
        assert!(lo.abs() < 1e-9, "{lo}");
        assert!((hi - expected_hi).abs() < 0.01, "level {level}: {hi} vs {expected_hi}");
    }
}

#[test]
fn entry_game_intervals_contain_plug_in() {
    let d = tempfile::tempdir().unwrap();
    ok(
        &["cs", "--model", "entry-game", "--n", "1000", "--B", "200", "--seed", "1", "--procedures", "procedure2,procedure3", "--levels", "0.9"],
        d.path(),
    );
    let cs = cs_json(d.path());
    assert_eq!(cs["coord"], 2);
    let plug_in = cs["theta_hat"][2].as_f64().unwrap();
    for kind in ["procedure2", "procedure3"] {
        let (_, lo, hi) = intervals(&cs, kind)[0];
        assert!(lo <= plug_in && plug_in <= hi, "{kind}: {plug_in} not in [{lo}, {hi}]");
    }
}

#[test]
fn coverage_respects_procedure_filter() {
    let d = tempfile::tempdir().unwrap();
    ok(&["coverage", "--eta2", "0.8", "--B", "300", "--replications", "3", "--procedures", "percentile", "--levels", "0.9"], d.path());
    let table = std::fs::read_to_string(d.path().join("coverage.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "procedure,n,level,dgp,coverage,mcse,mean_lo,mean_hi,excluded");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("percentile,1000,0.9,"));
    let manifest: Value = serde_json::from_slice(&std::fs::read(d.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["replications"], 3);
}

#[test]
fn qq_has_99_rows() {
    let d = tempfile::tempdir().unwrap();
    ok(&["qq", "--eta2", "0.8", "--B", "500"], d.path());
    let qq = std::fs::read_to_string(d.path().join("qq.csv")).unwrap();
    assert_eq!(qq.lines().count(), 100);
    assert!(qq.starts_with("percentile,empirical,reference"));
}
