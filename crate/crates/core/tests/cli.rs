use std::path::Path;
use std::process::{Command, Output};

fn nhdp(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nhdp"));
    cmd.args(args).env_remove("NHDP_SEED");
    if let Some(s) = seed_env {
        cmd.env("NHDP_SEED", s);
    }
    cmd.output().expect("spawn nhdp")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("error JSON on stderr")
}

fn fit_args<'a>(sim: &'a Path, out: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = [
        "fit",
        "--preset",
        "twogroup",
        "--data",
        p(&sim.join("data.csv")),
        "--grid",
        p(&sim.join("grid.csv")),
        "--sweeps",
        "120",
        "--chains",
        "2",
        "--out",
        p(out),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String], seed_env: Option<&str>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    nhdp(&refs, seed_env)
}

#[test]
fn simulate_fit_summarize_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = nhdp(
        &[
            "simulate",
            "--preset",
            "twogroup",
            "--seed",
            "4",
            "--subjects",
            "8",
            "--horizon",
            "12",
            "--out",
            p(&sim),
        ],
        None,
    );
    assert!(out.status.success());
    for f in ["grid.csv", "data.csv", "truth.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let fit = dir.path().join("fit");
    let out = run(&fit_args(&sim, &fit, &["--seed", "3"]), None);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["burnin"], 60);
    assert_eq!(manifest["traces"].as_array().unwrap().len(), 6);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // the resolved config reproduces the fit
    let again = dir.path().join("again");
    let out = nhdp(
        &[
            "fit",
            "--config",
            p(&fit.join("config.txt")),
            "--out",
            p(&again),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m2 = std::fs::read_to_string(again.join("manifest.json")).unwrap();
    assert_eq!(
        m2,
        std::fs::read_to_string(fit.join("manifest.json")).unwrap()
    );
    for c in 0..2 {
        for f in [
            format!("chain{c}_scalars.csv"),
            format!("chain{c}_z.csv"),
            format!("chain{c}_atoms.csv"),
        ] {
            assert_eq!(
                std::fs::read(fit.join(&f)).unwrap(),
                std::fs::read(again.join(&f)).unwrap()
            );
        }
    }

    let sum = dir.path().join("sum");
    let out = nhdp(
        &[
            "summarize",
            "--trace",
            p(&fit),
            "--out",
            p(&sum),
            "--interval",
            "9:11",
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "k_posterior.csv",
        "local_k_u.csv",
        "atom_curves.csv",
        "cocluster_9-11.csv",
    ] {
        assert!(sum.join(f).exists(), "{f}");
    }
    let head = std::fs::read_to_string(sum.join("atom_curves.csv")).unwrap();
    assert!(head.starts_with("slot,cluster,mean,q05,q95\n"));
    let total: f64 = std::fs::read_to_string(sum.join("k_posterior.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn seed_environment_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    nhdp(
        &[
            "simulate",
            "--preset",
            "twogroup",
            "--subjects",
            "4",
            "--horizon",
            "9",
            "--out",
            p(&sim),
        ],
        None,
    );
    let fit = dir.path().join("fit");
    let out = run(&fit_args(&sim, &fit, &["--seed", "3"]), Some("99"));
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    let out = run(&fit_args(&sim, &fit, &[]), Some("abc"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["key"], "NHDP_SEED");
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "preset = paperA\nkernel.omgea = 0.1\n").unwrap();
    let out = nhdp(&["fit", "--config", p(&cfg), "--out", p(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));
    let j = stderr_json(&out);
    assert_eq!(j["error"], "config");
    assert_eq!(j["key"], "kernel.omgea");
    assert!(j["message"].as_str().unwrap().contains("kernel.omgea"));

    let out = nhdp(
        &[
            "fit",
            "--preset",
            "paperA",
            "--data",
            "nope.csv",
            "--grid",
            "nope.csv",
            "--out",
            p(dir.path()),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "data");

    let out = nhdp(
        &[
            "summarize",
            "--trace",
            p(dir.path()),
            "--out",
            p(dir.path()),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));

    let out = nhdp(&["fit", "--frobnicate"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn moments_table() {
    let out = nhdp(
        &["moments", "--replicates", "2000", "--truncation", "200"],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "quantity,closed_form,monte_carlo,se,z");
    assert_eq!(lines.len(), 7);
    assert!(lines[4].starts_with("var_g_u,1.875"));
}
