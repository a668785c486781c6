//! Command line front end: outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use dsrc_ctl::oracle::SmallInstance;
use dsrc_ctl::{build_link_graph, ChannelModel, RateBounds, Scenario, UtilitySpec};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsrc-ctl"))
        .args(args)
        .output()
        .expect("spawn dsrc-ctl")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(dir: &Path) -> String {
    write(
        &dir.join("cfg.json"),
        r#"{"scenario":{"preset":"single-lane","per_lane":20},"controller":{"rounds":50}}"#,
    )
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = cli(&[
            "generate",
            "--preset",
            "single-lane",
            "--per-lane",
            "20",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let s = Scenario::load(&a).unwrap();
    assert_eq!(s.len(), 20);
    assert_eq!(s.seed, 3);
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for algo in ["rate", "power", "joint", "limeric"] {
        let out = dir.path().join(algo);
        let o = cli(&[
            "run",
            "--algo",
            algo,
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--dump-links",
        ]);
        assert_eq!(code(&o), 0, "{algo}: {}", String::from_utf8_lossy(&o.stderr));
        for f in [
            "trace.csv",
            "rate.csv",
            "power.csv",
            "awareness.csv",
            "coverage.csv",
            "summary.json",
            "links.csv",
        ] {
            assert!(out.join(f).is_file(), "{algo} missing {f}");
        }
        let summary: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["algo"], algo);
        assert_eq!(summary["n"], 20);
    }
}

#[test]
fn compare_writes_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("cmp");
    let o = cli(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("joint/trace.csv").is_file());
    assert!(out.join("limeric/trace.csv").is_file());
    assert!(out.join("compare.json").is_file());
}

#[test]
fn cut_oracle_reports_the_best_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(&dir.path().join("f.json"), r#"{"f":[0.5,-1.0,2.0,-3.0]}"#);
    let out = dir.path().join("cut.json");
    let o = cli(&[
        "oracle",
        "--which",
        "cut",
        "--instance",
        &inst,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["cut"], 3);
    assert_eq!(v["value"], 1.5);
}

#[test]
fn malformed_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let bad_json = write(&dir.path().join("a.json"), "{ not json");
    let unknown = write(&dir.path().join("b.json"), r#"{"controller":{"epsilonn":1}}"#);
    let negative = write(&dir.path().join("c.json"), r#"{"controller":{"epsilon":-1}}"#);
    let channel_typo = write(&dir.path().join("d.json"), r#"{"channel":{"gama_frac":0.5}}"#);
    let joint_typo = write(&dir.path().join("e.json"), r#"{"joint":{"max_outr":3}}"#);
    for cfg in [bad_json, unknown, negative, channel_typo, joint_typo] {
        let o = cli(&[
            "run",
            "--algo",
            "rate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 2, "{cfg}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_config_exits_with_1() {
    let o = cli(&[
        "run",
        "--algo",
        "rate",
        "--config",
        "/nonexistent/cfg.json",
        "--out",
        "/tmp/unused",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn infeasible_target_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cfg.json"),
        r#"{"scenario":{"preset":"single-lane","per_lane":20},"channel":{"gamma_frac":0.0001},"controller":{"rounds":10}}"#,
    );
    let out = dir.path().join("o");
    let o = cli(&[
        "run",
        "--algo",
        "power",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let s = Scenario::from_vehicles(10_000.0, 1, 4.0, [(0, 0.0, 10.0), (0, 50.0, -10.0)]).unwrap();
    let inst = SmallInstance {
        graph: build_link_graph(&s, &ChannelModel::default()).unwrap(),
        utility: UtilitySpec::pair_weighted_log(&s, 1.0).unwrap(),
        gamma: 1.0,
        mu: Some(vec![5.0, 5.0]),
        p: None,
        bounds: RateBounds::default(),
    };
    let path = write(
        &dir.path().join("inst.json"),
        &serde_json::to_string(&inst).unwrap(),
    );
    let o = cli(&[
        "oracle",
        "--which",
        "power",
        "--instance",
        &path,
        "--out",
        out.join("p.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
