use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn posediff(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posediff"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn schedule_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = posediff(&["schedule"], dir.path());
    assert!(o.status.success());
    assert_eq!(
        header(&dir.path().join("schedule.csv")),
        ["t", "beta", "alpha_bar", "sigma", "sigma_sq"]
    );
    let rows = csv::Reader::from_path(dir.path().join("schedule.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 100);
    let meta = &json(&dir.path().join("schedule.json"))["metadata"];
    assert_eq!(meta["tool"], "posediff");
    assert_eq!(meta["config"]["steps"], 100);
}

#[test]
fn diffuse_clamped_and_unclamped() {
    let dir = tempfile::tempdir().unwrap();
    let on = dir.path().join("on");
    assert!(
        posediff(&["diffuse", "--scenarios", "200", "--seed", "3"], &on)
            .status
            .success()
    );
    let s = json(&on.join("diffuse.json"));
    assert_eq!(s["in_frustum_rate"], 1.0);
    assert_eq!(s["in_frustum_guarantee_held"], true);
    assert_eq!(s["per_t"].as_array().unwrap().len(), 5);
    assert_eq!(header(&on.join("diffuse.csv"))[..3], ["scenario", "t", "f"]);

    let off = dir.path().join("off");
    let o = posediff(
        &[
            "diffuse",
            "--scenarios",
            "500",
            "--clamp",
            "off",
            "--timesteps",
            "100",
        ],
        &off,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&off.join("diffuse.json"));
    assert!(s["in_frustum_rate"].as_f64().unwrap() < 1.0);
    assert_eq!(s["aborted"], 0);
}

#[test]
fn estimate_perfect_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let o = posediff(
        &["estimate", "--scenarios", "50", "--trajectories"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("estimate.json"));
    assert!((s["auc"].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(s["malformed_trajectories"], 0);
    assert_eq!(
        header(&dir.path().join("estimate.csv")),
        ["scenario", "mode", "f", "width", "height", "steps", "add", "status", "reason"]
    );
    let traj = dir.path().join("trajectories/scenario_000049.csv");
    let kinds: Vec<String> = csv::Reader::from_path(&traj)
        .unwrap()
        .records()
        .map(|r| r.unwrap()[1].to_string())
        .collect();
    assert_eq!(kinds.len(), 10);
    assert!(kinds[..5].iter().all(|k| k == "ddim") && kinds[5..].iter().all(|k| k == "refine"));
}

#[test]
fn noisy_ddim_and_direct_tie() {
    let dir = tempfile::tempdir().unwrap();
    let auc = |mode: &str| {
        let out = dir.path().join(mode);
        let o = posediff(
            &[
                "estimate",
                "--scenarios",
                "200",
                "--denoiser",
                "noisy:0.15",
                "--mode",
                mode,
            ],
            &out,
        );
        assert!(o.status.success());
        json(&out.join("estimate.json"))["auc"].as_f64().unwrap()
    };
    let (ddim, direct) = (auc("ddim"), auc("direct"));
    assert!(ddim < 100.0);
    assert_eq!(ddim, direct);
}

#[test]
fn tracking_is_cheaper_per_scenario() {
    let dir = tempfile::tempdir().unwrap();
    // Best of several runs, so preemption by concurrently running tests does not count.
    let secs = |mode: &str| {
        let out = dir.path().join(mode);
        let args = [
            "estimate",
            "--scenarios",
            "2000",
            "--threads",
            "1",
            "--mode",
            mode,
        ];
        (0..5)
            .map(|_| {
                assert!(posediff(&args, &out).status.success());
                let t = json(&out.join("estimate_timing.json"));
                assert_eq!(t["threads"], 1);
                t["estimator_seconds_per_scenario"].as_f64().unwrap()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let steps = |mode: &str| {
        let out = dir.path().join(mode);
        let mut r = csv::Reader::from_path(out.join("estimate.csv")).unwrap();
        r.records().next().unwrap().unwrap()[5]
            .parse::<usize>()
            .unwrap()
    };
    let (full, track) = (secs("ddim"), secs("tracking"));
    assert_eq!((steps("ddim"), steps("tracking")), (10, 1));
    assert!(
        full >= 5.0 * track,
        "ddim {full:e} s vs tracking {track:e} s"
    );
}

#[test]
fn trainsim_losses() {
    let dir = tempfile::tempdir().unwrap();
    let o = posediff(
        &["trainsim", "--scenarios", "300", "--denoiser", "noisy:0.1"],
        dir.path(),
    );
    assert!(o.status.success());
    let s = json(&dir.path().join("trainsim.json"));
    assert!(s["spearman_total_vs_t"].as_f64().unwrap() > 0.9);
    assert_eq!(s["bins"].as_array().unwrap().len(), 10);
    assert_eq!(
        header(&dir.path().join("trainsim.csv")),
        ["sample", "scenario", "t", "loss_xy", "loss_rot", "loss_z", "total"]
    );

    let exact = dir.path().join("exact");
    assert!(posediff(&["trainsim", "--scenarios", "100"], &exact)
        .status
        .success());
    assert_eq!(
        json(&exact.join("trainsim.json"))["exact_losses_vanish"],
        true
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 17, "scenarios": 40, "denoiser": "biased:5.0"}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = posediff(
        &[
            "estimate",
            "--config",
            cfg.to_str().unwrap(),
            "--scenarios",
            "12",
        ],
        &out,
    );
    assert!(o.status.success());
    let c = &json(&out.join("estimate.json"))["metadata"]["config"];
    assert_eq!(c["seed"], 17);
    assert_eq!(c["scenarios"], 12);
    assert_eq!(c["denoiser"], "biased:5");
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["estimate", "--eta=-1"],
        &["diffuse", "--timesteps", "0,50"],
        &["estimate", "--denoiser", "wobbly"],
        &["schedule", "--beta-start", "0.5", "--beta-end", "0.1"],
    ];
    for args in cases {
        let o = posediff(args, dir.path());
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gama": 3}"#).unwrap();
    let o = posediff(&["schedule", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gama"));
}
