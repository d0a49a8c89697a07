//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or exceeds its time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use nalgebra::{Matrix3, Vector2, Vector3};
use posediff_cli::commands::estimate;
use posediff_cli::{Mode, RunConfig};
use posediff_core::forward::{standard_normal9, DEFAULT_MARGIN};
use posediff_core::rng::{domain, stream, SimRng};
use posediff_core::robot::LOSS_LINK_POINTS;
use posediff_core::{
    apply_update, compute_gt_targets, ddim_step, decomposed_loss, denormalize, diffuse_sample,
    diffuse_with_noise, gram_schmidt_6d, in_frustum, normalize, AucGrid, CameraIntrinsics,
    ChainSpec, Containment, DenoiserOutput, ForwardConfig, NoiseScales, NormConfig, NormalizedPose,
    Observation, OracleDenoiser, OracleKind, Pose, ReverseConfig, RobotModel, Rotation6D, Sampler,
    Scenario, ScenarioRanges, Schedule, SigmaRule,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_rotation(rng: &mut SimRng) -> Matrix3<f64> {
    loop {
        let v: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(r) = gram_schmidt_6d(&Rotation6D::from_slice(&v).unwrap()) {
            return r;
        }
    }
}

fn random_pose(rng: &mut SimRng) -> Pose {
    let r = random_rotation(rng);
    let z = rng.random_range(0.3..3.0);
    Pose::new(
        r,
        Vector3::new(
            rng.random_range(-1.0..1.0) * z,
            rng.random_range(-1.0..1.0) * z,
            z,
        ),
    )
}

fn random_camera(rng: &mut SimRng) -> CameraIntrinsics {
    let (w, h) = if rng.random_bool(0.5) {
        (640.0, 480.0)
    } else {
        (1280.0, 720.0)
    };
    CameraIntrinsics::new(rng.random_range(400.0..900.0), w, h).unwrap()
}

/// ᾱ_t rebuilt from the linear β endpoints by a plain running product.
fn alpha_bar_oracle(t: usize) -> f64 {
    let mut prod = 1.0;
    for i in 1..=t {
        let beta = 1e-4 + (0.02 - 1e-4) * (i - 1) as f64 / 99.0;
        prod *= 1.0 - beta;
    }
    prod
}

fn c1_round_trip() -> Outcome {
    let cfg = NormConfig::default();
    let mut rng = stream(101, domain::SCENARIO, 0);
    let (mut worst_rt, mut worst_orth, mut worst_det) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let k = random_camera(&mut rng);
        let p = random_pose(&mut rng);
        let back = denormalize(&normalize(&p, &k, &cfg).unwrap(), &k, &cfg).unwrap();
        worst_rt = worst_rt
            .max((back.rotation - p.rotation).amax())
            .max((back.translation - p.translation).amax());
        let v: [f64; 6] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal) * 10.0);
        let r = gram_schmidt_6d(&Rotation6D::from_slice(&v).unwrap()).unwrap();
        worst_orth = worst_orth.max((r.transpose() * r - Matrix3::identity()).amax());
        worst_det = worst_det.max((r.determinant() - 1.0).abs());
    }
    ensure(worst_rt < 1e-9, || format!("round-trip error {worst_rt:e}"))?;
    ensure(worst_orth < 1e-9, || {
        format!("orthogonality error {worst_orth:e}")
    })?;
    ensure(worst_det < 1e-9, || {
        format!("determinant error {worst_det:e}")
    })?;
    Ok(format!(
        "round trip {worst_rt:.1e}, |RtR-I| {worst_orth:.1e}, |det-1| {worst_det:.1e}"
    ))
}

fn c2_forward() -> Outcome {
    let sched = Schedule::default();
    let cfg = NormConfig::default();
    let fwd = ForwardConfig {
        scales: NoiseScales::unit(),
        containment: Containment::Off,
        ..ForwardConfig::default()
    };
    let k = CameraIntrinsics::new(600.0, 640.0, 480.0).unwrap();
    let mut rng = stream(102, domain::SCENARIO, 0);
    let pose0 = Pose::new(random_rotation(&mut rng), Vector3::new(0.15, -0.1, 1.2));
    let n0 = normalize(&pose0, &k, &cfg).unwrap();

    // Componentwise closed form with noise replayed from a cloned stream.
    let mut worst = 0.0f64;
    for i in 0..2000 {
        let t = 1 + i % 100;
        let mut draw = stream(102, domain::DIFFUSE, i as u64);
        let mut replay = draw.clone();
        let s = diffuse_sample(&pose0, t, &sched, &fwd, &k, &cfg, &mut draw).unwrap();
        let eps: [f64; 9] = std::array::from_fn(|_| replay.sample(StandardNormal));
        let ab = alpha_bar_oracle(t);
        for (j, e) in eps.iter().enumerate() {
            let expect = ab.sqrt() * n0.0[j] + (1.0 - ab).sqrt() * e;
            worst = worst.max((s.noisy.0[j] - expect).abs());
        }
    }
    ensure(worst < 1e-12, || format!("closed-form mismatch {worst:e}"))?;

    let n = 100_000;
    let mut worst_z = 0.0f64;
    for t in [1, 25, 50, 75, 100] {
        let sums = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r = stream(1000 + t as u64, domain::DIFFUSE, i as u64);
                diffuse_sample(&pose0, t, &sched, &fwd, &k, &cfg, &mut r)
                    .unwrap()
                    .noisy
                    .0
            })
            .reduce(posediff_core::Vector9::zeros, |a, b| a + b);
        let ab = alpha_bar_oracle(t);
        let sigma = (1.0 - ab).sqrt();
        for j in 0..9 {
            let mean = sums[j] / n as f64;
            let tol = 4.0 * sigma / (n as f64).sqrt();
            let z = (mean - ab.sqrt() * n0.0[j]).abs();
            ensure(z <= tol, || {
                format!("t={t} component {j}: |mean - expected| {z:e} > {tol:e}")
            })?;
            worst_z = worst_z.max(z / (sigma / (n as f64).sqrt()));
        }
    }
    Ok(format!(
        "closed form {worst:.1e}; worst mean deviation {worst_z:.2} standard errors"
    ))
}

fn c3_visibility() -> Outcome {
    let sched = Schedule::default();
    let cfg = NormConfig::default();
    let ranges = ScenarioRanges::default();
    let chain = ChainSpec::default();
    let run = |fwd: ForwardConfig, ts: &[usize]| -> (usize, usize) {
        (0..10_000usize)
            .into_par_iter()
            .map(|i| {
                let sc = Scenario::generate(103, i, &ranges, &chain, &cfg).unwrap();
                let mut rng = stream(103, domain::DIFFUSE, i as u64);
                let mut inside = 0;
                for &t in ts {
                    let s = diffuse_sample(
                        &sc.gt_pose,
                        t,
                        &sched,
                        &fwd,
                        &sc.intrinsics,
                        &cfg,
                        &mut rng,
                    )
                    .unwrap();
                    inside +=
                        in_frustum(&s.pose, &sc.intrinsics, DEFAULT_MARGIN, &cfg.depth) as usize;
                }
                (inside, ts.len())
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    };
    let all: Vec<usize> = (1..=100).collect();
    let (inside, total) = run(ForwardConfig::default(), &all);
    ensure(inside == total, || {
        format!("clamped: {inside}/{total} in frustum")
    })?;
    let off = ForwardConfig {
        containment: Containment::Off,
        ..ForwardConfig::default()
    };
    let (inside_off, total_off) = run(off, &[100]);
    let rate_off = inside_off as f64 / total_off as f64;
    ensure(inside_off < total_off, || {
        "unclamped t=100 rate is 100%".into()
    })?;
    Ok(format!(
        "clamped {inside}/{total}; unclamped t=100 rate {:.2}%",
        100.0 * rate_off
    ))
}

fn c4_perfect() -> Outcome {
    let mut lines = Vec::new();
    for mode in [Mode::Ddim, Mode::Tracking] {
        let cfg = RunConfig {
            mode,
            scenarios: 1000,
            seed: 104,
            denoiser: OracleKind::Perfect,
            ..RunConfig::default()
        };
        let res = cfg.resolve().map_err(|e| e.to_string())?;
        let outcomes = estimate::run_all(&cfg, &res);
        let s = estimate::summarize(&cfg, &res, &outcomes).map_err(|e| e.to_string())?;
        ensure(s.aborted == 0, || {
            format!("{}: {} aborted", mode.as_str(), s.aborted)
        })?;
        ensure(s.mean_add < 1e-6, || {
            format!("{}: mean ADD {:e}", mode.as_str(), s.mean_add)
        })?;
        ensure((s.auc - 100.0).abs() <= 0.01, || {
            format!("{}: AUC {}", mode.as_str(), s.auc)
        })?;
        lines.push(format!(
            "{} AUC {:.4} mean ADD {:.1e}",
            mode.as_str(),
            s.auc,
            s.mean_add
        ));
    }
    Ok(lines.join("; "))
}

fn c5_update_round_trip() -> Outcome {
    let mut rng = stream(105, domain::SCENARIO, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = random_camera(&mut rng);
        let (p0, pt) = (random_pose(&mut rng), random_pose(&mut rng));
        let back = apply_update(&pt, &compute_gt_targets(&pt, &p0, &k).unwrap(), &k).unwrap();
        worst = worst
            .max((back.rotation - p0.rotation).amax())
            .max((back.translation - p0.translation).amax());
    }
    ensure(worst < 1e-9, || format!("round-trip error {worst:e}"))?;

    let chain = ChainSpec::default();
    let mut leak = 0.0f64;
    for i in 0..1000 {
        let k = random_camera(&mut rng);
        let (p0, pt) = (random_pose(&mut rng), random_pose(&mut rng));
        let joints =
            posediff_core::JointConfig::new((0..7).map(|_| rng.random_range(-3.0..3.0)).collect());
        let pts = RobotModel::new(&chain, &joints, LOSS_LINK_POINTS)
            .unwrap()
            .points;
        let gt = compute_gt_targets(&pt, &p0, &k).unwrap();
        let mut dr6 = gt.dr6;
        dr6.r2.y += 0.3;
        let cases = [
            DenoiserOutput {
                v_xy: gt.v_xy + Vector2::new(4.0, -1.0),
                ..gt
            },
            DenoiserOutput { dr6, ..gt },
            DenoiserOutput {
                v_z: gt.v_z * 0.9,
                ..gt
            },
        ];
        for (c, out) in cases.iter().enumerate() {
            let l = decomposed_loss(&p0, &pt, out, &pts, &k).unwrap();
            let terms = [l.xy, l.rot, l.z];
            ensure(terms[c] > 0.0, || {
                format!("pair {i}: perturbed term {c} is zero")
            })?;
            for (j, v) in terms.iter().enumerate() {
                if j != c {
                    leak = leak.max(*v);
                }
            }
        }
    }
    ensure(leak < 1e-9, || format!("loss leak {leak:e}"))?;
    Ok(format!(
        "round trip {worst:.1e}; max cross-term loss {leak:.1e}"
    ))
}

fn c6_ddim_consistency() -> Outcome {
    let sched = Schedule::default();
    let scales = NoiseScales::from_gamma(3.0, &NormConfig::default().depth).unwrap();
    let mut rng = stream(106, domain::SCENARIO, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.random_range(1..=100);
        let tp = rng.random_range(0..t);
        let k = random_camera(&mut rng);
        let n0 = normalize(&random_pose(&mut rng), &k, &NormConfig::default()).unwrap();
        let eps = standard_normal9(&mut rng);
        let nt = diffuse_with_noise(&n0, t, &sched, &scales, None, &eps);
        let out = ddim_step(&nt, &n0, t, tp, &sched, 0.0, SigmaRule::Standard).unwrap();
        let ab = alpha_bar_oracle(tp);
        let expect = NormalizedPose(
            n0.0 * ab.sqrt() + eps.component_mul(&scales.as_vector()) * (1.0 - ab).sqrt(),
        );
        worst = worst.max((out.0 - expect.0).amax());
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e} over 1000 trials"))
}

fn c7_ablation() -> Outcome {
    let sched = Schedule::default();
    let (norm, fwd, rcfg) = (
        NormConfig::default(),
        ForwardConfig::default(),
        ReverseConfig::default(),
    );
    let sampler = Sampler::new(&sched, &norm, &fwd, &rcfg).unwrap();
    let d = OracleDenoiser::new(OracleKind::Noisy { sigma0: 0.15 }, &sched);
    let (ranges, chain) = (ScenarioRanges::default(), ChainSpec::default());
    let pairs: Vec<(f64, f64)> = (0..500usize)
        .into_par_iter()
        .map(|i| {
            let sc = Scenario::generate(107, i, &ranges, &chain, &norm).unwrap();
            let m = RobotModel::new(&chain, &sc.joints, LOSS_LINK_POINTS).unwrap();
            let obs = Observation::new(
                sc.gt_pose,
                sc.intrinsics,
                &m,
                sc.joints.clone(),
                0.0,
                &mut stream(107, domain::OBSERVATION, i as u64),
            );
            let seed = || stream(107, domain::DENOISE, i as u64);
            let add = |r: posediff_core::Result<(Pose, posediff_core::Trajectory)>| {
                r.and_then(|(p, _)| posediff_core::add_metric(&sc.gt_pose, &p, &m.keypoints))
                    .unwrap_or(f64::NAN)
            };
            let rev = add(sampler.run_reverse(&obs, &m.keypoints, &d, None, &mut seed()));
            let dir =
                add(sampler.run_direct_regression(&obs, &m.keypoints, 10, &d, None, &mut seed()));
            (rev, dir)
        })
        .collect();
    let grid = AucGrid::default();
    let rev: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let dir: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (a_rev, a_dir) = (grid.auc(&rev).unwrap(), grid.auc(&dir).unwrap());
    let gap = a_rev - a_dir;
    let max_pair = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let note = if gap == 0.0 {
        format!(" (tie; largest paired ADD difference {max_pair:.1e} m)")
    } else {
        String::new()
    };
    let msg = format!("DDIM+refine AUC {a_rev:.4} vs direct AUC {a_dir:.4}, gap {gap:+.4}{note}");
    ensure(gap >= 0.0, || msg.clone())?;
    Ok(msg)
}

fn c8_auc() -> Outcome {
    let grid = AucGrid::default();
    // Brute-force midpoint integration of the success-rate curve.
    let oracle = |adds: &[f64]| {
        let steps = 200_000;
        let h = (grid.t_max - grid.t_min) / steps as f64;
        let mut acc = 0.0;
        for i in 0..steps {
            let th = grid.t_min + (i as f64 + 0.5) * h;
            acc += adds.iter().filter(|a| **a < th).count() as f64 / adds.len() as f64;
        }
        100.0 * acc / steps as f64
    };
    let lists: [&[f64]; 6] = [
        &[0.0],
        &[0.2, 0.5],
        &[0.05],
        &[0.001, 0.002, 0.05, 0.2],
        &[0.0, 0.099, 0.0333, 0.07, 0.5, 0.015],
        &[0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09],
    ];
    let mut worst = 0.0f64;
    for l in lists {
        let d = (grid.auc(l).unwrap() - oracle(l)).abs();
        ensure(d < 0.05, || format!("{l:?}: |auc - oracle| = {d}"))?;
        worst = worst.max(d);
    }
    let mut rng = stream(108, domain::SCENARIO, 0);
    for i in 0..100 {
        let n = rng.random_range(1..200);
        let big: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.15)).collect();
        let small: Vec<f64> = big
            .iter()
            .map(|a| a * rng.random_range(0.0..=1.0))
            .collect();
        let (a, b) = (grid.auc(&small).unwrap(), grid.auc(&big).unwrap());
        ensure(a >= b, || {
            format!("pair {i}: dominated list scored {a} < {b}")
        })?;
    }
    Ok(format!(
        "max |auc - oracle| {worst:.4}; 100 dominated pairs monotone"
    ))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "estimate_timing.json" {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c9_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_posediff");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 5] = [
        &["schedule"],
        &[
            "diffuse",
            "--scenarios",
            "300",
            "--clamp",
            "off",
            "--timesteps",
            "1,50,100",
        ],
        &[
            "estimate",
            "--scenarios",
            "300",
            "--denoiser",
            "noisy:0.15",
            "--trajectories",
        ],
        &[
            "estimate",
            "--scenarios",
            "300",
            "--denoiser",
            "noisy:0.15",
            "--mode",
            "tracking",
            "--track-perturb-t",
            "30",
        ],
        &["trainsim", "--scenarios", "200", "--denoiser", "noisy:0.1"],
    ];
    let mut files = 0;
    for (i, args) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for (j, threads) in ["1", "4", "4"].iter().enumerate() {
            let out = tmp.path().join(format!("run{i}_{j}"));
            let status = Command::new(bin)
                .args(*args)
                .args(["--seed", "2024", "--threads", threads, "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(status.status.success(), || {
                format!(
                    "{args:?} exited with {}: {}",
                    status.status,
                    String::from_utf8_lossy(&status.stderr)
                )
            })?;
            outputs.push(read_dir_sorted(&out));
        }
        ensure(outputs[0] == outputs[1] && outputs[1] == outputs[2], || {
            format!("{args:?}: outputs differ")
        })?;
        files += outputs[0].len();
    }
    Ok(format!(
        "{files} files byte-identical across repeated serial and parallel runs"
    ))
}

fn c10_schedule() -> Outcome {
    let s = Schedule::default();
    ensure(s.alpha_bars().windows(2).all(|w| w[1] < w[0]), || {
        "alpha_bar not strictly decreasing".into()
    })?;
    ensure(s.alpha_bar(1) == 0.9999, || {
        format!("alpha_bar(1) = {}", s.alpha_bar(1))
    })?;
    let oracle = alpha_bar_oracle(100);
    let rel = (s.alpha_bar(100) - oracle).abs() / oracle;
    ensure(rel < 1e-12, || {
        format!("alpha_bar(100) relative error {rel:e}")
    })?;
    Ok(format!(
        "alpha_bar(100) = {:.12} (oracle {oracle:.12})",
        s.alpha_bar(100)
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("round-trip exactness", 5, c1_round_trip),
        ("forward-diffusion correctness", 60, c2_forward),
        ("visibility guarantee", 120, c3_visibility),
        ("perfect-oracle convergence", 60, c4_perfect),
        (
            "update/target round trip and loss isolation",
            60,
            c5_update_round_trip,
        ),
        ("forward/backward DDIM consistency", 60, c6_ddim_consistency),
        (
            "ablation direction (DDIM+refine vs direct)",
            300,
            c7_ablation,
        ),
        ("AUC oracle equivalence", 60, c8_auc),
        ("determinism", 120, c9_determinism),
        ("schedule sanity", 5, c10_schedule),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(*budget) => Err(format!(
                "took {:.1}s, budget {budget}s",
                elapsed.as_secs_f64()
            )),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {:>2}. {name} ({:.2}s): {detail}",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
