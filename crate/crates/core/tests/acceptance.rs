//! Exit-gate suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use segloss::geometry::{
    distance_transform, hausdorff_distance, mean_point_to_set_distance, PixelSet,
};
use segloss::gradcheck::run_gradcheck;
use segloss::harness::{fit, generate_mask, FitConfig, Init, SyntheticMaskSpec};
use segloss::metrics::{dice_coefficient, hard_confusion, sensitivity, specificity};
use segloss::registry::LossId;
use segloss::{analytic_gradient, loss_value, DistanceMap, GroundTruthMask, LossConfig};

type Check = std::result::Result<String, String>;

const GRAD_TOL: f64 = 1e-5;
const GRAD_SEEDS: u64 = 100;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const IDENTITY_TOL: f64 = 1e-12;
const CHAIN_TOL: f64 = 1e-12;
const COMPLEMENT_TOL: f64 = 1e-9;
const CONVERGENCE_DICE: f64 = 0.99;
const CONVERGENCE_STEPS: usize = 500;
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(120);
const PROBE_FIRST_DICE: f64 = 0.9;
const PROBE_REGION_DICE: f64 = 0.95;
const PROBE_STEPS: usize = 1000;
const PROBE_LR: f64 = 0.5;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_verification() -> Check {
    let start = Instant::now();
    let mut worst = (0.0f64, LossId::Bce, 0u64);
    let mut failures = Vec::new();
    for seed in 0..GRAD_SEEDS {
        let results = run_gradcheck(&LossId::ALL, seed, shape(8, 8), GRAD_TOL)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        for r in results {
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, r.loss, seed);
            }
            if !r.passed {
                failures.push(format!("{} seed {seed} pixel {:?}", r.loss, r.worst_pixel));
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "15 losses x {GRAD_SEEDS} seeds at 8x8, worst rel error {:.2e} ({} seed {}), {:.1}s",
        worst.0,
        worst.1,
        worst.2,
        elapsed.as_secs_f64()
    );
    if !failures.is_empty() {
        return Err(format!("{detail}; failed: {}", failures.join(", ")));
    }
    ensure(elapsed < GRAD_BUDGET, detail)
}

fn reduction_identities() -> Check {
    let base = LossConfig::default();
    let mut r = rng(11);
    let mut worst = [0.0f64; 7];
    for _ in 0..100 {
        let s = shape(r.gen_range(2..=12), r.gen_range(2..=12));
        let y = random_mask(&mut r, s, 0.4);
        let p = random_probs(&mut r, s, 0.01, 0.99);
        let v = |id: LossId, cfg: &LossConfig, aux: Option<&DistanceMap>| {
            loss_value(id, &y, &p, cfg, aux).unwrap()
        };
        let bce = v(LossId::Bce, &base, None);
        let dice = v(LossId::Dice, &base, None);
        let tversky = v(LossId::Tversky, &base, None);

        let (tp, fp, fn_) = soft_counts(&y, &p);
        let sm = base.smooth;
        let closed = 1.0 - (2.0 * tp + 2.0 * sm) / (2.0 * tp + fp + fn_ + 2.0 * sm);

        let pairs = [
            (v(LossId::Focal, &LossConfig { gamma: 0.0, alpha: 1.0, ..base.clone() }, None), bce),
            (v(LossId::WeightedBce, &LossConfig { beta: 1.0, ..base.clone() }, None), bce),
            (v(LossId::Tversky, &LossConfig { beta: 0.5, ..base.clone() }, None), closed),
            (
                v(
                    LossId::ExpLog,
                    &LossConfig { gamma: 1.0, w_dice: 0.0, w_cross: 1.0, ..base.clone() },
                    None,
                ),
                bce,
            ),
            (
                v(LossId::DistancePenalizedCe, &base, Some(&DistanceMap::zeros(s))),
                bce,
            ),
            (v(LossId::Combo, &LossConfig { alpha: 0.0, ..base.clone() }, None), dice),
            (v(LossId::FocalTversky, &LossConfig { gamma: 1.0, ..base.clone() }, None), tversky),
        ];
        for (w, (a, b)) in worst.iter_mut().zip(pairs) {
            *w = w.max((a - b).abs());
        }
    }
    let names = [
        "focal=bce",
        "weighted_bce=bce",
        "tversky=closed",
        "exp_log=bce",
        "distance_penalized=bce",
        "combo=dice",
        "focal_tversky=tversky",
    ];
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst.iter().all(|&w| w <= IDENTITY_TOL), format!("100 inputs, max diffs: {detail}"))
}

fn log_cosh_chain_rule() -> Check {
    let cfg = LossConfig::default();
    let mut r = rng(23);
    let (mut worst, mut bound_violations) = (0.0f64, 0);
    for _ in 0..100 {
        let s = shape(r.gen_range(2..=12), r.gen_range(2..=12));
        let y = random_mask(&mut r, s, 0.5);
        let p = random_probs(&mut r, s, 0.0, 1.0);
        let dl = loss_value(LossId::Dice, &y, &p, &cfg, None).unwrap();
        let lc = loss_value(LossId::LogCoshDice, &y, &p, &cfg, None).unwrap();
        if lc > dl {
            bound_violations += 1;
        }
        let g_lc = analytic_gradient(LossId::LogCoshDice, &y, &p, &cfg, None).unwrap();
        let g_d = analytic_gradient(LossId::Dice, &y, &p, &cfg, None).unwrap();
        for (a, b) in g_lc.values().iter().zip(g_d.values()) {
            worst = worst.max((a - dl.tanh() * b).abs());
        }
    }
    ensure(
        worst <= CHAIN_TOL && bound_violations == 0,
        format!("max pixel diff {worst:.1e}, value bound violations {bound_violations}"),
    )
}

fn geometry_oracles() -> Check {
    let mut r = rng(37);
    let s = shape(16, 16);
    for case in 0..200 {
        let density = r.gen_range(0.005..0.3);
        let mut pts: Vec<_> = (0..s.len())
            .filter(|_| r.gen_bool(density))
            .map(|i| s.coords(i))
            .collect();
        if pts.is_empty() {
            pts.push((r.gen_range(0..16), r.gen_range(0..16)));
        }
        let dt = distance_transform(s, &PixelSet::new(s, pts.clone()).unwrap()).unwrap();
        if dt.values() != brute_edt(s, &pts).as_slice() {
            return Err(format!("distance transform differs on instance {case}"));
        }
    }
    for case in 0..200 {
        let gs = shape(r.gen_range(1..=24), r.gen_range(1..=24));
        let a = random_points(&mut r, gs, 20);
        let b = random_points(&mut r, gs, 20);
        let (sa, sb) = (
            PixelSet::new(gs, a.clone()).unwrap(),
            PixelSet::new(gs, b.clone()).unwrap(),
        );
        if hausdorff_distance(&sa, &sb).unwrap() != brute_hausdorff(&a, &b) {
            return Err(format!("hausdorff differs on pair {case}"));
        }
        if mean_point_to_set_distance(&sa, &sb).unwrap() != brute_mean_distance(&a, &b) {
            return Err(format!("mean point-to-set distance differs on pair {case}"));
        }
    }
    let g = shape(5, 5);
    let h = hausdorff_distance(
        &PixelSet::new(g, vec![(0, 0)]).unwrap(),
        &PixelSet::new(g, vec![(3, 4)]).unwrap(),
    )
    .unwrap();
    ensure(
        h == 5.0,
        format!("200 EDT instances and 200 point-set pairs exact; {{(0,0)}} vs {{(3,4)}} = {h}"),
    )
}

fn metrics_examples() -> Check {
    let g = shape(3, 3);
    let truth = GroundTruthMask::new(g, [1, 1, 1, 0, 0, 0, 0, 0, 0].map(|v| v == 1).to_vec()).unwrap();
    let pred = GroundTruthMask::new(g, [1, 1, 0, 1, 0, 0, 0, 0, 0].map(|v| v == 1).to_vec()).unwrap();
    let c = hard_confusion(&pred, &truth).unwrap();
    let dc = dice_coefficient(&pred, &truth).unwrap();
    let sens = sensitivity(&pred, &truth).unwrap();
    let spec = specificity(&pred, &truth).unwrap();
    let hand = (c.tp, c.fp, c.tn, c.fn_) == (2, 1, 5, 1)
        && dc == 2.0 / 3.0
        && sens == 2.0 / 3.0
        && spec == 5.0 / 6.0;

    // Near-zero smoothing stands in for the unsmoothed ratio.
    let cfg = LossConfig { smooth: 1e-9, ..LossConfig::default() };
    let mut r = rng(41);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let s = shape(r.gen_range(2..=16), r.gen_range(2..=16));
        let y = random_mask(&mut r, s, 0.3);
        let b = random_mask(&mut r, s, 0.3);
        if y.foreground_count() + b.foreground_count() == 0 {
            continue;
        }
        let dl = loss_value(LossId::Dice, &y, &b.to_probabilities(), &cfg, None).unwrap();
        let dc = dice_coefficient(&b, &y).unwrap();
        worst = worst.max((dl + dc - 1.0).abs());
    }
    ensure(
        hand && worst <= COMPLEMENT_TOL,
        format!(
            "tp={} fp={} tn={} fn={} DC={dc:.6} sens={sens:.6} spec={spec:.6}; |1-DL-DC| max {worst:.1e}",
            c.tp, c.fp, c.tn, c.fn_
        ),
    )
}

fn convergence_suite() -> Check {
    let start = Instant::now();
    let truth = generate_mask(&SyntheticMaskSpec::disk(shape(32, 32))).unwrap();
    let mut losses = LossId::EXPERIMENT.to_vec();
    losses.push(LossId::BalancedBce);
    let mut parts = Vec::new();
    let mut ok = true;
    for id in losses {
        let cfg = FitConfig { steps: CONVERGENCE_STEPS, ..FitConfig::new(id) };
        let trace = fit(&truth, &cfg).map_err(|e| format!("{id}: {e}"))?;
        let reached = trace.first_step_reaching(CONVERGENCE_DICE);
        let last = trace.last().map_or(0.0, |r| r.dice);
        ok &= reached.is_some() && !trace.diverged;
        parts.push(match reached {
            Some(step) => format!("{id}@{step}"),
            None => format!("{id} stuck at {last:.4}"),
        });
    }
    let elapsed = start.elapsed();
    ensure(
        ok && elapsed < CONVERGENCE_BUDGET,
        format!("32x32 disk, dice >= {CONVERGENCE_DICE}: {} ({:.1}s)", parts.join(" "), elapsed.as_secs_f64()),
    )
}

fn imbalance_probe() -> Check {
    let truth = generate_mask(&SyntheticMaskSpec::sparse(shape(64, 64), 0.01, 0)).unwrap();
    let run = |id: LossId| {
        let cfg = FitConfig {
            steps: PROBE_STEPS,
            learning_rate: PROBE_LR,
            init: Init::Zeros,
            ..FitConfig::new(id)
        };
        fit(&truth, &cfg).map_err(|e| format!("{id}: {e}"))
    };
    let first = |id: LossId| -> Result<Option<usize>, String> {
        Ok(run(id)?.first_step_reaching(PROBE_FIRST_DICE))
    };
    let dice_steps = first(LossId::Dice)?;
    let bce_steps = first(LossId::Bce)?;
    let ordering = match (dice_steps, bce_steps) {
        (Some(d), Some(b)) => d < b,
        (Some(_), None) => true,
        _ => false,
    };
    let mut region = Vec::new();
    let mut region_ok = true;
    for id in [LossId::Dice, LossId::Tversky, LossId::FocalTversky, LossId::LogCoshDice] {
        let reached = run(id)?.first_step_reaching(PROBE_REGION_DICE);
        region_ok &= reached.is_some();
        region.push(format!("{id}@{reached:?}"));
    }
    ensure(
        ordering && region_ok,
        format!(
            "{} foreground pixels; first step with dice >= {PROBE_FIRST_DICE}: dice {dice_steps:?}, bce {bce_steps:?} \
             (dice must be strictly earlier); dice >= {PROBE_REGION_DICE}: {}",
            truth.foreground_count(),
            region.join(" ")
        ),
    )
}

fn run_cli(args: &[&str], cwd: &Path) -> Result<(i32, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segloss"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .map_err(|e| e.to_string())?;
    Ok((out.status.code().unwrap_or(-1), out.stdout))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    std::fs::write(dir.join("truth.pgm"), "P2\n4 3\n255\n0 255 255 0\n0 255 255 0\n0 0 0 0\n").unwrap();
    std::fs::write(
        dir.join("pred.csv"),
        "0.1,0.8,0.7,0.2\n0.3,0.6,0.9,0.1\n0.2,0.4,0.1,0.05\n",
    )
    .unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["eval", "--truth", "truth.pgm", "--pred", "pred.csv", "--loss", "dice"],
        vec!["eval", "--truth", "truth.pgm", "--pred", "pred.csv", "--loss", "distance_penalized_ce", "--auto-phi"],
        vec!["eval", "--truth", "truth.pgm", "--pred", "pred.csv", "--loss", "ssl", "--config", "ssl_beta=0.2"],
        vec!["metrics", "--truth", "truth.pgm", "--pred", "pred.csv"],
        vec!["gradcheck", "--loss", "all", "--size", "8x8", "--seed", "42", "--tol", "1e-5"],
        vec!["fit", "--losses", "dice,bce,ssl", "--mask-spec", "two_disks:16x16", "--steps", "40", "--init", "random", "--seed", "5", "--out", "FIT"],
        vec!["report", "--losses", "focal,hausdorff_dt", "--mask-spec", "sparse:16x16:f=0.05,seed=2", "--steps", "30", "--out", "REP", "--format", "md"],
    ];
    let mut ran = 0;
    for cmd in &commands {
        let mut outputs = Vec::new();
        for round in 0..2 {
            let out_name = format!("out{round}");
            let args: Vec<&str> = cmd
                .iter()
                .map(|a| if *a == "FIT" || *a == "REP" { out_name.as_str() } else { a })
                .collect();
            let (code, stdout) = run_cli(&args, dir)?;
            if code != 0 {
                return Err(format!("`{}` exited {code}", cmd.join(" ")));
            }
            let files = if cmd.contains(&"--out") {
                let files = read_dir_sorted(&dir.join(&out_name));
                std::fs::remove_dir_all(dir.join(&out_name)).unwrap();
                files
            } else {
                Vec::new()
            };
            outputs.push((stdout, files));
        }
        if outputs[0] != outputs[1] {
            return Err(format!("`{}` is not reproducible", cmd.join(" ")));
        }
        ran += 1;
    }

    // The library depends on no other workspace crate.
    let manifest = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml")).unwrap();
    let standalone = !manifest
        .lines()
        .any(|l| l.contains('{') && l.contains("path"));
    ensure(
        standalone,
        format!("{ran} CLI invocations byte-identical across reruns; library builds standalone"),
    )
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let checks: [Criterion; 8] = [
        ("gradient verification", gradient_verification),
        ("reduction identities", reduction_identities),
        ("log-cosh chain rule", log_cosh_chain_rule),
        ("geometry oracles", geometry_oracles),
        ("metrics", metrics_examples),
        ("convergence suite", convergence_suite),
        ("imbalance probe", imbalance_probe),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
