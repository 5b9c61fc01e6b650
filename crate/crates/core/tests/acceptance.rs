//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any gating criterion fails.
//!
//! Run with `cargo test -p emoscale --test acceptance`. The dataset-gated
//! reproduction check runs only when `EMOSCALE_DREAMER` points at a converted
//! interchange directory or manifest.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use emoscale::data::{load_dataset, synth_generate, SynthConfig, Target};
use emoscale::metrics::report::{AurocMode, Report};
use emoscale::metrics::{
    auroc_sweep, balanced_rate_paper, basic_metrics, kappa, mcc, Confusion,
};
use emoscale::model::gradcheck::{random_batch, run_gradcheck, GradcheckOptions};
use emoscale::model::{build, forward, save_params, ModelConfig};
use emoscale::preprocess::{
    baseline_remove, baseline_template, binarize, build_windows, segment, zscore,
    PreprocessConfig,
};
use emoscale::training::{
    cv_fold_split, evaluate, run_cv, split_kfold, split_tvt, train, SplitMode, SplitSpec,
    TrainConfig,
};

const GRADCHECK_MAX_REL_ERR: f64 = 1e-4;
const GRADCHECK_EPSILON: f64 = 1e-5;
const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
const SHAPE_CONFIGS: usize = 200;
const CONFUSION_CASES: usize = 1000;
const CONFUSION_TOL: f64 = 1e-12;
const AUROC_CASES: usize = 100;
const AUROC_MAX_N: usize = 200;
const AUROC_TOL: f64 = 1e-9;
const WORKED_TOL: f64 = 1e-4;
const ZSCORE_TOL: f64 = 1e-6;
const E2E_MIN_TEST_ACC: f64 = 0.90;
const E2E_EPOCHS: usize = 50;
const E2E_BUDGET: Duration = Duration::from_secs(300);
const DETERMINISM_EPOCHS: usize = 3;
const DREAMER_TARGET_ACC: f64 = 0.7855;
const DREAMER_TOL: f64 = 0.03;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- gradients

fn gradient_correctness() -> Outcome {
    let started = Instant::now();
    let opts = GradcheckOptions {
        epsilon: GRADCHECK_EPSILON,
        ..Default::default()
    };
    let report = match run_gradcheck(&opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    outcome(
        report.max_rel_err < GRADCHECK_MAX_REL_ERR && elapsed < GRADCHECK_BUDGET,
        format!(
            "max rel err {:.3e} (< {GRADCHECK_MAX_REL_ERR:e}) over {} entries, worst {}, {:.1}s (< {}s)",
            report.max_rel_err,
            report.checked,
            report.worst,
            elapsed.as_secs_f64(),
            GRADCHECK_BUDGET.as_secs()
        ),
    )
}

// ------------------------------------------------------------------- shapes

/// Independent length arithmetic. Ratios are `p / 64` so the ceiling is exact
/// in integers.
struct ShapeOracle {
    kernels: Vec<usize>,
    t_cat: usize,
    t_sp: usize,
    t_f: usize,
}

fn shape_oracle(fs: usize, numerators: &[usize], window: usize, pools: [usize; 3]) -> Option<ShapeOracle> {
    let kernels: Vec<usize> = numerators.iter().map(|p| (p * fs).div_ceil(64)).collect();
    if kernels.iter().any(|&k| k == 0 || k > window) {
        return None;
    }
    let t_cat: usize = kernels.iter().map(|k| (window - k + 1) / pools[0]).sum();
    if kernels.iter().any(|k| (window - k + 1) / pools[0] == 0) {
        return None;
    }
    let t_sp = t_cat / pools[1];
    let t_f = t_sp / pools[2];
    (t_f > 0).then_some(ShapeOracle {
        kernels,
        t_cat,
        t_sp,
        t_f,
    })
}

fn shape_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut failures = Vec::new();
    while checked < SHAPE_CONFIGS {
        let fs = [16usize, 32, 64, 128][rng.random_range(0..4)];
        let n_ratios = rng.random_range(1..=5);
        let mut numerators: BTreeSet<usize> = BTreeSet::new();
        while numerators.len() < n_ratios {
            numerators.insert(rng.random_range(1..=64));
        }
        let numerators: Vec<usize> = numerators.into_iter().rev().collect();
        let window = rng.random_range(8..=160);
        let pools = [
            rng.random_range(1..=8),
            rng.random_range(1..=3),
            rng.random_range(1..=4),
        ];
        let Some(oracle) = shape_oracle(fs, &numerators, window, pools) else {
            continue;
        };
        let override_k = rng.random_bool(0.2).then(|| rng.random_range(7..=10));
        let cfg = ModelConfig {
            fs: fs as f64,
            channels: 2 * rng.random_range(2..=10),
            window_samples: window,
            ratios: numerators.iter().map(|&p| p as f64 / 64.0).collect(),
            num_temporal_maps: rng.random_range(1..=4),
            num_spatial_maps: rng.random_range(1..=4),
            temporal_pool: pools[0],
            spatial_pool: pools[1],
            fusion_pool: pools[2],
            hidden_units: rng.random_range(1..=8),
            fusion_kernel_override: override_k,
            ..ModelConfig::default()
        };
        checked += 1;
        let n = rng.random_range(1..=3);
        let result = (|| -> Result<(), String> {
            let (params, shapes) = build(&cfg, checked as u64).map_err(|e| e.to_string())?;
            if shapes.kernel_lengths != oracle.kernels
                || shapes.t_cat != oracle.t_cat
                || shapes.t_sp != oracle.t_sp
                || shapes.t_f != oracle.t_f
                || shapes.spatial_rows != 7
            {
                return Err(format!("derived {shapes:?} disagrees with oracle"));
            }
            let (x, _) = random_batch(&cfg, n, checked as u64);
            let (logits, cache) = forward(&params, &cfg, &x, true, 0).map_err(|e| e.to_string())?;
            let cache = cache.expect("training forward returns a cache");
            let expect = [
                (cache.temporal_out.shape.clone(), shapes.temporal_output(n, &cfg).to_vec()),
                (cache.spatial_out.shape.clone(), shapes.spatial_output(n, &cfg).to_vec()),
                (cache.fusion_out.shape.clone(), shapes.fusion_output(n, &cfg).to_vec()),
                (cache.fusion_out.shape[1..].to_vec(), vec![cfg.num_spatial_maps, 1, oracle.t_f]),
                (logits.shape.clone(), vec![n, 2]),
            ];
            for (got, want) in expect {
                if got != want {
                    return Err(format!("shape {got:?} != {want:?}"));
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("{cfg:?}: {e}"));
        }
    }

    let dreamer = ModelConfig::default().derive();
    let dreamer_ok = match &dreamer {
        Ok(s) => {
            s.kernel_lengths == [64, 32, 16, 8, 4]
                && s.t_cat == 64
                && s.spatial_rows == 7
                && (s.fusion_output(1, &ModelConfig::default())[1..] == [15, 1, 8])
        }
        Err(_) => false,
    };
    let dreamer_forward = {
        let cfg = ModelConfig::default();
        let (p, _) = build(&cfg, 0).unwrap();
        let (x, _) = random_batch(&cfg, 2, 0);
        let (_, cache) = forward(&p, &cfg, &x, true, 0).unwrap();
        cache.unwrap().fusion_out.shape == [2, 15, 1, 8]
    };
    if let Some(f) = failures.first() {
        eprintln!("  first shape failure: {f}");
    }
    outcome(
        failures.is_empty() && dreamer_ok && dreamer_forward,
        format!(
            "{checked} random configs, {} mismatches; DREAMER kernels [64,32,16,8,4], T_cat 64, 7 rows, 15x1x8: {}",
            failures.len(),
            dreamer_ok && dreamer_forward
        ),
    )
}

// ------------------------------------------------------------------ metrics

struct DirectMetrics {
    precision: f64,
    recall: f64,
    f1: f64,
    accuracy: f64,
    mcc: f64,
    kappa: f64,
}

/// Direct formula evaluation. Undefined ratios are taken as 0.
fn direct(tp: f64, fp: f64, tn: f64, fn_: f64) -> DirectMetrics {
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let n = tp + fp + tn + fn_;
    let po = (tp + tn) / n;
    let pe = ((tp + fp) * (tp + fn_) + (tn + fn_) * (tn + fp)) / (n * n);
    DirectMetrics {
        precision,
        recall,
        f1: div(2.0 * tp, 2.0 * tp + fp + fn_),
        accuracy: po,
        mcc: div(
            tp * tn - fp * fn_,
            ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt(),
        ),
        kappa: div(po - pe, 1.0 - pe),
    }
}

fn pair_counting_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for case in 0..CONFUSION_CASES {
        // Include small counts so zero denominators are exercised.
        let hi = if case % 4 == 0 { 3 } else { 10_000 };
        let c = Confusion::new(
            rng.random_range(0..hi),
            rng.random_range(0..hi),
            rng.random_range(0..hi),
            rng.random_range(0..hi),
        );
        if c.total() == 0 {
            continue;
        }
        let d = direct(c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
        let b = basic_metrics(&c).unwrap();
        let pairs = [
            (b.precision.value, d.precision),
            (b.recall.value, d.recall),
            (b.f1.value, d.f1),
            (b.accuracy.value, d.accuracy),
            (mcc(&c).unwrap().value, d.mcc),
            (kappa(&c).unwrap().value, d.kappa),
        ];
        for (got, want) in pairs {
            worst = worst.max((got - want).abs());
        }
    }

    let mut auroc_worst: f64 = 0.0;
    for case in 0..AUROC_CASES {
        let n = rng.random_range(2..=AUROC_MAX_N);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // Every third case uses a coarse grid so ties are common.
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                if case % 3 == 0 {
                    (s * 10.0).floor() / 10.0
                } else {
                    s
                }
            })
            .collect();
        let got = auroc_sweep(&scores, &labels).unwrap();
        auroc_worst = auroc_worst.max((got - pair_counting_auroc(&scores, &labels)).abs());
    }

    let c = Confusion::new(40, 10, 30, 20);
    let b = basic_metrics(&c).unwrap();
    let worked = [
        (b.precision.value, 0.8),
        (b.recall.value, 0.6667),
        (b.f1.value, 0.7273),
        (b.accuracy.value, 0.7),
        (mcc(&c).unwrap().value, 0.4082),
        (balanced_rate_paper(&c).unwrap(), 0.7083),
        (kappa(&c).unwrap().value, 0.4),
    ];
    let worked_err = worked
        .iter()
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= CONFUSION_TOL && auroc_worst <= AUROC_TOL && worked_err <= WORKED_TOL,
        format!(
            "confusion max err {worst:.1e} (<= {CONFUSION_TOL:e}); auroc max err {auroc_worst:.1e} (<= {AUROC_TOL:e}); worked example max err {worked_err:.1e} (<= {WORKED_TOL:e})"
        ),
    )
}

// ------------------------------------------------------------ preprocessing

fn preprocessing_invariants() -> Outcome {
    let d = synth_generate(&SynthConfig::default()).unwrap();
    let cfg = PreprocessConfig::default();
    let (mut max_mean, mut max_sd_err): (f64, f64) = (0.0, 0.0);
    let mut self_sub_ok = true;
    for trial in d.trials.iter().take(12) {
        let template = baseline_template(trial, cfg.window_samples).unwrap();
        let zero = baseline_remove(&template, &template).unwrap();
        self_sub_ok &= zero.iter().all(|&v| v == 0.0);
        for w in segment(trial, &cfg).unwrap() {
            let z = zscore(&baseline_remove(&w, &template).unwrap(), cfg.zscore_epsilon);
            for row in z.rows() {
                let n = row.len() as f64;
                let m = row.sum() / n;
                let sd = (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                max_mean = max_mean.max(m.abs());
                max_sd_err = max_sd_err.max((sd - 1.0).abs());
            }
        }
    }
    let bins: Vec<u8> = (1..=5).map(|s| binarize(s, 3).unwrap()).collect();
    let windows_ok = build_windows(&d, &cfg).map(|w| w.len() == 72 * 8).unwrap_or(false);
    outcome(
        max_mean < ZSCORE_TOL
            && max_sd_err < ZSCORE_TOL
            && self_sub_ok
            && bins == [0, 0, 1, 1, 1]
            && windows_ok,
        format!(
            "z-score |mean| {max_mean:.1e}, |sd-1| {max_sd_err:.1e} (< {ZSCORE_TOL:e}); self-subtraction zero: {self_sub_ok}; binarize 1..5 -> {bins:?}"
        ),
    )
}

// --------------------------------------------------------------- end to end

fn tvt_spec() -> SplitSpec {
    SplitSpec {
        mode: SplitMode::Tvt,
        ..Default::default()
    }
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let synth = SynthConfig::default().with_amplitude(3.0);
    let d = synth_generate(&synth).unwrap();
    let w = build_windows(&d, &PreprocessConfig::default()).unwrap();
    let split = split_tvt(d.len(), &tvt_spec()).unwrap();
    let cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        epochs: E2E_EPOCHS,
        ..Default::default()
    };
    let trained = match train(&w, &split, &cfg, &train_cfg) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let acc = evaluate(&trained.params, &cfg, &w, &split.test, Target::Valence)
        .and_then(|e| e.metrics(0.5))
        .map(|m| m.accuracy)
        .unwrap_or(f64::NAN);
    let elapsed = started.elapsed();
    outcome(
        acc >= E2E_MIN_TEST_ACC && elapsed < E2E_BUDGET,
        format!(
            "{} trials, test accuracy {acc:.4} (>= {E2E_MIN_TEST_ACC}) after {} epochs (best {}), {:.1}s (< {}s)",
            d.len(),
            trained.history.epochs.len(),
            trained.history.best_epoch,
            elapsed.as_secs_f64(),
            E2E_BUDGET.as_secs()
        ),
    )
}

// -------------------------------------------------------------- determinism

struct RunArtifacts {
    params_json: Vec<u8>,
    params_bin: Vec<u8>,
    history: String,
    report_tsv: String,
    report_json: String,
}

fn one_run() -> RunArtifacts {
    let d = synth_generate(&SynthConfig::default()).unwrap();
    let w = build_windows(&d, &PreprocessConfig::default()).unwrap();
    let split = split_tvt(d.len(), &tvt_spec()).unwrap();
    let cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        epochs: DETERMINISM_EPOCHS,
        seed: 5,
        ..Default::default()
    };
    let trained = train(&w, &split, &cfg, &train_cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_params(&trained.params, &cfg, dir.path()).unwrap();
    let m = evaluate(&trained.params, &cfg, &w, &split.test, Target::Valence)
        .unwrap()
        .metrics(0.5)
        .unwrap();
    let mut report = Report::new("determinism", AurocMode::Sweep);
    report.push("test", &m);
    RunArtifacts {
        params_json: std::fs::read(dir.path().join("params.json")).unwrap(),
        params_bin: std::fs::read(dir.path().join("params.bin")).unwrap(),
        history: trained.history.to_tsv(),
        report_tsv: report.to_tsv(),
        report_json: report.to_json(),
    }
}

fn determinism() -> Outcome {
    let (a, b) = (one_run(), one_run());
    let same = [
        ("checkpoint manifest", a.params_json == b.params_json),
        ("checkpoint tensors", a.params_bin == b.params_bin),
        ("history", a.history == b.history),
        ("report tsv", a.report_tsv == b.report_tsv),
        ("report json", a.report_json == b.report_json),
    ];
    let differing: Vec<&str> = same.iter().filter(|(_, s)| !s).map(|(n, _)| *n).collect();
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "two {DETERMINISM_EPOCHS}-epoch runs bit-identical ({} checkpoint bytes)",
                a.params_bin.len()
            )
        } else {
            format!("differs: {}", differing.join(", "))
        },
    )
}

// ---------------------------------------------------------- split integrity

fn split_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut problems = Vec::new();
    for _ in 0..200 {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(k..=500);
        let spec = SplitSpec {
            k,
            seed: rng.random(),
            ..Default::default()
        };
        let folds = split_kfold(n, &spec).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            problems.push(format!("n={n} k={k} spread {sizes:?}"));
        }
        let mut all = folds.concat();
        all.sort_unstable();
        if all != (0..n).collect::<Vec<_>>() {
            problems.push(format!("n={n} k={k} folds do not partition"));
        }
        for f in 0..k {
            let s = cv_fold_split(&folds, f, &spec);
            let sets = [&s.train, &s.val, &s.test].map(|v| v.iter().copied().collect::<BTreeSet<_>>());
            let total: usize = sets.iter().map(BTreeSet::len).sum();
            let union: BTreeSet<usize> = sets.iter().flatten().copied().collect();
            if total != n || union.len() != n {
                problems.push(format!("n={n} k={k} fold {f} overlaps"));
            }
        }
    }
    let tvt = split_tvt(100, &tvt_spec()).unwrap();
    let counts = (tvt.train.len(), tvt.val.len(), tvt.test.len());
    if counts != (64, 16, 20) {
        problems.push(format!("tvt on 100 trials gave {counts:?}"));
    }

    // Window level: no (subject, clip) recording reaches two sides.
    let d = synth_generate(&SynthConfig::default()).unwrap();
    let w = build_windows(&d, &PreprocessConfig::default()).unwrap();
    let s = split_tvt(d.len(), &tvt_spec()).unwrap();
    let keys = |trials: &[usize]| -> BTreeSet<(String, u32)> {
        w.rows_for_trials(trials)
            .iter()
            .map(|&r| (w.provenance[r].subject_id.clone(), w.provenance[r].clip_id))
            .collect()
    };
    let (a, b, c) = (keys(&s.train), keys(&s.val), keys(&s.test));
    if !a.is_disjoint(&b) || !a.is_disjoint(&c) || !b.is_disjoint(&c) {
        problems.push("a recording spans two sides of the tvt split".into());
    }
    if let Some(p) = problems.first() {
        eprintln!("  first split problem: {p}");
    }
    outcome(
        problems.is_empty(),
        format!(
            "200 random (n, k) fold sets with spread <= 1 and trial-disjoint cv splits; tvt on 100 trials {counts:?}; {} problems",
            problems.len()
        ),
    )
}

// ------------------------------------------------------ dataset-gated check

fn dreamer_reproduction() -> Option<Outcome> {
    let path = std::env::var_os("EMOSCALE_DREAMER")?;
    let d = match load_dataset(&path) {
        Ok(d) => d,
        Err(e) => return Some(outcome(false, format!("cannot load {path:?}: {e}"))),
    };
    let w = build_windows(&d, &PreprocessConfig::default()).ok()?;
    let cv = run_cv(
        &w,
        d.len(),
        &ModelConfig::default(),
        &TrainConfig::default(),
        &SplitSpec::default(),
    );
    Some(match cv {
        Ok(cv) => {
            let acc = cv.mean.accuracy;
            outcome(
                (acc - DREAMER_TARGET_ACC).abs() <= DREAMER_TOL,
                format!(
                    "valence mean fold accuracy {acc:.4} (target {DREAMER_TARGET_ACC} +/- {DREAMER_TOL})"
                ),
            )
        }
        Err(e) => outcome(false, format!("error: {e}")),
    })
}

fn main() -> ExitCode {
    let gating: [(&str, fn() -> Outcome); 7] = [
        ("gradient correctness", gradient_correctness),
        ("shape suite", shape_suite),
        ("metrics oracle", metrics_oracle),
        ("preprocessing invariants", preprocessing_invariants),
        ("end-to-end learning", end_to_end),
        ("determinism", determinism),
        ("split integrity", split_integrity),
    ];
    let mut failed = 0;
    for (name, check) in gating {
        let o = check();
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    match dreamer_reproduction() {
        Some(o) => println!(
            "{} DREAMER reproduction (non-gating): {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        ),
        None => println!("SKIP DREAMER reproduction (non-gating): set EMOSCALE_DREAMER to a converted dataset"),
    }
    if failed == 0 {
        println!("acceptance: all gating criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} gating criteria failed");
        ExitCode::FAILURE
    }
}
