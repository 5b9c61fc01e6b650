use emoscale::data::{load_dataset, synth_generate, write_dataset, SynthConfig, Target};
use emoscale::model::{build, ModelConfig};
use emoscale::preprocess::{build_windows, read_windows, write_windows, PreprocessConfig, WindowBatch};
use emoscale::training::{
    evaluate, run_cv, split_tvt, train, SplitMode, SplitSpec, TrainConfig, TrialSplit,
};
use emoscale::Error;

fn small_windows() -> (usize, WindowBatch) {
    let cfg = SynthConfig {
        n_subjects: 2,
        n_trials_per_subject: 10,
        duration_s: 2.0,
        baseline_s: 1.0,
        ..SynthConfig::default()
    };
    let d = synth_generate(&cfg).unwrap();
    (d.len(), build_windows(&d, &PreprocessConfig::default()).unwrap())
}

fn tvt(n: usize) -> TrialSplit {
    split_tvt(
        n,
        &SplitSpec {
            mode: SplitMode::Tvt,
            ..Default::default()
        },
    )
    .unwrap()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        ..Default::default()
    }
}

#[test]
fn zero_learning_rate_keeps_trainable_parameters() {
    let (n, w) = small_windows();
    let cfg = ModelConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick(2)
    };
    let out = train(&w, &tvt(n), &cfg, &train_cfg).unwrap();
    let (initial, _) = build(&cfg, train_cfg.seed).unwrap();
    assert!(out.params.trainable_bit_eq(&initial));
}

#[test]
fn best_checkpoint_precedes_no_better_epoch() {
    let (n, w) = small_windows();
    let out = train(&w, &tvt(n), &ModelConfig::default(), &quick(6)).unwrap();
    let h = &out.history;
    let best = h.epochs[h.best_epoch].val_loss;
    assert!(h.epochs[h.best_epoch..].iter().all(|e| best <= e.val_loss));
    assert!(h.epochs.len() <= 6);
}

#[test]
fn early_stopping_honours_patience() {
    let (n, w) = small_windows();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        early_stop_patience: 2,
        ..quick(20)
    };
    // No learning and frozen running statistics: validation loss is constant.
    let model = ModelConfig {
        bn_momentum: 0.0,
        ..ModelConfig::default()
    };
    let out = train(&w, &tvt(n), &model, &cfg).unwrap();
    assert_eq!(out.history.best_epoch, 0);
    assert_eq!(out.history.epochs.len(), 3);
}

#[test]
fn separable_data_is_memorized() {
    let d = synth_generate(&SynthConfig::default()).unwrap();
    let w = build_windows(&d, &PreprocessConfig::default()).unwrap();
    let split = tvt(d.len());
    let cfg = ModelConfig::default();
    let out = train(&w, &split, &cfg, &TrainConfig { epochs: 4, ..Default::default() }).unwrap();
    let m = evaluate(&out.params, &cfg, &w, &split.train, Target::Valence)
        .unwrap()
        .metrics(0.5)
        .unwrap();
    assert_eq!(m.accuracy, 1.0);
}

#[test]
fn evaluate_is_pure() {
    let (n, w) = small_windows();
    let cfg = ModelConfig::default();
    let (params, _) = build(&cfg, 3).unwrap();
    let split = tvt(n);
    let a = evaluate(&params, &cfg, &w, &split.test, Target::Arousal).unwrap();
    let b = evaluate(&params, &cfg, &w, &split.test, Target::Arousal).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.scores.len(), w.rows_for_trials(&split.test).len());
}

#[test]
fn empty_training_split_is_rejected() {
    let (n, w) = small_windows();
    let split = TrialSplit {
        train: vec![],
        val: (0..n).collect(),
        test: vec![],
    };
    assert!(matches!(
        train(&w, &split, &ModelConfig::default(), &quick(1)),
        Err(Error::Empty(_))
    ));
}

#[test]
fn non_finite_loss_reports_epoch_and_batch() {
    let (n, mut w) = small_windows();
    w.x.iter_mut().for_each(|v| *v = f32::NAN);
    let err = train(&w, &tvt(n), &ModelConfig::default(), &quick(1)).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 0, batch: 0 }), "{err}");
}

#[test]
fn cross_validation_reports_five_folds_and_their_mean() {
    let (n, w) = small_windows();
    let cv = run_cv(&w, n, &ModelConfig::default(), &quick(1), &SplitSpec::default()).unwrap();
    assert_eq!(cv.folds.len(), 5);
    let mean: f64 = cv.folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / 5.0;
    assert!((cv.mean.accuracy - mean).abs() <= 1e-12);
    let tested: usize = cv.folds.iter().map(|f| f.split.test.len()).sum();
    assert_eq!(tested, n);
}

#[test]
fn dataset_and_windows_survive_disk() {
    let d = synth_generate(&SynthConfig {
        n_subjects: 2,
        n_trials_per_subject: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&d, dir.path().join("data")).unwrap();
    let back = load_dataset(&manifest).unwrap();
    assert!(back.bit_eq(&d));

    let w = build_windows(&back, &PreprocessConfig::default()).unwrap();
    let path = write_windows(&w, dir.path().join("windows")).unwrap();
    let w2 = read_windows(&path).unwrap();
    assert_eq!(w.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), w2.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(w.provenance, w2.provenance);
    assert_eq!(w.y_valence, w2.y_valence);
}
