pub mod adam;
pub mod split;
pub mod trainer;

pub use adam::Adam;
pub use split::{
    carve_validation, cv_fold_split, round_half_up, split_kfold, split_tvt, SplitMode, SplitSpec,
    TrialSplit,
};
pub use trainer::{
    derive_seed, evaluate, inference_loss, run_cv, train, CvFold, CvOutcome, EpochRecord,
    Evaluation, RunHistory, TrainConfig, TrainOutcome,
};
