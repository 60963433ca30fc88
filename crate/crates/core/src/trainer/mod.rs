//! Training, cross-validation, metrics and the historical-average baseline.

pub mod folds;
pub mod metrics;
pub mod normalize;
mod train;

pub use folds::{block_ranges, kfold_split, sample_index, Fold};
pub use metrics::{ErrorMetrics, MetricsAccumulator, MetricsReport};
pub use normalize::{fit_scale, Normalization, RoadScale};
pub use train::{
    evaluate, historical_average, predict_rows, subsample, train, train_fold, FoldRun, PredictionRow, TrainConfig,
    TrainHistory,
};
