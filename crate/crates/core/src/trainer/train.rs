use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, GradBuffer, Session};
use crate::error::{Error, Result};
use crate::graphdata::Dataset;
use crate::mcan::{loss_value, Checkpoint, Mcan, ModelConfig, ModelData, Sample, SampleInputs, SampleTargets};

use super::folds::{kfold_split, Fold};
use super::metrics::{MetricsAccumulator, MetricsReport};
use super::Normalization;

/// Optimisation and cross-validation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Number of cross-validation folds.
    pub folds: usize,
    /// Fold whose test block is held out by `train`; defaults to the last.
    pub fold: Option<usize>,
    /// Assign samples to folds at random instead of by time.
    pub shuffled_folds: bool,
    /// Train on a seeded random subset of at most this many samples.
    pub max_train_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-4,
            folds: 5,
            fold: None,
            shuffled_folds: false,
            max_train_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epochs", self.epochs), ("batch_size", self.batch_size), ("folds", self.folds)] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "need at least 2 folds"));
        }
        if let Some(f) = self.fold {
            if f >= self.folds {
                return Err(Error::config("fold", format!("{f} is out of range for {} folds", self.folds)));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.max_train_samples == Some(0) {
            return Err(Error::config("max_train_samples", "must be >= 1"));
        }
        Ok(())
    }

    pub fn holdout_fold(&self) -> usize {
        self.fold.unwrap_or(self.folds - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainHistory {
    /// Mean per-sample loss on the training set before the first update,
    /// with dropout off.
    pub initial_loss: f64,
    /// Mean per-sample training loss of each epoch, as seen by the optimiser.
    pub epoch_losses: Vec<f64>,
    /// Same measure as `initial_loss`, after the last epoch.
    pub final_loss: f64,
    pub optimizer_steps: u64,
    pub train_samples: usize,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    splitmix(splitmix(seed ^ splitmix(epoch as u64)) ^ index as u64)
}

type Prepared = Vec<(Sample, SampleInputs, SampleTargets)>;

fn prepare(data: &ModelData, samples: &[Sample]) -> Result<Prepared> {
    samples
        .iter()
        .map(|&s| Ok((s, data.inputs(s)?, data.targets(s)?)))
        .collect()
}

fn mean_eval_loss(model: &Mcan, prepared: &Prepared) -> Result<f64> {
    let c = &model.config;
    let mut total = 0.0;
    for (s, inputs, targets) in prepared {
        let l = loss_value(&model.predict(inputs)?, targets, c.alpha, c.beta)?;
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("evaluation loss of {s:?}")));
        }
        total += l;
    }
    Ok(total / prepared.len() as f64)
}

/// Mini-batch Adam on the per-sample loss, averaged over each batch.
pub fn train(model: &mut Mcan, data: &ModelData, samples: &[Sample], config: &TrainConfig, seed: u64) -> Result<TrainHistory> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::MissingData("no training samples".into()));
    }
    if model.config != *data.config() {
        return Err(Error::invalid("model and data were built for different configurations"));
    }
    let prepared = prepare(data, samples)?;
    let initial_loss = mean_eval_loss(model, &prepared)?;
    let mut adam = AdamState::new(
        &model.store,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut grads = GradBuffer::new(&model.store);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let (s, inputs, targets) = &prepared[i];
                let mut sess = Session::new(&model.store, true, derive_seed(seed, epoch, i));
                let out = model.forward(&mut sess, inputs)?;
                let loss = model.loss(&mut sess, &out, targets)?;
                let value = sess.scalar(loss);
                if !value.is_finite() {
                    let culprit = sess.first_non_finite().unwrap_or_else(|| "loss".into());
                    return Err(Error::NonFinite(format!("{culprit} (epoch {}, sample {s:?})", epoch + 1)));
                }
                total += value;
                let scaled = sess.scale(loss, weight);
                sess.backward(scaled)?;
                grads.accumulate(&sess);
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("parameter gradient (epoch {})", epoch + 1)));
            }
            adam.step(&mut model.store, grads.grads())?;
        }
        epoch_losses.push(total / prepared.len() as f64);
    }

    Ok(TrainHistory {
        initial_loss,
        final_loss: mean_eval_loss(model, &prepared)?,
        epoch_losses,
        optimizer_steps: adam.steps(),
        train_samples: prepared.len(),
    })
}

fn sorted(data: &ModelData, samples: &[Sample]) -> Vec<Sample> {
    let mut v = samples.to_vec();
    v.sort_by_key(|s| (data.minute(*s), s.road));
    v.dedup();
    v
}

/// Denormalized error metrics of `model` on `samples`; the result does not
/// depend on the order of `samples`.
pub fn evaluate(model: &Mcan, data: &ModelData, samples: &[Sample]) -> Result<MetricsReport> {
    let mut acc = MetricsAccumulator::new(data.config().horizon);
    for s in sorted(data, samples) {
        let pred = model.predict(&data.inputs(s)?)?;
        acc.add(&data.to_kmh(s.road, &pred.speed), data.truth_kmh(s))?;
    }
    acc.finish()
}

/// Daily-average forecast: step `k` of sample `(road, t)` predicts the
/// fitted average of slot `(t + k) mod T_d`.
pub fn historical_average(data: &ModelData, samples: &[Sample]) -> Result<MetricsReport> {
    let h = data.config().horizon;
    let mut acc = MetricsAccumulator::new(h);
    for s in sorted(data, samples) {
        if !data.is_eligible(s) {
            return Err(Error::invalid(format!("sample {s:?} is not eligible")));
        }
        let pred: Vec<f64> = (0..h).map(|k| data.daily_average_kmh(s.road, s.t + k)).collect();
        acc.add(&pred, data.truth_kmh(s))?;
    }
    acc.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRow {
    pub road_id: usize,
    pub t: usize,
    pub step: usize,
    pub speed_kmh: f64,
}

/// One row per horizon step and sample, in time order.
pub fn predict_rows(model: &Mcan, data: &ModelData, samples: &[Sample]) -> Result<Vec<PredictionRow>> {
    let mut rows = Vec::new();
    for s in sorted(data, samples) {
        let pred = model.predict(&data.inputs(s)?)?;
        let id = data.graph().nodes()[s.road].id;
        for (k, v) in data.to_kmh(s.road, &pred.speed).into_iter().enumerate() {
            rows.push(PredictionRow {
                road_id: id,
                t: s.t,
                step: k + 1,
                speed_kmh: v,
            });
        }
    }
    Ok(rows)
}

/// Outcome of training on one cross-validation fold.
#[derive(Clone, Debug)]
pub struct FoldRun {
    pub fold: Fold,
    pub model: Mcan,
    pub data: ModelData,
    pub train_samples: Vec<Sample>,
    pub history: TrainHistory,
}

impl FoldRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, self.data.normalization())
    }

    pub fn evaluate(&self) -> Result<MetricsReport> {
        evaluate(&self.model, &self.data, &self.fold.test)
    }

    pub fn baseline(&self) -> Result<MetricsReport> {
        historical_average(&self.data, &self.fold.test)
    }
}

/// Seeded subset of at most `max` samples, kept in time order.
pub fn subsample(samples: &[Sample], max: Option<usize>, seed: u64) -> Vec<Sample> {
    match max {
        Some(m) if m < samples.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5EED));
            let mut idx = sample_indices(&mut rng, samples.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| samples[i]).collect()
        }
        _ => samples.to_vec(),
    }
}

/// Split, fit normalization on the training side of the held-out fold,
/// build a fresh model and train it.
pub fn train_fold(ds: &Dataset, model_config: &ModelConfig, config: &TrainConfig, seed: u64) -> Result<FoldRun> {
    config.validate()?;
    model_config.validate()?;
    let mut folds = kfold_split(ds, model_config, config.folds, config.shuffled_folds, seed)?;
    let fold = folds.swap_remove(config.holdout_fold());
    let norm: Normalization = fold.fit_normalization(ds)?;
    let data = ModelData::new(ds, &norm, model_config)?;
    let train_samples = subsample(&fold.train, config.max_train_samples, seed);
    let mut model = Mcan::new(model_config, seed)?;
    let history = train(&mut model, &data, &train_samples, config, seed)?;
    Ok(FoldRun {
        fold,
        model,
        data,
        train_samples,
        history,
    })
}
