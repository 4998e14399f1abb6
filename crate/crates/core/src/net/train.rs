use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::jaccard;
use crate::net::adam::{adam_step, AdamConfig};
use crate::net::model::{grid_values, Model};

/// Binarization threshold for network outputs.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_batches: usize,
    pub eval_every: usize,
    /// Pairs per split in the fixed evaluation subsets.
    pub eval_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            batch_size: 32,
            learning_rate: a.learning_rate,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            max_batches: 2000,
            eval_every: 100,
            eval_samples: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval interval must be >= 1"));
        }
        self.adam().validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub batch: usize,
    pub split: Split,
    pub jaccard: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Batch index and weights at peak holdout-model Jaccard (holdout-view
    /// Jaccard when the dataset has no held-out models).
    pub peak: Option<(usize, Model)>,
    pub history: Vec<EvalRecord>,
}

/// Indices of the `batch`-th minibatch, drawn with replacement from the
/// training views by a generator keyed on `(seed, batch)`.
pub fn batch_indices(pool: &[usize], batch_size: usize, seed: u64, batch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    (0..batch_size).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Mean thresholded Jaccard of the model over the given pairs.
pub fn mean_jaccard(model: &Model, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in idx.chunks(32) {
        let xs: Vec<_> = chunk.iter().map(|&i| &ds.pairs[i].x).collect();
        for (out, &i) in model.forward_batch(&xs)?.iter().zip(chunk) {
            total += jaccard(&out.threshold(THRESHOLD), &ds.pairs[i].y)?;
        }
    }
    Ok(total / idx.len() as f64)
}

fn eval_subsets(ds: &Dataset, cfg: &TrainConfig) -> Vec<(Split, Vec<usize>)> {
    Split::ALL
        .into_iter()
        .filter_map(|s| {
            let mut idx = ds.indices(s);
            if idx.is_empty() {
                return None;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::MAX - s.code() as u64);
            idx.shuffle(&mut rng);
            idx.truncate(cfg.eval_samples.max(1));
            idx.sort_unstable();
            Some((s, idx))
        })
        .collect()
}

pub fn train(mut model: Model, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.side != model.input_side() {
        return Err(Error::invalid(format!(
            "dataset side {} does not match model input side {}",
            ds.side,
            model.input_side()
        )));
    }
    let pool = ds.indices(Split::TrainView);
    if pool.is_empty() {
        return Err(Error::invalid("dataset has no training views"));
    }
    let subsets = eval_subsets(ds, cfg);
    let peak_split = [Split::HoldoutModel, Split::HoldoutView]
        .into_iter()
        .find(|s| subsets.iter().any(|(t, _)| t == s));
    let adam = cfg.adam();
    let xs: Vec<Vec<f64>> = ds.pairs.iter().map(|p| grid_values(&p.x)).collect();
    let ys: Vec<Vec<f64>> = ds.pairs.iter().map(|p| grid_values(&p.y)).collect();

    let mut history = Vec::new();
    let mut peak: Option<(usize, f64, Model)> = None;
    for b in 0..cfg.max_batches {
        let idx = batch_indices(&pool, cfg.batch_size, cfg.seed, b as u64);
        let bx: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
        let by: Vec<&[f64]> = idx.iter().map(|&i| ys[i].as_slice()).collect();
        let (loss, grad) = model.batch_gradient(&bx, &by)?;
        adam_step(&mut model, &grad, &adam)?;

        let done = b + 1;
        if done % cfg.eval_every == 0 || done == cfg.max_batches {
            let mut line = format!("batch {done} loss {loss:.5}");
            for (split, idx) in &subsets {
                let j = mean_jaccard(&model, ds, idx)?;
                line.push_str(&format!(" {split} {j:.4}"));
                history.push(EvalRecord {
                    batch: done,
                    split: *split,
                    jaccard: j,
                });
                if Some(*split) == peak_split && peak.as_ref().is_none_or(|p| j > p.1) {
                    peak = Some((done, j, model.clone()));
                }
            }
            log::info!("{line}");
        }
    }
    Ok(TrainOutcome {
        model,
        peak: peak.map(|(b, _, m)| (b, m)),
        history,
    })
}
