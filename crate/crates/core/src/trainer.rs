//! AdamW training loop: negative sampling, epoch scheduling,
//! validation-based model selection, and deterministic seeding.
//!
//! Optimization happens in the ambient Euclidean coordinates of the
//! embedding table; the geometry only enters through scores and gradients.
//! Updates are sparse: only rows touched by a batch move, and weight decay
//! is applied lazily on touch.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataio::InteractionDataset;
use crate::error::{Error, Result};
use crate::eval::{hit_rate, ndcg, rank_validation};
use crate::model::{build_model, EmbeddingTable, GradBuffer, ModelConfig, TripletBatch};

/// AdamW hyperparameters. Decay is decoupled from the moment estimates and
/// never applies to the margin scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Adam moment estimates congruent to an [`EmbeddingTable`], plus the two
/// margin-scalar moments.
pub struct OptimizerState {
    params: OptimizerParams,
    step_count: u64,
    dim: usize,
    m_users: Vec<f64>,
    v_users: Vec<f64>,
    m_items: Vec<f64>,
    v_items: Vec<f64>,
    m_margin: [f64; 2],
    v_margin: [f64; 2],
}

impl OptimizerState {
    pub fn new(table: &EmbeddingTable, params: OptimizerParams) -> Self {
        OptimizerState {
            params,
            step_count: 0,
            dim: table.dim(),
            m_users: vec![0.0; table.n_users() * table.dim()],
            v_users: vec![0.0; table.n_users() * table.dim()],
            m_items: vec![0.0; table.n_items() * table.dim()],
            v_items: vec![0.0; table.n_items() * table.dim()],
            m_margin: [0.0; 2],
            v_margin: [0.0; 2],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One AdamW step over the rows present in `grads`. The margin scalars
    /// are stepped unconditionally with weight decay forced to zero; with
    /// all-zero margin gradients their moments stay zero and the update is
    /// an exact no-op.
    ///
    /// A non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, table: &mut EmbeddingTable, grads: &GradBuffer) -> Result<()> {
        if let Some(param) = first_non_finite(grads) {
            return Err(Error::NonFiniteGradient {
                param,
                step: self.step_count + 1,
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.params.beta1.powi(t);
        let bc2 = 1.0 - self.params.beta2.powi(t);
        let p = self.params;
        for (&row, g) in &grads.users {
            let lo = row * self.dim;
            adamw_row(
                table.user_mut(row),
                &mut self.m_users[lo..lo + self.dim],
                &mut self.v_users[lo..lo + self.dim],
                g,
                p,
                p.weight_decay,
                bc1,
                bc2,
            );
        }
        for (&row, g) in &grads.items {
            let lo = row * self.dim;
            adamw_row(
                table.item_mut(row),
                &mut self.m_items[lo..lo + self.dim],
                &mut self.v_items[lo..lo + self.dim],
                g,
                p,
                p.weight_decay,
                bc1,
                bc2,
            );
        }
        let (mut a, mut b) = (table.margin_a, table.margin_b);
        adamw_row(
            std::slice::from_mut(&mut a),
            &mut self.m_margin[..1],
            &mut self.v_margin[..1],
            &[grads.margin_a],
            p,
            0.0,
            bc1,
            bc2,
        );
        adamw_row(
            std::slice::from_mut(&mut b),
            &mut self.m_margin[1..],
            &mut self.v_margin[1..],
            &[grads.margin_b],
            p,
            0.0,
            bc1,
            bc2,
        );
        table.margin_a = a;
        table.margin_b = b;
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn adamw_row(
    theta: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    g: &[f64],
    p: OptimizerParams,
    weight_decay: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -=
            p.learning_rate * (m_hat / (v_hat.sqrt() + p.epsilon) + weight_decay * theta[i]);
    }
}

fn first_non_finite(grads: &GradBuffer) -> Option<String> {
    for (&row, g) in &grads.users {
        if g.iter().any(|x| !x.is_finite()) {
            return Some(format!("user row {row}"));
        }
    }
    for (&row, g) in &grads.items {
        if g.iter().any(|x| !x.is_finite()) {
            return Some(format!("item row {row}"));
        }
    }
    if !grads.margin_a.is_finite() {
        return Some("margin_a".into());
    }
    if !grads.margin_b.is_finite() {
        return Some("margin_b".into());
    }
    None
}

/// Epoch scheduling knobs plus the optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    /// Consecutive epochs without validation NDCG@10 improvement tolerated
    /// before stopping. Zero disables early stopping.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerParams,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 100,
            batch_size: 1024,
            negatives_per_positive: 1,
            patience: 10,
            seed: 42,
            optimizer: OptimizerParams::default(),
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config(
                "negatives_per_positive must be at least 1".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        self.optimizer.validate()
    }
}

/// Draws `count` items uniformly from the catalog items outside the user's
/// training set. Each draw rejects up to 100 collisions before falling back
/// to a scan of the complement.
pub fn sample_negatives(
    dataset: &InteractionDataset,
    user: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n_items = dataset.n_items();
    let train = dataset.user_train_items(user);
    if train.len() >= n_items {
        return Err(Error::NoNegativeItems { user });
    }
    let mut out = Vec::with_capacity(count);
    let mut complement: Option<Vec<usize>> = None;
    for _ in 0..count {
        let mut picked = None;
        for _ in 0..100 {
            let cand = rng.random_range(0..n_items);
            if train.binary_search(&(cand as u32)).is_err() {
                picked = Some(cand);
                break;
            }
        }
        let item = match picked {
            Some(item) => item,
            None => {
                let free = complement.get_or_insert_with(|| {
                    (0..n_items)
                        .filter(|&i| train.binary_search(&(i as u32)).is_err())
                        .collect()
                });
                free[rng.random_range(0..free.len())]
            }
        };
        out.push(item);
    }
    Ok(out)
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ndcg10: f64,
    pub val_hr10: f64,
    pub wall_seconds: f64,
}

/// Result of a training run. `best_epoch` is 0 when no epoch completed
/// (max_epochs = 0, or divergence in the first epoch), in which case
/// `table` is the untouched initialization.
#[derive(Debug)]
pub struct TrainOutput {
    pub table: EmbeddingTable,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// A non-finite loss or gradient stopped training early; `table` is
    /// the last good checkpoint.
    pub diverged: bool,
}

/// Trains `cfg`'s model kind on the dataset's train split.
///
/// Each epoch shuffles the (user, positive) pairs, draws
/// `negatives_per_positive` fresh negatives per pair, and applies one AdamW
/// step per batch. Validation NDCG@10 is evaluated after every epoch; the
/// checkpoint returned is the one with the best value. Datasets without a
/// validation split log zero validation metrics and keep the first epoch as
/// best.
pub fn train(
    dataset: &InteractionDataset,
    cfg: &ModelConfig,
    schedule: &TrainSchedule,
) -> Result<TrainOutput> {
    train_with_progress(dataset, cfg, schedule, |_| {})
}

/// [`train`] with a callback invoked after every completed epoch, for
/// streaming logs.
pub fn train_with_progress(
    dataset: &InteractionDataset,
    cfg: &ModelConfig,
    schedule: &TrainSchedule,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutput> {
    schedule.validate()?;
    let model = build_model(cfg.clone())?;
    let mut table = EmbeddingTable::init(cfg, dataset.n_users(), dataset.n_items(), schedule.seed);
    let mut opt = OptimizerState::new(&table, schedule.optimizer);
    let positives = dataset.train_pairs();
    debug_assert!(!positives.is_empty(), "datasets always keep a train split");

    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut grads = GradBuffer::new(cfg.dim);
    let mut log: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(f64, EmbeddingTable, usize)> = None;
    let mut epochs_since_best = 0usize;
    let mut diverged = false;

    'epochs: for epoch in 1..=schedule.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut rows = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            let mut batch = TripletBatch {
                users: Vec::with_capacity(chunk.len() * schedule.negatives_per_positive),
                positives: Vec::with_capacity(chunk.len() * schedule.negatives_per_positive),
                negatives: Vec::with_capacity(chunk.len() * schedule.negatives_per_positive),
            };
            for &idx in chunk {
                let (user, positive) = positives[idx];
                let negatives = sample_negatives(
                    dataset,
                    user as usize,
                    schedule.negatives_per_positive,
                    &mut rng,
                )?;
                for negative in negatives {
                    batch.users.push(user as usize);
                    batch.positives.push(positive as usize);
                    batch.negatives.push(negative);
                }
            }
            let loss = model.loss_and_grad(&table, &batch, &mut grads);
            if !loss.is_finite() {
                diverged = true;
                break 'epochs;
            }
            if opt.step(&mut table, &grads).is_err() {
                diverged = true;
                break 'epochs;
            }
            loss_sum += loss * batch.len() as f64;
            rows += batch.len();
        }
        let train_loss = loss_sum / rows.max(1) as f64;

        let results = rank_validation(&table, model.as_ref(), dataset);
        let (val_ndcg10, val_hr10) = if results.is_empty() {
            (0.0, 0.0)
        } else {
            (
                ndcg(&results, 10).expect("nonempty results"),
                hit_rate(&results, 10).expect("nonempty results"),
            )
        };
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_ndcg10,
            val_hr10,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        on_epoch(log.last().expect("just pushed"));

        if best.as_ref().is_none_or(|(b, _, _)| val_ndcg10 > *b) {
            best = Some((val_ndcg10, table.clone(), epoch));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if schedule.patience > 0 && epochs_since_best >= schedule.patience {
                break;
            }
        }
    }

    let (table, best_epoch) = match best {
        Some((_, best_table, epoch)) => (best_table, epoch),
        None => (table, 0),
    };
    Ok(TrainOutput {
        table,
        log,
        best_epoch,
        diverged,
    })
}
