//! Parameter storage and the six score/loss strategies: TriplH, TriplE, BPR,
//! MF, LorentzFM, and HyperBPR.
//!
//! All models keep their parameters in an [`EmbeddingTable`] of plain ambient
//! vectors and are optimized in Euclidean space; hyperbolic structure enters
//! only through the score functions (the lift map for Lorentz scores, ball
//! clipping for HyperBPR). Each kind implements [`RankingModel`] and is
//! constructed by name through the [`ModelRegistry`].

mod checkpoint;
mod kinds;
mod losses;
pub(crate) mod scores;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use kinds::{build_model, score, ModelRegistry, RankingModel};
pub use losses::{bpr_loss, pointwise_loss, triplh_loss};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The model strategies known to the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TriplH,
    TriplE,
    Bpr,
    Mf,
    LorentzFm,
    HyperBpr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::TriplH,
        ModelKind::TriplE,
        ModelKind::Bpr,
        ModelKind::Mf,
        ModelKind::LorentzFm,
        ModelKind::HyperBpr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::TriplH => "TriplH",
            ModelKind::TriplE => "TriplE",
            ModelKind::Bpr => "BPR",
            ModelKind::Mf => "MF",
            ModelKind::LorentzFm => "LorentzFM",
            ModelKind::HyperBpr => "HyperBPR",
        }
    }

    /// Comma-separated list of valid kind names, for error messages.
    pub fn valid_names() -> String {
        Self::ALL
            .iter()
            .map(|k| k.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownModelKind {
                given: s.to_string(),
                expected: Self::valid_names(),
            })
    }
}

impl Serialize for ModelKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ModelKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// Hyperparameters identifying a model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_kind: ModelKind,
    /// Embedding dimension d.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Hyperboloid curvature; the Lorentz-score models are defined at 1.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Regularization weight on the item-item term (TriplH/TriplE only).
    #[serde(default)]
    pub lambda: f64,
    /// Standard deviation of the Gaussian init.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_dim() -> usize {
    64
}

fn default_beta() -> f64 {
    1.0
}

fn default_init_scale() -> f64 {
    0.01
}

impl ModelConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        ModelConfig {
            model_kind,
            dim: default_dim(),
            beta: default_beta(),
            lambda: 0.0,
            init_scale: default_init_scale(),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::Config(format!("dim must be >= 1, got {}", self.dim)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Config(format!(
                "beta must be a positive real, got {}",
                self.beta
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config(format!(
                "init_scale must be nonnegative, got {}",
                self.init_scale
            )));
        }
        let lorentz = matches!(self.model_kind, ModelKind::TriplH | ModelKind::LorentzFm);
        if lorentz && self.beta != 1.0 {
            return Err(Error::Config(format!(
                "{} uses the Lorentz score, which is defined at beta = 1; got beta = {}",
                self.model_kind, self.beta
            )));
        }
        Ok(())
    }
}

/// Dense parameter storage: one ambient row per user and per item, plus the
/// global adaptive-margin scalars a and b (meaningful for TriplH/TriplE only).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    n_users: usize,
    n_items: usize,
    dim: usize,
    users: Vec<f64>,
    items: Vec<f64>,
    pub margin_a: f64,
    pub margin_b: f64,
}

impl EmbeddingTable {
    /// Gaussian init: every entry i.i.d. N(0, init_scale^2); margins start at
    /// the identity margin a = 1, b = 0. Same seed, same table.
    pub fn init(cfg: &ModelConfig, n_users: usize, n_items: usize, seed: u64) -> Self {
        assert!(n_users > 0 && n_items > 0, "counts must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, cfg.init_scale).expect("validated init_scale");
        let mut sample =
            |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let users = sample(n_users * cfg.dim);
        let items = sample(n_items * cfg.dim);
        EmbeddingTable {
            n_users,
            n_items,
            dim: cfg.dim,
            users,
            items,
            margin_a: 1.0,
            margin_b: 0.0,
        }
    }

    pub(crate) fn from_parts(
        n_users: usize,
        n_items: usize,
        dim: usize,
        users: Vec<f64>,
        items: Vec<f64>,
        margin_a: f64,
        margin_b: f64,
    ) -> Self {
        assert_eq!(users.len(), n_users * dim);
        assert_eq!(items.len(), n_items * dim);
        EmbeddingTable {
            n_users,
            n_items,
            dim,
            users,
            items,
            margin_a,
            margin_b,
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.users[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.items[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn users_flat(&self) -> &[f64] {
        &self.users
    }

    pub(crate) fn items_flat(&self) -> &[f64] {
        &self.items
    }

    pub fn all_finite(&self) -> bool {
        self.users.iter().all(|v| v.is_finite())
            && self.items.iter().all(|v| v.is_finite())
            && self.margin_a.is_finite()
            && self.margin_b.is_finite()
    }
}

/// One training batch: parallel index arrays, one (user, positive, negative)
/// triplet per row.
#[derive(Debug, Clone, Default)]
pub struct TripletBatch {
    pub users: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl TripletBatch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Checks shape and index ranges. Membership of positives/negatives in
    /// the user's training set is the sampler's contract, not rechecked here.
    pub fn validate(&self, n_users: usize, n_items: usize) -> Result<()> {
        if self.users.len() != self.positives.len() || self.users.len() != self.negatives.len() {
            return Err(Error::Config(format!(
                "triplet arrays disagree in length: {} users, {} positives, {} negatives",
                self.users.len(),
                self.positives.len(),
                self.negatives.len()
            )));
        }
        for k in 0..self.len() {
            if self.users[k] >= n_users {
                return Err(Error::Config(format!(
                    "user index {} out of range",
                    self.users[k]
                )));
            }
            if self.positives[k] >= n_items || self.negatives[k] >= n_items {
                return Err(Error::Config(format!(
                    "item index out of range in triplet {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Sparse gradient accumulator: only rows touched by a batch get entries.
/// BTreeMap keeps merge and optimizer traversal in index order, which makes
/// parallel chunk reduction deterministic.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    dim: usize,
    pub users: BTreeMap<usize, Vec<f64>>,
    pub items: BTreeMap<usize, Vec<f64>>,
    pub margin_a: f64,
    pub margin_b: f64,
}

impl GradBuffer {
    pub fn new(dim: usize) -> Self {
        GradBuffer {
            dim,
            users: BTreeMap::new(),
            items: BTreeMap::new(),
            margin_a: 0.0,
            margin_b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clear(&mut self) {
        self.users.clear();
        self.items.clear();
        self.margin_a = 0.0;
        self.margin_b = 0.0;
    }

    /// Adds `scale * row` into the user's gradient row.
    pub(crate) fn add_user(&mut self, u: usize, row: &[f64], scale: f64) {
        axpy(
            self.users.entry(u).or_insert_with(|| vec![0.0; self.dim]),
            row,
            scale,
        );
    }

    pub(crate) fn add_item(&mut self, i: usize, row: &[f64], scale: f64) {
        axpy(
            self.items.entry(i).or_insert_with(|| vec![0.0; self.dim]),
            row,
            scale,
        );
    }

    /// Folds another buffer in; used to reduce per-chunk buffers in a fixed
    /// order.
    pub(crate) fn merge(&mut self, other: GradBuffer) {
        debug_assert_eq!(self.dim, other.dim);
        for (u, row) in other.users {
            self.add_user(u, &row, 1.0);
        }
        for (i, row) in other.items {
            self.add_item(i, &row, 1.0);
        }
        self.margin_a += other.margin_a;
        self.margin_b += other.margin_b;
    }

    pub fn is_finite(&self) -> bool {
        self.users
            .values()
            .chain(self.items.values())
            .all(|r| r.iter().all(|v| v.is_finite()))
            && self.margin_a.is_finite()
            && self.margin_b.is_finite()
    }
}

fn axpy(dst: &mut [f64], src: &[f64], scale: f64) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
            let lower = kind.as_str().to_lowercase();
            assert_eq!(lower.parse::<ModelKind>().unwrap(), kind);
        }
        let err = "TripleH".parse::<ModelKind>().unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("TriplH") && msg.contains("HyperBPR"),
            "want kind list, got: {msg}"
        );
    }

    #[test]
    fn kind_serde_uses_canonical_names() {
        let json = serde_json::to_string(&ModelKind::LorentzFm).unwrap();
        assert_eq!(json, "\"LorentzFM\"");
        let back: ModelKind = serde_json::from_str("\"lorentzfm\"").unwrap();
        assert_eq!(back, ModelKind::LorentzFm);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err =
            serde_json::from_str::<ModelConfig>(r#"{"model_kind": "BPR", "dmi": 8}"#).unwrap_err();
        assert!(err.to_string().contains("dmi"));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModelConfig::new(ModelKind::TriplH);
        cfg.validate().unwrap();
        cfg.dim = 0;
        assert!(cfg.validate().is_err());
        cfg.dim = 8;
        cfg.beta = 2.0;
        assert!(
            cfg.validate().is_err(),
            "Lorentz-score models require beta = 1"
        );
        cfg.model_kind = ModelKind::TriplE;
        cfg.validate().unwrap();
        cfg.lambda = -0.1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ModelConfig::new(ModelKind::TriplH).with_dim(6);
        let a = EmbeddingTable::init(&cfg, 4, 5, 42);
        let b = EmbeddingTable::init(&cfg, 4, 5, 42);
        let c = EmbeddingTable::init(&cfg, 4, 5, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.margin_a, 1.0);
        assert_eq!(a.margin_b, 0.0);
        assert!(a.all_finite());
    }

    #[test]
    fn init_scale_zero_gives_zero_table() {
        let mut cfg = ModelConfig::new(ModelKind::TriplH).with_dim(4);
        cfg.init_scale = 0.0;
        let t = EmbeddingTable::init(&cfg, 3, 3, 1);
        assert!(t
            .users_flat()
            .iter()
            .chain(t.items_flat())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn grad_buffer_merge_accumulates() {
        let mut a = GradBuffer::new(2);
        a.add_user(1, &[1.0, 2.0], 1.0);
        a.margin_a = 0.5;
        let mut b = GradBuffer::new(2);
        b.add_user(1, &[10.0, 20.0], 0.5);
        b.add_item(0, &[3.0, 3.0], 1.0);
        b.margin_b = -1.0;
        a.merge(b);
        assert_eq!(a.users[&1], vec![6.0, 12.0]);
        assert_eq!(a.items[&0], vec![3.0, 3.0]);
        assert_eq!(a.margin_a, 0.5);
        assert_eq!(a.margin_b, -1.0);
    }

    #[test]
    fn batch_validate_catches_bad_indices() {
        let batch = TripletBatch {
            users: vec![0, 1],
            positives: vec![0, 5],
            negatives: vec![1, 0],
        };
        assert!(batch.validate(2, 6).is_ok());
        assert!(batch.validate(2, 5).is_err());
        assert!(batch.validate(1, 6).is_err());
    }
}
