//! The [`RankingModel`] strategy trait, its six implementations, and the
//! name-keyed [`ModelRegistry`] through which they are constructed.

use super::losses::{bpr_loss, pointwise_loss, triplh_loss};
use super::scores::{
    clip_to_ball, lorentz_score_ambient, poincare_neg_dist_clipped, PoincareScorer, Scorer,
};
use super::{EmbeddingTable, GradBuffer, ModelConfig, ModelKind, TripletBatch};
use crate::error::{Error, Result};
use crate::geometry::dot;

/// A scoring/training strategy over a shared [`EmbeddingTable`].
///
/// Implementations are stateless apart from their config; all learned
/// parameters live in the table, so a frozen table can be scored concurrently
/// while training holds the single mutable reference.
pub trait RankingModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn config(&self) -> &ModelConfig;

    /// Relevance score for one user-item pair; higher means more relevant
    /// for every model kind.
    fn score(&self, table: &EmbeddingTable, user: usize, item: usize) -> f64;

    /// Scores every catalog item for `user`. `out` must have length
    /// `n_items`.
    fn score_all(&self, table: &EmbeddingTable, user: usize, out: &mut [f64]) {
        assert_eq!(out.len(), table.n_items());
        for (item, slot) in out.iter_mut().enumerate() {
            *slot = self.score(table, user, item);
        }
    }

    /// Mean batch loss; `scale`-weighted gradients replace the contents of
    /// `grads`.
    fn loss_and_grad(
        &self,
        table: &EmbeddingTable,
        batch: &TripletBatch,
        grads: &mut GradBuffer,
    ) -> f64;

    /// Whether the adaptive-margin scalars a, b take part in this model's
    /// loss.
    fn uses_margin(&self) -> bool {
        false
    }
}

/// Per-pair score for a config, without constructing a model object.
/// Panics on out-of-range indices.
pub fn score(table: &EmbeddingTable, cfg: &ModelConfig, user: usize, item: usize) -> f64 {
    assert!(user < table.n_users(), "user index {user} out of range");
    assert!(item < table.n_items(), "item index {item} out of range");
    let u = table.user(user);
    let v = table.item(item);
    match cfg.model_kind {
        ModelKind::TriplH | ModelKind::LorentzFm => lorentz_score_ambient(u, v),
        ModelKind::TriplE | ModelKind::Mf | ModelKind::Bpr => dot(u, v),
        ModelKind::HyperBpr => PoincareScorer.score(u, v),
    }
}

macro_rules! strategy {
    ($(#[$doc:meta])* $name:ident, $kind:expr, loss = $loss:path, margin = $margin:expr) => {
        $(#[$doc])*
        pub struct $name {
            cfg: ModelConfig,
        }

        impl $name {
            pub fn new(mut cfg: ModelConfig) -> Result<Self> {
                // The registry entry, not the config field, decides the
                // strategy; keep the config consistent with it.
                cfg.model_kind = $kind;
                cfg.validate()?;
                Ok($name { cfg })
            }
        }

        impl RankingModel for $name {
            fn kind(&self) -> ModelKind {
                $kind
            }

            fn config(&self) -> &ModelConfig {
                &self.cfg
            }

            fn score(&self, table: &EmbeddingTable, user: usize, item: usize) -> f64 {
                score(table, &self.cfg, user, item)
            }

            fn loss_and_grad(
                &self,
                table: &EmbeddingTable,
                batch: &TripletBatch,
                grads: &mut GradBuffer,
            ) -> f64 {
                $loss(table, &self.cfg, batch, grads)
            }

            fn uses_margin(&self) -> bool {
                $margin
            }
        }
    };
}

strategy!(
    /// Lorentz-score triplet model with adaptive margin and Lorentzian
    /// item-item regularization.
    TriplHModel, ModelKind::TriplH, loss = triplh_loss, margin = true
);
strategy!(
    /// Euclidean specialization of TriplH: dot-product score, squared
    /// dot-product regularizer.
    TriplEModel, ModelKind::TriplE, loss = triplh_loss, margin = true
);
strategy!(
    /// Matrix factorization with pairwise BPR loss.
    BprModel, ModelKind::Bpr, loss = bpr_loss, margin = false
);
strategy!(
    /// Matrix factorization trained pointwise with BCE.
    MfModel, ModelKind::Mf, loss = pointwise_loss, margin = false
);
strategy!(
    /// Lorentz-score model trained pointwise with BCE.
    LorentzFmModel, ModelKind::LorentzFm, loss = pointwise_loss, margin = false
);
/// BPR over negative Poincare distance; rows are clipped into the ball at
/// use.
pub struct HyperBprModel {
    cfg: ModelConfig,
}

impl HyperBprModel {
    pub fn new(mut cfg: ModelConfig) -> Result<Self> {
        cfg.model_kind = ModelKind::HyperBpr;
        cfg.validate()?;
        Ok(HyperBprModel { cfg })
    }
}

impl RankingModel for HyperBprModel {
    fn kind(&self) -> ModelKind {
        ModelKind::HyperBpr
    }

    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn score(&self, table: &EmbeddingTable, user: usize, item: usize) -> f64 {
        score(table, &self.cfg, user, item)
    }

    /// Catalog scoring clips the user row once and reuses one item scratch
    /// buffer, instead of allocating per pair.
    fn score_all(&self, table: &EmbeddingTable, user: usize, out: &mut [f64]) {
        assert_eq!(out.len(), table.n_items());
        let dim = table.dim();
        let mut cu = vec![0.0; dim];
        let mut ci = vec![0.0; dim];
        clip_to_ball(table.user(user), &mut cu);
        for (item, slot) in out.iter_mut().enumerate() {
            clip_to_ball(table.item(item), &mut ci);
            *slot = poincare_neg_dist_clipped(&cu, &ci);
        }
    }

    fn loss_and_grad(
        &self,
        table: &EmbeddingTable,
        batch: &TripletBatch,
        grads: &mut GradBuffer,
    ) -> f64 {
        bpr_loss(table, &self.cfg, batch, grads)
    }
}

type Factory = fn(ModelConfig) -> Result<Box<dyn RankingModel>>;

/// Name-keyed registry of model strategies. Lookup is case-insensitive;
/// later registrations shadow earlier ones, so callers can override a
/// builtin.
pub struct ModelRegistry {
    entries: Vec<(&'static str, Factory)>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            entries: Vec::new(),
        }
    }

    /// Registry with the six builtin strategies.
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("TriplH", |cfg| Ok(Box::new(TriplHModel::new(cfg)?)));
        reg.register("TriplE", |cfg| Ok(Box::new(TriplEModel::new(cfg)?)));
        reg.register("BPR", |cfg| Ok(Box::new(BprModel::new(cfg)?)));
        reg.register("MF", |cfg| Ok(Box::new(MfModel::new(cfg)?)));
        reg.register("LorentzFM", |cfg| Ok(Box::new(LorentzFmModel::new(cfg)?)));
        reg.register("HyperBPR", |cfg| Ok(Box::new(HyperBprModel::new(cfg)?)));
        reg
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.entries.push((name, factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(&self, name: &str, cfg: ModelConfig) -> Result<Box<dyn RankingModel>> {
        self.entries
            .iter()
            .rev()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, f)| f(cfg.clone()))
            .unwrap_or_else(|| {
                Err(Error::UnknownModelKind {
                    given: name.to_string(),
                    expected: self.names().join(", "),
                })
            })
    }
}

/// Builds the strategy named by `cfg.model_kind` from the builtin registry.
pub fn build_model(cfg: ModelConfig) -> Result<Box<dyn RankingModel>> {
    ModelRegistry::with_builtins().build(cfg.model_kind.as_str(), cfg)
}
