//! Loss engines shared by the model strategies.
//!
//! Two engines cover all six kinds: a triplet engine (optionally with the
//! adaptive margin f(x) = a*x + b and an item-item regularizer) and a
//! pointwise BCE engine. Batches are processed in fixed-size chunks whose
//! partial results are reduced in chunk order, so single- and multi-threaded
//! runs produce bitwise-identical losses and gradients.

use std::ops::Range;

use rayon::prelude::*;

use super::scores::{DotScorer, LorentzScorer, PoincareScorer, Scorer};
use super::{EmbeddingTable, GradBuffer, ModelConfig, ModelKind, TripletBatch};
use crate::geometry::{dot, norm_sq};

/// Triplets per work unit; fixed so the reduction order never depends on the
/// thread count.
const CHUNK: usize = 256;

/// Item-item regularizer of the triplet losses.
#[derive(Clone, Copy, PartialEq)]
pub(crate) enum Reg {
    /// Squared Lorentzian inner product of the lifted items (TriplH).
    LorentzLift,
    /// Squared dot product, the Euclidean specialization (TriplE).
    Dot,
}

impl Reg {
    fn value(self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Reg::LorentzLift => {
                let p0 = (1.0 + norm_sq(p)).sqrt();
                let q0 = (1.0 + norm_sq(q)).sqrt();
                -p0 * q0 + dot(p, q)
            }
            Reg::Dot => dot(p, q),
        }
    }

    /// Accumulates `w * d(value)/dp` and `w * d(value)/dq`.
    fn grad_acc(self, p: &[f64], q: &[f64], w: f64, gp: &mut [f64], gq: &mut [f64]) {
        match self {
            Reg::LorentzLift => {
                let p0 = (1.0 + norm_sq(p)).sqrt();
                let q0 = (1.0 + norm_sq(q)).sqrt();
                for i in 0..p.len() {
                    gp[i] += w * (q[i] - (q0 / p0) * p[i]);
                    gq[i] += w * (p[i] - (p0 / q0) * q[i]);
                }
            }
            Reg::Dot => {
                for i in 0..p.len() {
                    gp[i] += w * q[i];
                    gq[i] += w * p[i];
                }
            }
        }
    }
}

/// Numerically stable softplus(t) = ln(1 + e^t), so that -ln sigma(z) =
/// softplus(-z) never overflows.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct TripletEngine<'a, S> {
    scorer: &'a S,
    /// None disables both margin and regularizer (plain BPR structure).
    margin: Option<(f64, f64)>,
    reg: Option<(Reg, f64)>,
}

impl<S: Scorer> TripletEngine<'_, S> {
    /// Processes `range` of the batch, adding `scale`-weighted gradients into
    /// `buf` and returning the `scale`-weighted loss sum.
    fn chunk(
        &self,
        table: &EmbeddingTable,
        batch: &TripletBatch,
        range: Range<usize>,
        scale: f64,
        buf: &mut GradBuffer,
    ) -> f64 {
        let dim = table.dim();
        let mut gu = vec![0.0; dim];
        let mut gp = vec![0.0; dim];
        let mut gn = vec![0.0; dim];
        let mut loss = 0.0;
        for k in range {
            let (uk, pk, nk) = (batch.users[k], batch.positives[k], batch.negatives[k]);
            let u = table.user(uk);
            let vp = table.item(pk);
            let vn = table.item(nk);

            let s_up = self.scorer.score(u, vp);
            let s_un = self.scorer.score(u, vn);
            let mut z = s_up - s_un;
            let mut s_pn = 0.0;
            if let Some((a, b)) = self.margin {
                s_pn = self.scorer.score(vp, vn);
                z -= a * s_pn + b;
            }
            loss += scale * softplus(-z);

            // dL/dz for the -ln sigma(z) term.
            let e = sigmoid(z) - 1.0;
            gu.fill(0.0);
            gp.fill(0.0);
            gn.fill(0.0);
            self.scorer.grad_acc(u, vp, e, &mut gu, &mut gp);
            self.scorer.grad_acc(u, vn, -e, &mut gu, &mut gn);
            if let Some((a, _)) = self.margin {
                self.scorer.grad_acc(vp, vn, -e * a, &mut gp, &mut gn);
                buf.margin_a += scale * -e * s_pn;
                buf.margin_b += scale * -e;
            }
            if let Some((reg, lambda)) = self.reg {
                let g = reg.value(vp, vn);
                loss += scale * lambda * g * g;
                reg.grad_acc(vp, vn, 2.0 * lambda * g, &mut gp, &mut gn);
            }
            buf.add_user(uk, &gu, scale);
            buf.add_item(pk, &gp, scale);
            buf.add_item(nk, &gn, scale);
        }
        loss
    }
}

struct PointwiseEngine<'a, S> {
    scorer: &'a S,
}

impl<S: Scorer> PointwiseEngine<'_, S> {
    /// BCE over two samples per row: (u, v+) labeled 1 and (u, v-) labeled 0.
    fn chunk(
        &self,
        table: &EmbeddingTable,
        batch: &TripletBatch,
        range: Range<usize>,
        scale: f64,
        buf: &mut GradBuffer,
    ) -> f64 {
        let dim = table.dim();
        let mut gu = vec![0.0; dim];
        let mut gi = vec![0.0; dim];
        let mut loss = 0.0;
        for k in range {
            let (uk, pk, nk) = (batch.users[k], batch.positives[k], batch.negatives[k]);
            let u = table.user(uk);

            let s_p = self.scorer.score(u, table.item(pk));
            loss += scale * softplus(-s_p);
            let e_p = sigmoid(s_p) - 1.0;
            gu.fill(0.0);
            gi.fill(0.0);
            self.scorer
                .grad_acc(u, table.item(pk), e_p, &mut gu, &mut gi);
            buf.add_user(uk, &gu, scale);
            buf.add_item(pk, &gi, scale);

            let s_n = self.scorer.score(u, table.item(nk));
            loss += scale * softplus(s_n);
            let e_n = sigmoid(s_n);
            gu.fill(0.0);
            gi.fill(0.0);
            self.scorer
                .grad_acc(u, table.item(nk), e_n, &mut gu, &mut gi);
            buf.add_user(uk, &gu, scale);
            buf.add_item(nk, &gi, scale);
        }
        loss
    }
}

/// Runs a chunk function over the whole batch, in parallel when the batch
/// spans several chunks, and reduces partial losses and gradients in chunk
/// order.
fn run_chunked<F>(len: usize, dim: usize, grads: &mut GradBuffer, chunk_fn: F) -> f64
where
    F: Fn(Range<usize>, &mut GradBuffer) -> f64 + Sync,
{
    grads.clear();
    if len == 0 {
        return 0.0;
    }
    let ranges: Vec<Range<usize>> = (0..len.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(len))
        .collect();
    let partials: Vec<(f64, GradBuffer)> = if ranges.len() == 1 {
        let mut buf = GradBuffer::new(dim);
        let loss = chunk_fn(ranges[0].clone(), &mut buf);
        vec![(loss, buf)]
    } else {
        ranges
            .into_par_iter()
            .map(|r| {
                let mut buf = GradBuffer::new(dim);
                let loss = chunk_fn(r, &mut buf);
                (loss, buf)
            })
            .collect()
    };
    let mut total = 0.0;
    for (loss, buf) in partials {
        total += loss;
        grads.merge(buf);
    }
    total
}

fn run_triplet<S: Scorer>(
    scorer: &S,
    margin: Option<(f64, f64)>,
    reg: Option<(Reg, f64)>,
    table: &EmbeddingTable,
    batch: &TripletBatch,
    grads: &mut GradBuffer,
) -> f64 {
    debug_assert!(batch.validate(table.n_users(), table.n_items()).is_ok());
    let engine = TripletEngine {
        scorer,
        margin,
        reg,
    };
    let scale = if batch.is_empty() {
        0.0
    } else {
        1.0 / batch.len() as f64
    };
    run_chunked(batch.len(), table.dim(), grads, |r, buf| {
        engine.chunk(table, batch, r, scale, buf)
    })
}

fn run_pointwise<S: Scorer>(
    scorer: &S,
    table: &EmbeddingTable,
    batch: &TripletBatch,
    grads: &mut GradBuffer,
) -> f64 {
    debug_assert!(batch.validate(table.n_users(), table.n_items()).is_ok());
    let engine = PointwiseEngine { scorer };
    // Two BCE samples per row.
    let scale = if batch.is_empty() {
        0.0
    } else {
        1.0 / (2 * batch.len()) as f64
    };
    run_chunked(batch.len(), table.dim(), grads, |r, buf| {
        engine.chunk(table, batch, r, scale, buf)
    })
}

/// Triplet loss with adaptive margin,
/// mean over the batch of `-ln sigma(S(u,v+) - S(u,v-) - (a*S(v+,v-) + b))`
/// plus `lambda * <v+,v->^2` (Lorentzian of the lifted items for TriplH, dot
/// product for TriplE). Gradients cover the touched rows and the margin
/// scalars. Panics unless `cfg.model_kind` is TriplH or TriplE.
pub fn triplh_loss(
    table: &EmbeddingTable,
    cfg: &ModelConfig,
    batch: &TripletBatch,
    grads: &mut GradBuffer,
) -> f64 {
    let margin = Some((table.margin_a, table.margin_b));
    match cfg.model_kind {
        ModelKind::TriplH => run_triplet(
            &LorentzScorer,
            margin,
            Some((Reg::LorentzLift, cfg.lambda)),
            table,
            batch,
            grads,
        ),
        ModelKind::TriplE => run_triplet(
            &DotScorer,
            margin,
            Some((Reg::Dot, cfg.lambda)),
            table,
            batch,
            grads,
        ),
        other => panic!("triplh_loss expects TriplH or TriplE, got {other}"),
    }
}

/// Plain pairwise BPR loss, mean of `-ln sigma(S(u,v+) - S(u,v-))`. BPR uses
/// the dot product, HyperBPR the negative Poincare distance. Panics on other
/// kinds.
pub fn bpr_loss(
    table: &EmbeddingTable,
    cfg: &ModelConfig,
    batch: &TripletBatch,
    grads: &mut GradBuffer,
) -> f64 {
    match cfg.model_kind {
        ModelKind::Bpr => run_triplet(&DotScorer, None, None, table, batch, grads),
        ModelKind::HyperBpr => run_triplet(&PoincareScorer, None, None, table, batch, grads),
        other => panic!("bpr_loss expects BPR or HyperBPR, got {other}"),
    }
}

/// Pointwise BCE: positives labeled 1, sampled negatives labeled 0, through
/// `sigma(score)`; mean over the 2*len scored samples. MF uses the dot
/// product, LorentzFM the Lorentz score. Panics on other kinds.
pub fn pointwise_loss(
    table: &EmbeddingTable,
    cfg: &ModelConfig,
    batch: &TripletBatch,
    grads: &mut GradBuffer,
) -> f64 {
    match cfg.model_kind {
        ModelKind::Mf => run_pointwise(&DotScorer, table, batch, grads),
        ModelKind::LorentzFm => run_pointwise(&LorentzScorer, table, batch, grads),
        other => panic!("pointwise_loss expects MF or LorentzFM, got {other}"),
    }
}
