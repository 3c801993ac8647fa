//! Ambient score kernels and their analytic gradients.
//!
//! These operate on raw parameter rows, not [`crate::geometry`] point types:
//! the training loop and full-catalog ranking call them millions of times, so
//! they avoid allocation and recompute the lift inline. The geometry module
//! remains the reference; unit tests pin both routes to each other.

use crate::geometry::{dot, norm_sq, BALL_BOUNDARY};

/// Strategy interface for the loss engines: a differentiable pair score.
pub(crate) trait Scorer: Sync {
    fn score(&self, p: &[f64], q: &[f64]) -> f64;

    /// Accumulates `w * d(score)/dp` into `gp` and `w * d(score)/dq` into
    /// `gq`.
    fn grad_acc(&self, p: &[f64], q: &[f64], w: f64, gp: &mut [f64], gq: &mut [f64]);
}

/// Plain dot product, the Euclidean score of TriplE, MF, and BPR.
pub(crate) struct DotScorer;

impl Scorer for DotScorer {
    fn score(&self, p: &[f64], q: &[f64]) -> f64 {
        dot(p, q)
    }

    fn grad_acc(&self, p: &[f64], q: &[f64], w: f64, gp: &mut [f64], gq: &mut [f64]) {
        for i in 0..p.len() {
            gp[i] += w * q[i];
            gq[i] += w * p[i];
        }
    }
}

/// Lorentz score of the lifted rows at beta = 1, in closed form.
///
/// With p0 = sqrt(1 + ||p||^2), q0 likewise, and A = p0*q0:
///
/// `S(p,q) = (1 + A - p.q - (p0 + q0)) / A`
///
/// which equals the triangle-defect form
/// `(d^2(u,v) - d^2(o,u) - d^2(o,v)) / (2 <o,u>_L <o,v>_L)` after expanding
/// the squared distances. The grouping `(1 + A - p.q) - (p0 + q0)` keeps the
/// kernel exactly symmetric in floating point.
pub(crate) fn lorentz_score_ambient(p: &[f64], q: &[f64]) -> f64 {
    let p0 = (1.0 + norm_sq(p)).sqrt();
    let q0 = (1.0 + norm_sq(q)).sqrt();
    let a = p0 * q0;
    ((1.0 + a - dot(p, q)) - (p0 + q0)) / a
}

/// Lorentz score of TriplH and LorentzFM.
pub(crate) struct LorentzScorer;

impl Scorer for LorentzScorer {
    fn score(&self, p: &[f64], q: &[f64]) -> f64 {
        lorentz_score_ambient(p, q)
    }

    fn grad_acc(&self, p: &[f64], q: &[f64], w: f64, gp: &mut [f64], gq: &mut [f64]) {
        let p0 = (1.0 + norm_sq(p)).sqrt();
        let q0 = (1.0 + norm_sq(q)).sqrt();
        let a = p0 * q0;
        let s = ((1.0 + a - dot(p, q)) - (p0 + q0)) / a;
        // dS/dp_i = (cp*p_i - q_i)/A with cp = (q0 - 1 - S*q0)/p0; the cp*p_i
        // part collects the p0-chain terms of the lift.
        let cp = (q0 - 1.0 - s * q0) / p0;
        let cq = (p0 - 1.0 - s * p0) / q0;
        for i in 0..p.len() {
            gp[i] += w * (cp * p[i] - q[i]) / a;
            gq[i] += w * (cq * q[i] - p[i]) / a;
        }
    }
}

/// Rescales `src` into the open ball if its norm exceeds [`BALL_BOUNDARY`],
/// writing into `dst`. Returns the original norm when clipping fired.
pub(crate) fn clip_to_ball(src: &[f64], dst: &mut [f64]) -> Option<f64> {
    let norm = norm_sq(src).sqrt();
    if norm > BALL_BOUNDARY {
        let s = BALL_BOUNDARY / norm;
        for (d, v) in dst.iter_mut().zip(src) {
            *d = v * s;
        }
        Some(norm)
    } else {
        dst.copy_from_slice(src);
        None
    }
}

/// Negative Poincare distance between pre-clipped ball points.
pub(crate) fn poincare_neg_dist_clipped(x: &[f64], y: &[f64]) -> f64 {
    let mut diff_sq = 0.0;
    for (a, b) in x.iter().zip(y) {
        let d = a - b;
        diff_sq += d * d;
    }
    let ax = 1.0 - norm_sq(x);
    let ay = 1.0 - norm_sq(y);
    let arg = 1.0 + 2.0 * diff_sq / (ax * ay);
    -arg.max(1.0).acosh()
}

/// HyperBPR score: ambient rows are clipped into the ball, then scored by
/// negative Poincare distance.
pub(crate) struct PoincareScorer;

impl Scorer for PoincareScorer {
    fn score(&self, p: &[f64], q: &[f64]) -> f64 {
        let mut cp = vec![0.0; p.len()];
        let mut cq = vec![0.0; q.len()];
        clip_to_ball(p, &mut cp);
        clip_to_ball(q, &mut cq);
        poincare_neg_dist_clipped(&cp, &cq)
    }

    fn grad_acc(&self, p: &[f64], q: &[f64], w: f64, gp: &mut [f64], gq: &mut [f64]) {
        let dim = p.len();
        let mut cp = vec![0.0; dim];
        let mut cq = vec![0.0; dim];
        let clip_p = clip_to_ball(p, &mut cp);
        let clip_q = clip_to_ball(q, &mut cq);

        let mut diff_sq = 0.0;
        for i in 0..dim {
            let d = cp[i] - cq[i];
            diff_sq += d * d;
        }
        let ap = 1.0 - norm_sq(&cp);
        let aq = 1.0 - norm_sq(&cq);
        let t = 1.0 + 2.0 * diff_sq / (ap * aq);
        if t <= 1.0 {
            // Coincident points: distance has a corner, gradient is defined
            // as zero there.
            return;
        }
        // score = -arccosh(t); d(-arccosh)/dt = -1/sqrt(t^2 - 1).
        let dt = -1.0 / (t * t - 1.0).sqrt();
        let coef_p = dt * 4.0 / (ap * ap * aq);
        let coef_q = dt * 4.0 / (aq * aq * ap);
        let mut gcp = vec![0.0; dim];
        let mut gcq = vec![0.0; dim];
        for i in 0..dim {
            gcp[i] = coef_p * ((cp[i] - cq[i]) * ap + diff_sq * cp[i]);
            gcq[i] = coef_q * ((cq[i] - cp[i]) * aq + diff_sq * cq[i]);
        }
        accumulate_through_clip(p, clip_p, &gcp, w, gp);
        accumulate_through_clip(q, clip_q, &gcq, w, gq);
    }
}

/// Chains a gradient w.r.t. the clipped point back to the ambient row. When
/// the clip fired, the Jacobian is (r/||x||) * (I - unit*unit^T): the radial
/// component is flattened, tangential components are rescaled.
fn accumulate_through_clip(x: &[f64], clip_norm: Option<f64>, g: &[f64], w: f64, out: &mut [f64]) {
    match clip_norm {
        None => {
            for i in 0..x.len() {
                out[i] += w * g[i];
            }
        }
        Some(norm) => {
            let inv = 1.0 / norm;
            let radial: f64 = x.iter().zip(g).map(|(xi, gi)| xi * inv * gi).sum();
            let scale = BALL_BOUNDARY * inv;
            for i in 0..x.len() {
                out[i] += w * scale * (g[i] - radial * x[i] * inv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lift, lorentz_score, poincare_distance, Curvature, PoincarePoint};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
        (0..dim)
            .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
            .collect()
    }

    /// Draws a vector whose norm stays at least 1e-3 away from the clip
    /// boundary: the clip map has a gradient kink there, where central
    /// differences are meaningless.
    fn rand_vec_off_boundary(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
        loop {
            let v = rand_vec(rng, dim, scale);
            if (norm_sq(&v).sqrt() - BALL_BOUNDARY).abs() > 1e-3 {
                return v;
            }
        }
    }

    /// Central finite difference of a scorer along one input coordinate.
    /// Step 1e-4 balances truncation against the ~5e-12 evaluation noise of
    /// the clipped Poincare score (cancellation in 1 - ||x||^2), which
    /// divided by h becomes the noise floor of the quotient.
    fn fd_scorer<S: Scorer>(s: &S, p: &[f64], q: &[f64], arg: usize, i: usize) -> f64 {
        let h = 1e-4;
        let eval = |delta: f64| {
            let mut pp = p.to_vec();
            let mut qq = q.to_vec();
            if arg == 0 {
                pp[i] += delta;
            } else {
                qq[i] += delta;
            }
            s.score(&pp, &qq)
        };
        (eval(h) - eval(-h)) / (2.0 * h)
    }

    fn check_scorer_grads<S: Scorer>(s: &S, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let dim = rng.random_range(1..=6);
            let p = rand_vec_off_boundary(&mut rng, dim, scale);
            let q = rand_vec_off_boundary(&mut rng, dim, scale);
            let mut gp = vec![0.0; dim];
            let mut gq = vec![0.0; dim];
            s.grad_acc(&p, &q, 1.0, &mut gp, &mut gq);
            for i in 0..dim {
                for (arg, g) in [(0, gp[i]), (1, gq[i])] {
                    let fd = fd_scorer(s, &p, &q, arg, i);
                    if g.abs() > 1e-8 {
                        assert_relative_eq!(g, fd, max_relative = 1e-4, epsilon = 1e-7);
                    } else {
                        // Near-zero gradients: compare absolutely, leaving
                        // room for FD evaluation noise.
                        assert!((g - fd).abs() < 1e-6, "zero-grad check: {g} vs {fd}");
                    }
                }
            }
        }
    }

    #[test]
    fn dot_scorer_gradients() {
        check_scorer_grads(&DotScorer, 2.0, 1);
    }

    #[test]
    fn lorentz_scorer_gradients() {
        check_scorer_grads(&LorentzScorer, 1.5, 2);
    }

    #[test]
    fn poincare_scorer_gradients_inside_ball() {
        check_scorer_grads(&PoincareScorer, 0.3, 3);
    }

    #[test]
    fn poincare_scorer_gradients_through_clip() {
        // Norms above 1 exercise the clip Jacobian.
        check_scorer_grads(&PoincareScorer, 1.4, 4);
    }

    #[test]
    fn lorentz_kernel_matches_geometry_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let dim = rng.random_range(1..=32);
            let p = rand_vec(&mut rng, dim, 4.0);
            let q = rand_vec(&mut rng, dim, 4.0);
            let kernel = lorentz_score_ambient(&p, &q);
            let reference = lorentz_score(
                &lift(&p, Curvature::default()),
                &lift(&q, Curvature::default()),
            );
            assert_relative_eq!(kernel, reference, max_relative = 1e-11, epsilon = 1e-13);
        }
    }

    #[test]
    fn lorentz_kernel_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let dim = rng.random_range(1..=48);
            let p = rand_vec(&mut rng, dim, 5.0);
            let q = rand_vec(&mut rng, dim, 5.0);
            let a = lorentz_score_ambient(&p, &q);
            let b = lorentz_score_ambient(&q, &p);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn poincare_kernel_matches_geometry_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let dim = rng.random_range(1..=16);
            let p = rand_vec(&mut rng, dim, 1.5);
            let q = rand_vec(&mut rng, dim, 1.5);
            let kernel = PoincareScorer.score(&p, &q);
            let reference = -poincare_distance(&PoincarePoint::new(&p), &PoincarePoint::new(&q));
            assert_relative_eq!(kernel, reference, max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn clip_preserves_interior_points() {
        let src = vec![0.1, -0.2, 0.05];
        let mut dst = vec![0.0; 3];
        assert_eq!(clip_to_ball(&src, &mut dst), None);
        assert_eq!(src, dst);
        let big = vec![3.0, 4.0];
        let mut clipped = vec![0.0; 2];
        assert_eq!(clip_to_ball(&big, &mut clipped), Some(5.0));
        assert_relative_eq!(
            norm_sq(&clipped).sqrt(),
            BALL_BOUNDARY,
            max_relative = 1e-15
        );
    }
}
