use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DealerError, Result};
use crate::losses::{dot, LossKind};

/// Labeled sample (features, label).
pub type Sample = (Vec<f64>, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Regularization weight; the regularized objective is 2*lambda strongly convex.
    pub lambda: f64,
    /// Declared Lipschitz constant L of the pointwise loss on the feasible set.
    pub lipschitz: f64,
    /// Declared smoothness constant beta.
    pub smoothness: f64,
    /// Feasible set radius: Omega = { w : ||w||_2 <= radius }.
    pub radius: f64,
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(DealerError::InvalidPrivacyParams(
                "lambda must be positive".into(),
            ));
        }
        if !(self.lipschitz > 0.0 && self.smoothness > 0.0 && self.radius > 0.0) {
            return Err(DealerError::InvalidPrivacyParams(
                "lipschitz, smoothness, radius must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Output of the two-phase objective-perturbation training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DPModel {
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// Optimization approximation level for the perturbed objective.
    pub alpha: f64,
    pub seed: u64,
    /// Owner ids the model was trained on; filled by the pipeline.
    pub trained_on: Vec<u32>,
    pub tier_index: Option<usize>,
}

pub fn loss_and_gradient(
    spec: &LossSpec,
    weights: &[f64],
    sample: &Sample,
) -> Result<(f64, Vec<f64>)> {
    if weights.len() != sample.0.len() {
        return Err(DealerError::DimensionMismatch {
            weights: weights.len(),
            features: sample.0.len(),
        });
    }
    Ok(spec.kind.function().loss_grad(weights, &sample.0, sample.1))
}

fn project(w: &mut [f64], radius: f64) {
    let norm = dot(w, w).sqrt();
    if norm > radius {
        let scale = radius / norm;
        for wi in w.iter_mut() {
            *wi *= scale;
        }
    }
}

/// Objective F(w) = (1/n) sum l(w;z) + lambda ||w||^2 + <linear, w>,
/// with its gradient.
fn objective(spec: &LossSpec, data: &[Sample], linear: &[f64], w: &[f64]) -> (f64, Vec<f64>) {
    let n = data.len() as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; w.len()];
    for (x, y) in data {
        let (l, g) = spec.kind.function().loss_grad(w, x, *y);
        total += l;
        for (gi, gj) in grad.iter_mut().zip(&g) {
            *gi += gj;
        }
    }
    total /= n;
    for gi in grad.iter_mut() {
        *gi /= n;
    }
    for i in 0..w.len() {
        total += spec.lambda * w[i] * w[i] + linear[i] * w[i];
        grad[i] += 2.0 * spec.lambda * w[i] + linear[i];
    }
    (total, grad)
}

const MAX_ITERS: usize = 200_000;

/// Projected gradient descent from `start`, exiting on the strong-convexity
/// gap certificate ||grad||^2 / (2 lambda) <= tolerance.
fn minimize(
    spec: &LossSpec,
    data: &[Sample],
    linear: &[f64],
    tolerance: f64,
    start: Vec<f64>,
) -> Result<Vec<f64>> {
    let step = 1.0 / (spec.smoothness + 2.0 * spec.lambda);
    let mut w = start;
    project(&mut w, spec.radius);
    for _ in 0..MAX_ITERS {
        let (value, grad) = objective(spec, data, linear, &w);
        if !value.is_finite() {
            return Err(DealerError::NonFinite);
        }
        let grad_sq = dot(&grad, &grad);
        if grad_sq / (2.0 * spec.lambda) <= tolerance {
            break;
        }
        let mut next = w.clone();
        for i in 0..next.len() {
            next[i] -= step * grad[i];
        }
        project(&mut next, spec.radius);
        // On the boundary the gradient certificate can be unattainable;
        // stop when the projected step no longer moves.
        let moved: f64 = next
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        w = next;
        if moved < 1e-30 {
            break;
        }
    }
    Ok(w)
}

fn random_start(d: usize, radius: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut w = raw;
    project(&mut w, radius);
    w
}

/// Non-private ERM over the feasible ball.
pub fn train_erm(data: &[Sample], spec: &LossSpec, tolerance: f64, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if data.is_empty() {
        return Err(DealerError::EmptyEvalSet);
    }
    let d = data[0].0.len();
    minimize(
        spec,
        data,
        &vec![0.0; d],
        tolerance,
        random_start(d, spec.radius, seed),
    )
}

pub fn noise_sigma1(lipschitz: f64, epsilon: f64, delta: f64) -> f64 {
    20.0 * lipschitz * lipschitz * (1.0 / delta).ln() / (epsilon * epsilon)
}

pub fn noise_sigma2(alpha: f64, lambda: f64, epsilon: f64, delta: f64) -> f64 {
    40.0 * alpha * (1.0 / delta).ln() / (lambda * epsilon * epsilon)
}

/// Two-phase objective perturbation: perturb the objective with N1, optimize
/// to an alpha-approximate minimizer, perturb the output with N2, project.
pub fn train_dp_erm(
    data: &[Sample],
    spec: &LossSpec,
    epsilon: f64,
    delta: f64,
    alpha: f64,
    seed: u64,
) -> Result<DPModel> {
    spec.validate()?;
    if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(alpha > 0.0) {
        return Err(DealerError::InvalidPrivacyParams(format!(
            "epsilon={epsilon}, delta={delta}, alpha={alpha}"
        )));
    }
    if data.is_empty() {
        return Err(DealerError::EmptyEvalSet);
    }
    let d = data[0].0.len();
    let n = data.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let sigma1 = noise_sigma1(spec.lipschitz, epsilon, delta);
    let n1 = Normal::new(0.0, sigma1).unwrap();
    let linear: Vec<f64> = (0..d).map(|_| n1.sample(&mut rng) / n).collect();

    let w_hat = minimize(
        spec,
        data,
        &linear,
        alpha,
        random_start(d, spec.radius, seed.wrapping_add(1)),
    )?;

    let sigma2 = noise_sigma2(alpha, spec.lambda, epsilon, delta);
    let n2 = Normal::new(0.0, sigma2).unwrap();
    let mut weights: Vec<f64> = w_hat.iter().map(|wi| wi + n2.sample(&mut rng)).collect();
    project(&mut weights, spec.radius);

    Ok(DPModel {
        weights,
        epsilon,
        delta,
        alpha,
        seed,
        trained_on: Vec::new(),
        tier_index: None,
    })
}

/// Theorem-style excess population loss descriptor with unit constant:
/// max( 1/sqrt(n), sqrt(d log(1/delta)) / (epsilon n) ).
pub fn excess_loss_estimate(n: usize, d: usize, epsilon: f64, delta: f64) -> f64 {
    let n = n as f64;
    let statistical = 1.0 / n.sqrt();
    let privacy = (d as f64 * (1.0 / delta).ln()).sqrt() / (epsilon * n);
    statistical.max(privacy)
}

/// Classification accuracy of sign(w . x) against labels in {-1, +1}.
pub fn accuracy(weights: &[f64], eval: &[Sample]) -> f64 {
    let correct = eval
        .iter()
        .filter(|(x, y)| {
            let pred = if dot(weights, x) >= 0.0 { 1.0 } else { -1.0 };
            pred == *y
        })
        .count();
    correct as f64 / eval.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_spec() -> LossSpec {
        LossSpec {
            kind: LossKind::LeastSquares,
            lambda: 0.5,
            lipschitz: 2.0,
            // 2 ||x||^2 bound for features in [-1,1]^3
            smoothness: 6.0,
            radius: 10.0,
        }
    }

    // 1-D least squares on {(1,1)} with lambda=0.5 minimizes
    // (w-1)^2 + 0.5 w^2; setting 2(w-1) + w = 0 gives w = 2/3.
    #[test]
    fn one_dimensional_least_squares_closed_form() {
        let data = vec![(vec![1.0], 1.0)];
        let w = train_erm(&data, &quad_spec(), 1e-16, 3).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-6, "w = {}", w[0]);
    }

    #[test]
    fn erm_beats_random_feasible_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<Sample> = (0..40)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = 0.3 * x[0] - 0.7 * x[1] + 0.1 * rng.gen_range(-1.0..1.0);
                (x, y.clamp(0.0, 1.0))
            })
            .collect();
        let spec = LossSpec {
            lambda: 0.1,
            ..quad_spec()
        };
        let w = train_erm(&data, &spec, 1e-14, 5).unwrap();
        let (best, _) = objective(&spec, &data, &[0.0; 3], &w);
        for _ in 0..1000 {
            let probe = random_start(3, spec.radius, rng.gen());
            let (v, _) = objective(&spec, &data, &[0.0; 3], &probe);
            assert!(best <= v + 1e-9);
        }
    }

    #[test]
    fn identical_labels_logistic_predicts_that_label() {
        let data: Vec<Sample> = (0..10)
            .map(|i| (vec![1.0 + 0.1 * i as f64, -0.5], 1.0))
            .collect();
        let spec = LossSpec {
            kind: LossKind::Logistic,
            lambda: 0.01,
            lipschitz: 2.0,
            smoothness: 1.0,
            radius: 50.0,
        };
        let w = train_erm(&data, &spec, 1e-10, 1).unwrap();
        assert_eq!(accuracy(&w, &data), 1.0);
    }

    #[test]
    fn strong_convexity_makes_starts_agree() {
        let data = vec![
            (vec![1.0, 0.0], 0.2),
            (vec![0.0, 1.0], 0.8),
            (vec![1.0, 1.0], 1.0),
        ];
        let spec = quad_spec();
        let w1 = train_erm(&data, &spec, 1e-14, 1).unwrap();
        let w2 = train_erm(&data, &spec, 1e-14, 999).unwrap();
        let (f1, _) = objective(&spec, &data, &[0.0; 2], &w1);
        let (f2, _) = objective(&spec, &data, &[0.0; 2], &w2);
        assert!((f1 - f2).abs() < 1e-4);
    }

    #[test]
    fn noise_scale_formulas() {
        // L=1, delta=e^-1, eps=1 -> sigma1 = 20; lambda=1, alpha=0.5 -> sigma2 = 20.
        let delta = (-1.0f64).exp();
        assert!((noise_sigma1(1.0, 1.0, delta) - 20.0).abs() < 1e-9);
        assert!((noise_sigma2(0.5, 1.0, 1.0, delta) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn dp_training_is_deterministic_per_seed() {
        let data: Vec<Sample> = (0..20)
            .map(|i| {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                (vec![y * 0.8, 0.1 * i as f64 / 20.0], y)
            })
            .collect();
        let spec = LossSpec {
            kind: LossKind::Logistic,
            lambda: 0.1,
            lipschitz: 1.0,
            smoothness: 0.5,
            radius: 5.0,
        };
        let a = train_dp_erm(&data, &spec, 1.0, 1e-6, 1e-4, 42).unwrap();
        let b = train_dp_erm(&data, &spec, 1.0, 1e-6, 1e-4, 42).unwrap();
        assert_eq!(a.weights, b.weights);
        assert!(dot(&a.weights, &a.weights).sqrt() <= spec.radius + 1e-12);
        let c = train_dp_erm(&data, &spec, 1.0, 1e-6, 1e-4, 43).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn invalid_privacy_params_rejected() {
        let data = vec![(vec![1.0], 1.0)];
        let spec = quad_spec();
        assert!(train_dp_erm(&data, &spec, 0.0, 1e-6, 0.1, 1).is_err());
        assert!(train_dp_erm(&data, &spec, 1.0, 1.5, 0.1, 1).is_err());
        assert!(train_dp_erm(&data, &spec, 1.0, 1e-6, 0.0, 1).is_err());
    }

    #[test]
    fn excess_loss_substitutions() {
        let delta = (-1.0f64).exp();
        assert!((excess_loss_estimate(10_000, 1, 1.0, delta) - 0.01).abs() < 1e-12);
        assert!((excess_loss_estimate(100, 100, 0.01, delta) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn excess_loss_monotone_in_eps_and_n() {
        let delta = 1e-6;
        for d in [1, 5, 20] {
            let mut prev = f64::INFINITY;
            for i in 1..=100 {
                let eps = 0.01 * i as f64;
                let v = excess_loss_estimate(500, d, eps, delta);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
            let mut prev = f64::INFINITY;
            for i in 1..=100 {
                let v = excess_loss_estimate(10 * i, d, 0.5, delta);
                assert!(v <= prev + 1e-15);
                prev = v;
            }
        }
    }
}
