use serde::{Deserialize, Serialize};

use crate::error::{DealerError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    LeastSquares,
    Logistic,
    SmoothedHinge,
}

/// Pointwise loss l(w; z) with analytic gradient. Implementations are
/// stateless; pick one from the registry by name or via `LossKind`.
pub trait LossFunction: Sync + Send {
    fn name(&self) -> &'static str;

    /// Returns (l(w; z), grad_w l(w; z)) for sample z = (x, y).
    fn loss_grad(&self, weights: &[f64], features: &[f64], label: f64) -> (f64, Vec<f64>);
}

struct LeastSquares;

impl LossFunction for LeastSquares {
    fn name(&self) -> &'static str {
        "least-squares"
    }

    fn loss_grad(&self, w: &[f64], x: &[f64], y: f64) -> (f64, Vec<f64>) {
        let r = dot(w, x) - y;
        (r * r, x.iter().map(|xi| 2.0 * r * xi).collect())
    }
}

struct Logistic;

impl LossFunction for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn loss_grad(&self, w: &[f64], x: &[f64], y: f64) -> (f64, Vec<f64>) {
        let margin = y * dot(w, x);
        // ln(1 + e^-m), computed stably on both tails.
        let loss = if margin > 0.0 {
            (-margin).exp().ln_1p()
        } else {
            -margin + margin.exp().ln_1p()
        };
        let sigma = 1.0 / (1.0 + margin.exp());
        (loss, x.iter().map(|xi| -y * sigma * xi).collect())
    }
}

/// Hinge loss with quadratic smoothing on the margin interval [0, 1].
struct SmoothedHinge;

impl LossFunction for SmoothedHinge {
    fn name(&self) -> &'static str {
        "smoothed-hinge"
    }

    fn loss_grad(&self, w: &[f64], x: &[f64], y: f64) -> (f64, Vec<f64>) {
        let margin = y * dot(w, x);
        if margin >= 1.0 {
            (0.0, vec![0.0; x.len()])
        } else if margin <= 0.0 {
            (0.5 - margin, x.iter().map(|xi| -y * xi).collect())
        } else {
            let gap = 1.0 - margin;
            (0.5 * gap * gap, x.iter().map(|xi| -y * gap * xi).collect())
        }
    }
}

impl LossKind {
    pub fn function(&self) -> &'static dyn LossFunction {
        match self {
            LossKind::LeastSquares => &LeastSquares,
            LossKind::Logistic => &Logistic,
            LossKind::SmoothedHinge => &SmoothedHinge,
        }
    }

    pub fn name(&self) -> &'static str {
        self.function().name()
    }
}

pub const LOSS_NAMES: [&str; 3] = ["least-squares", "logistic", "smoothed-hinge"];

pub fn loss_by_name(name: &str) -> Result<LossKind> {
    match name {
        "least-squares" => Ok(LossKind::LeastSquares),
        "logistic" => Ok(LossKind::Logistic),
        "smoothed-hinge" => Ok(LossKind::SmoothedHinge),
        _ => Err(DealerError::UnknownStrategy {
            kind: "loss",
            name: name.to_string(),
            known: LOSS_NAMES.join(", "),
        }),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
