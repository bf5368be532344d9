use serde::{Deserialize, Serialize};

use crate::error::DealerError;
use crate::money::Money;

/// Shape of an owner's extra-compensation surcharge in the privacy gap
/// g = max(0, eps_model - eps_prefer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompCurve {
    /// rho * bc * g
    Linear,
    /// rho * bc * g^2
    Convex,
    /// rho * bc * sqrt(g)
    Concave,
}

impl CompCurve {
    pub fn parse(s: &str) -> Option<CompCurve> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Some(CompCurve::Linear),
            "convex" => Some(CompCurve::Convex),
            "concave" => Some(CompCurve::Concave),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CompCurve::Linear => "linear",
            CompCurve::Convex => "convex",
            CompCurve::Concave => "concave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestrictionMode {
    /// Data usable only for tiers with eps_model <= eps_prefer.
    Hard,
    /// Data usable for any tier; looser tiers owe extra compensation.
    Negotiable,
}

impl RestrictionMode {
    pub fn parse(s: &str) -> Option<RestrictionMode> {
        match s.to_ascii_lowercase().as_str() {
            "hard" => Some(RestrictionMode::Hard),
            "negotiable" => Some(RestrictionMode::Negotiable),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RestrictionMode::Hard => "hard",
            RestrictionMode::Negotiable => "negotiable",
        }
    }
}

/// One data owner: a single labeled sample plus the owner's privacy
/// preference and compensation terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataOwner {
    pub id: u32,
    pub features: Vec<f64>,
    /// -1/+1 for classification, or a value in [0,1] for regression.
    pub label: f64,
    /// Preferred DP budget eps_i; strictly positive.
    pub eps_prefer: f64,
    pub curve: CompCurve,
    /// Per-tier surcharge rate rho_i; non-negative.
    pub rho: f64,
    pub restriction_mode: RestrictionMode,
}

impl DataOwner {
    pub fn validate(&self) -> Result<(), DealerError> {
        if !(self.eps_prefer > 0.0) {
            return Err(DealerError::InvalidOwner {
                id: self.id,
                reason: "eps_prefer must be positive".into(),
            });
        }
        if !(self.rho >= 0.0) {
            return Err(DealerError::InvalidOwner {
                id: self.id,
                reason: "rho must be non-negative".into(),
            });
        }
        if self.features.iter().any(|x| !x.is_finite()) {
            return Err(DealerError::InvalidOwner {
                id: self.id,
                reason: "non-finite feature".into(),
            });
        }
        if !valid_label(self.label) {
            return Err(DealerError::InvalidLabel {
                id: self.id,
                label: self.label,
            });
        }
        Ok(())
    }
}

pub fn valid_label(label: f64) -> bool {
    label == -1.0 || label == 1.0 || (0.0..=1.0).contains(&label)
}

/// One saleable model version: DP budget eps^m and manufacturing budget MB^m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTier {
    /// 1-based tier index m.
    pub index: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub budget: Money,
}

/// Tiers must be 1..=M in order with strictly increasing epsilon and one
/// global delta.
pub fn validate_tiers(tiers: &[ModelTier]) -> Result<(), DealerError> {
    if tiers.is_empty() {
        return Err(DealerError::InvalidTiers("no tiers".into()));
    }
    for (i, t) in tiers.iter().enumerate() {
        if t.index != i + 1 {
            return Err(DealerError::InvalidTiers(format!(
                "tier at position {} has index {}",
                i, t.index
            )));
        }
        if !(t.epsilon > 0.0) {
            return Err(DealerError::InvalidTiers("epsilon must be positive".into()));
        }
        if !(t.delta > 0.0 && t.delta < 1.0) {
            return Err(DealerError::InvalidTiers("delta must be in (0,1)".into()));
        }
        if t.delta != tiers[0].delta {
            return Err(DealerError::InvalidTiers("delta must be global".into()));
        }
        if i > 0 && !(t.epsilon > tiers[i - 1].epsilon) {
            return Err(DealerError::InvalidTiers(
                "epsilon must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

/// One surveyed potential buyer: target tier and bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyPoint {
    /// 1-based target tier tm_k.
    pub target_model: usize,
    pub bid: Money,
}

impl SurveyPoint {
    pub fn validate(&self, tier_count: usize) -> Result<(), DealerError> {
        if self.target_model == 0 || self.target_model > tier_count {
            return Err(DealerError::InvalidSurveyPoint(format!(
                "target model {} out of range 1..={}",
                self.target_model, tier_count
            )));
        }
        Ok(())
    }
}
