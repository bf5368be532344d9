pub mod solvers;

use serde::{Deserialize, Serialize};

use crate::error::{DealerError, Result};
use crate::money::Money;
use crate::types::{CompCurve, DataOwner, ModelTier, RestrictionMode};

pub use solvers::{make_solver, solver_names, BcmvpSolver, SelectionResult, SolverKind};

/// One owner's selection-time cost entry for a tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompItem {
    pub owner_id: u32,
    /// Clipped to be non-negative before selection.
    pub shapley: f64,
    pub base_comp: Money,
    pub extra_comp: Money,
}

impl CompItem {
    pub fn new(owner_id: u32, shapley: f64, base_comp: Money, extra_comp: Money) -> Self {
        CompItem {
            owner_id,
            shapley: shapley.max(0.0),
            base_comp,
            extra_comp,
        }
    }

    pub fn total_cost(&self) -> Money {
        self.base_comp + self.extra_comp
    }
}

/// Splits the budget proportionally to Shapley value, rounding each share
/// down to minor units; leftover units go to the largest-SV owner (first
/// such owner on ties) so the shares sum to the budget exactly.
pub fn base_compensation(shapley: &[f64], budget: Money) -> Result<Vec<Money>> {
    let clipped: Vec<f64> = shapley.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(DealerError::AllZeroShapley);
    }
    let mut amounts: Vec<u64> = clipped
        .iter()
        .map(|v| ((v / total) * budget.minor() as f64).floor() as u64)
        .collect();
    let mut assigned: u64 = amounts.iter().sum();
    // Floating rounding can only undershoot meaningfully, but guard the
    // other direction too so conservation is unconditional.
    while assigned > budget.minor() {
        let i = amounts
            .iter()
            .enumerate()
            .max_by_key(|(_, a)| **a)
            .map(|(i, _)| i)
            .unwrap();
        amounts[i] -= 1;
        assigned -= 1;
    }
    let leftover = budget.minor() - assigned;
    if leftover > 0 {
        let target = clipped
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        amounts[target] += leftover;
    }
    Ok(amounts.into_iter().map(Money::from_minor).collect())
}

/// Surcharge owed when a tier's budget exceeds the owner's preference.
/// Zero whenever eps_model <= eps_prefer.
pub fn extra_compensation(
    curve: CompCurve,
    rho: f64,
    base_comp: Money,
    eps_prefer: f64,
    eps_model: f64,
) -> Money {
    let gap = (eps_model - eps_prefer).max(0.0);
    if gap == 0.0 {
        return Money::ZERO;
    }
    let factor = match curve {
        CompCurve::Linear => gap,
        CompCurve::Convex => gap * gap,
        CompCurve::Concave => gap.sqrt(),
    };
    let raw = rho * base_comp.minor() as f64 * factor;
    Money::from_minor((raw + 0.5).floor() as u64)
}

/// Owners whose restriction admits this tier: hard-mode owners require
/// eps_model <= eps_prefer, negotiable owners are always eligible.
pub fn eligible_owners(owners: &[DataOwner], tier: &ModelTier) -> Vec<u32> {
    owners
        .iter()
        .filter(|o| match o.restriction_mode {
            RestrictionMode::Hard => tier.epsilon <= o.eps_prefer,
            RestrictionMode::Negotiable => true,
        })
        .map(|o| o.id)
        .collect()
}

/// Selection-time cost of an eligible owner for a tier.
pub fn owner_cost(owner: &DataOwner, tier: &ModelTier, base_comp: Money) -> Money {
    match owner.restriction_mode {
        RestrictionMode::Hard => base_comp,
        RestrictionMode::Negotiable => {
            base_comp
                + extra_compensation(
                    owner.curve,
                    owner.rho,
                    base_comp,
                    owner.eps_prefer,
                    tier.epsilon,
                )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_compensation_exact_proportional_split() {
        let bc = base_compensation(&[1.0, 1.0, 2.0], Money::from_major(8)).unwrap();
        assert_eq!(
            bc,
            vec![
                Money::from_major(2),
                Money::from_major(2),
                Money::from_major(4)
            ]
        );
    }

    #[test]
    fn base_compensation_single_contributor() {
        let bc = base_compensation(&[1.0, 0.0, 0.0], Money::from_major(5)).unwrap();
        assert_eq!(bc[0], Money::from_major(5));
        assert_eq!(bc[1], Money::ZERO);
        assert_eq!(bc[2], Money::ZERO);
    }

    #[test]
    fn base_compensation_remainder_is_conserved() {
        let budget = Money::from_major(1);
        let bc = base_compensation(&[1.0, 1.0, 1.0], budget).unwrap();
        assert_eq!(bc.iter().copied().sum::<Money>(), budget);
        let mut sorted: Vec<u64> = bc.iter().map(|m| m.minor()).collect();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![33, 33, 34]);
        // Deterministic: repeat runs agree.
        assert_eq!(bc, base_compensation(&[1.0, 1.0, 1.0], budget).unwrap());
    }

    #[test]
    fn all_zero_shapley_rejected() {
        assert!(matches!(
            base_compensation(&[0.0, -1.0], Money::from_major(1)),
            Err(DealerError::AllZeroShapley)
        ));
    }

    #[test]
    fn extra_compensation_curves() {
        // linear: 0.5 * 10.00 * 2 = 10.00
        assert_eq!(
            extra_compensation(CompCurve::Linear, 0.5, Money::from_major(10), 1.0, 3.0),
            Money::from_major(10)
        );
        // concave: 1 * 4.00 * sqrt(4) = 8.00
        assert_eq!(
            extra_compensation(CompCurve::Concave, 1.0, Money::from_major(4), 1.0, 5.0),
            Money::from_major(8)
        );
        // zero whenever the tier is at most the preference
        for curve in [CompCurve::Linear, CompCurve::Convex, CompCurve::Concave] {
            assert_eq!(
                extra_compensation(curve, 2.0, Money::from_major(10), 2.0, 2.0),
                Money::ZERO
            );
            assert_eq!(
                extra_compensation(curve, 2.0, Money::from_major(10), 2.0, 1.0),
                Money::ZERO
            );
        }
    }

    fn owner(id: u32, eps: f64, mode: RestrictionMode) -> DataOwner {
        DataOwner {
            id,
            features: vec![0.0],
            label: 1.0,
            eps_prefer: eps,
            curve: CompCurve::Linear,
            rho: 1.0,
            restriction_mode: mode,
        }
    }

    fn tier(epsilon: f64) -> ModelTier {
        ModelTier {
            index: 1,
            epsilon,
            delta: 1e-6,
            budget: Money::from_major(100),
        }
    }

    #[test]
    fn hard_eligibility_is_an_indicator() {
        let owners = vec![
            owner(1, 0.5, RestrictionMode::Hard),
            owner(2, 2.0, RestrictionMode::Hard),
            owner(3, 5.0, RestrictionMode::Hard),
        ];
        assert_eq!(eligible_owners(&owners, &tier(1.0)), vec![2, 3]);
        assert_eq!(eligible_owners(&owners, &tier(10.0)), Vec::<u32>::new());
    }

    #[test]
    fn negotiable_owners_always_eligible_with_surcharge() {
        let owners = vec![
            owner(1, 0.5, RestrictionMode::Negotiable),
            owner(2, 2.0, RestrictionMode::Negotiable),
            owner(3, 5.0, RestrictionMode::Negotiable),
        ];
        let t = tier(1.0);
        assert_eq!(eligible_owners(&owners, &t), vec![1, 2, 3]);
        let bc = Money::from_major(10);
        assert!(owner_cost(&owners[0], &t, bc) > bc);
        assert_eq!(owner_cost(&owners[1], &t, bc), bc);
    }
}
