use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::allocation::{
    base_compensation, eligible_owners, make_solver, owner_cost, CompItem,
};
use crate::error::{DealerError, Result};
use crate::money::Money;
use crate::pricing::{
    check_arbitrage_free, make_pricer, per_tier_revenue, revenue_and_affordability,
    zero_demand_flags,
};
use crate::rational::ExactRational;
use crate::training::{excess_loss_estimate, train_dp_erm, DPModel, LossSpec, Sample};
use crate::types::{validate_tiers, DataOwner, ModelTier, SurveyPoint};
use crate::valuation::{exact_shapley, monte_carlo_shapley, AccuracyOracle, ShapleyReport};

/// Optimization tolerance for the non-private models behind the utility
/// oracle.
const ERM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tiers: Vec<ModelTier>,
    pub loss: LossSpec,
    /// 0 selects exact Shapley enumeration.
    pub shapley_permutations: u32,
    pub shapley_seed: u64,
    /// Subset solver name from the allocation registry.
    pub solver: String,
    pub guess_alpha: f64,
    /// Default survey size for generators driven by this config.
    pub survey_size_hint: usize,
    /// Approximation level for the perturbed-objective minimization.
    pub alpha_opt: f64,
    /// Pricing method name from the pricing registry.
    pub pricing: String,
    /// Value owners once on the first tier's eligible set and reuse those
    /// values everywhere instead of revaluing per tier. Cheaper, approximate.
    pub reuse_tier1_valuation: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        validate_tiers(&self.tiers)?;
        self.loss.validate()?;
        if !(self.alpha_opt > 0.0) {
            return Err(DealerError::InvalidPrivacyParams(
                "alpha_opt must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Everything one tier produced: valuation, compensation terms, the chosen
/// training subset, and the private model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierOutcome {
    pub tier_index: usize,
    pub epsilon: f64,
    pub budget: Money,
    pub eligible: Vec<u32>,
    pub shapley: BTreeMap<u32, f64>,
    pub permutations_used: u32,
    /// Budget-proportional compensation offered at selection time.
    pub base_comp: BTreeMap<u32, Money>,
    /// Privacy-gap surcharge owed to negotiable owners.
    pub extra_comp: BTreeMap<u32, Money>,
    pub selected: Vec<u32>,
    pub selection_value: f64,
    pub selection_cost: Money,
    pub trained: bool,
    pub model: Option<DPModel>,
    pub excess_loss: Option<f64>,
}

/// Final per-owner payout, with the selection-time commitments kept
/// alongside for reconciliation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompensationRecord {
    pub owner_id: u32,
    /// Tier index -> revenue-share payout.
    pub per_tier: BTreeMap<usize, Money>,
    pub total: Money,
    pub committed_base: Money,
    pub committed_extra: Money,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketReport {
    pub tiers: Vec<TierOutcome>,
    pub pricing_method: String,
    pub prices: Vec<ExactRational>,
    pub revenue: ExactRational,
    pub tier_revenue: Vec<ExactRational>,
    pub affordability: f64,
    pub arbitrage_free: bool,
    pub zero_demand: Vec<bool>,
    pub cell_updates: u64,
    pub compensation: Vec<CompensationRecord>,
    pub tier_pools: Vec<Money>,
    /// Revenue actually paid out to owners.
    pub distributed_total: Money,
    /// Revenue share of tiers that ended up with no selected owners.
    pub undistributed: Money,
    /// Budget-based commitments made at selection time across all tiers.
    pub committed_total: Money,
    /// Realized revenue fell short of the selection-time commitments.
    pub deficit: bool,
}

/// Splits `pool` proportionally to non-negative weights, flooring each share
/// to minor units; the leftover goes to the largest weight (first such index
/// on ties). All-zero weights fall back to an equal split.
fn proportional_split(weights: &[f64], pool: Money) -> Vec<Money> {
    assert!(!weights.is_empty());
    let clipped: Vec<f64> = weights.iter().map(|w| w.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let clipped: Vec<f64> = if total > 0.0 {
        clipped
    } else {
        vec![1.0; weights.len()]
    };
    let total: f64 = clipped.iter().sum();
    let mut amounts: Vec<u64> = clipped
        .iter()
        .map(|w| ((w / total) * pool.minor() as f64).floor() as u64)
        .collect();
    let mut assigned: u64 = amounts.iter().sum();
    while assigned > pool.minor() {
        let i = amounts
            .iter()
            .enumerate()
            .max_by_key(|(_, a)| **a)
            .map(|(i, _)| i)
            .unwrap();
        amounts[i] -= 1;
        assigned -= 1;
    }
    let target = clipped
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    amounts[target] += pool.minor() - assigned;
    amounts.into_iter().map(Money::from_minor).collect()
}

/// Per-owner payout records from the realized revenue: each tier's pool is
/// its price's share of the revenue (floored, remainder to the largest-price
/// tier), and within a tier the pool covers owed extras first with the rest
/// split proportionally to Shapley value over the selected owners.
pub fn allocate_final_compensation(
    prices: &[ExactRational],
    opt_revenue: ExactRational,
    subsets: &[Vec<u32>],
    shapley: &[BTreeMap<u32, f64>],
    extras: &[BTreeMap<u32, Money>],
) -> Result<Allocation> {
    let m_count = prices.len();
    assert!(subsets.len() == m_count && shapley.len() == m_count && extras.len() == m_count);
    let total_price: ExactRational = prices
        .iter()
        .fold(ExactRational::zero(), |acc, &p| acc + p);
    if total_price.is_zero() {
        return Err(DealerError::ZeroTotalPrice);
    }

    let mut pools: Vec<Money> = prices
        .iter()
        .map(|&p| (p / total_price * opt_revenue).floor_to_money())
        .collect();
    let assigned: Money = pools.iter().copied().sum();
    let leftover = opt_revenue.floor_to_money() - assigned;
    let biggest = prices
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    pools[biggest] += leftover;

    let mut per_owner: BTreeMap<u32, CompensationRecord> = BTreeMap::new();
    let mut distributed = Money::ZERO;
    let mut undistributed = Money::ZERO;
    for m in 0..m_count {
        let owners = &subsets[m];
        if owners.is_empty() {
            undistributed += pools[m];
            continue;
        }
        let owed: Vec<Money> = owners
            .iter()
            .map(|id| extras[m].get(id).copied().unwrap_or(Money::ZERO))
            .collect();
        let owed_total: Money = owed.iter().copied().sum();
        let payouts: Vec<Money> = if pools[m] >= owed_total {
            let sv: Vec<f64> = owners
                .iter()
                .map(|id| shapley[m].get(id).copied().unwrap_or(0.0))
                .collect();
            let base = proportional_split(&sv, pools[m] - owed_total);
            base.into_iter().zip(&owed).map(|(b, &e)| b + e).collect()
        } else {
            // The pool cannot even cover the surcharges: pay them pro rata.
            let weights: Vec<f64> = owed.iter().map(|e| e.minor() as f64).collect();
            proportional_split(&weights, pools[m])
        };
        for (id, pay) in owners.iter().zip(payouts) {
            let rec = per_owner.entry(*id).or_insert_with(|| CompensationRecord {
                owner_id: *id,
                per_tier: BTreeMap::new(),
                total: Money::ZERO,
                committed_base: Money::ZERO,
                committed_extra: Money::ZERO,
            });
            rec.per_tier.insert(m + 1, pay);
            rec.total += pay;
        }
        distributed += pools[m];
    }

    Ok(Allocation {
        records: per_owner.into_values().collect(),
        tier_pools: pools,
        distributed_total: distributed,
        undistributed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Allocation {
    pub records: Vec<CompensationRecord>,
    pub tier_pools: Vec<Money>,
    pub distributed_total: Money,
    pub undistributed: Money,
}

fn tier_valuation(
    config: &PipelineConfig,
    tier: &ModelTier,
    eligible: &[u32],
    samples: &BTreeMap<u32, Sample>,
    eval_set: &[Sample],
    shared: Option<&ShapleyReport>,
) -> Result<(BTreeMap<u32, f64>, u32)> {
    if let Some(report) = shared {
        let values = eligible
            .iter()
            .map(|&id| (id, report.value_of(id).unwrap_or(0.0)))
            .collect();
        return Ok((values, report.permutations_used));
    }
    let oracle = AccuracyOracle::new(
        samples.clone(),
        eval_set.to_vec(),
        config.loss,
        ERM_TOLERANCE,
        config.shapley_seed,
    )?;
    let report = if config.shapley_permutations == 0 {
        exact_shapley(eligible, &oracle)?
    } else {
        monte_carlo_shapley(
            eligible,
            &oracle,
            config.shapley_permutations,
            config.shapley_seed.wrapping_add(tier.index as u64),
        )?
    };
    let values = report
        .owner_ids
        .iter()
        .zip(&report.values)
        .map(|(&id, &v)| (id, v))
        .collect();
    Ok((values, report.permutations_used))
}

fn run_tier(
    config: &PipelineConfig,
    tier: &ModelTier,
    owners: &[DataOwner],
    samples: &BTreeMap<u32, Sample>,
    eval_set: &[Sample],
    shared: Option<&ShapleyReport>,
) -> Result<TierOutcome> {
    let eligible = eligible_owners(owners, tier);
    let mut outcome = TierOutcome {
        tier_index: tier.index,
        epsilon: tier.epsilon,
        budget: tier.budget,
        eligible: eligible.clone(),
        shapley: BTreeMap::new(),
        permutations_used: 0,
        base_comp: BTreeMap::new(),
        extra_comp: BTreeMap::new(),
        selected: Vec::new(),
        selection_value: 0.0,
        selection_cost: Money::ZERO,
        trained: false,
        model: None,
        excess_loss: None,
    };
    if eligible.is_empty() {
        return Ok(outcome);
    }

    let (shapley, permutations_used) =
        tier_valuation(config, tier, &eligible, samples, eval_set, shared)?;
    outcome.permutations_used = permutations_used;

    let sv: Vec<f64> = eligible.iter().map(|id| shapley[id]).collect();
    let positive_total: f64 = sv.iter().map(|v| v.max(0.0)).sum();
    let bc = if positive_total > 0.0 {
        base_compensation(&sv, tier.budget)?
    } else {
        // Proportional shares are undefined on an all-zero valuation;
        // symmetry leaves an equal split.
        proportional_split(&vec![1.0; sv.len()], tier.budget)
    };

    let by_id: BTreeMap<u32, &DataOwner> = owners.iter().map(|o| (o.id, o)).collect();
    let mut items = Vec::with_capacity(eligible.len());
    for ((id, &value), base) in eligible.iter().zip(&sv).zip(&bc) {
        let owner = by_id[id];
        let extra = owner_cost(owner, tier, *base) - *base;
        outcome.base_comp.insert(*id, *base);
        outcome.extra_comp.insert(*id, extra);
        items.push(CompItem::new(*id, value, *base, extra));
    }
    outcome.shapley = shapley;

    let solver = make_solver(&config.solver, config.guess_alpha)?;
    let selection = solver.solve(&items, tier.budget)?;
    outcome.selected = selection.chosen;
    outcome.selection_value = selection.total_value;
    outcome.selection_cost = selection.total_cost;
    if outcome.selected.is_empty() {
        return Ok(outcome);
    }

    let data: Vec<Sample> = outcome
        .selected
        .iter()
        .map(|id| samples[id].clone())
        .collect();
    let mut model = train_dp_erm(
        &data,
        &config.loss,
        tier.epsilon,
        tier.delta,
        config.alpha_opt,
        config
            .shapley_seed
            .wrapping_add(10_000)
            .wrapping_add(tier.index as u64),
    )?;
    model.trained_on = outcome.selected.clone();
    model.tier_index = Some(tier.index);
    outcome.excess_loss = Some(excess_loss_estimate(
        data.len(),
        data[0].0.len(),
        tier.epsilon,
        tier.delta,
    ));
    outcome.model = Some(model);
    outcome.trained = true;
    Ok(outcome)
}

/// The full brokering round: per tier, value the eligible owners, offer
/// compensation, select a subset under the manufacturing budget, and train a
/// private model; then price all tiers against the survey and pay owners
/// their share of the realized revenue.
pub fn run_pipeline(
    config: &PipelineConfig,
    owners: &[DataOwner],
    eval_set: &[Sample],
    survey: &[SurveyPoint],
) -> Result<MarketReport> {
    config.validate()?;
    if eval_set.is_empty() {
        return Err(DealerError::EmptyEvalSet);
    }
    for owner in owners {
        owner.validate()?;
    }
    let samples: BTreeMap<u32, Sample> = owners
        .iter()
        .map(|o| (o.id, (o.features.clone(), o.label)))
        .collect();

    let shared = if config.reuse_tier1_valuation {
        let mut pool = eligible_owners(owners, &config.tiers[0]);
        if pool.is_empty() {
            pool = owners.iter().map(|o| o.id).collect();
        }
        let oracle = AccuracyOracle::new(
            samples.clone(),
            eval_set.to_vec(),
            config.loss,
            ERM_TOLERANCE,
            config.shapley_seed,
        )?;
        Some(if config.shapley_permutations == 0 {
            exact_shapley(&pool, &oracle)?
        } else {
            monte_carlo_shapley(
                &pool,
                &oracle,
                config.shapley_permutations,
                config.shapley_seed.wrapping_add(1),
            )?
        })
    } else {
        None
    };

    let tiers: Vec<TierOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .tiers
            .iter()
            .map(|tier| {
                let samples = &samples;
                let shared = shared.as_ref();
                scope.spawn(move || run_tier(config, tier, owners, samples, eval_set, shared))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tier worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let committed_total: Money = tiers.iter().map(|t| t.selection_cost).sum();

    if survey.is_empty() {
        let prices = vec![ExactRational::zero(); config.tiers.len()];
        return Ok(MarketReport {
            tiers,
            pricing_method: config.pricing.clone(),
            prices,
            revenue: ExactRational::zero(),
            tier_revenue: vec![ExactRational::zero(); config.tiers.len()],
            affordability: 0.0,
            arbitrage_free: true,
            zero_demand: vec![true; config.tiers.len()],
            cell_updates: 0,
            compensation: Vec::new(),
            tier_pools: vec![Money::ZERO; config.tiers.len()],
            distributed_total: Money::ZERO,
            undistributed: Money::ZERO,
            committed_total,
            deficit: !committed_total.is_zero(),
        });
    }

    let pricer = make_pricer(&config.pricing)?;
    let schedule = pricer.price(&config.tiers, survey)?;
    let (_, affordability) = revenue_and_affordability(&schedule.prices, survey);
    let arbitrage = check_arbitrage_free(&config.tiers, &schedule.prices);

    let subsets: Vec<Vec<u32>> = tiers.iter().map(|t| t.selected.clone()).collect();
    let shapley: Vec<BTreeMap<u32, f64>> = tiers.iter().map(|t| t.shapley.clone()).collect();
    let extras: Vec<BTreeMap<u32, Money>> = tiers.iter().map(|t| t.extra_comp.clone()).collect();
    let allocation = if schedule.revenue.is_zero() {
        Allocation {
            records: Vec::new(),
            tier_pools: vec![Money::ZERO; config.tiers.len()],
            distributed_total: Money::ZERO,
            undistributed: Money::ZERO,
        }
    } else {
        allocate_final_compensation(
            &schedule.prices,
            schedule.revenue,
            &subsets,
            &shapley,
            &extras,
        )?
    };

    let mut compensation = allocation.records;
    for rec in &mut compensation {
        for tier in &tiers {
            if tier.selected.contains(&rec.owner_id) {
                rec.committed_base += tier.base_comp[&rec.owner_id];
                rec.committed_extra += tier.extra_comp[&rec.owner_id];
            }
        }
    }

    let deficit = allocation.distributed_total < committed_total;
    Ok(MarketReport {
        tiers,
        pricing_method: schedule.method.clone(),
        prices: schedule.prices.clone(),
        revenue: schedule.revenue,
        tier_revenue: per_tier_revenue(&schedule.prices, survey),
        affordability,
        arbitrage_free: arbitrage.is_arbitrage_free(),
        zero_demand: zero_demand_flags(&config.tiers, survey),
        cell_updates: schedule.cell_updates,
        compensation,
        tier_pools: allocation.tier_pools,
        distributed_total: allocation.distributed_total,
        undistributed: allocation.undistributed,
        committed_total,
        deficit,
    })
}
