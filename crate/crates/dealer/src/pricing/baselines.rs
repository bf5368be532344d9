use crate::error::{DealerError, Result};
use crate::pricing::{
    revenue_and_affordability, zero_demand_flags, PriceSchedule, Pricer,
};
use crate::rational::ExactRational;
use crate::types::{ModelTier, SurveyPoint};

/// Clamps each price into the window its predecessor allows, so every
/// baseline schedule is monotone with non-increasing unit prices no matter
/// how it was seeded.
fn repair_forward(tiers: &[ModelTier], prices: &mut [ExactRational]) {
    for m in 1..prices.len() {
        let ratio = ExactRational::from_f64_exact(tiers[m].epsilon)
            / ExactRational::from_f64_exact(tiers[m - 1].epsilon);
        let floor = prices[m - 1];
        let ceil = prices[m - 1] * ratio;
        if prices[m] < floor {
            prices[m] = floor;
        } else if prices[m] > ceil {
            prices[m] = ceil;
        }
    }
}

fn schedule(
    name: &str,
    tiers: &[ModelTier],
    survey: &[SurveyPoint],
    prices: Vec<ExactRational>,
) -> PriceSchedule {
    let (revenue, _) = revenue_and_affordability(&prices, survey);
    PriceSchedule {
        method: name.to_string(),
        prices,
        revenue,
        zero_demand: zero_demand_flags(tiers, survey),
        cell_updates: 0,
    }
}

fn sorted_bids(survey: &[SurveyPoint]) -> Result<Vec<ExactRational>> {
    if survey.is_empty() {
        return Err(DealerError::EmptySurvey);
    }
    let mut bids: Vec<ExactRational> = survey
        .iter()
        .map(|p| ExactRational::from_money(p.bid))
        .collect();
    bids.sort();
    Ok(bids)
}

/// Interpolates from the cheapest tier-1 bid to the dearest top-tier bid,
/// then repairs the line to feasibility.
pub struct Linear;

impl Pricer for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn price(&self, tiers: &[ModelTier], survey: &[SurveyPoint]) -> Result<PriceSchedule> {
        let bids = sorted_bids(survey)?;
        let top = tiers.len();
        let low = survey
            .iter()
            .filter(|p| p.target_model == 1)
            .map(|p| ExactRational::from_money(p.bid))
            .min()
            .unwrap_or(bids[0]);
        let high = survey
            .iter()
            .filter(|p| p.target_model == top)
            .map(|p| ExactRational::from_money(p.bid))
            .max()
            .unwrap_or(bids[bids.len() - 1]);
        let mut prices: Vec<ExactRational> = if top == 1 || high < low {
            vec![low; top]
        } else {
            let span = ExactRational::from_integer((top - 1) as i128);
            (0..top)
                .map(|m| {
                    low + (high - low) * ExactRational::from_integer(m as i128) / span
                })
                .collect()
        };
        repair_forward(tiers, &mut prices);
        Ok(schedule(self.name(), tiers, survey, prices))
    }
}

/// Constant schedules at the lowest, lower-median, or highest survey bid.
/// A constant price is always feasible because the tiers' privacy budgets
/// strictly increase.
pub enum Constant {
    Low,
    Median,
    High,
}

impl Pricer for Constant {
    fn name(&self) -> &'static str {
        match self {
            Constant::Low => "low",
            Constant::Median => "median",
            Constant::High => "high",
        }
    }

    fn price(&self, tiers: &[ModelTier], survey: &[SurveyPoint]) -> Result<PriceSchedule> {
        let bids = sorted_bids(survey)?;
        let p = match self {
            Constant::Low => bids[0],
            Constant::Median => bids[(bids.len() - 1) / 2],
            Constant::High => bids[bids.len() - 1],
        };
        Ok(schedule(self.name(), tiers, survey, vec![p; tiers.len()]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::pricing::testutil::*;
    use crate::pricing::{check_arbitrage_free, make_pricer, DealerPlus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn major(n: i128) -> ExactRational {
        ExactRational::from_integer(n * 100)
    }

    #[test]
    fn constant_schedules_use_the_right_quantile() {
        let (tiers, survey) = worked_example();
        let low = Constant::Low.price(&tiers, &survey).unwrap();
        assert_eq!(low.prices, vec![major(1); 3]);
        let median = Constant::Median.price(&tiers, &survey).unwrap();
        assert_eq!(median.prices, vec![major(4); 3]);
        let high = Constant::High.price(&tiers, &survey).unwrap();
        assert_eq!(high.prices, vec![major(8); 3]);
        // low sells to everyone
        assert_eq!(low.revenue, major(6));
    }

    #[test]
    fn linear_interpolates_between_end_tier_bids() {
        let (tiers, survey) = worked_example();
        let s = Linear.price(&tiers, &survey).unwrap();
        // from the cheapest tier-1 bid (1) to the dearest tier-3 bid (8);
        // the raw line (1, 4.5, 8) exceeds the unit-price ceiling twice
        assert_eq!(s.prices[0], major(1));
        assert_eq!(s.prices[1], major(2));
        assert_eq!(s.prices[2], major(3));
    }

    #[test]
    fn all_baselines_are_always_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let (tiers, survey) = random_instance(&mut rng, 12, 5, 80);
            for name in ["linear", "low", "median", "high"] {
                let s = make_pricer(name).unwrap().price(&tiers, &survey).unwrap();
                let report = check_arbitrage_free(&tiers, &s.prices);
                assert!(report.is_arbitrage_free(), "{name}: {:?}", report.violations);
            }
        }
    }

    #[test]
    fn optimal_pricing_dominates_every_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let (tiers, survey) = random_instance(&mut rng, 12, 5, 80);
            let best = DealerPlus.price(&tiers, &survey).unwrap();
            for name in ["dealer", "linear", "low", "median", "high"] {
                let s = make_pricer(name).unwrap().price(&tiers, &survey).unwrap();
                assert!(
                    best.revenue >= s.revenue,
                    "{name} beat the optimum: {} > {}",
                    s.revenue,
                    best.revenue
                );
            }
        }
    }

    #[test]
    fn empty_survey_rejected_by_baselines() {
        let tiers = tiers_with_eps(&[1.0, 2.0]);
        assert!(Linear.price(&tiers, &[]).is_err());
        assert!(Constant::Low.price(&tiers, &[]).is_err());
    }

    #[test]
    fn single_tier_linear_degenerates_to_a_constant() {
        let tiers = tiers_with_eps(&[2.0]);
        let survey = vec![crate::types::SurveyPoint {
            target_model: 1,
            bid: Money::from_major(7),
        }];
        let s = Linear.price(&tiers, &survey).unwrap();
        assert_eq!(s.prices, vec![major(7)]);
    }
}
