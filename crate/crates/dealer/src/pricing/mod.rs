pub mod baselines;
pub mod brute;
pub mod dp;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{DealerError, Result};
use crate::rational::ExactRational;
use crate::types::{ModelTier, SurveyPoint};

pub use brute::{rm_bruteforce, rrm_bruteforce};
pub use dp::{maximize_revenue, DpOutcome};

/// Provenance of a candidate price in the solution space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PointKind {
    /// A survey bid on this very tier.
    Sv,
    /// A lower tier's bid scaled up along its unit-price line.
    Sc,
    /// A higher tier's bid carried down unchanged.
    Mc,
}

/// One candidate price for one tier. `survey_count` is the number of survey
/// bids on this tier exactly equal to `price`; only those earn revenue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricePoint {
    pub price: ExactRational,
    pub kind: PointKind,
    pub survey_count: u64,
}

fn eps_exact(tiers: &[ModelTier]) -> Vec<ExactRational> {
    tiers
        .iter()
        .map(|t| ExactRational::from_f64_exact(t.epsilon))
        .collect()
}

fn merge_point(
    map: &mut BTreeMap<ExactRational, (PointKind, u64)>,
    price: ExactRational,
    kind: PointKind,
    survey_count: u64,
) {
    let entry = map.entry(price).or_insert((kind, 0));
    // Sv outranks Sc outranks Mc when the same price arises twice.
    if kind < entry.0 {
        entry.0 = kind;
    }
    entry.1 += survey_count;
}

fn collect(map: BTreeMap<ExactRational, (PointKind, u64)>) -> Vec<PricePoint> {
    map.into_iter()
        .map(|(price, (kind, survey_count))| PricePoint {
            price,
            kind,
            survey_count,
        })
        .collect()
}

/// Candidate prices per tier that are provably sufficient for the relaxed
/// revenue optimum: every bid verbatim on its own tier, scaled up along its
/// unit-price line for looser tiers, and carried down for tighter tiers.
/// Each tier's list is sorted ascending with exact duplicates merged.
pub fn build_solution_space(
    tiers: &[ModelTier],
    survey: &[SurveyPoint],
) -> Result<Vec<Vec<PricePoint>>> {
    if survey.is_empty() {
        return Err(DealerError::EmptySurvey);
    }
    let eps = eps_exact(tiers);
    let mut maps: Vec<BTreeMap<ExactRational, (PointKind, u64)>> =
        (0..tiers.len()).map(|_| BTreeMap::new()).collect();
    for pt in survey {
        pt.validate(tiers.len())?;
        let t = pt.target_model - 1;
        let bid = ExactRational::from_money(pt.bid);
        merge_point(&mut maps[t], bid, PointKind::Sv, 1);
        for k in t + 1..tiers.len() {
            merge_point(&mut maps[k], bid * eps[k] / eps[t], PointKind::Sc, 0);
        }
        for k in 0..t {
            merge_point(&mut maps[k], bid, PointKind::Mc, 0);
        }
    }
    Ok(maps.into_iter().map(collect).collect())
}

/// Survey bids only, per tier; tiers nobody bid on come back empty.
pub fn survey_only_space(
    tiers: &[ModelTier],
    survey: &[SurveyPoint],
) -> Result<Vec<Vec<PricePoint>>> {
    if survey.is_empty() {
        return Err(DealerError::EmptySurvey);
    }
    let mut maps: Vec<BTreeMap<ExactRational, (PointKind, u64)>> =
        (0..tiers.len()).map(|_| BTreeMap::new()).collect();
    for pt in survey {
        pt.validate(tiers.len())?;
        merge_point(
            &mut maps[pt.target_model - 1],
            ExactRational::from_money(pt.bid),
            PointKind::Sv,
            1,
        );
    }
    Ok(maps.into_iter().map(collect).collect())
}

/// Arbitrage-freeness diagnostics for a full price schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub monotone: bool,
    pub relaxed_subadditive: bool,
    /// Checked only for tier pairs whose epsilons sum exactly to another
    /// tier's epsilon.
    pub pairwise_subadditive: bool,
    pub violations: Vec<String>,
}

impl ArbitrageReport {
    pub fn is_arbitrage_free(&self) -> bool {
        self.monotone && self.relaxed_subadditive && self.pairwise_subadditive
    }
}

pub fn check_arbitrage_free(tiers: &[ModelTier], prices: &[ExactRational]) -> ArbitrageReport {
    assert_eq!(tiers.len(), prices.len());
    let eps = eps_exact(tiers);
    let mut report = ArbitrageReport {
        monotone: true,
        relaxed_subadditive: true,
        pairwise_subadditive: true,
        violations: Vec::new(),
    };
    let m_count = tiers.len();
    for a in 0..m_count {
        for b in a + 1..m_count {
            if prices[b] < prices[a] {
                report.monotone = false;
                report
                    .violations
                    .push(format!("monotonicity: p[{}] > p[{}]", a + 1, b + 1));
            }
            if prices[b] * eps[a] > prices[a] * eps[b] {
                report.relaxed_subadditive = false;
                report.violations.push(format!(
                    "relaxed subadditivity: p[{}]/eps[{}] < p[{}]/eps[{}]",
                    a + 1,
                    a + 1,
                    b + 1,
                    b + 1
                ));
            }
            let sum_eps = eps[a] + eps[b];
            if let Some(c) = eps.iter().position(|e| *e == sum_eps) {
                if prices[c] > prices[a] + prices[b] {
                    report.pairwise_subadditive = false;
                    report.violations.push(format!(
                        "subadditivity: p[{}] > p[{}] + p[{}]",
                        c + 1,
                        a + 1,
                        b + 1
                    ));
                }
            }
        }
    }
    report
}

/// Exact revenue of a schedule against the survey, plus the fraction of
/// surveyed buyers whose bid covers their target tier's price.
pub fn revenue_and_affordability(
    prices: &[ExactRational],
    survey: &[SurveyPoint],
) -> (ExactRational, f64) {
    let mut revenue = ExactRational::zero();
    let mut affordable = 0usize;
    for pt in survey {
        let p = prices[pt.target_model - 1];
        if ExactRational::from_money(pt.bid) >= p {
            revenue = revenue + p;
            affordable += 1;
        }
    }
    let affordability = if survey.is_empty() {
        0.0
    } else {
        affordable as f64 / survey.len() as f64
    };
    (revenue, affordability)
}

/// Realized revenue per tier: price times the number of surveyed buyers of
/// that tier bidding at least the price.
pub fn per_tier_revenue(prices: &[ExactRational], survey: &[SurveyPoint]) -> Vec<ExactRational> {
    let mut revenue = vec![ExactRational::zero(); prices.len()];
    for pt in survey {
        let m = pt.target_model - 1;
        if ExactRational::from_money(pt.bid) >= prices[m] {
            revenue[m] = revenue[m] + prices[m];
        }
    }
    revenue
}

/// A priced tier menu produced by one pricing method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub method: String,
    /// One exact price per tier, in minor currency units.
    pub prices: Vec<ExactRational>,
    pub revenue: ExactRational,
    /// Tiers no surveyed buyer targeted.
    pub zero_demand: Vec<bool>,
    pub cell_updates: u64,
}

pub fn zero_demand_flags(tiers: &[ModelTier], survey: &[SurveyPoint]) -> Vec<bool> {
    let mut demand = vec![false; tiers.len()];
    for pt in survey {
        demand[pt.target_model - 1] = true;
    }
    demand.iter().map(|d| !d).collect()
}

/// One pricing method: consumes tiers plus the demand survey and emits an
/// arbitrage-free schedule. Pick one from the registry by name.
pub trait Pricer: Sync + Send {
    fn name(&self) -> &'static str;
    fn price(&self, tiers: &[ModelTier], survey: &[SurveyPoint]) -> Result<PriceSchedule>;
}

/// Revenue-optimal dynamic program over the full candidate space.
pub struct DealerPlus;

impl Pricer for DealerPlus {
    fn name(&self) -> &'static str {
        "dealer-plus"
    }

    fn price(&self, tiers: &[ModelTier], survey: &[SurveyPoint]) -> Result<PriceSchedule> {
        let space = build_solution_space(tiers, survey)?;
        let outcome = maximize_revenue(tiers, &space)?;
        Ok(PriceSchedule {
            method: self.name().to_string(),
            prices: outcome.prices,
            revenue: outcome.revenue,
            zero_demand: zero_demand_flags(tiers, survey),
            cell_updates: outcome.cell_updates,
        })
    }
}

/// Same dynamic program restricted to the raw survey bids.
pub struct Dealer;

impl Pricer for Dealer {
    fn name(&self) -> &'static str {
        "dealer"
    }

    fn price(&self, tiers: &[ModelTier], survey: &[SurveyPoint]) -> Result<PriceSchedule> {
        let space = survey_only_space(tiers, survey)?;
        let outcome = maximize_revenue(tiers, &space)?;
        // A tier can get its price from the feasibility fill rather than the
        // table (no bids, or no feasible predecessor among the raw bids), so
        // the schedule is re-scored against the survey.
        let (revenue, _) = revenue_and_affordability(&outcome.prices, survey);
        Ok(PriceSchedule {
            method: self.name().to_string(),
            prices: outcome.prices,
            revenue,
            zero_demand: zero_demand_flags(tiers, survey),
            cell_updates: outcome.cell_updates,
        })
    }
}

pub fn pricer_names() -> &'static [&'static str] {
    &["dealer-plus", "dealer", "linear", "low", "median", "high"]
}

pub fn make_pricer(name: &str) -> Result<Box<dyn Pricer>> {
    match name {
        "dealer-plus" => Ok(Box::new(DealerPlus)),
        "dealer" => Ok(Box::new(Dealer)),
        "linear" => Ok(Box::new(baselines::Linear)),
        "low" => Ok(Box::new(baselines::Constant::Low)),
        "median" => Ok(Box::new(baselines::Constant::Median)),
        "high" => Ok(Box::new(baselines::Constant::High)),
        _ => Err(DealerError::UnknownStrategy {
            kind: "pricer",
            name: name.to_string(),
            known: pricer_names().join(", "),
        }),
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::money::Money;

    fn major(n: i128) -> ExactRational {
        ExactRational::from_integer(n * 100)
    }

    #[test]
    fn worked_example_space_has_sizes_six_five_six() {
        let (tiers, survey) = worked_example();
        let space = build_solution_space(&tiers, &survey).unwrap();
        assert_eq!(
            space.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![6, 5, 6]
        );
        let prices: Vec<Vec<ExactRational>> = space
            .iter()
            .map(|s| s.iter().map(|p| p.price).collect())
            .collect();
        assert_eq!(
            prices[0],
            vec![major(1), major(3), major(4), major(5), major(7), major(8)]
        );
        assert_eq!(
            prices[1],
            vec![major(2), major(3), major(5), major(7), major(8)]
        );
        assert_eq!(
            prices[2],
            vec![
                major(3),
                ExactRational::from_integer(450), // 4.50
                major(5),
                major(8),
                ExactRational::from_integer(1050), // 10.50
                major(12)
            ]
        );
    }

    #[test]
    fn worked_example_survey_flags_survive_merging() {
        let (tiers, survey) = worked_example();
        let space = build_solution_space(&tiers, &survey).unwrap();
        // tier 2 at price 3 is a survey bid; at price 5 only carried down
        let t2 = &space[1];
        let at = |p: ExactRational| t2.iter().find(|pt| pt.price == p).unwrap();
        assert_eq!(at(major(3)).kind, PointKind::Sv);
        assert_eq!(at(major(3)).survey_count, 1);
        assert_eq!(at(major(5)).kind, PointKind::Mc);
        assert_eq!(at(major(5)).survey_count, 0);
        // tier 2 at price 8: both a scaled tier-1 bid and a carried tier-3
        // bid; merged into one point with no direct revenue
        assert_eq!(at(major(8)).survey_count, 0);
    }

    #[test]
    fn schedule_with_bad_unit_prices_is_flagged() {
        let tiers = tiers_with_eps(&[1.0, 2.0, 3.0]);
        // unit prices 3, 3/2, 5/3: the last pair violates the relaxed rule
        let report = check_arbitrage_free(&tiers, &[major(3), major(3), major(5)]);
        assert!(report.monotone);
        assert!(!report.relaxed_subadditive);
        assert!(!report.is_arbitrage_free());

        let report = check_arbitrage_free(&tiers, &[major(4), major(5), major(5)]);
        assert!(report.is_arbitrage_free(), "{:?}", report.violations);
    }

    #[test]
    fn pairwise_subadditivity_checked_where_epsilons_align() {
        // eps 1 + 2 = 3, so p3 <= p1 + p2 is enforceable
        let tiers = tiers_with_eps(&[1.0, 2.0, 3.0]);
        let report = check_arbitrage_free(&tiers, &[major(1), major(2), major(4)]);
        assert!(!report.pairwise_subadditive);
        let report = check_arbitrage_free(&tiers, &[major(1), major(2), major(3)]);
        assert!(report.pairwise_subadditive);
    }

    #[test]
    fn revenue_counts_only_affordable_buyers() {
        let (_, survey) = worked_example();
        let prices = vec![major(4), major(5), major(5)];
        let (rev, afford) = revenue_and_affordability(&prices, &survey);
        // tier 1 sells at 4 to the bid of 4; tier 2 at 5 to the bid of 7;
        // tier 3 at 5 to both bids
        assert_eq!(rev, major(19));
        assert!((afford - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_survey_is_rejected() {
        let tiers = tiers_with_eps(&[1.0, 2.0]);
        assert!(matches!(
            build_solution_space(&tiers, &[]),
            Err(DealerError::EmptySurvey)
        ));
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        let tiers = tiers_with_eps(&[1.0, 2.0]);
        let survey = [SurveyPoint {
            target_model: 3,
            bid: Money::from_major(5),
        }];
        assert!(build_solution_space(&tiers, &survey).is_err());
    }

    #[test]
    fn registry_covers_all_methods() {
        for name in pricer_names() {
            assert_eq!(make_pricer(name).unwrap().name(), *name);
        }
        assert!(make_pricer("auction").is_err());
    }
}
