use std::collections::VecDeque;

use crate::error::{DealerError, Result};
use crate::pricing::PricePoint;
use crate::rational::ExactRational;
use crate::types::ModelTier;

/// Result of the revenue dynamic program.
#[derive(Debug, Clone)]
pub struct DpOutcome {
    /// One price per tier, including tiers whose candidate list was empty
    /// (those are filled with a feasible zero-revenue price afterwards).
    pub prices: Vec<ExactRational>,
    pub revenue: ExactRational,
    /// OPT values per tier, ascending by candidate price; `None` marks a
    /// candidate with no feasible predecessor. Empty tiers stay empty.
    pub opt_table: Vec<Vec<Option<ExactRational>>>,
    /// Table writes plus predecessor-window insertions; stays well inside
    /// the (N*M)^2 envelope thanks to the sliding-window maximum.
    pub cell_updates: u64,
}

/// Maximizes survey revenue over per-tier candidate prices subject to
/// monotone prices and non-increasing unit prices between every tier pair.
///
/// Candidates must be sorted ascending per tier. For each tier the feasible
/// predecessor prices form a window [p * eps_prev / eps_m, p] whose two ends
/// both advance with p, so a monotone deque yields each row in linear time.
/// The deque never pops an equal value, so its front is always the lowest
/// price among maximal predecessors; final ties also resolve to the lowest
/// price.
pub fn maximize_revenue(tiers: &[ModelTier], space: &[Vec<PricePoint>]) -> Result<DpOutcome> {
    assert_eq!(tiers.len(), space.len());
    let eps: Vec<ExactRational> = tiers
        .iter()
        .map(|t| ExactRational::from_f64_exact(t.epsilon))
        .collect();
    let nonempty: Vec<usize> = (0..space.len()).filter(|&m| !space[m].is_empty()).collect();
    if nonempty.is_empty() {
        return Err(DealerError::EmptySolutionSpace);
    }

    let mut cell_updates: u64 = 0;
    let mut opt_table: Vec<Vec<Option<ExactRational>>> =
        space.iter().map(|s| vec![None; s.len()]).collect();
    let mut pred: Vec<Vec<usize>> = space.iter().map(|s| vec![usize::MAX; s.len()]).collect();

    // Tiers that end up in the backtracking chain. A tier whose candidates
    // all lack a feasible predecessor (possible when the candidates are raw
    // survey bids only) is dropped and priced afterwards like an empty tier.
    let mut priced: Vec<usize> = Vec::new();
    let mut prev: Option<usize> = None;
    for &m in &nonempty {
        let pts = &space[m];
        let mr = marginal_revenue(pts);
        match prev {
            None => {
                for j in 0..pts.len() {
                    opt_table[m][j] = Some(mr[j]);
                    cell_updates += 1;
                }
            }
            Some(pm) => {
                let prev_pts = &space[pm];
                let mut deque: VecDeque<usize> = VecDeque::new();
                let mut next = 0usize;
                for j in 0..pts.len() {
                    let upper = pts[j].price;
                    let lower = pts[j].price * eps[pm] / eps[m];
                    while next < prev_pts.len() && prev_pts[next].price <= upper {
                        if let Some(v) = opt_table[pm][next] {
                            while let Some(&back) = deque.back() {
                                if opt_table[pm][back].unwrap() < v {
                                    deque.pop_back();
                                } else {
                                    break;
                                }
                            }
                            deque.push_back(next);
                            cell_updates += 1;
                        }
                        next += 1;
                    }
                    while let Some(&front) = deque.front() {
                        if prev_pts[front].price < lower {
                            deque.pop_front();
                        } else {
                            break;
                        }
                    }
                    if let Some(&front) = deque.front() {
                        opt_table[m][j] = Some(opt_table[pm][front].unwrap() + mr[j]);
                        pred[m][j] = front;
                        cell_updates += 1;
                    }
                }
            }
        }
        if opt_table[m].iter().any(Option::is_some) {
            priced.push(m);
            prev = Some(m);
        }
    }

    // Revenue-maximal cell in the last priced tier; ties take the lowest
    // price since the scan only replaces on a strict improvement.
    let last = *priced.last().expect("first non-empty tier is always priced");
    let mut best: Option<usize> = None;
    for j in 0..space[last].len() {
        if let Some(v) = opt_table[last][j] {
            if best.is_none() || v > opt_table[last][best.unwrap()].unwrap() {
                best = Some(j);
            }
        }
    }
    let best = best.ok_or(DealerError::EmptySolutionSpace)?;
    let revenue = opt_table[last][best].unwrap();

    let mut prices: Vec<Option<ExactRational>> = vec![None; tiers.len()];
    let mut j = best;
    for idx in (0..priced.len()).rev() {
        let m = priced[idx];
        prices[m] = Some(space[m][j].price);
        if idx > 0 {
            j = pred[m][j];
        }
    }

    fill_unpriced_tiers(&eps, &priced, &mut prices);
    Ok(DpOutcome {
        prices: prices.into_iter().map(Option::unwrap).collect(),
        revenue,
        opt_table,
        cell_updates,
    })
}

/// MR(m, j) = price * (number of this tier's survey bids at or above it),
/// computed with one suffix sum over the ascending candidate list.
fn marginal_revenue(pts: &[PricePoint]) -> Vec<ExactRational> {
    let mut mr = vec![ExactRational::zero(); pts.len()];
    let mut count: i128 = 0;
    for j in (0..pts.len()).rev() {
        count += pts[j].survey_count as i128;
        mr[j] = pts[j].price * ExactRational::from_integer(count);
    }
    mr
}

/// Assigns zero-revenue tiers a price compatible with their neighbors:
/// leading tiers sit on the first anchor's unit-price line, interior runs
/// take the loosest price both anchors allow, trailing tiers carry the last
/// anchor's price forward.
fn fill_unpriced_tiers(
    eps: &[ExactRational],
    nonempty: &[usize],
    prices: &mut [Option<ExactRational>],
) {
    let first = nonempty[0];
    for m in 0..first {
        prices[m] = Some(prices[first].unwrap() * eps[m] / eps[first]);
    }
    let last = *nonempty.last().unwrap();
    for m in last + 1..prices.len() {
        prices[m] = Some(prices[last].unwrap());
    }
    for w in nonempty.windows(2) {
        let (a, b) = (w[0], w[1]);
        for m in (a + 1..b).rev() {
            let from_right = prices[m + 1].unwrap() * eps[m] / eps[m + 1];
            let floor = prices[a].unwrap();
            prices[m] = Some(if from_right > floor { from_right } else { floor });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;
    use crate::pricing::testutil::*;
    use crate::pricing::{
        build_solution_space, check_arbitrage_free, revenue_and_affordability, survey_only_space,
    };
    use crate::types::SurveyPoint;

    fn major(n: i128) -> ExactRational {
        ExactRational::from_integer(n * 100)
    }

    fn opt_row(outcome: &DpOutcome, m: usize) -> Vec<i128> {
        outcome.opt_table[m]
            .iter()
            .map(|v| v.unwrap().numerator() / 100)
            .collect()
    }

    #[test]
    fn worked_example_opt_table_and_schedule() {
        let (tiers, survey) = worked_example();
        let space = build_solution_space(&tiers, &survey).unwrap();
        let outcome = maximize_revenue(&tiers, &space).unwrap();
        assert_eq!(opt_row(&outcome, 0), vec![2, 3, 4, 0, 0, 0]);
        assert_eq!(opt_row(&outcome, 1), vec![6, 9, 9, 11, 4]);
        assert_eq!(opt_row(&outcome, 2), vec![15, 18, 19, 19, 11, 4]);
        assert_eq!(outcome.revenue, major(19));
        assert_eq!(outcome.prices, vec![major(4), major(5), major(5)]);
        assert!(check_arbitrage_free(&tiers, &outcome.prices).is_arbitrage_free());
        let (rev, _) = revenue_and_affordability(&outcome.prices, &survey);
        assert_eq!(rev, outcome.revenue);
    }

    #[test]
    fn single_tier_picks_the_best_bid_threshold() {
        let tiers = tiers_with_eps(&[1.0]);
        let survey: Vec<SurveyPoint> = [3, 5, 5, 9]
            .iter()
            .map(|&b| SurveyPoint {
                target_model: 1,
                bid: Money::from_major(b),
            })
            .collect();
        let space = build_solution_space(&tiers, &survey).unwrap();
        let outcome = maximize_revenue(&tiers, &space).unwrap();
        // price 5 sells three copies for 15, beating 3*4 and 9*1
        assert_eq!(outcome.prices, vec![major(5)]);
        assert_eq!(outcome.revenue, major(15));
    }

    #[test]
    fn revenue_of_schedule_matches_opt_value() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (tiers, survey) = random_instance(&mut rng, 10, 4, 50);
            let space = build_solution_space(&tiers, &survey).unwrap();
            let outcome = maximize_revenue(&tiers, &space).unwrap();
            let (rev, _) = revenue_and_affordability(&outcome.prices, &survey);
            assert_eq!(rev, outcome.revenue);
            assert!(
                check_arbitrage_free(&tiers, &outcome.prices).is_arbitrage_free(),
                "infeasible schedule {:?}",
                outcome.prices
            );
        }
    }

    #[test]
    fn survey_only_dp_skips_and_fills_empty_tiers() {
        let tiers = tiers_with_eps(&[1.0, 2.0, 3.0, 4.0]);
        // nobody bid on tiers 1 and 3
        let survey = vec![
            SurveyPoint {
                target_model: 2,
                bid: Money::from_major(6),
            },
            SurveyPoint {
                target_model: 4,
                bid: Money::from_major(10),
            },
        ];
        let space = survey_only_space(&tiers, &survey).unwrap();
        let outcome = maximize_revenue(&tiers, &space).unwrap();
        assert_eq!(outcome.prices[1], major(6));
        assert_eq!(outcome.prices[3], major(10));
        assert_eq!(outcome.revenue, major(16));
        assert!(check_arbitrage_free(&tiers, &outcome.prices).is_arbitrage_free());
        assert!(outcome.opt_table[0].is_empty());
        assert!(outcome.opt_table[2].is_empty());
    }

    #[test]
    fn leading_and_trailing_empty_tiers_get_feasible_prices() {
        let tiers = tiers_with_eps(&[1.0, 2.0, 3.0]);
        let survey = vec![SurveyPoint {
            target_model: 2,
            bid: Money::from_major(8),
        }];
        let space = survey_only_space(&tiers, &survey).unwrap();
        let outcome = maximize_revenue(&tiers, &space).unwrap();
        assert_eq!(outcome.prices[1], major(8));
        // leading tier sits on tier 2's unit-price line, trailing carries
        assert_eq!(outcome.prices[0], major(4));
        assert_eq!(outcome.prices[2], major(8));
        assert!(check_arbitrage_free(&tiers, &outcome.prices).is_arbitrage_free());
    }

    #[test]
    fn all_empty_space_is_an_error() {
        let tiers = tiers_with_eps(&[1.0, 2.0]);
        assert!(matches!(
            maximize_revenue(&tiers, &[vec![], vec![]]),
            Err(DealerError::EmptySolutionSpace)
        ));
    }
}
