use num_integer::Integer;
use serde::{Deserialize, Serialize};

use super::CompItem;
use crate::error::{DealerError, Result};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    BruteForce,
    PseudoPolyDP,
    Greedy,
    GuessGreedy,
}

/// A feasible training subset and its score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Chosen owner ids, sorted ascending.
    pub chosen: Vec<u32>,
    pub total_value: f64,
    pub total_cost: Money,
    pub solver: SolverKind,
}

/// One budget-constrained maximum value solver. All solvers are pure; pick
/// one from the registry by name.
pub trait BcmvpSolver: Sync + Send {
    fn name(&self) -> &'static str;
    fn kind(&self) -> SolverKind;
    fn solve(&self, items: &[CompItem], budget: Money) -> Result<SelectionResult>;
}

pub fn solver_names() -> &'static [&'static str] {
    &["brute", "dp", "greedy", "guess-greedy"]
}

/// `guess_alpha` only matters for "guess-greedy".
pub fn make_solver(name: &str, guess_alpha: f64) -> Result<Box<dyn BcmvpSolver>> {
    match name {
        "brute" => Ok(Box::new(BruteForce)),
        "dp" => Ok(Box::new(PseudoPolyDp)),
        "greedy" => Ok(Box::new(Greedy)),
        "guess-greedy" => Ok(Box::new(GuessGreedy { alpha: guess_alpha })),
        _ => Err(DealerError::UnknownStrategy {
            kind: "solver",
            name: name.to_string(),
            known: solver_names().join(", "),
        }),
    }
}

fn result_from(items: &[CompItem], chosen_idx: &[usize], kind: SolverKind) -> SelectionResult {
    let mut chosen: Vec<u32> = chosen_idx.iter().map(|&i| items[i].owner_id).collect();
    chosen.sort_unstable();
    SelectionResult {
        chosen,
        total_value: chosen_idx.iter().map(|&i| items[i].shapley).sum(),
        total_cost: chosen_idx.iter().map(|&i| items[i].total_cost()).sum(),
        solver: kind,
    }
}

const BRUTE_FORCE_LIMIT: usize = 22;

/// Exhaustive search; the exact oracle the approximation solvers are
/// checked against. Ties break toward smaller total cost, then the
/// lexicographically smallest chosen id set.
pub struct BruteForce;

impl BcmvpSolver for BruteForce {
    fn name(&self) -> &'static str {
        "brute"
    }

    fn kind(&self) -> SolverKind {
        SolverKind::BruteForce
    }

    fn solve(&self, items: &[CompItem], budget: Money) -> Result<SelectionResult> {
        let n = items.len();
        if n > BRUTE_FORCE_LIMIT {
            return Err(DealerError::TooManyItems(n, BRUTE_FORCE_LIMIT));
        }
        let size = 1usize << n;
        let mut value = vec![0.0f64; size];
        let mut cost = vec![0u64; size];
        let mut best_mask = 0usize;
        for mask in 1..size {
            let low = mask & mask.wrapping_neg();
            let idx = low.trailing_zeros() as usize;
            value[mask] = value[mask ^ low] + items[idx].shapley;
            cost[mask] = cost[mask ^ low] + items[idx].total_cost().minor();
            if cost[mask] > budget.minor() {
                continue;
            }
            if better(
                value[mask],
                cost[mask],
                mask,
                value[best_mask],
                cost[best_mask],
                best_mask,
                items,
            ) {
                best_mask = mask;
            }
        }
        let chosen: Vec<usize> = (0..n).filter(|i| best_mask & (1 << i) != 0).collect();
        Ok(result_from(items, &chosen, SolverKind::BruteForce))
    }
}

fn better(
    value: f64,
    cost: u64,
    mask: usize,
    best_value: f64,
    best_cost: u64,
    best_mask: usize,
    items: &[CompItem],
) -> bool {
    if value > best_value + 1e-12 {
        return true;
    }
    if (value - best_value).abs() > 1e-12 {
        return false;
    }
    if cost != best_cost {
        return cost < best_cost;
    }
    ids_of(mask, items) < ids_of(best_mask, items)
}

fn ids_of(mask: usize, items: &[CompItem]) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..items.len())
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| items[i].owner_id)
        .collect();
    ids.sort_unstable();
    ids
}

const DP_TABLE_CELL_LIMIT: u64 = 200_000_000;

/// Pseudo-polynomial knapsack over budget columns scaled by the gcd of all
/// item costs and the budget.
pub struct PseudoPolyDp;

impl BcmvpSolver for PseudoPolyDp {
    fn name(&self) -> &'static str {
        "dp"
    }

    fn kind(&self) -> SolverKind {
        SolverKind::PseudoPolyDP
    }

    fn solve(&self, items: &[CompItem], budget: Money) -> Result<SelectionResult> {
        let n = items.len();
        let costs: Vec<u64> = items.iter().map(|it| it.total_cost().minor()).collect();
        let a = costs
            .iter()
            .fold(budget.minor(), |acc, &c| acc.gcd(&c));
        if a == 0 {
            // Budget zero and every cost zero: everything is free.
            let all: Vec<usize> = (0..n).collect();
            return Ok(result_from(items, &all, SolverKind::PseudoPolyDP));
        }
        let cols = (budget.minor() / a) as usize;
        let cells = (n as u64 + 1) * (cols as u64 + 1);
        if cells > DP_TABLE_CELL_LIMIT {
            return Err(DealerError::BudgetTooLargeForTable(cells, DP_TABLE_CELL_LIMIT));
        }

        let scaled: Vec<usize> = costs.iter().map(|&c| (c / a) as usize).collect();
        let width = cols + 1;
        let mut table = vec![0.0f64; (n + 1) * width];
        let mut take = vec![false; (n + 1) * width];
        for i in 1..=n {
            for j in 0..=cols {
                let skip = table[(i - 1) * width + j];
                if scaled[i - 1] <= j {
                    let with = table[(i - 1) * width + (j - scaled[i - 1])] + items[i - 1].shapley;
                    if with > skip {
                        table[i * width + j] = with;
                        take[i * width + j] = true;
                        continue;
                    }
                }
                table[i * width + j] = skip;
            }
        }

        let mut chosen = Vec::new();
        let mut j = cols;
        for i in (1..=n).rev() {
            if take[i * width + j] {
                chosen.push(i - 1);
                j -= scaled[i - 1];
            }
        }
        chosen.reverse();
        Ok(result_from(items, &chosen, SolverKind::PseudoPolyDP))
    }
}

/// Order used by both greedy-family solvers: value density descending,
/// then higher value, then lower owner id. Zero-cost items sort first.
fn density_order(items: &[CompItem], pool: &[usize]) -> Vec<usize> {
    let mut order = pool.to_vec();
    order.sort_by(|&a, &b| {
        let (ia, ib) = (&items[a], &items[b]);
        let (ca, cb) = (ia.total_cost().minor(), ib.total_cost().minor());
        let da = if ca == 0 { f64::INFINITY } else { ia.shapley / ca as f64 };
        let db = if cb == 0 { f64::INFINITY } else { ib.shapley / cb as f64 };
        db.partial_cmp(&da)
            .unwrap()
            .then(ib.shapley.partial_cmp(&ia.shapley).unwrap())
            .then(ia.owner_id.cmp(&ib.owner_id))
    });
    order
}

/// Prefix of the density order up to (not including) the first item that
/// would exceed the remaining budget.
fn greedy_prefix(items: &[CompItem], pool: &[usize], budget: Money) -> Vec<usize> {
    let mut chosen = Vec::new();
    let mut spent = 0u64;
    for &i in &density_order(items, pool) {
        let c = items[i].total_cost().minor();
        if spent + c > budget.minor() {
            break;
        }
        spent += c;
        chosen.push(i);
    }
    chosen
}

/// Density-greedy with the prefix stop rule; guarantees (1 - zeta) of the
/// optimum when every cost is at most zeta * budget.
pub struct Greedy;

impl BcmvpSolver for Greedy {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn kind(&self) -> SolverKind {
        SolverKind::Greedy
    }

    fn solve(&self, items: &[CompItem], budget: Money) -> Result<SelectionResult> {
        let pool: Vec<usize> = (0..items.len()).collect();
        let chosen = greedy_prefix(items, &pool, budget);
        Ok(result_from(items, &chosen, SolverKind::Greedy))
    }
}

const GUESS_SUBSET_LIMIT: u64 = 1_000_000;

/// Enumerates every candidate "head" subset of at most ceil(1/alpha) items,
/// prunes the remainder to items no more valuable than the head's minimum,
/// finishes greedily, and keeps the best combination. Worst case value is
/// (1 - alpha) of the optimum.
pub struct GuessGreedy {
    pub alpha: f64,
}

impl BcmvpSolver for GuessGreedy {
    fn name(&self) -> &'static str {
        "guess-greedy"
    }

    fn kind(&self) -> SolverKind {
        SolverKind::GuessGreedy
    }

    fn solve(&self, items: &[CompItem], budget: Money) -> Result<SelectionResult> {
        assert!(self.alpha > 0.0 && self.alpha < 1.0, "alpha must be in (0,1)");
        let n = items.len();
        let h = (1.0 / self.alpha).ceil() as usize;

        let mut subset_count: u64 = 0;
        let mut choose: u64 = 1;
        for i in 1..=h.min(n) {
            choose = choose * (n - i + 1) as u64 / i as u64;
            subset_count += choose;
            if subset_count > GUESS_SUBSET_LIMIT {
                return Err(DealerError::EnumerationTooLarge(
                    subset_count,
                    GUESS_SUBSET_LIMIT,
                ));
            }
        }

        let mut best: Option<SelectionResult> = None;
        let mut head = Vec::with_capacity(h);
        enumerate_heads(n, h, 0, &mut head, &mut |head: &[usize]| {
            let head_cost: u64 = head.iter().map(|&i| items[i].total_cost().minor()).sum();
            if head_cost > budget.minor() {
                return;
            }
            let min_sv = head
                .iter()
                .map(|&i| items[i].shapley)
                .fold(f64::INFINITY, f64::min);
            let pool: Vec<usize> = (0..n)
                .filter(|i| !head.contains(i) && items[*i].shapley <= min_sv)
                .collect();
            let remaining = Money::from_minor(budget.minor() - head_cost);
            let mut chosen = greedy_prefix(items, &pool, remaining);
            chosen.extend_from_slice(head);
            chosen.sort_unstable();
            let candidate = result_from(items, &chosen, SolverKind::GuessGreedy);
            let replace = match &best {
                None => true,
                Some(b) => {
                    candidate.total_value > b.total_value + 1e-12
                        || ((candidate.total_value - b.total_value).abs() <= 1e-12
                            && candidate.chosen < b.chosen)
                }
            };
            if replace {
                best = Some(candidate);
            }
        });
        Ok(best.expect("empty head subset always evaluated"))
    }
}

fn enumerate_heads(
    n: usize,
    max_size: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]),
) {
    visit(current);
    if current.len() == max_size {
        return;
    }
    for i in start..n {
        current.push(i);
        enumerate_heads(n, max_size, i + 1, current, visit);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn item(id: u32, sv: f64, cost_minor: u64) -> CompItem {
        CompItem::new(id, sv, Money::from_minor(cost_minor), Money::ZERO)
    }

    fn random_items(rng: &mut ChaCha8Rng, n: usize, max_cost: u64) -> Vec<CompItem> {
        (0..n)
            .map(|i| {
                item(
                    i as u32,
                    rng.gen_range(0..=20) as f64,
                    rng.gen_range(1..=max_cost),
                )
            })
            .collect()
    }

    #[test]
    fn brute_force_basics() {
        let items = vec![item(1, 5.0, 5), item(2, 5.0, 5)];
        let r = BruteForce.solve(&items, Money::from_minor(5)).unwrap();
        assert_eq!(r.total_value, 5.0);
        assert_eq!(r.chosen.len(), 1);
        // ample budget takes everything
        let r = BruteForce.solve(&items, Money::from_minor(100)).unwrap();
        assert_eq!(r.chosen, vec![1, 2]);
    }

    #[test]
    fn brute_force_guard() {
        let items: Vec<CompItem> = (0..23).map(|i| item(i, 1.0, 1)).collect();
        assert!(matches!(
            BruteForce.solve(&items, Money::from_minor(1)),
            Err(DealerError::TooManyItems(23, 22))
        ));
    }

    #[test]
    fn dp_matches_hand_instances() {
        // costs (3,4,5)*100, values (3,4,5), budget 700
        let items = vec![item(1, 3.0, 300), item(2, 4.0, 400), item(3, 5.0, 500)];
        let r = PseudoPolyDp.solve(&items, Money::from_minor(700)).unwrap();
        assert_eq!(r.total_value, 7.0);
        assert_eq!(r.chosen, vec![1, 2]);

        // single unaffordable item
        let items = vec![item(1, 9.0, 1000)];
        let r = PseudoPolyDp.solve(&items, Money::from_minor(500)).unwrap();
        assert!(r.chosen.is_empty());
        assert_eq!(r.total_value, 0.0);

        // partition-style instance
        let items = vec![
            item(1, 1.0, 100),
            item(2, 5.0, 500),
            item(3, 11.0, 1100),
            item(4, 5.0, 500),
        ];
        let r = PseudoPolyDp.solve(&items, Money::from_minor(1100)).unwrap();
        assert_eq!(r.total_value, 11.0);
    }

    #[test]
    fn dp_equals_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..200 {
            let n = rng.gen_range(1..=12);
            let items = random_items(&mut rng, n, 30);
            let budget = Money::from_minor(rng.gen_range(1..=120));
            let dp = PseudoPolyDp.solve(&items, budget).unwrap();
            let bf = BruteForce.solve(&items, budget).unwrap();
            assert!((dp.total_value - bf.total_value).abs() < 1e-9);
            assert!(dp.total_cost <= budget);
        }
    }

    #[test]
    fn greedy_prefix_rule_stops_at_first_misfit() {
        // densities 2.0, 1.0, 0.5 with costs 1, 2, 4 and budget 3:
        // items 1 and 2 fit, item 3 would not, greedy stops there.
        let items = vec![item(1, 2.0, 1), item(2, 2.0, 2), item(3, 2.0, 4)];
        let r = Greedy.solve(&items, Money::from_minor(3)).unwrap();
        assert_eq!(r.chosen, vec![1, 2]);
        assert!(Greedy
            .solve(&[], Money::from_minor(3))
            .unwrap()
            .chosen
            .is_empty());
    }

    #[test]
    fn greedy_zero_cost_items_always_taken_first() {
        let items = vec![item(1, 0.5, 10), item(2, 0.1, 0)];
        let r = Greedy.solve(&items, Money::from_minor(5)).unwrap();
        assert_eq!(r.chosen, vec![2]);
    }

    #[test]
    fn greedy_theorem_bound_under_small_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let budget = Money::from_minor(100);
        for _ in 0..200 {
            let n = rng.gen_range(1..=14);
            // every cost at most 0.3 * budget
            let items = random_items(&mut rng, n, 30);
            let g = Greedy.solve(&items, budget).unwrap();
            let opt = BruteForce.solve(&items, budget).unwrap();
            assert!(g.total_value >= 0.7 * opt.total_value - 1e-9);
        }
    }

    #[test]
    fn guess_greedy_bound_and_exact_small_optima() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let solver = GuessGreedy { alpha: 0.5 };
        for _ in 0..100 {
            let n = rng.gen_range(1..=8);
            let items = random_items(&mut rng, n, 60);
            let budget = Money::from_minor(rng.gen_range(10..=150));
            let gg = solver.solve(&items, budget).unwrap();
            let opt = BruteForce.solve(&items, budget).unwrap();
            assert!(gg.total_value >= 0.5 * opt.total_value - 1e-9);
            assert!(gg.total_cost <= budget);
        }
        // optimum of size <= h is found exactly
        let items = vec![item(1, 10.0, 90), item(2, 9.0, 90), item(3, 1.0, 10)];
        let gg = solver.solve(&items, Money::from_minor(100)).unwrap();
        let opt = BruteForce.solve(&items, Money::from_minor(100)).unwrap();
        assert_eq!(gg.total_value, opt.total_value);
    }

    #[test]
    fn item_exceeding_budget_alone_is_never_chosen() {
        let items = vec![item(1, 100.0, 1000), item(2, 2.0, 10)];
        for name in solver_names() {
            let solver = make_solver(name, 0.5).unwrap();
            let r = solver.solve(&items, Money::from_minor(50)).unwrap();
            assert_eq!(r.chosen, vec![2], "{name}");
        }
    }

    #[test]
    fn budget_monotonicity_of_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..50 {
            let items = random_items(&mut rng, 10, 40);
            let mut prev = -1.0;
            for b in (0..=200).step_by(20) {
                let r = BruteForce.solve(&items, Money::from_minor(b)).unwrap();
                assert!(r.total_value >= prev - 1e-12);
                prev = r.total_value;
            }
        }
    }

    #[test]
    fn registry_rejects_unknown_names() {
        assert!(make_solver("simplex", 0.5).is_err());
    }
}
