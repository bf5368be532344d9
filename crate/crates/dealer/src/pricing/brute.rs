use crate::error::{DealerError, Result};
use crate::pricing::PricePoint;
use crate::rational::ExactRational;
use crate::types::{ModelTier, SurveyPoint};

const COMBINATION_LIMIT: u128 = 10_000_000;

/// Exhaustive reference for the relaxed problem: tries every combination of
/// candidate prices over the non-empty tiers, keeping combinations that are
/// monotone with non-increasing unit prices. Empty tiers are skipped the same
/// way the dynamic program skips them.
pub fn rrm_bruteforce(tiers: &[ModelTier], space: &[Vec<PricePoint>]) -> Result<ExactRational> {
    let eps: Vec<ExactRational> = tiers
        .iter()
        .map(|t| ExactRational::from_f64_exact(t.epsilon))
        .collect();
    let nonempty: Vec<usize> = (0..space.len()).filter(|&m| !space[m].is_empty()).collect();
    if nonempty.is_empty() {
        return Err(DealerError::EmptySolutionSpace);
    }
    let combos = nonempty
        .iter()
        .map(|&m| space[m].len() as u128)
        .product::<u128>();
    if combos > COMBINATION_LIMIT {
        return Err(DealerError::SearchSpaceTooLarge(combos, COMBINATION_LIMIT));
    }

    let mr: Vec<Vec<ExactRational>> = nonempty
        .iter()
        .map(|&m| marginal_revenue(&space[m]))
        .collect();
    let mut best: Option<ExactRational> = None;
    recurse(
        tiers,
        space,
        &eps,
        &nonempty,
        &mr,
        0,
        None,
        ExactRational::zero(),
        &mut best,
    );
    best.ok_or(DealerError::EmptySolutionSpace)
}

#[allow(clippy::too_many_arguments)]
fn recurse(
    tiers: &[ModelTier],
    space: &[Vec<PricePoint>],
    eps: &[ExactRational],
    nonempty: &[usize],
    mr: &[Vec<ExactRational>],
    depth: usize,
    last: Option<(usize, ExactRational)>,
    acc: ExactRational,
    best: &mut Option<ExactRational>,
) {
    if depth == nonempty.len() {
        if best.is_none() || acc > best.unwrap() {
            *best = Some(acc);
        }
        return;
    }
    let m = nonempty[depth];
    for (j, pt) in space[m].iter().enumerate() {
        if let Some((pm, pp)) = last {
            // monotone prices, non-increasing unit prices
            if pt.price < pp || pt.price * eps[pm] > pp * eps[m] {
                continue;
            }
        }
        recurse(
            tiers,
            space,
            eps,
            nonempty,
            mr,
            depth + 1,
            Some((m, pt.price)),
            acc + mr[depth][j],
            best,
        );
    }
}

fn marginal_revenue(pts: &[PricePoint]) -> Vec<ExactRational> {
    let mut mr = vec![ExactRational::zero(); pts.len()];
    let mut count: i128 = 0;
    for j in (0..pts.len()).rev() {
        count += pts[j].survey_count as i128;
        mr[j] = pts[j].price * ExactRational::from_integer(count);
    }
    mr
}

/// Optimum of the unconstrained problem: each tier independently picks the
/// bid threshold maximizing price times buyers at or above it.
pub fn rm_bruteforce(tiers: &[ModelTier], survey: &[SurveyPoint]) -> ExactRational {
    let mut total = ExactRational::zero();
    for tier in tiers {
        let mut bids: Vec<ExactRational> = survey
            .iter()
            .filter(|p| p.target_model == tier.index)
            .map(|p| ExactRational::from_money(p.bid))
            .collect();
        bids.sort();
        let n = bids.len();
        let mut best = ExactRational::zero();
        for (j, &bid) in bids.iter().enumerate() {
            let revenue = bid * ExactRational::from_integer((n - j) as i128);
            if revenue > best {
                best = revenue;
            }
        }
        total = total + best;
    }
    total
}
