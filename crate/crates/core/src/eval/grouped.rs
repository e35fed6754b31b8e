use rand::seq::SliceRandom;

use super::{lookup, Assembler, EvalError, RankingOutcome, TargetRank};
use crate::catalog::Catalog;
use crate::digest::rng_for;
use crate::matcher::CandidatePool;
use crate::scorer::Scorer;

pub const GROUPS: usize = 10;
pub const GROUP_SIZE: usize = 10;

/// Rank a 100-candidate pool in two stages: a seeded shuffle splits it into
/// ten groups of ten, each group's top-scored item advances, and the ten
/// winners are scored together. A target that loses its group is
/// [`TargetRank::Eliminated`].
pub fn grouped_rerank(
    pool: &CandidatePool,
    catalog: &Catalog,
    assembler: &Assembler,
    scorer: &dyn Scorer,
    seed: u64,
    scenario_id: &str,
    user_id: &str,
) -> Result<RankingOutcome, EvalError> {
    let expected = GROUPS * GROUP_SIZE;
    if pool.size() != expected {
        return Err(EvalError::PoolSize {
            expected,
            found: pool.size(),
        });
    }
    let target = pool.target_item_id.as_str();
    let mut ids = pool.items();
    ids.shuffle(&mut rng_for(seed, &["groups"]));

    let mut winners = Vec::with_capacity(GROUPS);
    for group in ids.chunks(GROUP_SIZE) {
        let items = lookup(catalog, group)?;
        let hint = group.iter().position(|id| *id == target);
        let order = assembler.order(scorer, &items, hint)?;
        winners.push(group[order[0]]);
    }

    let rank = match winners.iter().position(|id| *id == target) {
        None => TargetRank::Eliminated,
        Some(t) => {
            let items = lookup(catalog, &winners)?;
            let order = assembler.order(scorer, &items, Some(t))?;
            TargetRank::Ranked(order.iter().position(|&i| i == t).expect("permutation") + 1)
        }
    };
    Ok(RankingOutcome::new(rank, pool.size(), scenario_id, user_id))
}
