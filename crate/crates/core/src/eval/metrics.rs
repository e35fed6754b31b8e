use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Cutoffs reported for every evaluation.
pub const KS: [usize; 3] = [1, 3, 5];

/// Where the ground-truth item ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRank {
    /// 1-based rank within the pool.
    Ranked(usize),
    /// Lost its group in grouped reranking.
    Eliminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingOutcome {
    pub target_rank: TargetRank,
    pub pool_size: usize,
    pub scenario_id: String,
    pub user_id: String,
}

impl RankingOutcome {
    pub fn new(target_rank: TargetRank, pool_size: usize, scenario_id: &str, user_id: &str) -> Self {
        if let TargetRank::Ranked(r) = target_rank {
            assert!(r >= 1 && r <= pool_size, "rank {r} outside pool of {pool_size}");
        }
        RankingOutcome {
            target_rank,
            pool_size,
            scenario_id: scenario_id.to_string(),
            user_id: user_id.to_string(),
        }
    }
}

/// 1 if the target ranks within the top `k`.
pub fn hit(rank: TargetRank, k: usize) -> f64 {
    match rank {
        TargetRank::Ranked(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// Discounted gain of the single relevant item, `1/log2(rank+1)` within the
/// cutoff.
pub fn ndcg(rank: TargetRank, k: usize) -> f64 {
    match rank {
        TargetRank::Ranked(r) if r <= k => 1.0 / ((r + 1) as f64).log2(),
        _ => 0.0,
    }
}

/// Mean HR@K and NDCG@K over a scenario's instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario_id: String,
    pub n_instances: usize,
    pub hr: [f64; 3],
    pub ndcg: [f64; 3],
}

impl MetricReport {
    pub fn from_outcomes(scenario_id: &str, outcomes: &[RankingOutcome]) -> Self {
        let mut hr = [0.0; 3];
        let mut nd = [0.0; 3];
        for o in outcomes {
            for (i, &k) in KS.iter().enumerate() {
                hr[i] += hit(o.target_rank, k);
                nd[i] += ndcg(o.target_rank, k);
            }
        }
        if !outcomes.is_empty() {
            let n = outcomes.len() as f64;
            hr.iter_mut().chain(nd.iter_mut()).for_each(|v| *v /= n);
        }
        MetricReport {
            scenario_id: scenario_id.to_string(),
            n_instances: outcomes.len(),
            hr,
            ndcg: nd,
        }
    }

    pub fn hr_at(&self, k: usize) -> f64 {
        self.hr[Self::slot(k)]
    }

    pub fn ndcg_at(&self, k: usize) -> f64 {
        self.ndcg[Self::slot(k)]
    }

    fn slot(k: usize) -> usize {
        KS.iter()
            .position(|&x| x == k)
            .unwrap_or_else(|| panic!("K must be one of {KS:?}"))
    }

    /// Metrics keyed `hr@1` ... `ndcg@5`.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for (i, k) in KS.iter().enumerate() {
            m.insert(format!("hr@{k}"), self.hr[i]);
            m.insert(format!("ndcg@{k}"), self.ndcg[i]);
        }
        m
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (n={})", self.scenario_id, self.n_instances)?;
        for (i, k) in KS.iter().enumerate() {
            write!(f, "  HR@{k} {:.4} NDCG@{k} {:.4}", self.hr[i], self.ndcg[i])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hit_examples() {
        assert_eq!(hit(TargetRank::Ranked(1), 1), 1.0);
        assert_eq!(hit(TargetRank::Ranked(4), 3), 0.0);
        assert_eq!(hit(TargetRank::Eliminated, 5), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        for k in KS {
            assert_eq!(ndcg(TargetRank::Ranked(1), k), 1.0);
        }
        assert!((ndcg(TargetRank::Ranked(2), 3) - 0.6309297535714575).abs() < 1e-15);
        assert_eq!(ndcg(TargetRank::Ranked(3), 5), 0.5);
        assert_eq!(ndcg(TargetRank::Ranked(4), 3), 0.0);
    }

    #[test]
    fn report_means_and_keys() {
        let o = |r| RankingOutcome::new(TargetRank::Ranked(r), 10, "s", "u");
        let rep = MetricReport::from_outcomes("s", &[o(1), o(2), o(6)]);
        assert_eq!(rep.hr_at(1), 1.0 / 3.0);
        assert_eq!(rep.hr_at(5), 2.0 / 3.0);
        assert!((rep.ndcg_at(3) - (1.0 + 1.0 / 3f64.log2()) / 3.0).abs() < 1e-12);
        assert_eq!(rep.metrics().len(), 6);
        assert!(rep.metrics().contains_key("ndcg@5"));
    }

    proptest! {
        #[test]
        fn report_invariants(ranks in proptest::collection::vec(1usize..=10, 1..50)) {
            let outcomes: Vec<_> = ranks
                .iter()
                .map(|&r| RankingOutcome::new(TargetRank::Ranked(r), 10, "s", "u"))
                .collect();
            let rep = MetricReport::from_outcomes("s", &outcomes);
            prop_assert!(rep.hr[0] <= rep.hr[1] && rep.hr[1] <= rep.hr[2]);
            prop_assert!(rep.ndcg[0] <= rep.ndcg[1] && rep.ndcg[1] <= rep.ndcg[2]);
            for i in 0..3 {
                prop_assert!(rep.ndcg[i] <= rep.hr[i] + 1e-15);
                prop_assert!((0.0..=1.0).contains(&rep.hr[i]));
            }
        }

        #[test]
        fn metrics_do_not_increase_with_rank(r in 1usize..20, k in prop::sample::select(KS.to_vec())) {
            prop_assert!(hit(TargetRank::Ranked(r + 1), k) <= hit(TargetRank::Ranked(r), k));
            prop_assert!(ndcg(TargetRank::Ranked(r + 1), k) <= ndcg(TargetRank::Ranked(r), k));
        }
    }
}
