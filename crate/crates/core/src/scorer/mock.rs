//! Offline scorers: analytic mocks, oracles, a seeded random scorer and the
//! lexical-overlap baseline.

use std::collections::BTreeSet;
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LogLikelihood, ScoreError, ScoreRequest, Scorer};
use crate::digest::rng_for;

/// Case-folded whitespace token set.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// `ln((1 + |overlap|) / (1 + |candidate tokens|))` over token sets.
pub fn lexical_baseline_score(instruction_text: &str, candidate: &str) -> LogLikelihood {
    let inst = tokens(instruction_text);
    let cand = tokens(candidate);
    let overlap = cand.intersection(&inst).count();
    let total = ((1 + overlap) as f64 / (1 + cand.len()) as f64).ln();
    LogLikelihood::new(total, cand.len().max(1) as u32)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn identity(&self) -> String {
        "lexical".into()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        Ok(request
            .candidate_outputs
            .iter()
            .map(|c| lexical_baseline_score(&request.instruction_text, c))
            .collect())
    }
}

/// Assigns every whitespace token the same probability `p`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantTokenScorer {
    pub p: f64,
}

impl Scorer for ConstantTokenScorer {
    fn identity(&self) -> String {
        format!("constant-token:{}", self.p)
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(ScoreError::InvalidRequest(format!(
                "token probability {}",
                self.p
            )));
        }
        Ok(request
            .candidate_outputs
            .iter()
            .map(|c| {
                let n = c.split_whitespace().count().max(1) as u32;
                LogLikelihood::new(f64::from(n) * self.p.ln(), n)
            })
            .collect())
    }
}

/// Scores the hinted target 0 and everything else -1, or with `inverse` the
/// target -2 so that it always ranks last. Without a hint every candidate
/// scores -1.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleScorer {
    pub inverse: bool,
}

impl OracleScorer {
    pub fn perfect() -> Self {
        OracleScorer { inverse: false }
    }

    pub fn inverse() -> Self {
        OracleScorer { inverse: true }
    }
}

impl Scorer for OracleScorer {
    fn identity(&self) -> String {
        if self.inverse {
            "mock-inverse-oracle"
        } else {
            "mock-oracle"
        }
        .into()
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        let hit = if self.inverse { -2.0 } else { 0.0 };
        Ok((0..request.candidate_outputs.len())
            .map(|i| LogLikelihood::new(if Some(i) == request.target_hint { hit } else { -1.0 }, 1))
            .collect())
    }
}

/// Independent uniform scores from one seeded stream. Calls are served in
/// arrival order, so results are reproducible only for sequential use.
#[derive(Debug)]
pub struct RandomScorer {
    seed: u64,
    rng: Mutex<ChaCha8Rng>,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer {
            seed,
            rng: Mutex::new(rng_for(seed, &["random-scorer"])),
        }
    }
}

impl Scorer for RandomScorer {
    fn identity(&self) -> String {
        format!("mock-random:{}", self.seed)
    }

    fn score_batch(&self, request: &ScoreRequest) -> Result<Vec<LogLikelihood>, ScoreError> {
        let mut rng = self.rng.lock().expect("random scorer lock");
        Ok(request
            .candidate_outputs
            .iter()
            .map(|_| LogLikelihood::new(-rng.gen::<f64>() * 10.0, 1))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{rank, score};

    fn req(instruction: &str, cands: &[&str]) -> ScoreRequest {
        ScoreRequest::new(instruction, cands.iter().map(|c| c.to_string()).collect())
    }

    #[test]
    fn constant_token_scorer_sums_log_probabilities() {
        let out = score(&ConstantTokenScorer { p: 0.5 }, &req("x", &["a b c d"])).unwrap();
        assert!((out[0].total - (-2.772588722239781)).abs() < 1e-12);
        assert_eq!(out[0].token_count, 4);
    }

    #[test]
    fn results_align_with_candidates() {
        let out = score(&LexicalScorer, &req("x", &["a", "b", "c"])).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn lexical_overlap_prefers_matching_titles() {
        let out = score(
            &LexicalScorer,
            &req("gaming mouse", &["Gaming Mouse X", "Piano Book"]),
        )
        .unwrap();
        // 2 shared of 3 tokens against 0 shared of 2 tokens.
        assert_eq!(out[0].total, (3.0f64 / 4.0).ln());
        assert_eq!(out[1].total, (1.0f64 / 3.0).ln());
        assert!(out[0].total > out[1].total);
    }

    #[test]
    fn lexical_bounds() {
        assert_eq!(lexical_baseline_score("a b c d", "a b c").total, 0.0);
        let none = lexical_baseline_score("x y", "a b c");
        assert!((none.total - (-1.3862943611198906)).abs() < 1e-12);
        assert_eq!(none.token_count, 3);
    }

    #[test]
    fn oracles_put_the_target_first_or_last() {
        let r = req("x", &["a", "b", "c"]).with_target_hint(1);
        assert_eq!(rank(&score(&OracleScorer::perfect(), &r).unwrap())[0], 1);
        assert_eq!(rank(&score(&OracleScorer::inverse(), &r).unwrap())[2], 1);
        let blind = score(&OracleScorer::perfect(), &req("x", &["a", "b"])).unwrap();
        assert_eq!(blind[0], blind[1]);
    }

    #[test]
    fn random_scorer_is_reproducible_per_seed() {
        let r = req("x", &["a", "b", "c"]);
        let a = RandomScorer::new(3);
        let b = RandomScorer::new(3);
        for _ in 0..3 {
            assert_eq!(a.score_batch(&r).unwrap(), b.score_batch(&r).unwrap());
        }
    }

    proptest::proptest! {
        #[test]
        fn adding_an_overlapping_token_never_lowers_the_score(
            words in proptest::collection::vec("[a-z]{1,6}", 1..8),
            extra in "[a-z]{1,6}",
        ) {
            let instruction = format!("{} {extra}", words.join(" "));
            let cand = words.join(" ");
            let before = lexical_baseline_score(&instruction, &cand).total;
            let after = lexical_baseline_score(&instruction, &format!("{cand} {extra}")).total;
            proptest::prop_assert!(after >= before);
        }

        #[test]
        fn scores_are_permutation_equivariant(
            cands in proptest::collection::vec("[a-z]{1,5}( [a-z]{1,5}){0,3}", 2..10),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let instruction = cands[0].clone();
            let base = LexicalScorer.score_batch(&ScoreRequest::new(&instruction, cands.clone())).unwrap();
            let mut perm: Vec<usize> = (0..cands.len()).collect();
            perm.shuffle(&mut rng_for(seed, &["perm"]));
            let shuffled: Vec<String> = perm.iter().map(|&i| cands[i].clone()).collect();
            let out = LexicalScorer.score_batch(&ScoreRequest::new(&instruction, shuffled)).unwrap();
            for (pos, &i) in perm.iter().enumerate() {
                proptest::prop_assert_eq!(out[pos], base[i]);
            }
        }
    }
}
