use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::corpus::{FineGrainedKind, InstructionInstance};
use super::AnnotatorError;
use crate::digest::rng_for;

/// Questions a human reviewer answers for each sampled instance.
pub const AUDIT_QUESTIONS: [&str; 4] = [
    "Is the instruction generated from the user's related information?",
    "Does the teacher-LLM provide related world knowledge?",
    "Does the instruction reflect the user's preference/intention?",
    "Is the instruction related to target item?",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub seq: u64,
    pub kind: FineGrainedKind,
    pub template_id: String,
    pub instruction: String,
    pub output: String,
    pub history: Vec<String>,
    pub target_item: String,
    #[serde(default)]
    pub review: Option<String>,
    /// One verdict per question, `None` until reviewed.
    pub answers: Vec<Option<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSheet {
    pub seed: u64,
    pub questions: Vec<String>,
    pub rows: Vec<AuditRow>,
}

/// Sample up to `n_per_kind` instances of each fine-grained kind. A kind
/// with fewer instances is sampled whole, with a warning.
pub fn audit_sample(corpus: &[InstructionInstance], n_per_kind: usize, seed: u64) -> AuditSheet {
    let mut rows = Vec::new();
    for kind in [FineGrainedKind::Preference, FineGrainedKind::Intention] {
        let mut of_kind: Vec<&InstructionInstance> = corpus.iter().filter(|i| i.kind() == kind).collect();
        if of_kind.len() < n_per_kind {
            log::warn!(
                "audit: only {} {kind:?} instances, sampling all of them",
                of_kind.len()
            );
        }
        let label = format!("{kind:?}");
        of_kind.shuffle(&mut rng_for(seed, &["audit", &label]));
        of_kind.truncate(n_per_kind);
        of_kind.sort_by_key(|i| i.seq);
        rows.extend(of_kind.into_iter().map(|i| AuditRow {
            seq: i.seq,
            kind,
            template_id: i.rendered.template_id.clone(),
            instruction: i.rendered.instruction_text.clone(),
            output: i.rendered.target_output.clone(),
            history: i.provenance.history.clone(),
            target_item: i.provenance.target_title.clone(),
            review: i.provenance.review.clone(),
            answers: vec![None; AUDIT_QUESTIONS.len()],
        }));
    }
    AuditSheet {
        seed,
        questions: AUDIT_QUESTIONS.iter().map(|q| q.to_string()).collect(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLine {
    pub question: String,
    /// Percentage of "yes" among answered rows, per kind.
    pub yes_percent: BTreeMap<FineGrainedKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub lines: Vec<AuditLine>,
    pub answered: BTreeMap<FineGrainedKind, usize>,
    pub unanswered: usize,
}

/// Percentage of "yes" verdicts per question and kind. Unanswered
/// verdicts are left out of the denominators and counted separately.
pub fn aggregate(sheet: &AuditSheet) -> Result<AuditSummary, AnnotatorError> {
    let n = sheet.questions.len();
    let mut yes = vec![BTreeMap::<FineGrainedKind, (usize, usize)>::new(); n];
    let mut answered = BTreeMap::new();
    let mut unanswered = 0;
    for row in &sheet.rows {
        if row.answers.len() != n {
            return Err(AnnotatorError::Config(format!(
                "audit row {} has {} answers for {n} questions",
                row.seq,
                row.answers.len()
            )));
        }
        if row.answers.iter().any(Option::is_some) {
            *answered.entry(row.kind).or_insert(0) += 1;
        }
        for (q, a) in row.answers.iter().enumerate() {
            match a {
                Some(v) => {
                    let e = yes[q].entry(row.kind).or_insert((0, 0));
                    e.0 += usize::from(*v);
                    e.1 += 1;
                }
                None => unanswered += 1,
            }
        }
    }
    let lines = sheet
        .questions
        .iter()
        .zip(yes)
        .map(|(q, counts)| AuditLine {
            question: q.clone(),
            yes_percent: counts
                .into_iter()
                .map(|(k, (y, t))| (k, 100.0 * y as f64 / t as f64))
                .collect(),
        })
        .collect();
    Ok(AuditSummary {
        lines,
        answered,
        unanswered,
    })
}

impl fmt::Display for AuditSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |line: &AuditLine, k| {
            line.yes_percent
                .get(&k)
                .map_or("-".to_string(), |p| format!("{p:.0}%"))
        };
        writeln!(f, "{:<66}{:>12}{:>12}", "question", "preference", "intention")?;
        for line in &self.lines {
            writeln!(
                f,
                "{:<66}{:>12}{:>12}",
                line.question,
                cell(line, FineGrainedKind::Preference),
                cell(line, FineGrainedKind::Intention)
            )?;
        }
        if self.unanswered > 0 {
            writeln!(f, "({} verdicts left blank)", self.unanswered)?;
        }
        Ok(())
    }
}
