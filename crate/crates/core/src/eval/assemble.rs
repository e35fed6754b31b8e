use crate::annotator::{user_slot, SlotSource};
use crate::catalog::ItemRecord;
use crate::scorer::{rank_with, score, LogLikelihood, ScoreMode, ScoreRequest, Scorer};
use crate::templates::{
    instantiate, render_item_list, CoarseTemplate, SlotName, SlotText, SlotValues, SourceTag, Target,
    TargetSchema,
};

use super::EvalError;

/// Whether a template can be scored against a candidate pool: it must ask
/// for an item (or a yes/no judgement about one).
pub fn is_rankable(template: &CoarseTemplate) -> bool {
    matches!(
        template.target_schema,
        TargetSchema::TargetItemTitle | TargetSchema::YesNo
    )
}

/// Builds score requests for one user under one template. User-derived slots
/// are resolved once; candidate-dependent slots are filled per call.
#[derive(Debug, Clone)]
pub struct Assembler {
    template: CoarseTemplate,
    fixed: SlotValues,
    mode: ScoreMode,
}

impl Assembler {
    pub fn for_user(
        template: &CoarseTemplate,
        source: &SlotSource<'_>,
        mode: ScoreMode,
    ) -> Result<Self, EvalError> {
        if !is_rankable(template) {
            return Err(EvalError::Config(format!(
                "template {} does not produce an item",
                template.template_id
            )));
        }
        let pointwise = template.target_schema == TargetSchema::YesNo;
        let mut fixed = SlotValues::new();
        for slot in template.placeholders()? {
            match slot {
                SlotName::CandidateItems => {}
                SlotName::TargetItem if pointwise => {}
                SlotName::TargetItem => {
                    return Err(EvalError::Config(format!(
                        "template {} shows the target item",
                        template.template_id
                    )))
                }
                other => {
                    fixed.insert(other, user_slot(source, other)?);
                }
            }
        }
        Ok(Assembler {
            template: template.clone(),
            fixed,
            mode,
        })
    }

    pub fn template(&self) -> &CoarseTemplate {
        &self.template
    }

    fn pointwise(&self) -> bool {
        self.template.target_schema == TargetSchema::YesNo
    }

    fn with_list(&self, candidates: &[&ItemRecord]) -> Result<SlotValues, EvalError> {
        let mut slots = self.fixed.clone();
        if self.template.placeholders()?.contains(&SlotName::CandidateItems) {
            slots.insert(
                SlotName::CandidateItems,
                SlotText::new(
                    render_item_list(candidates.iter().copied())?,
                    SourceTag::FromCandidateSampler,
                ),
            );
        }
        Ok(slots)
    }

    /// Requests scoring `candidates` in the given order. `target` is the
    /// index of the ground truth, if present, and only feeds oracle hints.
    pub fn requests(
        &self,
        candidates: &[&ItemRecord],
        target: Option<usize>,
    ) -> Result<Vec<ScoreRequest>, EvalError> {
        let slots = self.with_list(candidates)?;
        if !self.pointwise() {
            let title = target.map_or_else(|| candidates[0].title.clone(), |t| candidates[t].title.clone());
            let rendered = instantiate(&self.template, &slots, Target::Text(title))?;
            let mut req = ScoreRequest::new(
                rendered.instruction_text,
                candidates.iter().map(|c| c.title.clone()).collect(),
            );
            req.target_hint = target;
            return Ok(vec![req]);
        }
        candidates
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let mut slots = slots.clone();
                slots.insert(
                    SlotName::TargetItem,
                    SlotText::new(item.title.clone(), SourceTag::FromCandidateSampler),
                );
                let yes = target == Some(i);
                let rendered = instantiate(&self.template, &slots, Target::Answer(yes))?;
                Ok(
                    ScoreRequest::new(rendered.instruction_text, vec!["Yes".into(), "No".into()])
                        .with_target_hint(if yes { 0 } else { 1 }),
                )
            })
            .collect()
    }

    /// One log-likelihood per candidate: of the title for generative
    /// templates, of "Yes" for pointwise ones.
    pub fn score(
        &self,
        scorer: &dyn Scorer,
        candidates: &[&ItemRecord],
        target: Option<usize>,
    ) -> Result<Vec<LogLikelihood>, EvalError> {
        let mut out = Vec::with_capacity(candidates.len());
        for req in self.requests(candidates, target)? {
            let lls = score(scorer, &req)?;
            if self.pointwise() {
                out.push(lls[0]);
            } else {
                out.extend(lls);
            }
        }
        Ok(out)
    }

    /// Candidate indices, best first.
    pub fn order(
        &self,
        scorer: &dyn Scorer,
        candidates: &[&ItemRecord],
        target: Option<usize>,
    ) -> Result<Vec<usize>, EvalError> {
        Ok(rank_with(&self.score(scorer, candidates, target)?, self.mode))
    }
}
