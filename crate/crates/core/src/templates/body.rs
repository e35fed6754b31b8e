//! Template body syntax.
//!
//! * `{SlotName}` is a placeholder.
//! * `{A|B|C}` is an alternation: which slot applies depends on the
//!   intention axis of the aspect triple the template is used for.
//! * `[[ ... ]]` is an optional group, kept only when an explicit preference
//!   is part of the scenario and is not already the query.

use std::collections::BTreeSet;

use super::{AspectTags, Preference, SlotName, TemplateError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotChoice(pub Vec<SlotName>);

impl SlotChoice {
    /// Pick the slot for `aspects`.
    pub fn resolve(&self, aspects: AspectTags) -> Option<SlotName> {
        match self.0.as_slice() {
            [only] => Some(*only),
            many => {
                let wanted = SlotName::query_slot(aspects.intention);
                many.contains(&wanted).then_some(wanted)
            }
        }
    }

    pub fn parse(spec: &str) -> Result<Self, TemplateError> {
        let slots = spec
            .split('|')
            .map(|s| s.trim().parse::<SlotName>())
            .collect::<Result<Vec<_>, _>>()?;
        if slots.is_empty() {
            return Err(TemplateError::MalformedBody("empty placeholder".into()));
        }
        Ok(SlotChoice(slots))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Slot(SlotChoice),
    Optional(Vec<Segment>),
}

pub(crate) fn parse_body(body: &str) -> Result<Vec<Segment>, TemplateError> {
    let mut top: Vec<Segment> = Vec::new();
    let mut group: Option<Vec<Segment>> = None;
    let mut text = String::new();
    let mut rest = body;

    fn flush(text: &mut String, into: &mut Vec<Segment>) {
        if !text.is_empty() {
            into.push(Segment::Text(std::mem::take(text)));
        }
    }

    while let Some(c) = rest.chars().next() {
        if rest.starts_with("[[") {
            if group.is_some() {
                return Err(TemplateError::MalformedBody("nested optional group".into()));
            }
            flush(&mut text, &mut top);
            group = Some(Vec::new());
            rest = &rest[2..];
        } else if rest.starts_with("]]") {
            let Some(mut g) = group.take() else {
                return Err(TemplateError::MalformedBody("unbalanced ]]".into()));
            };
            flush(&mut text, &mut g);
            top.push(Segment::Optional(g));
            rest = &rest[2..];
        } else if c == '{' {
            let end = rest
                .find('}')
                .ok_or_else(|| TemplateError::MalformedBody("unterminated placeholder".into()))?;
            let target = group.as_mut().unwrap_or(&mut top);
            flush(&mut text, target);
            target.push(Segment::Slot(SlotChoice::parse(&rest[1..end])?));
            rest = &rest[end + 1..];
        } else if c == '}' {
            return Err(TemplateError::MalformedBody("stray }".into()));
        } else {
            text.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if group.is_some() {
        return Err(TemplateError::MalformedBody("unterminated optional group".into()));
    }
    flush(&mut text, &mut top);
    Ok(top)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Piece {
    Text(String),
    Slot(SlotName),
}

fn resolve_flat(segments: &[Segment], aspects: AspectTags) -> Option<Vec<Piece>> {
    let mut out = Vec::new();
    for seg in segments {
        match seg {
            Segment::Text(t) => out.push(Piece::Text(t.clone())),
            Segment::Slot(choice) => out.push(Piece::Slot(choice.resolve(aspects)?)),
            Segment::Optional(_) => return None,
        }
    }
    Some(out)
}

/// Resolve alternations and optional groups for `aspects`. `None` when an
/// alternation has no option for the intention axis.
pub(crate) fn resolve(segments: &[Segment], aspects: AspectTags) -> Option<Vec<Piece>> {
    let mut required = BTreeSet::new();
    for seg in segments {
        if let Segment::Slot(choice) = seg {
            required.insert(choice.resolve(aspects)?);
        }
    }
    let keep_optional =
        aspects.preference == Preference::Explicit && !required.contains(&SlotName::ExplicitPreference);
    let mut out = Vec::new();
    for seg in segments {
        match seg {
            Segment::Optional(inner) => {
                if keep_optional {
                    out.extend(resolve_flat(inner, aspects)?);
                }
            }
            other => out.extend(resolve_flat(std::slice::from_ref(other), aspects)?),
        }
    }
    Some(out)
}

pub(crate) fn pieces_to_body(pieces: &[Piece]) -> String {
    let mut s = String::new();
    for p in pieces {
        match p {
            Piece::Text(t) => s.push_str(t),
            Piece::Slot(slot) => {
                s.push('{');
                s.push_str(slot.as_str());
                s.push('}');
            }
        }
    }
    s
}

pub(crate) fn piece_slots(pieces: &[Piece]) -> BTreeSet<SlotName> {
    pieces
        .iter()
        .filter_map(|p| match p {
            Piece::Slot(s) => Some(*s),
            Piece::Text(_) => None,
        })
        .collect()
}

/// Every slot name mentioned anywhere in the body, in any branch.
pub(crate) fn mentioned_slots(segments: &[Segment]) -> BTreeSet<SlotName> {
    let mut out = BTreeSet::new();
    for seg in segments {
        match seg {
            Segment::Text(_) => {}
            Segment::Slot(choice) => out.extend(choice.0.iter().copied()),
            Segment::Optional(inner) => out.extend(mentioned_slots(inner)),
        }
    }
    out
}

/// Whitespace-separated word count with each placeholder counted as one word
/// and optional-group markers ignored.
pub(crate) fn word_count(body: &str) -> usize {
    body.replace("[[", "")
        .replace("]]", "")
        .split_whitespace()
        .count()
}
