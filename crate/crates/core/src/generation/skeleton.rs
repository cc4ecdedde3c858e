//! Mask skeletons: the original slot layout with new events and entities and
//! every cohesive gap widened to ⌈1.2·g⌉ masks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedExample, RelationLabel, Span};
use crate::error::{Error, Result};
use crate::generation::EntityAssignment;
use crate::knowledge::CandidatePair;
use crate::models::MASK_TOKEN;

/// ⌈1.2·g⌉ in integer arithmetic.
pub fn mask_count(gap: usize) -> usize {
    (6 * gap).div_ceil(5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub tokens: Vec<String>,
    pub event_slots: [Span; 2],
    pub entity_slots: Vec<Span>,
    pub relation: RelationLabel,
    pub origin: CandidatePair,
    /// Original gap lengths, left to right.
    pub gaps: Vec<usize>,
}

impl Skeleton {
    pub fn mask_total(&self) -> usize {
        self.tokens.iter().filter(|t| *t == MASK_TOKEN).count()
    }
}

fn lemma_tokens(lemma: &str) -> Vec<String> {
    lemma.split('_').filter(|s| !s.is_empty()).map(str::to_string).collect()
}

enum Slot<'a> {
    Event(usize, &'a str),
    Entity(&'a str),
    Fixed,
}

/// Builds the skeleton for `pair` on its origin sentence. Gaps are the
/// maximal runs of tokens outside event and entity mentions, including the
/// leading and trailing runs.
pub fn build_skeleton(
    pair: &CandidatePair,
    assignment: &BTreeMap<String, EntityAssignment>,
    original: &AnnotatedExample,
) -> Result<Skeleton> {
    let (id1, id2) = &pair.origin_events;
    let ev1 = original.event(id1).ok_or_else(|| {
        Error::Structure(format!("event {id1} missing from sentence {}", original.id))
    })?;
    let ev2 = original.event(id2).ok_or_else(|| {
        Error::Structure(format!("event {id2} missing from sentence {}", original.id))
    })?;
    if ev1.id == ev2.id {
        return Err(Error::Structure(format!(
            "pair events coincide in sentence {}",
            original.id
        )));
    }
    let mut slots: Vec<(Span, Slot)> = vec![(ev1.span, Slot::Event(0, &pair.e1)), (ev2.span, Slot::Event(1, &pair.e2))];
    for e in &original.events {
        if e.id != ev1.id && e.id != ev2.id {
            slots.push((e.span, Slot::Fixed));
        }
    }
    for m in &original.entities {
        if let Some(a) = assignment.get(&m.id) {
            if a.entity_type != m.entity_type {
                return Err(Error::Structure(format!(
                    "entity {} assigned type {} but annotated {}",
                    m.id, a.entity_type, m.entity_type
                )));
            }
        }
        slots.push((m.span, Slot::Entity(&m.id)));
    }
    slots.sort_by_key(|(s, _)| s.start);

    let mut tokens = Vec::new();
    let mut event_slots = [Span::new(0, 0); 2];
    let mut entity_slots = Vec::new();
    let mut gaps = Vec::new();
    let mut cursor = 0;
    let mut push_gap = |tokens: &mut Vec<String>, g: usize| {
        if g > 0 {
            gaps.push(g);
            tokens.extend(std::iter::repeat_n(MASK_TOKEN.to_string(), mask_count(g)));
        }
    };
    for (span, slot) in &slots {
        push_gap(&mut tokens, span.start - cursor);
        let start = tokens.len();
        match slot {
            Slot::Event(k, lemma) => {
                tokens.extend(lemma_tokens(lemma));
                event_slots[*k] = Span::new(start, tokens.len());
            }
            Slot::Entity(id) => {
                match assignment.get(*id) {
                    Some(a) => tokens.extend(a.tokens.iter().cloned()),
                    None => tokens.extend_from_slice(&original.tokens[span.start..span.end]),
                }
                entity_slots.push(Span::new(start, tokens.len()));
            }
            Slot::Fixed => tokens.extend_from_slice(&original.tokens[span.start..span.end]),
        }
        cursor = span.end;
    }
    push_gap(&mut tokens, original.tokens.len() - cursor);
    if event_slots.iter().any(|s| s.is_empty()) {
        return Err(Error::Structure(format!(
            "empty event lemma in pair {} -> {}",
            pair.e1, pair.e2
        )));
    }
    Ok(Skeleton {
        tokens,
        event_slots,
        entity_slots,
        relation: pair.provisional_label,
        origin: pair.clone(),
        gaps,
    })
}
