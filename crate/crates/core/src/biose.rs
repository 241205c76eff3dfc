//! BIOSE sequence labels and entity spans.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BioseError {
    #[error("invalid BIOSE label {0:?}")]
    BadLabel(String),
    #[error("ill-formed BIOSE sequence at position {position}: {message}")]
    IllFormed { position: usize, message: String },
    #[error("span {start}..={end} out of range for {len} tokens")]
    OutOfRange { start: usize, end: usize, len: usize },
    #[error("spans overlap at token {0}")]
    Overlap(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityType {
    #[serde(rename = "PER")]
    Per,
    #[serde(rename = "ORG")]
    Org,
    #[serde(rename = "LOC")]
    Loc,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Per, EntityType::Org, EntityType::Loc];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = BioseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PER" | "PERSON" => Ok(EntityType::Per),
            "ORG" | "ORGANIZATION" | "ORGANISATION" => Ok(EntityType::Org),
            "LOC" | "LOCATION" => Ok(EntityType::Loc),
            _ => Err(BioseError::BadLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BioseTag {
    O,
    B(EntityType),
    I(EntityType),
    E(EntityType),
    S(EntityType),
}

impl fmt::Display for BioseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioseTag::O => f.write_str("O"),
            BioseTag::B(t) => write!(f, "B-{t}"),
            BioseTag::I(t) => write!(f, "I-{t}"),
            BioseTag::E(t) => write!(f, "E-{t}"),
            BioseTag::S(t) => write!(f, "S-{t}"),
        }
    }
}

impl FromStr for BioseTag {
    type Err = BioseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioseTag::O);
        }
        let bad = || BioseError::BadLabel(s.to_string());
        let (prefix, ty) = s.split_once('-').ok_or_else(bad)?;
        let ty = match ty {
            "PER" => EntityType::Per,
            "ORG" => EntityType::Org,
            "LOC" => EntityType::Loc,
            _ => return Err(bad()),
        };
        match prefix {
            "B" => Ok(BioseTag::B(ty)),
            "I" => Ok(BioseTag::I(ty)),
            "E" => Ok(BioseTag::E(ty)),
            "S" => Ok(BioseTag::S(ty)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for BioseTag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BioseTag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive token span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: EntityType, start: usize, end: usize) -> Self {
        EntitySpan { entity_type, start, end }
    }
}

pub fn parse_tags<S: AsRef<str>>(labels: &[S]) -> Result<Vec<BioseTag>, BioseError> {
    labels.iter().map(|l| l.as_ref().parse()).collect()
}

/// Checks well-formedness: `B-T` is followed by `I-T`* then `E-T`; `I`/`E`
/// never appear outside such a run.
pub fn validate(tags: &[BioseTag]) -> Result<(), BioseError> {
    let mut open: Option<EntityType> = None;
    for (i, tag) in tags.iter().enumerate() {
        let err = |message: &str| BioseError::IllFormed {
            position: i,
            message: message.to_string(),
        };
        match (*tag, open) {
            (BioseTag::O, None) | (BioseTag::S(_), None) => {}
            (BioseTag::B(t), None) => open = Some(t),
            (BioseTag::I(t), Some(o)) if t == o => {}
            (BioseTag::E(t), Some(o)) if t == o => open = None,
            (BioseTag::I(_), Some(_)) | (BioseTag::E(_), Some(_)) => {
                return Err(err("entity type changes inside a span"))
            }
            (BioseTag::I(_), None) | (BioseTag::E(_), None) => {
                return Err(err("continuation label without a preceding B"))
            }
            (_, Some(_)) => return Err(err("span opened by B is not closed by E")),
        }
    }
    if open.is_some() {
        return Err(BioseError::IllFormed {
            position: tags.len(),
            message: "span opened by B is not closed by E".into(),
        });
    }
    Ok(())
}

/// Decodes a well-formed sequence into spans, in order.
pub fn tags_to_spans(tags: &[BioseTag]) -> Result<Vec<EntitySpan>, BioseError> {
    validate(tags)?;
    let mut spans = Vec::new();
    let mut start = 0;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioseTag::S(t) => spans.push(EntitySpan::new(*t, i, i)),
            BioseTag::B(_) => start = i,
            BioseTag::E(t) => spans.push(EntitySpan::new(*t, start, i)),
            _ => {}
        }
    }
    Ok(spans)
}

/// Encodes non-overlapping spans over `len` tokens.
pub fn spans_to_tags(spans: &[EntitySpan], len: usize) -> Result<Vec<BioseTag>, BioseError> {
    let mut tags = vec![BioseTag::O; len];
    let mut taken = vec![false; len];
    for span in spans {
        if span.start > span.end || span.end >= len {
            return Err(BioseError::OutOfRange {
                start: span.start,
                end: span.end,
                len,
            });
        }
        for i in span.start..=span.end {
            if taken[i] {
                return Err(BioseError::Overlap(i));
            }
            taken[i] = true;
        }
        let t = span.entity_type;
        if span.start == span.end {
            tags[span.start] = BioseTag::S(t);
        } else {
            tags[span.start] = BioseTag::B(t);
            for tag in &mut tags[span.start + 1..span.end] {
                *tag = BioseTag::I(t);
            }
            tags[span.end] = BioseTag::E(t);
        }
    }
    Ok(tags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(s: &str) -> Vec<BioseTag> {
        parse_tags(&s.split_whitespace().collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn label_round_trip() {
        for l in ["O", "B-PER", "I-ORG", "E-LOC", "S-PER"] {
            assert_eq!(l.parse::<BioseTag>().unwrap().to_string(), l);
        }
        assert!("B-MISC".parse::<BioseTag>().is_err());
        assert!("X-PER".parse::<BioseTag>().is_err());
        assert!("B".parse::<BioseTag>().is_err());
    }

    #[test]
    fn decodes_spans() {
        let spans = tags_to_spans(&tags("B-PER E-PER O S-LOC")).unwrap();
        assert_eq!(
            spans,
            vec![
                EntitySpan::new(EntityType::Per, 0, 1),
                EntitySpan::new(EntityType::Loc, 3, 3)
            ]
        );
        let spans = tags_to_spans(&tags("B-ORG I-ORG I-ORG E-ORG")).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(EntityType::Org, 0, 3)]);
    }

    #[test]
    fn rejects_ill_formed() {
        for bad in ["I-PER", "E-PER", "B-PER", "B-PER O", "B-PER E-LOC", "B-PER B-PER E-PER", "B-PER S-PER"] {
            assert!(validate(&tags(bad)).is_err(), "{bad}");
        }
        assert!(validate(&[]).is_ok());
    }

    #[test]
    fn encode_checks_overlap_and_range() {
        let a = EntitySpan::new(EntityType::Per, 0, 2);
        let b = EntitySpan::new(EntityType::Loc, 2, 3);
        assert_eq!(spans_to_tags(&[a, b], 5), Err(BioseError::Overlap(2)));
        assert!(matches!(spans_to_tags(&[b], 3), Err(BioseError::OutOfRange { .. })));
    }
}
