//! Closed-vocabulary prompt encoder: one learned row per noun plus a
//! reserved row for the empty (unconditional) prompt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prompt that selects the unconditional row.
pub const NULL_PROMPT: &str = "<null>";

const PREFIX: &str = "grasp the ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    nouns: Vec<String>,
}

/// Row of the text table selected by a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextToken {
    Noun(usize),
    Null,
}

impl Vocabulary {
    /// Nouns are lower-cased, de-duplicated and sorted.
    pub fn new<I, S>(nouns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut nouns: Vec<String> = nouns.into_iter().map(|n| n.as_ref().trim().to_lowercase()).collect();
        nouns.sort();
        nouns.dedup();
        Self { nouns }
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    /// Table rows including the null row.
    pub fn rows(&self) -> usize {
        self.nouns.len() + 1
    }

    pub fn null_row(&self) -> usize {
        self.nouns.len()
    }

    pub fn row(&self, token: TextToken) -> usize {
        match token {
            TextToken::Noun(i) => i,
            TextToken::Null => self.null_row(),
        }
    }

    pub fn noun_index(&self, noun: &str) -> Result<usize> {
        let key = noun.trim().to_lowercase();
        self.nouns.binary_search(&key).map_err(|_| Error::UnknownVocabulary {
            noun: key,
            vocabulary: self.nouns.clone(),
        })
    }

    /// Parses `"Grasp the <noun>"` (any case) or the null prompt.
    pub fn parse(&self, prompt: &str) -> Result<TextToken> {
        let p = prompt.trim();
        if p == NULL_PROMPT || p == "\u{2205}" {
            return Ok(TextToken::Null);
        }
        let lower = p.to_lowercase();
        let noun = lower.strip_prefix(PREFIX).ok_or_else(|| {
            Error::invalid(format!("prompt {prompt:?} is not of the form \"Grasp the <noun>\""))
        })?;
        self.noun_index(noun).map(TextToken::Noun)
    }
}

pub fn prompt_for(noun: &str) -> String {
    format!("Grasp the {noun}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsing() {
        let v = Vocabulary::new(["mug", "Ball", "box"]);
        assert_eq!(v.nouns(), &["ball", "box", "mug"]);
        assert_eq!(v.parse("Grasp the mug").unwrap(), TextToken::Noun(2));
        assert_eq!(v.parse("grasp the MUG").unwrap(), TextToken::Noun(2));
        assert_eq!(v.parse(NULL_PROMPT).unwrap(), TextToken::Null);
        assert_eq!(v.row(TextToken::Null), 3);
        match v.parse("Grasp the spoon") {
            Err(Error::UnknownVocabulary { noun, vocabulary }) => {
                assert_eq!(noun, "spoon");
                assert_eq!(vocabulary.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(v.parse("Lift the mug").is_err());
    }
}
