use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::text::{contains_sequence, tokenize};

pub const DEFAULT_LEXICON: &str = include_str!("../../data/hedging_lexicon.txt");

/// A non-empty set of lowercase, whitespace-normalized phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    phrases: BTreeSet<String>,
    tokenized: Vec<Vec<String>>,
}

impl Lexicon {
    pub fn new<I, S>(phrases: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for p in phrases {
            let tokens = tokenize(p.as_ref());
            if tokens.is_empty() {
                continue;
            }
            set.insert(tokens.join(" "));
        }
        if set.is_empty() {
            return Err(Error::Config("hedging lexicon is empty".into()));
        }
        let tokenized = set.iter().map(|p| tokenize(p)).collect();
        Ok(Self { phrases: set, tokenized })
    }

    /// Parses the lexicon file format: one phrase per line, `#` starts a comment line.
    pub fn parse(content: &str) -> Result<Self> {
        Self::new(
            content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn default_hedging() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn phrases(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn matches_tokens(&self, tokens: &[String]) -> bool {
        self.tokenized.iter().any(|p| contains_sequence(tokens, p))
    }
}
