use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token ↔ id bijection with four reserved ids at the front.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens: r.tokens, index }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { tokens: v.tokens }
    }
}

impl Vocab {
    /// Build from a token stream, keeping the `max_size − 4` most frequent
    /// tokens. Frequency ties go to the lexicographically smaller token.
    pub fn build<I, S>(texts: I, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if max_size < RESERVED.len() {
            return Err(Error::Config(format!("vocab max_size {max_size} < {}", RESERVED.len())));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for text in texts {
            any = true;
            for tok in super::tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if !any || counts.is_empty() {
            return Err(Error::EmptyInput("vocabulary corpus"));
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, _)| !RESERVED.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - RESERVED.len());
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t)))
    }

    /// Reserved ids followed by `tokens` in the given order (duplicates dropped).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in RESERVED.iter().map(|s| s.to_string()).chain(tokens) {
            if !v.index.contains_key(&t) {
                v.index.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(RESERVED[UNK])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_tokens_give_size_seven() {
        let v = Vocab::build(["a b c a"], 10).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(&v.tokens()[..4], &RESERVED.map(String::from));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocab::build(["zeta alpha zeta alpha mid"], 10).unwrap();
        assert!(v.id("alpha") < v.id("zeta"));
        assert!(v.id("zeta") < v.id("mid"));
    }

    #[test]
    fn budget_includes_reserved_slots() {
        let v = Vocab::build(["a a a b b c"], 6).unwrap();
        assert_eq!(v.len(), 6);
        assert!(v.contains("a") && v.contains("b") && !v.contains("c"));
        assert_eq!(v.id("c"), UNK);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(Vocab::build(Vec::<String>::new(), 10).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(["how far is earth from sun"], 50).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
