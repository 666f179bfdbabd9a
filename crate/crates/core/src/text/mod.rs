//! Tokenization, vocabulary, pair corpora and the synthetic paraphrase grammar.

mod io;
pub mod synth;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{load_pairs, load_sentences, write_pairs_jsonl, write_pairs_tsv, write_sentences, LoadedPairs, PairFormat};
pub use vocab::{Vocab, EOS, PAD, RESERVED, SOS, UNK};

use crate::error::{Error, Result};

/// Hard cap on sentence length, in tokens.
pub const MAX_SENTENCE_LEN: usize = 20;

const PUNCT: &[char] = &['?', '!', '.', ',', ';', ':', '"', '(', ')', '[', ']'];

/// Lowercase and split on whitespace, peeling punctuation and clitics
/// (`what's` → `what 's`, `don't` → `do n't`) into their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut word = chunk;
        let mut leading = Vec::new();
        while let Some(c) = word.chars().next().filter(|c| PUNCT.contains(c)) {
            leading.push(c.to_string());
            word = &word[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = word.chars().last().filter(|c| PUNCT.contains(c)) {
            trailing.push(c.to_string());
            word = &word[..word.len() - c.len_utf8()];
        }
        out.extend(leading);
        if !word.is_empty() {
            split_clitic(word, &mut out);
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

fn split_clitic(word: &str, out: &mut Vec<String>) {
    if word.len() > 3 && word.ends_with("n't") {
        out.push(word[..word.len() - 3].to_string());
        out.push("n't".to_string());
    } else if let Some(pos) = word.find('\'').filter(|&p| p > 0 && p + 1 < word.len()) {
        out.push(word[..pos].to_string());
        out.push(word[pos..].to_string());
    } else {
        out.push(word.to_string());
    }
}

/// Surface tokens plus their vocabulary ids (out-of-vocabulary → `UNK`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    tokens: Vec<String>,
    ids: Vec<usize>,
}

impl Sentence {
    /// Tokenize, map through `vocab` and truncate to [`MAX_SENTENCE_LEN`].
    pub fn parse(text: &str, vocab: &Vocab) -> Result<Self> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyInput("sentence text"));
        }
        Ok(Self::from_tokens(tokens, vocab))
    }

    pub fn from_tokens(mut tokens: Vec<String>, vocab: &Vocab) -> Self {
        tokens.truncate(MAX_SENTENCE_LEN);
        let ids = tokens.iter().map(|t| vocab.id(t)).collect();
        Sentence { tokens, ids }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            1 => Some(Label::Positive),
            0 => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Label::Positive => 1,
            Label::Negative => 0,
        }
    }
}

/// A sentence pair as raw text, the unit of the on-disk formats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPair {
    pub s1: String,
    pub s2: String,
    pub label: Label,
}

impl TextPair {
    pub fn new(s1: impl Into<String>, s2: impl Into<String>, label: Label) -> Self {
        TextPair {
            s1: s1.into(),
            s2: s2.into(),
            label,
        }
    }

    pub fn to_pair(&self, vocab: &Vocab) -> Result<ParaphrasePair> {
        Ok(ParaphrasePair {
            x: Sentence::parse(&self.s1, vocab)?,
            y: Sentence::parse(&self.s2, vocab)?,
            label: self.label,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParaphrasePair {
    pub x: Sentence,
    pub y: Sentence,
    pub label: Label,
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ta) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, tb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ta != tb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn token_edit_distance(a: &Sentence, b: &Sentence) -> usize {
    edit_distance(a.tokens(), b.tokens())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenizes_the_earth_sun_question() {
        let vocab = Vocab::build(["how far is Earth from Sun"], 100).unwrap();
        let s = Sentence::parse("how far is Earth from Sun", &vocab).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.ids().iter().all(|&id| id != UNK));
        assert_eq!(s.tokens()[3], "earth");
    }

    #[test]
    fn splits_punctuation_and_clitics() {
        assert_eq!(tokenize("What's the time?"), toks("what 's the time ?"));
        assert_eq!(tokenize("I don't know, (really)."), toks("i do n't know , ( really ) ."));
    }

    #[test]
    fn truncates_to_twenty() {
        let text: Vec<String> = (0..25).map(|i| format!("w{i}")).collect();
        let vocab = Vocab::build([text.join(" ")], 100).unwrap();
        let s = Sentence::parse(&text.join(" "), &vocab).unwrap();
        assert_eq!(s.len(), MAX_SENTENCE_LEN);
        assert_eq!(s.ids().len(), MAX_SENTENCE_LEN);
    }

    #[test]
    fn unknown_token_maps_to_unk_and_keeps_surface() {
        let vocab = Vocab::build(["the duck swims"], 100).unwrap();
        let s = Sentence::parse("the ducking swims", &vocab).unwrap();
        assert_eq!(s.ids()[1], UNK);
        assert_eq!(s.tokens()[1], "ducking");
    }

    #[test]
    fn empty_text_is_rejected() {
        let vocab = Vocab::from_tokens(Vec::new());
        assert!(Sentence::parse("   \t ", &vocab).is_err());
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&toks("what is up"), &toks("what is up")), 0);
        assert_eq!(edit_distance(&toks("what 's"), &toks("what is")), 1);
        assert_eq!(edit_distance(&[] as &[String], &toks("a b c d")), 4);
        assert_eq!(edit_distance(&toks("a b c"), &toks("b c d")), 2);
    }

    #[test]
    fn in_vocab_ids_round_trip_to_surface() {
        let vocab = Vocab::build(["what is the distance between sun and earth"], 100).unwrap();
        let s = Sentence::parse("what is the distance between sun and earth", &vocab).unwrap();
        for (t, &id) in s.tokens().iter().zip(s.ids()) {
            assert_eq!(vocab.token(id), t);
        }
    }

    fn sentence() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..5, 0..8)
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(a in sentence(), b in sentence(), c in sentence()) {
            let ab = edit_distance(&a, &b);
            prop_assert_eq!(ab, edit_distance(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= ab + edit_distance(&b, &c));
        }
    }
}
