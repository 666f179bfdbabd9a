//! Synthetic question-paraphrase corpus.
//!
//! Sentences come from a small question grammar: an *intent* with typed slots
//! and several equivalent phrasings. A positive pair renders the same frame
//! through two phrasings, optionally swaps the arguments of a symmetric
//! relation, and substitutes synonyms. Every step is recorded as an anchored
//! splice so the trace can be replayed on `x` to reproduce `y`.
//!
//! Negatives are half hard (entity swap or question-type change on the same
//! frame) and half random mismatches between unrelated frames.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, TextPair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Verb,
    Skill,
    Place,
    Country,
    Attr,
    Topic,
    Adj,
    Goods,
}

fn fillers(slot: Slot) -> &'static [&'static str] {
    match slot {
        Slot::Verb => &["learn", "master", "practice", "understand"],
        Slot::Skill => &[
            "python", "java", "rust", "guitar", "piano", "violin", "french", "spanish", "german",
            "japanese", "chess", "calculus", "statistics", "physics", "cooking", "drawing",
            "swimming", "photography", "algebra", "english",
        ],
        Slot::Place => &[
            "earth", "sun", "moon", "mars", "venus", "jupiter", "saturn", "mercury", "london",
            "paris", "tokyo", "delhi", "boston", "chicago", "sydney", "cairo",
        ],
        Slot::Country => &[
            "france", "india", "japan", "canada", "brazil", "egypt", "china", "germany", "italy",
            "mexico", "kenya", "norway", "peru", "spain", "turkey", "vietnam",
        ],
        Slot::Attr => &["population", "capital", "area", "climate", "currency", "history", "culture", "economy"],
        Slot::Topic => &[
            "bitcoin", "coffee", "tea", "chess", "football", "tennis", "python", "java", "cats",
            "dogs", "gold", "silver", "jazz", "poetry", "yoga", "sushi",
        ],
        Slot::Adj => &["popular", "expensive", "famous", "hard", "big", "addictive", "cheap", "old"],
        Slot::Goods => &[
            "cheap books", "used cars", "good coffee", "cheap flights", "used bikes", "good shoes",
            "fresh fish", "old furniture", "cheap laptops", "good wine",
        ],
    }
}

struct Intent {
    slots: &'static [Slot],
    /// Equivalent phrasings; `{k}` is slot `k`, slots appear in index order.
    templates: &'static [&'static str],
    /// Phrasings of a different question over the same slots.
    contrasts: &'static [&'static str],
    symmetric: bool,
}

const INTENTS: &[Intent] = &[
    Intent {
        slots: &[Slot::Verb, Slot::Skill],
        templates: &[
            "how can i {0} {1}",
            "what is the best way to {0} {1}",
            "what 's the best way to {0} {1}",
            "how do i {0} {1}",
        ],
        contrasts: &["why should i {0} {1}", "when should i {0} {1}"],
        symmetric: false,
    },
    Intent {
        slots: &[Slot::Place, Slot::Place],
        templates: &[
            "how far is {0} from {1}",
            "what is the distance between {0} and {1}",
            "how far away is {0} from {1}",
        ],
        contrasts: &["how big is {0} compared to {1}", "is {0} older than {1}"],
        symmetric: true,
    },
    Intent {
        slots: &[Slot::Attr, Slot::Country],
        templates: &[
            "what is the {0} of {1}",
            "what 's the {0} of {1}",
            "tell me the {0} of {1}",
        ],
        contrasts: &["why is the {0} of {1} important", "how did the {0} of {1} change"],
        symmetric: false,
    },
    Intent {
        slots: &[Slot::Topic, Slot::Adj],
        templates: &[
            "why is {0} so {1}",
            "what makes {0} so {1}",
            "how come {0} is so {1}",
        ],
        contrasts: &["is {0} really {1}", "when did {0} become {1}"],
        symmetric: false,
    },
    Intent {
        slots: &[Slot::Goods],
        templates: &[
            "where can i buy {0}",
            "where is the best place to buy {0}",
            "where should i buy {0}",
        ],
        contrasts: &["how much do {0} cost", "should i sell {0}"],
        symmetric: false,
    },
    Intent {
        slots: &[Slot::Topic, Slot::Topic],
        templates: &[
            "what is the difference between {0} and {1}",
            "how is {0} different from {1}",
            "how do {0} and {1} differ",
        ],
        contrasts: &["which is better {0} or {1}", "do people prefer {0} over {1}"],
        symmetric: true,
    },
    Intent {
        slots: &[Slot::Verb, Slot::Skill],
        templates: &[
            "how long does it take to {0} {1}",
            "how much time does it take to {0} {1}",
            "how much time do i need to {0} {1}",
        ],
        contrasts: &["is it worth it to {0} {1}", "how can i {0} {1}"],
        symmetric: false,
    },
];

const SYNONYMS: &[(&str, &str)] = &[
    ("learn", "study"),
    ("big", "large"),
    ("hard", "difficult"),
    ("expensive", "costly"),
    ("cheap", "inexpensive"),
    ("famous", "renowned"),
    ("buy", "purchase"),
    ("good", "great"),
    ("old", "ancient"),
];

fn synonym_of(token: &str) -> Option<&'static str> {
    SYNONYMS.iter().find_map(|&(a, b)| {
        if a == token {
            Some(b)
        } else if b == token {
            Some(a)
        } else {
            None
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Template,
    Reorder,
    Synonym,
}

/// Replace `remove` (which must be present at `at`) with `insert`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleStep {
    pub rule: RuleKind,
    pub at: usize,
    pub remove: Vec<String>,
    pub insert: Vec<String>,
}

/// Apply a trace to `x`, checking every anchored splice.
pub fn replay(x: &[String], trace: &[RuleStep]) -> Result<Vec<String>> {
    let mut cur = x.to_vec();
    for (k, step) in trace.iter().enumerate() {
        let end = step.at + step.remove.len();
        if end > cur.len() || cur[step.at..end] != step.remove[..] {
            return Err(Error::OutOfRange(format!("trace step {k} does not match at {}", step.at)));
        }
        cur.splice(step.at..end, step.insert.iter().cloned());
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthPositive {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub trace: Vec<RuleStep>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    EntitySwap,
    QuestionType,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthNegative {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub kind: NegativeKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_pairs: usize,
    /// Negatives emitted per positive pair.
    pub negatives_per_positive: f64,
    /// Share of negatives that are entity swaps or question-type changes.
    pub hard_negative_fraction: f64,
    /// Size of the non-parallel sentence pool.
    pub pool_size: usize,
    pub synonym_prob: f64,
    pub reorder_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 1000,
            negatives_per_positive: 1.0,
            hard_negative_fraction: 0.5,
            pool_size: 500,
            synonym_prob: 0.35,
            reorder_prob: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn with_pairs(n_pairs: usize) -> Self {
        SynthConfig {
            n_pairs,
            pool_size: n_pairs / 2,
            ..Default::default()
        }
    }

    pub fn negative_count(&self) -> usize {
        (self.n_pairs as f64 * self.negatives_per_positive).round() as usize
    }

    pub fn hard_negative_count(&self) -> usize {
        (self.negative_count() as f64 * self.hard_negative_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [self.hard_negative_fraction, self.synonym_prob, self.reorder_prob];
        if self.n_pairs == 0 {
            return Err(Error::Config("synth.n_pairs must be at least 1".into()));
        }
        if !(self.negatives_per_positive >= 0.0) || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("synth ratios must lie in [0, 1] (negatives_per_positive ≥ 0)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthCorpus {
    pub positives: Vec<SynthPositive>,
    pub negatives: Vec<SynthNegative>,
    pub pool: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthStats {
    pub positives: usize,
    pub negatives: usize,
    pub hard_negatives: usize,
    pub pool: usize,
    /// Sentence length → count over every sentence in the corpus.
    pub length_histogram: BTreeMap<usize, usize>,
}

impl SynthCorpus {
    pub fn positive_pairs(&self) -> Vec<TextPair> {
        self.positives
            .iter()
            .map(|p| TextPair::new(p.x.join(" "), p.y.join(" "), Label::Positive))
            .collect()
    }

    pub fn negative_pairs(&self) -> Vec<TextPair> {
        self.negatives
            .iter()
            .map(|p| TextPair::new(p.x.join(" "), p.y.join(" "), Label::Negative))
            .collect()
    }

    pub fn pool_sentences(&self) -> Vec<String> {
        self.pool.iter().map(|s| s.join(" ")).collect()
    }

    pub fn stats(&self) -> SynthStats {
        let mut length_histogram = BTreeMap::new();
        let sentences = self
            .positives
            .iter()
            .flat_map(|p| [&p.x, &p.y])
            .chain(self.negatives.iter().flat_map(|p| [&p.x, &p.y]))
            .chain(self.pool.iter());
        for s in sentences {
            *length_histogram.entry(s.len()).or_insert(0) += 1;
        }
        SynthStats {
            positives: self.positives.len(),
            negatives: self.negatives.len(),
            hard_negatives: self
                .negatives
                .iter()
                .filter(|n| n.kind != NegativeKind::Random)
                .count(),
            pool: self.pool.len(),
            length_histogram,
        }
    }
}

#[derive(Clone, Debug)]
struct Frame {
    intent: usize,
    values: Vec<&'static str>,
}

fn sample_frame(rng: &mut ChaCha8Rng) -> Frame {
    let intent = rng.gen_range(0..INTENTS.len());
    sample_values(intent, rng)
}

fn sample_values(intent: usize, rng: &mut ChaCha8Rng) -> Frame {
    let mut values: Vec<&'static str> = Vec::new();
    for &slot in INTENTS[intent].slots {
        let choice = loop {
            let v = *fillers(slot).choose(rng).unwrap();
            if !values.contains(&v) {
                break v;
            }
        };
        values.push(choice);
    }
    Frame { intent, values }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Literal segments around the slots: `segments.len() == slots + 1`.
fn segments(template: &str) -> Vec<Vec<String>> {
    let mut segs = vec![Vec::new()];
    for tok in template.split_whitespace() {
        if tok.starts_with('{') && tok.ends_with('}') {
            segs.push(Vec::new());
        } else {
            segs.last_mut().unwrap().push(tok.to_string());
        }
    }
    segs
}

fn render(template: &str, values: &[&str]) -> Vec<String> {
    let segs = segments(template);
    let mut out = segs[0].clone();
    for (k, v) in values.iter().enumerate() {
        out.extend(words(v));
        out.extend(segs[k + 1].iter().cloned());
    }
    out
}

/// Splices turning `render(from, values)` into `render(to, values)`.
fn template_steps(from: &str, to: &str, values: &[&str]) -> Vec<RuleStep> {
    let (sf, st) = (segments(from), segments(to));
    let mut steps = Vec::new();
    let mut pos = 0;
    for k in 0..sf.len() {
        if sf[k] != st[k] {
            steps.push(RuleStep {
                rule: RuleKind::Template,
                at: pos,
                remove: sf[k].clone(),
                insert: st[k].clone(),
            });
        }
        pos += st[k].len();
        if k < values.len() {
            pos += words(values[k]).len();
        }
    }
    steps
}

fn slot_offsets(template: &str, values: &[&str]) -> Vec<usize> {
    let segs = segments(template);
    let mut pos = segs[0].len();
    let mut out = Vec::new();
    for (k, v) in values.iter().enumerate() {
        out.push(pos);
        pos += words(v).len() + segs[k + 1].len();
    }
    out
}

fn positive(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> SynthPositive {
    let frame = sample_frame(rng);
    let intent = &INTENTS[frame.intent];
    let tx = *intent.templates.choose(rng).unwrap();
    let ty = loop {
        let t = *intent.templates.choose(rng).unwrap();
        if t != tx {
            break t;
        }
    };
    let x = render(tx, &frame.values);
    let mut trace = template_steps(tx, ty, &frame.values);
    let mut cur = replay(&x, &trace).expect("template splices are consistent");

    if intent.symmetric && rng.gen_bool(cfg.reorder_prob) {
        let offs = slot_offsets(ty, &frame.values);
        let (a, b) = (words(frame.values[0]), words(frame.values[1]));
        // later slot first so the earlier offset stays valid
        let steps = [
            RuleStep { rule: RuleKind::Reorder, at: offs[1], remove: b.clone(), insert: a.clone() },
            RuleStep { rule: RuleKind::Reorder, at: offs[0], remove: a, insert: b },
        ];
        for s in steps {
            cur = replay(&cur, std::slice::from_ref(&s)).expect("reorder splice is consistent");
            trace.push(s);
        }
    }

    for i in (0..cur.len()).rev() {
        if let Some(syn) = synonym_of(&cur[i]) {
            if rng.gen_bool(cfg.synonym_prob) {
                let s = RuleStep {
                    rule: RuleKind::Synonym,
                    at: i,
                    remove: vec![cur[i].clone()],
                    insert: vec![syn.to_string()],
                };
                cur = replay(&cur, std::slice::from_ref(&s)).expect("synonym splice is consistent");
                trace.push(s);
            }
        }
    }
    SynthPositive { x, y: cur, trace }
}

fn hard_negative(rng: &mut ChaCha8Rng) -> SynthNegative {
    let frame = sample_frame(rng);
    let intent = &INTENTS[frame.intent];
    let x = render(intent.templates.choose(rng).unwrap(), &frame.values);
    if rng.gen_bool(0.5) {
        let k = rng.gen_range(0..frame.values.len());
        let mut values = frame.values.clone();
        values[k] = loop {
            let v = *fillers(intent.slots[k]).choose(rng).unwrap();
            if !frame.values.contains(&v) {
                break v;
            }
        };
        let y = render(intent.templates.choose(rng).unwrap(), &values);
        SynthNegative { x, y, kind: NegativeKind::EntitySwap }
    } else {
        let y = render(intent.contrasts.choose(rng).unwrap(), &frame.values);
        SynthNegative { x, y, kind: NegativeKind::QuestionType }
    }
}

fn random_negative(rng: &mut ChaCha8Rng) -> SynthNegative {
    let a = sample_frame(rng);
    let b = loop {
        let f = sample_frame(rng);
        if f.intent != a.intent {
            break f;
        }
    };
    let x = render(INTENTS[a.intent].templates.choose(rng).unwrap(), &a.values);
    let y = render(INTENTS[b.intent].templates.choose(rng).unwrap(), &b.values);
    SynthNegative { x, y, kind: NegativeKind::Random }
}

/// Deterministic in `seed`.
pub fn synth_corpus(seed: u64, cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives: Vec<SynthPositive> = (0..cfg.n_pairs).map(|_| positive(&mut rng, cfg)).collect();

    let n_neg = cfg.negative_count();
    let n_hard = cfg.hard_negative_count();
    let mut negatives: Vec<SynthNegative> = (0..n_neg)
        .map(|i| if i < n_hard { hard_negative(&mut rng) } else { random_negative(&mut rng) })
        .collect();
    negatives.shuffle(&mut rng);

    let mut seen: HashSet<Vec<String>> = positives
        .iter()
        .map(|p| p.x.clone())
        .chain(negatives.iter().map(|n| n.x.clone()))
        .collect();
    let mut pool = Vec::with_capacity(cfg.pool_size);
    let mut attempts = 0;
    while pool.len() < cfg.pool_size && attempts < cfg.pool_size * 50 {
        attempts += 1;
        let f = sample_frame(&mut rng);
        let s = render(INTENTS[f.intent].templates.choose(&mut rng).unwrap(), &f.values);
        if seen.insert(s.clone()) {
            pool.push(s);
        }
    }
    if pool.len() < cfg.pool_size {
        log::warn!("synthetic pool saturated at {} of {} sentences", pool.len(), cfg.pool_size);
    }
    Ok(SynthCorpus { positives, negatives, pool })
}

/// Every distinct token the grammar can emit, in a fixed order.
pub fn grammar_tokens() -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |t: &str| {
        if !out.iter().any(|o| o == t) {
            out.push(t.to_string());
        }
    };
    for intent in INTENTS {
        for t in intent.templates.iter().chain(intent.contrasts) {
            t.split_whitespace().filter(|w| !w.starts_with('{')).for_each(&mut push);
        }
        for &slot in intent.slots {
            fillers(slot).iter().flat_map(|f| f.split_whitespace()).for_each(&mut push);
        }
    }
    SYNONYMS.iter().flat_map(|&(a, b)| [a, b]).for_each(&mut push);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let cfg = SynthConfig::with_pairs(100);
        assert_eq!(synth_corpus(5, &cfg).unwrap(), synth_corpus(5, &cfg).unwrap());
        assert_ne!(synth_corpus(5, &cfg).unwrap(), synth_corpus(6, &cfg).unwrap());
    }

    #[test]
    fn every_trace_replays() {
        let c = synth_corpus(11, &SynthConfig::with_pairs(500)).unwrap();
        for p in &c.positives {
            assert!(!p.trace.is_empty());
            assert_eq!(replay(&p.x, &p.trace).unwrap(), p.y);
        }
        let kinds: HashSet<RuleKind> = c.positives.iter().flat_map(|p| p.trace.iter().map(|s| s.rule)).collect();
        assert_eq!(kinds.len(), 3);
    }

    #[test]
    fn replay_rejects_mismatched_anchor() {
        let x = words("how can i learn rust");
        let bad = RuleStep { rule: RuleKind::Synonym, at: 0, remove: words("why"), insert: words("how") };
        assert!(replay(&x, &[bad]).is_err());
    }

    #[test]
    fn counts_and_pool_disjointness() {
        let cfg = SynthConfig::with_pairs(300);
        let c = synth_corpus(3, &cfg).unwrap();
        let st = c.stats();
        assert_eq!(st.positives, 300);
        assert_eq!(st.negatives, 300);
        assert_eq!(st.hard_negatives, 150);
        assert_eq!(st.pool, 150);
        let xs: HashSet<&Vec<String>> = c.positives.iter().map(|p| &p.x).collect();
        assert!(c.pool.iter().all(|s| !xs.contains(s)));
        assert!(st.length_histogram.keys().all(|&l| (1..=20).contains(&l)));
    }

    #[test]
    fn grammar_includes_the_distance_question() {
        let toks = grammar_tokens();
        for w in words("what is the distance between sun and earth") {
            assert!(toks.contains(&w), "{w}");
        }
    }
}
