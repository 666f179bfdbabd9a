//! Decomposable-attention matching model `M(x, y) ∈ (0, 1)`.
//!
//! Token embeddings plus sinusoidal positions are soft-aligned across the two
//! sentences (`F`), each token is compared with its aligned summary (`G`),
//! the comparisons are summed per sentence and aggregated (`H`) into a
//! sigmoid score. The same head serves as a classifier (cross-entropy) and as
//! a ranking score (margin hinge).

mod curriculum;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{accumulate_parallel, Axis, Checkpoint, Gradients, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::text::{Label, Sentence, Vocab, RESERVED, EOS};

pub use curriculum::{curriculum_probabilities, curriculum_probability, curriculum_weights, CurriculumWeight, LinearSchedule};

/// Floor applied inside the cross-entropy logs.
pub const SCORE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorConfig {
    pub embed_dim: usize,
    pub attend_hidden: usize,
    pub compare_hidden: usize,
    pub aggregate_hidden: usize,
    pub positional: bool,
    pub init_scale: f64,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        EvaluatorConfig {
            embed_dim: 32,
            attend_hidden: 32,
            compare_hidden: 32,
            aggregate_hidden: 32,
            positional: true,
            init_scale: 0.1,
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.embed_dim, self.attend_hidden, self.compare_hidden, self.aggregate_hidden];
        if dims.contains(&0) {
            return Err(Error::Config("evaluator dimensions must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("evaluator.init_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Sinusoidal encoding: `sin(pos/10000^(2k/d))` at even dims, `cos` at odd dims.
pub fn positional_encoding(position: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let k = (i / 2) as f64;
            let angle = position as f64 / 10000f64.powf(2.0 * k / dim as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
struct Ids {
    emb: ParamId,
    f_w: ParamId,
    f_b: ParamId,
    g_w: ParamId,
    g_b: ParamId,
    h_w: ParamId,
    h_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

impl Ids {
    fn resolve(store: &ParamStore) -> Result<Self> {
        Ok(Ids {
            emb: store.id("emb")?,
            f_w: store.id("f.w")?,
            f_b: store.id("f.b")?,
            g_w: store.id("g.w")?,
            g_b: store.id("g.b")?,
            h_w: store.id("h.w")?,
            h_b: store.id("h.b")?,
            out_w: store.id("out.w")?,
            out_b: store.id("out.b")?,
        })
    }
}

/// One term of the ranking objective.
#[derive(Clone, Debug, PartialEq)]
pub struct HingeItem {
    pub x: Sentence,
    pub y_ref: Sentence,
    pub y_gen: Sentence,
    /// Agreement of `y_gen` with `y_ref` in `[0, 1]`.
    pub zeta: f64,
    /// Curriculum weight; zero skips the item.
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluator {
    config: EvaluatorConfig,
    vocab: Vocab,
    params: ParamStore,
    ids: Ids,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: EvaluatorConfig,
    vocab: Vocab,
}

const META_KIND: &str = "evaluator";

impl Evaluator {
    pub fn new(config: EvaluatorConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, f, g, h, s) = (
            config.embed_dim,
            config.attend_hidden,
            config.compare_hidden,
            config.aggregate_hidden,
            config.init_scale,
        );
        let mut p = ParamStore::new();
        p.add_uniform("emb", &[vocab.len(), e], s, &mut rng);
        p.add_uniform("f.w", &[e, f], s, &mut rng);
        p.add("f.b", Tensor::zeros(&[1, f]));
        p.add_uniform("g.w", &[2 * e, g], s, &mut rng);
        p.add("g.b", Tensor::zeros(&[1, g]));
        p.add_uniform("h.w", &[2 * g, h], s, &mut rng);
        p.add("h.b", Tensor::zeros(&[1, h]));
        p.add_uniform("out.w", &[h, 1], s, &mut rng);
        p.add("out.b", Tensor::zeros(&[1, 1]));
        let ids = Ids::resolve(&p)?;
        Ok(Evaluator { config, vocab, params: p, ids })
    }

    pub fn config(&self) -> &EvaluatorConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Map surface tokens through the evaluator vocabulary. An empty token list
    /// becomes the single end-of-sentence token.
    pub fn sentence(&self, tokens: &[String]) -> Sentence {
        if tokens.is_empty() {
            Sentence::from_tokens(vec![RESERVED[EOS].to_string()], &self.vocab)
        } else {
            Sentence::from_tokens(tokens.to_vec(), &self.vocab)
        }
    }

    pub fn parse(&self, text: &str) -> Result<Sentence> {
        Sentence::parse(text, &self.vocab)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Meta {
            kind: META_KIND.into(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        Ok(Checkpoint::new(serde_json::to_string(&meta)?, self.params.clone()))
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let meta: Meta = serde_json::from_str(&ckpt.meta)?;
        if meta.kind != META_KIND {
            return Err(Error::Checkpoint(format!("expected an {META_KIND} checkpoint, found `{}`", meta.kind)));
        }
        let fresh = Evaluator::new(meta.config.clone(), meta.vocab.clone(), 0)?;
        if ckpt.params.len() != fresh.params.len() {
            return Err(Error::Checkpoint("parameter count does not match the configuration".into()));
        }
        for (_, name, t) in fresh.params.iter() {
            if ckpt.params.get(ckpt.params.id(name)?).shape() != t.shape() {
                return Err(Error::Checkpoint(format!("parameter `{name}` has the wrong shape")));
            }
        }
        let ids = Ids::resolve(&ckpt.params)?;
        Ok(Evaluator {
            config: meta.config,
            vocab: meta.vocab,
            params: ckpt.params,
            ids,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    fn embed_on(&self, tape: &mut Tape, s: &Sentence) -> Result<Var> {
        if s.is_empty() {
            return Err(Error::EmptyInput("evaluator sentence"));
        }
        let table = tape.param(self.ids.emb);
        let emb = tape.gather_rows(table, s.ids())?;
        if !self.config.positional {
            return Ok(emb);
        }
        let d = self.config.embed_dim;
        let pe: Vec<f64> = (0..s.len()).flat_map(|p| positional_encoding(p, d)).collect();
        let pe = tape.constant(Tensor::new(vec![s.len(), d], pe)?);
        tape.add(emb, pe)
    }

    fn ffn_relu(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
        let z = tape.matmul(x, w)?;
        let z = tape.add_row(z, b)?;
        Ok(tape.relu(z))
    }

    /// `M(x, y)` as a `[1×1]` node.
    pub fn score_on(&self, tape: &mut Tape, x: &Sentence, y: &Sentence) -> Result<Var> {
        let a = self.embed_on(tape, x)?;
        let b = self.embed_on(tape, y)?;
        let (fw, fb) = (tape.param(self.ids.f_w), tape.param(self.ids.f_b));
        let fa = Self::ffn_relu(tape, a, fw, fb)?;
        let fb_ = Self::ffn_relu(tape, b, fw, fb)?;
        let fbt = tape.transpose(fb_)?;
        let e = tape.matmul(fa, fbt)?;
        let et = tape.transpose(e)?;
        let wa = tape.softmax(e);
        let wb = tape.softmax(et);
        let x_bar = tape.matmul(wa, b)?;
        let y_bar = tape.matmul(wb, a)?;

        let (gw, gb) = (tape.param(self.ids.g_w), tape.param(self.ids.g_b));
        let ca = tape.concat(&[a, x_bar], Axis::Cols)?;
        let cb = tape.concat(&[b, y_bar], Axis::Cols)?;
        let va = Self::ffn_relu(tape, ca, gw, gb)?;
        let vb = Self::ffn_relu(tape, cb, gw, gb)?;
        let v1 = tape.sum_rows(va)?;
        let v2 = tape.sum_rows(vb)?;

        let v = tape.concat(&[v1, v2], Axis::Cols)?;
        let (hw, hb) = (tape.param(self.ids.h_w), tape.param(self.ids.h_b));
        let hid = Self::ffn_relu(tape, v, hw, hb)?;
        let (ow, ob) = (tape.param(self.ids.out_w), tape.param(self.ids.out_b));
        let z = tape.matmul(hid, ow)?;
        let z = tape.add(z, ob)?;
        Ok(tape.sigmoid(z))
    }

    pub fn score(&self, x: &Sentence, y: &Sentence) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let s = self.score_on(&mut tape, x, y)?;
        Ok(tape.scalar(s))
    }

    /// Scores for many pairs, computed in parallel, returned in input order.
    pub fn score_batch(&self, pairs: &[(Sentence, Sentence)]) -> Result<Vec<f64>> {
        pairs.par_iter().map(|(x, y)| self.score(x, y)).collect()
    }

    /// `−log M` for positives, `−log(1 − M)` for negatives.
    pub fn pointwise_loss_on(&self, tape: &mut Tape, x: &Sentence, y: &Sentence, label: Label) -> Result<Var> {
        let m = self.score_on(tape, x, y)?;
        let p = match label {
            Label::Positive => m,
            Label::Negative => tape.affine(m, -1.0, 1.0),
        };
        let lp = tape.log_floor(p, SCORE_FLOOR);
        Ok(tape.affine(lp, -1.0, 0.0))
    }

    /// `−log M(x, y⁺) − log(1 − M(x, y⁻))`.
    pub fn sl_loss_on(&self, tape: &mut Tape, x: &Sentence, y_pos: &Sentence, y_neg: &Sentence) -> Result<Var> {
        let a = self.pointwise_loss_on(tape, x, y_pos, Label::Positive)?;
        let b = self.pointwise_loss_on(tape, x, y_neg, Label::Negative)?;
        tape.add(a, b)
    }

    /// `max(0, 1 − ζ + M(x, ŷ) − M(x, y))`.
    pub fn hinge_on(&self, tape: &mut Tape, x: &Sentence, y_ref: &Sentence, y_gen: &Sentence, zeta: f64) -> Result<Var> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::OutOfRange(format!("hinge slack ζ = {zeta} outside [0, 1]")));
        }
        let good = self.score_on(tape, x, y_ref)?;
        let bad = self.score_on(tape, x, y_gen)?;
        let gap = tape.sub(bad, good)?;
        let margin = tape.affine(gap, 1.0, 1.0 - zeta);
        Ok(tape.relu(margin))
    }

    /// Summed cross-entropy and gradients over labeled pairs.
    pub fn sl_batch(&self, batch: &[(Sentence, Sentence, Label)]) -> Result<(f64, Gradients)> {
        accumulate_parallel(&self.params, batch, |(x, y, label)| {
            let mut tape = Tape::new(&self.params);
            let loss = self.pointwise_loss_on(&mut tape, x, y, *label)?;
            Ok((tape.scalar(loss), tape.backward(loss)?))
        })
    }

    /// Summed weighted hinge and gradients.
    pub fn hinge_batch(&self, items: &[HingeItem]) -> Result<(f64, Gradients)> {
        accumulate_parallel(&self.params, items, |it| {
            if it.weight == 0.0 {
                return Ok((0.0, Gradients::zeros_like(&self.params)));
            }
            let mut tape = Tape::new(&self.params);
            let h = self.hinge_on(&mut tape, &it.x, &it.y_ref, &it.y_gen, it.zeta)?;
            let loss = tape.affine(h, it.weight, 0.0);
            Ok((tape.scalar(loss), tape.backward(loss)?))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_gradients;

    fn tiny(positional: bool) -> Evaluator {
        let vocab = Vocab::build(["how far is earth from sun", "what is the distance between sun and earth"], 100).unwrap();
        let cfg = EvaluatorConfig {
            embed_dim: 4,
            attend_hidden: 3,
            compare_hidden: 3,
            aggregate_hidden: 3,
            positional,
            init_scale: 0.8,
        };
        Evaluator::new(cfg, vocab, 5).unwrap()
    }

    #[test]
    fn position_zero_alternates() {
        assert_eq!(positional_encoding(0, 6), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_ne!(positional_encoding(1, 2), positional_encoding(2, 2));
        for p in 0..20 {
            assert!(positional_encoding(p, 16).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn score_is_a_deterministic_probability() {
        let m = tiny(true);
        let (x, y) = (m.parse("how far is earth from sun").unwrap(), m.parse("what is the distance between sun and earth").unwrap());
        let s = m.score(&x, &y).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(s, m.score(&x, &y).unwrap());
    }

    #[test]
    fn positions_break_permutation_ties() {
        let x = "how far is earth from sun";
        let (y1, y2) = ("sun and earth distance", "earth and sun distance");
        let off = tiny(false);
        let a = off.score(&off.parse(x).unwrap(), &off.parse(y1).unwrap()).unwrap();
        let b = off.score(&off.parse(x).unwrap(), &off.parse(y2).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
        let on = tiny(true);
        let a = on.score(&on.parse(x).unwrap(), &on.parse(y1).unwrap()).unwrap();
        let b = on.score(&on.parse(x).unwrap(), &on.parse(y2).unwrap()).unwrap();
        assert!((a - b).abs() > 1e-9);
    }

    #[test]
    fn hinge_examples() {
        let m = tiny(true);
        let x = m.parse("how far is earth").unwrap();
        let y = m.parse("what is the distance").unwrap();
        let mut tape = Tape::new(m.params());
        let h = m.hinge_on(&mut tape, &x, &y, &y, 1.0).unwrap();
        assert_eq!(tape.scalar(h), 0.0);
        let g = tape.backward(h).unwrap();
        assert!(g.is_zero());
        let mut tape = Tape::new(m.params());
        assert!(m.hinge_on(&mut tape, &x, &y, &y, 1.5).is_err());
        assert!(m.hinge_on(&mut tape, &x, &y, &y, -0.1).is_err());
    }

    #[test]
    fn empty_generation_scores_as_end_token() {
        let m = tiny(true);
        let s = m.sentence(&[]);
        assert_eq!(s.tokens(), &["</s>".to_string()]);
        assert!(m.score(&m.parse("how far").unwrap(), &s).unwrap().is_finite());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = tiny(true);
        let x = m.parse("how far is earth from sun").unwrap();
        let yp = m.parse("what is the distance between sun and earth").unwrap();
        let yn = m.parse("how is the sun").unwrap();
        let sl = check_gradients(m.params(), 1e-5, |t| m.sl_loss_on(t, &x, &yp, &yn)).unwrap();
        assert!(sl.max_rel_err < 1e-4, "{sl:?}");
        let hinge = check_gradients(m.params(), 1e-5, |t| m.hinge_on(t, &x, &yp, &yn, 0.2)).unwrap();
        assert!(hinge.max_rel_err < 1e-4, "{hinge:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = tiny(true);
        let back = Evaluator::from_checkpoint(m.to_checkpoint().unwrap()).unwrap();
        assert_eq!(back.params(), m.params());
        assert!(Evaluator::from_checkpoint(Checkpoint::new("{\"kind\":\"generator\"}", ParamStore::new())).is_err());
    }
}
