//! Pointer-generator sequence-to-sequence model.
//!
//! An LSTM encoder feeds additive attention; an LSTM decoder produces a state
//! from which a vocabulary softmax `g` and a switch `q` are computed. The next
//! token distribution mixes `g` with the attention weights copied onto the
//! input tokens, so rare input words can be reproduced verbatim.
//!
//! Training runs on a [`Tape`]. Inference runs the same code on a throwaway
//! tape per decoder step, which keeps a single definition of the model.

mod decode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Checkpoint, Gradients, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::text::{Sentence, Vocab, EOS, MAX_SENTENCE_LEN, SOS, UNK};

pub use decode::{DecodeMode, Generation};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub output_hidden: usize,
    pub bidirectional: bool,
    pub max_len: usize,
    pub init_scale: f64,
    /// Pins the switch `q` to a constant; for tests of the mixture boundary.
    #[serde(skip)]
    pub switch_override: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            embed_dim: 32,
            hidden: 64,
            attention_dim: 64,
            output_hidden: 64,
            bidirectional: false,
            max_len: MAX_SENTENCE_LEN,
            init_scale: 0.1,
            switch_override: None,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.embed_dim, self.hidden, self.attention_dim, self.output_hidden];
        if dims.contains(&0) {
            return Err(Error::Config("generator dimensions must be positive".into()));
        }
        if self.max_len == 0 || self.max_len > MAX_SENTENCE_LEN {
            return Err(Error::Config(format!("generator.max_len must be in 1..={MAX_SENTENCE_LEN}")));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("generator.init_scale must be positive".into()));
        }
        Ok(())
    }

    /// Width of an encoder state.
    pub fn enc_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    fn feature_dim(&self) -> usize {
        self.hidden + self.enc_dim() + self.embed_dim
    }
}

#[derive(Clone, Debug)]
struct Ids {
    emb: ParamId,
    enc_w: ParamId,
    enc_b: ParamId,
    enc_bw: Option<(ParamId, ParamId)>,
    dec_w: ParamId,
    dec_b: ParamId,
    att_s: ParamId,
    att_h: ParamId,
    att_b: ParamId,
    att_v: ParamId,
    g_w1: ParamId,
    g_b1: ParamId,
    g_w2: ParamId,
    g_b2: ParamId,
    q_w: ParamId,
    q_b: ParamId,
}

impl Ids {
    fn resolve(store: &ParamStore, bidirectional: bool) -> Result<Self> {
        let id = |n: &str| store.id(n);
        Ok(Ids {
            emb: id("emb")?,
            enc_w: id("enc.w")?,
            enc_b: id("enc.b")?,
            enc_bw: if bidirectional {
                Some((id("enc_bw.w")?, id("enc_bw.b")?))
            } else {
                None
            },
            dec_w: id("dec.w")?,
            dec_b: id("dec.b")?,
            att_s: id("att.ws")?,
            att_h: id("att.wh")?,
            att_b: id("att.b")?,
            att_v: id("att.v")?,
            g_w1: id("g.w1")?,
            g_b1: id("g.b1")?,
            g_w2: id("g.w2")?,
            g_b2: id("g.b2")?,
            q_w: id("q.w")?,
            q_b: id("q.b")?,
        })
    }
}

/// The input sentence with its extended vocabulary: out-of-vocabulary surface
/// tokens get ids `V, V+1, …` in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Source {
    tokens: Vec<String>,
    ids: Vec<usize>,
    ext_ids: Vec<usize>,
    oov: Vec<String>,
    base: usize,
}

impl Source {
    pub fn new(sentence: &Sentence, vocab: &Vocab) -> Result<Self> {
        if sentence.is_empty() {
            return Err(Error::EmptyInput("generator input"));
        }
        let base = vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let mut ext_ids = Vec::with_capacity(sentence.len());
        for (tok, &id) in sentence.tokens().iter().zip(sentence.ids()) {
            if id != UNK {
                ext_ids.push(id);
            } else {
                let j = oov.iter().position(|o| o == tok).unwrap_or_else(|| {
                    oov.push(tok.clone());
                    oov.len() - 1
                });
                ext_ids.push(base + j);
            }
        }
        Ok(Source {
            tokens: sentence.tokens().to_vec(),
            ids: sentence.ids().to_vec(),
            ext_ids,
            oov,
            base,
        })
    }

    pub fn parse(text: &str, vocab: &Vocab) -> Result<Self> {
        Self::new(&Sentence::parse(text, vocab)?, vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Extended id of each input position.
    pub fn ext_ids(&self) -> &[usize] {
        &self.ext_ids
    }

    pub fn oov(&self) -> &[String] {
        &self.oov
    }

    /// Size of the extended vocabulary.
    pub fn ext_size(&self) -> usize {
        self.base + self.oov.len()
    }

    /// Extended id of a surface token: vocabulary id, else input copy slot, else `UNK`.
    pub fn ext_id(&self, vocab: &Vocab, token: &str) -> usize {
        match vocab.id(token) {
            UNK => self
                .oov
                .iter()
                .position(|o| o == token)
                .map_or(UNK, |j| self.base + j),
            id => id,
        }
    }

    pub fn surface<'a>(&'a self, vocab: &'a Vocab, id: usize) -> &'a str {
        if id >= self.base {
            &self.oov[id - self.base]
        } else {
            vocab.token(id)
        }
    }

    /// Extended ids of `tokens` followed by `EOS`.
    pub fn target(&self, vocab: &Vocab, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .take(MAX_SENTENCE_LEN)
            .map(|t| self.ext_id(vocab, t))
            .chain(std::iter::once(EOS))
            .collect()
    }

    /// Embedding row for an extended id; copy-only tokens embed as `UNK`.
    fn input_id(&self, id: usize) -> usize {
        if id >= self.base {
            UNK
        } else {
            id
        }
    }
}

/// Encoder states plus the attention projection of each state.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `[S, enc_dim]`.
    pub states: Tensor,
    /// `W_h h_i + b` for every position, `[S, attention_dim]`.
    pub keys: Tensor,
    pub final_state: DecoderState,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Next-token distribution over the extended vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDistribution {
    pub probs: Vec<f64>,
    pub alpha: Vec<f64>,
    pub q: f64,
    pub context: Vec<f64>,
    pub state: DecoderState,
}

/// Tape-side encoder output.
#[derive(Clone, Copy, Debug)]
pub struct EncVars {
    pub states: Var,
    pub keys: Var,
    pub h: Var,
    pub c: Var,
}

/// Tape-side result of one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    pub h: Var,
    pub c: Var,
    pub alpha: Var,
    pub context: Var,
    pub g: Var,
    pub q: Var,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOutput {
    pub loss: f64,
    pub tokens: usize,
    pub underflows: usize,
}

#[derive(Clone, Debug)]
pub struct Generator {
    config: GeneratorConfig,
    vocab: Vocab,
    params: ParamStore,
    ids: Ids,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    kind: String,
    config: GeneratorConfig,
    vocab: Vocab,
}

const META_KIND: &str = "generator";

impl Generator {
    pub fn new(config: GeneratorConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, e, h, a, o) = (
            vocab.len(),
            config.embed_dim,
            config.hidden,
            config.attention_dim,
            config.output_hidden,
        );
        let (enc, feat, s) = (config.enc_dim(), config.feature_dim(), config.init_scale);
        let mut p = ParamStore::new();
        p.add_uniform("emb", &[v, e], s, &mut rng);
        p.add_uniform("enc.w", &[e + h, 4 * h], s, &mut rng);
        p.add("enc.b", Tensor::zeros(&[1, 4 * h]));
        if config.bidirectional {
            p.add_uniform("enc_bw.w", &[e + h, 4 * h], s, &mut rng);
            p.add("enc_bw.b", Tensor::zeros(&[1, 4 * h]));
        }
        p.add_uniform("dec.w", &[e + enc + h, 4 * h], s, &mut rng);
        p.add("dec.b", Tensor::zeros(&[1, 4 * h]));
        p.add_uniform("att.ws", &[h, a], s, &mut rng);
        p.add_uniform("att.wh", &[enc, a], s, &mut rng);
        p.add("att.b", Tensor::zeros(&[1, a]));
        p.add_uniform("att.v", &[a, 1], s, &mut rng);
        p.add_uniform("g.w1", &[feat, o], s, &mut rng);
        p.add("g.b1", Tensor::zeros(&[1, o]));
        p.add_uniform("g.w2", &[o, v], s, &mut rng);
        p.add("g.b2", Tensor::zeros(&[1, v]));
        p.add_uniform("q.w", &[feat, 1], s, &mut rng);
        p.add("q.b", Tensor::zeros(&[1, 1]));
        let ids = Ids::resolve(&p, config.bidirectional)?;
        Ok(Generator { config, vocab, params: p, ids })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    pub fn set_switch_override(&mut self, q: Option<f64>) {
        self.config.switch_override = q;
    }

    pub fn source(&self, text: &str) -> Result<Source> {
        Source::parse(text, &self.vocab)
    }

    pub fn source_from_tokens(&self, tokens: &[String]) -> Result<Source> {
        Source::new(&Sentence::from_tokens(tokens.to_vec(), &self.vocab), &self.vocab)
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
            return Err(Error::Checkpoint(format!("expected a {META_KIND} checkpoint, found `{}`", meta.kind)));
        }
        meta.config.validate()?;
        let fresh = Generator::new(meta.config.clone(), meta.vocab.clone(), 0)?;
        for (_, name, t) in fresh.params.iter() {
            let got = ckpt.params.get(ckpt.params.id(name)?);
            if got.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if ckpt.params.len() != fresh.params.len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        let ids = Ids::resolve(&ckpt.params, meta.config.bidirectional)?;
        Ok(Generator {
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

    // ---- tape-level model ----

    fn lstm(tape: &mut Tape, w: Var, b: Var, input: Var, h: Var, c: Var, hidden: usize) -> Result<(Var, Var)> {
        let xh = tape.concat(&[input, h], Axis::Cols)?;
        let z = tape.matmul(xh, w)?;
        let z = tape.add_row(z, b)?;
        let i = tape.slice(z, Axis::Cols, 0, hidden)?;
        let f = tape.slice(z, Axis::Cols, hidden, hidden)?;
        let g = tape.slice(z, Axis::Cols, 2 * hidden, hidden)?;
        let o = tape.slice(z, Axis::Cols, 3 * hidden, hidden)?;
        let (i, f, g, o) = (tape.sigmoid(i), tape.sigmoid(f), tape.tanh(g), tape.sigmoid(o));
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok((h, c))
    }

    fn run_lstm(&self, tape: &mut Tape, w: ParamId, b: ParamId, emb: Var, order: &[usize]) -> Result<(Vec<Var>, Var, Var)> {
        let hidden = self.config.hidden;
        let (w, b) = (tape.param(w), tape.param(b));
        let mut h = tape.constant(Tensor::zeros(&[1, hidden]));
        let mut c = tape.constant(Tensor::zeros(&[1, hidden]));
        let mut out = vec![h; order.len()];
        for &i in order {
            let x = tape.slice(emb, Axis::Rows, i, 1)?;
            (h, c) = Self::lstm(tape, w, b, x, h, c, hidden)?;
            out[i] = h;
        }
        Ok((out, h, c))
    }

    pub fn encode_on(&self, tape: &mut Tape, src: &Source) -> Result<EncVars> {
        if src.is_empty() {
            return Err(Error::EmptyInput("generator input"));
        }
        let table = tape.param(self.ids.emb);
        let emb = tape.gather_rows(table, &src.ids)?;
        let fwd: Vec<usize> = (0..src.len()).collect();
        let (hs, h, c) = self.run_lstm(tape, self.ids.enc_w, self.ids.enc_b, emb, &fwd)?;
        let mut states = tape.concat(&hs, Axis::Rows)?;
        if let Some((w, b)) = self.ids.enc_bw {
            let rev: Vec<usize> = fwd.iter().rev().copied().collect();
            let (bs, _, _) = self.run_lstm(tape, w, b, emb, &rev)?;
            let back = tape.concat(&bs, Axis::Rows)?;
            states = tape.concat(&[states, back], Axis::Cols)?;
        }
        let wh = tape.param(self.ids.att_h);
        let ab = tape.param(self.ids.att_b);
        let keys = tape.matmul(states, wh)?;
        let keys = tape.add_row(keys, ab)?;
        Ok(EncVars { states, keys, h, c })
    }

    /// Attention of decoder state `h_prev` over the encoder: `(α [1×S], context [1×enc])`.
    pub fn attend_on(&self, tape: &mut Tape, enc: &EncVars, h_prev: Var) -> Result<(Var, Var)> {
        let ws = tape.param(self.ids.att_s);
        let v = tape.param(self.ids.att_v);
        let query = tape.matmul(h_prev, ws)?;
        let pre = tape.add_row(enc.keys, query)?;
        let act = tape.tanh(pre);
        let scores = tape.matmul(act, v)?;
        let scores = tape.transpose(scores)?;
        let alpha = tape.softmax(scores);
        let context = tape.matmul(alpha, enc.states)?;
        Ok((alpha, context))
    }

    /// One decoder step from state `(h, c)` having just emitted `y_prev`.
    pub fn step_on(&self, tape: &mut Tape, enc: &EncVars, src: &Source, y_prev: usize, h: Var, c: Var) -> Result<StepVars> {
        let (alpha, context) = self.attend_on(tape, enc, h)?;
        let table = tape.param(self.ids.emb);
        let y_emb = tape.gather_rows(table, &[src.input_id(y_prev)])?;
        let input = tape.concat(&[y_emb, context], Axis::Cols)?;
        let (w, b) = (tape.param(self.ids.dec_w), tape.param(self.ids.dec_b));
        let (h, c) = Self::lstm(tape, w, b, input, h, c, self.config.hidden)?;

        let feat = tape.concat(&[h, context, y_emb], Axis::Cols)?;
        let (w1, b1) = (tape.param(self.ids.g_w1), tape.param(self.ids.g_b1));
        let (w2, b2) = (tape.param(self.ids.g_w2), tape.param(self.ids.g_b2));
        let hid = tape.matmul(feat, w1)?;
        let hid = tape.add_row(hid, b1)?;
        let hid = tape.tanh(hid);
        let logits = tape.matmul(hid, w2)?;
        let logits = tape.add_row(logits, b2)?;
        let g = tape.softmax(logits);

        let q = match self.config.switch_override {
            Some(q) => tape.constant(Tensor::scalar(q)),
            None => {
                let (qw, qb) = (tape.param(self.ids.q_w), tape.param(self.ids.q_b));
                let z = tape.matmul(feat, qw)?;
                let z = tape.add(z, qb)?;
                tape.sigmoid(z)
            }
        };
        Ok(StepVars { h, c, alpha, context, g, q })
    }

    /// `p(target)` under the copy mixture of a step, as a `[1×1]` node.
    pub fn target_prob_on(&self, tape: &mut Tape, src: &Source, step: &StepVars, target: usize) -> Result<Var> {
        let mask: Vec<f64> = src
            .ext_ids
            .iter()
            .map(|&w| if w == target { 1.0 } else { 0.0 })
            .collect();
        let copy = if mask.iter().any(|&m| m > 0.0) {
            let m = tape.constant(Tensor::new(vec![src.len(), 1], mask)?);
            let mass = tape.matmul(step.alpha, m)?;
            let not_q = tape.affine(step.q, -1.0, 1.0);
            Some(tape.mul(not_q, mass)?)
        } else {
            None
        };
        let gen = if target < self.vocab.len() {
            let gt = tape.slice(step.g, Axis::Cols, target, 1)?;
            Some(tape.mul(step.q, gt)?)
        } else {
            None
        };
        match (gen, copy) {
            (Some(a), Some(b)) => tape.add(a, b),
            (Some(a), None) | (None, Some(a)) => Ok(a),
            (None, None) => Err(Error::OutOfRange(format!("target id {target} outside the extended vocabulary"))),
        }
    }

    /// Teacher-forced log-probabilities of `targets` (extended ids), one node per step.
    pub fn sequence_logprobs_on(&self, tape: &mut Tape, src: &Source, targets: &[usize]) -> Result<Vec<Var>> {
        let enc = self.encode_on(tape, src)?;
        let (mut h, mut c) = (enc.h, enc.c);
        let mut y_prev = SOS;
        let mut out = Vec::with_capacity(targets.len());
        for &y in targets {
            let step = self.step_on(tape, &enc, src, y_prev, h, c)?;
            let p = self.target_prob_on(tape, src, &step, y)?;
            out.push(tape.log_floor(p, PROB_FLOOR));
            (h, c, y_prev) = (step.h, step.c, y);
        }
        Ok(out)
    }

    /// `−Σ_t log p(y_t | y_<t, x)` with teacher forcing; `targets` should end in `EOS`.
    pub fn mle_loss_on(&self, tape: &mut Tape, src: &Source, targets: &[usize]) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::EmptyInput("generator target"));
        }
        let lps = self.sequence_logprobs_on(tape, src, targets)?;
        let all = tape.concat(&lps, Axis::Cols)?;
        let total = tape.sum(all);
        Ok(tape.affine(total, -1.0, 0.0))
    }

    /// Loss and gradients for one `(x, y)` pair.
    pub fn mle_grads(&self, x: &[String], y: &[String]) -> Result<(MleOutput, Gradients)> {
        let src = self.source_from_tokens(x)?;
        if y.is_empty() {
            return Err(Error::EmptyInput("generator target"));
        }
        let targets = src.target(&self.vocab, y);
        let mut tape = Tape::new(&self.params);
        let loss = self.mle_loss_on(&mut tape, &src, &targets)?;
        let out = MleOutput {
            loss: tape.scalar(loss),
            tokens: targets.len(),
            underflows: tape.underflows(),
        };
        Ok((out, tape.backward(loss)?))
    }

    // ---- inference ----

    pub fn encode(&self, src: &Source) -> Result<EncoderOutput> {
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_on(&mut tape, src)?;
        Ok(EncoderOutput {
            states: tape.value(enc.states).clone(),
            keys: tape.value(enc.keys).clone(),
            final_state: DecoderState {
                h: tape.value(enc.h).clone(),
                c: tape.value(enc.c).clone(),
            },
        })
    }

    fn load_enc(tape: &mut Tape, enc: &EncoderOutput, state: &DecoderState) -> EncVars {
        EncVars {
            states: tape.constant(enc.states.clone()),
            keys: tape.constant(enc.keys.clone()),
            h: tape.constant(state.h.clone()),
            c: tape.constant(state.c.clone()),
        }
    }

    /// Attention weights and context for a previous decoder state.
    pub fn attend(&self, enc: &EncoderOutput, h_prev: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new(&self.params);
        let vars = Self::load_enc(&mut tape, enc, &enc.final_state);
        let h = tape.constant(h_prev.clone());
        let (alpha, context) = self.attend_on(&mut tape, &vars, h)?;
        Ok((tape.value(alpha).data().to_vec(), tape.value(context).data().to_vec()))
    }

    /// Distribution for the token following `y_prev`, from decoder state `state`.
    pub fn step(&self, src: &Source, enc: &EncoderOutput, state: &DecoderState, y_prev: usize) -> Result<StepDistribution> {
        let mut tape = Tape::new(&self.params);
        let vars = Self::load_enc(&mut tape, enc, state);
        let s = self.step_on(&mut tape, &vars, src, y_prev, vars.h, vars.c)?;
        let q = tape.scalar(s.q);
        let alpha = tape.value(s.alpha).data().to_vec();
        let mut probs: Vec<f64> = tape.value(s.g).data().iter().map(|&g| q * g).collect();
        probs.resize(src.ext_size(), 0.0);
        for (&w, &a) in src.ext_ids.iter().zip(&alpha) {
            probs[w] += (1.0 - q) * a;
        }
        Ok(StepDistribution {
            probs,
            alpha,
            q,
            context: tape.value(s.context).data().to_vec(),
            state: DecoderState {
                h: tape.value(s.h).clone(),
                c: tape.value(s.c).clone(),
            },
        })
    }

    /// Teacher-forced log-probabilities without gradients.
    pub fn sequence_logprobs(&self, src: &Source, targets: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let lps = self.sequence_logprobs_on(&mut tape, src, targets)?;
        Ok(lps.iter().map(|&v| tape.scalar(v)).collect())
    }

    pub fn surface(&self, src: &Source, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id != EOS)
            .map(|&id| src.surface(&self.vocab, id).to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::check_gradients;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    pub(crate) fn tiny(bidirectional: bool) -> Generator {
        let vocab = Vocab::build(["how far is earth from sun", "what is the distance between sun and earth"], 100).unwrap();
        let cfg = GeneratorConfig {
            embed_dim: 4,
            hidden: 5,
            attention_dim: 3,
            output_hidden: 4,
            bidirectional,
            init_scale: 0.5,
            ..Default::default()
        };
        Generator::new(cfg, vocab, 7).unwrap()
    }

    #[test]
    fn step_distribution_sums_to_one() {
        let g = tiny(false);
        let src = g.source("how far is ducking earth from ducking sun").unwrap();
        let enc = g.encode(&src).unwrap();
        let d = g.step(&src, &enc, &enc.final_state, SOS).unwrap();
        assert_eq!(d.probs.len(), g.vocab().len() + 1);
        assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((d.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.q > 0.0 && d.q < 1.0);
    }

    #[test]
    fn oov_input_token_is_copyable() {
        let g = tiny(false);
        let src = g.source("how far is ducking earth from ducking sun").unwrap();
        let duck = src.ext_id(g.vocab(), "ducking");
        assert_eq!(duck, g.vocab().len());
        let enc = g.encode(&src).unwrap();
        let d = g.step(&src, &enc, &enc.final_state, SOS).unwrap();
        let expect = (1.0 - d.q) * (d.alpha[3] + d.alpha[6]);
        assert!((d.probs[duck] - expect).abs() < 1e-15);
        assert!(d.probs[duck] > 0.0);
    }

    #[test]
    fn forced_switch_boundaries() {
        let mut g = tiny(false);
        let src = g.source("how far is earth from sun").unwrap();
        let enc = g.encode(&src).unwrap();
        g.set_switch_override(Some(1.0));
        let d = g.step(&src, &enc, &enc.final_state, SOS).unwrap();
        let mut tape = Tape::new(g.params());
        let vars = Generator::load_enc(&mut tape, &enc, &enc.final_state);
        let s = g.step_on(&mut tape, &vars, &src, SOS, vars.h, vars.c).unwrap();
        assert_eq!(&d.probs[..g.vocab().len()], tape.value(s.g).data());

        g.set_switch_override(Some(0.0));
        let d = g.step(&src, &enc, &enc.final_state, SOS).unwrap();
        for (i, &w) in src.ext_ids().iter().enumerate() {
            assert!((d.probs[w] - d.alpha[i]).abs() < 1e-15);
        }
        let on_input: f64 = src.ext_ids().iter().map(|&w| d.probs[w]).sum();
        assert!((on_input - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_model_has_zero_hidden_states() {
        let mut g = tiny(false);
        let ids: Vec<ParamId> = g.params().ids().collect();
        for id in ids {
            g.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        let enc = g.encode(&g.source("how far is earth").unwrap()).unwrap();
        assert_eq!(enc.len(), 4);
        assert!(enc.states.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_g_with_unit_switch_gives_t_log_v() {
        let mut g = tiny(false);
        for name in ["g.w2", "g.b2"] {
            let id = g.params().id(name).unwrap();
            g.params_mut().get_mut(id).data_mut().fill(0.0);
        }
        g.set_switch_override(Some(1.0));
        let (out, _) = g.mle_grads(&toks("how far is earth"), &toks("what is the distance")).unwrap();
        let v = g.vocab().len() as f64;
        assert_eq!(out.tokens, 5);
        assert!((out.loss - 5.0 * v.ln()).abs() < 1e-9);
    }

    #[test]
    fn mle_gradients_match_finite_differences() {
        for bidir in [false, true] {
            let g = tiny(bidir);
            let src = g.source("how far is ducking earth from ducking sun").unwrap();
            let targets = src.target(g.vocab(), &toks("what is ducking distance sun"));
            let report = check_gradients(g.params(), 1e-4, |tape| g.mle_loss_on(tape, &src, &targets)).unwrap();
            assert!(report.max_rel_err < 1e-4, "bidir={bidir}: {report:?}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let g = tiny(true);
        let back = Generator::from_checkpoint(Checkpoint::from_bytes(&g.to_checkpoint().unwrap().to_bytes()).unwrap()).unwrap();
        assert_eq!(back.params(), g.params());
        assert_eq!(back.config(), g.config());
        assert_eq!(back.vocab(), g.vocab());
    }
}
