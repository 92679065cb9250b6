//! The joint model: shared encoder, span/head/SRL taggers and the proto-role classifier bank,
//! with a single forward/backward pass over one predicate instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{span_tags_to_spans, HeadTag, SpanTag, SrlTag, PROPERTY_COUNT};
use crate::encoder::{EncodedSentence, EncoderConfig, EncoderParams, Mode};
use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::linalg::{argmax, one_hot, softmax, Matrix};
use crate::sprl::{build_pair_representation, PairLayout, PropertyBank, PropertyPrediction};
use crate::taggers::{
    head_inputs, match_predicted_span, select_argument_heads, span_inputs, srl_inputs, SrlInputs,
};

/// Architecture: everything needed to allocate parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderConfig,
    pub srl_inputs: SrlInputs,
    pub pair_layout: PairLayout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub encoder: EncoderParams,
    pub span: Linear,
    pub head: Linear,
    pub srl: Linear,
    pub sprl: PropertyBank,
}

/// Tensor groups, used for transfer and isolation checks.
pub const ENCODER_PREFIX: &str = "encoder";
pub const SPAN_PREFIX: &str = "span";
pub const HEAD_PREFIX: &str = "head";
pub const SRL_PREFIX: &str = "srl";
pub const SPRL_PREFIX: &str = "sprl";

impl ModelParams {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderParams::init_with(&spec.encoder, &mut rng)?;
        let enc = spec.encoder.output_dim();
        if spec.pair_layout.encoded != enc {
            return Err(Error::config(format!(
                "pair layout expects encoder width {}, encoder produces {enc}",
                spec.pair_layout.encoded
            )));
        }
        Ok(ModelParams {
            spec: spec.clone(),
            encoder,
            span: Linear::new(SpanTag::COUNT, enc, &mut rng),
            head: Linear::new(HeadTag::COUNT, enc + SpanTag::COUNT, &mut rng),
            srl: Linear::new(SrlTag::COUNT, spec.srl_inputs.width(enc), &mut rng),
            sprl: PropertyBank::new(spec.pair_layout.width(), &mut rng),
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            spec: self.spec.clone(),
            encoder: self.encoder.zeros_like(),
            span: Linear::zeros(self.span.out_dim(), self.span.in_dim()),
            head: Linear::zeros(self.head.out_dim(), self.head.in_dim()),
            srl: Linear::zeros(self.srl.out_dim(), self.srl.in_dim()),
            sprl: PropertyBank::zeros(self.sprl.width()),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.encoder.visit(ENCODER_PREFIX, f);
        self.span.visit(SPAN_PREFIX, f);
        self.head.visit(HEAD_PREFIX, f);
        self.srl.visit(SRL_PREFIX, f);
        self.sprl.visit(SPRL_PREFIX, f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.encoder.visit_mut(ENCODER_PREFIX, f);
        self.span.visit_mut(SPAN_PREFIX, f);
        self.head.visit_mut(HEAD_PREFIX, f);
        self.srl.visit_mut(SRL_PREFIX, f);
        self.sprl.visit_mut(SPRL_PREFIX, f);
    }

    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit(&mut |n, m| out.push((n, m)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out: Vec<(String, *mut Matrix)> = Vec::new();
        self.visit_mut(&mut |n, m| out.push((n, m as *mut Matrix)));
        // SAFETY: every visited tensor is a distinct field, so the pointers never alias, and
        // they borrow from `self` for the lifetime of the returned vector.
        out.into_iter().map(|(n, p)| (n, unsafe { &mut *p })).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.tensors();
        for ((_, mine), (_, m)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_assign(m);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.visit_mut(&mut |_, m| m.scale(s));
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().map(|(_, m)| m.sum_squares()).sum::<f64>().sqrt()
    }
}

/// A per-token feature block that is either fixed in advance or read off the model's own
/// (hardened) predictions.
#[derive(Clone, Debug, PartialEq)]
pub enum Aux<T> {
    Fixed(Vec<T>),
    Own,
}

/// Which head the SPRL pair uses.
#[derive(Clone, Debug, PartialEq)]
pub enum PairHead {
    Fixed(usize),
    /// Select from the model's own head scores, within the gold span or within the best
    /// matching predicted span.
    Own { predicted_spans: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairExample {
    pub span_id: usize,
    pub gold_span: (usize, usize),
    pub head: PairHead,
    pub labels: [Option<u8>; PROPERTY_COUNT],
    pub span_embedding: Option<Vec<f64>>,
}

/// A predicate instance turned into model inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub sentence_id: String,
    pub features: Matrix,
    pub predicate_index: usize,
    pub gold_span_tags: Vec<SpanTag>,
    pub gold_head_tags: Vec<HeadTag>,
    pub gold_srl_tags: Vec<SrlTag>,
    /// All gold argument spans, role-labelled or not.
    pub gold_spans: Vec<(usize, usize)>,
    pub aux_spans: Option<Aux<SpanTag>>,
    pub aux_heads: Option<Aux<HeadTag>>,
    pub pairs: Vec<PairExample>,
    pub sentence_embedding: Option<Vec<f64>>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.features.rows
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows == 0
    }
}

/// What the head tagger sees as its span encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInput {
    /// The span tagger's distribution in training, its argmax one-hots otherwise.
    #[default]
    Predicted,
    Gold,
}

/// Per-task loss scales. `None` disables the task; `Some(0.0)` runs it with zero weight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Objective {
    pub span: Option<f64>,
    pub head: Option<f64>,
    pub srl: Option<f64>,
    pub sprl: Option<[f64; PROPERTY_COUNT]>,
    pub head_input: HeadInput,
}

/// Unscaled summed cross-entropies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskSums {
    pub span: f64,
    pub head: f64,
    pub srl: f64,
    pub sprl: [f64; PROPERTY_COUNT],
}

impl TaskSums {
    pub fn add(&mut self, o: &TaskSums) {
        self.span += o.span;
        self.head += o.head;
        self.srl += o.srl;
        for (a, b) in self.sprl.iter_mut().zip(&o.sprl) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.span.is_finite()
            && self.head.is_finite()
            && self.srl.is_finite()
            && self.sprl.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairPrediction {
    pub span_id: usize,
    pub span: (usize, usize),
    pub head_index: usize,
    pub predictions: Vec<PropertyPrediction>,
    pub labels: [Option<u8>; PROPERTY_COUNT],
}

/// Eval-mode outputs for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub span_probs: Vec<Vec<f64>>,
    pub span_tags: Vec<SpanTag>,
    /// Head scores when fed the predicted span tags.
    pub head_probs: Vec<Vec<f64>>,
    pub head_tags: Vec<HeadTag>,
    /// Head tags when fed the gold span tags.
    pub head_tags_gold_spans: Vec<HeadTag>,
    pub srl_probs: Vec<Vec<f64>>,
    pub srl_tags: Vec<SrlTag>,
    pub pairs: Vec<PairPrediction>,
}

fn cross_entropy(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].max(f64::MIN_POSITIVE).ln()
}

/// `(p - onehot(gold)) * scale`, the logit gradient of scaled softmax cross-entropy.
fn ce_grad(probs: &[f64], gold: usize, scale: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - f64::from(u8::from(i == gold))) * scale)
        .collect()
}

fn add_rows(d_enc: &mut Matrix, t: usize, dx: &[f64]) {
    for (a, b) in d_enc.row_mut(t).iter_mut().zip(dx) {
        *a += b;
    }
}

struct Forward {
    enc: EncodedSentence,
    span_probs: Option<Vec<Vec<f64>>>,
    head_in: Option<Vec<Vec<f64>>>,
    head_soft: bool,
    head_probs: Option<Vec<Vec<f64>>>,
}

impl ModelParams {
    fn span_probs(&self, enc: &EncodedSentence) -> Vec<Vec<f64>> {
        span_inputs(enc).iter().map(|x| softmax(&self.span.forward(x))).collect()
    }

    fn head_encoding(&self, ex: &Example, span_probs: Option<&Vec<Vec<f64>>>, input: HeadInput, mode: Mode) -> (Vec<Vec<f64>>, bool) {
        match (input, span_probs) {
            (HeadInput::Gold, _) | (_, None) => (
                ex.gold_span_tags
                    .iter()
                    .map(|t| one_hot(t.index(), SpanTag::COUNT))
                    .collect(),
                false,
            ),
            (HeadInput::Predicted, Some(p)) if mode == Mode::Train => (p.clone(), true),
            (HeadInput::Predicted, Some(p)) => (
                p.iter().map(|d| one_hot(argmax(d), SpanTag::COUNT)).collect(),
                false,
            ),
        }
    }

    fn needs_own_spans(ex: &Example) -> bool {
        matches!(ex.aux_spans, Some(Aux::Own))
            || ex
                .pairs
                .iter()
                .any(|p| p.head == PairHead::Own { predicted_spans: true })
    }

    fn needs_own_heads(ex: &Example) -> bool {
        matches!(ex.aux_heads, Some(Aux::Own)) || ex.pairs.iter().any(|p| matches!(p.head, PairHead::Own { .. }))
    }

    fn forward_taggers(&self, ex: &Example, obj: &Objective, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Forward> {
        let enc = self.encoder.encode(&ex.features, mode, rng)?;
        let want_head = obj.head.is_some() || Self::needs_own_heads(ex);
        let want_span = obj.span.is_some()
            || Self::needs_own_spans(ex)
            || (want_head && obj.head_input == HeadInput::Predicted);
        let span_probs = want_span.then(|| self.span_probs(&enc));
        let (head_in, head_soft, head_probs) = if want_head {
            let (encoding, soft) = self.head_encoding(ex, span_probs.as_ref(), obj.head_input, mode);
            let inputs = head_inputs(&enc, &encoding)?;
            let probs = inputs.iter().map(|x| softmax(&self.head.forward(x))).collect();
            (Some(inputs), soft, Some(probs))
        } else {
            (None, false, None)
        };
        Ok(Forward {
            enc,
            span_probs,
            head_in,
            head_soft,
            head_probs,
        })
    }

    fn own_span_tags(fwd: &Forward) -> Vec<SpanTag> {
        fwd.span_probs
            .as_ref()
            .expect("span tagger ran")
            .iter()
            .map(|p| SpanTag::from_index(argmax(p)))
            .collect()
    }

    fn own_head_tags(fwd: &Forward) -> Vec<HeadTag> {
        fwd.head_probs
            .as_ref()
            .expect("head tagger ran")
            .iter()
            .map(|p| HeadTag::from_index(argmax(p)))
            .collect()
    }

    fn aux_blocks(ex: &Example, fwd: &Forward) -> (Option<Vec<SpanTag>>, Option<Vec<HeadTag>>) {
        let spans = ex.aux_spans.as_ref().map(|a| match a {
            Aux::Fixed(t) => t.clone(),
            Aux::Own => Self::own_span_tags(fwd),
        });
        let heads = ex.aux_heads.as_ref().map(|a| match a {
            Aux::Fixed(t) => t.clone(),
            Aux::Own => Self::own_head_tags(fwd),
        });
        (spans, heads)
    }

    fn pair_head(pair: &PairExample, fwd: &Forward) -> usize {
        match pair.head {
            PairHead::Fixed(h) => h,
            PairHead::Own { predicted_spans } => {
                let scores: Vec<f64> = fwd
                    .head_probs
                    .as_ref()
                    .expect("head tagger ran")
                    .iter()
                    .map(|p| p[HeadTag::Head.index()])
                    .collect();
                let span = if predicted_spans {
                    match_predicted_span(pair.gold_span, &span_tags_to_spans(&Self::own_span_tags(fwd)))
                } else {
                    pair.gold_span
                };
                select_argument_heads(&scores, &[span])[0]
            }
        }
    }

    fn pair_vector(&self, ex: &Example, pair: &PairExample, enc: &EncodedSentence, head: usize) -> Result<Vec<f64>> {
        build_pair_representation(
            enc,
            ex.predicate_index,
            head,
            &self.spec.pair_layout,
            pair.span_embedding.as_deref(),
            ex.sentence_embedding.as_deref(),
        )
    }

    /// Summed losses for the enabled tasks; accumulates scaled gradients into `grad` if given.
    pub fn loss_and_gradient(
        &self,
        ex: &Example,
        obj: &Objective,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        mut grad: Option<&mut ModelParams>,
    ) -> Result<TaskSums> {
        let fwd = self.forward_taggers(ex, obj, mode, rng)?;
        let len = ex.len();
        let enc_w = fwd.enc.width();
        let mut sums = TaskSums::default();
        let mut d_enc = Matrix::zeros(len, enc_w);
        let mut d_span_logits = vec![vec![0.0; SpanTag::COUNT]; len];

        if let (Some(scale), Some(probs)) = (obj.span, &fwd.span_probs) {
            for (t, p) in probs.iter().enumerate() {
                let gold = ex.gold_span_tags[t].index();
                sums.span += cross_entropy(p, gold);
                for (a, b) in d_span_logits[t].iter_mut().zip(ce_grad(p, gold, scale)) {
                    *a += b;
                }
            }
        }

        if let (Some(scale), Some(probs), Some(inputs)) = (obj.head, &fwd.head_probs, &fwd.head_in) {
            for (t, p) in probs.iter().enumerate() {
                let gold = ex.gold_head_tags[t].index();
                sums.head += cross_entropy(p, gold);
                if let Some(g) = grad.as_deref_mut() {
                    let dy = ce_grad(p, gold, scale);
                    let mut dx = vec![0.0; inputs[t].len()];
                    self.head.backward(&inputs[t], &dy, &mut g.head, Some(&mut dx));
                    add_rows(&mut d_enc, t, &dx[..enc_w]);
                    if fwd.head_soft {
                        // through the span softmax: dz = p ⊙ (dp - <p, dp>)
                        let sp = &fwd.span_probs.as_ref().expect("soft span input")[t];
                        let dp = &dx[enc_w..];
                        let inner: f64 = sp.iter().zip(dp).map(|(a, b)| a * b).sum();
                        for k in 0..SpanTag::COUNT {
                            d_span_logits[t][k] += sp[k] * (dp[k] - inner);
                        }
                    }
                }
            }
        }

        if let (Some(g), Some(_)) = (grad.as_deref_mut(), &fwd.span_probs) {
            let inputs = span_inputs(&fwd.enc);
            for t in 0..len {
                if d_span_logits[t].iter().any(|&v| v != 0.0) {
                    let mut dx = vec![0.0; enc_w];
                    self.span.backward(&inputs[t], &d_span_logits[t], &mut g.span, Some(&mut dx));
                    add_rows(&mut d_enc, t, &dx);
                }
            }
        }

        if let Some(scale) = obj.srl {
            let (spans, heads) = Self::aux_blocks(ex, &fwd);
            let inputs = srl_inputs(&fwd.enc, ex.predicate_index, spans.as_deref(), heads.as_deref());
            for (t, x) in inputs.iter().enumerate() {
                if x.len() != self.srl.in_dim() {
                    return Err(Error::shape(format!(
                        "SRL tagger expects {} inputs, got {}",
                        self.srl.in_dim(),
                        x.len()
                    )));
                }
                let p = softmax(&self.srl.forward(x));
                let gold = ex.gold_srl_tags[t].index();
                sums.srl += cross_entropy(&p, gold);
                if let Some(g) = grad.as_deref_mut() {
                    let mut dx = vec![0.0; x.len()];
                    self.srl.backward(x, &ce_grad(&p, gold, scale), &mut g.srl, Some(&mut dx));
                    add_rows(&mut d_enc, t, &dx[..enc_w]);
                }
            }
        }

        if let Some(scales) = &obj.sprl {
            for pair in &ex.pairs {
                let head = Self::pair_head(pair, &fwd);
                let x = self.pair_vector(ex, pair, &fwd.enc, head)?;
                let mut d_pair = vec![0.0; x.len()];
                for (k, label) in pair.labels.iter().enumerate() {
                    let Some(label) = *label else { continue };
                    let clf = &self.sprl.classifiers[k];
                    let p = softmax(&clf.forward(&x));
                    sums.sprl[k] += cross_entropy(&p, usize::from(label));
                    if let Some(g) = grad.as_deref_mut() {
                        let dy = ce_grad(&p, usize::from(label), scales[k]);
                        clf.backward(&x, &dy, &mut g.sprl.classifiers[k], Some(&mut d_pair));
                    }
                }
                if grad.is_some() {
                    add_rows(&mut d_enc, ex.predicate_index, &d_pair[..enc_w]);
                    add_rows(&mut d_enc, head, &d_pair[enc_w..2 * enc_w]);
                }
            }
        }

        if let Some(g) = grad {
            self.encoder.backward(&fwd.enc, &d_enc, &mut g.encoder);
        }
        Ok(sums)
    }

    /// Deterministic eval-mode predictions from every component.
    pub fn predict(&self, ex: &Example) -> Result<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = self.encoder.encode(&ex.features, Mode::Eval, &mut rng)?;
        let span_probs = self.span_probs(&enc);
        let span_tags: Vec<SpanTag> = span_probs.iter().map(|p| SpanTag::from_index(argmax(p))).collect();
        let head_run = |encoding: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
            Ok(head_inputs(&enc, &encoding)?
                .iter()
                .map(|x| softmax(&self.head.forward(x)))
                .collect())
        };
        let head_probs = head_run(span_tags.iter().map(|t| one_hot(t.index(), SpanTag::COUNT)).collect())?;
        let head_gold = head_run(
            ex.gold_span_tags
                .iter()
                .map(|t| one_hot(t.index(), SpanTag::COUNT))
                .collect(),
        )?;
        let head_tags: Vec<HeadTag> = head_probs.iter().map(|p| HeadTag::from_index(argmax(p))).collect();
        let fwd = Forward {
            enc,
            span_probs: Some(span_probs.clone()),
            head_in: None,
            head_soft: false,
            head_probs: Some(head_probs.clone()),
        };
        let (aux_s, aux_h) = Self::aux_blocks(ex, &fwd);
        let srl_in = srl_inputs(&fwd.enc, ex.predicate_index, aux_s.as_deref(), aux_h.as_deref());
        if srl_in.first().is_some_and(|x| x.len() != self.srl.in_dim()) {
            return Err(Error::shape("SRL auxiliary features do not match the model"));
        }
        let srl_probs: Vec<Vec<f64>> = srl_in.iter().map(|x| softmax(&self.srl.forward(x))).collect();
        let srl_tags = srl_probs.iter().map(|p| SrlTag::from_index(argmax(p))).collect();
        let mut pairs = Vec::with_capacity(ex.pairs.len());
        for pair in &ex.pairs {
            let head = Self::pair_head(pair, &fwd);
            let x = self.pair_vector(ex, pair, &fwd.enc, head)?;
            pairs.push(PairPrediction {
                span_id: pair.span_id,
                span: pair.gold_span,
                head_index: head,
                predictions: self.sprl.classify(&x)?,
                labels: pair.labels,
            });
        }
        Ok(Prediction {
            span_probs,
            span_tags,
            head_probs,
            head_tags,
            head_tags_gold_spans: head_gold.iter().map(|p| HeadTag::from_index(argmax(p))).collect(),
            srl_probs,
            srl_tags,
            pairs,
        })
    }
}

/// Seed for the dropout stream of one example in one epoch.
pub fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut base = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_d20_u64);
    base.set_stream(((epoch as u64) << 32) | index as u64);
    let s: u64 = base.gen();
    ChaCha8Rng::seed_from_u64(s)
}
