//! Shared bidirectional recurrent encoder.
//!
//! Per-token pipeline: recurrent layers (forward ⊕ backward) → dropout (training only) →
//! optional linear projection → ReLU. Initialization draws every weight matrix from
//! `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and sets every bias to zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Linear;
use crate::linalg::{sigmoid, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    LstmLike,
    GruLike,
    /// No recurrence: token features pass straight through (logistic-regression probes).
    Identity,
}

impl CellKind {
    fn gates(self) -> usize {
        match self {
            CellKind::LstmLike => 4,
            CellKind::GruLike => 3,
            CellKind::Identity => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub cell_kind: CellKind,
    pub input_dim: usize,
    /// Width of each direction.
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout_rate: f64,
    pub use_post_projection: bool,
}

impl EncoderConfig {
    /// BiLSTM used with static embeddings: linear projection before the ReLU.
    pub fn lstm_default(input_dim: usize) -> Self {
        EncoderConfig {
            cell_kind: CellKind::LstmLike,
            input_dim,
            hidden_dim: 128,
            num_layers: 1,
            dropout_rate: 0.25,
            use_post_projection: true,
        }
    }

    /// Small BiGRU used with contextual embeddings: no projection.
    pub fn gru_default(input_dim: usize) -> Self {
        EncoderConfig {
            cell_kind: CellKind::GruLike,
            input_dim,
            hidden_dim: 8,
            num_layers: 1,
            dropout_rate: 0.25,
            use_post_projection: false,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.cell_kind {
            CellKind::Identity => self.input_dim,
            _ => 2 * self.hidden_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("encoder input_dim must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.cell_kind != CellKind::Identity && (self.hidden_dim == 0 || self.num_layers == 0) {
            return Err(Error::config("hidden_dim and num_layers must be positive"));
        }
        Ok(())
    }

    /// Closed-form count of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        if self.cell_kind == CellKind::Identity {
            return 0;
        }
        let h = self.hidden_dim;
        let g = self.cell_kind.gates();
        let biases = match self.cell_kind {
            CellKind::GruLike => 2 * g * h,
            _ => g * h,
        };
        let mut total = 0;
        for layer in 0..self.num_layers {
            let input = if layer == 0 { self.input_dim } else { 2 * h };
            total += 2 * (g * h * input + g * h * h + biases);
        }
        if self.use_post_projection {
            total += 2 * h * 2 * h + 2 * h;
        }
        total
    }
}

/// One direction of one recurrent layer.
///
/// Gate row blocks are `[i, f, g, o]` for LSTM cells and `[r, z, n]` for GRU cells. GRU cells
/// keep a separate recurrent bias so the reset gate scales `W_hn h + b_hn`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnCell {
    pub kind: CellKind,
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b_x: Matrix,
    pub b_h: Option<Matrix>,
}

impl RnnCell {
    fn new<R: Rng>(kind: CellKind, input: usize, hidden: usize, rng: &mut R) -> Self {
        let g = kind.gates();
        RnnCell {
            kind,
            w_x: Matrix::uniform_fan_in(g * hidden, input, rng),
            w_h: Matrix::uniform_fan_in(g * hidden, hidden, rng),
            b_x: Matrix::zeros(g * hidden, 1),
            b_h: (kind == CellKind::GruLike).then(|| Matrix::zeros(g * hidden, 1)),
        }
    }

    fn zeros_like(&self) -> Self {
        RnnCell {
            kind: self.kind,
            w_x: Matrix::zeros(self.w_x.rows, self.w_x.cols),
            w_h: Matrix::zeros(self.w_h.rows, self.w_h.cols),
            b_x: Matrix::zeros(self.b_x.rows, 1),
            b_h: self.b_h.as_ref().map(|b| Matrix::zeros(b.rows, 1)),
        }
    }

    fn hidden(&self) -> usize {
        self.w_h.cols
    }

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(format!("{prefix}.w_x"), &self.w_x);
        f(format!("{prefix}.w_h"), &self.w_h);
        f(format!("{prefix}.b_x"), &self.b_x);
        if let Some(b) = &self.b_h {
            f(format!("{prefix}.b_h"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(format!("{prefix}.w_x"), &mut self.w_x);
        f(format!("{prefix}.w_h"), &mut self.w_h);
        f(format!("{prefix}.b_x"), &mut self.b_x);
        if let Some(b) = &mut self.b_h {
            f(format!("{prefix}.b_h"), b);
        }
    }

    /// Run over `inputs` (one row per token) in forward or reverse order.
    fn run(&self, inputs: &Matrix, reverse: bool) -> DirTrace {
        let len = inputs.rows;
        let h = self.hidden();
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let mut hs = vec![vec![0.0; h]];
        let mut cs = vec![vec![0.0; h]];
        let mut gates = Vec::with_capacity(len);
        let mut extra = Vec::with_capacity(len);
        for &t in &order {
            let x = inputs.row(t);
            let h_prev = hs.last().expect("initial state");
            match self.kind {
                CellKind::LstmLike => {
                    let mut z = self.b_x.data.clone();
                    self.w_x.matvec_acc(x, &mut z);
                    self.w_h.matvec_acc(h_prev, &mut z);
                    let c_prev = cs.last().expect("initial state");
                    let mut c = vec![0.0; h];
                    let mut h_new = vec![0.0; h];
                    for k in 0..h {
                        z[k] = sigmoid(z[k]);
                        z[h + k] = sigmoid(z[h + k]);
                        z[2 * h + k] = z[2 * h + k].tanh();
                        z[3 * h + k] = sigmoid(z[3 * h + k]);
                        c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
                        h_new[k] = z[3 * h + k] * c[k].tanh();
                    }
                    gates.push(z);
                    cs.push(c);
                    hs.push(h_new);
                }
                CellKind::GruLike => {
                    let mut gx = self.b_x.data.clone();
                    self.w_x.matvec_acc(x, &mut gx);
                    let mut gh = self.b_h.as_ref().expect("gru recurrent bias").data.clone();
                    self.w_h.matvec_acc(h_prev, &mut gh);
                    let mut a = vec![0.0; 3 * h];
                    let mut h_new = vec![0.0; h];
                    for k in 0..h {
                        let r = sigmoid(gx[k] + gh[k]);
                        let u = sigmoid(gx[h + k] + gh[h + k]);
                        let n = (gx[2 * h + k] + r * gh[2 * h + k]).tanh();
                        a[k] = r;
                        a[h + k] = u;
                        a[2 * h + k] = n;
                        h_new[k] = (1.0 - u) * n + u * h_prev[k];
                    }
                    extra.push(gh[2 * h..].to_vec());
                    gates.push(a);
                    hs.push(h_new);
                }
                CellKind::Identity => unreachable!("identity encoders have no cells"),
            }
        }
        DirTrace {
            reverse,
            order,
            hs,
            cs,
            gates,
            extra,
        }
    }

    /// Backpropagate `d_out` (one row per token, hidden wide) through a trace.
    fn backprop(
        &self,
        inputs: &Matrix,
        trace: &DirTrace,
        d_out: &Matrix,
        grad: &mut RnnCell,
        d_inputs: &mut Matrix,
    ) {
        let h = self.hidden();
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for step in (0..trace.order.len()).rev() {
            let t = trace.order[step];
            let x = inputs.row(t);
            let h_prev = &trace.hs[step];
            let gates = &trace.gates[step];
            let mut dh: Vec<f64> = d_out.row(t).to_vec();
            for (a, b) in dh.iter_mut().zip(&dh_next) {
                *a += b;
            }
            match self.kind {
                CellKind::LstmLike => {
                    let c_prev = &trace.cs[step];
                    let c = &trace.cs[step + 1];
                    let mut dz = vec![0.0; 4 * h];
                    let mut dc_prev = vec![0.0; h];
                    for k in 0..h {
                        let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                        let tc = c[k].tanh();
                        let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
                        dz[k] = dc * g * i * (1.0 - i);
                        dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                        dz[2 * h + k] = dc * i * (1.0 - g * g);
                        dz[3 * h + k] = dh[k] * tc * o * (1.0 - o);
                        dc_prev[k] = dc * f;
                    }
                    grad.w_x.outer_acc(&dz, x);
                    grad.w_h.outer_acc(&dz, h_prev);
                    for (g, d) in grad.b_x.data.iter_mut().zip(&dz) {
                        *g += d;
                    }
                    self.w_x.t_matvec_acc(&dz, d_inputs.row_mut(t));
                    dh_next.iter_mut().for_each(|v| *v = 0.0);
                    self.w_h.t_matvec_acc(&dz, &mut dh_next);
                    dc_next = dc_prev;
                }
                CellKind::GruLike => {
                    let ghn = &trace.extra[step];
                    let mut d_gx = vec![0.0; 3 * h];
                    let mut d_gh = vec![0.0; 3 * h];
                    let mut dh_prev = vec![0.0; h];
                    for k in 0..h {
                        let (r, u, n) = (gates[k], gates[h + k], gates[2 * h + k]);
                        let dn = dh[k] * (1.0 - u);
                        let du = dh[k] * (h_prev[k] - n);
                        dh_prev[k] = dh[k] * u;
                        let da_n = dn * (1.0 - n * n);
                        let dr = da_n * ghn[k];
                        let da_r = dr * r * (1.0 - r);
                        let da_u = du * u * (1.0 - u);
                        d_gx[k] = da_r;
                        d_gx[h + k] = da_u;
                        d_gx[2 * h + k] = da_n;
                        d_gh[k] = da_r;
                        d_gh[h + k] = da_u;
                        d_gh[2 * h + k] = da_n * r;
                    }
                    grad.w_x.outer_acc(&d_gx, x);
                    grad.w_h.outer_acc(&d_gh, h_prev);
                    for (g, d) in grad.b_x.data.iter_mut().zip(&d_gx) {
                        *g += d;
                    }
                    let gb = grad.b_h.as_mut().expect("gru recurrent bias");
                    for (g, d) in gb.data.iter_mut().zip(&d_gh) {
                        *g += d;
                    }
                    self.w_x.t_matvec_acc(&d_gx, d_inputs.row_mut(t));
                    self.w_h.t_matvec_acc(&d_gh, &mut dh_prev);
                    dh_next = dh_prev;
                }
                CellKind::Identity => unreachable!("identity encoders have no cells"),
            }
        }
    }
}

#[derive(Clone, Debug)]
struct DirTrace {
    reverse: bool,
    order: Vec<usize>,
    /// Hidden states in processing order; `hs[0]` is the zero initial state.
    hs: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    gates: Vec<Vec<f64>>,
    extra: Vec<Vec<f64>>,
}

impl DirTrace {
    fn output_at(&self, t: usize) -> &[f64] {
        let step = if self.reverse { self.order.len() - 1 - t } else { t };
        &self.hs[step + 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLayer {
    pub forward: RnnCell,
    pub backward: RnnCell,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layers: Vec<BiLayer>,
    pub projection: Option<Linear>,
}

/// Encoder output for one sentence plus everything needed to backpropagate through it.
#[derive(Clone, Debug)]
pub struct EncodedSentence {
    pub hidden: Matrix,
    pub mode: Mode,
    layer_inputs: Vec<Matrix>,
    traces: Vec<(DirTrace, DirTrace)>,
    dropout_mask: Option<Matrix>,
    dropped: Matrix,
    pre_activation: Matrix,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.hidden.rows
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows == 0
    }

    pub fn width(&self) -> usize {
        self.hidden.cols
    }

    pub fn token(&self, t: usize) -> &[f64] {
        self.hidden.row(t)
    }
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(config, &mut rng)
    }

    pub fn init_with<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::new();
        if config.cell_kind != CellKind::Identity {
            for l in 0..config.num_layers {
                let input = if l == 0 {
                    config.input_dim
                } else {
                    2 * config.hidden_dim
                };
                layers.push(BiLayer {
                    forward: RnnCell::new(config.cell_kind, input, config.hidden_dim, rng),
                    backward: RnnCell::new(config.cell_kind, input, config.hidden_dim, rng),
                });
            }
        }
        let projection = (config.use_post_projection && config.cell_kind != CellKind::Identity)
            .then(|| Linear::new(2 * config.hidden_dim, 2 * config.hidden_dim, rng));
        Ok(EncoderParams {
            config: config.clone(),
            layers,
            projection,
        })
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| BiLayer {
                    forward: l.forward.zeros_like(),
                    backward: l.backward.zeros_like(),
                })
                .collect(),
            projection: self
                .projection
                .as_ref()
                .map(|p| Linear::zeros(p.out_dim(), p.in_dim())),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward.visit(&format!("{prefix}.l{i}.fwd"), f);
            layer.backward.visit(&format!("{prefix}.l{i}.bwd"), f);
        }
        if let Some(p) = &self.projection {
            p.visit(&format!("{prefix}.proj"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.forward.visit_mut(&format!("{prefix}.l{i}.fwd"), f);
            layer.backward.visit_mut(&format!("{prefix}.l{i}.bwd"), f);
        }
        if let Some(p) = &mut self.projection {
            p.visit_mut(&format!("{prefix}.proj"), f);
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, m| n += m.len());
        n
    }

    /// Encode one sentence. `rng` drives the dropout mask and is untouched in eval mode.
    pub fn encode<R: Rng>(&self, features: &Matrix, mode: Mode, rng: &mut R) -> Result<EncodedSentence> {
        if features.cols != self.config.input_dim {
            return Err(Error::shape(format!(
                "encoder expects {} input features, got {}",
                self.config.input_dim, features.cols
            )));
        }
        if features.rows == 0 {
            return Err(Error::shape("cannot encode an empty sentence"));
        }
        let len = features.rows;
        if self.config.cell_kind == CellKind::Identity {
            return Ok(EncodedSentence {
                hidden: features.clone(),
                mode,
                layer_inputs: Vec::new(),
                traces: Vec::new(),
                dropout_mask: None,
                dropped: features.clone(),
                pre_activation: features.clone(),
            });
        }
        let h = self.config.hidden_dim;
        let mut layer_inputs = vec![features.clone()];
        let mut traces = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = layer_inputs.last().expect("layer input");
            let fwd = layer.forward.run(input, false);
            let bwd = layer.backward.run(input, true);
            let mut out = Matrix::zeros(len, 2 * h);
            for t in 0..len {
                let row = out.row_mut(t);
                row[..h].copy_from_slice(fwd.output_at(t));
                row[h..].copy_from_slice(bwd.output_at(t));
            }
            traces.push((fwd, bwd));
            layer_inputs.push(out);
        }
        let recurrent = layer_inputs.pop().expect("final layer output");

        let p = self.config.dropout_rate;
        let (dropout_mask, dropped) = if mode == Mode::Train && p > 0.0 {
            let keep = 1.0 / (1.0 - p);
            let mut mask = Matrix::zeros(len, 2 * h);
            for m in mask.data.iter_mut() {
                *m = if rng.gen::<f64>() < p { 0.0 } else { keep };
            }
            let mut d = recurrent.clone();
            for (v, m) in d.data.iter_mut().zip(&mask.data) {
                *v *= m;
            }
            (Some(mask), d)
        } else {
            (None, recurrent)
        };

        let pre_activation = match &self.projection {
            Some(proj) => {
                let mut m = Matrix::zeros(len, proj.out_dim());
                for t in 0..len {
                    m.row_mut(t).copy_from_slice(&proj.forward(dropped.row(t)));
                }
                m
            }
            None => dropped.clone(),
        };
        let mut hidden = pre_activation.clone();
        hidden.data.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(EncodedSentence {
            hidden,
            mode,
            layer_inputs,
            traces,
            dropout_mask,
            dropped,
            pre_activation,
        })
    }

    /// Accumulate parameter gradients for `d_hidden` (same shape as the encoder output).
    pub fn backward(&self, enc: &EncodedSentence, d_hidden: &Matrix, grad: &mut EncoderParams) {
        if self.config.cell_kind == CellKind::Identity {
            return;
        }
        let len = enc.len();
        let mut d_pre = d_hidden.clone();
        for (d, &z) in d_pre.data.iter_mut().zip(&enc.pre_activation.data) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }
        let mut d_dropped = match (&self.projection, &mut grad.projection) {
            (Some(proj), Some(gproj)) => {
                let mut dd = Matrix::zeros(len, proj.in_dim());
                for t in 0..len {
                    proj.backward(enc.dropped.row(t), d_pre.row(t), gproj, Some(dd.row_mut(t)));
                }
                dd
            }
            _ => d_pre,
        };
        if let Some(mask) = &enc.dropout_mask {
            for (d, m) in d_dropped.data.iter_mut().zip(&mask.data) {
                *d *= m;
            }
        }
        let h = self.config.hidden_dim;
        let mut d_out = d_dropped;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &enc.layer_inputs[l];
            let (fwd_trace, bwd_trace) = &enc.traces[l];
            let mut d_fwd = Matrix::zeros(len, h);
            let mut d_bwd = Matrix::zeros(len, h);
            for t in 0..len {
                d_fwd.row_mut(t).copy_from_slice(&d_out.row(t)[..h]);
                d_bwd.row_mut(t).copy_from_slice(&d_out.row(t)[h..]);
            }
            let mut d_input = Matrix::zeros(len, input.cols);
            let g = &mut grad.layers[l];
            layer.forward.backprop(input, fwd_trace, &d_fwd, &mut g.forward, &mut d_input);
            layer.backward.backprop(input, bwd_trace, &d_bwd, &mut g.backward, &mut d_input);
            d_out = d_input;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(len: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Matrix::zeros(len, dim);
        m.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        m
    }

    fn config(kind: CellKind, input: usize, hidden: usize) -> EncoderConfig {
        EncoderConfig {
            cell_kind: kind,
            input_dim: input,
            hidden_dim: hidden,
            num_layers: 1,
            dropout_rate: 0.0,
            use_post_projection: false,
        }
    }

    #[test]
    fn single_token_shape() {
        for kind in [CellKind::LstmLike, CellKind::GruLike] {
            let enc = EncoderParams::init(&config(kind, 5, 3), 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let out = enc.encode(&features(1, 5, 2), Mode::Eval, &mut rng).unwrap();
            assert_eq!(out.hidden.shape(), (1, 6));
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let enc = EncoderParams::init(&config(CellKind::GruLike, 5, 3), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            enc.encode(&features(2, 4, 2), Mode::Eval, &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn eval_is_deterministic_and_matches_train_without_dropout() {
        let mut cfg = config(CellKind::LstmLike, 4, 3);
        cfg.use_post_projection = true;
        let enc = EncoderParams::init(&cfg, 9).unwrap();
        let x = features(5, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = enc.encode(&x, Mode::Eval, &mut rng).unwrap();
        let b = enc.encode(&x, Mode::Eval, &mut rng).unwrap();
        let c = enc.encode(&x, Mode::Train, &mut rng).unwrap();
        assert_eq!(a.hidden, b.hidden);
        assert_eq!(a.hidden, c.hidden);
    }

    #[test]
    fn dropout_only_in_training() {
        let mut cfg = config(CellKind::GruLike, 4, 6);
        cfg.dropout_rate = 0.5;
        let enc = EncoderParams::init(&cfg, 9).unwrap();
        let x = features(6, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = enc.encode(&x, Mode::Eval, &mut rng).unwrap();
        let b = enc.encode(&x, Mode::Train, &mut rng).unwrap();
        assert_ne!(a.hidden, b.hidden);
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = config(CellKind::GruLike, 7, 4);
        assert_eq!(EncoderParams::init(&cfg, 5).unwrap(), EncoderParams::init(&cfg, 5).unwrap());
        assert_ne!(EncoderParams::init(&cfg, 5).unwrap(), EncoderParams::init(&cfg, 6).unwrap());
    }

    #[test]
    fn gru_parameter_count_matches_hand_count() {
        let cfg = EncoderConfig::gru_default(770);
        // per direction: three gates, each with input weights, recurrent weights and two biases
        let per_gate = 770 * 8 + 8 * 8 + 8 + 8;
        let hand = 2 * 3 * per_gate;
        assert_eq!(hand, 37_440);
        assert_eq!(cfg.parameter_count(), hand);
        assert_eq!(EncoderParams::init(&cfg, 0).unwrap().parameter_count(), hand);
    }

    #[test]
    fn lstm_parameter_count_matches_tensors() {
        let mut cfg = EncoderConfig::lstm_default(12);
        cfg.hidden_dim = 5;
        cfg.num_layers = 2;
        assert_eq!(
            EncoderParams::init(&cfg, 0).unwrap().parameter_count(),
            cfg.parameter_count()
        );
    }

    #[test]
    fn reversal_swaps_directions() {
        for kind in [CellKind::LstmLike, CellKind::GruLike] {
            let cfg = config(kind, 3, 2);
            let enc = EncoderParams::init(&cfg, 4).unwrap();
            let mut swapped = enc.clone();
            let l = &mut swapped.layers[0];
            std::mem::swap(&mut l.forward, &mut l.backward);
            let x = features(4, 3, 8);
            let mut rev = x.clone();
            for t in 0..4 {
                rev.row_mut(t).copy_from_slice(x.row(3 - t));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let a = enc.encode(&x, Mode::Eval, &mut rng).unwrap();
            let b = swapped.encode(&rev, Mode::Eval, &mut rng).unwrap();
            for t in 0..4 {
                let (ra, rb) = (a.token(3 - t), b.token(t));
                assert_eq!(&ra[..2], &rb[2..]);
                assert_eq!(&ra[2..], &rb[..2]);
            }
        }
    }

    fn fd_check(cfg: EncoderConfig) {
        let enc = EncoderParams::init(&cfg, 11).unwrap();
        let x = features(3, cfg.input_dim, 12);
        let weights = features(3, cfg.output_dim(), 13);
        let loss = |p: &EncoderParams| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let out = p.encode(&x, Mode::Train, &mut rng).unwrap();
            out.hidden
                .data
                .iter()
                .zip(&weights.data)
                .map(|(a, b)| a * b + 0.5 * a * a)
                .sum::<f64>()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let out = enc.encode(&x, Mode::Train, &mut rng).unwrap();
        let mut d = weights.clone();
        for (g, a) in d.data.iter_mut().zip(&out.hidden.data) {
            *g += a;
        }
        let mut grad = enc.zeros_like();
        enc.backward(&out, &d, &mut grad);

        let mut analytic = Vec::new();
        grad.visit("enc", &mut |name, m| analytic.push((name, m.data.clone())));
        let eps = 1e-6;
        for (k, (name, values)) in analytic.iter().enumerate() {
            for (j, &a) in values.iter().enumerate() {
                let mut plus = enc.clone();
                let mut minus = enc.clone();
                let mut idx = 0;
                plus.visit_mut("enc", &mut |_, m| {
                    if idx == k {
                        m.data[j] += eps;
                    }
                    idx += 1;
                });
                idx = 0;
                minus.visit_mut("enc", &mut |_, m| {
                    if idx == k {
                        m.data[j] -= eps;
                    }
                    idx += 1;
                });
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let scale = a.abs().max(numeric.abs());
                let err = if scale > 1e-7 { (a - numeric).abs() / scale } else { (a - numeric).abs() };
                assert!(err < 1e-4, "{name}[{j}]: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn finite_difference_lstm() {
        let mut cfg = config(CellKind::LstmLike, 3, 2);
        cfg.use_post_projection = true;
        cfg.dropout_rate = 0.3;
        fd_check(cfg);
    }

    #[test]
    fn finite_difference_gru_two_layers() {
        let mut cfg = config(CellKind::GruLike, 3, 2);
        cfg.num_layers = 2;
        fd_check(cfg);
    }
}
