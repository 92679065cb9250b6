use crate::model::ModelParams;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let grads = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                if gi == 0.0 && m.data[i] == 0.0 && v.data[i] == 0.0 {
                    continue;
                }
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Rescale `grad` so its global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_gradient(grad: &mut ModelParams, max_norm: Option<f64>) -> f64 {
    let norm = grad.norm();
    if let Some(max) = max_norm {
        if norm > max && norm.is_finite() {
            grad.scale(max / norm);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{CellKind, EncoderConfig};
    use crate::model::ModelSpec;
    use crate::sprl::PairLayout;

    fn params() -> ModelParams {
        let encoder = EncoderConfig {
            cell_kind: CellKind::GruLike,
            input_dim: 3,
            hidden_dim: 2,
            num_layers: 1,
            dropout_rate: 0.0,
            use_post_projection: false,
        };
        ModelParams::init(
            &ModelSpec {
                pair_layout: PairLayout {
                    encoded: 4,
                    span_embedding: None,
                    sentence_embedding: None,
                },
                srl_inputs: Default::default(),
                encoder,
            },
            0,
        )
        .unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.srl.w.data[0] = 0.3;
        g.span.b.data[1] = -2.0;
        let mut opt = Adam::new(&p, 0.01);
        opt.update(&mut p, &g);
        assert!((before.srl.w.data[0] - p.srl.w.data[0] - 0.01).abs() < 1e-9);
        assert!((p.span.b.data[1] - before.span.b.data[1] - 0.01).abs() < 1e-9);
        // untouched tensors are bitwise unchanged
        assert_eq!(p.sprl, before.sprl);
        assert_eq!(p.encoder, before.encoder);
    }

    #[test]
    fn clipping() {
        let p = params();
        let mut g = p.zeros_like();
        g.srl.w.data[0] = 3.0;
        g.srl.w.data[1] = 4.0;
        assert_eq!(clip_gradient(&mut g, Some(1.0)), 5.0);
        assert!((g.norm() - 1.0).abs() < 1e-12);
        let mut g2 = p.zeros_like();
        g2.srl.w.data[0] = 0.5;
        clip_gradient(&mut g2, Some(1.0));
        assert_eq!(g2.srl.w.data[0], 0.5);
    }
}
