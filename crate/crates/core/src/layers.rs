//! Parameter containers shared by every component of the model.

use rand::Rng;

use crate::linalg::Matrix;

/// Affine map `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    pub fn new<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        Linear {
            w: Matrix::uniform_fan_in(out_dim, in_dim, rng),
            b: Matrix::zeros(out_dim, 1),
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            w: Matrix::zeros(out_dim, in_dim),
            b: Matrix::zeros(out_dim, 1),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.data.clone();
        self.w.matvec_acc(x, &mut y);
        y
    }

    /// Accumulate parameter gradients into `grad` and, if given, input gradients into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: Option<&mut [f64]>) {
        grad.w.outer_acc(dy, x);
        for (g, d) in grad.b.data.iter_mut().zip(dy) {
            *g += d;
        }
        if let Some(dx) = dx {
            self.w.t_matvec_acc(dy, dx);
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }
}
