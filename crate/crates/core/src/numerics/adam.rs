use crate::error::{shape_mismatch, Result};

use super::Matrix;

/// Bias-corrected Adam with classic L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    first_moment: Matrix,
    second_moment: Matrix,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Fresh state for a variable of the given shape, with β1 = 0.9,
    /// β2 = 0.999 and ε = 1e-8.
    pub fn new(shape: (usize, usize), learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            first_moment: Matrix::zeros(shape.0, shape.1),
            second_moment: Matrix::zeros(shape.0, shape.1),
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.second_moment
    }

    /// Applies one update to `variable` in place.
    pub fn step(&mut self, variable: &mut Matrix, gradient: &Matrix) -> Result<()> {
        let shape = self.first_moment.shape();
        if variable.shape() != shape || gradient.shape() != shape {
            return Err(shape_mismatch(
                "adam_step",
                format!("{shape:?}"),
                format!("{:?} / {:?}", variable.shape(), gradient.shape()),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let m = self.first_moment.as_mut_slice();
        let v = self.second_moment.as_mut_slice();
        for (idx, (x, &g)) in variable
            .as_mut_slice()
            .iter_mut()
            .zip(gradient.as_slice())
            .enumerate()
        {
            let g = g + self.weight_decay * *x;
            m[idx] = self.beta1 * m[idx] + (1.0 - self.beta1) * g;
            v[idx] = self.beta2 * v[idx] + (1.0 - self.beta2) * g * g;
            let m_hat = m[idx] / bias1;
            let v_hat = v[idx] / bias2;
            *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
