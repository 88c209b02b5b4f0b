//! Fully connected layer over the flat parameter vector.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;

use super::{init_normal, view2, view2_mut, ParamAlloc};

/// `y = W x + b`, with `W` row-major `(out_dim, in_dim)` at `w_off` and
/// `b` at `b_off`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    w_off: usize,
    b_off: usize,
}

impl Dense {
    pub fn new(alloc: &mut ParamAlloc, in_dim: usize, out_dim: usize) -> Self {
        let w_off = alloc.alloc(in_dim * out_dim);
        let b_off = alloc.alloc(out_dim);
        Dense { in_dim, out_dim, w_off, b_off }
    }

    /// He-style init: `W ~ N(0, gain / in_dim)`, `b = 0`. `gain = 0`
    /// zeroes the whole layer.
    pub fn init<R: Rng>(&self, params: &mut [f64], gain: f64, rng: &mut R) {
        let std = if gain == 0.0 { 0.0 } else { (gain / self.in_dim as f64).sqrt() };
        init_normal(&mut params[self.w_off..self.w_off + self.in_dim * self.out_dim], std, rng);
        params[self.b_off..self.b_off + self.out_dim].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = self.weights(params);
        let mut y = params[self.b_off..self.b_off + self.out_dim].to_vec();
        for (o, row) in y.iter_mut().zip(w.rows()) {
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            *o += acc;
        }
        y
    }

    /// Accumulate `dW`, `db` into `grads` and return `dx`.
    pub fn backward(&self, params: &[f64], grads: &mut [f64], x: &[f64], dy: &[f64]) -> Vec<f64> {
        debug_assert_eq!(dy.len(), self.out_dim);
        // dW += dy ⊗ x
        {
            let dy_col = ArrayView2::from_shape((self.out_dim, 1), dy).expect("dy view");
            let x_row = ArrayView2::from_shape((1, self.in_dim), x).expect("x view");
            let mut dw = view2_mut(grads, self.w_off, self.out_dim, self.in_dim);
            general_mat_mul(1.0, &dy_col, &x_row, 1.0, &mut dw);
        }
        for (g, d) in grads[self.b_off..self.b_off + self.out_dim].iter_mut().zip(dy) {
            *g += d;
        }
        // dx = W^T dy
        let w = self.weights(params);
        let mut dx = vec![0.0; self.in_dim];
        for (row, &d) in w.rows().into_iter().zip(dy) {
            for (out, wv) in dx.iter_mut().zip(row) {
                *out += wv * d;
            }
        }
        dx
    }

    fn weights<'a>(&self, params: &'a [f64]) -> ArrayView2<'a, f64> {
        view2(params, self.w_off, self.out_dim, self.in_dim)
    }

    #[allow(dead_code)]
    pub fn weights_mut<'a>(&self, params: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        view2_mut(params, self.w_off, self.out_dim, self.in_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_matches_hand_computation() {
        let mut alloc = ParamAlloc::new();
        let layer = Dense::new(&mut alloc, 2, 2);
        // W = [[1, 2], [3, 4]], b = [0.5, -0.5]
        let params = vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5];
        let y = layer.forward(&params, &[1.0, -1.0]);
        assert_eq!(y, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut alloc = ParamAlloc::new();
        let layer = Dense::new(&mut alloc, 3, 2);
        let mut params = vec![0.0; alloc.len()];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        layer.init(&mut params, 2.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        // Scalar objective: sum of outputs squared.
        let f = |p: &[f64]| -> f64 { layer.forward(p, &x).iter().map(|v| v * v).sum() };
        let y = layer.forward(&params, &x);
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut grads = vec![0.0; params.len()];
        layer.backward(&params, &mut grads, &x, &dy);
        let eps = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += eps;
            let up = f(&p);
            p[i] -= 2.0 * eps;
            let dn = f(&p);
            let fd = (up - dn) / (2.0 * eps);
            assert!((fd - grads[i]).abs() < 1e-6, "param {i}: fd {fd} vs {g}", g = grads[i]);
        }
    }
}
