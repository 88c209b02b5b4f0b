//! Minimal neural-network stack: dense, conv and transposed-conv layers
//! over a single flat `f64` parameter vector, with hand-written backprop.
//!
//! Layers are descriptors holding offsets into the flat vector; `forward`
//! reads parameter views, `backward` accumulates into a gradient buffer of
//! the same layout. The flat layout keeps Adam, finite-difference checks,
//! checkpointing and parameter hashing trivial.

mod adam;
mod conv;
mod dense;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2d, ConvTranspose2d};
pub use dense::Dense;

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Hands out disjoint offsets in the flat parameter vector.
#[derive(Debug, Default)]
pub struct ParamAlloc {
    next: usize,
}

impl ParamAlloc {
    pub fn new() -> Self {
        ParamAlloc { next: 0 }
    }

    pub fn alloc(&mut self, len: usize) -> usize {
        let off = self.next;
        self.next += len;
        off
    }

    /// Total parameters allocated so far.
    pub fn len(&self) -> usize {
        self.next
    }

    pub fn is_empty(&self) -> bool {
        self.next == 0
    }
}

pub(crate) fn view2(params: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &params[off..off + rows * cols]).expect("param view")
}

pub(crate) fn view2_mut(
    params: &mut [f64],
    off: usize,
    rows: usize,
    cols: usize,
) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut params[off..off + rows * cols]).expect("param view")
}

/// Fill `slice` with N(0, std^2) draws.
pub(crate) fn init_normal<R: Rng>(slice: &mut [f64], std: f64, rng: &mut R) {
    if std == 0.0 {
        slice.fill(0.0);
        return;
    }
    let dist = Normal::new(0.0, std).expect("valid std");
    for v in slice {
        *v = dist.sample(rng);
    }
}

/// ReLU forward in place, returning the activation mask implicitly via the
/// output (backward gates on `y > 0`).
pub(crate) fn relu_inplace(xs: &mut [f64]) {
    for v in xs {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Gate `dy` by the ReLU output `y` in place.
pub(crate) fn relu_backward_inplace(dy: &mut [f64], y: &[f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
