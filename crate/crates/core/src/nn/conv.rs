//! Strided conv / transposed conv via im2col + matmul.
//!
//! A transposed conv is the adjoint of a conv with the same geometry, so
//! both layers share the `im2col`/`col2im` pair: conv runs
//! im2col-then-matmul forward and col2im backward; transposed conv runs
//! them the other way around.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayView2};
use rand::Rng;

use super::{init_normal, view2, view2_mut, ParamAlloc};

pub(crate) fn conv_out_side(side: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (side + 2 * padding - kernel) / stride + 1
}

/// Patch matrix of shape `(channels * k * k, out_h * out_w)`; out-of-bounds
/// pixels read as 0.
fn im2col(
    x: &Array3<f64>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Array2<f64> {
    let (channels, height, width) = x.dim();
    let mut cols = Array2::zeros((channels * kernel * kernel, out_h * out_w));
    for c in 0..channels {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for ox in 0..out_w {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        cols[(row, oy * out_w + ox)] = x[(c, iy as usize, ix as usize)];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image.
fn col2im(
    cols: &ArrayView2<f64>,
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
) -> Array3<f64> {
    let mut x = Array3::zeros((channels, height, width));
    for c in 0..channels {
        for ky in 0..kernel {
            for kx in 0..kernel {
                let row = (c * kernel + ky) * kernel + kx;
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - padding as isize;
                    if iy < 0 || iy >= height as isize {
                        continue;
                    }
                    for ox in 0..out_w {
                        let ix = (ox * stride + kx) as isize - padding as isize;
                        if ix < 0 || ix >= width as isize {
                            continue;
                        }
                        x[(c, iy as usize, ix as usize)] += cols[(row, oy * out_w + ox)];
                    }
                }
            }
        }
    }
    x
}

/// Strided 2-D convolution. Weights `(out_ch, in_ch * k * k)`, bias
/// `(out_ch)`.
#[derive(Debug, Clone, Copy)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_side: usize,
    pub out_side: usize,
    w_off: usize,
    b_off: usize,
}

impl Conv2d {
    pub fn new(
        alloc: &mut ParamAlloc,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_side: usize,
    ) -> Self {
        let w_off = alloc.alloc(out_ch * in_ch * kernel * kernel);
        let b_off = alloc.alloc(out_ch);
        Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            in_side,
            out_side: conv_out_side(in_side, kernel, stride, padding),
            w_off,
            b_off,
        }
    }

    pub fn init<R: Rng>(&self, params: &mut [f64], gain: f64, rng: &mut R) {
        let fan_in = (self.in_ch * self.kernel * self.kernel) as f64;
        init_normal(
            &mut params[self.w_off..self.w_off + self.out_ch * self.in_ch * self.kernel * self.kernel],
            (gain / fan_in).sqrt(),
            rng,
        );
        params[self.b_off..self.b_off + self.out_ch].fill(0.0);
    }

    /// Returns the output and the patch matrix cached for backward.
    pub fn forward(&self, params: &[f64], x: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
        debug_assert_eq!(x.dim(), (self.in_ch, self.in_side, self.in_side));
        let (oh, ow) = (self.out_side, self.out_side);
        let cols = im2col(x, self.kernel, self.stride, self.padding, oh, ow);
        let w = view2(params, self.w_off, self.out_ch, self.in_ch * self.kernel * self.kernel);
        let mut y_mat = Array2::zeros((self.out_ch, oh * ow));
        general_mat_mul(1.0, &w, &cols.view(), 0.0, &mut y_mat);
        for (c, mut row) in y_mat.rows_mut().into_iter().enumerate() {
            let b = params[self.b_off + c];
            row.mapv_inplace(|v| v + b);
        }
        let y = y_mat.into_shape_with_order((self.out_ch, oh, ow)).expect("conv reshape");
        (y, cols)
    }

    /// Accumulates `dW`, `db` into `grads`; returns `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        cols: &Array2<f64>,
        dy: &Array3<f64>,
    ) -> Array3<f64> {
        let (oh, ow) = (self.out_side, self.out_side);
        let dy_mat = dy.view().into_shape_with_order((self.out_ch, oh * ow)).expect("dy reshape");
        {
            let mut dw = view2_mut(grads, self.w_off, self.out_ch, self.in_ch * self.kernel * self.kernel);
            general_mat_mul(1.0, &dy_mat, &cols.t(), 1.0, &mut dw);
        }
        for (c, row) in dy_mat.rows().into_iter().enumerate() {
            grads[self.b_off + c] += row.sum();
        }
        let w = view2(params, self.w_off, self.out_ch, self.in_ch * self.kernel * self.kernel);
        let mut dcols = Array2::zeros((self.in_ch * self.kernel * self.kernel, oh * ow));
        general_mat_mul(1.0, &w.t(), &dy_mat, 0.0, &mut dcols);
        col2im(
            &dcols.view(),
            self.in_ch,
            self.in_side,
            self.in_side,
            self.kernel,
            self.stride,
            self.padding,
            oh,
            ow,
        )
    }
}

/// Strided 2-D transposed convolution. Weights `(in_ch, out_ch * k * k)`,
/// bias `(out_ch)`. Output side is `(in - 1) * stride - 2 * padding + k`.
#[derive(Debug, Clone, Copy)]
pub struct ConvTranspose2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_side: usize,
    pub out_side: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvTranspose2d {
    pub fn new(
        alloc: &mut ParamAlloc,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_side: usize,
    ) -> Self {
        let w_off = alloc.alloc(in_ch * out_ch * kernel * kernel);
        let b_off = alloc.alloc(out_ch);
        ConvTranspose2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            in_side,
            out_side: (in_side - 1) * stride + kernel - 2 * padding,
            w_off,
            b_off,
        }
    }

    pub fn init<R: Rng>(&self, params: &mut [f64], gain: f64, rng: &mut R) {
        let fan_in = (self.in_ch * self.kernel * self.kernel) as f64;
        init_normal(
            &mut params[self.w_off..self.w_off + self.in_ch * self.out_ch * self.kernel * self.kernel],
            (gain / fan_in).sqrt(),
            rng,
        );
        params[self.b_off..self.b_off + self.out_ch].fill(0.0);
    }

    pub fn forward(&self, params: &[f64], x: &Array3<f64>) -> Array3<f64> {
        debug_assert_eq!(x.dim(), (self.in_ch, self.in_side, self.in_side));
        let n_in = self.in_side * self.in_side;
        let x_mat = x.view().into_shape_with_order((self.in_ch, n_in)).expect("x reshape");
        let w = view2(params, self.w_off, self.in_ch, self.out_ch * self.kernel * self.kernel);
        let mut cols = Array2::zeros((self.out_ch * self.kernel * self.kernel, n_in));
        general_mat_mul(1.0, &w.t(), &x_mat, 0.0, &mut cols);
        let mut y = col2im(
            &cols.view(),
            self.out_ch,
            self.out_side,
            self.out_side,
            self.kernel,
            self.stride,
            self.padding,
            self.in_side,
            self.in_side,
        );
        for (c, mut plane) in y.outer_iter_mut().enumerate() {
            let b = params[self.b_off + c];
            plane.mapv_inplace(|v| v + b);
        }
        y
    }

    /// Accumulates `dW`, `db` into `grads`; returns `dx`.
    pub fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        x: &Array3<f64>,
        dy: &Array3<f64>,
    ) -> Array3<f64> {
        let n_in = self.in_side * self.in_side;
        let dcols = im2col(dy, self.kernel, self.stride, self.padding, self.in_side, self.in_side);
        let x_mat = x.view().into_shape_with_order((self.in_ch, n_in)).expect("x reshape");
        {
            let mut dw = view2_mut(grads, self.w_off, self.in_ch, self.out_ch * self.kernel * self.kernel);
            general_mat_mul(1.0, &x_mat, &dcols.t(), 1.0, &mut dw);
        }
        for (c, plane) in dy.outer_iter().enumerate() {
            grads[self.b_off + c] += plane.sum();
        }
        let w = view2(params, self.w_off, self.in_ch, self.out_ch * self.kernel * self.kernel);
        let mut dx_mat = Array2::zeros((self.in_ch, n_in));
        general_mat_mul(1.0, &w, &dcols.view(), 0.0, &mut dx_mat);
        dx_mat
            .into_shape_with_order((self.in_ch, self.in_side, self.in_side))
            .expect("dx reshape")
    }
}
