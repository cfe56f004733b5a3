//! Forward and backward passes for each layer type, on NCHW tensors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// (batch, channels, height, width)
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[i * l..(i + 1) * l]
    }
}

const K: usize = 3;
/// Target column count of one im2col band, so the band stays in cache.
const BAND_COLS: usize = 256;

fn band_rows(w: usize) -> usize {
    (BAND_COLS / w).max(1)
}

/// im2col for output rows `y0..y1`:
/// `col[(c·9 + ky·3 + kx), (y−y0)·w + x] = input[c, y+ky−1, x+kx−1]`, zero outside.
fn im2col(input: &[f64], c: usize, h: usize, w: usize, (y0, y1): (usize, usize), col: &mut [f64]) {
    let hw = h * w;
    let bw = (y1 - y0) * w;
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * bw..][..bw];
                for y in y0..y1 {
                    let dst = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sy - 1) * w..sy * w];
                    match kx {
                        0 => {
                            dst[0] = 0.0;
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn col2im_add(col: &[f64], c: usize, h: usize, w: usize, (y0, y1): (usize, usize), out: &mut [f64]) {
    let hw = h * w;
    let bw = (y1 - y0) * w;
    for ci in 0..c {
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[(ci * 9 + ky * 3 + kx) * bw..][..bw];
                for y in y0..y1 {
                    let sy = y + ky;
                    if sy < 1 || sy > h {
                        continue;
                    }
                    let dst = &mut out[ci * hw + (sy - 1) * w..][..w];
                    let src = &row[(y - y0) * w..(y - y0 + 1) * w];
                    match kx {
                        0 => add_into(&mut dst[..w - 1], &src[1..]),
                        1 => add_into(dst, src),
                        _ => add_into(&mut dst[1..], &src[..w - 1]),
                    }
                }
            }
        }
    }
}

/// A row-major view with an explicit row stride, optionally transposed.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    stride: usize,
    t: bool,
}

impl<'a> View<'a> {
    fn new(data: &'a [f64], stride: usize, t: bool) -> Self {
        View { data, stride, t }
    }

    /// (row stride, column stride) of the logical matrix.
    fn strides(&self) -> (isize, isize) {
        if self.t {
            (1, self.stride as isize)
        } else {
            (self.stride as isize, 1)
        }
    }

    fn check(&self, rows: usize, cols: usize) {
        let (rs, cs) = self.strides();
        let last = (rows - 1) as isize * rs + (cols - 1) as isize * cs;
        assert!((last as usize) < self.data.len(), "gemm operand out of bounds");
    }
}

/// C (m×n, row stride `ldc`) = A (m×k) · B (k×n) + beta·C.
fn gemm_view(m: usize, k: usize, n: usize, a: View, b: View, c: &mut [f64], ldc: usize, beta: f64) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    a.check(m, k);
    b.check(k, n);
    assert!((m - 1) * ldc + n <= c.len(), "gemm output out of bounds");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the bounds checks above cover every element addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// C = op(A)·op(B) + beta·C for dense row-major slices; `ta`/`tb` transpose.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    let a = View::new(a, if ta { m } else { k }, ta);
    let b = View::new(b, if tb { k } else { n }, tb);
    gemm_view(m, k, n, a, b, c, n, beta);
}

fn bands(h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let step = band_rows(w);
    (0..h).step_by(step).map(move |y0| (y0, (y0 + step).min(h)))
}

/// 3×3 convolution, stride 1, zero "same" padding. `weight` is laid out as
/// (out, in, 3, 3).
pub fn conv2d_forward(input: &Tensor, weight: &[f64], bias: &[f64]) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    let c_out = bias.len();
    if weight.len() != c_out * c * 9 {
        return Err(Error::DimensionMismatch { expected: c_out * c * 9, got: weight.len() });
    }
    let hw = h * w;
    let mut out = Tensor::zeros([n, c_out, h, w]);
    let mut col = vec![0.0; c * 9 * band_rows(w).min(h) * w];
    for i in 0..n {
        let dst = &mut out.data[i * c_out * hw..(i + 1) * c_out * hw];
        for (o, chunk) in dst.chunks_mut(hw).enumerate() {
            chunk.fill(bias[o]);
        }
        for band in bands(h, w) {
            let bw = (band.1 - band.0) * w;
            im2col(input.item(i), c, h, w, band, &mut col);
            let wv = View::new(weight, c * 9, false);
            gemm_view(c_out, c * 9, bw, wv, View::new(&col, bw, false), &mut dst[band.0 * w..], hw, 1.0);
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(input: &Tensor, weight: &[f64], grad_out: &Tensor, need_input: bool) -> ConvGrads {
    let [n, c, h, w] = input.shape;
    let c_out = grad_out.shape[1];
    let hw = h * w;
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; c_out];
    let mut dinput = need_input.then(|| Tensor::zeros(input.shape));
    let band_len = c * 9 * band_rows(w).min(h) * w;
    let mut col = vec![0.0; band_len];
    let mut dcol = vec![0.0; band_len];
    for i in 0..n {
        let g = grad_out.item(i);
        for (o, chunk) in g.chunks(hw).enumerate() {
            db[o] += chunk.iter().sum::<f64>();
        }
        for band in bands(h, w) {
            let bw = (band.1 - band.0) * w;
            let gb = View::new(&g[band.0 * w..], hw, false);
            im2col(input.item(i), c, h, w, band, &mut col);
            // dW (c_out × c·9) += g (c_out × bw) · colᵀ
            gemm_view(c_out, bw, c * 9, gb, View::new(&col, bw, true), &mut dw, c * 9, 1.0);
            if let Some(di) = dinput.as_mut() {
                // dcol (c·9 × bw) = Wᵀ · g
                gemm_view(c * 9, c_out, bw, View::new(weight, c * 9, true), gb, &mut dcol, bw, 0.0);
                let l = c * hw;
                col2im_add(&dcol, c, h, w, band, &mut di.data[i * l..(i + 1) * l]);
            }
        }
    }
    ConvGrads { input: dinput, weight: dw, bias: db }
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    Tensor { shape: input.shape, data: input.data.iter().map(|v| v.max(0.0)).collect() }
}

/// Gradient passes where the forward output was positive.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Tensor {
    Tensor {
        shape: grad_out.shape,
        data: output.data.iter().zip(&grad_out.data).map(|(o, g)| if *o > 0.0 { *g } else { 0.0 }).collect(),
    }
}

/// Non-overlapping k×k max pooling; also returns the flat input index of
/// each maximum (first one on ties).
pub fn maxpool_forward(input: &Tensor, k: usize) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = input.shape;
    if h % k != 0 || w % k != 0 {
        return Err(Error::invalid(format!("max pool {k} does not divide {h}x{w}")));
    }
    let (oh, ow) = (h / k, w / k);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut arg = vec![0; out.data.len()];
    let mut t = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * k * w + ox * k;
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = base + (oy * k + dy) * w + ox * k + dx;
                        if input.data[idx] > input.data[best] {
                            best = idx;
                        }
                    }
                }
                out.data[t] = input.data[best];
                arg[t] = best;
                t += 1;
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool_backward(input_shape: [usize; 4], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut g = Tensor::zeros(input_shape);
    for (a, v) in argmax.iter().zip(&grad_out.data) {
        g.data[*a] += v;
    }
    g
}

/// y = W x + b per row; `weight` is (out, in), input is (n, in, 1, 1).
pub fn linear_forward(input: &Tensor, weight: &[f64], bias: &[f64]) -> Result<Tensor> {
    let n = input.batch();
    let d_in = input.item_len();
    let d_out = bias.len();
    if weight.len() != d_out * d_in {
        return Err(Error::DimensionMismatch { expected: d_out * d_in, got: weight.len() });
    }
    let mut out = Tensor::zeros([n, d_out, 1, 1]);
    for row in out.data.chunks_mut(d_out) {
        row.copy_from_slice(bias);
    }
    gemm(n, d_in, d_out, &input.data, false, weight, true, &mut out.data, 1.0);
    Ok(out)
}

pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn linear_backward(input: &Tensor, weight: &[f64], grad_out: &Tensor) -> LinearGrads {
    let n = input.batch();
    let d_in = input.item_len();
    let d_out = grad_out.item_len();
    let mut dw = vec![0.0; d_out * d_in];
    gemm(d_out, n, d_in, &grad_out.data, true, &input.data, false, &mut dw, 0.0);
    let mut db = vec![0.0; d_out];
    for row in grad_out.data.chunks(d_out) {
        for (b, g) in db.iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut dx = Tensor::zeros(input.shape);
    gemm(n, d_out, d_in, &grad_out.data, false, weight, false, &mut dx.data, 0.0);
    LinearGrads { input: dx, weight: dw, bias: db }
}

/// Inverted dropout: kept units are scaled by `1 / (1 − p)`. `keep` holds
/// one flag per element.
pub fn dropout_forward(input: &Tensor, keep: &[bool], p: f64) -> Tensor {
    let scale = 1.0 / (1.0 - p);
    Tensor {
        shape: input.shape,
        data: input.data.iter().zip(keep).map(|(v, k)| if *k { v * scale } else { 0.0 }).collect(),
    }
}

pub fn dropout_backward(grad_out: &Tensor, keep: &[bool], p: f64) -> Tensor {
    dropout_forward(grad_out, keep, p)
}

/// Softmax over two logits per row, then binary cross-entropy on the PD
/// (index 1) probability averaged over the batch. Returns the loss, the
/// gradient with respect to the logits and the PD probabilities.
pub fn softmax_bce(logits: &Tensor, labels: &[u8]) -> (f64, Tensor, Vec<f64>) {
    let n = logits.batch();
    let mut grad = Tensor::zeros(logits.shape);
    let mut probs = Vec::with_capacity(n);
    let mut loss = 0.0;
    for i in 0..n {
        let z = logits.item(i);
        let diff = z[1] - z[0];
        let p = pd_probability(z[0], z[1]);
        let y = f64::from(labels[i]);
        // log σ(d) and log(1 − σ(d)) without overflow
        let log_p = -softplus(-diff);
        let log_q = -softplus(diff);
        loss -= y * log_p + (1.0 - y) * log_q;
        let g = (p - y) / n as f64;
        grad.data[2 * i] = -g;
        grad.data[2 * i + 1] = g;
        probs.push(p);
    }
    (loss / n as f64, grad, probs)
}

/// Softmax component of the second logit.
pub fn pd_probability(z0: f64, z1: f64) -> f64 {
    let m = z0.max(z1);
    let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
    e1 / (e0 + e1)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor::from_vec([1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let out = conv2d_forward(&input, &w, &[0.5]).unwrap();
        let expected: Vec<f64> = input.data.iter().map(|v| v + 0.5).collect();
        assert_eq!(out.data, expected);
    }

    #[test]
    fn conv_box_kernel_sums_neighbourhood() {
        let input = Tensor::from_vec([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d_forward(&input, &[1.0; 9], &[0.0]).unwrap();
        assert_eq!(out.data, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn maxpool_picks_maximum() {
        let input = Tensor::from_vec([1, 1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 8.0, 0.0]).unwrap();
        let (out, arg) = maxpool_forward(&input, 2).unwrap();
        assert_eq!(out.data, vec![5.0, 8.0]);
        assert_eq!(arg, vec![1, 6]);
        assert!(maxpool_forward(&input, 3).is_err());
    }

    #[test]
    fn symmetric_logits_give_half() {
        let logits = Tensor::zeros([3, 2, 1, 1]);
        let (loss, _, probs) = softmax_bce(&logits, &[0, 1, 1]);
        assert!(probs.iter().all(|p| *p == 0.5));
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = Tensor::from_vec([1, 2, 1, 1], vec![-800.0, 800.0]).unwrap();
        let (loss, g, p) = softmax_bce(&logits, &[0]);
        assert!(loss.is_finite() && loss > 1000.0);
        assert!(g.data.iter().all(|v| v.is_finite()));
        assert_eq!(p[0], 1.0);
    }
}
