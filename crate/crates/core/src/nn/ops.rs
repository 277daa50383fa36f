//! Batched layer kernels on channels-last activations.

use rand::Rng;

use super::arch::Shape;
use super::scalar::{matmul, Scalar};

/// Unfolds every `k x k` receptive field into one row of a
/// `(batch * oh * ow) x (k * k * c)` matrix.
pub fn im2col<S: Scalar>(x: &[S], batch: usize, s: Shape, k: usize) -> Vec<S> {
    let (oh, ow) = (s.height - k + 1, s.width - k + 1);
    let kc = k * s.channels;
    let cols = k * kc;
    let mut out = Vec::with_capacity(batch * oh * ow * cols);
    let item = s.len();
    for b in 0..batch {
        let xb = &x[b * item..(b + 1) * item];
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..k {
                    let src = ((oy + ky) * s.width + ox) * s.channels;
                    out.extend_from_slice(&xb[src..src + kc]);
                }
            }
        }
    }
    out
}

/// Scatter-adds patch gradients back onto the input grid.
pub fn col2im<S: Scalar>(cols: &[S], batch: usize, s: Shape, k: usize) -> Vec<S> {
    let (oh, ow) = (s.height - k + 1, s.width - k + 1);
    let kc = k * s.channels;
    let width = k * kc;
    let item = s.len();
    let mut dx = vec![S::zero(); batch * item];
    for b in 0..batch {
        let db = &mut dx[b * item..(b + 1) * item];
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((b * oh + oy) * ow + ox) * width;
                for ky in 0..k {
                    let dst = ((oy + ky) * s.width + ox) * s.channels;
                    for (d, &g) in db[dst..dst + kc]
                        .iter_mut()
                        .zip(&cols[row + ky * kc..row + (ky + 1) * kc])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    dx
}

/// `out = patches * w + bias`, `w` is `(k*k*c_in) x filters`.
pub fn conv_forward<S: Scalar>(patches: &[S], rows: usize, w: &[S], bias: &[S]) -> Vec<S> {
    let filters = bias.len();
    let kdim = w.len() / filters;
    let mut out = Vec::with_capacity(rows * filters);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    matmul(rows, kdim, filters, patches, false, w, false, &mut out, true);
    out
}

/// Gradients of a linear map `out = x w + b` (dense layers and conv on
/// patches). Accumulates into `dw` / `db`, returns the input gradient when
/// requested.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward<S: Scalar>(
    x: &[S],
    rows: usize,
    w: &[S],
    dout: &[S],
    dw: &mut [S],
    db: &mut [S],
    need_dx: bool,
) -> Option<Vec<S>> {
    let out_dim = db.len();
    let in_dim = w.len() / out_dim;
    matmul(in_dim, rows, out_dim, x, true, dout, false, dw, true);
    for r in 0..rows {
        for (d, &g) in db.iter_mut().zip(&dout[r * out_dim..(r + 1) * out_dim]) {
            *d += g;
        }
    }
    need_dx.then(|| {
        let mut dx = vec![S::zero(); rows * in_dim];
        matmul(rows, out_dim, in_dim, dout, false, w, true, &mut dx, false);
        dx
    })
}

/// Images per im2col block, so patch matrices stay cache-sized.
const CONV_BLOCK: usize = 2;

/// Valid stride-1 convolution of `batch` images of shape `s`, computed in
/// blocks of images. Output is channels-last with `bias.len()` channels.
pub fn conv2d<S: Scalar>(x: &[S], batch: usize, s: Shape, k: usize, w: &[S], bias: &[S]) -> Vec<S> {
    let filters = bias.len();
    let per_out = (s.height - k + 1) * (s.width - k + 1);
    let item = s.len();
    let mut out = Vec::with_capacity(batch * per_out * filters);
    for start in (0..batch).step_by(CONV_BLOCK) {
        let end = (start + CONV_BLOCK).min(batch);
        let patches = im2col(&x[start * item..end * item], end - start, s, k);
        out.extend(conv_forward(&patches, (end - start) * per_out, w, bias));
    }
    out
}

/// Backward pass of [`conv2d`]: accumulates weight and bias gradients and
/// returns the input gradient when requested. Patches are rebuilt block by
/// block rather than cached.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<S: Scalar>(
    x: &[S],
    batch: usize,
    s: Shape,
    k: usize,
    w: &[S],
    dout: &[S],
    dw: &mut [S],
    db: &mut [S],
    need_dx: bool,
) -> Option<Vec<S>> {
    let filters = db.len();
    let per_out = (s.height - k + 1) * (s.width - k + 1);
    let item = s.len();
    let mut dx = need_dx.then(|| Vec::with_capacity(batch * item));
    for start in (0..batch).step_by(CONV_BLOCK) {
        let end = (start + CONV_BLOCK).min(batch);
        let rows = (end - start) * per_out;
        let patches = im2col(&x[start * item..end * item], end - start, s, k);
        let d = &dout[start * per_out * filters..end * per_out * filters];
        if let Some(dcols) = linear_backward(&patches, rows, w, d, dw, db, need_dx) {
            dx.as_mut()
                .expect("dx requested")
                .extend(col2im(&dcols, end - start, s, k));
        }
    }
    dx
}

pub fn dense_forward<S: Scalar>(x: &[S], rows: usize, w: &[S], bias: &[S]) -> Vec<S> {
    conv_forward(x, rows, w, bias)
}

/// Non-overlapping max pooling; returns outputs and the flat input index of
/// each maximum (first maximum on ties).
pub fn maxpool_forward<S: Scalar>(
    x: &[S],
    batch: usize,
    s: Shape,
    size: usize,
) -> (Vec<S>, Vec<u32>) {
    let (oh, ow, c) = (s.height / size, s.width / size, s.channels);
    let item = s.len();
    let mut out = Vec::with_capacity(batch * oh * ow * c);
    let mut arg = Vec::with_capacity(batch * oh * ow * c);
    for b in 0..batch {
        for py in 0..oh {
            for px in 0..ow {
                for ch in 0..c {
                    let mut best_i = b * item + ((py * size) * s.width + px * size) * c + ch;
                    let mut best = x[best_i];
                    for ky in 0..size {
                        for kx in 0..size {
                            let i = b * item + ((py * size + ky) * s.width + px * size + kx) * c + ch;
                            if x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i as u32);
                }
            }
        }
    }
    (out, arg)
}

pub fn maxpool_backward<S: Scalar>(dout: &[S], arg: &[u32], input_len: usize) -> Vec<S> {
    let mut dx = vec![S::zero(); input_len];
    for (&g, &i) in dout.iter().zip(arg) {
        dx[i as usize] += g;
    }
    dx
}

pub fn relu_inplace<S: Scalar>(x: &mut [S]) {
    for v in x.iter_mut() {
        if *v < S::zero() {
            *v = S::zero();
        }
    }
}

/// Units per block of random bytes drawn for dropout.
const MASK_BLOCK: usize = 1024;

/// Inverted dropout applied in place: each unit is zeroed with probability
/// `rate`, otherwise scaled by `1 / (1 - rate)`. Unit `i` keeps when the
/// `i`-th little-endian `u32` of the rng's byte stream is below
/// `(1 - rate) * 2^32`. Returns the multipliers when `keep_mask` is set.
pub fn dropout_inplace<S: Scalar, R: Rng + ?Sized>(
    x: &mut [S],
    rate: f64,
    rng: &mut R,
    keep_mask: bool,
) -> Option<Vec<S>> {
    let keep = S::of(1.0 / (1.0 - rate));
    // P(u32 < threshold) = 1 - rate up to 2^-32.
    let threshold = ((1.0 - rate) * 4_294_967_296.0).round().min(u32::MAX as f64) as u64;
    let mut mask = keep_mask.then(|| Vec::with_capacity(x.len()));
    let mut bytes = [0u8; 4 * MASK_BLOCK];
    for block in x.chunks_mut(MASK_BLOCK) {
        let buf = &mut bytes[..4 * block.len()];
        rng.fill_bytes(buf);
        for (v, b) in block.iter_mut().zip(buf.chunks_exact(4)) {
            let u = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            let m = if (u as u64) < threshold { keep } else { S::zero() };
            *v *= m;
            if let Some(mask) = mask.as_mut() {
                mask.push(m);
            }
        }
    }
    mask
}

/// The multipliers [`dropout_inplace`] would apply to `len` units.
pub fn dropout_mask<S: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<S> {
    let mut ones = vec![S::one(); len];
    dropout_inplace(&mut ones, rate, rng, true).expect("mask requested")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<S: Scalar>(logits: &mut [S], classes: usize) {
    for row in logits.chunks_mut(classes) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut sum = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
}
