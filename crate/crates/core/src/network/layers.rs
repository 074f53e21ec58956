//! Per-sample layer kernels. Feature maps are `(height, width, channels)`
//! row-major; a convolution patch is laid out `(dy, dx, channel)` to match
//! the `[kh, kw, in, out]` weight tensor viewed as a `(kh*kw*in) x out` matrix.

use super::arch::ConvShape;
use super::Real;

/// Unroll valid-convolution patches of one sample into `positions x patch` rows.
pub(crate) fn im2col<T: Real>(input: &[T], s: &ConvShape, cols: &mut [T]) {
    debug_assert_eq!(input.len(), s.in_len());
    debug_assert_eq!(cols.len(), s.positions() * s.patch());
    let c = s.in_channels;
    let run = s.kernel_width * c;
    let patch = s.patch();
    for oy in 0..s.out_height {
        for ox in 0..s.out_width {
            let row = &mut cols[(oy * s.out_width + ox) * patch..][..patch];
            for dy in 0..s.kernel_height {
                let src = ((oy + dy) * s.in_width + ox) * c;
                row[dy * run..(dy + 1) * run].copy_from_slice(&input[src..src + run]);
            }
        }
    }
}

/// Scatter-add patch gradients back onto the input map (adjoint of `im2col`).
pub(crate) fn col2im_add<T: Real>(cols: &[T], s: &ConvShape, input_grad: &mut [T]) {
    debug_assert_eq!(input_grad.len(), s.in_len());
    let c = s.in_channels;
    let run = s.kernel_width * c;
    let patch = s.patch();
    for oy in 0..s.out_height {
        for ox in 0..s.out_width {
            let row = &cols[(oy * s.out_width + ox) * patch..][..patch];
            for dy in 0..s.kernel_height {
                let dst = ((oy + dy) * s.in_width + ox) * c;
                for (g, &v) in input_grad[dst..dst + run]
                    .iter_mut()
                    .zip(&row[dy * run..(dy + 1) * run])
                {
                    *g = *g + v;
                }
            }
        }
    }
}

/// Max pooling of one sample. `argmax` receives, per pooled cell, the index
/// into `input` of the winner; ties go to the first cell in row-major order.
pub(crate) fn maxpool<T: Real>(
    input: &[T],
    s: &ConvShape,
    size: usize,
    stride: usize,
    output: &mut [T],
    argmax: &mut [u32],
) {
    let c = s.out_channels;
    debug_assert_eq!(input.len(), s.out_len());
    debug_assert_eq!(output.len(), s.pooled_len());
    for py in 0..s.pooled_height {
        for px in 0..s.pooled_width {
            for ch in 0..c {
                let mut best_idx = ((py * stride) * s.out_width + px * stride) * c + ch;
                let mut best = input[best_idx];
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = ((py * stride + dy) * s.out_width + px * stride + dx) * c + ch;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (py * s.pooled_width + px) * c + ch;
                output[o] = best;
                argmax[o] = best_idx as u32;
            }
        }
    }
}

/// Route pooled gradients to their argmax positions (accumulating overlaps).
pub(crate) fn maxpool_backward<T: Real>(grad_pooled: &[T], argmax: &[u32], grad_input: &mut [T]) {
    for (&g, &idx) in grad_pooled.iter().zip(argmax) {
        let slot = &mut grad_input[idx as usize];
        *slot = *slot + g;
    }
}

pub(crate) fn add_bias_rows<T: Real>(data: &mut [T], bias: &[T]) {
    for row in data.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
}

/// Column sums of a row-major matrix with `bias.len()` columns, accumulated.
pub(crate) fn accumulate_column_sums<T: Real>(data: &[T], out: &mut [T]) {
    for row in data.chunks_exact(out.len()) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

pub(crate) fn relu_in_place<T: Real>(data: &mut [T]) {
    for v in data.iter_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}
