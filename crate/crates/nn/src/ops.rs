//! Forward and backward kernels on raw NCHW buffers. The tape in
//! [`crate::tape`] records which of these ran and chains their gradients.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::scalar::Scalar;

/// Geometry of a 2-d convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub h: usize,
    pub w: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.h + 2 * self.pad - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w + 2 * self.pad - self.kw) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output positions `lo..hi` whose input coordinate `o*stride + k - pad`
/// falls inside `0..size`.
fn valid_range(k: usize, size: usize, out: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if size + pad > k {
        ((size + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Unrolls one image into a `(in_ch*kh*kw) x (out_h*out_w)` matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let mut cols = vec![T::zero(); g.patch() * oh * ow];
    for c in 0..g.in_ch {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (y_lo, y_hi) = valid_range(i, g.h, oh, g.stride, g.pad);
            for j in 0..g.kw {
                let (x_lo, x_hi) = valid_range(j, g.w, ow, g.stride, g.pad);
                let row = ((c * g.kh + i) * g.kw + j) * oh * ow;
                for oy in y_lo..y_hi {
                    let y = oy * g.stride + i - g.pad;
                    let src = &plane[y * g.w..(y + 1) * g.w];
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    for ox in x_lo..x_hi {
                        dst[ox] = src[ox * g.stride + j - g.pad];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters column gradients back onto one image.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    for c in 0..g.in_ch {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            let (y_lo, y_hi) = valid_range(i, g.h, oh, g.stride, g.pad);
            for j in 0..g.kw {
                let (x_lo, x_hi) = valid_range(j, g.w, ow, g.stride, g.pad);
                let row = ((c * g.kh + i) * g.kw + j) * oh * ow;
                for oy in y_lo..y_hi {
                    let y = oy * g.stride + i - g.pad;
                    let dst = &mut plane[y * g.w..(y + 1) * g.w];
                    let src = &cols[row + oy * ow..row + (oy + 1) * ow];
                    for ox in x_lo..x_hi {
                        let d = &mut dst[ox * g.stride + j - g.pad];
                        *d = *d + src[ox];
                    }
                }
            }
        }
    }
}

fn columns<'a, T: Scalar>(x: &'a [T], g: &ConvGeom) -> Cow<'a, [T]> {
    if g.is_pointwise() {
        Cow::Borrowed(x)
    } else {
        Cow::Owned(im2col(x, g))
    }
}

/// Cross-correlation with zero padding (no bias). Images run in parallel.
pub fn conv2d_forward<T: Scalar>(x: &[T], weight: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let in_size = g.in_ch * g.h * g.w;
    let out_size = g.out_ch * oh * ow;
    let mut out = vec![T::zero(); g.batch * out_size];
    out.par_chunks_mut(out_size.max(1))
        .enumerate()
        .for_each(|(b, dst)| {
            let cols = columns(&x[b * in_size..(b + 1) * in_size], g);
            let p = oh * ow;
            let k = g.patch();
            T::gemm(
                g.out_ch,
                k,
                p,
                T::one(),
                weight,
                (k as isize, 1),
                &cols,
                (p as isize, 1),
                T::zero(),
                dst,
                p as isize,
            );
        });
    out
}

/// Returns `(dx, dweight)`; `dx` only when `need_dx`. Per-image weight
/// gradients are summed in image order so the result does not depend on
/// thread scheduling.
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    weight: &[T],
    dout: &[T],
    g: &ConvGeom,
    need_dx: bool,
) -> (Option<Vec<T>>, Vec<T>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = oh * ow;
    let k = g.patch();
    let in_size = g.in_ch * g.h * g.w;
    let out_size = g.out_ch * p;
    let mut dx = vec![T::zero(); if need_dx { g.batch * in_size } else { 0 }];
    let mut slots: Vec<Option<&mut [T]>> = if need_dx {
        dx.chunks_mut(in_size.max(1)).map(Some).collect()
    } else {
        (0..g.batch).map(|_| None).collect()
    };
    let partials: Vec<Vec<T>> = slots
        .par_iter_mut()
        .enumerate()
        .map(|(b, slot)| {
            let cols = columns(&x[b * in_size..(b + 1) * in_size], g);
            let dy = &dout[b * out_size..(b + 1) * out_size];
            let mut dw = vec![T::zero(); g.out_ch * k];
            // dW = dY (out_ch x p) . cols^T (p x k)
            T::gemm(
                g.out_ch,
                p,
                k,
                T::one(),
                dy,
                (p as isize, 1),
                &cols,
                (1, p as isize),
                T::zero(),
                &mut dw,
                k as isize,
            );
            let Some(dxb) = slot.as_deref_mut() else { return dw };
            if g.is_pointwise() {
                // dX = W^T (in_ch x out_ch) . dY (out_ch x p)
                T::gemm(
                    k,
                    g.out_ch,
                    p,
                    T::one(),
                    weight,
                    (1, k as isize),
                    dy,
                    (p as isize, 1),
                    T::zero(),
                    dxb,
                    p as isize,
                );
            } else {
                let mut dcols = vec![T::zero(); k * p];
                T::gemm(
                    k,
                    g.out_ch,
                    p,
                    T::one(),
                    weight,
                    (1, k as isize),
                    dy,
                    (p as isize, 1),
                    T::zero(),
                    &mut dcols,
                    p as isize,
                );
                col2im(&dcols, g, dxb);
            }
            dw
        })
        .collect();
    drop(slots);
    let mut dweight = vec![T::zero(); g.out_ch * k];
    for part in partials {
        for (d, v) in dweight.iter_mut().zip(part) {
            *d = *d + v;
        }
    }
    (need_dx.then_some(dx), dweight)
}

/// 2x2 average pooling with stride 2 on even-sized maps.
pub fn avg_pool2_forward<T: Scalar>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, xx) = (2 * oy, 2 * ox);
                let s = src[y * w + xx] + src[y * w + xx + 1] + src[(y + 1) * w + xx] + src[(y + 1) * w + xx + 1];
                out[(p * oh + oy) * ow + ox] = s * quarter;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Scalar>(dout: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::of(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for y in 0..2 * oh {
            for xx in 0..2 * ow {
                dx[(p * h + y) * w + xx] = dout[(p * oh + y / 2) * ow + xx / 2] * quarter;
            }
        }
    }
    dx
}

/// 3x3 max pooling, stride 2, padding 1. Returns the output and, per output
/// element, the flat index of the winning input within its plane.
pub fn max_pool_forward<T: Scalar>(
    x: &[T],
    planes: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<u32>, usize, usize) {
    let (oh, ow) = (pool_out(h), pool_out(w));
    let mut out = vec![T::zero(); planes * oh * ow];
    let mut arg = vec![0u32; planes * oh * ow];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best: Option<(T, usize)> = None;
                for i in 0..3 {
                    for j in 0..3 {
                        let y = (2 * oy + i) as isize - 1;
                        let xx = (2 * ox + j) as isize - 1;
                        if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                            continue;
                        }
                        let idx = y as usize * w + xx as usize;
                        if best.is_none_or(|(v, _)| src[idx] > v) {
                            best = Some((src[idx], idx));
                        }
                    }
                }
                let (v, idx) = best.expect("window overlaps the map");
                out[(p * oh + oy) * ow + ox] = v;
                arg[(p * oh + oy) * ow + ox] = idx as u32;
            }
        }
    }
    (out, arg, oh, ow)
}

pub fn pool_out(size: usize) -> usize {
    (size + 2 - 3) / 2 + 1
}

pub fn max_pool_backward<T: Scalar>(
    dout: &[T],
    arg: &[u32],
    planes: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let per_out = dout.len() / planes.max(1);
    let mut dx = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for o in 0..per_out {
            let i = p * h * w + arg[p * per_out + o] as usize;
            dx[i] = dx[i] + dout[p * per_out + o];
        }
    }
    dx
}

/// Per-channel mean and biased variance over batch and spatial positions,
/// accumulated in `f64` around the channel's first value, so a constant
/// channel gets exactly its value as mean and zero variance.
pub fn channel_stats<T: Scalar>(x: &[T], n: usize, c: usize, hw: usize) -> Vec<(f64, f64)> {
    (0..c)
        .into_par_iter()
        .map(|ch| {
            let count = (n * hw) as f64;
            let values = || (0..n).flat_map(move |b| x[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter().map(|v| v.f64()));
            let shift = x[ch * hw].f64();
            let offset = values().map(|v| v - shift).sum::<f64>() / count;
            let mean = shift + offset;
            let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
            (mean, var)
        })
        .collect()
}
