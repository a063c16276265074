//! 3×3 convolution, stride 1, zero padding 1, no bias, via im2col + GEMM.
//!
//! Weights are laid out `[c_out, c_in, 3, 3]`. Samples are processed in
//! chunks whose column count is near `CHUNK_COLUMNS`; chunks run in
//! parallel and weight-gradient partials are reduced in chunk order, so
//! results do not depend on the thread count.

use rayon::prelude::*;

use super::{Real, Tensor4};

const CHUNK_COLUMNS: usize = 2048;

fn chunk_samples(n: usize, hw: usize) -> usize {
    (CHUNK_COLUMNS / hw.max(1)).clamp(1, n.max(1))
}

/// Fills `col` (`[c·9, g·hw]`) from `g` consecutive samples.
fn im2col<T: Real>(x: &[T], g: usize, c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    let ld = g * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * ld..][..ld];
                for s in 0..g {
                    let src = &x[(s * c + ci) * hw..][..hw];
                    for y in 0..h {
                        let dst = &mut row[s * hw + y * w..][..w];
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src_row = &src[sy as usize * w..][..w];
                        match kx {
                            0 => {
                                dst[0] = T::zero();
                                dst[1..].copy_from_slice(&src_row[..w - 1]);
                            }
                            1 => dst.copy_from_slice(src_row),
                            _ => {
                                dst[..w - 1].copy_from_slice(&src_row[1..]);
                                dst[w - 1] = T::zero();
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` back onto `g` samples of `dx`.
fn col2im<T: Real>(col: &[T], g: usize, c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    let ld = g * hw;
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * ld..][..ld];
                for s in 0..g {
                    let dst = &mut dx[(s * c + ci) * hw..][..hw];
                    for y in 0..h {
                        let sy = y as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let src = &row[s * hw + y * w..][..w];
                        let dst_row = &mut dst[sy as usize * w..][..w];
                        match kx {
                            0 => dst_row[..w - 1]
                                .iter_mut()
                                .zip(&src[1..])
                                .for_each(|(d, v)| *d = *d + *v),
                            1 => dst_row.iter_mut().zip(src).for_each(|(d, v)| *d = *d + *v),
                            _ => dst_row[1..]
                                .iter_mut()
                                .zip(&src[..w - 1])
                                .for_each(|(d, v)| *d = *d + *v),
                        }
                    }
                }
            }
        }
    }
}

pub fn conv3x3_forward<T: Real>(x: &Tensor4<T>, weight: &[T], c_out: usize) -> Tensor4<T> {
    let [n, c_in, h, w] = x.shape();
    let k = c_in * 9;
    assert_eq!(weight.len(), c_out * k, "conv weight shape");
    let hw = h * w;
    let g = chunk_samples(n, hw);
    let mut y = Tensor4::zeros(n, c_out, h, w);
    x.data
        .par_chunks(g * c_in * hw)
        .zip(y.data.par_chunks_mut(g * c_out * hw))
        .for_each(|(xs, ys)| {
            let gs = xs.len() / (c_in * hw);
            let ld = gs * hw;
            let mut col = vec![T::zero(); k * ld];
            im2col(xs, gs, c_in, h, w, &mut col);
            if gs == 1 {
                T::gemm(c_out, k, ld, T::one(), weight, k as isize, 1, &col, ld as isize, 1, T::zero(), ys, ld as isize, 1);
                return;
            }
            let mut out = vec![T::zero(); c_out * ld];
            T::gemm(c_out, k, ld, T::one(), weight, k as isize, 1, &col, ld as isize, 1, T::zero(), &mut out, ld as isize, 1);
            for s in 0..gs {
                for co in 0..c_out {
                    ys[(s * c_out + co) * hw..][..hw].copy_from_slice(&out[co * ld + s * hw..][..hw]);
                }
            }
        });
    y
}

/// Returns `(dL/dweight, dL/dx)`; the input gradient is skipped unless
/// `need_dx` is set.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &[T],
    dy: &Tensor4<T>,
    need_dx: bool,
) -> (Vec<T>, Option<Tensor4<T>>) {
    let [n, c_in, h, w] = x.shape();
    let c_out = dy.c;
    assert_eq!(dy.shape(), [n, c_out, h, w], "conv output gradient shape");
    let k = c_in * 9;
    let hw = h * w;
    let g = chunk_samples(n, hw);
    let mut dx = need_dx.then(|| Tensor4::zeros(n, c_in, h, w));
    let n_chunks = n.div_ceil(g);
    let mut dx_chunks: Vec<Option<&mut [T]>> = match dx.as_mut() {
        Some(t) => t.data.chunks_mut(g * c_in * hw).map(Some).collect(),
        None => (0..n_chunks).map(|_| None).collect(),
    };
    let partials: Vec<Vec<T>> = dx_chunks
        .par_iter_mut()
        .enumerate()
        .map(|(ci, dxs)| {
            let start = ci * g;
            let gs = g.min(n - start);
            let ld = gs * hw;
            let xs = &x.data[start * c_in * hw..][..gs * c_in * hw];
            let dys = &dy.data[start * c_out * hw..][..gs * c_out * hw];
            let mut col = vec![T::zero(); k * ld];
            im2col(xs, gs, c_in, h, w, &mut col);
            let gathered;
            let dyc: &[T] = if gs == 1 {
                dys
            } else {
                let mut buf = vec![T::zero(); c_out * ld];
                for s in 0..gs {
                    for co in 0..c_out {
                        buf[co * ld + s * hw..][..hw].copy_from_slice(&dys[(s * c_out + co) * hw..][..hw]);
                    }
                }
                gathered = buf;
                &gathered
            };
            let mut dw = vec![T::zero(); c_out * k];
            // dW = dY · colᵀ
            T::gemm(c_out, ld, k, T::one(), dyc, ld as isize, 1, &col, 1, ld as isize, T::zero(), &mut dw, k as isize, 1);
            if let Some(dxs) = dxs.as_deref_mut() {
                // dcol = Wᵀ · dY
                T::gemm(k, c_out, ld, T::one(), weight, 1, k as isize, dyc, ld as isize, 1, T::zero(), &mut col, ld as isize, 1);
                col2im(&col, gs, c_in, h, w, dxs);
            }
            dw
        })
        .collect();
    let mut dw = vec![T::zero(); c_out * k];
    for p in partials {
        dw.iter_mut().zip(p).for_each(|(a, b)| *a = *a + b);
    }
    (dw, dx)
}
