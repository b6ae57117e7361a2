//! Layer primitives with hand-written backward passes.
//!
//! Convolutions lower to matrix products through im2col; a batch is split
//! into image chunks so the column buffer stays bounded.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array4, ArrayView1, ArrayView2, ArrayView4, ArrayViewMut1, ArrayViewMut2, ArrayViewMut4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Upper bound on im2col buffer elements per chunk.
const COL_BUDGET: usize = 1 << 18;

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const fn same(p: usize) -> Self {
        Padding {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    pub const fn asymmetric(before: usize, after: usize) -> Self {
        Padding {
            top: before,
            bottom: after,
            left: before,
            right: after,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: Padding) -> Self {
        ConvGeometry {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel_h, self.kernel_w]
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let ph = h + self.padding.top + self.padding.bottom;
        let pw = w + self.padding.left + self.padding.right;
        if ph < self.kernel_h || pw < self.kernel_w {
            return Err(Error::shape(format!(
                "input {h}x{w} too small for {}x{} kernel",
                self.kernel_h, self.kernel_w
            )));
        }
        Ok(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }

    fn check_input<T>(&self, x: &ArrayView4<'_, T>) -> Result<()> {
        if x.dim().1 != self.in_channels {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.dim().1
            )));
        }
        Ok(())
    }

    fn chunk(&self, howo: usize) -> usize {
        (COL_BUDGET / (self.patch_len() * howo).max(1)).max(1)
    }
}

struct Dims {
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

/// Output positions `o` in `lo..hi` whose input position `o * stride + offset` lies in `0..w`.
fn valid_range(offset: isize, stride: usize, w: usize, wo: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let hi = ((w as isize - offset + s - 1) / s).max(0);
    let lo = (lo as usize).min(wo);
    (lo, (hi as usize).clamp(lo, wo))
}

/// Fills `col` (cleared first) with the `(patch_len, count * ho * wo)` patch matrix.
fn im2col<T: Real>(g: &ConvGeometry, x: &[T], d: &Dims, first: usize, count: usize, col: &mut Vec<T>) {
    col.clear();
    let (top, left) = (g.padding.top as isize, g.padding.left as isize);
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            let (ylo, yhi) = valid_range(ky as isize - top, g.stride, d.h, d.ho);
            for kx in 0..g.kernel_w {
                let (lo, hi) = valid_range(kx as isize - left, g.stride, d.w, d.wo);
                for li in 0..count {
                    let n = first + li;
                    let src = &x[(n * g.in_channels + c) * d.h * d.w..][..d.h * d.w];
                    col.extend(std::iter::repeat_n(T::zero(), ylo * d.wo));
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + ky - g.padding.top;
                        let srow = &src[iy * d.w..][..d.w];
                        col.extend(std::iter::repeat_n(T::zero(), lo));
                        if lo < hi {
                            let start = lo * g.stride + kx - g.padding.left;
                            if g.stride == 1 {
                                col.extend_from_slice(&srow[start..start + hi - lo]);
                            } else {
                                col.extend(srow[start..].iter().step_by(g.stride).take(hi - lo).copied());
                            }
                        }
                        col.extend(std::iter::repeat_n(T::zero(), d.wo - hi));
                    }
                    col.extend(std::iter::repeat_n(T::zero(), (d.ho - yhi) * d.wo));
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &ConvGeometry, col: &[T], d: &Dims, first: usize, count: usize, dx: &mut [T]) {
    let cols = count * d.ho * d.wo;
    let (top, left) = (g.padding.top as isize, g.padding.left as isize);
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            let (ylo, yhi) = valid_range(ky as isize - top, g.stride, d.h, d.ho);
            for kx in 0..g.kernel_w {
                let (lo, hi) = valid_range(kx as isize - left, g.stride, d.w, d.wo);
                if lo >= hi {
                    continue;
                }
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src_row = &col[row * cols..(row + 1) * cols];
                for li in 0..count {
                    let n = first + li;
                    let dst = &mut dx[(n * g.in_channels + c) * d.h * d.w..][..d.h * d.w];
                    for oy in ylo..yhi {
                        let iy = oy * g.stride + ky - g.padding.top;
                        let src = &src_row[(li * d.ho + oy) * d.wo..][lo..hi];
                        let start = lo * g.stride + kx - g.padding.left;
                        let drow = &mut dst[iy * d.w..][start..];
                        if g.stride == 1 {
                            for (o, &v) in drow.iter_mut().zip(src) {
                                *o += v;
                            }
                        } else {
                            for (o, &v) in drow.iter_mut().step_by(g.stride).zip(src) {
                                *o += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn weight_matrix<'a, T: Real>(g: &ConvGeometry, weight: &'a ArrayView4<'a, T>) -> Result<ArrayView2<'a, T>> {
    if weight.shape() != g.weight_shape() {
        return Err(Error::shape(format!(
            "weight shape {:?}, expected {:?}",
            weight.shape(),
            g.weight_shape()
        )));
    }
    weight
        .view()
        .into_shape_with_order((g.out_channels, g.patch_len()))
        .map_err(|e| Error::shape(format!("weight not contiguous: {e}")))
}

/// 2-D cross-correlation of `x (N, Cin, H, W)` with `weight (Cout, Cin, kh, kw)`.
pub fn conv2d_forward<T: Real>(
    g: &ConvGeometry,
    x: &ArrayView4<'_, T>,
    weight: &ArrayView4<'_, T>,
    bias: Option<&ArrayView1<'_, T>>,
) -> Result<Array4<T>> {
    g.check_input(x)?;
    let (n, _, h, w) = x.dim();
    let (ho, wo) = g.output_size(h, w)?;
    let d = Dims { h, w, ho, wo };
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let wmat = weight_matrix(g, weight)?;
    let howo = ho * wo;
    let chunk = g.chunk(howo);
    let mut y = Array4::<T>::zeros((n, g.out_channels, ho, wo));
    let ys = y.as_slice_mut().expect("fresh array");
    let mut col = Vec::with_capacity(g.patch_len() * chunk.min(n) * howo);
    let mut out = vec![T::zero(); g.out_channels * chunk.min(n) * howo];
    let mut first = 0;
    while first < n {
        let count = chunk.min(n - first);
        let cols = count * howo;
        im2col(g, xs, &d, first, count, &mut col);
        let colv = ArrayView2::from_shape((g.patch_len(), cols), &col[..]).expect("col shape");
        let out = &mut out[..g.out_channels * cols];
        let mut outv = ArrayViewMut2::from_shape((g.out_channels, cols), out).expect("out shape");
        general_mat_mul(T::one(), &wmat, &colv, T::zero(), &mut outv);
        let out = outv.as_slice().expect("contiguous");
        for li in 0..count {
            for co in 0..g.out_channels {
                let b = bias.map_or(T::zero(), |b| b[co]);
                let src = &out[co * cols + li * howo..][..howo];
                let dst = &mut ys[((first + li) * g.out_channels + co) * howo..][..howo];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o = s + b;
                }
            }
        }
        first += count;
    }
    Ok(y)
}

/// Accumulates weight (and bias) gradients and optionally returns the input gradient.
pub fn conv2d_backward<T: Real>(
    g: &ConvGeometry,
    x: &ArrayView4<'_, T>,
    weight: &ArrayView4<'_, T>,
    dy: &ArrayView4<'_, T>,
    dweight: &mut ArrayViewMut4<'_, T>,
    dbias: Option<&mut ArrayViewMut1<'_, T>>,
    need_dx: bool,
) -> Result<Option<Array4<T>>> {
    g.check_input(x)?;
    let (n, _, h, w) = x.dim();
    let (ho, wo) = g.output_size(h, w)?;
    if dy.dim() != (n, g.out_channels, ho, wo) {
        return Err(Error::shape(format!("conv backward: dy {:?}", dy.dim())));
    }
    let d = Dims { h, w, ho, wo };
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let dy = dy.as_standard_layout();
    let dys = dy.as_slice().expect("standard layout");
    let wmat = weight_matrix(g, weight)?;
    let mut dwmat = dweight
        .view_mut()
        .into_shape_with_order((g.out_channels, g.patch_len()))
        .map_err(|e| Error::shape(format!("dweight not contiguous: {e}")))?;
    let howo = ho * wo;

    if let Some(db) = dbias {
        for ni in 0..n {
            for co in 0..g.out_channels {
                let s: T = dys[(ni * g.out_channels + co) * howo..][..howo].iter().copied().sum();
                db[co] += s;
            }
        }
    }

    let chunk = g.chunk(howo);
    let mut dx = need_dx.then(|| Array4::<T>::zeros((n, g.in_channels, h, w)));
    let mut col = Vec::with_capacity(g.patch_len() * chunk.min(n) * howo);
    let mut dymat = vec![T::zero(); g.out_channels * chunk.min(n) * howo];
    let mut first = 0;
    while first < n {
        let count = chunk.min(n - first);
        let cols = count * howo;
        let dymat = &mut dymat[..g.out_channels * cols];
        for li in 0..count {
            for co in 0..g.out_channels {
                let src = &dys[((first + li) * g.out_channels + co) * howo..][..howo];
                dymat[co * cols + li * howo..][..howo].copy_from_slice(src);
            }
        }
        let dyv = ArrayView2::from_shape((g.out_channels, cols), &dymat[..]).expect("dy shape");
        im2col(g, xs, &d, first, count, &mut col);
        {
            let colv = ArrayView2::from_shape((g.patch_len(), cols), &col[..]).expect("col shape");
            general_mat_mul(T::one(), &dyv, &colv.t(), T::one(), &mut dwmat);
        }
        if let Some(dx) = dx.as_mut() {
            let mut dcol = ArrayViewMut2::from_shape((g.patch_len(), cols), &mut col[..]).expect("col shape");
            general_mat_mul(T::one(), &wmat.t(), &dyv, T::zero(), &mut dcol);
            let dxs = dx.as_slice_mut().expect("fresh array");
            col2im(g, dcol.as_slice().expect("contiguous"), &d, first, count, dxs);
        }
        first += count;
    }
    Ok(dx)
}

/// Saved activations for the batch-norm backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    xhat: Array4<T>,
    inv_std: Array1<T>,
}

/// Per-channel statistics of one training-mode batch.
#[derive(Clone, Debug)]
pub struct BatchStats<T> {
    pub mean: Array1<T>,
    /// Unbiased variance, the quantity folded into running averages.
    pub var: Array1<T>,
}

pub fn batch_norm_train<T: Real>(
    x: &ArrayView4<'_, T>,
    gamma: &ArrayView1<'_, T>,
    beta: &ArrayView1<'_, T>,
) -> (Array4<T>, BatchNormCache<T>, BatchStats<T>) {
    let (n, c, h, w) = x.dim();
    let hw = h * w;
    let m = (n * hw) as f64;
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let mut mean = Array1::<T>::zeros(c);
    let mut var = Array1::<T>::zeros(c);
    let mut inv_std = Array1::<T>::zeros(c);
    let mut xhat = Array4::<T>::zeros((n, c, h, w));
    let mut y = Array4::<T>::zeros((n, c, h, w));
    {
        let xh = xhat.as_slice_mut().expect("fresh");
        let ys = y.as_slice_mut().expect("fresh");
        for ci in 0..c {
            let mut sum = 0.0;
            for ni in 0..n {
                sum += xs[(ni * c + ci) * hw..][..hw].iter().map(|v| v.f64()).sum::<f64>();
            }
            let mu = sum / m;
            let mut sq = 0.0;
            for ni in 0..n {
                sq += xs[(ni * c + ci) * hw..][..hw]
                    .iter()
                    .map(|v| {
                        let d = v.f64() - mu;
                        d * d
                    })
                    .sum::<f64>();
            }
            let biased = sq / m;
            let istd = 1.0 / (biased + BN_EPS).sqrt();
            mean[ci] = T::of(mu);
            var[ci] = T::of(if m > 1.0 { sq / (m - 1.0) } else { 0.0 });
            inv_std[ci] = T::of(istd);
            let (muv, isv, gv, bv) = (T::of(mu), T::of(istd), gamma[ci], beta[ci]);
            for ni in 0..n {
                let off = (ni * c + ci) * hw;
                for i in off..off + hw {
                    let xn = (xs[i] - muv) * isv;
                    xh[i] = xn;
                    ys[i] = gv * xn + bv;
                }
            }
        }
    }
    (y, BatchNormCache { xhat, inv_std }, BatchStats { mean, var })
}

pub fn batch_norm_eval<T: Real>(
    x: &ArrayView4<'_, T>,
    gamma: &ArrayView1<'_, T>,
    beta: &ArrayView1<'_, T>,
    running_mean: &ArrayView1<'_, T>,
    running_var: &ArrayView1<'_, T>,
) -> Array4<T> {
    let mut y = x.to_owned();
    let eps = T::of(BN_EPS);
    for (ci, mut plane) in y.axis_iter_mut(ndarray::Axis(1)).enumerate() {
        let scale = gamma[ci] / (running_var[ci] + eps).sqrt();
        let shift = beta[ci] - running_mean[ci] * scale;
        plane.mapv_inplace(|v| v * scale + shift);
    }
    y
}

/// Returns `dx`; accumulates `dgamma` and `dbeta`.
pub fn batch_norm_backward<T: Real>(
    cache: &BatchNormCache<T>,
    gamma: &ArrayView1<'_, T>,
    dy: &ArrayView4<'_, T>,
    dgamma: &mut ArrayViewMut1<'_, T>,
    dbeta: &mut ArrayViewMut1<'_, T>,
) -> Array4<T> {
    let (n, c, h, w) = cache.xhat.dim();
    let hw = h * w;
    let m = (n * hw) as f64;
    let dy = dy.as_standard_layout();
    let dys = dy.as_slice().expect("standard layout");
    let xh = cache.xhat.as_slice().expect("standard layout");
    let mut dx = Array4::<T>::zeros((n, c, h, w));
    let dxs = dx.as_slice_mut().expect("fresh");
    for ci in 0..c {
        let (mut sdy, mut sdyx) = (0.0, 0.0);
        for ni in 0..n {
            let off = (ni * c + ci) * hw;
            for i in off..off + hw {
                let g = dys[i].f64();
                sdy += g;
                sdyx += g * xh[i].f64();
            }
        }
        dgamma[ci] += T::of(sdyx);
        dbeta[ci] += T::of(sdy);
        let k = T::of(gamma[ci].f64() * cache.inv_std[ci].f64());
        let (mdy, mdyx) = (T::of(sdy / m), T::of(sdyx / m));
        for ni in 0..n {
            let off = (ni * c + ci) * hw;
            for i in off..off + hw {
                dxs[i] = k * (dys[i] - mdy - xh[i] * mdyx);
            }
        }
    }
    dx
}

pub fn leaky_relu_inplace<T: Real>(x: &mut Array4<T>, slope: T) {
    x.mapv_inplace(|v| if v > T::zero() { v } else { v * slope });
}

/// `y` is the activation output; its sign matches the input's for a positive slope.
pub fn leaky_relu_backward<T: Real>(y: &ArrayView4<'_, T>, dy: &mut Array4<T>, slope: T) {
    ndarray::Zip::from(dy).and(y).for_each(|g, &v| {
        if v <= T::zero() {
            *g *= slope;
        }
    });
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2x<T: Real>(x: &ArrayView4<'_, T>) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    Array4::from_shape_fn((n, c, 2 * h, 2 * w), |(a, b, i, j)| x[[a, b, i / 2, j / 2]])
}

pub fn upsample2x_backward<T: Real>(dy: &ArrayView4<'_, T>) -> Array4<T> {
    let (n, c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    Array4::from_shape_fn((n, c, h, w), |(a, b, i, j)| {
        dy[[a, b, 2 * i, 2 * j]] + dy[[a, b, 2 * i, 2 * j + 1]] + dy[[a, b, 2 * i + 1, 2 * j]] + dy[[a, b, 2 * i + 1, 2 * j + 1]]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random4(rng: &mut ChaCha8Rng, d: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_fn(d, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct nested-loop convolution.
    fn conv_reference(g: &ConvGeometry, x: &Array4<f64>, wt: &Array4<f64>) -> Array4<f64> {
        let (n, _, h, w) = x.dim();
        let (ho, wo) = g.output_size(h, w).unwrap();
        let mut y = Array4::zeros((n, g.out_channels, ho, wo));
        for b in 0..n {
            for co in 0..g.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = 0.0;
                        for ci in 0..g.in_channels {
                            for ky in 0..g.kernel_h {
                                for kx in 0..g.kernel_w {
                                    let iy = (oy * g.stride + ky) as isize - g.padding.top as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.padding.left as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        s += x[[b, ci, iy as usize, ix as usize]] * wt[[co, ci, ky, kx]];
                                    }
                                }
                            }
                        }
                        y[[b, co, oy, ox]] = s;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [
            ConvGeometry::square(3, 4, 5, 1, Padding::same(2)),
            ConvGeometry::square(2, 3, 4, 2, Padding::same(1)),
            ConvGeometry::square(3, 2, 4, 1, Padding::asymmetric(1, 2)),
            ConvGeometry::square(2, 3, 2, 1, Padding::same(0)),
        ] {
            let x = random4(&mut rng, (2, g.in_channels, 6, 6));
            let wt = random4(&mut rng, (g.out_channels, g.in_channels, g.kernel_h, g.kernel_w));
            let y = conv2d_forward(&g, &x.view(), &wt.view(), None).unwrap();
            let r = conv_reference(&g, &x, &wt);
            assert_eq!(y.dim(), r.dim());
            for (a, b) in y.iter().zip(r.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <dy, conv(x)> is bilinear, so its gradients are checked exactly by
        // perturbing single entries.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = ConvGeometry::square(2, 3, 4, 2, Padding::same(1));
        let x = random4(&mut rng, (2, 2, 6, 6));
        let wt = random4(&mut rng, (3, 2, 4, 4));
        let b = Array1::from_vec(vec![0.1, -0.2, 0.3]);
        let y = conv2d_forward(&g, &x.view(), &wt.view(), Some(&b.view())).unwrap();
        let dy = random4(&mut rng, y.dim());
        let mut dw = Array4::zeros(wt.dim());
        let mut db = Array1::zeros(3);
        let dx = conv2d_backward(&g, &x.view(), &wt.view(), &dy.view(), &mut dw.view_mut(), Some(&mut db.view_mut()), true)
            .unwrap()
            .unwrap();
        let f = |x: &Array4<f64>, wt: &Array4<f64>, b: &Array1<f64>| {
            let y = conv2d_forward(&g, &x.view(), &wt.view(), Some(&b.view())).unwrap();
            (&y * &dy).sum()
        };
        let base = f(&x, &wt, &b);
        for idx in [[0, 0, 0, 0], [1, 1, 3, 2], [0, 1, 5, 5]] {
            let mut xp = x.clone();
            xp[idx] += 1.0;
            assert!((f(&xp, &wt, &b) - base - dx[idx]).abs() < 1e-9);
        }
        for idx in [[0, 0, 0, 0], [2, 1, 3, 2]] {
            let mut wp = wt.clone();
            wp[idx] += 1.0;
            assert!((f(&x, &wp, &b) - base - dw[idx]).abs() < 1e-9);
        }
        let mut bp = b.clone();
        bp[1] += 1.0;
        assert!((f(&x, &wt, &bp) - base - db[1]).abs() < 1e-9);
    }

    #[test]
    fn chunked_conv_equals_single_pass() {
        // Ten images exceed one chunk for this geometry.
        let g = ConvGeometry::square(64, 8, 4, 1, Padding::asymmetric(1, 2));
        assert!(g.chunk(32 * 32) < 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random4(&mut rng, (10, 64, 32, 32));
        let wt = random4(&mut rng, (8, 64, 4, 4));
        let full = conv2d_forward(&g, &x.view(), &wt.view(), None).unwrap();
        for i in [0, 8, 9] {
            let one = conv2d_forward(&g, &x.slice(ndarray::s![i..i + 1, .., .., ..]), &wt.view(), None).unwrap();
            assert_eq!(one.index_axis(ndarray::Axis(0), 0), full.index_axis(ndarray::Axis(0), i));
        }
    }

    #[test]
    fn batch_norm_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random4(&mut rng, (4, 3, 5, 5)) * 3.0 + 1.0;
        let gamma = Array1::ones(3);
        let beta = Array1::zeros(3);
        let (y, _, stats) = batch_norm_train(&x.view(), &gamma.view(), &beta.view());
        for c in 0..3 {
            let plane = y.index_axis(ndarray::Axis(1), c);
            let mean = plane.mean().unwrap();
            let var = plane.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
            assert!(stats.var[c] > 0.0);
        }
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let dy = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| (i * 4 + j) as f64);
        let dx = upsample2x_backward(&dy.view());
        assert_eq!(dx[[0, 0, 0, 0]], 0.0 + 1.0 + 4.0 + 5.0);
        let x = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| (i * 2 + j) as f64);
        let up = upsample2x(&x.view());
        assert_eq!(up[[0, 0, 3, 3]], 3.0);
        assert_eq!(up[[0, 0, 1, 2]], 1.0);
    }
}
