//! Image tensors and the residual composition rule.
//!
//! Images are stored as `(batch, channel, height, width)` arrays with pixel
//! values in `[-1, 1]`. Residuals share the layout but are never clamped.

use image::RgbImage;
use ndarray::{Array4, ArrayView4, Axis, Zip};

use crate::error::{Error, Result};
use crate::real::Real;

pub type ImageTensor<T = f32> = Array4<T>;

/// Checks the `(batch, 3, H, W)` layout and that `H` and `W` are multiples of `divisor`.
pub fn check_image<T>(x: &ArrayView4<'_, T>, divisor: usize) -> Result<()> {
    let (n, c, h, w) = x.dim();
    if n == 0 {
        return Err(Error::shape("empty batch"));
    }
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, got {c}")));
    }
    if h == 0 || w == 0 || h % divisor != 0 || w % divisor != 0 {
        return Err(Error::shape(format!(
            "spatial size {h}x{w} is not a positive multiple of {divisor}"
        )));
    }
    Ok(())
}

/// `clamp(x + r, -1, 1)`.
pub fn compose<T: Real>(x: &ArrayView4<'_, T>, r: &ArrayView4<'_, T>) -> Result<Array4<T>> {
    if x.dim() != r.dim() {
        return Err(Error::shape(format!(
            "compose: input {:?} vs residual {:?}",
            x.dim(),
            r.dim()
        )));
    }
    let one = T::one();
    Ok(Zip::from(x)
        .and(r)
        .map_collect(|&a, &b| (a + b).max(-one).min(one)))
}

/// Gradient of `compose` w.r.t. its pre-clamp sum: passes `dy` where
/// `-1 <= x + r <= 1` and zeroes it where the clamp saturated.
pub fn compose_backward<T: Real>(
    x: &ArrayView4<'_, T>,
    r: &ArrayView4<'_, T>,
    dy: &ArrayView4<'_, T>,
) -> Array4<T> {
    let one = T::one();
    let mut out = dy.to_owned();
    Zip::from(&mut out).and(x).and(r).for_each(|g, &a, &b| {
        let s = a + b;
        if s > one || s < -one {
            *g = T::zero();
        }
    });
    out
}

/// 8-bit RGB to a `(1, 3, H, W)` tensor via `v / 127.5 - 1`.
pub fn from_rgb8<T: Real>(img: &RgbImage) -> ImageTensor<T> {
    let (w, h) = img.dimensions();
    let mut out = Array4::<T>::zeros((1, 3, h as usize, w as usize));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[0, c, y as usize, x as usize]] = T::of(px[c] as f64 / 127.5 - 1.0);
        }
    }
    out
}

/// Inverse of [`from_rgb8`] for one batch entry; values outside `[-1, 1]` saturate.
pub fn to_rgb8<T: Real>(x: &ArrayView4<'_, T>, index: usize) -> RgbImage {
    let (_, _, h, w) = x.dim();
    let item = x.index_axis(Axis(0), index);
    RgbImage::from_fn(w as u32, h as u32, |px, py| {
        let mut rgb = [0u8; 3];
        for (c, v) in rgb.iter_mut().enumerate() {
            *v = unit_to_u8(item[[c, py as usize, px as usize]].f64());
        }
        image::Rgb(rgb)
    })
}

pub(crate) fn unit_to_u8(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Mean absolute difference between two equally shaped tensors.
pub fn mean_abs_diff<T: Real>(a: &ArrayView4<'_, T>, b: &ArrayView4<'_, T>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let n = a.len().max(1) as f64;
    let sum: f64 = Zip::from(a)
        .and(b)
        .fold(0.0, |acc, &x, &y| acc + (x - y).abs().f64());
    Ok(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn compose_zero_residual_is_identity() {
        let x = Array4::from_shape_fn((1, 3, 4, 4), |(_, c, h, w)| {
            (c as f32 * 0.3 + h as f32 * 0.1 - w as f32 * 0.2).clamp(-1.0, 1.0)
        });
        let r = Array4::zeros(x.dim());
        assert_eq!(compose(&x.view(), &r.view()).unwrap(), x);
    }

    #[test]
    fn compose_clamps() {
        let x = Array4::from_shape_vec((1, 3, 1, 1), vec![0.9f32, -0.5, -0.9]).unwrap();
        let r = Array4::from_shape_vec((1, 3, 1, 1), vec![0.3f32, 0.2, -0.4]).unwrap();
        let y = compose(&x.view(), &r.view()).unwrap();
        assert_eq!(y[[0, 0, 0, 0]], 1.0);
        assert!((y[[0, 1, 0, 0]] + 0.3).abs() < 1e-7);
        assert_eq!(y[[0, 2, 0, 0]], -1.0);
    }

    #[test]
    fn compose_rejects_mismatch() {
        let x = Array4::<f32>::zeros((1, 3, 4, 4));
        let r = Array4::<f32>::zeros((1, 3, 4, 8));
        assert!(compose(&x.view(), &r.view()).is_err());
    }

    #[test]
    fn compose_backward_masks_saturation() {
        let x = Array4::from_shape_vec((1, 3, 1, 1), vec![0.9f64, 0.0, -0.9]).unwrap();
        let r = Array4::from_shape_vec((1, 3, 1, 1), vec![0.3f64, 0.5, -0.05]).unwrap();
        let dy = Array4::from_elem((1, 3, 1, 1), 2.0f64);
        let g = compose_backward(&x.view(), &r.view(), &dy.view());
        assert_eq!(g.iter().copied().collect::<Vec<_>>(), vec![0.0, 2.0, 2.0]);
    }

    #[test]
    fn rgb_round_trip() {
        let img = RgbImage::from_fn(5, 3, |x, y| image::Rgb([(x * 50) as u8, (y * 80) as u8, 255]));
        let t: ImageTensor = from_rgb8(&img);
        assert_eq!(t.dim(), (1, 3, 3, 5));
        assert_eq!(to_rgb8(&t.view(), 0), img);
    }

    #[test]
    fn check_image_divisibility() {
        let x = Array4::<f32>::zeros((1, 3, 64, 64));
        assert!(check_image(&x.view(), 32).is_ok());
        let x = Array4::<f32>::zeros((1, 3, 48, 48));
        assert!(check_image(&x.view(), 32).is_err());
        assert!(check_image(&x.view(), 4).is_ok());
    }
}
