//! Shared filtering primitives: separable Gaussian blur, integral-image box
//! means and area resampling. All edges are handled by clamp-to-edge.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, Plane};

/// Normalized Gaussian taps for radius `ceil(3 * sigma)`, centre tap in the middle.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

fn convolve_rows(src: &Plane, taps: &[f64]) -> Plane {
    let (w, h) = (src.width(), src.height());
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        let row = src.row(y);
        for (x, o) in row_out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += t * row[sx];
            }
            *o = acc;
        }
    });
    Plane::from_vec(w, h, out).expect("same size")
}

fn convolve_cols(src: &Plane, taps: &[f64]) -> Plane {
    let (w, h) = (src.width(), src.height());
    let r = (taps.len() / 2) as isize;
    let data = src.data();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        for (k, &t) in taps.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &data[sy * w..(sy + 1) * w];
            for (o, &s) in row_out.iter_mut().zip(src_row) {
                *o += t * s;
            }
        }
    });
    Plane::from_vec(w, h, out).expect("same size")
}

/// Separable Gaussian blur of one plane. `sigma == 0` returns the input.
pub fn gaussian_blur_plane(src: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "gaussian sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(src.clone());
    }
    let taps = gaussian_kernel(sigma);
    Ok(convolve_cols(&convolve_rows(src, &taps), &taps))
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    img.try_map_planes(|p| gaussian_blur_plane(p, sigma))
}

/// Summed-area table with one row and column of zero padding.
pub struct IntegralImage {
    width: usize,
    height: usize,
    sums: Vec<f64>,
}

impl IntegralImage {
    pub fn new(src: &Plane) -> Self {
        let (w, h) = (src.width(), src.height());
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row_acc = 0.0;
            let row = src.row(y);
            for x in 0..w {
                row_acc += row[x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row_acc;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            sums,
        }
    }

    /// Sum over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[(y1 + 1) * s + x1 + 1] - self.sums[y0 * s + x1 + 1] - self.sums[(y1 + 1) * s + x0]
            + self.sums[y0 * s + x0]
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Mean over the `(2r+1)^2` window clipped to the plane; each output divides
/// by the number of in-bounds samples.
pub fn box_mean_plane(src: &Plane, radius: usize) -> Plane {
    if radius == 0 {
        return src.clone();
    }
    let (w, h) = (src.width(), src.height());
    let integral = IntegralImage::new(src);
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row_out)| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for (x, o) in row_out.iter_mut().enumerate() {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            let count = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            *o = integral.rect_sum(x0, y0, x1, y1) / count;
        }
    });
    Plane::from_vec(w, h, out).expect("same size")
}

pub fn box_mean(img: &Image, radius: usize) -> Image {
    img.map_planes(|p| box_mean_plane(p, radius))
}

// Overlap weights of each destination cell with the source cells along one axis.
fn area_taps(src_len: usize, dst_len: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let mut taps = Vec::new();
            let mut s = lo.floor() as usize;
            while (s as f64) < hi && s < src_len {
                let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((s, overlap / scale));
                }
                s += 1;
            }
            taps
        })
        .collect()
}

/// Area-weighted resampling (exact box averaging for integer factors).
pub fn resize_area_plane(src: &Plane, width: usize, height: usize) -> Plane {
    if width == src.width() && height == src.height() {
        return src.clone();
    }
    let xt = area_taps(src.width(), width);
    let yt = area_taps(src.height(), height);
    // horizontal pass
    let mut tmp = vec![0.0; width * src.height()];
    for y in 0..src.height() {
        let row = src.row(y);
        for (x, taps) in xt.iter().enumerate() {
            tmp[y * width + x] = taps.iter().map(|&(s, wgt)| wgt * row[s]).sum();
        }
    }
    let mut out = vec![0.0; width * height];
    for (y, taps) in yt.iter().enumerate() {
        for &(s, wgt) in taps {
            for x in 0..width {
                out[y * width + x] += wgt * tmp[s * width + x];
            }
        }
    }
    Plane::from_vec(width, height, out).expect("same size")
}

pub fn resize_area(img: &Image, width: usize, height: usize) -> Image {
    img.map_planes(|p| resize_area_plane(p, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.gen())
    }

    #[test]
    fn image_resize_reports_new_size() {
        let img = Image::new(24, 18, 3, 0.5);
        let r = resize_area(&img, 12, 9);
        assert_eq!((r.width(), r.height(), r.channels()), (12, 9, 3));
        assert_eq!(r.plane(2).width(), 12);
    }

    #[test]
    fn blur_keeps_constants() {
        let p = Plane::new(17, 9, 0.37);
        for sigma in [0.5, 2.0, 7.5] {
            let b = gaussian_blur_plane(&p, sigma).unwrap();
            assert!(b.max_abs_diff(&p) < 1e-12);
        }
    }

    #[test]
    fn blur_zero_sigma_is_identity() {
        let p = random_plane(12, 7, 1);
        assert_eq!(gaussian_blur_plane(&p, 0.0).unwrap(), p);
    }

    #[test]
    fn blur_rejects_negative_sigma() {
        let p = Plane::zeros(4, 4);
        assert!(gaussian_blur_plane(&p, -1.0).is_err());
        assert!(gaussian_blur_plane(&p, f64::NAN).is_err());
    }

    #[test]
    fn impulse_matches_analytic_gaussian() {
        // oracle: direct evaluation of exp(-r^2 / 2 s^2) on the truncated
        // support, normalized to unit mass
        let n = 31;
        let c = 15;
        let sigma: f64 = 2.0;
        let mut p = Plane::zeros(n, n);
        p.set(c, c, 1.0);
        let b = gaussian_blur_plane(&p, sigma).unwrap();
        let radius = (3.0 * sigma).ceil() as i64;
        let g = |d: i64| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-radius..=radius).map(g).sum::<f64>().powi(2);
        let mut total = 0.0;
        for y in 0..n {
            for x in 0..n {
                let (dx, dy) = (x as i64 - c as i64, y as i64 - c as i64);
                let expected = if dx.abs() <= radius && dy.abs() <= radius {
                    g(dx) * g(dy) / norm
                } else {
                    0.0
                };
                let analytic = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()
                    / (2.0 * std::f64::consts::PI * sigma * sigma);
                assert!((b.get(x, y) - expected).abs() < 1e-12);
                if dx.abs() <= radius && dy.abs() <= radius {
                    assert!((b.get(x, y) - analytic).abs() < 1e-4);
                }
                total += b.get(x, y);
            }
        }
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn blur_preserves_mean_with_constant_border() {
        // clamp-to-edge is unbiased when the outer 3-sigma band is constant
        let sigma: f64 = 2.5;
        let margin = (3.0 * sigma).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = Plane::from_fn(64, 48, |x, y| {
            if x < 2 * margin || y < 2 * margin || x >= 64 - 2 * margin || y >= 48 - 2 * margin {
                0.4
            } else {
                rng.gen()
            }
        });
        let b = gaussian_blur_plane(&p, sigma).unwrap();
        assert!((b.mean() - p.mean()).abs() < 1e-4);
    }

    fn naive_box(p: &Plane, r: usize) -> Plane {
        let (w, h) = (p.width() as isize, p.height() as isize);
        let r = r as isize;
        Plane::from_fn(p.width(), p.height(), |x, y| {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in (y as isize - r)..=(y as isize + r) {
                for xx in (x as isize - r)..=(x as isize + r) {
                    if xx >= 0 && yy >= 0 && xx < w && yy < h {
                        s += p.get(xx as usize, yy as usize);
                        n += 1.0;
                    }
                }
            }
            s / n
        })
    }

    #[test]
    fn box_mean_matches_brute_force() {
        let p = random_plane(16, 16, 3);
        for r in [1, 3, 7, 20] {
            assert!(box_mean_plane(&p, r).max_abs_diff(&naive_box(&p, r)) < 1e-6);
        }
        let q = random_plane(23, 5, 4);
        assert!(box_mean_plane(&q, 3).max_abs_diff(&naive_box(&q, 3)) < 1e-6);
    }

    #[test]
    fn box_mean_trivial_cases() {
        let p = random_plane(9, 9, 5);
        assert_eq!(box_mean_plane(&p, 0), p);
        let c = Plane::new(9, 9, 0.25);
        assert!(box_mean_plane(&c, 4).max_abs_diff(&c) < 1e-12);
    }

    #[test]
    fn resize_area_integer_factor_averages_blocks() {
        let p = random_plane(8, 6, 6);
        let r = resize_area_plane(&p, 4, 3);
        for y in 0..3 {
            for x in 0..4 {
                let m = (p.get(2 * x, 2 * y)
                    + p.get(2 * x + 1, 2 * y)
                    + p.get(2 * x, 2 * y + 1)
                    + p.get(2 * x + 1, 2 * y + 1))
                    / 4.0;
                assert!((r.get(x, y) - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn resize_area_preserves_mean() {
        let p = random_plane(33, 25, 7);
        let r = resize_area_plane(&p, 10, 7);
        assert!((r.mean() - p.mean()).abs() < 1e-12);
    }
}
