//! Full-reference image quality.

use crate::error::{ensure_same_size, Error, Result};
use crate::image::Image;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_size!(a, b, "mse");
    if a.channels() != b.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} channels",
            a.channels(),
            b.channels()
        )));
    }
    let sum: f64 = a
        .planes()
        .iter()
        .zip(b.planes())
        .flat_map(|(p, q)| p.data().iter().zip(q.data()).map(|(x, y)| (x - y) * (x - y)))
        .sum();
    Ok(sum / a.sample_count() as f64)
}

/// Peak signal-to-noise ratio in dB with peak 1.0; identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Plane;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_infinite() {
        let a = Image::new(4, 4, 3, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let a = Image::new(8, 8, 3, 0.3);
        let b = Image::new(8, 8, 3, 0.4);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Image::from_plane(Plane::from_fn(13, 7, |_, _| rng.gen()));
        let b = Image::from_plane(Plane::from_fn(13, 7, |_, _| rng.gen()));
        let mut s = 0.0;
        for y in 0..7 {
            for x in 0..13 {
                s += (a.get(x, y, 0) - b.get(x, y, 0)).powi(2);
            }
        }
        let expected = 10.0 * (1.0 / (s / 91.0)).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn mismatch_rejected() {
        assert!(psnr(&Image::new(4, 4, 1, 0.0), &Image::new(4, 5, 1, 0.0)).is_err());
        assert!(psnr(&Image::new(4, 4, 1, 0.0), &Image::new(4, 4, 3, 0.0)).is_err());
    }
}
