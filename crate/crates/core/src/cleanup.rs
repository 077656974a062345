//! Seam removal with a guided filter and detail restoration.
//!
//! The remapped image `R` and the input `T` are both smoothed by a guided
//! filter steered by the luma of `T`; the detail `T` loses under that filter
//! is added back to the smoothed `R`.

use rayon::prelude::*;

use crate::error::{ensure_same_size, Error, Result};
use crate::filter::box_mean_plane;
use crate::image::{to_luma, Image, Plane};

/// Windows whose regularized guide variance falls below this are treated as
/// flat: `a = 0`, `b = mean(src)`.
pub const FLAT_WINDOW: f64 = 1e-12;

fn guided_filter_plane(src: &Plane, guide: &Plane, radius: usize, eps: f64) -> Plane {
    let mean_i = box_mean_plane(guide, radius);
    let mean_p = box_mean_plane(src, radius);
    let ip = guide.zip_map(src, |i, p| i * p).expect("same size");
    let ii = guide.map(|i| i * i);
    let corr_ip = box_mean_plane(&ip, radius);
    let corr_ii = box_mean_plane(&ii, radius);

    let n = src.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    a.par_iter_mut()
        .zip(b.par_iter_mut())
        .enumerate()
        .for_each(|(i, (a, b))| {
            let (mi, mp) = (mean_i.data()[i], mean_p.data()[i]);
            let var = (corr_ii.data()[i] - mi * mi).max(0.0);
            let cov = corr_ip.data()[i] - mi * mp;
            if var + eps < FLAT_WINDOW {
                *a = 0.0;
                *b = mp;
            } else {
                *a = cov / (var + eps);
                *b = mp - *a * mi;
            }
        });
    let (w, h) = (src.width(), src.height());
    let mean_a = box_mean_plane(&Plane::from_vec(w, h, a).expect("sized"), radius);
    let mean_b = box_mean_plane(&Plane::from_vec(w, h, b).expect("sized"), radius);
    let data = mean_a
        .data()
        .iter()
        .zip(mean_b.data())
        .zip(guide.data())
        .map(|((&ma, &mb), &i)| ma * i + mb)
        .collect();
    Plane::from_vec(w, h, data).expect("sized")
}

/// Guided filter of every channel of `src`, steered by a single-channel guide.
pub fn guided_filter(src: &Image, guide: &Image, radius: usize, eps: f64) -> Result<Image> {
    ensure_same_size!(src, guide, "guided filter");
    if guide.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "guide must have one channel, got {}",
            guide.channels()
        )));
    }
    if radius < 1 {
        return Err(Error::InvalidArgument("guided filter radius must be >= 1".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("guided filter eps must be >= 0, got {eps}")));
    }
    let g = guide.plane(0);
    Ok(src.map_planes(|p| guided_filter_plane(p, g, radius, eps)))
}

/// `clamp(GF(R) + T - GF(T), 0, 1)` with the luma of `T` as guide.
pub fn remove_artifacts(remapped: &Image, input: &Image, radius: usize, eps: f64) -> Result<Image> {
    ensure_same_size!(remapped, input, "remove_artifacts");
    if remapped.channels() != input.channels() {
        return Err(Error::DimensionMismatch(format!(
            "remapped has {} channels, input {}",
            remapped.channels(),
            input.channels()
        )));
    }
    let guide = to_luma(input);
    let r_t = guided_filter(remapped, &guide, radius, eps)?;
    let t_t = guided_filter(input, &guide, radius, eps)?;
    let planes = (0..input.channels())
        .map(|c| {
            let sum = r_t.plane(c).zip_map(input.plane(c), |r, t| r + t)?;
            sum.zip_map(t_t.plane(c), |s, tt| (s - tt).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(planes)
}

/// `matte * img + (1 - matte) * background`.
pub fn substitute_background(img: &Image, matte: &Image, background: &Image) -> Result<Image> {
    ensure_same_size!(img, matte, "matte");
    ensure_same_size!(img, background, "background");
    if matte.channels() != 1 {
        return Err(Error::InvalidArgument("matte must have one channel".into()));
    }
    let m = matte.plane(0);
    let planes = (0..img.channels())
        .map(|c| {
            let bg = background.plane(c.min(background.channels() - 1));
            let fg = img.plane(c).zip_map(m, |v, a| a * v)?;
            let back = bg.zip_map(m, |v, a| (1.0 - a) * v)?;
            fg.zip_map(&back, |a, b| a + b)
        })
        .collect::<Result<Vec<_>>>()?;
    Image::from_planes(planes)
}

/// Energy of `p - box_mean(p, radius)` over a rectangle.
pub fn high_pass_energy(p: &Plane, radius: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let low = box_mean_plane(p, radius);
    let mut e = 0.0;
    for y in y0..y1 {
        for x in x0..x1 {
            let d = p.get(x, y) - low.get(x, y);
            e += d * d;
        }
    }
    e
}
