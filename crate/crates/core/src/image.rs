//! Planar floating-point rasters and the file codecs around them.
//!
//! [`Plane`] is a single signed channel with no range constraint; Laplacian
//! layers, energy maps and correspondence components live in planes.
//! [`Image`] groups one or three planes whose samples are kept in `[0, 1]`
//! whenever they come from or go to a file.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};

/// Rec. 709 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// A single row-major channel of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, 0.0)
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "plane of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with coordinates clamped to the plane.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample at a real-valued position, clamped to the plane bounds.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let top = if fx == 0.0 {
            self.get(x0, y0)
        } else {
            self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx
        };
        if fy == 0.0 {
            return top;
        }
        let bottom = if fx == 0.0 {
            self.get(x0, y1)
        } else {
            self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx
        };
        top * (1.0 - fy) + bottom * fy
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-wise combination of two planes of equal size.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Result<Plane> {
        crate::error::ensure_same_size!(self, other, "zip_map");
        Ok(Plane {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Plane) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A planar image with one (gray) or three (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, fill: f64) -> Self {
        Image {
            width,
            height,
            planes: (0..channels).map(|_| Plane::new(width, height, fill)).collect(),
        }
    }

    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidArgument("image needs at least one channel".into()))?;
        let (width, height) = (first.width, first.height);
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {}",
                planes.len()
            )));
        }
        for p in &planes[1..] {
            crate::error::ensure_same_size!(first, p, "channel planes");
        }
        Ok(Image {
            width,
            height,
            planes,
        })
    }

    pub fn from_plane(plane: Plane) -> Self {
        Image {
            width: plane.width,
            height: plane.height,
            planes: vec![plane],
        }
    }

    /// Build an image from interleaved samples (`RGBRGB...` or gray).
    pub fn from_interleaved(
        width: usize,
        height: usize,
        channels: usize,
        samples: &[f64],
    ) -> Result<Self> {
        if samples.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        let planes = (0..channels)
            .map(|c| {
                Plane::from_vec(
                    width,
                    height,
                    samples.iter().skip(c).step_by(channels).copied().collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Image::from_planes(planes)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    /// Total sample count, `width * height * channels`.
    pub fn sample_count(&self) -> usize {
        self.width * self.height * self.planes.len()
    }

    pub fn plane(&self, c: usize) -> &Plane {
        &self.planes[c]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut Plane {
        &mut self.planes[c]
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.planes[c].get(x, y)
    }

    /// Apply a plane operation to each channel.
    pub fn try_map_planes(&self, f: impl Fn(&Plane) -> Result<Plane>) -> Result<Image> {
        Image::from_planes(self.planes.iter().map(f).collect::<Result<Vec<_>>>()?)
    }

    /// Apply a plane operation to each channel; `f` may change the size but
    /// must treat every channel alike.
    pub fn map_planes(&self, f: impl Fn(&Plane) -> Plane) -> Image {
        Image::from_planes(self.planes.iter().map(f).collect()).expect("channels resized alike")
    }

    pub fn clamp01(&self) -> Image {
        self.map_planes(|p| p.map(|v| v.clamp(0.0, 1.0)))
    }

    /// Iterate samples in interleaved order.
    pub fn interleaved(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * self.channels());
        for i in 0..n {
            for p in &self.planes {
                out.push(p.data[i]);
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.planes
            .iter()
            .zip(&other.planes)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Load a PNG or JPEG file, normalizing samples by the bit-depth maximum.
///
/// Color sources yield 3 channels, grayscale sources 1 channel. Alpha is
/// dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::format(path, "zero-dimension image"));
    }
    let gray = !decoded.color().has_color();
    let sixteen = decoded.color().bytes_per_pixel() / decoded.color().channel_count() > 1;
    let img = match (gray, sixteen) {
        (true, false) => {
            let buf = decoded.into_luma8();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Image::from_plane(Plane::from_vec(w, h, data)?)
        }
        (true, true) => {
            let buf = decoded.into_luma16();
            let data = buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            Image::from_plane(Plane::from_vec(w, h, data)?)
        }
        (false, false) => {
            let buf = decoded.into_rgb8();
            let samples: Vec<f64> = buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            Image::from_interleaved(w, h, 3, &samples)?
        }
        (false, true) => {
            let buf = decoded.into_rgb16();
            let samples: Vec<f64> = buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect();
            Image::from_interleaved(w, h, 3, &samples)?
        }
    };
    Ok(img)
}

#[inline]
fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Save as 8-bit; the container follows the file extension.
pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u8> = img
        .interleaved()
        .into_iter()
        .map(|v| quantize(v, 255.0) as u8)
        .collect();
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).unwrap())
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).unwrap())
    };
    dynamic.save(path).map_err(|e| Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Save as a 16-bit PNG.
pub fn save_image_16(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let raw: Vec<u16> = img
        .interleaved()
        .into_iter()
        .map(|v| quantize(v, 65535.0) as u16)
        .collect();
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, raw).unwrap())
    } else {
        DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, raw).unwrap())
    };
    dynamic
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Rec. 709 luma. Single-channel input passes through unchanged.
pub fn to_luma(img: &Image) -> Image {
    if img.channels() == 1 {
        return img.clone();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = r
        .data()
        .iter()
        .zip(g.data())
        .zip(b.data())
        .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
        .collect();
    Image::from_plane(Plane {
        width: img.width,
        height: img.height,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_constants() {
        let px = |r, g, b| {
            let img = Image::from_interleaved(1, 1, 3, &[r, g, b]).unwrap();
            to_luma(&img).get(0, 0, 0)
        };
        assert!((px(1.0, 1.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((px(0.0, 1.0, 0.0) - 0.7152).abs() < 1e-12);
        assert!((px(0.5, 0.5, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn luma_passes_gray_through() {
        let img = Image::from_plane(Plane::from_fn(3, 2, |x, y| (x + y) as f64 / 4.0));
        assert_eq!(to_luma(&img), img);
    }

    #[test]
    fn bilinear_at_integers_is_exact() {
        let p = Plane::from_fn(5, 4, |x, y| (x * 7 + y * 3) as f64 * 0.013);
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(p.sample_bilinear(x as f64, y as f64), p.get(x, y));
            }
        }
        assert!((p.sample_bilinear(1.5, 0.0) - 0.5 * (p.get(1, 0) + p.get(2, 0))).abs() < 1e-15);
    }

    #[test]
    fn interleaved_roundtrip() {
        let samples: Vec<f64> = (0..24).map(|i| i as f64 / 24.0).collect();
        let img = Image::from_interleaved(4, 2, 3, &samples).unwrap();
        assert_eq!(img.interleaved(), samples);
        assert_eq!(img.get(1, 0, 2), samples[5]);
    }

    #[test]
    fn rejects_bad_channel_count() {
        let p = Plane::zeros(2, 2);
        assert!(Image::from_planes(vec![p.clone(), p]).is_err());
        assert!(Image::from_planes(vec![]).is_err());
    }
}
