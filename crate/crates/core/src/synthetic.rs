//! Procedural head-and-shoulders portraits with matching 68-point landmarks,
//! for fixtures and smoke runs.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::collection::{CollectionManifest, ExemplarEntry};
use crate::error::{Error, Result};
use crate::filter::gaussian_blur_plane;
use crate::image::{save_image, Image, Plane};
use crate::landmarks::{write_landmarks, Point, FACIAL_LANDMARKS};

/// Face ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
}

impl FaceGeometry {
    /// A centred face filling roughly the middle third of the frame.
    pub fn centered(width: usize, height: usize) -> Self {
        FaceGeometry {
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.47,
            rx: width as f64 * 0.17,
            ry: height as f64 * 0.3,
        }
    }

    pub fn shifted(self, dx: f64, dy: f64, scale: f64) -> Self {
        FaceGeometry {
            cx: self.cx + dx,
            cy: self.cy + dy,
            rx: self.rx * scale,
            ry: self.ry * scale,
        }
    }

    fn at(&self, u: f64, v: f64) -> Point {
        Point::new(self.cx + u * self.rx, self.cy + v * self.ry)
    }

    fn eye(&self, side: f64) -> (f64, f64) {
        (side * 0.4, -0.22)
    }
}

/// Tonal character of a rendered portrait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortraitStyle {
    pub skin: [f64; 3],
    pub background: [f64; 3],
    pub feature: [f64; 3],
    /// Amplitude of the shading across the face.
    pub shading: f64,
    /// Amplitude of the fine skin texture.
    pub texture: f64,
}

impl Default for PortraitStyle {
    fn default() -> Self {
        PortraitStyle {
            skin: [0.78, 0.6, 0.5],
            background: [0.35, 0.4, 0.45],
            feature: [0.25, 0.15, 0.12],
            shading: 0.12,
            texture: 0.05,
        }
    }
}

impl PortraitStyle {
    /// A distinct style per index: alternating warm/cool, low/high key.
    pub fn variant(i: usize) -> Self {
        let base = PortraitStyle::default();
        match i % 3 {
            0 => PortraitStyle {
                shading: 0.2,
                texture: 0.08,
                ..base
            },
            1 => PortraitStyle {
                skin: [0.62, 0.5, 0.45],
                background: [0.12, 0.12, 0.14],
                shading: 0.25,
                texture: 0.03,
                ..base
            },
            _ => PortraitStyle {
                skin: [0.88, 0.75, 0.66],
                background: [0.85, 0.85, 0.82],
                shading: 0.06,
                texture: 0.06,
                ..base
            },
        }
    }
}

fn ellipse_points(center: (f64, f64), radius: (f64, f64), n: usize, geom: &FaceGeometry) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let t = PI + 2.0 * PI * i as f64 / n as f64;
            geom.at(center.0 + radius.0 * t.cos(), center.1 + radius.1 * t.sin())
        })
        .collect()
}

/// The 68 points in the usual order: jaw (17), brows (5 + 5), nose bridge (4),
/// nostrils (5), eyes (6 + 6), outer lip (12), inner lip (8).
pub fn landmarks_68(geom: &FaceGeometry) -> Vec<Point> {
    let mut pts = Vec::with_capacity(FACIAL_LANDMARKS);
    for i in 0..17 {
        let t = PI - PI * i as f64 / 16.0;
        pts.push(geom.at(t.cos(), t.sin()));
    }
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let s = i as f64 / 4.0;
            let u = if side < 0.0 { -0.65 + 0.5 * s } else { 0.15 + 0.5 * s };
            let v = -0.42 - 0.06 * (PI * s).sin();
            pts.push(geom.at(u, v));
        }
    }
    for i in 0..4 {
        pts.push(geom.at(0.0, -0.2 + 0.09 * i as f64));
    }
    for i in 0..5 {
        let u = -0.16 + 0.08 * i as f64;
        pts.push(geom.at(u, 0.15 + 0.03 * (1.0 - (u / 0.16).abs())));
    }
    for side in [-1.0, 1.0] {
        pts.extend(ellipse_points(geom.eye(side), (0.15, 0.06), 6, geom));
    }
    pts.extend(ellipse_points((0.0, 0.5), (0.33, 0.11), 12, geom));
    pts.extend(ellipse_points((0.0, 0.5), (0.22, 0.04), 8, geom));
    debug_assert_eq!(pts.len(), FACIAL_LANDMARKS);
    pts
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

// Soft inside-ness of an ellipse in face coordinates, 1 inside, 0 outside.
fn blob(u: f64, v: f64, center: (f64, f64), radius: (f64, f64), softness: f64) -> f64 {
    let d = (((u - center.0) / radius.0).powi(2) + ((v - center.1) / radius.1).powi(2)).sqrt();
    1.0 - smoothstep(1.0 - softness, 1.0 + softness, d)
}

/// Render a portrait and its facial landmarks.
pub fn render_portrait(
    width: usize,
    height: usize,
    geom: &FaceGeometry,
    style: &PortraitStyle,
    seed: u64,
) -> (Image, Vec<Point>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Plane::from_fn(width, height, |_, _| rng.gen::<f64>() - 0.5);
    let grain_sigma = (width.min(height) as f64 / 250.0).max(0.7);
    let grain = gaussian_blur_plane(&noise, grain_sigma).expect("positive sigma");
    let grain_scale = 1.0 / (grain.data().iter().map(|v| v * v).sum::<f64>() / grain.len() as f64).sqrt().max(1e-12);

    let mut planes: Vec<Plane> = (0..3).map(|_| Plane::zeros(width, height)).collect();
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 - geom.cx) / geom.rx;
            let v = (y as f64 - geom.cy) / geom.ry;
            let face = blob(u, v, (0.0, 0.0), (1.0, 1.0), 0.04);
            let neck = blob(u, v, (0.0, 1.3), (0.55, 0.6), 0.05) * (1.0 - face);
            let skin_mask = (face + neck).min(1.0);
            let light = 1.0 + style.shading * (-0.8 * u - 0.3 * v).tanh();
            let hair = blob(u, v, (0.0, -0.75), (1.05, 0.45), 0.08) * (1.0 - blob(u, v, (0.0, -0.1), (0.95, 0.75), 0.05));
            let mut features = 0.0f64;
            for side in [-1.0, 1.0] {
                features = features.max(blob(u, v, geom.eye(side), (0.15, 0.06), 0.25));
                let brow_c = (side * 0.4, -0.46);
                features = features.max(0.8 * blob(u, v, brow_c, (0.25, 0.035), 0.3));
            }
            let mouth = blob(u, v, (0.0, 0.5), (0.33, 0.11), 0.2);
            let nose = 0.35 * blob(u, v, (0.0, 0.05), (0.09, 0.2), 0.5);
            let g = grain.get(x, y) * grain_scale * style.texture;
            let bg_ramp = 0.85 + 0.3 * (y as f64 / height as f64);
            for c in 0..3 {
                let skin = style.skin[c] * light * (1.0 - nose * 0.4) + g;
                let mut val = style.background[c] * bg_ramp * (1.0 - skin_mask) + skin * skin_mask;
                val = val * (1.0 - features) + style.feature[c] * features;
                let lip = [0.65, 0.3, 0.3][c] * light;
                val = val * (1.0 - mouth) + lip * mouth;
                val = val * (1.0 - hair) + (0.12 + 0.5 * g) * hair;
                planes[c].set(x, y, val.clamp(0.0, 1.0));
            }
        }
    }
    (
        Image::from_planes(planes).expect("three planes"),
        landmarks_68(geom),
    )
}

/// Save `<stem>.png` and `<stem>.txt` under `dir`.
pub fn write_fixture(dir: &Path, stem: &str, img: &Image, points: &[Point]) -> Result<ExemplarEntry> {
    let entry = ExemplarEntry {
        image: dir.join(format!("{stem}.png")),
        landmarks: dir.join(format!("{stem}.txt")),
    };
    save_image(&entry.image, img)?;
    write_landmarks(&entry.landmarks, points)?;
    Ok(entry)
}

/// Write a collection manifest listing `entries`.
pub fn write_collection(path: &Path, style_name: &str, entries: &[ExemplarEntry]) -> Result<PathBuf> {
    let manifest = CollectionManifest {
        style_name: style_name.to_string(),
        exemplars: entries.to_vec(),
    };
    fs::write(path, manifest.to_text()).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmarks::LandmarkSet;

    #[test]
    fn landmarks_fit_the_frame() {
        let (w, h) = (330, 250);
        let geom = FaceGeometry::centered(w, h);
        let pts = landmarks_68(&geom);
        assert_eq!(pts.len(), 68);
        assert!(LandmarkSet::from_facial(&pts, w, h).is_ok());
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let geom = FaceGeometry::centered(120, 100);
        let (a, _) = render_portrait(120, 100, &geom, &PortraitStyle::default(), 3);
        let (b, _) = render_portrait(120, 100, &geom, &PortraitStyle::default(), 3);
        assert_eq!(a, b);
        assert!(a.planes().iter().all(|p| p.data().iter().all(|v| (0.0..=1.0).contains(v))));
        // face darker features than skin at an eye centre
        let eye = landmarks_68(&geom)[36];
        let cheek = (geom.cx - 0.5 * geom.rx, geom.cy + 0.2 * geom.ry);
        let lum = |x: f64, y: f64| a.get(x as usize, y as usize, 0);
        assert!(lum(eye.x + 0.15 * geom.rx, eye.y) < lum(cheek.0, cheek.1));
    }
}
