//! Facial landmark sets.
//!
//! A landmark file holds the 68 points of the usual facial layout (jaw, brows,
//! nose, eyes, mouth), one `x y` pair per line, separated by whitespace or a
//! comma. Loading appends eight points on the image rectangle (corners and edge
//! midpoints) so that a triangulation of the set covers the whole frame.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FACIAL_LANDMARKS: usize = 68;
pub const BORDER_LANDMARKS: usize = 8;
pub const TOTAL_LANDMARKS: usize = FACIAL_LANDMARKS + BORDER_LANDMARKS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Ordered landmark positions in pixel coordinates; index `i` names the same
/// anatomical point in every set of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
}

/// The eight rectangle points for a `width x height` frame, clockwise from the
/// top-left corner.
pub fn border_points(width: usize, height: usize) -> [Point; BORDER_LANDMARKS] {
    let (r, b) = ((width - 1) as f64, (height - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(r / 2.0, 0.0),
        Point::new(r, 0.0),
        Point::new(r, b / 2.0),
        Point::new(r, b),
        Point::new(r / 2.0, b),
        Point::new(0.0, b),
        Point::new(0.0, b / 2.0),
    ]
}

impl LandmarkSet {
    /// Arbitrary point set; every point must be finite and inside the frame.
    pub fn new(points: Vec<Point>, width: usize, height: usize) -> Result<Self> {
        let (max_x, max_y) = ((width as f64) - 1.0, (height as f64) - 1.0);
        for (index, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::Landmark {
                    index,
                    message: format!("non-finite coordinate ({}, {})", p.x, p.y),
                });
            }
            if p.x < 0.0 || p.y < 0.0 || p.x > max_x || p.y > max_y {
                return Err(Error::Landmark {
                    index,
                    message: format!(
                        "({}, {}) lies outside the {width}x{height} image",
                        p.x, p.y
                    ),
                });
            }
        }
        Ok(LandmarkSet { points })
    }

    /// 68 facial points plus the synthesized border points.
    pub fn from_facial(facial: &[Point], width: usize, height: usize) -> Result<Self> {
        if facial.len() != FACIAL_LANDMARKS {
            return Err(Error::InvalidArgument(format!(
                "expected {FACIAL_LANDMARKS} landmarks, found {}",
                facial.len()
            )));
        }
        let mut points = facial.to_vec();
        points.extend_from_slice(&border_points(width, height));
        LandmarkSet::new(points, width, height)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The leading facial points (everything but the synthesized border).
    pub fn facial(&self) -> &[Point] {
        let n = self.points.len().saturating_sub(BORDER_LANDMARKS);
        &self.points[..n]
    }

    /// Rescale facial points for a resampled image (pixel-centre convention)
    /// and regenerate the border for the new frame.
    pub fn rescaled(&self, new_width: usize, new_height: usize, sx: f64, sy: f64) -> Result<Self> {
        let (mx, my) = ((new_width - 1) as f64, (new_height - 1) as f64);
        let facial: Vec<Point> = self
            .facial()
            .iter()
            .map(|p| {
                Point::new(
                    ((p.x + 0.5) * sx - 0.5).clamp(0.0, mx),
                    ((p.y + 0.5) * sy - 0.5).clamp(0.0, my),
                )
            })
            .collect();
        LandmarkSet::from_facial(&facial, new_width, new_height)
    }
}

/// Parse raw `x y` pairs; blank lines and `#` comments are skipped.
pub fn parse_points(text: &str, path: &Path) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::format(
                path,
                format!("line {}: expected `x y`, got {line:?}", lineno + 1),
            ));
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| {
                Error::format(path, format!("line {}: bad number {s:?}", lineno + 1))
            })
        };
        points.push(Point::new(parse(fields[0])?, parse(fields[1])?));
    }
    Ok(points)
}

/// Load a 68-point landmark file for an image of the given size.
pub fn load_landmarks(path: impl AsRef<Path>, width: usize, height: usize) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let points = parse_points(&text, path)?;
    LandmarkSet::from_facial(&points, width, height).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_landmarks(path: impl AsRef<Path>, points: &[Point]) -> Result<()> {
    let path = path.as_ref();
    let text: String = points
        .iter()
        .map(|p| format!("{} {}\n", p.x, p.y))
        .collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| Point::new(100.0 + (i % 10) as f64 * 50.0, 200.0 + (i / 10) as f64 * 40.0))
            .collect()
    }

    #[test]
    fn border_synthesis() {
        let set = LandmarkSet::from_facial(&grid_points(68), 1320, 1000).unwrap();
        assert_eq!(set.len(), 76);
        // 1-based point 69 is the top-left corner
        assert_eq!(set.points()[68], Point::new(0.0, 0.0));
        assert_eq!(set.points()[72], Point::new(1319.0, 999.0));
        assert_eq!(set.facial().len(), 68);
    }

    #[test]
    fn wrong_count_is_rejected() {
        let err = LandmarkSet::from_facial(&grid_points(67), 1320, 1000).unwrap_err();
        assert!(err.to_string().contains("expected 68"), "{err}");
    }

    #[test]
    fn out_of_bounds_names_index() {
        let mut pts = grid_points(68);
        pts[5] = Point::new(-3.0, 50.0);
        match LandmarkSet::from_facial(&pts, 1320, 1000).unwrap_err() {
            Error::Landmark { index, .. } => assert_eq!(index, 5),
            e => panic!("unexpected {e}"),
        }
        pts[5] = Point::new(f64::NAN, 50.0);
        assert!(matches!(
            LandmarkSet::from_facial(&pts, 1320, 1000),
            Err(Error::Landmark { index: 5, .. })
        ));
    }

    #[test]
    fn parses_commas_and_whitespace() {
        let pts = parse_points("1, 2\n# note\n\n3.5\t4\n5 6", Path::new("x")).unwrap();
        assert_eq!(pts, vec![Point::new(1.0, 2.0), Point::new(3.5, 4.0), Point::new(5.0, 6.0)]);
        assert!(parse_points("1 2 3", Path::new("x")).is_err());
        assert!(parse_points("1 a", Path::new("x")).is_err());
    }

    #[test]
    fn rescale_halves_coordinates() {
        let set = LandmarkSet::from_facial(&grid_points(68), 1320, 1000).unwrap();
        let half = set.rescaled(660, 500, 0.5, 0.5).unwrap();
        assert_eq!(half.len(), 76);
        assert!((half.points()[0].x - (100.5 * 0.5 - 0.5)).abs() < 1e-12);
        assert_eq!(half.points()[72], Point::new(659.0, 499.0));
    }
}
