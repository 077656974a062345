//! Landmark-driven alignment of exemplars to the input frame.
//!
//! The input landmark set is Delaunay-triangulated; each triangle carries the
//! affine map onto the matching exemplar triangle, giving a dense
//! [`CorrespondenceField`]. An optional block-matching pass refines the
//! field, and [`warp`] pulls exemplar samples through it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{ensure_same_size, Error, Result};
use crate::filter::{gaussian_blur_plane, resize_area_plane};
use crate::image::{Image, Plane};
use crate::landmarks::{LandmarkSet, Point};

/// Triangles below this area (px^2) are dropped from meshes.
pub const DEGENERATE_AREA: f64 = 1e-6;

/// Per-pixel displacement: input pixel `(x, y)` samples the exemplar at
/// `(x + dx, y + dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceField {
    pub dx: Plane,
    pub dy: Plane,
}

impl CorrespondenceField {
    pub fn zero(width: usize, height: usize) -> Self {
        CorrespondenceField {
            dx: Plane::zeros(width, height),
            dy: Plane::zeros(width, height),
        }
    }

    pub fn constant(width: usize, height: usize, dx: f64, dy: f64) -> Self {
        CorrespondenceField {
            dx: Plane::new(width, height, dx),
            dy: Plane::new(width, height, dy),
        }
    }

    pub fn width(&self) -> usize {
        self.dx.width()
    }

    pub fn height(&self) -> usize {
        self.dx.height()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        (self.dx.get(x, y), self.dy.get(x, y))
    }

    /// Bilinearly interpolated displacement at a real position.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        (self.dx.sample_bilinear(x, y), self.dy.sample_bilinear(x, y))
    }

    pub fn is_finite(&self) -> bool {
        self.dx.data().iter().chain(self.dy.data()).all(|v| v.is_finite())
    }

    pub fn mean_magnitude(&self) -> f64 {
        let n = self.dx.len() as f64;
        self.dx
            .data()
            .iter()
            .zip(self.dy.data())
            .map(|(a, b)| a.hypot(*b))
            .sum::<f64>()
            / n
    }

    /// Write in the Middlebury `.flo` layout (magic, width, height, then
    /// interleaved little-endian `f32` pairs).
    pub fn write_flo(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(&202021.25f32.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.width() as i32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.height() as i32).to_le_bytes()).map_err(io)?;
        for (a, b) in self.dx.data().iter().zip(self.dy.data()) {
            w.write_all(&(*a as f32).to_le_bytes()).map_err(io)?;
            w.write_all(&(*b as f32).to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Affine map `p -> A p + t`, stored row-major as `[a, b, tx, c, d, ty]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2(pub [f64; 6]);

impl Affine2 {
    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        Point::new(m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5])
    }

    /// The affine map sending triangle `src` onto triangle `dst` vertex by vertex.
    pub fn from_triangles(src: [Point; 3], dst: [Point; 3]) -> Option<Self> {
        let (x0, y0) = (src[0].x, src[0].y);
        let (e1x, e1y) = (src[1].x - x0, src[1].y - y0);
        let (e2x, e2y) = (src[2].x - x0, src[2].y - y0);
        let det = e1x * e2y - e2x * e1y;
        if det.abs() < 2.0 * DEGENERATE_AREA {
            return None;
        }
        // inverse of [e1 e2]
        let (i00, i01, i10, i11) = (e2y / det, -e2x / det, -e1y / det, e1x / det);
        let (f1x, f1y) = (dst[1].x - dst[0].x, dst[1].y - dst[0].y);
        let (f2x, f2y) = (dst[2].x - dst[0].x, dst[2].y - dst[0].y);
        let a = f1x * i00 + f2x * i10;
        let b = f1x * i01 + f2x * i11;
        let c = f1y * i00 + f2y * i10;
        let d = f1y * i01 + f2y * i11;
        let tx = dst[0].x - a * x0 - b * y0;
        let ty = dst[0].y - c * x0 - d * y0;
        Some(Affine2([a, b, tx, c, d, ty]))
    }
}

/// Delaunay triangulation over landmark indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    /// Counter-clockwise index triples (in image coordinates, y down), each
    /// rotated so the smallest index comes first, sorted lexicographically.
    pub triangles: Vec<[usize; 3]>,
}

struct Vertex {
    pos: Point2<f64>,
    index: usize,
}

impl HasPosition for Vertex {
    type Scalar = f64;
    fn position(&self) -> Point2<f64> {
        self.pos
    }
}

fn signed_area2(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

/// Delaunay triangulation of a landmark set.
///
/// Points are inserted in index order, which fixes the choice among
/// co-circular configurations; the output is canonicalized so equal inputs
/// give equal meshes. Duplicate positions keep the highest index.
pub fn triangulate(landmarks: &LandmarkSet) -> Result<TriangleMesh> {
    let pts = landmarks.points();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "triangulation needs at least 3 points, got {}",
            pts.len()
        )));
    }
    let mut dt: DelaunayTriangulation<Vertex> = DelaunayTriangulation::new();
    for (index, p) in pts.iter().enumerate() {
        dt.insert(Vertex {
            pos: Point2::new(p.x, p.y),
            index,
        })
        .map_err(|e| Error::InvalidArgument(format!("landmark {index}: {e:?}")))?;
    }
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .filter_map(|face| {
            let [a, b, c] = face.vertices().map(|v| v.data().index);
            let area2 = signed_area2(pts[a], pts[b], pts[c]);
            if area2.abs() < 2.0 * DEGENERATE_AREA {
                return None;
            }
            let mut tri = if area2 > 0.0 { [a, b, c] } else { [a, c, b] };
            let min_pos = (0..3).min_by_key(|&i| tri[i]).unwrap();
            tri.rotate_left(min_pos);
            Some(tri)
        })
        .collect();
    if triangles.is_empty() {
        return Err(Error::Collinear);
    }
    triangles.sort_unstable();
    Ok(TriangleMesh { triangles })
}

impl TriangleMesh {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self, landmarks: &LandmarkSet, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| landmarks.points()[i])
    }

    /// Per-triangle affine maps from `input` to `exemplar` coordinates.
    pub fn affine_maps(&self, input: &LandmarkSet, exemplar: &LandmarkSet) -> Vec<Affine2> {
        (0..self.triangles.len())
            .map(|t| {
                Affine2::from_triangles(self.vertices(input, t), self.vertices(exemplar, t))
                    .expect("mesh excludes degenerate triangles")
            })
            .collect()
    }

    /// Assign each pixel to one containing triangle. Triangles are visited in
    /// mesh order and the first one whose closed area contains the pixel
    /// wins, so shared-edge pixels go to the lower-ordered triangle.
    pub fn locate_pixels(&self, landmarks: &LandmarkSet, width: usize, height: usize) -> Vec<Option<u32>> {
        const TOL: f64 = 1e-9;
        let mut owner = vec![None; width * height];
        for (t, _) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.vertices(landmarks, t);
            let area2 = signed_area2(a, b, c);
            let x_lo = a.x.min(b.x).min(c.x).floor().max(0.0) as usize;
            let y_lo = a.y.min(b.y).min(c.y).floor().max(0.0) as usize;
            let x_hi = (a.x.max(b.x).max(c.x).ceil() as usize).min(width - 1);
            let y_hi = (a.y.max(b.y).max(c.y).ceil() as usize).min(height - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    let slot = &mut owner[y * width + x];
                    if slot.is_some() {
                        continue;
                    }
                    let p = Point::new(x as f64, y as f64);
                    let w0 = signed_area2(b, c, p) / area2;
                    let w1 = signed_area2(c, a, p) / area2;
                    let w2 = 1.0 - w0 - w1;
                    if w0 >= -TOL && w1 >= -TOL && w2 >= -TOL {
                        *slot = Some(t as u32);
                    }
                }
            }
        }
        owner
    }
}

/// Dense field from per-triangle affine maps between landmark sets.
///
/// Pixels outside every triangle (only possible if the set lacks the border
/// points or the mesh dropped a degenerate triangle) take the displacement of
/// the nearest landmark.
pub fn local_affine_field(
    input_lm: &LandmarkSet,
    exemplar_lm: &LandmarkSet,
    mesh: &TriangleMesh,
    width: usize,
    height: usize,
) -> Result<CorrespondenceField> {
    if input_lm.len() != exemplar_lm.len() {
        return Err(Error::InvalidArgument(format!(
            "landmark sets differ in size: {} vs {}",
            input_lm.len(),
            exemplar_lm.len()
        )));
    }
    let maps = mesh.affine_maps(input_lm, exemplar_lm);
    let owner = mesh.locate_pixels(input_lm, width, height);
    let mut dx = vec![0.0; width * height];
    let mut dy = vec![0.0; width * height];
    dx.par_chunks_mut(width)
        .zip(dy.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row_x, row_y))| {
            for x in 0..width {
                let p = Point::new(x as f64, y as f64);
                let q = match owner[y * width + x] {
                    Some(t) => maps[t as usize].apply(p),
                    None => nearest_translation(input_lm, exemplar_lm, p),
                };
                row_x[x] = q.x - p.x;
                row_y[x] = q.y - p.y;
            }
        });
    Ok(CorrespondenceField {
        dx: Plane::from_vec(width, height, dx)?,
        dy: Plane::from_vec(width, height, dy)?,
    })
}

fn nearest_translation(input_lm: &LandmarkSet, exemplar_lm: &LandmarkSet, p: Point) -> Point {
    let (i, _) = input_lm
        .points()
        .iter()
        .enumerate()
        .map(|(i, q)| (i, (q.x - p.x).powi(2) + (q.y - p.y).powi(2)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let (a, b) = (input_lm.points()[i], exemplar_lm.points()[i]);
    Point::new(p.x + b.x - a.x, p.y + b.y - a.y)
}

pub fn warp_plane(src: &Plane, field: &CorrespondenceField) -> Plane {
    let (w, h) = (field.width(), field.height());
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let (dx, dy) = field.at(x, y);
            *o = src.sample_bilinear(x as f64 + dx, y as f64 + dy);
        }
    });
    Plane::from_vec(w, h, out).expect("field size")
}

/// Inverse warp with bilinear sampling; the output takes the field's size.
pub fn warp(exemplar: &Image, field: &CorrespondenceField) -> Image {
    Image::from_planes(exemplar.planes().iter().map(|p| warp_plane(p, field)).collect())
        .expect("channel count preserved")
}

/// `result(x) = a(x + b(x)) + b(x)`: follow `b` first, then `a`.
pub fn compose(a: &CorrespondenceField, b: &CorrespondenceField) -> Result<CorrespondenceField> {
    ensure_same_size!(a.dx, b.dx, "compose");
    let (w, h) = (a.width(), a.height());
    let mut dx = Plane::zeros(w, h);
    let mut dy = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (bx, by) = b.at(x, y);
            let (ax, ay) = a.sample(x as f64 + bx, y as f64 + by);
            dx.set(x, y, ax + bx);
            dy.set(x, y, ay + by);
        }
    }
    Ok(CorrespondenceField { dx, dy })
}

/// Parameters of the coarse-to-fine block matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatchParams {
    pub levels: usize,
    pub search_radius: usize,
    pub block_size: usize,
    pub smooth_sigma: f64,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        BlockMatchParams {
            levels: 3,
            search_radius: 4,
            block_size: 8,
            smooth_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Refinement {
    #[default]
    Off,
    BlockMatch(BlockMatchParams),
}

fn gradient_magnitude(p: &Plane) -> Plane {
    let (w, h) = (p.width() as isize, p.height() as isize);
    Plane::from_fn(p.width(), p.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let gx = p.get_clamped((x + 1).min(w - 1), y) - p.get_clamped((x - 1).max(0), y);
        let gy = p.get_clamped(x, (y + 1).min(h - 1)) - p.get_clamped(x, (y - 1).max(0));
        0.5 * gx.hypot(gy)
    })
}

/// Small residual field aligning `warped` to `target`: `warped(x + r(x))`
/// approximates `target(x)`. Both images are matched on gradient-magnitude
/// descriptors of their luma.
pub fn refine_dense(
    warped: &Image,
    target: &Image,
    refinement: &Refinement,
) -> Result<CorrespondenceField> {
    ensure_same_size!(warped, target, "refine_dense");
    let (w, h) = (warped.width(), warped.height());
    let params = match refinement {
        Refinement::Off => return Ok(CorrespondenceField::zero(w, h)),
        Refinement::BlockMatch(p) => *p,
    };
    if params.levels == 0 || params.block_size == 0 {
        return Err(Error::InvalidArgument(
            "block matching needs levels >= 1 and block_size >= 1".into(),
        ));
    }
    let src_luma = crate::image::to_luma(warped).into_planes().remove(0);
    let dst_luma = crate::image::to_luma(target).into_planes().remove(0);

    // pyramid of luma, finest first
    let mut src_pyr = vec![src_luma];
    let mut dst_pyr = vec![dst_luma];
    for _ in 1..params.levels {
        let (pw, ph) = (src_pyr.last().unwrap().width(), src_pyr.last().unwrap().height());
        if pw < 2 * params.block_size || ph < 2 * params.block_size {
            break;
        }
        let (nw, nh) = (pw / 2, ph / 2);
        let s = resize_area_plane(src_pyr.last().unwrap(), nw, nh);
        let d = resize_area_plane(dst_pyr.last().unwrap(), nw, nh);
        src_pyr.push(s);
        dst_pyr.push(d);
    }

    let mut field: Option<CorrespondenceField> = None;
    for level in (0..src_pyr.len()).rev() {
        let src = gradient_magnitude(&src_pyr[level]);
        let dst = gradient_magnitude(&dst_pyr[level]);
        let (lw, lh) = (src.width(), src.height());
        let init = match field.take() {
            None => CorrespondenceField::zero(lw, lh),
            Some(f) => {
                let sx = lw as f64 / f.width() as f64;
                let sy = lh as f64 / f.height() as f64;
                CorrespondenceField {
                    dx: resize_nearest(&f.dx, lw, lh).map(|v| v * sx),
                    dy: resize_nearest(&f.dy, lw, lh).map(|v| v * sy),
                }
            }
        };
        field = Some(match_blocks(&src, &dst, &init, &params));
    }
    let f = field.expect("at least one level");
    Ok(CorrespondenceField {
        dx: gaussian_blur_plane(&f.dx, params.smooth_sigma)?,
        dy: gaussian_blur_plane(&f.dy, params.smooth_sigma)?,
    })
}

fn resize_nearest(p: &Plane, w: usize, h: usize) -> Plane {
    Plane::from_fn(w, h, |x, y| {
        let sx = (x * p.width() / w).min(p.width() - 1);
        let sy = (y * p.height() / h).min(p.height() - 1);
        p.get(sx, sy)
    })
}

// Exhaustive integer search per block around the initial displacement; ties
// go to the candidate nearest the initial guess.
fn match_blocks(
    src: &Plane,
    dst: &Plane,
    init: &CorrespondenceField,
    params: &BlockMatchParams,
) -> CorrespondenceField {
    let (w, h) = (src.width(), src.height());
    let bs = params.block_size;
    let r = params.search_radius as isize;
    let mut offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|oy| (-r..=r).map(move |ox| (ox, oy)))
        .collect();
    offsets.sort_by_key(|&(ox, oy)| (ox * ox + oy * oy, oy, ox));

    let blocks_x = w.div_ceil(bs);
    let blocks_y = h.div_ceil(bs);
    let block_fields: Vec<(f64, f64)> = (0..blocks_x * blocks_y)
        .into_par_iter()
        .map(|b| {
            let (bx, by) = (b % blocks_x, b / blocks_x);
            let (x0, y0) = (bx * bs, by * bs);
            let (x1, y1) = ((x0 + bs).min(w), (y0 + bs).min(h));
            let (cx, cy) = ((x0 + x1) / 2, (y0 + y1) / 2);
            let (ix, iy) = init.at(cx.min(w - 1), cy.min(h - 1));
            let (ix, iy) = (ix.round() as isize, iy.round() as isize);
            let mut best = (f64::INFINITY, 0isize, 0isize);
            for &(ox, oy) in &offsets {
                let (ddx, ddy) = (ix + ox, iy + oy);
                let mut ssd = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let s = src.get_clamped(x as isize + ddx, y as isize + ddy);
                        let d = dst.get(x, y) - s;
                        ssd += d * d;
                    }
                }
                if ssd < best.0 - 1e-12 {
                    best = (ssd, ddx, ddy);
                }
            }
            (best.1 as f64, best.2 as f64)
        })
        .collect();

    let dx = Plane::from_fn(w, h, |x, y| block_fields[(y / bs) * blocks_x + x / bs].0);
    let dy = Plane::from_fn(w, h, |x, y| block_fields[(y / bs) * blocks_x + x / bs].1);
    CorrespondenceField { dx, dy }
}
