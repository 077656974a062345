//! Local contrast transfer.
//!
//! Each band of the input's Laplacian stack is rescaled by
//! `sqrt(S_E / (S_T + eps))`, where `S_T` is the input band energy and `S_E`
//! is the energy of the selected exemplars at the same pixel. The residual is
//! taken from the selected exemplars. Per-patch selections become per-pixel
//! weights through separable tent windows, so patch borders are feathered.

use rayon::prelude::*;

use crate::align::{warp_plane, CorrespondenceField};
use crate::error::{ensure_same_size, Error, Result};
use crate::image::{Image, Plane};
use crate::mrf::{LabelField, PatchGrid};
use crate::stack::{build_stack, energy_map, reconstruct, LaplacianStack};

/// Per-pixel convex weights over exemplars, derived from a label field.
///
/// Stored separably: each column and row keeps its tent taps onto patch
/// columns/rows, and the weight of exemplar `k` at `(x, y)` is the
/// tent-weighted mean of the covering nodes' label distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelWeights {
    width: usize,
    height: usize,
    exemplars: usize,
    cols: usize,
    col_taps: Vec<Vec<(usize, f64)>>,
    row_taps: Vec<Vec<(usize, f64)>>,
    distributions: Vec<f64>,
}

fn axis_taps(len: usize, offset: usize, count: usize, patch: usize, stride: usize) -> Vec<Vec<(usize, f64)>> {
    let half = (patch as f64 / 2.0).max(stride as f64);
    let lo = (offset + 1) as f64;
    let hi = (offset + (count - 1) * stride + patch - 1) as f64;
    (0..len)
        .map(|x| {
            let xe = (x as f64).clamp(lo, hi);
            let taps: Vec<(usize, f64)> = (0..count)
                .filter_map(|c| {
                    let center = (offset + c * stride) as f64 + patch as f64 / 2.0;
                    let t = 1.0 - (xe - center).abs() / half;
                    (t > 0.0).then_some((c, t))
                })
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(c, t)| (c, t / total)).collect()
        })
        .collect()
}

pub fn pixel_weights(labels: &LabelField, grid: &PatchGrid) -> Result<PixelWeights> {
    if labels.labels.len() != grid.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "label field has {} nodes, grid has {}",
            labels.labels.len(),
            grid.node_count()
        )));
    }
    let col_taps = axis_taps(grid.width, grid.offset_x, grid.cols, grid.patch_size, grid.stride);
    let row_taps = axis_taps(grid.height, grid.offset_y, grid.rows, grid.patch_size, grid.stride);
    if col_taps.iter().chain(&row_taps).any(|t| t.is_empty()) {
        return Err(Error::InvalidArgument("pixel outside every patch window".into()));
    }
    Ok(PixelWeights {
        width: grid.width,
        height: grid.height,
        exemplars: labels.exemplars,
        cols: grid.cols,
        col_taps,
        row_taps,
        distributions: labels.distributions.clone(),
    })
}

impl PixelWeights {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn exemplars(&self) -> usize {
        self.exemplars
    }

    #[inline]
    fn weight(&self, x: usize, y: usize, k: usize) -> f64 {
        let mut w = 0.0;
        for &(r, ty) in &self.row_taps[y] {
            for &(c, tx) in &self.col_taps[x] {
                let node = r * self.cols + c;
                w += tx * ty * self.distributions[node * self.exemplars + k];
            }
        }
        w
    }

    /// All exemplar weights at one pixel.
    pub fn at(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.exemplars).map(|k| self.weight(x, y, k)).collect()
    }

    /// Weight plane of exemplar `k`.
    pub fn plane(&self, k: usize) -> Plane {
        let mut data = vec![0.0; self.width * self.height];
        data.par_chunks_mut(self.width).enumerate().for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = self.weight(x, y, k);
            }
        });
        Plane::from_vec(self.width, self.height, data).expect("sized")
    }
}

fn accumulate_weighted(acc: &mut Plane, src: &Plane, weight: &Plane) {
    for ((a, &s), &w) in acc.data_mut().iter_mut().zip(src.data()).zip(weight.data()) {
        *a += w * s;
    }
}

fn blend_planes(planes: &[Plane], weights: &PixelWeights) -> Result<Plane> {
    if planes.len() != weights.exemplars() {
        return Err(Error::DimensionMismatch(format!(
            "{} planes for {} exemplar weights",
            planes.len(),
            weights.exemplars()
        )));
    }
    let mut acc = Plane::zeros(weights.width(), weights.height());
    for (k, p) in planes.iter().enumerate() {
        ensure_same_size!(acc, p, "blend input");
        accumulate_weighted(&mut acc, p, &weights.plane(k));
    }
    Ok(acc)
}

/// `S_E(p) = sum_k w_k(p) S_k(p)` over warped exemplar energy maps of one level.
pub fn blend_energy(energies: &[Plane], weights: &PixelWeights) -> Result<Plane> {
    Ok(blend_planes(energies, weights)?.map(|v| v.max(0.0)))
}

/// Weighted combination of warped exemplar residual planes.
pub fn blend_residual(residuals: &[Plane], weights: &PixelWeights) -> Result<Plane> {
    blend_planes(residuals, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferParams {
    pub depth: usize,
    pub eps: f64,
    pub gain_max: f64,
    pub keep_gains: bool,
}

impl Default for TransferParams {
    fn default() -> Self {
        TransferParams {
            depth: 5,
            eps: 1e-4,
            gain_max: 10.0,
            keep_gains: false,
        }
    }
}

/// Gain `sqrt(S_E / (S_T + eps))`, clamped to `[0, gain_max]`.
#[inline]
pub fn remap_gain(s_t: f64, s_e: f64, eps: f64, gain_max: f64) -> f64 {
    (s_e / (s_t + eps)).sqrt().clamp(0.0, gain_max)
}

pub fn remap_layer(layer: &Plane, s_t: &Plane, s_e: &Plane, eps: f64, gain_max: f64) -> Result<Plane> {
    ensure_same_size!(layer, s_t, "remap energy");
    ensure_same_size!(layer, s_e, "remap exemplar energy");
    let data = layer
        .data()
        .iter()
        .zip(s_t.data())
        .zip(s_e.data())
        .map(|((&l, &t), &e)| l * remap_gain(t, e, eps, gain_max))
        .collect();
    Plane::from_vec(layer.width(), layer.height(), data)
}

/// Warped energy maps and residuals of one exemplar, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarStyle {
    /// `[channel][level]`
    pub energies: Vec<Vec<Plane>>,
    /// `[channel]`
    pub residuals: Vec<Plane>,
}

impl ExemplarStyle {
    /// Decompose the exemplar in its own frame, then warp each energy map and
    /// residual into the input frame through `field`.
    pub fn analyze(exemplar: &Image, field: &CorrespondenceField, depth: usize) -> Result<Self> {
        let per_channel = exemplar
            .planes()
            .par_iter()
            .map(|plane| {
                let stack = build_stack(plane, depth)?;
                let energies: Vec<Plane> = stack
                    .layers
                    .iter()
                    .enumerate()
                    .map(|(l, layer)| warp_plane(&energy_map(layer, l), field))
                    .collect();
                Ok((energies, warp_plane(&stack.residual, field)))
            })
            .collect::<Result<Vec<_>>>()?;
        let (energies, residuals) = per_channel.into_iter().unzip();
        Ok(ExemplarStyle {
            energies,
            residuals,
        })
    }

    /// Style of an exemplar already in the input frame.
    pub fn aligned(exemplar: &Image, depth: usize) -> Result<Self> {
        Self::analyze(
            exemplar,
            &CorrespondenceField::zero(exemplar.width(), exemplar.height()),
            depth,
        )
    }
}

/// Weighted exemplar energies and residuals, `[channel][level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendedStyle {
    pub energies: Vec<Vec<Plane>>,
    pub residuals: Vec<Plane>,
}

/// Streams exemplar styles into a [`BlendedStyle`] one exemplar at a time.
pub struct StyleAccumulator<'a> {
    weights: &'a PixelWeights,
    seen: Vec<bool>,
    blended: BlendedStyle,
}

impl<'a> StyleAccumulator<'a> {
    pub fn new(weights: &'a PixelWeights, channels: usize, depth: usize) -> Self {
        let (w, h) = (weights.width(), weights.height());
        StyleAccumulator {
            weights,
            seen: vec![false; weights.exemplars()],
            blended: BlendedStyle {
                energies: vec![vec![Plane::zeros(w, h); depth - 1]; channels],
                residuals: vec![Plane::zeros(w, h); channels],
            },
        }
    }

    pub fn add(&mut self, k: usize, style: &ExemplarStyle) -> Result<()> {
        if k >= self.seen.len() || self.seen[k] {
            return Err(Error::InvalidArgument(format!("exemplar {k} out of range or repeated")));
        }
        if style.residuals.len() != self.blended.residuals.len() {
            return Err(Error::DimensionMismatch(format!(
                "exemplar has {} channels, expected {}",
                style.residuals.len(),
                self.blended.residuals.len()
            )));
        }
        let weight = self.weights.plane(k);
        for (c, (levels, residual)) in style.energies.iter().zip(&style.residuals).enumerate() {
            if levels.len() != self.blended.energies[c].len() {
                return Err(Error::DimensionMismatch("stack depth differs".into()));
            }
            for (acc, e) in self.blended.energies[c].iter_mut().zip(levels) {
                ensure_same_size!(acc, e, "warped energy");
                accumulate_weighted(acc, e, &weight);
            }
            ensure_same_size!(self.blended.residuals[c], residual, "warped residual");
            accumulate_weighted(&mut self.blended.residuals[c], residual, &weight);
        }
        self.seen[k] = true;
        Ok(())
    }

    pub fn finish(mut self) -> Result<BlendedStyle> {
        if let Some(k) = self.seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("exemplar {k} never accumulated")));
        }
        for levels in &mut self.blended.energies {
            for e in levels {
                e.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(self.blended)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutput {
    /// Remapped image `R`, not clamped.
    pub image: Image,
    /// Per-pixel band gains `[channel][level]`, when requested.
    pub gains: Vec<Vec<Plane>>,
}

/// Remap every band of every input channel toward the blended style and
/// substitute the blended residual.
pub fn remap_with_style(input: &Image, style: &BlendedStyle, params: &TransferParams) -> Result<TransferOutput> {
    if style.residuals.len() != input.channels() {
        return Err(Error::DimensionMismatch(format!(
            "style has {} channels, input {}",
            style.residuals.len(),
            input.channels()
        )));
    }
    let per_channel = input
        .planes()
        .par_iter()
        .enumerate()
        .map(|(c, plane)| {
            let stack = build_stack(plane, params.depth)?;
            if stack.layers.len() != style.energies[c].len() {
                return Err(Error::DimensionMismatch("stack depth differs from style".into()));
            }
            let mut layers = Vec::with_capacity(stack.layers.len());
            let mut gains = Vec::new();
            for (l, (layer, s_e)) in stack.layers.iter().zip(&style.energies[c]).enumerate() {
                let s_t = energy_map(layer, l);
                layers.push(remap_layer(layer, &s_t, s_e, params.eps, params.gain_max)?);
                if params.keep_gains {
                    gains.push(s_t.zip_map(s_e, |t, e| remap_gain(t, e, params.eps, params.gain_max))?);
                }
            }
            ensure_same_size!(plane, style.residuals[c], "blended residual");
            let remapped = LaplacianStack {
                layers,
                residual: style.residuals[c].clone(),
                sigmas: stack.sigmas,
            };
            Ok((reconstruct(&remapped)?, gains))
        })
        .collect::<Result<Vec<_>>>()?;
    let (planes, gains): (Vec<Plane>, Vec<Vec<Plane>>) = per_channel.into_iter().unzip();
    Ok(TransferOutput {
        image: Image::from_planes(planes)?,
        gains,
    })
}

/// Transfer from exemplars that are already aligned to the input frame.
pub fn transfer(
    input: &Image,
    exemplars: &[Image],
    labels: &LabelField,
    grid: &PatchGrid,
    params: &TransferParams,
) -> Result<TransferOutput> {
    if exemplars.is_empty() {
        return Err(Error::NoExemplars);
    }
    let weights = pixel_weights(labels, grid)?;
    let mut acc = StyleAccumulator::new(&weights, input.channels(), params.depth);
    for (k, e) in exemplars.iter().enumerate() {
        ensure_same_size!(input, e, "aligned exemplar");
        acc.add(k, &ExemplarStyle::aligned(e, params.depth)?)?;
    }
    remap_with_style(input, &acc.finish()?, params)
}
