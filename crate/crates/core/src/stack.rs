//! Full-resolution Laplacian stacks and local energy maps.
//!
//! Layers are differences of Gaussian blurs of the original plane at octave
//! scales `2, 4, 8, ...`, so the bands plus the residual telescope back to the
//! source exactly.

use rayon::prelude::*;

use crate::error::{ensure_same_size, Error, Result};
use crate::filter::gaussian_blur_plane;
use crate::image::Plane;

/// Blur scale of level `l` (`l >= 1`); level 0 shares the first band's scale.
pub fn level_sigma(level: usize) -> f64 {
    2f64.powi(level.max(1) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianStack {
    /// Band layers `L^0 .. L^{depth-2}`, finest first.
    pub layers: Vec<Plane>,
    pub residual: Plane,
    /// Blur scales `sigma_1 .. sigma_{depth-1}` used to build the stack.
    pub sigmas: Vec<f64>,
}

/// One non-negative energy map per band layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStack {
    pub maps: Vec<Plane>,
}

impl LaplacianStack {
    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn width(&self) -> usize {
        self.residual.width()
    }

    pub fn height(&self) -> usize {
        self.residual.height()
    }

    pub fn energy(&self) -> EnergyStack {
        EnergyStack {
            maps: self
                .layers
                .par_iter()
                .enumerate()
                .map(|(l, layer)| energy_map(layer, l))
                .collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> LaplacianStack {
        LaplacianStack {
            layers: self.layers.iter().map(|p| p.map(|v| v * k)).collect(),
            residual: self.residual.map(|v| v * k),
            sigmas: self.sigmas.clone(),
        }
    }
}

pub fn build_stack(img: &Plane, depth: usize) -> Result<LaplacianStack> {
    if depth < 2 {
        return Err(Error::InvalidArgument(format!(
            "stack depth must be at least 2, got {depth}"
        )));
    }
    let sigmas: Vec<f64> = (1..depth).map(level_sigma).collect();
    let blurred = sigmas
        .par_iter()
        .map(|&s| gaussian_blur_plane(img, s))
        .collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(depth - 1);
    let mut finer = img;
    for coarser in &blurred {
        layers.push(finer.zip_map(coarser, |a, b| a - b)?);
        finer = coarser;
    }
    let residual = blurred.last().expect("depth >= 2").clone();
    Ok(LaplacianStack {
        layers,
        residual,
        sigmas,
    })
}

/// Gaussian-weighted local mean of the squared layer at the band's own scale.
pub fn energy_map(layer: &Plane, level: usize) -> Plane {
    let squared = layer.map(|v| v * v);
    gaussian_blur_plane(&squared, level_sigma(level))
        .expect("positive sigma")
        .map(|v| v.max(0.0))
}

pub fn reconstruct(stack: &LaplacianStack) -> Result<Plane> {
    let mut out = stack.residual.clone();
    for layer in &stack.layers {
        ensure_same_size!(out, layer, "stack layer");
        for (o, &v) in out.data_mut().iter_mut().zip(layer.data()) {
            *o += v;
        }
    }
    Ok(out)
}
