//! Exemplar selection by loopy belief propagation on a grid of patches.
//!
//! Every node of a [`PatchGrid`] picks one of `K` aligned exemplars. The unary
//! potential compares the input patch with each exemplar patch (normalized
//! cross-correlation plus mean absolute difference); the pairwise potential
//! asks neighboring choices to agree on the pixels their patches share.
//! Sum-product messages are updated synchronously, so results do not depend on
//! thread scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Plane;

/// Potentials and messages are floored here to keep products representable.
pub const POTENTIAL_FLOOR: f64 = 1e-300;

/// Below this variance a patch counts as flat and its correlation is 0.
pub const FLAT_VARIANCE: f64 = 1e-12;

/// Largest joint state space [`brute_force_marginals`] will enumerate.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }

    /// Samples of `plane` inside this rectangle, row-major.
    pub fn extract(&self, plane: &Plane) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.area());
        for y in self.y..self.y + self.height {
            out.extend_from_slice(&plane.row(y)[self.x..self.x + self.width]);
        }
        out
    }
}

/// Regular layout of overlapping square patches.
///
/// Patches step by `stride` and sit fully inside the image. When the image
/// size is not `patch_size + m * stride`, the layout is centred and the
/// leftover strips (narrower than one stride) belong to no patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub cols: usize,
    pub rows: usize,
    pub offset_x: usize,
    pub offset_y: usize,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize, stride: usize) -> Result<Self> {
        if patch_size == 0 || stride == 0 || stride > patch_size {
            return Err(Error::InvalidArgument(format!(
                "need 0 < stride <= patch_size, got stride {stride}, patch {patch_size}"
            )));
        }
        if width < patch_size || height < patch_size {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image is smaller than one {patch_size}px patch"
            )));
        }
        let cols = (width - patch_size) / stride + 1;
        let rows = (height - patch_size) / stride + 1;
        let offset_x = (width - patch_size - (cols - 1) * stride) / 2;
        let offset_y = (height - patch_size - (rows - 1) * stride) / 2;
        Ok(PatchGrid {
            width,
            height,
            patch_size,
            stride,
            cols,
            rows,
            offset_x,
            offset_y,
        })
    }

    pub fn node_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn node(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn col_row(&self, node: usize) -> (usize, usize) {
        (node % self.cols, node / self.cols)
    }

    pub fn rect(&self, node: usize) -> Rect {
        let (c, r) = self.col_row(node);
        Rect {
            x: self.offset_x + c * self.stride,
            y: self.offset_y + r * self.stride,
            width: self.patch_size,
            height: self.patch_size,
        }
    }

    /// Tent-window peak of a node, `origin + patch_size / 2`.
    pub fn center(&self, node: usize) -> (f64, f64) {
        let r = self.rect(node);
        let half = self.patch_size as f64 / 2.0;
        (r.x as f64 + half, r.y as f64 + half)
    }

    /// 4-neighborhood edges, each listed once as `(left, right)` or `(top, bottom)`,
    /// in row-major order of the first node.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let n = self.node(c, r);
                if c + 1 < self.cols {
                    out.push((n, self.node(c + 1, r)));
                }
                if r + 1 < self.rows {
                    out.push((n, self.node(c, r + 1)));
                }
            }
        }
        out
    }

    pub fn are_adjacent(&self, p: usize, q: usize) -> bool {
        let (pc, pr) = self.col_row(p);
        let (qc, qr) = self.col_row(q);
        p < self.node_count() && q < self.node_count() && pc.abs_diff(qc) + pr.abs_diff(qr) == 1
    }

    /// Shared region of two 4-adjacent patches.
    pub fn overlap(&self, p: usize, q: usize) -> Result<Rect> {
        if !self.are_adjacent(p, q) {
            return Err(Error::InvalidArgument(format!(
                "nodes {p} and {q} are not 4-adjacent"
            )));
        }
        let (a, b) = (self.rect(p), self.rect(q));
        let x = a.x.max(b.x);
        let y = a.y.max(b.y);
        Ok(Rect {
            x,
            y,
            width: (a.x + a.width).min(b.x + b.width) - x,
            height: (a.y + a.height).min(b.y + b.height) - y,
        })
    }
}

/// Pearson correlation; 0 when either patch is flat.
pub fn ncc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "ncc patches have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va / n < FLAT_VARIANCE || vb / n < FLAT_VARIANCE {
        return Ok(0.0);
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MrfParams {
    pub alpha: f64,
    pub sigma_d: f64,
    pub sigma_c: f64,
}

impl Default for MrfParams {
    fn default() -> Self {
        MrfParams {
            alpha: 0.8,
            sigma_d: 0.5,
            sigma_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataTerm {
    pub ncc: f64,
    pub abs_diff: f64,
    /// `alpha (1 - ncc) + (1 - alpha) abs_diff`
    pub distance: f64,
    /// `exp(-distance^2 / (2 sigma_d^2))`
    pub phi: f64,
}

pub fn data_term(input: &[f64], exemplar: &[f64], alpha: f64, sigma_d: f64) -> Result<DataTerm> {
    let corr = ncc(input, exemplar)?;
    let abs_diff =
        input.iter().zip(exemplar).map(|(a, b)| (a - b).abs()).sum::<f64>() / input.len() as f64;
    let distance = alpha * (1.0 - corr) + (1.0 - alpha) * abs_diff;
    Ok(DataTerm {
        ncc: corr,
        abs_diff,
        distance,
        phi: (-distance * distance / (2.0 * sigma_d * sigma_d)).exp(),
    })
}

/// Compatibility of two exemplar patches from their samples on the shared region.
pub fn smoothness_from_overlap(a: &[f64], b: &[f64], sigma_c: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "overlap regions have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let c = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok((-c / (2.0 * sigma_c * sigma_c)).exp())
}

/// `Psi` between exemplar `k` at node `p` and exemplar `j` at node `q`.
pub fn smoothness_term(
    grid: &PatchGrid,
    exemplar_k: &Plane,
    exemplar_j: &Plane,
    p: usize,
    q: usize,
    sigma_c: f64,
) -> Result<f64> {
    let omega = grid.overlap(p, q)?;
    smoothness_from_overlap(&omega.extract(exemplar_k), &omega.extract(exemplar_j), sigma_c)
}

/// Pairwise edge with a `K x K` table indexed `[label(a) * K + label(b)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub table: Vec<f64>,
}

/// A discrete pairwise Markov random field with `labels` states per node.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMrf {
    pub nodes: usize,
    pub labels: usize,
    /// `nodes x labels`, row-major.
    pub unaries: Vec<f64>,
    pub edges: Vec<Edge>,
}

impl PairwiseMrf {
    pub fn new(nodes: usize, labels: usize, unaries: Vec<f64>) -> Result<Self> {
        if labels == 0 || unaries.len() != nodes * labels {
            return Err(Error::DimensionMismatch(format!(
                "{nodes} nodes x {labels} labels needs {} unaries, got {}",
                nodes * labels,
                unaries.len()
            )));
        }
        Ok(PairwiseMrf {
            nodes,
            labels,
            unaries,
            edges: Vec::new(),
        })
    }

    pub fn add_edge(&mut self, a: usize, b: usize, table: Vec<f64>) -> Result<()> {
        if a >= self.nodes || b >= self.nodes || a == b {
            return Err(Error::InvalidArgument(format!("bad edge ({a}, {b})")));
        }
        if table.len() != self.labels * self.labels {
            return Err(Error::DimensionMismatch(format!(
                "pairwise table needs {} entries, got {}",
                self.labels * self.labels,
                table.len()
            )));
        }
        self.edges.push(Edge { a, b, table });
        Ok(())
    }

    pub fn unary(&self, node: usize) -> &[f64] {
        &self.unaries[node * self.labels..(node + 1) * self.labels]
    }
}

/// Unary and pairwise potentials for a patch grid over aligned luma planes.
pub fn build_patch_mrf(
    grid: &PatchGrid,
    input: &Plane,
    exemplars: &[Plane],
    params: &MrfParams,
) -> Result<PairwiseMrf> {
    let k = exemplars.len();
    if k == 0 {
        return Err(Error::NoExemplars);
    }
    for e in exemplars {
        crate::error::ensure_same_size!(input, e, "exemplar vs input");
    }
    if input.width() != grid.width || input.height() != grid.height {
        return Err(Error::DimensionMismatch("patch grid vs input".into()));
    }
    let unaries: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map(|n| {
            let rect = grid.rect(n);
            let t = rect.extract(input);
            exemplars
                .iter()
                .map(|e| data_term(&t, &rect.extract(e), params.alpha, params.sigma_d).map(|d| d.phi))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut mrf = PairwiseMrf::new(grid.node_count(), k, unaries)?;
    let tables: Vec<(usize, usize, Vec<f64>)> = grid
        .edges()
        .into_par_iter()
        .map(|(p, q)| {
            let omega = grid.overlap(p, q)?;
            let patches: Vec<Vec<f64>> = exemplars.iter().map(|e| omega.extract(e)).collect();
            let mut table = vec![1.0; k * k];
            for a in 0..k {
                for b in (a + 1)..k {
                    let psi = smoothness_from_overlap(&patches[a], &patches[b], params.sigma_c)?;
                    table[a * k + b] = psi;
                    table[b * k + a] = psi;
                }
            }
            Ok((p, q, table))
        })
        .collect::<Result<Vec<_>>>()?;
    for (p, q, table) in tables {
        mrf.add_edge(p, q, table)?;
    }
    Ok(mrf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for BpOptions {
    fn default() -> Self {
        BpOptions {
            max_iters: 10,
            tol: 1e-6,
        }
    }
}

/// Per-node label distributions and the final messages.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBeliefs {
    pub nodes: usize,
    pub labels: usize,
    /// `nodes x labels`, rows sum to 1.
    pub beliefs: Vec<f64>,
    /// One `labels`-vector per directed edge: `2e` is `a -> b`, `2e + 1` is `b -> a`.
    pub messages: Vec<Vec<f64>>,
}

impl LabelBeliefs {
    pub fn row(&self, node: usize) -> &[f64] {
        &self.beliefs[node * self.labels..(node + 1) * self.labels]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    pub beliefs: LabelBeliefs,
    pub iterations: usize,
    pub converged: bool,
    /// Unary entries raised to [`POTENTIAL_FLOOR`].
    pub floored_unaries: usize,
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Synchronous sum-product belief propagation.
///
/// Messages start uniform and are renormalized after each update. Iteration
/// stops after `max_iters` sweeps or once no message entry moves by more than
/// `tol`.
pub fn run_bp(mrf: &PairwiseMrf, opts: &BpOptions) -> Result<BpResult> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("belief propagation needs iters >= 1".into()));
    }
    let k = mrf.labels;
    let mut floored = 0;
    let log_unary: Vec<f64> = mrf
        .unaries
        .iter()
        .map(|&u| {
            if !(u >= POTENTIAL_FLOOR) {
                floored += 1;
                POTENTIAL_FLOOR.ln()
            } else {
                u.ln()
            }
        })
        .collect();
    if floored > 0 {
        log::warn!("{floored} unary potentials floored to {POTENTIAL_FLOOR:e}");
    }

    // incoming[n] lists directed edge ids arriving at n
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); mrf.nodes];
    for (e, edge) in mrf.edges.iter().enumerate() {
        incoming[edge.b].push(2 * e);
        incoming[edge.a].push(2 * e + 1);
    }
    let endpoints = |d: usize| {
        let edge = &mrf.edges[d / 2];
        if d % 2 == 0 {
            (edge.a, edge.b)
        } else {
            (edge.b, edge.a)
        }
    };

    let mut messages = vec![vec![1.0 / k as f64; k]; 2 * mrf.edges.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        iterations += 1;
        let next: Vec<Vec<f64>> = (0..messages.len())
            .into_par_iter()
            .map(|d| {
                let (from, _to) = endpoints(d);
                let reverse = d ^ 1;
                let mut log_h: Vec<f64> = log_unary[from * k..(from + 1) * k].to_vec();
                for &inc in &incoming[from] {
                    if inc != reverse {
                        for (h, m) in log_h.iter_mut().zip(&messages[inc]) {
                            *h += m.ln();
                        }
                    }
                }
                let h = normalize_log(&log_h);
                let table = &mrf.edges[d / 2].table;
                let forward = d % 2 == 0;
                let mut msg: Vec<f64> = (0..k)
                    .map(|to_label| {
                        (0..k)
                            .map(|from_label| {
                                let psi = if forward {
                                    table[from_label * k + to_label]
                                } else {
                                    table[to_label * k + from_label]
                                };
                                psi * h[from_label]
                            })
                            .sum()
                    })
                    .collect();
                let sum: f64 = msg.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    msg.iter_mut().for_each(|v| *v = (*v / sum).max(POTENTIAL_FLOOR));
                } else {
                    msg.iter_mut().for_each(|v| *v = 1.0 / k as f64);
                }
                msg
            })
            .collect();
        let delta = next
            .iter()
            .zip(&messages)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        messages = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    let beliefs: Vec<f64> = (0..mrf.nodes)
        .flat_map(|n| {
            let mut logs = log_unary[n * k..(n + 1) * k].to_vec();
            for &inc in &incoming[n] {
                for (l, m) in logs.iter_mut().zip(&messages[inc]) {
                    *l += m.ln();
                }
            }
            normalize_log(&logs)
        })
        .collect();

    Ok(BpResult {
        beliefs: LabelBeliefs {
            nodes: mrf.nodes,
            labels: k,
            beliefs,
            messages,
        },
        iterations,
        converged,
        floored_unaries: floored,
    })
}

/// Exact marginals by enumerating every joint labelling.
pub fn brute_force_marginals(mrf: &PairwiseMrf) -> Result<Vec<f64>> {
    let (n, k) = (mrf.nodes, mrf.labels);
    let states = (k as u64).checked_pow(n as u32).filter(|&s| s <= ENUMERATION_LIMIT);
    let states = states.ok_or(Error::TooLarge {
        labels: k,
        nodes: n,
        limit: ENUMERATION_LIMIT,
    })?;
    let mut marginals = vec![0.0; n * k];
    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for _ in 0..states {
        let mut p: f64 = assignment
            .iter()
            .enumerate()
            .map(|(node, &l)| mrf.unaries[node * k + l])
            .product();
        for e in &mrf.edges {
            p *= e.table[assignment[e.a] * k + assignment[e.b]];
        }
        total += p;
        for (node, &l) in assignment.iter().enumerate() {
            marginals[node * k + l] += p;
        }
        // odometer increment
        for slot in assignment.iter_mut() {
            *slot += 1;
            if *slot < k {
                break;
            }
            *slot = 0;
        }
    }
    marginals.iter_mut().for_each(|v| *v /= total);
    Ok(marginals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    #[default]
    Argmax,
    Mmse,
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(SelectionMode::Argmax),
            "mmse" => Ok(SelectionMode::Mmse),
            _ => Err(Error::InvalidArgument(format!("unknown selection mode {s:?}"))),
        }
    }
}

/// Selected exemplar per node, plus the per-node label distribution used for
/// blending (one-hot in argmax mode, the belief row in mmse mode).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelField {
    pub mode: SelectionMode,
    pub labels: Vec<usize>,
    pub exemplars: usize,
    pub distributions: Vec<f64>,
}

impl LabelField {
    pub fn distribution(&self, node: usize) -> &[f64] {
        &self.distributions[node * self.exemplars..(node + 1) * self.exemplars]
    }

    /// Count of nodes per selected exemplar.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.exemplars];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Constant field with every node on `label`.
    pub fn uniform_label(nodes: usize, exemplars: usize, label: usize) -> Self {
        let mut distributions = vec![0.0; nodes * exemplars];
        for n in 0..nodes {
            distributions[n * exemplars + label] = 1.0;
        }
        LabelField {
            mode: SelectionMode::Argmax,
            labels: vec![label; nodes],
            exemplars,
            distributions,
        }
    }

    pub fn from_labels(labels: Vec<usize>, exemplars: usize) -> Result<Self> {
        let mut distributions = vec![0.0; labels.len() * exemplars];
        for (n, &l) in labels.iter().enumerate() {
            if l >= exemplars {
                return Err(Error::InvalidArgument(format!(
                    "label {l} at node {n} exceeds {exemplars} exemplars"
                )));
            }
            distributions[n * exemplars + l] = 1.0;
        }
        Ok(LabelField {
            mode: SelectionMode::Argmax,
            labels,
            exemplars,
            distributions,
        })
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn select_labels(beliefs: &LabelBeliefs, mode: SelectionMode) -> LabelField {
    let k = beliefs.labels;
    let labels: Vec<usize> = (0..beliefs.nodes).map(|n| argmax(beliefs.row(n))).collect();
    let distributions = match mode {
        SelectionMode::Mmse => beliefs.beliefs.clone(),
        SelectionMode::Argmax => {
            let mut d = vec![0.0; beliefs.nodes * k];
            for (n, &l) in labels.iter().enumerate() {
                d[n * k + l] = 1.0;
            }
            d
        }
    };
    LabelField {
        mode,
        labels,
        exemplars: k,
        distributions,
    }
}
