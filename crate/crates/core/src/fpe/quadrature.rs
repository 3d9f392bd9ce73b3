//! Discretisation of the jump measure and the cached inverse maps it needs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{MarcusFlow, SIMULATION_STEPS};
use crate::fpe::grid::{Axis, Grid};
use crate::levy::{JumpKind, JumpSizes, Truncation};
use crate::model::ModelSpec;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureParams {
    /// Inner cutoff ε and outer cutoff R (`outer`, default 100) of stable
    /// components; also carries the small-jump Gaussian toggle.
    pub truncation: Truncation,
    pub nodes_per_decade: usize,
    /// Gauss–Legendre nodes per continuous compound-Poisson size law.
    pub cp_nodes: usize,
    /// RK4 steps for inverse maps without a closed form.
    pub flow_steps: usize,
    /// Use the model's closed-form inverse map when it has one.
    pub use_closed_form: bool,
    pub cache_cap_bytes: usize,
    /// Force one transfer mode for every node; `None` picks per node.
    pub transfer: Option<Transfer>,
}

impl Default for QuadratureParams {
    fn default() -> Self {
        QuadratureParams {
            truncation: Truncation::new(1e-2).with_outer(100.0),
            nodes_per_decade: 32,
            cp_nodes: 32,
            flow_steps: SIMULATION_STEPS,
            use_closed_form: true,
            cache_cap_bytes: 1 << 30,
            transfer: None,
        }
    }
}

impl QuadratureParams {
    pub fn outer(&self) -> f64 {
        self.truncation.outer.unwrap_or(100.0)
    }
}

/// One quadrature node of `ν`: a jump of `size` along `coordinate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpNode {
    pub coordinate: usize,
    pub size: f64,
    pub weight: f64,
}

/// Symmetric log-spaced nodes for `dy/|y|^{1+α}` on `ε ≤ |y| ≤ R`. Each node
/// sits at the ν-centroid of its cell and carries the exact ν-mass of the
/// cell, so constants and odd linear moments are integrated exactly.
pub fn stable_nodes(alpha: f64, eps: f64, outer: f64, nodes_per_decade: usize) -> Vec<(f64, f64)> {
    let decades = (outer / eps).log10();
    let cells = ((decades * nodes_per_decade as f64).ceil() as usize).max(1);
    let ratio = (outer / eps).powf(1.0 / cells as f64);
    let mut out = Vec::with_capacity(2 * cells);
    let mut lo = eps;
    for k in 0..cells {
        let hi = if k + 1 == cells { outer } else { lo * ratio };
        let mass = (lo.powf(-alpha) - hi.powf(-alpha)) / alpha;
        let first = if (alpha - 1.0).abs() < 1e-12 {
            (hi / lo).ln()
        } else {
            (hi.powf(1.0 - alpha) - lo.powf(1.0 - alpha)) / (1.0 - alpha)
        };
        let centroid = first / mass;
        out.push((centroid, mass));
        out.push((-centroid, mass));
        lo = hi;
    }
    out
}

/// Nodes of `rate · ρ`.
pub fn compound_poisson_nodes(rate: f64, sizes: &JumpSizes, nodes: usize) -> Vec<(f64, f64)> {
    let scaled = |lo: f64, hi: f64, density: &dyn Fn(f64) -> f64| {
        let (x, w) = gauss_legendre(nodes);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let raw: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (mid + half * x, half * w * density(mid + half * x))).collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        raw.into_iter().map(|(y, w)| (y, rate * w / total)).collect::<Vec<_>>()
    };
    match sizes {
        JumpSizes::Discrete { values, probs } => values
            .iter()
            .zip(probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, p)| (*v, rate * p))
            .collect(),
        JumpSizes::Normal { mean, std } => scaled(mean - 8.0 * std, mean + 8.0 * std, &|y| {
            sizes.density(y).unwrap_or(0.0)
        }),
        JumpSizes::Uniform { low, high } => scaled(*low, *high, &|_| 1.0),
    }
}

/// How a node moves probability between cells.
///
/// `Gather` evaluates `p(H̃(x, y)) |∂H̃/∂x|` at every cell centre, which
/// samples `p` finely when `H̃` contracts. Columns whose total differs badly
/// from the mass the source's forward image keeps inside the domain are
/// rescaled to it, and columns the gather barely samples fall back to
/// scattering.
/// `Scatter` pushes the mass of every cell forward to `H(x, y)` with the
/// adjoint (cloud-in-cell) stencil, the well-resolved choice when `H̃`
/// expands.
///
/// `Remap` (1-D only, the default there) integrates a piecewise-linear
/// reconstruction of `p` over the preimage `H̃(cell)` of every cell. It is
/// conservative by construction and second-order for smooth `p`, whatever
/// the map does to cell widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transfer {
    Gather,
    Scatter,
    Remap,
}

/// Discretised `ν` with the jump maps cached for every grid cell and node:
/// `H̃(x, y)` and `|∂H̃/∂x|` for gather nodes, `H(x, y)` for scatter nodes.
#[derive(Debug, Clone)]
pub struct JumpQuadrature {
    grid: Grid,
    d: usize,
    nodes: Vec<JumpNode>,
    transfer: Vec<Transfer>,
    /// `[node][cell][axis]`.
    targets: Vec<f64>,
    /// `[node][cell]`.
    jac: Vec<f64>,
    compensator: Vec<f64>,
    exchange: SparseRows,
}

/// Row-compressed `Σ_k w_k M_k`, where `M_k` moves mass along node `k`.
#[derive(Debug, Clone, Default)]
pub struct SparseRows {
    row_start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseRows {
    /// Sums duplicate `(row, col, value)` entries.
    fn from_triplets(rows: usize, mut entries: Vec<(u32, u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| (e.0, e.1));
        let mut out = SparseRows {
            row_start: vec![0; rows + 1],
            cols: Vec::with_capacity(entries.len()),
            vals: Vec::with_capacity(entries.len()),
        };
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *out.vals.last_mut().expect("entry exists") += v;
                continue;
            }
            last = Some((r, c));
            out.row_start[r as usize + 1] += 1;
            out.cols.push(c);
            out.vals.push(v);
        }
        for i in 0..rows {
            out.row_start[i + 1] += out.row_start[i];
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out += M p`.
    pub fn add_product(&self, p: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let span = self.row_start[r]..self.row_start[r + 1];
            let mut acc = 0.0;
            for (c, v) in self.cols[span.clone()].iter().zip(&self.vals[span]) {
                acc += v * p[*c as usize];
            }
            *o += acc;
        }
    }

    /// Column sums, i.e. the mass each cell sends out per unit density.
    pub fn column_sums(&self, cells: usize) -> Vec<f64> {
        let mut s = vec![0.0; cells];
        for (c, v) in self.cols.iter().zip(&self.vals) {
            s[*c as usize] += v;
        }
        s
    }
}

impl JumpQuadrature {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[JumpNode] {
        &self.nodes
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn transfer(&self, node: usize) -> Transfer {
        self.transfer[node]
    }

    /// `H̃(x_c, y_k)` for gather nodes, `H(x_c, y_k)` for scatter nodes.
    pub fn target(&self, node: usize, cell: usize) -> &[f64] {
        let off = (node * self.grid.len() + cell) * self.d;
        &self.targets[off..off + self.d]
    }

    /// `|∂H̃/∂x|` at `x_c`; 1 for scatter nodes, which do not need it.
    pub fn jac_det(&self, node: usize, cell: usize) -> f64 {
        self.jac[node * self.grid.len() + cell]
    }

    /// `Σ_k w_k y_k I_{|y_k|<1}`, the quadrature of `∫_{|y|<1} y ν(dy)`.
    pub fn compensator(&self) -> &[f64] {
        &self.compensator
    }

    /// Assembled gain matrix `Σ_k w_k M_k`; the loss is `total_weight · p`.
    pub fn exchange(&self) -> &SparseRows {
        &self.exchange
    }

    /// Upper bound on the bytes needed for the cached maps and the
    /// assembled exchange matrix.
    pub fn cache_estimate(d: usize, cells: usize, nodes: usize) -> usize {
        let maps = cells * nodes * (d + 1) * std::mem::size_of::<f64>();
        // one (row, col, value) triplet per stencil entry while assembling
        let stencil = 1 << d;
        maps + cells * nodes * stencil * (2 * std::mem::size_of::<u32>() + std::mem::size_of::<f64>())
    }
}

pub fn build_jump_quadrature(model: &ModelSpec, grid: &Grid, params: &QuadratureParams) -> Result<JumpQuadrature> {
    let d = model.d();
    if grid.dim() != d {
        return Err(Error::Dimension(format!("grid is {}-D, model is {d}-D", grid.dim())));
    }
    let trunc = &params.truncation;
    let outer = params.outer();
    let triplet = &model.driver;
    if triplet.has_stable() && !(trunc.eps > 0.0 && trunc.eps < 1.0 && outer > 1.0) {
        return Err(Error::validation("eps", "stable components need 0 < eps < 1 < r_max"));
    }
    if params.nodes_per_decade == 0 || params.cp_nodes == 0 {
        return Err(Error::validation("nodes_per_decade", "node counts must be positive"));
    }

    let mut nodes = Vec::new();
    for c in triplet.components() {
        let pairs = match &c.kind {
            JumpKind::AlphaStable { alpha } => stable_nodes(*alpha, trunc.eps, outer, params.nodes_per_decade),
            JumpKind::CompoundPoisson { rate, sizes } => compound_poisson_nodes(*rate, sizes, params.cp_nodes),
        };
        nodes.extend(
            pairs
                .into_iter()
                .filter(|(y, _)| *y != 0.0)
                .map(|(size, weight)| JumpNode {
                    coordinate: c.coordinate,
                    size,
                    weight,
                }),
        );
    }

    let estimate = JumpQuadrature::cache_estimate(d, grid.len(), nodes.len());
    if estimate > params.cache_cap_bytes {
        return Err(Error::CacheTooLarge {
            estimate,
            cap: params.cache_cap_bytes,
        });
    }

    let n = model.n();
    let mut compensator = vec![0.0; n];
    for node in &nodes {
        if node.size.abs() < 1.0 {
            compensator[node.coordinate] += node.weight * node.size;
        }
    }

    let closed = model.closed_form.filter(|_| params.use_closed_form);
    let centers: Vec<Vec<f64>> = (0..grid.len()).map(|c| grid.center(c)).collect();
    let faces: Vec<Vec<f64>> = if d == 1 {
        let ax = &grid.axes()[0];
        (0..=ax.cells).map(|i| vec![ax.lower + i as f64 * ax.spacing()]).collect()
    } else {
        Vec::new()
    };
    let inverse_at = |points: &[Vec<f64>], v: &[f64], targets: &mut Vec<f64>, jac: &mut Vec<f64>| -> Result<()> {
        let mut flow = MarcusFlow::new(&model.noise, params.flow_steps)?;
        targets.clear();
        jac.clear();
        for x in points {
            match closed {
                Some(map) => {
                    let (p, j) = (map.inverse)(x, v);
                    targets.extend_from_slice(&p);
                    jac.push(j);
                }
                None => {
                    let mut p = x.clone();
                    jac.push(flow.inverse_in_place(&mut p, v)?);
                    targets.extend_from_slice(&p);
                }
            }
        }
        Ok(())
    };
    let inverse_maps =
        |v: &[f64], targets: &mut Vec<f64>, jac: &mut Vec<f64>| -> Result<()> { inverse_at(&centers, v, targets, jac) };
    if d != 1 && params.transfer == Some(Transfer::Remap) {
        return Err(Error::validation("transfer", "remap is only available on 1-D grids"));
    }
    let per_node: Vec<Result<NodeMaps>> = nodes
        .par_iter()
        .map(|node| {
            let mut v = vec![0.0; n];
            v[node.coordinate] = node.size;
            let mut targets = Vec::with_capacity(centers.len() * d);
            let mut jac = Vec::with_capacity(centers.len());
            inverse_maps(&v, &mut targets, &mut jac)?;
            let mean_log = jac.iter().map(|j| j.ln()).sum::<f64>() / jac.len() as f64;
            let mode = params.transfer.unwrap_or(if d == 1 {
                Transfer::Remap
            } else if mean_log <= 0.0 {
                Transfer::Gather
            } else {
                Transfer::Scatter
            });
            if mode == Transfer::Remap {
                let mut face_images = Vec::with_capacity(faces.len());
                let mut unused = Vec::with_capacity(faces.len());
                inverse_at(&faces, &v, &mut face_images, &mut unused)?;
                let entries = remap_entries(&grid.axes()[0], node.weight, &face_images);
                return Ok(NodeMaps {
                    mode,
                    targets,
                    jac,
                    entries,
                });
            }
            // H(x, y) = H̃(x, −y)
            v[node.coordinate] = -node.size;
            let mut forward = Vec::with_capacity(centers.len() * d);
            let mut unused = Vec::with_capacity(centers.len());
            inverse_maps(&v, &mut forward, &mut unused)?;
            let entries = transfer_entries(grid, mode, node.weight, &targets, &jac, &forward);
            if mode == Transfer::Scatter {
                targets = forward;
                jac.fill(1.0);
            }
            Ok(NodeMaps {
                mode,
                targets,
                jac,
                entries,
            })
        })
        .collect();

    let mut transfer = Vec::with_capacity(nodes.len());
    let mut targets = Vec::with_capacity(nodes.len() * grid.len() * d);
    let mut jac = Vec::with_capacity(nodes.len() * grid.len());
    let mut entries = Vec::new();
    for r in per_node {
        let maps = r?;
        transfer.push(maps.mode);
        targets.extend(maps.targets);
        jac.extend(maps.jac);
        entries.extend(maps.entries);
    }
    let exchange = SparseRows::from_triplets(grid.len(), entries);
    Ok(JumpQuadrature {
        grid: grid.clone(),
        d,
        nodes,
        transfer,
        targets,
        jac,
        compensator,
        exchange,
    })
}

struct NodeMaps {
    mode: Transfer,
    targets: Vec<f64>,
    jac: Vec<f64>,
    entries: Vec<(u32, u32, f64)>,
}

/// Entries of `w ∫_{H̃(I_c)} p̂(z) dz / h`, where `p̂` is the piecewise-linear
/// reconstruction with cell averages `p_s` and central slopes (one-sided at
/// the ends) and `H̃(I_c)` spans the images of the faces of cell `c`.
fn remap_entries(axis: &Axis, weight: f64, face_images: &[f64]) -> Vec<(u32, u32, f64)> {
    let n = axis.cells;
    let h = axis.spacing();
    let mut entries = Vec::with_capacity(4 * n);
    for c in 0..n {
        let (a, b) = {
            let (u, v) = (face_images[c], face_images[c + 1]);
            (u.min(v).max(axis.lower), u.max(v).min(axis.upper))
        };
        if !(b > a) {
            continue;
        }
        let first = (((a - axis.lower) / h).floor() as usize).min(n - 1);
        let last = (((b - axis.lower) / h).ceil() as usize).clamp(first + 1, n);
        for s in first..last {
            let lo = a.max(axis.lower + s as f64 * h);
            let hi = b.min(axis.lower + (s + 1) as f64 * h);
            if hi <= lo {
                continue;
            }
            let xs = axis.center(s);
            let scale = weight / h;
            entries.push((c as u32, s as u32, scale * (hi - lo)));
            // ∫ (z − x_s) dz times the slope stencil
            let moment = scale * ((hi - xs).powi(2) - (lo - xs).powi(2)) / 2.0;
            if moment == 0.0 || n < 2 {
                continue;
            }
            let (left, right, span) = if s == 0 {
                (0, 1, h)
            } else if s == n - 1 {
                (n - 2, n - 1, h)
            } else {
                (s - 1, s + 1, 2.0 * h)
            };
            entries.push((c as u32, right as u32, moment / span));
            entries.push((c as u32, left as u32, -moment / span));
        }
    }
    entries
}

/// Gather columns sampled below this fraction of their expected outflow are
/// scattered instead.
const MIN_GATHER_COVERAGE: f64 = 0.5;

/// Relative column-sum error of a gather node left uncorrected.
const GATHER_SLACK: f64 = 0.25;

/// Entries `(row, col, w·M[row, col])` of one node. `inverse`/`jac` hold
/// `H̃(x_c)` and `|∂H̃/∂x|(x_c)`, `forward` holds `H(x_c)`.
fn transfer_entries(
    grid: &Grid,
    mode: Transfer,
    weight: f64,
    inverse: &[f64],
    jac: &[f64],
    forward: &[f64],
) -> Vec<(u32, u32, f64)> {
    let cells = grid.len();
    let d = grid.dim();
    let mut entries = Vec::with_capacity(cells * (1 << d));
    let scatter_column = |s: usize, entries: &mut Vec<(u32, u32, f64)>| {
        for (t, a) in grid.stencil(&forward[s * d..(s + 1) * d]).iter() {
            entries.push((t as u32, s as u32, weight * a));
        }
    };
    match mode {
        Transfer::Scatter => {
            for s in 0..cells {
                scatter_column(s, &mut entries);
            }
        }
        Transfer::Remap => unreachable!("remap entries are built from face images"),
        Transfer::Gather => {
            let mut raw = Vec::with_capacity(cells * (1 << d));
            let mut sums = vec![0.0; cells];
            for c in 0..cells {
                for (s, a) in grid.stencil(&inverse[c * d..(c + 1) * d]).iter() {
                    let v = jac[c] * a;
                    sums[s] += v;
                    raw.push((c as u32, s as u32, v));
                }
            }
            // mass each source keeps inside the domain after the jump
            let kept: Vec<f64> = (0..cells)
                .map(|s| grid.stencil(&forward[s * d..(s + 1) * d]).iter().map(|(_, a)| a).sum())
                .collect();
            let scale: Vec<f64> = (0..cells)
                .map(|s| {
                    if sums[s] <= 0.0 || sums[s] < MIN_GATHER_COVERAGE * kept[s] {
                        0.0
                    } else if (sums[s] - kept[s]).abs() <= GATHER_SLACK * kept[s] {
                        // sampling noise of the interpolation; rescaling it
                        // would cost pointwise accuracy
                        1.0
                    } else {
                        kept[s] / sums[s]
                    }
                })
                .collect();
            for (r, s, v) in raw {
                let k = scale[s as usize];
                if k > 0.0 {
                    entries.push((r, s, weight * v * k));
                }
            }
            for s in 0..cells {
                if scale[s] == 0.0 && kept[s] > 0.0 {
                    scatter_column(s, &mut entries);
                }
            }
        }
    }
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::builtin_model;
    use crate::levy::{stable_tail_mass, ScalarLevy};

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 14 is exact with 8 nodes
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
        let (x1, w1) = gauss_legendre(1);
        assert!(x1[0].abs() < 1e-15 && (w1[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stable_weights_sum_to_tail_mass() {
        for alpha in [0.5, 1.0, 1.5, 1.9] {
            let nodes = stable_nodes(alpha, 0.01, 100.0, 32);
            let total: f64 = nodes.iter().map(|n| n.1).sum();
            let exact = stable_tail_mass(alpha, 0.01, Some(100.0));
            assert!(((total - exact) / exact).abs() < 1e-6, "alpha {alpha}");
            assert!(nodes.iter().all(|n| n.1 > 0.0));
            let odd: f64 = nodes.iter().map(|n| n.0 * n.1).sum();
            assert!(odd.abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn stable_second_moment_converges() {
        let (alpha, eps, r) = (1.5, 0.05, 100.0);
        let nodes = stable_nodes(alpha, eps, r, 32);
        let m2: f64 = nodes.iter().map(|n| n.0 * n.0 * n.1).sum();
        let exact = 2.0 * (r.powf(2.0 - alpha) - eps.powf(2.0 - alpha)) / (2.0 - alpha);
        assert!(((m2 - exact) / exact).abs() < 1e-3);
    }

    #[test]
    fn dirac_compound_poisson_is_single_node() {
        let nodes = compound_poisson_nodes(2.5, &JumpSizes::dirac(0.3), 32);
        assert_eq!(nodes, vec![(0.3, 2.5)]);
        let normal = compound_poisson_nodes(1.0, &JumpSizes::Normal { mean: 0.1, std: 0.3 }, 32);
        let total: f64 = normal.iter().map(|n| n.1).sum();
        let mean: f64 = normal.iter().map(|n| n.0 * n.1).sum();
        let var: f64 = normal.iter().map(|n| (n.0 - 0.1).powi(2) * n.1).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((mean - 0.1).abs() < 1e-12);
        assert!((var - 0.09).abs() < 1e-10);
    }

    #[test]
    fn product_measure_has_no_tensor_nodes() {
        let model = builtin_model("example3", None, None, None).unwrap().unwrap();
        let grid = Grid::uniform_2d(-2.0, 2.0, 8).unwrap();
        let q = build_jump_quadrature(&model, &grid, &QuadratureParams::default()).unwrap();
        let one = stable_nodes(1.5, 0.01, 100.0, 32).len();
        assert_eq!(q.nodes().len(), 2 * one);
        assert_eq!(q.nodes().iter().filter(|n| n.coordinate == 0).count(), one);
    }

    #[test]
    fn cached_maps_match_flow() {
        let cp = ScalarLevy::compound_poisson(1.0, JumpSizes::dirac(0.7));
        let model = builtin_model("example1", None, Some(vec![cp]), None).unwrap().unwrap();
        let grid = Grid::uniform_1d(-2.0, 2.0, 16).unwrap();
        let closed = build_jump_quadrature(&model, &grid, &QuadratureParams::default()).unwrap();
        let numeric = build_jump_quadrature(
            &model,
            &grid,
            &QuadratureParams {
                use_closed_form: false,
                flow_steps: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(closed.nodes().len(), 1);
        for c in 0..grid.len() {
            let x = grid.center(c)[0];
            assert!((closed.target(0, c)[0] - x * (-0.7f64).exp()).abs() < 1e-15);
            assert!((numeric.target(0, c)[0] - closed.target(0, c)[0]).abs() < 1e-10);
            assert!((numeric.jac_det(0, c) - closed.jac_det(0, c)).abs() < 1e-10);
        }
        assert!((closed.compensator()[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn refuses_oversized_cache() {
        let model = builtin_model("example3", None, None, None).unwrap().unwrap();
        let grid = Grid::uniform_2d(-2.0, 2.0, 64).unwrap();
        let err = build_jump_quadrature(
            &model,
            &grid,
            &QuadratureParams {
                cache_cap_bytes: 1000,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::CacheTooLarge { cap: 1000, .. }));
    }
}
