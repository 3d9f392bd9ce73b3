use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::model::InitialCondition;

/// Minimum number of cells per axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Self {
        Axis { lower, upper, cells }
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.spacing()
    }
}

/// Uniform cell-centred grid in one or two dimensions. Flat indices are
/// row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::validation("grid", "grid dimension must be 1 or 2"));
        }
        for (k, a) in axes.iter().enumerate() {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.lower < a.upper) {
                return Err(Error::validation(format!("grid.upper[{k}]"), "bounds must satisfy lower < upper"));
            }
            if a.cells < MIN_CELLS {
                return Err(Error::validation(
                    format!("grid.cells[{k}]"),
                    format!("need at least {MIN_CELLS} cells per axis"),
                ));
            }
        }
        Ok(Grid { axes })
    }

    pub fn uniform_1d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, cells)])
    }

    pub fn uniform_2d(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, cells); 2])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.cells).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(f64::INFINITY, f64::min)
    }

    /// Flat-index stride of axis `k`.
    pub fn stride(&self, k: usize) -> usize {
        self.axes[k + 1..].iter().map(|a| a.cells).product()
    }

    /// Per-axis index of a flat index.
    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        match self.axes.len() {
            1 => [flat, 0],
            _ => [flat / self.axes[1].cells, flat % self.axes[1].cells],
        }
    }

    pub fn center(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        self.axes.iter().enumerate().map(|(k, a)| a.center(idx[k])).collect()
    }

    /// Flat index of the cell containing `x`, if inside the domain.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for (k, a) in self.axes.iter().enumerate() {
            if !(x[k] >= a.lower && x[k] < a.upper) {
                return None;
            }
            let i = (((x[k] - a.lower) / a.spacing()) as usize).min(a.cells - 1);
            flat += i * self.stride(k);
        }
        Some(flat)
    }

    /// Cells and weights of the multilinear stencil at `x`. Neighbours
    /// beyond the outermost centres are zero-valued ghosts and are left out;
    /// points outside the domain get an empty stencil.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let mut st = Stencil::default();
        let mut base = [0isize; 2];
        let mut frac = [0.0; 2];
        for (k, a) in self.axes.iter().enumerate() {
            if !(x[k] >= a.lower && x[k] <= a.upper) {
                return st;
            }
            let s = (x[k] - a.lower) / a.spacing() - 0.5;
            let i0 = s.floor();
            base[k] = i0 as isize;
            frac[k] = s - i0;
        }
        let index = |k: usize, i: isize| -> Option<usize> {
            (i >= 0 && (i as usize) < self.axes[k].cells).then_some(i as usize)
        };
        let pairs = |k: usize| [(base[k], 1.0 - frac[k]), (base[k] + 1, frac[k])];
        match self.axes.len() {
            1 => {
                for (i, w) in pairs(0) {
                    if let Some(i) = index(0, i) {
                        st.push(i, w);
                    }
                }
            }
            _ => {
                let n1 = self.axes[1].cells;
                for (i, wi) in pairs(0) {
                    let Some(i) = index(0, i) else { continue };
                    for (j, wj) in pairs(1) {
                        if let Some(j) = index(1, j) {
                            st.push(i * n1 + j, wi * wj);
                        }
                    }
                }
            }
        }
        st
    }

    /// Multilinear interpolation of cell-centre `values` at `x`; zero outside
    /// the domain and zero-valued ghost cells beyond the outermost centres.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.stencil(x).iter().map(|(c, w)| w * values[c]).sum()
    }
}

/// Up to four `(cell, weight)` pairs of a multilinear stencil.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stencil {
    cells: [usize; 4],
    weights: [f64; 4],
    len: usize,
}

impl Stencil {
    fn push(&mut self, cell: usize, weight: f64) {
        self.cells[self.len] = cell;
        self.weights[self.len] = weight;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells[..self.len].iter().copied().zip(self.weights[..self.len].iter().copied())
    }
}

/// Density values `p(x, t)` at the cell centres of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn zeros(grid: Grid, time: f64) -> Self {
        let values = vec![0.0; grid.len()];
        DensityField { grid, values, time }
    }

    pub fn from_fn(grid: Grid, time: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|c| f(&grid.center(c))).collect();
        DensityField { grid, values, time }
    }

    /// Density of an initial condition on the grid. A point mass becomes a
    /// single-cell spike of unit mass.
    pub fn from_initial(grid: Grid, initial: &InitialCondition) -> Self {
        match initial {
            InitialCondition::Point(x) => {
                let mut field = DensityField::zeros(grid, 0.0);
                if let Some(c) = field.grid.locate(x) {
                    field.values[c] = 1.0 / field.grid.cell_volume();
                }
                field
            }
            _ => DensityField::from_fn(grid, 0.0, |x| initial.density(x).unwrap_or(0.0)),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// Writes `x1[,x2],p`, one row per cell in flat order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.grid.dim()).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},p", header.join(","))?;
        for (c, p) in self.values.iter().enumerate() {
            for x in self.grid.center(c) {
                write!(w, "{x},")?;
            }
            writeln!(w, "{p}")?;
        }
        Ok(())
    }

    /// Sidecar describing the grid, time and mass.
    pub fn write_metadata<W: Write>(&self, mut w: W) -> io::Result<()> {
        let join = |f: &dyn Fn(&Axis) -> String| {
            self.grid.axes().iter().map(f).collect::<Vec<_>>().join(" ")
        };
        writeln!(w, "dimension = {}", self.grid.dim())?;
        writeln!(w, "lower = {}", join(&|a| a.lower.to_string()))?;
        writeln!(w, "upper = {}", join(&|a| a.upper.to_string()))?;
        writeln!(w, "cells = {}", join(&|a| a.cells.to_string()))?;
        writeln!(w, "time = {}", self.time)?;
        writeln!(w, "mass = {}", total_mass(self))
    }
}

/// `∫ p dx` by the midpoint rule.
pub fn total_mass(field: &DensityField) -> f64 {
    field.values.iter().sum::<f64>() * field.grid.cell_volume()
}

/// L1 and L∞ distances between two fields on the same grid.
pub fn distances(a: &DensityField, b: &DensityField) -> Result<(f64, f64)> {
    if a.grid != b.grid {
        return Err(Error::Dimension("fields live on different grids".into()));
    }
    let vol = a.grid.cell_volume();
    let (mut l1, mut linf) = (0.0, 0.0_f64);
    for (x, y) in a.values.iter().zip(&b.values) {
        let e = (x - y).abs();
        l1 += e * vol;
        linf = linf.max(e);
    }
    Ok((l1, linf))
}
