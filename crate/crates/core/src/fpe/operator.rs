//! Discrete right-hand side of the nonlocal Fokker-Planck equation
//!
//! ```text
//! ∂p/∂t = −Σ_i ∂_i[(f_i + Σ_j σ_ij b_j + ½ Σ ∂_m σ_ij σ_ml A_lj) p]
//!         + ½ Σ ∂_i ∂_m [σ_ij σ_ml A_jl p]
//!         + ∫ [p(H̃(x,y)) |∂H̃/∂x| − p(x) + Σ_ij y_j I_{|y|<1} ∂_i(σ_ij p)] ν(dy)
//! ```
//!
//! on a uniform grid with second-order central differences and zero density
//! outside the domain. The compensator part of the jump integral is linear in
//! `y`, so it is folded into a transport velocity `σ(x)·Σ_k w_k y_k`.

use crate::error::{Error, Result};
use crate::fpe::grid::Grid;
use crate::fpe::quadrature::JumpQuadrature;
use crate::levy::{LevyTriplet, Truncation};
use crate::model::ModelSpec;

/// `f + σ b + ½ Σ ∂_m σ_ij σ_ml A_lj` for an explicit triplet.
pub fn effective_drift_with(model: &ModelSpec, triplet: &LevyTriplet, x: &[f64]) -> Vec<f64> {
    let (d, n) = (model.d(), model.n());
    let mut out = vec![0.0; d];
    model.drift.eval(x, &mut out);
    let mut sb = vec![0.0; d];
    model.noise.velocity(x, triplet.b(), &mut sb);
    let mut corr = vec![0.0; d];
    let mut s = vec![0.0; d * n];
    let mut ds = vec![0.0; d * n * d];
    model.stratonovich_correction(x, triplet.a(), &mut s, &mut ds, &mut corr);
    for i in 0..d {
        out[i] += sb[i] + corr[i];
    }
    out
}

/// Effective drift of the model's own triplet.
pub fn effective_drift(model: &ModelSpec, x: &[f64]) -> Vec<f64> {
    effective_drift_with(model, &model.driver, x)
}

/// `D = ½ σ A σᵀ` (row-major `d × d`) for an explicit covariance.
pub fn diffusion_matrix_with(model: &ModelSpec, a: &[f64], x: &[f64]) -> Vec<f64> {
    let (d, n) = (model.d(), model.n());
    let mut s = vec![0.0; d * n];
    model.noise.sigma(x, &mut s);
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for m in 0..d {
            let mut acc = 0.0;
            for j in 0..n {
                for l in 0..n {
                    acc += s[i * n + j] * a[j * n + l] * s[m * n + l];
                }
            }
            out[i * d + m] = 0.5 * acc;
        }
    }
    out
}

pub fn diffusion_matrix(model: &ModelSpec, x: &[f64]) -> Vec<f64> {
    diffusion_matrix_with(model, model.driver.a(), x)
}

/// Assembled operator: coefficients sampled at cell centres plus the cached
/// jump quadrature.
#[derive(Debug, Clone)]
pub struct FokkerPlanckOperator {
    grid: Grid,
    d: usize,
    /// `[cell][axis]`
    drift: Vec<f64>,
    /// `[cell][axis]`, `σ(x)·Σ w_k y_k I_{|y_k|<1}`
    compensator: Vec<f64>,
    /// `[cell][i][m]`
    diffusion: Vec<f64>,
    quad: Option<JumpQuadrature>,
}

impl FokkerPlanckOperator {
    /// Operator for `model` under truncation `trunc`. Without a quadrature
    /// the jump integral is dropped.
    pub fn new(model: &ModelSpec, grid: &Grid, quad: Option<JumpQuadrature>, trunc: &Truncation) -> Result<Self> {
        let d = model.d();
        if grid.dim() != d {
            return Err(Error::Dimension(format!("grid is {}-D, model is {d}-D", grid.dim())));
        }
        if let Some(q) = &quad {
            if q.grid() != grid {
                return Err(Error::Dimension("quadrature was built on another grid".into()));
            }
        }
        let triplet = model.driver.effective(trunc)?;
        let cells = grid.len();
        let mut drift = Vec::with_capacity(cells * d);
        let mut compensator = Vec::with_capacity(cells * d);
        let mut diffusion = Vec::with_capacity(cells * d * d);
        let mut c = vec![0.0; d];
        for cell in 0..cells {
            let x = grid.center(cell);
            drift.extend(effective_drift_with(model, &triplet, &x));
            diffusion.extend(diffusion_matrix_with(model, triplet.a(), &x));
            match &quad {
                Some(q) => {
                    model.noise.velocity(&x, q.compensator(), &mut c);
                    compensator.extend_from_slice(&c);
                }
                None => compensator.extend(std::iter::repeat_n(0.0, d)),
            }
        }
        Ok(FokkerPlanckOperator {
            grid: grid.clone(),
            d,
            drift,
            compensator,
            diffusion,
            quad,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn quadrature(&self) -> Option<&JumpQuadrature> {
        self.quad.as_ref()
    }

    /// Effective drift at cell `c`.
    pub fn drift_at(&self, c: usize) -> &[f64] {
        &self.drift[c * self.d..(c + 1) * self.d]
    }

    pub fn diffusion_at(&self, c: usize) -> &[f64] {
        let dd = self.d * self.d;
        &self.diffusion[c * dd..(c + 1) * dd]
    }

    /// Adds `−Σ_i ∂_i(v_i p)` for a per-cell velocity field.
    fn add_divergence(&self, velocity: &[f64], sign: f64, p: &[f64], out: &mut [f64]) {
        let d = self.d;
        let mut flux = vec![0.0; p.len()];
        for (k, axis) in self.grid.axes().iter().enumerate() {
            let stride = self.grid.stride(k);
            let h = axis.spacing();
            for (c, f) in flux.iter_mut().enumerate() {
                *f = velocity[c * d + k] * p[c];
            }
            for (c, o) in out.iter_mut().enumerate() {
                let i = self.grid.multi_index(c)[k];
                let up = if i + 1 < axis.cells { flux[c + stride] } else { 0.0 };
                let down = if i > 0 { flux[c - stride] } else { 0.0 };
                *o -= sign * (up - down) / (2.0 * h);
            }
        }
    }

    /// `−Σ_i ∂_i(a_i p)` with the effective drift `a`.
    pub fn add_drift_term(&self, p: &[f64], out: &mut [f64]) {
        self.add_divergence(&self.drift, 1.0, p, out);
    }

    /// `Σ_i ∂_i(σ_ij m_j p)`, the compensator part of the jump integral.
    pub fn add_compensator_term(&self, p: &[f64], out: &mut [f64]) {
        self.add_divergence(&self.compensator, -1.0, p, out);
    }

    /// `Σ_{i,m} ∂_i ∂_m (D_im p)`.
    pub fn add_diffusion_term(&self, p: &[f64], out: &mut [f64]) {
        let d = self.d;
        let axes = self.grid.axes();
        let mut q = vec![0.0; p.len()];
        for (k, axis) in axes.iter().enumerate() {
            let stride = self.grid.stride(k);
            let h2 = axis.spacing() * axis.spacing();
            let mut any = false;
            for (c, qc) in q.iter_mut().enumerate() {
                *qc = self.diffusion[c * d * d + k * d + k] * p[c];
                any |= *qc != 0.0;
            }
            if !any {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                let i = self.grid.multi_index(c)[k];
                let up = if i + 1 < axis.cells { q[c + stride] } else { 0.0 };
                let down = if i > 0 { q[c - stride] } else { 0.0 };
                *o += (up - 2.0 * q[c] + down) / h2;
            }
        }
        if d == 2 {
            let mut any = false;
            for (c, qc) in q.iter_mut().enumerate() {
                *qc = self.diffusion[c * 4 + 1] * p[c];
                any |= *qc != 0.0;
            }
            if !any {
                return;
            }
            let (n0, n1) = (axes[0].cells, axes[1].cells);
            let scale = 2.0 / (4.0 * axes[0].spacing() * axes[1].spacing());
            let at = |i: isize, j: isize| -> f64 {
                if i < 0 || j < 0 || i as usize >= n0 || j as usize >= n1 {
                    0.0
                } else {
                    q[i as usize * n1 + j as usize]
                }
            };
            for (c, o) in out.iter_mut().enumerate() {
                let [i, j] = self.grid.multi_index(c);
                let (i, j) = (i as isize, j as isize);
                *o += scale * (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1));
            }
        }
    }

    /// `Σ_k w_k [p(H̃(x, y_k)) |∂H̃/∂x| − p(x)]` through the assembled
    /// exchange matrix.
    pub fn add_jump_exchange(&self, p: &[f64], out: &mut [f64]) {
        let Some(q) = &self.quad else { return };
        q.exchange().add_product(p, out);
        let total = q.total_weight();
        for (o, pc) in out.iter_mut().zip(p) {
            *o -= total * pc;
        }
    }

    /// Full right-hand side `dp/dt`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        self.add_drift_term(p, out);
        self.add_compensator_term(p, out);
        self.add_diffusion_term(p, out);
        self.add_jump_exchange(p, out);
    }

    /// Largest stable explicit step:
    /// `0.4 · min(dx²/(2‖D‖), dx/‖v‖, 1/ν_total)`, evaluated per axis.
    pub fn stable_dt(&self) -> f64 {
        let d = self.d;
        let axes = self.grid.axes();
        let (mut diff_rate, mut adv_rate) = (0.0_f64, 0.0_f64);
        for c in 0..self.grid.len() {
            let mut dr = 0.0;
            let mut ar = 0.0;
            for (k, axis) in axes.iter().enumerate() {
                let h = axis.spacing();
                dr += 2.0 * self.diffusion[c * d * d + k * d + k].abs() / (h * h);
                ar += (self.drift[c * d + k] - self.compensator[c * d + k]).abs() / h;
            }
            diff_rate = diff_rate.max(dr);
            adv_rate = adv_rate.max(ar);
        }
        let jump_rate = self.quad.as_ref().map_or(0.0, |q| q.total_weight());
        let rate = diff_rate.max(adv_rate).max(jump_rate);
        if rate > 0.0 {
            0.4 / rate
        } else {
            f64::INFINITY
        }
    }
}
