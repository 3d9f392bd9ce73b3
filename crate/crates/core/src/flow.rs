//! Marcus flow maps.
//!
//! `H(u, v)` is the time-1 flow of `Φ' = σ(Φ) v` started at `u`; the inverse
//! map `H̃(u, v)` is the time-1 flow of `Ψ' = −σ(Ψ) v`. Both are integrated with
//! fixed-step classical RK4. The Jacobian determinant of `H̃(·, v)` comes from
//! the Liouville formula: `log det` is carried as an extra ODE component
//! driven by `−div_x(σ(x) v)`, so it shares the RK4 nodes of the state.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default RK4 step count for jump maps inside simulations.
pub const SIMULATION_STEPS: usize = 50;
/// Default RK4 step count for verification.
pub const VERIFICATION_STEPS: usize = 200;

/// Evaluator writing a row-major `d × n` (or `d × n × d`) block into `out`.
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Field {
    /// `σ_ij(x) = c_ij + Σ_m s_ijm x_m`.
    Affine {
        constant: Vec<f64>,
        slopes: Vec<f64>,
        /// `Σ_i s_iji`, the divergence of column j.
        column_divergence: Vec<f64>,
    },
    Custom {
        sigma: FieldFn,
        dsigma: Option<FieldFn>,
    },
}

/// Noise coefficient `σ: R^d → R^{d×n}` with its spatial derivatives.
#[derive(Clone)]
pub struct NoiseCoefficient {
    d: usize,
    n: usize,
    field: Field,
}

impl fmt::Debug for NoiseCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.field {
            Field::Affine { .. } => "affine",
            Field::Custom { .. } => "custom",
        };
        f.debug_struct("NoiseCoefficient")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("kind", &kind)
            .finish()
    }
}

impl NoiseCoefficient {
    /// `σ(x) = C + S·x` with `C` row-major `d × n` and `S` indexed
    /// `[i][j][m]` (row-major `d × n × d`).
    pub fn affine(d: usize, n: usize, constant: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::validation("noise", "dimensions must be at least 1"));
        }
        if constant.len() != d * n {
            return Err(Error::validation("noise.constant", format!("expected {d}x{n} entries")));
        }
        if slopes.len() != d * n * d {
            return Err(Error::validation("noise.slopes", format!("expected {d}x{n}x{d} entries")));
        }
        if constant.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err(Error::validation("noise", "coefficients must be finite"));
        }
        let column_divergence = (0..n)
            .map(|j| (0..d).map(|i| slopes[(i * n + j) * d + i]).sum())
            .collect();
        Ok(NoiseCoefficient {
            d,
            n,
            field: Field::Affine {
                constant,
                slopes,
                column_divergence,
            },
        })
    }

    pub fn constant(d: usize, n: usize, matrix: Vec<f64>) -> Result<Self> {
        Self::affine(d, n, matrix, vec![0.0; d * n * d])
    }

    /// User-supplied `σ`; derivatives fall back to central differences.
    pub fn from_fn(d: usize, n: usize, sigma: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        NoiseCoefficient {
            d,
            n,
            field: Field::Custom {
                sigma: Arc::new(sigma),
                dsigma: None,
            },
        }
    }

    /// Attaches analytic derivatives `∂σ_ij/∂x_m`, laid out `[i][j][m]`.
    /// Has no effect on affine coefficients, whose derivatives are exact.
    pub fn with_derivative(mut self, dsigma: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        if let Field::Custom { dsigma: slot, .. } = &mut self.field {
            *slot = Some(Arc::new(dsigma));
        }
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes `σ(x)` (row-major `d × n`) into `out`.
    pub fn sigma(&self, x: &[f64], out: &mut [f64]) {
        match &self.field {
            Field::Affine { constant, slopes, .. } => {
                for (ij, o) in out.iter_mut().enumerate().take(self.d * self.n) {
                    let row = &slopes[ij * self.d..(ij + 1) * self.d];
                    *o = constant[ij] + row.iter().zip(x).map(|(s, xm)| s * xm).sum::<f64>();
                }
            }
            Field::Custom { sigma, .. } => sigma(x, out),
        }
    }

    /// Writes `∂σ_ij/∂x_m` (layout `[i][j][m]`) into `out`.
    pub fn dsigma(&self, x: &[f64], out: &mut [f64]) {
        let (d, n) = (self.d, self.n);
        match &self.field {
            Field::Affine { slopes, .. } => out[..d * n * d].copy_from_slice(slopes),
            Field::Custom { dsigma: Some(ds), .. } => ds(x, out),
            Field::Custom { sigma, dsigma: None } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let h = 1e-6 * (1.0 + norm);
                let mut xp = x.to_vec();
                let mut plus = vec![0.0; d * n];
                let mut minus = vec![0.0; d * n];
                for m in 0..d {
                    xp[m] = x[m] + h;
                    sigma(&xp, &mut plus);
                    xp[m] = x[m] - h;
                    sigma(&xp, &mut minus);
                    xp[m] = x[m];
                    for ij in 0..d * n {
                        out[ij * d + m] = (plus[ij] - minus[ij]) / (2.0 * h);
                    }
                }
            }
        }
    }

    /// `σ(x) v`.
    pub fn velocity(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let (d, n) = (self.d, self.n);
        match &self.field {
            Field::Affine { constant, slopes, .. } => {
                for (i, o) in out.iter_mut().enumerate().take(d) {
                    let mut acc = 0.0;
                    for (j, vj) in v.iter().enumerate() {
                        if *vj == 0.0 {
                            continue;
                        }
                        let ij = i * n + j;
                        let row = &slopes[ij * d..(ij + 1) * d];
                        let s = constant[ij] + row.iter().zip(x).map(|(s, xm)| s * xm).sum::<f64>();
                        acc += s * vj;
                    }
                    *o = acc;
                }
            }
            Field::Custom { sigma, .. } => {
                let mut s = vec![0.0; d * n];
                sigma(x, &mut s);
                for (i, o) in out.iter_mut().enumerate().take(d) {
                    *o = (0..n).map(|j| s[i * n + j] * v[j]).sum();
                }
            }
        }
    }

    /// `div_x(σ(x) v) = Σ_i Σ_j ∂σ_ij/∂x_i v_j`.
    pub fn divergence(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.field {
            Field::Affine { column_divergence, .. } => {
                column_divergence.iter().zip(v).map(|(c, vj)| c * vj).sum()
            }
            Field::Custom { .. } => {
                let (d, n) = (self.d, self.n);
                let mut ds = vec![0.0; d * n * d];
                self.dsigma(x, &mut ds);
                (0..d)
                    .map(|i| (0..n).map(|j| ds[(i * n + j) * d + i] * v[j]).sum::<f64>())
                    .sum()
            }
        }
    }
}

/// Output of the inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub point: Vec<f64>,
    /// `|∂H̃/∂x|`, populated by [`marcus_inverse`].
    pub jac_det: Option<f64>,
    pub steps_used: usize,
}

/// Reusable RK4 integrator for the Marcus flow of one noise coefficient.
#[derive(Debug, Clone)]
pub struct MarcusFlow<'a> {
    noise: &'a NoiseCoefficient,
    steps: usize,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> MarcusFlow<'a> {
    pub fn new(noise: &'a NoiseCoefficient, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::validation("steps", "need at least one RK4 step"));
        }
        let d = noise.d;
        Ok(MarcusFlow {
            noise,
            steps,
            k: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
            stage: vec![0.0; d],
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Integrates `x' = sign·σ(x) v` over `[0, 1]` in place. Returns the
    /// integral of `sign·div(σ v)` along the trajectory (zero unless
    /// `track_volume`).
    pub fn integrate(&mut self, x: &mut [f64], v: &[f64], sign: f64, track_volume: bool) -> Result<f64> {
        if v.iter().all(|vj| *vj == 0.0) {
            return Ok(0.0);
        }
        let h = 1.0 / self.steps as f64;
        let noise = self.noise;
        let mut log_det = 0.0;
        let [k1, k2, k3, k4] = &mut self.k;
        let stage = &mut self.stage;
        for step in 0..self.steps {
            let mut l = [0.0; 4];
            noise.velocity(x, v, k1);
            if track_volume {
                l[0] = noise.divergence(x, v);
            }
            for ((s, xi), ki) in stage.iter_mut().zip(x.iter()).zip(k1.iter()) {
                *s = xi + 0.5 * h * sign * ki;
            }
            noise.velocity(stage, v, k2);
            if track_volume {
                l[1] = noise.divergence(stage, v);
            }
            for ((s, xi), ki) in stage.iter_mut().zip(x.iter()).zip(k2.iter()) {
                *s = xi + 0.5 * h * sign * ki;
            }
            noise.velocity(stage, v, k3);
            if track_volume {
                l[2] = noise.divergence(stage, v);
            }
            for ((s, xi), ki) in stage.iter_mut().zip(x.iter()).zip(k3.iter()) {
                *s = xi + h * sign * ki;
            }
            noise.velocity(stage, v, k4);
            if track_volume {
                l[3] = noise.divergence(stage, v);
            }
            for i in 0..x.len() {
                x[i] += sign * h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            log_det += sign * h / 6.0 * (l[0] + 2.0 * l[1] + 2.0 * l[2] + l[3]);
            if !x.iter().all(|xi| xi.is_finite()) || !log_det.is_finite() {
                return Err(Error::FlowDivergence {
                    step: step + 1,
                    steps: self.steps,
                });
            }
        }
        Ok(log_det)
    }

    /// `H(x, v)` in place.
    pub fn forward_in_place(&mut self, x: &mut [f64], v: &[f64]) -> Result<()> {
        self.integrate(x, v, 1.0, false).map(|_| ())
    }

    /// `H̃(x, v)` in place; returns the Jacobian determinant.
    pub fn inverse_in_place(&mut self, x: &mut [f64], v: &[f64]) -> Result<f64> {
        self.integrate(x, v, -1.0, true).map(f64::exp)
    }
}

fn check_dims(u: &[f64], v: &[f64], noise: &NoiseCoefficient) -> Result<()> {
    if u.len() != noise.d || v.len() != noise.n {
        return Err(Error::Dimension(format!(
            "u has {} entries and v has {}, noise is {}x{}",
            u.len(),
            v.len(),
            noise.d,
            noise.n
        )));
    }
    Ok(())
}

/// Marcus map `H(u, v)`.
pub fn marcus_forward(u: &[f64], v: &[f64], noise: &NoiseCoefficient, steps: usize) -> Result<Vec<f64>> {
    check_dims(u, v, noise)?;
    let mut x = u.to_vec();
    MarcusFlow::new(noise, steps)?.forward_in_place(&mut x, v)?;
    Ok(x)
}

/// Inverse map `H̃(u, v)` with its Jacobian determinant.
pub fn marcus_inverse(u: &[f64], v: &[f64], noise: &NoiseCoefficient, steps: usize) -> Result<FlowResult> {
    check_dims(u, v, noise)?;
    let mut x = u.to_vec();
    let det = MarcusFlow::new(noise, steps)?.inverse_in_place(&mut x, v)?;
    Ok(FlowResult {
        point: x,
        jac_det: Some(det),
        steps_used: steps,
    })
}

/// `‖H̃(H(u, v), v) − u‖`.
pub fn check_inverse(u: &[f64], v: &[f64], noise: &NoiseCoefficient, steps: usize) -> Result<f64> {
    check_dims(u, v, noise)?;
    let mut flow = MarcusFlow::new(noise, steps)?;
    let mut x = u.to_vec();
    flow.forward_in_place(&mut x, v)?;
    flow.integrate(&mut x, v, -1.0, false)?;
    Ok(x.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_1d() -> NoiseCoefficient {
        NoiseCoefficient::affine(1, 1, vec![0.0], vec![1.0]).unwrap()
    }

    fn rotation_2d() -> NoiseCoefficient {
        // σ = [[x2, 0], [0, x1]]
        NoiseCoefficient::affine(2, 2, vec![0.0; 4], vec![0., 1., 0., 0., 0., 0., 1., 0.]).unwrap()
    }

    #[test]
    fn zero_jump_is_identity() {
        let noise = rotation_2d();
        assert_eq!(marcus_forward(&[0.3, -1.2], &[0.0, 0.0], &noise, 7).unwrap(), vec![0.3, -1.2]);
        let r = marcus_inverse(&[0.3, -1.2], &[0.0, 0.0], &noise, 7).unwrap();
        assert_eq!(r.point, vec![0.3, -1.2]);
        assert_eq!(r.jac_det, Some(1.0));
        assert_eq!(check_inverse(&[0.3, -1.2], &[0.0, 0.0], &noise, 7).unwrap(), 0.0);
    }

    #[test]
    fn linear_forward_doubles() {
        let x = marcus_forward(&[1.0], &[2f64.ln()], &linear_1d(), VERIFICATION_STEPS).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn linear_inverse_halves_with_jacobian() {
        let r = marcus_inverse(&[2.0], &[2f64.ln()], &linear_1d(), VERIFICATION_STEPS).unwrap();
        assert!((r.point[0] - 1.0).abs() < 1e-12);
        assert!((r.jac_det.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_forward_is_hyperbolic() {
        let x = marcus_forward(&[1.0, 0.0], &[1.0, 1.0], &rotation_2d(), VERIFICATION_STEPS).unwrap();
        assert!((x[0] - 1f64.cosh()).abs() < 1e-10);
        assert!((x[1] - 1f64.sinh()).abs() < 1e-10);
        let r = marcus_inverse(&[1.0, 0.0], &[1.0, 1.0], &rotation_2d(), VERIFICATION_STEPS).unwrap();
        assert!((r.point[0] - 1f64.cosh()).abs() < 1e-10);
        assert!((r.point[1] + 1f64.sinh()).abs() < 1e-10);
        assert!((r.jac_det.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_noise_is_exact() {
        let noise = NoiseCoefficient::constant(2, 2, vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let u = [0.7, -0.2];
        let v = [1.3, -0.8];
        let x = marcus_forward(&u, &v, &noise, 3).unwrap();
        assert!((x[0] - (0.7 + 1.3 + 0.4)).abs() < 1e-15);
        assert!((x[1] - (-0.2 + 0.325 - 1.6)).abs() < 1e-15);
        assert!(check_inverse(&u, &v, &noise, 3).unwrap() < 1e-15);
    }

    #[test]
    fn custom_field_uses_finite_differences() {
        let custom = NoiseCoefficient::from_fn(1, 1, |x, out| out[0] = x[0]);
        let r = marcus_inverse(&[3.0], &[0.7], &custom, VERIFICATION_STEPS).unwrap();
        assert!((r.point[0] - 3.0 * (-0.7f64).exp()).abs() < 1e-10);
        assert!((r.jac_det.unwrap() - (-0.7f64).exp()).abs() < 1e-9);

        let mut ds = [0.0];
        custom.dsigma(&[2.0], &mut ds);
        assert!((ds[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn analytic_derivative_overrides_fallback() {
        let custom = NoiseCoefficient::from_fn(1, 1, |x, out| out[0] = x[0].sin())
            .with_derivative(|x, out| out[0] = x[0].cos());
        let mut ds = [0.0];
        custom.dsigma(&[0.4], &mut ds);
        assert_eq!(ds[0], 0.4f64.cos());
    }

    #[test]
    fn reports_divergence() {
        let blowup = NoiseCoefficient::from_fn(1, 1, |x, out| out[0] = x[0] * x[0]);
        let err = marcus_forward(&[1.0], &[50.0], &blowup, 4).unwrap_err();
        assert!(matches!(err, Error::FlowDivergence { .. }), "{err:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(marcus_forward(&[1.0], &[1.0], &linear_1d(), 0).is_err());
        assert!(marcus_forward(&[1.0, 2.0], &[1.0], &linear_1d(), 5).is_err());
    }

    #[test]
    fn rk4_order_on_linear_flow() {
        let exact = 2.0 * (-1.5f64).exp();
        let err = |steps| (marcus_inverse(&[2.0], &[1.5], &linear_1d(), steps).unwrap().point[0] - exact).abs();
        let slope = (err(8) / err(16)).log2();
        assert!(slope >= 3.7, "observed order {slope}");
    }

    proptest! {
        #[test]
        fn semigroup_property(
            u in prop::array::uniform2(-3.0..3.0f64),
            v in prop::array::uniform2(-2.0..2.0f64),
        ) {
            let noise = rotation_2d();
            let half = [v[0] / 2.0, v[1] / 2.0];
            let once = marcus_forward(&u, &v, &noise, VERIFICATION_STEPS).unwrap();
            let mid = marcus_forward(&u, &half, &noise, VERIFICATION_STEPS / 2).unwrap();
            let twice = marcus_forward(&mid, &half, &noise, VERIFICATION_STEPS / 2).unwrap();
            for k in 0..2 {
                prop_assert!((once[k] - twice[k]).abs() <= 1e-10 * (1.0 + once[k].abs()));
            }
        }
    }
}
