//! SDE data: `dX = f(X) dt + σ(X) ⋄ dL` with a Lévy driver `L`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::examples::ClosedFormMap;
use crate::flow::NoiseCoefficient;
use crate::levy::LevyTriplet;

/// Drift vector field `f: R^d → R^d`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `f(x) = offset + M x` (row-major `M`).
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
    /// `f_i(x) = offset_i + (M x)_i + c_i x_i³`.
    Cubic {
        matrix: Vec<f64>,
        offset: Vec<f64>,
        cubic: Vec<f64>,
    },
    Custom(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::Affine { matrix, offset } => f
                .debug_struct("Affine")
                .field("matrix", matrix)
                .field("offset", offset)
                .finish(),
            Drift::Cubic { matrix, offset, cubic } => f
                .debug_struct("Cubic")
                .field("matrix", matrix)
                .field("offset", offset)
                .field("cubic", cubic)
                .finish(),
            Drift::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Drift {
    pub fn linear(matrix: Vec<f64>) -> Self {
        let d = (matrix.len() as f64).sqrt() as usize;
        Drift::Affine {
            matrix,
            offset: vec![0.0; d],
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        let bad = |path: &str, what: String| Err(Error::validation(path, what));
        match self {
            Drift::Zero | Drift::Custom(_) => Ok(()),
            Drift::Affine { matrix, offset } => {
                if matrix.len() != d * d {
                    return bad("drift.matrix", format!("expected {d}x{d} entries"));
                }
                if offset.len() != d {
                    return bad("drift.offset", format!("expected {d} entries"));
                }
                Ok(())
            }
            Drift::Cubic { matrix, offset, cubic } => {
                if matrix.len() != d * d {
                    return bad("drift.matrix", format!("expected {d}x{d} entries"));
                }
                if offset.len() != d {
                    return bad("drift.offset", format!("expected {d} entries"));
                }
                if cubic.len() != d {
                    return bad("drift.cubic", format!("expected {d} entries"));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        match self {
            Drift::Zero => out[..d].fill(0.0),
            Drift::Affine { matrix, offset } => {
                for i in 0..d {
                    out[i] = offset[i] + (0..d).map(|m| matrix[i * d + m] * x[m]).sum::<f64>();
                }
            }
            Drift::Cubic { matrix, offset, cubic } => {
                for i in 0..d {
                    out[i] = offset[i]
                        + (0..d).map(|m| matrix[i * d + m] * x[m]).sum::<f64>()
                        + cubic[i] * x[i] * x[i] * x[i];
                }
            }
            Drift::Custom(f) => f(x, out),
        }
    }
}

/// Law of `X(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Point(Vec<f64>),
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl InitialCondition {
    pub fn dim(&self) -> usize {
        match self {
            InitialCondition::Point(x) => x.len(),
            InitialCondition::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        match self {
            InitialCondition::Point(x) if x.len() == d => Ok(()),
            InitialCondition::Gaussian { mean, std }
                if mean.len() == d && std.len() == d && std.iter().all(|s| *s > 0.0) =>
            {
                Ok(())
            }
            _ => Err(Error::validation(
                "initial",
                format!("initial condition must have dimension {d} and positive std"),
            )),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            InitialCondition::Point(x) => out.copy_from_slice(x),
            InitialCondition::Gaussian { mean, std } => {
                for ((o, m), s) in out.iter_mut().zip(mean).zip(std) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + s * z;
                }
            }
        }
    }

    /// Density at `x`, `None` for a point mass.
    pub fn density(&self, x: &[f64]) -> Option<f64> {
        match self {
            InitialCondition::Point(_) => None,
            InitialCondition::Gaussian { mean, std } => Some(
                x.iter()
                    .zip(mean)
                    .zip(std)
                    .map(|((xi, m), s)| {
                        let z = (xi - m) / s;
                        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
                    })
                    .product(),
            ),
        }
    }
}

/// Full SDE specification.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub noise: NoiseCoefficient,
    pub drift: Drift,
    pub driver: LevyTriplet,
    pub initial: InitialCondition,
    /// Closed-form inverse map, when the model has one.
    pub closed_form: Option<ClosedFormMap>,
}

impl ModelSpec {
    pub fn new(noise: NoiseCoefficient, drift: Drift, driver: LevyTriplet, initial: InitialCondition) -> Result<Self> {
        let d = noise.d();
        if driver.n() != noise.n() {
            return Err(Error::Dimension(format!(
                "driver has dimension {} but noise expects {}",
                driver.n(),
                noise.n()
            )));
        }
        drift.check(d)?;
        initial.check(d)?;
        Ok(ModelSpec {
            noise,
            drift,
            driver,
            initial,
            closed_form: None,
        })
    }

    pub fn with_closed_form(mut self, map: ClosedFormMap) -> Self {
        self.closed_form = Some(map);
        self
    }

    pub fn d(&self) -> usize {
        self.noise.d()
    }

    pub fn n(&self) -> usize {
        self.noise.n()
    }

    /// Stratonovich correction `½ Σ_m Σ_{j,l} ∂σ_ij/∂x_m σ_ml A_lj` for a
    /// covariance `a` (row-major `n × n`). `s` and `ds` are scratch buffers of
    /// length `d·n` and `d·n·d`.
    pub fn stratonovich_correction(&self, x: &[f64], a: &[f64], s: &mut [f64], ds: &mut [f64], out: &mut [f64]) {
        let (d, n) = (self.d(), self.n());
        out[..d].fill(0.0);
        if a.iter().all(|v| *v == 0.0) {
            return;
        }
        self.noise.sigma(x, s);
        self.noise.dsigma(x, ds);
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for m in 0..d {
                for j in 0..n {
                    let dij = ds[(i * n + j) * d + m];
                    if dij == 0.0 {
                        continue;
                    }
                    for l in 0..n {
                        acc += dij * s[m * n + l] * a[l * n + j];
                    }
                }
            }
            *o = 0.5 * acc;
        }
    }
}
