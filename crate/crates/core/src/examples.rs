//! Closed-form Marcus maps for three reference models and the built-in model
//! registry (`"example1"`, `"example2"`, `"example3"`).
//!
//! * example1: `d = n = 1`, `σ(x) = x`, so `H̃(u, v) = u e^{−v}`.
//! * example2: oscillator `σ(x) = [[0, 0], [1, x₂]]` driven by a Brownian
//!   motion and a compound Poisson process.
//! * example3: `σ(x) = [[x₂, 0], [0, x₁]]` driven by two stable processes.
//!
//! Where a printed closed form and the flow ODE disagree, the flow ODE wins;
//! every map here is checked against [`crate::flow::marcus_inverse`].

use crate::error::Result;
use crate::flow::NoiseCoefficient;
use crate::levy::{product_triplet, DriftConvention, JumpSizes, ScalarLevy};
use crate::model::{Drift, InitialCondition, ModelSpec};

/// Below this magnitude the special functions switch to Taylor series.
const SERIES_CUTOFF: f64 = 1e-5;

/// Closed-form inverse map `(u, v) ↦ (H̃(u, v), |∂H̃/∂u|)` registered for a
/// model.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormMap {
    pub id: &'static str,
    pub inverse: fn(&[f64], &[f64]) -> (Vec<f64>, f64),
}

impl ClosedFormMap {
    /// `H(u, v) = H̃(u, −v)`: the forward flow is the inverse flow of `−v`.
    pub fn forward(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        (self.inverse)(u, &neg).0
    }
}

pub fn example1_htilde(u: f64, v: f64) -> (f64, f64) {
    let j = (-v).exp();
    (u * j, j)
}

/// `K(x) = (1 − eˣ)/x`, `K(0) = −1`.
pub fn k_function(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        -(1.0 + x / 2.0 + x * x / 6.0)
    } else {
        -x.exp_m1() / x
    }
}

/// `H̃(u, v) = (u₁, v₁ K(−v₂) + e^{−v₂} u₂)`, Jacobian `e^{−v₂}`.
///
/// On the support of the example2 jump measure `v₁ = 0`, so the second
/// coordinate reduces to `e^{−v₂} u₂`.
pub fn example2_htilde(u: [f64; 2], v: [f64; 2]) -> ([f64; 2], f64) {
    let e = (-v[1]).exp();
    ([u[0], v[0] * k_function(-v[1]) + e * u[1]], e)
}

/// `cosh(√x)` for `x ≥ 0`, `cos(√|x|)` otherwise.
pub fn cosbar(x: f64) -> f64 {
    if x >= 0.0 {
        x.sqrt().cosh()
    } else {
        (-x).sqrt().cos()
    }
}

/// `sinh(√x)/√x` for `x > 0`, `1` at zero, `sin(√|x|)/√|x|` for `x < 0`.
pub fn sinbar(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 + x / 6.0 + x * x / 120.0
    } else if x > 0.0 {
        let r = x.sqrt();
        r.sinh() / r
    } else {
        let r = (-x).sqrt();
        r.sin() / r
    }
}

/// `cos̄(s)² − s·sin̄(s)²`, identically 1.
pub fn example3_jac_det(s: f64) -> f64 {
    let (c, sb) = (cosbar(s), sinbar(s));
    c * c - s * sb * sb
}

pub fn example3_htilde(u: [f64; 2], v: [f64; 2]) -> ([f64; 2], f64) {
    let s = v[0] * v[1];
    let (c, sb) = (cosbar(s), sinbar(s));
    (
        [u[0] * c - v[0] * u[1] * sb, -v[1] * u[0] * sb + u[1] * c],
        example3_jac_det(s),
    )
}

fn example1_map(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let (p, j) = example1_htilde(u[0], v[0]);
    (vec![p], j)
}

fn example2_map(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let (p, j) = example2_htilde([u[0], u[1]], [v[0], v[1]]);
    (p.to_vec(), j)
}

fn example3_map(u: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
    let (p, j) = example3_htilde([u[0], u[1]], [v[0], v[1]]);
    (p.to_vec(), j)
}

pub const EXAMPLE1_MAP: ClosedFormMap = ClosedFormMap {
    id: "example1",
    inverse: example1_map,
};
pub const EXAMPLE2_MAP: ClosedFormMap = ClosedFormMap {
    id: "example2",
    inverse: example2_map,
};
pub const EXAMPLE3_MAP: ClosedFormMap = ClosedFormMap {
    id: "example3",
    inverse: example3_map,
};

pub const MODEL_IDS: [&str; 3] = ["example1", "example2", "example3"];

/// Noise coefficient and closed-form map of a built-in model.
pub fn builtin_noise(id: &str) -> Option<(NoiseCoefficient, ClosedFormMap)> {
    let noise = match id {
        "example1" => NoiseCoefficient::affine(1, 1, vec![0.0], vec![1.0]),
        "example2" => NoiseCoefficient::affine(2, 2, vec![0.0, 0.0, 1.0, 0.0], vec![0., 0., 0., 0., 0., 0., 0., 1.]),
        "example3" => NoiseCoefficient::affine(2, 2, vec![0.0; 4], vec![0., 1., 0., 0., 0., 0., 1., 0.]),
        _ => return None,
    }
    .expect("built-in coefficients are well formed");
    let map = match id {
        "example1" => EXAMPLE1_MAP,
        "example2" => EXAMPLE2_MAP,
        _ => EXAMPLE3_MAP,
    };
    Some((noise, map))
}

/// Default drift, driver and initial state of a built-in model.
pub fn builtin_defaults(id: &str) -> Option<(Drift, Vec<ScalarLevy>, InitialCondition)> {
    match id {
        "example1" => Some((
            Drift::Zero,
            vec![ScalarLevy::stable(0.0, 1.5)],
            InitialCondition::Point(vec![1.0]),
        )),
        "example2" => Some((
            Drift::linear(vec![0.0, 1.0, -1.0, 0.0]),
            vec![
                ScalarLevy::brownian(1.0),
                ScalarLevy::compound_poisson(1.0, JumpSizes::dirac(0.5))
                    .with_convention(DriftConvention::Uncompensated),
            ],
            InitialCondition::Point(vec![1.0, 0.0]),
        )),
        "example3" => Some((
            Drift::Zero,
            vec![ScalarLevy::stable(1.0, 1.5), ScalarLevy::stable(1.0, 1.5)],
            InitialCondition::Point(vec![1.0, 1.0]),
        )),
        _ => None,
    }
}

/// Assembles a built-in model, overriding any of its defaults.
pub fn builtin_model(
    id: &str,
    drift: Option<Drift>,
    driver: Option<Vec<ScalarLevy>>,
    initial: Option<InitialCondition>,
) -> Option<Result<ModelSpec>> {
    let (noise, map) = builtin_noise(id)?;
    let (d0, l0, i0) = builtin_defaults(id)?;
    let build = || -> Result<ModelSpec> {
        let triplet = product_triplet(&driver.unwrap_or(l0))?;
        Ok(ModelSpec::new(noise, drift.unwrap_or(d0), triplet, initial.unwrap_or(i0))?.with_closed_form(map))
    };
    Some(build())
}
