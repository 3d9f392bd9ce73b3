//! Lévy drivers: generating triplets, product construction from independent
//! scalar processes, and increment sampling.
//!
//! The jump measure is restricted to a closed family: compound Poisson
//! components with a tabulated or named size law, and symmetric α-stable
//! components `ν(dy) = dy / |y|^{1+α}`. Each component lives on one driver
//! coordinate, so a product of scalar processes never needs a tensor-product
//! measure.
//!
//! Drift convention: `LevyTriplet::b` is always the canonical triplet drift,
//! i.e. the small jumps (`|y| < 1`) are compensated. A scalar driver may be
//! declared with [`DriftConvention::Uncompensated`], in which case its drift is
//! converted when the triplet is assembled.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};

/// Tolerated negative eigenvalue when checking `A` for positive
/// semidefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-12;

/// Law of the jump sizes of a compound Poisson component.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSizes {
    /// Finite table of `(value, probability)` pairs.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl JumpSizes {
    /// Point mass at `value`.
    pub fn dirac(value: f64) -> Self {
        JumpSizes::Discrete {
            values: vec![value],
            probs: vec![1.0],
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        match self {
            JumpSizes::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::validation(
                        format!("{path}.probs"),
                        "discrete table needs matching non-empty values and probs",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::validation(format!("{path}.values"), "values must be finite"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::validation(
                        format!("{path}.probs"),
                        "probabilities must be non-negative",
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::validation(
                        format!("{path}.probs"),
                        format!("probabilities sum to {total}, expected 1"),
                    ));
                }
            }
            JumpSizes::Normal { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && *std > 0.0) {
                    return Err(Error::validation(
                        format!("{path}.std"),
                        "normal jump law needs finite mean and std > 0",
                    ));
                }
            }
            JumpSizes::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::validation(
                        format!("{path}.high"),
                        "uniform jump law needs low < high",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpSizes::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
            JumpSizes::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + std * z
            }
            JumpSizes::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }

    /// Density of the law, `None` for discrete tables.
    pub fn density(&self, y: f64) -> Option<f64> {
        match self {
            JumpSizes::Discrete { .. } => None,
            JumpSizes::Normal { mean, std } => {
                let z = (y - mean) / std;
                Some((-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt()))
            }
            JumpSizes::Uniform { low, high } => {
                Some(if y >= *low && y <= *high { 1.0 / (high - low) } else { 0.0 })
            }
        }
    }

    /// `E[r; |r| < 1]`.
    pub fn small_first_moment(&self) -> f64 {
        match self {
            JumpSizes::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| v.abs() < 1.0)
                .map(|(v, p)| v * p)
                .sum(),
            JumpSizes::Normal { mean, std } => {
                let unit = NormalDist::new(0.0, 1.0).expect("unit normal");
                let a = (-1.0 - mean) / std;
                let b = (1.0 - mean) / std;
                let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mean * (unit.cdf(b) - unit.cdf(a)) + std * (phi(a) - phi(b))
            }
            JumpSizes::Uniform { low, high } => {
                let lo = low.max(-1.0);
                let hi = high.min(1.0);
                if hi <= lo {
                    0.0
                } else {
                    0.5 * (hi * hi - lo * lo) / (high - low)
                }
            }
        }
    }
}

/// Scalar jump measure.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpKind {
    /// `ν = rate · ρ`.
    CompoundPoisson { rate: f64, sizes: JumpSizes },
    /// `ν(dy) = dy / |y|^{1+alpha}`.
    AlphaStable { alpha: f64 },
}

impl JumpKind {
    fn validate(&self, path: &str) -> Result<()> {
        match self {
            JumpKind::CompoundPoisson { rate, sizes } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(Error::validation(format!("{path}.lambda"), "rate must be > 0"));
                }
                sizes.validate(&format!("{path}.rho"))
            }
            JumpKind::AlphaStable { alpha } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return Err(Error::validation(
                        format!("{path}.alpha"),
                        format!("alpha = {alpha} must lie in (0, 2)"),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// A scalar jump measure embedded on one driver coordinate (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct JumpComponent {
    pub coordinate: usize,
    pub kind: JumpKind,
}

/// How the drift of a scalar driver was specified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftConvention {
    /// `b` is the triplet drift (small jumps compensated).
    #[default]
    Canonical,
    /// `b` is the drift of `bt + B(t) + Σ jumps` with no compensation.
    Uncompensated,
}

/// One independent scalar Lévy process `(b, A, ν)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLevy {
    pub b: f64,
    pub a: f64,
    pub jumps: Vec<JumpKind>,
    pub convention: DriftConvention,
}

impl ScalarLevy {
    pub fn new(b: f64, a: f64, jumps: Vec<JumpKind>) -> Self {
        ScalarLevy {
            b,
            a,
            jumps,
            convention: DriftConvention::Canonical,
        }
    }

    pub fn brownian(a: f64) -> Self {
        Self::new(0.0, a, Vec::new())
    }

    pub fn stable(b: f64, alpha: f64) -> Self {
        Self::new(b, 0.0, vec![JumpKind::AlphaStable { alpha }])
    }

    pub fn compound_poisson(rate: f64, sizes: JumpSizes) -> Self {
        Self::new(0.0, 0.0, vec![JumpKind::CompoundPoisson { rate, sizes }])
    }

    pub fn with_convention(mut self, convention: DriftConvention) -> Self {
        self.convention = convention;
        self
    }
}

/// Truncation of the jump measure used by both the simulator and the
/// Fokker-Planck quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Inner cutoff ε for stable components.
    pub eps: f64,
    /// Optional outer cutoff R for stable components.
    pub outer: Option<f64>,
    /// Replace the dropped small stable jumps by a matched Gaussian.
    pub small_jump_gaussian: bool,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            eps: 1e-2,
            outer: None,
            small_jump_gaussian: false,
        }
    }
}

impl Truncation {
    pub fn new(eps: f64) -> Self {
        Truncation {
            eps,
            ..Default::default()
        }
    }

    pub fn with_outer(mut self, outer: f64) -> Self {
        self.outer = Some(outer);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::validation("eps", format!("eps = {} must lie in (0, 1]", self.eps)));
        }
        if let Some(r) = self.outer {
            if !(r > 1.0 && r.is_finite()) {
                return Err(Error::validation("r_max", format!("outer cutoff {r} must exceed 1")));
            }
        }
        Ok(())
    }
}

/// ν-mass of `{eps ≤ |y| ≤ outer}` for `dy/|y|^{1+alpha}`.
pub fn stable_tail_mass(alpha: f64, eps: f64, outer: Option<f64>) -> f64 {
    let far = outer.map_or(0.0, |r| r.powf(-alpha));
    2.0 * (eps.powf(-alpha) - far) / alpha
}

/// Compensator shift and dropped variance of a component under cutoff ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallJumpMoments {
    /// `m(ε) = ∫_{ε≤|y|<1} y ν(dy)`.
    pub mean: f64,
    /// `s²(ε) = ∫_{|y|<ε} y² ν(dy)`.
    pub variance: f64,
}

/// Compound Poisson components are sampled exactly at every size, so their
/// shift covers all of `|y| < 1` and nothing is dropped.
pub fn small_jump_moments(component: &JumpComponent, eps: f64) -> SmallJumpMoments {
    match &component.kind {
        JumpKind::AlphaStable { alpha } => SmallJumpMoments {
            mean: 0.0,
            variance: 2.0 * eps.powf(2.0 - alpha) / (2.0 - alpha),
        },
        JumpKind::CompoundPoisson { rate, sizes } => SmallJumpMoments {
            mean: rate * sizes.small_first_moment(),
            variance: 0.0,
        },
    }
}

/// Generating triplet `(b, A, ν)` of an `R^n`-valued Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    n: usize,
    b: Vec<f64>,
    a: Vec<f64>,
    tau: Vec<f64>,
    components: Vec<JumpComponent>,
}

impl LevyTriplet {
    /// Builds a triplet; `a` is row-major `n × n`.
    pub fn new(b: Vec<f64>, a: Vec<f64>, components: Vec<JumpComponent>) -> Result<Self> {
        let n = b.len();
        if n == 0 {
            return Err(Error::validation("b", "driver dimension must be at least 1"));
        }
        if a.len() != n * n {
            return Err(Error::validation("a", format!("expected {n}x{n} covariance")));
        }
        if b.iter().chain(&a).any(|v| !v.is_finite()) {
            return Err(Error::validation("b", "triplet entries must be finite"));
        }
        let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::validation(format!("a[{i}][{j}]"), "covariance must be symmetric"));
                }
            }
        }
        let tau = psd_sqrt(&a, n)?;

        let mut stable_seen = vec![false; n];
        for (k, c) in components.iter().enumerate() {
            let path = format!("components[{k}]");
            if c.coordinate >= n {
                return Err(Error::validation(
                    format!("{path}.coordinate"),
                    format!("coordinate {} out of range for n = {n}", c.coordinate),
                ));
            }
            c.kind.validate(&path)?;
            if matches!(c.kind, JumpKind::AlphaStable { .. }) {
                if stable_seen[c.coordinate] {
                    return Err(Error::validation(
                        path,
                        format!("more than one stable component on coordinate {}", c.coordinate),
                    ));
                }
                stable_seen[c.coordinate] = true;
            }
        }
        Ok(LevyTriplet {
            n,
            b,
            a,
            tau,
            components,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Covariance `A`, row-major.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Symmetric factor with `tau · tauᵀ = A`, row-major.
    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn components(&self) -> &[JumpComponent] {
        &self.components
    }

    pub fn has_stable(&self) -> bool {
        self.components
            .iter()
            .any(|c| matches!(c.kind, JumpKind::AlphaStable { .. }))
    }

    /// `Σ m(ε)` per coordinate: the drift shift that compensates the
    /// sampled jumps with `|y| < 1`.
    pub fn compensator(&self, eps: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.n];
        for c in &self.components {
            m[c.coordinate] += small_jump_moments(c, eps).mean;
        }
        m
    }

    /// Triplet seen by both the simulator and the FPE under `trunc`: when the
    /// Gaussian small-jump replacement is on, `s²(ε)` is added to `A`.
    pub fn effective(&self, trunc: &Truncation) -> Result<LevyTriplet> {
        if !trunc.small_jump_gaussian {
            return Ok(self.clone());
        }
        let mut a = self.a.clone();
        for c in &self.components {
            if matches!(c.kind, JumpKind::AlphaStable { .. }) {
                a[c.coordinate * self.n + c.coordinate] += small_jump_moments(c, trunc.eps).variance;
            }
        }
        LevyTriplet::new(self.b.clone(), a, self.components.clone())
    }
}

fn psd_sqrt(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let eig = SymmetricEigen::new(m);
    if let Some((i, ev)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .find(|(_, ev)| **ev < -PSD_TOLERANCE)
    {
        return Err(Error::validation(
            "a",
            format!("covariance not positive semidefinite (eigenvalue {i} = {ev:e})"),
        ));
    }
    let root = eig.eigenvalues.map(|ev| ev.max(0.0).sqrt());
    let tau = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = tau[(i, j)];
        }
    }
    Ok(out)
}

/// Triplet of `L = (L_1, …, L_n)` built from independent scalar processes:
/// `b = (b_i)`, `A = diag(A_i)`, and each scalar measure embedded on its own
/// coordinate.
pub fn product_triplet(scalars: &[ScalarLevy]) -> Result<LevyTriplet> {
    if scalars.is_empty() {
        return Err(Error::validation("scalars", "need at least one scalar driver"));
    }
    let n = scalars.len();
    let mut b = Vec::with_capacity(n);
    let mut a = vec![0.0; n * n];
    let mut components = Vec::new();
    for (i, s) in scalars.iter().enumerate() {
        if !s.b.is_finite() {
            return Err(Error::validation(format!("scalars[{i}].b"), "drift must be finite"));
        }
        if !(s.a.is_finite() && s.a >= 0.0) {
            return Err(Error::validation(
                format!("scalars[{i}].a"),
                format!("variance {} must be non-negative", s.a),
            ));
        }
        let mut stable = 0;
        for (k, j) in s.jumps.iter().enumerate() {
            j.validate(&format!("scalars[{i}].jumps[{k}]"))?;
            if matches!(j, JumpKind::AlphaStable { .. }) {
                stable += 1;
            }
        }
        if stable > 1 {
            return Err(Error::validation(
                format!("scalars[{i}].jumps"),
                "at most one stable component per coordinate",
            ));
        }
        let mut drift = s.b;
        if s.convention == DriftConvention::Uncompensated {
            drift += s
                .jumps
                .iter()
                .map(|kind| {
                    small_jump_moments(
                        &JumpComponent {
                            coordinate: i,
                            kind: kind.clone(),
                        },
                        1.0,
                    )
                    .mean
                })
                .sum::<f64>();
        }
        b.push(drift);
        a[i * n + i] = s.a;
        components.extend(s.jumps.iter().cloned().map(|kind| JumpComponent { coordinate: i, kind }));
    }
    LevyTriplet::new(b, a, components)
}

/// A single sampled jump of the driver, supported on one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Time offset inside the sampling interval, in `[0, Δt)`.
    pub offset: f64,
    pub coordinate: usize,
    pub size: f64,
}

impl Jump {
    pub fn to_vector(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[self.coordinate] = self.size;
        v
    }
}

/// Increment of the driver over one interval: the continuous part and the
/// ordered list of finite-activity jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyIncrement {
    pub continuous: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl LevyIncrement {
    /// Continuous part plus the sum of all jumps.
    pub fn total(&self) -> Vec<f64> {
        let mut t = self.continuous.clone();
        for j in &self.jumps {
            t[j.coordinate] += j.size;
        }
        t
    }
}

#[derive(Debug, Clone)]
enum Source {
    Compound { sizes: JumpSizes },
    Stable { alpha: f64, inner: f64, far: f64 },
}

#[derive(Debug, Clone)]
struct JumpSource {
    coordinate: usize,
    rate: f64,
    source: Source,
}

/// Sampler for a triplet under a fixed truncation. Building it once per
/// ensemble avoids recomputing rates and compensators on every step.
#[derive(Debug, Clone)]
pub struct DriverSampler {
    triplet: LevyTriplet,
    drift: Vec<f64>,
    sources: Vec<JumpSource>,
}

impl DriverSampler {
    pub fn new(triplet: &LevyTriplet, trunc: &Truncation) -> Result<Self> {
        if triplet.has_stable() {
            trunc.validate()?;
        }
        let triplet = triplet.effective(trunc)?;
        let comp = triplet.compensator(trunc.eps);
        let drift = triplet.b.iter().zip(&comp).map(|(b, m)| b - m).collect();
        let sources = triplet
            .components
            .iter()
            .map(|c| match &c.kind {
                JumpKind::CompoundPoisson { rate, sizes } => JumpSource {
                    coordinate: c.coordinate,
                    rate: *rate,
                    source: Source::Compound { sizes: sizes.clone() },
                },
                JumpKind::AlphaStable { alpha } => JumpSource {
                    coordinate: c.coordinate,
                    rate: stable_tail_mass(*alpha, trunc.eps, trunc.outer),
                    source: Source::Stable {
                        alpha: *alpha,
                        inner: trunc.eps.powf(-alpha),
                        far: trunc.outer.map_or(0.0, |r| r.powf(-alpha)),
                    },
                },
            })
            .collect();
        Ok(DriverSampler {
            triplet,
            drift,
            sources,
        })
    }

    /// The (possibly Gaussian-augmented) triplet this sampler draws from.
    pub fn triplet(&self) -> &LevyTriplet {
        &self.triplet
    }

    /// Drift of the continuous part after moving the compensator of the
    /// sampled small jumps into it.
    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Total intensity of sampled jumps.
    pub fn jump_rate(&self) -> f64 {
        self.sources.iter().map(|s| s.rate).sum()
    }

    /// Writes `drift·h + tau·√h·ξ` into `out`.
    pub fn sample_continuous<R: Rng + ?Sized>(&self, h: f64, rng: &mut R, out: &mut [f64]) {
        let n = self.triplet.n;
        let tau = &self.triplet.tau;
        let sq = h.sqrt();
        for (o, d) in out.iter_mut().zip(&self.drift) {
            *o = d * h;
        }
        if tau.iter().all(|t| *t == 0.0) {
            return;
        }
        for k in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            for (i, o) in out.iter_mut().enumerate() {
                *o += tau[i * n + k] * sq * xi;
            }
        }
    }

    /// Appends the jumps falling in `[0, h)` to `out`, sorted by offset.
    pub fn sample_jumps<R: Rng + ?Sized>(&self, h: f64, rng: &mut R, out: &mut Vec<Jump>) {
        let start = out.len();
        for s in &self.sources {
            let mean = s.rate * h;
            if mean <= 0.0 {
                continue;
            }
            let count: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
            for _ in 0..count as u64 {
                let offset = h * rng.random::<f64>();
                let size = match &s.source {
                    Source::Compound { sizes } => sizes.sample(rng),
                    Source::Stable { alpha, inner, far } => {
                        let u: f64 = rng.random();
                        let mag = (inner - u * (inner - far)).powf(-1.0 / alpha);
                        if rng.random::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    }
                };
                out.push(Jump {
                    offset,
                    coordinate: s.coordinate,
                    size,
                });
            }
        }
        out[start..].sort_by(|a, b| a.offset.total_cmp(&b.offset));
    }
}

/// Samples the driver increment over `dt`.
pub fn sample_increment<R: Rng + ?Sized>(
    triplet: &LevyTriplet,
    dt: f64,
    trunc: &Truncation,
    rng: &mut R,
) -> Result<LevyIncrement> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::validation("dt", "time step must be positive"));
    }
    let sampler = DriverSampler::new(triplet, trunc)?;
    let mut continuous = vec![0.0; triplet.n];
    sampler.sample_continuous(dt, rng, &mut continuous);
    let mut jumps = Vec::new();
    sampler.sample_jumps(dt, rng, &mut jumps);
    Ok(LevyIncrement { continuous, jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cp(rate: f64, value: f64) -> JumpKind {
        JumpKind::CompoundPoisson {
            rate,
            sizes: JumpSizes::dirac(value),
        }
    }

    #[test]
    fn product_of_two_stable_drivers() {
        let t = product_triplet(&[ScalarLevy::stable(1.0, 1.2), ScalarLevy::stable(1.0, 0.7)]).unwrap();
        assert_eq!(t.b(), &[1.0, 1.0]);
        assert_eq!(t.a(), &[0.0; 4]);
        assert_eq!(t.components().len(), 2);
        assert_eq!(t.components()[1].coordinate, 1);
        assert_eq!(t.components()[1].kind, JumpKind::AlphaStable { alpha: 0.7 });
    }

    #[test]
    fn product_of_brownian_and_compound_poisson() {
        let t = product_triplet(&[ScalarLevy::brownian(1.0), ScalarLevy::new(0.0, 0.0, vec![cp(2.0, 0.5)])])
            .unwrap();
        assert_eq!(t.b(), &[0.0, 0.0]);
        assert_eq!(t.a(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.tau(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t.components().len(), 1);
        assert_eq!(t.components()[0].coordinate, 1);
    }

    #[test]
    fn single_scalar_is_itself() {
        let t = product_triplet(&[ScalarLevy::new(0.3, 2.0, vec![cp(1.0, 1.0)])]).unwrap();
        assert_eq!(t.n(), 1);
        assert_eq!(t.b(), &[0.3]);
        assert_eq!(t.a(), &[2.0]);
        assert!((t.tau()[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_scalar_names_its_index() {
        let err = product_triplet(&[ScalarLevy::brownian(1.0), ScalarLevy::stable(0.0, 2.5)]).unwrap_err();
        match err {
            Error::Validation { path, .. } => assert_eq!(path, "scalars[1].jumps[0].alpha"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(product_triplet(&[ScalarLevy::brownian(-1.0)]).is_err());
        assert!(product_triplet(&[]).is_err());
        assert!(product_triplet(&[ScalarLevy::new(0.0, 0.0, vec![cp(0.0, 1.0)])]).is_err());
    }

    #[test]
    fn discrete_table_must_sum_to_one() {
        let bad = JumpKind::CompoundPoisson {
            rate: 1.0,
            sizes: JumpSizes::Discrete {
                values: vec![1.0, 2.0],
                probs: vec![0.5, 0.4],
            },
        };
        assert!(product_triplet(&[ScalarLevy::new(0.0, 0.0, vec![bad])]).is_err());
    }

    #[test]
    fn rejects_indefinite_and_asymmetric_covariance() {
        assert!(LevyTriplet::new(vec![0.0; 2], vec![1.0, 2.0, 2.0, 1.0], vec![]).is_err());
        assert!(LevyTriplet::new(vec![0.0; 2], vec![1.0, 0.5, 0.0, 1.0], vec![]).is_err());
        let two_stable = vec![
            JumpComponent {
                coordinate: 0,
                kind: JumpKind::AlphaStable { alpha: 1.0 },
            };
            2
        ];
        assert!(LevyTriplet::new(vec![0.0], vec![0.0], two_stable).is_err());
    }

    #[test]
    fn tau_factors_full_covariance() {
        let a = vec![2.0, 0.6, 0.6, 1.0];
        let t = LevyTriplet::new(vec![0.0; 2], a.clone(), vec![]).unwrap();
        let tau = t.tau();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| tau[i * 2 + k] * tau[j * 2 + k]).sum();
                assert!((s - a[i * 2 + j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uncompensated_drift_is_converted() {
        let s = ScalarLevy::new(0.0, 0.0, vec![cp(1.0, 0.5)]).with_convention(DriftConvention::Uncompensated);
        let t = product_triplet(&[s]).unwrap();
        assert!((t.b()[0] - 0.5).abs() < 1e-15);
        // jumps of size ≥ 1 are never compensated
        let s = ScalarLevy::new(0.0, 0.0, vec![cp(1.0, 1.5)]).with_convention(DriftConvention::Uncompensated);
        assert_eq!(product_triplet(&[s]).unwrap().b(), &[0.0]);
    }

    #[test]
    fn small_jump_moments_closed_forms() {
        let stable = JumpComponent {
            coordinate: 0,
            kind: JumpKind::AlphaStable { alpha: 1.5 },
        };
        let m = small_jump_moments(&stable, 0.1);
        assert_eq!(m.mean, 0.0);
        assert!((m.variance - 2.0 * 0.1f64.sqrt() / 0.5).abs() < 1e-14);
        assert!((m.variance - 1.2649).abs() < 1e-4);

        let table = JumpComponent {
            coordinate: 0,
            kind: JumpKind::CompoundPoisson {
                rate: 2.0,
                sizes: JumpSizes::Discrete {
                    values: vec![0.5, -0.25, 3.0],
                    probs: vec![0.5, 0.25, 0.25],
                },
            },
        };
        let m = small_jump_moments(&table, 0.1);
        assert!((m.mean - 2.0 * (0.25 - 0.0625)).abs() < 1e-15);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn normal_small_moment_matches_quadrature() {
        let sizes = JumpSizes::Normal { mean: 0.4, std: 0.7 };
        // midpoint rule over (-1, 1)
        let n = 200_000;
        let h = 2.0 / n as f64;
        let quad: f64 = (0..n)
            .map(|k| {
                let y = -1.0 + (k as f64 + 0.5) * h;
                y * sizes.density(y).unwrap() * h
            })
            .sum();
        assert!((sizes.small_first_moment() - quad).abs() < 1e-9);
        let uni = JumpSizes::Uniform { low: -0.5, high: 2.0 };
        assert!((uni.small_first_moment() - 0.5 * (1.0 - 0.25) / 2.5).abs() < 1e-15);
    }

    #[test]
    fn empty_triplet_gives_zero_increment() {
        let t = LevyTriplet::new(vec![0.0; 2], vec![0.0; 4], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inc = sample_increment(&t, 0.5, &Truncation::default(), &mut rng).unwrap();
        assert_eq!(inc.continuous, vec![0.0, 0.0]);
        assert!(inc.jumps.is_empty());
    }

    #[test]
    fn constant_drift_increment_is_exact() {
        let t = LevyTriplet::new(vec![0.7], vec![0.0], vec![]).unwrap();
        let sampler = DriverSampler::new(&t, &Truncation::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = [0.0];
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            sampler.sample_continuous(0.25, &mut rng, &mut out);
            assert_eq!(out[0], 0.7 * 0.25);
            sum += out[0];
        }
        assert!((sum / n as f64 - 0.175).abs() < 1e-12);
    }

    #[test]
    fn compound_poisson_counts_and_sizes() {
        let t = product_triplet(&[ScalarLevy::new(0.0, 0.0, vec![cp(2.0, 1.0)])]).unwrap();
        let sampler = DriverSampler::new(&t, &Truncation::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut total = 0usize;
        let mut buf = Vec::new();
        for _ in 0..n {
            buf.clear();
            sampler.sample_jumps(1.0, &mut rng, &mut buf);
            assert!(buf.iter().all(|j| j.size == 1.0 && (0.0..1.0).contains(&j.offset)));
            assert!(buf.windows(2).all(|w| w[0].offset <= w[1].offset));
            total += buf.len();
        }
        let mean = total as f64 / n as f64;
        let se = (2.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean count {mean}");
    }

    #[test]
    fn stable_jump_count_matches_tail_mass() {
        let expected = 2.0 * 0.1f64.powf(-1.5) / 1.5;
        assert!((expected - 42.16).abs() < 0.01);
        let t = product_triplet(&[ScalarLevy::stable(0.0, 1.5)]).unwrap();
        let sampler = DriverSampler::new(&t, &Truncation::new(0.1)).unwrap();
        assert!((sampler.jump_rate() - expected).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mut total = 0usize;
        let mut buf = Vec::new();
        for _ in 0..n {
            buf.clear();
            sampler.sample_jumps(1.0, &mut rng, &mut buf);
            assert!(buf.iter().all(|j| j.size.abs() >= 0.1));
            total += buf.len();
        }
        let mean = total as f64 / n as f64;
        let se = (expected / n as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean count {mean}");
    }

    #[test]
    fn stable_truncated_variance() {
        let (alpha, eps) = (1.5, 0.1);
        let t = product_triplet(&[ScalarLevy::stable(0.0, alpha)]).unwrap();
        let sampler = DriverSampler::new(&t, &Truncation::new(eps).with_outer(1.0 + 1e-12)).unwrap();
        let var_exact = 2.0 * (1.0 - eps.powf(2.0 - alpha)) / (2.0 - alpha);
        let kappa4 = 2.0 * (1.0 - eps.powf(4.0 - alpha)) / (4.0 - alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 100_000;
        let mut buf = Vec::new();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            buf.clear();
            sampler.sample_jumps(1.0, &mut rng, &mut buf);
            let x: f64 = buf.iter().map(|j| j.size).sum();
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = ((kappa4 + 2.0 * var_exact * var_exact) / n as f64).sqrt();
        assert!((var - var_exact).abs() < 3.0 * se, "var {var} vs {var_exact} (se {se})");
    }

    #[test]
    fn small_jump_gaussian_augments_covariance() {
        let t = product_triplet(&[ScalarLevy::stable(0.0, 1.5)]).unwrap();
        let trunc = Truncation {
            small_jump_gaussian: true,
            ..Truncation::new(0.1)
        };
        let eff = t.effective(&trunc).unwrap();
        assert!((eff.a()[0] - 1.2649110640673518).abs() < 1e-12);
        assert_eq!(t.effective(&Truncation::new(0.1)).unwrap().a(), &[0.0]);
    }

    #[test]
    fn stable_requires_valid_cutoff() {
        let t = product_triplet(&[ScalarLevy::stable(0.0, 1.0)]).unwrap();
        assert!(DriverSampler::new(&t, &Truncation::new(0.0)).is_err());
        assert!(DriverSampler::new(&t, &Truncation::new(1.5)).is_err());
        assert!(DriverSampler::new(&t, &Truncation::new(0.1).with_outer(0.5)).is_err());
    }

    fn scalar_strategy() -> impl Strategy<Value = ScalarLevy> {
        (
            -2.0..2.0f64,
            0.0..3.0f64,
            prop_oneof![
                Just(None),
                (0.1..1.9f64).prop_map(|a| Some(JumpKind::AlphaStable { alpha: a })),
                (0.1..5.0f64, -2.0..2.0f64).prop_map(|(r, c)| Some(cp(r, c))),
            ],
        )
            .prop_map(|(b, a, j)| ScalarLevy::new(b, a, j.into_iter().collect()))
    }

    proptest! {
        #[test]
        fn product_is_permutation_equivariant(
            scalars in prop::collection::vec(scalar_strategy(), 1..5),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let n = scalars.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<ScalarLevy> = perm.iter().map(|&i| scalars[i].clone()).collect();
            let t = product_triplet(&scalars).unwrap();
            let p = product_triplet(&permuted).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(p.b()[k], t.b()[i]);
                prop_assert_eq!(p.a()[k * n + k], t.a()[i * n + i]);
            }
            let mut expect: Vec<(usize, JumpKind)> = t
                .components()
                .iter()
                .map(|c| (perm.iter().position(|&i| i == c.coordinate).unwrap(), c.kind.clone()))
                .collect();
            let mut got: Vec<(usize, JumpKind)> =
                p.components().iter().map(|c| (c.coordinate, c.kind.clone())).collect();
            expect.sort_by_key(|e| e.0);
            got.sort_by_key(|e| e.0);
            prop_assert_eq!(expect, got);
        }
    }
}
