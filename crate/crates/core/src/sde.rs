//! Monte Carlo simulation of Marcus SDEs.
//!
//! Jump-adapted Euler on the Itô form: between jumps the state follows
//!
//! ```text
//! dX = [f + σ(b − m) + ½ Σ ∂_m σ_ij σ_ml A_lj] dt + σ τ dB
//! ```
//!
//! where `m` compensates the sampled jumps of size `|y| < 1`, and every
//! sampled jump `y` is applied exactly as `X ← H(X, y)`.

use std::io::{self, Write};

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::examples::ClosedFormMap;
use crate::flow::{MarcusFlow, SIMULATION_STEPS};
use crate::fpe::{DensityField, Grid};
use crate::levy::{DriverSampler, Jump, Truncation};
use crate::model::ModelSpec;

/// Largest tolerated fraction of diverged paths.
pub const DIVERGENCE_LIMIT: f64 = 1e-3;
/// Minimum fraction of samples an empirical density grid should cover.
pub const COVERAGE_TARGET: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub t_final: f64,
    pub dt: f64,
    pub truncation: Truncation,
    /// RK4 steps used for each jump map.
    pub flow_steps: usize,
    /// Apply jumps through the model's closed-form map when it has one.
    pub use_closed_form: bool,
}

impl SimulationParams {
    pub fn new(t_final: f64, dt: f64) -> Self {
        SimulationParams {
            t_final,
            dt,
            truncation: Truncation::default(),
            flow_steps: SIMULATION_STEPS,
            use_closed_form: true,
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::validation("t_final", "final time must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation("dt", "time step must be positive"));
        }
        if !(self.truncation.eps > 0.0 && self.truncation.eps <= 1.0) {
            return Err(Error::validation("eps", "truncation must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-thread simulation state; reuses all scratch buffers across paths.
pub struct PathSimulator<'a> {
    model: &'a ModelSpec,
    params: SimulationParams,
    sampler: DriverSampler,
    flow: MarcusFlow<'a>,
    closed_form: Option<ClosedFormMap>,
    jumps: Vec<Jump>,
    dl: Vec<f64>,
    f: Vec<f64>,
    corr: Vec<f64>,
    incr: Vec<f64>,
    s: Vec<f64>,
    ds: Vec<f64>,
    v: Vec<f64>,
    has_correction: bool,
}

impl<'a> PathSimulator<'a> {
    pub fn new(model: &'a ModelSpec, params: &SimulationParams) -> Result<Self> {
        params.validate()?;
        let sampler = DriverSampler::new(&model.driver, &params.truncation)?;
        let (d, n) = (model.d(), model.n());
        let has_correction = sampler.triplet().a().iter().any(|a| *a != 0.0);
        Ok(PathSimulator {
            model,
            params: params.clone(),
            sampler,
            flow: MarcusFlow::new(&model.noise, params.flow_steps)?,
            closed_form: model.closed_form.filter(|_| params.use_closed_form),
            jumps: Vec::new(),
            dl: vec![0.0; n],
            f: vec![0.0; d],
            corr: vec![0.0; d],
            incr: vec![0.0; d],
            s: vec![0.0; d * n],
            ds: vec![0.0; d * n * d],
            v: vec![0.0; n],
            has_correction,
        })
    }

    /// Euler step of length `h` on the continuous part.
    fn continuous<R: rand::Rng + ?Sized>(&mut self, x: &mut [f64], h: f64, rng: &mut R) {
        if h <= 0.0 {
            return;
        }
        self.sampler.sample_continuous(h, rng, &mut self.dl);
        self.model.drift.eval(x, &mut self.f);
        self.model.noise.velocity(x, &self.dl, &mut self.incr);
        if self.has_correction {
            self.model.stratonovich_correction(
                x,
                self.sampler.triplet().a(),
                &mut self.s,
                &mut self.ds,
                &mut self.corr,
            );
        }
        for i in 0..x.len() {
            x[i] += (self.f[i] + self.corr[i]) * h + self.incr[i];
        }
    }

    /// Advances `x` (already holding `X(0)`) to the final time.
    pub fn run<R: rand::Rng + ?Sized>(&mut self, x: &mut [f64], rng: &mut R) -> Result<()> {
        let (t_final, dt) = (self.params.t_final, self.params.dt);
        let steps = (t_final / dt).ceil().max(1.0) as usize;
        let mut t = 0.0;
        for k in 0..steps {
            let h = if k + 1 == steps { t_final - t } else { dt };
            self.jumps.clear();
            self.sampler.sample_jumps(h, rng, &mut self.jumps);
            let mut done = 0.0;
            for idx in 0..self.jumps.len() {
                let jump = self.jumps[idx];
                self.continuous(x, jump.offset - done, rng);
                done = jump.offset;
                self.v.fill(0.0);
                self.v[jump.coordinate] = jump.size;
                let ok = match &self.closed_form {
                    Some(map) => {
                        let y = map.forward(x, &self.v);
                        x.copy_from_slice(&y);
                        x.iter().all(|xi| xi.is_finite())
                    }
                    None => self.flow.forward_in_place(x, &self.v).is_ok(),
                };
                if !ok {
                    return Err(Error::PathDivergence { time: t + done });
                }
            }
            self.continuous(x, h - done, rng);
            t = if k + 1 == steps { t_final } else { t + h };
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::PathDivergence { time: t });
            }
        }
        Ok(())
    }
}

/// Terminal state of one path started from `x0`.
pub fn simulate_path<R: rand::Rng + ?Sized>(
    model: &ModelSpec,
    x0: &[f64],
    params: &SimulationParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x0.len() != model.d() {
        return Err(Error::Dimension(format!("x0 has {} entries, model has d = {}", x0.len(), model.d())));
    }
    let mut x = x0.to_vec();
    PathSimulator::new(model, params)?.run(&mut x, rng)?;
    Ok(x)
}

/// RNG of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Terminal states of an ensemble with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub d: usize,
    /// Row-major `[path][coordinate]`, surviving paths only.
    pub states: Vec<f64>,
    /// Index of each surviving path.
    pub path_index: Vec<u64>,
    /// Number of paths launched.
    pub n_paths: usize,
    pub diverged: usize,
    pub t_final: f64,
    pub dt: f64,
    pub eps: f64,
    pub seed: u64,
}

/// Per-coordinate sample mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub count: usize,
}

impl Moments {
    /// Standard error of each mean.
    pub fn standard_error(&self) -> Vec<f64> {
        self.variance.iter().map(|v| (v / self.count as f64).sqrt()).collect()
    }
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.path_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path_index.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.d..(k + 1) * self.d]
    }

    pub fn moments(&self) -> Moments {
        let count = self.len();
        let mut mean = vec![0.0; self.d];
        let mut m2 = vec![0.0; self.d];
        // Welford keeps the variance accurate for large means
        for k in 0..count {
            let x = self.state(k);
            for i in 0..self.d {
                let delta = x[i] - mean[i];
                mean[i] += delta / (k + 1) as f64;
                m2[i] += delta * (x[i] - mean[i]);
            }
        }
        let variance = m2.iter().map(|m| if count > 1 { m / (count - 1) as f64 } else { 0.0 }).collect();
        Moments { mean, variance, count }
    }

    /// CSV with header `path_index,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.d).map(|i| format!("x{i}")).collect();
        writeln!(w, "path_index,{}", header.join(","))?;
        for (k, idx) in self.path_index.iter().enumerate() {
            write!(w, "{idx}")?;
            for v in self.state(k) {
                write!(w, ",{v:e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Simulates `n_paths` independent paths; path `k` draws its initial state
/// and its noise from [`path_rng`]`(seed, k)`.
pub fn simulate_ensemble(model: &ModelSpec, params: &SimulationParams, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::validation("n_paths", "need at least one path"));
    }
    // fail on bad parameters before spawning workers
    PathSimulator::new(model, params)?;
    let d = model.d();
    let results: Vec<Option<Vec<f64>>> = (0..n_paths as u64)
        .into_par_iter()
        .map_init(
            || PathSimulator::new(model, params).expect("validated above"),
            |sim, k| {
                let mut rng = path_rng(seed, k);
                let mut x = vec![0.0; d];
                model.initial.sample(&mut rng, &mut x);
                match sim.run(&mut x, &mut rng) {
                    Ok(()) => Some(x),
                    Err(e) => {
                        debug!("path {k}: {e}");
                        None
                    }
                }
            },
        )
        .collect();
    let mut states = Vec::with_capacity(n_paths * d);
    let mut path_index = Vec::with_capacity(n_paths);
    for (k, r) in results.into_iter().enumerate() {
        if let Some(x) = r {
            states.extend(x);
            path_index.push(k as u64);
        }
    }
    let diverged = n_paths - path_index.len();
    if diverged as f64 > DIVERGENCE_LIMIT * n_paths as f64 {
        return Err(Error::EnsembleDivergence { diverged, n_paths });
    }
    if diverged > 0 {
        warn!("{diverged} of {n_paths} paths diverged and were dropped");
    }
    Ok(PathEnsemble {
        d,
        states,
        path_index,
        n_paths,
        diverged,
        t_final: params.t_final,
        dt: params.dt,
        eps: params.truncation.eps,
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct EmpiricalDensity {
    pub field: DensityField,
    /// Fraction of launched paths that landed inside the grid.
    pub coverage: f64,
    pub warning: Option<String>,
}

/// Histogram `count / (n_paths · cell volume)` on `grid`.
pub fn empirical_density(ensemble: &PathEnsemble, grid: &Grid) -> Result<EmpiricalDensity> {
    if grid.dim() != ensemble.d {
        return Err(Error::Dimension(format!(
            "grid has dimension {} but the ensemble has d = {}",
            grid.dim(),
            ensemble.d
        )));
    }
    let mut field = DensityField::zeros(grid.clone(), ensemble.t_final);
    let mut inside = 0usize;
    for k in 0..ensemble.len() {
        if let Some(c) = grid.locate(ensemble.state(k)) {
            field.values[c] += 1.0;
            inside += 1;
        }
    }
    let scale = 1.0 / (ensemble.n_paths as f64 * grid.cell_volume());
    for v in field.values.iter_mut() {
        *v *= scale;
    }
    let coverage = inside as f64 / ensemble.n_paths as f64;
    let warning = (coverage < COVERAGE_TARGET).then(|| {
        let msg = format!("grid covers {:.2}% of samples", 100.0 * coverage);
        warn!("{msg}");
        msg
    });
    Ok(EmpiricalDensity {
        field,
        coverage,
        warning,
    })
}
