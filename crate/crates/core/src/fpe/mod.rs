//! Nonlocal Fokker-Planck equation for Marcus SDEs on 1-D and 2-D grids.

mod grid;
mod operator;
mod quadrature;

pub use grid::{distances, total_mass, Axis, DensityField, Grid, Stencil, MIN_CELLS};
pub use operator::{
    diffusion_matrix, diffusion_matrix_with, effective_drift, effective_drift_with, FokkerPlanckOperator,
};
pub use quadrature::{
    build_jump_quadrature, compound_poisson_nodes, gauss_legendre, stable_nodes, JumpNode, JumpQuadrature,
    QuadratureParams, SparseRows, Transfer,
};

use log::info;

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Relative mass drift above which a snapshot is renormalised.
pub const MASS_DRIFT_LIMIT: f64 = 1e-3;
/// Growth of `max |p|` within one step that counts as a blow-up.
pub const INSTABILITY_GROWTH: f64 = 10.0;

/// Builds the jump quadrature and assembles the operator in one go.
pub fn assemble(model: &ModelSpec, grid: &Grid, params: &QuadratureParams) -> Result<FokkerPlanckOperator> {
    let quad = build_jump_quadrature(model, grid, params)?;
    FokkerPlanckOperator::new(model, grid, Some(quad), &params.truncation)
}

/// `dp/dt` at every cell.
pub fn apply_rhs(op: &FokkerPlanckOperator, field: &DensityField) -> Result<Vec<f64>> {
    if &field.grid != op.grid() {
        return Err(Error::Dimension("field and operator use different grids".into()));
    }
    let mut out = vec![0.0; field.values.len()];
    op.apply(&field.values, &mut out);
    Ok(out)
}

/// One explicit midpoint (RK2) step.
pub fn step(op: &FokkerPlanckOperator, field: &DensityField, dt: f64) -> Result<DensityField> {
    if &field.grid != op.grid() {
        return Err(Error::Dimension("field and operator use different grids".into()));
    }
    let mut next = field.clone();
    let mut stepper = Stepper::new(field.values.len());
    stepper.advance(op, &mut next.values, dt);
    next.time += dt;
    Ok(next)
}

struct Stepper {
    k: Vec<f64>,
    mid: Vec<f64>,
}

impl Stepper {
    fn new(len: usize) -> Self {
        Stepper {
            k: vec![0.0; len],
            mid: vec![0.0; len],
        }
    }

    fn advance(&mut self, op: &FokkerPlanckOperator, p: &mut [f64], dt: f64) {
        op.apply(p, &mut self.k);
        for ((m, pi), ki) in self.mid.iter_mut().zip(p.iter()).zip(&self.k) {
            *m = pi + 0.5 * dt * ki;
        }
        op.apply(&self.mid, &mut self.k);
        for (pi, ki) in p.iter_mut().zip(&self.k) {
            *pi += dt * ki;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Time step; `None` uses the stability bound of the operator.
    pub dt: Option<f64>,
    /// Renormalise snapshots whose mass drifted by more than
    /// [`MASS_DRIFT_LIMIT`].
    pub renormalize: bool,
    /// Extra snapshot times in `(0, T)`; the final time is always reported.
    pub output_times: Vec<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dt: None,
            renormalize: true,
            output_times: Vec::new(),
        }
    }
}

/// Post-processing applied to a reported snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveEvent {
    NegativeClipped { time: f64, min_value: f64 },
    Renormalized { time: f64, mass: f64, target: f64 },
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    /// Clipped (and possibly renormalised) density.
    pub field: DensityField,
    /// Extremes and mass before clipping.
    pub raw_min: f64,
    pub raw_max: f64,
    pub raw_mass: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<SolveEvent>,
    pub steps: usize,
    pub dt: f64,
    pub initial_mass: f64,
}

impl SolveOutcome {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("at least the final time is recorded")
    }

    pub fn renormalized(&self) -> bool {
        self.events.iter().any(|e| matches!(e, SolveEvent::Renormalized { .. }))
    }
}

/// Integrates `p0` to time `t_final` with the assembled operator.
pub fn solve_with(
    op: &FokkerPlanckOperator,
    p0: &DensityField,
    t_final: f64,
    options: &SolveOptions,
) -> Result<SolveOutcome> {
    if &p0.grid != op.grid() {
        return Err(Error::Dimension("initial field and operator use different grids".into()));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::validation("t_final", "final time must be non-negative"));
    }
    let dt_max = match options.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(_) => return Err(Error::validation("fpe_dt", "time step must be positive")),
        None => op.stable_dt(),
    };
    let mut times: Vec<f64> = options
        .output_times
        .iter()
        .copied()
        .filter(|t| *t > p0.time && *t < p0.time + t_final)
        .collect();
    times.push(p0.time + t_final);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let initial_mass = total_mass(p0);
    let mut current = p0.clone();
    let mut stepper = Stepper::new(p0.values.len());
    let mut snapshots = Vec::new();
    let mut events = Vec::new();
    let mut steps = 0;
    let mut dt_used = 0.0_f64;
    for target in times {
        let span = target - current.time;
        if span > 0.0 {
            let n = (span / dt_max).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            dt_used = dt_used.max(dt);
            let start = current.time;
            for k in 0..n {
                let before = current.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                stepper.advance(op, &mut current.values, dt);
                let after = current.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let t = start + (k + 1) as f64 * dt;
                if !after.is_finite() || (before > 0.0 && after > INSTABILITY_GROWTH * before) {
                    return Err(Error::Instability { time: t, before, after });
                }
                steps += 1;
            }
            current.time = target;
        }
        snapshots.push(finish_snapshot(&current, initial_mass, options.renormalize, &mut events));
    }
    info!("fpe solve: {steps} steps, dt <= {dt_used:e}, {} events", events.len());
    Ok(SolveOutcome {
        snapshots,
        events,
        steps,
        dt: dt_used,
        initial_mass,
    })
}

fn finish_snapshot(raw: &DensityField, initial_mass: f64, renormalize: bool, events: &mut Vec<SolveEvent>) -> Snapshot {
    let raw_min = raw.min_value();
    let raw_max = raw.max_value();
    let raw_mass = total_mass(raw);
    let mut field = raw.clone();
    if raw_min < 0.0 {
        for v in field.values.iter_mut() {
            *v = v.max(0.0);
        }
        if raw_min < -1e-12 {
            events.push(SolveEvent::NegativeClipped {
                time: raw.time,
                min_value: raw_min,
            });
        }
    }
    let mass = total_mass(&field);
    if renormalize && initial_mass > 0.0 && (mass - initial_mass).abs() > MASS_DRIFT_LIMIT * initial_mass && mass > 0.0
    {
        let scale = initial_mass / mass;
        for v in field.values.iter_mut() {
            *v *= scale;
        }
        events.push(SolveEvent::Renormalized {
            time: raw.time,
            mass,
            target: initial_mass,
        });
    }
    Snapshot {
        field,
        raw_min,
        raw_max,
        raw_mass,
    }
}

/// Assembles the operator for `model` on `grid` and integrates `p0` to `t_final`.
pub fn solve(
    model: &ModelSpec,
    grid: &Grid,
    p0: &DensityField,
    t_final: f64,
    params: &QuadratureParams,
    options: &SolveOptions,
) -> Result<SolveOutcome> {
    let op = assemble(model, grid, params)?;
    solve_with(&op, p0, t_final, options)
}
