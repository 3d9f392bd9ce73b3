//! Batch front end: JSON run configs, the four tasks and their artifacts.
//!
//! Every run writes `manifest.txt` into the output directory, also when the
//! task fails. CSVs are byte-identical across reruns with the same config
//! and seed; only the manifest carries the wall time.

mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::flow::{check_inverse, marcus_inverse};
use crate::fpe::{self, distances, total_mass, DensityField, SolveOutcome};
use crate::sde::{empirical_density, simulate_ensemble, PathEnsemble};

pub use config::{parse_config, FileConfig, FlowCheckConfig, GridConfig, RunConfig};

/// Exit status of a run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FlowCheck,
    Simulate,
    Solve,
    Compare,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::FlowCheck => "flow-check",
            Task::Simulate => "simulate",
            Task::Solve => "solve",
            Task::Compare => "compare",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "marcusfpe", version, about = "Marcus SDE simulation and Fokker-Planck solves")]
pub struct Args {
    #[arg(value_enum)]
    pub task: Task,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "./out")]
    pub output: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_NUMERIC,
        }
    }
}

/// Parses `args` (program name first), runs the task and returns the exit
/// code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    execute(&args)
}

/// Loads the config, runs it and writes the manifest.
pub fn execute(args: &Args) -> i32 {
    let start = Instant::now();
    let mut out = Artifacts::new(&args.output);
    let parsed = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))
        .and_then(|text| parse_config(&text, Some(args.task), args.seed));
    let (result, echo, seed) = match parsed {
        Ok(cfg) => {
            let echo = cfg.echo();
            let seed = cfg.seed;
            (run(&cfg, &mut out), echo, Some(seed))
        }
        Err(e) => (Err(e), String::new(), args.seed),
    };
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("marcusfpe: {e}");
            e.exit_code()
        }
    };
    let manifest = Manifest {
        task: args.task,
        config_path: &args.config,
        config: &echo,
        seed,
        wall_time: start.elapsed().as_secs_f64(),
        error: result.as_ref().err().map(ToString::to_string),
        artifacts: &out.written,
    };
    if let Err(e) = manifest.write(&args.output) {
        eprintln!("marcusfpe: cannot write manifest: {e}");
        return code.max(EXIT_NUMERIC);
    }
    code
}

/// Runs `config`, recording every file written in `out`.
pub fn run(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    out.ensure_dir()?;
    match config.task {
        Task::FlowCheck => flow_check(config, out),
        Task::Simulate => simulate(config, out).map(|_| ()),
        Task::Solve => solve(config, out).map(|_| ()),
        Task::Compare => compare(config, out),
    }
}

/// Output directory plus the list of files written so far.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    pub written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn ensure_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|source| CliError::Io {
            path: self.dir.clone(),
            source,
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io_err = |source| CliError::Io {
            path: path.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

struct Manifest<'a> {
    task: Task,
    config_path: &'a Path,
    config: &'a str,
    seed: Option<u64>,
    wall_time: f64,
    error: Option<String>,
    artifacts: &'a [String],
}

impl Manifest<'_> {
    fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("manifest.txt"))?);
        writeln!(w, "tool = marcusfpe {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "task = {}", self.task.name())?;
        writeln!(w, "config_path = {}", self.config_path.display())?;
        match self.seed {
            Some(s) => writeln!(w, "seed = {s}")?,
            None => writeln!(w, "seed = none")?,
        }
        writeln!(w, "wall_time_s = {:.3}", self.wall_time)?;
        match &self.error {
            None => writeln!(w, "status = ok")?,
            Some(e) => writeln!(w, "status = failed: {e}")?,
        }
        writeln!(w, "partial = {}", self.error.is_some() && !self.artifacts.is_empty())?;
        writeln!(w, "artifacts = {}", self.artifacts.join(" "))?;
        writeln!(w, "config =")?;
        writeln!(w, "{}", self.config)?;
        w.flush()
    }
}

fn flow_check(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let model = &config.model;
    let fc = &config.file.flow_check;
    let (d, n) = (model.d(), model.n());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::with_capacity(fc.samples);
    for _ in 0..fc.samples {
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-fc.u_range..=fc.u_range)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-fc.v_range..=fc.v_range)).collect();
        let residual = check_inverse(&u, &v, &model.noise, fc.steps)?;
        // closed form against the numeric flow, when the model has one
        let closed = match model.closed_form {
            Some(map) => {
                let numeric = marcus_inverse(&u, &v, &model.noise, fc.steps)?;
                let (p, j) = (map.inverse)(&u, &v);
                let numeric_jac = numeric.jac_det.unwrap_or(f64::NAN);
                let point = p.iter().zip(&numeric.point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                Some((point, (j - numeric_jac).abs()))
            }
            None => None,
        };
        rows.push((u, v, residual, closed));
    }
    out.write("flow_check.csv", |w| {
        let mut header: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
        header.extend((1..=n).map(|i| format!("v{i}")));
        writeln!(w, "sample,{},residual,closed_form_error,jac_det_error", header.join(","))?;
        for (k, (u, v, r, c)) in rows.iter().enumerate() {
            write!(w, "{k}")?;
            for x in u.iter().chain(v) {
                write!(w, ",{x:e}")?;
            }
            match c {
                Some((p, j)) => writeln!(w, ",{r:e},{p:e},{j:e}")?,
                None => writeln!(w, ",{r:e},,")?,
            }
        }
        Ok(())
    })?;
    let max = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len().max(1) as f64;
    let closed_max = rows.iter().filter_map(|r| r.3).fold((0.0f64, 0.0f64), |a, c| (a.0.max(c.0), a.1.max(c.1)));
    let pass = max <= fc.tolerance;
    out.write("flow_check_report.txt", |w| {
        writeln!(w, "model = {}", config.model_id)?;
        writeln!(w, "samples = {}", rows.len())?;
        writeln!(w, "steps = {}", fc.steps)?;
        writeln!(w, "max_residual = {max:e}")?;
        writeln!(w, "mean_residual = {mean:e}")?;
        if model.closed_form.is_some() {
            writeln!(w, "max_closed_form_error = {:e}", closed_max.0)?;
            writeln!(w, "max_jac_det_error = {:e}", closed_max.1)?;
        }
        writeln!(w, "tolerance = {:e}", fc.tolerance)?;
        writeln!(w, "pass = {pass}")
    })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "inverse residual {max:e} exceeds tolerance {:e}",
            fc.tolerance
        )))
    }
}

fn simulate(config: &RunConfig, out: &mut Artifacts) -> Result<PathEnsemble, CliError> {
    let n_paths = config.file.n_paths.ok_or_else(|| CliError::Config("n_paths required for simulate".into()))?;
    let ens = simulate_ensemble(&config.model, &config.simulation(), n_paths, config.seed)?;
    out.write("ensemble.csv", |w| ens.write_csv(w))?;
    let m = ens.moments();
    let se = m.standard_error();
    out.write("moments.csv", |w| {
        writeln!(w, "coordinate,mean,variance,standard_error")?;
        for i in 0..m.mean.len() {
            writeln!(w, "x{},{:e},{:e},{:e}", i + 1, m.mean[i], m.variance[i], se[i])?;
        }
        Ok(())
    })?;
    out.write("simulate_report.txt", |w| {
        writeln!(w, "model = {}", config.model_id)?;
        writeln!(w, "t_final = {}", ens.t_final)?;
        writeln!(w, "dt = {}", ens.dt)?;
        writeln!(w, "eps = {}", ens.eps)?;
        writeln!(w, "n_paths = {}", ens.n_paths)?;
        writeln!(w, "kept = {}", m.count)?;
        writeln!(w, "diverged = {}", ens.diverged)
    })?;
    Ok(ens)
}

fn solve(config: &RunConfig, out: &mut Artifacts) -> Result<SolveOutcome, CliError> {
    let grid = config.grid()?;
    let p0 = DensityField::from_initial(grid.clone(), &config.model.initial);
    let outcome = fpe::solve(
        &config.model,
        &grid,
        &p0,
        config.file.t_final,
        &config.quadrature(),
        &config.solve_options(),
    )?;
    for (k, snap) in outcome.snapshots.iter().enumerate() {
        out.write(&format!("density_{k:03}.csv"), |w| snap.field.write_csv(w))?;
        out.write(&format!("density_{k:03}.meta"), |w| snap.field.write_metadata(w))?;
    }
    out.write("solve_report.txt", |w| {
        writeln!(w, "model = {}", config.model_id)?;
        writeln!(w, "steps = {}", outcome.steps)?;
        writeln!(w, "dt = {:e}", outcome.dt)?;
        writeln!(w, "initial_mass = {}", outcome.initial_mass)?;
        for (k, s) in outcome.snapshots.iter().enumerate() {
            writeln!(
                w,
                "snapshot {k}: time = {}, mass = {}, raw_min = {:e}, raw_max = {:e}",
                s.field.time,
                total_mass(&s.field),
                s.raw_min,
                s.raw_max
            )?;
        }
        for e in &outcome.events {
            writeln!(w, "event: {e:?}")?;
        }
        Ok(())
    })?;
    Ok(outcome)
}

fn compare(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let outcome = solve(config, out)?;
    let ens = simulate(config, out)?;
    let fpe = &outcome.final_snapshot().field;
    let emp = empirical_density(&ens, &fpe.grid)?;
    out.write("empirical_density.csv", |w| emp.field.write_csv(w))?;
    let (l1, linf) = distances(fpe, &emp.field)?;
    out.write("compare_report.txt", |w| {
        writeln!(w, "model = {}", config.model_id)?;
        writeln!(w, "t_final = {}", config.file.t_final)?;
        writeln!(w, "n_paths = {}", ens.n_paths)?;
        writeln!(w, "seed = {}", config.seed)?;
        writeln!(w, "l1 = {l1:e}")?;
        writeln!(w, "linf = {linf:e}")?;
        writeln!(w, "fpe_mass = {}", total_mass(fpe))?;
        writeln!(w, "mc_coverage = {}", emp.coverage)?;
        if let Some(msg) = &emp.warning {
            writeln!(w, "warning = {msg}")?;
        }
        Ok(())
    })
}
