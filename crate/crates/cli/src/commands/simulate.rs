use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use neuralfmu::model::{initialize, simulate as run, ModelFactory, ValueReference};
use neuralfmu::models::{make_friction_pendulum, make_frictionless_pendulum, PendulumParams};
use neuralfmu::ode::SolverConfig;

use super::write_table;
use crate::error::{CliError, CliResult};
use crate::svg::{Plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuiltinModel {
    /// Frictionless pendulum (the white-box model, anchor at 0.1 m).
    Frictionless,
    /// Pendulum with Stribeck friction (the reference system).
    Friction,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: BuiltinModel,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub t1: f64,
    /// Variables to record (default: the states).
    #[arg(long, value_delimiter = ',')]
    pub record: Vec<String>,
    /// Initial position and velocity, `s,v`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Start value override, `name=value` (repeatable).
    #[arg(long = "set", value_parser = parse_assignment)]
    pub set: Vec<(String, f64)>,
    /// Output sample spacing.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub atol: f64,
    #[arg(long, short, default_value = "simulation.csv")]
    pub out: PathBuf,
    /// Also plot the recorded variables.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), value))
}

pub fn simulate(args: &SimulateArgs) -> CliResult {
    if !(args.t1 > args.t0) || !args.t0.is_finite() || !args.t1.is_finite() {
        return Err(CliError::config(format!(
            "need t0 < t1, got [{}, {}]",
            args.t0, args.t1
        )));
    }
    if !(args.dt > 0.0) {
        return Err(CliError::config(format!("dt must be positive, got {}", args.dt)));
    }
    let factory: Box<dyn ModelFactory> = match args.model {
        BuiltinModel::Frictionless => Box::new(make_frictionless_pendulum(&PendulumParams::fmu())?),
        BuiltinModel::Friction => Box::new(make_friction_pendulum(&PendulumParams::reference())?),
    };
    let d = factory.description();
    let lookup = |name: &str| -> CliResult<ValueReference> {
        d.vr_of(name)
            .map_err(|_| CliError::config(format!("unknown variable `{name}` in model {}", d.model_name)))
    };

    let names: Vec<String> = if args.record.is_empty() {
        d.state_vrs
            .iter()
            .filter_map(|vr| d.variable(*vr))
            .map(|v| v.name.clone())
            .collect()
    } else {
        args.record.clone()
    };
    let record = names.iter().map(|n| lookup(n)).collect::<CliResult<Vec<_>>>()?;

    let mut starts = Vec::new();
    if let Some(x0) = &args.x0 {
        if x0.len() != d.n_states() {
            return Err(CliError::config(format!(
                "--x0 needs {} values, got {}",
                d.n_states(),
                x0.len()
            )));
        }
        starts.extend(d.state_vrs.iter().copied().zip(x0.iter().copied()));
    }
    for (name, value) in &args.set {
        starts.push((lookup(name)?, *value));
    }

    let n = ((args.t1 - args.t0) / args.dt + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|k| args.t0 + k as f64 * args.dt).collect();
    if args.t1 - grid[n] > 1e-9 * args.dt {
        grid.push(args.t1);
    }

    let start = Instant::now();
    let mut inst = factory.instantiate()?;
    initialize(inst.as_mut(), args.t0, Some(args.t1), &starts)?;
    let sim = run(
        inst.as_mut(),
        args.t1,
        &SolverConfig::adaptive(args.rtol, args.atol),
        Some(&grid),
        &record,
    )?;
    let elapsed = start.elapsed();

    let header: Vec<&str> = std::iter::once("t").chain(names.iter().map(String::as_str)).collect();
    let rows = sim
        .trajectory
        .times
        .iter()
        .zip(&sim.recorded)
        .map(|(t, r)| std::iter::once(*t).chain(r.iter().copied()).collect());
    write_table(&args.out, &header, rows)?;
    if let Some(path) = &args.svg {
        let series = names
            .iter()
            .enumerate()
            .map(|(i, name)| Series::new(name, &sim.trajectory.times, sim.recorded.iter().map(|r| r[i])))
            .collect();
        Plot {
            title: &d.model_name,
            x_label: "t [s]",
            y_label: "value",
            series,
        }
        .save(path)?;
    }
    let stats = &sim.trajectory.stats;
    println!(
        "simulated {} on [{}, {}]: {} accepted steps, {} rejected, {} events, {:.3} s -> {}",
        d.model_name,
        args.t0,
        args.t1,
        stats.accepted,
        stats.rejected,
        sim.trajectory.event_times.len(),
        elapsed.as_secs_f64(),
        args.out.display()
    );
    Ok(())
}
