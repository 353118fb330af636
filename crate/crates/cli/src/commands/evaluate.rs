use std::path::PathBuf;

use clap::Args;
use neuralfmu::nfmu::{experiment as ex, mse_loss, Dataset};
use neuralfmu::ode::SolverConfig;

use super::{load_nfmu, run_settings, write_table, Scenario};
use crate::error::{CliResult, Context};
use crate::svg::{Plot, Series};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub scenario: Scenario,
    /// Run config the checkpoint was trained with (model parameters, step).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulated horizon.
    #[arg(long, default_value_t = 4.0)]
    pub t1: f64,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let (reference_params, fmu_params, step) = run_settings(args.config.as_deref())?;
    let (mut nfmu, params) = load_nfmu(&args.checkpoint, &fmu_params, step)?;
    std::fs::create_dir_all(&args.out).context(args.out.display())?;

    let x0 = args.scenario.x0();
    let n = (args.t1 / ex::SAMPLE_DT).round() as usize;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * ex::SAMPLE_DT).collect();
    let reference = ex::simulate_reference(&reference_params, &x0, &times, &ex::reference_solver())?;
    let raw = ex::simulate_fmu(&fmu_params, &x0, &times, &SolverConfig::rk4(step))?;
    let learned = nfmu.solve(&params, &x0, (0.0, times[n]), Some(&times))?;

    let name = args.scenario.name();
    let rows = (0..times.len()).map(|k| {
        let mut row = vec![times[k]];
        for traj in [&reference, &raw, &learned] {
            row.extend_from_slice(&traj.states[k]);
        }
        row
    });
    write_table(
        &args.out.join(format!("{name}.csv")),
        &[
            "t",
            "reference_s",
            "reference_v",
            "fmu_s",
            "fmu_v",
            "neuralfmu_s",
            "neuralfmu_v",
        ],
        rows,
    )?;
    for (i, (channel, unit)) in [("s", "position [m]"), ("v", "velocity [m/s]")].into_iter().enumerate() {
        let title = format!("{name} scenario x0 = ({}, {}): {channel}", x0[0], x0[1]);
        Plot {
            title: &title,
            x_label: "t [s]",
            y_label: unit,
            series: vec![
                Series::new("reference", &times, reference.states.iter().map(|x| x[i])),
                Series::new("FMU", &times, raw.states.iter().map(|x| x[i])).dashed(),
                Series::new("NeuralFMU", &times, learned.states.iter().map(|x| x[i])),
            ],
        }
        .save(&args.out.join(format!("{name}_{channel}.svg")))?;
    }

    let data = Dataset::from_trajectory(&reference)?;
    let mse_fmu = mse_loss(&raw, &data)?;
    let mse_nfmu = mse_loss(&learned, &data)?;
    println!(
        "{name} scenario: MSE vs reference FMU {mse_fmu:.6e}, NeuralFMU {mse_nfmu:.6e} ({:.2}%)",
        100.0 * mse_nfmu / mse_fmu
    );
    Ok(())
}
