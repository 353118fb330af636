use std::path::PathBuf;

use clap::{Args, ValueEnum};
use neuralfmu::models::friction_force;
use neuralfmu::nfmu::{experiment as ex, extract_bottom_response, extract_top_response};

use super::{load_nfmu, run_settings, write_table, Scenario};
use crate::error::{CliResult, Context};
use crate::svg::{Plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Extraction {
    /// Friction force learned by the bottom network over a velocity sweep.
    Friction,
    /// Position correction learned by the top network along a rollout.
    Displacement,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub which: Extraction,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rollout used for the displacement extraction.
    #[arg(long, value_enum, default_value = "test")]
    pub scenario: Scenario,
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

pub fn extract(args: &ExtractArgs) -> CliResult {
    let (reference, fmu, step) = run_settings(args.config.as_deref())?;
    let (mut nfmu, params) = load_nfmu(&args.checkpoint, &fmu, step)?;
    std::fs::create_dir_all(&args.out).context(args.out.display())?;

    match args.which {
        Extraction::Friction => {
            let vs: Vec<f64> = (0..=200).map(|k| -2.0 + 0.02 * k as f64).collect();
            let response = extract_bottom_response(&mut nfmu, &params, &vs, fmu.s_rel, fmu.m)?;
            let learned: Vec<f64> = response.iter().map(|(_, f)| -f).collect();
            let exact: Vec<f64> = vs.iter().map(|&v| friction_force(v, &reference)).collect();
            write_table(
                &args.out.join("friction.csv"),
                &["v", "f_learned", "f_reference"],
                (0..vs.len()).map(|k| vec![vs[k], learned[k], exact[k]]),
            )?;
            Plot {
                title: "friction force",
                x_label: "v [m/s]",
                y_label: "force [N]",
                series: vec![
                    Series::new("reference", &vs, exact.iter().copied()),
                    Series::new("learned", &vs, learned.iter().copied()),
                ],
            }
            .save(&args.out.join("friction.svg"))?;
            println!(
                "friction: {} velocities -> {}",
                vs.len(),
                args.out.join("friction.csv").display()
            );
        }
        Extraction::Displacement => {
            let x0 = args.scenario.x0();
            let times: Vec<f64> = (0..=ex::N_SAMPLES).map(|k| k as f64 * ex::SAMPLE_DT).collect();
            let traj = nfmu.solve(&params, &x0, (0.0, *times.last().unwrap()), Some(&times))?;
            let delta = extract_top_response(&mut nfmu, &params, &traj.states)?;
            let anchor = fmu.s0 - reference.s0;
            write_table(
                &args.out.join("displacement.csv"),
                &["t", "s", "v", "delta_s", "delta_v", "anchor_offset"],
                (0..times.len()).map(|k| {
                    vec![
                        times[k],
                        traj.states[k][0],
                        traj.states[k][1],
                        delta[k][0],
                        delta[k][1],
                        anchor,
                    ]
                }),
            )?;
            Plot {
                title: "learned position correction top(x)_s - s",
                x_label: "t [s]",
                y_label: "displacement [m]",
                series: vec![
                    Series::new("learned", &times, delta.iter().map(|d| d[0])),
                    Series::new("FMU anchor offset", &times, std::iter::repeat(anchor)).dashed(),
                ],
            }
            .save(&args.out.join("displacement.svg"))?;
            let mean = delta.iter().map(|d| d[0]).sum::<f64>() / delta.len() as f64;
            println!("displacement: mean top(x)_s - s = {mean:+.4} m (FMU anchor offset {anchor:+.4} m)");
        }
    }
    Ok(())
}
