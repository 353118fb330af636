use std::path::Path;
use std::time::Instant;

use neuralfmu::net::Chain;
use neuralfmu::nfmu::{experiment as ex, train_with, Dataset, MeNeuralFmu};
use neuralfmu::ode::SolverConfig;
use neuralfmu::sensitivity::JacobianProvider;
use neuralfmu::Error;
use serde::Serialize;

use super::write_table;
use crate::config::RunConfig;
use crate::error::{CliResult, Context};

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a RunConfig,
    n_params: usize,
    epochs: usize,
    initial_loss: f64,
    final_loss: f64,
    wall_time_s: f64,
    checkpoints: Vec<String>,
}

pub fn train(config_path: &Path) -> CliResult {
    let cfg = RunConfig::load(config_path)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).context(out.display())?;
    let start = Instant::now();

    let times = ex::sample_times(cfg.dataset.samples, cfg.dataset.dt);
    let reference = ex::simulate_reference(&cfg.reference, &cfg.dataset.x0, &times, &ex::reference_solver())?;
    let data = Dataset::from_trajectory(&reference)?;

    let mut nfmu = MeNeuralFmu::new(
        Chain::dense(&ex::top_layers())?,
        ex::fmu_layer(&cfg.fmu, JacobianProvider::DirectionalDerivative)?,
        Chain::dense(&ex::bottom_layers())?,
        SolverConfig::rk4(cfg.solver.step),
        cfg.init == neuralfmu::net::InitScheme::NeutralResidual,
    )?;
    let p0 = nfmu.init_params(cfg.init, cfg.train.rng_seed);

    let mut snapshots: Vec<(usize, Vec<f64>)> = Vec::new();
    let report = train_with(
        &mut nfmu,
        &data,
        0.0,
        &cfg.dataset.x0,
        &p0,
        &cfg.train,
        |epoch, loss, p| {
            if cfg.checkpoint_epochs.contains(&epoch) {
                snapshots.push((epoch, p.to_vec()));
            }
            if (epoch + 1) % 500 == 0 {
                log::info!("epoch {epoch}: loss {loss:.6e}");
            }
        },
    );
    let report = match report {
        Err(Error::Diverged { epoch, loss }) => {
            let path = out.join("loss.csv");
            write_table(&path, &["epoch", "loss"], [vec![epoch as f64, loss]])?;
            return Err(Error::Diverged { epoch, loss }.into());
        }
        other => other?,
    };
    if cfg.checkpoint_epochs.contains(&cfg.train.epochs) {
        snapshots.push((cfg.train.epochs, report.params.clone()));
    }

    let mut written = Vec::new();
    for (epoch, p) in &snapshots {
        let path = out.join(format!("checkpoint_{epoch}.nfmu"));
        nfmu.to_checkpoint(p)?.save(&path).context(path.display())?;
        written.push(path.display().to_string());
    }
    let final_path = out.join("checkpoint.nfmu");
    nfmu.to_checkpoint(&report.params)?
        .save(&final_path)
        .context(final_path.display())?;
    written.push(final_path.display().to_string());

    let rows = report
        .loss_history
        .iter()
        .enumerate()
        .map(|(k, l)| vec![k as f64, *l])
        .chain([vec![cfg.train.epochs as f64, report.final_loss]]);
    write_table(&out.join("loss.csv"), &["epoch", "loss"], rows)?;

    let summary = Summary {
        config: &cfg,
        n_params: nfmu.n_params(),
        epochs: cfg.train.epochs,
        initial_loss: report.loss_history[0],
        final_loss: report.final_loss,
        wall_time_s: start.elapsed().as_secs_f64(),
        checkpoints: written,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, json + "\n").context(summary_path.display())?;
    println!(
        "trained {} parameters for {} epochs: loss {:.6e} -> {:.6e} in {:.1} s; outputs in {}",
        summary.n_params,
        summary.epochs,
        summary.initial_loss,
        summary.final_loss,
        summary.wall_time_s,
        out.display()
    );
    Ok(())
}
