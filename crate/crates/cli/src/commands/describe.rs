use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::Args;
use neuralfmu::io::{open_archive, parse_model_description};
use neuralfmu::model::{ModelDescription, ModelFactory};
use neuralfmu::models::{make_friction_pendulum, make_frictionless_pendulum, PendulumParams};

use super::simulate::BuiltinModel;
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Args)]
pub struct DescribeArgs {
    /// `modelDescription.xml` or an `.fmu` archive.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    pub path: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub builtin: Option<BuiltinModel>,
    /// Print the description as JSON.
    #[arg(long)]
    pub json: bool,
}

fn load(args: &DescribeArgs) -> CliResult<ModelDescription> {
    if let Some(model) = args.builtin {
        let d = match model {
            BuiltinModel::Frictionless => make_frictionless_pendulum(&PendulumParams::fmu())?.description(),
            BuiltinModel::Friction => make_friction_pendulum(&PendulumParams::reference())?.description(),
        };
        return Ok((*d).clone());
    }
    let path = args
        .path
        .as_ref()
        .ok_or_else(|| CliError::config("no description given"))?;
    let mut head = [0u8; 4];
    let n = std::fs::File::open(path)
        .context(path.display())?
        .read(&mut head)
        .context(path.display())?;
    if head[..n].starts_with(b"PK") {
        Ok(open_archive(path).context(path.display())?.model_description)
    } else {
        let bytes = std::fs::read(path).context(path.display())?;
        parse_model_description(&bytes).context(path.display())
    }
}

pub fn describe(args: &DescribeArgs) -> CliResult {
    let d = load(args)?;
    let mut out = String::new();
    if args.json {
        out = serde_json::to_string_pretty(&d).expect("description serializes");
        out.push('\n');
    } else {
        let _ = writeln!(out, "model       {}", d.model_name);
        let _ = writeln!(out, "guid        {}", d.guid);
        let _ = writeln!(out, "kind        {:?}", d.kind);
        let _ = writeln!(out, "states      {}", d.n_states());
        let _ = writeln!(out, "indicators  {}", d.n_event_indicators);
        let _ = writeln!(out, "directional derivatives  {}", d.provides_directional_derivative);
        let _ = writeln!(out, "get/set state            {}", d.can_get_set_state);
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>5}  {:<28} {:<14} {:<12} start",
            "vr", "name", "causality", "variability"
        );
        for v in &d.variables {
            let start = v.start.map_or_else(|| "-".to_string(), |s| format!("{s}"));
            let _ = writeln!(
                out,
                "{:>5}  {:<28} {:<14} {:<12} {start}",
                v.vr.0,
                v.name,
                v.causality.as_str(),
                v.variability.as_str()
            );
        }
    }
    match std::io::stdout().write_all(out.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
