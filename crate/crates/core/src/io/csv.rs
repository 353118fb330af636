use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ode::Trajectory;

/// Trajectory read back together with its column names (without `t`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NamedTrajectory {
    pub names: Vec<String>,
    pub trajectory: Trajectory,
}

fn csv_err(e: ::csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        ::csv::ErrorKind::Io(io) => Error::Io(io),
        ::csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Csv {
            line,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => Error::Csv {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Writes `t` plus one column per name; values with 17 significant digits.
pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory, names: &[String]) -> Result<()> {
    traj.validate()?;
    if !traj.is_empty() && traj.dim() != names.len() {
        return Err(Error::LengthMismatch {
            expected: traj.dim(),
            got: names.len(),
        });
    }
    let mut out = ::csv::WriterBuilder::new()
        .terminator(::csv::Terminator::Any(b'\n'))
        .from_writer(w);
    out.write_record(std::iter::once("t").chain(names.iter().map(String::as_str)))
        .map_err(csv_err)?;
    let mut record = Vec::with_capacity(names.len() + 1);
    for (t, row) in traj.times.iter().zip(&traj.states) {
        record.clear();
        record.push(format!("{t:.16e}"));
        record.extend(row.iter().map(|x| format!("{x:.16e}")));
        out.write_record(&record).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory<R: Read>(r: R) -> Result<NamedTrajectory> {
    let mut input = ::csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = input.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("t") {
        return Err(Error::Csv {
            line: 1,
            message: "first column must be `t`".into(),
        });
    }
    let names = header.iter().skip(1).map(str::to_string).collect();
    let mut traj = Trajectory::default();
    for record in input.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut values = record.iter().map(|field| {
            field.trim().parse::<f64>().map_err(|_| Error::Csv {
                line,
                message: format!("`{field}` is not a number"),
            })
        });
        let t = values.next().transpose()?.ok_or(Error::Csv {
            line,
            message: "empty row".into(),
        })?;
        traj.times.push(t);
        traj.states.push(values.collect::<Result<_>>()?);
    }
    Ok(NamedTrajectory {
        names,
        trajectory: traj,
    })
}

pub fn write_trajectory_csv(traj: &Trajectory, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    write_trajectory(BufWriter::new(File::create(path)?), traj, names)
}

pub fn read_named_trajectory_csv(path: impl AsRef<Path>) -> Result<NamedTrajectory> {
    read_trajectory(BufReader::new(File::open(path)?))
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory> {
    Ok(read_named_trajectory_csv(path)?.trajectory)
}
