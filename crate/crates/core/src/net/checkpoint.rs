//! Binary parameter checkpoints.
//!
//! Layout (little endian): magic `NFMUCKPT`, `u32` version, `u32` layer
//! count, per layer `u8` kind (0 dense, 1 model) + `u32` in + `u32` out +
//! `u8` activation (0 identity, 1 tanh), `u8` residual flag, `u64` value
//! count, then the values as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::layer::{Activation, DenseSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NFMUCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerDescriptor {
    Dense(DenseSpec),
    Model { n_in: usize, n_out: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layers: Vec<LayerDescriptor>,
    pub residual: bool,
    pub values: Vec<f64>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => bad("truncated file"),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(read_array::<1, _>(r)?[0])
}

impl Checkpoint {
    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerDescriptor::Dense(d) => d.n_params(),
                LayerDescriptor::Model { .. } => 0,
            })
            .sum()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if self.values.len() != self.n_params() {
            return Err(bad(format!(
                "{} values for a layout of {} parameters",
                self.values.len(),
                self.n_params()
            )));
        }
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            let (kind, n_in, n_out, act) = match layer {
                LayerDescriptor::Dense(d) => (0u8, d.n_in, d.n_out, d.activation),
                LayerDescriptor::Model { n_in, n_out } => (1u8, *n_in, *n_out, Activation::Identity),
            };
            w.write_all(&[kind])?;
            w.write_all(&(n_in as u32).to_le_bytes())?;
            w.write_all(&(n_out as u32).to_le_bytes())?;
            w.write_all(&[u8::from(act == Activation::Tanh)])?;
        }
        w.write_all(&[u8::from(self.residual)])?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        if &read_array::<8, _>(&mut r)? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let n_layers = read_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let kind = read_u8(&mut r)?;
            let n_in = read_u32(&mut r)? as usize;
            let n_out = read_u32(&mut r)? as usize;
            let activation = match read_u8(&mut r)? {
                0 => Activation::Identity,
                1 => Activation::Tanh,
                a => return Err(bad(format!("unknown activation code {a}"))),
            };
            layers.push(match kind {
                0 => LayerDescriptor::Dense(DenseSpec::new(n_in, n_out, activation)),
                1 => LayerDescriptor::Model { n_in, n_out },
                k => return Err(bad(format!("unknown layer kind {k}"))),
            });
        }
        let residual = match read_u8(&mut r)? {
            0 => false,
            1 => true,
            f => return Err(bad(format!("invalid residual flag {f}"))),
        };
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let ck = Self {
            layers,
            residual,
            values: Vec::new(),
        };
        if n != ck.n_params() {
            return Err(bad(format!("{n} values for a layout of {} parameters", ck.n_params())));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(f64::from_le_bytes(read_array(&mut r)?));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { values, ..ck })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            layers: vec![
                LayerDescriptor::Dense(DenseSpec::new(2, 2, Activation::Identity)),
                LayerDescriptor::Model { n_in: 2, n_out: 2 },
                LayerDescriptor::Dense(DenseSpec::new(2, 3, Activation::Tanh)),
            ],
            residual: true,
            values: (0..15).map(|i| i as f64 * 0.1 - 0.7).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(buf.as_slice()).unwrap(), sample());
    }

    #[test]
    fn corrupt_files_rejected() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(extra.as_slice()).is_err());
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::read_from(wrong.as_slice()).is_err());
        let mut ck = sample();
        ck.values.pop();
        assert!(ck.write_to(Vec::new()).is_err());
    }
}
