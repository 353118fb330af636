use nalgebra::DMatrix;

use super::layer::{CsLayer, DenseSpec, MeLayer};
use crate::error::{Error, Result};

pub enum LayerNode {
    Dense(DenseSpec),
    MeModel(MeLayer),
    CsModel(CsLayer),
}

impl std::fmt::Debug for LayerNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerNode::Dense(d) => d.fmt(f),
            LayerNode::MeModel(m) => m.fmt(f),
            LayerNode::CsModel(c) => c.fmt(f),
        }
    }
}

impl LayerNode {
    pub fn in_dim(&self) -> usize {
        match self {
            LayerNode::Dense(d) => d.n_in,
            LayerNode::MeModel(m) => m.dim(),
            LayerNode::CsModel(c) => c.input_vrs.len(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            LayerNode::Dense(d) => d.n_out,
            LayerNode::MeModel(m) => m.dim(),
            LayerNode::CsModel(c) => c.output_vrs.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            LayerNode::Dense(d) => d.n_params(),
            _ => 0,
        }
    }
}

/// Location of one dense layer's parameters inside a flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    /// Node index within its chain.
    pub node: usize,
    pub offset: usize,
    pub spec: DenseSpec,
}

impl ParamSlot {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.spec.n_weights()
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        self.offset + self.spec.n_weights()..self.offset + self.spec.n_params()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.spec.n_params()
    }
}

/// Flat trainable parameters with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub slots: Vec<ParamSlot>,
}

impl ParamVector {
    pub fn zeros(slots: Vec<ParamSlot>) -> Self {
        let n = slots.iter().map(|s| s.offset + s.spec.n_params()).max().unwrap_or(0);
        Self {
            values: vec![0.0; n],
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

enum TapeEntry {
    Dense { input: Vec<f64>, output: Vec<f64> },
    Model(Option<DMatrix<f64>>),
}

/// Record of one forward pass, sufficient for [`Chain::backprop`].
pub struct Tape {
    entries: Vec<TapeEntry>,
    output: Vec<f64>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Feed-forward sequence of layers.
#[derive(Debug, Default)]
pub struct Chain {
    nodes: Vec<LayerNode>,
}

impl Chain {
    pub fn new(nodes: Vec<LayerNode>) -> Result<Self> {
        for w in nodes.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Dimension {
                    context: "chain wiring",
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        Ok(Self { nodes })
    }

    pub fn dense(specs: &[DenseSpec]) -> Result<Self> {
        Self::new(specs.iter().copied().map(LayerNode::Dense).collect())
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [LayerNode] {
        &mut self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.nodes.first().map(LayerNode::in_dim)
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.nodes.last().map(LayerNode::out_dim)
    }

    pub fn n_params(&self) -> usize {
        self.nodes.iter().map(LayerNode::n_params).sum()
    }

    /// Dense-layer slots, offsets starting at `base`.
    pub fn slots(&self, base: usize) -> Vec<ParamSlot> {
        let mut offset = base;
        let mut slots = Vec::new();
        for (node, layer) in self.nodes.iter().enumerate() {
            if let LayerNode::Dense(spec) = layer {
                slots.push(ParamSlot {
                    node,
                    offset,
                    spec: *spec,
                });
                offset += spec.n_params();
            }
        }
        slots
    }

    pub fn dense_specs(&self) -> Vec<DenseSpec> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                LayerNode::Dense(d) => Some(*d),
                _ => None,
            })
            .collect()
    }

    fn check(&self, x: &[f64], params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "chain parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        if let Some(n) = self.in_dim() {
            if x.len() != n {
                return Err(Error::Dimension {
                    context: "chain input",
                    expected: n,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    fn run(&mut self, x: &[f64], params: &[f64], record: bool) -> Result<(Vec<f64>, Vec<TapeEntry>)> {
        self.check(x, params)?;
        let mut entries = Vec::with_capacity(if record { self.nodes.len() } else { 0 });
        let mut h = x.to_vec();
        let mut offset = 0;
        for node in &mut self.nodes {
            let y = match node {
                LayerNode::Dense(spec) => {
                    let p = &params[offset..offset + spec.n_params()];
                    offset += spec.n_params();
                    let y = spec.forward_slice(p, &h);
                    if record {
                        entries.push(TapeEntry::Dense {
                            input: std::mem::take(&mut h),
                            output: y.clone(),
                        });
                    }
                    y
                }
                LayerNode::MeModel(layer) => {
                    let (y, j) = layer.forward(&h, record)?;
                    if record {
                        entries.push(TapeEntry::Model(j));
                    }
                    y
                }
                LayerNode::CsModel(layer) => {
                    let (y, j) = layer.forward(&h, record)?;
                    if record {
                        entries.push(TapeEntry::Model(j));
                    }
                    y
                }
            };
            h = y;
        }
        Ok((h, entries))
    }

    /// Evaluates the chain and records a tape. Model layers evaluate their
    /// Jacobian eagerly.
    pub fn forward(&mut self, x: &[f64], params: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let (y, entries) = self.run(x, params, true)?;
        Ok((y.clone(), Tape { entries, output: y }))
    }

    /// Evaluation without a tape.
    pub fn eval(&mut self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.run(x, params, false)?.0)
    }

    /// Reverse pass: returns `∂(upstream·y)/∂x` and adds `∂(upstream·y)/∂p`
    /// to `param_grad`.
    pub fn backprop_into(
        &self,
        tape: &Tape,
        params: &[f64],
        upstream: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if param_grad.len() != self.n_params() || params.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "chain gradient",
                expected: self.n_params(),
                got: param_grad.len().min(params.len()),
            });
        }
        if tape.entries.len() != self.nodes.len() {
            return Err(Error::Dimension {
                context: "tape length",
                expected: self.nodes.len(),
                got: tape.entries.len(),
            });
        }
        if upstream.len() != tape.output.len() {
            return Err(Error::Dimension {
                context: "backprop upstream",
                expected: tape.output.len(),
                got: upstream.len(),
            });
        }
        let mut g = upstream.to_vec();
        let mut end = self.n_params();
        for (node, entry) in self.nodes.iter().zip(&tape.entries).rev() {
            g = match (node, entry) {
                (LayerNode::Dense(spec), TapeEntry::Dense { input, output }) => {
                    let start = end - spec.n_params();
                    let gx = spec.backward_slice(&params[start..end], input, output, &g, &mut param_grad[start..end]);
                    end = start;
                    gx
                }
                (_, TapeEntry::Model(Some(j))) => {
                    j.tr_mul(&nalgebra::DVector::from_column_slice(&g)).as_slice().to_vec()
                }
                (_, TapeEntry::Model(None)) => {
                    return Err(Error::MissingJacobian(format!("{node:?}")));
                }
                _ => unreachable!("tape recorded by a different chain"),
            };
        }
        Ok(g)
    }

    pub fn backprop(&self, tape: &Tape, params: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grad = vec![0.0; self.n_params()];
        let gx = self.backprop_into(tape, params, upstream, &mut grad)?;
        Ok((gx, grad))
    }
}
