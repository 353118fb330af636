use crate::error::{Error, Result};
use crate::model::{initialize, ValueReference};
use crate::net::{cs_layer_forward, init_dense_params, Chain, CsLayer, InitScheme, LayerNode};

/// `y_nn = bottom(y_cs(top(u_nn)))`, one macro step per call. Parameters are
/// laid out as `[top | bottom]`.
#[derive(Debug)]
pub struct CsNeuralFmu {
    pub top: Chain,
    pub model: CsLayer,
    pub bottom: Chain,
    pub t_start: f64,
    /// Values written during initialization before every run.
    pub starts: Vec<(ValueReference, f64)>,
}

impl CsNeuralFmu {
    pub fn new(top: Chain, model: CsLayer, bottom: Chain, t_start: f64) -> Result<Self> {
        for (chain, which) in [(&top, "top"), (&bottom, "bottom")] {
            if !chain.nodes().iter().all(|n| matches!(n, LayerNode::Dense(_))) {
                return Err(Error::InvalidArgument(format!(
                    "{which} chain may only hold dense layers"
                )));
            }
        }
        let (n_u, n_y) = (model.input_vrs.len(), model.output_vrs.len());
        if let Some(d) = top.out_dim().filter(|&d| d != n_u) {
            return Err(Error::Dimension {
                context: "top chain output",
                expected: n_u,
                got: d,
            });
        }
        if let Some(d) = bottom.in_dim().filter(|&d| d != n_y) {
            return Err(Error::Dimension {
                context: "bottom chain input",
                expected: n_y,
                got: d,
            });
        }
        Ok(Self {
            top,
            model,
            bottom,
            t_start,
            starts: Vec::new(),
        })
    }

    pub fn with_starts(mut self, starts: &[(ValueReference, f64)]) -> Self {
        self.starts = starts.to_vec();
        self
    }

    pub fn n_params(&self) -> usize {
        self.top.n_params() + self.bottom.n_params()
    }

    pub fn init_params(&self, scheme: InitScheme, seed: u64) -> Vec<f64> {
        let mut specs = self.top.dense_specs();
        specs.extend(self.bottom.dense_specs());
        init_dense_params(&specs, scheme, seed)
    }

    fn input_dim(&self) -> usize {
        self.top.in_dim().unwrap_or(self.model.input_vrs.len())
    }

    pub fn reset(&mut self) -> Result<()> {
        let inst = self.model.instance.as_mut();
        inst.reset();
        initialize(inst, self.t_start, None, &self.starts)
    }

    /// Resets the model and performs `n_steps` macro steps, feeding `inputs[k]`
    /// at step `k` (ignored when the network has no inputs).
    pub fn run(&mut self, params: &[f64], inputs: &[Vec<f64>], n_steps: usize) -> Result<Vec<Vec<f64>>> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "NeuralFMU parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        let n_u = self.input_dim();
        if n_u > 0 && inputs.len() < n_steps {
            return Err(Error::LengthMismatch {
                expected: n_steps,
                got: inputs.len(),
            });
        }
        self.reset()?;
        let (pt, pb) = params.split_at(self.top.n_params());
        let mut out = Vec::with_capacity(n_steps);
        for k in 0..n_steps {
            let u = if n_u == 0 { &[][..] } else { &inputs[k][..] };
            let u_cs = self.top.eval(u, pt)?;
            let layer = &mut self.model;
            let y = cs_layer_forward(
                layer.instance.as_mut(),
                &layer.input_vrs,
                &layer.output_vrs,
                &u_cs,
                layer.h,
            )?;
            out.push(self.bottom.eval(&y, pb)?);
        }
        Ok(out)
    }
}
