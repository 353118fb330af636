use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::model::{ModelInstance, ModelKind, ValueReference};
use crate::sensitivity::{cs_jacobian, model_jacobian, JacobianProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Shape of a dense layer whose weights live in a parameter vector:
/// `n_out·n_in` weights (column-major) followed by `n_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DenseSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl DenseSpec {
    pub fn new(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            activation,
        }
    }

    pub fn n_weights(&self) -> usize {
        self.n_in * self.n_out
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.n_out
    }

    pub(crate) fn forward_slice(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(self.n_weights());
        let w = DMatrixView::from_slice(w, self.n_out, self.n_in);
        let mut y = b.to_vec();
        for c in 0..self.n_in {
            let xc = x[c];
            if xc != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += w[(r, c)] * xc;
                }
            }
        }
        for v in &mut y {
            *v = self.activation.apply(*v);
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient, given the layer input `x`, output `y` and upstream `g`.
    pub(crate) fn backward_slice(&self, params: &[f64], x: &[f64], y: &[f64], g: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let nw = self.n_weights();
        let w = DMatrixView::from_slice(&params[..nw], self.n_out, self.n_in);
        let dz: Vec<f64> = g
            .iter()
            .zip(y)
            .map(|(&gi, &yi)| gi * self.activation.slope_from_output(yi))
            .collect();
        let (gw, gb) = grad.split_at_mut(nw);
        for c in 0..self.n_in {
            for r in 0..self.n_out {
                gw[c * self.n_out + r] += dz[r] * x[c];
            }
        }
        for (b, d) in gb.iter_mut().zip(&dz) {
            *b += d;
        }
        (0..self.n_in)
            .map(|c| (0..self.n_out).map(|r| w[(r, c)] * dz[r]).sum())
            .collect()
    }
}

/// A dense layer with owned weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(w: DMatrix<f64>, b: DVector<f64>, activation: Activation) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(Error::Dimension {
                context: "dense bias",
                expected: w.nrows(),
                got: b.len(),
            });
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense parameters"));
        }
        Ok(Self { w, b, activation })
    }

    pub fn spec(&self) -> DenseSpec {
        DenseSpec::new(self.w.ncols(), self.w.nrows(), self.activation)
    }

    /// Weights then biases, in parameter-vector order.
    pub fn params(&self) -> Vec<f64> {
        self.w.iter().chain(self.b.iter()).copied().collect()
    }
}

/// `act(W·x + b)`.
pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.w.ncols() {
        return Err(Error::Dimension {
            context: "dense input",
            expected: layer.w.ncols(),
            got: x.len(),
        });
    }
    Ok(layer.spec().forward_slice(&layer.params(), x))
}

/// Model-exchange instance used as a layer `x_me ↦ ẋ_me`.
pub struct MeLayer {
    pub instance: Box<dyn ModelInstance>,
    /// `None` makes the layer non-differentiable.
    pub provider: Option<JacobianProvider>,
}

/// Co-simulation instance used as a stateful layer `u ↦ y(t + h)`.
pub struct CsLayer {
    pub instance: Box<dyn ModelInstance>,
    pub provider: Option<JacobianProvider>,
    pub h: f64,
    pub input_vrs: Vec<ValueReference>,
    pub output_vrs: Vec<ValueReference>,
}

impl std::fmt::Debug for MeLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeLayer")
            .field("model", &self.instance.description().model_name)
            .field("provider", &self.provider)
            .finish()
    }
}

impl std::fmt::Debug for CsLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CsLayer")
            .field("model", &self.instance.description().model_name)
            .field("h", &self.h)
            .finish()
    }
}

impl MeLayer {
    pub fn new(instance: Box<dyn ModelInstance>, provider: Option<JacobianProvider>) -> Result<Self> {
        if instance.kind() != ModelKind::ModelExchange {
            return Err(Error::WrongKind("model-exchange layer around a co-simulation instance"));
        }
        let provider = provider.map(|p| p.effective(instance.description()));
        Ok(Self { instance, provider })
    }

    pub fn dim(&self) -> usize {
        self.instance.description().n_states()
    }
}

impl CsLayer {
    /// Layer over all inputs and outputs of the instance.
    pub fn new(instance: Box<dyn ModelInstance>, provider: Option<JacobianProvider>, h: f64) -> Result<Self> {
        if instance.kind() != ModelKind::CoSimulation {
            return Err(Error::WrongKind("co-simulation layer around a model-exchange instance"));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("macro step must be positive, got {h}")));
        }
        let d = instance.description();
        let (input_vrs, output_vrs) = (d.input_vrs.clone(), d.output_vrs.clone());
        Ok(Self {
            instance,
            provider,
            h,
            input_vrs,
            output_vrs,
        })
    }

    /// Restricts the layer to a subset of the inputs (e.g. none).
    pub fn with_inputs(mut self, vrs: &[ValueReference]) -> Self {
        self.input_vrs = vrs.to_vec();
        self
    }
}

/// Sets the continuous states and returns the derivatives.
pub fn me_layer_forward(inst: &mut dyn ModelInstance, x_me: &[f64]) -> Result<Vec<f64>> {
    inst.set_continuous_states(x_me)?;
    inst.get_derivatives()
}

/// Sets the inputs, performs one macro step and returns the outputs.
pub fn cs_layer_forward(
    inst: &mut dyn ModelInstance,
    input_vrs: &[ValueReference],
    output_vrs: &[ValueReference],
    u_cs: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("macro step must be positive, got {h}")));
    }
    if !input_vrs.is_empty() {
        inst.set_real(input_vrs, u_cs)?;
    }
    let t = inst.time();
    inst.do_step(t, h)?;
    inst.get_real(output_vrs)
}

impl MeLayer {
    pub(crate) fn forward(&mut self, x: &[f64], want_jacobian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        let y = me_layer_forward(self.instance.as_mut(), x)?;
        let j = match (want_jacobian, self.provider) {
            (true, Some(p)) => Some(model_jacobian(self.instance.as_mut(), p)?),
            _ => None,
        };
        Ok((y, j))
    }
}

impl CsLayer {
    pub(crate) fn forward(&mut self, u: &[f64], want_jacobian: bool) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
        if u.len() != self.input_vrs.len() {
            return Err(Error::Dimension {
                context: "co-simulation layer input",
                expected: self.input_vrs.len(),
                got: u.len(),
            });
        }
        if !self.input_vrs.is_empty() {
            self.instance.set_real(&self.input_vrs, u)?;
        }
        let j = match (want_jacobian, self.provider) {
            (true, Some(p)) => {
                let full = cs_jacobian(self.instance.as_mut(), p, self.h)?;
                Some(select(
                    &full,
                    self.instance.description(),
                    &self.output_vrs,
                    &self.input_vrs,
                ))
            }
            _ => None,
        };
        let y = cs_layer_forward(self.instance.as_mut(), &[], &self.output_vrs, &[], self.h)?;
        Ok((y, j))
    }
}

/// Rows/columns of a CS Jacobian (over all outputs × all inputs) that belong
/// to the chosen layer variables.
fn select(
    full: &DMatrix<f64>,
    d: &crate::model::ModelDescription,
    rows: &[ValueReference],
    cols: &[ValueReference],
) -> DMatrix<f64> {
    let ri: Vec<Option<usize>> = rows
        .iter()
        .map(|vr| d.output_vrs.iter().position(|o| o == vr))
        .collect();
    let ci: Vec<Option<usize>> = cols.iter().map(|vr| d.input_vrs.iter().position(|o| o == vr)).collect();
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| match (ri[r], ci[c]) {
        (Some(i), Some(j)) => full[(i, j)],
        _ => 0.0,
    })
}
