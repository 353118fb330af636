use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{initialize, ModelInstance};
use crate::net::{
    init_dense_params, Chain, Checkpoint, InitScheme, LayerDescriptor, LayerNode, MeLayer, ParamSlot, Tape,
};
use crate::ode::{solve, SolverConfig, Trajectory};
use crate::sensitivity::{
    loss_gradient, loss_value, model_jacobian, Bound, GradientMethod, GradientProblem, Linearization, LossGradient,
    ParametricDynamics,
};

use super::data::Dataset;

/// `ẋ_nn = bottom(f_me(top(x_nn)))`, or `ẋ_me + bottom(ẋ_me)` in residual
/// mode. Parameters are laid out as `[top | bottom]`.
#[derive(Debug)]
pub struct MeNeuralFmu {
    pub top: Chain,
    pub model: MeLayer,
    pub bottom: Chain,
    pub solver: SolverConfig,
    pub residual: bool,
}

fn dense_only(chain: &Chain, which: &'static str) -> Result<()> {
    if chain.nodes().iter().all(|n| matches!(n, LayerNode::Dense(_))) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{which} chain may only hold dense layers"
        )))
    }
}

fn check_dims(chain: &Chain, n: usize, context: &'static str) -> Result<()> {
    for d in [chain.in_dim(), chain.out_dim()].into_iter().flatten() {
        if d != n {
            return Err(Error::Dimension {
                context,
                expected: n,
                got: d,
            });
        }
    }
    Ok(())
}

/// Full Jacobians of a chain output w.r.t. its input and its parameters.
fn chain_jacobians(chain: &Chain, tape: &Tape, params: &[f64], n_in: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_out = tape.output().len();
    let mut jx = DMatrix::zeros(n_out, n_in);
    let mut jp = DMatrix::zeros(n_out, params.len());
    let mut e = vec![0.0; n_out];
    for r in 0..n_out {
        e[r] = 1.0;
        let (gx, gp) = chain.backprop(tape, params, &e)?;
        e[r] = 0.0;
        jx.set_row(r, &DVector::from_vec(gx).transpose());
        jp.set_row(r, &DVector::from_vec(gp).transpose());
    }
    Ok((jx, jp))
}

impl MeNeuralFmu {
    pub fn new(top: Chain, model: MeLayer, bottom: Chain, solver: SolverConfig, residual: bool) -> Result<Self> {
        dense_only(&top, "top")?;
        dense_only(&bottom, "bottom")?;
        let n = model.dim();
        check_dims(&top, n, "top chain")?;
        check_dims(&bottom, n, "bottom chain")?;
        solver.validate()?;
        Ok(Self {
            top,
            model,
            bottom,
            solver,
            residual,
        })
    }

    pub fn n_states(&self) -> usize {
        self.model.dim()
    }

    pub fn n_top_params(&self) -> usize {
        self.top.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.top.n_params() + self.bottom.n_params()
    }

    /// Dense-layer slots; bottom offsets follow the top parameters.
    pub fn slots(&self) -> Vec<ParamSlot> {
        let mut s = self.top.slots(0);
        s.extend(self.bottom.slots(self.top.n_params()));
        s
    }

    fn split<'p>(&self, params: &'p [f64]) -> Result<(&'p [f64], &'p [f64])> {
        if params.len() != self.n_params() {
            return Err(Error::Dimension {
                context: "NeuralFMU parameters",
                expected: self.n_params(),
                got: params.len(),
            });
        }
        Ok(params.split_at(self.top.n_params()))
    }

    /// Initial parameters over the concatenated dense layers (the first top
    /// layer is the identity).
    pub fn init_params(&self, scheme: InitScheme, seed: u64) -> Vec<f64> {
        let mut specs = self.top.dense_specs();
        specs.extend(self.bottom.dense_specs());
        init_dense_params(&specs, scheme, seed)
    }

    /// Back to a freshly initialized model with continuous state `x0` at `t0`.
    pub fn reset(&mut self, t0: f64, x0: &[f64]) -> Result<()> {
        let inst = self.model.instance.as_mut();
        let starts: Vec<_> = inst
            .description()
            .state_vrs
            .iter()
            .copied()
            .zip(x0.iter().copied())
            .collect();
        inst.reset();
        initialize(inst, t0, None, &starts)
    }

    pub fn instance(&mut self) -> &mut dyn ModelInstance {
        self.model.instance.as_mut()
    }

    /// Solves from `x0` with the configured solver.
    pub fn solve(
        &mut self,
        params: &[f64],
        x0: &[f64],
        t_span: (f64, f64),
        save_at: Option<&[f64]>,
    ) -> Result<Trajectory> {
        self.split(params)?;
        self.reset(t_span.0, x0)?;
        let cfg = self.solver;
        let mut sys = Bound::new(self, params)?;
        solve(&mut sys, x0, t_span, &cfg, save_at)
    }

    /// `ẋ_me = f_me(top(x))`, the model derivative seen inside the network.
    pub fn model_derivative(&mut self, t: f64, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let (pt, _) = self.split(params)?;
        let x_me = self.top.eval(x, pt)?;
        let inst = self.model.instance.as_mut();
        inst.set_time(t)?;
        inst.set_continuous_states(&x_me)?;
        inst.get_derivatives()
    }

    /// `ẋ_nn` for a given model derivative.
    pub fn bottom_output(&mut self, dx_me: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let (_, pb) = self.split(params)?;
        let mut y = self.bottom.eval(dx_me, pb)?;
        if self.residual {
            y.iter_mut().zip(dx_me).for_each(|(a, b)| *a += b);
        }
        Ok(y)
    }

    pub fn top_output(&mut self, x: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        let (pt, _) = self.split(params)?;
        self.top.eval(x, pt)
    }

    /// Loss and gradient of the MSE against `data`, rolling out from `x0` at
    /// `t0`. The model is reset first.
    pub fn loss_gradient(
        &mut self,
        method: GradientMethod,
        data: &Dataset,
        t0: f64,
        x0: &[f64],
        params: &[f64],
    ) -> Result<LossGradient> {
        self.reset(t0, x0)?;
        let loss = data.loss();
        let cfg = self.solver;
        let problem = GradientProblem {
            x0,
            t0,
            loss: &loss,
            solver: &cfg,
        };
        loss_gradient(method, self, params, &problem)
    }

    /// MSE against `data` under the rollout that `method` differentiates
    /// (fixed-step RK4 for discretize-then-backprop, the configured solver
    /// otherwise).
    pub fn loss(&mut self, method: GradientMethod, data: &Dataset, t0: f64, x0: &[f64], params: &[f64]) -> Result<f64> {
        self.reset(t0, x0)?;
        let solver = match method {
            GradientMethod::DiscretizeBackprop { h } => SolverConfig::rk4(h),
            _ => self.solver,
        };
        let loss = data.loss();
        let problem = GradientProblem {
            x0,
            t0,
            loss: &loss,
            solver: &solver,
        };
        loss_value(self, params, &problem)
    }

    pub fn to_checkpoint(&self, params: &[f64]) -> Result<Checkpoint> {
        self.split(params)?;
        let n = self.n_states();
        let mut layers: Vec<LayerDescriptor> = self.top.dense_specs().into_iter().map(LayerDescriptor::Dense).collect();
        layers.push(LayerDescriptor::Model { n_in: n, n_out: n });
        layers.extend(self.bottom.dense_specs().into_iter().map(LayerDescriptor::Dense));
        Ok(Checkpoint {
            layers,
            residual: self.residual,
            values: params.to_vec(),
        })
    }

    /// Builds a NeuralFMU around `model` with the checkpoint's layout and
    /// returns it with the stored parameters.
    pub fn from_checkpoint(ckpt: &Checkpoint, model: MeLayer, solver: SolverConfig) -> Result<(Self, Vec<f64>)> {
        let split = ckpt
            .layers
            .iter()
            .position(|l| matches!(l, LayerDescriptor::Model { .. }))
            .ok_or_else(|| Error::Checkpoint("no model layer in layout".into()))?;
        let dense = |ls: &[LayerDescriptor]| -> Result<Vec<LayerNode>> {
            ls.iter()
                .map(|l| match l {
                    LayerDescriptor::Dense(d) => Ok(LayerNode::Dense(*d)),
                    LayerDescriptor::Model { .. } => Err(Error::Checkpoint("more than one model layer".into())),
                })
                .collect()
        };
        if let LayerDescriptor::Model { n_in, n_out } = ckpt.layers[split] {
            if n_in != model.dim() || n_out != model.dim() {
                return Err(Error::Checkpoint(format!(
                    "model layer is {n_in}→{n_out}, model has {} states",
                    model.dim()
                )));
            }
        }
        let top = Chain::new(dense(&ckpt.layers[..split])?)?;
        let bottom = Chain::new(dense(&ckpt.layers[split + 1..])?)?;
        let nfmu = Self::new(top, model, bottom, solver, ckpt.residual)?;
        if ckpt.values.len() != nfmu.n_params() {
            return Err(Error::Checkpoint(format!(
                "{} values for {} parameters",
                ckpt.values.len(),
                nfmu.n_params()
            )));
        }
        Ok((nfmu, ckpt.values.clone()))
    }
}

impl ParametricDynamics for MeNeuralFmu {
    fn dim(&self) -> usize {
        self.n_states()
    }

    fn n_params(&self) -> usize {
        MeNeuralFmu::n_params(self)
    }

    fn rhs(&mut self, t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) -> Result<()> {
        let dx_me = self.model_derivative(t, x, p)?;
        dx.copy_from_slice(&self.bottom_output(&dx_me, p)?);
        Ok(())
    }

    fn linearize(&mut self, t: f64, x: &[f64], p: &[f64]) -> Result<Linearization> {
        let (pt, pb) = self.split(p)?;
        let n = self.n_states();
        let provider = self
            .model
            .provider
            .ok_or_else(|| Error::MissingJacobian(self.instance().description().model_name.clone()))?;

        let (x_me, top_tape) = self.top.forward(x, pt)?;
        let inst = self.model.instance.as_mut();
        inst.set_time(t)?;
        inst.set_continuous_states(&x_me)?;
        let dx_me = inst.get_derivatives()?;
        let j_me = model_jacobian(inst, provider)?;
        let (mut f, bottom_tape) = self.bottom.forward(&dx_me, pb)?;

        let (mut j_bottom, jp_bottom) = chain_jacobians(&self.bottom, &bottom_tape, pb, n)?;
        if self.residual {
            f.iter_mut().zip(&dx_me).for_each(|(a, b)| *a += b);
            for i in 0..n {
                j_bottom[(i, i)] += 1.0;
            }
        }
        let (j_top, jp_top) = chain_jacobians(&self.top, &top_tape, pt, n)?;
        let outer = &j_bottom * &j_me;
        let jx = &outer * &j_top;
        let mut jp = DMatrix::zeros(n, p.len());
        jp.columns_mut(0, pt.len()).copy_from(&(&outer * &jp_top));
        jp.columns_mut(pt.len(), pb.len()).copy_from(&jp_bottom);
        Ok(Linearization { f, jx, jp })
    }

    fn n_events(&self) -> usize {
        self.model.instance.description().n_event_indicators
    }

    fn event_indicators(&mut self, t: f64, x: &[f64], p: &[f64], z: &mut [f64]) -> Result<()> {
        let (pt, _) = self.split(p)?;
        let x_me = self.top.eval(x, pt)?;
        let inst = self.model.instance.as_mut();
        inst.set_time(t)?;
        inst.set_continuous_states(&x_me)?;
        z.copy_from_slice(&inst.get_event_indicators()?);
        Ok(())
    }

    /// Mode changes of the model apply; state re-initializations inside the
    /// model are not mapped back through the top chain.
    fn handle_event(&mut self, t: f64, x: &mut [f64], p: &[f64]) -> Result<()> {
        let (pt, _) = self.split(p)?;
        let x_me = self.top.eval(x, pt)?;
        let inst = self.model.instance.as_mut();
        inst.set_time(t)?;
        inst.set_continuous_states(&x_me)?;
        inst.update_discrete_states()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelFactory;
    use crate::models::{make_frictionless_pendulum, PendulumParams};
    use crate::net::{Activation, DenseSpec};
    use crate::sensitivity::{finite_difference_gradient, JacobianProvider};

    fn layer() -> MeLayer {
        let f = make_frictionless_pendulum(&PendulumParams::fmu()).unwrap();
        MeLayer::new(f.instantiate().unwrap(), Some(JacobianProvider::DirectionalDerivative)).unwrap()
    }

    fn small(residual: bool) -> MeNeuralFmu {
        let top = Chain::dense(&[DenseSpec::new(2, 2, Activation::Identity)]).unwrap();
        let bottom = Chain::dense(&[
            DenseSpec::new(2, 3, Activation::Tanh),
            DenseSpec::new(3, 2, Activation::Identity),
        ])
        .unwrap();
        MeNeuralFmu::new(top, layer(), bottom, SolverConfig::adaptive(1e-9, 1e-11), residual).unwrap()
    }

    #[test]
    fn identity_wrapping_matches_raw_model() {
        let mut nfmu = MeNeuralFmu::new(
            Chain::default(),
            layer(),
            Chain::default(),
            SolverConfig::adaptive(1e-8, 1e-10),
            false,
        )
        .unwrap();
        let times: Vec<f64> = (1..=100).map(|k| 0.1 * k as f64).collect();
        let traj = nfmu.solve(&[], &[0.5, 0.0], (0.0, 10.0), Some(&times)).unwrap();

        let mut raw = make_frictionless_pendulum(&PendulumParams::fmu())
            .unwrap()
            .instantiate()
            .unwrap();
        initialize(raw.as_mut(), 0.0, None, &[]).unwrap();
        let sim = crate::model::simulate(
            raw.as_mut(),
            10.0,
            &SolverConfig::adaptive(1e-8, 1e-10),
            Some(&times),
            &[],
        )
        .unwrap();
        assert_eq!(traj.states, sim.trajectory.states);
    }

    #[test]
    fn neutral_residual_is_exactly_neutral() {
        let mut nfmu = small(true);
        let p = nfmu.init_params(InitScheme::NeutralResidual, 3);
        let times: Vec<f64> = (1..=40).map(|k| 0.1 * k as f64).collect();
        let a = nfmu.solve(&p, &[0.5, 0.0], (0.0, 4.0), Some(&times)).unwrap();
        let mut raw = MeNeuralFmu::new(Chain::default(), layer(), Chain::default(), nfmu.solver, false).unwrap();
        let b = raw.solve(&[], &[0.5, 0.0], (0.0, 4.0), Some(&times)).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let mut nfmu = small(true);
        let mut p = nfmu.init_params(InitScheme::IdentityNormal, 11);
        p.iter_mut().enumerate().for_each(|(i, v)| *v += 0.01 * i as f64);
        nfmu.reset(0.0, &[0.5, 0.0]).unwrap();
        let x = [0.7, -0.3];
        let lin = nfmu.linearize(0.0, &x, &p).unwrap();
        for r in 0..2 {
            let gx = finite_difference_gradient(
                |y| {
                    let mut dx = [0.0; 2];
                    nfmu.rhs(0.0, y, &p, &mut dx)?;
                    Ok(dx[r])
                },
                &x,
                1e-6,
            )
            .unwrap();
            let gp = finite_difference_gradient(
                |q| {
                    let mut dx = [0.0; 2];
                    nfmu.rhs(0.0, &x, q, &mut dx)?;
                    Ok(dx[r])
                },
                &p,
                1e-6,
            )
            .unwrap();
            for c in 0..2 {
                approx::assert_abs_diff_eq!(lin.jx[(r, c)], gx[c], epsilon = 1e-7);
            }
            for c in 0..p.len() {
                approx::assert_abs_diff_eq!(lin.jp[(r, c)], gp[c], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let nfmu = small(true);
        let p = nfmu.init_params(InitScheme::IdentityNormal, 5);
        let ckpt = nfmu.to_checkpoint(&p).unwrap();
        let (back, q) = MeNeuralFmu::from_checkpoint(&ckpt, layer(), nfmu.solver).unwrap();
        assert_eq!(q, p);
        assert_eq!(back.slots(), nfmu.slots());
        assert!(back.residual);
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let top = Chain::dense(&[DenseSpec::new(2, 3, Activation::Identity)]).unwrap();
        assert!(MeNeuralFmu::new(top, layer(), Chain::default(), SolverConfig::default(), false).is_err());
        let nfmu = small(false);
        assert!(nfmu.to_checkpoint(&[0.0; 3]).is_err());
    }
}
