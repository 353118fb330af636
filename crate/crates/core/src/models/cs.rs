//! Co-simulation wrapper: embeds the adaptive solver inside a model-exchange
//! model so that it can only be advanced by `do_step`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{
    Causality, InstancePhase, MeFactory, MeInstance, ModelDescription, ModelFactory, ModelInstance, ModelKind,
    NativeModel, StateSnapshot, ValueReference, STEP_TIME_TOL,
};
use crate::ode::{solve, OdeSystem, SolverConfig};

/// Co-simulation instance around a native ME model.
#[derive(Debug)]
pub struct CsInstance<M: NativeModel> {
    inner: MeInstance<M>,
    desc: Arc<ModelDescription>,
    solver: SolverConfig,
}

struct InnerSystem<'a, M: NativeModel>(&'a mut MeInstance<M>);

impl<M: NativeModel> InnerSystem<'_, M> {
    fn load(&mut self, t: f64, x: &[f64]) {
        self.0.t = t;
        self.0.write_states(x);
    }
}

impl<M: NativeModel> OdeSystem for InnerSystem<'_, M> {
    fn dim(&self) -> usize {
        self.0.desc.n_states()
    }

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.load(t, x);
        dx.copy_from_slice(&self.0.derivatives());
        Ok(())
    }

    fn n_events(&self) -> usize {
        self.0.desc.n_event_indicators
    }

    fn event_indicators(&mut self, t: f64, x: &[f64], z: &mut [f64]) -> Result<()> {
        self.load(t, x);
        z.copy_from_slice(&self.0.indicators());
        Ok(())
    }

    fn handle_event(&mut self, t: f64, x: &mut [f64]) -> Result<()> {
        self.load(t, x);
        self.0.update_modes();
        x.copy_from_slice(&self.0.states());
        Ok(())
    }
}

impl<M: NativeModel> CsInstance<M> {
    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    fn step(&mut self, t: f64, h: f64) -> Result<()> {
        self.inner.require_continuous("do_step")?;
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "communication step must be positive, got {h}"
            )));
        }
        if (t - self.inner.t).abs() > STEP_TIME_TOL {
            return Err(Error::InvalidArgument(format!(
                "do_step at t = {t} but instance is at t = {}",
                self.inner.t
            )));
        }
        if let Some(stop) = self.inner.t_stop {
            if t + h > stop + STEP_TIME_TOL {
                return Err(Error::InvalidArgument(format!(
                    "step to {} beyond stop time {stop}",
                    t + h
                )));
            }
        }
        let cfg = SolverConfig {
            h0: self.solver.h0.min(h),
            h_max: self.solver.h_max.min(h),
            h_min: self.solver.h_min.min(h),
            ..self.solver
        };
        let x0 = self.inner.states();
        let t0 = self.inner.t;
        let result = solve(
            &mut InnerSystem(&mut self.inner),
            &x0,
            (t0, t + h),
            &cfg,
            Some(&[t + h]),
        );
        match result {
            Ok(traj) => {
                let x = traj.last_state().map(<[f64]>::to_vec).unwrap_or(x0);
                self.inner.t = t + h;
                self.inner.write_states(&x);
                Ok(())
            }
            Err(e) => {
                self.inner.t = t0;
                self.inner.write_states(&x0);
                Err(e)
            }
        }
    }
}

impl<M: NativeModel> ModelInstance for CsInstance<M> {
    fn description(&self) -> &ModelDescription {
        &self.desc
    }

    fn kind(&self) -> ModelKind {
        ModelKind::CoSimulation
    }

    fn phase(&self) -> InstancePhase {
        self.inner.phase
    }

    fn time(&self) -> f64 {
        self.inner.t
    }

    fn setup_experiment(&mut self, t_start: f64, t_stop: Option<f64>) -> Result<()> {
        self.inner.setup(t_start, t_stop)
    }

    fn enter_initialization_mode(&mut self) -> Result<()> {
        self.inner.enter_init()
    }

    fn exit_initialization_mode(&mut self) -> Result<()> {
        self.inner.exit_init()
    }

    fn set_real(&mut self, vrs: &[ValueReference], values: &[f64]) -> Result<()> {
        let desc = Arc::clone(&self.desc);
        self.inner.set_real_checked(&desc, vrs, values)
    }

    fn get_real(&mut self, vrs: &[ValueReference]) -> Result<Vec<f64>> {
        self.inner.get_real_unchecked(vrs)
    }

    fn set_time(&mut self, _t: f64) -> Result<()> {
        Err(Error::WrongKind("set_time"))
    }

    fn set_continuous_states(&mut self, _x: &[f64]) -> Result<()> {
        Err(Error::WrongKind("set_continuous_states"))
    }

    fn get_continuous_states(&self) -> Result<Vec<f64>> {
        Err(Error::WrongKind("get_continuous_states"))
    }

    fn get_derivatives(&mut self) -> Result<Vec<f64>> {
        Err(Error::WrongKind("get_derivatives"))
    }

    fn get_event_indicators(&mut self) -> Result<Vec<f64>> {
        Err(Error::WrongKind("get_event_indicators"))
    }

    fn update_discrete_states(&mut self) -> Result<()> {
        Err(Error::WrongKind("update_discrete_states"))
    }

    fn do_step(&mut self, t: f64, h: f64) -> Result<()> {
        self.step(t, h)
    }

    /// Instantaneous partial derivatives at the current communication point.
    fn get_directional_derivative(
        &mut self,
        unknown_vrs: &[ValueReference],
        known_vrs: &[ValueReference],
        seed: &[f64],
    ) -> Result<Vec<f64>> {
        let desc = Arc::clone(&self.desc);
        self.inner.directional_derivative(&desc, unknown_vrs, known_vrs, seed)
    }

    fn get_state(&self) -> Result<StateSnapshot> {
        self.inner.snapshot(&self.desc)
    }

    fn set_state(&mut self, snapshot: &StateSnapshot) -> Result<()> {
        let desc = Arc::clone(&self.desc);
        self.inner.restore(&desc, snapshot)
    }

    fn reset(&mut self) {
        self.inner.do_reset();
    }

    fn terminate(&mut self) -> Result<()> {
        self.inner.do_terminate()
    }
}

/// Factory for [`CsInstance`]s.
#[derive(Debug, Clone)]
pub struct CsFactory<M: NativeModel> {
    me: MeFactory<M>,
    desc: Arc<ModelDescription>,
    solver: SolverConfig,
}

impl<M: NativeModel> CsFactory<M> {
    pub fn instantiate_cs(&self) -> Result<CsInstance<M>> {
        let mut inner = self.me.instantiate_me()?;
        inner.mark_dirty();
        Ok(CsInstance {
            inner,
            desc: Arc::clone(&self.desc),
            solver: self.solver,
        })
    }
}

impl<M: NativeModel> ModelFactory for CsFactory<M> {
    fn description(&self) -> Arc<ModelDescription> {
        Arc::clone(&self.desc)
    }

    fn instantiate(&self) -> Result<Box<dyn ModelInstance>> {
        Ok(Box::new(self.instantiate_cs()?))
    }
}

/// Wraps an ME model as a co-simulation model. States become outputs; the
/// ME outputs become locals.
pub fn wrap_me_as_cs<M: NativeModel>(me: &MeFactory<M>, solver: SolverConfig) -> Result<CsFactory<M>> {
    solver.validate()?;
    let mut desc = (*ModelFactory::description(me)).clone();
    desc.kind = ModelKind::CoSimulation;
    for var in &mut desc.variables {
        if desc.state_vrs.contains(&var.vr) {
            var.causality = Causality::Output;
        } else if var.causality == Causality::Output {
            var.causality = Causality::Local;
        }
    }
    desc.output_vrs = desc.state_vrs.clone();
    desc.validate()?;
    Ok(CsFactory {
        me: me.clone(),
        desc: Arc::new(desc),
        solver,
    })
}
