use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::{
    next_lineage, Causality, InstancePhase, ModelDescription, ModelFactory, ModelInstance, ModelKind, ScalarVariable,
    StateSnapshot, ValueReference, Variability,
};
use crate::error::{Error, Result};
use crate::ode::check_finite;

/// Equations of a native model.
///
/// Variables are addressed by their index in `ModelDescription::variables`;
/// `vars` always holds the full value table of the instance.
pub trait NativeModel: Clone + fmt::Debug + Send + Sync + 'static {
    /// Fills calculated variables (derivatives, outputs) from states, inputs
    /// and parameters.
    fn evaluate(&self, t: f64, vars: &mut [f64]);

    fn event_indicators(&self, _t: f64, _vars: &[f64], _z: &mut [f64]) {}

    /// Re-establishes discrete modes; may modify states.
    fn update_modes(&mut self, _t: f64, _vars: &mut [f64]) {}

    fn reset_modes(&mut self) {}

    /// `∂ vars[unknown] / ∂ vars[known]` at the current point.
    fn partial(&self, _t: f64, _vars: &[f64], unknown: usize, known: usize) -> f64 {
        if unknown == known {
            1.0
        } else {
            0.0
        }
    }

    /// Rejects inconsistent parameter values when leaving initialization.
    fn check_values(&self, _vars: &[f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone)]
pub(crate) struct MeSnapshot<M> {
    model: M,
    vars: Vec<f64>,
    t: f64,
    t_stop: Option<f64>,
    experiment_set: bool,
    phase: InstancePhase,
    dirty: bool,
}

/// Model-exchange instance of a [`NativeModel`].
#[derive(Debug)]
pub struct MeInstance<M: NativeModel> {
    pub(crate) model: M,
    pristine: M,
    pub(crate) desc: Arc<ModelDescription>,
    index: Arc<HashMap<ValueReference, usize>>,
    state_idx: Vec<usize>,
    deriv_idx: Vec<usize>,
    start: Vec<f64>,
    pub(crate) vars: Vec<f64>,
    pub(crate) t: f64,
    pub(crate) t_stop: Option<f64>,
    experiment_set: bool,
    pub(crate) phase: InstancePhase,
    dirty: bool,
    pub(crate) lineage: u64,
}

impl<M: NativeModel> MeInstance<M> {
    pub fn new(model: M, desc: Arc<ModelDescription>) -> Result<Self> {
        desc.validate()?;
        let index = desc.index_map();
        let state_idx = desc.state_vrs.iter().map(|vr| index[vr]).collect();
        let deriv_idx = desc.derivative_vrs.iter().map(|vr| index[vr]).collect();
        let start: Vec<f64> = desc.variables.iter().map(|v| v.start.unwrap_or(0.0)).collect();
        Ok(Self {
            pristine: model.clone(),
            model,
            index: Arc::new(index),
            state_idx,
            deriv_idx,
            vars: start.clone(),
            start,
            desc,
            t: 0.0,
            t_stop: None,
            experiment_set: false,
            phase: InstancePhase::Instantiated,
            dirty: true,
            lineage: next_lineage(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub(crate) fn resolve(&self, vr: ValueReference) -> Result<usize> {
        self.index.get(&vr).copied().ok_or(Error::UnknownValueReference(vr))
    }

    fn require(&self, op: &'static str, allowed: &[InstancePhase]) -> Result<()> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(Error::Phase { op, phase: self.phase })
        }
    }

    pub(crate) fn ensure_evaluated(&mut self) {
        if self.dirty {
            self.model.evaluate(self.t, &mut self.vars);
            self.dirty = false;
        }
    }

    pub(crate) fn mark_dirty(&mut self) {
        self.dirty = true;
    }

    pub(crate) fn states(&self) -> Vec<f64> {
        self.state_idx.iter().map(|&i| self.vars[i]).collect()
    }

    pub(crate) fn write_states(&mut self, x: &[f64]) {
        for (&i, &v) in self.state_idx.iter().zip(x) {
            self.vars[i] = v;
        }
        self.dirty = true;
    }

    pub(crate) fn derivatives(&mut self) -> Vec<f64> {
        self.ensure_evaluated();
        self.deriv_idx.iter().map(|&i| self.vars[i]).collect()
    }

    pub(crate) fn indicators(&mut self) -> Vec<f64> {
        self.ensure_evaluated();
        let mut z = vec![0.0; self.desc.n_event_indicators];
        self.model.event_indicators(self.t, &self.vars, &mut z);
        z
    }

    pub(crate) fn update_modes(&mut self) {
        self.ensure_evaluated();
        self.model.update_modes(self.t, &mut self.vars);
        self.dirty = true;
    }

    /// Causality/phase rule for writes: inputs until termination, parameters and
    /// variables with a start value until initialization ends, calculated
    /// variables never.
    pub(crate) fn check_writable(&self, var: &ScalarVariable) -> Result<()> {
        use InstancePhase::*;
        let before_run = matches!(self.phase, Instantiated | InitializationMode);
        let allowed = match (var.causality, var.variability) {
            (_, Variability::Constant) => false,
            (Causality::Input, _) => before_run || self.phase == ContinuousMode,
            (Causality::Parameter, _) => before_run,
            (Causality::Local | Causality::Output, _) => var.start.is_some() && before_run,
        };
        if allowed {
            Ok(())
        } else {
            Err(Error::Causality {
                name: var.name.clone(),
                causality: var.causality.as_str(),
                phase: self.phase,
            })
        }
    }

    /// Writes values after checking them against the rules of `desc` (which
    /// may be a wrapper's description sharing this variable layout).
    pub(crate) fn set_real_checked(
        &mut self,
        desc: &ModelDescription,
        vrs: &[ValueReference],
        values: &[f64],
    ) -> Result<()> {
        if vrs.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: vrs.len(),
                got: values.len(),
            });
        }
        if self.phase == InstancePhase::Terminated {
            return Err(Error::Phase {
                op: "set_real",
                phase: self.phase,
            });
        }
        let mut idx = Vec::with_capacity(vrs.len());
        let mut input_written = false;
        for (&vr, &value) in vrs.iter().zip(values) {
            let i = self.resolve(vr)?;
            let var = &desc.variables[i];
            self.check_writable(var)?;
            if !value.is_finite() {
                return Err(Error::NonFinite("set_real value"));
            }
            input_written |= var.causality == Causality::Input;
            idx.push(i);
        }
        for (i, &value) in idx.into_iter().zip(values) {
            self.vars[i] = value;
        }
        self.dirty = true;
        if input_written && self.phase == InstancePhase::ContinuousMode {
            self.update_modes();
        }
        Ok(())
    }

    pub(crate) fn get_real_unchecked(&mut self, vrs: &[ValueReference]) -> Result<Vec<f64>> {
        let idx = vrs.iter().map(|&vr| self.resolve(vr)).collect::<Result<Vec<_>>>()?;
        self.ensure_evaluated();
        Ok(idx.into_iter().map(|i| self.vars[i]).collect())
    }

    pub(crate) fn directional_derivative(
        &mut self,
        desc: &ModelDescription,
        unknown_vrs: &[ValueReference],
        known_vrs: &[ValueReference],
        seed: &[f64],
    ) -> Result<Vec<f64>> {
        if !desc.provides_directional_derivative {
            return Err(Error::Capability("directional derivatives"));
        }
        self.require(
            "get_directional_derivative",
            &[InstancePhase::InitializationMode, InstancePhase::ContinuousMode],
        )?;
        if seed.len() != known_vrs.len() {
            return Err(Error::LengthMismatch {
                expected: known_vrs.len(),
                got: seed.len(),
            });
        }
        let unknown = unknown_vrs
            .iter()
            .map(|&vr| self.resolve(vr))
            .collect::<Result<Vec<_>>>()?;
        let known = known_vrs
            .iter()
            .map(|&vr| self.resolve(vr))
            .collect::<Result<Vec<_>>>()?;
        self.ensure_evaluated();
        Ok(unknown
            .iter()
            .map(|&u| {
                known
                    .iter()
                    .zip(seed)
                    .map(|(&k, &s)| self.model.partial(self.t, &self.vars, u, k) * s)
                    .sum()
            })
            .collect())
    }

    pub(crate) fn snapshot(&self, desc: &ModelDescription) -> Result<StateSnapshot> {
        if !desc.can_get_set_state {
            return Err(Error::Capability("get/set state"));
        }
        Ok(StateSnapshot::new(
            self.lineage,
            MeSnapshot {
                model: self.model.clone(),
                vars: self.vars.clone(),
                t: self.t,
                t_stop: self.t_stop,
                experiment_set: self.experiment_set,
                phase: self.phase,
                dirty: self.dirty,
            },
        ))
    }

    pub(crate) fn restore(&mut self, desc: &ModelDescription, snap: &StateSnapshot) -> Result<()> {
        if !desc.can_get_set_state {
            return Err(Error::Capability("get/set state"));
        }
        let s: &MeSnapshot<M> = snap.payload(self.lineage)?;
        self.model = s.model.clone();
        self.vars.clone_from(&s.vars);
        self.t = s.t;
        self.t_stop = s.t_stop;
        self.experiment_set = s.experiment_set;
        self.phase = s.phase;
        self.dirty = s.dirty;
        Ok(())
    }

    pub(crate) fn setup(&mut self, t_start: f64, t_stop: Option<f64>) -> Result<()> {
        self.require("setup_experiment", &[InstancePhase::Instantiated])?;
        if !t_start.is_finite() {
            return Err(Error::NonFinite("start time"));
        }
        if let Some(stop) = t_stop {
            if !(stop >= t_start) {
                return Err(Error::InvalidArgument(format!(
                    "stop time {stop} precedes start time {t_start}"
                )));
            }
        }
        self.t = t_start;
        self.t_stop = t_stop;
        self.experiment_set = true;
        self.dirty = true;
        Ok(())
    }

    pub(crate) fn enter_init(&mut self) -> Result<()> {
        self.require("enter_initialization_mode", &[InstancePhase::Instantiated])?;
        if !self.experiment_set {
            return Err(Error::Phase {
                op: "enter_initialization_mode (before setup_experiment)",
                phase: self.phase,
            });
        }
        self.phase = InstancePhase::InitializationMode;
        Ok(())
    }

    pub(crate) fn exit_init(&mut self) -> Result<()> {
        self.require("exit_initialization_mode", &[InstancePhase::InitializationMode])?;
        self.model.check_values(&self.vars)?;
        check_finite(&self.states(), "initial state")?;
        self.phase = InstancePhase::ContinuousMode;
        self.dirty = true;
        self.update_modes();
        Ok(())
    }

    pub(crate) fn do_reset(&mut self) {
        self.model = self.pristine.clone();
        self.model.reset_modes();
        self.vars.clone_from(&self.start);
        self.t = 0.0;
        self.t_stop = None;
        self.experiment_set = false;
        self.phase = InstancePhase::Instantiated;
        self.dirty = true;
    }

    pub(crate) fn do_terminate(&mut self) -> Result<()> {
        self.require("terminate", &[InstancePhase::ContinuousMode])?;
        self.phase = InstancePhase::Terminated;
        Ok(())
    }

    pub(crate) fn require_continuous(&self, op: &'static str) -> Result<()> {
        self.require(op, &[InstancePhase::ContinuousMode])
    }
}

impl<M: NativeModel> ModelInstance for MeInstance<M> {
    fn description(&self) -> &ModelDescription {
        &self.desc
    }

    fn kind(&self) -> ModelKind {
        ModelKind::ModelExchange
    }

    fn phase(&self) -> InstancePhase {
        self.phase
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn setup_experiment(&mut self, t_start: f64, t_stop: Option<f64>) -> Result<()> {
        self.setup(t_start, t_stop)
    }

    fn enter_initialization_mode(&mut self) -> Result<()> {
        self.enter_init()
    }

    fn exit_initialization_mode(&mut self) -> Result<()> {
        self.exit_init()
    }

    fn set_real(&mut self, vrs: &[ValueReference], values: &[f64]) -> Result<()> {
        let desc = Arc::clone(&self.desc);
        self.set_real_checked(&desc, vrs, values)
    }

    fn get_real(&mut self, vrs: &[ValueReference]) -> Result<Vec<f64>> {
        self.get_real_unchecked(vrs)
    }

    fn set_time(&mut self, t: f64) -> Result<()> {
        self.require_continuous("set_time")?;
        if !t.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        if t != self.t {
            self.t = t;
            self.dirty = true;
        }
        Ok(())
    }

    fn set_continuous_states(&mut self, x: &[f64]) -> Result<()> {
        self.require_continuous("set_continuous_states")?;
        if x.len() != self.state_idx.len() {
            return Err(Error::LengthMismatch {
                expected: self.state_idx.len(),
                got: x.len(),
            });
        }
        check_finite(x, "continuous states")?;
        self.write_states(x);
        Ok(())
    }

    fn get_continuous_states(&self) -> Result<Vec<f64>> {
        Ok(self.states())
    }

    fn get_derivatives(&mut self) -> Result<Vec<f64>> {
        self.require_continuous("get_derivatives")?;
        Ok(self.derivatives())
    }

    fn get_event_indicators(&mut self) -> Result<Vec<f64>> {
        self.require_continuous("get_event_indicators")?;
        Ok(self.indicators())
    }

    fn update_discrete_states(&mut self) -> Result<()> {
        self.require_continuous("update_discrete_states")?;
        self.update_modes();
        Ok(())
    }

    fn do_step(&mut self, _t: f64, _h: f64) -> Result<()> {
        Err(Error::WrongKind("do_step"))
    }

    fn get_directional_derivative(
        &mut self,
        unknown_vrs: &[ValueReference],
        known_vrs: &[ValueReference],
        seed: &[f64],
    ) -> Result<Vec<f64>> {
        let desc = Arc::clone(&self.desc);
        self.directional_derivative(&desc, unknown_vrs, known_vrs, seed)
    }

    fn get_state(&self) -> Result<StateSnapshot> {
        self.snapshot(&self.desc)
    }

    fn set_state(&mut self, snapshot: &StateSnapshot) -> Result<()> {
        let desc = Arc::clone(&self.desc);
        self.restore(&desc, snapshot)
    }

    fn reset(&mut self) {
        self.do_reset();
    }

    fn terminate(&mut self) -> Result<()> {
        self.do_terminate()
    }
}

/// Factory producing [`MeInstance`]s of one native model.
#[derive(Debug, Clone)]
pub struct MeFactory<M: NativeModel> {
    model: M,
    desc: Arc<ModelDescription>,
}

impl<M: NativeModel> MeFactory<M> {
    pub fn new(model: M, desc: ModelDescription) -> Result<Self> {
        desc.validate()?;
        if !desc.kind.supports_me() {
            return Err(Error::InvalidDescription(
                "model-exchange factory needs an ME description".into(),
            ));
        }
        Ok(Self {
            model,
            desc: Arc::new(desc),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn instantiate_me(&self) -> Result<MeInstance<M>> {
        MeInstance::new(self.model.clone(), Arc::clone(&self.desc))
    }
}

impl<M: NativeModel> ModelFactory for MeFactory<M> {
    fn description(&self) -> Arc<ModelDescription> {
        Arc::clone(&self.desc)
    }

    fn instantiate(&self) -> Result<Box<dyn ModelInstance>> {
        Ok(Box::new(self.instantiate_me()?))
    }
}
