//! FMI-2.0-style instance contract implemented by all native models.
//!
//! The call names mirror the standard (`setup_experiment`,
//! `enter_initialization_mode`, `get_derivatives`, `do_step`, ...) so that a
//! binary-backed implementation could sit behind the same trait.

mod description;
mod instance;
mod simulate;

use std::any::Any;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use description::{Causality, ModelDescription, ModelKind, ScalarVariable, ValueReference, Variability};
pub use instance::{MeFactory, MeInstance, NativeModel};
pub use simulate::{simulate, simulate_cs, InstanceSystem, Simulation};

use crate::error::{Error, Result};

/// Maximum allowed mismatch between the `t` passed to `do_step` and the
/// instance time (s).
pub const STEP_TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum InstancePhase {
    Instantiated,
    InitializationMode,
    ContinuousMode,
    Terminated,
}

/// Opaque copy of an instance's mutable state.
#[derive(Clone)]
pub struct StateSnapshot {
    lineage: u64,
    payload: Arc<dyn Any + Send + Sync>,
}

impl std::fmt::Debug for StateSnapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StateSnapshot")
            .field("lineage", &self.lineage)
            .finish_non_exhaustive()
    }
}

impl StateSnapshot {
    pub(crate) fn new<T: Any + Send + Sync>(lineage: u64, payload: T) -> Self {
        Self {
            lineage,
            payload: Arc::new(payload),
        }
    }

    pub(crate) fn payload<T: Any>(&self, lineage: u64) -> Result<&T> {
        if self.lineage != lineage {
            return Err(Error::ForeignSnapshot);
        }
        self.payload.downcast_ref::<T>().ok_or(Error::ForeignSnapshot)
    }
}

static NEXT_LINEAGE: AtomicU64 = AtomicU64::new(1);

pub(crate) fn next_lineage() -> u64 {
    NEXT_LINEAGE.fetch_add(1, Ordering::Relaxed)
}

/// Runtime contract of a model instance (ME or CS flavour).
///
/// Operations that a flavour does not support return [`Error::WrongKind`];
/// operations called in the wrong lifecycle phase return [`Error::Phase`].
/// An instance is used from one thread at a time.
pub trait ModelInstance: Send {
    fn description(&self) -> &ModelDescription;
    /// `ModelExchange` or `CoSimulation`: the API this instance exposes.
    fn kind(&self) -> ModelKind;
    fn phase(&self) -> InstancePhase;
    fn time(&self) -> f64;

    fn setup_experiment(&mut self, t_start: f64, t_stop: Option<f64>) -> Result<()>;
    fn enter_initialization_mode(&mut self) -> Result<()>;
    fn exit_initialization_mode(&mut self) -> Result<()>;

    fn set_real(&mut self, vrs: &[ValueReference], values: &[f64]) -> Result<()>;
    fn get_real(&mut self, vrs: &[ValueReference]) -> Result<Vec<f64>>;

    fn set_time(&mut self, t: f64) -> Result<()>;
    fn set_continuous_states(&mut self, x: &[f64]) -> Result<()>;
    fn get_continuous_states(&self) -> Result<Vec<f64>>;
    fn get_derivatives(&mut self) -> Result<Vec<f64>>;
    fn get_event_indicators(&mut self) -> Result<Vec<f64>>;
    /// Event iteration after a located state event (discrete modes may change,
    /// and with them the continuous states).
    fn update_discrete_states(&mut self) -> Result<()>;

    fn do_step(&mut self, t: f64, h: f64) -> Result<()>;

    fn get_directional_derivative(
        &mut self,
        unknown_vrs: &[ValueReference],
        known_vrs: &[ValueReference],
        seed: &[f64],
    ) -> Result<Vec<f64>>;

    fn get_state(&self) -> Result<StateSnapshot>;
    fn set_state(&mut self, snapshot: &StateSnapshot) -> Result<()>;

    fn reset(&mut self);
    fn terminate(&mut self) -> Result<()>;
}

/// Constructor for instances of one model.
pub trait ModelFactory: Send + Sync {
    fn description(&self) -> Arc<ModelDescription>;
    fn instantiate(&self) -> Result<Box<dyn ModelInstance>>;
}

/// Instantiates `description` through `factory`, checking that both agree.
pub fn instantiate(description: &ModelDescription, factory: &dyn ModelFactory) -> Result<Box<dyn ModelInstance>> {
    description.validate()?;
    let own = factory.description();
    if own.guid != description.guid {
        return Err(Error::InvalidDescription(format!(
            "guid `{}` does not match model `{}` ({})",
            description.guid, own.model_name, own.guid
        )));
    }
    let compatible = match own.kind {
        ModelKind::ModelExchange => description.kind.supports_me(),
        ModelKind::CoSimulation => description.kind.supports_cs(),
        ModelKind::Both => true,
    };
    if !compatible {
        return Err(Error::Unsupported(format!(
            "model kind {:?} cannot be instantiated as {:?}",
            description.kind, own.kind
        )));
    }
    factory.instantiate()
}

/// Runs setup → initialization → continuous mode, writing `starts` during
/// initialization.
pub fn initialize(
    inst: &mut dyn ModelInstance,
    t_start: f64,
    t_stop: Option<f64>,
    starts: &[(ValueReference, f64)],
) -> Result<()> {
    inst.setup_experiment(t_start, t_stop)?;
    inst.enter_initialization_mode()?;
    if !starts.is_empty() {
        let (vrs, vals): (Vec<_>, Vec<_>) = starts.iter().copied().unzip();
        inst.set_real(&vrs, &vals)?;
    }
    inst.exit_initialization_mode()
}
