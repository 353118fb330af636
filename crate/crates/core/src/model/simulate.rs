use super::{InstancePhase, ModelInstance, ModelKind, ValueReference};
use crate::error::{Error, Result};
use crate::ode::{solve, OdeSystem, SolverConfig, Trajectory};

/// Drives an ME instance through its public API as an [`OdeSystem`].
pub struct InstanceSystem<'a> {
    inst: &'a mut dyn ModelInstance,
    n_x: usize,
    n_z: usize,
    record: Vec<ValueReference>,
    recorded: Vec<Vec<f64>>,
}

impl<'a> InstanceSystem<'a> {
    pub fn new(inst: &'a mut dyn ModelInstance) -> Result<Self> {
        if inst.kind() != ModelKind::ModelExchange {
            return Err(Error::WrongKind("ODE integration of a co-simulation instance"));
        }
        let n_x = inst.description().n_states();
        let n_z = inst.description().n_event_indicators;
        Ok(Self {
            inst,
            n_x,
            n_z,
            record: Vec::new(),
            recorded: Vec::new(),
        })
    }

    /// Variables read at every saved sample.
    pub fn recording(mut self, vrs: &[ValueReference]) -> Self {
        self.record = vrs.to_vec();
        self
    }

    fn load(&mut self, t: f64, x: &[f64]) -> Result<()> {
        self.inst.set_time(t)?;
        self.inst.set_continuous_states(x)
    }
}

impl OdeSystem for InstanceSystem<'_> {
    fn dim(&self) -> usize {
        self.n_x
    }

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.load(t, x)?;
        dx.copy_from_slice(&self.inst.get_derivatives()?);
        Ok(())
    }

    fn n_events(&self) -> usize {
        self.n_z
    }

    fn event_indicators(&mut self, t: f64, x: &[f64], z: &mut [f64]) -> Result<()> {
        self.load(t, x)?;
        z.copy_from_slice(&self.inst.get_event_indicators()?);
        Ok(())
    }

    fn handle_event(&mut self, t: f64, x: &mut [f64]) -> Result<()> {
        self.load(t, x)?;
        self.inst.update_discrete_states()?;
        x.copy_from_slice(&self.inst.get_continuous_states()?);
        Ok(())
    }

    fn on_sample(&mut self, t: f64, x: &[f64]) -> Result<()> {
        if !self.record.is_empty() {
            self.load(t, x)?;
            let values = self.inst.get_real(&self.record)?;
            self.recorded.push(values);
        }
        Ok(())
    }
}

/// Result of [`simulate`]: the state trajectory plus recorded variables.
#[derive(Debug, Clone, Default)]
pub struct Simulation {
    pub trajectory: Trajectory,
    /// One row per saved sample, one column per recorded variable.
    pub recorded: Vec<Vec<f64>>,
}

/// Integrates an initialized ME instance from its current state and time.
/// The instance is left at the final state.
pub fn simulate(
    inst: &mut dyn ModelInstance,
    t_end: f64,
    cfg: &SolverConfig,
    save_at: Option<&[f64]>,
    record: &[ValueReference],
) -> Result<Simulation> {
    if inst.phase() != InstancePhase::ContinuousMode {
        return Err(Error::Phase {
            op: "simulate",
            phase: inst.phase(),
        });
    }
    let t0 = inst.time();
    let x0 = inst.get_continuous_states()?;
    let mut sys = InstanceSystem::new(inst)?.recording(record);
    let trajectory = solve(&mut sys, &x0, (t0, t_end), cfg, save_at)?;
    let recorded = std::mem::take(&mut sys.recorded);
    if let Some(x) = trajectory.last_state() {
        let x = x.to_vec();
        sys.load(t_end, &x)?;
    }
    Ok(Simulation { trajectory, recorded })
}

/// Advances an initialized CS instance in macro steps of `h`, reading
/// `record` after every step (and once at the start).
pub fn simulate_cs(inst: &mut dyn ModelInstance, t_end: f64, h: f64, record: &[ValueReference]) -> Result<Simulation> {
    if inst.kind() != ModelKind::CoSimulation {
        return Err(Error::WrongKind("macro stepping of a model-exchange instance"));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("macro step must be positive, got {h}")));
    }
    let t0 = inst.time();
    let n = ((t_end - t0) / h - 1e-9).ceil().max(0.0) as usize;
    let mut sim = Simulation::default();
    let first = inst.get_real(record)?;
    sim.trajectory.times.push(t0);
    sim.trajectory.states.push(first.clone());
    sim.recorded.push(first);
    for k in 0..n {
        let t = inst.time();
        let t_next = if k + 1 == n { t_end } else { t0 + (k + 1) as f64 * h };
        inst.do_step(t, t_next - t)?;
        let y = inst.get_real(record)?;
        sim.trajectory.times.push(t_next);
        sim.trajectory.states.push(y.clone());
        sim.recorded.push(y);
    }
    Ok(sim)
}
