#![allow(dead_code)]

use neuralfmu::model::{
    Causality, InstancePhase, ModelDescription, ModelFactory, ModelInstance, ModelKind, ScalarVariable, StateSnapshot,
    ValueReference, Variability,
};
use neuralfmu::models::{make_friction_pendulum, make_frictionless_pendulum, wrap_me_as_cs, PendulumParams};
use neuralfmu::ode::SolverConfig;
use neuralfmu::Error;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

const NAME_CHARS: &[char] = &[
    'a', 'b', 'x', 'Z', '_', '.', '[', ']', '0', '7', ' ', '&', '<', '>', '"', '\'', '\t', '\n', 'é', 'ß', 'Ω', 'λ',
    '中', '🙂',
];

fn random_name(rng: &mut impl Rng, len: usize) -> String {
    (0..len).map(|_| *NAME_CHARS.choose(rng).unwrap()).collect()
}

fn random_f64(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..6) {
        0 => 0.0,
        1 => rng.random_range(-1.0..1.0),
        2 => rng.random_range(-1e6..1e6),
        3 => rng.random_range(-1.0..1.0) * 1e-300,
        4 => f64::from_bits(rng.random::<u64>() & !(0x7ff << 52) | (rng.random_range(1u64..0x7fe) << 52)),
        _ => 1.0 / 3.0,
    }
}

/// Structurally valid description with random names, value references,
/// attributes and state/derivative/output lists.
pub fn random_description(rng: &mut impl Rng) -> ModelDescription {
    let n = rng.random_range(0..12usize);
    let mut vrs: Vec<u32> = (0..n as u32 * 3 + 1).collect();
    vrs.shuffle(rng);
    let mut names = std::collections::HashSet::new();
    let mut variables = Vec::with_capacity(n);
    for i in 0..n {
        let name = loop {
            let len = rng.random_range(0..6);
            let candidate = format!("{}{i}", random_name(rng, len));
            if names.insert(candidate.clone()) {
                break candidate;
            }
        };
        let causality = [
            Causality::Parameter,
            Causality::Input,
            Causality::Output,
            Causality::Local,
        ][rng.random_range(0..4)];
        let variability = [Variability::Constant, Variability::Fixed, Variability::Continuous][rng.random_range(0..3)];
        let start = rng.random_bool(0.6).then(|| random_f64(rng));
        variables.push(ScalarVariable::new(name, vrs[i], causality, variability, start));
    }
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(rng);
    let n_states = rng.random_range(0..=n / 2);
    let derivative_vrs: Vec<ValueReference> = positions[..n_states].iter().map(|&i| variables[i].vr).collect();
    let state_vrs: Vec<ValueReference> = (0..n_states).map(|_| variables[rng.random_range(0..n)].vr).collect();
    let output_vrs: Vec<ValueReference> = (0..n)
        .filter(|_| rng.random_bool(0.3))
        .map(|i| variables[i].vr)
        .collect();
    let input_vrs = variables
        .iter()
        .filter(|v| v.causality == Causality::Input)
        .map(|v| v.vr)
        .collect();
    ModelDescription {
        model_name: format!("m{}", random_name(rng, 4)),
        guid: format!("{{{:032x}}}", rng.random::<u128>()),
        kind: [ModelKind::ModelExchange, ModelKind::CoSimulation, ModelKind::Both][rng.random_range(0..3)],
        variables,
        state_vrs,
        derivative_vrs,
        input_vrs,
        output_vrs,
        provides_directional_derivative: rng.random_bool(0.5),
        can_get_set_state: rng.random_bool(0.5),
        n_event_indicators: rng.random_range(0..4),
    }
}

/// Built-in instances covering ME (both pendulums) and CS.
pub fn random_instance(rng: &mut impl Rng) -> Box<dyn ModelInstance> {
    match rng.random_range(0..3) {
        0 => make_frictionless_pendulum(&PendulumParams::fmu())
            .unwrap()
            .instantiate()
            .unwrap(),
        1 => make_friction_pendulum(&PendulumParams::reference())
            .unwrap()
            .instantiate()
            .unwrap(),
        _ => {
            let me = make_frictionless_pendulum(&PendulumParams::fmu()).unwrap();
            wrap_me_as_cs(&me, SolverConfig::adaptive(1e-8, 1e-10))
                .unwrap()
                .instantiate()
                .unwrap()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Setup(f64),
    EnterInit,
    ExitInit,
    SetTime(f64),
    SetStates(f64, f64),
    GetDerivatives,
    GetIndicators,
    UpdateDiscrete,
    DoStep(f64),
    DirectionalDerivative,
    SetParameter(f64),
    SetInput(f64),
    GetReal,
    GetState,
    SetState(usize),
    Terminate,
    Reset,
}

pub fn random_op(rng: &mut impl Rng) -> Op {
    match rng.random_range(0..17) {
        0 => Op::Setup(rng.random_range(-1.0..1.0)),
        1 => Op::EnterInit,
        2 => Op::ExitInit,
        3 => Op::SetTime(rng.random_range(0.0..2.0)),
        4 => Op::SetStates(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        5 => Op::GetDerivatives,
        6 => Op::GetIndicators,
        7 => Op::UpdateDiscrete,
        8 => Op::DoStep(rng.random_range(0.01..0.2)),
        9 => Op::DirectionalDerivative,
        10 => Op::SetParameter(rng.random_range(5.0..15.0)),
        11 => Op::SetInput(rng.random_range(-1.0..1.0)),
        12 => Op::GetReal,
        13 => Op::GetState,
        14 => Op::SetState(rng.random_range(0..4)),
        15 => Op::Terminate,
        _ => Op::Reset,
    }
}

/// Phase bookkeeping of the lifecycle contract, independent of the
/// implementation under test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub phase: InstancePhase,
    pub setup_done: bool,
}

impl Reference {
    pub fn new() -> Self {
        Self {
            phase: InstancePhase::Instantiated,
            setup_done: false,
        }
    }

    /// Whether `op` must succeed, and the reference state afterwards.
    pub fn expect(&self, op: Op, kind: ModelKind, snaps: &[(StateSnapshot, Reference)]) -> (bool, Reference) {
        use InstancePhase::*;
        let p = self.phase;
        let me = kind == ModelKind::ModelExchange;
        let mut next = *self;
        let ok = match op {
            Op::Setup(_) => p == Instantiated,
            Op::EnterInit => p == Instantiated && self.setup_done,
            Op::ExitInit => p == InitializationMode,
            Op::SetTime(_) | Op::SetStates(..) | Op::GetDerivatives | Op::GetIndicators | Op::UpdateDiscrete => {
                me && p == ContinuousMode
            }
            Op::DoStep(_) => !me && p == ContinuousMode,
            Op::DirectionalDerivative => matches!(p, InitializationMode | ContinuousMode),
            Op::SetParameter(_) => matches!(p, Instantiated | InitializationMode),
            Op::SetInput(_) => p != Terminated,
            Op::GetReal | Op::GetState | Op::Reset => true,
            Op::SetState(i) => i < snaps.len(),
            Op::Terminate => p == ContinuousMode,
        };
        if ok {
            match op {
                Op::Setup(_) => next.setup_done = true,
                Op::EnterInit => next.phase = InitializationMode,
                Op::ExitInit => next.phase = ContinuousMode,
                Op::Terminate => next.phase = Terminated,
                Op::Reset => next = Reference::new(),
                Op::SetState(i) => next = snaps[i].1,
                _ => {}
            }
        }
        (ok, next)
    }
}

pub fn all_vrs(inst: &dyn ModelInstance) -> Vec<ValueReference> {
    inst.description().variables.iter().map(|v| v.vr).collect()
}

/// Applies `op`; a new snapshot is pushed for `GetState`.
pub fn apply(
    inst: &mut dyn ModelInstance,
    op: Op,
    snaps: &mut Vec<(StateSnapshot, Reference)>,
    reference: Reference,
) -> Result<(), Error> {
    let d = inst.description().clone();
    let vr = |name: &str| d.vr_of(name).unwrap();
    match op {
        Op::Setup(t) => inst.setup_experiment(t, None),
        Op::EnterInit => inst.enter_initialization_mode(),
        Op::ExitInit => inst.exit_initialization_mode(),
        Op::SetTime(t) => inst.set_time(t),
        Op::SetStates(s, v) => inst.set_continuous_states(&[s, v]),
        Op::GetDerivatives => inst.get_derivatives().map(drop),
        Op::GetIndicators => inst.get_event_indicators().map(drop),
        Op::UpdateDiscrete => inst.update_discrete_states(),
        Op::DoStep(h) => {
            let t = inst.time();
            inst.do_step(t, h)
        }
        Op::DirectionalDerivative => inst
            .get_directional_derivative(&[vr("mass.a")], &[vr("mass.s")], &[1.0])
            .map(drop),
        Op::SetParameter(c) => inst.set_real(&[vr("spring.c")], &[c]),
        Op::SetInput(f) => inst.set_real(&[vr("force.f")], &[f]),
        Op::GetReal => inst.get_real(&all_vrs(inst)).map(drop),
        Op::GetState => inst.get_state().map(|s| snaps.push((s, reference))),
        Op::SetState(i) => match snaps.get(i) {
            Some((s, _)) => inst.set_state(s),
            None => Err(Error::InvalidArgument("no such snapshot".into())),
        },
        Op::Terminate => inst.terminate(),
        Op::Reset => {
            inst.reset();
            Ok(())
        }
    }
}

/// Observable state: phase, time and every variable value.
pub fn observe(inst: &mut dyn ModelInstance) -> (InstancePhase, f64, Vec<u64>) {
    let vrs = all_vrs(inst);
    let values = inst.get_real(&vrs).unwrap().into_iter().map(f64::to_bits).collect();
    (inst.phase(), inst.time(), values)
}

/// Runs one random call sequence; returns the first contract violation.
pub fn check_lifecycle_sequence(rng: &mut impl Rng, len: usize) -> Result<(), String> {
    let mut inst = random_instance(rng);
    let kind = inst.kind();
    let mut reference = Reference::new();
    let mut snaps = Vec::new();
    for step in 0..len {
        let op = random_op(rng);
        let (expect_ok, next) = reference.expect(op, kind, &snaps);
        let before = observe(inst.as_mut());
        let result = apply(inst.as_mut(), op, &mut snaps, reference);
        match (&result, expect_ok) {
            (Ok(()), true) => reference = next,
            (Err(_), false) => {
                let after = observe(inst.as_mut());
                if after != before {
                    return Err(format!("step {step}: failed {op:?} changed the instance ({result:?})"));
                }
            }
            (Ok(()), false) => return Err(format!("step {step}: {op:?} accepted in {:?}", reference.phase)),
            (Err(e), true) => return Err(format!("step {step}: {op:?} rejected in {:?}: {e}", reference.phase)),
        }
        if inst.phase() != reference.phase {
            return Err(format!(
                "step {step}: phase {:?} after {op:?}, expected {:?}",
                inst.phase(),
                reference.phase
            ));
        }
    }
    Ok(())
}

/// Snapshot, evolve, restore, evolve again: both evolutions must be
/// bit-identical.
pub fn check_snapshot_exact(rng: &mut impl Rng) -> Result<(), String> {
    let mut inst = random_instance(rng);
    neuralfmu::model::initialize(inst.as_mut(), 0.0, None, &[]).map_err(|e| e.to_string())?;
    let s0 = rng.random_range(0.0..2.0);
    let v0 = rng.random_range(-1.5..1.5);
    let evolve = |inst: &mut dyn ModelInstance| -> Vec<(InstancePhase, f64, Vec<u64>)> {
        let mut out = Vec::new();
        for k in 0..5 {
            if inst.kind() == ModelKind::CoSimulation {
                let t = inst.time();
                inst.do_step(t, 0.05).unwrap();
            } else {
                let x = inst.get_continuous_states().unwrap();
                let dx = inst.get_derivatives().unwrap();
                inst.set_time(inst.time() + 0.01).unwrap();
                let next: Vec<f64> = x
                    .iter()
                    .zip(&dx)
                    .map(|(a, b)| a + 0.01 * b * (k as f64 + 1.0))
                    .collect();
                inst.set_continuous_states(&next).unwrap();
            }
            out.push(observe(inst));
        }
        out
    };
    if inst.kind() == ModelKind::ModelExchange {
        inst.set_continuous_states(&[s0, v0]).map_err(|e| e.to_string())?;
    }
    let snap = inst.get_state().map_err(|e| e.to_string())?;
    let first_obs = observe(inst.as_mut());
    let a = evolve(inst.as_mut());
    inst.set_state(&snap).map_err(|e| e.to_string())?;
    if observe(inst.as_mut()) != first_obs {
        return Err("restore did not reproduce the snapshot point".into());
    }
    let b = evolve(inst.as_mut());
    if a != b {
        return Err("evolution after restore differs".into());
    }
    Ok(())
}
