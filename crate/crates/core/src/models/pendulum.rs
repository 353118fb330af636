//! One-mass spring pendulum, with and without stick-slip friction.
//!
//! `ṡ = v`, `v̇ = (c·(s0 + s_rel − s) + f_ext − f_fric(v)) / m`.

use crate::error::{Error, Result};
use crate::model::{
    Causality, MeFactory, ModelDescription, ModelKind, NativeModel, ScalarVariable, ValueReference, Variability,
};

pub const FRICTIONLESS_GUID: &str = "{6b1f2c3e-5d2a-4c1b-9a51-0f3e7c2d1a01}";
pub const FRICTION_GUID: &str = "{6b1f2c3e-5d2a-4c1b-9a51-0f3e7c2d1a02}";

// Variable layout shared by both models.
const S: usize = 0;
const V: usize = 1;
const A: usize = 2;
const M: usize = 3;
const C: usize = 4;
const S_REL: usize = 5;
const S0: usize = 6;
const F_EXT: usize = 7;
const F_COULOMB: usize = 8;
const F_PROP: usize = 9;
const F_STRIBECK: usize = 10;
const F_EXP: usize = 11;

/// |v| below which a velocity zero crossing counts as "at rest".
const REST_VELOCITY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PendulumParams {
    /// kg
    pub m: f64,
    /// N/m
    pub c: f64,
    /// m
    pub s_rel: f64,
    /// m
    pub s0: f64,
    /// N
    pub f_coulomb: f64,
    /// N·s/m
    pub f_prop: f64,
    /// N
    pub f_stribeck: f64,
    /// s/m
    pub f_exp: f64,
}

impl PendulumParams {
    /// Reference system with friction.
    pub fn reference() -> Self {
        Self {
            m: 1.0,
            c: 10.0,
            s_rel: 1.0,
            s0: 0.0,
            f_coulomb: 0.25,
            f_prop: 0.05,
            f_stribeck: 0.5,
            f_exp: 2.0,
        }
    }

    /// Frictionless white-box model carrying a 0.1 m anchor displacement.
    pub fn fmu() -> Self {
        Self {
            m: 1.0,
            c: 10.0,
            s_rel: 1.0,
            s0: 0.1,
            f_coulomb: 0.0,
            f_prop: 0.0,
            f_stribeck: 0.0,
            f_exp: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.m,
            self.c,
            self.s_rel,
            self.s0,
            self.f_coulomb,
            self.f_prop,
            self.f_stribeck,
            self.f_exp,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pendulum parameter".into()));
        }
        if !(self.m > 0.0 && self.c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mass and spring constant must be positive (m = {}, c = {})",
                self.m, self.c
            )));
        }
        if self.f_coulomb < 0.0 || self.f_prop < 0.0 || self.f_stribeck < 0.0 || self.f_exp < 0.0 {
            return Err(Error::InvalidArgument(
                "friction coefficients must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Static friction threshold (the v → 0⁺ limit of the sliding friction).
    pub fn breakaway_force(&self) -> f64 {
        self.f_coulomb + self.f_stribeck
    }

    /// Position where the spring is relaxed.
    pub fn equilibrium(&self) -> f64 {
        self.s0 + self.s_rel
    }

    /// Mechanical energy `½mv² + ½c(s − s0 − s_rel)²`.
    pub fn energy(&self, s: f64, v: f64) -> f64 {
        let d = s - self.equilibrium();
        0.5 * self.m * v * v + 0.5 * self.c * d * d
    }
}

/// Sliding friction force; odd in `v`, zero at rest (sticking is a mode of
/// the model, not part of this curve).
pub fn friction_force(v: f64, p: &PendulumParams) -> f64 {
    if v == 0.0 {
        return 0.0;
    }
    let speed = v.abs();
    let magnitude = p.f_coulomb + p.f_prop * speed + p.f_stribeck * (-p.f_exp * speed).exp();
    magnitude.copysign(v)
}

/// `d friction_force / dv` away from `v = 0`.
pub fn friction_slope(v: f64, p: &PendulumParams) -> f64 {
    p.f_prop - p.f_stribeck * p.f_exp * (-p.f_exp * v.abs()).exp()
}

fn params_from(vars: &[f64], with_friction: bool) -> PendulumParams {
    let f = |i: usize| if with_friction { vars[i] } else { 0.0 };
    PendulumParams {
        m: vars[M],
        c: vars[C],
        s_rel: vars[S_REL],
        s0: vars[S0],
        f_coulomb: f(F_COULOMB),
        f_prop: f(F_PROP),
        f_stribeck: f(F_STRIBECK),
        f_exp: f(F_EXP),
    }
}

fn driving_force(vars: &[f64]) -> f64 {
    vars[C] * (vars[S0] + vars[S_REL] - vars[S]) + vars[F_EXT]
}

fn description(model_name: &str, guid: &str, p: &PendulumParams, with_friction: bool) -> ModelDescription {
    use Causality::*;
    use Variability::*;
    let mut variables = vec![
        ScalarVariable::new("mass.s", S as u32, Local, Continuous, Some(0.5)),
        ScalarVariable::new("mass.v", V as u32, Local, Continuous, Some(0.0)),
        ScalarVariable::new("mass.a", A as u32, Output, Continuous, None),
        ScalarVariable::new("mass.m", M as u32, Parameter, Fixed, Some(p.m)),
        ScalarVariable::new("spring.c", C as u32, Parameter, Fixed, Some(p.c)),
        ScalarVariable::new("spring.s_rel", S_REL as u32, Parameter, Fixed, Some(p.s_rel)),
        ScalarVariable::new("fixed.s0", S0 as u32, Parameter, Fixed, Some(p.s0)),
        ScalarVariable::new("force.f", F_EXT as u32, Input, Continuous, Some(0.0)),
    ];
    if with_friction {
        variables.extend([
            ScalarVariable::new(
                "friction.f_coulomb",
                F_COULOMB as u32,
                Parameter,
                Fixed,
                Some(p.f_coulomb),
            ),
            ScalarVariable::new("friction.f_prop", F_PROP as u32, Parameter, Fixed, Some(p.f_prop)),
            ScalarVariable::new(
                "friction.f_stribeck",
                F_STRIBECK as u32,
                Parameter,
                Fixed,
                Some(p.f_stribeck),
            ),
            ScalarVariable::new("friction.f_exp", F_EXP as u32, Parameter, Fixed, Some(p.f_exp)),
        ]);
    }
    let vr = |i: usize| ValueReference(i as u32);
    ModelDescription {
        model_name: model_name.into(),
        guid: guid.into(),
        kind: ModelKind::ModelExchange,
        variables,
        state_vrs: vec![vr(S), vr(V)],
        derivative_vrs: vec![vr(V), vr(A)],
        input_vrs: vec![vr(F_EXT)],
        output_vrs: vec![vr(A)],
        provides_directional_derivative: true,
        can_get_set_state: true,
        n_event_indicators: if with_friction { 2 } else { 0 },
    }
}

fn check_common(vars: &[f64], with_friction: bool) -> Result<()> {
    params_from(vars, with_friction).validate()
}

/// Linear oscillator without friction (the white-box "FMU" model).
#[derive(Debug, Clone, Default)]
pub struct FrictionlessPendulum;

impl NativeModel for FrictionlessPendulum {
    fn evaluate(&self, _t: f64, vars: &mut [f64]) {
        vars[A] = driving_force(vars) / vars[M];
    }

    fn partial(&self, _t: f64, vars: &[f64], unknown: usize, known: usize) -> f64 {
        if unknown == known {
            return 1.0;
        }
        if unknown != A {
            return 0.0;
        }
        let m = vars[M];
        match known {
            S => -vars[C] / m,
            M => -driving_force(vars) / (m * m),
            C => (vars[S0] + vars[S_REL] - vars[S]) / m,
            S_REL | S0 => vars[C] / m,
            F_EXT => 1.0 / m,
            _ => 0.0,
        }
    }

    fn check_values(&self, vars: &[f64]) -> Result<()> {
        check_common(vars, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum FrictionMode {
    #[default]
    SlidingForward,
    SlidingBackward,
    Stuck,
}

impl FrictionMode {
    fn direction(self) -> f64 {
        match self {
            FrictionMode::SlidingForward => 1.0,
            FrictionMode::SlidingBackward => -1.0,
            FrictionMode::Stuck => 0.0,
        }
    }

    fn sliding(direction: f64) -> Self {
        if direction >= 0.0 {
            FrictionMode::SlidingForward
        } else {
            FrictionMode::SlidingBackward
        }
    }
}

/// Pendulum with Coulomb/viscous/Stribeck friction and stick-slip.
///
/// The sliding direction is a discrete mode: between events the friction
/// force is the smooth branch of the current direction, so the right-hand
/// side has no jump when `v` passes through zero inside a step.
/// While stuck the mass stays at rest (`v == 0` exactly) until the driving
/// force exceeds the breakaway force `f_coulomb + f_stribeck`.
/// Event indicators: `z1 = v` while sliding, `z2 = |F| − breakaway` while stuck.
#[derive(Debug, Clone, Default)]
pub struct FrictionPendulum {
    mode: FrictionMode,
}

impl FrictionPendulum {
    pub fn mode(&self) -> FrictionMode {
        self.mode
    }
}

/// Friction on the branch of `direction` (±1), continued past `v = 0`.
fn branch_friction(v: f64, direction: f64, p: &PendulumParams) -> f64 {
    let w = direction * v;
    direction * (p.f_coulomb + p.f_prop * w + p.f_stribeck * (-p.f_exp * w).exp())
}

impl NativeModel for FrictionPendulum {
    fn evaluate(&self, _t: f64, vars: &mut [f64]) {
        vars[A] = match self.mode {
            FrictionMode::Stuck => 0.0,
            mode => {
                let p = params_from(vars, true);
                (driving_force(vars) - branch_friction(vars[V], mode.direction(), &p)) / p.m
            }
        };
    }

    fn event_indicators(&self, _t: f64, vars: &[f64], z: &mut [f64]) {
        let breakaway = vars[F_COULOMB] + vars[F_STRIBECK];
        match self.mode {
            FrictionMode::Stuck => {
                z[0] = 0.0;
                z[1] = driving_force(vars).abs() - breakaway;
            }
            _ => {
                z[0] = vars[V];
                z[1] = -1.0;
            }
        }
    }

    fn update_modes(&mut self, _t: f64, vars: &mut [f64]) {
        let breakaway = vars[F_COULOMB] + vars[F_STRIBECK];
        let force = driving_force(vars);
        let v = vars[V];
        if v.abs() > REST_VELOCITY {
            self.mode = FrictionMode::sliding(v);
            return;
        }
        vars[V] = 0.0;
        self.mode = if force.abs() <= breakaway {
            FrictionMode::Stuck
        } else {
            FrictionMode::sliding(force)
        };
    }

    fn reset_modes(&mut self) {
        self.mode = FrictionMode::default();
    }

    fn partial(&self, t: f64, vars: &[f64], unknown: usize, known: usize) -> f64 {
        if unknown == known {
            return 1.0;
        }
        if unknown != A || self.mode == FrictionMode::Stuck {
            return 0.0;
        }
        let p = params_from(vars, true);
        let dir = self.mode.direction();
        let v = vars[V];
        let m = p.m;
        let decay = (-p.f_exp * dir * v).exp();
        match known {
            V => -(p.f_prop - p.f_stribeck * p.f_exp * decay) / m,
            M => -(driving_force(vars) - branch_friction(v, dir, &p)) / (m * m),
            F_COULOMB => -dir / m,
            F_PROP => -v / m,
            F_STRIBECK => -dir * decay / m,
            F_EXP => p.f_stribeck * v * decay / m,
            _ => FrictionlessPendulum.partial(t, vars, unknown, known),
        }
    }

    fn check_values(&self, vars: &[f64]) -> Result<()> {
        check_common(vars, true)
    }
}

/// Description and factory of the frictionless pendulum.
pub fn make_frictionless_pendulum(p: &PendulumParams) -> Result<MeFactory<FrictionlessPendulum>> {
    p.validate()?;
    MeFactory::new(
        FrictionlessPendulum,
        description("SpringPendulum", FRICTIONLESS_GUID, p, false),
    )
}

/// Description and factory of the stick-slip friction pendulum.
pub fn make_friction_pendulum(p: &PendulumParams) -> Result<MeFactory<FrictionPendulum>> {
    p.validate()?;
    MeFactory::new(
        FrictionPendulum::default(),
        description("SpringFrictionPendulum", FRICTION_GUID, p, true),
    )
}
