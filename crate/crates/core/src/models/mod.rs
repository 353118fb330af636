//! Built-in native models.

mod cs;
mod pendulum;

pub use cs::{wrap_me_as_cs, CsFactory, CsInstance};
pub use pendulum::{
    friction_force, friction_slope, make_friction_pendulum, make_frictionless_pendulum, FrictionMode, FrictionPendulum,
    FrictionlessPendulum, PendulumParams, FRICTIONLESS_GUID, FRICTION_GUID,
};
