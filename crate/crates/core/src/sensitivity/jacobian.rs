use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ModelDescription, ModelInstance, ModelKind, ValueReference};

/// How model Jacobians are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianProvider {
    /// Model-provided directional derivatives, one call per unit seed.
    #[default]
    DirectionalDerivative,
    /// Central differences with step `h_rel·max(1, |u|)`.
    FiniteDifference { h_rel: f64 },
}

impl JacobianProvider {
    pub const DEFAULT_FD_STEP: f64 = 1e-6;

    pub fn finite_difference() -> Self {
        JacobianProvider::FiniteDifference {
            h_rel: Self::DEFAULT_FD_STEP,
        }
    }

    /// Falls back to finite differences when the model lacks directional
    /// derivatives.
    pub fn effective(self, desc: &ModelDescription) -> Self {
        match self {
            JacobianProvider::DirectionalDerivative if !desc.provides_directional_derivative => {
                Self::finite_difference()
            }
            other => other,
        }
    }

    pub fn check(self, desc: &ModelDescription, kind: ModelKind) -> Result<()> {
        match self {
            JacobianProvider::DirectionalDerivative if !desc.provides_directional_derivative => {
                Err(Error::Capability("directional derivatives"))
            }
            JacobianProvider::FiniteDifference { h_rel } if !(h_rel > 0.0 && h_rel.is_finite()) => Err(
                Error::InvalidArgument(format!("finite-difference step must be positive, got {h_rel}")),
            ),
            JacobianProvider::FiniteDifference { .. } if kind == ModelKind::CoSimulation && !desc.can_get_set_state => {
                Err(Error::Capability(
                    "get/set state (finite differences on a co-simulation model)",
                ))
            }
            _ => Ok(()),
        }
    }
}

fn fd_step(h_rel: f64, u: f64) -> f64 {
    h_rel * u.abs().max(1.0)
}

fn directional_matrix(
    inst: &mut dyn ModelInstance,
    unknown: &[ValueReference],
    known: &[ValueReference],
) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(unknown.len(), known.len());
    let mut seed = vec![0.0; known.len()];
    for c in 0..known.len() {
        seed[c] = 1.0;
        let col = inst.get_directional_derivative(unknown, known, &seed)?;
        seed[c] = 0.0;
        j.set_column(c, &nalgebra::DVector::from_vec(col));
    }
    Ok(j)
}

/// `∂ẋ/∂x` of an ME instance at its current time and state, or `∂y/∂u` of a
/// CS instance at its current communication point (instantaneous; see
/// [`cs_jacobian`] for the macro-step variant).
pub fn model_jacobian(inst: &mut dyn ModelInstance, provider: JacobianProvider) -> Result<DMatrix<f64>> {
    match inst.kind() {
        ModelKind::CoSimulation => match provider {
            JacobianProvider::DirectionalDerivative => cs_jacobian(inst, provider, 0.0),
            JacobianProvider::FiniteDifference { .. } => Err(Error::InvalidArgument(
                "finite differences on a co-simulation model need a macro step (use cs_jacobian)".into(),
            )),
        },
        _ => me_jacobian(inst, provider),
    }
}

fn me_jacobian(inst: &mut dyn ModelInstance, provider: JacobianProvider) -> Result<DMatrix<f64>> {
    provider.check(inst.description(), ModelKind::ModelExchange)?;
    match provider {
        JacobianProvider::DirectionalDerivative => {
            let d = inst.description();
            let (unknown, known) = (d.derivative_vrs.clone(), d.state_vrs.clone());
            directional_matrix(inst, &unknown, &known)
        }
        JacobianProvider::FiniteDifference { h_rel } => {
            let x = inst.get_continuous_states()?;
            let n = x.len();
            let mut j = DMatrix::zeros(n, n);
            let mut probe = x.clone();
            let result = (|| {
                for c in 0..n {
                    let h = fd_step(h_rel, x[c]);
                    probe[c] = x[c] + h;
                    inst.set_continuous_states(&probe)?;
                    let up = inst.get_derivatives()?;
                    probe[c] = x[c] - h;
                    inst.set_continuous_states(&probe)?;
                    let down = inst.get_derivatives()?;
                    probe[c] = x[c];
                    for r in 0..n {
                        j[(r, c)] = (up[r] - down[r]) / (2.0 * h);
                    }
                }
                Ok(())
            })();
            inst.set_continuous_states(&x)?;
            result.map(|()| j)
        }
    }
}

/// `∂y(t+h)/∂u(t)` of a CS instance. Directional derivatives give the
/// instantaneous `∂y(t)/∂u(t)`, a first-order approximation in `h`; finite
/// differences probe full macro steps and restore a snapshot afterwards.
pub fn cs_jacobian(inst: &mut dyn ModelInstance, provider: JacobianProvider, h: f64) -> Result<DMatrix<f64>> {
    if inst.kind() != ModelKind::CoSimulation {
        return Err(Error::WrongKind("co-simulation Jacobian of a model-exchange instance"));
    }
    provider.check(inst.description(), ModelKind::CoSimulation)?;
    let d = inst.description();
    let (outputs, inputs) = (d.output_vrs.clone(), d.input_vrs.clone());
    match provider {
        JacobianProvider::DirectionalDerivative => directional_matrix(inst, &outputs, &inputs),
        JacobianProvider::FiniteDifference { h_rel } => {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!("macro step must be positive, got {h}")));
            }
            let snap = inst.get_state()?;
            let t = inst.time();
            let u = inst.get_real(&inputs)?;
            let mut j = DMatrix::zeros(outputs.len(), inputs.len());
            let probe = |inst: &mut dyn ModelInstance, c: usize, value: f64| -> Result<Vec<f64>> {
                inst.set_real(&inputs[c..=c], &[value])?;
                inst.do_step(t, h)?;
                let y = inst.get_real(&outputs)?;
                inst.set_state(&snap)?;
                Ok(y)
            };
            for c in 0..inputs.len() {
                let step = fd_step(h_rel, u[c]);
                let up = probe(inst, c, u[c] + step)?;
                let down = probe(inst, c, u[c] - step)?;
                for r in 0..outputs.len() {
                    j[(r, c)] = (up[r] - down[r]) / (2.0 * step);
                }
            }
            inst.set_state(&snap)?;
            Ok(j)
        }
    }
}

/// `Jᵀ·w`.
pub fn vjp(inst: &mut dyn ModelInstance, provider: JacobianProvider, upstream: &[f64]) -> Result<Vec<f64>> {
    let j = model_jacobian(inst, provider)?;
    if upstream.len() != j.nrows() {
        return Err(Error::Dimension {
            context: "vjp upstream",
            expected: j.nrows(),
            got: upstream.len(),
        });
    }
    Ok(j.tr_mul(&nalgebra::DVector::from_column_slice(upstream))
        .as_slice()
        .to_vec())
}

/// `J·s`; a single model call with directional derivatives.
pub fn jvp(inst: &mut dyn ModelInstance, provider: JacobianProvider, seed: &[f64]) -> Result<Vec<f64>> {
    if provider == JacobianProvider::DirectionalDerivative {
        provider.check(inst.description(), inst.kind())?;
        let d = inst.description();
        let (unknown, known) = match inst.kind() {
            ModelKind::CoSimulation => (d.output_vrs.clone(), d.input_vrs.clone()),
            _ => (d.derivative_vrs.clone(), d.state_vrs.clone()),
        };
        return inst.get_directional_derivative(&unknown, &known, seed);
    }
    let j = model_jacobian(inst, provider)?;
    if seed.len() != j.ncols() {
        return Err(Error::Dimension {
            context: "jvp seed",
            expected: j.ncols(),
            got: seed.len(),
        });
    }
    Ok((j * nalgebra::DVector::from_column_slice(seed)).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{initialize, ModelInstance};
    use crate::models::{make_friction_pendulum, make_frictionless_pendulum, wrap_me_as_cs, PendulumParams};
    use crate::ode::SolverConfig;
    use approx::assert_abs_diff_eq;

    fn frictionless(x: [f64; 2]) -> Box<dyn ModelInstance> {
        let mut inst = make_frictionless_pendulum(&PendulumParams::fmu())
            .unwrap()
            .instantiate_me()
            .unwrap();
        initialize(&mut inst, 0.0, None, &[]).unwrap();
        inst.set_continuous_states(&x).unwrap();
        Box::new(inst)
    }

    #[test]
    fn frictionless_directional_jacobian_is_exact() {
        let mut inst = frictionless([0.3, -0.7]);
        let j = model_jacobian(inst.as_mut(), JacobianProvider::DirectionalDerivative).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -10.0, 0.0]));
    }

    #[test]
    fn finite_difference_close_and_state_restored() {
        let mut inst = frictionless([0.3, -0.7]);
        let j = model_jacobian(inst.as_mut(), JacobianProvider::finite_difference()).unwrap();
        let exact = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -10.0, 0.0]);
        assert!((j - exact).abs().max() < 1e-5);
        assert_eq!(inst.get_continuous_states().unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn reference_sliding_velocity_partial() {
        let mut inst = make_friction_pendulum(&PendulumParams::reference())
            .unwrap()
            .instantiate_me()
            .unwrap();
        initialize(
            &mut inst,
            0.0,
            None,
            &[(ValueReference(0), 0.5), (ValueReference(1), 1.0)],
        )
        .unwrap();
        let j = model_jacobian(&mut inst, JacobianProvider::DirectionalDerivative).unwrap();
        assert_abs_diff_eq!(j[(1, 1)], 0.085335, epsilon = 1e-6);
        let fd = model_jacobian(&mut inst, JacobianProvider::finite_difference()).unwrap();
        assert!((j - fd).abs().max() < 1e-5);
    }

    #[test]
    fn vjp_examples_and_bilinearity() {
        let mut inst = frictionless([0.5, 0.0]);
        let p = JacobianProvider::DirectionalDerivative;
        assert_eq!(vjp(inst.as_mut(), p, &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(vjp(inst.as_mut(), p, &[0.0, 1.0]).unwrap(), vec![-10.0, 0.0]);
        assert_eq!(vjp(inst.as_mut(), p, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let (u, s) = ([0.3, -1.2], [2.0, 0.7]);
        let lhs: f64 = vjp(inst.as_mut(), p, &u)
            .unwrap()
            .iter()
            .zip(&s)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = jvp(inst.as_mut(), p, &s)
            .unwrap()
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn fallback_to_finite_differences() {
        let mut d =
            (*crate::model::ModelFactory::description(&make_frictionless_pendulum(&PendulumParams::fmu()).unwrap()))
                .clone();
        assert_eq!(
            JacobianProvider::DirectionalDerivative.effective(&d),
            JacobianProvider::DirectionalDerivative
        );
        d.provides_directional_derivative = false;
        assert_eq!(
            JacobianProvider::DirectionalDerivative.effective(&d),
            JacobianProvider::finite_difference()
        );
        assert!(JacobianProvider::DirectionalDerivative
            .check(&d, ModelKind::ModelExchange)
            .is_err());
    }

    #[test]
    fn cs_macro_step_jacobian_differs_by_order_h() {
        let me = make_frictionless_pendulum(&PendulumParams::fmu()).unwrap();
        let cs = wrap_me_as_cs(&me, SolverConfig::adaptive(1e-12, 1e-14)).unwrap();
        let mut inst = cs.instantiate_cs().unwrap();
        initialize(&mut inst, 0.0, None, &[]).unwrap();
        let inst: &mut dyn ModelInstance = &mut inst;
        let instantaneous = cs_jacobian(inst, JacobianProvider::DirectionalDerivative, 1e-3).unwrap();
        assert_eq!(instantaneous, DMatrix::zeros(2, 1));
        let err = |h: f64, inst: &mut dyn ModelInstance| {
            let fd = cs_jacobian(inst, JacobianProvider::finite_difference(), h).unwrap();
            (fd - &instantaneous).norm()
        };
        let e1 = err(1e-3, inst);
        let e2 = err(5e-4, inst);
        assert_abs_diff_eq!(e1, 1e-3, epsilon = 1e-6);
        assert!((e1 / e2 - 2.0).abs() < 0.05);
        assert_eq!(inst.time(), 0.0);
        assert_eq!(
            inst.get_real(&[ValueReference(0), ValueReference(1)]).unwrap(),
            vec![0.5, 0.0]
        );
    }
}
