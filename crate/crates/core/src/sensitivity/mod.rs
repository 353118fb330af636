//! Model Jacobians and loss gradients of parametric ODEs.

mod dynamics;
mod gradient;
mod jacobian;
mod loss;

pub use dynamics::{Bound, Linearization, ParametricDynamics};
pub use gradient::{
    finite_difference_gradient, finite_difference_loss_gradient, forward_sensitivity_dim, grad_backward_adjoint,
    grad_discretize_backprop, grad_forward_sensitivity, loss_gradient, loss_value, rollout, ForwardSensitivitySystem,
    GradientMethod, GradientProblem, LossGradient,
};
pub use jacobian::{cs_jacobian, jvp, model_jacobian, vjp, JacobianProvider};
pub use loss::{MseLoss, TerminalLoss, TrajectoryLoss};
