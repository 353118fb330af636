//! Feed-forward networks with reverse-mode gradients, including layers that
//! wrap a model instance.

mod chain;
mod checkpoint;
mod init;
mod layer;

pub use chain::{Chain, LayerNode, ParamSlot, ParamVector, Tape};
pub use checkpoint::{Checkpoint, LayerDescriptor};
pub use init::{init_dense_params, init_params, InitScheme};
pub use layer::{
    cs_layer_forward, dense_forward, me_layer_forward, Activation, CsLayer, DenseLayer, DenseSpec, MeLayer,
};
