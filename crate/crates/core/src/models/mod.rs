//! Model specifications, parameter layout, initialisation and training.

mod forward;
mod init;
mod spec;
mod train;
pub mod zoo;

pub use forward::{forward_loss, LossGraph};
pub use init::{initialize_parameters, InitKind, InitScheme, NORMAL_INIT_VARIANCE};
pub use spec::{
    build_model, Layer, LossKind, Model, ModelSpec, ParamRole, ParamSlot, ParameterSet,
};
pub use train::{train_model, TrainConfig, TrainOutcome};
