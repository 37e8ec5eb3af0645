//! Gradient-inversion attacks and gradient-perturbation defenses.

mod defenses;
mod inversion;

pub use defenses::{
    gaussian_perturbation, prune_gradient, singular_direction_perturbation, PerturbationSpec,
};
pub use inversion::{
    attack, dgl_attack, gs_attack, inversion_objective, recovery_error, AttackConfig, AttackKind,
    AttackResult, AttackStatus, DummyInit, RecoveryError,
};
