//! Inversion-influence metrics and the spectral quantities behind them.

mod bounds;
mod power;
mod solver;
mod spectrum;

pub use bounds::{
    certified_bound, estimate_lipschitz, expected_gaussian_risk, expected_gaussian_risk_damped,
    LipschitzConfig, LipschitzEstimate,
};
pub use power::{
    lambda_max_power_iteration, power_iteration, DifferenceOperator, PowerConfig, PowerResult,
};
pub use solver::{
    i2f_exact, i2f_exact_op, i2f_lower_bound, i2f_lower_bound_op, I2FReport, SolverConfig,
    SolverMode,
};
pub use spectrum::{
    dense_eigenvalues_op, dense_spectrum, dense_spectrum_op, DenseSpectrum, SpectrumReport,
    RANK_THRESHOLD,
};
