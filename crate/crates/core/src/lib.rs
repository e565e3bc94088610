//! Closed-form symbol, extended generator and semimartingale characteristics
//! of the COGARCH process `(G, log σ²)`, together with the simulation and
//! Monte-Carlo machinery that checks them.

// `!(x > 0.0)` deliberately rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod characteristics;
pub mod cogarch;
pub mod error;
pub mod estimator;
pub mod generator;
pub mod levy;
pub mod mc_symbol;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod sum;
pub mod symbol;

pub use characteristics::{
    differential_characteristics, empirical_characteristics_check, integrate_characteristics, CharacteristicsConfig, CharacteristicsReport,
    DifferentialCharacteristics,
};
pub use cogarch::{apply_jump, evolve_volatility_between_jumps, integrated_variance, CogarchParams, StatePoint};
pub use error::{Error, Result};
pub use estimator::{EstimatorResult, LadderPoint};
pub use generator::{apply_generator, martingale_residual, martingale_residuals, semigroup_derivative, GaussianBump, ResidualConfig, TestFunction};
pub use levy::{characteristic_exponent, levy_symbol, sample_skeleton, Atom, DensityFamily, JumpDensity, LevyMeasure, LevyTriplet, PathSkeleton};
pub use mc_symbol::{estimate_symbol, estimate_symbols, r_independence_check, Agreement, Comparison, McConfig};
pub use num_complex::Complex64;
pub use quadrature::Tolerance;
pub use sim::{exit_time_statistics, simulate_path, SamplePath, Simulator, TimeGrid};
pub use symbol::{cogarch_symbol, integrate_against_image, map_jump, sde_symbol, ImageMeasureSpec, Rectangle, SymbolValue};
