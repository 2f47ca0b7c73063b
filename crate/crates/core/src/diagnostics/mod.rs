//! Empirical checks of the analytic gradients and of the concentration
//! properties the error bounds rely on.

mod gradient;
pub mod lemma2;
pub mod lemma3;
mod rsc;

pub use gradient::{clipped_varpi, gradient_fd_check, random_instance, GradientCheck};
pub use lemma2::{
    calibrate_constant, coverage_over_t, reference_config, truncated_singular_bounds, Lemma2Config, Lemma2Report,
    LEMMA2_CONSTANT,
};
pub use lemma3::{opnorm_concentration, DeviationRow, Lemma3Config, Lemma3Report, TauRule};
pub use rsc::{fourth_moment_constant, lemma1_varpi, random_perturbation, rsc_check, rsc_ratio, RSCReport, RSC_THRESHOLD};
