//! Identification routines for each model family.

pub mod dlds;
pub mod linear;
pub mod ltv;
pub mod slds;

pub use linear::{
    fit_dad, fit_linocs_linear, fit_one_step_ls, linocs_linear_objective, DadConfig, DadVariant, LinearFit,
    LinearFitConfig,
};
pub use slds::{estimate_switches, fit_linocs_slds, match_models, SldsFit, SldsFitConfig};
pub use dlds::{fit_linocs_dlds, DldsFit, DldsFitConfig};
pub use ltv::{fit_linocs_ltv, init_ltv, ltv_objective, update_operator_at, LtvFit, LtvFitConfig};
