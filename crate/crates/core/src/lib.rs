//! Integrated trawl processes driven by Lévy bases: exponent oracles,
//! regime classification, path simulation and estimators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod exponent;
pub mod levy;
pub mod pathsim;
pub mod quad;
pub mod regime;
pub mod stats;
pub mod trawl;

pub use config::{ExperimentConfig, RunManifest};
pub use error::{Error, Result};
pub use exponent::{ExponentReport, LimitValue, QuadValue};
pub use levy::{LevyBasisSpec, LevyExponent};
pub use pathsim::{EnsembleFormat, EnsembleMeta, PathEnsemble, ProcessKind, SeriesBudget};
pub use regime::{Norming, Regime, RegimeReport};
pub use stats::{EcfCurve, IndexFit};
pub use trawl::{TimeCombo, TrawlSpec};
