//! Spectrum-split vectoring (SBV) versus shared non-vectored (NV) rate simulator for
//! multi-operator VDSL2-style copper access.
//!
//! The crate is organised bottom-up: [`toneplan`] builds the DMT grid and per-operator
//! band plans, [`channel`] models cable loss and crosstalk, [`scenario`] holds the
//! deployment parameters and power split, [`rateengine`] turns all of that into rates,
//! [`fairness`] compares operators, and [`harness`] runs config-driven sweeps.

pub mod channel;
pub mod error;
pub mod exec;
pub mod fairness;
pub mod harness;
pub mod rateengine;
pub mod scenario;
pub mod toneplan;

pub use channel::{CableModel, FextModel, FextRealization, LinkModel};
pub use error::{Result, SimError};
pub use exec::Execution;
pub use fairness::{FairnessBasis, FairnessReport};
pub use harness::SimConfig;
pub use rateengine::{PercentileResult, RateEngine, RateResult};
pub use scenario::Scenario;
pub use toneplan::{BandPlan, OperatorId, PartitionPolicy, ToneGrid};
