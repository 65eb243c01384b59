//! Cost model, churn simulator and scheme planner for caching a file on
//! user devices with device-to-device (D2D) delivery.
//!
//! Nodes arrive as a Poisson stream and leave after exponential sojourns
//! (an M/M/∞ population). A file of unit size can be served by the base
//! station at cost `R` per unit, or by devices at cost 1 per unit, using one
//! of several storage schemes:
//!
//! * simple caching: one device holds the file, refreshed from the base
//!   station after the holder leaves;
//! * MBR / MSR regenerating codes on `n` devices with reconstruction degree
//!   `k` and repair degree `d`;
//! * replication on `n` devices;
//! * base-station-only delivery.
//!
//! [`cost_model`] gives closed-form expected cost rates, [`simulator`] is a
//! discrete-event Monte Carlo used to check them, and [`planner`] picks the
//! cheapest scheme and locates the popularity thresholds where the choice
//! changes.

pub mod codes;
pub mod cost_model;
pub mod markov;
mod numeric;
pub mod planner;
pub mod simulator;

pub use codes::{CodeError, CodeFlavor, CodeParams, CodePoint};
pub use cost_model::{CostBreakdown, CostError, CostModel, RepairThreshold, Scheme, SystemParams};
pub use markov::{PopulationModel, StationaryTable, TruncationWindow};
pub use planner::{DesignSpace, Planner, SchemeKind, ThresholdResult};
pub use simulator::{SimConfig, SimError, SimReport};
