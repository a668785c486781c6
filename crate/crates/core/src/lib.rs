//! Distributed rate and power control for broadcast vehicular networks.
//!
//! Vehicles broadcast periodic safety messages. Each chooses a message rate
//! and a transmit power; every vehicle's sensed channel load must stay below
//! a target. The crate provides:
//!
//! * [`rate_control`]: dual rate control at fixed powers,
//! * [`power_control`]: dual power control at fixed rates, built on an exact
//!   integral solver for the per-transmitter Lagrangian subproblem,
//! * [`joint`]: alternation of the two,
//! * [`baseline`]: LIMERIC with 2-hop maximum load feedback,
//! * [`oracle`]: brute-force references for small instances.
//!
//! Every controller runs in synchronous rounds in which all updates read the
//! previous round's state; results do not depend on thread count.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod channel;
pub mod error;
pub mod io;
pub mod joint;
pub mod metrics;
pub mod oracle;
pub mod power_control;
pub mod rate_control;
pub mod record;
pub mod scenario;
pub mod sim;
pub mod utility;

pub use channel::{build_link_graph, ChannelModel, LinkGraph};
pub use error::{Error, Result};
pub use record::RunRecord;
pub use scenario::{generate_six_lane, Scenario, SixLaneParams};
pub use sim::{Algo, Config, Simulation};
pub use utility::{RateBounds, UtilitySpec};
