//! Deterministic traffic simulator for the delegation scheme.
//!
//! Clients attach either to a shared *delegation node* or to a local client
//! node on their own device. Every client node subscribes to `k` edge
//! nodes. A message goes from the sender to its client node, which delivers
//! it straight to co-attached members and publishes one copy to an edge
//! node; the edge forwards one copy to each other client node of the room.
//! The copy that comes back to the publisher is recognised by its event id
//! and dropped.
//!
//! Every message is really encrypted and decrypted (see
//! [`crate::group_crypto`]), and every edge → client node hop is settled
//! through the relay-payment pipeline (see [`crate::por`]). The measured
//! counts are compared against [`predicted_transmissions`].
//!
//! ```
//! use sendnet::netsim::{predicted_transmissions, run, SimScenario};
//!
//! let s = SimScenario::parse(r#"
//! seed = 1
//! [[group]]
//! name = "hall"
//! delegation = { north = 6, south = 3 }
//! other = 2
//! "#).unwrap();
//! let p = predicted_transmissions(&s).unwrap();
//! assert_eq!(p.t_deleg, (6 + 1) + (3 + 1) + 2);
//! assert_eq!(p.t_no_deleg, 11 * 10);
//!
//! let report = run(&s);
//! assert!(report.matches_prediction());
//! ```

mod model;
mod report;
mod scenario;
mod settle;
mod sim;

use thiserror::Error;

pub use model::{
    expected_total_time, predicted_categories, predicted_transmissions, CategoryCounts, PiecewiseLinear, Prediction,
    RelayComplexityModel, Scheme, INTEGRATION_TOLERANCE,
};
pub use report::{GroupSummary, LatencyStats, MetricsReport, Transmissions};
pub use scenario::{GroupSpec, OfflineWindow, SimScenario, MAX_COUNT};
pub use settle::SettlementTotals;
pub use sim::{run, CACHE_CAPACITY};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("line {line}, column {col}: {message}")]
    Invalid { line: usize, col: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no transmissions with delegation, the improvement factor is undefined")]
    ZeroTransmissions,
    #[error("transmission count overflows")]
    Overflow,
    #[error("{0}")]
    BadCurve(String),
}
