//! Entanglement routing on square-grid quantum repeater networks.
//!
//! The crate contains the synchronous baseline, two asynchronous protocols
//! (a DODAG and a distributed spanning tree), a Monte-Carlo engine and the
//! closed-form rate analysis they are checked against.

pub mod analysis;
pub mod dodag;
pub mod engine;
pub mod error;
pub mod ghs;
pub mod navigation;
pub mod stochastic;
pub mod sync;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
pub use navigation::{NavigationResult, RouteLookup, SwapMode};
pub use stochastic::{derive_stream, RngStream};
pub use topology::{
    build_grid, l1_distance, node_at, coord_of, CoherenceTime, Coord, EdgeId, EntanglementLink, InstantTopology,
    LinkKind, NodeId, PhysicalTopology, SimParams,
};
pub use engine::{estimate_rate, Measure, Protocol, RateEstimate, Regime, ScenarioConfig};
