use thiserror::Error;

/// Errors reported by the simulator and the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid side must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("node {node} is not valid for a grid with {nodes} nodes")]
    InvalidNode { node: u32, nodes: usize },
    #[error("topology has no grid coordinates")]
    NotAGrid,
    #[error("nodes {0} and {1} are not physically adjacent")]
    NotAdjacent(u32, u32),
    #[error("parameter `{name}` = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("source and destination must differ")]
    SameEndpoints,
    #[error("physical edge {0} already carries an entanglement link")]
    EdgeOccupied(u32),
    #[error("node {0} has no free qubit")]
    NodeSaturated(u32),
    #[error("no ordered pair at L1 distance {distance} on a {side}x{side} grid")]
    NoPairAtDistance { distance: usize, side: usize },
    #[error("path enumeration is empty")]
    EmptyEnumeration,
    #[error("pre-existing link count {lprime} exceeds path length {l}")]
    PrimeExceedsLength { lprime: f64, l: f64 },
    #[error("no real alpha boundary for theta = {0}")]
    NoAlphaBoundary(f64),
    #[error("degenerate triangle: two points coincide")]
    DegenerateTriangle,
    #[error("endpoint {0} is not part of the routing structure")]
    NotJoined(u32),
    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value: value.to_string(),
            range: "[0, 1]",
        })
    }
}
