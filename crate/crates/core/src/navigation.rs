//! Executing a routed request: self-propagating swaps along a node path.

use crate::stochastic::RngStream;
use crate::topology::{EdgeId, EntanglementLink, InstantTopology, LinkKind, NodeId, PhysicalTopology, SimParams};

/// Whether swaps are actually performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SwapMode {
    /// Swap at every intermediate node with probability `q`, consuming links.
    #[default]
    Swap,
    /// Only check that a route exists; links are left untouched.
    PathfindingOnly,
}

/// Outcome of a route lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteLookup {
    /// An endpoint is not attached to the routing structure.
    NotJoined(NodeId),
    /// Both endpoints attached but no route over the allowed links.
    NoRoute,
    Path(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NavigationResult {
    pub success: bool,
    /// Swap attempts performed.
    pub swaps: u32,
    pub path: Vec<NodeId>,
    /// Direct links used up by the attempt.
    pub consumed: Vec<EdgeId>,
    /// The end-to-end entanglement handed to the requester.
    pub delivered: Option<EntanglementLink>,
}

impl NavigationResult {
    pub fn failed(path: Vec<NodeId>) -> Self {
        NavigationResult {
            success: false,
            swaps: 0,
            path,
            consumed: Vec::new(),
            delivered: None,
        }
    }

    /// Hop count of the route (0 when none was found).
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Swaps along `path`, whose consecutive nodes must share live direct links.
///
/// Swapping proceeds outward from the source: node `path[i]` joins the link
/// it holds towards the source with its link towards `path[i+1]`. A failed
/// swap destroys both of those links and stops the attempt; links further
/// along the path are kept.
pub fn execute_route(
    topo: &PhysicalTopology,
    instant: &mut InstantTopology,
    path: Vec<NodeId>,
    params: &SimParams,
    now: u64,
    mode: SwapMode,
    stream: &mut RngStream,
) -> NavigationResult {
    let hops = path.len().saturating_sub(1);
    if hops == 0 {
        return NavigationResult::failed(path);
    }
    let edges: Vec<EdgeId> = path
        .windows(2)
        .map(|w| topo.edge_between(w[0], w[1]).expect("route follows physical edges"))
        .collect();
    debug_assert!(edges.iter().all(|&e| instant.has_link(e)), "route over missing links");
    if mode == SwapMode::PathfindingOnly {
        return NavigationResult {
            success: true,
            swaps: hops as u32 - 1,
            path,
            consumed: Vec::new(),
            delivered: None,
        };
    }

    let source = path[0];
    let mut consumed = Vec::with_capacity(hops);
    let mut swaps = 0;
    consumed.push(edges[0]);
    instant.remove_direct(edges[0]);
    for &e in &edges[1..hops] {
        swaps += 1;
        consumed.push(e);
        instant.remove_direct(e);
        if !stream.chance(params.q) {
            return NavigationResult {
                success: false,
                swaps,
                path,
                consumed,
                delivered: None,
            };
        }
    }
    let target = path[hops];
    let delivered = EntanglementLink {
        endpoints: (source.min(target), source.max(target)),
        created_at: now,
        expires_at: params.t_co.expiry_from(now),
        kind: if hops == 1 { LinkKind::Direct } else { LinkKind::Virtual },
    };
    NavigationResult {
        success: true,
        swaps,
        path,
        consumed,
        delivered: Some(delivered),
    }
}
