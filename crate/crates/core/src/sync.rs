//! Synchronous two-phase baseline: every edge tries to entangle, then every
//! repeater swaps blindly using only the positions of the request endpoints.

use arrayvec::ArrayVec;

use crate::error::Result;
use crate::stochastic::RngStream;
use crate::topology::{l1_unchecked, validate_pair, InstantTopology, NodeId, PhysicalTopology, SimParams};

/// Result of one synchronous slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotOutcome {
    /// End-to-end entanglements delivered (0..=4).
    pub success_count: u32,
    pub links_consumed: u32,
    /// Lengths of every complete `s → t` chain formed by the pairing, in the
    /// order of the source's neighbours, whether or not its swaps succeeded.
    pub chain_lengths: ArrayVec<u32, 4>,
    /// Length of the shortest chain whose swaps all succeeded.
    pub shortest_success: Option<u32>,
}

/// Independently entangles every physical edge with probability `p`.
pub fn external_phase(
    topo: &PhysicalTopology,
    params: &SimParams,
    stream: &mut RngStream,
    now: u64,
) -> InstantTopology {
    let mut instant = InstantTopology::new(topo);
    fill_external(topo, &mut instant, params, stream, now);
    instant
}

pub(crate) fn fill_external(
    topo: &PhysicalTopology,
    instant: &mut InstantTopology,
    params: &SimParams,
    stream: &mut RngStream,
    now: u64,
) {
    for e in 0..topo.edge_count() {
        if stream.chance(params.p) {
            instant
                .insert_direct(topo, crate::topology::EdgeId(e as u32), now, params.t_co)
                .expect("empty slot on a fresh instant topology");
        }
    }
}

/// Local pairing at repeater `v`: repeatedly join the linked neighbour
/// closest to the source with the remaining one closest to the destination
/// (ties to the smaller id).
pub fn blind_pairing(
    topo: &PhysicalTopology,
    instant: &InstantTopology,
    v: NodeId,
    source: NodeId,
    dest: NodeId,
) -> ArrayVec<(NodeId, NodeId), 2> {
    let side = topo.side().expect("blind pairing needs grid coordinates");
    let mut linked: ArrayVec<NodeId, 4> = topo
        .neighbors(v)
        .iter()
        .filter(|(_, e)| instant.has_link(*e))
        .map(|&(w, _)| w)
        .collect();
    let mut pairs = ArrayVec::new();
    while linked.len() >= 2 {
        let ia = argmin(&linked, |w| l1_unchecked(w, source, side));
        let a = linked.remove(ia);
        let ib = argmin(&linked, |w| l1_unchecked(w, dest, side));
        let b = linked.remove(ib);
        pairs.push((a, b));
    }
    pairs
}

fn argmin(nodes: &[NodeId], key: impl Fn(NodeId) -> usize) -> usize {
    // `nodes` is sorted by id, so the first minimum is the smallest id.
    let mut best = 0;
    for i in 1..nodes.len() {
        if key(nodes[i]) < key(nodes[best]) {
            best = i;
        }
    }
    best
}

/// Swaps every repeater blindly, counts delivered end-to-end entanglements
/// and consumes all links.
pub fn internal_phase(
    topo: &PhysicalTopology,
    instant: &mut InstantTopology,
    source: NodeId,
    dest: NodeId,
    params: &SimParams,
    stream: &mut RngStream,
) -> Result<SlotOutcome> {
    validate_pair(topo, source, dest)?;
    let mut out = SlotOutcome {
        links_consumed: instant.len() as u32,
        ..SlotOutcome::default()
    };

    for &(first, e) in topo.neighbors(source) {
        if !instant.has_link(e) {
            continue;
        }
        let Some(len) = trace_chain(topo, instant, source, dest, first) else {
            continue;
        };
        out.chain_lengths.push(len);
        let swaps_ok = (1..len).all(|_| stream.chance(params.q));
        if swaps_ok {
            out.success_count += 1;
            out.shortest_success = Some(out.shortest_success.map_or(len, |s| s.min(len)));
        }
    }
    instant.clear();
    Ok(out)
}

/// Follows the chain that starts on the link `source–first`. Returns its
/// hop count if it ends at `dest`.
fn trace_chain(
    topo: &PhysicalTopology,
    instant: &InstantTopology,
    source: NodeId,
    dest: NodeId,
    first: NodeId,
) -> Option<u32> {
    let (mut prev, mut cur, mut len) = (source, first, 1u32);
    // Each hop consumes a distinct link, so the walk ends within the link count.
    let limit = instant.direct_count() as u32;
    while len <= limit {
        if cur == dest {
            return Some(len);
        }
        if cur == source {
            return None;
        }
        let pairs = blind_pairing(topo, instant, cur, source, dest);
        let next = pairs.iter().find_map(|&(a, b)| {
            if a == prev {
                Some(b)
            } else if b == prev {
                Some(a)
            } else {
                None
            }
        })?;
        prev = cur;
        cur = next;
        len += 1;
    }
    None
}

/// One synchronous slot: external phase, then internal phase.
pub fn sync_unit_attempt(
    topo: &PhysicalTopology,
    source: NodeId,
    dest: NodeId,
    params: &SimParams,
    stream: &mut RngStream,
) -> Result<SlotOutcome> {
    let mut instant = external_phase(topo, params, stream, 0);
    internal_phase(topo, &mut instant, source, dest, params, stream)
}
