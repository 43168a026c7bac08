//! Physical grid, node identity, L1 geometry and the live-link store.

use std::fmt;

use crate::error::{check_probability, Error, Result};

/// Row-major node index: `index = y * side + x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of an undirected physical edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub u32);

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Grid coordinates of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coord {
    pub x: usize,
    pub y: usize,
}

/// Node id for `(x, y)` on a grid of the given side.
pub fn node_at(x: usize, y: usize, side: usize) -> NodeId {
    NodeId((y * side + x) as u32)
}

/// Coordinates of `id` on a grid of the given side.
pub fn coord_of(id: NodeId, side: usize) -> Coord {
    Coord {
        x: id.index() % side,
        y: id.index() / side,
    }
}

/// Manhattan distance between two grid nodes.
pub fn l1_distance(a: NodeId, b: NodeId, side: usize) -> Result<usize> {
    let nodes = side * side;
    for id in [a, b] {
        if id.index() >= nodes {
            return Err(Error::InvalidNode { node: id.0, nodes });
        }
    }
    Ok(l1_unchecked(a, b, side))
}

#[inline]
pub(crate) fn l1_unchecked(a: NodeId, b: NodeId, side: usize) -> usize {
    let (ax, ay) = (a.index() % side, a.index() / side);
    let (bx, by) = (b.index() % side, b.index() / side);
    ax.abs_diff(bx) + ay.abs_diff(by)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Layout {
    Grid { side: usize },
    Custom,
}

/// Immutable physical network: nodes, optical links and adjacency.
///
/// Built by [`build_grid`] for every experiment. [`PhysicalTopology::from_edges`]
/// exists for small hand-drawn scenarios (e.g. a three-node triangle) that
/// cannot be embedded in a square lattice.
#[derive(Debug, Clone)]
pub struct PhysicalTopology {
    layout: Layout,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    edges: Vec<(NodeId, NodeId)>,
}

/// Builds the `side × side` 4-neighbour grid.
pub fn build_grid(side: usize) -> Result<PhysicalTopology> {
    if side < 2 {
        return Err(Error::GridTooSmall(side));
    }
    let n = side * side;
    let mut edges = Vec::with_capacity(2 * side * (side - 1));
    for y in 0..side {
        for x in 0..side {
            let v = node_at(x, y, side);
            if x + 1 < side {
                edges.push((v, node_at(x + 1, y, side)));
            }
            if y + 1 < side {
                edges.push((v, node_at(x, y + 1, side)));
            }
        }
    }
    let mut topo = PhysicalTopology::assemble(n, edges);
    topo.layout = Layout::Grid { side };
    Ok(topo)
}

impl PhysicalTopology {
    /// Arbitrary undirected graph on `nodes` vertices. Duplicate edges and
    /// self-loops are rejected.
    pub fn from_edges(nodes: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            for v in [a, b] {
                if v as usize >= nodes {
                    return Err(Error::InvalidNode { node: v, nodes });
                }
            }
            if a == b {
                return Err(Error::InvalidConfig(format!("self-loop on node {a}")));
            }
            let e = (NodeId(a.min(b)), NodeId(a.max(b)));
            if list.contains(&e) {
                return Err(Error::InvalidConfig(format!("duplicate edge {a}-{b}")));
            }
            list.push(e);
        }
        Ok(Self::assemble(nodes, list))
    }

    fn assemble(nodes: usize, edges: Vec<(NodeId, NodeId)>) -> Self {
        let mut adjacency = vec![Vec::with_capacity(4); nodes];
        for (i, &(a, b)) in edges.iter().enumerate() {
            let e = EdgeId(i as u32);
            adjacency[a.index()].push((b, e));
            adjacency[b.index()].push((a, e));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        PhysicalTopology {
            layout: Layout::Custom,
            adjacency,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Grid side, or `None` for a custom graph.
    pub fn side(&self) -> Option<usize> {
        match self.layout {
            Layout::Grid { side } => Some(side),
            Layout::Custom => None,
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adjacency.len() as u32).map(NodeId)
    }

    /// Neighbours of `v` with the connecting edge, sorted by neighbour id.
    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adjacency[v.index()]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v.index()].len()
    }

    #[inline]
    pub fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId) {
        self.edges[e.index()]
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<EdgeId> {
        self.adjacency
            .get(u.index())?
            .iter()
            .find(|(w, _)| *w == v)
            .map(|&(_, e)| e)
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.adjacency.len()
    }

    pub fn coord(&self, v: NodeId) -> Result<Coord> {
        let side = self.side().ok_or(Error::NotAGrid)?;
        self.check(v)?;
        Ok(coord_of(v, side))
    }

    pub fn l1(&self, a: NodeId, b: NodeId) -> Result<usize> {
        l1_distance(a, b, self.side().ok_or(Error::NotAGrid)?)
    }

    pub(crate) fn check(&self, v: NodeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v.0,
                nodes: self.node_count(),
            })
        }
    }
}

/// Coherence time in unit times, or unlimited (expiry disabled).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoherenceTime {
    Finite(u32),
    Infinite,
}

impl CoherenceTime {
    /// Expiry tick for a link created at `now`.
    #[inline]
    pub fn expiry_from(self, now: u64) -> Option<u64> {
        match self {
            CoherenceTime::Finite(t) => Some(now + u64::from(t)),
            CoherenceTime::Infinite => None,
        }
    }

    /// Multiplier used by the connectivity objective. Unlimited coherence
    /// uses 1 because the factor only rescales ranks.
    pub fn as_factor(self) -> f64 {
        match self {
            CoherenceTime::Finite(t) => f64::from(t),
            CoherenceTime::Infinite => 1.0,
        }
    }

    /// Unit times used in default warm-up lengths; unlimited counts as 1.
    pub fn warmup_units(self) -> u64 {
        match self {
            CoherenceTime::Finite(t) => u64::from(t),
            CoherenceTime::Infinite => 1,
        }
    }
}

impl fmt::Display for CoherenceTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoherenceTime::Finite(t) => write!(f, "{t}"),
            CoherenceTime::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for CoherenceTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(CoherenceTime::Infinite);
        }
        match s.parse::<u32>() {
            Ok(t) if t >= 1 => Ok(CoherenceTime::Finite(t)),
            _ => Err(Error::OutOfRange {
                name: "t_co",
                value: s.to_string(),
                range: "integer >= 1 or `inf`",
            }),
        }
    }
}

/// Scalar physical parameters of one experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Direct-link generation success probability per attempt.
    pub p: f64,
    /// Swap success probability.
    pub q: f64,
    pub t_co: CoherenceTime,
    pub side: usize,
    pub seed: u64,
    /// Link capacity multiplier; rates scale linearly with it.
    pub capacity_factor: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            p: 0.8,
            q: 0.8,
            t_co: CoherenceTime::Finite(2),
            side: 12,
            seed: 42,
            capacity_factor: 1.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        check_probability("q", self.q)?;
        if let CoherenceTime::Finite(0) = self.t_co {
            return Err(Error::OutOfRange {
                name: "t_co",
                value: "0".into(),
                range: "integer >= 1 or `inf`",
            });
        }
        if self.side < 2 {
            return Err(Error::GridTooSmall(self.side));
        }
        if !(self.capacity_factor > 0.0 && self.capacity_factor.is_finite()) {
            return Err(Error::OutOfRange {
                name: "capacity_factor",
                value: self.capacity_factor.to_string(),
                range: "(0, inf)",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Direct,
    /// Produced by swapping.
    Virtual,
}

/// One shared Bell pair. Endpoints are stored in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntanglementLink {
    pub endpoints: (NodeId, NodeId),
    pub created_at: u64,
    /// `None` when coherence is unlimited.
    pub expires_at: Option<u64>,
    pub kind: LinkKind,
}

impl EntanglementLink {
    fn new(a: NodeId, b: NodeId, now: u64, t_co: CoherenceTime, kind: LinkKind) -> Self {
        EntanglementLink {
            endpoints: (a.min(b), a.max(b)),
            created_at: now,
            expires_at: t_co.expiry_from(now),
            kind,
        }
    }

    #[inline]
    fn expired(&self, now: u64) -> bool {
        matches!(self.expires_at, Some(t) if t <= now)
    }

    pub fn touches(&self, v: NodeId) -> bool {
        self.endpoints.0 == v || self.endpoints.1 == v
    }
}

/// Live entanglement links: at most one direct link per physical edge plus
/// any virtual links produced by swapping.
#[derive(Debug, Clone)]
pub struct InstantTopology {
    direct: Vec<Option<EntanglementLink>>,
    virtuals: Vec<EntanglementLink>,
    occupancy: Vec<u8>,
    capacity: Vec<u8>,
    live_direct: usize,
}

impl InstantTopology {
    pub fn new(topo: &PhysicalTopology) -> Self {
        InstantTopology {
            direct: vec![None; topo.edge_count()],
            virtuals: Vec::new(),
            occupancy: vec![0; topo.node_count()],
            capacity: topo.nodes().map(|v| topo.degree(v) as u8).collect(),
            live_direct: 0,
        }
    }

    pub fn clear(&mut self) {
        self.direct.iter_mut().for_each(|slot| *slot = None);
        self.virtuals.clear();
        self.occupancy.iter_mut().for_each(|o| *o = 0);
        self.live_direct = 0;
    }

    /// Number of live direct links.
    pub fn direct_count(&self) -> usize {
        self.live_direct
    }

    pub fn virtual_links(&self) -> &[EntanglementLink] {
        &self.virtuals
    }

    pub fn len(&self) -> usize {
        self.live_direct + self.virtuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn has_link(&self, e: EdgeId) -> bool {
        self.direct[e.index()].is_some()
    }

    #[inline]
    pub fn link(&self, e: EdgeId) -> Option<&EntanglementLink> {
        self.direct[e.index()].as_ref()
    }

    pub fn occupancy(&self, v: NodeId) -> usize {
        self.occupancy[v.index()] as usize
    }

    /// All live links, direct first (by edge id) then virtual.
    pub fn links(&self) -> impl Iterator<Item = &EntanglementLink> + '_ {
        self.direct.iter().flatten().chain(self.virtuals.iter())
    }

    /// Live direct-link edges in ascending order.
    pub fn live_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.direct
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_some())
            .map(|(i, _)| EdgeId(i as u32))
    }

    /// Stores a freshly generated direct link on `e`.
    pub fn insert_direct(
        &mut self,
        topo: &PhysicalTopology,
        e: EdgeId,
        now: u64,
        t_co: CoherenceTime,
    ) -> Result<()> {
        if self.direct[e.index()].is_some() {
            return Err(Error::EdgeOccupied(e.0));
        }
        let (a, b) = topo.endpoints(e);
        for v in [a, b] {
            if self.occupancy[v.index()] >= self.capacity[v.index()] {
                return Err(Error::NodeSaturated(v.0));
            }
        }
        self.occupancy[a.index()] += 1;
        self.occupancy[b.index()] += 1;
        self.direct[e.index()] = Some(EntanglementLink::new(a, b, now, t_co, LinkKind::Direct));
        self.live_direct += 1;
        Ok(())
    }

    /// Removes the direct link on `e`, if any.
    pub fn remove_direct(&mut self, e: EdgeId) -> Option<EntanglementLink> {
        let link = self.direct[e.index()].take()?;
        self.release(&link);
        self.live_direct -= 1;
        Some(link)
    }

    /// Records a virtual link whose endpoint qubits are already held
    /// (they were freed from the links consumed by the swap).
    pub fn add_virtual(&mut self, a: NodeId, b: NodeId, now: u64, t_co: CoherenceTime) {
        debug_assert_ne!(a, b, "virtual link endpoints must differ");
        self.occupancy[a.index()] += 1;
        self.occupancy[b.index()] += 1;
        self.virtuals
            .push(EntanglementLink::new(a, b, now, t_co, LinkKind::Virtual));
    }

    /// Removes the virtual link between `a` and `b`, if any.
    pub fn remove_virtual(&mut self, a: NodeId, b: NodeId) -> Option<EntanglementLink> {
        let key = (a.min(b), a.max(b));
        let pos = self.virtuals.iter().position(|l| l.endpoints == key)?;
        let link = self.virtuals.swap_remove(pos);
        self.release(&link);
        Some(link)
    }

    fn release(&mut self, link: &EntanglementLink) {
        self.occupancy[link.endpoints.0.index()] -= 1;
        self.occupancy[link.endpoints.1.index()] -= 1;
    }

    /// Removes every link with `expires_at <= now` and returns them.
    pub fn expire_links(&mut self, now: u64) -> Vec<EntanglementLink> {
        let mut out = Vec::new();
        self.expire_into(now, |_, link| out.push(link));
        out
    }

    /// Allocation-free expiry sweep: `sink` receives the edge id (for direct
    /// links) and the removed link.
    pub fn expire_into(&mut self, now: u64, mut sink: impl FnMut(Option<EdgeId>, EntanglementLink)) {
        for i in 0..self.direct.len() {
            if let Some(link) = self.direct[i] {
                if link.expired(now) {
                    self.direct[i] = None;
                    self.release(&link);
                    self.live_direct -= 1;
                    sink(Some(EdgeId(i as u32)), link);
                }
            }
        }
        let mut i = 0;
        while i < self.virtuals.len() {
            if self.virtuals[i].expired(now) {
                let link = self.virtuals.remove(i);
                self.release(&link);
                sink(None, link);
            } else {
                i += 1;
            }
        }
    }
}

pub(crate) fn validate_pair(topo: &PhysicalTopology, s: NodeId, t: NodeId) -> Result<()> {
    topo.check(s)?;
    topo.check(t)?;
    if s == t {
        return Err(Error::SameEndpoints);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        for (side, nodes, edges) in [(2, 4, 4), (4, 16, 24), (26, 676, 1300)] {
            let g = build_grid(side).unwrap();
            assert_eq!(g.node_count(), nodes);
            assert_eq!(g.edge_count(), edges);
        }
        assert_eq!(build_grid(1).unwrap_err(), Error::GridTooSmall(1));
    }

    #[test]
    fn degrees_and_symmetry() {
        for side in 2..=64 {
            let g = build_grid(side).unwrap();
            for v in g.nodes() {
                let c = coord_of(v, side);
                let border = [c.x == 0, c.x == side - 1, c.y == 0, c.y == side - 1]
                    .iter()
                    .filter(|b| **b)
                    .count();
                assert_eq!(g.degree(v), 4 - border);
                for &(w, e) in g.neighbors(v) {
                    assert!(g.neighbors(w).contains(&(v, e)));
                    assert_eq!(l1_unchecked(v, w, side), 1);
                }
            }
        }
    }

    #[test]
    fn l1_examples() {
        assert_eq!(l1_distance(node_at(0, 0, 5), node_at(0, 0, 5), 5), Ok(0));
        assert_eq!(l1_distance(node_at(0, 0, 5), node_at(3, 4, 5), 5), Ok(7));
        assert_eq!(l1_distance(node_at(0, 0, 26), node_at(25, 25, 26), 26), Ok(50));
        assert!(l1_distance(NodeId(25), NodeId(0), 5).is_err());
    }

    #[test]
    fn expiry_examples() {
        let g = build_grid(4).unwrap();
        let mut inst = InstantTopology::new(&g);
        assert!(inst.expire_links(0).is_empty());

        inst.insert_direct(&g, EdgeId(0), 0, CoherenceTime::Finite(3)).unwrap();
        assert!(inst.expire_links(2).is_empty());
        assert_eq!(inst.expire_links(3).len(), 1);
        assert!(inst.is_empty());

        for tick in 0..5u64 {
            inst.insert_direct(&g, EdgeId(tick as u32), tick, CoherenceTime::Finite(2))
                .unwrap();
        }
        let gone = inst.expire_links(3);
        let created: Vec<u64> = gone.iter().map(|l| l.created_at).collect();
        assert_eq!(created, vec![0, 1]);
        assert!(inst.links().all(|l| l.expires_at.unwrap() > 3));
    }

    #[test]
    fn capacity_is_one_per_edge() {
        let g = build_grid(2).unwrap();
        let mut inst = InstantTopology::new(&g);
        inst.insert_direct(&g, EdgeId(0), 0, CoherenceTime::Infinite).unwrap();
        assert_eq!(
            inst.insert_direct(&g, EdgeId(0), 0, CoherenceTime::Infinite),
            Err(Error::EdgeOccupied(0))
        );
        assert!(inst.expire_links(1_000_000).is_empty());
    }

    #[test]
    fn coherence_parse() {
        assert_eq!("inf".parse::<CoherenceTime>(), Ok(CoherenceTime::Infinite));
        assert_eq!("6".parse::<CoherenceTime>(), Ok(CoherenceTime::Finite(6)));
        assert!("0".parse::<CoherenceTime>().is_err());
    }
}
