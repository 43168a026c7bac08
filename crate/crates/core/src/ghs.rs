//! Distributed spanning tree maintained by a GHS variant with splits.
//!
//! Each fragment is a tree of live direct links. Nodes learn their
//! fragment's id and level from broadcasts that travel one tree hop per
//! micro-tick, so a node's *view* may lag behind the true fragment. Test
//! messages are classified against views, which is what makes deferral
//! necessary: a receiver whose view has a lower level than the tester
//! cannot tell whether both already belong to the same fragment.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::navigation::{execute_route, NavigationResult, RouteLookup, SwapMode};
use crate::stochastic::RngStream;
use crate::topology::{EdgeId, InstantTopology, NodeId, PhysicalTopology, SimParams};
use crate::trace::{Trace, TraceEvent};

/// Fragment identifier; fresh ids are never reused within a world.
pub type FragmentId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestDecision {
    /// Same fragment.
    NotOutgoing,
    Outgoing,
    /// The receiver's level is too low to decide; answer later.
    Deferred,
}

/// Classifies a test sent by a node whose view is `(sender_fid,
/// sender_level)` to a node whose view is `(receiver_fid, receiver_level)`.
pub fn classify_test_edge(
    sender_fid: FragmentId,
    sender_level: u32,
    receiver_fid: FragmentId,
    receiver_level: u32,
) -> TestDecision {
    if sender_fid == receiver_fid {
        TestDecision::NotOutgoing
    } else if sender_level <= receiver_level {
        TestDecision::Outgoing
    } else {
        TestDecision::Deferred
    }
}

/// Ids of the members reachable through one tree link, as sorted disjoint
/// inclusive intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntervalSet {
    runs: Vec<(u32, u32)>,
}

impl IntervalSet {
    pub fn from_ids(mut ids: Vec<u32>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        let mut runs: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match runs.last_mut() {
                Some((_, hi)) if *hi + 1 == id => *hi = id,
                _ => runs.push((id, id)),
            }
        }
        IntervalSet { runs }
    }

    pub fn contains(&self, id: u32) -> bool {
        let i = self.runs.partition_point(|&(_, hi)| hi < id);
        self.runs.get(i).is_some_and(|&(lo, _)| lo <= id)
    }

    pub fn runs(&self) -> &[(u32, u32)] {
        &self.runs
    }

    pub fn len(&self) -> usize {
        self.runs.iter().map(|&(lo, hi)| (hi - lo + 1) as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }
}

/// Routing hint held by one node: for each incident tree link, the members
/// on the far side.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelativePositions {
    pub via: Vec<(NodeId, IntervalSet)>,
}

/// A node's fragment information.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentState {
    pub fid: FragmentId,
    pub level: u32,
    /// Smaller endpoint first. A fragment split off without its old core has
    /// none until it next merges.
    pub core_edge: Option<(NodeId, NodeId)>,
    pub tree_links: Vec<NodeId>,
    pub relative_position: RelativePositions,
}

/// Next hop from `current` towards `dest`, if `dest` is known to be in the
/// same fragment.
pub fn tree_next_hop(state: &FragmentState, current: NodeId, dest: NodeId) -> Option<NodeId> {
    if current == dest {
        return None;
    }
    state
        .relative_position
        .via
        .iter()
        .find(|(_, set)| set.contains(dest.0))
        .map(|&(w, _)| w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    fid: FragmentId,
    level: u32,
    core: Option<EdgeId>,
    size: u32,
}

/// Fragment bookkeeping over a physical topology: which node belongs to
/// which fragment, and which edges are tree edges.
#[derive(Debug, Clone)]
pub struct Fragments {
    slot_of: Vec<u32>,
    slots: Vec<Slot>,
    tree: Vec<bool>,
    next_fid: FragmentId,
    scratch: Vec<NodeId>,
    mark: Vec<u32>,
    epoch: u32,
}

/// What a fragment operation changed: the nodes to broadcast to, grouped
/// by the node the broadcast starts from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FragmentEvent {
    Merged { fid: FragmentId, level: u32 },
    Absorbed { fid: FragmentId, level: u32 },
    Split { fids: (FragmentId, FragmentId), level: u32 },
    /// Both ends already in one fragment; the edge stays a plain link.
    Rejected,
}

impl Fragments {
    /// Every node a level-0 singleton.
    pub fn new(topo: &PhysicalTopology) -> Self {
        let n = topo.node_count();
        let mut f = Fragments {
            slot_of: Vec::with_capacity(n),
            slots: Vec::with_capacity(2 * n),
            tree: vec![false; topo.edge_count()],
            next_fid: 0,
            scratch: Vec::with_capacity(n),
            mark: vec![0; n],
            epoch: 0,
        };
        f.reset(n);
        f
    }

    pub fn reset(&mut self, n: usize) {
        self.slot_of.clear();
        self.slots.clear();
        self.tree.iter_mut().for_each(|t| *t = false);
        for v in 0..n {
            self.slot_of.push(v as u32);
            self.slots.push(Slot {
                fid: v as FragmentId,
                level: 0,
                core: None,
                size: 1,
            });
        }
        self.next_fid = n as FragmentId;
    }

    fn fresh_fid(&mut self) -> FragmentId {
        let f = self.next_fid;
        self.next_fid += 1;
        f
    }

    pub fn fid(&self, v: NodeId) -> FragmentId {
        self.slots[self.slot_of[v.index()] as usize].fid
    }

    pub fn level(&self, v: NodeId) -> u32 {
        self.slots[self.slot_of[v.index()] as usize].level
    }

    pub fn size(&self, v: NodeId) -> usize {
        self.slots[self.slot_of[v.index()] as usize].size as usize
    }

    pub fn core_edge(&self, v: NodeId) -> Option<EdgeId> {
        self.slots[self.slot_of[v.index()] as usize].core
    }

    pub fn same(&self, a: NodeId, b: NodeId) -> bool {
        self.slot_of[a.index()] == self.slot_of[b.index()]
    }

    pub fn is_tree(&self, e: EdgeId) -> bool {
        self.tree[e.index()]
    }

    pub fn tree_edge_count(&self) -> usize {
        self.tree.iter().filter(|&&t| t).count()
    }

    /// Number of distinct fragments.
    pub fn count(&self) -> usize {
        let mut seen: Vec<u32> = self.slot_of.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Members of `v`'s fragment in breadth-first order from `v`, with hop
    /// distances. Reuses internal buffers; the result is valid until the next
    /// call.
    pub fn component(&mut self, topo: &PhysicalTopology, v: NodeId, out: &mut Vec<(NodeId, u32)>) {
        out.clear();
        self.epoch += 1;
        let epoch = self.epoch;
        self.mark[v.index()] = epoch;
        out.push((v, 0));
        let mut head = 0;
        while head < out.len() {
            let (u, d) = out[head];
            head += 1;
            for &(w, e) in topo.neighbors(u) {
                if self.tree[e.index()] && self.mark[w.index()] != epoch {
                    self.mark[w.index()] = epoch;
                    out.push((w, d + 1));
                }
            }
        }
    }

    /// Joins the fragments of the endpoints of `e` once a direct link exists
    /// on it. Equal levels merge into a fresh fragment one level up with `e`
    /// as core; otherwise the lower fragment is absorbed by the higher one.
    pub fn join(&mut self, topo: &PhysicalTopology, e: EdgeId) -> FragmentEvent {
        let (a, b) = topo.endpoints(e);
        if self.same(a, b) {
            return FragmentEvent::Rejected;
        }
        let (sa, sb) = (self.slot_of[a.index()] as usize, self.slot_of[b.index()] as usize);
        let (la, lb) = (self.slots[sa].level, self.slots[sb].level);
        self.tree[e.index()] = true;
        if la == lb {
            // Relabel the smaller side into the larger side's slot.
            let (keep, small_root) = if self.slots[sa].size >= self.slots[sb].size { (sa, b) } else { (sb, a) };
            let moved = self.relabel(topo, small_root, keep as u32);
            let fid = self.fresh_fid();
            let slot = &mut self.slots[keep];
            slot.fid = fid;
            slot.level = la + 1;
            slot.core = Some(e);
            slot.size += moved;
            FragmentEvent::Merged { fid, level: la + 1 }
        } else {
            let (high, low_root) = if la > lb { (sa, b) } else { (sb, a) };
            let moved = self.relabel(topo, low_root, high as u32);
            let slot = &mut self.slots[high];
            slot.size += moved;
            FragmentEvent::Absorbed {
                fid: slot.fid,
                level: slot.level,
            }
        }
    }

    /// Removes tree edge `e` and gives both halves fresh ids at the same
    /// level. Returns `None` when `e` is not a tree edge.
    pub fn split(&mut self, topo: &PhysicalTopology, e: EdgeId) -> Option<FragmentEvent> {
        if !self.tree[e.index()] {
            return None;
        }
        self.tree[e.index()] = false;
        let (a, b) = topo.endpoints(e);
        let old = self.slot_of[a.index()] as usize;
        let Slot { level, core, size, .. } = self.slots[old];
        let new_slot = self.slots.len() as u32;
        self.slots.push(Slot {
            fid: 0,
            level,
            core: None,
            size: 0,
        });
        let moved = self.relabel(topo, b, new_slot);
        self.slots[old].size = size - moved;
        self.slots[new_slot as usize].size = moved;
        // The side still containing the old core keeps it.
        let b_has_core = core.is_some_and(|c| {
            let (x, _) = topo.endpoints(c);
            c != e && self.slot_of[x.index()] == new_slot
        });
        if b_has_core {
            self.slots[new_slot as usize].core = core;
            self.slots[old].core = None;
        } else if core == Some(e) {
            self.slots[old].core = None;
        }
        let fa = self.fresh_fid();
        let fb = self.fresh_fid();
        self.slots[old].fid = fa;
        self.slots[new_slot as usize].fid = fb;
        Some(FragmentEvent::Split { fids: (fa, fb), level })
    }

    fn relabel(&mut self, topo: &PhysicalTopology, start: NodeId, slot: u32) -> u32 {
        let mut stack = std::mem::take(&mut self.scratch);
        stack.clear();
        let from = self.slot_of[start.index()];
        self.slot_of[start.index()] = slot;
        stack.push(start);
        let mut moved = 0;
        while let Some(u) = stack.pop() {
            moved += 1;
            for &(w, e) in topo.neighbors(u) {
                if self.tree[e.index()] && self.slot_of[w.index()] == from {
                    self.slot_of[w.index()] = slot;
                    stack.push(w);
                }
            }
        }
        self.scratch = stack;
        moved
    }

    /// Relative positions of `v`: members behind each incident tree link.
    pub fn relative_positions(&mut self, topo: &PhysicalTopology, v: NodeId) -> RelativePositions {
        let mut via = Vec::new();
        for &(w, e) in topo.neighbors(v) {
            if !self.tree[e.index()] {
                continue;
            }
            // Members reachable from w without crossing back over e.
            self.tree[e.index()] = false;
            let mut comp = Vec::new();
            self.component(topo, w, &mut comp);
            self.tree[e.index()] = true;
            via.push((w, IntervalSet::from_ids(comp.into_iter().map(|(x, _)| x.0).collect())));
        }
        RelativePositions { via }
    }

    /// Unique tree path from `s` to `t`, if they share a fragment.
    pub fn tree_path(&mut self, topo: &PhysicalTopology, s: NodeId, t: NodeId) -> Option<Vec<NodeId>> {
        if !self.same(s, t) {
            return None;
        }
        let n = self.slot_of.len();
        let mut pred = vec![u32::MAX; n];
        let mut queue = VecDeque::new();
        pred[s.index()] = s.0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &(w, e) in topo.neighbors(u) {
                if self.tree[e.index()] && pred[w.index()] == u32::MAX {
                    pred[w.index()] = u.0;
                    queue.push_back(w);
                }
            }
        }
        let mut path = vec![t];
        let mut v = t;
        while v != s {
            v = NodeId(pred[v.index()]);
            path.push(v);
        }
        path.reverse();
        Some(path)
    }
}

/// Tunables of the spanning-tree world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GhsConfig {
    pub classical_latency_ticks: u32,
    /// Micro-ticks per unit time; `None` means `4·side`.
    pub micro_tick_budget: Option<u32>,
}

impl Default for GhsConfig {
    fn default() -> Self {
        GhsConfig {
            classical_latency_ticks: 1,
            micro_tick_budget: None,
        }
    }
}

/// What a node believes about its fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct View {
    pub fid: FragmentId,
    pub level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingView {
    arrive: u64,
    view: View,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Test {
    from: NodeId,
    to: NodeId,
    snapshot: View,
}

/// Nodes, their views and the live links of a spanning-tree network.
#[derive(Debug, Clone)]
pub struct GhsWorld<'a> {
    topo: &'a PhysicalTopology,
    params: SimParams,
    budget: u32,
    latency: u64,
    pub fragments: Fragments,
    pub instant: InstantTopology,
    views: Vec<View>,
    pending: Vec<Option<PendingView>>,
    deferred: Vec<Vec<Test>>,
    /// Tests in flight, delivered at `arrive` (global micro clock).
    in_flight: Vec<(u64, Test)>,
    wants_test: Vec<bool>,
    edge_tried: Vec<u64>,
    now: u64,
    clock: u64,
    comp: Vec<(NodeId, u32)>,
    pub trace: Option<Trace>,
}

const NEVER: u64 = u64::MAX;

impl<'a> GhsWorld<'a> {
    pub fn new(topo: &'a PhysicalTopology, params: SimParams, cfg: GhsConfig) -> Result<Self> {
        params.validate()?;
        let n = topo.node_count();
        let budget = cfg
            .micro_tick_budget
            .unwrap_or(4 * topo.side().unwrap_or(n) as u32)
            .max(1);
        let mut w = GhsWorld {
            topo,
            params,
            budget,
            latency: u64::from(cfg.classical_latency_ticks.max(1)),
            fragments: Fragments::new(topo),
            instant: InstantTopology::new(topo),
            views: Vec::with_capacity(n),
            pending: vec![None; n],
            deferred: vec![Vec::new(); n],
            in_flight: Vec::new(),
            wants_test: vec![false; n],
            edge_tried: vec![NEVER; topo.edge_count()],
            now: 0,
            clock: 0,
            comp: Vec::with_capacity(n),
            trace: None,
        };
        w.reset();
        Ok(w)
    }

    pub fn topology(&self) -> &PhysicalTopology {
        self.topo
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn view(&self, v: NodeId) -> View {
        self.views[v.index()]
    }

    /// True fragment information of `v`.
    pub fn fragment_state(&mut self, v: NodeId) -> FragmentState {
        let topo = self.topo;
        let tree_links = topo
            .neighbors(v)
            .iter()
            .filter(|(_, e)| self.fragments.is_tree(*e))
            .map(|&(w, _)| w)
            .collect();
        FragmentState {
            fid: self.fragments.fid(v),
            level: self.fragments.level(v),
            core_edge: self.fragments.core_edge(v).map(|e| topo.endpoints(e)),
            tree_links,
            relative_position: self.fragments.relative_positions(topo, v),
        }
    }

    pub fn reset(&mut self) {
        let n = self.topo.node_count();
        self.fragments.reset(n);
        self.instant.clear();
        self.views.clear();
        self.views.extend((0..n).map(|v| View {
            fid: v as FragmentId,
            level: 0,
        }));
        self.pending.iter_mut().for_each(|p| *p = None);
        self.deferred.iter_mut().for_each(Vec::clear);
        self.in_flight.clear();
        self.wants_test.iter_mut().for_each(|w| *w = false);
        self.edge_tried.iter_mut().for_each(|t| *t = NEVER);
        self.now = 0;
        self.clock = 0;
        if let Some(t) = &mut self.trace {
            t.clear();
        }
    }

    fn log(&mut self, node: NodeId, event: &'static str, details: impl FnOnce() -> String) {
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent {
                tick: self.now,
                node,
                event,
                details: details(),
            });
        }
    }

    /// Schedules the broadcast of `view` over the tree from `origin` to
    /// every node of its current fragment.
    fn broadcast(&mut self, origin: NodeId, view: View) {
        let mut comp = std::mem::take(&mut self.comp);
        self.fragments.component(self.topo, origin, &mut comp);
        for &(v, hops) in &comp {
            let arrive = self.clock + u64::from(hops) * self.latency;
            self.pending[v.index()] = Some(PendingView { arrive, view });
        }
        self.comp = comp;
    }

    /// Advances one unit time: expiry (splitting fragments on lost tree
    /// links), then tests, deferrals, generation attempts and broadcasts
    /// for up to the micro-tick budget.
    pub fn run_unit_time(&mut self, stream: &mut RngStream) {
        self.clock = self.now * u64::from(self.budget);
        self.expire();
        self.wants_test.iter_mut().for_each(|w| *w = true);
        for _ in 0..self.budget {
            self.apply_views();
            self.send_tests();
            self.deliver_tests(stream);
            if self.in_flight.is_empty() && self.pending.iter().all(Option::is_none) {
                break;
            }
            self.clock += 1;
        }
        self.deferred.iter_mut().for_each(Vec::clear);
        self.in_flight.clear();
        self.now += 1;
    }

    fn expire(&mut self) {
        let mut lost = Vec::new();
        self.instant.expire_into(self.now, |e, _| lost.extend(e));
        for e in lost {
            self.on_link_lost(e);
        }
    }

    /// A direct link on `e` disappeared; split if it was a tree edge.
    pub fn on_link_lost(&mut self, e: EdgeId) {
        if let Some(FragmentEvent::Split { fids, level }) = self.fragments.split(self.topo, e) {
            let (a, b) = self.topo.endpoints(e);
            self.log(a, "split", || format!("edge={a}-{b} fids={}/{} level={level}", fids.0, fids.1));
            self.broadcast(a, View { fid: fids.0, level });
            self.broadcast(b, View { fid: fids.1, level });
        }
    }

    fn apply_views(&mut self) {
        for v in 0..self.pending.len() {
            let Some(p) = self.pending[v] else { continue };
            if p.arrive > self.clock {
                continue;
            }
            self.pending[v] = None;
            if self.views[v] == p.view {
                continue;
            }
            self.views[v] = p.view;
            self.wants_test[v] = true;
            // Deferred tests are reconsidered against the new view.
            let held = std::mem::take(&mut self.deferred[v]);
            for test in held {
                self.answer(test);
            }
        }
    }

    fn send_tests(&mut self) {
        for v in 0..self.wants_test.len() {
            if !self.wants_test[v] {
                continue;
            }
            self.wants_test[v] = false;
            let from = NodeId(v as u32);
            let snapshot = self.views[v];
            for &(w, e) in self.topo.neighbors(from) {
                if self.fragments.is_tree(e) {
                    continue;
                }
                self.in_flight.push((
                    self.clock + self.latency,
                    Test {
                        from,
                        to: w,
                        snapshot,
                    },
                ));
            }
        }
    }

    fn deliver_tests(&mut self, stream: &mut RngStream) {
        let clock = self.clock;
        let mut due: Vec<Test> = Vec::new();
        self.in_flight.retain(|&(t, test)| {
            if t <= clock {
                due.push(test);
                false
            } else {
                true
            }
        });
        due.sort_by_key(|t| (t.from, t.to));
        for test in due {
            if let Some(e) = self.answer(test) {
                self.attempt(e, stream);
            }
        }
    }

    /// Classifies `test` at its receiver. Returns the edge to attempt when
    /// the test is accepted; holds the test when deferred.
    fn answer(&mut self, test: Test) -> Option<EdgeId> {
        let me = self.views[test.to.index()];
        match classify_test_edge(test.snapshot.fid, test.snapshot.level, me.fid, me.level) {
            TestDecision::NotOutgoing => None,
            TestDecision::Deferred => {
                self.deferred[test.to.index()].push(test);
                None
            }
            TestDecision::Outgoing => {
                let e = self.topo.edge_between(test.from, test.to)?;
                Some(e)
            }
        }
    }

    fn attempt(&mut self, e: EdgeId, stream: &mut RngStream) {
        let ok = if self.instant.has_link(e) {
            true
        } else if self.edge_tried[e.index()] == self.now {
            false
        } else {
            self.edge_tried[e.index()] = self.now;
            stream.chance(self.params.p)
                && self.instant.insert_direct(self.topo, e, self.now, self.params.t_co).is_ok()
        };
        if ok {
            self.commit(e);
        }
    }

    fn commit(&mut self, e: EdgeId) {
        let (a, b) = self.topo.endpoints(e);
        let low_side = if self.fragments.level(a) < self.fragments.level(b) { a } else { b };
        match self.fragments.join(self.topo, e) {
            FragmentEvent::Merged { fid, level } => {
                self.log(a, "merge", || format!("edge={a}-{b} fid={fid} level={level}"));
                let view = View { fid, level };
                self.broadcast(a, view);
                // One wave from each core endpoint: b's side hears it from b.
                let mut comp = std::mem::take(&mut self.comp);
                self.fragments.component(self.topo, b, &mut comp);
                for &(v, hops) in &comp {
                    let arrive = self.clock + u64::from(hops) * self.latency;
                    if let Some(p) = &mut self.pending[v.index()] {
                        p.arrive = p.arrive.min(arrive);
                    }
                }
                self.comp = comp;
            }
            FragmentEvent::Absorbed { fid, level } => {
                self.log(low_side, "absorb", || format!("edge={a}-{b} fid={fid} level={level}"));
                // Only the absorbed side needs the news; it spreads from the
                // joining node on that side.
                let e_tree = e;
                self.fragments.tree[e_tree.index()] = false;
                let mut comp = std::mem::take(&mut self.comp);
                self.fragments.component(self.topo, low_side, &mut comp);
                self.fragments.tree[e_tree.index()] = true;
                for &(v, hops) in &comp {
                    let arrive = self.clock + u64::from(hops) * self.latency;
                    self.pending[v.index()] = Some(PendingView {
                        arrive,
                        view: View { fid, level },
                    });
                }
                self.comp = comp;
            }
            FragmentEvent::Rejected | FragmentEvent::Split { .. } => {}
        }
    }

    /// Tree path from `s` to `t` over links not in `excluded`. Every node on
    /// the path must already know the current fragment (its relative
    /// positions are only refreshed by the broadcast).
    pub fn find_route(&mut self, s: NodeId, t: NodeId, excluded: &[bool]) -> RouteLookup {
        let Some(path) = self.fragments.tree_path(self.topo, s, t) else {
            return RouteLookup::NoRoute;
        };
        let fid = self.fragments.fid(s);
        let informed = path.iter().all(|v| self.views[v.index()].fid == fid);
        let free = path.windows(2).all(|w| {
            let e = self.topo.edge_between(w[0], w[1]).expect("tree edge");
            !excluded.get(e.index()).copied().unwrap_or(false)
        });
        if informed && free {
            RouteLookup::Path(path)
        } else {
            RouteLookup::NoRoute
        }
    }

    pub fn navigate(&mut self, s: NodeId, t: NodeId, mode: SwapMode, stream: &mut RngStream) -> Result<NavigationResult> {
        if s == t {
            return Err(Error::SameEndpoints);
        }
        match self.find_route(s, t, &[]) {
            RouteLookup::Path(p) => Ok(self.execute(p, mode, stream)),
            _ => Ok(NavigationResult::failed(Vec::new())),
        }
    }

    /// Swaps along `path`; consumed tree links split their fragments.
    pub fn execute(&mut self, path: Vec<NodeId>, mode: SwapMode, stream: &mut RngStream) -> NavigationResult {
        let params = self.params;
        let r = execute_route(self.topo, &mut self.instant, path, &params, self.now, mode, stream);
        for &e in &r.consumed {
            self.on_link_lost(e);
        }
        r
    }

    /// Structural checks: tree edges carry live links and form a forest
    /// whose components are exactly the fragments.
    pub fn check_invariants(&mut self) -> std::result::Result<(), String> {
        let topo = self.topo;
        for (i, _) in topo.edges().iter().enumerate() {
            let e = EdgeId(i as u32);
            if self.fragments.is_tree(e) && !self.instant.has_link(e) {
                return Err(format!("tree edge {i} without link"));
            }
        }
        let n = topo.node_count();
        let tree_edges = self.fragments.tree_edge_count();
        let frags = self.fragments.count();
        if tree_edges + frags != n {
            return Err(format!("{tree_edges} tree edges and {frags} fragments over {n} nodes: not a forest"));
        }
        let mut comp = Vec::new();
        for v in topo.nodes() {
            self.fragments.component(topo, v, &mut comp);
            if comp.len() != self.fragments.size(v) {
                return Err(format!("fragment of {v} has inconsistent size"));
            }
            if comp.iter().any(|&(w, _)| !self.fragments.same(v, w)) {
                return Err(format!("tree component of {v} spans fragments"));
            }
        }
        Ok(())
    }

    /// True once no broadcast is still travelling.
    pub fn quiescent(&self) -> bool {
        self.pending.iter().all(Option::is_none)
    }
}
