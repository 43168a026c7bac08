//! Asynchronous DODAG routing.
//!
//! Nodes join a destination-oriented DAG rooted at the grid centre by
//! exchanging DIS/DIO/DAO control messages. A join completes only once a
//! direct entanglement link to the chosen parent exists, so the DAG is always
//! a subgraph of the live links. Requests travel up from the source to the
//! closest common ancestor and back down to the destination, swapping at
//! every intermediate node.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use arrayvec::ArrayVec;

use crate::error::{Error, Result};
use crate::navigation::{execute_route, NavigationResult, RouteLookup, SwapMode};
use crate::stochastic::RngStream;
use crate::topology::{
    node_at, EdgeId, InstantTopology, NodeId, PhysicalTopology, SimParams,
};
use crate::trace::{Trace, TraceEvent};

/// Maximum number of parents per node (the grid degree).
pub const MAX_PARENTS: usize = 4;

/// How a child's rank is derived from its parent's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObjectiveFunction {
    /// Rank step `|γ(L) − γ(L+1)|` with `γ(L) = p^L q^(L−1) T_co`.
    #[default]
    Connectivity,
    /// Every hop adds exactly 1.
    FixedIncrement,
}

/// Connectivity of a node `hop_depth` links away from the root:
/// `p^L · q^(L−1) · T_co`.
pub fn connectivity_gamma(hop_depth: u32, params: &SimParams) -> f64 {
    let l = f64::from(hop_depth);
    params.p.powf(l) * params.q.powf(l - 1.0) * params.t_co.as_factor()
}

/// Rank step from a parent at `parent_depth` and the resulting child rank.
pub fn rank_step_and_rank(
    parent_rank: f64,
    parent_depth: u32,
    params: &SimParams,
    objective: ObjectiveFunction,
) -> (f64, f64) {
    let step = rank_step(parent_depth, params, objective);
    (step, child_rank(parent_rank, step))
}

/// `parent_rank + step`, kept strictly above the parent when `step > 0`.
/// Deep in a sparse DAG the step falls below one ulp of the accumulated rank
/// and the plain sum would round back to the parent's rank.
fn child_rank(parent_rank: f64, step: f64) -> f64 {
    let sum = parent_rank + step;
    if step > 0.0 {
        sum.max(parent_rank.next_up())
    } else {
        sum
    }
}

/// Rank steps indexed by parent depth, precomputed for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSteps {
    steps: Vec<f64>,
    params: SimParams,
    objective: ObjectiveFunction,
}

impl RankSteps {
    pub fn new(params: &SimParams, objective: ObjectiveFunction, max_depth: usize) -> Self {
        RankSteps {
            steps: (0..=max_depth as u32).map(|d| rank_step(d, params, objective)).collect(),
            params: *params,
            objective,
        }
    }

    #[inline]
    pub fn step(&self, parent_depth: u32) -> f64 {
        match self.steps.get(parent_depth as usize) {
            Some(&s) => s,
            None => rank_step(parent_depth, &self.params, self.objective),
        }
    }
}

fn rank_step(parent_depth: u32, params: &SimParams, objective: ObjectiveFunction) -> f64 {
    match objective {
        ObjectiveFunction::Connectivity => {
            (connectivity_gamma(parent_depth, params) - connectivity_gamma(parent_depth + 1, params)).abs()
        }
        ObjectiveFunction::FixedIncrement => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Outside,
    Member,
    /// Cut off from its parents; acts as the root of its own floating branch
    /// until it rejoins.
    FloatingRoot,
}

/// Per-node DODAG state.
#[derive(Debug, Clone, PartialEq)]
pub struct DodagNodeState {
    pub membership: Membership,
    pub rank: f64,
    pub hop_depth: u32,
    /// `(parent, rank step)`; the preferred parent comes first.
    pub parents: ArrayVec<(NodeId, f64), MAX_PARENTS>,
    pub root: bool,
    /// Root of the DAG this node currently belongs to: the real root, or a
    /// floating root.
    pub dodag: NodeId,
}

impl DodagNodeState {
    pub fn outside(id: NodeId) -> Self {
        DodagNodeState {
            membership: Membership::Outside,
            rank: f64::INFINITY,
            hop_depth: u32::MAX,
            parents: ArrayVec::new(),
            root: false,
            dodag: id,
        }
    }

    pub fn new_root(id: NodeId) -> Self {
        DodagNodeState {
            membership: Membership::Member,
            rank: 0.0,
            hop_depth: 0,
            parents: ArrayVec::new(),
            root: true,
            dodag: id,
        }
    }

    /// Ordering key. The hop depth breaks rank ties (`pq = 1` makes every
    /// step zero), which keeps parent edges strictly monotone.
    pub fn key(&self) -> RankKey {
        RankKey {
            rank: self.rank,
            depth: self.hop_depth,
        }
    }

    pub fn has_parent(&self, u: NodeId) -> bool {
        self.parents.iter().any(|&(p, _)| p == u)
    }

    fn in_dag(&self) -> bool {
        self.membership != Membership::Outside
    }
}

/// Rank with hop-depth tie-break.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankKey {
    pub rank: f64,
    pub depth: u32,
}

impl PartialOrd for RankKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.rank.partial_cmp(&other.rank)? {
            Ordering::Equal => Some(self.depth.cmp(&other.depth)),
            o => Some(o),
        }
    }
}

/// A node may take `candidate` as a parent only if the candidate is strictly
/// closer to the root, and never while it is deliberately leaving to rejoin
/// deeper.
pub fn loop_safe(state: &DodagNodeState, candidate_rank: f64, leaving: bool) -> bool {
    if leaving {
        return false;
    }
    match state.membership {
        Membership::Outside | Membership::FloatingRoot => true,
        Membership::Member => candidate_rank < state.rank,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MessageKind {
    Dis,
    Dio,
    Dao,
}

/// What a DIO advertises (and a DAO carries about its sender).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advert {
    pub membership: Membership,
    pub rank: f64,
    pub hop_depth: u32,
    pub dodag: NodeId,
    pub grounded: bool,
}

impl Advert {
    fn key(&self) -> RankKey {
        RankKey {
            rank: self.rank,
            depth: self.hop_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlMessage {
    pub kind: MessageKind,
    pub from: NodeId,
    pub to: NodeId,
    pub payload: Advert,
}

/// Request from a parent candidate to attempt direct-link generation
/// towards a child.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationTask {
    pub child: NodeId,
    pub parent: NodeId,
}

/// Messages and generation requests produced by one node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reaction {
    pub messages: Vec<ControlMessage>,
    pub generation: Vec<GenerationTask>,
}

#[derive(Debug, Clone, Copy)]
struct NeighborEntry {
    id: NodeId,
    advert: Option<Advert>,
    /// Unit time of the last generation attempt on this edge.
    tried_at: u64,
    /// Unit time a DAO was last sent over this edge.
    requested_at: u64,
}

const NEVER: u64 = u64::MAX;

/// A node's protocol state machine: state plus what it has heard from its
/// neighbours.
#[derive(Debug, Clone)]
pub struct DodagNode {
    pub id: NodeId,
    pub state: DodagNodeState,
    table: ArrayVec<NeighborEntry, 4>,
    /// Neighbour a join DAO is outstanding with.
    awaiting: Option<NodeId>,
    dirty: bool,
}

/// Context a node needs to react to messages.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext<'a> {
    pub steps: &'a RankSteps,
    pub root: NodeId,
    pub now: u64,
    pub greedy: bool,
}

impl DodagNode {
    pub fn new(topo: &PhysicalTopology, id: NodeId, root: NodeId) -> Self {
        let table = topo
            .neighbors(id)
            .iter()
            .map(|&(w, _)| NeighborEntry {
                id: w,
                advert: None,
                tried_at: NEVER,
                requested_at: NEVER,
            })
            .collect();
        let state = if id == root {
            DodagNodeState::new_root(id)
        } else {
            DodagNodeState::outside(id)
        };
        DodagNode {
            id,
            state,
            table,
            awaiting: None,
            dirty: true,
        }
    }

    fn reset(&mut self, root: NodeId) {
        self.state = if self.id == root {
            DodagNodeState::new_root(self.id)
        } else {
            DodagNodeState::outside(self.id)
        };
        for entry in &mut self.table {
            entry.advert = None;
            entry.tried_at = NEVER;
            entry.requested_at = NEVER;
        }
        self.awaiting = None;
        self.dirty = true;
    }

    pub fn grounded(&self, root: NodeId) -> bool {
        self.state.membership == Membership::Member && self.state.dodag == root
    }

    fn advert(&self, root: NodeId) -> Advert {
        Advert {
            membership: self.state.membership,
            rank: self.state.rank,
            hop_depth: self.state.hop_depth,
            dodag: self.state.dodag,
            grounded: self.grounded(root),
        }
    }

    fn message(&self, kind: MessageKind, to: NodeId, root: NodeId) -> ControlMessage {
        ControlMessage {
            kind,
            from: self.id,
            to,
            payload: self.advert(root),
        }
    }

    fn entry_mut(&mut self, w: NodeId) -> Option<&mut NeighborEntry> {
        self.table.iter_mut().find(|e| e.id == w)
    }

    fn broadcast(&self, kind: MessageKind, root: NodeId, out: &mut Vec<ControlMessage>) {
        for entry in &self.table {
            out.push(self.message(kind, entry.id, root));
        }
    }

    /// Unit-time start: nodes without a grounded attachment solicit DIOs.
    pub fn on_unit_start(&mut self, ctx: &NodeContext<'_>, out: &mut Vec<ControlMessage>) {
        self.awaiting = None;
        self.dirty = true;
        if matches!(self.state.membership, Membership::Outside | Membership::FloatingRoot) {
            self.broadcast(MessageKind::Dis, ctx.root, out);
        }
    }

    /// Handles one message. Parent selection is deferred to [`Self::decide`]
    /// so that every DIO delivered in the same micro-tick is considered.
    pub fn handle(
        &mut self,
        msg: &ControlMessage,
        ctx: &NodeContext<'_>,
        out: &mut Vec<ControlMessage>,
        tasks: &mut Vec<GenerationTask>,
    ) {
        let from = msg.from;
        if self.entry_mut(from).is_none() {
            // Not a physical neighbour: malformed, ignored.
            return;
        }
        match msg.kind {
            MessageKind::Dis => {
                if self.state.membership == Membership::Member {
                    out.push(self.message(MessageKind::Dio, from, ctx.root));
                }
                if self.awaiting == Some(from) {
                    // Our DAO target answered with a solicitation: it is not a member.
                    self.awaiting = None;
                }
                if let Some(entry) = self.entry_mut(from) {
                    entry.advert = None;
                }
                self.dirty = true;
            }
            MessageKind::Dio => {
                if let Some(entry) = self.entry_mut(from) {
                    entry.advert = Some(msg.payload);
                }
                if self.awaiting == Some(from) {
                    // A DIO from the DAO target is a refusal.
                    self.awaiting = None;
                }
                self.dirty = true;
            }
            MessageKind::Dao => {
                let child = msg.payload;
                let accept = match self.state.membership {
                    Membership::Member => {
                        if child.membership == Membership::Member && child.grounded {
                            // Additional parent: only for strictly deeper
                            // nodes of the same DAG.
                            child.dodag == self.state.dodag && self.state.key() < child.key()
                        } else {
                            self.grounded(ctx.root)
                        }
                    }
                    _ => false,
                };
                if accept {
                    tasks.push(GenerationTask {
                        child: from,
                        parent: self.id,
                    });
                } else if self.state.membership == Membership::Member {
                    out.push(self.message(MessageKind::Dio, from, ctx.root));
                } else {
                    out.push(self.message(MessageKind::Dis, from, ctx.root));
                }
            }
        }
    }

    fn needs_ground(&self, root: NodeId) -> bool {
        !self.state.root && !self.grounded(root)
    }

    /// Chooses parents from the neighbour table and emits DAOs.
    pub fn decide(&mut self, ctx: &NodeContext<'_>, out: &mut Vec<ControlMessage>) {
        self.dirty = false;
        if self.state.root {
            return;
        }
        if self.needs_ground(ctx.root) {
            if self.awaiting.is_some() {
                return;
            }
            let mut best: Option<(f64, NodeId)> = None;
            for entry in &self.table {
                let Some(ad) = entry.advert else { continue };
                if !ad.grounded || entry.tried_at == ctx.now {
                    continue;
                }
                let step = ctx.steps.step(ad.hop_depth);
                let better = match best {
                    None => true,
                    Some((s, id)) => step < s || (step == s && entry.id < id),
                };
                if better {
                    best = Some((step, entry.id));
                }
            }
            if let Some((_, target)) = best {
                self.awaiting = Some(target);
                if let Some(entry) = self.entry_mut(target) {
                    entry.requested_at = ctx.now;
                }
                out.push(self.message(MessageKind::Dao, target, ctx.root));
            }
            return;
        }

        if ctx.greedy && self.wants_greedy_rejoin() {
            return;
        }
        // Grounded member: look for additional, strictly shallower parents.
        let mut open = MAX_PARENTS - self.state.parents.len();
        let key = self.state.key();
        let me = self.message(MessageKind::Dao, self.id, ctx.root);
        for entry in &mut self.table {
            if open == 0 {
                break;
            }
            let Some(ad) = entry.advert else { continue };
            let eligible = ad.grounded
                && ad.key() < key
                && entry.tried_at != ctx.now
                && entry.requested_at != ctx.now
                && !self.state.parents.iter().any(|&(p, _)| p == entry.id);
            if eligible {
                entry.requested_at = ctx.now;
                out.push(ControlMessage { to: entry.id, ..me });
                open -= 1;
            }
        }
    }

    /// Greedy nodes want every neighbour as a parent: a grounded neighbour at
    /// the same or greater rank that is not yet a parent makes them leave and
    /// rejoin deeper.
    // An incomparable key counts as "not lower".
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn wants_greedy_rejoin(&self) -> bool {
        let key = self.state.key();
        self.table.iter().any(|e| {
            e.advert.is_some_and(|ad| {
                ad.grounded && !(ad.key() < key) && !self.state.has_parent(e.id)
            })
        })
    }

    fn note_attempt(&mut self, w: NodeId, now: u64) {
        if let Some(entry) = self.entry_mut(w) {
            entry.tried_at = now;
        }
    }
}

/// Applies one message to a standalone node and runs its decision step.
pub fn process_control_message(node: &mut DodagNode, msg: &ControlMessage, ctx: &NodeContext<'_>) -> Reaction {
    let mut reaction = Reaction::default();
    node.handle(msg, ctx, &mut reaction.messages, &mut reaction.generation);
    node.decide(ctx, &mut reaction.messages);
    reaction
}

/// Tunables of the DODAG world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DodagConfig {
    pub objective: ObjectiveFunction,
    /// Let nodes leave and rejoin deeper to collect more parents (the
    /// behaviour the rank rule exists to prevent). Off by default.
    pub greedy: bool,
    pub classical_latency_ticks: u32,
    /// Micro-ticks of message exchange per unit time; `None` means `4·side`.
    pub micro_tick_budget: Option<u32>,
    /// Root node; `None` means the grid centre.
    pub root: Option<NodeId>,
}

impl Default for DodagConfig {
    fn default() -> Self {
        DodagConfig {
            objective: ObjectiveFunction::Connectivity,
            greedy: false,
            classical_latency_ticks: 1,
            micro_tick_budget: None,
            root: None,
        }
    }
}

/// Grid centre `(⌊side/2⌋, ⌊side/2⌋)`.
pub fn default_root(side: usize) -> NodeId {
    node_at(side / 2, side / 2, side)
}

/// All nodes of a DODAG network plus the live links they share.
#[derive(Debug, Clone)]
pub struct DodagWorld<'a> {
    topo: &'a PhysicalTopology,
    params: SimParams,
    cfg: DodagConfig,
    steps: RankSteps,
    root: NodeId,
    budget: u32,
    dirty: Vec<NodeId>,
    pub nodes: Vec<DodagNode>,
    pub instant: InstantTopology,
    now: u64,
    edge_tried: Vec<u64>,
    /// Ring of pending message batches, indexed by delivery micro-tick.
    pending: Vec<Vec<ControlMessage>>,
    batch: Vec<ControlMessage>,
    tasks: Vec<GenerationTask>,
    outbox: Vec<ControlMessage>,
    heap: BinaryHeap<Reverse<(u32, NodeId)>>,
    queued: Vec<bool>,
    dist_s: Vec<u32>,
    dist_t: Vec<u32>,
    pred_s: Vec<NodeId>,
    pred_t: Vec<NodeId>,
    lost: Vec<EdgeId>,
    pub trace: Option<Trace>,
    pub stats: DodagStats,
}

/// Work counters, accumulated since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DodagStats {
    pub micro_ticks: u64,
    pub messages: u64,
    pub generation_attempts: u64,
}

const UNSEEN: u32 = u32::MAX;

impl<'a> DodagWorld<'a> {
    pub fn new(topo: &'a PhysicalTopology, params: SimParams, cfg: DodagConfig) -> Result<Self> {
        params.validate()?;
        let root = match cfg.root {
            Some(r) => {
                topo.check(r)?;
                r
            }
            None => default_root(topo.side().ok_or(Error::NotAGrid)?),
        };
        let budget = cfg
            .micro_tick_budget
            .unwrap_or(4 * topo.side().unwrap_or(topo.node_count()) as u32)
            .max(1);
        let latency = cfg.classical_latency_ticks.max(1) as usize;
        let n = topo.node_count();
        Ok(DodagWorld {
            topo,
            params,
            cfg,
            steps: RankSteps::new(&params, cfg.objective, n + 1),
            root,
            budget,
            dirty: Vec::with_capacity(n),
            nodes: topo.nodes().map(|v| DodagNode::new(topo, v, root)).collect(),
            instant: InstantTopology::new(topo),
            now: 0,
            edge_tried: vec![NEVER; topo.edge_count()],
            pending: vec![Vec::new(); latency + 1],
            batch: Vec::new(),
            tasks: Vec::new(),
            outbox: Vec::new(),
            heap: BinaryHeap::new(),
            queued: vec![false; n],
            dist_s: vec![UNSEEN; n],
            dist_t: vec![UNSEEN; n],
            pred_s: vec![NodeId(0); n],
            pred_t: vec![NodeId(0); n],
            lost: Vec::new(),
            trace: None,
            stats: DodagStats::default(),
        })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn topology(&self) -> &PhysicalTopology {
        self.topo
    }

    pub fn state(&self, v: NodeId) -> &DodagNodeState {
        &self.nodes[v.index()].state
    }

    pub fn is_grounded(&self, v: NodeId) -> bool {
        v == self.root || self.nodes[v.index()].grounded(self.root)
    }

    /// Back to the initial state: only the root is a member, no links.
    pub fn reset(&mut self) {
        for node in &mut self.nodes {
            node.reset(self.root);
        }
        self.instant.clear();
        self.now = 0;
        self.edge_tried.iter_mut().for_each(|t| *t = NEVER);
        self.pending.iter_mut().for_each(Vec::clear);
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

    /// Advances one unit time: expiry sweep, then message exchange and
    /// generation attempts until quiet or out of micro-ticks. The tick
    /// counter moves forward at the end.
    pub fn run_unit_time(&mut self, stream: &mut RngStream) {
        self.expire();
        let mut out = std::mem::take(&mut self.outbox);
        let ctx = NodeContext {
            steps: &self.steps,
            root: self.root,
            now: self.now,
            greedy: self.cfg.greedy,
        };
        for node in &mut self.nodes {
            node.on_unit_start(&ctx, &mut out);
        }
        self.dirty.clear();
        self.dirty.extend(self.topo.nodes());
        self.post(&mut out);
        for _ in 0..self.budget {
            if !self.micro_tick(stream, &mut out) {
                break;
            }
        }
        self.outbox = out;
        self.pending.iter_mut().for_each(Vec::clear);
        for &v in &self.dirty {
            self.nodes[v.index()].dirty = false;
        }
        self.dirty.clear();
        self.now += 1;
    }

    fn post(&mut self, out: &mut Vec<ControlMessage>) {
        let latency = self.cfg.classical_latency_ticks.max(1) as usize;
        self.pending[latency].append(out);
    }

    fn mark_dirty(&mut self, v: NodeId) {
        let node = &mut self.nodes[v.index()];
        if !node.dirty {
            node.dirty = true;
            self.dirty.push(v);
        }
    }

    /// One micro-tick. Returns false when nothing remains to do.
    fn micro_tick(&mut self, stream: &mut RngStream, out: &mut Vec<ControlMessage>) -> bool {
        self.pending.rotate_left(1);
        let mut batch = std::mem::take(&mut self.batch);
        std::mem::swap(&mut batch, &mut self.pending[0]);
        if batch.is_empty() && self.dirty.is_empty() {
            self.batch = batch;
            return self.pending.iter().any(|q| !q.is_empty());
        }
        batch.sort_unstable_by_key(|m| (u64::from(m.from.0) << 34) | ((m.kind as u64) << 32) | u64::from(m.to.0));
        self.stats.micro_ticks += 1;
        self.stats.messages += batch.len() as u64;

        for msg in &batch {
            if self.trace.is_some() {
                self.log(msg.from, kind_name(msg.kind), || format!("to={}", msg.to));
            }
            let ctx = NodeContext {
                steps: &self.steps,
                root: self.root,
                now: self.now,
                greedy: self.cfg.greedy,
            };
            let node = &mut self.nodes[msg.to.index()];
            let was_dirty = node.dirty;
            node.handle(msg, &ctx, out, &mut self.tasks);
            if node.dirty && !was_dirty {
                self.dirty.push(msg.to);
            }
            while let Some(task) = self.tasks.pop() {
                self.run_generation(task, stream, out);
            }
        }
        batch.clear();
        self.batch = batch;

        let mut dirty = std::mem::take(&mut self.dirty);
        dirty.sort_unstable();
        for &v in &dirty {
            self.nodes[v.index()].dirty = false;
        }
        for &v in &dirty {
            if self.cfg.greedy && self.greedy_leave(v, out) {
                continue;
            }
            let ctx = NodeContext {
                steps: &self.steps,
                root: self.root,
                now: self.now,
                greedy: self.cfg.greedy,
            };
            self.nodes[v.index()].decide(&ctx, out);
        }
        dirty.clear();
        // Nodes dirtied during decisions (greedy leaves) wait for the next
        // micro-tick.
        dirty.append(&mut self.dirty);
        self.dirty = dirty;
        self.post(out);
        true
    }

    fn greedy_leave(&mut self, v: NodeId, out: &mut Vec<ControlMessage>) -> bool {
        let node = &self.nodes[v.index()];
        if node.state.root || !node.grounded(self.root) || !node.wants_greedy_rejoin() {
            return false;
        }
        self.log(v, "leave", || "greedy".into());
        let node = &mut self.nodes[v.index()];
        node.state = DodagNodeState::outside(v);
        node.broadcast(MessageKind::Dis, self.root, out);
        self.mark_dirty(v);
        self.seed_children(v);
        self.reconcile(out);
        true
    }

    fn run_generation(&mut self, task: GenerationTask, stream: &mut RngStream, out: &mut Vec<ControlMessage>) {
        let GenerationTask { child, parent } = task;
        let Some(e) = self.topo.edge_between(child, parent) else {
            return;
        };
        let ok = if self.instant.has_link(e) {
            true
        } else if self.edge_tried[e.index()] == self.now {
            false
        } else {
            self.edge_tried[e.index()] = self.now;
            self.stats.generation_attempts += 1;
            self.nodes[child.index()].note_attempt(parent, self.now);
            self.nodes[parent.index()].note_attempt(child, self.now);
            stream.chance(self.params.p) && self.instant.insert_direct(self.topo, e, self.now, self.params.t_co).is_ok()
        };
        self.log(child, "generate", || format!("parent={parent} ok={ok}"));
        if ok {
            self.attach(child, parent, out);
        } else {
            let node = &mut self.nodes[child.index()];
            if node.awaiting == Some(parent) {
                node.awaiting = None;
            }
            self.mark_dirty(child);
        }
    }

    /// Link to `parent` now exists; make it a parent edge if still valid.
    fn attach(&mut self, child: NodeId, parent: NodeId, out: &mut Vec<ControlMessage>) {
        let p = self.nodes[parent.index()].state.clone();
        let root = self.root;
        self.mark_dirty(child);
        let node = &mut self.nodes[child.index()];
        if node.awaiting == Some(parent) {
            node.awaiting = None;
        }
        if p.membership != Membership::Member {
            return;
        }
        let step = self.steps.step(p.hop_depth);
        let rank = child_rank(p.rank, step);
        if node.needs_ground(root) {
            if p.dodag != root {
                return;
            }
            let was = node.state.membership;
            node.state.membership = Membership::Member;
            node.state.parents.clear();
            node.state.parents.push((parent, step));
            node.state.rank = rank;
            node.state.hop_depth = p.hop_depth + 1;
            node.state.dodag = root;
            node.broadcast(MessageKind::Dio, root, out);
            self.log(child, "join", || {
                format!("parent={parent} rank={rank:.6} depth={} from={was:?}", p.hop_depth + 1)
            });
            self.seed_children(child);
            self.reconcile(out);
        } else if !node.state.root
            && p.dodag == node.state.dodag
            && p.key() < node.state.key()
            && !node.state.has_parent(parent)
            && node.state.parents.len() < MAX_PARENTS
        {
            node.state.parents.push((parent, step));
            self.log(child, "add_parent", || format!("parent={parent}"));
        }
    }

    /// Removes parent relations carried by `e` (its link is gone) and
    /// repairs the DAG. Returns the DIOs announcing changed ranks.
    pub fn on_link_decohered(&mut self, e: EdgeId) -> Vec<ControlMessage> {
        let mut out = Vec::new();
        self.drop_edge(e);
        self.reconcile(&mut out);
        out
    }

    fn drop_edge(&mut self, e: EdgeId) {
        let (a, b) = self.topo.endpoints(e);
        for (child, parent) in [(a, b), (b, a)] {
            let state = &mut self.nodes[child.index()].state;
            if let Some(pos) = state.parents.iter().position(|&(p, _)| p == parent) {
                state.parents.remove(pos);
                self.push_reconcile(child);
            }
        }
    }

    fn expire(&mut self) {
        let mut lost = std::mem::take(&mut self.lost);
        self.instant.expire_into(self.now, |e, _| lost.extend(e));
        for &e in &lost {
            self.drop_edge(e);
        }
        lost.clear();
        self.lost = lost;
        let mut out = std::mem::take(&mut self.outbox);
        self.reconcile(&mut out);
        self.post(&mut out);
        self.outbox = out;
    }

    fn push_reconcile(&mut self, v: NodeId) {
        if !self.queued[v.index()] {
            self.queued[v.index()] = true;
            let depth = self.nodes[v.index()].state.hop_depth;
            self.heap.push(Reverse((depth, v)));
        }
    }

    fn seed_children(&mut self, v: NodeId) {
        for &(w, _) in self.topo.neighbors(v) {
            if self.nodes[w.index()].state.has_parent(v) {
                self.push_reconcile(w);
            }
        }
    }

    /// Re-derives rank, depth and DAG membership top-down for queued nodes
    /// and their descendants. Only nodes whose advertised state changed
    /// announce it.
    fn reconcile(&mut self, out: &mut Vec<ControlMessage>) {
        while let Some(Reverse((_, v))) = self.heap.pop() {
            self.queued[v.index()] = false;
            let before = self.nodes[v.index()].advert(self.root);
            if self.reevaluate(v) {
                self.mark_dirty(v);
                if self.nodes[v.index()].advert(self.root) != before {
                    self.nodes[v.index()].broadcast(MessageKind::Dio, self.root, out);
                    self.seed_children(v);
                }
            }
        }
    }

    /// Recomputes `v` from its surviving parents. Returns whether anything
    /// changed.
    fn reevaluate(&mut self, v: NodeId) -> bool {
        let state = &self.nodes[v.index()].state;
        if state.root || state.membership != Membership::Member {
            return false;
        }
        let root = self.root;
        // (parent, rank key, dodag, grounded)
        let mut cands: ArrayVec<(NodeId, RankKey, NodeId, bool), MAX_PARENTS> = ArrayVec::new();
        for &(u, _) in &state.parents {
            let e = self.topo.edge_between(u, v).expect("parents are neighbours");
            let pu = &self.nodes[u.index()].state;
            if self.instant.has_link(e) && pu.in_dag() {
                let grounded = pu.dodag == root && pu.membership == Membership::Member;
                cands.push((u, pu.key(), pu.dodag, grounded));
            }
        }
        if cands.is_empty() {
            let node = &mut self.nodes[v.index()];
            node.state.membership = Membership::FloatingRoot;
            node.state.parents.clear();
            node.state.dodag = v;
            self.log(v, "float", String::new);
            return true;
        }
        let any_grounded = cands.iter().any(|c| c.3);
        let steps = &self.steps;
        let &(pref, pkey, group, _) = cands
            .iter()
            .filter(|c| !any_grounded || c.3)
            .min_by(|a, b| {
                let (xa, xb) = (steps.step(a.1.depth), steps.step(b.1.depth));
                xa.partial_cmp(&xb).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
            })
            .expect("non-empty candidate set");
        let step = steps.step(pkey.depth);
        let new_key = RankKey {
            rank: child_rank(pkey.rank, step),
            depth: pkey.depth + 1,
        };
        let mut parents: ArrayVec<(NodeId, f64), MAX_PARENTS> = ArrayVec::new();
        parents.push((pref, step));
        for &(u, key, dodag, _) in &cands {
            if u != pref && dodag == group && key < new_key {
                parents.push((u, steps.step(key.depth)));
            }
        }
        let state = &mut self.nodes[v.index()].state;
        let changed = state.parents != parents || state.key() != new_key || state.dodag != group;
        state.parents = parents;
        state.rank = new_key.rank;
        state.hop_depth = new_key.depth;
        state.dodag = group;
        changed
    }

    /// Closest common ancestor route from `s` to `t` over parent links not in
    /// `excluded` (indexed by edge id). With `via_root` the meeting point is
    /// forced to be the root.
    pub fn find_route(&mut self, s: NodeId, t: NodeId, via_root: bool, excluded: &[bool]) -> RouteLookup {
        for v in [s, t] {
            if !self.is_grounded(v) {
                return RouteLookup::NotJoined(v);
            }
        }
        let mut dist_s = std::mem::take(&mut self.dist_s);
        let mut dist_t = std::mem::take(&mut self.dist_t);
        let mut pred_s = std::mem::take(&mut self.pred_s);
        let mut pred_t = std::mem::take(&mut self.pred_t);
        let mut touched_s = Vec::new();
        let mut touched_t = Vec::new();
        self.upward_bfs(s, excluded, &mut dist_s, &mut pred_s, &mut touched_s);
        self.upward_bfs(t, excluded, &mut dist_t, &mut pred_t, &mut touched_t);

        let meet = if via_root {
            (dist_s[self.root.index()] != UNSEEN && dist_t[self.root.index()] != UNSEEN).then_some(self.root)
        } else {
            touched_s
                .iter()
                .copied()
                .filter(|v| dist_t[v.index()] != UNSEEN)
                .min_by_key(|v| (dist_s[v.index()] + dist_t[v.index()], *v))
        };
        let result = match meet {
            None => RouteLookup::NoRoute,
            Some(c) => {
                let mut path = Vec::with_capacity((dist_s[c.index()] + dist_t[c.index()] + 1) as usize);
                let mut v = c;
                while v != s {
                    path.push(v);
                    v = pred_s[v.index()];
                }
                path.push(s);
                path.reverse();
                let mut v = c;
                while v != t {
                    v = pred_t[v.index()];
                    path.push(v);
                }
                RouteLookup::Path(path)
            }
        };
        for v in touched_s {
            dist_s[v.index()] = UNSEEN;
        }
        for v in touched_t {
            dist_t[v.index()] = UNSEEN;
        }
        self.dist_s = dist_s;
        self.dist_t = dist_t;
        self.pred_s = pred_s;
        self.pred_t = pred_t;
        result
    }

    fn upward_bfs(&self, start: NodeId, excluded: &[bool], dist: &mut [u32], pred: &mut [NodeId], seen: &mut Vec<NodeId>) {
        dist[start.index()] = 0;
        seen.push(start);
        let mut head = 0;
        while head < seen.len() {
            let v = seen[head];
            head += 1;
            // Lowest-rank parents first so ties follow the routing preference.
            let mut ps: ArrayVec<(NodeId, RankKey), MAX_PARENTS> = self.nodes[v.index()]
                .state
                .parents
                .iter()
                .map(|&(u, _)| (u, self.nodes[u.index()].state.key()))
                .collect();
            ps.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
            for (u, _) in ps {
                if dist[u.index()] != UNSEEN {
                    continue;
                }
                let e = self.topo.edge_between(u, v).expect("parent edge");
                if excluded.get(e.index()).copied().unwrap_or(false) || !self.instant.has_link(e) {
                    continue;
                }
                dist[u.index()] = dist[v.index()] + 1;
                pred[u.index()] = v;
                seen.push(u);
            }
        }
    }

    /// Routes a request and performs the swaps along the route.
    pub fn navigate(&mut self, s: NodeId, t: NodeId, via_root: bool, mode: SwapMode, stream: &mut RngStream) -> Result<NavigationResult> {
        if s == t {
            return Err(Error::SameEndpoints);
        }
        match self.find_route(s, t, via_root, &[]) {
            RouteLookup::NotJoined(v) => Err(Error::NotJoined(v.0)),
            RouteLookup::NoRoute => Ok(NavigationResult::failed(Vec::new())),
            RouteLookup::Path(path) => Ok(self.execute(path, mode, stream)),
        }
    }

    /// Swaps along an already computed route and repairs the DAG for every
    /// consumed link.
    pub fn execute(&mut self, path: Vec<NodeId>, mode: SwapMode, stream: &mut RngStream) -> NavigationResult {
        let params = self.params;
        let result = execute_route(self.topo, &mut self.instant, path, &params, self.now, mode, stream);
        for &e in &result.consumed {
            self.drop_edge(e);
        }
        let mut out = std::mem::take(&mut self.outbox);
        self.reconcile(&mut out);
        self.post(&mut out);
        self.outbox = out;
        result
    }

    /// Structural checks used by tests: acyclic parents, strict rank
    /// monotonicity, parent links live, root minimal.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let root_key = self.state(self.root).key();
        for node in &self.nodes {
            let s = &node.state;
            if s.membership == Membership::Member && !s.root && s.parents.is_empty() {
                return Err(format!("member {} without parent", node.id));
            }
            if s.in_dag() && !s.root && s.key() < root_key {
                return Err(format!("node {} ranks below the root", node.id));
            }
            for &(u, _) in &s.parents {
                let pu = &self.nodes[u.index()].state;
                if !(pu.key() < s.key()) {
                    return Err(format!("parent {u} of {} does not rank lower", node.id));
                }
                if pu.dodag != s.dodag {
                    return Err(format!("parent {u} of {} is in another DAG", node.id));
                }
                let e = self.topo.edge_between(u, node.id).ok_or("parent not adjacent")?;
                if !self.instant.has_link(e) {
                    return Err(format!("parent edge {u}-{} has no live link", node.id));
                }
            }
        }
        // Kahn's algorithm over parent edges.
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for node in &self.nodes {
            indeg[node.id.index()] = node.state.parents.len();
        }
        let mut children = vec![Vec::new(); n];
        for node in &self.nodes {
            for &(u, _) in &node.state.parents {
                children[u.index()].push(node.id);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut done = 0;
        while let Some(i) = ready.pop() {
            done += 1;
            for c in &children[i] {
                indeg[c.index()] -= 1;
                if indeg[c.index()] == 0 {
                    ready.push(c.index());
                }
            }
        }
        if done != n {
            return Err("parent graph has a cycle".into());
        }
        Ok(())
    }

    /// Number of nodes attached to the real root (root included).
    pub fn grounded_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.state.root || n.grounded(self.root)).count()
    }
}

fn kind_name(kind: MessageKind) -> &'static str {
    match kind {
        MessageKind::Dis => "DIS",
        MessageKind::Dio => "DIO",
        MessageKind::Dao => "DAO",
    }
}
