//! Monte-Carlo driver: ticks worlds forward, issues requests and aggregates
//! per-unit-time success statistics.

use rayon::prelude::*;

use crate::dodag::{DodagConfig, DodagWorld};
use crate::error::{Error, Result};
use crate::ghs::{GhsConfig, GhsWorld};
use crate::navigation::{NavigationResult, RouteLookup, SwapMode};
use crate::stochastic::{derive_stream, RngStream};
use crate::sync::{fill_external, internal_phase};
use crate::topology::{build_grid, l1_unchecked, InstantTopology, NodeId, PhysicalTopology, SimParams};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Sync,
    Dodag,
    Ghs,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sync => "sync",
            Protocol::Dodag => "dodag",
            Protocol::Ghs => "ghs",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sync" => Ok(Protocol::Sync),
            "dodag" => Ok(Protocol::Dodag),
            "ghs" => Ok(Protocol::Ghs),
            other => Err(Error::OutOfRange {
                name: "protocol",
                value: other.to_string(),
                range: "sync | dodag | ghs",
            }),
        }
    }
}

/// What an iteration records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measure {
    /// End-to-end entanglement delivered within the unit time.
    #[default]
    Rate,
    /// A route exists; swaps are not attempted.
    Hops,
}

/// How an async world carries state from one iteration to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regime {
    /// Every iteration starts from an empty network and runs its own warmup.
    #[default]
    Reset,
    /// Iterations are grouped into epochs of `epoch` consecutive indices.
    /// Each epoch warms one world up once; its iterations then issue one
    /// request per unit time against the continuously maintained network.
    Continuous { epoch: u64 },
}

/// One experiment point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub protocol: Protocol,
    pub params: SimParams,
    /// L1 distance of the sampled request pairs.
    pub distance: usize,
    pub iterations: u64,
    /// Maintenance unit times before the request; `None` uses
    /// `3·T_co + 2·side`.
    pub warmup_ticks: Option<u64>,
    /// Route through the DODAG root instead of the closest common ancestor.
    pub via_root_only: bool,
    pub multipath_k: u8,
    pub measure: Measure,
    pub regime: Regime,
    pub dodag: DodagConfig,
    pub ghs: GhsConfig,
}

impl ScenarioConfig {
    pub fn new(protocol: Protocol, params: SimParams, distance: usize) -> Self {
        ScenarioConfig {
            protocol,
            params,
            distance,
            iterations: 50_000,
            warmup_ticks: None,
            via_root_only: false,
            multipath_k: 1,
            measure: Measure::Rate,
            regime: Regime::Reset,
            dodag: DodagConfig::default(),
            ghs: GhsConfig::default(),
        }
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_ticks
            .unwrap_or(3 * self.params.t_co.warmup_units() + 2 * self.params.side as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.iterations == 0 {
            return Err(Error::OutOfRange {
                name: "iterations",
                value: "0".into(),
                range: ">= 1",
            });
        }
        let max_d = 2 * (self.params.side - 1);
        if self.distance == 0 || self.distance > max_d {
            return Err(Error::NoPairAtDistance {
                distance: self.distance,
                side: self.params.side,
            });
        }
        if self.regime == (Regime::Continuous { epoch: 0 }) {
            return Err(Error::OutOfRange {
                name: "epoch",
                value: "0".into(),
                range: ">= 1",
            });
        }
        if !(1..=4).contains(&self.multipath_k) {
            return Err(Error::OutOfRange {
                name: "k",
                value: self.multipath_k.to_string(),
                range: "1..=4",
            });
        }
        Ok(())
    }
}

/// Aggregated Monte-Carlo result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Delivered entanglements (single path: iterations with at least one).
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub stderr: f64,
    /// Mean route length over successful iterations.
    pub mean_hops: Option<f64>,
}

/// Per-iteration outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IterationOutcome {
    pub delivered: u32,
    /// Hop count of the shortest successful route.
    pub hops: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    successes: u64,
    squares: u64,
    trials: u64,
    hop_sum: u64,
    hop_count: u64,
}

impl Tally {
    fn add(&mut self, o: IterationOutcome) {
        self.trials += 1;
        self.successes += u64::from(o.delivered);
        self.squares += u64::from(o.delivered * o.delivered);
        if let Some(h) = o.hops {
            self.hop_sum += u64::from(h);
            self.hop_count += 1;
        }
    }

    fn merge(mut self, o: Tally) -> Tally {
        self.successes += o.successes;
        self.squares += o.squares;
        self.trials += o.trials;
        self.hop_sum += o.hop_sum;
        self.hop_count += o.hop_count;
        self
    }

    fn estimate(&self, k: u8) -> RateEstimate {
        let n = self.trials as f64;
        let rate = self.successes as f64 / n;
        let stderr = if k <= 1 {
            (rate * (1.0 - rate) / n).sqrt()
        } else {
            let var = (self.squares as f64 / n - rate * rate).max(0.0);
            (var / n).sqrt()
        };
        RateEstimate {
            successes: self.successes,
            trials: self.trials,
            rate,
            stderr,
            mean_hops: (self.hop_count > 0).then(|| self.hop_sum as f64 / self.hop_count as f64),
        }
    }
}

/// A network that maintains a routing structure across unit times.
pub trait RoutingWorld {
    fn reset(&mut self);
    /// Expiry, then one unit time of maintenance.
    fn run_unit_time(&mut self, stream: &mut RngStream);
    fn find_route(&mut self, s: NodeId, t: NodeId, via_root: bool, excluded: &[bool]) -> RouteLookup;
    /// Swaps along a route returned by [`Self::find_route`] and repairs the
    /// structure for every consumed link.
    fn execute(&mut self, path: Vec<NodeId>, mode: SwapMode, stream: &mut RngStream) -> NavigationResult;
    fn instant(&self) -> &InstantTopology;
    fn topology(&self) -> &PhysicalTopology;
}

impl RoutingWorld for DodagWorld<'_> {
    fn reset(&mut self) {
        DodagWorld::reset(self)
    }
    fn run_unit_time(&mut self, stream: &mut RngStream) {
        DodagWorld::run_unit_time(self, stream)
    }
    fn find_route(&mut self, s: NodeId, t: NodeId, via_root: bool, excluded: &[bool]) -> RouteLookup {
        DodagWorld::find_route(self, s, t, via_root, excluded)
    }
    fn execute(&mut self, path: Vec<NodeId>, mode: SwapMode, stream: &mut RngStream) -> NavigationResult {
        DodagWorld::execute(self, path, mode, stream)
    }
    fn instant(&self) -> &InstantTopology {
        &self.instant
    }
    fn topology(&self) -> &PhysicalTopology {
        DodagWorld::topology(self)
    }
}

impl RoutingWorld for GhsWorld<'_> {
    fn reset(&mut self) {
        GhsWorld::reset(self)
    }
    fn run_unit_time(&mut self, stream: &mut RngStream) {
        GhsWorld::run_unit_time(self, stream)
    }
    fn find_route(&mut self, s: NodeId, t: NodeId, _via_root: bool, excluded: &[bool]) -> RouteLookup {
        GhsWorld::find_route(self, s, t, excluded)
    }
    fn execute(&mut self, path: Vec<NodeId>, mode: SwapMode, stream: &mut RngStream) -> NavigationResult {
        GhsWorld::execute(self, path, mode, stream)
    }
    fn instant(&self) -> &InstantTopology {
        &self.instant
    }
    fn topology(&self) -> &PhysicalTopology {
        GhsWorld::topology(self)
    }
}

/// Outcome of a multipath request.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MultipathOutcome {
    /// End-to-end entanglements delivered.
    pub delivered: u32,
    pub routes: Vec<NavigationResult>,
    /// Set when an endpoint was not attached.
    pub not_joined: bool,
}

/// Extracts up to `k` link-disjoint routes with the protocol's own route
/// search, then swaps along each.
pub fn multipath_disjoint_search<W: RoutingWorld + ?Sized>(
    world: &mut W,
    s: NodeId,
    t: NodeId,
    k: u8,
    via_root: bool,
    mode: SwapMode,
    stream: &mut RngStream,
) -> MultipathOutcome {
    let mut excluded = vec![false; world.topology().edge_count()];
    let mut paths = Vec::new();
    let mut out = MultipathOutcome::default();
    for _ in 0..k.clamp(1, 4) {
        match world.find_route(s, t, via_root, &excluded) {
            RouteLookup::Path(path) => {
                for w in path.windows(2) {
                    let e = world.topology().edge_between(w[0], w[1]).expect("route edge");
                    excluded[e.index()] = true;
                }
                paths.push(path);
            }
            RouteLookup::NotJoined(_) => {
                out.not_joined = true;
                break;
            }
            RouteLookup::NoRoute => break,
        }
    }
    for path in paths {
        let r = world.execute(path, mode, stream);
        out.delivered += u32::from(r.success);
        out.routes.push(r);
    }
    out
}

/// All ordered pairs at L1 distance `d`.
pub fn pairs_at_distance(topo: &PhysicalTopology, d: usize) -> Result<Vec<(NodeId, NodeId)>> {
    let side = topo.side().ok_or(Error::NotAGrid)?;
    let pairs: Vec<_> = topo
        .nodes()
        .flat_map(|s| topo.nodes().map(move |t| (s, t)))
        .filter(|&(s, t)| l1_unchecked(s, t, side) == d)
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoPairAtDistance { distance: d, side });
    }
    Ok(pairs)
}

enum Runner<'a> {
    Sync(InstantTopology),
    Dodag(DodagWorld<'a>),
    Ghs(GhsWorld<'a>),
}

struct Context<'a> {
    cfg: &'a ScenarioConfig,
    topo: &'a PhysicalTopology,
    pairs: Vec<(NodeId, NodeId)>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ScenarioConfig, topo: &'a PhysicalTopology) -> Result<Self> {
        cfg.validate()?;
        let pairs = pairs_at_distance(topo, cfg.distance)?;
        Ok(Context { cfg, topo, pairs })
    }

    fn runner(&self) -> Result<Runner<'a>> {
        let cfg = self.cfg;
        Ok(match cfg.protocol {
            Protocol::Sync => Runner::Sync(InstantTopology::new(self.topo)),
            Protocol::Dodag => Runner::Dodag(DodagWorld::new(self.topo, cfg.params, cfg.dodag)?),
            Protocol::Ghs => Runner::Ghs(GhsWorld::new(self.topo, cfg.params, cfg.ghs)?),
        })
    }

    fn unit_len(&self) -> u64 {
        match (self.cfg.regime, self.cfg.protocol) {
            (Regime::Continuous { epoch }, Protocol::Dodag | Protocol::Ghs) => epoch,
            _ => CHUNK,
        }
    }

    fn continuous(&self) -> bool {
        self.cfg.protocol != Protocol::Sync && matches!(self.cfg.regime, Regime::Continuous { .. })
    }

    /// Prepares `runner` for the work unit `unit`. In the continuous regime
    /// this is the only reset and warmup its world gets.
    fn start_unit(&self, runner: &mut Runner<'a>, unit: u64) {
        if !self.continuous() {
            return;
        }
        let mut stream = derive_stream(self.cfg.params.seed, EPOCH_STREAMS | unit);
        match runner {
            Runner::Sync(_) => {}
            Runner::Dodag(w) => self.warm_up(w, &mut stream),
            Runner::Ghs(w) => self.warm_up(w, &mut stream),
        }
    }

    fn warm_up<W: RoutingWorld>(&self, world: &mut W, stream: &mut RngStream) {
        world.reset();
        for _ in 0..self.cfg.warmup() {
            world.run_unit_time(stream);
        }
    }

    /// Runs the work unit `unit` over iterations `[unit·len, end)`.
    fn run_unit(&self, runner: &mut Runner<'a>, unit: u64, end: u64) -> Tally {
        self.start_unit(runner, unit);
        let mut tally = Tally::default();
        for i in unit * self.unit_len()..end {
            tally.add(self.iteration(runner, i));
        }
        tally
    }

    fn iteration(&self, runner: &mut Runner<'a>, i: u64) -> IterationOutcome {
        let cfg = self.cfg;
        let mut stream = derive_stream(cfg.params.seed, i);
        let (s, t) = self.pairs[stream.index(self.pairs.len())];
        match runner {
            Runner::Sync(instant) => self.sync_iteration(instant, s, t, &mut stream),
            Runner::Dodag(w) => self.async_iteration(w, s, t, &mut stream),
            Runner::Ghs(w) => self.async_iteration(w, s, t, &mut stream),
        }
    }

    fn sync_iteration(&self, instant: &mut InstantTopology, s: NodeId, t: NodeId, stream: &mut RngStream) -> IterationOutcome {
        let cfg = self.cfg;
        instant.clear();
        fill_external(self.topo, instant, &cfg.params, stream, 0);
        let k = u32::from(cfg.multipath_k);
        match cfg.measure {
            Measure::Rate => {
                let slot = internal_phase(self.topo, instant, s, t, &cfg.params, stream).expect("validated pair");
                let delivered = if k <= 1 {
                    u32::from(slot.success_count > 0)
                } else {
                    slot.success_count.min(k)
                };
                IterationOutcome {
                    delivered,
                    hops: slot.shortest_success,
                }
            }
            Measure::Hops => {
                let mut ideal = cfg.params;
                ideal.q = 1.0;
                let slot = internal_phase(self.topo, instant, s, t, &ideal, stream).expect("validated pair");
                let found = slot.chain_lengths.len() as u32;
                IterationOutcome {
                    delivered: if k <= 1 { u32::from(found > 0) } else { found.min(k) },
                    hops: slot.chain_lengths.iter().copied().min(),
                }
            }
        }
    }

    fn async_iteration<W: RoutingWorld>(&self, world: &mut W, s: NodeId, t: NodeId, stream: &mut RngStream) -> IterationOutcome {
        let cfg = self.cfg;
        if !self.continuous() {
            self.warm_up(world, stream);
        }
        world.run_unit_time(stream);
        let mode = match cfg.measure {
            Measure::Rate => SwapMode::Swap,
            Measure::Hops => SwapMode::PathfindingOnly,
        };
        let out = multipath_disjoint_search(world, s, t, cfg.multipath_k, cfg.via_root_only, mode, stream);
        let hops = out
            .routes
            .iter()
            .filter(|r| r.success)
            .map(|r| r.hops() as u32)
            .min();
        let delivered = if cfg.multipath_k <= 1 {
            out.delivered.min(1)
        } else {
            out.delivered
        };
        IterationOutcome { delivered, hops }
    }
}

/// Iterations per parallel work unit; a world is built once per unit.
const CHUNK: u64 = 64;

/// Stream ids at or above this value seed epoch warmups; iteration streams
/// stay below it.
const EPOCH_STREAMS: u64 = 1 << 63;

/// Runs `cfg.iterations` iterations on the current rayon pool. Iteration `i`
/// draws only from stream `i` (plus its epoch's warmup stream in the
/// continuous regime), and work units are fixed ranges of indices, so the
/// estimate is identical for any thread count.
pub fn estimate_rate(cfg: &ScenarioConfig) -> Result<RateEstimate> {
    let topo = build_grid(cfg.params.side)?;
    let ctx = Context::new(cfg, &topo)?;
    ctx.runner()?;
    let len = ctx.unit_len();
    let tally = (0..cfg.iterations.div_ceil(len))
        .into_par_iter()
        .map(|u| {
            let mut runner = ctx.runner().expect("validated config");
            ctx.run_unit(&mut runner, u, ((u + 1) * len).min(cfg.iterations))
        })
        .reduce(Tally::default, Tally::merge);
    Ok(tally.estimate(cfg.multipath_k))
}

/// Builds the world for iteration `i` and brings it to the state right
/// before that iteration.
fn prepare<'a>(ctx: &Context<'a>, i: u64) -> Result<Runner<'a>> {
    let mut runner = ctx.runner()?;
    let unit = i / ctx.unit_len();
    ctx.start_unit(&mut runner, unit);
    if ctx.continuous() {
        for j in unit * ctx.unit_len()..i {
            ctx.iteration(&mut runner, j);
        }
    }
    Ok(runner)
}

/// Outcome of a single iteration (for inspection and tests).
pub fn run_iteration(cfg: &ScenarioConfig, i: u64) -> Result<IterationOutcome> {
    let topo = build_grid(cfg.params.side)?;
    let ctx = Context::new(cfg, &topo)?;
    let mut runner = prepare(&ctx, i)?;
    Ok(ctx.iteration(&mut runner, i))
}

/// Replays iteration `i` with protocol tracing enabled. The synchronous
/// protocol has no control traffic and yields an empty trace.
pub fn trace_iteration(cfg: &ScenarioConfig, i: u64) -> Result<Trace> {
    let topo = build_grid(cfg.params.side)?;
    let ctx = Context::new(cfg, &topo)?;
    let mut runner = prepare(&ctx, i)?;
    match &mut runner {
        Runner::Sync(_) => {}
        Runner::Dodag(w) => w.trace = Some(Trace::default()),
        Runner::Ghs(w) => w.trace = Some(Trace::default()),
    }
    ctx.iteration(&mut runner, i);
    Ok(match runner {
        Runner::Sync(_) => Trace::default(),
        Runner::Dodag(w) => w.trace.unwrap_or_default(),
        Runner::Ghs(w) => w.trace.unwrap_or_default(),
    })
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Distance,
    P,
}

/// One estimate per value, in the given order.
pub fn sweep(axis: SweepAxis, values: &[f64], base: &ScenarioConfig) -> Result<Vec<(ScenarioConfig, RateEstimate)>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("empty sweep grid".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Distance => {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::OutOfRange {
                            name: "distance",
                            value: v.to_string(),
                            range: "positive integer",
                        });
                    }
                    cfg.distance = v as usize;
                }
                SweepAxis::P => cfg.params.p = v,
            }
            let est = estimate_rate(&cfg)?;
            Ok((cfg, est))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::CoherenceTime;

    fn cfg(protocol: Protocol, p: f64, q: f64, d: usize) -> ScenarioConfig {
        let params = SimParams {
            p,
            q,
            side: 6,
            t_co: CoherenceTime::Finite(2),
            ..SimParams::default()
        };
        ScenarioConfig {
            iterations: 400,
            ..ScenarioConfig::new(protocol, params, d)
        }
    }

    #[test]
    fn sync_perfect_links() {
        let est = estimate_rate(&cfg(Protocol::Sync, 1.0, 1.0, 1)).unwrap();
        assert_eq!(est.rate, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn pair_counts() {
        let g = build_grid(3).unwrap();
        // Ordered pairs at distance 4 on a 3x3 grid: the two diagonals.
        assert_eq!(pairs_at_distance(&g, 4).unwrap().len(), 4);
        assert!(pairs_at_distance(&g, 5).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = cfg(Protocol::Sync, 0.5, 0.5, 11);
        assert!(estimate_rate(&c).is_err());
        c.distance = 2;
        c.multipath_k = 5;
        assert!(estimate_rate(&c).is_err());
    }

    #[test]
    fn async_perfect_links_always_deliver() {
        for protocol in [Protocol::Dodag, Protocol::Ghs] {
            let mut c = cfg(protocol, 1.0, 1.0, 3);
            c.iterations = 50;
            let est = estimate_rate(&c).unwrap();
            assert_eq!(est.rate, 1.0, "{protocol:?}");
        }
    }
}
