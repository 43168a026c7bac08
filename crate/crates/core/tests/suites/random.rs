//! Randomised protocol runs checked tick by tick. Every check panics on
//! violation.

use entsim_core::dodag::{DodagConfig, DodagWorld, ObjectiveFunction};
use entsim_core::ghs::{GhsConfig, GhsWorld};
use entsim_core::*;

fn random_pair(rng: &mut RngStream, n: usize) -> (NodeId, NodeId) {
    let s = rng.index(n);
    let t = (s + 1 + rng.index(n - 1)) % n;
    (NodeId(s as u32), NodeId(t as u32))
}

/// Live direct links before and after a request may only differ on the
/// route's own edges.
fn assert_preserved(topo: &PhysicalTopology, before: &[EdgeId], after: &InstantTopology, path: &[NodeId]) {
    let on_route: Vec<EdgeId> = path.windows(2).map(|w| topo.edge_between(w[0], w[1]).unwrap()).collect();
    for e in before {
        if !on_route.contains(e) {
            assert!(after.has_link(*e), "off-route link {e:?} was consumed");
        }
    }
}

/// Parameters drawn from `rng`: side 4..=8, p and q in [0.3, 1], T_co in
/// 1..=6 or unlimited.
pub fn draw_params(rng: &mut RngStream) -> SimParams {
    let t_co = match rng.index(7) {
        0 => CoherenceTime::Infinite,
        t => CoherenceTime::Finite(t as u32),
    };
    SimParams {
        p: 0.3 + 0.7 * rng.unit(),
        q: 0.3 + 0.7 * rng.unit(),
        t_co,
        side: 4 + rng.index(5),
        seed: rng.next_u64(),
        ..SimParams::default()
    }
}

/// DODAG acyclicity, strict rank monotonicity, root-minimal rank and
/// preservation of off-route links.
pub fn dodag_run(prm: SimParams, objective: ObjectiveFunction, ticks: usize) {
    let topo = build_grid(prm.side).unwrap();
    let cfg = DodagConfig {
        objective,
        ..DodagConfig::default()
    };
    let mut w = DodagWorld::new(&topo, prm, cfg).unwrap();
    let mut rng = derive_stream(prm.seed, 0);
    let n = topo.node_count();
    for tick in 0..ticks {
        w.run_unit_time(&mut rng);
        if let Err(e) = w.check_invariants() {
            panic!("tick {tick}: {e}");
        }
        if prm.p * prm.q < 1.0 || objective == ObjectiveFunction::FixedIncrement {
            for v in topo.nodes() {
                for &(u, _) in &w.state(v).parents {
                    assert!(w.state(u).rank < w.state(v).rank, "tick {tick}: rank of {u} !< {v}");
                }
            }
        }
        let root_rank = w.state(w.root()).rank;
        assert!(topo.nodes().filter(|&v| w.is_grounded(v)).all(|v| w.state(v).rank >= root_rank));
        if tick % 3 == 0 {
            let (s, t) = random_pair(&mut rng, n);
            if let RouteLookup::Path(path) = w.find_route(s, t, false, &[]) {
                let before: Vec<EdgeId> = w.instant.live_edges().collect();
                let r = w.execute(path.clone(), SwapMode::Swap, &mut rng);
                assert_preserved(&topo, &before, &w.instant, &path);
                assert!(r.swaps as usize <= path.len() - 2);
                w.check_invariants().unwrap();
            }
        }
    }
}

/// GHS forest property, per-node level non-decrease, view/truth agreement
/// whenever quiescent, and preservation of off-route links.
pub fn ghs_run(prm: SimParams, ticks: usize) {
    let topo = build_grid(prm.side).unwrap();
    let mut w = GhsWorld::new(&topo, prm, GhsConfig::default()).unwrap();
    let mut rng = derive_stream(prm.seed, 0);
    let n = topo.node_count();
    let mut levels: Vec<u32> = topo.nodes().map(|v| w.fragments.level(v)).collect();
    let mut agreed = 0;
    for tick in 0..ticks {
        w.run_unit_time(&mut rng);
        if let Err(e) = w.check_invariants() {
            panic!("tick {tick}: {e}");
        }
        for v in topo.nodes() {
            let l = w.fragments.level(v);
            assert!(l >= levels[v.index()], "level of {v} decreased");
            levels[v.index()] = l;
        }
        if w.quiescent() {
            agreed += 1;
            for v in topo.nodes() {
                let view = w.view(v);
                assert_eq!((view.fid, view.level), (w.fragments.fid(v), w.fragments.level(v)));
            }
        }
        if tick % 3 == 0 {
            let (s, t) = random_pair(&mut rng, n);
            if let RouteLookup::Path(path) = w.find_route(s, t, &[]) {
                let before: Vec<EdgeId> = w.instant.live_edges().collect();
                w.execute(path.clone(), SwapMode::Swap, &mut rng);
                assert_preserved(&topo, &before, &w.instant, &path);
                w.check_invariants().unwrap();
            }
        }
    }
    assert!(agreed > ticks / 2, "only {agreed} quiescent ticks");
}

/// With perfect links and no decoherence the forest becomes one spanning
/// fragment whose views all agree.
pub fn ghs_spans(side: usize, seed: u64, ticks: usize) {
    let topo = build_grid(side).unwrap();
    let prm = SimParams {
        p: 1.0,
        q: 1.0,
        t_co: CoherenceTime::Infinite,
        side,
        seed,
        ..SimParams::default()
    };
    let mut w = GhsWorld::new(&topo, prm, GhsConfig::default()).unwrap();
    let mut rng = derive_stream(seed, 0);
    for _ in 0..ticks {
        w.run_unit_time(&mut rng);
        w.check_invariants().unwrap();
    }
    assert_eq!(w.fragments.count(), 1);
    assert!(w.quiescent());
    let first = w.view(NodeId(0));
    assert!(topo.nodes().all(|v| w.view(v) == first));
    // Merge-only growth: a fragment of level L has at least 2^L nodes.
    assert!(topo.node_count() >= 1usize << w.fragments.level(NodeId(0)));
}

pub fn split_then_remerge() {
    let topo = build_grid(5).unwrap();
    let prm = SimParams {
        p: 1.0,
        q: 1.0,
        t_co: CoherenceTime::Infinite,
        side: 5,
        ..SimParams::default()
    };
    let mut w = GhsWorld::new(&topo, prm, GhsConfig::default()).unwrap();
    let mut rng = derive_stream(8, 0);
    for _ in 0..10 {
        w.run_unit_time(&mut rng);
    }
    assert_eq!(w.fragments.count(), 1);
    let e = (0..topo.edge_count()).map(|i| EdgeId(i as u32)).find(|&e| w.fragments.is_tree(e)).unwrap();
    w.instant.remove_direct(e).unwrap();
    w.on_link_lost(e);
    assert_eq!(w.fragments.count(), 2);
    for _ in 0..3 {
        w.run_unit_time(&mut rng);
    }
    assert_eq!(w.fragments.count(), 1);
    w.check_invariants().unwrap();
}
