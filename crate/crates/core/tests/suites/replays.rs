//! Step-by-step replays of protocol walk-throughs on hand-built graphs.

use entsim_core::dodag::{DodagConfig, DodagWorld};
use entsim_core::ghs::{classify_test_edge, tree_next_hop, FragmentEvent, Fragments, GhsConfig, GhsWorld, TestDecision};
use entsim_core::*;
use std::collections::{HashSet, VecDeque};

// Node names used by the merge/absorb/split walk-through.
const A: u32 = 0;
const E: u32 = 1;
const B: u32 = 2;
const I: u32 = 3;
const F: u32 = 4;
const G: u32 = 5;
const C: u32 = 6;
const H: u32 = 7;
const J: u32 = 8;

fn walkthrough_graph() -> PhysicalTopology {
    PhysicalTopology::from_edges(
        9,
        &[(A, E), (B, I), (F, G), (H, J), (A, B), (C, F), (B, H), (C, G), (I, H)],
    )
    .unwrap()
}

fn edge(g: &PhysicalTopology, a: u32, b: u32) -> EdgeId {
    g.edge_between(NodeId(a), NodeId(b)).unwrap()
}

fn test_between(f: &Fragments, from: u32, to: u32) -> TestDecision {
    let (s, r) = (NodeId(from), NodeId(to));
    classify_test_edge(f.fid(s), f.level(s), f.fid(r), f.level(r))
}

pub fn merge_absorb_split_walkthrough() {
    let g = walkthrough_graph();
    let mut f = Fragments::new(&g);

    // (a) singletons at level 0.
    let fids: HashSet<_> = g.nodes().map(|v| f.fid(v)).collect();
    assert_eq!(fids.len(), 9);
    assert!(g.nodes().all(|v| f.level(v) == 0));

    // (b) successful links between equal levels merge one level up, the
    // joining edge becoming the core.
    for (x, y) in [(A, E), (B, I), (F, G), (H, J)] {
        let e = edge(&g, x, y);
        assert!(matches!(f.join(&g, e), FragmentEvent::Merged { level: 1, .. }));
        assert_eq!(f.core_edge(NodeId(x)), Some(e));
    }
    let frag_c = f.fid(NodeId(F));

    // (c)-(d) A and B are both level 1: outgoing, merge to level 2 with
    // 2k-1 tree edges.
    assert_eq!(test_between(&f, A, B), TestDecision::Outgoing);
    let FragmentEvent::Merged { fid: frag_d, level: 2 } = f.join(&g, edge(&g, A, B)) else {
        panic!("A and B should merge");
    };
    assert_eq!(f.size(NodeId(I)), 4);
    assert_eq!(f.core_edge(NodeId(E)), Some(edge(&g, A, B)));
    assert_eq!(f.tree_edge_count(), 5);

    // C absorbs the singleton c and keeps its level, id and core.
    assert_eq!(test_between(&f, C, F), TestDecision::Outgoing);
    assert_eq!(f.join(&g, edge(&g, C, F)), FragmentEvent::Absorbed { fid: frag_c, level: 1 });
    assert_eq!(f.size(NodeId(C)), 3);
    assert_eq!(f.core_edge(NodeId(C)), Some(edge(&g, F, G)));
    // f declines g: same fragment id. A link there would be rejected.
    assert_eq!(test_between(&f, F, G), TestDecision::NotOutgoing);
    assert_eq!(test_between(&f, C, G), TestDecision::NotOutgoing);
    assert_eq!(f.join(&g, edge(&g, C, G)), FragmentEvent::Rejected);

    // (e)-(f) the level-2 side cannot yet decide about the lower fragment E,
    // but E's own test is outgoing and D absorbs E into F.
    assert_eq!(test_between(&f, B, H), TestDecision::Deferred);
    assert_eq!(test_between(&f, H, B), TestDecision::Outgoing);
    assert_eq!(f.join(&g, edge(&g, B, H)), FragmentEvent::Absorbed { fid: frag_d, level: 2 });
    assert_eq!(f.size(NodeId(J)), 6);
    assert_eq!(f.level(NodeId(J)), 2);
    // i-h now closes a cycle inside F.
    assert_eq!(test_between(&f, I, H), TestDecision::NotOutgoing);

    // (g) b-h breaks: two fresh ids, both keeping level 2; the core stays
    // with the half that holds it.
    let Some(FragmentEvent::Split { fids: (g_fid, h_fid), level: 2 }) = f.split(&g, edge(&g, B, H)) else {
        panic!("b-h is a tree edge");
    };
    assert_ne!(g_fid, h_fid);
    assert!(![frag_c, frag_d].contains(&g_fid) && ![frag_c, frag_d].contains(&h_fid));
    assert_eq!((f.fid(NodeId(B)), f.fid(NodeId(H))), (g_fid, h_fid));
    assert_eq!((f.size(NodeId(A)), f.size(NodeId(H))), (4, 2));
    assert_eq!((f.level(NodeId(A)), f.level(NodeId(J))), (2, 2));
    assert_eq!(f.core_edge(NodeId(A)), Some(edge(&g, A, B)));
    assert_eq!(f.core_edge(NodeId(H)), None);
    // Splitting a non-tree edge is a no-op.
    assert_eq!(f.split(&g, edge(&g, I, H)), None);

    // (h) b and h test again: the halves are different fragments at equal
    // level, so the edge is outgoing both ways.
    assert_eq!(test_between(&f, B, H), TestDecision::Outgoing);
    assert_eq!(test_between(&f, H, B), TestDecision::Outgoing);
}

pub fn two_node_split_keeps_level() {
    let g = PhysicalTopology::from_edges(2, &[(0, 1)]).unwrap();
    let mut f = Fragments::new(&g);
    f.join(&g, EdgeId(0));
    let Some(FragmentEvent::Split { level, .. }) = f.split(&g, EdgeId(0)) else {
        panic!()
    };
    assert_eq!(level, 1);
    assert_eq!((f.size(NodeId(0)), f.size(NodeId(1))), (1, 1));
    assert_eq!((f.level(NodeId(0)), f.level(NodeId(1))), (1, 1));
    assert_eq!(f.count(), 2);
}

/// Fragment A (level 2) contains a; b sits in a level-1 fragment
/// together with k; n belongs to A. Node numbering: a=0, c=1, d=2, i=3,
/// j=4, n=5 (fragment A); b=6, f=7, k=8 (the level-1 fragment).
fn held_test_world() -> (PhysicalTopology, Fragments) {
    let g = PhysicalTopology::from_edges(
        9,
        &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (6, 7), (7, 8), (0, 6), (8, 5)],
    )
    .unwrap();
    let mut f = Fragments::new(&g);
    for (x, y) in [(0, 1), (2, 3), (4, 5)] {
        f.join(&g, edge(&g, x, y));
    }
    f.join(&g, edge(&g, 1, 2)); // level 2
    f.join(&g, edge(&g, 3, 4)); // absorbed, level 2
    f.join(&g, edge(&g, 6, 7)); // level 1
    f.join(&g, edge(&g, 7, 8)); // absorbed, level 1
    assert_eq!((f.level(NodeId(0)), f.size(NodeId(0))), (2, 6));
    assert_eq!((f.level(NodeId(6)), f.size(NodeId(6))), (1, 3));
    (g, f)
}

pub fn held_test_becomes_internal() {
    let (g, mut f) = held_test_world();
    // (1)-(2) a (level 2) tests b (level 1): held.
    let snapshot = (f.fid(NodeId(0)), f.level(NodeId(0)));
    let b_view = (f.fid(NodeId(6)), f.level(NodeId(6)));
    assert_eq!(classify_test_edge(snapshot.0, snapshot.1, b_view.0, b_view.1), TestDecision::Deferred);
    // (3)-(4) k (level 1) tests n (level 2): outgoing, absorbed into A.
    assert_eq!(test_between(&f, 8, 5), TestDecision::Outgoing);
    let a_fid = f.fid(NodeId(5));
    assert_eq!(f.join(&g, edge(&g, 8, 5)), FragmentEvent::Absorbed { fid: a_fid, level: 2 });
    // (5)-(7) b hears (A, 2); the held test is re-evaluated and dropped.
    let b_view = (f.fid(NodeId(6)), f.level(NodeId(6)));
    assert_eq!(b_view, (a_fid, 2));
    assert_eq!(classify_test_edge(snapshot.0, snapshot.1, b_view.0, b_view.1), TestDecision::NotOutgoing);
    // Had the edge been linked anyway it would have closed the loop
    // a-b-f-k-n-j-i-d-c-a.
    assert_eq!(f.join(&g, edge(&g, 0, 6)), FragmentEvent::Rejected);
    assert_eq!(f.tree_edge_count() + f.count(), 9);
}

pub fn lower_level_test_is_safe() {
    let (g, mut f) = held_test_world();
    // b (level 1) tests a (level 2): outgoing straight away, no loop.
    assert_eq!(test_between(&f, 6, 0), TestDecision::Outgoing);
    assert!(matches!(f.join(&g, edge(&g, 0, 6)), FragmentEvent::Absorbed { level: 2, .. }));
    assert_eq!(f.count(), 1);
    assert_eq!(f.tree_edge_count(), 8);
    // The k-n test that follows is internal now.
    assert_eq!(test_between(&f, 8, 5), TestDecision::NotOutgoing);
}

fn bfs_path(g: &PhysicalTopology, f: &Fragments, s: NodeId, t: NodeId) -> Vec<NodeId> {
    let mut pred = vec![None; g.node_count()];
    let mut queue = VecDeque::from([s]);
    pred[s.index()] = Some(s);
    while let Some(u) = queue.pop_front() {
        for &(w, e) in g.neighbors(u) {
            if f.is_tree(e) && pred[w.index()].is_none() {
                pred[w.index()] = Some(u);
                queue.push_back(w);
            }
        }
    }
    let mut path = vec![t];
    while *path.last().unwrap() != s {
        path.push(pred[path.last().unwrap().index()].unwrap());
    }
    path.reverse();
    path
}

pub fn next_hops_follow_the_tree() {
    let g = build_grid(3).unwrap();
    let prm = SimParams {
        p: 1.0,
        q: 1.0,
        t_co: CoherenceTime::Infinite,
        side: 3,
        ..SimParams::default()
    };
    let mut w = GhsWorld::new(&g, prm, GhsConfig::default()).unwrap();
    let mut rng = derive_stream(4, 0);
    for _ in 0..5 {
        w.run_unit_time(&mut rng);
    }
    assert_eq!(w.fragments.count(), 1);
    let mut pairs = derive_stream(4, 1);
    for _ in 0..40 {
        let s = NodeId(pairs.index(9) as u32);
        let t = NodeId(pairs.index(9) as u32);
        let mut hop = s;
        let mut walked = vec![s];
        while let Some(next) = tree_next_hop(&w.fragment_state(hop), hop, t) {
            walked.push(next);
            hop = next;
            assert!(walked.len() <= 9);
        }
        assert_eq!(hop, t);
        assert_eq!(walked, bfs_path(&g, &w.fragments, s, t));
        assert_eq!(walked, w.fragments.tree_path(&g, s, t).unwrap());
    }
}

pub fn perfect_links_shrink_fragment_count_each_tick() {
    let g = build_grid(8).unwrap();
    let prm = SimParams {
        p: 1.0,
        q: 1.0,
        t_co: CoherenceTime::Infinite,
        side: 8,
        ..SimParams::default()
    };
    let cfg = GhsConfig {
        micro_tick_budget: Some(2),
        ..GhsConfig::default()
    };
    let mut w = GhsWorld::new(&g, prm, cfg).unwrap();
    let mut rng = derive_stream(2, 0);
    let mut count = w.fragments.count();
    let mut ticks = 0;
    while count > 1 {
        w.run_unit_time(&mut rng);
        let now = w.fragments.count();
        assert!(now < count, "stalled at {now}");
        count = now;
        ticks += 1;
        assert!(ticks < 64);
    }
}

/// Triangle with root 0: 0-1, 1-2, 1-3, 2-3 (node 1 plays A, 2 and 3 the
/// children that could pick each other as parents).
fn triangle() -> PhysicalTopology {
    PhysicalTopology::from_edges(4, &[(0, 1), (1, 2), (1, 3), (2, 3)]).unwrap()
}

fn triangle_world(g: &PhysicalTopology, greedy: bool) -> DodagWorld<'_> {
    let cfg = DodagConfig {
        root: Some(NodeId(0)),
        greedy,
        ..DodagConfig::default()
    };
    let prm = SimParams {
        p: 0.9,
        q: 0.8,
        t_co: CoherenceTime::Infinite,
        side: 2,
        ..SimParams::default()
    };
    let mut w = DodagWorld::new(g, prm, cfg).unwrap();
    w.trace = Some(trace::Trace::default());
    w
}

fn leaves(w: &DodagWorld<'_>) -> usize {
    w.trace.as_ref().unwrap().events().iter().filter(|e| e.event == "leave").count()
}

fn settle(w: &mut DodagWorld<'_>, ticks: usize, seed: u64) {
    let mut rng = derive_stream(seed, 0);
    for _ in 0..ticks {
        w.run_unit_time(&mut rng);
        w.check_invariants().unwrap();
    }
}

pub fn non_greedy_triangle_is_stable() {
    let g = triangle();
    let mut w = triangle_world(&g, false);
    settle(&mut w, 20, 5);
    let settled: Vec<_> = g.nodes().map(|v| w.state(v).clone()).collect();
    assert_eq!(w.grounded_count(), 4);
    settle(&mut w, 1000, 6);
    let after: Vec<_> = g.nodes().map(|v| w.state(v).clone()).collect();
    assert_eq!(settled, after);
    assert_eq!(leaves(&w), 0);
}

pub fn greedy_triangle_keeps_moving() {
    let g = triangle();
    let mut w = triangle_world(&g, true);
    let mut rng = derive_stream(5, 0);
    let mut per_window = Vec::new();
    for _ in 0..4 {
        let start = leaves(&w);
        for _ in 0..50 {
            w.run_unit_time(&mut rng);
            w.check_invariants().unwrap();
        }
        per_window.push(leaves(&w) - start);
    }
    // Leaving never stops: every window sees more departures.
    assert!(per_window.iter().all(|&n| n > 0), "{per_window:?}");
}
