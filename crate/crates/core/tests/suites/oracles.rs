//! Independent reference implementations used as oracles.

use std::collections::{BTreeMap, HashSet};

use entsim_core::engine::{estimate_rate, pairs_at_distance};
use entsim_core::sync::external_phase;
use entsim_core::{
    build_grid, coord_of, derive_stream, EdgeId, InstantTopology, NodeId, PhysicalTopology, Protocol, ScenarioConfig,
    SimParams,
};

// Swap chains rebuilt from the pairing rule with a union-find over links.

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        self.0[a] = b;
    }
}

fn l1(a: NodeId, b: NodeId, side: usize) -> usize {
    let (a, b) = (coord_of(a, side), coord_of(b, side));
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Lengths of the complete `s → t` chains the blind pairing rule forms on
/// `instant`. Endpoints never swap.
pub fn chain_oracle(g: &PhysicalTopology, instant: &InstantTopology, s: NodeId, t: NodeId) -> Vec<u32> {
    let side = g.side().unwrap();
    let m = g.edge_count();
    let mut dsu = Dsu::new(m);
    // Loose ends of each link: an end is closed once the link is swapped there.
    let mut closed = vec![[false; 2]; m];
    let end_slot = |e: usize, v: NodeId| usize::from(g.endpoints(EdgeId(e as u32)).1 == v);

    for v in g.nodes().filter(|&v| v != s && v != t) {
        let mut linked: Vec<(NodeId, usize)> = g
            .neighbors(v)
            .iter()
            .filter(|(_, e)| instant.has_link(*e))
            .map(|&(w, e)| (w, e.index()))
            .collect();
        linked.sort();
        while linked.len() >= 2 {
            let ia = (0..linked.len()).min_by_key(|&i| (l1(linked[i].0, s, side), linked[i].0)).unwrap();
            let a = linked.remove(ia);
            let ib = (0..linked.len()).min_by_key(|&i| (l1(linked[i].0, t, side), linked[i].0)).unwrap();
            let b = linked.remove(ib);
            dsu.union(a.1, b.1);
            closed[a.1][end_slot(a.1, v)] = true;
            closed[b.1][end_slot(b.1, v)] = true;
        }
    }

    let mut comps: BTreeMap<usize, (u32, Vec<NodeId>)> = BTreeMap::new();
    for e in (0..m).filter(|&e| instant.has_link(EdgeId(e as u32))) {
        let (a, b) = g.endpoints(EdgeId(e as u32));
        let entry = comps.entry(dsu.find(e)).or_default();
        entry.0 += 1;
        for (slot, v) in [a, b].into_iter().enumerate() {
            if !closed[e][slot] {
                entry.1.push(v);
            }
        }
    }
    comps
        .into_values()
        .filter_map(|(len, mut ends)| {
            ends.sort();
            let mut want = vec![s, t];
            want.sort();
            (ends == want).then_some(len)
        })
        .collect()
}

/// Maximum number of edge-disjoint `s → t` paths over live links.
pub fn max_flow(g: &PhysicalTopology, instant: &InstantTopology, s: NodeId, t: NodeId) -> u32 {
    // Residual capacity per directed edge slot: flow[e][dir].
    let mut flow = vec![[0i8; 2]; g.edge_count()];
    let mut total = 0;
    loop {
        let mut prev: Vec<Option<(NodeId, usize, usize)>> = vec![None; g.node_count()];
        let mut seen = vec![false; g.node_count()];
        seen[s.index()] = true;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &(w, e) in g.neighbors(v) {
                if seen[w.index()] || !instant.has_link(e) {
                    continue;
                }
                let dir = usize::from(g.endpoints(e).0 != v);
                // Capacity 1 each way; pushing against existing flow cancels it.
                if flow[e.index()][dir] >= 1 {
                    continue;
                }
                seen[w.index()] = true;
                prev[w.index()] = Some((v, e.index(), dir));
                queue.push_back(w);
            }
        }
        if !seen[t.index()] {
            return total;
        }
        let mut v = t;
        while let Some((u, e, dir)) = prev[v.index()] {
            flow[e][dir] += 1;
            flow[e][1 - dir] -= 1;
            v = u;
        }
        total += 1;
    }
}

// Path enumeration against a recursive counter with a different traversal.

pub fn recursive_counts(g: &PhysicalTopology, v: NodeId, t: NodeId, depth: usize, seen: &mut HashSet<NodeId>, out: &mut BTreeMap<usize, u64>) {
    // Neighbours in reverse order, no distance pruning, no memo.
    for &(w, _) in g.neighbors(v).iter().rev() {
        if w == t {
            *out.entry(depth + 1).or_default() += 1;
        } else if seen.insert(w) {
            recursive_counts(g, w, t, depth + 1, seen, out);
            seen.remove(&w);
        }
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Monte-Carlo sync rate against the per-sample prediction
/// `1 − Π (1 − q^(l−1))` over the chains found on the same instant topology.
pub fn sync_oracle_check(prm: SimParams, d: usize, iterations: u64) -> (f64, f64, f64) {
    let (side, q) = (prm.side, prm.q);
    let cfg = ScenarioConfig {
        iterations,
        ..ScenarioConfig::new(Protocol::Sync, prm, d)
    };
    let est = estimate_rate(&cfg).unwrap();
    let g = build_grid(side).unwrap();
    let pairs = pairs_at_distance(&g, d).unwrap();
    let mut predicted = 0.0;
    for i in 0..iterations {
        // Same draws as the engine: pair, then the external phase.
        let mut rng = derive_stream(prm.seed, i);
        let (s, t) = pairs[rng.index(pairs.len())];
        let inst = external_phase(&g, &prm, &mut rng, 0);
        let miss: f64 = chain_oracle(&g, &inst, s, t)
            .iter()
            .map(|&l| 1.0 - q.powi(l as i32 - 1))
            .product();
        predicted += 1.0 - miss;
    }
    predicted /= iterations as f64;
    (est.rate, predicted, est.stderr)
}
