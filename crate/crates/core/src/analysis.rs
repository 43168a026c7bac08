//! Closed-form rate estimates, bounds, triangle geometry around the DODAG
//! root, and self-avoiding path enumeration on the grid.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{check_probability, Error, Result};
use crate::topology::{validate_pair, NodeId, PhysicalTopology};

/// Default truncation index for grids wider than 6.
pub const DEFAULT_TRUNCATION: usize = 6;

/// Self-avoiding `s → t` path counts for lengths `d, d+2, …, d+2(m−1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathEnumeration {
    pub source: NodeId,
    pub target: NodeId,
    /// Length → number of paths. Every admissible length is present, even
    /// with a zero count.
    pub counts: BTreeMap<usize, u64>,
    pub max_index: usize,
}

impl PathEnumeration {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Truncation index for a pair at distance `d`: exhaustive (every
/// self-avoiding path up to the Hamiltonian length) on grids up to 6×6,
/// [`DEFAULT_TRUNCATION`] beyond.
pub fn default_truncation(side: usize, d: usize) -> usize {
    if side > 6 {
        DEFAULT_TRUNCATION
    } else {
        let longest = side * side - 1;
        longest.saturating_sub(d) / 2 + 1
    }
}

/// Depth-first enumeration of self-avoiding paths with visited-set pruning.
pub fn enumerate_self_avoiding_paths(
    topo: &PhysicalTopology,
    s: NodeId,
    t: NodeId,
    m: usize,
) -> Result<PathEnumeration> {
    validate_pair(topo, s, t)?;
    if m == 0 {
        return Err(Error::OutOfRange {
            name: "m",
            value: "0".into(),
            range: ">= 1",
        });
    }
    let side = topo.side().ok_or(Error::NotAGrid)?;
    let d = topo.l1(s, t)?;
    let max_len = d + 2 * (m - 1);

    let mut by_len = vec![0u64; max_len + 1];
    let mut visited = vec![false; topo.node_count()];
    visited[s.index()] = true;
    // Explicit stack of (node, next neighbour slot) keeps recursion depth off
    // the call stack for long paths.
    let mut stack: Vec<(NodeId, usize)> = vec![(s, 0)];
    while let Some(&mut (v, ref mut slot)) = stack.last_mut() {
        let nbrs = topo.neighbors(v);
        if *slot == nbrs.len() {
            visited[v.index()] = false;
            stack.pop();
            continue;
        }
        let (w, _) = nbrs[*slot];
        *slot += 1;
        if visited[w.index()] {
            continue;
        }
        let len = stack.len();
        if w == t {
            by_len[len] += 1;
            continue;
        }
        if len + crate::topology::l1_unchecked(w, t, side) > max_len {
            continue;
        }
        visited[w.index()] = true;
        stack.push((w, 0));
    }
    visited[s.index()] = false;

    let counts = (0..m).map(|i| d + 2 * i).map(|l| (l, by_len[l])).collect();
    Ok(PathEnumeration {
        source: s,
        target: t,
        counts,
        max_index: m,
    })
}

/// Count-weighted mean path length.
pub fn mean_path_length(e: &PathEnumeration) -> Result<f64> {
    let total = e.total();
    if total == 0 {
        return Err(Error::EmptyEnumeration);
    }
    let weighted: f64 = e.counts.iter().map(|(&l, &n)| l as f64 * n as f64).sum();
    Ok(weighted / total as f64)
}

/// Inputs of the rate formulas. Lengths are (mean) hop counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub p: f64,
    pub q: f64,
    /// Mean `s → t` path length (synchronous routing).
    pub l_st: f64,
    /// Mean source-to-root and root-to-destination lengths.
    pub l_sr: f64,
    pub l_rt: f64,
    /// Mean number of links already present on those root paths.
    pub lprime_sr: f64,
    pub lprime_rt: f64,
    /// Mean number of disjoint paths, at most 4.
    pub n_paths: f64,
    /// Shortest `s → r` / `r → t` lengths for the worst-case bound; the mean
    /// lengths are used when absent.
    pub shortest_sr: Option<f64>,
    pub shortest_rt: Option<f64>,
}

impl RateInputs {
    /// Synchronous inputs: only `l_st` and `n_paths` matter.
    pub fn sync(p: f64, q: f64, l_st: f64, n_paths: f64) -> Self {
        RateInputs {
            p,
            q,
            l_st,
            l_sr: 0.0,
            l_rt: 0.0,
            lprime_sr: 0.0,
            lprime_rt: 0.0,
            n_paths,
            shortest_sr: None,
            shortest_rt: None,
        }
    }

    /// Inputs for a route through the root.
    pub fn via_root(p: f64, q: f64, (l_sr, l_rt): (f64, f64), (lp_sr, lp_rt): (f64, f64), n_paths: f64) -> Self {
        RateInputs {
            p,
            q,
            l_st: l_sr + l_rt,
            l_sr,
            l_rt,
            lprime_sr: lp_sr,
            lprime_rt: lp_rt,
            n_paths,
            shortest_sr: None,
            shortest_rt: None,
        }
    }

    fn validate(&self) -> Result<()> {
        check_probability("p", self.p)?;
        check_probability("q", self.q)?;
        if !(0.0..=4.0).contains(&self.n_paths) {
            return Err(Error::OutOfRange {
                name: "n_paths",
                value: self.n_paths.to_string(),
                range: "[0, 4]",
            });
        }
        Ok(())
    }
}

/// Expected synchronous rate `p^l · q^(l−1) · n`.
pub fn xi_sync(inputs: &RateInputs) -> Result<f64> {
    inputs.validate()?;
    let l = inputs.l_st;
    Ok(inputs.p.powf(l) * inputs.q.powf(l - 1.0) * inputs.n_paths)
}

/// Synchronous upper bound `4 · p^l̂ · q^(l̂−1)` for shortest length `l̂`.
pub fn sync_upper_bound(p: f64, q: f64, shortest: f64) -> f64 {
    4.0 * p.powf(shortest) * q.powf(shortest - 1.0)
}

/// DODAG upper bound `4 · q^(l̂_sr + l̂_rt − 1)`.
pub fn dodag_upper_bound(q: f64, shortest_sr: f64, shortest_rt: f64) -> f64 {
    4.0 * q.powf(shortest_sr + shortest_rt - 1.0)
}

/// DODAG rate estimate and its worst-case upper bound.
pub fn xi_dodag(inputs: &RateInputs) -> Result<(f64, f64)> {
    inputs.validate()?;
    for (lp, l) in [(inputs.lprime_sr, inputs.l_sr), (inputs.lprime_rt, inputs.l_rt)] {
        if lp > l || lp < 0.0 {
            return Err(Error::PrimeExceedsLength { lprime: lp, l });
        }
    }
    let fresh = inputs.l_sr + inputs.l_rt - inputs.lprime_sr - inputs.lprime_rt;
    let hops = inputs.l_sr + inputs.l_rt;
    let rate = inputs.p.powf(fresh) * inputs.q.powf(hops - 1.0) * inputs.n_paths;
    let upper = dodag_upper_bound(
        inputs.q,
        inputs.shortest_sr.unwrap_or(inputs.l_sr),
        inputs.shortest_rt.unwrap_or(inputs.l_rt),
    );
    Ok((rate, upper))
}

/// Boundary coefficient between the "near root" and "far root" acute cases.
///
/// Defined for `0 < θ < π/2` with a non-negative discriminant, i.e. `θ ≤ π/3`;
/// returns `None` otherwise.
pub fn alpha(theta: f64) -> Option<f64> {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return None;
    }
    let c = theta.cos();
    let mut disc = 2.0 * c * c + c - 1.0;
    if disc.abs() < 1e-12 {
        disc = 0.0;
    }
    if disc < 0.0 {
        return None;
    }
    Some((2.0 * c + std::f64::consts::SQRT_2 * disc.sqrt() + 2.0) / (2.0 * (c + 1.0)))
}

/// Break-even exponent `ln q / (ln p + ln q)`; needs `0 < p, q < 1`.
pub fn beta(p: f64, q: f64) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::OutOfRange {
                name,
                value: v.to_string(),
                range: "(0, 1)",
            });
        }
    }
    Ok(q.ln() / (p.ln() + q.ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleKind {
    Obtuse,
    RightIsosceles,
    RightScalene,
    AcuteNearRoot,
    AcuteFarRoot,
    CollinearThroughRoot,
    CollinearOffRoot,
}

/// Geometry of a source/root/destination triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleCase {
    /// Euclidean angle at the root, radians.
    pub theta: f64,
    /// L1 shortest-path lengths.
    pub l_sr: u64,
    pub l_rt: u64,
    pub l_st: u64,
    pub kind: TriangleKind,
}

/// Classifies the triangle `s, r, t` (coordinates may be negative).
///
/// The angle comes from the Euclidean embedding; side lengths are L1. For
/// acute angles above π/3 no α boundary exists and the sum of the root legs
/// is always below twice the direct side, so those count as near-root.
pub fn classify_triangle(s: (i64, i64), r: (i64, i64), t: (i64, i64)) -> Result<TriangleCase> {
    if s == r || r == t || s == t {
        return Err(Error::DegenerateTriangle);
    }
    let l1 = |a: (i64, i64), b: (i64, i64)| a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
    let (l_sr, l_rt, l_st) = (l1(s, r), l1(r, t), l1(s, t));
    let u = (s.0 - r.0, s.1 - r.1);
    let v = (t.0 - r.0, t.1 - r.1);
    let dot = u.0 * v.0 + u.1 * v.1;
    let cross = u.0 * v.1 - u.1 * v.0;
    let theta = (cross as f64).abs().atan2(dot as f64);

    let kind = if cross == 0 {
        if dot < 0 {
            TriangleKind::CollinearThroughRoot
        } else {
            TriangleKind::CollinearOffRoot
        }
    } else if dot < 0 {
        TriangleKind::Obtuse
    } else if dot == 0 {
        if u.0 * u.0 + u.1 * u.1 == v.0 * v.0 + v.1 * v.1 {
            TriangleKind::RightIsosceles
        } else {
            TriangleKind::RightScalene
        }
    } else {
        let closer = l_sr.min(l_rt) as f64;
        match alpha(theta) {
            Some(a) if closer > a * l_st as f64 => TriangleKind::AcuteFarRoot,
            _ => TriangleKind::AcuteNearRoot,
        }
    };
    Ok(TriangleCase {
        theta,
        l_sr,
        l_rt,
        l_st,
        kind,
    })
}
