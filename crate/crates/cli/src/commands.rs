use std::io::Write;

use entsim_core::analysis::{
    alpha, beta, classify_triangle, default_truncation, dodag_upper_bound, enumerate_self_avoiding_paths,
    mean_path_length, sync_upper_bound, xi_sync, RateInputs, TriangleKind,
};
use entsim_core::dodag::default_root;
use entsim_core::engine::{pairs_at_distance, sweep, trace_iteration, SweepAxis};
use entsim_core::{build_grid, coord_of, Measure, NodeId, ScenarioConfig};

use crate::config::Settings;
use crate::error::CliError;
use crate::output::{rate_row, render, sig6, RATE_HEADER};

/// Runs one sweep per protocol and renders the rows.
fn rate_table(scenario: &str, s: &Settings, measure: Measure, k: u8, axis: SweepAxis, values: &[f64]) -> Result<Vec<u8>, CliError> {
    let mut rows = Vec::new();
    let mut traced = Vec::new();
    for &protocol in &s.protocols {
        let distance = s.distances.first().copied().unwrap_or(1);
        let base = s.scenario(protocol, distance, measure, k);
        for (cfg, est) in sweep(axis, values, &base)? {
            rows.push(rate_row(scenario, &cfg, &est, measure == Measure::Hops));
            if s.trace.is_some() {
                traced.push(cfg);
            }
        }
    }
    if let Some(path) = &s.trace {
        write_traces(path, &traced)?;
    }
    render(&RATE_HEADER, &rows)
}

fn write_traces(path: &std::path::Path, cfgs: &[ScenarioConfig]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    for cfg in cfgs {
        writeln!(
            buf,
            "# protocol={} p={} q={} t_co={} distance={} k={}",
            cfg.protocol.name(),
            sig6(cfg.params.p),
            sig6(cfg.params.q),
            cfg.params.t_co,
            cfg.distance,
            cfg.multipath_k
        )?;
        trace_iteration(cfg, 0)?.write_to(&mut buf)?;
    }
    crate::output::emit(Some(path), &buf)
}

fn distances_as_values(s: &Settings) -> Result<Vec<f64>, CliError> {
    Ok(s.require_distances()?.iter().map(|&d| d as f64).collect())
}

pub fn sweep_distance(name: &str, s: &Settings) -> Result<Vec<u8>, CliError> {
    rate_table(name, s, Measure::Rate, s.k.unwrap_or(1), SweepAxis::Distance, &distances_as_values(s)?)
}

pub fn multipath(name: &str, s: &Settings) -> Result<Vec<u8>, CliError> {
    rate_table(name, s, Measure::Rate, s.k.unwrap_or(4), SweepAxis::Distance, &distances_as_values(s)?)
}

pub fn hops(name: &str, s: &Settings) -> Result<Vec<u8>, CliError> {
    rate_table(name, s, Measure::Hops, s.k.unwrap_or(1), SweepAxis::Distance, &distances_as_values(s)?)
}

/// The p grid 0.1, 0.2, …, 1.0 at each requested distance.
pub fn sweep_p(name: &str, s: &Settings) -> Result<Vec<u8>, CliError> {
    let grid: Vec<f64> = (1..=10).map(|i| f64::from(i) / 10.0).collect();
    let mut out: Option<Vec<u8>> = None;
    for &d in s.require_distances()? {
        let one = Settings {
            distances: vec![d],
            ..s.clone()
        };
        let table = rate_table(name, &one, Measure::Rate, s.k.unwrap_or(1), SweepAxis::P, &grid)?;
        match &mut out {
            None => out = Some(table),
            // Drop the repeated header line.
            Some(buf) => buf.extend(table.iter().skip_while(|&&b| b != b'\n').skip(1)),
        }
    }
    Ok(out.unwrap_or_default())
}

fn kind_name(kind: TriangleKind) -> &'static str {
    match kind {
        TriangleKind::Obtuse => "obtuse",
        TriangleKind::RightIsosceles => "right_isosceles",
        TriangleKind::RightScalene => "right_scalene",
        TriangleKind::AcuteNearRoot => "acute_near_root",
        TriangleKind::AcuteFarRoot => "acute_far_root",
        TriangleKind::CollinearThroughRoot => "collinear_through_root",
        TriangleKind::CollinearOffRoot => "collinear_off_root",
    }
}

const ANALYZE_HEADER: [&str; 14] = [
    "distance",
    "source",
    "target",
    "m",
    "mean_path_length",
    "xi_sync_per_path",
    "sync_upper",
    "l_sr",
    "l_rt",
    "dodag_upper",
    "theta",
    "triangle",
    "alpha",
    "beta",
];

/// Per distance: the pair closest to the root (neither endpoint is the
/// root), its mean self-avoiding path length, rate formulas and geometry.
pub fn analyze(s: &Settings) -> Result<Vec<u8>, CliError> {
    let side = s.params.side;
    let topo = build_grid(side)?;
    let root = default_root(side);
    let (p, q) = (s.params.p, s.params.q);
    let mut rows = Vec::new();
    for &d in s.require_distances()? {
        let l1 = |a: NodeId, b: NodeId| topo.l1(a, b).expect("valid node");
        let Some((src, dst)) = pairs_at_distance(&topo, d)?
            .into_iter()
            .filter(|&(a, b)| a != root && b != root)
            .min_by_key(|&(a, b)| (l1(a, root) + l1(root, b), a, b))
        else {
            continue;
        };
        let m = s.m.unwrap_or_else(|| default_truncation(side, d));
        let mean = mean_path_length(&enumerate_self_avoiding_paths(&topo, src, dst, m)?)?;
        let (l_sr, l_rt) = (l1(src, root), l1(root, dst));
        let xy = |v: NodeId| {
            let c = coord_of(v, side);
            (c.x as i64, c.y as i64)
        };
        let tri = classify_triangle(xy(src), xy(root), xy(dst))?;
        rows.push(vec![
            d.to_string(),
            src.0.to_string(),
            dst.0.to_string(),
            m.to_string(),
            sig6(mean),
            sig6(xi_sync(&RateInputs::sync(p, q, mean, 1.0))?),
            sig6(sync_upper_bound(p, q, d as f64)),
            l_sr.to_string(),
            l_rt.to_string(),
            sig6(dodag_upper_bound(q, l_sr as f64, l_rt as f64)),
            sig6(tri.theta),
            kind_name(tri.kind).to_string(),
            alpha(tri.theta).map(sig6).unwrap_or_default(),
            beta(p, q).map(sig6).unwrap_or_default(),
        ]);
    }
    render(&ANALYZE_HEADER, &rows)
}

pub fn enumerate_paths(s: &Settings) -> Result<Vec<u8>, CliError> {
    let (Some(src), Some(dst)) = (s.source, s.target) else {
        return Err(CliError::Usage("enumerate-paths needs `source` and `target`".into()));
    };
    let topo = build_grid(s.params.side)?;
    let (src, dst) = (NodeId(src as u32), NodeId(dst as u32));
    if src == dst {
        return Err(CliError::Usage("`source` and `target` must differ".into()));
    }
    let d = topo.l1(src, dst)?;
    let m = s.m.unwrap_or_else(|| default_truncation(s.params.side, d));
    let e = enumerate_self_avoiding_paths(&topo, src, dst, m)?;
    let mean = mean_path_length(&e).map(sig6).unwrap_or_default();
    let rows: Vec<Vec<String>> = e
        .counts
        .iter()
        .map(|(l, n)| vec![src.0.to_string(), dst.0.to_string(), m.to_string(), l.to_string(), n.to_string(), mean.clone()])
        .collect();
    render(&["source", "target", "m", "length", "count", "mean_path_length"], &rows)
}
