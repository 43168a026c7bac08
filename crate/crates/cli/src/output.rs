//! CSV rows and atomic file output.

use std::io::Write;
use std::path::Path;

use entsim_core::{RateEstimate, ScenarioConfig};

use crate::error::CliError;

pub const RATE_HEADER: [&str; 13] = [
    "scenario",
    "protocol",
    "side",
    "p",
    "q",
    "t_co",
    "distance",
    "k",
    "iterations",
    "successes",
    "rate",
    "stderr",
    "mean_hops",
];

/// Fixed decimal notation with six significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0.00000".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new digit (9.999995 → 10.00000); redo once.
    let digits = s.trim_start_matches('-').replace('.', "");
    if digits.trim_start_matches('0').len() > 6 && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{v:.decimals$}");
    }
    s
}

pub fn rate_row(scenario: &str, cfg: &ScenarioConfig, est: &RateEstimate, with_hops: bool) -> Vec<String> {
    vec![
        scenario.to_string(),
        cfg.protocol.name().to_string(),
        cfg.params.side.to_string(),
        sig6(cfg.params.p),
        sig6(cfg.params.q),
        cfg.params.t_co.to_string(),
        cfg.distance.to_string(),
        cfg.multipath_k.to_string(),
        est.trials.to_string(),
        est.successes.to_string(),
        sig6(est.rate),
        sig6(est.stderr),
        match (with_hops, est.mean_hops) {
            (true, Some(h)) => sig6(h),
            _ => String::new(),
        },
    ]
}

/// Renders a header and rows as CSV text with a trailing newline.
pub fn render<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for row in rows {
        w.write_record(row.iter().map(AsRef::as_ref))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never see a partial file. `None` writes to stdout.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        return Ok(out.flush()?);
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let wrap = |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}
