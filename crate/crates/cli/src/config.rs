//! Scenario settings: defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use entsim_core::{CoherenceTime, Measure, Protocol, Regime, ScenarioConfig, SimParams};

use crate::error::CliError;

/// Keys accepted in config files (flags use the same names with `-`).
pub const KEYS: &[&str] = &[
    "protocol",
    "side",
    "p",
    "q",
    "t_co",
    "distance",
    "k",
    "iterations",
    "seed",
    "warmup",
    "via_root_only",
    "continuous",
    "epoch",
    "out",
    "trace",
    "source",
    "target",
    "m",
];

/// Raw `key → value` strings before typing.
pub type RawConfig = BTreeMap<String, String>;

/// Normalises `t-co` / `T_CO` style spellings to the canonical key.
pub fn canonical_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<RawConfig, CliError> {
    let mut out = RawConfig::new();
    for (n, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("config line {}: expected `key = value`", n + 1)));
        };
        let key = canonical_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", n + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<RawConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Fully resolved settings shared by every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub protocols: Vec<Protocol>,
    pub params: SimParams,
    pub distances: Vec<usize>,
    pub k: Option<u8>,
    pub iterations: u64,
    pub warmup: Option<u64>,
    pub via_root_only: bool,
    pub regime: Regime,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub source: Option<usize>,
    pub target: Option<usize>,
    pub m: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            protocols: vec![Protocol::Dodag],
            params: SimParams::default(),
            distances: Vec::new(),
            k: None,
            iterations: 50_000,
            warmup: None,
            via_root_only: false,
            regime: Regime::Reset,
            out: None,
            trace: None,
            source: None,
            target: None,
            m: None,
        }
    }
}

fn invalid(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Usage(format!("invalid value `{value}` for `{key}`: expected {expected}"))
}

fn number<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| invalid(key, value, expected))
}

fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(invalid(key, value, "true or false")),
    }
}

/// Parses `4`, `2,4,6`, `1..10` (inclusive) or `2..10:2`.
pub fn parse_distances(value: &str) -> Result<Vec<usize>, CliError> {
    let bad = || invalid("distance", value, "an integer, a list `2,4,6` or a range `1..10[:step]`");
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim) {
        if let Some((lo, rest)) = part.split_once("..") {
            let rest = rest.strip_prefix('=').unwrap_or(rest);
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => (hi, step.trim().parse::<usize>().map_err(|_| bad())?),
                None => (rest, 1),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if step == 0 || lo > hi {
                return Err(bad());
            }
            out.extend((lo..=hi).step_by(step));
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

fn parse_protocols(value: &str) -> Result<Vec<Protocol>, CliError> {
    value
        .split(',')
        .map(|p| p.parse::<Protocol>().map_err(|_| invalid("protocol", value, "sync, dodag or ghs (comma separated)")))
        .collect()
}

impl Settings {
    /// Applies `raw` on top of the defaults and validates the result.
    pub fn resolve(raw: &RawConfig) -> Result<Settings, CliError> {
        let mut s = Settings::default();
        let mut epoch = 500;
        let mut continuous = false;
        for (key, value) in raw {
            let v = value.as_str();
            match key.as_str() {
                "protocol" => s.protocols = parse_protocols(v)?,
                "side" => s.params.side = number(key, v, "an integer >= 2")?,
                "p" => s.params.p = number(key, v, "a probability")?,
                "q" => s.params.q = number(key, v, "a probability")?,
                "t_co" => {
                    s.params.t_co = v
                        .parse::<CoherenceTime>()
                        .map_err(|_| invalid(key, v, "an integer >= 1 or `inf`"))?
                }
                "distance" => s.distances = parse_distances(v)?,
                "k" => s.k = Some(number(key, v, "an integer in 1..=4")?),
                "iterations" => s.iterations = number(key, v, "a positive integer")?,
                "seed" => s.params.seed = number(key, v, "an unsigned 64-bit integer")?,
                "warmup" => s.warmup = Some(number(key, v, "a non-negative integer")?),
                "via_root_only" => s.via_root_only = boolean(key, v)?,
                "continuous" => continuous = boolean(key, v)?,
                "epoch" => epoch = number(key, v, "a positive integer")?,
                "out" => s.out = Some(PathBuf::from(v)),
                "trace" => s.trace = Some(PathBuf::from(v)),
                "source" => s.source = Some(number(key, v, "a node index")?),
                "target" => s.target = Some(number(key, v, "a node index")?),
                "m" => s.m = Some(number(key, v, "a positive integer")?),
                other => return Err(CliError::Usage(format!("unknown key `{other}`"))),
            }
        }
        if continuous {
            s.regime = Regime::Continuous { epoch };
        }
        s.validate(epoch)?;
        Ok(s)
    }

    fn validate(&self, epoch: u64) -> Result<(), CliError> {
        self.params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.iterations == 0 {
            return Err(invalid("iterations", "0", "a positive integer"));
        }
        if epoch == 0 {
            return Err(invalid("epoch", "0", "a positive integer"));
        }
        if let Some(k) = self.k.filter(|k| !(1..=4).contains(k)) {
            return Err(invalid("k", &k.to_string(), "an integer in 1..=4"));
        }
        if self.m == Some(0) {
            return Err(invalid("m", "0", "a positive integer"));
        }
        let max_d = 2 * (self.params.side - 1);
        if let Some(&d) = self.distances.iter().find(|&&d| d > max_d) {
            return Err(invalid(
                "distance",
                &d.to_string(),
                &format!("at most {max_d} on a {0}x{0} grid", self.params.side),
            ));
        }
        let nodes = self.params.side * self.params.side;
        for (key, v) in [("source", self.source), ("target", self.target)] {
            if let Some(v) = v.filter(|&v| v >= nodes) {
                return Err(invalid(key, &v.to_string(), &format!("a node index below {nodes}")));
            }
        }
        Ok(())
    }

    pub fn require_distances(&self) -> Result<&[usize], CliError> {
        if self.distances.is_empty() {
            return Err(CliError::Usage("missing required key `distance`".into()));
        }
        Ok(&self.distances)
    }

    /// Engine configuration for one protocol and distance.
    pub fn scenario(&self, protocol: Protocol, distance: usize, measure: Measure, k: u8) -> ScenarioConfig {
        ScenarioConfig {
            iterations: self.iterations,
            warmup_ticks: self.warmup,
            via_root_only: self.via_root_only,
            multipath_k: k,
            measure,
            regime: self.regime,
            ..ScenarioConfig::new(protocol, self.params, distance)
        }
    }
}
