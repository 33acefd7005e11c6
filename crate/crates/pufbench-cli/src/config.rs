//! Experiment configuration: optional TOML file, command-line overrides,
//! and a PUFBENCH_SEED fallback for otherwise unseeded runs.
//!
//! Precedence per field: explicit flag > config file > (seed only) the
//! environment variable > built-in default.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result, bail};
use serde::{Deserialize, Serialize};

/// Raw file-level config; every field optional so flags can override.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub stages: Option<usize>,
    /// "x,y,z"
    pub topology: Option<String>,
    pub sigma_noise: Option<f64>,
    /// When set, member noise is calibrated to this bit error rate instead
    /// of using sigma_noise directly.
    pub target_ber: Option<f64>,
    pub member_ber: Option<f64>,
    pub seed: Option<u64>,
    pub crps: Option<usize>,
    pub test_crps: Option<usize>,
    pub repeats: Option<usize>,
    pub method: Option<String>,
    pub runs: Option<usize>,
    pub trials: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }
}

/// Where the root seed came from; echoed in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    ConfigFile,
    Environment,
    Default,
}

/// Fully resolved settings, embedded verbatim into every report.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub stages: usize,
    pub topology: (usize, usize, usize),
    pub sigma_noise: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_ber: Option<f64>,
    pub member_ber: f64,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub crps: usize,
    pub test_crps: usize,
    pub repeats: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub runs: usize,
    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

pub fn parse_topology(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    let [x, y, z] = parts[..] else {
        bail!("topology must be three comma-separated counts, e.g. 2,2,2; got {s:?}");
    };
    let parse = |v: &str| -> Result<usize> {
        v.trim()
            .parse()
            .with_context(|| format!("topology component {v:?} is not a nonnegative integer"))
    };
    let t = (parse(x)?, parse(y)?, parse(z)?);
    if t.0 + t.1 + t.2 == 0 {
        bail!("topology 0,0,0 is empty: at least one member is required");
    }
    Ok(t)
}

/// Shared flag set; each subcommand consumes the fields it needs.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// TOML configuration file; explicit flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Number of APUF stages n
    #[arg(long)]
    pub stages: Option<usize>,
    /// Topology as x,y,z (OR, AND, XOR member counts)
    #[arg(long)]
    pub topology: Option<String>,
    /// Per-weight evaluation noise magnitude
    #[arg(long)]
    pub sigma_noise: Option<f64>,
    /// Calibrate every member to this bit error rate instead of sigma-noise
    #[arg(long)]
    pub target_ber: Option<f64>,
    /// Member bit error rate assumed by analytic formulas
    #[arg(long)]
    pub member_ber: Option<f64>,
    /// Root seed; omitted runs fall back to $PUFBENCH_SEED, then 42
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training / measurement challenge count
    #[arg(long)]
    pub crps: Option<usize>,
    /// Held-out test challenge count
    #[arg(long)]
    pub test_crps: Option<usize>,
    /// Noisy measurements per challenge (m)
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Attack method: lr | mlp | cmaes | hybrid
    #[arg(long)]
    pub method: Option<String>,
    /// Independent evolution-strategy runs
    #[arg(long)]
    pub runs: Option<usize>,
    /// Independent training trials / restarts
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Output file (dataset for gen, report otherwise; default stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn resolve(args: &CommonArgs) -> Result<Resolved> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let (seed, seed_source) = if let Some(s) = args.seed {
        (s, SeedSource::Flag)
    } else if let Some(s) = file.seed {
        (s, SeedSource::ConfigFile)
    } else if let Ok(v) = std::env::var("PUFBENCH_SEED") {
        let s = v
            .parse()
            .with_context(|| format!("PUFBENCH_SEED={v:?} is not a valid integer seed"))?;
        (s, SeedSource::Environment)
    } else {
        (42, SeedSource::Default)
    };
    let topology_str = args.topology.clone().or(file.topology);
    let topology = match topology_str {
        Some(s) => parse_topology(&s)?,
        None => (2, 2, 2),
    };
    Ok(Resolved {
        stages: args.stages.or(file.stages).unwrap_or(64),
        topology,
        sigma_noise: args.sigma_noise.or(file.sigma_noise).unwrap_or(0.05),
        target_ber: args.target_ber.or(file.target_ber),
        member_ber: args.member_ber.or(file.member_ber).unwrap_or(0.06),
        seed,
        seed_source,
        crps: args.crps.or(file.crps).unwrap_or(10_000),
        test_crps: args.test_crps.or(file.test_crps).unwrap_or(2_000),
        repeats: args.repeats.or(file.repeats).unwrap_or(11),
        method: args.method.clone().or(file.method),
        runs: args.runs.or(file.runs).unwrap_or(5),
        trials: args.trials.or(file.trials).unwrap_or(6),
        epochs: args.epochs.or(file.epochs).unwrap_or(0), // 0 = method default
        batch_size: args.batch_size.or(file.batch_size).unwrap_or(256),
        out: args.out.clone().or(file.out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_parses_and_rejects() {
        assert_eq!(parse_topology("2,2,2").unwrap(), (2, 2, 2));
        assert_eq!(parse_topology("0, 0, 5").unwrap(), (0, 0, 5));
        assert!(parse_topology("0,0,0").is_err());
        assert!(parse_topology("1,2").is_err());
        assert!(parse_topology("a,b,c").is_err());
    }
}
