//! Flat `key = value` config files merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ordsae::gibbs::FitConfig;
use ordsae::survey::WeightGrouping;

pub const OUT_DIR_ENV: &str = "ORDSAE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "ordsae-out";
const PATH_KEYS: [&str; 5] = ["data", "adjacency", "frame", "out", "scenario"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Ordinal,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeArg {
    #[value(name = "cs")]
    #[serde(rename = "cs")]
    CrossSectional,
    #[value(name = "long")]
    #[serde(rename = "long")]
    Longitudinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Gibbs,
    Vb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingArg {
    PerTime,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceArg {
    WithReplacement,
    Poisson,
}

/// Settings of `ordsae fit`; every field may come from the config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Microdata CSV (unit_id,t,area,y,w,x...).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Edge list of the area adjacency graph.
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[arg(long)]
    pub n_areas: Option<usize>,
    /// Population frame CSV (area,t,prev,count,x...); defaults to the
    /// respondents themselves.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long, value_enum)]
    pub time: Option<TimeArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub categories: Option<usize>,
    /// Keep at most this many basis columns.
    #[arg(long)]
    pub n_basis: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_draws: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub sigma2_beta: Option<f64>,
    #[arg(long)]
    pub sigma2_gamma: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub fixed_phi: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Use the survey weights (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub weighted: Option<bool>,
    #[arg(long, value_enum)]
    pub grouping: Option<GroupingArg>,
    /// Nominal models: add an intercept column.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub intercept: Option<bool>,
    /// Nominal models: add previous-response indicators.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub previous_response: Option<bool>,
}

impl FitArgs {
    pub fn fit_config(&self) -> FitConfig {
        let d = FitConfig::default();
        FitConfig {
            n_draws: self.n_draws.unwrap_or(d.n_draws),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            sigma2_beta: self.sigma2_beta.unwrap_or(d.sigma2_beta),
            sigma2_gamma: self.sigma2_gamma.unwrap_or(d.sigma2_gamma),
            a: self.a.unwrap_or(d.a),
            b: self.b.unwrap_or(d.b),
            seed: self.seed.unwrap_or(d.seed),
            fixed_phi: self.fixed_phi,
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
        }
    }

    pub fn grouping(&self) -> WeightGrouping {
        match self.grouping {
            Some(GroupingArg::Pooled) => WeightGrouping::Pooled,
            _ => WeightGrouping::PerTime,
        }
    }
}

/// Settings of `ordsae simulate`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// TOML scenario file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated subset of direct,vb-cs,vb-lon,gibbs-cs,gibbs-lon.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add the median runtime column to the metrics file.
    #[arg(long)]
    #[serde(skip)]
    pub timings: bool,
}

/// Settings of `ordsae direct`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Population frame giving the cell sizes; without one the weight sum
    /// of each cell is used.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    #[arg(long)]
    pub categories: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Settings of `ordsae basis`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisArgs {
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    #[arg(long)]
    pub n_areas: Option<usize>,
    #[arg(long)]
    pub n_basis: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads `path` as a flat table, resolving relative paths against the
/// file's directory.
fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for key in PATH_KEYS {
        if let Some(toml::Value::String(s)) = table.get_mut(key) {
            let p = Path::new(s.as_str());
            if p.is_relative() {
                *s = base.join(p).to_string_lossy().into_owned();
            }
        }
    }
    Ok(table)
}

/// Overlays the flags on the config file (flags win).
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<(T, toml::Table)> {
    let mut table = match file {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    let flag_table = toml::Table::try_from(flags).context("serialising flags")?;
    table.extend(flag_table);
    let merged: T = table.clone().try_into().context("invalid configuration")?;
    Ok((merged, table))
}

/// First 16 hex digits of the SHA-256 of the resolved settings. The output
/// directory is left out, so reruns elsewhere carry the same header.
pub fn config_hash(table: &toml::Table) -> String {
    let mut table = table.clone();
    table.remove("out");
    let digest = Sha256::digest(table.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn output_dir(out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn require_file(path: Option<&Path>, what: &str) -> Result<PathBuf> {
    let Some(p) = path else {
        bail!("no {what} given");
    };
    if !p.is_file() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(p.to_path_buf())
}
