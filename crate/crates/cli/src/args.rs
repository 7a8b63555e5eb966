use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use nodemixup::diagnostics::CkaVariant;
use nodemixup::TrainConfig;

/// Seed list: `a..b` (inclusive), `a,b,c`, or a single integer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("invalid seed `{t}`"));
        if let Some((a, b)) = s.split_once("..") {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(format!("empty seed range {s}"));
            }
            return Ok(Seeds((a..=b).collect()));
        }
        let seeds = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        Ok(Seeds(seeds))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridAxis {
    Standard,
    Values(String, Vec<f64>),
}

pub const GRID_KEYS: [&str; 5] = ["lambda_intra", "lambda_inter", "beta_s", "beta_d", "gamma"];

impl FromStr for GridAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "standard" {
            return Ok(GridAxis::Standard);
        }
        let (key, values) = s
            .split_once('=')
            .ok_or_else(|| format!("expected `standard` or KEY=V1,V2,..., got `{s}`"))?;
        if !GRID_KEYS.contains(&key) {
            return Err(format!(
                "unknown grid key `{key}` (expected one of {})",
                GRID_KEYS.join(", ")
            ));
        }
        let values = values
            .split(',')
            .filter(|v| !v.trim().is_empty())
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("invalid value `{v}` for {key}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(format!("empty grid spec for {key}"));
        }
        Ok(GridAxis::Values(key.to_string(), values))
    }
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Replace an existing output directory from an earlier run.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub p_in: f64,
    #[arg(long, default_value_t = 0.005)]
    pub p_out: f64,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 20)]
    pub labels_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub valid_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// `<name>.content` file: `id feature... class` per line.
    #[arg(long)]
    pub content: PathBuf,
    /// `<name>.cites` file: `cited citing` per line.
    #[arg(long)]
    pub cites: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub labels_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub valid_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, env = "NODEMIXUP_DATA")]
    pub data: PathBuf,
    #[arg(long)]
    pub labels_per_class: usize,
    #[arg(long, default_value_t = 30)]
    pub valid_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Flags that override fields of the JSON config.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON training config; flags take precedence over its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds as `a..b` (inclusive), `a,b,c` or a single value.
    #[arg(long)]
    pub seeds: Option<Seeds>,
    #[arg(long)]
    pub mixup: Option<Toggle>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lambda_intra: Option<f64>,
    #[arg(long)]
    pub lambda_inter: Option<f64>,
    #[arg(long)]
    pub beta_s: Option<f64>,
    #[arg(long)]
    pub beta_d: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.0.clone();
        }
        if let Some(t) = self.mixup {
            cfg.mixup_enabled = t == Toggle::On;
        }
        set(&mut cfg.hidden, &self.hidden);
        set(&mut cfg.dropout, &self.dropout);
        set(&mut cfg.lr, &self.lr);
        set(&mut cfg.weight_decay, &self.weight_decay);
        set(&mut cfg.max_epochs, &self.epochs);
        set(&mut cfg.patience, &self.patience);
        let m = &mut cfg.mixup;
        set(&mut m.lambda_intra, &self.lambda_intra);
        set(&mut m.lambda_inter, &self.lambda_inter);
        set(&mut m.beta_s, &self.beta_s);
        set(&mut m.beta_d, &self.beta_d);
        set(&mut m.gamma, &self.gamma);
        set(&mut m.tau, &self.tau);
        set(&mut m.alpha, &self.alpha);
        set(&mut m.warmup_epochs, &self.warmup);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, env = "NODEMIXUP_DATA")]
    pub data: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Seeds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, env = "NODEMIXUP_DATA")]
    pub data: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// `standard` for the full grid, or KEY=V1,V2,... (repeatable) with KEY one
    /// of lambda_intra, lambda_inter, beta_s, beta_d, gamma. Axes not given
    /// stay at the config value.
    #[arg(long = "grid", required = true)]
    pub grid: Vec<GridAxis>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiagnoseKind {
    Rc,
    Cka,
    Avgsp,
    Pearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Linear,
    Printed,
}

impl From<VariantArg> for CkaVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Linear => CkaVariant::Linear,
            VariantArg::Printed => CkaVariant::Printed,
        }
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(value_enum)]
    pub kind: DiagnoseKind,
    #[arg(long, env = "NODEMIXUP_DATA")]
    pub data: PathBuf,
    /// Model checkpoint; required for `cka` and `pearson`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Seed for the CKA node sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = VariantArg::Linear)]
    pub variant: VariantArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
