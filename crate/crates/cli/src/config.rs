//! Sectioned TOML run configuration. Every section is optional, every key
//! has a default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use nasforge_core::oracle::OracleConfig;
use nasforge_core::qlearn::{AgentConfig, RunMode};
use nasforge_core::reward::RewardConfig;
use nasforge_core::search::{SearchConfig, Strategy};
use nasforge_core::surrogate::{Hyperparams, RegressorKind};
use nasforge_core::{Execution, SpaceLimits};

pub const CONFIG_ENV: &str = "NASFORGE_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub space: SpaceLimits,
    pub reward: RewardConfig,
    pub surrogate: SurrogateSection,
    pub agent: AgentConfig,
    pub search: SearchSection,
    pub oracle: OracleConfig,
    pub io: IoSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub kind: RegressorKind,
    pub seed: u64,
    pub test_fraction: f64,
    pub hyper: Hyperparams,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        Self {
            kind: RegressorKind::Gbt,
            seed: 0,
            test_fraction: 0.1,
            hyper: Hyperparams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub budget: usize,
    pub episode_len: usize,
    pub max_neighbours: usize,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    pub n_sets: usize,
    pub set_size: usize,
    pub snapshot_every: usize,
    pub execution: Execution,
}

impl Default for SearchSection {
    fn default() -> Self {
        let base = SearchConfig::default();
        Self {
            budget: base.budget,
            episode_len: base.episode_len,
            max_neighbours: base.max_neighbours,
            seeds: (0..5).collect(),
            strategies: Strategy::ALL.to_vec(),
            n_sets: 5,
            set_size: 1_000,
            snapshot_every: 10,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, falling back to `$NASFORGE_CONFIG`, then to defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(env_path) {
            Some(p) => {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            budget: self.search.budget,
            episode_len: self.search.episode_len,
            max_neighbours: self.search.max_neighbours,
            limits: self.space,
        }
    }
}

/// `0..5`, `3` or `0,2,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a >= b {
            return Err(format!("empty seed range {s}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("bad seed {t:?}: {e}")))
        .collect()
}

pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    match s {
        "interleaved" => Ok(RunMode::Interleaved),
        "threaded" => Ok(RunMode::Threaded),
        _ => Err(format!("unknown mode {s:?}, expected interleaved or threaded")),
    }
}

/// Overrides for every agent setting.
#[derive(Args, Clone, Debug, Default)]
pub struct AgentArgs {
    #[arg(id = "agent-gamma", long = "agent-gamma", value_name = "X")]
    pub gamma: Option<f64>,
    #[arg(id = "agent-learning-rate", long = "agent-learning-rate", value_name = "X")]
    pub learning_rate: Option<f64>,
    #[arg(id = "agent-replay-capacity", long = "agent-replay-capacity", value_name = "N")]
    pub replay_capacity: Option<usize>,
    #[arg(id = "agent-priority-alpha", long = "agent-priority-alpha", value_name = "X")]
    pub priority_alpha: Option<f64>,
    #[arg(id = "agent-is-beta", long = "agent-is-beta", value_name = "X")]
    pub is_beta: Option<f64>,
    #[arg(id = "agent-target-sync-every-samples", long = "agent-target-sync-every-samples", value_name = "N")]
    pub target_sync_every_samples: Option<u64>,
    #[arg(id = "agent-train-episode-len", long = "agent-train-episode-len", value_name = "N")]
    pub train_episode_len: Option<usize>,
    #[arg(id = "agent-eval-episode-len", long = "agent-eval-episode-len", value_name = "N")]
    pub eval_episode_len: Option<usize>,
    #[arg(id = "agent-max-neighbours", long = "agent-max-neighbours", value_name = "N")]
    pub max_neighbours: Option<usize>,
    #[arg(id = "agent-num-workers", long = "agent-num-workers", value_name = "N")]
    pub num_workers: Option<usize>,
    #[arg(id = "agent-total-train-steps", long = "agent-total-train-steps", value_name = "N")]
    pub total_train_steps: Option<usize>,
    #[arg(id = "agent-batch-size", long = "agent-batch-size", value_name = "N")]
    pub batch_size: Option<usize>,
    #[arg(id = "agent-train-every", long = "agent-train-every", value_name = "N")]
    pub train_every: Option<usize>,
    #[arg(id = "agent-learning-starts", long = "agent-learning-starts", value_name = "N")]
    pub learning_starts: Option<usize>,
    #[arg(id = "agent-epsilon-base", long = "agent-epsilon-base", value_name = "X")]
    pub epsilon_base: Option<f64>,
    #[arg(id = "agent-epsilon-alpha", long = "agent-epsilon-alpha", value_name = "X")]
    pub epsilon_alpha: Option<f64>,
    /// Comma-separated widths of the advantage head.
    #[arg(id = "agent-hidden", long = "agent-hidden", value_name = "LIST", value_parser = parse_list::<usize>)]
    pub hidden: Option<::std::vec::Vec<usize>>,
    /// Comma-separated widths of the value head.
    #[arg(id = "agent-value-hidden", long = "agent-value-hidden", value_name = "LIST", value_parser = parse_list::<usize>)]
    pub value_hidden: Option<::std::vec::Vec<usize>>,
    /// interleaved or threaded.
    #[arg(id = "agent-mode", long = "agent-mode", value_name = "MODE", value_parser = parse_mode)]
    pub mode: Option<RunMode>,
}

macro_rules! apply {
    ($src:expr, $dst:expr, $($f:ident),*) => {
        $(if let Some(v) = $src.$f.clone() { $dst.$f = v; })*
    };
}

impl AgentArgs {
    pub fn apply(&self, cfg: &mut AgentConfig) {
        apply!(
            self,
            cfg,
            gamma,
            learning_rate,
            replay_capacity,
            priority_alpha,
            is_beta,
            target_sync_every_samples,
            train_episode_len,
            eval_episode_len,
            max_neighbours,
            num_workers,
            total_train_steps,
            batch_size,
            train_every,
            learning_starts,
            epsilon_base,
            epsilon_alpha,
            hidden,
            value_hidden,
            mode
        );
    }
}
