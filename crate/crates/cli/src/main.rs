//! `nasforge`: sampling, sizing, corpus generation, surrogate training and
//! search runs from one binary.
//!
//! Settings come from a sectioned TOML file (`--config` or
//! `$NASFORGE_CONFIG`); command-line flags override the file. Exit status is
//! 0 on success, 1 for malformed input and 2 for budget or limit violations.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use nasforge_core::search::Strategy;
use nasforge_core::surrogate::RegressorKind;
use nasforge_core::Execution;

use commands::LoadedScorer;
use config::{parse_list, parse_seeds, AgentArgs, RunConfig, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(name = "nasforge", version, about = "Surrogate-driven search over labeled-DAG micro-networks")]
struct Cli {
    /// TOML run configuration with optional sections
    /// space, reward, surrogate, agent, search, oracle and io.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Default)]
struct SpaceArgs {
    #[arg(long)]
    max_vertices: Option<usize>,
    #[arg(long)]
    num_ops: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct ScorerArgs {
    /// Surrogate model written by `train-surrogate --model-out`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Score with the synthetic oracle's noise-free F1 instead of a model.
    #[arg(long)]
    oracle: bool,
}

#[derive(clap::Args, Debug, Default)]
struct SearchArgs {
    /// Query budget per run.
    #[arg(long)]
    budget: Option<usize>,
    /// Seeds as `0..5`, `3` or `0,2,7`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<::std::vec::Vec<u64>>,
    #[arg(long)]
    episode_len: Option<usize>,
    #[arg(long)]
    max_neighbours: Option<usize>,
    /// Queries between Pareto snapshots.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Run batch work on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample architectures uniformly over vertex counts, one JSON per line.
    Sample {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Print the trainable-parameter count of every architecture in a file.
    Params {
        /// JSONL of architectures or performance records.
        #[arg(long)]
        arch_file: PathBuf,
    },
    /// Print the exact upper bound on the size of the search space.
    Bound {
        #[arg(long, default_value_t = 8)]
        max_vertices: usize,
        #[arg(long, default_value_t = 10)]
        num_ops: usize,
    },
    /// Generate a synthetic performance corpus as JSONL.
    GenCorpus {
        /// TOML file of oracle settings; the config's [oracle] section otherwise.
        #[arg(long)]
        oracle_config: Option<PathBuf>,
        /// Label these architectures instead of sampling new ones.
        #[arg(long)]
        arch_file: Option<PathBuf>,
        #[arg(long)]
        n_records: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        master_seed: Option<u64>,
        #[arg(long)]
        seeds_per_arch: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Cross-validate surrogate regressors and optionally save a fitted model.
    TrainSurrogate {
        /// Comma-separated regressor names, or `all`.
        #[arg(long, default_value = None)]
        kind: Option<String>,
        #[arg(long)]
        records: PathBuf,
        /// Cross-validation report as JSON.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Model fitted on every record, as JSON.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        sequential: bool,
    },
    /// Run one strategy; writes trace.csv and pareto.csv per seed.
    Search {
        #[arg(long)]
        strategy: Strategy,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        agent: AgentArgs,
        /// Where outputs go; the config's io.out_dir, then `out`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Save the trained Q-network next to the trace (rl only).
        #[arg(long)]
        save_checkpoint: bool,
    },
    /// Compare strategies over several seeds; writes suite_summary.csv.
    Suite {
        /// Comma-separated strategies.
        #[arg(long, value_parser = parse_list::<Strategy>)]
        strategies: Option<::std::vec::Vec<Strategy>>,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn apply_space(cfg: &mut RunConfig, s: &SpaceArgs) {
    if let Some(v) = s.max_vertices {
        cfg.space.max_vertices = v;
        cfg.oracle.limits.max_vertices = v;
    }
    if let Some(v) = s.num_ops {
        cfg.space.num_ops = v;
        cfg.oracle.limits.num_ops = v;
    }
}

fn apply_search(cfg: &mut RunConfig, s: &SearchArgs) {
    let sec = &mut cfg.search;
    if let Some(v) = s.budget {
        sec.budget = v;
    }
    if let Some(v) = &s.seeds {
        sec.seeds = v.clone();
    }
    if let Some(v) = s.episode_len {
        sec.episode_len = v;
    }
    if let Some(v) = s.max_neighbours {
        sec.max_neighbours = v;
    }
    if let Some(v) = s.snapshot_every {
        sec.snapshot_every = v;
    }
    if s.sequential {
        sec.execution = Execution::Sequential;
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.io.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_kinds(s: &str) -> Result<Vec<RegressorKind>> {
    if s == "all" {
        return Ok(RegressorKind::ALL.to_vec());
    }
    parse_list::<RegressorKind>(s).map_err(anyhow::Error::msg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Sample { n, seed, out, space } => {
            apply_space(&mut cfg, &space);
            commands::sample(&cfg, n, seed, out.as_deref())
        }
        Command::Params { arch_file } => commands::params(&arch_file),
        Command::Bound { max_vertices, num_ops } => commands::bound(max_vertices, num_ops),
        Command::GenCorpus {
            oracle_config,
            arch_file,
            n_records,
            noise_sigma,
            master_seed,
            seeds_per_arch,
            out,
            sequential,
        } => {
            let mut oc = commands::load_oracle_config(&cfg, oracle_config.as_deref())?;
            if let Some(v) = n_records {
                oc.n_records = v;
            }
            if let Some(v) = noise_sigma {
                oc.noise_sigma = v;
            }
            if let Some(v) = master_seed {
                oc.master_seed = v;
            }
            if let Some(v) = seeds_per_arch {
                oc.seeds_per_arch = v;
            }
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            commands::gen_corpus(oc, arch_file.as_deref(), out.as_deref(), exec)
        }
        Command::TrainSurrogate {
            kind,
            records,
            report_out,
            model_out,
            seed,
            test_fraction,
            sequential,
        } => {
            let kinds = match kind {
                Some(k) => parse_kinds(&k)?,
                None => vec![cfg.surrogate.kind],
            };
            if let Some(v) = seed {
                cfg.surrogate.seed = v;
            }
            if let Some(v) = test_fraction {
                cfg.surrogate.test_fraction = v;
            }
            if sequential {
                cfg.surrogate.hyper.execution = Execution::Sequential;
            }
            commands::train_surrogate(&cfg, &kinds, &records, report_out.as_deref(), model_out.as_deref())
        }
        Command::Search {
            strategy,
            scorer,
            search,
            agent,
            out_dir: dir,
            save_checkpoint,
        } => {
            apply_search(&mut cfg, &search);
            agent.apply(&mut cfg.agent);
            let loaded = LoadedScorer::load(&cfg, scorer.model.as_deref(), scorer.oracle)?;
            let dir = out_dir(&cfg, dir);
            commands::search(&cfg, strategy, loaded.as_scorer(), Path::new(&dir), save_checkpoint)
        }
        Command::Suite {
            strategies,
            scorer,
            search,
            agent,
            out_dir: dir,
        } => {
            apply_search(&mut cfg, &search);
            agent.apply(&mut cfg.agent);
            if let Some(s) = strategies {
                cfg.search.strategies = s;
            }
            let loaded = LoadedScorer::load(&cfg, scorer.model.as_deref(), scorer.oracle)?;
            let dir = out_dir(&cfg, dir);
            commands::suite(&cfg, loaded.as_scorer(), &dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
