use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use nasforge_core::archspace::{sample_with, search_space_upper_bound, validate};
use nasforge_core::netbuild::count_params;
use nasforge_core::oracle::{Oracle, OracleConfig};
use nasforge_core::qlearn::run_rl_search;
use nasforge_core::rng::seeded;
use nasforge_core::search::pareto::write_snapshots_csv;
use nasforge_core::search::{
    evaluate_suite, pareto_snapshots, run_local_search, run_random_search, run_random_walk, EditNeighbourhood, QueryBudget, Scorer,
    SearchTrace, StartSource, Strategy, SuiteConfig,
};
use nasforge_core::surrogate::cv::format_table;
use nasforge_core::surrogate::{cross_validate, fit, read_jsonl, write_jsonl, PerformanceRecord, RegressorKind, TrainedModel};
use nasforge_core::{Architecture, Error as CoreError, Execution, SpaceLimits};

use crate::config::RunConfig;

/// A request outside the configured budget or space limits.
#[derive(Debug)]
pub struct LimitsViolation(pub String);

impl fmt::Display for LimitsViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for LimitsViolation {}

/// 2 for budget or limits violations, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<LimitsViolation>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            if matches!(e, CoreError::InvalidLimits(_) | CoreError::BudgetExceeded(_) | CoreError::BudgetExhausted(_)) {
                return 2;
            }
        }
    }
    1
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn check_budget(budget: usize) -> Result<()> {
    if budget == 0 {
        bail!(LimitsViolation("query budget must be positive".into()));
    }
    Ok(())
}

fn check_space(limits: &SpaceLimits) -> Result<()> {
    limits.check_representable()?;
    Ok(())
}

/// Architecture lines, or record lines whose architecture is taken.
pub fn read_architectures(path: &Path) -> Result<Vec<Architecture>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let arch = match serde_json::from_str::<Architecture>(&line) {
            Ok(a) => a,
            Err(first) => PerformanceRecord::from_json_line(&line)
                .map(|r| r.arch)
                .map_err(|_| CoreError::Parse {
                    line: idx + 1,
                    message: first.to_string(),
                })?,
        };
        let report = validate(&arch);
        if !report.ok {
            return Err(CoreError::Parse {
                line: idx + 1,
                message: report.to_string(),
            }
            .into());
        }
        out.push(arch);
    }
    Ok(out)
}

pub fn sample(cfg: &RunConfig, n: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    check_space(&cfg.space)?;
    let mut rng = seeded(seed);
    let mut w = output(out)?;
    for _ in 0..n {
        let arch = sample_with(&mut rng, &cfg.space)?;
        writeln!(w, "{}", serde_json::to_string(&arch)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn params(arch_file: &Path) -> Result<()> {
    let archs = read_architectures(arch_file)?;
    let mut w = BufWriter::new(io::stdout().lock());
    writeln!(w, "index\tvertices\tedges\tparams\tarchitecture")?;
    for (i, a) in archs.iter().enumerate() {
        writeln!(
            w,
            "{i}\t{}\t{}\t{}\t{}",
            a.num_vertices(),
            a.num_edges(),
            count_params(a),
            serde_json::to_string(a)?
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn bound(max_vertices: usize, num_ops: usize) -> Result<()> {
    let limits = SpaceLimits::new(max_vertices, num_ops)?;
    println!("{}", search_space_upper_bound(&limits)?);
    Ok(())
}

pub fn load_oracle_config(cfg: &RunConfig, path: Option<&Path>) -> Result<OracleConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing oracle config {}", p.display()))
        }
        None => Ok(cfg.oracle.clone()),
    }
}

fn oracle_from(cfg: OracleConfig) -> Result<Oracle> {
    if let Err(e) = cfg.limits.check_representable() {
        return Err(e.into());
    }
    Ok(Oracle::new(cfg)?)
}

/// Labels `arch_file` with the oracle when given, otherwise samples a corpus.
pub fn gen_corpus(oracle_cfg: OracleConfig, arch_file: Option<&Path>, out: Option<&Path>, exec: Execution) -> Result<()> {
    let oracle = oracle_from(oracle_cfg)?;
    let records = match arch_file {
        Some(path) => {
            let per = oracle.config().seeds_per_arch as u64;
            read_architectures(path)?
                .into_iter()
                .flat_map(|a| (0..per).map(move |s| (a, s)))
                .map(|(a, s)| PerformanceRecord::new(a, s, oracle.synth_f1(&a, s)))
                .collect()
        }
        None => oracle.generate_corpus(exec)?,
    };
    let mut w = output(out)?;
    write_jsonl(&mut w, &records)?;
    w.flush()?;
    Ok(())
}

pub fn train_surrogate(
    cfg: &RunConfig,
    kinds: &[RegressorKind],
    records_path: &Path,
    report_out: Option<&Path>,
    model_out: Option<&Path>,
) -> Result<()> {
    if kinds.is_empty() {
        bail!("at least one regressor kind is required");
    }
    if model_out.is_some() && kinds.len() != 1 {
        bail!("--model-out needs exactly one --kind");
    }
    let records = read_jsonl(open(records_path)?).with_context(|| format!("reading {}", records_path.display()))?;
    let s = &cfg.surrogate;
    let reports = kinds
        .iter()
        .map(|&k| {
            log::info!("cross-validating {k}");
            cross_validate(k, &records, &s.hyper, s.test_fraction, s.seed)
        })
        .collect::<nasforge_core::Result<Vec<_>>>()?;
    print!("{}", format_table(&reports));
    if let Some(path) = report_out {
        let mut w = create(path)?;
        if reports.len() == 1 {
            serde_json::to_writer_pretty(&mut w, &reports[0])?;
        } else {
            serde_json::to_writer_pretty(&mut w, &reports)?;
        }
        writeln!(w)?;
        w.flush()?;
    }
    if let Some(path) = model_out {
        let model = fit(kinds[0], &records, &s.hyper, s.seed)?;
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &model)?;
        w.flush()?;
    }
    Ok(())
}

/// A fitted surrogate from disk, or the synthetic oracle's noise-free F1.
pub enum LoadedScorer {
    Model(TrainedModel),
    Oracle(Oracle),
}

impl LoadedScorer {
    pub fn load(cfg: &RunConfig, model: Option<&Path>, use_oracle: bool) -> Result<Self> {
        match (model, use_oracle) {
            (Some(_), true) => bail!("--model and --oracle are mutually exclusive"),
            (Some(path), false) => {
                let m: TrainedModel = serde_json::from_reader(open(path)?).with_context(|| format!("reading model {}", path.display()))?;
                Ok(Self::Model(m))
            }
            (None, true) => Ok(Self::Oracle(oracle_from(cfg.oracle.clone())?)),
            (None, false) => bail!("either --model or --oracle is required"),
        }
    }

    pub fn as_scorer(&self) -> &dyn Scorer {
        match self {
            Self::Model(m) => m,
            Self::Oracle(o) => o,
        }
    }
}

fn write_trace(dir: &Path, trace: &SearchTrace, snapshot_every: usize) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    trace.write_csv(create(&dir.join("trace.csv"))?)?;
    let snaps = pareto_snapshots(trace, snapshot_every.max(1));
    write_snapshots_csv(&snaps, create(&dir.join("pareto.csv"))?)?;
    Ok(())
}

/// One run per seed. A single seed writes straight into `out_dir`;
/// several seeds get one `seed-<n>` subdirectory each.
pub fn search(cfg: &RunConfig, strategy: Strategy, scorer: &dyn Scorer, out_dir: &Path, save_checkpoint: bool) -> Result<()> {
    check_space(&cfg.space)?;
    check_budget(cfg.search.budget)?;
    if cfg.search.seeds.is_empty() {
        bail!("at least one seed is required");
    }
    let search = cfg.search_config();
    let starts = StartSource::Uniform(cfg.space);
    let hood = EditNeighbourhood::new(cfg.space, search.max_neighbours);
    for &seed in &cfg.search.seeds {
        let dir: PathBuf = if cfg.search.seeds.len() == 1 {
            out_dir.to_path_buf()
        } else {
            out_dir.join(format!("seed-{seed}"))
        };
        let budget = QueryBudget::new(search.budget);
        let trace = match strategy {
            Strategy::Random => run_random_search(budget, &cfg.reward, scorer, &starts, seed)?,
            Strategy::Walk => run_random_walk(budget, search.episode_len, &cfg.reward, scorer, &hood, &starts, seed)?,
            Strategy::Local => run_local_search(budget, &cfg.reward, scorer, &hood, &starts, seed)?,
            Strategy::Rl => {
                let run = run_rl_search(&cfg.agent, &cfg.reward, scorer, &cfg.space, &starts, budget, seed)?;
                if save_checkpoint {
                    fs::create_dir_all(&dir)?;
                    let mut w = create(&dir.join("qnetwork.json"))?;
                    run.checkpoint(&cfg.agent).save(&mut w)?;
                    w.flush()?;
                }
                run.trace
            }
        };
        write_trace(&dir, &trace, cfg.search.snapshot_every)?;
        println!(
            "{strategy} seed {seed}: {} queries, best utility {:.6}, adversarial {}",
            trace.len(),
            trace.best_utility().unwrap_or(f64::NAN),
            trace.adversarial_count()
        );
    }
    Ok(())
}

pub fn suite(cfg: &RunConfig, scorer: &dyn Scorer, out_dir: &Path) -> Result<()> {
    check_space(&cfg.space)?;
    check_budget(cfg.search.budget)?;
    if cfg.search.seeds.is_empty() || cfg.search.strategies.is_empty() {
        bail!("the suite needs at least one seed and one strategy");
    }
    let suite = SuiteConfig {
        strategies: cfg.search.strategies.clone(),
        seeds: cfg.search.seeds.clone(),
        n_sets: cfg.search.n_sets,
        set_size: cfg.search.set_size,
        execution: cfg.search.execution,
    };
    let report = evaluate_suite(&suite, &cfg.search_config(), &cfg.agent, &cfg.reward, scorer)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    report.write_csv(create(&out_dir.join("suite_summary.csv"))?)?;
    let mut runs = csv::Writer::from_writer(create(&out_dir.join("suite_runs.csv"))?);
    runs.write_record(["strategy", "seed", "start_set", "best_utility", "adversarial"])?;
    for r in &report.runs {
        runs.write_record([
            r.strategy.to_string(),
            r.seed.to_string(),
            r.set.to_string(),
            r.trace.best_utility().unwrap_or(f64::NAN).to_string(),
            r.trace.adversarial_count().to_string(),
        ])?;
    }
    runs.flush()?;
    for s in &report.summaries {
        let n = s.final_utilities.len() as f64;
        let mean = s.final_utilities.iter().sum::<f64>() / n;
        let adv: usize = s.adversarial_counts.iter().sum();
        println!("{:<7} mean final utility {mean:.6} over {n} seeds, adversarial {adv}", s.strategy.as_str());
    }
    Ok(())
}
