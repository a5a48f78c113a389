//! Multi-seed comparison of strategies with best-so-far curves.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{csv_err, run_local_search, run_random_search, run_random_walk, EditNeighbourhood, QueryBudget, Scorer, SearchConfig, SearchTrace, StartSource, Strategy};
use crate::archspace::sample_with;
use crate::error::Result;
use crate::exec::{self, Execution};
use crate::qlearn::{run_rl_search, AgentConfig};
use crate::reward::RewardConfig;
use crate::rng::derived;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Run `i` draws its start architectures from set `i % n_sets`.
    pub n_sets: usize,
    pub set_size: usize,
    pub execution: Execution,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            seeds: (0..5).collect(),
            n_sets: 5,
            set_size: 1_000,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: Strategy,
    pub seed: u64,
    pub set: usize,
    pub trace: SearchTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub query: usize,
    pub best_f1_mean: f64,
    pub best_f1_std: f64,
    pub best_params_mean: f64,
    pub best_params_std: f64,
    pub best_utility_mean: f64,
    pub best_utility_std: f64,
    /// Adversarial predictions up to this query, summed over seeds.
    pub adversarial_cumulative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    /// Best utility of each run, in seed order.
    pub final_utilities: Vec<f64>,
    pub adversarial_counts: Vec<usize>,
    pub curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub runs: Vec<RunResult>,
    pub summaries: Vec<StrategySummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

/// Best-so-far values after each query, carried forward once a trace ends.
fn running_best(trace: &SearchTrace, budget: usize) -> Vec<(f64, f64, f64, usize)> {
    let mut out = Vec::with_capacity(budget);
    let (mut f1, mut params, mut u, mut adv) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, 0);
    for q in 0..budget {
        if let Some(e) = trace.entries.get(q) {
            f1 = f1.max(e.f1);
            params = params.min(e.params as f64);
            u = u.max(e.utility);
            adv += usize::from(e.adversarial);
        }
        out.push((f1, params, u, adv));
    }
    out
}

pub fn summarize(strategy: Strategy, runs: &[&RunResult], budget: usize) -> StrategySummary {
    let curves: Vec<_> = runs.iter().map(|r| running_best(&r.trace, budget)).collect();
    let curve = (0..budget)
        .filter(|&q| curves.iter().all(|c| c[q].0.is_finite()))
        .map(|q| {
            let pick = |k: usize| -> Vec<f64> {
                curves
                    .iter()
                    .map(|c| match k {
                        0 => c[q].0,
                        1 => c[q].1,
                        _ => c[q].2,
                    })
                    .collect()
            };
            let (f1m, f1s) = mean_std(&pick(0));
            let (pm, ps) = mean_std(&pick(1));
            let (um, us) = mean_std(&pick(2));
            CurvePoint {
                query: q + 1,
                best_f1_mean: f1m,
                best_f1_std: f1s,
                best_params_mean: pm,
                best_params_std: ps,
                best_utility_mean: um,
                best_utility_std: us,
                adversarial_cumulative: curves.iter().map(|c| c[q].3).sum(),
            }
        })
        .collect();
    StrategySummary {
        strategy,
        final_utilities: runs.iter().map(|r| r.trace.best_utility().unwrap_or(f64::NAN)).collect(),
        adversarial_counts: runs.iter().map(|r| r.trace.adversarial_count()).collect(),
        curve,
    }
}

/// Runs every strategy once per seed. Runs are independent and may execute
/// concurrently; each is single-threaded and deterministic.
pub fn evaluate_suite(
    suite: &SuiteConfig,
    search: &SearchConfig,
    agent: &AgentConfig,
    reward: &RewardConfig,
    scorer: &dyn Scorer,
) -> Result<SuiteReport> {
    let n_sets = suite.n_sets.max(1);
    let sets: Vec<StartSource> = (0..n_sets)
        .map(|k| {
            let mut rng = derived(k as u64, &[0x5E75]);
            let pool = (0..suite.set_size.max(1))
                .map(|_| sample_with(&mut rng, &search.limits))
                .collect::<Result<Vec<_>>>()?;
            Ok(StartSource::Pool(pool))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(Strategy, usize, u64)> = suite
        .strategies
        .iter()
        .flat_map(|&s| suite.seeds.iter().enumerate().map(move |(i, &seed)| (s, i % n_sets, seed)))
        .collect();
    let hood = EditNeighbourhood::new(search.limits, search.max_neighbours);
    let mut agent = agent.clone();
    agent.mode = crate::qlearn::RunMode::Interleaved;
    let results = exec::map(suite.execution, &jobs, |&(strategy, set, seed)| -> Result<RunResult> {
        let budget = QueryBudget::new(search.budget);
        let starts = &sets[set];
        let trace = match strategy {
            Strategy::Random => run_random_search(budget, reward, scorer, starts, seed)?,
            Strategy::Walk => run_random_walk(budget, search.episode_len, reward, scorer, &hood, starts, seed)?,
            Strategy::Local => run_local_search(budget, reward, scorer, &hood, starts, seed)?,
            Strategy::Rl => run_rl_search(&agent, reward, scorer, &search.limits, starts, budget, seed)?.trace,
        };
        log::info!("suite: {strategy} seed {seed} best utility {:?}", trace.best_utility());
        Ok(RunResult {
            strategy,
            seed,
            set,
            trace,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summaries = suite
        .strategies
        .iter()
        .map(|&s| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.strategy == s).collect();
            summarize(s, &mine, search.budget)
        })
        .collect();
    Ok(SuiteReport { runs, summaries })
}

impl SuiteReport {
    pub fn summary(&self, strategy: Strategy) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == strategy)
    }

    /// Long-format curves, one row per strategy and query.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "strategy",
            "query",
            "best_f1_mean",
            "best_f1_std",
            "best_params_mean",
            "best_params_std",
            "best_utility_mean",
            "best_utility_std",
            "adversarial_cumulative",
        ])
        .map_err(csv_err)?;
        for s in &self.summaries {
            for p in &s.curve {
                w.write_record([
                    s.strategy.to_string(),
                    p.query.to_string(),
                    p.best_f1_mean.to_string(),
                    p.best_f1_std.to_string(),
                    p.best_params_mean.to_string(),
                    p.best_params_std.to_string(),
                    p.best_utility_mean.to_string(),
                    p.best_utility_std.to_string(),
                    p.adversarial_cumulative.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::Architecture;

    struct EdgeScorer;

    impl Scorer for EdgeScorer {
        fn predict_f1(&self, arch: &Architecture) -> f64 {
            arch.num_edges() as f64 / 27.0
        }
    }

    fn quick_suite() -> (SuiteConfig, SearchConfig, AgentConfig) {
        let suite = SuiteConfig {
            strategies: vec![Strategy::Random, Strategy::Walk, Strategy::Local],
            seeds: vec![0, 1, 2],
            set_size: 200,
            ..Default::default()
        };
        let search = SearchConfig {
            budget: 60,
            ..Default::default()
        };
        (suite, search, AgentConfig::default())
    }

    #[test]
    fn report_is_deterministic() {
        let (suite, search, agent) = quick_suite();
        let reward = RewardConfig::default();
        let a = evaluate_suite(&suite, &search, &agent, &reward, &EdgeScorer).unwrap();
        let b = evaluate_suite(
            &SuiteConfig {
                execution: Execution::Sequential,
                ..suite.clone()
            },
            &search,
            &agent,
            &reward,
            &EdgeScorer,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 9);
        let random = a.summary(Strategy::Random).unwrap();
        assert_eq!(random.curve.len(), 60);
        assert!(random.curve.windows(2).all(|w| w[1].best_utility_mean >= w[0].best_utility_mean));
        assert!(random.curve.windows(2).all(|w| w[1].best_params_mean <= w[0].best_params_mean));
        // edge-count f1 of 28/27 is adversarial
        assert!(a.summaries.iter().any(|s| s.adversarial_counts.iter().any(|&c| c > 0)));
    }

    #[test]
    fn summary_csv_has_fixed_columns() {
        let (suite, search, agent) = quick_suite();
        let report = evaluate_suite(&suite, &search, &agent, &RewardConfig::default(), &EdgeScorer).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,query,best_f1_mean,best_f1_std,best_params_mean,best_params_std,best_utility_mean,best_utility_std,adversarial_cumulative"
        );
        assert!(lines.next().unwrap().starts_with("random,1,"));
    }
}
