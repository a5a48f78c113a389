//! Baseline search strategies under a shared query budget.
//!
//! A query is one reward evaluation charged against [`QueryBudget`]. Random
//! search and random walks are episodic and pay once per episode; local
//! search pays for every neighbour it scores.

pub mod pareto;
pub mod suite;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::archspace::{canonical_hash, neighbours, sample_with, validate, Architecture, SpaceLimits};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::netbuild::count_params;
use crate::oracle::Oracle;
use crate::reward::{detect_adversarial, utility, RewardConfig};
use crate::rng::{derived, SearchRng};
use crate::surrogate::TrainedModel;

pub use pareto::{hypervolume, pareto_snapshots, ParetoFront, ParetoPoint};
pub use suite::{evaluate_suite, SuiteConfig, SuiteReport};

/// Anything that predicts F1 for an architecture.
pub trait Scorer: Sync {
    fn predict_f1(&self, arch: &Architecture) -> f64;

    fn predict_many(&self, archs: &[Architecture]) -> Vec<f64> {
        archs.iter().map(|a| self.predict_f1(a)).collect()
    }
}

impl Scorer for TrainedModel {
    fn predict_f1(&self, arch: &Architecture) -> f64 {
        self.predict(arch)
    }

    fn predict_many(&self, archs: &[Architecture]) -> Vec<f64> {
        TrainedModel::predict_many(self, archs, Execution::Sequential)
    }
}

/// Scores with the noise-free oracle mean.
impl Scorer for Oracle {
    fn predict_f1(&self, arch: &Architecture) -> f64 {
        self.mean_f1(arch)
    }
}

/// Moves available from an architecture.
pub trait Neighbourhood: Sync {
    fn neighbours(&self, arch: &Architecture, rng: &mut SearchRng) -> Vec<Architecture>;
}

/// The single-edit neighbourhood, randomly subsampled to at most `cap`
/// architectures (kept in hash order).
#[derive(Clone, Debug)]
pub struct EditNeighbourhood {
    pub limits: SpaceLimits,
    pub cap: usize,
}

impl EditNeighbourhood {
    pub fn new(limits: SpaceLimits, cap: usize) -> Self {
        Self { limits, cap }
    }
}

impl Neighbourhood for EditNeighbourhood {
    fn neighbours(&self, arch: &Architecture, rng: &mut SearchRng) -> Vec<Architecture> {
        let mut all = neighbours(arch, &self.limits);
        if all.len() > self.cap {
            let (kept, _) = all.partial_shuffle(rng, self.cap);
            let mut kept = kept.to_vec();
            kept.sort_by_key(canonical_hash);
            all = kept;
        }
        all
    }
}

/// Where episodes and random draws take their starting architectures.
#[derive(Clone, Debug)]
pub enum StartSource {
    Uniform(SpaceLimits),
    Pool(Vec<Architecture>),
}

impl StartSource {
    pub fn draw(&self, rng: &mut SearchRng) -> Result<Architecture> {
        match self {
            StartSource::Uniform(limits) => sample_with(rng, limits),
            StartSource::Pool(pool) => pool
                .choose(rng)
                .copied()
                .ok_or_else(|| Error::InvalidConfig("empty start pool".into())),
        }
    }
}

/// Counts queries; charging beyond the limit is a logic error and panics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryBudget {
    pub max_queries: usize,
    pub queries_used: usize,
}

impl QueryBudget {
    pub fn new(max_queries: usize) -> Self {
        Self {
            max_queries,
            queries_used: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.max_queries - self.queries_used
    }

    pub fn is_exhausted(&self) -> bool {
        self.queries_used >= self.max_queries
    }

    /// Charges one query and returns its 1-based index.
    pub fn debit(&mut self) -> usize {
        assert!(
            self.queries_used < self.max_queries,
            "query budget of {} exceeded",
            self.max_queries
        );
        self.queries_used += 1;
        self.queries_used
    }
}

impl Default for QueryBudget {
    fn default() -> Self {
        Self::new(300)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub query: usize,
    pub arch: Architecture,
    pub f1: f64,
    pub params: usize,
    pub utility: f64,
    pub adversarial: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub entries: Vec<TraceEntry>,
    /// Query indices at which local search accepted a move.
    pub accepted: Vec<usize>,
}

impl SearchTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest utility seen; this is a run's final utility.
    pub fn best_utility(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.utility).max_by(f64::total_cmp)
    }

    pub fn adversarial_count(&self) -> usize {
        self.entries.iter().filter(|e| e.adversarial).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["query", "f1", "params", "utility", "adversarial"]).map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.query.to_string(),
                e.f1.to_string(),
                e.params.to_string(),
                e.utility.to_string(),
                u8::from(e.adversarial).to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Budgeted scoring shared by every strategy.
pub struct Evaluator<'a> {
    scorer: &'a dyn Scorer,
    reward: &'a RewardConfig,
    budget: QueryBudget,
    trace: SearchTrace,
}

impl<'a> Evaluator<'a> {
    pub fn new(scorer: &'a dyn Scorer, reward: &'a RewardConfig, budget: QueryBudget) -> Self {
        Self {
            scorer,
            reward,
            budget,
            trace: SearchTrace::default(),
        }
    }

    pub fn budget(&self) -> &QueryBudget {
        &self.budget
    }

    /// Utility without charging the budget or touching the trace.
    pub fn peek(&self, arch: &Architecture) -> f64 {
        utility(self.scorer.predict_f1(arch), count_params(arch), self.reward)
    }

    /// Charges and records queries for as many of `archs` as the budget allows.
    pub fn query_many(&mut self, archs: &[Architecture]) -> Vec<f64> {
        let take = archs.len().min(self.budget.remaining());
        let preds = self.scorer.predict_many(&archs[..take]);
        preds
            .into_iter()
            .zip(&archs[..take])
            .map(|(f1, arch)| self.record(*arch, f1))
            .collect()
    }

    pub fn query(&mut self, arch: &Architecture) -> Option<f64> {
        self.query_many(std::slice::from_ref(arch)).pop()
    }

    fn record(&mut self, arch: Architecture, f1: f64) -> f64 {
        debug_assert!(validate(&arch).ok, "searched an invalid architecture");
        let query = self.budget.debit();
        let params = count_params(&arch);
        let u = utility(f1, params, self.reward);
        self.trace.entries.push(TraceEntry {
            query,
            arch,
            f1,
            params,
            utility: u,
            adversarial: detect_adversarial(f1),
        });
        u
    }

    pub fn mark_accepted(&mut self) {
        let q = self.budget.queries_used;
        self.trace.accepted.push(q);
    }

    pub fn into_trace(self) -> SearchTrace {
        self.trace
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Walk,
    Local,
    Rl,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Walk, Strategy::Local, Strategy::Rl];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Walk => "walk",
            Strategy::Local => "local",
            Strategy::Rl => "rl",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

/// Settings shared by the baseline strategies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub budget: usize,
    pub episode_len: usize,
    pub max_neighbours: usize,
    pub limits: SpaceLimits,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 300,
            episode_len: 16,
            max_neighbours: 50,
            limits: SpaceLimits::default(),
        }
    }
}

/// Independent draws from `starts`, one query each.
pub fn run_random_search(budget: QueryBudget, reward: &RewardConfig, scorer: &dyn Scorer, starts: &StartSource, seed: u64) -> Result<SearchTrace> {
    let mut rng = derived(seed, &[Strategy::Random as u64]);
    let mut eval = Evaluator::new(scorer, reward, budget);
    let draws = (0..budget.remaining())
        .map(|_| starts.draw(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    eval.query_many(&draws);
    Ok(eval.into_trace())
}

/// Episodes of `episode_len` uniformly random moves; only the final
/// architecture of each episode is queried.
pub fn run_random_walk(
    budget: QueryBudget,
    episode_len: usize,
    reward: &RewardConfig,
    scorer: &dyn Scorer,
    hood: &dyn Neighbourhood,
    starts: &StartSource,
    seed: u64,
) -> Result<SearchTrace> {
    let mut rng = derived(seed, &[Strategy::Walk as u64]);
    let mut eval = Evaluator::new(scorer, reward, budget);
    while !eval.budget().is_exhausted() {
        let mut arch = starts.draw(&mut rng)?;
        for _ in 0..episode_len {
            let next = hood.neighbours(&arch, &mut rng);
            match next.choose(&mut rng) {
                Some(n) => arch = *n,
                None => break,
            }
        }
        eval.query(&arch);
    }
    Ok(eval.into_trace())
}

/// Greedy hill climbing on utility. The start architecture is scored
/// without charge; every neighbour scored costs one query. Equal best
/// neighbours resolve to the lowest canonical hash. Stops at a local optimum
/// or when the budget runs out, including mid-neighbourhood.
pub fn run_local_search(budget: QueryBudget, reward: &RewardConfig, scorer: &dyn Scorer, hood: &dyn Neighbourhood, starts: &StartSource, seed: u64) -> Result<SearchTrace> {
    let mut rng = derived(seed, &[Strategy::Local as u64]);
    let mut eval = Evaluator::new(scorer, reward, budget);
    let mut current = starts.draw(&mut rng)?;
    let mut current_u = eval.peek(&current);
    while !eval.budget().is_exhausted() {
        let candidates = hood.neighbours(&current, &mut rng);
        let full = candidates.len() <= eval.budget().remaining();
        let utilities = eval.query_many(&candidates);
        let best = candidates
            .iter()
            .zip(&utilities)
            .max_by(|a, b| a.1.total_cmp(b.1).then(canonical_hash(b.0).cmp(&canonical_hash(a.0))));
        match best {
            Some((arch, &u)) if u > current_u => {
                current = *arch;
                current_u = u;
                eval.mark_accepted();
            }
            _ => break,
        }
        if !full {
            break;
        }
    }
    Ok(eval.into_trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::sample_uniform;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct EdgeScorer;

    impl Scorer for EdgeScorer {
        fn predict_f1(&self, arch: &Architecture) -> f64 {
            arch.num_edges() as f64 / 28.0
        }
    }

    /// Every call scores higher than the last, so no state is a local optimum.
    struct Rising(AtomicUsize);

    impl Scorer for Rising {
        fn predict_f1(&self, _: &Architecture) -> f64 {
            self.0.fetch_add(1, Ordering::Relaxed) as f64 * 1e-4
        }
    }

    /// Exactly fifty fresh uniform samples per state.
    struct Fifty;

    impl Neighbourhood for Fifty {
        fn neighbours(&self, arch: &Architecture, _: &mut SearchRng) -> Vec<Architecture> {
            let mut out = Vec::new();
            let mut k = canonical_hash(arch);
            while out.len() < 50 {
                k = crate::rng::mix64(k);
                let a = sample_uniform(k, &SpaceLimits::default()).unwrap();
                if a != *arch && !out.contains(&a) {
                    out.push(a);
                }
            }
            out
        }
    }

    fn starts() -> StartSource {
        StartSource::Uniform(SpaceLimits::default())
    }

    #[test]
    fn budget_panics_past_limit() {
        let mut b = QueryBudget::new(2);
        assert_eq!(b.debit(), 1);
        assert_eq!(b.debit(), 2);
        assert!(std::panic::catch_unwind(move || b.debit()).is_err());
    }

    #[test]
    fn episodic_strategies_fill_the_budget() {
        let reward = RewardConfig::default();
        let hood = EditNeighbourhood::new(SpaceLimits::default(), 50);
        let r = run_random_search(QueryBudget::new(300), &reward, &EdgeScorer, &starts(), 1).unwrap();
        assert_eq!(r.len(), 300);
        let w = run_random_walk(QueryBudget::new(300), 16, &reward, &EdgeScorer, &hood, &starts(), 1).unwrap();
        assert_eq!(w.len(), 300);
        for (i, e) in w.entries.iter().enumerate() {
            assert_eq!(e.query, i + 1);
            assert!(validate(&e.arch).ok);
        }
        assert_eq!(r, run_random_search(QueryBudget::new(300), &reward, &EdgeScorer, &starts(), 1).unwrap());
    }

    #[test]
    fn six_full_steps_with_fifty_neighbours() {
        let reward = RewardConfig::with_weights(1.0, 0.0).unwrap();
        let t = run_local_search(QueryBudget::new(300), &reward, &Rising(AtomicUsize::new(0)), &Fifty, &starts(), 3).unwrap();
        assert_eq!(t.len(), 300);
        assert_eq!(t.accepted, vec![50, 100, 150, 200, 250, 300]);
    }

    #[test]
    fn local_search_climbs_strictly() {
        let reward = RewardConfig::default();
        let hood = EditNeighbourhood::new(SpaceLimits::default(), 50);
        for seed in 0..10 {
            let t = run_local_search(QueryBudget::new(300), &reward, &EdgeScorer, &hood, &starts(), seed).unwrap();
            let accepted: Vec<f64> = t.accepted.iter().map(|&q| {
                t.entries[..q].iter().map(|e| e.utility).fold(f64::MIN, f64::max)
            }).collect();
            assert!(accepted.windows(2).all(|w| w[1] > w[0]));
            assert!(t.len() <= 300);
        }
    }

    #[test]
    fn local_optimum_stops_after_one_scan() {
        // with all weight on params the minimal architecture cannot improve
        let reward = RewardConfig::with_weights(0.0, 1.0).unwrap();
        let hood = EditNeighbourhood::new(SpaceLimits::default(), 50);
        let pool = StartSource::Pool(vec![Architecture::minimal()]);
        let t = run_local_search(QueryBudget::new(300), &reward, &EdgeScorer, &hood, &pool, 0).unwrap();
        assert_eq!(t.len(), neighbours(&Architecture::minimal(), &SpaceLimits::default()).len());
        assert!(t.accepted.is_empty());
    }

    #[test]
    fn walk_without_neighbours_queries_the_start() {
        struct Nothing;
        impl Neighbourhood for Nothing {
            fn neighbours(&self, _: &Architecture, _: &mut SearchRng) -> Vec<Architecture> {
                Vec::new()
            }
        }
        let reward = RewardConfig::default();
        let pool = StartSource::Pool(vec![Architecture::minimal()]);
        let t = run_random_walk(QueryBudget::new(5), 16, &reward, &EdgeScorer, &Nothing, &pool, 0).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.entries.iter().all(|e| e.arch == Architecture::minimal()));
    }

    #[test]
    fn subsampled_neighbourhood_is_capped() {
        let hood = EditNeighbourhood::new(SpaceLimits::default(), 50);
        let mut rng = crate::rng::seeded(0);
        let a = Architecture::complete(8, crate::archspace::OpLabel::Linear).unwrap();
        let n = hood.neighbours(&a, &mut rng);
        assert_eq!(n.len(), 50);
        assert!(n.windows(2).all(|w| canonical_hash(&w[0]) < canonical_hash(&w[1])));
    }

    #[test]
    fn trace_csv_columns() {
        let reward = RewardConfig::default();
        let t = run_random_search(QueryBudget::new(3), &reward, &EdgeScorer, &starts(), 1).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "query,f1,params,utility,adversarial");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
