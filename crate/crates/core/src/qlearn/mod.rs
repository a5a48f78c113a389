//! Prioritized-replay Q-learning over architecture-edit episodes.
//!
//! Several epsilon-greedy actors walk the edit graph: at every step the
//! candidate set is the current architecture (index 0, which ends the
//! episode) followed by up to `max_neighbours - 1` neighbours. Only the
//! terminal transition carries a reward, the utility of the final
//! architecture. A single learner trains a dueling network with double-Q
//! targets from a proportional prioritized replay buffer, and copies the
//! online weights into the target network every `target_sync_every_samples`
//! trained transitions.
//!
//! Surrogate calls made while training are free; afterwards greedy
//! evaluation episodes are charged one query each.

pub mod network;
pub mod replay;

use std::io::{Read, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archspace::{Architecture, SpaceLimits};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::reward::{utility, RewardConfig};
use crate::netbuild::count_params;
use crate::rng::{derive_seed, derived, SearchRng};
use crate::search::{EditNeighbourhood, Evaluator, Neighbourhood, QueryBudget, Scorer, SearchTrace, StartSource};

pub use network::{CandidateSet, QGrads, QNetwork};
pub use replay::{PrioritizedReplay, ReplayMeta, ReplaySample, SumTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Actors and learner take turns on one thread; bit-reproducible.
    #[default]
    Interleaved,
    /// One thread per actor plus the learner.
    Threaded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub priority_alpha: f64,
    pub is_beta: f64,
    pub target_sync_every_samples: u64,
    pub train_episode_len: usize,
    pub eval_episode_len: usize,
    pub max_neighbours: usize,
    pub num_workers: usize,
    pub total_train_steps: usize,
    pub batch_size: usize,
    /// Environment steps per learner update.
    pub train_every: usize,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    pub epsilon_base: f64,
    pub epsilon_alpha: f64,
    pub hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub mode: RunMode,
}

/// Desk-scale settings: 100k training steps with a learning rate raised to
/// match. [`AgentConfig::paper`] gives the full-scale values.
impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 1e-3,
            replay_capacity: 25_000,
            priority_alpha: 0.6,
            is_beta: 0.4,
            target_sync_every_samples: 8_192,
            train_episode_len: 16,
            eval_episode_len: 32,
            max_neighbours: 50,
            num_workers: 4,
            total_train_steps: 100_000,
            batch_size: 128,
            train_every: 16,
            learning_starts: 1_000,
            epsilon_base: 0.4,
            epsilon_alpha: 7.0,
            hidden: vec![64, 64],
            value_hidden: vec![64],
            mode: RunMode::Interleaved,
        }
    }
}

impl AgentConfig {
    /// Ten million training steps at the original learning rate.
    pub fn paper() -> Self {
        Self {
            learning_rate: 5e-5,
            total_train_steps: 10_000_000,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.priority_alpha) || !(0.0..=1.0).contains(&self.is_beta) {
            return bad("priority_alpha and is_beta must lie in [0, 1]");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.train_every == 0 || self.num_workers == 0 {
            return bad("replay_capacity, batch_size, train_every and num_workers must be positive");
        }
        if self.target_sync_every_samples == 0 || self.train_episode_len == 0 || self.eval_episode_len == 0 {
            return bad("episode lengths and the target sync interval must be positive");
        }
        if !(2..=64).contains(&self.max_neighbours) {
            return bad("max_neighbours must lie in [2, 64]");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        Ok(())
    }
}

/// `base^(1 + i * alpha / (N - 1))`, or `base` for a single worker.
pub fn worker_epsilon(worker: usize, num_workers: usize, base: f64, alpha: f64) -> f64 {
    assert!(worker < num_workers, "worker {worker} out of range");
    if num_workers == 1 {
        return base;
    }
    base.powf(1.0 + worker as f64 * alpha / (num_workers - 1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub candidates: CandidateSet,
    pub chosen: usize,
    pub reward: f64,
    /// Candidate set of the successor state, absent for terminal transitions.
    pub next: Option<CandidateSet>,
}

impl Transition {
    pub fn is_terminal(&self) -> bool {
        self.next.is_none()
    }
}

/// Epsilon-greedy choice among selectable candidates; greedy ties go to
/// the lowest index.
pub fn act<R: Rng + ?Sized>(qnet: &QNetwork, set: &CandidateSet, epsilon: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < epsilon {
        let k = rng.gen_range(0..set.num_selectable());
        return set.selectable().nth(k).expect("k below selectable count");
    }
    greedy(qnet, set)
}

pub fn greedy(qnet: &QNetwork, set: &CandidateSet) -> usize {
    let q = qnet.q_values(set);
    set.selectable()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if q[b] >= q[i] => Some(b),
            _ => Some(i),
        })
        .expect("non-empty candidate set")
}

/// Double-Q targets: the online network picks the successor action and the
/// target network values it.
pub fn td_targets(batch: &[&Transition], online: &QNetwork, target: &QNetwork, gamma: f64) -> Vec<f64> {
    let live: Vec<(usize, &CandidateSet)> = batch
        .iter()
        .enumerate()
        .filter_map(|(b, t)| t.next.as_ref().map(|n| (b, n)))
        .collect();
    let mut out: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    if live.is_empty() || gamma == 0.0 {
        return out;
    }
    let sets: Vec<&CandidateSet> = live.iter().map(|(_, s)| *s).collect();
    let stacked = network::stack(&sets);
    let (q_online, _) = online.q_stacked(&stacked);
    let (q_target, _) = target.q_stacked(&stacked);
    for (k, (b, _)) in live.iter().enumerate() {
        let best = q_online[k]
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > q_online[k][best] { i } else { best });
        out[*b] += gamma * q_target[k][best];
    }
    out
}

/// One Adam step on the importance-weighted squared TD error. Returns the
/// TD errors `Q - target` before the update.
pub fn train_step(qnet: &mut QNetwork, adam: &mut Adam, batch: &[&Transition], targets: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let sets: Vec<&CandidateSet> = batch.iter().map(|t| &t.candidates).collect();
    let chosen: Vec<usize> = batch.iter().map(|t| t.chosen).collect();
    let (loss, grads, td) = qnet.loss_and_grads(&sets, &chosen, targets, weights);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFiniteGradient(format!(
            "loss {loss}, max |td| {:.3e}, batch {}",
            td.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            batch.len()
        )));
    }
    adam.step(qnet.param_slices_mut(), grads.slices());
    Ok(td)
}

struct Env<'a> {
    scorer: &'a dyn Scorer,
    reward: &'a RewardConfig,
    hood: EditNeighbourhood,
    starts: &'a StartSource,
}

impl Env<'_> {
    fn candidates(&self, arch: &Architecture, rng: &mut SearchRng) -> CandidateSet {
        CandidateSet::new(*arch, &self.hood.neighbours(arch, rng))
    }

    fn utility(&self, arch: &Architecture) -> f64 {
        utility(self.scorer.predict_f1(arch), count_params(arch), self.reward)
    }
}

struct Actor {
    rng: SearchRng,
    epsilon: f64,
    current: CandidateSet,
    steps: usize,
}

impl Actor {
    fn new(env: &Env, epsilon: f64, seed: u64) -> Result<Self> {
        let mut rng = derived(seed, &[]);
        let start = env.starts.draw(&mut rng)?;
        let current = env.candidates(&start, &mut rng);
        Ok(Self {
            rng,
            epsilon,
            current,
            steps: 0,
        })
    }

    /// Takes one step; returns the transition and, if the episode ended,
    /// its terminal reward.
    fn step(&mut self, net: &QNetwork, env: &Env, episode_len: usize) -> Result<(Transition, Option<f64>)> {
        let set = self.current.clone();
        let chosen = act(net, &set, self.epsilon, &mut self.rng);
        self.steps += 1;
        let next_arch = set.archs[chosen];
        let terminal = chosen == 0 || self.steps >= episode_len;
        if terminal {
            let reward = env.utility(&next_arch);
            let start = env.starts.draw(&mut self.rng)?;
            self.current = env.candidates(&start, &mut self.rng);
            self.steps = 0;
            let t = Transition {
                candidates: set,
                chosen,
                reward,
                next: None,
            };
            return Ok((t, Some(reward)));
        }
        let next = env.candidates(&next_arch, &mut self.rng);
        self.current = next.clone();
        Ok((
            Transition {
                candidates: set,
                chosen,
                reward: 0.0,
                next: Some(next),
            },
            None,
        ))
    }
}

struct Learner {
    online: QNetwork,
    target: QNetwork,
    adam: Adam,
    rng: SearchRng,
    trained_samples: u64,
    last_sync: u64,
    updates: u64,
    syncs: u64,
}

impl Learner {
    fn update(&mut self, batch: &[&Transition], weights: &[f64], cfg: &AgentConfig) -> Result<Vec<f64>> {
        let targets = td_targets(batch, &self.online, &self.target, cfg.gamma);
        let td = train_step(&mut self.online, &mut self.adam, batch, &targets, weights)?;
        self.trained_samples += batch.len() as u64;
        self.updates += 1;
        if self.trained_samples - self.last_sync >= cfg.target_sync_every_samples {
            self.target = self.online.clone();
            self.last_sync = self.trained_samples;
            self.syncs += 1;
        }
        Ok(td)
    }

    fn train_from(&mut self, replay: &mut PrioritizedReplay<Transition>, cfg: &AgentConfig) -> Result<()> {
        let sample = replay.sample(cfg.batch_size, cfg.is_beta, &mut self.rng);
        let batch: Vec<&Transition> = sample.indices.iter().map(|&i| replay.get(i)).collect();
        let td = self.update(&batch, &sample.weights, cfg)?;
        replay.update_priorities(&sample.indices, &td);
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub trained_samples: u64,
    pub target_syncs: u64,
    /// Mean terminal reward of the last 1,000 training episodes.
    pub recent_return: f64,
}

pub struct RlRun {
    pub trace: SearchTrace,
    pub online: QNetwork,
    pub target: QNetwork,
    pub stats: TrainStats,
    pub replay: ReplayMeta,
}

struct Returns {
    recent: std::collections::VecDeque<f64>,
    episodes: u64,
}

impl Returns {
    fn push(&mut self, r: f64) {
        self.episodes += 1;
        if self.recent.len() == 1_000 {
            self.recent.pop_front();
        }
        self.recent.push_back(r);
    }

    fn mean(&self) -> f64 {
        if self.recent.is_empty() {
            0.0
        } else {
            self.recent.iter().sum::<f64>() / self.recent.len() as f64
        }
    }
}

/// Trains for `total_train_steps` environment steps, then spends the budget
/// on greedy evaluation episodes of at most `eval_episode_len` steps, each
/// charged one query for its final architecture.
pub fn run_rl_search(
    cfg: &AgentConfig,
    reward: &RewardConfig,
    scorer: &dyn Scorer,
    limits: &SpaceLimits,
    starts: &StartSource,
    budget: QueryBudget,
    seed: u64,
) -> Result<RlRun> {
    cfg.check()?;
    let env = Env {
        scorer,
        reward,
        hood: EditNeighbourhood::new(*limits, cfg.max_neighbours - 1),
        starts,
    };
    let mut init_rng = derived(seed, &[0x1417]);
    let online = QNetwork::new(&cfg.hidden, &cfg.value_hidden, &mut init_rng);
    let mut learner = Learner {
        target: online.clone(),
        online,
        adam: Adam::new(cfg.learning_rate),
        rng: derived(seed, &[0x1EA2]),
        trained_samples: 0,
        last_sync: 0,
        updates: 0,
        syncs: 0,
    };
    let actors = (0..cfg.num_workers)
        .map(|w| {
            let eps = worker_epsilon(w, cfg.num_workers, cfg.epsilon_base, cfg.epsilon_alpha);
            Actor::new(&env, eps, derive_seed(seed, &[0xAC7, w as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut replay = PrioritizedReplay::new(cfg.replay_capacity, cfg.priority_alpha);
    let mut returns = Returns {
        recent: Default::default(),
        episodes: 0,
    };
    match cfg.mode {
        RunMode::Interleaved => train_interleaved(cfg, &env, actors, &mut learner, &mut replay, &mut returns)?,
        RunMode::Threaded => train_threaded(cfg, &env, actors, &mut learner, &mut replay, &mut returns)?,
    }
    let stats = TrainStats {
        env_steps: cfg.total_train_steps as u64,
        episodes: returns.episodes,
        updates: learner.updates,
        trained_samples: learner.trained_samples,
        target_syncs: learner.syncs,
        recent_return: returns.mean(),
    };
    log::info!(
        "rl training: {} episodes, {} updates, recent return {:.4}",
        stats.episodes,
        stats.updates,
        stats.recent_return
    );
    let trace = evaluate_greedy(&learner.online, cfg, &env, budget, seed)?;
    Ok(RlRun {
        trace,
        online: learner.online,
        target: learner.target,
        stats,
        replay: replay.meta(),
    })
}

fn train_interleaved(
    cfg: &AgentConfig,
    env: &Env,
    mut actors: Vec<Actor>,
    learner: &mut Learner,
    replay: &mut PrioritizedReplay<Transition>,
    returns: &mut Returns,
) -> Result<()> {
    for step in 0..cfg.total_train_steps {
        let w = step % actors.len();
        let (t, ended) = actors[w].step(&learner.online, env, cfg.train_episode_len)?;
        replay.push(t);
        if let Some(r) = ended {
            returns.push(r);
        }
        if (step + 1) % cfg.train_every == 0 && replay.len() >= cfg.learning_starts.max(1) {
            learner.train_from(replay, cfg)?;
        }
    }
    Ok(())
}

const ACTOR_REFRESH_STEPS: usize = 64;

fn train_threaded(
    cfg: &AgentConfig,
    env: &Env,
    actors: Vec<Actor>,
    learner: &mut Learner,
    replay: &mut PrioritizedReplay<Transition>,
    returns: &mut Returns,
) -> Result<()> {
    let shared_replay = Mutex::new(std::mem::replace(replay, PrioritizedReplay::new(1, cfg.priority_alpha)));
    let published = RwLock::new(learner.online.clone());
    let shared_returns = Mutex::new(std::mem::replace(
        returns,
        Returns {
            recent: Default::default(),
            episodes: 0,
        },
    ));
    let steps = AtomicUsize::new(0);
    let total = cfg.total_train_steps;
    let outcome = std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = actors
            .into_iter()
            .map(|mut actor| {
                let (published, shared_replay, shared_returns, steps) = (&published, &shared_replay, &shared_returns, &steps);
                scope.spawn(move || -> Result<()> {
                    let mut local = published.read().expect("poisoned network lock").clone();
                    let mut since_refresh = 0;
                    while steps.fetch_add(1, Ordering::SeqCst) < total {
                        let (t, ended) = actor.step(&local, env, cfg.train_episode_len)?;
                        shared_replay.lock().expect("poisoned replay lock").push(t);
                        if let Some(r) = ended {
                            shared_returns.lock().expect("poisoned returns lock").push(r);
                        }
                        since_refresh += 1;
                        if since_refresh >= ACTOR_REFRESH_STEPS {
                            local = published.read().expect("poisoned network lock").clone();
                            since_refresh = 0;
                        }
                    }
                    Ok(())
                })
            })
            .collect();
        let mut result = Ok(());
        loop {
            let done_steps = steps.load(Ordering::SeqCst).min(total);
            let allowed = (done_steps / cfg.train_every) as u64;
            let actors_done = handles.iter().all(|h| h.is_finished());
            if learner.updates < allowed {
                let (batch, sample) = {
                    let buf = shared_replay.lock().expect("poisoned replay lock");
                    if buf.len() < cfg.learning_starts.max(1) {
                        (Vec::new(), None)
                    } else {
                        let s = buf.sample(cfg.batch_size, cfg.is_beta, &mut learner.rng);
                        let b: Vec<Transition> = s.indices.iter().map(|&i| buf.get(i).clone()).collect();
                        (b, Some(s))
                    }
                };
                match sample {
                    Some(sample) => {
                        let refs: Vec<&Transition> = batch.iter().collect();
                        match learner.update(&refs, &sample.weights, cfg) {
                            Ok(td) => {
                                shared_replay
                                    .lock()
                                    .expect("poisoned replay lock")
                                    .update_priorities(&sample.indices, &td);
                                *published.write().expect("poisoned network lock") = learner.online.clone();
                            }
                            Err(e) => {
                                steps.store(total, Ordering::SeqCst);
                                result = Err(e);
                                break;
                            }
                        }
                    }
                    None if actors_done => break,
                    None => std::thread::yield_now(),
                }
            } else if actors_done {
                break;
            } else {
                std::thread::yield_now();
            }
        }
        for h in handles {
            h.join().expect("actor thread panicked")?;
        }
        result
    });
    *replay = shared_replay.into_inner().expect("poisoned replay lock");
    *returns = shared_returns.into_inner().expect("poisoned returns lock");
    outcome
}

fn evaluate_greedy(net: &QNetwork, cfg: &AgentConfig, env: &Env, budget: QueryBudget, seed: u64) -> Result<SearchTrace> {
    let mut rng = derived(seed, &[0xE7A1]);
    let mut eval = Evaluator::new(env.scorer, env.reward, budget);
    while !eval.budget().is_exhausted() {
        let start = env.starts.draw(&mut rng)?;
        let final_arch = greedy_episode(net, env, start, cfg.eval_episode_len, &mut rng);
        eval.query(&final_arch);
    }
    Ok(eval.into_trace())
}

fn greedy_episode(net: &QNetwork, env: &Env, start: Architecture, max_len: usize, rng: &mut SearchRng) -> Architecture {
    let mut arch = start;
    for _ in 0..max_len {
        let set = env.candidates(&arch, rng);
        let choice = greedy(net, &set);
        if choice == 0 {
            break;
        }
        arch = set.archs[choice];
    }
    arch
}

pub const CHECKPOINT_FORMAT: &str = "nasforge-qnetwork";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: AgentConfig,
    pub online: QNetwork,
    pub target: QNetwork,
    pub stats: TrainStats,
    pub replay: ReplayMeta,
}

impl RlRun {
    pub fn checkpoint(&self, cfg: &AgentConfig) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            online: self.online.clone(),
            target: self.target.clone(),
            stats: self.stats.clone(),
            replay: self.replay.clone(),
        }
    }
}

impl Checkpoint {
    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        let format = value.get("format").and_then(|v| v.as_str());
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Checkpoint(format!("unrecognised checkpoint format {format:?}")));
        }
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version:?} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }
}
