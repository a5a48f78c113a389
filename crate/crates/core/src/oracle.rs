//! Synthetic ground truth: a logistic-linear function of the encoded features
//! with seeded Gaussian noise, used in place of a corpus of trained networks.

use std::collections::HashSet;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archspace::{canonical_hash, encode_into, sample_with, Architecture, SpaceLimits, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng::derived;
use crate::surrogate::{write_jsonl, PerformanceRecord};

/// Target median F1 over uniformly sampled architectures.
pub const TARGET_MEDIAN: f64 = 0.64;
const CALIBRATION_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub master_seed: u64,
    pub noise_sigma: f64,
    pub n_records: usize,
    pub seeds_per_arch: usize,
    pub limits: SpaceLimits,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            noise_sigma: 0.05,
            n_records: 5_000,
            seeds_per_arch: 3,
            limits: SpaceLimits::default(),
        }
    }
}

impl OracleConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if self.seeds_per_arch == 0 {
            return Err(Error::InvalidConfig("seeds_per_arch must be positive".into()));
        }
        self.limits.check()?;
        self.limits.check_representable()
    }
}

#[derive(Clone, Debug)]
pub struct Oracle {
    cfg: OracleConfig,
    weights: Vec<f64>,
    bias: f64,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Oracle {
    /// Draws the weights from `master_seed` and calibrates the bias so the
    /// median over 10,000 uniform samples is 0.64.
    pub fn new(cfg: OracleConfig) -> Result<Self> {
        cfg.check()?;
        let mut rng = derived(cfg.master_seed, &[0x0AC1E]);
        let weights: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let mut oracle = Self { cfg, weights, bias: 0.0 };
        let mut sample_rng = derived(oracle.cfg.master_seed, &[0xCA1B]);
        let mut logits = Vec::with_capacity(CALIBRATION_SAMPLES);
        for _ in 0..CALIBRATION_SAMPLES {
            let a = sample_with(&mut sample_rng, &oracle.cfg.limits)?;
            logits.push(oracle.logit(&a));
        }
        logits.sort_by(f64::total_cmp);
        let median = 0.5 * (logits[CALIBRATION_SAMPLES / 2 - 1] + logits[CALIBRATION_SAMPLES / 2]);
        oracle.bias = (TARGET_MEDIAN / (1.0 - TARGET_MEDIAN)).ln() - median;
        Ok(oracle)
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    fn logit(&self, arch: &Architecture) -> f64 {
        let mut z = [0.0; FEATURE_LEN];
        encode_into(arch, &mut z);
        self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Noise-free F1.
    pub fn mean_f1(&self, arch: &Architecture) -> f64 {
        logistic(self.logit(arch))
    }

    pub fn synth_f1(&self, arch: &Architecture, noise_seed: u64) -> f64 {
        let mean = self.mean_f1(arch);
        if self.cfg.noise_sigma == 0.0 {
            return mean;
        }
        let noise = Normal::new(0.0, self.cfg.noise_sigma).expect("checked sigma");
        let mut rng = derived(self.cfg.master_seed, &[canonical_hash(arch), noise_seed]);
        (mean + noise.sample(&mut rng)).clamp(0.0, 1.0)
    }

    /// `ceil(n_records / seeds_per_arch)` distinct architectures, each
    /// trained with seeds `0..seeds_per_arch`, truncated to `n_records` rows.
    pub fn generate_corpus(&self, exec: Execution) -> Result<Vec<PerformanceRecord>> {
        let per = self.cfg.seeds_per_arch;
        let unique = self.cfg.n_records.div_ceil(per);
        let mut rng = derived(self.cfg.master_seed, &[0xC0B9]);
        let mut seen = HashSet::with_capacity(unique);
        let mut archs = Vec::with_capacity(unique);
        let max_attempts = 1_000 * unique.max(1);
        let mut attempts = 0;
        while archs.len() < unique {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::InvalidConfig(format!(
                    "could not find {unique} distinct architectures within the space limits"
                )));
            }
            let a = sample_with(&mut rng, &self.cfg.limits)?;
            if seen.insert(a) {
                archs.push(a);
            }
        }
        let rows = exec::map_range(exec, self.cfg.n_records, |i| {
            let arch = archs[i / per];
            let seed = (i % per) as u64;
            PerformanceRecord::new(arch, seed, self.synth_f1(&arch, seed))
        });
        Ok(rows)
    }

    pub fn write_corpus<W: Write>(&self, writer: W, exec: Execution) -> Result<()> {
        write_jsonl(writer, &self.generate_corpus(exec)?)
    }
}
