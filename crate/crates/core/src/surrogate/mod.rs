//! Performance predictors mapping encoded architectures to post-quantization F1.
//!
//! Nine regressors plus two random baselines. Every model is fit on rows in a
//! canonical order, so permuting the training records never changes the
//! result for a fixed seed.

pub mod cv;
pub mod ensemble;
pub mod knn;
pub mod linear;
pub mod metrics;
pub mod mlp;
pub mod records;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archspace::{encode_into, Architecture, FEATURE_LEN};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::rng::{derive_seed, derived, mix64, unit_from_key};

pub use cv::{cross_validate, split_cv, CvReport, CvSplit};
pub use metrics::{metrics, Metrics};
pub use records::{read_jsonl, write_jsonl, PerformanceRecord};

use ensemble::{Boosted, Forest};
use knn::{NeighbourModel, NeighbourRule};
use linear::{fit_lasso, fit_ols, fit_ridge, fit_sgd, LinearModel, SgdParams};
use mlp::{MlpRegressor, MlpTraining};
use tree::TreeParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    Ols,
    Ridge,
    Lasso,
    SgdLinear,
    Knn,
    RadiusNn,
    RandomForest,
    Gbt,
    Mlp,
    RandomUniform,
    RandomNormal,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 11] = [
        RegressorKind::Ols,
        RegressorKind::Ridge,
        RegressorKind::Lasso,
        RegressorKind::SgdLinear,
        RegressorKind::Knn,
        RegressorKind::RadiusNn,
        RegressorKind::RandomForest,
        RegressorKind::Gbt,
        RegressorKind::Mlp,
        RegressorKind::RandomUniform,
        RegressorKind::RandomNormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RegressorKind::Ols => "ols",
            RegressorKind::Ridge => "ridge",
            RegressorKind::Lasso => "lasso",
            RegressorKind::SgdLinear => "sgd-linear",
            RegressorKind::Knn => "knn",
            RegressorKind::RadiusNn => "radius-nn",
            RegressorKind::RandomForest => "random-forest",
            RegressorKind::Gbt => "gbt",
            RegressorKind::Mlp => "mlp",
            RegressorKind::RandomUniform => "random-uniform",
            RegressorKind::RandomNormal => "random-normal",
        }
    }

    /// Row label used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            RegressorKind::Ols => "Ordinary Least Squares",
            RegressorKind::Ridge => "Ridge Regression",
            RegressorKind::Lasso => "LASSO Regression",
            RegressorKind::SgdLinear => "SGD Regression",
            RegressorKind::Knn => "K Nearest Neighbours",
            RegressorKind::RadiusNn => "Radius Nearest Neighbours",
            RegressorKind::RandomForest => "Random Forest",
            RegressorKind::Gbt => "Gradient Boosted Trees",
            RegressorKind::Mlp => "Multi-Layer Perceptron",
            RegressorKind::RandomUniform => "Uniform Random",
            RegressorKind::RandomNormal => "Normal Random",
        }
    }
}

impl fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown regressor kind {s:?}")))
    }
}

/// Regressor hyperparameters. Unlisted settings follow the usual
/// scikit-learn defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub ridge_alpha: f64,
    pub lasso_alpha: f64,
    pub lasso_tol: f64,
    pub lasso_max_sweeps: usize,
    pub sgd_max_iter: usize,
    pub sgd_eta0: f64,
    pub sgd_alpha: f64,
    pub sgd_tol: f64,
    pub sgd_n_iter_no_change: usize,
    pub knn_neighbours: usize,
    pub radius: f64,
    pub forest_trees: usize,
    pub forest_max_depth: usize,
    pub forest_min_samples_split: usize,
    pub forest_min_samples_leaf: usize,
    pub gbt_trees: usize,
    pub gbt_max_depth: usize,
    pub gbt_max_leaves: usize,
    pub gbt_learning_rate: f64,
    pub mlp_hidden: Vec<usize>,
    pub mlp_alpha: f64,
    pub mlp_learning_rate: f64,
    pub mlp_epochs: usize,
    pub execution: Execution,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            ridge_alpha: 1.0,
            lasso_alpha: 1e-3,
            lasso_tol: 1e-6,
            lasso_max_sweeps: 10_000,
            sgd_max_iter: 5_000,
            sgd_eta0: 1e-5,
            sgd_alpha: 1e-4,
            sgd_tol: 1e-3,
            sgd_n_iter_no_change: 5,
            knn_neighbours: 100,
            radius: 16.0,
            forest_trees: 100,
            forest_max_depth: 15,
            forest_min_samples_split: 50,
            forest_min_samples_leaf: 25,
            gbt_trees: 75,
            gbt_max_depth: 4,
            gbt_max_leaves: 8,
            gbt_learning_rate: 0.1,
            mlp_hidden: vec![48, 48],
            mlp_alpha: 1e-3,
            mlp_learning_rate: 1e-2,
            mlp_epochs: 2_000,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelBody {
    Linear(LinearModel),
    Neighbours(NeighbourModel),
    Forest(Forest),
    Boosted(Boosted),
    Mlp(MlpRegressor),
    RandomUniform { seed: u64 },
    RandomNormal { seed: u64, mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: RegressorKind,
    pub body: ModelBody,
}

fn feature_key(seed: u64, x: &[f64]) -> u64 {
    x.iter().fold(seed, |acc, v| mix64(acc ^ v.to_bits()))
}

impl TrainedModel {
    /// Predicted F1 for an encoded feature row. Unbounded: callers clamp.
    pub fn predict_features(&self, x: &[f64]) -> f64 {
        match &self.body {
            ModelBody::Linear(m) => m.predict(x),
            ModelBody::Neighbours(m) => m.predict(x),
            ModelBody::Forest(m) => m.predict(x),
            ModelBody::Boosted(m) => m.predict(x),
            ModelBody::Mlp(m) => m.predict(x),
            ModelBody::RandomUniform { seed } => unit_from_key(feature_key(*seed, x)),
            ModelBody::RandomNormal { seed, mean, std } => {
                let z: f64 = derived(feature_key(*seed, x), &[]).sample(StandardNormal);
                mean + std * z
            }
        }
    }

    pub fn predict(&self, arch: &Architecture) -> f64 {
        let mut buf = [0.0; FEATURE_LEN];
        encode_into(arch, &mut buf);
        self.predict_features(&buf)
    }

    pub fn predict_many(&self, archs: &[Architecture], exec: Execution) -> Vec<f64> {
        if let ModelBody::Mlp(m) = &self.body {
            return m.predict_batch(feature_matrix(archs).view());
        }
        exec::map(exec, archs, |a| self.predict(a))
    }
}

pub fn feature_matrix(archs: &[Architecture]) -> Array2<f64> {
    let mut x = Array2::zeros((archs.len(), FEATURE_LEN));
    for (mut row, arch) in x.rows_mut().into_iter().zip(archs) {
        encode_into(arch, row.as_slice_mut().expect("standard layout"));
    }
    x
}

/// Fits a model on records, after sorting rows into a canonical order.
pub fn fit(kind: RegressorKind, records: &[PerformanceRecord], hyper: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    let archs: Vec<Architecture> = records.iter().map(|r| r.arch).collect();
    let x = feature_matrix(&archs);
    let y: Vec<f64> = records.iter().map(|r| r.f1_post_quant).collect();
    fit_features(kind, x, y, hyper, seed)
}

pub fn fit_features(kind: RegressorKind, x: Array2<f64>, y: Vec<f64>, hyper: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    if x.nrows() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    let x = x.select(ndarray::Axis(0), &order);
    let y: Array1<f64> = order.iter().map(|&i| y[i]).collect();
    let seed = derive_seed(seed, &[kind as u64]);
    let (xv, yv) = (x.view(), y.view());
    let body = match kind {
        RegressorKind::Ols => ModelBody::Linear(fit_ols(xv, yv)?),
        RegressorKind::Ridge => ModelBody::Linear(fit_ridge(xv, yv, hyper.ridge_alpha)?),
        RegressorKind::Lasso => ModelBody::Linear(fit_lasso(xv, yv, hyper.lasso_alpha, hyper.lasso_tol, hyper.lasso_max_sweeps)?),
        RegressorKind::SgdLinear => {
            let params = SgdParams {
                max_iter: hyper.sgd_max_iter,
                eta0: hyper.sgd_eta0,
                alpha: hyper.sgd_alpha,
                tol: hyper.sgd_tol,
                n_iter_no_change: hyper.sgd_n_iter_no_change,
            };
            ModelBody::Linear(fit_sgd(xv, yv, &params, seed)?)
        }
        RegressorKind::Knn => ModelBody::Neighbours(NeighbourModel::fit(xv, yv, NeighbourRule::Nearest { k: hyper.knn_neighbours })?),
        RegressorKind::RadiusNn => ModelBody::Neighbours(NeighbourModel::fit(xv, yv, NeighbourRule::Radius { radius: hyper.radius })?),
        RegressorKind::RandomForest => {
            let params = TreeParams {
                max_depth: hyper.forest_max_depth,
                max_leaves: None,
                min_samples_split: hyper.forest_min_samples_split,
                min_samples_leaf: hyper.forest_min_samples_leaf,
            };
            ModelBody::Forest(Forest::fit(xv, yv, hyper.forest_trees, &params, seed, hyper.execution)?)
        }
        RegressorKind::Gbt => {
            let params = TreeParams {
                max_depth: hyper.gbt_max_depth,
                max_leaves: Some(hyper.gbt_max_leaves),
                min_samples_split: 2,
                min_samples_leaf: 1,
            };
            ModelBody::Boosted(Boosted::fit(xv, yv, hyper.gbt_trees, hyper.gbt_learning_rate, &params)?)
        }
        RegressorKind::Mlp => {
            let cfg = MlpTraining {
                hidden: hyper.mlp_hidden.clone(),
                l2: hyper.mlp_alpha,
                learning_rate: hyper.mlp_learning_rate,
                epochs: hyper.mlp_epochs,
            };
            ModelBody::Mlp(MlpRegressor::fit(xv, yv, &cfg, seed)?)
        }
        RegressorKind::RandomUniform => ModelBody::RandomUniform { seed },
        RegressorKind::RandomNormal => ModelBody::RandomNormal {
            seed,
            mean: y.mean().expect("non-empty"),
            std: y.std(0.0),
        },
    };
    Ok(TrainedModel { kind, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{sample_uniform, SpaceLimits};
    use crate::rng::seeded;
    use rand::seq::SliceRandom;

    fn toy_records(n: usize) -> Vec<PerformanceRecord> {
        let limits = SpaceLimits::default();
        (0..n)
            .map(|i| {
                let arch = sample_uniform(i as u64, &limits).unwrap();
                let f1 = (0.1 * arch.num_edges() as f64 / 3.0 + 0.05 * arch.num_vertices() as f64).min(1.0);
                PerformanceRecord::new(arch, 0, f1)
            })
            .collect()
    }

    fn quick() -> Hyperparams {
        Hyperparams {
            forest_trees: 5,
            mlp_epochs: 50,
            sgd_max_iter: 50,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in RegressorKind::ALL {
            assert_eq!(kind.to_string().parse::<RegressorKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{kind}\""));
        }
        assert!("svm".parse::<RegressorKind>().is_err());
    }

    #[test]
    fn random_uniform_stays_in_unit_interval() {
        let recs = toy_records(30);
        let m = fit(RegressorKind::RandomUniform, &recs, &quick(), 4).unwrap();
        for r in &recs {
            let p = m.predict(&r.arch);
            assert!((0.0..1.0).contains(&p));
            assert_eq!(p, m.predict(&r.arch));
        }
    }

    #[test]
    fn random_normal_matches_training_moments() {
        let recs = toy_records(200);
        let m = fit(RegressorKind::RandomNormal, &recs, &quick(), 4).unwrap();
        let ModelBody::RandomNormal { mean, std, .. } = m.body else { panic!() };
        let y: Vec<f64> = recs.iter().map(|r| r.f1_post_quant).collect();
        let ym = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - ym).abs() < 1e-12);
        assert!(std > 0.0);
    }

    #[test]
    fn row_order_does_not_matter() {
        let recs = toy_records(120);
        let mut shuffled = recs.clone();
        shuffled.shuffle(&mut seeded(3));
        let hyper = quick();
        for kind in RegressorKind::ALL {
            let a = fit(kind, &recs, &hyper, 8).unwrap();
            let b = fit(kind, &shuffled, &hyper, 8).unwrap();
            for r in recs.iter().take(10) {
                assert_eq!(a.predict(&r.arch), b.predict(&r.arch), "{kind}");
            }
        }
    }

    #[test]
    fn models_serialize() {
        let recs = toy_records(60);
        for kind in RegressorKind::ALL {
            let m = fit(kind, &recs, &quick(), 1).unwrap();
            let back: TrainedModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            assert!((back.predict(&recs[0].arch) - m.predict(&recs[0].arch)).abs() < 1e-9, "{kind}");
        }
    }

    #[test]
    fn batch_prediction_matches_single() {
        let recs = toy_records(60);
        let archs: Vec<Architecture> = recs.iter().map(|r| r.arch).collect();
        for kind in [RegressorKind::Mlp, RegressorKind::Gbt] {
            let m = fit(kind, &recs, &quick(), 1).unwrap();
            let many = m.predict_many(&archs, Execution::Sequential);
            for (a, p) in archs.iter().zip(many) {
                assert!((m.predict(a) - p).abs() < 1e-12);
            }
        }
    }
}
