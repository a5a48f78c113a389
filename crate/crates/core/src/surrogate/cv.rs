//! K-fold cross-validation with a held-out test set.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, rmse, Metrics};
use super::records::PerformanceRecord;
use super::{fit, Hyperparams, RegressorKind};
use crate::error::{Error, Result};
use crate::exec::try_map_range;
use crate::rng::{derive_seed, derived};

pub const MIN_RECORDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub folds: Vec<Vec<usize>>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n`, withholds `round(n * test_fraction)` indices as the test
/// set and deals the rest into `n_folds` folds whose sizes differ by at most one.
pub fn split_cv(n: usize, n_folds: usize, test_fraction: f64, seed: u64) -> Result<CvSplit> {
    if n < MIN_RECORDS {
        return Err(Error::TooFewRecords { got: n, need: MIN_RECORDS });
    }
    if n_folds < 2 || !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds and a test fraction in [0, 1), got {n_folds} and {test_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut derived(seed, &[0x5e1]));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let rest = n - n_test;
    if rest < n_folds {
        return Err(Error::TooFewRecords { got: n, need: n_test + n_folds });
    }
    let test = idx[..n_test].to_vec();
    let mut folds = Vec::with_capacity(n_folds);
    let mut at = n_test;
    for f in 0..n_folds {
        let size = rest / n_folds + usize::from(f < rest % n_folds);
        folds.push(idx[at..at + size].to_vec());
        at += size;
    }
    Ok(CvSplit { folds, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }

    fn of_optional(values: impl Iterator<Item = Option<f64>>) -> Option<Self> {
        let v: Option<Vec<f64>> = values.collect();
        v.map(|v| Self::of(&v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub validation: Metrics,
    pub train_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub pearson_r: Option<Stat>,
    pub kendall_tau: Option<Stat>,
    pub r_squared: Option<Stat>,
    pub rmse: Stat,
    pub train_rmse: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub kind: RegressorKind,
    pub seed: u64,
    pub folds: Vec<FoldReport>,
    pub summary: MetricSummary,
    /// Model fit on all folds, scored on the withheld test set.
    pub test: Option<Metrics>,
}

fn gather(records: &[PerformanceRecord], idx: &[usize]) -> Vec<PerformanceRecord> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

fn score(model: &super::TrainedModel, recs: &[PerformanceRecord]) -> (Vec<f64>, Vec<f64>) {
    let truth = recs.iter().map(|r| r.f1_post_quant).collect();
    let archs: Vec<_> = recs.iter().map(|r| r.arch).collect();
    (truth, model.predict_many(&archs, crate::exec::Execution::Sequential))
}

/// Rotates through the folds, fitting on all but one and validating on it.
/// Folds may run in parallel; each uses a seed derived from `(seed, fold)`.
pub fn cross_validate(
    kind: RegressorKind,
    records: &[PerformanceRecord],
    hyper: &Hyperparams,
    test_fraction: f64,
    seed: u64,
) -> Result<CvReport> {
    const FOLDS: usize = 5;
    let split = split_cv(records.len(), FOLDS, test_fraction, seed)?;
    let folds = try_map_range(hyper.execution, FOLDS, |k| -> Result<FoldReport> {
        let train_idx: Vec<usize> = split
            .folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let train = gather(records, &train_idx);
        let valid = gather(records, &split.folds[k]);
        let model = fit(kind, &train, hyper, derive_seed(seed, &[k as u64]))?;
        let (vt, vp) = score(&model, &valid);
        let (tt, tp) = score(&model, &train);
        Ok(FoldReport {
            validation: metrics(&vt, &vp)?,
            train_rmse: rmse(&tt, &tp)?,
        })
    })?;
    let all_train: Vec<usize> = split.folds.iter().flatten().copied().collect();
    let test = if split.test.len() >= 2 {
        let model = fit(kind, &gather(records, &all_train), hyper, derive_seed(seed, &[FOLDS as u64]))?;
        let (t, p) = score(&model, &gather(records, &split.test));
        Some(metrics(&t, &p)?)
    } else {
        None
    };
    let summary = MetricSummary {
        pearson_r: Stat::of_optional(folds.iter().map(|f| f.validation.pearson_r)),
        kendall_tau: Stat::of_optional(folds.iter().map(|f| f.validation.kendall_tau)),
        r_squared: Stat::of_optional(folds.iter().map(|f| f.validation.r_squared)),
        rmse: Stat::of(&folds.iter().map(|f| f.validation.rmse).collect::<Vec<_>>()),
        train_rmse: Stat::of(&folds.iter().map(|f| f.train_rmse).collect::<Vec<_>>()),
    };
    Ok(CvReport {
        kind,
        seed,
        folds,
        summary,
        test,
    })
}

fn cell(stat: Option<Stat>) -> String {
    match stat {
        Some(s) => format!("{:.1}% ± {:.2}%", 100.0 * s.mean, 100.0 * s.std),
        None => "undefined".to_string(),
    }
}

/// Aligned text table with one row per report, sorted by validation RMSE.
pub fn format_table(reports: &[CvReport]) -> String {
    let header = ["Algorithm", "Pearson's R", "Kendall's tau", "R^2", "RMSE", "RMSE (Training Set)"];
    let mut sorted: Vec<&CvReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.summary.rmse.mean.total_cmp(&b.summary.rmse.mean));
    let rows: Vec<[String; 6]> = sorted
        .iter()
        .map(|r| {
            let s = &r.summary;
            [
                r.kind.display_name().to_string(),
                cell(s.pearson_r),
                cell(s.kendall_tau),
                cell(s.r_squared),
                cell(Some(s.rmse)),
                cell(Some(s.train_rmse)),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            let pad = w - c.chars().count();
            if i == 0 {
                let _ = write!(out, "{c}{}", " ".repeat(pad));
            } else {
                let _ = write!(out, " | {}{c}", " ".repeat(pad));
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspace::{sample_uniform, SpaceLimits};

    #[test]
    fn split_sizes() {
        let s = split_cv(100, 5, 0.1, 3).unwrap();
        assert_eq!(s.test.len(), 10);
        assert!(s.folds.iter().all(|f| f.len() == 18));
        let mut all: Vec<usize> = s.folds.iter().flatten().chain(&s.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(s, split_cv(100, 5, 0.1, 3).unwrap());
        assert_ne!(s, split_cv(100, 5, 0.1, 4).unwrap());
        let uneven = split_cv(23, 5, 0.0, 0).unwrap();
        let sizes: Vec<usize> = uneven.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(split_cv(9, 5, 0.1, 0), Err(Error::TooFewRecords { got: 9, .. })));
    }

    #[test]
    fn report_is_deterministic_and_tabulates() {
        let limits = SpaceLimits::default();
        let recs: Vec<PerformanceRecord> = (0..80)
            .map(|i| {
                let a = sample_uniform(i, &limits).unwrap();
                PerformanceRecord::new(a, 0, (a.num_edges() as f64 / 28.0).min(1.0))
            })
            .collect();
        let hyper = Hyperparams::default();
        let a = cross_validate(RegressorKind::Ridge, &recs, &hyper, 0.1, 7).unwrap();
        let b = cross_validate(RegressorKind::Ridge, &recs, &hyper, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.folds.len(), 5);
        assert!(a.summary.pearson_r.unwrap().mean > 0.9);
        let table = format_table(&[a]);
        assert!(table.starts_with("Algorithm"));
        assert!(table.contains("Ridge Regression"));
        let widths: Vec<usize> = table.lines().map(|l| l.chars().count()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }
}
