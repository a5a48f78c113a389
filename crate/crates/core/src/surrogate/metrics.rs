//! Regression quality metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pearson's r, Kendall's tau-b, R^2 and RMSE. Correlations are `None` when
/// an input has zero variance, and R^2 is `None` when the targets do.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pearson_r: Option<f64>,
    pub kendall_tau: Option<f64>,
    pub r_squared: Option<f64>,
    pub rmse: f64,
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewRecords { got: a.len(), need: 2 });
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance("pearson_r"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Sizes of runs of equal values in a sorted sequence, as tied-pair counts.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts inversions while merge-sorting `v` ascending.
fn merge_sort_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_sort_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += merge_sort_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b by Knight's O(n log n) algorithm.
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("kendall_tau: NaN input".into()));
    }
    let n = a.len() as u64;
    let total = n * (n - 1) / 2;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| p.partial_cmp(q).expect("no NaN"));
    let ties_a = tied_pairs(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let ties_joint = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let swaps = merge_sort_swaps(&mut ys, &mut buf);
    let ties_b = tied_pairs(&ys);
    let numerator = total as i64 - ties_a as i64 - ties_b as i64 + ties_joint as i64 - 2 * swaps as i64;
    kendall_from_counts(numerator, total, ties_a, ties_b)
}

/// tau-b from `concordant - discordant` and the tie counts.
pub fn kendall_from_counts(numerator: i64, total: u64, ties_a: u64, ties_b: u64) -> Result<f64> {
    if total == ties_a || total == ties_b {
        return Err(Error::ZeroVariance("kendall_tau"));
    }
    let denom = ((total - ties_a) as f64 * (total - ties_b) as f64).sqrt();
    Ok((numerator as f64 / denom).clamp(-1.0, 1.0))
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let sse: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_lengths(y_true, y_pred)?;
    let m = mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance("r_squared"));
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn undefined_as_none(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ZeroVariance(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics> {
    check_lengths(y_true, y_pred)?;
    Ok(Metrics {
        pearson_r: undefined_as_none(pearson(y_true, y_pred))?,
        kendall_tau: undefined_as_none(kendall_tau_b(y_true, y_pred))?,
        r_squared: undefined_as_none(r_squared(y_true, y_pred))?,
        rmse: rmse(y_true, y_pred)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    /// O(n^2) pair counting.
    fn kendall_brute(a: &[f64], b: &[f64]) -> Result<f64> {
        let n = a.len();
        let (mut conc, mut disc, mut ties_a, mut ties_b) = (0i64, 0i64, 0u64, 0u64);
        for i in 0..n {
            for j in i + 1..n {
                let da = a[i].partial_cmp(&a[j]).unwrap();
                let db = b[i].partial_cmp(&b[j]).unwrap();
                use std::cmp::Ordering::Equal;
                if da == Equal {
                    ties_a += 1;
                }
                if db == Equal {
                    ties_b += 1;
                }
                if da != Equal && db != Equal {
                    if da == db {
                        conc += 1;
                    } else {
                        disc += 1;
                    }
                }
            }
        }
        kendall_from_counts(conc - disc, (n * (n - 1) / 2) as u64, ties_a, ties_b)
    }

    #[test]
    fn identity_metrics() {
        let y = [0.1, 0.5, 0.2, 0.9, 0.7];
        let m = metrics(&y, &y).unwrap();
        assert_eq!(m.pearson_r, Some(1.0));
        assert_eq!(m.kendall_tau, Some(1.0));
        assert_eq!(m.r_squared, Some(1.0));
        assert_eq!(m.rmse, 0.0);
    }

    #[test]
    fn reversed_ranks() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&y, &r).unwrap(), -1.0);
    }

    #[test]
    fn constant_prediction() {
        let m = metrics(&[0.0, 1.0, 2.0, 3.0], &[0.0; 4]).unwrap();
        assert!((m.rmse - (14.0f64 / 4.0).sqrt()).abs() < 1e-12);
        // 1 - 14/5
        assert!((m.r_squared.unwrap() + 1.8).abs() < 1e-12);
        assert_eq!(m.pearson_r, None);
        assert_eq!(m.kendall_tau, None);
        assert!(matches!(pearson(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn input_checks() {
        assert!(matches!(metrics(&[1.0], &[1.0]), Err(Error::TooFewRecords { .. })));
        assert!(matches!(metrics(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn kendall_matches_brute_force_with_ties() {
        let mut rng = seeded(4);
        for _ in 0..200 {
            let n = rng.gen_range(2..60);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            match (kendall_tau_b(&a, &b), kendall_brute(&a, &b)) {
                (Ok(x), Ok(y)) => assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn r_squared_of_linear_fit_is_pearson_squared() {
        // regress y_pred on y_true by least squares, then R^2 == r^2
        let mut rng = seeded(8);
        let t: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p: Vec<f64> = t.iter().map(|x| 0.3 * x + rng.gen_range(-0.2..0.2)).collect();
        let (mt, mp) = (mean(&t), mean(&p));
        let slope = t.iter().zip(&p).map(|(x, y)| (x - mt) * (y - mp)).sum::<f64>()
            / t.iter().map(|x| (x - mt) * (x - mt)).sum::<f64>();
        let fitted: Vec<f64> = t.iter().map(|x| mp + slope * (x - mt)).collect();
        let r = pearson(&t, &p).unwrap();
        assert!((r_squared(&p, &fitted).unwrap() - r * r).abs() < 1e-10);
    }
}
