//! Non-dominated sets over (predicted F1 up, parameter count down).

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{csv_err, SearchTrace};
use crate::archspace::Architecture;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub f1: f64,
    pub params: usize,
    pub arch: Architecture,
}

impl ParetoPoint {
    /// Weakly better on both axes and strictly better on one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.f1 >= other.f1 && self.params <= other.params && (self.f1 > other.f1 || self.params < other.params)
    }

    fn same_objectives(&self, other: &ParetoPoint) -> bool {
        self.f1 == other.f1 && self.params == other.params
    }
}

/// Points sorted by ascending parameter count (and therefore ascending F1).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    points: Vec<ParetoPoint>,
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[ParetoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Inserts `p` unless it is dominated or duplicates an existing point's
    /// objectives; drops the points it dominates. Returns whether it was kept.
    pub fn insert(&mut self, p: ParetoPoint) -> bool {
        if p.f1.is_nan() || self.points.iter().any(|q| q.dominates(&p) || q.same_objectives(&p)) {
            return false;
        }
        self.points.retain(|q| !p.dominates(q));
        let at = self
            .points
            .partition_point(|q| (q.params, q.f1) < (p.params, p.f1));
        self.points.insert(at, p);
        true
    }

    pub fn from_trace(trace: &SearchTrace) -> Self {
        let mut front = Self::new();
        for e in &trace.entries {
            front.insert(ParetoPoint {
                f1: e.f1,
                params: e.params,
                arch: e.arch,
            });
        }
        front
    }
}

/// Area dominated by the front inside `[0, params_max] x [0, f1]`,
/// measured from the reference point `(f1 = 0, params = params_max)`.
pub fn hypervolume(front: &ParetoFront, params_max: usize) -> f64 {
    let pts = front.points();
    let mut area = 0.0;
    for (i, p) in pts.iter().enumerate() {
        if p.params >= params_max {
            break;
        }
        let next = pts.get(i + 1).map_or(params_max, |q| q.params.min(params_max));
        area += (next - p.params) as f64 * p.f1.max(0.0);
    }
    area
}

/// Fronts over trace prefixes of length `every`, `2 * every`, ...
pub fn pareto_snapshots(trace: &SearchTrace, every: usize) -> Vec<ParetoFront> {
    assert!(every > 0, "snapshot interval must be positive");
    let mut front = ParetoFront::new();
    let mut out = Vec::with_capacity(trace.len() / every);
    for (i, e) in trace.entries.iter().enumerate() {
        front.insert(ParetoPoint {
            f1: e.f1,
            params: e.params,
            arch: e.arch,
        });
        if (i + 1) % every == 0 {
            out.push(front.clone());
        }
    }
    out
}

/// `snapshot,f1,params` rows, snapshots numbered from 1.
pub fn write_snapshots_csv<W: Write>(snapshots: &[ParetoFront], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["snapshot", "f1", "params"]).map_err(csv_err)?;
    for (k, front) in snapshots.iter().enumerate() {
        for p in front.points() {
            w.write_record([(k + 1).to_string(), p.f1.to_string(), p.params.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn pt(f1: f64, params: usize) -> ParetoPoint {
        ParetoPoint {
            f1,
            params,
            arch: Architecture::minimal(),
        }
    }

    #[test]
    fn dominated_points_are_rejected() {
        let mut f = ParetoFront::new();
        assert!(f.insert(pt(0.9, 100)));
        assert!(!f.insert(pt(0.8, 200)));
        assert_eq!(f.len(), 1);
        assert!(!f.insert(pt(0.9, 100)));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn incomparable_points_are_kept() {
        let mut f = ParetoFront::new();
        for p in [pt(0.9, 100), pt(0.95, 150), pt(0.8, 50)] {
            assert!(f.insert(p));
        }
        let params: Vec<usize> = f.points().iter().map(|p| p.params).collect();
        assert_eq!(params, vec![50, 100, 150]);
        assert!(f.insert(pt(0.99, 40)));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn hypervolume_of_staircase() {
        let mut f = ParetoFront::new();
        f.insert(pt(0.5, 0));
        f.insert(pt(1.0, 5));
        assert!((hypervolume(&f, 10) - (5.0 * 0.5 + 5.0 * 1.0)).abs() < 1e-12);
        assert_eq!(hypervolume(&ParetoFront::new(), 10), 0.0);
    }

    #[test]
    fn matches_quadratic_filter() {
        let mut rng = seeded(12);
        let pts: Vec<ParetoPoint> = (0..400)
            .map(|_| pt((rng.gen_range(0..200) as f64) / 200.0, rng.gen_range(17..600)))
            .collect();
        let mut f = ParetoFront::new();
        for p in &pts {
            f.insert(*p);
        }
        let mut brute: Vec<(usize, u64)> = pts
            .iter()
            .filter(|p| !pts.iter().any(|q| q.dominates(p)))
            .map(|p| (p.params, p.f1.to_bits()))
            .collect();
        brute.sort();
        brute.dedup();
        let got: Vec<(usize, u64)> = f.points().iter().map(|p| (p.params, p.f1.to_bits())).collect();
        assert_eq!(got, brute);
    }

    #[test]
    fn empty_trace_has_no_snapshots() {
        assert!(pareto_snapshots(&SearchTrace::default(), 10).is_empty());
    }
}
