//! Scalar utility combining predicted F1 and parameter count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netbuild::{minimal_params, worst_case_params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub weight_f1: f64,
    pub weight_params: f64,
    pub params_min: usize,
    /// Worst case: complete 8-vertex graph, every label linear-prelu.
    pub params_max: usize,
    #[serde(rename = "clamp")]
    pub clamp_predictions: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weight_f1: 0.5,
            weight_params: 0.5,
            params_min: minimal_params(),
            params_max: worst_case_params(),
            clamp_predictions: true,
        }
    }
}

impl RewardConfig {
    pub fn with_weights(weight_f1: f64, weight_params: f64) -> Result<Self> {
        let cfg = Self {
            weight_f1,
            weight_params,
            ..Self::default()
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn unclamped(mut self) -> Self {
        self.clamp_predictions = false;
        self
    }

    pub fn check(&self) -> Result<()> {
        let in_unit = |w: f64| (0.0..=1.0).contains(&w);
        if !in_unit(self.weight_f1) || !in_unit(self.weight_params) || (self.weight_f1 + self.weight_params - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "reward weights must be fractions summing to 1, got {} and {}",
                self.weight_f1, self.weight_params
            )));
        }
        if self.params_min >= self.params_max {
            return Err(Error::InvalidConfig(format!(
                "params_min ({}) must be below params_max ({})",
                self.params_min, self.params_max
            )));
        }
        Ok(())
    }
}

/// Maps a parameter count onto `[0, 1]`; out-of-range counts are clamped.
pub fn normalized_param_count(params: usize, cfg: &RewardConfig) -> f64 {
    if params < cfg.params_min || params > cfg.params_max {
        log::warn!(
            "parameter count {params} outside [{}, {}], clamping",
            cfg.params_min,
            cfg.params_max
        );
    }
    let p = params.clamp(cfg.params_min, cfg.params_max);
    (p - cfg.params_min) as f64 / (cfg.params_max - cfg.params_min) as f64
}

pub fn utility(predicted_f1: f64, params: usize, cfg: &RewardConfig) -> f64 {
    let f1 = if cfg.clamp_predictions {
        predicted_f1.clamp(0.0, 1.0)
    } else {
        predicted_f1
    };
    cfg.weight_f1 * f1 + cfg.weight_params * (1.0 - normalized_param_count(params, cfg))
}

/// True for predictions outside `[0, 1]`.
pub fn detect_adversarial(predicted_f1: f64) -> bool {
    !(0.0..=1.0).contains(&predicted_f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalisation_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(cfg.params_min, 17);
        assert_eq!(cfg.params_max, 5_681);
        assert_eq!(normalized_param_count(17, &cfg), 0.0);
        assert_eq!(normalized_param_count(5_681, &cfg), 1.0);
        assert!((normalized_param_count(2_849, &cfg) - 0.5).abs() < 1e-12);
        assert_eq!(normalized_param_count(10, &cfg), 0.0);
        assert_eq!(normalized_param_count(9_999, &cfg), 1.0);
    }

    #[test]
    fn utility_examples() {
        let cfg = RewardConfig::default();
        assert_eq!(utility(1.0, 17, &cfg), 1.0);
        assert_eq!(utility(0.0, 5_681, &cfg), 0.0);
        assert_eq!(utility(1.12, 17, &cfg), 1.0);
        assert!((utility(1.12, 17, &cfg.clone().unclamped()) - 1.06).abs() < 1e-12);
    }

    #[test]
    fn adversarial_examples() {
        assert!(detect_adversarial(1.02));
        assert!(detect_adversarial(-0.01));
        assert!(!detect_adversarial(0.5));
        assert!(!detect_adversarial(1.0));
        assert!(!detect_adversarial(0.0));
    }

    #[test]
    fn config_checks() {
        assert!(RewardConfig::with_weights(0.7, 0.2).is_err());
        assert!(RewardConfig::with_weights(1.0, 0.0).is_ok());
        let bad = RewardConfig {
            params_min: 100,
            params_max: 100,
            ..Default::default()
        };
        assert!(bad.check().is_err());
    }

    #[test]
    fn extreme_weights_rank_by_one_objective() {
        let points = [(0.3, 400usize), (0.9, 5_000), (0.6, 17), (0.1, 2_000), (0.95, 300)];
        let rank = |cfg: &RewardConfig| {
            let mut idx: Vec<usize> = (0..points.len()).collect();
            idx.sort_by(|&a, &b| {
                utility(points[b].0, points[b].1, cfg)
                    .partial_cmp(&utility(points[a].0, points[a].1, cfg))
                    .unwrap()
            });
            idx
        };
        let f1_only = RewardConfig::with_weights(1.0, 0.0).unwrap();
        let mut by_f1: Vec<usize> = (0..points.len()).collect();
        by_f1.sort_by(|&a, &b| points[b].0.partial_cmp(&points[a].0).unwrap());
        assert_eq!(rank(&f1_only), by_f1);
        let params_only = RewardConfig::with_weights(0.0, 1.0).unwrap();
        let mut by_params: Vec<usize> = (0..points.len()).collect();
        by_params.sort_by_key(|&i| points[i].1);
        assert_eq!(rank(&params_only), by_params);
    }

    proptest! {
        #[test]
        fn utility_is_monotone_and_bounded(f1 in -1.0f64..2.0, df in 0.0f64..1.0, p in 17usize..5_681, dp in 0usize..500) {
            let cfg = RewardConfig::default();
            let u = utility(f1, p, &cfg);
            prop_assert!((0.0..=1.0).contains(&u));
            prop_assert!(utility(f1, p + dp, &cfg) <= u);
            prop_assert!(utility(f1 + df, p, &cfg) >= u);
        }
    }
}
