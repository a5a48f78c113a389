use nasforge_core::archspace::{validate, SpaceLimits};
use nasforge_core::oracle::{Oracle, OracleConfig};
use nasforge_core::reward::RewardConfig;
use nasforge_core::search::{
    pareto_snapshots, run_local_search, run_random_search, EditNeighbourhood, ParetoFront, QueryBudget, StartSource,
};
use nasforge_core::surrogate::{cross_validate, fit, Hyperparams, PerformanceRecord, RegressorKind, TrainedModel};

fn corpus(sigma: f64, n: usize) -> Vec<PerformanceRecord> {
    Oracle::new(OracleConfig {
        noise_sigma: sigma,
        n_records: n,
        ..Default::default()
    })
    .unwrap()
    .generate_corpus(Default::default())
    .unwrap()
}

#[test]
fn ranking_quality_falls_as_oracle_noise_rises() {
    let mut last = (f64::INFINITY, f64::INFINITY);
    for sigma in [0.0, 0.05, 0.2] {
        let rep = cross_validate(RegressorKind::Ridge, &corpus(sigma, 3_000), &Hyperparams::default(), 0.1, 0).unwrap();
        let tau = rep.summary.kendall_tau.unwrap().mean;
        let r = rep.summary.pearson_r.unwrap().mean;
        assert!(tau < last.0 && r < last.1, "sigma {sigma}: tau {tau}, r {r} after {last:?}");
        last = (tau, r);
    }
}

#[test]
fn records_model_and_search_round_trip() {
    let records = corpus(0.05, 900);
    let text: String = records.iter().map(|r| r.to_json_line().unwrap() + "\n").collect();
    let parsed: Vec<PerformanceRecord> = text.lines().map(|l| PerformanceRecord::from_json_line(l).unwrap()).collect();
    assert_eq!(parsed, records);

    let model = fit(RegressorKind::Gbt, &parsed, &Hyperparams::default(), 0).unwrap();
    let restored: TrainedModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
    for r in records.iter().take(50) {
        assert_eq!(model.predict(&r.arch), restored.predict(&r.arch));
    }

    let starts = StartSource::Uniform(SpaceLimits::default());
    let reward = RewardConfig::default();
    let trace = run_random_search(QueryBudget::new(300), &reward, &restored, &starts, 7).unwrap();
    assert_eq!(trace.len(), 300);
    assert!(trace.entries.iter().all(|e| validate(&e.arch).ok));
    let snaps = pareto_snapshots(&trace, 10);
    assert_eq!(snaps.len(), 30);
    assert_eq!(snaps.last().unwrap(), &ParetoFront::from_trace(&trace));

    let hood = EditNeighbourhood::new(SpaceLimits::default(), 50);
    let local = run_local_search(QueryBudget::new(300), &reward, &restored, &hood, &starts, 7).unwrap();
    assert!(local.len() <= 300);
    assert!(local.best_utility().unwrap() <= 1.0);
}
