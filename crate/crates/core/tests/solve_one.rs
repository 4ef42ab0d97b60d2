use regmod::harness::{self, ExperimentConfig, HarnessError};
use regmod::model::{generate_instance, SignalModelParams};
use regmod::operators::gaussian_operator;
use regmod::solvers::{self, SolveOptions};

fn params() -> SignalModelParams {
    SignalModelParams {
        m: 64,
        support_size: 8,
        miss_frac: 0.25,
        extra_frac: 0.125,
        beta_l: 1.0,
        beta_m: 0.25,
        beta_s: 0.25,
        sigma_p2: 1e-3,
        sigma_w2: 1e-4,
        split_delta: true,
    }
}

fn write_config(dir: &std::path::Path, instance: &std::path::Path, estimator: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{"experiment": "solve-one", "estimators": ["{estimator}"], "instancePath": {:?},
            "gammaMode": {{"fixed": 0.005}}, "lambdaMode": {{"fixed": 0.1}}, "rho": 0.05, "withBounds": true}}"#,
        instance.to_str().unwrap()
    );
    let path = dir.join("solve.json");
    std::fs::write(&path, text).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

#[test]
fn serialized_instance_solves_identically() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate_instance(gaussian_operator(32, 64, 4).unwrap(), &params(), 4).unwrap();
    let path = dir.path().join("instance.json");
    std::fs::write(&path, serde_json::to_string(&inst).unwrap()).unwrap();

    for est in ["reg-mod-bpdn", "bpdn", "cs-residual", "weighted-l1"] {
        let out = harness::solve_one(&write_config(dir.path(), &path, est)).unwrap();
        let prior = inst.prior.clone().with_tuning(0.005, 0.0, 0.1);
        let direct = solvers::solve_variant(est, &inst.operator.matrix, &inst.y, &prior, &SolveOptions::default()).unwrap();
        let gap = out.estimate.iter().zip(&direct.estimate).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        assert!(gap <= 1e-12, "{est}: {gap}");
        assert_eq!(out.support_estimate, solvers::estimate_support(&direct.estimate, 0.05));
        assert_eq!(out.bounds.is_empty(), est != "reg-mod-bpdn" && est != "bpdn");
    }
}

#[test]
fn mismatched_bundle_names_both_lengths() {
    let mut inst = generate_instance(gaussian_operator(32, 64, 4).unwrap(), &params(), 4).unwrap();
    inst.y.pop();
    let err = harness::parse_instance(&serde_json::to_string(&inst).unwrap()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("31") && msg.contains("32"), "{msg}");
}

#[test]
fn malformed_bundle_reports_offset() {
    let err = harness::parse_instance("{\"operator\": [1, 2,").unwrap_err();
    match err {
        HarnessError::Parse { offset, .. } => assert!(offset > 0),
        other => panic!("unexpected error {other}"),
    }
}
