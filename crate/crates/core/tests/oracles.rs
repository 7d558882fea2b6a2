use fedsgt_core::analytics::{self, TrainingMethod};
use fedsgt_core::montecarlo::{
    mc_comm_cost, mc_deletion_rate_fedcio, mc_deletion_rate_fedsgt, mc_expected_remaining, mc_expected_span, MCConfig,
};

fn cfg() -> MCConfig {
    MCConfig {
        trials: 40_000,
        seed: 99,
        confidence_k: 3.0,
    }
}

#[test]
fn deletion_rates() {
    let c = cfg();
    let z = mc_deletion_rate_fedsgt(10, 10, &c).unwrap().zscore(analytics::deletion_rate_fedsgt(10, 10).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
    let z = mc_deletion_rate_fedsgt(6, 3, &c).unwrap().zscore(11.0);
    assert!(z.abs() <= c.confidence_k, "{z}");
    let z = mc_deletion_rate_fedcio(5, &c).unwrap().zscore(analytics::deletion_rate_fedcio(5).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
}

#[test]
fn span_and_remaining() {
    let c = cfg();
    let z = mc_expected_span(10, 5, &c).unwrap().zscore(analytics::expected_span(10, 5).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
    let est = mc_expected_remaining(TrainingMethod::FedCio, 50_000, 5, 10, &c).unwrap();
    let z = est.zscore(50_000.0 * 0.8f64.powi(10));
    assert!(z.abs() <= c.confidence_k, "{z}");
    let est = mc_expected_remaining(TrainingMethod::FedSgt, 50_000, 6, 3, &c).unwrap();
    let z = est.zscore(analytics::expected_remaining_fedsgt(50_000, 6, 3).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
}

#[test]
fn comm_cost() {
    let c = cfg();
    let z = mc_comm_cost(10, 2, &c).unwrap().zscore(analytics::expected_comm_cost(10, 2).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
    let z = mc_comm_cost(4, 5, &c).unwrap().zscore(analytics::expected_comm_cost(4, 5).unwrap());
    assert!(z.abs() <= c.confidence_k, "{z}");
}

#[test]
fn fixed_seed_and_trials_reproduce() {
    let c = cfg();
    assert_eq!(mc_comm_cost(6, 2, &c).unwrap(), mc_comm_cost(6, 2, &c).unwrap());
}
