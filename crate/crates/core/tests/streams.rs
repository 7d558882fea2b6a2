use fedsgt_core::analytics;
use fedsgt_core::fltrain::{synth_dataset, Dataset, SynthSpec, TrainConfig};
use fedsgt_core::grouping::{build_grouping, GroupingPlan};
use fedsgt_core::sequencing::{build_sequences, ServingStrategy};
use fedsgt_core::unlearn::{uniform_requests, CioConfig, CioMode, CioSystem, FedSgtSystem, UnlearnSystem};

const SEEDS: u64 = 300;

fn tiny(seed: u64) -> Dataset {
    synth_dataset(&SynthSpec {
        clients: 4,
        samples_per_client: 16,
        slices_per_client: 2,
        feature_dim: 3,
        label_count: 2,
        test_samples: 10,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 1,
        baseline_rounds: 1,
        seed,
        ..TrainConfig::default()
    }
}

fn plan(ds: &Dataset, seed: u64) -> GroupingPlan {
    build_grouping(&ds.catalog(), 4, seed).unwrap()
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn fedsgt_failure_step_tracks_deletion_rate() {
    let mut steps = Vec::new();
    for seed in 0..SEEDS {
        let ds = tiny(seed);
        let plan = plan(&ds, seed);
        let reqs = uniform_requests(&plan, 100, seed, 1);
        let seqs = build_sequences(4, 4, seed).unwrap();
        let (mut sys, _) = FedSgtSystem::train(ds, plan, seqs, cfg(seed), ServingStrategy::AllSeq).unwrap();
        let mut lens = sys.state().active_lens().to_vec();
        let mut failed_at = None;
        for (i, r) in reqs.iter().enumerate() {
            let rec = sys.process_request(r).unwrap();
            let now = sys.state().active_lens().to_vec();
            assert!(now.iter().zip(&lens).all(|(a, b)| a <= b), "active length grew");
            lens = now;
            if !rec.status.is_available() {
                failed_at = Some(i + 1);
                break;
            }
        }
        steps.push(failed_at.expect("stream long enough to fail") as f64);
    }
    let (mean, se) = mean_and_stderr(&steps);
    let closed = analytics::deletion_rate_fedsgt(4, 4).unwrap();
    assert!((mean - closed).abs() <= 3.0 * se, "mean {mean} vs {closed} (se {se})");
}

#[test]
fn fedcio_failure_and_unaffected_mass() {
    let horizon = 6;
    let mut steps = Vec::new();
    let mut mass: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    for seed in 0..SEEDS {
        let ds = tiny(seed);
        let total = ds.live_samples() as f64;
        let plan = plan(&ds, seed);
        let reqs = uniform_requests(&plan, 100, seed, 1);
        let cio = CioConfig {
            clusters: 2,
            blocks: 1,
            mode: CioMode::NoRetrain,
            train: cfg(seed),
        };
        let mut sys = CioSystem::train(ds, cio).unwrap();
        let mut failed_at = None;
        for (i, r) in reqs.iter().enumerate() {
            let rec = sys.process_request(r).unwrap();
            if i < horizon {
                mass[i].push(sys.unaffected_samples() as f64 / total);
            }
            if failed_at.is_none() && !rec.status.is_available() {
                failed_at = Some(i + 1);
            }
            if failed_at.is_some() && i + 1 >= horizon {
                break;
            }
        }
        steps.push(failed_at.expect("stream long enough to fail") as f64);
    }
    let (mean, se) = mean_and_stderr(&steps);
    assert!((mean - 3.0).abs() <= 3.0 * se, "failure step {mean} vs 3 (se {se})");
    for (r, fractions) in mass.iter().enumerate() {
        let (m, se) = mean_and_stderr(fractions);
        let closed = analytics::expected_remaining_fedcio(1, 2, r + 1).unwrap();
        assert!((m - closed).abs() <= 3.0 * se.max(1e-12), "r={} mass {m} vs {closed}", r + 1);
    }
}

#[test]
fn audit_holds_with_extension_sequences() {
    let ds = tiny(11);
    let plan = build_grouping(&ds.catalog(), 3, 11).unwrap();
    let seqs = build_sequences(3, 5, 11).unwrap();
    assert!(seqs.ids().any(|id| seqs.is_extension(id)));
    let reqs = uniform_requests(&plan, 6, 11, 2);
    let (mut sys, _) = FedSgtSystem::train(ds, plan, seqs, cfg(11), ServingStrategy::MinSeq).unwrap();
    for r in &reqs {
        sys.process_request(r).unwrap();
        sys.audit().unwrap();
    }
}

#[test]
fn streams_are_deterministic() {
    let run = || {
        let ds = tiny(4);
        let plan = plan(&ds, 4);
        let reqs = uniform_requests(&plan, 8, 4, 3);
        let seqs = build_sequences(4, 4, 4).unwrap();
        let (mut sys, _) = FedSgtSystem::train(ds, plan, seqs, cfg(4), ServingStrategy::AllSeq).unwrap();
        sys.run_stream(&reqs).unwrap()
    };
    assert_eq!(run(), run());
}
