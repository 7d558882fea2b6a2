use std::fs;
use std::path::Path;

use fedsgt_cli::commands::compare::Method;
use fedsgt_cli::commands::validate::write_validation;
use fedsgt_cli::output::OutDir;
use fedsgt_cli::{
    cmd_analyze, cmd_compare, cmd_train, cmd_unlearn, cmd_validate, run, validation_failures, AnalyzeArgs, CompareArgs,
    GlobalArgs, TrainArgs, UnlearnArgs, ValidateArgs,
};
use fedsgt_core::montecarlo::{validation_grid, GridSpec, MCConfig};

const SMALL: &str = "clients = 4\nslices_per_client = 2\ngroups = 2\nbudget = 1\nclusters = 2\n\
                     [dataset]\nkind = \"synthetic\"\nsamples_per_client = 40\ntest_samples = 40\n\
                     [requests]\ncount = 6\n";

fn global(out: &Path) -> GlobalArgs {
    GlobalArgs {
        seed: None,
        workers: None,
        out: Some(out.to_path_buf()),
    }
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn analyze_degenerate_and_curve_start() {
    let dir = tempfile::tempdir().unwrap();
    let args = AnalyzeArgs {
        groups: 1,
        budget: 1,
        ..AnalyzeArgs::default()
    };
    let report = cmd_analyze(&args, &global(dir.path())).unwrap();
    assert_eq!(report.span_given_m.len(), 1);
    let span = fs::read_to_string(dir.path().join("span.csv")).unwrap();
    assert_eq!(span.lines().count(), 2);
    assert_eq!(report.remaining[0].fedsgt, 50_000.0);
    assert_eq!(report.remaining[0].fedcio, 50_000.0);
    assert!(dir.path().join("manifest.json").is_file());

    let default = cmd_analyze(&AnalyzeArgs::default(), &global(dir.path())).unwrap();
    assert_eq!(format!("{:.2}", default.deletion_ratio), "2.57");
    assert!(default.deletion_ratio > 2.5);
}

#[test]
fn analyze_rejects_zero_params() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(["fedsgt", "analyze", "--groups", "0", "--out", &arg(dir.path())]);
    assert_eq!(code, 2);
}

#[test]
fn validate_single_trial_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ValidateArgs {
        trials: 1,
        ..ValidateArgs::default()
    };
    let _ = cmd_validate(&args, &global(dir.path()));
    let text = fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("quantity,params,closed_form,mc_mean,mc_stderr,zscore"));
    assert_eq!(lines.count(), 57);
}

#[test]
fn corrupted_closed_form_exits_3() {
    let cfg = MCConfig {
        trials: 2000,
        seed: 5,
        confidence_k: 3.0,
    };
    let grid = GridSpec {
        groups: vec![4],
        clusters: vec![2],
        requests: vec![3],
        slices: vec![2],
        samples: 1000,
    };
    let rows = validation_grid(&grid, &cfg).unwrap();
    assert_eq!(validation_failures(&rows, 3.0), 0);
    let mut bad = rows.clone();
    bad[0] = bad[0].with_closed_form(bad[0].closed_form * 1.5);
    assert_eq!(validation_failures(&bad, 3.0), 1);
    let dir = tempfile::tempdir().unwrap();
    let mut out = OutDir::create(dir.path()).unwrap();
    let err = write_validation(&mut out, &bad, &[], 3.0).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn train_missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[dataset]\nkind = \"csv\"\ndata = \"/no/such/data.csv\"\nmanifest = \"/no/such/manifest.csv\"\n",
    );
    assert_eq!(run(["fedsgt", "train", "--config", &arg(&cfg), "--out", &arg(&dir.path().join("o"))]), 2);
    assert_eq!(run(["fedsgt", "train", "--config", "/no/such/config.toml"]), 2);
}

#[test]
fn train_smoke_and_rerun_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = cmd_train(&TrainArgs { config: Some(cfg.clone()) }, &global(&dir.path().join("a"))).unwrap();
    let b = cmd_train(&TrainArgs { config: Some(cfg) }, &global(&dir.path().join("b"))).unwrap();
    assert_eq!(fs::read(&a.bank_path).unwrap(), fs::read(&b.bank_path).unwrap());
    assert_eq!(a.sequences.len(), 1);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["groups"], 2);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|f| f == "bank.fsgt"));
}

#[test]
fn worker_count_does_not_change_the_bank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("budget = 1", "budget = 3"));
    for (name, workers) in [("one", "1"), ("four", "4")] {
        let out = dir.path().join(name);
        assert_eq!(run(["fedsgt", "--workers", workers, "train", "--config", &arg(&cfg), "--out", &arg(&out)]), 0);
    }
    assert_eq!(
        fs::read(dir.path().join("one/bank.fsgt")).unwrap(),
        fs::read(dir.path().join("four/bank.fsgt")).unwrap()
    );
}

#[test]
fn unlearn_empty_stream_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("count = 6", "count = 0"));
    let trained = cmd_train(&TrainArgs { config: Some(cfg) }, &global(&dir.path().join("t"))).unwrap();
    let args = UnlearnArgs {
        bank: trained.bank_path,
        audit: true,
        ..UnlearnArgs::default()
    };
    let outcome = cmd_unlearn(&args, &global(&dir.path().join("u"))).unwrap();
    assert_eq!(outcome.timeline.len(), 1);
    assert!(outcome.timeline[0].status.is_available());
    assert_eq!(outcome.summary.audit.as_deref(), Some("pass"));
    let csv = fs::read_to_string(dir.path().join("u/timeline.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn corrupt_bank_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let trained = cmd_train(&TrainArgs { config: Some(cfg) }, &global(&dir.path().join("t"))).unwrap();
    let mut bytes = fs::read(&trained.bank_path).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&trained.bank_path, &bytes).unwrap();
    let code = run(["fedsgt", "unlearn", "--bank", &arg(&trained.bank_path), "--out", &arg(&dir.path().join("u"))]);
    assert_eq!(code, 4);
}

#[test]
fn tampered_module_fails_audit_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let trained = cmd_train(&TrainArgs { config: Some(cfg) }, &global(&dir.path().join("t"))).unwrap();
    let mut bytes = fs::read(&trained.bank_path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    fs::write(&trained.bank_path, &bytes).unwrap();
    let code = run([
        "fedsgt",
        "unlearn",
        "--bank",
        &arg(&trained.bank_path),
        "--requests",
        "0",
        "--audit",
        "--out",
        &arg(&dir.path().join("u")),
    ]);
    assert_eq!(code, 3);
    let summary = fs::read_to_string(dir.path().join("u/summary.json")).unwrap();
    assert!(summary.contains("\"fail\""));
}

#[test]
fn missing_bank_exits_2() {
    assert_eq!(run(["fedsgt", "unlearn", "--bank", "/no/such/bank.fsgt"]), 2);
}

#[test]
fn compare_all_methods_and_stride() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("count = 6", "count = 11"));
    let outcome = cmd_compare(
        &CompareArgs {
            config: Some(cfg.clone()),
            ..CompareArgs::default()
        },
        &global(&dir.path().join("c")),
    )
    .unwrap();
    assert_eq!(outcome.summary.len(), 3);
    assert_eq!(outcome.timeline.len(), 3 * 12);
    let retrain_evals: Vec<usize> = outcome
        .timeline
        .iter()
        .filter(|r| r.method == "FedRetrain" && r.utility.is_some())
        .map(|r| r.step)
        .collect();
    assert_eq!(retrain_evals, vec![0, 5, 10]);
    let fedretrain = outcome.summary.iter().find(|s| s.method == "FedRetrain").unwrap();
    assert_eq!(fedretrain.failure_step, None);

    let single = cmd_compare(
        &CompareArgs {
            config: Some(cfg),
            methods: vec![Method::Fedcio],
        },
        &global(&dir.path().join("single")),
    )
    .unwrap();
    assert_eq!(single.summary.len(), 1);
    assert!(single.timeline.iter().all(|r| r.method == "FedCIO"));
}
