use std::fs;
use std::path::{Path, PathBuf};

use autolabel::labelmodel::WeakDataset;
use autolabel::pipeline::{load_truth, noise_rate, run_pipeline, RunConfig, RunReport};
use autolabel::synth::{generate_synthetic, write_corpus, PlantedSpec};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn small_corpus(dir: &Path, seed: u64) -> RunConfig {
    let mut spec = PlantedSpec::toy(seed);
    spec.labeled_per_class = 20;
    spec.n_unlabeled = 400;
    spec.test_per_class = 50;
    write_corpus(&generate_synthetic(&spec).unwrap(), dir).unwrap();
    RunConfig::load(&dir.join("config.toml")).unwrap()
}

#[test]
fn bundled_toy_corpus_regenerates_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(
        &generate_synthetic(&PlantedSpec::toy(0)).unwrap(),
        dir.path(),
    )
    .unwrap();
    let bundled = repo_root().join("data/toy");
    let mut names: Vec<_> = fs::read_dir(&bundled)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut fresh: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    fresh.sort();
    assert_eq!(names, fresh);
    for name in names {
        let a = fs::read(bundled.join(&name)).unwrap();
        let b = fs::read(dir.path().join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn reference_config_validates() {
    let cfg = RunConfig::load(&repo_root().join("config/reference.toml")).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.data.num_classes, Some(4));
    assert_eq!(cfg.pool.external.len(), 3);
}

#[test]
fn end_to_end_writes_artifacts_and_is_deterministic() {
    let data = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(data.path(), 3);
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();

    cfg.out = Some(out_a.path().to_path_buf());
    let a = run_pipeline(&cfg).unwrap();
    cfg.out = Some(out_b.path().to_path_buf());
    let b = run_pipeline(&cfg).unwrap();

    for name in [
        "report.json",
        "label_matrix.csv",
        "probs.jsonl",
        "weak.jsonl",
        "final_model.json",
        "pool",
    ] {
        assert!(out_a.path().join(name).exists(), "{name} missing");
    }
    assert!(!out_a.path().join(".lock").exists());
    for name in [
        "label_matrix.csv",
        "probs.jsonl",
        "weak.jsonl",
        "final_model.json",
    ] {
        assert_eq!(
            fs::read(out_a.path().join(name)).unwrap(),
            fs::read(out_b.path().join(name)).unwrap(),
            "{name}"
        );
    }

    let mut a_cmp = a.without_timings();
    let mut b_cmp = b.without_timings();
    a_cmp.config.out = None;
    b_cmp.config.out = None;
    assert_eq!(a_cmp, b_cmp);

    let on_disk = RunReport::load(&out_a.path().join("report.json")).unwrap();
    assert_eq!(on_disk.without_timings(), a.without_timings());

    assert!(a.failed_step.is_none());
    assert_eq!(a.num_classes, Some(4));
    assert_eq!(a.n_labeled, 80);
    assert_eq!(a.n_unlabeled, 400);
    let n_weak = a.n_weak.unwrap();
    assert!(n_weak > 0 && n_weak <= 400);
    let m = a.metrics.as_ref().unwrap();
    assert!((0.0..=1.0).contains(&m.accuracy));
    assert!(a.baselines.labeled_only.is_some() && a.baselines.all_lf_mv.is_some());
    assert!(a.timings_ms.contains_key("search"));

    let weak = WeakDataset::load_jsonl(&out_a.path().join("weak.jsonl"), 4).unwrap();
    assert_eq!(weak.len(), n_weak);
    let truth = load_truth(&data.path().join("truth.jsonl")).unwrap();
    assert_eq!(a.noise_rate, noise_rate(&weak, &truth));
}

#[test]
fn failure_writes_partial_report() {
    let data = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(data.path(), 1);
    // An out-of-range vote breaks LF fitting after loading succeeded.
    fs::write(
        data.path().join("votes_planted0.jsonl"),
        "{\"id\": \"u00000\", \"vote\": 9}\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    cfg.out = Some(out.path().to_path_buf());

    let failure = run_pipeline(&cfg).unwrap_err();
    assert_eq!(failure.step, "fit_lfs");
    let report = RunReport::load(&out.path().join("report.json")).unwrap();
    assert_eq!(report.failed_step.as_deref(), Some("fit_lfs"));
    assert!(report.error.is_some());
    assert_eq!(report.n_labeled, 80);
    assert!(report.search.is_none());
    assert!(!out.path().join(".lock").exists());
}

#[test]
fn locked_output_is_refused() {
    let data = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(data.path(), 2);
    let out = tempfile::tempdir().unwrap();
    cfg.out = Some(out.path().to_path_buf());
    fs::write(out.path().join(".lock"), "").unwrap();
    let failure = run_pipeline(&cfg).unwrap_err();
    assert_eq!(failure.step, "lock");
    assert!(matches!(failure.error, autolabel::Error::Locked(_)));
}

#[test]
fn seed_override_is_recorded() {
    let data = tempfile::tempdir().unwrap();
    let mut cfg = small_corpus(data.path(), 4);
    let a = run_pipeline(&cfg).unwrap();
    cfg.seed = 99;
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(a.seed, 4);
    assert_eq!(b.seed, 99);
    assert_eq!(b.search.unwrap().seed, 99);
}
