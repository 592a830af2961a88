//! End-to-end orchestration: configuration, final training, evaluation
//! and the run report.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::classifier::{Algorithm, HyperParams, Model};
use crate::corpus::{
    check_disjoint, class_prior, load_labeled, load_unlabeled, Document, LabeledDataset,
    UnlabeledDataset,
};
use crate::error::{Error, Result};
use crate::features::{EmbeddingTable, FeatureChannel, FeatureSpace};
use crate::labelmodel::{
    aggregate, build_label_matrix, threshold_filter, LabelMatrix, LabelModelKind, ProbLabels,
    WeakDataset,
};
use crate::lf::{
    attach_external_votes, make_default_pool, read_json, save_pool, score_and_rank_lfs,
    tune_hyperparameters, write_json, HpSearchSpec, LabelingFunction, LfScore, PoolConfig,
};
use crate::search::{run_search, SearchContext, SearchResult, SearchSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Hidden truth for the unlabeled set (synthetic corpora only).
    pub truth: Option<PathBuf>,
    pub num_classes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinalConfig {
    pub family: String,
    pub folds: usize,
}

impl Default for FinalConfig {
    fn default() -> Self {
        FinalConfig {
            family: "logreg-tfidf".into(),
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub pool: PoolConfig,
    #[serde(default)]
    pub search: SearchSpace,
    #[serde(default, rename = "final")]
    pub final_model: FinalConfig,
}

impl RunConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut self.data;
        for p in [
            &mut d.labeled,
            &mut d.unlabeled,
            &mut d.test,
            &mut d.embeddings,
            &mut d.truth,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.pool.external.iter_mut().for_each(|e| fix(&mut e.path));
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let labeled = self
            .data
            .labeled
            .as_ref()
            .ok_or_else(|| Error::Config("data.labeled is required".into()))?;
        let unlabeled = self
            .data
            .unlabeled
            .as_ref()
            .ok_or_else(|| Error::Config("data.unlabeled is required".into()))?;
        let mut paths: Vec<(&str, &PathBuf)> =
            vec![("data.labeled", labeled), ("data.unlabeled", unlabeled)];
        for (name, p) in [
            ("data.test", &self.data.test),
            ("data.embeddings", &self.data.embeddings),
            ("data.truth", &self.data.truth),
        ] {
            if let Some(p) = p {
                paths.push((name, p));
            }
        }
        for ext in &self.pool.external {
            paths.push(("pool.external", &ext.path));
        }
        for (i, (name, p)) in paths.iter().enumerate() {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "{name}: no such file {}",
                    p.display()
                )));
            }
            if paths[..i].iter().any(|(_, q)| q == p) {
                return Err(Error::Config(format!(
                    "{name}: {} is used twice",
                    p.display()
                )));
            }
        }
        if let Some(c) = self.data.num_classes {
            if c < 2 {
                return Err(Error::Config("data.num_classes must be at least 2".into()));
            }
        }
        if !(self.pool.split_ratio > 0.0 && self.pool.split_ratio < 1.0) {
            return Err(Error::Config("pool.split_ratio must lie in (0, 1)".into()));
        }
        if self.pool.folds < 2 || self.final_model.folds < 2 {
            return Err(Error::Config("fold counts must be at least 2".into()));
        }
        self.search.validate()?;
        let family = FinalFamily::from_str(&self.final_model.family)?;
        if family.channel == FeatureChannel::Embedding && self.data.embeddings.is_none() {
            return Err(Error::Config(
                "final family reads embeddings but none are configured".into(),
            ));
        }
        Ok(())
    }
}

/// Final classifier family, written `<algorithm>-<channel>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalFamily {
    pub algorithm: Algorithm,
    pub channel: FeatureChannel,
}

impl FromStr for FinalFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown final family `{s}`"));
        let (a, c) = s.split_once('-').ok_or_else(bad)?;
        let algorithm = [
            Algorithm::LogReg,
            Algorithm::NaiveBayes,
            Algorithm::GaussianNb,
            Algorithm::Centroid,
        ]
        .into_iter()
        .find(|x| x.as_str() == a)
        .ok_or_else(bad)?;
        let channel = match c {
            "count" => FeatureChannel::Count,
            "tfidf" => FeatureChannel::Tfidf,
            "emb" | "embedding" => FeatureChannel::Embedding,
            _ => return Err(bad()),
        };
        if !algorithm.supports(channel) {
            return Err(Error::Config(format!("{a} cannot read the {c} channel")));
        }
        Ok(FinalFamily { algorithm, channel })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalModel {
    pub family: FinalFamily,
    pub hyperparams: HyperParams,
    pub cv_score: Option<f64>,
    pub train_size: usize,
    pub model: Model,
}

impl FinalModel {
    pub fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    pub fn predict(&self, features: &FeatureSpace, docs: &[Document]) -> Result<Vec<usize>> {
        let x = features.featurize_all(self.family.channel, docs)?;
        Ok(x.iter().map(|v| self.model.predict(v)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Trains the final classifier on `X ∪ U′` (hard labels, uniform weights),
/// tuning hyper-parameters by stratified K-fold on the union.
pub fn train_final_classifier(
    labeled: &LabeledDataset,
    weak: &WeakDataset,
    features: &FeatureSpace,
    family: FinalFamily,
    folds: usize,
    seed: u64,
) -> Result<FinalModel> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if weak.is_empty() {
        warn!("no weakly labeled samples; training on the labeled set alone");
    }
    let docs: Vec<Document> = labeled
        .docs()
        .iter()
        .cloned()
        .chain(weak.samples.iter().map(|s| s.doc.clone()))
        .collect();
    let y: Vec<usize> = labeled
        .labels()
        .iter()
        .copied()
        .chain(weak.samples.iter().map(|s| s.label))
        .collect();
    let x = features.featurize_all(family.channel, &docs)?;
    let c = labeled.num_classes();
    let spec = HpSearchSpec {
        grid: family.algorithm.default_grid(),
        folds,
    };
    let tuned = tune_hyperparameters(&spec, &x, &y, c, seed)?;
    let model = tuned.best.fit(&x, &y, c)?;
    Ok(FinalModel {
        family,
        hyperparams: tuned.best,
        cv_score: tuned.cv_score,
        train_size: docs.len(),
        model,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub n: usize,
}

/// Accuracy, macro-F1 and per-class F1. A class absent from both
/// predictions and truth contributes F1 = 0.
pub fn metrics(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut tp, mut fp, mut fneg) = (
        vec![0usize; num_classes],
        vec![0usize; num_classes],
        vec![0usize; num_classes],
    );
    for (&p, &t) in predicted.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let per_class_f1: Vec<f64> = (0..num_classes)
        .map(|k| {
            let denom = 2 * tp[k] + fp[k] + fneg[k];
            if denom == 0 {
                warn!("class {k} is absent from predictions and truth; its F1 counts as 0");
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .collect();
    Ok(Metrics {
        accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
        macro_f1: per_class_f1.iter().sum::<f64>() / num_classes as f64,
        per_class_f1,
        n: truth.len(),
    })
}

pub fn evaluate(
    model: &FinalModel,
    features: &FeatureSpace,
    test: &LabeledDataset,
) -> Result<Metrics> {
    if model.num_classes() != test.num_classes() {
        return Err(Error::ClassCountMismatch {
            expected: model.num_classes(),
            found: test.num_classes(),
        });
    }
    let predicted = model.predict(features, test.docs())?;
    metrics(&predicted, test.labels(), test.num_classes())
}

#[derive(Deserialize)]
struct TruthRecord {
    id: String,
    label: usize,
}

pub fn load_truth(path: &Path) -> Result<HashMap<String, usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: TruthRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(r.id, r.label);
    }
    Ok(out)
}

/// Fraction of weak samples whose label disagrees with the truth, over
/// samples with a known truth; `None` when there are none.
pub fn noise_rate(weak: &WeakDataset, truth: &HashMap<String, usize>) -> Option<f64> {
    let known: Vec<(usize, usize)> = weak
        .samples
        .iter()
        .filter_map(|s| truth.get(&s.doc.id).map(|&t| (s.label, t)))
        .collect();
    if known.is_empty() {
        return None;
    }
    Some(known.iter().filter(|(a, b)| a != b).count() as f64 / known.len() as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub labeled_only: Option<Metrics>,
    /// Every LF, majority vote, threshold 0.
    pub all_lf_mv: Option<Metrics>,
    pub all_lf_mv_n_weak: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub family: FinalFamily,
    pub hyperparams: HyperParams,
    pub cv_score: Option<f64>,
    pub train_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    pub seed: u64,
    pub num_classes: Option<usize>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub lf_scores: Vec<LfScore>,
    pub search: Option<SearchResult>,
    pub n_weak: Option<usize>,
    pub noise_rate: Option<f64>,
    pub final_model: Option<FinalSummary>,
    pub metrics: Option<Metrics>,
    pub baselines: Baselines,
    pub failed_step: Option<String>,
    pub error: Option<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(cfg: &RunConfig) -> Self {
        RunReport {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            seed: cfg.seed,
            num_classes: None,
            n_labeled: 0,
            n_unlabeled: 0,
            lf_scores: Vec::new(),
            search: None,
            n_weak: None,
            noise_rate: None,
            final_model: None,
            metrics: None,
            baselines: Baselines::default(),
            failed_step: None,
            error: None,
            timings_ms: BTreeMap::new(),
        }
    }

    /// Copy with all wall-clock fields cleared.
    pub fn without_timings(&self) -> RunReport {
        let mut out = self.clone();
        out.timings_ms.clear();
        out.search = out.search.map(|s| s.without_timings());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[derive(Debug)]
pub struct RunFailure {
    pub report: Box<RunReport>,
    pub step: String,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step `{}` failed: {}", self.step, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Exclusive ownership of an output directory for one run.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Loaded and cross-checked datasets of a run.
pub struct Inputs {
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    pub test: Option<LabeledDataset>,
    pub embeddings: Option<EmbeddingTable>,
    pub truth: Option<HashMap<String, usize>>,
}

impl Inputs {
    pub fn num_classes(&self) -> usize {
        self.labeled.num_classes()
    }
}

/// Loads a test set that must use the model's `num_classes` labels.
pub fn load_test(path: &Path, num_classes: usize) -> Result<LabeledDataset> {
    load_labeled(path, Some(num_classes)).map_err(|e| match e {
        Error::ClassOverrideTooSmall { observed, .. } => Error::ClassCountMismatch {
            expected: num_classes,
            found: observed,
        },
        e => e,
    })
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let labeled_path = cfg
        .data
        .labeled
        .as_ref()
        .ok_or_else(|| Error::Config("data.labeled is required".into()))?;
    let unlabeled_path = cfg
        .data
        .unlabeled
        .as_ref()
        .ok_or_else(|| Error::Config("data.unlabeled is required".into()))?;
    let labeled = load_labeled(labeled_path, cfg.data.num_classes)?;
    labeled.check_coverage()?;
    let unlabeled = load_unlabeled(unlabeled_path)?;
    check_disjoint(&labeled, &unlabeled)?;
    let c = labeled.num_classes();
    let test = cfg
        .data
        .test
        .as_deref()
        .map(|p| load_test(p, c))
        .transpose()?;
    let embeddings = cfg
        .data
        .embeddings
        .as_deref()
        .map(EmbeddingTable::load)
        .transpose()?;
    let truth = cfg.data.truth.as_deref().map(load_truth).transpose()?;
    Ok(Inputs {
        labeled,
        unlabeled,
        test,
        embeddings,
        truth,
    })
}

/// Fits features on `X ∪ U`, builds, scores, ranks and refits the pool.
pub fn fit_lfs(
    cfg: &RunConfig,
    inputs: &Inputs,
) -> Result<(FeatureSpace, Vec<LabelingFunction>, Vec<LfScore>)> {
    let corpus: Vec<Document> = inputs
        .labeled
        .docs()
        .iter()
        .chain(inputs.unlabeled.docs())
        .cloned()
        .collect();
    let features = FeatureSpace::fit(&corpus, inputs.embeddings.clone())?;
    let mut pool = make_default_pool(&cfg.pool, inputs.embeddings.is_some(), inputs.num_classes())?;
    attach_external_votes(&mut pool, &cfg.pool, &inputs.unlabeled)?;
    let scores = score_and_rank_lfs(
        &mut pool,
        &features,
        &inputs.labeled,
        &inputs.unlabeled,
        &cfg.pool,
        cfg.seed,
    )?;
    Ok((features, pool, scores))
}

/// Aggregated probabilities of the chosen LF subset over `U`.
pub fn aggregate_subset(
    matrix: &LabelMatrix,
    lf_ids: &[String],
    model: LabelModelKind,
    prior: &[f64],
    space: &SearchSpace,
) -> Result<ProbLabels> {
    let mut columns = lf_ids
        .iter()
        .map(|id| {
            matrix
                .lf_ids()
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Config(format!("unknown labeling function `{id}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    columns.sort_unstable();
    aggregate(model, &matrix.select_columns(&columns)?, prior, space.em)
}

struct Stepper<'a> {
    report: &'a mut RunReport,
}

impl Stepper<'_> {
    fn step<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut RunReport) -> Result<T>,
    ) -> Result<T, (String, Error)> {
        info!("step: {name}");
        let start = Instant::now();
        let out = f(self.report).map_err(|e| (name.to_string(), e));
        self.report
            .timings_ms
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

/// Runs the whole pipeline. When `cfg.out` is set, artifacts and
/// `report.json` (partial on failure) are written there.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport, RunFailure> {
    let mut report = RunReport::new(cfg);
    let fail = |report: RunReport, step: &str, error: Error| {
        let mut report = report;
        report.failed_step = Some(step.to_string());
        report.error = Some(error.to_string());
        RunFailure {
            report: Box::new(report),
            step: step.to_string(),
            error,
        }
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(report, "validate", e));
    }
    let lock = match &cfg.out {
        Some(dir) => match OutputLock::acquire(dir) {
            Ok(l) => Some(l),
            Err(e) => return Err(fail(report, "lock", e)),
        },
        None => None,
    };
    let result = run_steps(cfg, &mut report);
    let outcome = match result {
        Ok(()) => Ok(report),
        Err((step, e)) => Err(fail(report, &step, e)),
    };
    if let Some(dir) = &cfg.out {
        let r = match &outcome {
            Ok(r) => r,
            Err(f) => &f.report,
        };
        if let Err(e) = r.save(&dir.join("report.json")) {
            drop(lock);
            return Err(fail(r.clone(), "write report", e));
        }
    }
    drop(lock);
    outcome
}

fn run_steps(cfg: &RunConfig, report: &mut RunReport) -> Result<(), (String, Error)> {
    let mut s = Stepper { report };
    let out = cfg.out.as_deref();
    let family =
        FinalFamily::from_str(&cfg.final_model.family).map_err(|e| ("validate".to_string(), e))?;

    let inputs = s.step("load", |r| {
        let inputs = load_inputs(cfg)?;
        r.num_classes = Some(inputs.num_classes());
        r.n_labeled = inputs.labeled.len();
        r.n_unlabeled = inputs.unlabeled.len();
        Ok(inputs)
    })?;
    let c = inputs.num_classes();

    let (features, pool, scores) = s.step("fit_lfs", |r| {
        let fitted = fit_lfs(cfg, &inputs)?;
        r.lf_scores = fitted.2.clone();
        if let Some(dir) = out {
            save_pool(&dir.join("pool"), &fitted.1, &fitted.2, &fitted.0)?;
        }
        Ok(fitted)
    })?;

    let matrix = s.step("apply_lfs", |_| {
        let m = build_label_matrix(&pool, &features, &inputs.unlabeled)?;
        if let Some(dir) = out {
            m.save_csv(&dir.join("label_matrix.csv"))?;
        }
        Ok(m)
    })?;

    let prior = class_prior(&inputs.labeled).map_err(|e| ("apply_lfs".to_string(), e))?;
    let search = s.step("search", |r| {
        let ctx = SearchContext::new(
            &matrix,
            &inputs.unlabeled,
            &inputs.labeled,
            &features.tfidf,
            prior.clone(),
            cfg.seed,
        )?;
        let result = run_search(&ctx, &scores, &cfg.search)?;
        r.search = Some(result.clone());
        Ok(result)
    })?;

    let weak = s.step("filter", |r| {
        let best = &search.best;
        let probs = aggregate_subset(&matrix, &best.lf_ids, best.model, &prior, &cfg.search)?;
        let weak = threshold_filter(&probs, &inputs.unlabeled, best.threshold, c)?;
        r.n_weak = Some(weak.len());
        if let Some(truth) = &inputs.truth {
            r.noise_rate = noise_rate(&weak, truth);
        }
        if let Some(dir) = out {
            let ids: Vec<String> = inputs
                .unlabeled
                .docs()
                .iter()
                .map(|d| d.id.clone())
                .collect();
            probs.save_jsonl(&dir.join("probs.jsonl"), &ids)?;
            weak.save_jsonl(&dir.join("weak.jsonl"))?;
        }
        Ok(weak)
    })?;

    let model = s.step("train_final", |r| {
        let model = train_final_classifier(
            &inputs.labeled,
            &weak,
            &features,
            family,
            cfg.final_model.folds,
            cfg.seed,
        )?;
        r.final_model = Some(FinalSummary {
            family,
            hyperparams: model.hyperparams,
            cv_score: model.cv_score,
            train_size: model.train_size,
        });
        if let Some(dir) = out {
            model.save(&dir.join("final_model.json"))?;
        }
        Ok(model)
    })?;

    let Some(test) = &inputs.test else {
        info!("no test set configured; skipping evaluation");
        return Ok(());
    };
    s.step("evaluate", |r| {
        r.metrics = Some(evaluate(&model, &features, test)?);
        Ok(())
    })?;

    s.step("baselines", |r| {
        let empty = WeakDataset {
            samples: Vec::new(),
            num_classes: c,
        };
        let labeled_only = train_final_classifier(
            &inputs.labeled,
            &empty,
            &features,
            family,
            cfg.final_model.folds,
            cfg.seed,
        )?;
        r.baselines.labeled_only = Some(evaluate(&labeled_only, &features, test)?);
        let probs = aggregate(LabelModelKind::MajorityVote, &matrix, &prior, cfg.search.em)?;
        let mv = threshold_filter(&probs, &inputs.unlabeled, 0.0, c)?;
        r.baselines.all_lf_mv_n_weak = Some(mv.len());
        let mv_model = train_final_classifier(
            &inputs.labeled,
            &mv,
            &features,
            family,
            cfg.final_model.folds,
            cfg.seed,
        )?;
        r.baselines.all_lf_mv = Some(evaluate(&mv_model, &features, test)?);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = metrics(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn binary_f1() {
        // class 1: TP = 1, FP = 1, FN = 0.
        let m = metrics(&[1, 1, 0], &[1, 0, 0], 2).unwrap();
        assert!((m.per_class_f1[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_scores_zero() {
        let m = metrics(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(m.per_class_f1, vec![1.0, 1.0, 0.0]);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn family_parsing() {
        let f: FinalFamily = "logreg-tfidf".parse().unwrap();
        assert_eq!(f.algorithm, Algorithm::LogReg);
        assert!("nb-emb".parse::<FinalFamily>().is_err());
        assert!("svm-tfidf".parse::<FinalFamily>().is_err());
    }

    #[test]
    fn missing_unlabeled_is_config_error() {
        let cfg =
            RunConfig::from_toml("[data]\nlabeled = \"x.jsonl\"\n", Path::new("/nonexistent"))
                .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.is_validation(), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("[data]\nlabeld = \"x\"\n", Path::new(".")).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn relative_paths_resolve() {
        let cfg = RunConfig::from_toml(
            "[data]\nlabeled = \"a.jsonl\"\nunlabeled = \"/abs/u.jsonl\"\n[[pool.external]]\nname = \"e\"\npath = \"v.jsonl\"\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.data.labeled.unwrap(), PathBuf::from("/base/a.jsonl"));
        assert_eq!(cfg.data.unlabeled.unwrap(), PathBuf::from("/abs/u.jsonl"));
        assert_eq!(cfg.pool.external[0].path, PathBuf::from("/base/v.jsonl"));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            OutputLock::acquire(dir.path()),
            Err(Error::Locked(_))
        ));
        drop(lock);
        OutputLock::acquire(dir.path()).unwrap();
    }
}
