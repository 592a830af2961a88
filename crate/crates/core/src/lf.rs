//! The labeling-function pool: construction, hyper-parameter tuning,
//! fitting, voting, dev-set scoring and persistence.
//!
//! Three kinds of labeling functions exist:
//!
//! - classifier LFs, one per (feature channel, algorithm) pair, tuned by
//!   stratified K-fold grid search; they never abstain;
//! - similarity LFs, which copy the label of the most similar labeled
//!   document and abstain when that similarity falls below the 10th
//!   percentile observed on the unlabeled set;
//! - external LFs, whose votes are read from a file (the carrier for
//!   models trained outside this crate).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Algorithm, HyperParams, Model};
use crate::corpus::{split_train_dev, Document, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::features::{cosine, FeatureChannel, FeatureSpace, SparseVector, Vectorizer};
use crate::seeded_rng;

pub const ABSTAIN: i32 = -1;

/// Percentile of unlabeled similarities below which similarity LFs abstain.
pub const SIMILARITY_ABSTAIN_PERCENTILE: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LfKind {
    Classifier,
    Similarity,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfSpec {
    pub lf_id: String,
    pub kind: LfKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<FeatureChannel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Algorithm>,
}

impl LfSpec {
    fn classifier(channel: FeatureChannel, algorithm: Algorithm) -> Self {
        LfSpec {
            lf_id: format!("{}-{}", channel_prefix(channel), algorithm.as_str()),
            kind: LfKind::Classifier,
            channel: Some(channel),
            algorithm: Some(algorithm),
        }
    }

    fn similarity(channel: FeatureChannel) -> Self {
        LfSpec {
            lf_id: format!("{}-sim", channel_prefix(channel)),
            kind: LfKind::Similarity,
            channel: Some(channel),
            algorithm: None,
        }
    }
}

fn channel_prefix(channel: FeatureChannel) -> &'static str {
    match channel {
        FeatureChannel::Count => "count",
        FeatureChannel::Tfidf => "tfidf",
        FeatureChannel::Embedding => "emb",
    }
}

/// Names and specs of the built-in LFs, in pool order.
pub fn builtin_specs(with_embeddings: bool) -> Vec<LfSpec> {
    use Algorithm::*;
    use FeatureChannel::*;
    let mut specs = Vec::new();
    for channel in [Count, Tfidf] {
        for algorithm in [LogReg, NaiveBayes, Centroid] {
            specs.push(LfSpec::classifier(channel, algorithm));
        }
    }
    specs.push(LfSpec::similarity(Count));
    specs.push(LfSpec::similarity(Tfidf));
    if with_embeddings {
        for algorithm in [LogReg, GaussianNb, Centroid] {
            specs.push(LfSpec::classifier(Embedding, algorithm));
        }
        specs.push(LfSpec::similarity(Embedding));
    }
    specs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalVotes {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    /// Built-in LF names to keep; `None` keeps all of them.
    pub include: Option<Vec<String>>,
    pub external: Vec<ExternalVotes>,
    pub folds: usize,
    pub split_ratio: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            include: None,
            external: Vec::new(),
            folds: 5,
            split_ratio: 0.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FittedState {
    Classifier {
        hyperparams: HyperParams,
        cv_score: Option<f64>,
        model: Model,
    },
    Similarity {
        references: Vec<SparseVector>,
        labels: Vec<usize>,
        class_counts: Vec<usize>,
        threshold: f64,
    },
    External {
        votes: BTreeMap<String, i32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingFunction {
    pub spec: LfSpec,
    num_classes: usize,
    state: Option<FittedState>,
}

impl LabelingFunction {
    pub fn unfitted(spec: LfSpec, num_classes: usize) -> Self {
        LabelingFunction {
            spec,
            num_classes,
            state: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.lf_id
    }

    pub fn kind(&self) -> LfKind {
        self.spec.kind
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn state(&self) -> Option<&FittedState> {
        self.state.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    /// Abstention threshold of a fitted similarity LF.
    pub fn similarity_threshold(&self) -> Option<f64> {
        match &self.state {
            Some(FittedState::Similarity { threshold, .. }) => Some(*threshold),
            _ => None,
        }
    }

    /// Vote in `[-1, C-1]` for one document.
    pub fn vote(&self, features: &FeatureSpace, doc: &Document) -> Result<i32> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::NotFitted(self.id().to_string()))?;
        match state {
            FittedState::External { votes } => Ok(votes.get(&doc.id).copied().unwrap_or(ABSTAIN)),
            FittedState::Classifier { model, .. } => {
                let x = features.featurize(self.channel()?, doc)?;
                Ok(model.predict(&x) as i32)
            }
            FittedState::Similarity { .. } => {
                let x = features.featurize(self.channel()?, doc)?;
                let (label, sim) = self.nearest_label(&x)?;
                Ok(
                    if sim < self.similarity_threshold().unwrap_or(f64::NEG_INFINITY) {
                        ABSTAIN
                    } else {
                        label as i32
                    },
                )
            }
        }
    }

    /// Best-match similarity of a fitted similarity LF.
    pub fn best_similarity(&self, features: &FeatureSpace, doc: &Document) -> Result<f64> {
        let x = features.featurize(self.channel()?, doc)?;
        Ok(self.nearest_label(&x)?.1)
    }

    pub fn vote_all(&self, features: &FeatureSpace, docs: &[Document]) -> Result<Vec<i32>> {
        docs.iter().map(|d| self.vote(features, d)).collect()
    }

    fn channel(&self) -> Result<FeatureChannel> {
        self.spec
            .channel
            .ok_or_else(|| Error::Config(format!("`{}` has no feature channel", self.id())))
    }

    /// Label of the most similar reference and that similarity. Labels tied
    /// at the maximum resolve to the most frequent class, then the lowest.
    fn nearest_label(&self, x: &SparseVector) -> Result<(usize, f64)> {
        let Some(FittedState::Similarity {
            references,
            labels,
            class_counts,
            ..
        }) = &self.state
        else {
            return Err(Error::NotFitted(self.id().to_string()));
        };
        nearest_label(x, references, labels, class_counts)
    }

    /// Fits on a labeled set. Similarity LFs also calibrate their
    /// threshold on `unlabeled`; external LFs are left untouched.
    pub fn fit(
        &mut self,
        features: &FeatureSpace,
        labeled: &LabeledDataset,
        unlabeled: &UnlabeledDataset,
        folds: usize,
        seed: u64,
    ) -> Result<()> {
        match self.spec.kind {
            LfKind::Classifier => fit_classifier_lf(self, features, labeled, folds, seed),
            LfKind::Similarity => fit_similarity_lf(self, features, labeled, unlabeled),
            LfKind::External => {
                if self.state.is_none() {
                    return Err(Error::NotFitted(self.id().to_string()));
                }
                Ok(())
            }
        }
    }
}

fn nearest_label(
    x: &SparseVector,
    references: &[SparseVector],
    labels: &[usize],
    class_counts: &[usize],
) -> Result<(usize, f64)> {
    let mut best = f64::NEG_INFINITY;
    let mut tied: Vec<usize> = Vec::new();
    for (reference, &label) in references.iter().zip(labels) {
        let sim = cosine(x, reference)?;
        if sim > best {
            best = sim;
            tied.clear();
            tied.push(label);
        } else if sim == best {
            tied.push(label);
        }
    }
    let mut label = *tied.first().ok_or(Error::EmptyDataset)?;
    for &candidate in &tied {
        let (cc, cl) = (class_counts[candidate], class_counts[label]);
        if cc > cl || (cc == cl && candidate < label) {
            label = candidate;
        }
    }
    Ok((label, best))
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Builds the default pool: count/tfidf × {logreg, nb, centroid}, the
/// count and tfidf similarity LFs, the four embedding-channel LFs when
/// embeddings are configured, then one external LF per vote file.
pub fn make_default_pool(
    config: &PoolConfig,
    with_embeddings: bool,
    num_classes: usize,
) -> Result<Vec<LabelingFunction>> {
    let builtin = builtin_specs(with_embeddings);
    let specs: Vec<LfSpec> = match &config.include {
        None => builtin,
        Some(names) => {
            let known: Vec<LfSpec> = builtin_specs(true);
            for name in names {
                match known.iter().find(|s| &s.lf_id == name) {
                    None => {
                        return Err(Error::Config(format!("unknown labeling function `{name}`")))
                    }
                    Some(s) if s.channel == Some(FeatureChannel::Embedding) && !with_embeddings => {
                        return Err(Error::Config(format!(
                            "`{name}` needs an embedding file but none is configured"
                        )))
                    }
                    Some(_) => {}
                }
            }
            builtin
                .into_iter()
                .filter(|s| names.contains(&s.lf_id))
                .collect()
        }
    };

    let mut pool: Vec<LabelingFunction> = specs
        .into_iter()
        .map(|s| LabelingFunction::unfitted(s, num_classes))
        .collect();
    let mut names: HashSet<String> = pool.iter().map(|lf| lf.id().to_string()).collect();
    for ext in &config.external {
        if !names.insert(ext.name.clone()) {
            return Err(Error::Config(format!(
                "duplicate labeling function name `{}`",
                ext.name
            )));
        }
        pool.push(LabelingFunction::unfitted(
            LfSpec {
                lf_id: ext.name.clone(),
                kind: LfKind::External,
                channel: None,
                algorithm: None,
            },
            num_classes,
        ));
    }
    Ok(pool)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HpSearchSpec {
    pub grid: Vec<HyperParams>,
    pub folds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best: HyperParams,
    /// Mean fold accuracy; `None` when cross-validation was skipped.
    pub cv_score: Option<f64>,
    pub folds_used: usize,
    /// Mean fold accuracy of every candidate, in grid order.
    pub candidate_scores: Vec<f64>,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(
    labels: &[usize],
    num_classes: usize,
    folds: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = seeded_rng(seed, 0xf01d);
    let mut assignment = vec![0; labels.len()];
    for class in 0..num_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (k, row) in rows.into_iter().enumerate() {
            assignment[row] = k % folds;
        }
    }
    assignment
}

/// Exhaustive grid search by stratified K-fold accuracy.
///
/// K is clamped to the smallest per-class count (floor 2); when even two
/// folds are impossible, the first candidate is returned unscored.
/// Ties keep the earlier grid entry.
pub fn tune_hyperparameters(
    spec: &HpSearchSpec,
    x: &[SparseVector],
    y: &[usize],
    num_classes: usize,
    seed: u64,
) -> Result<TuneResult> {
    let first = *spec
        .grid
        .first()
        .ok_or_else(|| Error::Config("empty hyper-parameter grid".into()))?;
    let mut counts = vec![0usize; num_classes];
    y.iter().for_each(|&l| counts[l] += 1);
    let min_count = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let folds = spec.folds.max(2).min(min_count);
    if folds < 2 {
        warn!("a class has fewer than 2 samples; skipping cross-validation");
        return Ok(TuneResult {
            best: first,
            cv_score: None,
            folds_used: 0,
            candidate_scores: Vec::new(),
        });
    }
    if folds < spec.folds {
        warn!(
            "reducing cross-validation folds from {} to {folds}",
            spec.folds
        );
    }

    let assignment = stratified_folds(y, num_classes, folds, seed);
    let candidate_scores = spec
        .grid
        .iter()
        .map(|hp| {
            let mut total = 0.0;
            for fold in 0..folds {
                let (mut tx, mut ty, mut vx, mut vy) =
                    (Vec::new(), Vec::new(), Vec::new(), Vec::new());
                for (i, &f) in assignment.iter().enumerate() {
                    if f == fold {
                        vx.push(x[i].clone());
                        vy.push(y[i]);
                    } else {
                        tx.push(x[i].clone());
                        ty.push(y[i]);
                    }
                }
                let model = hp.fit(&tx, &ty, num_classes)?;
                total += accuracy(&model, &vx, &vy);
            }
            Ok(total / folds as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (i, &score) in candidate_scores.iter().enumerate() {
        if score > candidate_scores[best] {
            best = i;
        }
    }
    Ok(TuneResult {
        best: spec.grid[best],
        cv_score: Some(candidate_scores[best]),
        folds_used: folds,
        candidate_scores,
    })
}

fn accuracy(model: &Model, x: &[SparseVector], y: &[usize]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let hits = x
        .iter()
        .zip(y)
        .filter(|(xi, &yi)| model.predict(xi) == yi)
        .count();
    hits as f64 / x.len() as f64
}

/// Tunes and fits a classifier LF on `train`.
pub fn fit_classifier_lf(
    lf: &mut LabelingFunction,
    features: &FeatureSpace,
    train: &LabeledDataset,
    folds: usize,
    seed: u64,
) -> Result<()> {
    let channel = lf.channel()?;
    let algorithm = lf
        .spec
        .algorithm
        .ok_or_else(|| Error::Config(format!("`{}` has no algorithm", lf.id())))?;
    if !algorithm.supports(channel) {
        return Err(Error::ChannelUnsupported {
            algorithm: algorithm.as_str().into(),
            channel: channel.as_str().into(),
        });
    }
    let x = features.featurize_all(channel, train.docs())?;
    let spec = HpSearchSpec {
        grid: algorithm.default_grid(),
        folds,
    };
    let tuned = tune_hyperparameters(&spec, &x, train.labels(), train.num_classes(), seed)?;
    let model = tuned.best.fit(&x, train.labels(), train.num_classes())?;
    lf.state = Some(FittedState::Classifier {
        hyperparams: tuned.best,
        cv_score: tuned.cv_score,
        model,
    });
    Ok(())
}

/// Fits a similarity LF: references are `labeled`, and the abstention
/// threshold is the 10th percentile of best-match similarities over
/// `unlabeled`, frozen at fit time.
pub fn fit_similarity_lf(
    lf: &mut LabelingFunction,
    features: &FeatureSpace,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
) -> Result<()> {
    if unlabeled.is_empty() {
        return Err(Error::EmptyUnlabeledSet);
    }
    let channel = lf.channel()?;
    let references = features.featurize_all(channel, labeled.docs())?;
    let labels = labeled.labels().to_vec();
    let class_counts = labeled.class_counts();
    let sims = unlabeled
        .docs()
        .par_iter()
        .map(|doc| {
            let x = features.featurize(channel, doc)?;
            Ok(nearest_label(&x, &references, &labels, &class_counts)?.1)
        })
        .collect::<Result<Vec<f64>>>()?;
    let threshold = percentile(&sims, SIMILARITY_ABSTAIN_PERCENTILE).unwrap_or(0.0);
    lf.state = Some(FittedState::Similarity {
        references,
        labels,
        class_counts,
        threshold,
    });
    Ok(())
}

#[derive(Deserialize)]
struct VoteRecord {
    id: String,
    vote: i64,
}

/// Reads an external vote file (`{"id": ..., "vote": ...}` per line).
/// Documents missing from the file abstain.
pub fn load_external_lf(
    name: &str,
    path: &Path,
    unlabeled: &UnlabeledDataset,
    num_classes: usize,
) -> Result<LabelingFunction> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut votes = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let malformed = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: VoteRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.vote < -1 || record.vote >= num_classes as i64 {
            return Err(Error::VoteOutOfRange {
                id: record.id,
                vote: record.vote,
                num_classes,
            });
        }
        if votes
            .insert(record.id.clone(), record.vote as i32)
            .is_some()
        {
            return Err(malformed(format!("duplicate id `{}`", record.id)));
        }
    }
    let covered = unlabeled
        .docs()
        .iter()
        .filter(|d| votes.contains_key(&d.id))
        .count();
    if covered < unlabeled.len() {
        info!(
            "external votes `{name}` cover {covered} of {} unlabeled documents",
            unlabeled.len()
        );
    }
    Ok(LabelingFunction {
        spec: LfSpec {
            lf_id: name.to_string(),
            kind: LfKind::External,
            channel: None,
            algorithm: None,
        },
        num_classes,
        state: Some(FittedState::External { votes }),
    })
}

/// Fills external LFs of `pool` from their configured vote files.
pub fn attach_external_votes(
    pool: &mut [LabelingFunction],
    config: &PoolConfig,
    unlabeled: &UnlabeledDataset,
) -> Result<()> {
    for ext in &config.external {
        let lf = pool
            .iter_mut()
            .find(|lf| lf.id() == ext.name)
            .ok_or_else(|| Error::Config(format!("no pool slot for external `{}`", ext.name)))?;
        *lf = load_external_lf(&ext.name, &ext.path, unlabeled, lf.num_classes)
            .map_err(|e| e.in_lf(&ext.name))?;
    }
    Ok(())
}

/// Fits every trainable LF of the pool, in parallel.
pub fn fit_pool(
    pool: &mut [LabelingFunction],
    features: &FeatureSpace,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    folds: usize,
    seed: u64,
) -> Result<()> {
    pool.par_iter_mut().try_for_each(|lf| {
        let id = lf.id().to_string();
        lf.fit(features, labeled, unlabeled, folds, seed)
            .map_err(|e| e.in_lf(&id))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfScore {
    pub lf_id: String,
    pub pool_index: usize,
    pub dev_accuracy: f64,
    pub rank: usize,
}

/// Scores each LF by accuracy on a held-out dev split (abstain counts as
/// wrong), ranks them, and refits the pool on the complete labeled set.
///
/// Ranks sort by accuracy descending, ties to the earlier pool index.
pub fn score_and_rank_lfs(
    pool: &mut [LabelingFunction],
    features: &FeatureSpace,
    labeled: &LabeledDataset,
    unlabeled: &UnlabeledDataset,
    config: &PoolConfig,
    seed: u64,
) -> Result<Vec<LfScore>> {
    let (train, dev) = split_train_dev(labeled, config.split_ratio, seed)?;
    fit_pool(pool, features, &train, unlabeled, config.folds, seed)?;
    let accuracies = pool
        .par_iter()
        .map(|lf| {
            if dev.is_empty() {
                return Ok(0.0);
            }
            let votes = lf
                .vote_all(features, dev.docs())
                .map_err(|e| e.in_lf(lf.id()))?;
            let hits = votes
                .iter()
                .zip(dev.labels())
                .filter(|(&v, &y)| v >= 0 && v as usize == y)
                .count();
            Ok(hits as f64 / dev.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    fit_pool(pool, features, labeled, unlabeled, config.folds, seed)?;
    Ok(rank_scores(pool, &accuracies))
}

pub fn rank_scores(pool: &[LabelingFunction], accuracies: &[f64]) -> Vec<LfScore> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]).then(a.cmp(&b)));
    let mut scores: Vec<LfScore> = pool
        .iter()
        .enumerate()
        .map(|(i, lf)| LfScore {
            lf_id: lf.id().to_string(),
            pool_index: i,
            dev_accuracy: accuracies[i],
            rank: 0,
        })
        .collect();
    for (rank, &i) in order.iter().enumerate() {
        scores[i].rank = rank;
    }
    scores
}

const MANIFEST: &str = "manifest.json";
const FEATURES: &str = "features.json";

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    spec: LfSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyperparams: Option<HyperParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cv_score: Option<f64>,
    param_file: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    num_classes: usize,
    lfs: Vec<ManifestEntry>,
    scores: Vec<LfScore>,
}

#[derive(Serialize, Deserialize)]
struct StoredFeatures {
    count: Vectorizer,
    tfidf: Vectorizer,
}

/// A fitted pool as persisted on disk.
#[derive(Clone, Debug)]
pub struct StoredPool {
    pub pool: Vec<LabelingFunction>,
    pub scores: Vec<LfScore>,
    pub features: FeatureSpace,
}

/// Writes `manifest.json`, `features.json` and one parameter file per LF.
pub fn save_pool(
    dir: &Path,
    pool: &[LabelingFunction],
    scores: &[LfScore],
    features: &FeatureSpace,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    for (i, lf) in pool.iter().enumerate() {
        let state = lf
            .state
            .as_ref()
            .ok_or_else(|| Error::NotFitted(lf.id().to_string()))?;
        let param_file = format!(
            "lf_{i:02}_{}.json",
            lf.id()
                .replace(|c: char| !c.is_alphanumeric() && c != '-', "_")
        );
        write_json(&dir.join(&param_file), state)?;
        let (hyperparams, cv_score) = match state {
            FittedState::Classifier {
                hyperparams,
                cv_score,
                ..
            } => (Some(*hyperparams), *cv_score),
            _ => (None, None),
        };
        entries.push(ManifestEntry {
            spec: lf.spec.clone(),
            hyperparams,
            cv_score,
            param_file,
        });
    }
    let num_classes = pool.first().map_or(0, |lf| lf.num_classes);
    write_json(
        &dir.join(MANIFEST),
        &Manifest {
            num_classes,
            lfs: entries,
            scores: scores.to_vec(),
        },
    )?;
    write_json(
        &dir.join(FEATURES),
        &StoredFeatures {
            count: features.count.clone(),
            tfidf: features.tfidf.clone(),
        },
    )
}

/// Reads a pool written by [`save_pool`]; embeddings are re-attached by the caller.
pub fn load_pool(
    dir: &Path,
    embeddings: Option<crate::features::EmbeddingTable>,
) -> Result<StoredPool> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let stored: StoredFeatures = read_json(&dir.join(FEATURES))?;
    let pool = manifest
        .lfs
        .into_iter()
        .map(|entry| {
            let state: FittedState = read_json(&dir.join(&entry.param_file))?;
            Ok(LabelingFunction {
                spec: entry.spec,
                num_classes: manifest.num_classes,
                state: Some(state),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StoredPool {
        pool,
        scores: manifest.scores,
        features: FeatureSpace {
            count: stored.count,
            tfidf: stored.tfidf,
            embeddings,
        },
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::EmbeddingTable;
    use proptest::prelude::*;

    fn labeled(rows: &[(&str, usize)], num_classes: usize) -> LabeledDataset {
        let docs = rows
            .iter()
            .enumerate()
            .map(|(i, (t, _))| Document::new(format!("x{i}"), *t))
            .collect();
        LabeledDataset::new(docs, rows.iter().map(|r| r.1).collect(), num_classes).unwrap()
    }

    fn unlabeled(texts: &[&str]) -> UnlabeledDataset {
        UnlabeledDataset::new(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document::new(format!("u{i}"), *t))
                .collect(),
        )
        .unwrap()
    }

    fn space(x: &LabeledDataset, u: &UnlabeledDataset) -> FeatureSpace {
        let corpus: Vec<Document> = x.docs().iter().chain(u.docs()).cloned().collect();
        FeatureSpace::fit(&corpus, None).unwrap()
    }

    fn ext(name: &str) -> ExternalVotes {
        ExternalVotes {
            name: name.into(),
            path: PathBuf::from(format!("{name}.jsonl")),
        }
    }

    #[test]
    fn default_pool_sizes() {
        let cfg = PoolConfig::default();
        assert_eq!(make_default_pool(&cfg, false, 2).unwrap().len(), 8);
        let cfg = PoolConfig {
            external: vec![ext("bert"), ext("electra"), ext("deberta")],
            ..PoolConfig::default()
        };
        let pool = make_default_pool(&cfg, true, 2).unwrap();
        assert_eq!(pool.len(), 15);
        let ids: Vec<&str> = pool.iter().map(|lf| lf.id()).collect();
        assert_eq!(
            ids,
            vec![
                "count-logreg",
                "count-nb",
                "count-centroid",
                "tfidf-logreg",
                "tfidf-nb",
                "tfidf-centroid",
                "count-sim",
                "tfidf-sim",
                "emb-logreg",
                "emb-gnb",
                "emb-centroid",
                "emb-sim",
                "bert",
                "electra",
                "deberta"
            ]
        );
    }

    #[test]
    fn pool_config_errors() {
        let dup = PoolConfig {
            external: vec![ext("a"), ext("a")],
            ..PoolConfig::default()
        };
        assert!(matches!(
            make_default_pool(&dup, false, 2),
            Err(Error::Config(_))
        ));
        let unknown = PoolConfig {
            include: Some(vec!["count-svm".into()]),
            ..PoolConfig::default()
        };
        assert!(matches!(
            make_default_pool(&unknown, false, 2),
            Err(Error::Config(_))
        ));
        let subset = PoolConfig {
            include: Some(vec!["tfidf-sim".into(), "count-nb".into()]),
            ..PoolConfig::default()
        };
        let ids: Vec<String> = make_default_pool(&subset, false, 2)
            .unwrap()
            .iter()
            .map(|lf| lf.id().to_string())
            .collect();
        assert_eq!(ids, vec!["count-nb", "tfidf-sim"]);
    }

    #[test]
    fn single_candidate_grid() {
        let x: Vec<SparseVector> = (0..6)
            .map(|i| SparseVector::from_dense(&[i as f64, 1.0]))
            .collect();
        let y = [0, 0, 0, 1, 1, 1];
        let spec = HpSearchSpec {
            grid: vec![HyperParams::Centroid],
            folds: 3,
        };
        let r = tune_hyperparameters(&spec, &x, &y, 2, 0).unwrap();
        assert_eq!(r.best, HyperParams::Centroid);
        assert!(r.cv_score.is_some());
    }

    #[test]
    fn folds_clamped_to_min_class_count() {
        let x: Vec<SparseVector> = (0..8)
            .map(|i| SparseVector::from_dense(&[i as f64, 1.0]))
            .collect();
        let y = [0, 0, 0, 1, 1, 1, 1, 1];
        let spec = HpSearchSpec {
            grid: vec![HyperParams::Centroid],
            folds: 5,
        };
        assert_eq!(
            tune_hyperparameters(&spec, &x, &y, 2, 0)
                .unwrap()
                .folds_used,
            3
        );
        let y1 = [0, 1, 1, 1, 1, 1, 1, 1];
        let r = tune_hyperparameters(&spec, &x, &y1, 2, 0).unwrap();
        assert_eq!((r.folds_used, r.cv_score), (0, None));
    }

    #[test]
    fn grid_picks_strictly_better_candidate() {
        // Two well-separated, imbalanced clusters. Nearest-centroid
        // separates them; multinomial NB with a huge alpha collapses to the
        // prior and always predicts the majority class.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..12 {
            x.push(SparseVector::from_dense(&[5.0 + i as f64 * 0.1, 0.1]));
            y.push(0);
        }
        for i in 0..8 {
            x.push(SparseVector::from_dense(&[0.1, 5.0 + i as f64 * 0.1]));
            y.push(1);
        }
        let grid = vec![
            HyperParams::NaiveBayes { alpha: 1e6 },
            HyperParams::Centroid,
        ];
        // Oracle: evaluate each candidate directly with the same folds.
        let folds = stratified_folds(&y, 2, 5, 9);
        let direct: Vec<f64> = grid
            .iter()
            .map(|hp| {
                (0..5)
                    .map(|f| {
                        let tr: Vec<usize> = (0..x.len()).filter(|&i| folds[i] != f).collect();
                        let te: Vec<usize> = (0..x.len()).filter(|&i| folds[i] == f).collect();
                        let m = hp
                            .fit(
                                &tr.iter().map(|&i| x[i].clone()).collect::<Vec<_>>(),
                                &tr.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                                2,
                            )
                            .unwrap();
                        te.iter().filter(|&&i| m.predict(&x[i]) == y[i]).count() as f64
                            / te.len() as f64
                    })
                    .sum::<f64>()
                    / 5.0
            })
            .collect();
        assert!(direct[1] > direct[0]);
        let r = tune_hyperparameters(&HpSearchSpec { grid, folds: 5 }, &x, &y, 2, 9).unwrap();
        assert_eq!(r.best, HyperParams::Centroid);
        assert_eq!(r.candidate_scores, direct);
    }

    #[test]
    fn similarity_exact_match() {
        let x = labeled(
            &[
                ("apple pie", 0),
                ("apple tart", 0),
                ("apple cake", 0),
                ("pear", 1),
                ("kiwi lime", 2),
            ],
            3,
        );
        let u = unlabeled(&["kiwi lime", "pear pear", "zzz"]);
        let features = space(&x, &u);
        let mut lf = LabelingFunction::unfitted(LfSpec::similarity(FeatureChannel::Count), 3);
        fit_similarity_lf(&mut lf, &features, &x, &u).unwrap();
        assert_eq!(lf.vote(&features, &u.docs()[0]).unwrap(), 2);
        let (_, sim) = lf
            .nearest_label(&features.count.transform("kiwi lime"))
            .unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_tie_uses_class_frequency() {
        // Two equally near neighbours labeled 0 and 1; X has 3 of class 0.
        let refs = vec![
            SparseVector::from_dense(&[1.0, 0.0, 0.0]),
            SparseVector::from_dense(&[0.0, 1.0, 0.0]),
            SparseVector::from_dense(&[0.0, 0.0, 1.0]),
            SparseVector::from_dense(&[0.0, 0.0, 1.0]),
        ];
        let labels = vec![1, 0, 0, 0];
        let q = SparseVector::from_dense(&[1.0, 1.0, 0.0]);
        assert_eq!(nearest_label(&q, &refs, &labels, &[3, 1]).unwrap().0, 0);
        assert_eq!(nearest_label(&q, &refs, &labels, &[1, 1]).unwrap().0, 0);
        assert_eq!(nearest_label(&q, &refs, &labels, &[1, 3]).unwrap().0, 1);
    }

    #[test]
    fn similarity_abstains_below_threshold() {
        let x = labeled(&[("a b c", 0), ("d e f", 1)], 2);
        let texts: Vec<String> = (0..20)
            .map(|i| {
                if i < 2 {
                    format!("q{i} r{i}")
                } else {
                    "a b c d".to_string()
                }
            })
            .collect();
        let u = unlabeled(&texts.iter().map(String::as_str).collect::<Vec<_>>());
        let features = space(&x, &u);
        let mut lf = LabelingFunction::unfitted(LfSpec::similarity(FeatureChannel::Tfidf), 2);
        fit_similarity_lf(&mut lf, &features, &x, &u).unwrap();
        let tau = lf.similarity_threshold().unwrap();
        assert!(tau > 0.0);
        assert_eq!(lf.vote(&features, &u.docs()[0]).unwrap(), ABSTAIN);
        assert_eq!(lf.vote(&features, &u.docs()[5]).unwrap(), 0);
    }

    #[test]
    fn similarity_ties_at_tau_keep_voting() {
        let x = labeled(&[("a b c", 0), ("d e f", 1)], 2);
        let texts: Vec<&str> = (0..40)
            .map(|i| if i < 10 { "a x" } else { "a b c" })
            .collect();
        let u = unlabeled(&texts);
        let features = space(&x, &u);
        let mut lf = LabelingFunction::unfitted(LfSpec::similarity(FeatureChannel::Count), 2);
        fit_similarity_lf(&mut lf, &features, &x, &u).unwrap();
        let tau = lf.similarity_threshold().unwrap();
        let sims: Vec<f64> = u
            .docs()
            .iter()
            .map(|d| lf.best_similarity(&features, d).unwrap())
            .collect();
        let below = sims.iter().filter(|&&s| s < tau).count();
        let at_or_below = sims.iter().filter(|&&s| s <= tau).count();
        assert_eq!(below, 0);
        assert_eq!(at_or_below, 10);
        assert!(lf
            .vote_all(&features, u.docs())
            .unwrap()
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn similarity_needs_unlabeled() {
        let x = labeled(&[("a", 0), ("b", 1)], 2);
        let features = space(&x, &unlabeled(&["a"]));
        let mut lf = LabelingFunction::unfitted(LfSpec::similarity(FeatureChannel::Count), 2);
        assert!(matches!(
            fit_similarity_lf(&mut lf, &features, &x, &UnlabeledDataset::default()),
            Err(Error::EmptyUnlabeledSet)
        ));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 10.0), Some(1.4));
        assert_eq!(percentile(&[], 10.0), None);
    }

    #[test]
    fn unfitted_vote_fails() {
        let lf = LabelingFunction::unfitted(LfSpec::similarity(FeatureChannel::Count), 2);
        let features = space(&labeled(&[("a", 0)], 1), &unlabeled(&["a"]));
        assert!(matches!(
            lf.vote(&features, &Document::new("z", "a")),
            Err(Error::NotFitted(_))
        ));
    }

    #[test]
    fn naive_bayes_on_embeddings_unsupported() {
        let x = labeled(&[("a", 0), ("b", 1)], 2);
        let u = unlabeled(&["c"]);
        let table = EmbeddingTable::new(
            x.docs()
                .iter()
                .chain(u.docs())
                .map(|d| (d.id.clone(), vec![1.0, -1.0])),
        )
        .unwrap();
        let corpus: Vec<Document> = x.docs().iter().chain(u.docs()).cloned().collect();
        let features = FeatureSpace::fit(&corpus, Some(table)).unwrap();
        let mut lf = LabelingFunction::unfitted(
            LfSpec::classifier(FeatureChannel::Embedding, Algorithm::NaiveBayes),
            2,
        );
        assert!(matches!(
            fit_classifier_lf(&mut lf, &features, &x, 5, 0),
            Err(Error::ChannelUnsupported { .. })
        ));
    }

    #[test]
    fn external_votes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        fs::write(
            &path,
            "{\"id\":\"u0\",\"vote\":1}\n{\"id\":\"u1\",\"vote\":-1}\n",
        )
        .unwrap();
        let u = unlabeled(&["a", "b", "c", "d"]);
        let lf = load_external_lf("ext", &path, &u, 2).unwrap();
        let features = space(&labeled(&[("a", 0)], 1), &u);
        let votes = lf.vote_all(&features, u.docs()).unwrap();
        assert_eq!(votes, vec![1, -1, -1, -1]);
        assert_eq!(votes, lf.vote_all(&features, u.docs()).unwrap());

        fs::write(&path, "{\"id\":\"u0\",\"vote\":2}\n").unwrap();
        assert!(matches!(
            load_external_lf("ext", &path, &u, 2),
            Err(Error::VoteOutOfRange { vote: 2, .. })
        ));
        fs::write(&path, "{\"id\":\"u0\"}\n").unwrap();
        assert!(matches!(
            load_external_lf("ext", &path, &u, 2),
            Err(Error::MalformedRecord { .. })
        ));
    }

    #[test]
    fn ranking_ties_follow_pool_order() {
        let pool = make_default_pool(&PoolConfig::default(), false, 2).unwrap();
        let acc = [0.5, 0.8, 0.8, 0.1, 0.0, 0.5, 0.9, 0.2];
        let scores = rank_scores(&pool, &acc);
        let ranks: Vec<usize> = scores.iter().map(|s| s.rank).collect();
        assert_eq!(ranks, vec![3, 1, 2, 6, 7, 4, 0, 5]);
    }

    #[test]
    fn scoring_counts_abstain_as_wrong() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        // Votes only on unlabeled ids: abstains on every dev sample.
        fs::write(&path, "{\"id\":\"u0\",\"vote\":1}\n").unwrap();
        let rows: Vec<(String, usize)> = (0..10)
            .map(|i| (format!("tok{} common", i % 2), i % 2))
            .collect();
        let x = labeled(
            &rows
                .iter()
                .map(|(t, l)| (t.as_str(), *l))
                .collect::<Vec<_>>(),
            2,
        );
        let u = unlabeled(&["tok0", "tok1 common", "common"]);
        let features = space(&x, &u);
        let cfg = PoolConfig {
            include: Some(vec!["count-centroid".into()]),
            external: vec![ExternalVotes {
                name: "silent".into(),
                path,
            }],
            ..PoolConfig::default()
        };
        let mut pool = make_default_pool(&cfg, false, 2).unwrap();
        attach_external_votes(&mut pool, &cfg, &u).unwrap();
        let scores = score_and_rank_lfs(&mut pool, &features, &x, &u, &cfg, 3).unwrap();
        assert_eq!(scores[1].dev_accuracy, 0.0);
        assert_eq!(scores[0].dev_accuracy, 1.0);
        assert_eq!(scores[0].rank, 0);
    }

    #[test]
    fn pool_persistence_round_trip() {
        let rows: Vec<(String, usize)> = (0..12)
            .map(|i| (format!("w{} x{}", i % 3, i), i % 3))
            .collect();
        let x = labeled(
            &rows
                .iter()
                .map(|(t, l)| (t.as_str(), *l))
                .collect::<Vec<_>>(),
            3,
        );
        let u = unlabeled(&["w0", "w1 x3", "w2 w2", "x9"]);
        let features = space(&x, &u);
        let cfg = PoolConfig::default();
        let mut pool = make_default_pool(&cfg, false, 3).unwrap();
        let scores = score_and_rank_lfs(&mut pool, &features, &x, &u, &cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_pool(dir.path(), &pool, &scores, &features).unwrap();
        let stored = load_pool(dir.path(), None).unwrap();
        assert_eq!(stored.pool, pool);
        assert_eq!(stored.scores, scores);
        for lf in &pool {
            assert_eq!(
                lf.vote_all(&features, u.docs()).unwrap(),
                stored
                    .pool
                    .iter()
                    .find(|s| s.id() == lf.id())
                    .unwrap()
                    .vote_all(&stored.features, u.docs())
                    .unwrap()
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn fitted_votes_in_range(seed in any::<u64>(), fuzz in prop::collection::vec("[a-h ]{0,16}", 1000)) {
            let rows: Vec<(String, usize)> = (0..15).map(|i| (format!("{} {} filler", ["a b", "c d", "e f"][i % 3], ["g", "h"][i % 2]), i % 3)).collect();
            let x = labeled(&rows.iter().map(|(t, l)| (t.as_str(), *l)).collect::<Vec<_>>(), 3);
            let u = unlabeled(&["a c", "d e f", "g", "h h", "b"]);
            let features = space(&x, &u);
            let cfg = PoolConfig::default();
            let mut pool = make_default_pool(&cfg, false, 3).unwrap();
            fit_pool(&mut pool, &features, &x, &u, 5, seed).unwrap();
            for lf in &pool {
                for (i, text) in fuzz.iter().enumerate() {
                    let v = lf.vote(&features, &Document::new(format!("f{i}"), text.clone())).unwrap();
                    prop_assert!((-1..3).contains(&v));
                    if lf.kind() == LfKind::Classifier {
                        prop_assert!(v >= 0);
                    }
                }
            }
        }

        #[test]
        fn ranks_are_sorted_permutation(acc in prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), 8)) {
            let pool = make_default_pool(&PoolConfig::default(), false, 2).unwrap();
            let scores = rank_scores(&pool, &acc);
            let mut by_rank = scores.clone();
            by_rank.sort_by_key(|s| s.rank);
            prop_assert!(by_rank.iter().enumerate().all(|(i, s)| s.rank == i));
            let mut expected: Vec<usize> = (0..8).collect();
            expected.sort_by(|&a, &b| acc[b].total_cmp(&acc[a]).then(a.cmp(&b)));
            prop_assert_eq!(by_rank.iter().map(|s| s.pool_index).collect::<Vec<_>>(), expected);
        }
    }
}
