//! Label matrices and the label models that turn them into probabilistic
//! labels: unweighted majority vote, Dawid–Skene EM, and a triplet-method
//! (closed-form moment matching) model in the style of FlyingSquid.
//!
//! Abstentions (`-1`) are missing observations everywhere: they never
//! count as votes and contribute nothing to any likelihood.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::argmax;
use crate::corpus::{Document, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::features::FeatureSpace;
use crate::lf::{LabelingFunction, ABSTAIN};

/// N×M votes in `[-1, C-1]`: one row per unlabeled sample, one column per LF.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    row_ids: Vec<String>,
    lf_ids: Vec<String>,
    num_classes: usize,
    entries: Vec<i32>,
}

impl LabelMatrix {
    pub fn new(
        row_ids: Vec<String>,
        lf_ids: Vec<String>,
        num_classes: usize,
        entries: Vec<i32>,
    ) -> Result<Self> {
        if lf_ids.is_empty() {
            return Err(Error::Validation(
                "label matrix needs at least one column".into(),
            ));
        }
        if entries.len() != row_ids.len() * lf_ids.len() {
            return Err(Error::DimensionMismatch {
                left: entries.len(),
                right: row_ids.len() * lf_ids.len(),
            });
        }
        if let Some(pos) = entries
            .iter()
            .position(|&v| v < ABSTAIN || v >= num_classes as i32)
        {
            return Err(Error::VoteOutOfRange {
                id: row_ids[pos / lf_ids.len()].clone(),
                vote: entries[pos] as i64,
                num_classes,
            });
        }
        Ok(LabelMatrix {
            row_ids,
            lf_ids,
            num_classes,
            entries,
        })
    }

    /// Builds from rows of votes with generated row and column ids.
    pub fn from_rows(rows: &[Vec<i32>], num_classes: usize) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Validation("ragged label matrix rows".into()));
        }
        LabelMatrix::new(
            (0..rows.len()).map(|j| format!("r{j}")).collect(),
            (0..m).map(|i| format!("lf{i}")).collect(),
            num_classes,
            rows.concat(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_lfs(&self) -> usize {
        self.lf_ids.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn lf_ids(&self) -> &[String] {
        &self.lf_ids
    }

    pub fn row(&self, j: usize) -> &[i32] {
        let m = self.n_lfs();
        &self.entries[j * m..(j + 1) * m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        self.entries.chunks(self.n_lfs())
    }

    pub fn column(&self, i: usize) -> Vec<i32> {
        self.rows().map(|r| r[i]).collect()
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<LabelMatrix> {
        let entries = self
            .rows()
            .flat_map(|r| columns.iter().map(move |&c| r[c]))
            .collect();
        LabelMatrix::new(
            self.row_ids.clone(),
            columns.iter().map(|&c| self.lf_ids[c].clone()).collect(),
            self.num_classes,
            entries,
        )
    }

    pub fn has_observation(&self) -> bool {
        self.entries.iter().any(|&v| v != ABSTAIN)
    }

    /// CSV with header `id,<lf ids...>`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(std::iter::once("id").chain(self.lf_ids.iter().map(String::as_str)))?;
        for (id, row) in self.row_ids.iter().zip(self.rows()) {
            let mut record = vec![id.clone()];
            record.extend(row.iter().map(i32::to_string));
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: &Path, num_classes: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let header = reader.headers()?.clone();
        if header.get(0) != Some("id") || header.len() < 2 {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: 1,
                message: "header must be `id,<lf ids...>`".into(),
            });
        }
        let lf_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            row_ids.push(record.get(0).unwrap_or_default().to_string());
            for cell in record.iter().skip(1) {
                entries.push(
                    cell.trim()
                        .parse::<i32>()
                        .map_err(|e| Error::MalformedRecord {
                            path: path.to_path_buf(),
                            line,
                            message: format!("`{cell}`: {e}"),
                        })?,
                );
            }
        }
        LabelMatrix::new(row_ids, lf_ids, num_classes, entries)
    }
}

/// Runs every LF over `unlabeled`; columns in pool order, computed in parallel.
pub fn build_label_matrix(
    pool: &[LabelingFunction],
    features: &FeatureSpace,
    unlabeled: &UnlabeledDataset,
) -> Result<LabelMatrix> {
    let num_classes = pool.first().map_or(0, LabelingFunction::num_classes);
    let columns = pool
        .par_iter()
        .map(|lf| {
            lf.vote_all(features, unlabeled.docs())
                .map_err(|e| e.in_lf(lf.id()))
        })
        .collect::<Result<Vec<Vec<i32>>>>()?;
    let n = unlabeled.len();
    let m = pool.len();
    let mut entries = vec![ABSTAIN; n * m];
    for (i, column) in columns.iter().enumerate() {
        for (j, &v) in column.iter().enumerate() {
            entries[j * m + i] = v;
        }
    }
    LabelMatrix::new(
        unlabeled.docs().iter().map(|d| d.id.clone()).collect(),
        pool.iter().map(|lf| lf.id().to_string()).collect(),
        num_classes,
        entries,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub probs: Vec<f64>,
    pub label: usize,
    pub score: f64,
    pub abstained: bool,
}

impl ProbRow {
    fn abstain(probs: Vec<f64>) -> Self {
        ProbRow {
            label: argmax(&probs),
            probs,
            score: 0.0,
            abstained: true,
        }
    }

    fn from_probs(probs: Vec<f64>) -> Self {
        let label = argmax(&probs);
        ProbRow {
            score: probs[label],
            label,
            probs,
            abstained: false,
        }
    }
}

/// Per-sample class distributions with hard labels and confidence scores.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ProbLabels {
    pub rows: Vec<ProbRow>,
}

#[derive(Serialize)]
struct ProbRecord<'a> {
    id: &'a str,
    probs: &'a [f64],
    label: usize,
    score: f64,
    abstained: bool,
}

impl ProbLabels {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// JSONL `{"id", "probs", "label", "score", "abstained"}` per row.
    pub fn save_jsonl(&self, path: &Path, ids: &[String]) -> Result<()> {
        let mut out = Vec::new();
        for (id, row) in ids.iter().zip(&self.rows) {
            serde_json::to_writer(
                &mut out,
                &ProbRecord {
                    id,
                    probs: &row.probs,
                    label: row.label,
                    score: row.score,
                    abstained: row.abstained,
                },
            )?;
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelModelKind {
    #[serde(rename = "mv")]
    MajorityVote,
    #[serde(rename = "dawid_skene")]
    DawidSkene,
    #[serde(rename = "flyingsquid")]
    FlyingSquid,
}

impl LabelModelKind {
    pub const ALL: [LabelModelKind; 3] = [
        LabelModelKind::MajorityVote,
        LabelModelKind::DawidSkene,
        LabelModelKind::FlyingSquid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelModelKind::MajorityVote => "mv",
            LabelModelKind::DawidSkene => "dawid_skene",
            LabelModelKind::FlyingSquid => "flyingsquid",
        }
    }
}

impl fmt::Display for LabelModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mv" | "majority_vote" => Ok(LabelModelKind::MajorityVote),
            "ds" | "dawid_skene" => Ok(LabelModelKind::DawidSkene),
            "fs" | "flyingsquid" => Ok(LabelModelKind::FlyingSquid),
            other => Err(Error::Config(format!("unknown label model `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Aggregates with the chosen model. `prior` is the labeled-set class
/// distribution, used for majority-vote ties and as triplet class balance.
pub fn aggregate(
    kind: LabelModelKind,
    matrix: &LabelMatrix,
    prior: &[f64],
    em: EmOptions,
) -> Result<ProbLabels> {
    match kind {
        LabelModelKind::MajorityVote => Ok(majority_vote(matrix, prior)),
        LabelModelKind::DawidSkene => Ok(dawid_skene(matrix, em)?.probs),
        LabelModelKind::FlyingSquid => {
            let params = match triplet_accuracies(matrix, prior) {
                Ok(params) => params,
                Err(Error::TooFewLfs(m)) => {
                    warn!("triplet model on {m} labeling functions: all accuracies set to 0");
                    TripletParams::uninformative(matrix.num_classes(), matrix.n_lfs(), prior)
                }
                Err(e) => return Err(e),
            };
            Ok(flyingsquid_posterior(matrix, &params))
        }
    }
}

/// Unweighted vote fractions among non-abstaining LFs.
///
/// Hard-label ties go to the class with larger prior, then the lower
/// index. Rows where every LF abstains are marked abstained, uniform, score 0.
pub fn majority_vote(matrix: &LabelMatrix, prior: &[f64]) -> ProbLabels {
    let c = matrix.num_classes();
    let rows = matrix
        .rows()
        .map(|row| {
            let mut counts = vec![0usize; c];
            for &v in row.iter().filter(|&&v| v != ABSTAIN) {
                counts[v as usize] += 1;
            }
            let total: usize = counts.iter().sum();
            if total == 0 {
                return ProbRow::abstain(vec![1.0 / c as f64; c]);
            }
            let mut label = 0;
            for k in 1..c {
                let better = counts[k] > counts[label]
                    || (counts[k] == counts[label] && prior.get(k) > prior.get(label));
                if better {
                    label = k;
                }
            }
            let probs: Vec<f64> = counts.iter().map(|&n| n as f64 / total as f64).collect();
            ProbRow {
                score: probs[label],
                label,
                probs,
                abstained: false,
            }
        })
        .collect();
    ProbLabels { rows }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DawidSkeneParams {
    pub class_prior: Vec<f64>,
    /// `confusion[lf][true class][emitted vote]`, each row stochastic.
    pub confusion: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct DawidSkeneFit {
    pub probs: ProbLabels,
    pub params: DawidSkeneParams,
    /// Observed-data log-likelihood of each successive parameter estimate.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const DS_SMOOTHING: f64 = 1e-6;

/// Dawid–Skene EM. Starts from majority-vote posteriors, alternates M and
/// E steps, and stops when no posterior entry moves by `tol` or more.
pub fn dawid_skene(matrix: &LabelMatrix, options: EmOptions) -> Result<DawidSkeneFit> {
    if !matrix.has_observation() {
        return Err(Error::DegenerateInput);
    }
    let c = matrix.num_classes();
    let mut posterior: Vec<Vec<f64>> = majority_vote(matrix, &vec![1.0 / c as f64; c])
        .rows
        .into_iter()
        .map(|r| r.probs)
        .collect();
    let mut params = ds_m_step(matrix, &posterior);
    let mut log_likelihood = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        let (next, ll) = ds_e_step(matrix, &params);
        log_likelihood.push(ll);
        let delta = posterior
            .iter()
            .flatten()
            .zip(next.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        posterior = next;
        params = ds_m_step(matrix, &posterior);
        if delta < options.tol {
            converged = true;
            break;
        }
    }
    let (final_posterior, ll) = ds_e_step(matrix, &params);
    log_likelihood.push(ll);
    Ok(DawidSkeneFit {
        probs: posterior_to_labels(matrix, final_posterior),
        params,
        log_likelihood,
        iterations,
        converged,
    })
}

/// Posterior under fixed Dawid–Skene parameters.
pub fn ds_posterior(matrix: &LabelMatrix, params: &DawidSkeneParams) -> ProbLabels {
    posterior_to_labels(matrix, ds_e_step(matrix, params).0)
}

/// Observed-data log-likelihood under fixed parameters.
pub fn ds_log_likelihood(matrix: &LabelMatrix, params: &DawidSkeneParams) -> f64 {
    ds_e_step(matrix, params).1
}

fn posterior_to_labels(matrix: &LabelMatrix, posterior: Vec<Vec<f64>>) -> ProbLabels {
    let rows = matrix
        .rows()
        .zip(posterior)
        .map(|(row, probs)| {
            if row.iter().all(|&v| v == ABSTAIN) {
                ProbRow::abstain(probs)
            } else {
                ProbRow::from_probs(probs)
            }
        })
        .collect();
    ProbLabels { rows }
}

fn ds_e_step(matrix: &LabelMatrix, params: &DawidSkeneParams) -> (Vec<Vec<f64>>, f64) {
    let log_prior: Vec<f64> = params.class_prior.iter().map(|p| p.ln()).collect();
    let log_conf: Vec<Vec<Vec<f64>>> = params
        .confusion
        .iter()
        .map(|m| {
            m.iter()
                .map(|r| r.iter().map(|p| p.ln()).collect())
                .collect()
        })
        .collect();
    let per_row: Vec<(Vec<f64>, f64)> = matrix
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| {
            let mut log_joint = log_prior.clone();
            for (lf, &v) in row.iter().enumerate() {
                if v != ABSTAIN {
                    for (k, lj) in log_joint.iter_mut().enumerate() {
                        *lj += log_conf[lf][k][v as usize];
                    }
                }
            }
            let lse = crate::classifier::log_sum_exp(&log_joint);
            (log_joint.iter().map(|l| (l - lse).exp()).collect(), lse)
        })
        .collect();
    // Fixed-order reduction keeps the likelihood bit-reproducible.
    let ll = per_row.iter().map(|(_, l)| l).sum();
    (per_row.into_iter().map(|(p, _)| p).collect(), ll)
}

fn ds_m_step(matrix: &LabelMatrix, posterior: &[Vec<f64>]) -> DawidSkeneParams {
    let c = matrix.num_classes();
    let m = matrix.n_lfs();
    let n = matrix.n_rows().max(1) as f64;
    let mut class_prior = vec![0.0; c];
    for t in posterior {
        for (p, tk) in class_prior.iter_mut().zip(t) {
            *p += tk;
        }
    }
    class_prior.iter_mut().for_each(|p| *p /= n);

    let mut confusion = vec![vec![vec![DS_SMOOTHING; c]; c]; m];
    for (row, t) in matrix.rows().zip(posterior) {
        for (lf, &v) in row.iter().enumerate() {
            if v != ABSTAIN {
                for (k, &tk) in t.iter().enumerate() {
                    confusion[lf][k][v as usize] += tk;
                }
            }
        }
    }
    for r in confusion.iter_mut().flatten() {
        let total: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x /= total);
    }
    DawidSkeneParams {
        class_prior,
        confusion,
    }
}

/// Smallest admissible distance of a triplet accuracy from ±1.
pub const TRIPLET_DELTA: f64 = 1e-3;
/// Pair moments smaller than this in magnitude are not used as denominators.
pub const TRIPLET_MIN_MOMENT: f64 = 1e-4;
/// Pairs must be co-observed on at least this many rows.
pub const TRIPLET_MIN_ROWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletParams {
    /// `accuracies[class][lf]`: signed accuracy on the one-vs-rest task.
    pub accuracies: Vec<Vec<f64>>,
    pub class_balance: Vec<f64>,
}

impl TripletParams {
    pub fn uninformative(num_classes: usize, n_lfs: usize, class_balance: &[f64]) -> Self {
        TripletParams {
            accuracies: vec![vec![0.0; n_lfs]; num_classes],
            class_balance: class_balance.to_vec(),
        }
    }
}

/// Signed one-vs-rest encoding of a vote: +1 for `class`, -1 for any other
/// class, `None` for abstain.
pub fn binarize(vote: i32, class: usize) -> Option<f64> {
    match vote {
        ABSTAIN => None,
        v if v as usize == class => Some(1.0),
        _ => Some(-1.0),
    }
}

/// Pairwise moments `mean(λᵢλⱼ)` over co-observed rows, with the counts
/// of those rows. Unobserved pairs have moment 0 and count 0.
pub fn pairwise_moments(matrix: &LabelMatrix, class: usize) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let m = matrix.n_lfs();
    let mut sums = vec![vec![0.0; m]; m];
    let mut counts = vec![vec![0usize; m]; m];
    let mut signed = vec![None; m];
    for row in matrix.rows() {
        for (s, &v) in signed.iter_mut().zip(row) {
            *s = binarize(v, class);
        }
        for i in 0..m {
            let Some(a) = signed[i] else { continue };
            for j in 0..m {
                if let Some(b) = signed[j] {
                    sums[i][j] += a * b;
                    counts[i][j] += 1;
                }
            }
        }
    }
    let moments = sums
        .iter()
        .zip(&counts)
        .map(|(s, n)| {
            s.iter()
                .zip(n)
                .map(|(&x, &k)| if k > 0 { x / k as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    (moments, counts)
}

/// Closed-form triplet estimate for every LF from a moment matrix.
///
/// For LF `i`, each pair `j < k` (both ≠ `i`) yields
/// `sqrt(|Mᵢⱼ·Mᵢₖ / Mⱼₖ|)` when `|Mⱼₖ| ≥ 1e-4` and all three pairs are
/// co-observed on at least `min_rows` rows. The estimate is the median of
/// these, clipped to `[δ, 1-δ]`; LFs without a usable triplet get 0.
pub fn triplet_from_moments(
    moments: &[Vec<f64>],
    counts: &[Vec<usize>],
    min_rows: usize,
) -> Vec<f64> {
    let m = moments.len();
    (0..m)
        .map(|i| {
            let mut estimates = Vec::new();
            for j in 0..m {
                for k in (j + 1)..m {
                    if j == i || k == i {
                        continue;
                    }
                    let observed = counts[i][j] >= min_rows
                        && counts[i][k] >= min_rows
                        && counts[j][k] >= min_rows;
                    if !observed || moments[j][k].abs() < TRIPLET_MIN_MOMENT {
                        continue;
                    }
                    estimates.push((moments[i][j] * moments[i][k] / moments[j][k]).abs().sqrt());
                }
            }
            match median(&mut estimates) {
                Some(a) => a.clamp(TRIPLET_DELTA, 1.0 - TRIPLET_DELTA),
                None => 0.0,
            }
        })
        .collect()
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Per-class one-vs-rest triplet accuracies. Fails with `TooFewLfs` when
/// fewer than three LFs are present.
pub fn triplet_accuracies(matrix: &LabelMatrix, class_balance: &[f64]) -> Result<TripletParams> {
    if matrix.n_lfs() < 3 {
        return Err(Error::TooFewLfs(matrix.n_lfs()));
    }
    let accuracies = (0..matrix.num_classes())
        .into_par_iter()
        .map(|class| {
            let (moments, counts) = pairwise_moments(matrix, class);
            triplet_from_moments(&moments, &counts, TRIPLET_MIN_ROWS)
        })
        .collect();
    Ok(TripletParams {
        accuracies,
        class_balance: class_balance.to_vec(),
    })
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Independent-voter posterior per one-vs-rest task, renormalized across
/// classes. A voter with signed accuracy `a` is right with probability
/// `(1 + a) / 2`. Rows where every LF abstains return the class balance.
pub fn flyingsquid_posterior(matrix: &LabelMatrix, params: &TripletParams) -> ProbLabels {
    let c = matrix.num_classes();
    let weights: Vec<Vec<f64>> = params
        .accuracies
        .iter()
        .map(|accs| accs.iter().map(|&a| logit((1.0 + a) / 2.0)).collect())
        .collect();
    let balance_total: f64 = params.class_balance.iter().sum();
    let balance: Vec<f64> = params
        .class_balance
        .iter()
        .map(|b| b / balance_total)
        .collect();
    let rows = matrix
        .rows()
        .map(|row| {
            if row.iter().all(|&v| v == ABSTAIN) {
                return ProbRow::abstain(balance.clone());
            }
            let positive: Vec<f64> = (0..c)
                .map(|class| {
                    let log_odds = logit(balance[class])
                        + row
                            .iter()
                            .zip(&weights[class])
                            .filter_map(|(&v, w)| binarize(v, class).map(|s| s * w))
                            .sum::<f64>();
                    1.0 / (1.0 + (-log_odds).exp())
                })
                .collect();
            let total: f64 = positive.iter().sum();
            ProbRow::from_probs(positive.iter().map(|p| p / total).collect())
        })
        .collect();
    ProbLabels { rows }
}

/// A weakly labeled sample kept by [`threshold_filter`].
#[derive(Clone, Debug, PartialEq)]
pub struct WeakSample {
    pub doc: Document,
    pub label: usize,
    pub score: f64,
}

/// The weak training set U′.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeakDataset {
    pub samples: Vec<WeakSample>,
    pub num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct WeakRecord {
    id: String,
    text: String,
    label: usize,
    score: f64,
}

impl WeakDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.doc.id.as_str())
    }

    pub fn to_labeled(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.samples.iter().map(|s| s.doc.clone()).collect(),
            self.samples.iter().map(|s| s.label).collect(),
            self.num_classes,
        )
    }

    /// JSONL `{"id", "text", "label", "score"}`.
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for s in &self.samples {
            let record = WeakRecord {
                id: s.doc.id.clone(),
                text: s.doc.text.clone(),
                label: s.label,
                score: s.score,
            };
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            out.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load_jsonl(path: &Path, num_classes: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut samples = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let r: WeakRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if r.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    id: r.id,
                    label: r.label as i64,
                    num_classes,
                });
            }
            samples.push(WeakSample {
                doc: Document::new(r.id, r.text),
                label: r.label,
                score: r.score,
            });
        }
        Ok(WeakDataset {
            samples,
            num_classes,
        })
    }
}

/// Keeps non-abstained rows with `score ≥ t`, in input order.
pub fn threshold_filter(
    probs: &ProbLabels,
    unlabeled: &UnlabeledDataset,
    t: f64,
    num_classes: usize,
) -> Result<WeakDataset> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Validation(format!("threshold {t} outside [0, 1]")));
    }
    if probs.len() != unlabeled.len() {
        return Err(Error::DimensionMismatch {
            left: probs.len(),
            right: unlabeled.len(),
        });
    }
    let samples: Vec<WeakSample> = probs
        .rows
        .iter()
        .zip(unlabeled.docs())
        .filter(|(row, _)| !row.abstained && row.score >= t)
        .map(|(row, doc)| WeakSample {
            doc: doc.clone(),
            label: row.label,
            score: row.score,
        })
        .collect();
    if samples.is_empty() {
        warn!("no sample reaches confidence threshold {t}");
    }
    Ok(WeakDataset {
        samples,
        num_classes,
    })
}
