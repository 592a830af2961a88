//! Two-stage greedy configuration search.
//!
//! Stage 1 tries every (label model, threshold) pair with all LFs. Stage 2
//! keeps the winning model and threshold and tries the top `⌈q·M⌉` LFs for
//! each quantile `q`. Each configuration is scored by training a cheap
//! proxy classifier on the filtered weak labels and measuring its accuracy
//! on the gold labeled set.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, LogisticRegression};
use crate::corpus::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::features::{SparseVector, Vectorizer};
use crate::labelmodel::{
    aggregate, EmOptions, LabelMatrix, LabelModelKind, ProbLabels, WeakDataset,
};
use crate::lf::LfScore;

/// L2 strength of the proxy logistic regression.
pub const PROXY_L2: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub models: Vec<LabelModelKind>,
    pub thresholds: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub em: EmOptions,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            models: LabelModelKind::ALL.to_vec(),
            thresholds: vec![0.0, 0.5, 0.7, 0.9],
            quantiles: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            em: EmOptions::default(),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.thresholds.is_empty() || self.quantiles.is_empty() {
            return Err(Error::Config(
                "search models, thresholds and quantiles must be non-empty".into(),
            ));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
        }
        if let Some(q) = self.quantiles.iter().find(|&&q| q.is_nan() || q <= 0.0 || q > 1.0) {
            return Err(Error::Config(format!("quantile {q} outside (0, 1]")));
        }
        if self.em.max_iter == 0 || self.em.tol.is_nan() || self.em.tol <= 0.0 {
            return Err(Error::Config("EM needs max_iter ≥ 1 and tol > 0".into()));
        }
        Ok(())
    }

    /// Quantiles with 1.0 appended when missing, so stage 2 can never do
    /// worse than stage 1.
    pub fn effective_quantiles(&self) -> Vec<f64> {
        let mut q = self.quantiles.clone();
        if !q.contains(&1.0) {
            warn!("quantile 1.0 missing from the search space; adding it");
            q.push(1.0);
        }
        q
    }
}

/// Number of LFs kept at quantile `q` of a pool of `m`.
pub fn subset_size(q: f64, m: usize, model: LabelModelKind) -> usize {
    let k = ((q * m as f64) - 1e-9).ceil().max(0.0) as usize;
    let floor = if model == LabelModelKind::FlyingSquid {
        3
    } else {
        1
    };
    k.max(floor).min(m)
}

/// Pool indices of the `k` best-ranked LFs, in rank order.
pub fn top_ranked(scores: &[LfScore], k: usize) -> Vec<usize> {
    let mut ranked: Vec<&LfScore> = scores.iter().collect();
    ranked.sort_by_key(|s| s.rank);
    ranked.into_iter().take(k).map(|s| s.pool_index).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigRow {
    pub stage: u8,
    pub lf_ids: Vec<String>,
    pub model: LabelModelKind,
    pub threshold: f64,
    pub quantile: Option<f64>,
    pub n_weak: usize,
    pub proxy_score: f64,
    /// True when the score was reused from an identical earlier config.
    pub cached: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBest {
    pub model: LabelModelKind,
    pub threshold: f64,
    pub quantile: f64,
    pub lf_ids: Vec<String>,
    pub proxy_score: f64,
    pub n_weak: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub stage1: Vec<ConfigRow>,
    pub stage2: Vec<ConfigRow>,
    pub best: SearchBest,
    pub stage1_score: f64,
    /// Distinct proxy trainings; memoized rows do not retrain.
    pub proxy_fits: usize,
    pub seed: u64,
}

impl SearchResult {
    /// Number of configuration rows over both stages.
    pub fn evaluations(&self) -> usize {
        self.stage1.len() + self.stage2.len()
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timings(&self) -> SearchResult {
        let mut out = self.clone();
        out.stage1
            .iter_mut()
            .chain(out.stage2.iter_mut())
            .for_each(|r| r.wall_ms = 0.0);
        out
    }
}

/// Inputs shared by every configuration evaluation.
pub struct SearchContext<'a> {
    matrix: &'a LabelMatrix,
    unlabeled: &'a UnlabeledDataset,
    labeled: &'a LabeledDataset,
    prior: Vec<f64>,
    u_vectors: Vec<SparseVector>,
    x_vectors: Vec<SparseVector>,
    seed: u64,
    aggregated: Mutex<HashMap<(Vec<usize>, LabelModelKind), ProbLabels>>,
    scored: Mutex<HashMap<ConfigKey, (usize, f64)>>,
    fits: Mutex<usize>,
}

type ConfigKey = (Vec<usize>, LabelModelKind, u64);

impl<'a> SearchContext<'a> {
    /// `tfidf` featurizes both sets for the proxy; `prior` is the labeled
    /// class distribution.
    pub fn new(
        matrix: &'a LabelMatrix,
        unlabeled: &'a UnlabeledDataset,
        labeled: &'a LabeledDataset,
        tfidf: &Vectorizer,
        prior: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if matrix.n_rows() != unlabeled.len() {
            return Err(Error::DimensionMismatch {
                left: matrix.n_rows(),
                right: unlabeled.len(),
            });
        }
        Ok(SearchContext {
            matrix,
            unlabeled,
            labeled,
            prior,
            u_vectors: unlabeled
                .docs()
                .par_iter()
                .map(|d| tfidf.transform(&d.text))
                .collect(),
            x_vectors: labeled
                .docs()
                .par_iter()
                .map(|d| tfidf.transform(&d.text))
                .collect(),
            seed,
            aggregated: Mutex::new(HashMap::new()),
            scored: Mutex::new(HashMap::new()),
            fits: Mutex::new(0),
        })
    }

    fn probs(&self, columns: &[usize], model: LabelModelKind, em: EmOptions) -> Result<ProbLabels> {
        let key = (columns.to_vec(), model);
        if let Some(p) = self.aggregated.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let sub = if columns.len() == self.matrix.n_lfs() {
            self.matrix.clone()
        } else {
            self.matrix.select_columns(columns)?
        };
        let probs = aggregate(model, &sub, &self.prior, em)?;
        self.aggregated.lock().unwrap().insert(key, probs.clone());
        Ok(probs)
    }

    /// Scores one configuration; returns `(n_weak, score, cached)`.
    fn evaluate(
        &self,
        columns: &[usize],
        model: LabelModelKind,
        t: f64,
        em: EmOptions,
    ) -> Result<(usize, f64, bool)> {
        let mut sorted = columns.to_vec();
        sorted.sort_unstable();
        let key = (sorted.clone(), model, t.to_bits());
        if let Some(&(n, s)) = self.scored.lock().unwrap().get(&key) {
            return Ok((n, s, true));
        }
        let probs = self.probs(&sorted, model, em)?;
        let kept: Vec<usize> = probs
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.abstained && r.score >= t)
            .map(|(j, _)| j)
            .collect();
        let x: Vec<SparseVector> = kept.iter().map(|&j| self.u_vectors[j].clone()).collect();
        let y: Vec<usize> = kept.iter().map(|&j| probs.rows[j].label).collect();
        let score = proxy_score(
            &x,
            &y,
            &self.x_vectors,
            self.labeled.labels(),
            self.labeled.num_classes(),
        );
        *self.fits.lock().unwrap() += 1;
        self.scored.lock().unwrap().insert(key, (kept.len(), score));
        Ok((kept.len(), score, false))
    }

    fn lf_ids(&self, columns: &[usize]) -> Vec<String> {
        columns
            .iter()
            .map(|&i| self.matrix.lf_ids()[i].clone())
            .collect()
    }

    pub fn unlabeled(&self) -> &UnlabeledDataset {
        self.unlabeled
    }
}

fn proxy_score(
    x: &[SparseVector],
    y: &[usize],
    test_x: &[SparseVector],
    test_y: &[usize],
    num_classes: usize,
) -> f64 {
    if x.is_empty() || test_x.is_empty() {
        return 0.0;
    }
    let model = LogisticRegression::fit(x, y, num_classes, PROXY_L2);
    let hits = test_x
        .iter()
        .zip(test_y)
        .filter(|(xi, &yi)| argmax(&model.logits(xi)) == yi)
        .count();
    hits as f64 / test_x.len() as f64
}

/// Trains the proxy on the weak labels of `weak` and returns its accuracy
/// on `labeled`. An empty weak set scores 0. The proxy is deterministic, so
/// `_seed` only documents the call contract.
pub fn proxy_evaluate(
    weak: &WeakDataset,
    labeled: &LabeledDataset,
    tfidf: &Vectorizer,
    _seed: u64,
) -> f64 {
    let x: Vec<SparseVector> = weak
        .samples
        .iter()
        .map(|s| tfidf.transform(&s.doc.text))
        .collect();
    let y: Vec<usize> = weak.samples.iter().map(|s| s.label).collect();
    let test_x: Vec<SparseVector> = labeled
        .docs()
        .iter()
        .map(|d| tfidf.transform(&d.text))
        .collect();
    proxy_score(&x, &y, &test_x, labeled.labels(), labeled.num_classes())
}

fn model_order(model: LabelModelKind) -> usize {
    LabelModelKind::ALL
        .iter()
        .position(|&m| m == model)
        .unwrap_or(usize::MAX)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Stage 1: all LFs, every model × threshold. Returns the rows and the
/// index of the winner.
pub fn search_stage1(ctx: &SearchContext, space: &SearchSpace) -> Result<(Vec<ConfigRow>, usize)> {
    let all: Vec<usize> = (0..ctx.matrix.n_lfs()).collect();
    let grid: Vec<(LabelModelKind, f64)> = space
        .models
        .iter()
        .flat_map(|&m| space.thresholds.iter().map(move |&t| (m, t)))
        .collect();
    // Aggregate each model once up front so threshold evaluations can run in parallel.
    space.models.par_iter().try_for_each(|&m| {
        ctx.probs(&all, m, space.em)
            .map(|_| ())
            .map_err(|e| annotate(e, m, None, None))
    })?;
    let rows = grid
        .par_iter()
        .map(|&(model, t)| {
            let (res, wall_ms) = timed(|| ctx.evaluate(&all, model, t, space.em));
            let (n_weak, proxy_score, cached) =
                res.map_err(|e| annotate(e, model, Some(t), None))?;
            Ok(ConfigRow {
                stage: 1,
                lf_ids: ctx.lf_ids(&all),
                model,
                threshold: t,
                quantile: None,
                n_weak,
                proxy_score,
                cached,
                wall_ms,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let better = r.proxy_score > b.proxy_score
            || (r.proxy_score == b.proxy_score
                && (r.n_weak > b.n_weak
                    || (r.n_weak == b.n_weak
                        && (model_order(r.model) < model_order(b.model)
                            || (r.model == b.model && r.threshold < b.threshold)))));
        if better {
            best = i;
        }
    }
    Ok((rows, best))
}

/// Stage 2: the stage-1 model and threshold with the top-q LFs.
pub fn search_stage2(
    ctx: &SearchContext,
    scores: &[LfScore],
    model: LabelModelKind,
    t: f64,
    space: &SearchSpace,
) -> Result<(Vec<ConfigRow>, usize)> {
    let m = ctx.matrix.n_lfs();
    if scores.len() != m {
        return Err(Error::DimensionMismatch {
            left: scores.len(),
            right: m,
        });
    }
    let quantiles = space.effective_quantiles();
    let rows = quantiles
        .par_iter()
        .map(|&q| {
            let columns = top_ranked(scores, subset_size(q, m, model));
            let (res, wall_ms) = timed(|| ctx.evaluate(&columns, model, t, space.em));
            let (n_weak, proxy_score, cached) =
                res.map_err(|e| annotate(e, model, Some(t), Some(q)))?;
            Ok(ConfigRow {
                stage: 2,
                lf_ids: ctx.lf_ids(&columns),
                model,
                threshold: t,
                quantile: Some(q),
                n_weak,
                proxy_score,
                cached,
                wall_ms,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let b = &rows[best];
        let (rq, bq) = (r.quantile.unwrap_or(0.0), b.quantile.unwrap_or(0.0));
        let better = r.proxy_score > b.proxy_score
            || (r.proxy_score == b.proxy_score && (rq > bq || (rq == bq && r.n_weak > b.n_weak)));
        if better {
            best = i;
        }
    }
    Ok((rows, best))
}

fn annotate(e: Error, model: LabelModelKind, t: Option<f64>, q: Option<f64>) -> Error {
    let mut config = format!("model={model}");
    if let Some(t) = t {
        config.push_str(&format!(" t={t}"));
    }
    if let Some(q) = q {
        config.push_str(&format!(" q={q}"));
    }
    Error::Search {
        config,
        source: Box::new(e),
    }
}

/// Runs both stages.
pub fn run_search(
    ctx: &SearchContext,
    scores: &[LfScore],
    space: &SearchSpace,
) -> Result<SearchResult> {
    space.validate()?;
    let (stage1, b1) = search_stage1(ctx, space)?;
    let (model, t) = (stage1[b1].model, stage1[b1].threshold);
    info!(
        "stage 1: {model} at t={t} (proxy accuracy {:.4}, |U'|={})",
        stage1[b1].proxy_score, stage1[b1].n_weak
    );
    let (stage2, b2) = search_stage2(ctx, scores, model, t, space)?;
    let w = &stage2[b2];
    info!(
        "stage 2: q={} with {} LFs (proxy accuracy {:.4}, |U'|={})",
        w.quantile.unwrap_or(1.0),
        w.lf_ids.len(),
        w.proxy_score,
        w.n_weak
    );
    let best = SearchBest {
        model,
        threshold: t,
        quantile: w.quantile.unwrap_or(1.0),
        lf_ids: w.lf_ids.clone(),
        proxy_score: w.proxy_score,
        n_weak: w.n_weak,
    };
    let proxy_fits = *ctx.fits.lock().unwrap();
    Ok(SearchResult {
        stage1_score: stage1[b1].proxy_score,
        stage1,
        stage2,
        best,
        proxy_fits,
        seed: ctx.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_sizes() {
        let sizes: Vec<usize> = [0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&q| subset_size(q, 15, LabelModelKind::MajorityVote))
            .collect();
        assert_eq!(sizes, vec![3, 6, 9, 12, 15]);
        assert_eq!(subset_size(0.2, 3, LabelModelKind::MajorityVote), 1);
        assert_eq!(subset_size(0.2, 3, LabelModelKind::FlyingSquid), 3);
        assert_eq!(subset_size(0.2, 2, LabelModelKind::FlyingSquid), 2);
        // 0.6·5 is 3.0000000000000004 in floating point.
        assert_eq!(subset_size(0.6, 5, LabelModelKind::MajorityVote), 3);
    }

    #[test]
    fn top_ranked_follows_rank() {
        let scores: Vec<LfScore> = [(0, 2), (1, 0), (2, 1)]
            .iter()
            .map(|&(i, r)| LfScore {
                lf_id: format!("lf{i}"),
                pool_index: i,
                dev_accuracy: 0.0,
                rank: r,
            })
            .collect();
        assert_eq!(top_ranked(&scores, 2), vec![1, 2]);
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::default().validate().is_ok());
        let bad = SearchSpace {
            thresholds: vec![1.5],
            ..SearchSpace::default()
        };
        assert!(bad.validate().unwrap_err().is_validation());
        let missing = SearchSpace {
            quantiles: vec![0.5],
            ..SearchSpace::default()
        };
        assert_eq!(missing.effective_quantiles(), vec![0.5, 1.0]);
    }
}
