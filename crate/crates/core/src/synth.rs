//! Planted-parameter generators and exact oracles.
//!
//! Votes are drawn from conditionally independent voters: given the true
//! class, an LF abstains with probability `1 - coverage`, otherwise it is
//! right with probability `accuracy` and uniformly wrong over the other
//! classes. A full-confusion variant draws votes from arbitrary per-LF
//! confusion matrices. Texts come from class-conditional unigram draws so
//! that feature-based labeling functions have something to learn.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::labelmodel::{DawidSkeneParams, LabelMatrix};
use crate::lf::ABSTAIN;
use crate::seeded_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedLf {
    pub accuracy: f64,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextSpec {
    pub vocab_size: usize,
    /// Class-specific tokens per class, taken from the front of the vocabulary.
    pub topic_tokens: usize,
    pub doc_len: usize,
    /// Probability that a token is drawn from the document's class topic.
    pub skew: f64,
}

impl Default for TextSpec {
    fn default() -> Self {
        TextSpec {
            vocab_size: 2000,
            topic_tokens: 150,
            doc_len: 12,
            skew: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub num_classes: usize,
    pub n_unlabeled: usize,
    pub labeled_per_class: usize,
    pub test_per_class: usize,
    pub class_balance: Vec<f64>,
    pub lfs: Vec<PlantedLf>,
    pub text: TextSpec,
    /// 0 disables the embedding channel.
    pub embedding_dim: usize,
    pub embedding_separation: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// The bundled toy corpus: 4 balanced classes, 50 labeled per class,
    /// 2000 unlabeled, 16-d embeddings and three external voters.
    pub fn toy(seed: u64) -> Self {
        PlantedSpec {
            num_classes: 4,
            n_unlabeled: 2000,
            labeled_per_class: 50,
            test_per_class: 250,
            class_balance: vec![0.25; 4],
            lfs: vec![
                PlantedLf {
                    accuracy: 0.85,
                    coverage: 1.0,
                },
                PlantedLf {
                    accuracy: 0.75,
                    coverage: 1.0,
                },
                PlantedLf {
                    accuracy: 0.65,
                    coverage: 1.0,
                },
            ],
            text: TextSpec::default(),
            embedding_dim: 16,
            embedding_separation: 0.6,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Validation("need at least 2 classes".into()));
        }
        if self.class_balance.len() != self.num_classes
            || self
                .class_balance
                .iter()
                .any(|&p| !(0.0..=1.0).contains(&p))
            || (self.class_balance.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Validation(
                "class balance must be a simplex of length C".into(),
            ));
        }
        for lf in &self.lfs {
            if !(0.0..=1.0).contains(&lf.accuracy) || !(0.0..=1.0).contains(&lf.coverage) {
                return Err(Error::Validation(
                    "LF accuracy and coverage must lie in [0, 1]".into(),
                ));
            }
        }
        if self.text.topic_tokens * self.num_classes > self.text.vocab_size {
            return Err(Error::Validation(
                "topic tokens exceed the vocabulary".into(),
            ));
        }
        Ok(())
    }
}

fn sample_class(rng: &mut ChaCha8Rng, balance: &[f64]) -> usize {
    WeightedIndex::new(balance)
        .map(|d| d.sample(rng))
        .unwrap_or(0)
}

/// One vote from an accuracy/coverage voter.
pub fn planted_vote(rng: &mut ChaCha8Rng, truth: usize, lf: PlantedLf, num_classes: usize) -> i32 {
    if rng.random::<f64>() >= lf.coverage {
        return ABSTAIN;
    }
    if rng.random::<f64>() < lf.accuracy {
        return truth as i32;
    }
    let wrong = rng.random_range(0..num_classes - 1);
    (if wrong >= truth { wrong + 1 } else { wrong }) as i32
}

/// Votes of every planted LF for each truth value, row-major.
pub fn planted_votes(
    rng: &mut ChaCha8Rng,
    truth: &[usize],
    lfs: &[PlantedLf],
    num_classes: usize,
) -> Vec<i32> {
    truth
        .iter()
        .flat_map(|&y| lfs.iter().map(|&lf| (y, lf)).collect::<Vec<_>>())
        .map(|(y, lf)| planted_vote(rng, y, lf, num_classes))
        .collect()
}

/// Label matrix of `n` rows from accuracy/coverage voters, plus hidden truth.
pub fn generate_votes(
    num_classes: usize,
    n: usize,
    class_balance: &[f64],
    lfs: &[PlantedLf],
    seed: u64,
) -> Result<(LabelMatrix, Vec<usize>)> {
    let mut rng = seeded_rng(seed, 0xa07e);
    let truth: Vec<usize> = (0..n)
        .map(|_| sample_class(&mut rng, class_balance))
        .collect();
    let entries = planted_votes(&mut rng, &truth, lfs, num_classes);
    let m = LabelMatrix::new(
        (0..n).map(|j| format!("u{j}")).collect(),
        (0..lfs.len()).map(|i| format!("planted{i}")).collect(),
        num_classes,
        entries,
    )?;
    Ok((m, truth))
}

/// Full-confusion generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfusion {
    pub params: DawidSkeneParams,
    pub coverage: Vec<f64>,
}

/// Random confusion matrices with diagonals uniform in `diag` and the
/// off-diagonal mass split at random among the wrong classes.
pub fn random_confusion(
    n_lfs: usize,
    num_classes: usize,
    diag: (f64, f64),
    coverage: f64,
    seed: u64,
) -> PlantedConfusion {
    let mut rng = seeded_rng(seed, 0xc0f5);
    let confusion = (0..n_lfs)
        .map(|_| {
            (0..num_classes)
                .map(|k| {
                    let d = rng.random_range(diag.0..=diag.1);
                    let weights: Vec<f64> = (0..num_classes)
                        .map(|_| rng.random_range(0.2..1.0))
                        .collect();
                    let off: f64 = weights
                        .iter()
                        .enumerate()
                        .filter(|&(v, _)| v != k)
                        .map(|(_, w)| w)
                        .sum();
                    (0..num_classes)
                        .map(|v| {
                            if v == k {
                                d
                            } else {
                                (1.0 - d) * weights[v] / off
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    PlantedConfusion {
        params: DawidSkeneParams {
            class_prior: vec![1.0 / num_classes as f64; num_classes],
            confusion,
        },
        coverage: vec![coverage; n_lfs],
    }
}

/// Samples a label matrix from full confusion matrices.
pub fn generate_confusion_votes(
    planted: &PlantedConfusion,
    n: usize,
    seed: u64,
) -> Result<(LabelMatrix, Vec<usize>)> {
    let mut rng = seeded_rng(seed, 0xd5d5);
    let c = planted.params.class_prior.len();
    let m = planted.params.confusion.len();
    let rows: Vec<WeightedIndex<f64>> = planted
        .params
        .confusion
        .iter()
        .flatten()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::Validation(e.to_string())))
        .collect::<Result<_>>()?;
    let mut truth = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n * m);
    for _ in 0..n {
        let y = sample_class(&mut rng, &planted.params.class_prior);
        truth.push(y);
        for lf in 0..m {
            if rng.random::<f64>() >= planted.coverage[lf] {
                entries.push(ABSTAIN);
            } else {
                entries.push(rows[lf * c + y].sample(&mut rng) as i32);
            }
        }
    }
    let matrix = LabelMatrix::new(
        (0..n).map(|j| format!("u{j}")).collect(),
        (0..m).map(|i| format!("planted{i}")).collect(),
        c,
        entries,
    )?;
    Ok((matrix, truth))
}

/// Conditional mean of the one-vs-rest signed vote given the binary truth:
/// `(E[λ | Y = +1], E[λ | Y = -1])`, over observed votes.
pub fn conditional_means(accuracy: f64, num_classes: usize) -> (f64, f64) {
    let wrong_hits = (1.0 - accuracy) / (num_classes - 1) as f64;
    (2.0 * accuracy - 1.0, 2.0 * wrong_hits - 1.0)
}

/// Analytic signed accuracy `E[λ·Y]` of a planted LF on the one-vs-rest
/// task for a class with prior `balance`.
pub fn signed_accuracy(accuracy: f64, balance: f64, num_classes: usize) -> f64 {
    let (pos, neg) = conditional_means(accuracy, num_classes);
    balance * pos - (1.0 - balance) * neg
}

/// Exact `E[λᵢλⱼ]` over co-observed rows for the one-vs-rest task of
/// `class`. With symmetric voters (two balanced classes) this equals
/// `ãᵢ·ãⱼ`; in general it is the class-mixture of conditional products.
pub fn exact_pairwise_moments(
    lfs: &[PlantedLf],
    class_balance: &[f64],
    class: usize,
) -> Vec<Vec<f64>> {
    let c = class_balance.len();
    let p = class_balance[class];
    let means: Vec<(f64, f64)> = lfs
        .iter()
        .map(|lf| conditional_means(lf.accuracy, c))
        .collect();
    (0..lfs.len())
        .map(|i| {
            (0..lfs.len())
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        p * means[i].0 * means[j].0 + (1.0 - p) * means[i].1 * means[j].1
                    }
                })
                .collect()
        })
        .collect()
}

/// Exact Bayes posterior over classes for one vote row under full
/// confusion parameters, by direct enumeration (abstains skipped).
pub fn brute_force_posterior(row: &[i32], params: &DawidSkeneParams) -> Vec<f64> {
    let c = params.class_prior.len();
    let mut joint = vec![0.0; c];
    for (y, slot) in joint.iter_mut().enumerate() {
        let mut likelihood = params.class_prior[y];
        for (lf, &vote) in row.iter().enumerate() {
            if vote >= 0 {
                likelihood *= params.confusion[lf][y][vote as usize];
            }
        }
        *slot = likelihood;
    }
    let total: f64 = joint.iter().sum();
    joint.iter().map(|j| j / total).collect()
}

/// Confusion matrices implied by accuracy/coverage voters.
pub fn planted_confusion(lfs: &[PlantedLf], class_balance: &[f64]) -> DawidSkeneParams {
    let c = class_balance.len();
    DawidSkeneParams {
        class_prior: class_balance.to_vec(),
        confusion: lfs
            .iter()
            .map(|lf| {
                (0..c)
                    .map(|y| {
                        (0..c)
                            .map(|v| {
                                if v == y {
                                    lf.accuracy
                                } else {
                                    (1.0 - lf.accuracy) / (c - 1) as f64
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Exact posterior `P(Y = +1 | votes)` of a binary task with symmetric
/// voters of signed accuracy `accuracies[i]` (right with probability
/// `(1 + a) / 2`), by enumerating both values of Y.
pub fn brute_force_binary_posterior(
    signs: &[Option<f64>],
    accuracies: &[f64],
    balance: f64,
) -> f64 {
    let mut pos = balance;
    let mut neg = 1.0 - balance;
    for (s, &a) in signs.iter().zip(accuracies) {
        let right = (1.0 + a) / 2.0;
        match s {
            Some(v) if *v > 0.0 => {
                pos *= right;
                neg *= 1.0 - right;
            }
            Some(_) => {
                pos *= 1.0 - right;
                neg *= right;
            }
            None => {}
        }
    }
    pos / (pos + neg)
}

/// A generated corpus with everything the harness needs.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub spec: PlantedSpec,
    pub labeled: LabeledDataset,
    pub unlabeled: UnlabeledDataset,
    /// Hidden truth for `unlabeled`, row-aligned. Never used for training.
    pub truth: Vec<usize>,
    pub test: LabeledDataset,
    /// Planted LF votes on the unlabeled rows.
    pub matrix: LabelMatrix,
    /// Planted LF votes on the labeled rows, for LF scoring.
    pub labeled_votes: LabelMatrix,
    pub embeddings: Option<EmbeddingTable>,
}

struct TextModel {
    spec: TextSpec,
    num_classes: usize,
}

impl TextModel {
    fn token(&self, rng: &mut ChaCha8Rng, class: usize) -> usize {
        if rng.random::<f64>() < self.spec.skew {
            class * self.spec.topic_tokens + rng.random_range(0..self.spec.topic_tokens)
        } else {
            rng.random_range(0..self.spec.vocab_size)
        }
    }

    fn document(&self, rng: &mut ChaCha8Rng, class: usize) -> String {
        debug_assert!(class < self.num_classes);
        (0..self.spec.doc_len)
            .map(|_| word(self.token(rng, class)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// Pronounceable, collision-free token for a vocabulary index.
fn word(index: usize) -> String {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "da", "gu", "ze", "bi", "fo", "ly",
        "wa",
    ];
    let mut out = String::new();
    let mut i = index;
    loop {
        out.push_str(SYLLABLES[i % 16]);
        i /= 16;
        if i == 0 {
            break;
        }
    }
    out
}

/// Generates labeled, unlabeled (with hidden truth) and test splits, the
/// planted LF votes and, when configured, sentence embeddings.
pub fn generate_synthetic(spec: &PlantedSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let c = spec.num_classes;
    let text = TextModel {
        spec: spec.text.clone(),
        num_classes: c,
    };

    let mut rng_u = seeded_rng(spec.seed, 1);
    let truth: Vec<usize> = (0..spec.n_unlabeled)
        .map(|_| sample_class(&mut rng_u, &spec.class_balance))
        .collect();
    let unlabeled_docs: Vec<Document> = truth
        .iter()
        .enumerate()
        .map(|(j, &y)| Document::new(format!("u{j:05}"), text.document(&mut rng_u, y)))
        .collect();

    let mut rng_t = seeded_rng(spec.seed, 2);
    let test_labels: Vec<usize> = (0..c)
        .flat_map(|k| std::iter::repeat_n(k, spec.test_per_class))
        .collect();
    let test_docs: Vec<Document> = test_labels
        .iter()
        .enumerate()
        .map(|(j, &y)| Document::new(format!("t{j:05}"), text.document(&mut rng_t, y)))
        .collect();

    let mut rng_x = seeded_rng(spec.seed, 3);
    let labels: Vec<usize> = (0..c)
        .flat_map(|k| std::iter::repeat_n(k, spec.labeled_per_class))
        .collect();
    let labeled_docs: Vec<Document> = labels
        .iter()
        .enumerate()
        .map(|(j, &y)| Document::new(format!("x{j:05}"), text.document(&mut rng_x, y)))
        .collect();

    let mut rng_v = seeded_rng(spec.seed, 4);
    let lf_ids: Vec<String> = (0..spec.lfs.len()).map(|i| format!("planted{i}")).collect();
    let matrix = LabelMatrix::new(
        unlabeled_docs.iter().map(|d| d.id.clone()).collect(),
        lf_ids.clone(),
        c,
        planted_votes(&mut rng_v, &truth, &spec.lfs, c),
    );
    let mut rng_lv = seeded_rng(spec.seed, 5);
    let labeled_votes = LabelMatrix::new(
        labeled_docs.iter().map(|d| d.id.clone()).collect(),
        lf_ids,
        c,
        planted_votes(&mut rng_lv, &labels, &spec.lfs, c),
    );
    let (matrix, labeled_votes) = if spec.lfs.is_empty() {
        (
            LabelMatrix::from_rows(&vec![vec![ABSTAIN]; spec.n_unlabeled], c)?,
            LabelMatrix::from_rows(&vec![vec![ABSTAIN]; labels.len()], c)?,
        )
    } else {
        (matrix?, labeled_votes?)
    };

    let embeddings = if spec.embedding_dim > 0 {
        let mut rng_e = seeded_rng(spec.seed, 6);
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::Validation(e.to_string()))?;
        let means: Vec<Vec<f64>> = (0..c)
            .map(|_| {
                (0..spec.embedding_dim)
                    .map(|_| normal.sample(&mut rng_e))
                    .collect()
            })
            .collect();
        let mut entries = Vec::new();
        for (doc, &y) in labeled_docs
            .iter()
            .zip(&labels)
            .chain(unlabeled_docs.iter().zip(&truth))
        {
            let v: Vec<f64> = means[y]
                .iter()
                .map(|m| spec.embedding_separation * m + normal.sample(&mut rng_e))
                .collect();
            entries.push((doc.id.clone(), v));
        }
        Some(EmbeddingTable::new(entries)?)
    } else {
        None
    };

    Ok(SyntheticCorpus {
        spec: spec.clone(),
        labeled: LabeledDataset::new(labeled_docs, labels, c)?,
        unlabeled: UnlabeledDataset::new(unlabeled_docs)?,
        truth,
        test: LabeledDataset::new(test_docs, test_labels, c)?,
        matrix,
        labeled_votes,
        embeddings,
    })
}

#[derive(Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub label: usize,
}

/// Names of the planted external vote files, in LF order.
pub fn external_names(spec: &PlantedSpec) -> Vec<String> {
    (0..spec.lfs.len()).map(|i| format!("planted{i}")).collect()
}

/// Writes the corpus as `labeled.jsonl`, `unlabeled.jsonl`, `test.jsonl`,
/// `truth.jsonl`, optional `embeddings.jsonl`, one `votes_<name>.jsonl`
/// per planted LF, and a ready-to-run `config.toml`.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    corpus.labeled.save(&dir.join("labeled.jsonl"))?;
    corpus.unlabeled.save(&dir.join("unlabeled.jsonl"))?;
    corpus.test.save(&dir.join("test.jsonl"))?;

    let mut truth = String::new();
    for (doc, &label) in corpus.unlabeled.docs().iter().zip(&corpus.truth) {
        truth.push_str(&serde_json::to_string(&TruthRecord {
            id: doc.id.clone(),
            label,
        })?);
        truth.push('\n');
    }
    write_text(&dir.join("truth.jsonl"), &truth)?;

    if let Some(table) = &corpus.embeddings {
        let order: Vec<Document> = corpus
            .labeled
            .docs()
            .iter()
            .chain(corpus.unlabeled.docs())
            .cloned()
            .collect();
        table.save(&dir.join("embeddings.jsonl"), &order)?;
    }

    let names = external_names(&corpus.spec);
    for (i, name) in names.iter().enumerate() {
        let mut votes = String::new();
        for (matrix, docs) in [
            (&corpus.labeled_votes, corpus.labeled.docs()),
            (&corpus.matrix, corpus.unlabeled.docs()),
        ] {
            for (j, doc) in docs.iter().enumerate() {
                let vote = matrix.row(j)[i];
                if vote != ABSTAIN {
                    votes.push_str(&format!(
                        "{{\"id\":{},\"vote\":{vote}}}\n",
                        serde_json::to_string(&doc.id)?
                    ));
                }
            }
        }
        write_text(&dir.join(format!("votes_{name}.jsonl")), &votes)?;
    }

    let mut config = format!(
        "seed = {}\n\n[data]\nlabeled = \"labeled.jsonl\"\nunlabeled = \"unlabeled.jsonl\"\ntest = \"test.jsonl\"\ntruth = \"truth.jsonl\"\nnum_classes = {}\n",
        corpus.spec.seed, corpus.spec.num_classes
    );
    if corpus.embeddings.is_some() {
        config.push_str("embeddings = \"embeddings.jsonl\"\n");
    }
    config.push_str("\n[pool]\n");
    for name in &names {
        config.push_str(&format!(
            "\n[[pool.external]]\nname = \"{name}\"\npath = \"votes_{name}.jsonl\"\n"
        ));
    }
    write_text(&dir.join("config.toml"), &config)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelmodel::pairwise_moments;

    fn lfs(specs: &[(f64, f64)]) -> Vec<PlantedLf> {
        specs
            .iter()
            .map(|&(accuracy, coverage)| PlantedLf { accuracy, coverage })
            .collect()
    }

    #[test]
    fn perfect_and_silent_voters() {
        let (m, truth) = generate_votes(
            3,
            500,
            &[0.2, 0.3, 0.5],
            &lfs(&[(1.0, 1.0), (0.7, 0.0)]),
            11,
        )
        .unwrap();
        for (j, &y) in truth.iter().enumerate() {
            assert_eq!(m.row(j)[0], y as i32);
            assert_eq!(m.row(j)[1], ABSTAIN);
        }
    }

    #[test]
    fn empirical_accuracy_matches_planted() {
        let (m, truth) = generate_votes(4, 10_000, &[0.25; 4], &lfs(&[(0.75, 0.8)]), 5).unwrap();
        let observed: Vec<(i32, usize)> = m
            .column(0)
            .into_iter()
            .zip(truth)
            .filter(|(v, _)| *v >= 0)
            .collect();
        let acc =
            observed.iter().filter(|(v, y)| *v == *y as i32).count() as f64 / observed.len() as f64;
        assert!((acc - 0.75).abs() <= 0.03, "{acc}");
    }

    #[test]
    fn generator_determinism() {
        let spec = lfs(&[(0.8, 0.9), (0.6, 0.5)]);
        let a = generate_votes(3, 200, &[1.0 / 3.0; 3], &spec, 1).unwrap();
        assert_eq!(
            a,
            generate_votes(3, 200, &[1.0 / 3.0; 3], &spec, 1).unwrap()
        );
        assert_ne!(
            a.0,
            generate_votes(3, 200, &[1.0 / 3.0; 3], &spec, 2).unwrap().0
        );
    }

    #[test]
    fn moment_identities() {
        // Two balanced classes: ã = 2a - 1 and moments factor.
        assert!((signed_accuracy(0.9, 0.5, 2) - 0.8).abs() < 1e-12);
        let m = exact_pairwise_moments(&lfs(&[(0.9, 1.0), (0.8, 1.0)]), &[0.5, 0.5], 0);
        assert!((m[0][1] - 0.48).abs() < 1e-12);
        assert_eq!(m[0][0], 1.0);
    }

    #[test]
    fn sampled_moments_converge() {
        let planted = lfs(&[(0.8, 0.9), (0.7, 0.8), (0.6, 1.0), (0.75, 0.7)]);
        let balance = [0.2, 0.3, 0.5];
        let mut successes = 0;
        for seed in 0..50 {
            let (m, _) = generate_votes(3, 10_000, &balance, &planted, seed).unwrap();
            let worst = (0..3)
                .map(|class| {
                    let exact = exact_pairwise_moments(&planted, &balance, class);
                    let (sampled, _) = pairwise_moments(&m, class);
                    sampled
                        .iter()
                        .flatten()
                        .zip(exact.iter().flatten())
                        .map(|(s, e)| (s - e).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if worst <= 0.05 {
                successes += 1;
            }
        }
        assert!(successes >= 48, "{successes}/50");
    }

    #[test]
    fn brute_force_basics() {
        let identity = DawidSkeneParams {
            class_prior: vec![0.5, 0.5],
            confusion: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
        };
        assert_eq!(brute_force_posterior(&[1], &identity), vec![0.0, 1.0]);
        assert_eq!(brute_force_posterior(&[-1], &identity), vec![0.5, 0.5]);
        assert!((brute_force_binary_posterior(&[Some(1.0)], &[0.6], 0.5) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn toy_corpus_shape() {
        let corpus = generate_synthetic(&PlantedSpec::toy(0)).unwrap();
        assert_eq!(corpus.labeled.len(), 200);
        assert_eq!(corpus.unlabeled.len(), 2000);
        assert_eq!(corpus.labeled.class_counts(), vec![50; 4]);
        assert_eq!(corpus.matrix.n_lfs(), 3);
        assert_eq!(corpus.embeddings.as_ref().unwrap().len(), 2200);
        crate::corpus::check_disjoint(&corpus.labeled, &corpus.unlabeled).unwrap();
    }
}
