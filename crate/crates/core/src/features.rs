//! Feature extraction: unigram count and tf-idf vectorizers, externally
//! supplied sentence embeddings, and cosine similarity.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                left: indices.len(),
                right: values.len(),
            });
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(
                "sparse indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::DimensionMismatch {
                    left: last + 1,
                    right: dim,
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("sparse values must be finite".into()));
        }
        Ok(SparseVector {
            indices,
            values,
            dim,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    /// Keeps every coordinate of a dense vector, zeros included.
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            indices: (0..values.len()).collect(),
            values: values.to_vec(),
            dim: values.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Dot product against a dense vector of the same dimension.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let (mut a, mut b) = (0, 0);
        let mut sum = 0.0;
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    sum += self.values[a] * other.values[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        Ok(sum)
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> Result<f64> {
    let dot = a.dot(b)?;
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Dense counterpart of [`cosine`].
pub fn cosine_dense(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorizerKind {
    Count,
    Tfidf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vectorizer {
    kind: VectorizerKind,
    vocabulary: BTreeMap<String, usize>,
    /// Empty for count vectorizers.
    idf: Vec<f64>,
    fitted_on: String,
}

impl Vectorizer {
    /// Fits a unigram vocabulary (indices in sorted token order) and, for
    /// tf-idf, the smoothed idf `ln((1 + n) / (1 + df)) + 1`.
    pub fn fit(kind: VectorizerKind, corpus: &[Document]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let mut tokens = tokenize(&doc.text);
            tokens.sort_unstable();
            tokens.dedup();
            for token in tokens {
                *df.entry(token).or_default() += 1;
            }
        }
        let n_docs = corpus.len() as f64;
        let idf = match kind {
            VectorizerKind::Count => Vec::new(),
            VectorizerKind::Tfidf => df
                .values()
                .map(|&d| ((1.0 + n_docs) / (1.0 + d as f64)).ln() + 1.0)
                .collect(),
        };
        let vocabulary = df.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
        Ok(Vectorizer {
            kind,
            vocabulary,
            idf,
            fitted_on: fingerprint(corpus),
        })
    }

    pub fn kind(&self) -> VectorizerKind {
        self.kind
    }

    pub fn vocabulary(&self) -> &BTreeMap<String, usize> {
        &self.vocabulary
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        let &i = self.vocabulary.get(token)?;
        self.idf.get(i).copied()
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    /// Raw counts, or L2-normalized count·idf. Unknown tokens are dropped.
    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokenize(text) {
            if let Some(&i) = self.vocabulary.get(&token) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let (indices, mut values): (Vec<usize>, Vec<f64>) = counts.into_iter().unzip();
        if self.kind == VectorizerKind::Tfidf {
            for (v, &i) in values.iter_mut().zip(&indices) {
                *v *= self.idf[i];
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseVector {
            indices,
            values,
            dim: self.dim(),
        }
    }
}

// FNV-1a over ids and texts; stable across platforms and releases.
fn fingerprint(corpus: &[Document]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    };
    for doc in corpus {
        feed(doc.id.as_bytes());
        feed(&[0]);
        feed(doc.text.as_bytes());
        feed(&[0xff]);
    }
    format!("{:016x}:{}", hash, corpus.len())
}

/// Sentence embeddings keyed by document id, all of one dimension.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut table = EmbeddingTable::default();
        for (i, (id, vector)) in entries.into_iter().enumerate() {
            if i == 0 {
                table.dim = vector.len();
            }
            table.insert(id, vector)?;
        }
        Ok(table)
    }

    fn insert(&mut self, id: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: vector.len(),
                right: self.dim,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "embedding for `{id}` is not finite"
            )));
        }
        if self.vectors.insert(id.clone(), vector).is_some() {
            return Err(Error::DuplicateId(id));
        }
        Ok(())
    }

    /// Reads JSONL lines `{"id": ..., "vector": [...]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut table = EmbeddingTable::default();
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
            let record: EmbeddingRecord =
                serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            if table.vectors.is_empty() {
                table.dim = record.vector.len();
            }
            table
                .insert(record.id, record.vector)
                .map_err(|e| malformed(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path, order: &[Document]) -> Result<()> {
        let mut out = String::new();
        for doc in order {
            let record = EmbeddingRecord {
                id: doc.id.clone(),
                vector: self.get(&doc.id)?.to_vec(),
            };
            out.push_str(&serde_json::to_string(&record)?);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }
}

/// Which representation a labeling function reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureChannel {
    Count,
    Tfidf,
    Embedding,
}

impl FeatureChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureChannel::Count => "count",
            FeatureChannel::Tfidf => "tfidf",
            FeatureChannel::Embedding => "embedding",
        }
    }
}

/// All feature channels available to a run.
#[derive(Clone, Debug)]
pub struct FeatureSpace {
    pub count: Vectorizer,
    pub tfidf: Vectorizer,
    pub embeddings: Option<EmbeddingTable>,
}

impl FeatureSpace {
    /// Fits both vectorizers on the same corpus.
    pub fn fit(corpus: &[Document], embeddings: Option<EmbeddingTable>) -> Result<Self> {
        Ok(FeatureSpace {
            count: Vectorizer::fit(VectorizerKind::Count, corpus)?,
            tfidf: Vectorizer::fit(VectorizerKind::Tfidf, corpus)?,
            embeddings,
        })
    }

    pub fn has(&self, channel: FeatureChannel) -> bool {
        channel != FeatureChannel::Embedding || self.embeddings.is_some()
    }

    pub fn dim(&self, channel: FeatureChannel) -> usize {
        match channel {
            FeatureChannel::Count => self.count.dim(),
            FeatureChannel::Tfidf => self.tfidf.dim(),
            FeatureChannel::Embedding => self.embeddings.as_ref().map_or(0, EmbeddingTable::dim),
        }
    }

    pub fn featurize(&self, channel: FeatureChannel, doc: &Document) -> Result<SparseVector> {
        match channel {
            FeatureChannel::Count => Ok(self.count.transform(&doc.text)),
            FeatureChannel::Tfidf => Ok(self.tfidf.transform(&doc.text)),
            FeatureChannel::Embedding => {
                let table = self.embeddings.as_ref().ok_or_else(|| {
                    Error::Config("embedding channel used but no embedding file configured".into())
                })?;
                Ok(SparseVector::from_dense(table.get(&doc.id)?))
            }
        }
    }

    pub fn featurize_all(
        &self,
        channel: FeatureChannel,
        docs: &[Document],
    ) -> Result<Vec<SparseVector>> {
        docs.iter().map(|d| self.featurize(channel, d)).collect()
    }
}
