//! Labeled and unlabeled text datasets: loading, saving, stratified
//! splitting and class statistics.
//!
//! Two on-disk formats are accepted, both UTF-8:
//!
//! - JSONL, one object per line with keys `id`, `text` and an optional
//!   `label` (integer or `null`);
//! - CSV with header `id,text,label`, where an empty label cell means
//!   unlabeled.
//!
//! A file whose records all carry labels loads as a [`LabeledDataset`];
//! a file with no labels at all loads as an [`UnlabeledDataset`].

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    docs: Vec<Document>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Builds a dataset, checking id uniqueness and label range.
    ///
    /// Class coverage is not required here (a dev split may miss a class);
    /// call [`LabeledDataset::check_coverage`] where it matters.
    pub fn new(docs: Vec<Document>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if docs.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} documents but {} labels",
                docs.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Validation(
                "number of classes must be positive".into(),
            ));
        }
        check_unique_ids(&docs)?;
        for (doc, &label) in docs.iter().zip(&labels) {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    id: doc.id.clone(),
                    label: label as i64,
                    num_classes,
                });
            }
        }
        Ok(LabeledDataset {
            docs,
            labels,
            num_classes,
        })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Document, usize)> {
        self.docs.iter().zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }

    /// Fails with [`Error::MissingClass`] for the first class without a sample.
    pub fn check_coverage(&self) -> Result<()> {
        match self.class_counts().iter().position(|&n| n == 0) {
            Some(class) => Err(Error::MissingClass(class)),
            None => Ok(()),
        }
    }

    /// Selects the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Concatenates two datasets over the same label space.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.num_classes != other.num_classes {
            return Err(Error::ClassCountMismatch {
                expected: self.num_classes,
                found: other.num_classes,
            });
        }
        let mut docs = self.docs.clone();
        docs.extend(other.docs.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        LabeledDataset::new(docs, labels, self.num_classes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let labels: Vec<Option<usize>> = self.labels.iter().map(|&l| Some(l)).collect();
        save_records(path, &self.docs, &labels)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct UnlabeledDataset {
    docs: Vec<Document>,
}

impl UnlabeledDataset {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        check_unique_ids(&docs)?;
        Ok(UnlabeledDataset { docs })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_records(path, &self.docs, &vec![None; self.docs.len()])
    }
}

/// Result of [`load_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Picks the format from the file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> DataFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Jsonl,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<i64>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    text: &'a str,
    label: Option<usize>,
}

/// Loads a dataset file. `num_classes` overrides the inferred `max label + 1`.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    num_classes: Option<usize>,
) -> Result<Dataset> {
    let (docs, labels) = match format {
        DataFormat::Jsonl => read_jsonl(path)?,
        DataFormat::Csv => read_csv(path)?,
    };
    if docs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_unique_ids(&docs)?;
    for doc in docs.iter().filter(|d| d.text.is_empty()) {
        warn!("{}: document `{}` has empty text", path.display(), doc.id);
    }

    let labeled = labels.iter().filter(|l| l.is_some()).count();
    if labeled == 0 {
        return Ok(Dataset::Unlabeled(UnlabeledDataset { docs }));
    }
    if labeled != docs.len() {
        return Err(Error::MixedLabels(path.to_path_buf()));
    }

    let mut out = Vec::with_capacity(labels.len());
    for (doc, label) in docs.iter().zip(&labels) {
        let label = label.unwrap_or_default();
        if label < 0 {
            return Err(Error::LabelOutOfRange {
                id: doc.id.clone(),
                label,
                num_classes: num_classes.unwrap_or(0),
            });
        }
        out.push(label as usize);
    }
    let observed = out.iter().max().map_or(0, |&m| m + 1);
    let num_classes = match num_classes {
        Some(given) if given < observed => {
            return Err(Error::ClassOverrideTooSmall { given, observed })
        }
        Some(given) => given,
        None => observed,
    };
    Ok(Dataset::Labeled(LabeledDataset::new(
        docs,
        out,
        num_classes,
    )?))
}

/// Loads a file that must be fully labeled.
pub fn load_labeled(path: &Path, num_classes: Option<usize>) -> Result<LabeledDataset> {
    match load_dataset(path, DataFormat::from_path(path), num_classes)? {
        Dataset::Labeled(ds) => Ok(ds),
        Dataset::Unlabeled(_) => Err(Error::Validation(format!(
            "{} has no labels but a labeled dataset was expected",
            path.display()
        ))),
    }
}

/// Loads a file that must carry no labels.
pub fn load_unlabeled(path: &Path) -> Result<UnlabeledDataset> {
    match load_dataset(path, DataFormat::from_path(path), None)? {
        Dataset::Unlabeled(ds) => Ok(ds),
        Dataset::Labeled(_) => Err(Error::Validation(format!(
            "{} carries labels but an unlabeled dataset was expected",
            path.display()
        ))),
    }
}

fn read_jsonl(path: &Path) -> Result<(Vec<Document>, Vec<Option<i64>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if record.id.is_empty() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty id".into(),
            });
        }
        docs.push(Document::new(record.id, record.text));
        labels.push(record.label);
    }
    Ok((docs, labels))
}

fn read_csv(path: &Path) -> Result<(Vec<Document>, Vec<Option<i64>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedRecord {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(id_col), Some(text_col)) = (column("id"), column("text")) else {
        return Err(Error::MalformedRecord {
            path: path.to_path_buf(),
            line: 1,
            message: "header must contain `id` and `text`".into(),
        });
    };
    let label_col = column("label");

    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let malformed = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = record.get(id_col).unwrap_or_default();
        if id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        let label = match label_col.and_then(|c| record.get(c)).map(str::trim) {
            None | Some("") => None,
            Some(cell) => Some(
                cell.parse::<i64>()
                    .map_err(|e| malformed(format!("label `{cell}`: {e}")))?,
            ),
        };
        docs.push(Document::new(id, record.get(text_col).unwrap_or_default()));
        labels.push(label);
    }
    Ok((docs, labels))
}

fn save_records(path: &Path, docs: &[Document], labels: &[Option<usize>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    match DataFormat::from_path(path) {
        DataFormat::Jsonl => {
            let mut out = BufWriter::new(file);
            for (doc, &label) in docs.iter().zip(labels) {
                let record = JsonRecordOut {
                    id: &doc.id,
                    text: &doc.text,
                    label,
                };
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            out.flush().map_err(|e| Error::io(path, e))?;
        }
        DataFormat::Csv => {
            let mut out = csv::Writer::from_writer(file);
            out.write_record(["id", "text", "label"])?;
            for (doc, label) in docs.iter().zip(labels) {
                let label = label.map(|l| l.to_string()).unwrap_or_default();
                out.write_record([doc.id.as_str(), doc.text.as_str(), label.as_str()])?;
            }
            out.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

fn check_unique_ids(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
    }
    Ok(())
}

/// Fails if any document id appears in both sets.
pub fn check_disjoint(labeled: &LabeledDataset, unlabeled: &UnlabeledDataset) -> Result<()> {
    let ids: HashSet<&str> = labeled.docs.iter().map(|d| d.id.as_str()).collect();
    match unlabeled.docs.iter().find(|d| ids.contains(d.id.as_str())) {
        Some(doc) => Err(Error::OverlappingIds(doc.id.clone())),
        None => Ok(()),
    }
}

/// Stratified train/dev split.
///
/// Class `k` with `n` samples sends `max(1, round(ratio * n))` of them to
/// train, the rest to dev. Both halves keep the input row order.
pub fn split_train_dev(
    data: &LabeledDataset,
    ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Validation(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let mut rng = seeded_rng(seed, 0x5b17);
    let mut train = Vec::new();
    let mut dev = Vec::new();
    for class in 0..data.num_classes {
        let mut rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() == 1 {
            warn!("class {class} has a single sample; it goes to train and dev lacks the class");
        }
        rows.shuffle(&mut rng);
        let n_train = ((ratio * rows.len() as f64).round() as usize).clamp(1, rows.len());
        train.extend_from_slice(&rows[..n_train]);
        dev.extend_from_slice(&rows[n_train..]);
    }
    train.sort_unstable();
    dev.sort_unstable();
    Ok((data.subset(&train), data.subset(&dev)))
}

/// Empirical class distribution of the labeled set.
pub fn class_prior(data: &LabeledDataset) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len() as f64;
    Ok(data
        .class_counts()
        .into_iter()
        .map(|c| c as f64 / n)
        .collect())
}

/// Seeded sampling of at most `per_class` documents from each class.
pub fn subsample_per_class(data: &LabeledDataset, per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = seeded_rng(seed, 0x5a3e);
    let mut keep = Vec::new();
    for class in 0..data.num_classes {
        let mut rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels[i] == class)
            .collect();
        rows.shuffle(&mut rng);
        rows.truncate(per_class);
        keep.extend(rows);
    }
    keep.sort_unstable();
    data.subset(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        path
    }

    fn dataset(labels: &[usize], num_classes: usize) -> LabeledDataset {
        let docs = (0..labels.len())
            .map(|i| Document::new(format!("d{i}"), format!("text {i}")))
            .collect();
        LabeledDataset::new(docs, labels.to_vec(), num_classes).unwrap()
    }

    #[test]
    fn loads_labeled_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "x.jsonl",
            "{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{\"id\":\"b\",\"text\":\"y\",\"label\":1}\n",
        );
        let Dataset::Labeled(ds) = load_dataset(&path, DataFormat::Jsonl, None).unwrap() else {
            panic!("expected labeled");
        };
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn loads_unlabeled_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = (0..5)
            .map(|i| format!("{{\"id\":\"u{i}\",\"text\":\"t\",\"label\":null}}\n"))
            .collect();
        let path = write(&dir, "u.jsonl", &body);
        let Dataset::Unlabeled(ds) = load_dataset(&path, DataFormat::Jsonl, None).unwrap() else {
            panic!("expected unlabeled");
        };
        assert_eq!(ds.len(), 5);
    }

    #[test]
    fn mixed_labels_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "m.jsonl",
            "{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{\"id\":\"b\",\"text\":\"y\"}\n{\"id\":\"c\",\"text\":\"z\",\"label\":1}\n",
        );
        assert!(matches!(
            load_dataset(&path, DataFormat::Jsonl, None),
            Err(Error::MixedLabels(_))
        ));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "bad.jsonl",
            "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n",
        );
        match load_dataset(&path, DataFormat::Jsonl, None) {
            Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "d.jsonl",
            "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n",
        );
        assert!(matches!(
            load_dataset(&path, DataFormat::Jsonl, None),
            Err(Error::DuplicateId(id)) if id == "a"
        ));
    }

    #[test]
    fn class_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "x.jsonl",
            "{\"id\":\"a\",\"text\":\"x\",\"label\":0}\n{\"id\":\"b\",\"text\":\"y\",\"label\":2}\n",
        );
        let Dataset::Labeled(ds) = load_dataset(&path, DataFormat::Jsonl, Some(5)).unwrap() else {
            panic!()
        };
        assert_eq!(ds.num_classes(), 5);
        assert!(matches!(
            load_dataset(&path, DataFormat::Jsonl, Some(2)),
            Err(Error::ClassOverrideTooSmall {
                given: 2,
                observed: 3
            })
        ));
    }

    #[test]
    fn csv_quoting_and_empty_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "u.csv",
            "id,text,label\nu1,\"hello, \"\"world\"\"\",\nu2,,\n",
        );
        let Dataset::Unlabeled(ds) = load_dataset(&path, DataFormat::Csv, None).unwrap() else {
            panic!()
        };
        assert_eq!(ds.docs()[0].text, "hello, \"world\"");
        assert_eq!(ds.docs()[1].text, "");
    }

    #[test]
    fn split_is_stratified_80_20() {
        let ds = dataset(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2);
        let (train, dev) = split_train_dev(&ds, 0.8, 7).unwrap();
        assert_eq!(train.class_counts(), vec![4, 4]);
        assert_eq!(dev.class_counts(), vec![1, 1]);
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let ds = dataset(&[0, 0, 0, 0, 1], 2);
        let (train, dev) = split_train_dev(&ds, 0.8, 1).unwrap();
        assert_eq!(train.class_counts()[1], 1);
        assert_eq!(dev.class_counts()[1], 0);
    }

    #[test]
    fn split_is_deterministic() {
        let ds = dataset(&[0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2], 3);
        assert_eq!(
            split_train_dev(&ds, 0.5, 3).unwrap(),
            split_train_dev(&ds, 0.5, 3).unwrap()
        );
    }

    #[test]
    fn prior_values() {
        assert_eq!(
            class_prior(&dataset(&[0, 1, 0, 1], 2)).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            class_prior(&dataset(&[0, 0, 0, 1], 2)).unwrap(),
            vec![0.75, 0.25]
        );
        let empty = LabeledDataset::new(vec![], vec![], 2).unwrap();
        assert!(matches!(class_prior(&empty), Err(Error::EmptyDataset)));
    }

    proptest! {
        #[test]
        fn split_partitions_ids(labels in prop::collection::vec(0usize..4, 1..60), seed in any::<u64>(), ratio in 0.05f64..0.95) {
            let ds = dataset(&labels, 4);
            let (train, dev) = split_train_dev(&ds, ratio, seed).unwrap();
            let mut ids: Vec<&str> = train.docs().iter().chain(dev.docs()).map(|d| d.id.as_str()).collect();
            prop_assert_eq!(ids.len(), ds.len());
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), ds.len());
        }

        #[test]
        fn prior_is_simplex(labels in prop::collection::vec(0usize..5, 1..100)) {
            let prior = class_prior(&dataset(&labels, 5)).unwrap();
            prop_assert!((prior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(prior.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }

        #[test]
        fn jsonl_round_trip(texts in prop::collection::vec(".*", 1..12), with_labels in any::<bool>()) {
            let dir = tempfile::tempdir().unwrap();
            let docs: Vec<Document> = texts.iter().enumerate().map(|(i, t)| Document::new(format!("id-{i}"), t.clone())).collect();
            let first = dir.path().join("a.jsonl");
            let second = dir.path().join("b.jsonl");
            if with_labels {
                let labels = (0..docs.len()).map(|i| i % 2).collect();
                let ds = LabeledDataset::new(docs, labels, 2).unwrap();
                ds.save(&first).unwrap();
                let loaded = load_labeled(&first, Some(2)).unwrap();
                prop_assert_eq!(&loaded, &ds);
                loaded.save(&second).unwrap();
            } else {
                let ds = UnlabeledDataset::new(docs).unwrap();
                ds.save(&first).unwrap();
                let loaded = load_unlabeled(&first).unwrap();
                prop_assert_eq!(&loaded, &ds);
                loaded.save(&second).unwrap();
            }
            prop_assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
        }
    }
}
