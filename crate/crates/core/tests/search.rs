use std::collections::HashMap;

use autolabel::corpus::{class_prior, Document};
use autolabel::features::{Vectorizer, VectorizerKind};
use autolabel::labelmodel::{aggregate, threshold_filter, EmOptions, LabelModelKind};
use autolabel::lf::LfScore;
use autolabel::search::{run_search, SearchContext, SearchSpace};
use autolabel::synth::{generate_synthetic, PlantedLf, PlantedSpec, SyntheticCorpus};

fn corpus(lfs: &[(f64, f64)], seed: u64) -> SyntheticCorpus {
    let mut spec = PlantedSpec::toy(seed);
    spec.embedding_dim = 0;
    spec.n_unlabeled = 1000;
    spec.labeled_per_class = 25;
    spec.lfs = lfs
        .iter()
        .map(|&(accuracy, coverage)| PlantedLf { accuracy, coverage })
        .collect();
    generate_synthetic(&spec).unwrap()
}

fn tfidf(c: &SyntheticCorpus) -> Vectorizer {
    let docs: Vec<Document> = c.labeled.docs().iter().chain(c.unlabeled.docs()).cloned().collect();
    Vectorizer::fit(VectorizerKind::Tfidf, &docs).unwrap()
}

// Ranks planted LFs by their accuracy on the labeled votes.
fn scores(c: &SyntheticCorpus) -> Vec<LfScore> {
    let m = c.labeled_votes.n_lfs();
    let acc: Vec<f64> = (0..m)
        .map(|i| {
            let col = c.labeled_votes.column(i);
            let hits = col.iter().zip(c.labeled.labels()).filter(|(&v, &y)| v == y as i32).count();
            hits as f64 / col.len() as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| acc[b].total_cmp(&acc[a]).then(a.cmp(&b)));
    let mut out: Vec<LfScore> = (0..m)
        .map(|i| LfScore {
            lf_id: c.labeled_votes.lf_ids()[i].clone(),
            pool_index: i,
            dev_accuracy: acc[i],
            rank: 0,
        })
        .collect();
    for (r, &i) in order.iter().enumerate() {
        out[i].rank = r + 1;
    }
    out
}

fn weak_accuracy(c: &SyntheticCorpus, kind: LabelModelKind, columns: &[usize], t: f64) -> f64 {
    let prior = class_prior(&c.labeled).unwrap();
    let matrix = c.matrix.select_columns(columns).unwrap();
    let probs = aggregate(kind, &matrix, &prior, EmOptions::default()).unwrap();
    let weak = threshold_filter(&probs, &c.unlabeled, t, 4).unwrap();
    let row: HashMap<&str, usize> = c.unlabeled.docs().iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let ok = weak.samples.iter().filter(|s| c.truth[row[s.doc.id.as_str()]] == s.label).count();
    ok as f64 / weak.len().max(1) as f64
}

#[test]
fn stage_one_covers_the_grid() {
    let c = corpus(&[(0.85, 1.0), (0.75, 0.9), (0.65, 0.8), (0.6, 1.0)], 1);
    let prior = class_prior(&c.labeled).unwrap();
    let ctx = SearchContext::new(&c.matrix, &c.unlabeled, &c.labeled, &tfidf(&c), prior, 1).unwrap();
    let result = run_search(&ctx, &scores(&c), &SearchSpace::default()).unwrap();
    assert_eq!(result.stage1.len(), 12);
    assert_eq!(result.stage2.len(), 5);
    assert_eq!(result.evaluations(), 17);
    assert!(result.stage1.iter().all(|r| r.lf_ids.len() == 4));
    assert!(result.best.proxy_score >= result.stage1_score);
}

#[test]
fn dawid_skene_wins_when_it_dominates() {
    // One sharp voter, one sharp but sparse voter, four near-random ones.
    let c = corpus(&[(0.95, 1.0), (0.85, 0.5), (0.35, 1.0), (0.35, 1.0), (0.35, 1.0), (0.35, 1.0)], 11);
    let all: Vec<usize> = (0..6).collect();
    let thresholds = vec![0.0, 0.5];
    for &t in &thresholds {
        let ds = weak_accuracy(&c, LabelModelKind::DawidSkene, &all, t);
        let mv = weak_accuracy(&c, LabelModelKind::MajorityVote, &all, t);
        let fs = weak_accuracy(&c, LabelModelKind::FlyingSquid, &all, t);
        assert!(ds > mv && ds > fs, "t={t}: ds {ds} mv {mv} fs {fs}");
    }
    let prior = class_prior(&c.labeled).unwrap();
    let ctx = SearchContext::new(&c.matrix, &c.unlabeled, &c.labeled, &tfidf(&c), prior, 0).unwrap();
    let space = SearchSpace {
        thresholds,
        ..SearchSpace::default()
    };
    let result = run_search(&ctx, &scores(&c), &space).unwrap();
    assert_eq!(result.best.model, LabelModelKind::DawidSkene);
}

#[test]
fn accurate_subset_beats_coin_flips() {
    let mut lfs = vec![(0.8, 1.0); 5];
    lfs.extend([(0.25, 1.0); 5]);
    let c = corpus(&lfs, 5);
    let ranked = scores(&c);
    let top: Vec<usize> = (0..10).filter(|&i| ranked[i].rank <= 5).collect();
    assert_eq!(top, vec![0, 1, 2, 3, 4]);
    let all: Vec<usize> = (0..10).collect();
    let kind = LabelModelKind::MajorityVote;
    assert!(weak_accuracy(&c, kind, &top, 0.0) > weak_accuracy(&c, kind, &all, 0.0));

    let prior = class_prior(&c.labeled).unwrap();
    let ctx = SearchContext::new(&c.matrix, &c.unlabeled, &c.labeled, &tfidf(&c), prior, 0).unwrap();
    let result = run_search(&ctx, &ranked, &SearchSpace::default()).unwrap();
    let full = result.stage2.iter().find(|r| r.quantile == Some(1.0)).unwrap();
    assert!(result.best.proxy_score >= full.proxy_score);
    assert!(full.cached);
}

#[test]
fn repeated_search_is_identical() {
    let c = corpus(&[(0.8, 1.0), (0.7, 0.8), (0.6, 0.9)], 2);
    let prior = class_prior(&c.labeled).unwrap();
    let v = tfidf(&c);
    let run = || {
        let ctx = SearchContext::new(&c.matrix, &c.unlabeled, &c.labeled, &v, prior.clone(), 3).unwrap();
        run_search(&ctx, &scores(&c), &SearchSpace::default()).unwrap().without_timings()
    };
    assert_eq!(run(), run());
}
