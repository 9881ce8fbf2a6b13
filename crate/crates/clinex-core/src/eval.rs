//! The evaluation protocol: micro precision/recall/F1 over exact tuple
//! sets for the three tasks, per-type breakdowns, inter-annotator
//! agreement, and the learning-curve runner.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotationSet;
use crate::corpus::AnnotatedDoc;
use crate::error::{Error, Result};
use crate::pipeline::PipelineBundle;
use crate::scheme::SchemeRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Entity,
    Relation,
    Attribute,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Entity, Task::Relation, Task::Attribute];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Entity => "entity",
            Task::Relation => "relation",
            Task::Attribute => "attribute",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Task> {
        match s {
            "entity" => Ok(Task::Entity),
            "relation" => Ok(Task::Relation),
            "attribute" => Ok(Task::Attribute),
            other => Err(Error::Eval(format!("unknown task `{other}`"))),
        }
    }
}

/// `P = matched/|pred|`, `R = matched/|gold|`, `F1 = 2PR/(P+R)`; empty
/// denominators yield zero.
pub fn prf(gold: usize, pred: usize, matched: usize) -> (f64, f64, f64) {
    let p = if pred == 0 { 0.0 } else { matched as f64 / pred as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypeRow {
    pub name: String,
    pub gold: usize,
    pub pred: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
    pub matched: usize,
    pub per_type: Vec<TypeRow>,
}

fn tuples_by_type(
    ann: &AnnotationSet,
    task: Task,
    scheme: &SchemeRegistry,
) -> Vec<(String, String)> {
    // (type name, canonical tuple key); the key embeds every component
    // so equality is strict component-wise matching.
    match task {
        Task::Entity => ann
            .entities
            .iter()
            .map(|e| {
                (
                    scheme.entity_def(e.etype).name.clone(),
                    format!("{}:{}:{}", e.etype.0, e.start, e.end),
                )
            })
            .collect(),
        Task::Relation => ann
            .relations
            .iter()
            .map(|r| {
                (
                    scheme.relation_def(r.rtype).name.clone(),
                    format!(
                        "{}:{}:{}:{}|{}:{}:{}",
                        r.rtype.0,
                        r.head.etype.0,
                        r.head.start,
                        r.head.end,
                        r.tail.etype.0,
                        r.tail.start,
                        r.tail.end
                    ),
                )
            })
            .collect(),
        Task::Attribute => ann
            .attributes
            .iter()
            .map(|a| {
                (
                    scheme.attribute_def(a.atype).name.clone(),
                    format!(
                        "{}:{}:{}:{}",
                        a.atype.0, a.entity.etype.0, a.entity.start, a.entity.end
                    ),
                )
            })
            .collect(),
    }
}

/// Micro P/R/F1 by exact tuple matching, aligned per document id.
/// Documents present on only one side still contribute their counts.
pub fn score(
    task: Task,
    gold: &[AnnotationSet],
    pred: &[AnnotationSet],
    scheme: &SchemeRegistry,
) -> EvalReport {
    let mut by_type: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let type_names: Vec<String> = match task {
        Task::Entity => scheme.entity_types().iter().map(|d| d.name.clone()).collect(),
        Task::Relation => scheme.relation_types().iter().map(|d| d.name.clone()).collect(),
        Task::Attribute => scheme.attribute_types().iter().map(|d| d.name.clone()).collect(),
    };
    for name in &type_names {
        by_type.insert(name.clone(), (0, 0, 0));
    }

    let mut pred_by_doc: BTreeMap<&str, &AnnotationSet> = BTreeMap::new();
    for p in pred {
        pred_by_doc.insert(&p.doc_id, p);
    }
    let empty = AnnotationSet::default();
    let mut seen_docs: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();

    let mut tally = |g: &AnnotationSet, p: &AnnotationSet| {
        let g_tuples = tuples_by_type(g, task, scheme);
        let p_tuples = tuples_by_type(p, task, scheme);
        let g_keys: std::collections::BTreeSet<&String> =
            g_tuples.iter().map(|(_, k)| k).collect();
        for (name, _) in &g_tuples {
            by_type.entry(name.clone()).or_insert((0, 0, 0)).0 += 1;
        }
        for (name, key) in &p_tuples {
            let row = by_type.entry(name.clone()).or_insert((0, 0, 0));
            row.1 += 1;
            if g_keys.contains(key) {
                row.2 += 1;
            }
        }
    };

    for g in gold {
        seen_docs.insert(&g.doc_id);
        let p = pred_by_doc.get(g.doc_id.as_str()).copied().unwrap_or(&empty);
        tally(g, p);
    }
    for p in pred {
        if !seen_docs.contains(p.doc_id.as_str()) {
            tally(&empty, p);
        }
    }

    let mut gold_count = 0;
    let mut pred_count = 0;
    let mut matched = 0;
    let mut per_type = Vec::new();
    for (name, (g, p, m)) in by_type {
        gold_count += g;
        pred_count += p;
        matched += m;
        let (precision, recall, f1) = prf(g, p, m);
        per_type.push(TypeRow { name, gold: g, pred: p, matched: m, precision, recall, f1 });
    }
    let (precision, recall, f1) = prf(gold_count, pred_count, matched);
    EvalReport { task, precision, recall, f1, gold_count, pred_count, matched, per_type }
}

/// Inter-annotator agreement: one annotator's sets as ground truth,
/// the other's as predictions, for each of the three tasks. The F1
/// values are symmetric under swapping the annotators.
pub fn iaa(
    ann1: &[AnnotationSet],
    ann2: &[AnnotationSet],
    scheme: &SchemeRegistry,
) -> Result<[EvalReport; 3]> {
    let ids1: std::collections::BTreeSet<&str> =
        ann1.iter().map(|a| a.doc_id.as_str()).collect();
    let ids2: std::collections::BTreeSet<&str> =
        ann2.iter().map(|a| a.doc_id.as_str()).collect();
    if ids1 != ids2 {
        return Err(Error::Eval(format!(
            "annotator document sets differ: {} vs {} documents, first mismatch {:?}",
            ids1.len(),
            ids2.len(),
            ids1.symmetric_difference(&ids2).next()
        )));
    }
    Ok([
        score(Task::Entity, ann1, ann2, scheme),
        score(Task::Relation, ann1, ann2, scheme),
        score(Task::Attribute, ann1, ann2, scheme),
    ])
}

/// One learning-curve measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveCell {
    pub fraction: f64,
    pub task: Task,
    pub mean_f1: f64,
    pub std_f1: f64,
    /// Raw per-seed values, in seed order.
    pub runs: Vec<f64>,
}

/// Subsample the training pool at record granularity, train the full
/// pipeline per (fraction, seed), evaluate on the fixed test set and
/// aggregate. Jobs run in parallel with isolated state.
pub fn learning_curve<F>(
    pool: &[AnnotatedDoc],
    dev: &[AnnotatedDoc],
    test: &[AnnotatedDoc],
    fractions: &[f64],
    seeds: &[u64],
    trainer: F,
) -> Result<Vec<CurveCell>>
where
    F: Fn(&[AnnotatedDoc], &[AnnotatedDoc], u64) -> Result<PipelineBundle> + Sync,
{
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Eval(format!("fraction {f} outside (0, 1]")));
        }
    }
    // Canonical record order before any seeded shuffle.
    let mut record_ids: Vec<String> = Vec::new();
    {
        let mut seen = std::collections::BTreeSet::new();
        for d in pool {
            if seen.insert(d.doc.record_id.clone()) {
                record_ids.push(d.doc.record_id.clone());
            }
        }
        record_ids.sort();
    }
    if record_ids.is_empty() {
        return Err(Error::Eval("empty training pool".into()));
    }

    let jobs: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();

    let test_docs: Vec<_> = test.iter().map(|d| d.doc.clone()).collect();
    let test_gold: Vec<_> = test.iter().map(|d| d.ann.clone()).collect();

    let results: Result<Vec<(f64, u64, [f64; 3])>> = jobs
        .par_iter()
        .map(|&(fraction, seed)| {
            let n = (fraction * record_ids.len() as f64).round() as usize;
            if n == 0 {
                return Err(Error::Eval(format!(
                    "fraction {fraction} yields an empty training set"
                )));
            }
            let sampled = sample_records(&record_ids, n, seed);
            let wanted: std::collections::BTreeSet<&String> = sampled.iter().collect();
            let train_docs: Vec<AnnotatedDoc> = pool
                .iter()
                .filter(|d| wanted.contains(&d.doc.record_id))
                .cloned()
                .collect();
            let bundle = trainer(&train_docs, dev, seed)?;
            let preds = bundle.extract_all(&test_docs);
            let scheme = &bundle.scheme;
            let f1s = [
                score(Task::Entity, &test_gold, &preds, scheme).f1,
                score(Task::Relation, &test_gold, &preds, scheme).f1,
                score(Task::Attribute, &test_gold, &preds, scheme).f1,
            ];
            Ok((fraction, seed, f1s))
        })
        .collect();
    let results = results?;

    let mut cells = Vec::new();
    for &fraction in fractions {
        for (ti, task) in Task::ALL.iter().enumerate() {
            let runs: Vec<f64> = seeds
                .iter()
                .map(|&s| {
                    results
                        .iter()
                        .find(|(f, sd, _)| *f == fraction && *sd == s)
                        .map(|(_, _, f1s)| f1s[ti])
                        .unwrap_or(0.0)
                })
                .collect();
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            let var = runs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / runs.len() as f64;
            cells.push(CurveCell {
                fraction,
                task: *task,
                mean_f1: mean,
                std_f1: var.sqrt(),
                runs,
            });
        }
    }
    Ok(cells)
}

/// Seeded uniform sample of `n` record ids from a canonically sorted
/// list.
fn sample_records(sorted_ids: &[String], n: usize, seed: u64) -> Vec<String> {
    use rand::prelude::*;
    let mut ids: Vec<&String> = sorted_ids.iter().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids.into_iter().take(n).cloned().collect()
}
