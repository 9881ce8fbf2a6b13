use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};

/// Print a line to stdout, tolerating a closed pipe.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

/// Same for status lines on stderr.
macro_rules! eout {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stderr(), $($arg)*);
    }};
}
use clinex_core::annotation::Document;
use clinex_core::bio::{self, TagInventory};
use clinex_core::checkpoint;
use clinex_core::corpus::{
    read_corpus, read_manifest, write_corpus, write_manifest, AnnotatedDoc, Corpus, Split,
};
use clinex_core::crf;
use clinex_core::eval::{self, EvalReport, Task};
use clinex_core::generate::{generate, GeneratorConfig};
use clinex_core::pipeline::{train_pipeline, PipelineBundle};
use clinex_core::sampling::{split_counts, split_ratios, RecordMeta, SamplingConfig};
use clinex_core::scheme::SchemeRegistry;
use clinex_core::segment::segment;
use clinex_core::span;
use clinex_core::validate::validate;

use crate::config::ExperimentFile;
use crate::manifest::RunTimer;
use crate::{Cli, Command};

pub fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let scheme = load_scheme(cli)?;
    match &cli.command {
        Command::Validate { corpus, out } => cmd_validate(cli, &scheme, corpus, out.as_deref()),
        Command::Convert { input, out } => cmd_convert(cli, &scheme, input, out),
        Command::Encode { corpus, out } => cmd_encode(cli, &scheme, corpus, out),
        Command::Generate { out, recipe, count } => {
            cmd_generate(cli, &scheme, out, recipe.as_deref(), *count)
        }
        Command::Sample { corpus, quota, cap, out } => {
            cmd_sample(cli, &scheme, corpus, *quota, *cap, out)
        }
        Command::Split { corpus, counts, ratios } => {
            cmd_split(cli, corpus, counts.as_deref(), ratios.as_deref())
        }
        Command::TrainEntity { corpus, out } => cmd_train_entity(cli, &scheme, corpus, out),
        Command::TrainSpan { corpus, out } => cmd_train_span(cli, &scheme, corpus, out),
        Command::Extract { corpus, entity_model, span_model, split, out } => cmd_extract(
            cli,
            &scheme,
            corpus,
            entity_model,
            span_model,
            split.as_deref(),
            out,
            None,
        ),
        Command::Preannotate { corpus, entity_model, span_model, drop_rate, out } => cmd_extract(
            cli,
            &scheme,
            corpus,
            entity_model,
            span_model,
            None,
            out,
            Some(*drop_rate),
        ),
        Command::Score { task, gold, pred, out } => {
            cmd_score(cli, &scheme, task, gold, pred, out.as_deref())
        }
        Command::Iaa { a, b, out } => cmd_iaa(cli, &scheme, a, b, out.as_deref()),
        Command::LearningCurve { corpus, fractions, seeds, out } => {
            cmd_learning_curve(cli, &scheme, corpus, fractions, seeds, out)
        }
    }
}

fn load_scheme(cli: &Cli) -> anyhow::Result<SchemeRegistry> {
    match &cli.scheme {
        None => Ok(clinex_core::builtin_scheme()),
        Some(path) => SchemeRegistry::from_path(path)
            .with_context(|| format!("loading scheme {}", path.display())),
    }
}

fn splits_of(corpus: &Corpus) -> (Vec<AnnotatedDoc>, Vec<AnnotatedDoc>, Vec<AnnotatedDoc>) {
    let take = |s: Split| -> Vec<AnnotatedDoc> {
        corpus.docs.iter().filter(|d| d.split == s).cloned().collect()
    };
    (take(Split::Train), take(Split::Dev), take(Split::Test))
}

fn config_json(cli: &Cli, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "scheme": cli.scheme.as_ref().map(|p| p.display().to_string()),
        "strict": cli.strict,
        "detail": extra,
    })
}

fn print_report(report: &EvalReport) {
    out!(
        "P={:.4} R={:.4} F1={:.4}",
        report.precision, report.recall, report.f1
    );
    out!(
        "{:<34} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
        "type", "gold", "pred", "match", "P", "R", "F1"
    );
    for row in &report.per_type {
        if row.gold == 0 && row.pred == 0 {
            continue;
        }
        out!(
            "{:<34} {:>6} {:>6} {:>6} {:>8.4} {:>8.4} {:>8.4}",
            row.name, row.gold, row.pred, row.matched, row.precision, row.recall, row.f1
        );
    }
}

fn cmd_validate(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let corpus = read_corpus(corpus_dir, scheme)?;
    let mut total = 0usize;
    let mut lines = Vec::new();
    for d in &corpus.docs {
        for v in validate(&d.ann, &d.doc, scheme) {
            out!("{}\t{}\t{}", d.doc.doc_id, v.kind, v.message);
            lines.push(serde_json::json!({
                "doc_id": d.doc.doc_id,
                "kind": v.kind.to_string(),
                "message": v.message,
            }));
            total += 1;
        }
    }
    if let Some(path) = out {
        let mut body = String::new();
        for l in &lines {
            body.push_str(&l.to_string());
            body.push('\n');
        }
        checkpoint::write_atomic(path, body.as_bytes())?;
    }
    eout!(
        "checked {} documents: {} violation(s)",
        corpus.docs.len(),
        total
    );
    if total > 0 && cli.strict {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_convert(
    cli: &Cli,
    scheme: &SchemeRegistry,
    input: &Path,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("convert");
    let corpus = read_corpus(input, scheme)?;
    write_corpus(out, &corpus, scheme)?;
    timer.write(out, cli.seed, &[input], &[out], config_json(cli, serde_json::json!({})))?;
    eout!("converted {} documents", corpus.docs.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_encode(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("encode");
    let corpus = read_corpus(corpus_dir, scheme)?;
    let tags = TagInventory::from_scheme(scheme);
    let mut body = String::new();
    for d in &corpus.docs {
        let chars = d.doc.chars();
        for seg in segment(&chars) {
            let local: std::collections::BTreeSet<_> = d
                .ann
                .entities
                .iter()
                .filter(|e| e.start >= seg.start && e.end <= seg.end)
                .map(|e| clinex_core::Entity::new(e.etype, e.start - seg.start, e.end - seg.start))
                .collect();
            let seq = bio::encode(&local, seg.end - seg.start)
                .with_context(|| format!("encoding {}", d.doc.doc_id))?;
            for (c, tag) in chars[seg.start..seg.end].iter().zip(&seq.tags) {
                body.push(*c);
                body.push('\t');
                body.push_str(tags.name(*tag));
                body.push('\n');
            }
            body.push('\n');
        }
    }
    checkpoint::write_atomic(out, body.as_bytes())?;
    timer.write(
        out.parent().unwrap_or(Path::new(".")),
        cli.seed,
        &[corpus_dir],
        &[out],
        config_json(cli, serde_json::json!({})),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_generate(
    cli: &Cli,
    scheme: &SchemeRegistry,
    out: &Path,
    recipe: Option<&Path>,
    count: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("generate");
    let mut cfg = match recipe {
        None => GeneratorConfig::builtin(scheme),
        Some(p) => GeneratorConfig::from_path(p, scheme)?,
    };
    if let Some(n) = count {
        cfg.set_record_count(n);
    }
    cfg.set_seed(cli.seed);
    let corpus = generate(&cfg)?;
    write_corpus(out, &corpus, scheme)?;
    timer.write(
        out,
        cli.seed,
        &[],
        &[out],
        config_json(
            cli,
            serde_json::json!({"records": cfg.record_count(), "recipe": recipe.map(|p| p.display().to_string())}),
        ),
    )?;
    eout!(
        "generated {} records ({} documents)",
        cfg.record_count(),
        corpus.docs.len()
    );
    Ok(ExitCode::SUCCESS)
}

/// The per-record condition key: the surface of the record's first
/// disease entity, or "unknown".
fn record_conditions(corpus: &Corpus, scheme: &SchemeRegistry) -> Vec<RecordMeta> {
    let mut by_record: BTreeMap<&str, (&str, Option<String>)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for d in &corpus.docs {
        let slot = by_record.entry(&d.doc.record_id).or_insert_with(|| {
            order.push(&d.doc.record_id);
            (d.doc.department.as_str(), None)
        });
        if slot.1.is_none() {
            for e in &d.ann.entities {
                if scheme.entity_def(e.etype).super_name == "Disease" {
                    slot.1 = Some(d.doc.slice(e.start, e.end));
                    break;
                }
            }
        }
    }
    order
        .into_iter()
        .map(|r| {
            let (dept, cond) = &by_record[r];
            RecordMeta {
                record_id: r.to_string(),
                department: dept.to_string(),
                condition: cond.clone().unwrap_or_else(|| "unknown".to_string()),
            }
        })
        .collect()
}

fn cmd_sample(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    quota: usize,
    cap: usize,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("sample");
    let corpus = read_corpus(corpus_dir, scheme)?;
    let records = record_conditions(&corpus, scheme);
    let cfg = SamplingConfig { quota, cap, seed: cli.seed };
    let selected = clinex_core::sampling::stratified_sample(&records, &cfg)?;
    let mut body = String::new();
    for id in &selected {
        body.push_str(id);
        body.push('\n');
    }
    checkpoint::write_atomic(out, body.as_bytes())?;
    timer.write(
        out.parent().unwrap_or(Path::new(".")),
        cli.seed,
        &[corpus_dir],
        &[out],
        config_json(cli, serde_json::json!({"quota": quota, "cap": cap})),
    )?;
    eout!("selected {} of {} records", selected.len(), records.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_split(
    cli: &Cli,
    corpus_dir: &Path,
    counts: Option<&[usize]>,
    ratios: Option<&[f64]>,
) -> anyhow::Result<ExitCode> {
    let mut entries = read_manifest(corpus_dir)?;
    let mut ids: Vec<String> = entries.iter().map(|e| e.record_id.clone()).collect();
    ids.sort();
    ids.dedup();

    let (train, dev, test) = match (counts, ratios) {
        (Some(c), _) => {
            if c.len() != 3 {
                bail!("--counts needs exactly three values, e.g. 300,100,100");
            }
            split_counts(&ids, (c[0], c[1], c[2]), cli.seed)?
        }
        (None, Some(r)) => {
            if r.len() != 3 {
                bail!("--ratios needs exactly three values, e.g. 0.6,0.2,0.2");
            }
            split_ratios(&ids, (r[0], r[1], r[2]), cli.seed)?
        }
        (None, None) => bail!("one of --counts or --ratios is required"),
    };
    let lookup: BTreeMap<&String, Split> = train
        .iter()
        .map(|r| (r, Split::Train))
        .chain(dev.iter().map(|r| (r, Split::Dev)))
        .chain(test.iter().map(|r| (r, Split::Test)))
        .collect();
    for e in entries.iter_mut() {
        e.split = lookup.get(&e.record_id).copied().unwrap_or(Split::None);
    }
    write_manifest(corpus_dir, &entries)?;
    eout!(
        "split {} records: train={} dev={} test={}",
        ids.len(),
        train.len(),
        dev.len(),
        test.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_splits(
    corpus_dir: &Path,
    scheme: &SchemeRegistry,
) -> anyhow::Result<(Vec<AnnotatedDoc>, Vec<AnnotatedDoc>)> {
    let corpus = read_corpus(corpus_dir, scheme)?;
    let (train, dev, _) = splits_of(&corpus);
    if train.is_empty() || dev.is_empty() {
        bail!("corpus needs non-empty train and dev splits (run `clinex split` first)");
    }
    Ok((train, dev))
}

fn cmd_train_entity(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("train-entity");
    let experiment = ExperimentFile::load(cli.config.as_deref())?;
    let cfg = experiment.pipeline_config(cli.seed);
    let (train, dev) = train_splits(corpus_dir, scheme)?;
    let tags = TagInventory::from_scheme(scheme);
    let (model, report) = crf::train(&train, &dev, &cfg.features, tags, &cfg.crf)?;
    checkpoint::save_crf(&model, out)?;
    timer.write(
        out.parent().unwrap_or(Path::new(".")),
        cli.seed,
        &[corpus_dir],
        &[out],
        config_json(cli, serde_json::to_value(&cfg.crf)?),
    )?;
    out!(
        "entity model: {} epochs, best dev F1 {:.4} at epoch {}",
        report.epochs_run, report.best_dev_f1, report.best_epoch
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train_span(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("train-span");
    let experiment = ExperimentFile::load(cli.config.as_deref())?;
    let cfg = experiment.pipeline_config(cli.seed);
    let (train, dev) = train_splits(corpus_dir, scheme)?;
    let (attr, rel, attr_report, rel_report) = span::train_span_models(
        &train,
        &dev,
        &cfg.features,
        scheme,
        &cfg.span,
        cfg.alpha,
        cfg.window,
    )?;
    checkpoint::save_span(&attr, &rel, scheme, out)?;
    timer.write(
        out.parent().unwrap_or(Path::new(".")),
        cli.seed,
        &[corpus_dir],
        &[out],
        config_json(cli, serde_json::to_value(&cfg.span)?),
    )?;
    out!(
        "attribute model: best dev F1 {:.4} at epoch {}",
        attr_report.best_dev_f1, attr_report.best_epoch
    );
    out!(
        "relation model: best dev F1 {:.4} at epoch {}",
        rel_report.best_dev_f1, rel_report.best_epoch
    );
    Ok(ExitCode::SUCCESS)
}

fn load_bundle(
    entity_model: &Path,
    span_model: &Path,
    scheme: &SchemeRegistry,
) -> anyhow::Result<PipelineBundle> {
    let crf_model = checkpoint::load_crf(entity_model, scheme)?;
    let (attr, rel) = checkpoint::load_span(span_model, scheme)?;
    Ok(PipelineBundle::new(crf_model, attr, rel, scheme.clone())?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_extract(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    entity_model: &Path,
    span_model: &Path,
    split: Option<&str>,
    out: &Path,
    drop_rate: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start(if drop_rate.is_some() { "preannotate" } else { "extract" });
    let bundle = load_bundle(entity_model, span_model, scheme)?;
    let corpus = read_corpus(corpus_dir, scheme)?;
    let wanted: Vec<&AnnotatedDoc> = match split {
        None => corpus.docs.iter().collect(),
        Some(name) => {
            let split = match name {
                "train" => Split::Train,
                "dev" => Split::Dev,
                "test" => Split::Test,
                "none" => Split::None,
                other => bail!("unknown split `{other}`"),
            };
            corpus.docs.iter().filter(|d| d.split == split).collect()
        }
    };
    let docs: Vec<Document> = wanted.iter().map(|d| d.doc.clone()).collect();
    let anns = match drop_rate {
        None => bundle.extract_all(&docs),
        Some(rate) => bundle.preannotate(&docs, rate, cli.seed)?,
    };
    let predicted = Corpus {
        docs: wanted
            .iter()
            .zip(anns)
            .map(|(d, ann)| AnnotatedDoc { doc: d.doc.clone(), ann, split: d.split })
            .collect(),
    };
    write_corpus(out, &predicted, scheme)?;
    timer.write(
        out,
        cli.seed,
        &[corpus_dir, entity_model, span_model],
        &[out],
        config_json(cli, serde_json::json!({"split": split, "drop_rate": drop_rate})),
    )?;
    eout!("wrote {} annotated documents", predicted.docs.len());
    Ok(ExitCode::SUCCESS)
}

fn read_sets(
    dir: &Path,
    scheme: &SchemeRegistry,
) -> anyhow::Result<Vec<clinex_core::AnnotationSet>> {
    Ok(read_corpus(dir, scheme)?.docs.into_iter().map(|d| d.ann).collect())
}

fn cmd_score(
    _cli: &Cli,
    scheme: &SchemeRegistry,
    task: &str,
    gold: &Path,
    pred: &Path,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let task: Task = task.parse()?;
    let gold_sets = read_sets(gold, scheme)?;
    let pred_sets = read_sets(pred, scheme)?;
    let report = eval::score(task, &gold_sets, &pred_sets, scheme);
    print_report(&report);
    if let Some(path) = out {
        let mut body = serde_json::to_string(&report)?;
        body.push('\n');
        checkpoint::write_atomic(path, body.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_iaa(
    _cli: &Cli,
    scheme: &SchemeRegistry,
    a: &Path,
    b: &Path,
    out: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let a_sets = read_sets(a, scheme)?;
    let b_sets = read_sets(b, scheme)?;
    let reports = eval::iaa(&a_sets, &b_sets, scheme)?;
    for r in &reports {
        out!(
            "{:<9} P={:.4} R={:.4} F1={:.4} (|a|={} |b|={} |a∩b|={})",
            r.task.as_str(),
            r.precision,
            r.recall,
            r.f1,
            r.gold_count,
            r.pred_count,
            r.matched
        );
    }
    if let Some(path) = out {
        let mut body = String::new();
        for r in &reports {
            body.push_str(&serde_json::to_string(r)?);
            body.push('\n');
        }
        checkpoint::write_atomic(path, body.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_learning_curve(
    cli: &Cli,
    scheme: &SchemeRegistry,
    corpus_dir: &Path,
    fractions: &[f64],
    seeds: &[u64],
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let timer = RunTimer::start("learning-curve");
    let experiment = ExperimentFile::load(cli.config.as_deref())?;
    let base = experiment.pipeline_config(cli.seed);
    let corpus = read_corpus(corpus_dir, scheme)?;
    let (pool, dev, test) = splits_of(&corpus);
    if pool.is_empty() || dev.is_empty() || test.is_empty() {
        bail!("corpus needs train, dev and test splits (run `clinex split` first)");
    }
    let scheme2 = scheme.clone();
    let trainer = move |train: &[AnnotatedDoc], dev: &[AnnotatedDoc], seed: u64| {
        let mut cfg = base.clone();
        cfg.crf.seed = seed;
        cfg.span.seed = seed;
        Ok(train_pipeline(train, dev, &scheme2, &cfg)?.0)
    };
    let cells = eval::learning_curve(&pool, &dev, &test, fractions, seeds, trainer)?;

    out!(
        "{:>9} {:>10} {:>9} {:>9}  per-seed",
        "fraction", "task", "mean F1", "std"
    );
    let mut body = String::new();
    for cell in &cells {
        let runs: Vec<String> = cell.runs.iter().map(|v| format!("{v:.4}")).collect();
        out!(
            "{:>9.2} {:>10} {:>9.4} {:>9.4}  [{}]",
            cell.fraction,
            cell.task.as_str(),
            cell.mean_f1,
            cell.std_f1,
            runs.join(", ")
        );
        body.push_str(&serde_json::to_string(cell)?);
        body.push('\n');
    }
    checkpoint::write_atomic(out, body.as_bytes())?;
    timer.write(
        out.parent().unwrap_or(Path::new(".")),
        cli.seed,
        &[corpus_dir],
        &[out],
        config_json(
            cli,
            serde_json::json!({"fractions": fractions, "seeds": seeds}),
        ),
    )?;
    Ok(ExitCode::SUCCESS)
}
