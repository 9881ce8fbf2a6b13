//! The documented command-line behaviors, exercised end to end against
//! the compiled binary.

use std::path::Path;
use std::process::Output;

use clinex_core::annotation::{AnnotationSet, Document, Entity};
use clinex_core::corpus::{write_corpus, AnnotatedDoc, Corpus, Split};
use clinex_core::samples::demo_corpus;
use clinex_core::scheme::builtin_scheme;

fn run_cli(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_clinex"))
        .args(args)
        .output()
        .expect("running clinex")
}

#[test]
fn validate_strict_passes_on_the_demo_fixture() {
    let scheme = builtin_scheme();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &demo_corpus(&scheme), &scheme).unwrap();
    let o = run_cli(&["validate", "--corpus", dir.path().to_str().unwrap(), "--strict"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("0 violation(s)"));
}

#[test]
fn validate_strict_fails_on_an_injected_violation() {
    let scheme = builtin_scheme();
    let mut corpus = demo_corpus(&scheme);
    // Negation on a Test Result entity is inapplicable.
    let tr = scheme.entity_type("Test Result").unwrap();
    let neg = scheme.attribute("Negation").unwrap();
    let e = Entity::new(tr, 69, 74);
    let ann = &mut corpus.docs[0].ann;
    ann.entities.insert(e);
    ann.attributes.insert(clinex_core::Attribute::new(neg, e));

    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &corpus, &scheme).unwrap();

    let strict = run_cli(&["validate", "--corpus", dir.path().to_str().unwrap(), "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stdout).contains("AttributeApplicability"));

    // Without --strict the findings are reported but the run succeeds.
    let lenient = run_cli(&["validate", "--corpus", dir.path().to_str().unwrap()]);
    assert!(lenient.status.success());
}

#[test]
fn iaa_on_identical_directories_is_perfect() {
    let scheme = builtin_scheme();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &demo_corpus(&scheme), &scheme).unwrap();
    let p = dir.path().to_str().unwrap();
    let o = run_cli(&["iaa", "--a", p, "--b", p]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    for task in ["entity", "relation", "attribute"] {
        assert!(
            stdout.lines().any(|l| l.starts_with(task) && l.contains("F1=1.0000")),
            "missing perfect {task} line in:\n{stdout}"
        );
    }
}

fn entity_corpus(dir: &Path, doc_id: &str, spans: &[(usize, usize)]) {
    let scheme = builtin_scheme();
    let ty = scheme.entity_type("Self-Reported Abnormality").unwrap();
    let mut doc = Document::new(doc_id, "头晕乏力咳嗽胸闷反酸腹胀心悸耳鸣".repeat(2));
    doc.record_id = "r1".into();
    let mut ann = AnnotationSet::new(doc_id);
    for &(s, e) in spans {
        ann.entities.insert(Entity::new(ty, s, e));
    }
    let corpus = Corpus { docs: vec![AnnotatedDoc { doc, ann, split: Split::None }] };
    write_corpus(dir, &corpus, &scheme).unwrap();
}

#[test]
fn score_prints_the_documented_fixture_line() {
    let gold_dir = tempfile::tempdir().unwrap();
    let pred_dir = tempfile::tempdir().unwrap();
    entity_corpus(gold_dir.path(), "d1", &[(0, 2), (4, 6), (8, 10), (12, 14)]);
    entity_corpus(
        pred_dir.path(),
        "d1",
        &[(0, 2), (4, 6), (8, 10), (16, 18), (20, 22)],
    );
    let o = run_cli(&[
        "score",
        "--task",
        "entity",
        "--gold",
        gold_dir.path().to_str().unwrap(),
        "--pred",
        pred_dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.starts_with("P=0.6000 R=0.7500 F1=0.6667"),
        "unexpected first line:\n{stdout}"
    );
}

#[test]
fn usage_errors_exit_with_code_two() {
    let o = run_cli(&["score", "--task", "entity"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_type_names_are_reported_with_context() {
    let scheme = builtin_scheme();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &demo_corpus(&scheme), &scheme).unwrap();
    // Corrupt one annotation file with an unknown type name.
    let ann_path = dir.path().join("docs/demo-0001-d00.ann");
    let mut text = std::fs::read_to_string(&ann_path).unwrap();
    text = text.replace("Self-Reported-Abnormality", "Mystery-Type");
    std::fs::write(&ann_path, text).unwrap();

    let o = run_cli(&["validate", "--corpus", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("Mystery-Type"), "{stderr}");
    assert!(stderr.contains("demo-0001-d00.ann"), "{stderr}");
}
