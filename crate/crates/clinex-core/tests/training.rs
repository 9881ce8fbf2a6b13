//! Trainer behavior on generator-planted, separable data.

use clinex_core::bio::TagInventory;
use clinex_core::corpus::AnnotatedDoc;
use clinex_core::crf::{self, TrainConfig};
use clinex_core::features::FeatureConfig;
use clinex_core::generate::{generate, GeneratorConfig};
use clinex_core::scheme::builtin_scheme;
use clinex_core::span::train_span_models;

fn small_features() -> FeatureConfig {
    FeatureConfig { window: 2, hash_dim: 1 << 15 }
}

fn split_corpus(records: usize, seed: u64) -> (Vec<AnnotatedDoc>, Vec<AnnotatedDoc>) {
    let scheme = builtin_scheme();
    let mut cfg = GeneratorConfig::builtin(&scheme);
    cfg.set_record_count(records);
    cfg.set_seed(seed);
    let corpus = generate(&cfg).unwrap();
    let recs = corpus.records();
    let n_dev = (recs.len() / 5).max(1);
    let dev_ids: Vec<String> = recs[..n_dev].iter().map(|(r, _)| r.clone()).collect();
    let train_ids: Vec<String> = recs[n_dev..].iter().map(|(r, _)| r.clone()).collect();
    (corpus.docs_of_records(&train_ids), corpus.docs_of_records(&dev_ids))
}

/// One fixed word and one fixed context per subtype: the strongest
/// possible lexical separability.
const SINGLE_PATTERN_RECIPE: &str = r#"
version = 1
[shape]
records = 25
docs_per_record = [2, 2]
sentences_per_doc = [2, 4]
relation_sentence_prob = 0.0
departments = ["内科"]
sections = ["主诉", "现病史"]

[[vocab]]
type = "Disease or Syndrome"
words = ["糖尿病"]
[[vocab]]
type = "Injury or Poisoning"
words = ["颅脑外伤"]
[[vocab]]
type = "Organ Damage"
words = ["肝损害"]
[[vocab]]
type = "Self-Reported Abnormality"
words = ["咳嗽"]
[[vocab]]
type = "Abnormal Test Result"
words = ["腹腔积液"]
[[vocab]]
type = "Test Process"
words = ["磁共振"]
[[vocab]]
type = "Test Result"
words = ["体温36.5℃"]
[[vocab]]
type = "Treatment"
words = ["化疗"]
[[vocab]]
type = "Operation"
words = ["局麻"]
[[vocab]]
type = "Prevention"
words = ["抗凝"]
[[vocab]]
type = "Care"
words = ["普食"]
[[vocab]]
type = "Drug"
words = ["青霉素"]
[[vocab]]
type = "Drug Dose"
words = ["5mg每日"]
[[vocab]]
type = "Body Part"
words = ["左膝盖"]
[[vocab]]
type = "Body Matter"
words = ["痰液"]
[[vocab]]
type = "Personal History"
words = ["吸烟史"]
[[vocab]]
type = "Equipment"
words = ["电刀"]
[[vocab]]
type = "Department"
words = ["急诊科"]

[[template]]
text = "患者诉{Self-Reported Abnormality}。"
[[template]]
text = "诊断为{Disease or Syndrome}。"
[[template]]
text = "伤后{Injury or Poisoning}。"
[[template]]
text = "评估{Organ Damage}。"
[[template]]
text = "见{Abnormal Test Result}。"
[[template]]
text = "完善{Test Process}。"
[[template]]
text = "测得{Test Result}。"
[[template]]
text = "予{Treatment}。"
[[template]]
text = "行{Operation}。"
[[template]]
text = "予{Prevention}。"
[[template]]
text = "给予{Care}。"
[[template]]
text = "服用{Drug}{Drug Dose}。"
[[template]]
text = "有{Personal History}。"
[[template]]
text = "于{Department}就诊。"
[[template]]
text = "累及{Body Part}。"
[[template]]
text = "取{Body Matter}送检。"
[[template]]
text = "使用{Equipment}。"
[[template]]
text = "随访记录完整。"
weight = 0.5
"#;

#[test]
fn crf_separates_single_pattern_corpus_within_ten_epochs() {
    let scheme = builtin_scheme();
    let mut gen = GeneratorConfig::from_toml_str(SINGLE_PATTERN_RECIPE, &scheme).unwrap();
    gen.set_seed(17);
    let corpus = generate(&gen).unwrap();
    assert!(corpus.docs.len() >= 50, "expected >= 50 docs, got {}", corpus.docs.len());
    let recs = corpus.records();
    let dev_ids: Vec<String> = recs[..5].iter().map(|(r, _)| r.clone()).collect();
    let train_ids: Vec<String> = recs[5..].iter().map(|(r, _)| r.clone()).collect();
    let train = corpus.docs_of_records(&train_ids);
    let dev = corpus.docs_of_records(&dev_ids);

    let cfg = TrainConfig {
        learning_rate: 0.1,
        max_epochs: 10,
        patience: 10,
        seed: 1,
        ..TrainConfig::default()
    };
    let tags = TagInventory::from_scheme(&scheme);
    let (_, report) = crf::train(&train, &dev, &small_features(), tags, &cfg).unwrap();
    assert_eq!(report.best_dev_f1, 1.0, "dev F1 trace {:?}", report.dev_f1s);
    assert!(report.best_epoch < 10);
}

#[test]
fn crf_training_is_deterministic_per_seed() {
    let scheme = builtin_scheme();
    let (train, dev) = split_corpus(8, 3);
    let cfg = TrainConfig { max_epochs: 3, patience: 5, seed: 9, ..TrainConfig::default() };
    let tags = TagInventory::from_scheme(&scheme);
    let (a, _) = crf::train(&train, &dev, &small_features(), tags.clone(), &cfg).unwrap();
    let (b, _) = crf::train(&train, &dev, &small_features(), tags, &cfg).unwrap();
    assert_eq!(a.em, b.em);
    assert_eq!(a.trans, b.trans);
}

#[test]
fn empty_dev_set_is_an_error() {
    let scheme = builtin_scheme();
    let (train, _) = split_corpus(4, 0);
    let tags = TagInventory::from_scheme(&scheme);
    let cfg = TrainConfig::default();
    assert!(crf::train(&train, &[], &small_features(), tags, &cfg).is_err());
}

#[test]
fn early_loss_is_non_increasing_on_a_tiny_corpus() {
    let scheme = builtin_scheme();
    let (train, dev) = split_corpus(5, 11);
    let cfg = TrainConfig {
        learning_rate: 2e-4,
        max_epochs: 3,
        patience: 5,
        seed: 2,
        ..TrainConfig::default()
    };
    let tags = TagInventory::from_scheme(&scheme);
    let (_, report) = crf::train(&train, &dev, &small_features(), tags, &cfg).unwrap();
    assert!(report.epoch_losses.len() >= 3);
    assert!(report.epoch_losses[1] <= report.epoch_losses[0] + 1e-9);
    assert!(report.epoch_losses[2] <= report.epoch_losses[1] + 1e-9);
}

#[test]
fn span_models_learn_planted_cues_and_triggers() {
    let scheme = builtin_scheme();
    let (train, dev) = split_corpus(100, 23);
    let cfg = TrainConfig {
        learning_rate: 0.2,
        l2_penalty: 0.01,
        max_epochs: 50,
        patience: 50,
        seed: 4,
        ..TrainConfig::default()
    };
    let (_, _, attr_report, rel_report) =
        train_span_models(&train, &dev, &small_features(), &scheme, &cfg, 0.5, 150).unwrap();
    assert!(attr_report.best_dev_f1 >= 0.9, "attr {:?}", attr_report.dev_f1s);
    assert!(rel_report.best_dev_f1 >= 0.9, "rel {:?}", rel_report.dev_f1s);
}

#[test]
fn span_training_is_deterministic_per_seed() {
    let scheme = builtin_scheme();
    let (train, dev) = split_corpus(6, 29);
    let cfg = TrainConfig { max_epochs: 2, patience: 3, seed: 31, ..TrainConfig::default() };
    let (a1, r1, _, _) =
        train_span_models(&train, &dev, &small_features(), &scheme, &cfg, 0.5, 150).unwrap();
    let (a2, r2, _, _) =
        train_span_models(&train, &dev, &small_features(), &scheme, &cfg, 0.5, 150).unwrap();
    assert_eq!(a1.w, a2.w);
    assert_eq!(a1.b, a2.b);
    assert_eq!(r1.w, r2.w);
    assert_eq!(r1.b, r2.b);
}

#[test]
fn attribute_free_corpus_trains_to_silence() {
    let scheme = builtin_scheme();
    let mut gen = GeneratorConfig::from_toml_str(SINGLE_PATTERN_RECIPE, &scheme).unwrap();
    gen.set_seed(3);
    let corpus = generate(&gen).unwrap();
    let recs = corpus.records();
    let dev_ids: Vec<String> = recs[..5].iter().map(|(r, _)| r.clone()).collect();
    let train_ids: Vec<String> = recs[5..].iter().map(|(r, _)| r.clone()).collect();
    let train = corpus.docs_of_records(&train_ids);
    let dev = corpus.docs_of_records(&dev_ids);
    assert!(train.iter().all(|d| d.ann.attributes.is_empty()));

    let cfg = TrainConfig {
        learning_rate: 0.2,
        l2_penalty: 0.01,
        max_epochs: 5,
        patience: 5,
        seed: 0,
        ..TrainConfig::default()
    };
    let (attr, _, _, _) =
        train_span_models(&train, &dev, &small_features(), &scheme, &cfg, 0.5, 150).unwrap();

    // The degenerate optimum: no attribute fires anywhere on train.
    use clinex_core::features::UnitFeatures;
    use clinex_core::span::pool_span;
    for ad in &train {
        let chars = ad.doc.chars();
        let unit = UnitFeatures::extract(&chars, &small_features());
        for e in &ad.ann.entities {
            let rep = pool_span(&unit, e.start, e.end);
            assert!(attr.predict(&rep, e.etype, &scheme).is_empty());
        }
    }
}
