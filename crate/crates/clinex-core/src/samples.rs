//! A small hand-annotated demonstration document: an admission note
//! fragment for a bronchiectasis work-up, fully annotated against the
//! built-in scheme. Used by tests and handy as a quick-start corpus.

use crate::annotation::{AnnotationSet, Attribute, Document, Entity, Relation};
use crate::corpus::{AnnotatedDoc, Corpus, Split};
use crate::scheme::SchemeRegistry;

const TEXT: &str = "患者右侧胸痛，吸气时加重，伴轻度胸闷，偶有咳嗽，无恶心呕吐，\
门诊医生拟支气管扩张收住入院。门诊查胸部CT平扫结果示两肺支气管稍扩张伴感染。\
急查血常规：白细胞计数6.6*10^9/L，中性粒细胞分类59.50%，淋巴细胞分类34.80%。\
患者目前诊断尚不明确，需鉴别：（第一个）考虑肺结核：多为低热、盗汗，\
胸部影像检查示肺上部斑片状浸润阴影。";

/// The demonstration note with its gold annotations.
pub fn bronchiectasis_note(scheme: &SchemeRegistry) -> AnnotatedDoc {
    let sra = scheme.entity_type("Self-Reported Abnormality").expect("scheme");
    let dos = scheme.entity_type("Disease or Syndrome").expect("scheme");
    let tp = scheme.entity_type("Test Process").expect("scheme");
    let atr = scheme.entity_type("Abnormal Test Result").expect("scheme");
    let suggest = scheme.relation("Information-Suggest-Status").expect("scheme");
    let cause = scheme.relation("Status-Cause-Information").expect("scheme");
    let attr = |name: &str| scheme.attribute(name).expect("scheme");

    let chest_pain = Entity::new(sra, 2, 6);
    let tightness = Entity::new(sra, 14, 18);
    let cough = Entity::new(sra, 21, 23);
    let nausea = Entity::new(sra, 25, 29);
    let bronchiectasis = Entity::new(dos, 35, 40);
    let ct_scan = Entity::new(tp, 48, 54);
    let ct_finding = Entity::new(atr, 57, 68);
    let tuberculosis = Entity::new(dos, 140, 143);
    let fever = Entity::new(sra, 146, 148);
    let sweats = Entity::new(sra, 149, 151);
    let shadows = Entity::new(atr, 159, 169);

    let mut doc = Document::new("demo-0001-d00", TEXT);
    doc.section = "现病史".into();
    doc.department = "呼吸内科".into();
    doc.record_id = "demo-0001".into();

    let mut ann = AnnotationSet::new(doc.doc_id.clone());
    for e in [
        chest_pain, tightness, cough, nausea, bronchiectasis, ct_scan, ct_finding,
        tuberculosis, fever, sweats, shadows,
    ] {
        ann.entities.insert(e);
    }
    for r in [
        Relation::new(suggest, chest_pain, bronchiectasis),
        Relation::new(suggest, tightness, bronchiectasis),
        Relation::new(suggest, cough, bronchiectasis),
        Relation::new(suggest, ct_scan, ct_finding),
        Relation::new(cause, tuberculosis, shadows),
    ] {
        ann.relations.insert(r);
    }
    for a in [
        Attribute::new(attr("Occasionality"), cough),
        Attribute::new(attr("Negation"), nausea),
        Attribute::new(attr("Uncertainty"), tuberculosis),
        Attribute::new(attr("Analysis"), fever),
        Attribute::new(attr("Analysis"), sweats),
        Attribute::new(attr("Analysis"), shadows),
    ] {
        ann.attributes.insert(a);
    }

    AnnotatedDoc { doc, ann, split: Split::None }
}

/// The demonstration note as a one-document corpus.
pub fn demo_corpus(scheme: &SchemeRegistry) -> Corpus {
    Corpus { docs: vec![bronchiectasis_note(scheme)] }
}
