//! Round-trip properties for the BIO codec and the standoff format.

use std::collections::BTreeSet;

use clinex_core::annotation::{
    AnnotationSet, Attribute, Document, Entity, ModifyOutcome, Relation,
};
use clinex_core::bio;
use clinex_core::scheme::{builtin_scheme, AttributeTypeId, RelationTypeId};
use clinex_core::standoff::{parse_standoff, serialize_standoff};
use proptest::prelude::*;

const CJK_POOL: &[char] = &[
    '患', '者', '头', '晕', '乏', '力', '咳', '嗽', '胸', '闷', '热', '血', '压', '高',
    '心', '病', '肺', '查', '诊', '治', '药', '术', '科', '史', '。', '，', 'A', 'x', '3', '/',
];

fn flat_entities() -> impl Strategy<Value = (usize, BTreeSet<Entity>)> {
    // Sequential (gap, len, type) triples always produce a flat layout.
    prop::collection::vec((0usize..4, 1usize..5, 0u16..18), 0..8).prop_map(|parts| {
        let mut pos = 0usize;
        let mut out = BTreeSet::new();
        for (gap, len, ty) in parts {
            pos += gap;
            out.insert(Entity::new(clinex_core::scheme::EntityTypeId(ty), pos, pos + len));
            pos += len;
        }
        (pos + 2, out)
    })
}

proptest! {
    #[test]
    fn decode_encode_is_identity_on_flat_sets((len, entities) in flat_entities()) {
        let seq = bio::encode(&entities, len).unwrap();
        prop_assert_eq!(seq.len(), len);
        let decoded = bio::decode(&seq);
        prop_assert_eq!(decoded, entities);
    }

    #[test]
    fn decoded_sets_are_always_flat(tags in prop::collection::vec(0u16..37, 0..40)) {
        let seq = bio::TagSequence { tags };
        let decoded = bio::decode(&seq);
        let spans: Vec<(usize, usize)> = decoded.iter().map(|e| (e.start, e.end)).collect();
        let mut sorted = spans.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            prop_assert!(w[0].1 <= w[1].0);
        }
    }
}

fn arb_annotation_set() -> impl Strategy<Value = (Document, AnnotationSet)> {
    (flat_entities(), any::<u64>()).prop_map(|((len, entities), salt)| {
        let mut rng_state = salt;
        let mut next = move |n: usize| {
            // xorshift; gives deterministic picks without a rand dep here
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state % n.max(1) as u64) as usize
        };
        let text: String = (0..len).map(|i| CJK_POOL[(i * 7 + next(97)) % CJK_POOL.len()]).collect();
        let doc = Document::new("prop-doc", text);
        let mut ann = AnnotationSet::new("prop-doc");
        ann.entities = entities.clone();
        let ents: Vec<Entity> = entities.iter().copied().collect();
        if ents.len() >= 2 {
            for _ in 0..next(4) {
                let h = ents[next(ents.len())];
                let t = ents[next(ents.len())];
                if h != t {
                    ann.relations
                        .insert(Relation::new(RelationTypeId(next(10) as u16), h, t));
                }
            }
        }
        for _ in 0..next(4) {
            if !ents.is_empty() {
                ann.attributes.insert(Attribute::new(
                    AttributeTypeId(next(10) as u16),
                    ents[next(ents.len())],
                ));
            }
        }
        let rels: Vec<Relation> = ann.relations.iter().copied().collect();
        for r in rels {
            if next(3) == 0 {
                let outcome = match next(3) {
                    0 => ModifyOutcome::Improve,
                    1 => ModifyOutcome::Worsen,
                    _ => ModifyOutcome::Unspecified,
                };
                ann.modify_outcomes.insert(r, outcome);
            }
        }
        (doc, ann)
    })
}

proptest! {
    #[test]
    fn standoff_round_trip_preserves_sets((doc, ann) in arb_annotation_set()) {
        let scheme = builtin_scheme();
        let payload = serialize_standoff(&ann, &doc, &scheme);
        let (parsed, _) = parse_standoff(&doc, &payload, &scheme, "prop.ann").unwrap();
        prop_assert_eq!(&parsed, &ann);

        // Canonical form: serializing again is byte-identical.
        let payload2 = serialize_standoff(&parsed, &doc, &scheme);
        prop_assert_eq!(payload, payload2);
    }
}

#[test]
fn cjk_offsets_survive_the_file_format() {
    let scheme = builtin_scheme();
    let doc = Document::new("d", "患者右侧胸痛，无恶心呕吐。");
    let sra = scheme.entity_type("Self-Reported Abnormality").unwrap();
    let mut ann = AnnotationSet::new("d");
    ann.entities.insert(Entity::new(sra, 2, 6));
    ann.entities.insert(Entity::new(sra, 8, 12));
    let payload = serialize_standoff(&ann, &doc, &scheme);
    assert!(payload.contains("右侧胸痛"));
    assert!(payload.contains("Self-Reported-Abnormality 2 6"));
    let (parsed, _) = parse_standoff(&doc, &payload, &scheme, "cjk.ann").unwrap();
    assert_eq!(parsed, ann);
}
