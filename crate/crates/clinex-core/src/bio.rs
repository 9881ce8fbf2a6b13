//! BIO2 tag sequences and the conversion to and from entity sets.
//!
//! Decoding is total: an `I` tag whose predecessor is not a `B`/`I` of
//! the same subtype opens a new entity, so any tag sequence maps to a
//! flat entity set.

use std::collections::BTreeSet;

use crate::annotation::Entity;
use crate::error::{Error, Result};
use crate::scheme::{EntityTypeId, SchemeRegistry};

/// Compact tag id: 0 is `O`; subtype `s` has `B` at `2s+1` and `I` at `2s+2`.
pub type TagId = u16;

pub const OUTSIDE: TagId = 0;

/// The tag set derived from a scheme's entity subtypes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagInventory {
    names: Vec<String>,
}

impl TagInventory {
    /// Arbitrary tag inventory; used for alternative schemes and small
    /// test instances.
    pub fn from_names(names: Vec<String>) -> TagInventory {
        assert!(!names.is_empty(), "tag inventory cannot be empty");
        TagInventory { names }
    }

    pub fn from_scheme(scheme: &SchemeRegistry) -> TagInventory {
        let mut names = vec!["O".to_string()];
        for def in scheme.entity_types() {
            names.push(format!("B-{}", def.file_name));
            names.push(format!("I-{}", def.file_name));
        }
        TagInventory { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, tag: TagId) -> &str {
        &self.names[tag as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn begin(ty: EntityTypeId) -> TagId {
        2 * ty.0 + 1
    }

    pub fn inside(ty: EntityTypeId) -> TagId {
        2 * ty.0 + 2
    }

    /// Subtype of a non-`O` tag.
    pub fn entity_type(tag: TagId) -> Option<EntityTypeId> {
        if tag == OUTSIDE {
            None
        } else {
            Some(EntityTypeId((tag - 1) / 2))
        }
    }

    pub fn is_begin(tag: TagId) -> bool {
        tag != OUTSIDE && (tag - 1) % 2 == 0
    }
}

/// A tag per character of the sequence it was built over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSequence {
    pub tags: Vec<TagId>,
}

impl TagSequence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Encode a flat entity set over a sequence of length `len`.
///
/// Fails on overlapping entities or spans outside `[0, len]`; use the
/// validator first when the input is untrusted.
pub fn encode(entities: &BTreeSet<Entity>, len: usize) -> Result<TagSequence> {
    let mut tags = vec![OUTSIDE; len];
    let mut sorted: Vec<&Entity> = entities.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut prev_end = 0usize;
    for e in sorted {
        if e.start >= e.end || e.end > len {
            return Err(Error::TagEncoding(format!(
                "span {}..{} outside sequence of length {len}",
                e.start, e.end
            )));
        }
        if e.start < prev_end {
            return Err(Error::TagEncoding(format!(
                "span {}..{} overlaps a previous entity",
                e.start, e.end
            )));
        }
        tags[e.start] = TagInventory::begin(e.etype);
        for t in tags.iter_mut().take(e.end).skip(e.start + 1) {
            *t = TagInventory::inside(e.etype);
        }
        prev_end = e.end;
    }
    Ok(TagSequence { tags })
}

/// Decode any tag sequence to a flat entity set (total function).
pub fn decode(seq: &TagSequence) -> BTreeSet<Entity> {
    let mut out = BTreeSet::new();
    let mut open: Option<(EntityTypeId, usize)> = None;
    for (i, &tag) in seq.tags.iter().enumerate() {
        let ty = TagInventory::entity_type(tag);
        let continues = match (ty, open) {
            (Some(ty), Some((open_ty, _))) => !TagInventory::is_begin(tag) && ty == open_ty,
            _ => false,
        };
        if !continues {
            if let Some((open_ty, start)) = open.take() {
                out.insert(Entity::new(open_ty, start, i));
            }
            if let Some(ty) = ty {
                open = Some((ty, i));
            }
        }
    }
    if let Some((ty, start)) = open {
        out.insert(Entity::new(ty, start, seq.tags.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::builtin_scheme;

    fn ty(scheme: &SchemeRegistry, name: &str) -> EntityTypeId {
        scheme.entity_type(name).unwrap()
    }

    /// Straightforward reference decoder used as an independent check:
    /// split the sequence at every position whose tag cannot extend the
    /// run ending before it, then keep non-`O` runs.
    fn reference_decode(tags: &[TagId]) -> BTreeSet<Entity> {
        let mut out = BTreeSet::new();
        let mut i = 0;
        while i < tags.len() {
            if tags[i] == OUTSIDE {
                i += 1;
                continue;
            }
            let ty = TagInventory::entity_type(tags[i]).unwrap();
            let start = i;
            i += 1;
            while i < tags.len()
                && tags[i] == TagInventory::inside(ty)
            {
                i += 1;
            }
            out.insert(Entity::new(ty, start, i));
        }
        out
    }

    #[test]
    fn encode_examples() {
        let scheme = builtin_scheme();
        let sra = ty(&scheme, "Self-Reported Abnormality");
        let mut ents = BTreeSet::new();
        ents.insert(Entity::new(sra, 2, 6));
        let seq = encode(&ents, 8).unwrap();
        let b = TagInventory::begin(sra);
        let i = TagInventory::inside(sra);
        assert_eq!(seq.tags, vec![OUTSIDE, OUTSIDE, b, i, i, i, OUTSIDE, OUTSIDE]);

        assert_eq!(encode(&BTreeSet::new(), 5).unwrap().tags, vec![OUTSIDE; 5]);
    }

    #[test]
    fn adjacent_entities_keep_their_begin_tags() {
        let scheme = builtin_scheme();
        let dos = ty(&scheme, "Disease or Syndrome");
        let tp = ty(&scheme, "Test Process");
        let mut ents = BTreeSet::new();
        ents.insert(Entity::new(dos, 0, 2));
        ents.insert(Entity::new(tp, 2, 4));
        let seq = encode(&ents, 4).unwrap();
        assert_eq!(
            seq.tags,
            vec![
                TagInventory::begin(dos),
                TagInventory::inside(dos),
                TagInventory::begin(tp),
                TagInventory::inside(tp)
            ]
        );
        assert_eq!(decode(&seq), ents);
    }

    #[test]
    fn encode_rejects_overlap_and_out_of_range() {
        let scheme = builtin_scheme();
        let dos = ty(&scheme, "Disease or Syndrome");
        let mut ents = BTreeSet::new();
        ents.insert(Entity::new(dos, 0, 3));
        ents.insert(Entity::new(dos, 2, 5));
        assert!(encode(&ents, 8).is_err());

        let mut far = BTreeSet::new();
        far.insert(Entity::new(dos, 6, 9));
        assert!(encode(&far, 8).is_err());
    }

    #[test]
    fn decode_examples() {
        let scheme = builtin_scheme();
        let dos = ty(&scheme, "Disease or Syndrome");
        let tp = ty(&scheme, "Test Process");
        let b_dos = TagInventory::begin(dos);
        let i_dos = TagInventory::inside(dos);
        let i_tp = TagInventory::inside(tp);

        let seq = TagSequence { tags: vec![OUTSIDE, b_dos, i_dos, OUTSIDE] };
        let decoded = decode(&seq);
        assert_eq!(decoded.len(), 1);
        assert!(decoded.contains(&Entity::new(dos, 1, 3)));

        // Ill-formed: leading I is repaired to B.
        let seq = TagSequence { tags: vec![OUTSIDE, i_dos, i_dos, OUTSIDE] };
        let decoded = decode(&seq);
        assert_eq!(decoded, reference_decode(&seq.tags));
        assert!(decoded.contains(&Entity::new(dos, 1, 3)));

        // Ill-formed: type switch without B splits the run.
        let seq = TagSequence { tags: vec![b_dos, i_tp] };
        let decoded = decode(&seq);
        assert_eq!(decoded, reference_decode(&seq.tags));
        assert!(decoded.contains(&Entity::new(dos, 0, 1)));
        assert!(decoded.contains(&Entity::new(tp, 1, 2)));
    }

    #[test]
    fn decode_is_total_and_matches_reference_on_random_sequences() {
        use rand::prelude::*;
        let scheme = builtin_scheme();
        let n_tags = 2 * scheme.entity_count() as u16 + 1;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let len = rng.gen_range(0..20);
            let tags: Vec<TagId> = (0..len).map(|_| rng.gen_range(0..n_tags)).collect();
            let seq = TagSequence { tags: tags.clone() };
            let decoded = decode(&seq);
            assert_eq!(decoded, reference_decode(&tags));
            // Output is always flat.
            let mut spans: Vec<_> = decoded.iter().map(|e| (e.start, e.end)).collect();
            spans.sort_unstable();
            for w in spans.windows(2) {
                assert!(w[0].1 <= w[1].0);
            }
        }
    }
}
