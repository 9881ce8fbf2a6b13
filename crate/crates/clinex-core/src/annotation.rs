//! Documents and their annotations: typed spans, typed span pairs and
//! typed span attachments, held as sets with exact tuple identity.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::scheme::{AttributeTypeId, EntityTypeId, RelationTypeId};

/// One unit of clinical text, the span of one record section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub section: String,
    pub department: String,
    /// Groups the documents of one medical record.
    pub record_id: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Document {
        Document {
            doc_id: doc_id.into(),
            text: text.into(),
            section: String::new(),
            department: String::new(),
            record_id: String::new(),
        }
    }

    /// Character count; all annotation offsets index characters.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    /// The surface string of a character span.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.text.chars().skip(start).take(end.saturating_sub(start)).collect()
    }
}

/// A typed text span. `start` is inclusive, `end` exclusive, both
/// character indices into the owning document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub etype: EntityTypeId,
    pub start: usize,
    pub end: usize,
}

impl Entity {
    pub fn new(etype: EntityTypeId, start: usize, end: usize) -> Entity {
        Entity { etype, start, end }
    }
}

/// True iff the two character spans intersect. Spans are end-exclusive,
/// so adjacency is not overlap.
pub fn entities_overlap(a: &Entity, b: &Entity) -> bool {
    a.start < b.end && b.start < a.end
}

/// A typed, directed pair of entities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub rtype: RelationTypeId,
    pub head: Entity,
    pub tail: Entity,
}

impl Relation {
    pub fn new(rtype: RelationTypeId, head: Entity, tail: Entity) -> Relation {
        Relation { rtype, head, tail }
    }
}

/// A typed attachment to one entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub atype: AttributeTypeId,
    pub entity: Entity,
}

impl Attribute {
    pub fn new(atype: AttributeTypeId, entity: Entity) -> Attribute {
        Attribute { atype, entity }
    }
}

/// Outcome qualifier carried by modify-type relations. Metadata only:
/// it does not take part in tuple identity or scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModifyOutcome {
    Improve,
    Worsen,
    Unspecified,
}

impl ModifyOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModifyOutcome::Improve => "Improve",
            ModifyOutcome::Worsen => "Worsen",
            ModifyOutcome::Unspecified => "Unspecified",
        }
    }

    pub fn parse(s: &str) -> Option<ModifyOutcome> {
        match s {
            "Improve" => Some(ModifyOutcome::Improve),
            "Worsen" => Some(ModifyOutcome::Worsen),
            "Unspecified" => Some(ModifyOutcome::Unspecified),
            _ => None,
        }
    }
}

/// All annotations over one document. Set semantics throughout: no
/// duplicate tuples, deterministic iteration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub entities: BTreeSet<Entity>,
    pub relations: BTreeSet<Relation>,
    pub attributes: BTreeSet<Attribute>,
    /// Outcome qualifiers on relations, keyed by the relation tuple.
    pub modify_outcomes: BTreeMap<Relation, ModifyOutcome>,
}

impl AnnotationSet {
    pub fn new(doc_id: impl Into<String>) -> AnnotationSet {
        AnnotationSet {
            doc_id: doc_id.into(),
            ..AnnotationSet::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.attributes.is_empty()
    }

    /// Remove an entity together with every relation and attribute that
    /// references it.
    pub fn remove_entity(&mut self, entity: &Entity) {
        self.entities.remove(entity);
        self.relations
            .retain(|r| r.head != *entity && r.tail != *entity);
        self.attributes.retain(|a| a.entity != *entity);
        self.modify_outcomes
            .retain(|r, _| r.head != *entity && r.tail != *entity);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ent(start: usize, end: usize) -> Entity {
        Entity::new(EntityTypeId(0), start, end)
    }

    #[test]
    fn overlap_examples() {
        assert!(!entities_overlap(&ent(2, 6), &ent(6, 9)));
        assert!(entities_overlap(&ent(2, 6), &ent(4, 5)));
        assert!(entities_overlap(&ent(2, 6), &ent(2, 6)));
    }

    #[test]
    fn overlap_is_symmetric() {
        let a = ent(1, 4);
        let b = ent(3, 8);
        assert_eq!(entities_overlap(&a, &b), entities_overlap(&b, &a));
    }

    #[test]
    fn remove_entity_drops_dependents() {
        let mut set = AnnotationSet::new("d");
        let a = ent(0, 2);
        let b = ent(3, 5);
        set.entities.insert(a);
        set.entities.insert(b);
        set.relations.insert(Relation::new(RelationTypeId(0), a, b));
        set.attributes.insert(Attribute::new(AttributeTypeId(0), a));
        set.remove_entity(&a);
        assert!(set.relations.is_empty());
        assert!(set.attributes.is_empty());
        assert_eq!(set.entities.len(), 1);
    }

    #[test]
    fn slice_counts_characters_not_bytes() {
        let doc = Document::new("d", "右侧胸痛ab");
        assert_eq!(doc.char_len(), 6);
        assert_eq!(doc.slice(0, 4), "右侧胸痛");
        assert_eq!(doc.slice(4, 6), "ab");
    }
}
