//! Structural validation of annotation sets against a scheme: span
//! flatness, applicability tables, referential integrity.

use std::fmt;

use crate::annotation::{AnnotationSet, Attribute, Document, Entity, Relation};
use crate::scheme::{EntityTypeId, RelationTypeId, SchemeRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    Overlap,
    RelationHeadType,
    RelationTailType,
    AttributeApplicability,
    SelfRelation,
    DanglingReference,
    SpanOutOfRange,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::Overlap => "Overlap",
            ViolationKind::RelationHeadType => "RelationHeadType",
            ViolationKind::RelationTailType => "RelationTailType",
            ViolationKind::AttributeApplicability => "AttributeApplicability",
            ViolationKind::SelfRelation => "SelfRelation",
            ViolationKind::DanglingReference => "DanglingReference",
            ViolationKind::SpanOutOfRange => "SpanOutOfRange",
        };
        write!(f, "{s}")
    }
}

/// The offending tuple, shape determined by the violation kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    Entity(Entity),
    EntityPair(Entity, Entity),
    Relation(Relation),
    Attribute(Attribute),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: Subject,
    pub message: String,
}

fn type_name(scheme: &SchemeRegistry, ty: EntityTypeId) -> &str {
    &scheme.entity_def(ty).name
}

fn entity_str(scheme: &SchemeRegistry, e: &Entity) -> String {
    format!("({}, {}, {})", type_name(scheme, e.etype), e.start, e.end)
}

/// Check one annotation set. Violations are data, not failures: an empty
/// list means the set satisfies every structural rule of the scheme.
pub fn validate(ann: &AnnotationSet, doc: &Document, scheme: &SchemeRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    let len = doc.char_len();

    let entities: Vec<&Entity> = ann.entities.iter().collect();
    for e in &entities {
        if e.start >= e.end || e.end > len {
            out.push(Violation {
                kind: ViolationKind::SpanOutOfRange,
                subject: Subject::Entity(**e),
                message: format!(
                    "entity {} outside document of length {len}",
                    entity_str(scheme, e)
                ),
            });
        }
    }

    // Entities are sorted by (type, start, end); overlap needs a scan
    // over start order.
    let mut by_start: Vec<&Entity> = entities.clone();
    by_start.sort_by_key(|e| (e.start, e.end, e.etype));
    for (i, a) in by_start.iter().enumerate() {
        for b in by_start[i + 1..].iter() {
            if b.start >= a.end {
                break;
            }
            out.push(Violation {
                kind: ViolationKind::Overlap,
                subject: Subject::EntityPair(**a, **b),
                message: format!(
                    "entities {} and {} overlap",
                    entity_str(scheme, a),
                    entity_str(scheme, b)
                ),
            });
        }
    }

    for r in &ann.relations {
        let def = scheme.relation_def(r.rtype);
        if r.head == r.tail {
            out.push(Violation {
                kind: ViolationKind::SelfRelation,
                subject: Subject::Relation(*r),
                message: format!(
                    "{} relates {} to itself",
                    def.name,
                    entity_str(scheme, &r.head)
                ),
            });
        }
        for (end, e) in [("head", &r.head), ("tail", &r.tail)] {
            if !ann.entities.contains(e) {
                out.push(Violation {
                    kind: ViolationKind::DanglingReference,
                    subject: Subject::Relation(*r),
                    message: format!(
                        "{} {end} {} is not an annotated entity",
                        def.name,
                        entity_str(scheme, e)
                    ),
                });
            }
        }
        if !def.head_allowed(r.head.etype) {
            out.push(Violation {
                kind: ViolationKind::RelationHeadType,
                subject: Subject::Relation(*r),
                message: format!(
                    "{} does not allow head type {}",
                    def.name,
                    type_name(scheme, r.head.etype)
                ),
            });
        }
        if !def.tail_allowed(r.tail.etype) {
            out.push(Violation {
                kind: ViolationKind::RelationTailType,
                subject: Subject::Relation(*r),
                message: format!(
                    "{} does not allow tail type {}",
                    def.name,
                    type_name(scheme, r.tail.etype)
                ),
            });
        }
    }

    for a in &ann.attributes {
        let def = scheme.attribute_def(a.atype);
        if !ann.entities.contains(&a.entity) {
            out.push(Violation {
                kind: ViolationKind::DanglingReference,
                subject: Subject::Attribute(*a),
                message: format!(
                    "{} attaches to {} which is not an annotated entity",
                    def.name,
                    entity_str(scheme, &a.entity)
                ),
            });
        }
        if !def.applies_to(a.entity.etype) {
            out.push(Violation {
                kind: ViolationKind::AttributeApplicability,
                subject: Subject::Attribute(*a),
                message: format!(
                    "{} is not applicable to {}",
                    def.name,
                    type_name(scheme, a.entity.etype)
                ),
            });
        }
    }

    out.sort_by(|a, b| (a.kind, &a.message).cmp(&(b.kind, &b.message)));
    out
}

/// True iff the ordered pair may carry the relation type at all: the
/// two entities differ and both ends are allowed by the applicability
/// table.
pub fn is_candidate_pair(
    head: &Entity,
    tail: &Entity,
    rtype: RelationTypeId,
    scheme: &SchemeRegistry,
) -> bool {
    if head == tail {
        return false;
    }
    let def = scheme.relation_def(rtype);
    def.head_allowed(head.etype) && def.tail_allowed(tail.etype)
}
