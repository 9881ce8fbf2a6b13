//! Standoff annotation files: `T` (entity), `R` (relation), `A`
//! (attribute) lines plus a star-prefixed group membership line, all
//! with character offsets into the companion text file.
//!
//! ```text
//! T1<TAB>Self-Reported-Abnormality 2 6<TAB>右侧胸痛
//! *<TAB>Group G1 T1 T2
//! R1<TAB>Information-Suggest-Status Arg1:G1 Arg2:T3
//! A1<TAB>Negation T2
//! A2<TAB>Outcome R1 Improve
//! ```
//!
//! Relations written between groups are expanded to entity-level
//! relations while parsing; serialization always emits the expanded,
//! canonical form.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::annotation::{
    AnnotationSet, Attribute, Document, Entity, ModifyOutcome, Relation,
};
use crate::error::{Error, Result};
use crate::scheme::{RelationTypeId, SchemeRegistry};

/// A named set of entities; relations on groups mean the relation holds
/// for every cross pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityGroup {
    pub group_id: String,
    pub members: BTreeSet<Entity>,
}

/// Expand group-level relations to the equivalent entity-level set:
/// every (head, tail) cross pair except self-pairs, deduplicated.
pub fn expand_groups(
    relations_on_groups: &[(RelationTypeId, &EntityGroup, &EntityGroup)],
) -> BTreeSet<Relation> {
    let mut out = BTreeSet::new();
    for (rtype, heads, tails) in relations_on_groups {
        for h in &heads.members {
            for t in &tails.members {
                if h != t {
                    out.insert(Relation::new(*rtype, *h, *t));
                }
            }
        }
    }
    out
}

fn malformed(file: &str, line: usize, kind: char, msg: impl Into<String>) -> Error {
    Error::MalformedLine { file: file.to_string(), line, kind, msg: msg.into() }
}

/// Parse an annotation payload against its document text.
///
/// Returns the annotation set (groups already expanded) plus the groups
/// themselves. Structural file problems are errors; scheme-rule
/// violations are not checked here — run the validator on the result.
pub fn parse_standoff(
    doc: &Document,
    ann_payload: &str,
    scheme: &SchemeRegistry,
    file: &str,
) -> Result<(AnnotationSet, Vec<EntityGroup>)> {
    let chars = doc.chars();
    let mut ann = AnnotationSet::new(doc.doc_id.clone());
    let mut entities: HashMap<String, Entity> = HashMap::new();
    let mut groups: BTreeMap<String, EntityGroup> = BTreeMap::new();
    let mut relations: HashMap<String, Relation> = HashMap::new();
    // (line#, id, type name, k args)
    let mut r_lines: Vec<(usize, String, String, String, String)> = Vec::new();
    let mut a_lines: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in ann_payload.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let body = fields.next();
        let rest = fields.next();

        if id == "*" {
            let body = body.ok_or_else(|| malformed(file, line_no, '*', "missing body"))?;
            let mut toks = body.split_whitespace();
            match toks.next() {
                Some("Group") => {}
                other => {
                    return Err(malformed(
                        file,
                        line_no,
                        '*',
                        format!("expected `Group`, got `{}`", other.unwrap_or("")),
                    ))
                }
            }
            let gid = toks
                .next()
                .ok_or_else(|| malformed(file, line_no, '*', "missing group id"))?
                .to_string();
            let members: Vec<String> = toks.map(str::to_string).collect();
            if members.is_empty() {
                return Err(malformed(file, line_no, '*', "group has no members"));
            }
            let mut set = BTreeSet::new();
            for m in members {
                let e = entities.get(&m).ok_or_else(|| Error::UnresolvableReference {
                    file: file.to_string(),
                    line: line_no,
                    id: m.clone(),
                })?;
                set.insert(*e);
            }
            if !seen_ids.insert(gid.clone()) {
                return Err(malformed(file, line_no, '*', format!("duplicate id `{gid}`")));
            }
            groups.insert(gid.clone(), EntityGroup { group_id: gid, members: set });
            continue;
        }

        let kind = id.chars().next().unwrap_or('?');
        if !seen_ids.insert(id.clone()) {
            return Err(malformed(file, line_no, kind, format!("duplicate id `{id}`")));
        }
        match kind {
            'T' => {
                let body = body.ok_or_else(|| malformed(file, line_no, 'T', "missing body"))?;
                let mut toks = body.split_whitespace();
                let ty_name = toks
                    .next()
                    .ok_or_else(|| malformed(file, line_no, 'T', "missing type"))?;
                let start: usize = toks
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| malformed(file, line_no, 'T', "missing or bad start offset"))?;
                let end: usize = toks
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| malformed(file, line_no, 'T', "missing or bad end offset"))?;
                let etype = scheme.entity_type(ty_name).ok_or_else(|| Error::UnknownType {
                    file: file.to_string(),
                    line: line_no,
                    name: ty_name.to_string(),
                })?;
                if start >= end || end > chars.len() {
                    return Err(Error::OffsetOutOfRange {
                        file: file.to_string(),
                        line: line_no,
                        start,
                        end,
                        len: chars.len(),
                    });
                }
                if let Some(surface) = rest {
                    let actual: String = chars[start..end].iter().collect();
                    if surface != actual {
                        return Err(Error::SurfaceMismatch {
                            file: file.to_string(),
                            line: line_no,
                            start,
                            end,
                            expected: surface.to_string(),
                            actual,
                        });
                    }
                }
                let e = Entity::new(etype, start, end);
                entities.insert(id, e);
                ann.entities.insert(e);
            }
            'R' => {
                let body = body.ok_or_else(|| malformed(file, line_no, 'R', "missing body"))?;
                let mut toks = body.split_whitespace();
                let ty = toks
                    .next()
                    .ok_or_else(|| malformed(file, line_no, 'R', "missing type"))?;
                let arg = |tok: Option<&str>, name: &str| -> Result<String> {
                    let tok = tok
                        .ok_or_else(|| malformed(file, line_no, 'R', format!("missing {name}")))?;
                    tok.strip_prefix(&format!("{name}:"))
                        .map(str::to_string)
                        .ok_or_else(|| {
                            malformed(file, line_no, 'R', format!("expected `{name}:<id>`"))
                        })
                };
                let a1 = arg(toks.next(), "Arg1")?;
                let a2 = arg(toks.next(), "Arg2")?;
                r_lines.push((line_no, id, ty.to_string(), a1, a2));
            }
            'A' => {
                let body = body.ok_or_else(|| malformed(file, line_no, 'A', "missing body"))?;
                let toks: Vec<String> = body.split_whitespace().map(str::to_string).collect();
                if toks.len() < 2 {
                    return Err(malformed(file, line_no, 'A', "expected type and target"));
                }
                a_lines.push((line_no, id, toks));
            }
            other => {
                return Err(malformed(
                    file,
                    line_no,
                    other,
                    "unsupported line kind (expected T, R, A or *)",
                ));
            }
        }
    }

    // Second pass: relations (entity- or group-level).
    for (line_no, id, ty_name, a1, a2) in r_lines {
        let rtype = scheme.relation(&ty_name).ok_or_else(|| Error::UnknownType {
            file: file.to_string(),
            line: line_no,
            name: ty_name.clone(),
        })?;
        let resolve_side = |arg: &str| -> Result<BTreeSet<Entity>> {
            if let Some(e) = entities.get(arg) {
                let mut s = BTreeSet::new();
                s.insert(*e);
                Ok(s)
            } else if let Some(g) = groups.get(arg) {
                Ok(g.members.clone())
            } else {
                Err(Error::UnresolvableReference {
                    file: file.to_string(),
                    line: line_no,
                    id: arg.to_string(),
                })
            }
        };
        let heads = resolve_side(&a1)?;
        let tails = resolve_side(&a2)?;
        let mut any = None;
        for h in &heads {
            for t in &tails {
                if h != t {
                    let rel = Relation::new(rtype, *h, *t);
                    ann.relations.insert(rel);
                    any = Some(rel);
                }
            }
        }
        if let Some(rel) = any {
            relations.insert(id, rel);
        }
    }

    // Third pass: attributes and relation outcome qualifiers.
    for (line_no, _id, toks) in a_lines {
        let ty_name = &toks[0];
        let target = &toks[1];
        if ty_name == "Outcome" {
            let rel = relations.get(target).ok_or_else(|| Error::UnresolvableReference {
                file: file.to_string(),
                line: line_no,
                id: target.clone(),
            })?;
            let value = toks.get(2).map(String::as_str).unwrap_or("Unspecified");
            let outcome = ModifyOutcome::parse(value).ok_or_else(|| {
                malformed(file, line_no, 'A', format!("unknown outcome `{value}`"))
            })?;
            ann.modify_outcomes.insert(*rel, outcome);
            continue;
        }
        let atype = scheme.attribute(ty_name).ok_or_else(|| Error::UnknownType {
            file: file.to_string(),
            line: line_no,
            name: ty_name.clone(),
        })?;
        let entity = entities.get(target).ok_or_else(|| Error::UnresolvableReference {
            file: file.to_string(),
            line: line_no,
            id: target.clone(),
        })?;
        ann.attributes.insert(Attribute::new(atype, *entity));
    }

    Ok((ann, groups.into_values().collect()))
}

/// Serialize an annotation set in canonical form: entities sorted by
/// (start, end, type), relations by (head, tail, type), attributes by
/// (entity, type); ids assigned in that order. Serializing twice gives
/// byte-identical payloads, and parsing the result reproduces the set.
pub fn serialize_standoff(
    ann: &AnnotationSet,
    doc: &Document,
    scheme: &SchemeRegistry,
) -> String {
    let chars = doc.chars();
    let mut out = String::new();

    let mut entities: Vec<&Entity> = ann.entities.iter().collect();
    entities.sort_by_key(|e| (e.start, e.end, e.etype));
    let mut entity_ids: BTreeMap<Entity, String> = BTreeMap::new();
    for (i, e) in entities.iter().enumerate() {
        let id = format!("T{}", i + 1);
        let surface: String = if e.end <= chars.len() && e.start < e.end {
            chars[e.start..e.end].iter().collect()
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{id}\t{} {} {}\t{surface}",
            scheme.entity_def(e.etype).file_name,
            e.start,
            e.end
        );
        entity_ids.insert(**e, id);
    }

    let mut relations: Vec<&Relation> = ann.relations.iter().collect();
    relations.sort_by_key(|r| (r.head.start, r.head.end, r.head.etype, r.tail, r.rtype));
    let mut relation_ids: BTreeMap<Relation, String> = BTreeMap::new();
    for (i, r) in relations.iter().enumerate() {
        let id = format!("R{}", i + 1);
        let fallback = "T?".to_string();
        let h = entity_ids.get(&r.head).unwrap_or(&fallback);
        let t = entity_ids.get(&r.tail).unwrap_or(&fallback);
        let _ = writeln!(
            out,
            "{id}\t{} Arg1:{h} Arg2:{t}",
            scheme.relation_def(r.rtype).name
        );
        relation_ids.insert(**r, id);
    }

    let mut attributes: Vec<&Attribute> = ann.attributes.iter().collect();
    attributes.sort_by_key(|a| (a.entity.start, a.entity.end, a.entity.etype, a.atype));
    let mut next_a = 1usize;
    for a in attributes {
        let fallback = "T?".to_string();
        let e = entity_ids.get(&a.entity).unwrap_or(&fallback);
        let _ = writeln!(
            out,
            "A{next_a}\t{} {e}",
            scheme.attribute_def(a.atype).name
        );
        next_a += 1;
    }
    for (rel, outcome) in &ann.modify_outcomes {
        if let Some(rid) = relation_ids.get(rel) {
            let _ = writeln!(out, "A{next_a}\tOutcome {rid} {}", outcome.as_str());
            next_a += 1;
        }
    }

    out
}
