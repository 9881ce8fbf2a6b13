//! The annotation scheme: entity/relation/attribute type inventories,
//! role assignments and the applicability tables.
//!
//! A scheme is data, loaded from a declarative TOML file (see
//! `docs/formats.md`). [`builtin_scheme`] returns the bundled default.
//! Applicability rows may be written at super-type level; they expand to
//! every subtype of that super type.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an entity subtype within a [`SchemeRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityTypeId(pub u16);

/// Index of a relation type within a [`SchemeRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationTypeId(pub u16);

/// Index of an attribute type within a [`SchemeRegistry`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AttributeTypeId(pub u16);

/// The abstract role an entity type can play in a relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Status,
    Information,
    Intervention,
}

impl Role {
    fn parse(s: &str) -> Option<Role> {
        match s {
            "Status" => Some(Role::Status),
            "Information" => Some(Role::Information),
            "Intervention" => Some(Role::Intervention),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Status => write!(f, "Status"),
            Role::Information => write!(f, "Information"),
            Role::Intervention => write!(f, "Intervention"),
        }
    }
}

/// One entity subtype and the super type it belongs to.
#[derive(Debug, Clone)]
pub struct EntityTypeDef {
    pub name: String,
    /// Name used in standoff files (no spaces).
    pub file_name: String,
    pub super_name: String,
    pub roles: Vec<Role>,
}

/// One relation type with its head/tail applicability, at subtype granularity.
#[derive(Debug, Clone)]
pub struct RelationTypeDef {
    pub name: String,
    allowed_heads: Vec<bool>,
    allowed_tails: Vec<bool>,
}

impl RelationTypeDef {
    pub fn head_allowed(&self, ty: EntityTypeId) -> bool {
        self.allowed_heads.get(ty.0 as usize).copied().unwrap_or(false)
    }

    pub fn tail_allowed(&self, ty: EntityTypeId) -> bool {
        self.allowed_tails.get(ty.0 as usize).copied().unwrap_or(false)
    }

    pub fn allowed_heads(&self) -> impl Iterator<Item = EntityTypeId> + '_ {
        ids_of(&self.allowed_heads)
    }

    pub fn allowed_tails(&self) -> impl Iterator<Item = EntityTypeId> + '_ {
        ids_of(&self.allowed_tails)
    }
}

/// One attribute type with the entity subtypes it may attach to.
#[derive(Debug, Clone)]
pub struct AttributeTypeDef {
    pub name: String,
    applicable: Vec<bool>,
}

impl AttributeTypeDef {
    pub fn applies_to(&self, ty: EntityTypeId) -> bool {
        self.applicable.get(ty.0 as usize).copied().unwrap_or(false)
    }

    pub fn applicable_to(&self) -> impl Iterator<Item = EntityTypeId> + '_ {
        ids_of(&self.applicable)
    }
}

fn ids_of(mask: &[bool]) -> impl Iterator<Item = EntityTypeId> + '_ {
    mask.iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(i, _)| EntityTypeId(i as u16))
}

/// The full type inventory. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    entities: Vec<EntityTypeDef>,
    relations: Vec<RelationTypeDef>,
    attributes: Vec<AttributeTypeDef>,
    entity_lookup: HashMap<String, EntityTypeId>,
    relation_lookup: HashMap<String, RelationTypeId>,
    attribute_lookup: HashMap<String, AttributeTypeId>,
}

/// Lookup keys tolerate the dash/space variants that show up in file
/// names and en-dashed prose names.
fn key(name: &str) -> String {
    name.chars()
        .map(|c| match c {
            ' ' | '-' | '\u{2010}' | '\u{2013}' | '\u{2014}' => '-',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

impl SchemeRegistry {
    pub fn entity_types(&self) -> &[EntityTypeDef] {
        &self.entities
    }

    pub fn relation_types(&self) -> &[RelationTypeDef] {
        &self.relations
    }

    pub fn attribute_types(&self) -> &[AttributeTypeDef] {
        &self.attributes
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_def(&self, id: EntityTypeId) -> &EntityTypeDef {
        &self.entities[id.0 as usize]
    }

    pub fn relation_def(&self, id: RelationTypeId) -> &RelationTypeDef {
        &self.relations[id.0 as usize]
    }

    pub fn attribute_def(&self, id: AttributeTypeId) -> &AttributeTypeDef {
        &self.attributes[id.0 as usize]
    }

    /// Look up an entity subtype by display or file name.
    pub fn entity_type(&self, name: &str) -> Option<EntityTypeId> {
        self.entity_lookup.get(&key(name)).copied()
    }

    /// Look up a relation type by name (any dash variant).
    pub fn relation(&self, name: &str) -> Option<RelationTypeId> {
        self.relation_lookup.get(&key(name)).copied()
    }

    /// Look up an attribute type by name.
    pub fn attribute(&self, name: &str) -> Option<AttributeTypeId> {
        self.attribute_lookup.get(&key(name)).copied()
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityTypeId> {
        (0..self.entities.len() as u16).map(EntityTypeId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationTypeId> {
        (0..self.relations.len() as u16).map(RelationTypeId)
    }

    pub fn attribute_ids(&self) -> impl Iterator<Item = AttributeTypeId> {
        (0..self.attributes.len() as u16).map(AttributeTypeId)
    }

    /// Roles the given subtype can play (the role map).
    pub fn roles(&self, ty: EntityTypeId) -> &[Role] {
        &self.entity_def(ty).roles
    }

    /// Parse a scheme from TOML text.
    pub fn from_toml_str(text: &str) -> Result<SchemeRegistry> {
        let file: SchemeFile =
            toml::from_str(text).map_err(|e| Error::Scheme(format!("parse failure: {e}")))?;
        SchemeRegistry::from_file(file)
    }

    /// Load a scheme from a TOML file on disk.
    pub fn from_path(path: &Path) -> Result<SchemeRegistry> {
        let text = std::fs::read_to_string(path)?;
        SchemeRegistry::from_toml_str(&text)
    }

    fn from_file(file: SchemeFile) -> Result<SchemeRegistry> {
        if file.version != 1 {
            return Err(Error::Scheme(format!(
                "unsupported scheme version {}",
                file.version
            )));
        }
        let mut entities = Vec::new();
        let mut entity_lookup = HashMap::new();
        // super name -> subtype ids, for expansion of applicability rows
        let mut super_members: HashMap<String, Vec<EntityTypeId>> = HashMap::new();

        for block in &file.entity {
            if block.subtypes.is_empty() {
                return Err(Error::Scheme(format!(
                    "super type `{}` lists no subtypes",
                    block.super_name
                )));
            }
            if let Some(names) = &block.file_names {
                if names.len() != block.subtypes.len() {
                    return Err(Error::Scheme(format!(
                        "`{}`: file_names length differs from subtypes",
                        block.super_name
                    )));
                }
            }
            let mut roles = Vec::new();
            for r in &block.roles {
                roles.push(Role::parse(r).ok_or_else(|| {
                    Error::Scheme(format!("unknown role `{r}` on `{}`", block.super_name))
                })?);
            }
            for (i, sub) in block.subtypes.iter().enumerate() {
                let id = EntityTypeId(entities.len() as u16);
                let file_name = block
                    .file_names
                    .as_ref()
                    .map(|n| n[i].clone())
                    .unwrap_or_else(|| sub.replace(' ', "-"));
                if entity_lookup.insert(key(sub), id).is_some() {
                    return Err(Error::Scheme(format!("duplicate entity subtype `{sub}`")));
                }
                entity_lookup.entry(key(&file_name)).or_insert(id);
                entities.push(EntityTypeDef {
                    name: sub.clone(),
                    file_name,
                    super_name: block.super_name.clone(),
                    roles: roles.clone(),
                });
                super_members
                    .entry(key(&block.super_name))
                    .or_default()
                    .push(id);
            }
        }

        let n = entities.len();
        let resolve_set = |names: &[String], ctx: &str| -> Result<Vec<bool>> {
            let mut mask = vec![false; n];
            for name in names {
                if let Some(members) = super_members.get(&key(name)) {
                    for id in members {
                        mask[id.0 as usize] = true;
                    }
                } else if let Some(id) = entity_lookup.get(&key(name)) {
                    mask[id.0 as usize] = true;
                } else {
                    return Err(Error::Scheme(format!(
                        "`{ctx}` references unknown entity type `{name}`"
                    )));
                }
            }
            Ok(mask)
        };

        let mut relations = Vec::new();
        let mut relation_lookup = HashMap::new();
        for block in &file.relation {
            let id = RelationTypeId(relations.len() as u16);
            if relation_lookup.insert(key(&block.name), id).is_some() {
                return Err(Error::Scheme(format!(
                    "duplicate relation type `{}`",
                    block.name
                )));
            }
            relations.push(RelationTypeDef {
                name: block.name.clone(),
                allowed_heads: resolve_set(&block.heads, &block.name)?,
                allowed_tails: resolve_set(&block.tails, &block.name)?,
            });
        }

        let mut attributes = Vec::new();
        let mut attribute_lookup = HashMap::new();
        for block in &file.attribute {
            let id = AttributeTypeId(attributes.len() as u16);
            if attribute_lookup.insert(key(&block.name), id).is_some() {
                return Err(Error::Scheme(format!(
                    "duplicate attribute type `{}`",
                    block.name
                )));
            }
            attributes.push(AttributeTypeDef {
                name: block.name.clone(),
                applicable: resolve_set(&block.applies, &block.name)?,
            });
        }

        Ok(SchemeRegistry {
            entities,
            relations,
            attributes,
            entity_lookup,
            relation_lookup,
            attribute_lookup,
        })
    }
}

#[derive(Deserialize)]
struct SchemeFile {
    version: u32,
    #[serde(default)]
    entity: Vec<EntityBlock>,
    #[serde(default)]
    relation: Vec<RelationBlock>,
    #[serde(default)]
    attribute: Vec<AttributeBlock>,
}

#[derive(Deserialize)]
struct EntityBlock {
    #[serde(rename = "super")]
    super_name: String,
    subtypes: Vec<String>,
    #[serde(default)]
    roles: Vec<String>,
    file_names: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct RelationBlock {
    name: String,
    heads: Vec<String>,
    tails: Vec<String>,
}

#[derive(Deserialize)]
struct AttributeBlock {
    name: String,
    applies: Vec<String>,
}

const BUILTIN_SCHEME: &str = include_str!("../assets/scheme.toml");

/// The bundled default scheme: 18 entity subtypes, 10 relation types,
/// 10 attribute types, applicability encoded at subtype granularity.
pub fn builtin_scheme() -> SchemeRegistry {
    SchemeRegistry::from_toml_str(BUILTIN_SCHEME).expect("bundled scheme must parse")
}
