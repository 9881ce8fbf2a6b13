//! Versioned model checkpoints: one JSON container for all model
//! kinds, with sparse weight storage (index/value pairs of the
//! non-zeros) and the type inventories they were trained against, so a
//! load against a different scheme fails loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bio::TagInventory;
use crate::crf::CrfModel;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::scheme::SchemeRegistry;
use crate::span::{AttributeModel, RelationModel};

const FORMAT: &str = "clinex-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    #[serde(flatten)]
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum Payload {
    #[serde(rename = "crf")]
    Crf(CrfCheckpoint),
    #[serde(rename = "span")]
    Span(SpanCheckpoint),
}

#[derive(Serialize, Deserialize)]
struct CrfCheckpoint {
    feature_config: FeatureConfig,
    tag_names: Vec<String>,
    em: Vec<(u64, f64)>,
    trans: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpanCheckpoint {
    feature_config: FeatureConfig,
    attribute_names: Vec<String>,
    relation_names: Vec<String>,
    alpha: f64,
    window: usize,
    attr_w: Vec<(u64, f64)>,
    attr_b: Vec<f64>,
    rel_w: Vec<(u64, f64)>,
    rel_b: Vec<f64>,
}

fn to_sparse(dense: &[f64]) -> Vec<(u64, f64)> {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i as u64, *v))
        .collect()
}

fn from_sparse(len: usize, sparse: &[(u64, f64)]) -> Result<Vec<f64>> {
    let mut dense = vec![0.0; len];
    for &(i, v) in sparse {
        let slot = dense
            .get_mut(i as usize)
            .ok_or_else(|| Error::Checkpoint(format!("weight index {i} out of range")))?;
        *slot = v;
    }
    Ok(dense)
}

/// Write bytes via a temp file and rename, so readers never observe a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_container(path: &Path) -> Result<Container> {
    let bytes = std::fs::read(path)?;
    let container: Container = serde_json::from_slice(&bytes)?;
    if container.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "{}: not a model file (format `{}`)",
            path.display(),
            container.format
        )));
    }
    if container.version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {}",
            path.display(),
            container.version
        )));
    }
    Ok(container)
}

pub fn save_crf(model: &CrfModel, path: &Path) -> Result<()> {
    let container = Container {
        format: FORMAT.to_string(),
        version: VERSION,
        payload: Payload::Crf(CrfCheckpoint {
            feature_config: model.feature_config.clone(),
            tag_names: model.tags.names().to_vec(),
            em: to_sparse(&model.em),
            trans: model.trans.clone(),
        }),
    };
    write_atomic(path, &serde_json::to_vec(&container)?)
}

pub fn load_crf(path: &Path, scheme: &SchemeRegistry) -> Result<CrfModel> {
    let container = read_container(path)?;
    let cp = match container.payload {
        Payload::Crf(cp) => cp,
        Payload::Span(_) => {
            return Err(Error::Checkpoint(format!(
                "{}: expected a crf model, found a span model",
                path.display()
            )))
        }
    };
    let tags = TagInventory::from_scheme(scheme);
    if cp.tag_names != tags.names() {
        return Err(Error::Checkpoint(format!(
            "{}: tag inventory does not match the scheme",
            path.display()
        )));
    }
    let mut model = CrfModel::new(cp.feature_config, tags)?;
    if cp.trans.len() != model.trans.len() {
        return Err(Error::Checkpoint("transition matrix size mismatch".into()));
    }
    model.em = from_sparse(model.em.len(), &cp.em)?;
    model.trans = cp.trans;
    Ok(model)
}

pub fn save_span(
    attr: &AttributeModel,
    rel: &RelationModel,
    scheme: &SchemeRegistry,
    path: &Path,
) -> Result<()> {
    let container = Container {
        format: FORMAT.to_string(),
        version: VERSION,
        payload: Payload::Span(SpanCheckpoint {
            feature_config: attr.feature_config.clone(),
            attribute_names: scheme.attribute_types().iter().map(|d| d.name.clone()).collect(),
            relation_names: scheme.relation_types().iter().map(|d| d.name.clone()).collect(),
            alpha: attr.alpha,
            window: rel.window,
            attr_w: to_sparse(&attr.w),
            attr_b: attr.b.clone(),
            rel_w: to_sparse(&rel.w),
            rel_b: rel.b.clone(),
        }),
    };
    write_atomic(path, &serde_json::to_vec(&container)?)
}

pub fn load_span(path: &Path, scheme: &SchemeRegistry) -> Result<(AttributeModel, RelationModel)> {
    let container = read_container(path)?;
    let cp = match container.payload {
        Payload::Span(cp) => cp,
        Payload::Crf(_) => {
            return Err(Error::Checkpoint(format!(
                "{}: expected a span model, found a crf model",
                path.display()
            )))
        }
    };
    let attribute_names: Vec<String> =
        scheme.attribute_types().iter().map(|d| d.name.clone()).collect();
    let relation_names: Vec<String> =
        scheme.relation_types().iter().map(|d| d.name.clone()).collect();
    if cp.attribute_names != attribute_names || cp.relation_names != relation_names {
        return Err(Error::Checkpoint(format!(
            "{}: type inventory does not match the scheme",
            path.display()
        )));
    }
    let n_attrs = attribute_names.len();
    let n_rels = relation_names.len();
    let mut attr = AttributeModel::new(cp.feature_config.clone(), n_attrs, cp.alpha)?;
    if cp.attr_b.len() != attr.b.len() {
        return Err(Error::Checkpoint(
            "attribute class count does not match the scheme".into(),
        ));
    }
    attr.w = from_sparse(attr.w.len(), &cp.attr_w)?;
    attr.b = cp.attr_b;
    let mut rel = RelationModel::new(cp.feature_config, n_rels, cp.window)?;
    if cp.rel_b.len() != rel.b.len() {
        return Err(Error::Checkpoint(
            "relation class count does not match the scheme".into(),
        ));
    }
    rel.w = from_sparse(rel.w.len(), &cp.rel_w)?;
    rel.b = cp.rel_b;
    Ok((attr, rel))
}
