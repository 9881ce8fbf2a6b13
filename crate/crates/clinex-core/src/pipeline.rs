//! End-to-end extraction: the entity model's output feeds the span
//! heads, and pre-annotation with a seeded random drop.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::annotation::{AnnotationSet, Attribute, Document, Relation};
use crate::bio::TagInventory;
use crate::corpus::AnnotatedDoc;
use crate::crf::{self, CrfModel, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::features::{fnv1a, FeatureConfig, UnitFeatures};
use crate::scheme::SchemeRegistry;
use crate::span::{self, candidate_pairs, pool_span, AttributeModel, RelationModel};

/// The three trained models plus the scheme they decode into.
pub struct PipelineBundle {
    pub crf: CrfModel,
    pub attr: AttributeModel,
    pub rel: RelationModel,
    pub scheme: SchemeRegistry,
}

impl PipelineBundle {
    pub fn new(
        crf: CrfModel,
        attr: AttributeModel,
        rel: RelationModel,
        scheme: SchemeRegistry,
    ) -> Result<PipelineBundle> {
        if attr.feature_config != rel.feature_config {
            return Err(Error::Checkpoint(
                "attribute and relation models use different feature spaces".into(),
            ));
        }
        Ok(PipelineBundle { crf, attr, rel, scheme })
    }

    /// Extract entities, then attributes and relations on those
    /// entities. The output is valid against the scheme by
    /// construction: decoded spans are flat and in range, and both
    /// heads apply the applicability masks.
    pub fn extract(&self, doc: &Document) -> AnnotationSet {
        let chars = doc.chars();
        let mut ann = AnnotationSet::new(doc.doc_id.clone());
        ann.entities = self.crf.predict_entities(&chars);
        if ann.entities.is_empty() {
            return ann;
        }

        let unit = UnitFeatures::extract(&chars, &self.attr.feature_config);
        let mut reps = std::collections::BTreeMap::new();
        for e in &ann.entities {
            reps.insert(*e, pool_span(&unit, e.start, e.end));
        }
        for e in &ann.entities {
            for a in self.attr.predict(&reps[e], e.etype, &self.scheme) {
                ann.attributes.insert(Attribute::new(a, *e));
            }
        }
        for (h, t, allowed) in candidate_pairs(&ann.entities, &self.scheme, self.rel.window) {
            if let Some(r) = self.rel.predict(&reps[&h], &reps[&t], &allowed) {
                ann.relations.insert(Relation::new(r, h, t));
            }
        }
        ann
    }

    /// Extract a batch in parallel; output order matches input order.
    pub fn extract_all(&self, docs: &[Document]) -> Vec<AnnotationSet> {
        docs.par_iter().map(|d| self.extract(d)).collect()
    }

    /// Extract, then drop each entity independently with probability
    /// `drop_rate`, removing its relations and attributes with it.
    /// Deterministic per seed and document id.
    pub fn preannotate(
        &self,
        docs: &[Document],
        drop_rate: f64,
        seed: u64,
    ) -> Result<Vec<AnnotationSet>> {
        if !(0.0..=1.0).contains(&drop_rate) {
            return Err(Error::Train(format!(
                "drop_rate must lie in [0, 1], got {drop_rate}"
            )));
        }
        Ok(docs
            .par_iter()
            .map(|doc| {
                let mut ann = self.extract(doc);
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ fnv1a(doc.doc_id.as_bytes()),
                );
                let entities: Vec<_> = ann.entities.iter().copied().collect();
                for e in entities {
                    if rng.gen::<f64>() < drop_rate {
                        ann.remove_entity(&e);
                    }
                }
                ann
            })
            .collect())
    }
}

/// Settings for training all three models in one go.
#[derive(Debug, Clone)]
pub struct PipelineTrainConfig {
    pub features: FeatureConfig,
    pub crf: TrainConfig,
    pub span: TrainConfig,
    /// Attribute decision threshold.
    pub alpha: f64,
    /// Relation candidate window in characters.
    pub window: usize,
}

impl Default for PipelineTrainConfig {
    fn default() -> PipelineTrainConfig {
        PipelineTrainConfig {
            features: FeatureConfig::default(),
            crf: TrainConfig::default(),
            span: TrainConfig::default(),
            alpha: 0.5,
            window: 150,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineTrainReports {
    pub entity: TrainReport,
    pub attribute: TrainReport,
    pub relation: TrainReport,
}

/// Train entity, attribute and relation models separately on the same
/// corpus and assemble the bundle.
pub fn train_pipeline(
    train: &[AnnotatedDoc],
    dev: &[AnnotatedDoc],
    scheme: &SchemeRegistry,
    cfg: &PipelineTrainConfig,
) -> Result<(PipelineBundle, PipelineTrainReports)> {
    let tags = TagInventory::from_scheme(scheme);
    let (crf_model, entity_report) = crf::train(train, dev, &cfg.features, tags, &cfg.crf)?;
    let (attr, rel, attribute_report, relation_report) = span::train_span_models(
        train,
        dev,
        &cfg.features,
        scheme,
        &cfg.span,
        cfg.alpha,
        cfg.window,
    )?;
    let bundle = PipelineBundle::new(crf_model, attr, rel, scheme.clone())?;
    Ok((
        bundle,
        PipelineTrainReports {
            entity: entity_report,
            attribute: attribute_report,
            relation: relation_report,
        },
    ))
}
