//! Span-based attribute and relation extraction: max-pooled span
//! representations, a multi-hot sigmoid attribute head with a `None`
//! override, and a softmax relation head over candidate entity pairs.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::annotation::{Attribute, Entity, Relation};
use crate::corpus::AnnotatedDoc;
use crate::crf::{TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, UnitFeatures};
use crate::optim::{clip_l2, AdamW};
use crate::scheme::{AttributeTypeId, EntityTypeId, RelationTypeId, SchemeRegistry};
use crate::validate::is_candidate_pair;

/// Pooled feature vector of one entity span: the element-wise maximum
/// of the per-position feature vectors, which for (near-)binary hashed
/// features is the union of active features.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanRep {
    /// Sorted `(bucket, value)` pairs.
    pub feats: Vec<(u32, f64)>,
}

/// Pool positions `start..end` of a feature unit.
pub fn pool_span(unit: &UnitFeatures, start: usize, end: usize) -> SpanRep {
    let mut pooled: BTreeMap<u32, f64> = BTreeMap::new();
    for t in start..end {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for &f in unit.at(t) {
            *counts.entry(f).or_insert(0.0) += 1.0;
        }
        for (f, c) in counts {
            let slot = pooled.entry(f).or_insert(0.0);
            if c > *slot {
                *slot = c;
            }
        }
    }
    SpanRep { feats: pooled.into_iter().collect() }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Multi-hot attribute head. Class 0 is `None`; class `1 + a` is
/// attribute type `a`.
#[derive(Debug, Clone)]
pub struct AttributeModel {
    pub feature_config: FeatureConfig,
    pub n_classes: usize,
    /// Feature-major weights: `w[f * n_classes + k]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// Decision threshold.
    pub alpha: f64,
}

impl AttributeModel {
    pub fn new(feature_config: FeatureConfig, n_attributes: usize, alpha: f64) -> Result<AttributeModel> {
        feature_config.validate()?;
        let n_classes = n_attributes + 1;
        Ok(AttributeModel {
            w: vec![0.0; feature_config.hash_dim * n_classes],
            b: vec![0.0; n_classes],
            feature_config,
            n_classes,
            alpha,
        })
    }

    pub fn logits(&self, rep: &SpanRep) -> Vec<f64> {
        let mut z = self.b.clone();
        for &(f, v) in &rep.feats {
            let row = &self.w[f as usize * self.n_classes..(f as usize + 1) * self.n_classes];
            for (zi, wi) in z.iter_mut().zip(row) {
                *zi += wi * v;
            }
        }
        z
    }

    /// Attribute types whose probability strictly exceeds the
    /// threshold, unless `None` itself exceeds it; masked to the types
    /// applicable to the entity's type.
    pub fn predict(
        &self,
        rep: &SpanRep,
        entity_type: EntityTypeId,
        scheme: &SchemeRegistry,
    ) -> BTreeSet<AttributeTypeId> {
        let z = self.logits(rep);
        if sigmoid(z[0]) > self.alpha {
            return BTreeSet::new();
        }
        let mut out = BTreeSet::new();
        for a in 0..self.n_classes - 1 {
            if sigmoid(z[1 + a]) > self.alpha {
                let id = AttributeTypeId(a as u16);
                if scheme.attribute_def(id).applies_to(entity_type) {
                    out.insert(id);
                }
            }
        }
        out
    }
}

/// Softmax relation head over the concatenation of head and tail span
/// representations. Class 0 is `None`; class `1 + r` is relation type
/// `r`. Tail features live in the second half of the doubled feature
/// space.
#[derive(Debug, Clone)]
pub struct RelationModel {
    pub feature_config: FeatureConfig,
    pub n_classes: usize,
    /// Feature-major weights over `2 * hash_dim` inputs.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    /// Maximum character gap between candidate entities.
    pub window: usize,
}

impl RelationModel {
    pub fn new(feature_config: FeatureConfig, n_relations: usize, window: usize) -> Result<RelationModel> {
        feature_config.validate()?;
        let n_classes = n_relations + 1;
        Ok(RelationModel {
            w: vec![0.0; 2 * feature_config.hash_dim * n_classes],
            b: vec![0.0; n_classes],
            feature_config,
            n_classes,
            window,
        })
    }

    pub fn logits(&self, head: &SpanRep, tail: &SpanRep) -> Vec<f64> {
        let mut z = self.b.clone();
        let k = self.n_classes;
        for &(f, v) in &head.feats {
            let row = &self.w[f as usize * k..(f as usize + 1) * k];
            for (zi, wi) in z.iter_mut().zip(row) {
                *zi += wi * v;
            }
        }
        let off = self.feature_config.hash_dim;
        for &(f, v) in &tail.feats {
            let row = &self.w[(off + f as usize) * k..(off + f as usize + 1) * k];
            for (zi, wi) in z.iter_mut().zip(row) {
                *zi += wi * v;
            }
        }
        z
    }

    /// Argmax over `None` plus the allowed types; ties break toward the
    /// lowest class index, so a zero model predicts `None`.
    pub fn predict(
        &self,
        head: &SpanRep,
        tail: &SpanRep,
        allowed: &[RelationTypeId],
    ) -> Option<RelationTypeId> {
        let z = self.logits(head, tail);
        let mut best_class = 0usize;
        let mut best = z[0];
        for &r in allowed {
            let k = 1 + r.0 as usize;
            if z[k] > best {
                best = z[k];
                best_class = k;
            }
        }
        if best_class == 0 {
            None
        } else {
            Some(RelationTypeId((best_class - 1) as u16))
        }
    }
}

/// Character gap between two flat spans; zero when they touch or
/// overlap.
fn char_gap(a: &Entity, b: &Entity) -> usize {
    if b.start >= a.end {
        b.start - a.end
    } else if a.start >= b.end {
        a.start - b.end
    } else {
        0
    }
}

/// All ordered pairs of distinct entities whose gap fits the window
/// and that admit at least one relation type; returned with the
/// admissible types, deterministically ordered.
pub fn candidate_pairs(
    entities: &BTreeSet<Entity>,
    scheme: &SchemeRegistry,
    window: usize,
) -> Vec<(Entity, Entity, Vec<RelationTypeId>)> {
    let sorted: Vec<&Entity> = entities.iter().collect();
    let mut out = Vec::new();
    for &h in &sorted {
        for &t in &sorted {
            if h == t || char_gap(h, t) > window {
                continue;
            }
            let allowed: Vec<RelationTypeId> = scheme
                .relation_ids()
                .filter(|r| is_candidate_pair(h, t, *r, scheme))
                .collect();
            if !allowed.is_empty() {
                out.push((*h, *t, allowed));
            }
        }
    }
    out
}

struct AttrExample {
    rep: SpanRep,
    /// Multi-hot target over `None` + attribute classes.
    target: Vec<f64>,
}

struct RelExample {
    head: SpanRep,
    tail: SpanRep,
    allowed: Vec<RelationTypeId>,
    /// 0 for `None`, `1 + r` otherwise.
    target: usize,
}

fn attr_examples(docs: &[AnnotatedDoc], cfg: &FeatureConfig, n_attrs: usize) -> Vec<AttrExample> {
    let mut out = Vec::new();
    for ad in docs {
        let chars = ad.doc.chars();
        let unit = UnitFeatures::extract(&chars, cfg);
        for e in &ad.ann.entities {
            if e.end > unit.len() || e.start >= e.end {
                continue;
            }
            let rep = pool_span(&unit, e.start, e.end);
            let mut target = vec![0.0; n_attrs + 1];
            let mut any = false;
            for a in &ad.ann.attributes {
                if a.entity == *e {
                    target[1 + a.atype.0 as usize] = 1.0;
                    any = true;
                }
            }
            if !any {
                target[0] = 1.0;
            }
            out.push(AttrExample { rep, target });
        }
    }
    out
}

fn rel_examples(
    docs: &[AnnotatedDoc],
    cfg: &FeatureConfig,
    scheme: &SchemeRegistry,
    window: usize,
) -> Vec<RelExample> {
    let mut out = Vec::new();
    for ad in docs {
        let chars = ad.doc.chars();
        let unit = UnitFeatures::extract(&chars, cfg);
        let mut reps: BTreeMap<Entity, SpanRep> = BTreeMap::new();
        for (h, t, allowed) in candidate_pairs(&ad.ann.entities, scheme, window) {
            if h.end > unit.len() || t.end > unit.len() {
                continue;
            }
            let target = ad
                .ann
                .relations
                .iter()
                .filter(|r| r.head == h && r.tail == t)
                .map(|r| 1 + r.rtype.0 as usize)
                .min()
                .unwrap_or(0);
            let head = reps
                .entry(h)
                .or_insert_with(|| pool_span(&unit, h.start, h.end))
                .clone();
            let tail = reps
                .entry(t)
                .or_insert_with(|| pool_span(&unit, t.start, t.end))
                .clone();
            out.push(RelExample { head, tail, allowed, target });
        }
    }
    out
}

fn f1_from_counts(n_gold: usize, n_pred: usize, matched: usize) -> f64 {
    let p = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
    let r = if n_gold == 0 { 0.0 } else { matched as f64 / n_gold as f64 };
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

fn dev_attr_f1(model: &AttributeModel, docs: &[AnnotatedDoc], scheme: &SchemeRegistry) -> f64 {
    let mut n_gold = 0;
    let mut n_pred = 0;
    let mut matched = 0;
    for ad in docs {
        let chars = ad.doc.chars();
        let unit = UnitFeatures::extract(&chars, &model.feature_config);
        let mut pred: BTreeSet<Attribute> = BTreeSet::new();
        for e in &ad.ann.entities {
            if e.end > unit.len() {
                continue;
            }
            let rep = pool_span(&unit, e.start, e.end);
            for a in model.predict(&rep, e.etype, scheme) {
                pred.insert(Attribute::new(a, *e));
            }
        }
        n_gold += ad.ann.attributes.len();
        n_pred += pred.len();
        matched += ad.ann.attributes.intersection(&pred).count();
    }
    f1_from_counts(n_gold, n_pred, matched)
}

fn dev_rel_f1(model: &RelationModel, docs: &[AnnotatedDoc], scheme: &SchemeRegistry) -> f64 {
    let mut n_gold = 0;
    let mut n_pred = 0;
    let mut matched = 0;
    for ad in docs {
        let chars = ad.doc.chars();
        let unit = UnitFeatures::extract(&chars, &model.feature_config);
        let mut pred: BTreeSet<Relation> = BTreeSet::new();
        for (h, t, allowed) in candidate_pairs(&ad.ann.entities, scheme, model.window) {
            if h.end > unit.len() || t.end > unit.len() {
                continue;
            }
            let head = pool_span(&unit, h.start, h.end);
            let tail = pool_span(&unit, t.start, t.end);
            if let Some(r) = model.predict(&head, &tail, &allowed) {
                pred.insert(Relation::new(r, h, t));
            }
        }
        n_gold += ad.ann.relations.len();
        n_pred += pred.len();
        matched += ad.ann.relations.intersection(&pred).count();
    }
    f1_from_counts(n_gold, n_pred, matched)
}

/// Train the attribute and relation heads on gold entities, selecting
/// each best checkpoint by its dev F1. Deterministic for a fixed seed.
pub fn train_span_models(
    train: &[AnnotatedDoc],
    dev: &[AnnotatedDoc],
    feature_config: &FeatureConfig,
    scheme: &SchemeRegistry,
    cfg: &TrainConfig,
    alpha: f64,
    window: usize,
) -> Result<(AttributeModel, RelationModel, TrainReport, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Train("empty training or dev corpus".into()));
    }
    let n_attrs = scheme.attribute_types().len();
    let n_rels = scheme.relation_types().len();

    // Attribute head: independent binary cross-entropy per class.
    let examples = attr_examples(train, feature_config, n_attrs);
    let mut attr = AttributeModel::new(feature_config.clone(), n_attrs, alpha)?;
    let attr_report = {
        let mut opt_w = AdamW::new(attr.w.len(), cfg.learning_rate, cfg.l2_penalty);
        let mut opt_b = AdamW::new(attr.b.len(), cfg.learning_rate, cfg.l2_penalty);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa77b);
        let mut grad_w = vec![0.0; attr.w.len()];
        let mut grad_b = vec![0.0; attr.b.len()];
        let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut report = TrainReport {
            epochs_run: 0,
            best_epoch: 0,
            best_dev_f1: f64::NEG_INFINITY,
            epoch_losses: Vec::new(),
            dev_f1s: Vec::new(),
        };
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let k = attr.n_classes;
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                grad_b.iter_mut().for_each(|g| *g = 0.0);
                let mut batch_loss = 0.0;
                for &i in batch {
                    let ex = &examples[i];
                    let z = attr.logits(&ex.rep);
                    for c in 0..k {
                        let p = sigmoid(z[c]);
                        let y = ex.target[c];
                        batch_loss -= y * p.max(1e-300).ln() + (1.0 - y) * (1.0 - p).max(1e-300).ln();
                        let d = p - y;
                        grad_b[c] += d;
                        for &(f, v) in &ex.rep.feats {
                            grad_w[f as usize * k + c] += d * v;
                        }
                    }
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                let inv = 1.0 / batch.len() as f64;
                grad_w.iter_mut().for_each(|g| *g *= inv);
                grad_b.iter_mut().for_each(|g| *g *= inv);
                clip_pair(&mut grad_w, &mut grad_b, cfg.grad_clip_l2);
                opt_w.step(&mut attr.w, &grad_w);
                opt_b.step(&mut attr.b, &grad_b);
                epoch_loss += batch_loss;
            }
            report
                .epoch_losses
                .push(epoch_loss / examples.len().max(1) as f64);
            let f1 = dev_attr_f1(&attr, dev, scheme);
            report.dev_f1s.push(f1);
            report.epochs_run = epoch + 1;
            if f1 > report.best_dev_f1 {
                report.best_dev_f1 = f1;
                report.best_epoch = epoch;
                best = Some((attr.w.clone(), attr.b.clone()));
            } else if epoch - report.best_epoch >= cfg.patience {
                break;
            }
        }
        if let Some((w, b)) = best {
            attr.w = w;
            attr.b = b;
        }
        report
    };

    // Relation head: cross-entropy over the admissible types plus None.
    let examples = rel_examples(train, feature_config, scheme, window);
    let mut rel = RelationModel::new(feature_config.clone(), n_rels, window)?;
    let rel_report = {
        let mut opt_w = AdamW::new(rel.w.len(), cfg.learning_rate, cfg.l2_penalty);
        let mut opt_b = AdamW::new(rel.b.len(), cfg.learning_rate, cfg.l2_penalty);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x8e1a);
        let mut grad_w = vec![0.0; rel.w.len()];
        let mut grad_b = vec![0.0; rel.b.len()];
        let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut report = TrainReport {
            epochs_run: 0,
            best_epoch: 0,
            best_dev_f1: f64::NEG_INFINITY,
            epoch_losses: Vec::new(),
            dev_f1s: Vec::new(),
        };
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let k = rel.n_classes;
        let off = feature_config.hash_dim;
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
                grad_w.iter_mut().for_each(|g| *g = 0.0);
                grad_b.iter_mut().for_each(|g| *g = 0.0);
                let mut batch_loss = 0.0;
                for &i in batch {
                    let ex = &examples[i];
                    let z = rel.logits(&ex.head, &ex.tail);
                    // log-sum-exp over the restricted support
                    let mut support = vec![0usize];
                    support.extend(ex.allowed.iter().map(|r| 1 + r.0 as usize));
                    let m = support.iter().map(|&c| z[c]).fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + support.iter().map(|&c| (z[c] - m).exp()).sum::<f64>().ln();
                    batch_loss += lse - z[ex.target];
                    for &c in &support {
                        let p = (z[c] - lse).exp();
                        let d = p - if c == ex.target { 1.0 } else { 0.0 };
                        grad_b[c] += d;
                        for &(f, v) in &ex.head.feats {
                            grad_w[f as usize * k + c] += d * v;
                        }
                        for &(f, v) in &ex.tail.feats {
                            grad_w[(off + f as usize) * k + c] += d * v;
                        }
                    }
                }
                if !batch_loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
                }
                let inv = 1.0 / batch.len() as f64;
                grad_w.iter_mut().for_each(|g| *g *= inv);
                grad_b.iter_mut().for_each(|g| *g *= inv);
                clip_pair(&mut grad_w, &mut grad_b, cfg.grad_clip_l2);
                opt_w.step(&mut rel.w, &grad_w);
                opt_b.step(&mut rel.b, &grad_b);
                epoch_loss += batch_loss;
            }
            report
                .epoch_losses
                .push(epoch_loss / examples.len().max(1) as f64);
            let f1 = dev_rel_f1(&rel, dev, scheme);
            report.dev_f1s.push(f1);
            report.epochs_run = epoch + 1;
            if f1 > report.best_dev_f1 {
                report.best_dev_f1 = f1;
                report.best_epoch = epoch;
                best = Some((rel.w.clone(), rel.b.clone()));
            } else if epoch - report.best_epoch >= cfg.patience {
                break;
            }
        }
        if let Some((w, b)) = best {
            rel.w = w;
            rel.b = b;
        }
        report
    };

    Ok((attr, rel, attr_report, rel_report))
}

fn clip_pair(a: &mut [f64], b: &mut [f64], max_norm: f64) {
    let sq: f64 = a.iter().map(|g| g * g).sum::<f64>() + b.iter().map(|g| g * g).sum::<f64>();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        a.iter_mut().for_each(|g| *g *= s);
        b.iter_mut().for_each(|g| *g *= s);
    }
    let _ = clip_l2; // shared helper kept for single-vector cases
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::builtin_scheme;

    fn small_cfg() -> FeatureConfig {
        FeatureConfig { window: 2, hash_dim: 1 << 12 }
    }

    #[test]
    fn pooling_single_position_and_union() {
        let cfg = small_cfg();
        let chars: Vec<char> = "咳嗽三天".chars().collect();
        let unit = UnitFeatures::extract(&chars, &cfg);
        let single = pool_span(&unit, 1, 2);
        let expect: Vec<(u32, f64)> = {
            let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
            for &f in unit.at(1) {
                *counts.entry(f).or_insert(0.0) += 1.0;
            }
            counts.into_iter().collect()
        };
        assert_eq!(single.feats, expect);

        // Pooling two positions covers the union of their features.
        let both = pool_span(&unit, 0, 2);
        let set: BTreeSet<u32> = both.feats.iter().map(|(f, _)| *f).collect();
        for t in 0..2 {
            for &f in unit.at(t) {
                assert!(set.contains(&f));
            }
        }
    }

    #[test]
    fn zero_attribute_model_predicts_nothing() {
        let scheme = builtin_scheme();
        let cfg = small_cfg();
        let model = AttributeModel::new(cfg.clone(), scheme.attribute_types().len(), 0.5).unwrap();
        let chars: Vec<char> = "胸闷".chars().collect();
        let unit = UnitFeatures::extract(&chars, &cfg);
        let rep = pool_span(&unit, 0, 2);
        let sra = scheme.entity_type("Self-Reported Abnormality").unwrap();
        // every probability is exactly 0.5, the boundary is exclusive
        assert!(model.predict(&rep, sra, &scheme).is_empty());
    }

    #[test]
    fn none_override_and_applicability_mask() {
        let scheme = builtin_scheme();
        let cfg = small_cfg();
        let n = scheme.attribute_types().len();
        let neg = scheme.attribute("Negation").unwrap();

        let mut model = AttributeModel::new(cfg.clone(), n, 0.5).unwrap();
        // bias-only logits: None very likely, Negation likely
        model.b[0] = 3.0;
        model.b[1 + neg.0 as usize] = 2.0;
        let rep = SpanRep { feats: Vec::new() };
        let sra = scheme.entity_type("Self-Reported Abnormality").unwrap();
        assert!(model.predict(&rep, sra, &scheme).is_empty());

        // Remove the override: Negation fires on an applicable type...
        model.b[0] = -3.0;
        let got = model.predict(&rep, sra, &scheme);
        assert!(got.contains(&neg));
        // ...but is masked out on Test Result.
        let tr = scheme.entity_type("Test Result").unwrap();
        assert!(model.predict(&rep, tr, &scheme).is_empty());
    }

    #[test]
    fn candidate_pairs_respect_window_and_types() {
        let scheme = builtin_scheme();
        let sra = scheme.entity_type("Self-Reported Abnormality").unwrap();
        let dos = scheme.entity_type("Disease or Syndrome").unwrap();
        let dept = scheme.entity_type("Department").unwrap();

        let mut ents = BTreeSet::new();
        ents.insert(Entity::new(sra, 2, 6));
        ents.insert(Entity::new(dos, 35, 40));
        ents.insert(Entity::new(dept, 50, 53));
        let pairs = candidate_pairs(&ents, &scheme, 150);
        let suggest = scheme.relation("Information-Suggest-Status").unwrap();
        assert!(pairs.iter().any(|(h, t, allowed)| h.start == 2
            && t.start == 35
            && allowed.contains(&suggest)));
        // Department never pairs.
        assert!(pairs.iter().all(|(h, t, _)| h.etype != dept && t.etype != dept));
        // Too far apart: excluded.
        let pairs = candidate_pairs(&ents, &scheme, 10);
        assert!(pairs.is_empty());
    }

    #[test]
    fn zero_relation_model_prefers_none() {
        let scheme = builtin_scheme();
        let cfg = small_cfg();
        let model = RelationModel::new(cfg, scheme.relation_types().len(), 150).unwrap();
        let rep = SpanRep { feats: Vec::new() };
        let allowed: Vec<RelationTypeId> = scheme.relation_ids().collect();
        assert_eq!(model.predict(&rep, &rep, &allowed), None);
    }

    #[test]
    fn strong_none_logit_wins() {
        let scheme = builtin_scheme();
        let cfg = small_cfg();
        let mut model = RelationModel::new(cfg, scheme.relation_types().len(), 150).unwrap();
        model.b[0] = 5.0;
        let rep = SpanRep { feats: Vec::new() };
        let allowed: Vec<RelationTypeId> = scheme.relation_ids().collect();
        assert_eq!(model.predict(&rep, &rep, &allowed), None);
    }
}
