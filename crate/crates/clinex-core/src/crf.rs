//! Linear-chain CRF over hashed character features: emission scores,
//! exact log-partition by the forward recursion, maximum-likelihood
//! gradients from forward-backward marginals, Viterbi decoding, and a
//! mini-batch trainer with early stopping.
//!
//! All sequence arithmetic is in log space.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::Entity;
use crate::bio::{self, TagId, TagInventory, TagSequence};
use crate::corpus::AnnotatedDoc;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, UnitFeatures};
use crate::optim::AdamW;
use crate::segment::segment;

/// Optimizer and schedule settings shared by all trainable models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub grad_clip_l2: f64,
    pub l2_penalty: f64,
    /// Epochs without a dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 48,
            max_epochs: 50,
            grad_clip_l2: 5.0,
            l2_penalty: 1e-6,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("grad_clip_l2", self.grad_clip_l2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Train(format!("{name} must be positive")));
            }
        }
        if self.l2_penalty < 0.0 {
            return Err(Error::Train("l2_penalty must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Train(
                "batch_size, max_epochs and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Entity recognition model: per-tag emission weights over the hashed
/// feature space plus tag-transition scores with begin/end states.
#[derive(Debug, Clone)]
pub struct CrfModel {
    pub feature_config: FeatureConfig,
    pub tags: TagInventory,
    /// Feature-major emission weights: `em[f * K + k]`.
    pub em: Vec<f64>,
    /// Transition scores, `(K+2) x (K+2)` row-major; row/column `K` is
    /// the begin state, `K + 1` the end state.
    pub trans: Vec<f64>,
}

/// Dense gradient with the same layout as the model parameters.
#[derive(Debug, Clone)]
pub struct CrfGrad {
    pub em: Vec<f64>,
    pub trans: Vec<f64>,
}

impl CrfGrad {
    fn zeros_like(model: &CrfModel) -> CrfGrad {
        CrfGrad {
            em: vec![0.0; model.em.len()],
            trans: vec![0.0; model.trans.len()],
        }
    }

    fn reset(&mut self) {
        self.em.iter_mut().for_each(|g| *g = 0.0);
        self.trans.iter_mut().for_each(|g| *g = 0.0);
    }

    fn scale(&mut self, s: f64) {
        self.em.iter_mut().for_each(|g| *g *= s);
        self.trans.iter_mut().for_each(|g| *g *= s);
    }
}

#[inline]
fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl CrfModel {
    /// Zero-initialized model for the given feature space and tag set.
    pub fn new(feature_config: FeatureConfig, tags: TagInventory) -> Result<CrfModel> {
        feature_config.validate()?;
        let k = tags.len();
        let em = vec![0.0; feature_config.hash_dim * k];
        let trans = vec![0.0; (k + 2) * (k + 2)];
        Ok(CrfModel { feature_config, tags, em, trans })
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    fn begin(&self) -> usize {
        self.n_tags()
    }

    fn end(&self) -> usize {
        self.n_tags() + 1
    }

    #[inline]
    fn tr(&self, from: usize, to: usize) -> f64 {
        self.trans[from * (self.n_tags() + 2) + to]
    }

    /// Pre-softmax emission scores, `T x K` row-major:
    /// `score[t][k] = <em_k, phi(x, t)>`.
    pub fn emissions(&self, unit: &UnitFeatures) -> Vec<f64> {
        let k = self.n_tags();
        let mut scores = vec![0.0; unit.len() * k];
        for t in 0..unit.len() {
            let row = &mut scores[t * k..(t + 1) * k];
            for &f in unit.at(t) {
                let w = &self.em[f as usize * k..(f as usize + 1) * k];
                for (r, wi) in row.iter_mut().zip(w) {
                    *r += wi;
                }
            }
        }
        scores
    }

    fn forward(&self, em: &[f64], t_len: usize) -> Vec<f64> {
        let k = self.n_tags();
        let mut alpha = vec![0.0; t_len * k];
        for tag in 0..k {
            alpha[tag] = self.tr(self.begin(), tag) + em[tag];
        }
        let mut buf = vec![0.0; k];
        for t in 1..t_len {
            for tag in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = alpha[(t - 1) * k + j] + self.tr(j, tag);
                }
                alpha[t * k + tag] = logsumexp(&buf) + em[t * k + tag];
            }
        }
        alpha
    }

    fn backward(&self, em: &[f64], t_len: usize) -> Vec<f64> {
        let k = self.n_tags();
        let mut beta = vec![0.0; t_len * k];
        for tag in 0..k {
            beta[(t_len - 1) * k + tag] = self.tr(tag, self.end());
        }
        let mut buf = vec![0.0; k];
        for t in (0..t_len - 1).rev() {
            for tag in 0..k {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = self.tr(tag, j) + em[(t + 1) * k + j] + beta[(t + 1) * k + j];
                }
                beta[t * k + tag] = logsumexp(&buf);
            }
        }
        beta
    }

    /// Log of the sum over all tag sequences of the exponentiated path
    /// score, by the forward recursion.
    pub fn log_partition(&self, unit: &UnitFeatures) -> f64 {
        let em = self.emissions(unit);
        self.log_partition_given(&em, unit.len())
    }

    /// Forward log-partition over an explicit emission score matrix.
    pub fn log_partition_given(&self, em: &[f64], t_len: usize) -> f64 {
        if t_len == 0 {
            return 0.0;
        }
        let k = self.n_tags();
        let alpha = self.forward(em, t_len);
        let last = &alpha[(t_len - 1) * k..];
        let buf: Vec<f64> = (0..k).map(|tag| last[tag] + self.tr(tag, self.end())).collect();
        logsumexp(&buf)
    }

    /// Same quantity by the backward recursion; the two must agree.
    pub fn log_partition_via_backward(&self, unit: &UnitFeatures) -> f64 {
        if unit.is_empty() {
            return 0.0;
        }
        let k = self.n_tags();
        let em = self.emissions(unit);
        let beta = self.backward(&em, unit.len());
        let buf: Vec<f64> = (0..k)
            .map(|tag| self.tr(self.begin(), tag) + em[tag] + beta[tag])
            .collect();
        logsumexp(&buf)
    }

    /// Path score of one tag sequence (emissions plus transitions,
    /// including the begin and end transitions).
    pub fn sequence_score(&self, unit: &UnitFeatures, tags: &[TagId]) -> f64 {
        if tags.is_empty() {
            return 0.0;
        }
        let k = self.n_tags();
        let em = self.emissions(unit);
        let mut score = self.tr(self.begin(), tags[0] as usize);
        for (t, &tag) in tags.iter().enumerate() {
            score += em[t * k + tag as usize];
            if t + 1 < tags.len() {
                score += self.tr(tag as usize, tags[t + 1] as usize);
            }
        }
        score + self.tr(tags[tags.len() - 1] as usize, self.end())
    }

    /// Posterior tag marginals, `T x K` row-major; each row sums to one.
    pub fn marginals(&self, unit: &UnitFeatures) -> Vec<f64> {
        let k = self.n_tags();
        let t_len = unit.len();
        let em = self.emissions(unit);
        let alpha = self.forward(&em, t_len);
        let beta = self.backward(&em, t_len);
        let last = &alpha[(t_len - 1) * k..];
        let buf: Vec<f64> = (0..k).map(|tag| last[tag] + self.tr(tag, self.end())).collect();
        let log_z = logsumexp(&buf);
        (0..t_len * k)
            .map(|i| (alpha[i] + beta[i] - log_z).exp())
            .collect()
    }

    /// Highest-scoring tag sequence. Score ties break toward the lowest
    /// tag index at every backpointer.
    pub fn viterbi(&self, unit: &UnitFeatures) -> TagSequence {
        let em = self.emissions(unit);
        self.viterbi_given(&em, unit.len())
    }

    /// Viterbi over an explicit emission score matrix.
    pub fn viterbi_given(&self, em: &[f64], t_len: usize) -> TagSequence {
        let k = self.n_tags();
        if t_len == 0 {
            return TagSequence { tags: Vec::new() };
        }
        let mut score = vec![0.0; t_len * k];
        let mut back = vec![0u16; t_len * k];
        for tag in 0..k {
            score[tag] = self.tr(self.begin(), tag) + em[tag];
        }
        for t in 1..t_len {
            for tag in 0..k {
                let mut best_j = 0usize;
                let mut best = score[(t - 1) * k] + self.tr(0, tag);
                for j in 1..k {
                    let cand = score[(t - 1) * k + j] + self.tr(j, tag);
                    if cand > best {
                        best = cand;
                        best_j = j;
                    }
                }
                score[t * k + tag] = best + em[t * k + tag];
                back[t * k + tag] = best_j as u16;
            }
        }
        let mut best_tag = 0usize;
        let mut best = score[(t_len - 1) * k] + self.tr(0, self.end());
        for tag in 1..k {
            let cand = score[(t_len - 1) * k + tag] + self.tr(tag, self.end());
            if cand > best {
                best = cand;
                best_tag = tag;
            }
        }
        let mut tags = vec![0 as TagId; t_len];
        tags[t_len - 1] = best_tag as TagId;
        for t in (1..t_len).rev() {
            tags[t - 1] = back[t * k + tags[t] as usize];
        }
        TagSequence { tags }
    }

    /// Negative log-likelihood of `gold` plus an optional L2 penalty,
    /// with its exact gradient (expected minus observed features).
    ///
    /// The penalty is part of this contract for gradient checking; the
    /// trainer passes zero here and applies decay decoupled instead.
    pub fn nll_and_gradient(
        &self,
        unit: &UnitFeatures,
        gold: &[TagId],
        l2_penalty: f64,
    ) -> Result<(f64, CrfGrad)> {
        if gold.len() != unit.len() {
            return Err(Error::Train(format!(
                "gold length {} does not match unit length {}",
                gold.len(),
                unit.len()
            )));
        }
        if gold.is_empty() {
            return Err(Error::Train("empty sequence".into()));
        }
        let mut grad = CrfGrad::zeros_like(self);
        let mut loss = self.accumulate_nll(unit, gold, &mut grad)?;
        if l2_penalty != 0.0 {
            let mut sq = 0.0;
            for (g, w) in grad.em.iter_mut().zip(&self.em) {
                *g += l2_penalty * w;
                sq += w * w;
            }
            for (g, w) in grad.trans.iter_mut().zip(&self.trans) {
                *g += l2_penalty * w;
                sq += w * w;
            }
            loss += 0.5 * l2_penalty * sq;
        }
        Ok((loss, grad))
    }

    /// Add the data-term NLL gradient of one sequence into `grad` and
    /// return the data-term loss.
    fn accumulate_nll(
        &self,
        unit: &UnitFeatures,
        gold: &[TagId],
        grad: &mut CrfGrad,
    ) -> Result<f64> {
        let k = self.n_tags();
        let kk = k + 2;
        let t_len = unit.len();
        let em = self.emissions(unit);
        let alpha = self.forward(&em, t_len);
        let beta = self.backward(&em, t_len);
        let last = &alpha[(t_len - 1) * k..];
        let buf: Vec<f64> = (0..k).map(|tag| last[tag] + self.tr(tag, self.end())).collect();
        let log_z = logsumexp(&buf);
        let gold_score = self.sequence_score_given(&em, gold);
        let loss = log_z - gold_score;

        // Unary marginals drive the emission gradient.
        for t in 0..t_len {
            let feats = unit.at(t);
            for tag in 0..k {
                let gamma = (alpha[t * k + tag] + beta[t * k + tag] - log_z).exp();
                if gamma == 0.0 {
                    continue;
                }
                for &f in feats {
                    grad.em[f as usize * k + tag] += gamma;
                }
            }
            let g = gold[t] as usize;
            for &f in feats {
                grad.em[f as usize * k + g] -= 1.0;
            }
        }

        // Begin/end transitions.
        for tag in 0..k {
            let gamma0 = (alpha[tag] + beta[tag] - log_z).exp();
            grad.trans[self.begin() * kk + tag] += gamma0;
            let gamma_last =
                (alpha[(t_len - 1) * k + tag] + beta[(t_len - 1) * k + tag] - log_z).exp();
            grad.trans[tag * kk + self.end()] += gamma_last;
        }
        grad.trans[self.begin() * kk + gold[0] as usize] -= 1.0;
        grad.trans[gold[t_len - 1] as usize * kk + self.end()] -= 1.0;

        // Pairwise marginals drive the inner transition gradient.
        for t in 0..t_len.saturating_sub(1) {
            for j in 0..k {
                let a = alpha[t * k + j];
                if a == f64::NEG_INFINITY {
                    continue;
                }
                for tag in 0..k {
                    let xi = (a
                        + self.tr(j, tag)
                        + em[(t + 1) * k + tag]
                        + beta[(t + 1) * k + tag]
                        - log_z)
                        .exp();
                    grad.trans[j * kk + tag] += xi;
                }
            }
            grad.trans[gold[t] as usize * kk + gold[t + 1] as usize] -= 1.0;
        }

        if !loss.is_finite() {
            return Err(Error::Train("non-finite sequence loss".into()));
        }
        Ok(loss)
    }

    fn sequence_score_given(&self, em: &[f64], tags: &[TagId]) -> f64 {
        let k = self.n_tags();
        let mut score = self.tr(self.begin(), tags[0] as usize);
        for (t, &tag) in tags.iter().enumerate() {
            score += em[t * k + tag as usize];
            if t + 1 < tags.len() {
                score += self.tr(tag as usize, tags[t + 1] as usize);
            }
        }
        score + self.tr(tags[tags.len() - 1] as usize, self.end())
    }

    /// Decode a whole document: segment, run Viterbi per segment, and
    /// map the decoded entities back to document offsets.
    pub fn predict_entities(&self, chars: &[char]) -> BTreeSet<Entity> {
        let mut out = BTreeSet::new();
        for seg in segment(chars) {
            let unit = UnitFeatures::extract(&chars[seg.start..seg.end], &self.feature_config);
            let tags = self.viterbi(&unit);
            for e in bio::decode(&tags) {
                out.insert(Entity::new(e.etype, e.start + seg.start, e.end + seg.start));
            }
        }
        out
    }
}

/// One training sequence: features plus gold tags of a sentence.
struct TrainSeq {
    unit: UnitFeatures,
    gold: Vec<TagId>,
}

/// Per-epoch trace of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub epoch_losses: Vec<f64>,
    pub dev_f1s: Vec<f64>,
}

fn build_sequences(
    corpus: &[AnnotatedDoc],
    cfg: &FeatureConfig,
) -> Vec<TrainSeq> {
    let mut seqs = Vec::new();
    for ad in corpus {
        let chars = ad.doc.chars();
        for seg in segment(&chars) {
            let local: BTreeSet<Entity> = ad
                .ann
                .entities
                .iter()
                .filter(|e| e.start >= seg.start && e.end <= seg.end)
                .map(|e| Entity::new(e.etype, e.start - seg.start, e.end - seg.start))
                .collect();
            let len = seg.end - seg.start;
            let gold = match bio::encode(&local, len) {
                Ok(seq) => seq.tags,
                // Overlapping golds cannot be expressed as one tag
                // sequence; skip the sentence rather than the document.
                Err(_) => continue,
            };
            let unit = UnitFeatures::extract(&chars[seg.start..seg.end], cfg);
            seqs.push(TrainSeq { unit, gold });
        }
    }
    seqs
}

fn micro_f1(golds: &[&BTreeSet<Entity>], preds: &[BTreeSet<Entity>]) -> f64 {
    let mut n_gold = 0usize;
    let mut n_pred = 0usize;
    let mut matched = 0usize;
    for (g, p) in golds.iter().zip(preds) {
        n_gold += g.len();
        n_pred += p.len();
        matched += g.intersection(p).count();
    }
    if n_gold + n_pred == 0 {
        return 0.0;
    }
    let p = if n_pred == 0 { 0.0 } else { matched as f64 / n_pred as f64 };
    let r = if n_gold == 0 { 0.0 } else { matched as f64 / n_gold as f64 };
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

/// Train a CRF by mini-batch AdamW with gradient clipping, returning
/// the checkpoint with the best dev entity F1. Deterministic for a
/// fixed seed.
pub fn train(
    train: &[AnnotatedDoc],
    dev: &[AnnotatedDoc],
    feature_config: &FeatureConfig,
    tags: TagInventory,
    cfg: &TrainConfig,
) -> Result<(CrfModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Train("empty training corpus".into()));
    }
    if dev.is_empty() {
        return Err(Error::Train("empty dev corpus".into()));
    }

    let seqs = build_sequences(train, feature_config);
    if seqs.is_empty() {
        return Err(Error::Train("no trainable sentences in corpus".into()));
    }
    let dev_chars: Vec<Vec<char>> = dev.iter().map(|d| d.doc.chars()).collect();
    let dev_golds: Vec<&BTreeSet<Entity>> = dev.iter().map(|d| &d.ann.entities).collect();

    let mut model = CrfModel::new(feature_config.clone(), tags)?;
    let mut opt_em = AdamW::new(model.em.len(), cfg.learning_rate, cfg.l2_penalty);
    let mut opt_trans = AdamW::new(model.trans.len(), cfg.learning_rate, cfg.l2_penalty);
    let mut grad = CrfGrad::zeros_like(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        best_dev_f1: f64::NEG_INFINITY,
        epoch_losses: Vec::new(),
        dev_f1s: Vec::new(),
    };

    let mut order: Vec<usize> = (0..seqs.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.reset();
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model.accumulate_nll(&seqs[i].unit, &seqs[i].gold, &mut grad)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx });
            }
            let inv = 1.0 / batch.len() as f64;
            grad.scale(inv);
            clip_joint(&mut grad, cfg.grad_clip_l2);
            opt_em.step(&mut model.em, &grad.em);
            opt_trans.step(&mut model.trans, &grad.trans);
            epoch_loss += batch_loss;
        }
        report.epoch_losses.push(epoch_loss / seqs.len() as f64);

        let preds: Vec<BTreeSet<Entity>> = dev_chars
            .iter()
            .map(|chars| model.predict_entities(chars))
            .collect();
        let f1 = micro_f1(&dev_golds, &preds);
        report.dev_f1s.push(f1);
        report.epochs_run = epoch + 1;
        if f1 > report.best_dev_f1 {
            report.best_dev_f1 = f1;
            report.best_epoch = epoch;
            best = Some((model.em.clone(), model.trans.clone()));
        } else if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }

    if let Some((em, trans)) = best {
        model.em = em;
        model.trans = trans;
    }
    Ok((model, report))
}

/// Clip the concatenated (emission, transition) gradient at a joint L2
/// norm.
fn clip_joint(grad: &mut CrfGrad, max_norm: f64) {
    let sq: f64 = grad.em.iter().map(|g| g * g).sum::<f64>()
        + grad.trans.iter().map(|g| g * g).sum::<f64>();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        grad.scale(max_norm / norm);
    }
}
