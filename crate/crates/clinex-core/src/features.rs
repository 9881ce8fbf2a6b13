//! Hashed sparse character-window features.
//!
//! Every position of a text unit fires a bias feature, character
//! unigrams and bigrams at relative offsets within `window`, and
//! character-class flags. Features hash (FNV-1a) into a fixed space of
//! `hash_dim` buckets, so the feature vector of a position is just a
//! short list of bucket indices; duplicates count twice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Half-width of the character window.
    pub window: usize,
    /// Feature-space size; must be a power of two.
    pub hash_dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> FeatureConfig {
        FeatureConfig { window: 2, hash_dim: 1 << 20 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim < 2 || !self.hash_dim.is_power_of_two() {
            return Err(Error::Train(format!(
                "hash_dim must be a power of two >= 2, got {}",
                self.hash_dim
            )));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

// Feature kind tags inside the hash input.
const KIND_BIAS: u8 = 0;
const KIND_UNIGRAM: u8 = 1;
const KIND_BIGRAM: u8 = 2;
const KIND_CLASS: u8 = 3;

// Pseudo-characters for positions outside the unit.
const BEFORE_START: u32 = u32::MAX - 1;
const AFTER_END: u32 = u32::MAX;

fn char_class(c: char) -> u8 {
    if c.is_ascii_digit() {
        0
    } else if c.is_ascii_alphabetic() {
        1
    } else if c.is_ascii_punctuation()
        || matches!(c, '。' | '，' | '！' | '？' | '；' | '：' | '、' | '（' | '）'
            | '“' | '”' | '‘' | '’' | '《' | '》' | '【' | '】')
    {
        2
    } else if ('\u{3400}'..='\u{9FFF}').contains(&c) {
        3
    } else {
        4
    }
}

#[inline]
fn code_at(chars: &[char], i: isize) -> u32 {
    if i < 0 {
        BEFORE_START
    } else if i as usize >= chars.len() {
        AFTER_END
    } else {
        chars[i as usize] as u32
    }
}

#[inline]
fn bucket(cfg: &FeatureConfig, payload: &[u8]) -> u32 {
    (fnv1a(payload) & (cfg.hash_dim as u64 - 1)) as u32
}

/// Push the feature indices of position `t` into `out`.
pub fn features_at(chars: &[char], t: usize, cfg: &FeatureConfig, out: &mut Vec<u32>) {
    let w = cfg.window as isize;
    let t = t as isize;
    out.push(bucket(cfg, &[KIND_BIAS]));
    let mut buf = [0u8; 10];
    for off in -w..=w {
        let c = code_at(chars, t + off);
        buf[0] = KIND_UNIGRAM;
        buf[1] = off as u8;
        buf[2..6].copy_from_slice(&c.to_le_bytes());
        out.push(bucket(cfg, &buf[..6]));
    }
    for off in -w..w {
        let a = code_at(chars, t + off);
        let b = code_at(chars, t + off + 1);
        buf[0] = KIND_BIGRAM;
        buf[1] = off as u8;
        buf[2..6].copy_from_slice(&a.to_le_bytes());
        buf[6..10].copy_from_slice(&b.to_le_bytes());
        out.push(bucket(cfg, &buf[..10]));
    }
    for off in -1isize..=1 {
        let i = t + off;
        let class = if i < 0 || i as usize >= chars.len() {
            5u8
        } else {
            char_class(chars[i as usize])
        };
        out.push(bucket(cfg, &[KIND_CLASS, off as u8, class]));
    }
}

/// Per-position feature lists for one text unit, CSR layout.
#[derive(Debug, Clone)]
pub struct UnitFeatures {
    offsets: Vec<u32>,
    indices: Vec<u32>,
}

impl UnitFeatures {
    /// Build a unit from explicit per-position feature lists. The main
    /// seam for custom scorers and for tests.
    pub fn from_lists(lists: &[Vec<u32>]) -> UnitFeatures {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for l in lists {
            indices.extend_from_slice(l);
            offsets.push(indices.len() as u32);
        }
        UnitFeatures { offsets, indices }
    }

    pub fn extract(chars: &[char], cfg: &FeatureConfig) -> UnitFeatures {
        let mut offsets = Vec::with_capacity(chars.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for t in 0..chars.len() {
            features_at(chars, t, cfg, &mut indices);
            offsets.push(indices.len() as u32);
        }
        UnitFeatures { offsets, indices }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature indices of one position (duplicates = multiplicity).
    pub fn at(&self, t: usize) -> &[u32] {
        &self.indices[self.offsets[t] as usize..self.offsets[t + 1] as usize]
    }
}
