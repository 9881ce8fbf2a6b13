//! Record-level corpus assembly: stratified department sampling with a
//! per-condition frequency cap, and train/dev/test splitting.
//!
//! Both operations sort records canonically by id before applying the
//! seeded shuffle, so results do not depend on input order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::fnv1a;

/// What sampling needs to know about one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordMeta {
    pub record_id: String,
    pub department: String,
    /// Primary-condition key used by the frequency cap.
    pub condition: String,
}

#[derive(Debug, Clone)]
pub struct SamplingConfig {
    /// Records to draw per department.
    pub quota: usize,
    /// Maximum records sharing one (department, condition) key.
    pub cap: usize,
    pub seed: u64,
}

/// Draw up to `quota` records per department, uniformly at random,
/// keeping at most `cap` records per condition key within the
/// department. Returns sorted record ids.
pub fn stratified_sample(records: &[RecordMeta], cfg: &SamplingConfig) -> Result<Vec<String>> {
    if cfg.quota == 0 || cfg.cap == 0 {
        return Err(Error::Corpus("quota and cap must be at least 1".into()));
    }
    let mut by_dept: std::collections::BTreeMap<&str, Vec<&RecordMeta>> =
        std::collections::BTreeMap::new();
    for r in records {
        by_dept.entry(&r.department).or_default().push(r);
    }
    let mut selected = Vec::new();
    for (dept, mut rs) in by_dept {
        rs.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ fnv1a(dept.as_bytes()));
        rs.shuffle(&mut rng);
        let mut per_condition: std::collections::BTreeMap<&str, usize> =
            std::collections::BTreeMap::new();
        let mut taken = 0usize;
        for r in rs {
            if taken >= cfg.quota {
                break;
            }
            let c = per_condition.entry(&r.condition).or_insert(0);
            if *c >= cfg.cap {
                continue;
            }
            *c += 1;
            taken += 1;
            selected.push(r.record_id.clone());
        }
    }
    selected.sort();
    Ok(selected)
}

/// Disjoint record-level split by explicit counts.
pub fn split_counts(
    record_ids: &[String],
    counts: (usize, usize, usize),
    seed: u64,
) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let (n_train, n_dev, n_test) = counts;
    let total = n_train + n_dev + n_test;
    if total > record_ids.len() {
        return Err(Error::Corpus(format!(
            "split needs {total} records but only {} are available",
            record_ids.len()
        )));
    }
    let mut ids: Vec<String> = record_ids.to_vec();
    ids.sort();
    ids.dedup();
    if total > ids.len() {
        return Err(Error::Corpus(format!(
            "split needs {total} distinct records but only {} are available",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train = ids[..n_train].to_vec();
    let dev = ids[n_train..n_train + n_dev].to_vec();
    let test = ids[n_train + n_dev..total].to_vec();
    Ok((train, dev, test))
}

/// Split by ratios; the test share takes the rounding remainder.
pub fn split_ratios(
    record_ids: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    let (r1, r2, r3) = ratios;
    if r1 < 0.0 || r2 < 0.0 || r3 < 0.0 || (r1 + r2 + r3 - 1.0).abs() > 1e-9 {
        return Err(Error::Corpus(format!(
            "ratios must be non-negative and sum to 1, got ({r1}, {r2}, {r3})"
        )));
    }
    let mut unique: Vec<String> = record_ids.to_vec();
    unique.sort();
    unique.dedup();
    let n = unique.len();
    let n_train = (r1 * n as f64).round() as usize;
    let n_dev = (r2 * n as f64).round() as usize;
    let n_dev = n_dev.min(n - n_train);
    let n_test = n - n_train - n_dev;
    split_counts(&unique, (n_train, n_dev, n_test), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, dept: &str, cond: &str) -> RecordMeta {
        RecordMeta {
            record_id: id.into(),
            department: dept.into(),
            condition: cond.into(),
        }
    }

    #[test]
    fn quota_and_distinct_conditions_with_cap_one() {
        let records: Vec<RecordMeta> = (0..10)
            .map(|i| rec(&format!("r{i:02}"), "gastro", &format!("c{i}")))
            .collect();
        let cfg = SamplingConfig { quota: 5, cap: 1, seed: 3 };
        let picked = stratified_sample(&records, &cfg).unwrap();
        assert_eq!(picked.len(), 5);
        let conds: std::collections::BTreeSet<_> = picked
            .iter()
            .map(|id| records.iter().find(|r| &r.record_id == id).unwrap().condition.clone())
            .collect();
        assert_eq!(conds.len(), 5);
    }

    #[test]
    fn cap_limits_one_condition() {
        let records: Vec<RecordMeta> = (0..100)
            .map(|i| rec(&format!("r{i:03}"), "cardio", "hypertension"))
            .collect();
        let cfg = SamplingConfig { quota: 50, cap: 2, seed: 0 };
        let picked = stratified_sample(&records, &cfg).unwrap();
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn two_departments_fill_their_quotas() {
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(rec(&format!("a{i}"), "d1", &format!("c{i}")));
            records.push(rec(&format!("b{i}"), "d2", &format!("c{i}")));
        }
        let cfg = SamplingConfig { quota: 3, cap: 5, seed: 9 };
        let picked = stratified_sample(&records, &cfg).unwrap();
        assert_eq!(picked.len(), 6);
    }

    #[test]
    fn sampling_is_permutation_invariant() {
        let mut records: Vec<RecordMeta> = (0..20)
            .map(|i| rec(&format!("r{i:02}"), "d", &format!("c{}", i % 4)))
            .collect();
        let cfg = SamplingConfig { quota: 6, cap: 2, seed: 42 };
        let a = stratified_sample(&records, &cfg).unwrap();
        records.reverse();
        let b = stratified_sample(&records, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ids: Vec<String> = (0..500).map(|i| format!("r{i:04}")).collect();
        let (train, dev, test) = split_counts(&ids, (300, 100, 100), 7).unwrap();
        assert_eq!((train.len(), dev.len(), test.len()), (300, 100, 100));
        let mut all: Vec<&String> = train.iter().chain(&dev).chain(&test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 500);

        let again = split_counts(&ids, (300, 100, 100), 7).unwrap();
        assert_eq!((train, dev, test), again);
    }

    #[test]
    fn ratio_split_rounds_as_expected() {
        let ids: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
        let (train, dev, test) = split_ratios(&ids, (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!((train.len(), dev.len(), test.len()), (6, 2, 2));
    }

    #[test]
    fn insufficient_records_error() {
        let ids: Vec<String> = (0..5).map(|i| format!("r{i}")).collect();
        assert!(split_counts(&ids, (4, 1, 1), 0).is_err());
    }
}
