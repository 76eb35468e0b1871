//! The population of vantage-point pairs.
//!
//! A pair `(i, j)` has `i` affected and `j ∈ Base(i) ∪ Exp(i)`; self pairs
//! `(i, i)` are included and are always stable. Pairs are ordered: `(i, j)`
//! and `(j, i)` usually carry different weights and labels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AffectedPartition, ClusteringPair, ItemIx};

/// Default cardinality above which enumeration logs a warning.
pub const DEFAULT_PAIR_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    /// `j ∈ Base(i) \ Exp(i)`
    Split,
    /// `j ∈ Exp(i) \ Base(i)`
    Merge,
    /// `j ∈ Base(i) ∩ Exp(i)`
    Stable,
}

impl PairClass {
    pub const ALL: [PairClass; 3] = [PairClass::Split, PairClass::Merge, PairClass::Stable];

    pub fn as_str(self) -> &'static str {
        match self {
            PairClass::Split => "split",
            PairClass::Merge => "merge",
            PairClass::Stable => "stable",
        }
    }

    pub fn is_diff(self) -> bool {
        self != PairClass::Stable
    }
}

impl fmt::Display for PairClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "split" => Ok(PairClass::Split),
            "merge" => Ok(PairClass::Merge),
            "stable" => Ok(PairClass::Stable),
            other => Err(Error::InvalidParams(format!(
                "unknown pair class {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemPair {
    pub i: ItemIx,
    pub j: ItemIx,
    pub class: PairClass,
    /// Sampling weight `weight(i)·weight(j) / (weight(T)·weight(Base(i) ∪ Exp(i)))`.
    pub w: f64,
    /// Delta-precision label: `a_i`, `-b_i` or `a_i - b_i` by class.
    pub l: f64,
}

impl ItemPair {
    pub fn is_self(&self) -> bool {
        self.i == self.j
    }

    pub fn key(&self) -> (ItemIx, ItemIx) {
        (self.i, self.j)
    }
}

/// Class of `(i, j)` or `None` when `j ∉ Base(i) ∪ Exp(i)`.
pub fn classify(cp: &ClusteringPair, i: ItemIx, j: ItemIx) -> Option<PairClass> {
    match (cp.in_base(i, j), cp.in_exp(i, j)) {
        (true, true) => Some(PairClass::Stable),
        (true, false) => Some(PairClass::Split),
        (false, true) => Some(PairClass::Merge),
        (false, false) => None,
    }
}

/// Builds the full pair record for `(i, j)` without checking membership.
#[inline]
fn make_pair(
    cp: &ClusteringPair,
    i: ItemIx,
    j: ItemIx,
    class: PairClass,
    union: f64,
    a: f64,
    b: f64,
) -> ItemPair {
    let w = cp.weight(i) * cp.weight(j) / (cp.total_weight() * union);
    let l = match class {
        PairClass::Merge => a,
        PairClass::Split => -b,
        PairClass::Stable => a - b,
    };
    ItemPair { i, j, class, w, l }
}

pub fn pair_at(cp: &ClusteringPair, i: ItemIx, j: ItemIx) -> Option<ItemPair> {
    let class = classify(cp, i, j)?;
    let g = cp.geometry(i);
    Some(make_pair(cp, i, j, class, cp.union_weight(i), g.a, g.b))
}

fn resolve(cp: &ClusteringPair, i: &str, j: &str) -> Result<ItemPair> {
    let (ii, jj) = (cp.ix(i)?, cp.ix(j)?);
    pair_at(cp, ii, jj).ok_or_else(|| Error::NotAPair {
        i: i.to_string(),
        j: j.to_string(),
    })
}

pub fn pair_weight(cp: &ClusteringPair, i: &str, j: &str) -> Result<f64> {
    Ok(resolve(cp, i, j)?.w)
}

pub fn pair_label(cp: &ClusteringPair, i: &str, j: &str) -> Result<f64> {
    Ok(resolve(cp, i, j)?.l)
}

/// Number of pairs with an affected vantage point, computed without enumeration.
pub fn pair_count(cp: &ClusteringPair, partition: &AffectedPartition) -> u64 {
    partition
        .affected
        .iter()
        .map(|&ix| cp.union_len(ix) as u64)
        .sum()
}

/// Per-class pair counts `(split, merge, stable, self)`.
pub fn class_counts(cp: &ClusteringPair, partition: &AffectedPartition) -> ClassPopulation {
    let mut out = ClassPopulation::default();
    for &ix in &partition.affected {
        let inter = cp.intersection_len(ix) as u64;
        out.split += cp.base_members(ix).len() as u64 - inter;
        out.merge += cp.exp_members(ix).len() as u64 - inter;
        out.stable += inter;
        out.self_pairs += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPopulation {
    pub split: u64,
    pub merge: u64,
    pub stable: u64,
    pub self_pairs: u64,
}

impl ClassPopulation {
    pub fn total(&self) -> u64 {
        self.split + self.merge + self.stable
    }
}

/// Streaming enumeration ordered by `i` then `j`.
pub struct Pairs<'a> {
    cp: &'a ClusteringPair,
    vantage: std::slice::Iter<'a, ItemIx>,
    current: Option<(ItemIx, f64, f64, f64, crate::model::UnionMembers<'a>)>,
}

impl Iterator for Pairs<'_> {
    type Item = ItemPair;

    fn next(&mut self) -> Option<ItemPair> {
        loop {
            if let Some((i, union, a, b, members)) = &mut self.current {
                if let Some(j) = members.next() {
                    let class = match (self.cp.in_base(*i, j), self.cp.in_exp(*i, j)) {
                        (true, true) => PairClass::Stable,
                        (true, false) => PairClass::Split,
                        _ => PairClass::Merge,
                    };
                    return Some(make_pair(self.cp, *i, j, class, *union, *a, *b));
                }
            }
            let &i = self.vantage.next()?;
            let g = self.cp.geometry(i);
            self.current = Some((
                i,
                self.cp.union_weight(i),
                g.a,
                g.b,
                self.cp.union_members(i),
            ));
        }
    }
}

/// Enumerates `AllPairs`. Logs a warning when the pair count exceeds `cap`.
pub fn enumerate_pairs_capped<'a>(
    cp: &'a ClusteringPair,
    partition: &'a AffectedPartition,
    cap: u64,
) -> Pairs<'a> {
    let count = pair_count(cp, partition);
    if count > cap {
        log::warn!("pair population has {count} pairs, above the configured cap of {cap}");
    }
    enumerate_shard(cp, &partition.affected)
}

pub fn enumerate_pairs<'a>(cp: &'a ClusteringPair, partition: &'a AffectedPartition) -> Pairs<'a> {
    enumerate_pairs_capped(cp, partition, DEFAULT_PAIR_CAP)
}

/// Enumerates the pairs of a subset of (affected) vantage items. Shards over
/// disjoint vantage sets are independent; concatenating them in vantage order
/// reproduces [`enumerate_pairs`].
pub fn enumerate_shard<'a>(cp: &'a ClusteringPair, vantage: &'a [ItemIx]) -> Pairs<'a> {
    Pairs {
        cp,
        vantage: vantage.iter(),
        current: None,
    }
}

/// Class totals of `w`, computed from per-item impacts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairTotals {
    pub split_total: f64,
    pub merge_total: f64,
    pub stable_total: f64,
    pub delta_precision_multiplier: f64,
}

impl PairTotals {
    pub fn class_total(&self, class: PairClass) -> f64 {
        match class {
            PairClass::Split => self.split_total,
            PairClass::Merge => self.merge_total,
            PairClass::Stable => self.stable_total,
        }
    }

    pub fn diff_total(&self) -> f64 {
        self.split_total + self.merge_total
    }
}

pub fn pair_totals(cp: &ClusteringPair, partition: &AffectedPartition) -> PairTotals {
    let total = cp.total_weight();
    let (mut split, mut merge, mut stable) = (0.0, 0.0, 0.0);
    for &ix in &partition.affected {
        let m = cp.impact(ix);
        let w = cp.weight(ix);
        split += w * m.split_distance;
        merge += w * m.merge_distance;
        stable += w * m.jaccard_index;
    }
    let (split, merge, stable) = (split / total, merge / total, stable / total);
    PairTotals {
        split_total: split,
        merge_total: merge,
        stable_total: stable,
        delta_precision_multiplier: split + stable + merge,
    }
}

/// Filterable attributes of a pair.
///
/// Keys: `class`, `is_self`, `i.<attr>`, `j.<attr>`, `base_cluster_weight`,
/// `exp_cluster_weight`, `base_cluster_size`, `exp_cluster_size` (the last
/// four describe the vantage item's clusters).
pub fn pair_attributes(cp: &ClusteringPair, pair: &ItemPair) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert("class".to_string(), pair.class.to_string());
    out.insert("is_self".to_string(), pair.is_self().to_string());
    for (k, v) in &cp.item(pair.i).attributes {
        out.insert(format!("i.{k}"), v.clone());
    }
    for (k, v) in &cp.item(pair.j).attributes {
        out.insert(format!("j.{k}"), v.clone());
    }
    out.insert(
        "base_cluster_weight".into(),
        cp.base_weight(pair.i).to_string(),
    );
    out.insert(
        "exp_cluster_weight".into(),
        cp.exp_weight(pair.i).to_string(),
    );
    out.insert(
        "base_cluster_size".into(),
        cp.base_members(pair.i).len().to_string(),
    );
    out.insert(
        "exp_cluster_size".into(),
        cp.exp_members(pair.i).len().to_string(),
    );
    out
}

/// The fixed (non item-derived) pair attribute keys.
pub const FIXED_PAIR_KEYS: [&str; 6] = [
    "class",
    "is_self",
    "base_cluster_weight",
    "exp_cluster_weight",
    "base_cluster_size",
    "exp_cluster_size",
];

/// Pair export line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub i: String,
    pub j: String,
    pub class: PairClass,
    pub is_self: bool,
    pub w: f64,
    pub l: f64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl PairRecord {
    pub fn new(cp: &ClusteringPair, pair: &ItemPair) -> Self {
        PairRecord {
            i: cp.id(pair.i).to_string(),
            j: cp.id(pair.j).to_string(),
            class: pair.class,
            is_self: pair.is_self(),
            w: pair.w,
            l: pair.l,
            attributes: pair_attributes(cp, pair),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::affected_partition;
    use crate::model::tests::{rec, toy3};

    fn ids(cp: &ClusteringPair, pairs: &[ItemPair], class: PairClass) -> Vec<(String, String)> {
        pairs
            .iter()
            .filter(|p| p.class == class)
            .map(|p| (cp.id(p.i).to_string(), cp.id(p.j).to_string()))
            .collect()
    }

    fn owned(v: &[(&str, &str)]) -> Vec<(String, String)> {
        v.iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn unaffected_items_have_no_diff_pairs() {
        // {a, b} is unchanged; c moves next to d.
        let cp = ClusteringPair::from_records(
            vec![rec("a", "X"), rec("b", "X"), rec("c", "Y"), rec("d", "Z")],
            vec![rec("a", "P"), rec("b", "P"), rec("c", "Q"), rec("d", "Q")],
        )
        .unwrap();
        let p = affected_partition(&cp);
        let mut diffs_over_t = 0;
        for i in cp.indices() {
            for j in cp.union_members(i) {
                let pair = pair_at(&cp, i, j).unwrap();
                if pair.class.is_diff() {
                    assert!(cp.is_affected(i));
                    diffs_over_t += 1;
                }
            }
        }
        let diffs_over_affected = enumerate_pairs(&cp, &p)
            .filter(|q| q.class.is_diff())
            .count();
        assert_eq!(diffs_over_t, diffs_over_affected);
        assert_eq!(diffs_over_affected, 2);
    }

    #[test]
    fn toy3_enumeration() {
        let cp = toy3();
        let p = affected_partition(&cp);
        let pairs: Vec<_> = enumerate_pairs(&cp, &p).collect();
        assert_eq!(pairs.len(), 7);
        assert_eq!(
            ids(&cp, &pairs, PairClass::Split),
            owned(&[("a", "b"), ("b", "a")])
        );
        assert_eq!(
            ids(&cp, &pairs, PairClass::Merge),
            owned(&[("a", "c"), ("c", "a")])
        );
        assert_eq!(
            ids(&cp, &pairs, PairClass::Stable),
            owned(&[("a", "a"), ("b", "b"), ("c", "c")])
        );
        // deterministic order: by i, then j
        let keys: Vec<_> = pairs.iter().map(|p| p.key()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn toy3_weights_and_labels() {
        let cp = toy3();
        assert!((pair_weight(&cp, "a", "b").unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert!((pair_weight(&cp, "b", "a").unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((pair_label(&cp, "a", "b").unwrap() + 1.5).abs() < 1e-15);
        assert!((pair_label(&cp, "c", "a").unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            pair_weight(&cp, "b", "c"),
            Err(Error::NotAPair { .. })
        ));
        assert!(matches!(
            pair_label(&cp, "b", "zz"),
            Err(Error::UnknownItem(_))
        ));
    }

    #[test]
    fn stable_label_zero_for_equal_cluster_weights() {
        // Base(a) = {a,b,c}, Exp(a) = {a,b,d}: equal weights, still affected.
        let cp = ClusteringPair::from_records(
            vec![rec("a", "X"), rec("b", "X"), rec("c", "X"), rec("d", "Y")],
            vec![rec("a", "P"), rec("b", "P"), rec("c", "Q"), rec("d", "P")],
        )
        .unwrap();
        assert_eq!(pair_label(&cp, "a", "b").unwrap(), 0.0);
        assert!(pair_weight(&cp, "a", "b").unwrap() > 0.0);
    }

    #[test]
    fn self_pair_weight_in_singleton() {
        let cp = toy3();
        // c is alone in Base; as a vantage point its union is {a, c}.
        let w = pair_weight(&cp, "c", "c").unwrap();
        assert!((w - 1.0 / (3.0 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn toy3_totals() {
        let cp = toy3();
        let p = affected_partition(&cp);
        let t = pair_totals(&cp, &p);
        assert!((t.split_total - 5.0 / 18.0).abs() < 1e-12);
        assert!((t.merge_total - 5.0 / 18.0).abs() < 1e-12);
        assert!((t.stable_total - 4.0 / 9.0).abs() < 1e-12);
        assert!((t.delta_precision_multiplier - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_has_no_pairs() {
        let cp = ClusteringPair::from_records(
            vec![rec("a", "X"), rec("b", "X")],
            vec![rec("a", "X"), rec("b", "X")],
        )
        .unwrap();
        let p = affected_partition(&cp);
        assert_eq!(enumerate_pairs(&cp, &p).count(), 0);
        assert_eq!(pair_totals(&cp, &p), PairTotals::default());
    }

    #[test]
    fn shards_concatenate() {
        let cp = toy3();
        let p = affected_partition(&cp);
        let whole: Vec<_> = enumerate_pairs(&cp, &p).collect();
        let (left, right) = p.affected.split_at(1);
        let sharded: Vec<_> = enumerate_shard(&cp, left)
            .chain(enumerate_shard(&cp, right))
            .collect();
        assert_eq!(whole, sharded);
    }

    #[test]
    fn attributes_of_a_pair() {
        let mut base = vec![rec("a", "X"), rec("b", "X")];
        base[0].attributes.insert("type".into(), "t1".into());
        let cp = ClusteringPair::from_records(base, vec![rec("a", "P"), rec("b", "Q")]).unwrap();
        let pair = pair_at(&cp, cp.ix("a").unwrap(), cp.ix("b").unwrap()).unwrap();
        let attrs = pair_attributes(&cp, &pair);
        assert_eq!(attrs["class"], "split");
        assert_eq!(attrs["is_self"], "false");
        assert_eq!(attrs["i.type"], "t1");
        assert!(!attrs.contains_key("j.type"));
        assert_eq!(attrs["base_cluster_size"], "2");
    }
}
