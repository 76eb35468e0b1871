//! Exact per-item impact and quality metrics and their lifting to item sets.
//!
//! Every metric here is pointwise: it is defined from the vantage point of one
//! item `i` as a ratio of region weights over `Base(i) ∪ Exp(i)`, and lifted to
//! a set `I` as the weight-weighted mean over the members of `I`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AffectedPartition, ClusteringPair, Item, ItemIx, Side};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemImpact {
    pub jaccard_distance: f64,
    pub split_distance: f64,
    pub merge_distance: f64,
    pub jaccard_index: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemQuality {
    pub good_split_distance: f64,
    pub bad_split_distance: f64,
    pub good_merge_distance: f64,
    pub bad_merge_distance: f64,
    pub good_index: f64,
    pub bad_index: f64,
    pub good_distance: f64,
    pub bad_distance: f64,
    pub delta_precision: f64,
}

/// Region ratios of one vantage point.
///
/// `m = weight(Exp(i)) / weight(Base(i) ∪ Exp(i))`, `s` likewise for Base,
/// `a = 1/m` and `b = 1/s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VantageGeometry {
    pub m: f64,
    pub s: f64,
    pub a: f64,
    pub b: f64,
}

/// Answers whether two items are truly equivalent.
///
/// `None` means the answer is not available (for example a pair nobody has
/// judged yet).
pub trait Equivalence {
    fn lookup(&self, i: &Item, j: &Item) -> Option<bool>;

    /// Like [`Equivalence::lookup`] but reflexive by construction.
    fn equivalent(&self, i: &Item, j: &Item) -> Option<bool> {
        if i.id == j.id {
            return Some(true);
        }
        self.lookup(i, j)
    }
}

/// Items are equivalent iff they carry the same value of one attribute.
/// Items lacking the attribute are only equivalent to themselves.
#[derive(Debug, Clone)]
pub struct AttributeTruth {
    pub key: String,
}

impl Equivalence for AttributeTruth {
    fn lookup(&self, i: &Item, j: &Item) -> Option<bool> {
        match (i.attributes.get(&self.key), j.attributes.get(&self.key)) {
            (Some(a), Some(b)) => Some(a == b),
            _ => Some(false),
        }
    }
}

impl<E: Equivalence + ?Sized> Equivalence for &E {
    fn lookup(&self, i: &Item, j: &Item) -> Option<bool> {
        (**self).lookup(i, j)
    }
}

impl ClusteringPair {
    /// Exact impact of one item; the fast path used by lifting and totals.
    pub fn impact(&self, ix: ItemIx) -> ItemImpact {
        if !self.is_affected(ix) {
            return ItemImpact {
                jaccard_index: 1.0,
                ..ItemImpact::default()
            };
        }
        let union = self.union_weight(ix);
        let split = self.split_weight(ix) / union;
        let merge = self.merge_weight(ix) / union;
        ItemImpact {
            jaccard_distance: split + merge,
            split_distance: split,
            merge_distance: merge,
            jaccard_index: self.intersection_weight(ix) / union,
        }
    }

    pub fn geometry(&self, ix: ItemIx) -> VantageGeometry {
        let union = self.union_weight(ix);
        let m = self.exp_weight(ix) / union;
        let s = self.base_weight(ix) / union;
        VantageGeometry {
            m,
            s,
            a: union / self.exp_weight(ix),
            b: union / self.base_weight(ix),
        }
    }
}

pub fn item_impact(cp: &ClusteringPair, id: &str) -> Result<ItemImpact> {
    Ok(cp.impact(cp.ix(id)?))
}

/// Quality decomposition of one item given an equivalence oracle.
pub fn item_quality<E: Equivalence + ?Sized>(
    cp: &ClusteringPair,
    id: &str,
    equiv: &E,
) -> Result<ItemQuality> {
    quality_at(cp, cp.ix(id)?, equiv)
}

pub fn quality_at<E: Equivalence + ?Sized>(
    cp: &ClusteringPair,
    ix: ItemIx,
    equiv: &E,
) -> Result<ItemQuality> {
    let vantage = cp.item(ix);
    let (mut good_split, mut bad_split) = (0.0, 0.0);
    let (mut good_merge, mut bad_merge) = (0.0, 0.0);
    let (mut good_index, mut bad_index) = (0.0, 0.0);
    for j in cp.union_members(ix) {
        let other = cp.item(j);
        let same = equiv
            .equivalent(vantage, other)
            .ok_or_else(|| Error::OracleIncomplete {
                i: vantage.id.clone(),
                j: other.id.clone(),
            })?;
        let w = other.weight;
        match (cp.in_base(ix, j), cp.in_exp(ix, j)) {
            (true, true) if same => good_index += w,
            (true, true) => bad_index += w,
            (true, false) if same => bad_split += w,
            (true, false) => good_split += w,
            (false, true) if same => good_merge += w,
            (false, true) => bad_merge += w,
            (false, false) => unreachable!("union member outside both clusters"),
        }
    }
    let union = cp.union_weight(ix);
    let g = cp.geometry(ix);
    let q = ItemQuality {
        good_split_distance: good_split / union,
        bad_split_distance: bad_split / union,
        good_merge_distance: good_merge / union,
        bad_merge_distance: bad_merge / union,
        good_index: good_index / union,
        bad_index: bad_index / union,
        good_distance: (good_split + good_merge) / union,
        bad_distance: (bad_split + bad_merge) / union,
        delta_precision: 0.0,
    };
    let delta_precision = if cp.is_affected(ix) {
        g.a * q.good_merge_distance + (g.a - g.b) * q.good_index - g.b * q.bad_split_distance
    } else {
        0.0
    };
    Ok(ItemQuality {
        delta_precision,
        ..q
    })
}

/// Weighted mean of `value` over `set`: `Σ weight(i)·value(i) / weight(I)`.
pub fn lift<F>(cp: &ClusteringPair, set: &[ItemIx], value: F) -> Result<f64>
where
    F: Fn(ItemIx) -> f64,
{
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &ix in set {
        let w = cp.weight(ix);
        num += w * value(ix);
        den += w;
    }
    Ok(num / den)
}

/// Lifts a metric given as an id → value map.
pub fn lift_map(
    cp: &ClusteringPair,
    values: &BTreeMap<String, f64>,
    set: &[ItemIx],
) -> Result<f64> {
    for &ix in set {
        if !values.contains_key(cp.id(ix)) {
            return Err(Error::UnknownItem(cp.id(ix).to_string()));
        }
    }
    lift(cp, set, |ix| values[cp.id(ix)])
}

/// `(AffectedJaccardIndex(T), UnaffectedJaccardIndex(T))`.
pub fn affected_index_split(cp: &ClusteringPair, partition: &AffectedPartition) -> (f64, f64) {
    let total = cp.total_weight();
    let affected = partition
        .affected
        .iter()
        .map(|&ix| cp.weight(ix) * cp.impact(ix).jaccard_index)
        .sum::<f64>()
        / total;
    (affected, partition.unaffected_weight / total)
}

/// Overall impact metrics of the whole population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallImpact {
    pub jaccard_distance: f64,
    pub split_distance: f64,
    pub merge_distance: f64,
    pub jaccard_index: f64,
    pub affected_jaccard_index: f64,
    pub unaffected_jaccard_index: f64,
    pub total_weight: f64,
    pub affected_weight: f64,
    pub affected_items: usize,
    pub items: usize,
}

impl OverallImpact {
    pub fn affected_weight_fraction(&self) -> f64 {
        self.affected_weight / self.total_weight
    }
}

pub fn overall_impact(cp: &ClusteringPair, partition: &AffectedPartition) -> OverallImpact {
    let all: Vec<ItemIx> = cp.indices().collect();
    let impacts: Vec<ItemImpact> = all.iter().map(|&ix| cp.impact(ix)).collect();
    let lifted =
        |f: fn(&ItemImpact) -> f64| lift(cp, &all, |ix| f(&impacts[ix.index()])).unwrap_or(0.0);
    let (affected_ji, unaffected_ji) = affected_index_split(cp, partition);
    OverallImpact {
        jaccard_distance: lifted(|m| m.jaccard_distance),
        split_distance: lifted(|m| m.split_distance),
        merge_distance: lifted(|m| m.merge_distance),
        jaccard_index: lifted(|m| m.jaccard_index),
        affected_jaccard_index: affected_ji,
        unaffected_jaccard_index: unaffected_ji,
        total_weight: cp.total_weight(),
        affected_weight: partition.affected_weight,
        affected_items: partition.affected.len(),
        items: cp.len(),
    }
}

/// One row of an impact report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub granularity: String,
    pub subject: String,
    pub metric: String,
    pub value: f64,
}

impl ReportRow {
    pub fn new(granularity: &str, subject: &str, metric: &str, value: f64) -> Self {
        ReportRow {
            granularity: granularity.into(),
            subject: subject.into(),
            metric: metric.into(),
            value,
        }
    }
}

fn impact_rows(out: &mut Vec<ReportRow>, granularity: &str, subject: &str, m: &ItemImpact) {
    out.push(ReportRow::new(
        granularity,
        subject,
        "jaccard_distance",
        m.jaccard_distance,
    ));
    out.push(ReportRow::new(
        granularity,
        subject,
        "split_distance",
        m.split_distance,
    ));
    out.push(ReportRow::new(
        granularity,
        subject,
        "merge_distance",
        m.merge_distance,
    ));
    out.push(ReportRow::new(
        granularity,
        subject,
        "jaccard_index",
        m.jaccard_index,
    ));
}

/// Overall, per-Base-cluster and per-Exp-cluster impact rows, optionally
/// followed by per-item rows.
pub fn impact_report(
    cp: &ClusteringPair,
    partition: &AffectedPartition,
    per_item: bool,
) -> Vec<ReportRow> {
    let overall = overall_impact(cp, partition);
    let mut out = Vec::new();
    impact_rows(
        &mut out,
        "overall",
        "T",
        &ItemImpact {
            jaccard_distance: overall.jaccard_distance,
            split_distance: overall.split_distance,
            merge_distance: overall.merge_distance,
            jaccard_index: overall.jaccard_index,
        },
    );
    out.push(ReportRow::new(
        "overall",
        "T",
        "affected_jaccard_index",
        overall.affected_jaccard_index,
    ));
    out.push(ReportRow::new(
        "overall",
        "T",
        "unaffected_jaccard_index",
        overall.unaffected_jaccard_index,
    ));
    out.push(ReportRow::new(
        "overall",
        "T",
        "affected_weight_fraction",
        overall.affected_weight_fraction(),
    ));
    out.push(ReportRow::new(
        "overall",
        "T",
        "total_weight",
        overall.total_weight,
    ));

    for (side, name) in [(Side::Base, "base_cluster"), (Side::Exp, "exp_cluster")] {
        let clustering = cp.side(side);
        for c in 0..clustering.len() {
            let members = clustering.members(c);
            let lifted = |f: fn(&ItemImpact) -> f64| {
                lift(cp, members, |ix| f(&cp.impact(ix))).unwrap_or(0.0)
            };
            impact_rows(
                &mut out,
                name,
                clustering.cluster_id(c),
                &ItemImpact {
                    jaccard_distance: lifted(|m| m.jaccard_distance),
                    split_distance: lifted(|m| m.split_distance),
                    merge_distance: lifted(|m| m.merge_distance),
                    jaccard_index: lifted(|m| m.jaccard_index),
                },
            );
        }
    }
    if per_item {
        for ix in cp.indices() {
            impact_rows(&mut out, "item", cp.id(ix), &cp.impact(ix));
        }
    }
    out
}
