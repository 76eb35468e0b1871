//! Slice drill-down over the contributions of sampled pairs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClusteringPair;
use crate::pairs::{pair_attributes, PairClass, FIXED_PAIR_KEYS};
use crate::sampler::SampledPairSet;

pub const MAX_GROUPS: usize = 1000;
pub const OTHER_GROUP: &str = "(other)";
pub const MISSING_VALUE: &str = "(none)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Eq { key: String, value: String },
    Ne { key: String, value: String },
    Class { class: PairClass },
    IsSelf { value: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceQuery {
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default)]
    pub group_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGroup {
    /// Group value, `None` for an ungrouped query.
    pub group: Option<String>,
    pub draws: u64,
    pub contribution: f64,
    pub split_contribution: f64,
    pub merge_contribution: f64,
    pub stable_contribution: f64,
    /// Contribution over the sum of all contributions in the sample.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub groups: Vec<SliceGroup>,
    pub draws: u64,
    pub contribution: f64,
    /// Sum of all contributions in the sample (the sampled stratum totals).
    pub sample_total: f64,
}

/// Keys a query may reference for this clustering pair.
pub fn valid_keys(cp: &ClusteringPair) -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = FIXED_PAIR_KEYS.iter().map(|k| k.to_string()).collect();
    for k in cp.attribute_keys() {
        keys.insert(format!("i.{k}"));
        keys.insert(format!("j.{k}"));
    }
    keys
}

fn check_keys(cp: &ClusteringPair, query: &SliceQuery) -> Result<()> {
    let keys = valid_keys(cp);
    let referenced = query
        .predicates
        .iter()
        .filter_map(|p| match p {
            Predicate::Eq { key, .. } | Predicate::Ne { key, .. } => Some(key),
            _ => None,
        })
        .chain(query.group_by.as_ref());
    for key in referenced {
        if !keys.contains(key) {
            return Err(Error::UnknownAttributeKey(key.clone()));
        }
    }
    Ok(())
}

fn matches(
    p: &Predicate,
    attrs: &BTreeMap<String, String>,
    class: PairClass,
    is_self: bool,
) -> bool {
    match p {
        Predicate::Eq { key, value } => attrs.get(key) == Some(value),
        Predicate::Ne { key, value } => attrs.get(key) != Some(value),
        Predicate::Class { class: c } => *c == class,
        Predicate::IsSelf { value } => *value == is_self,
    }
}

#[derive(Default)]
struct Acc {
    draws: u64,
    split: f64,
    merge: f64,
    stable: f64,
}

impl Acc {
    fn into_group(self, group: Option<String>, sample_total: f64) -> SliceGroup {
        let contribution = self.split + self.merge + self.stable;
        SliceGroup {
            group,
            draws: self.draws,
            contribution,
            split_contribution: self.split,
            merge_contribution: self.merge,
            stable_contribution: self.stable,
            share: if sample_total > 0.0 {
                contribution / sample_total
            } else {
                0.0
            },
        }
    }
}

/// Filters and groups sampled draws, summing `count / N · stratumTotal`.
///
/// Groups come in descending contribution order, ties by group value. Past
/// [`MAX_GROUPS`] the remaining groups are folded into [`OTHER_GROUP`].
pub fn slice(
    cp: &ClusteringPair,
    sample: &SampledPairSet,
    query: &SliceQuery,
) -> Result<SliceResult> {
    check_keys(cp, query)?;
    let contributions = sample.contributions();
    let sample_total: f64 = contributions.iter().sum();
    let mut groups: BTreeMap<Option<String>, Acc> = BTreeMap::new();
    let (mut draws, mut contribution) = (0, 0.0);
    for (d, c) in sample.draws.iter().zip(&contributions) {
        let attrs = pair_attributes(cp, &d.pair);
        if !query
            .predicates
            .iter()
            .all(|p| matches(p, &attrs, d.pair.class, d.pair.is_self()))
        {
            continue;
        }
        let key = query.group_by.as_ref().map(|k| {
            attrs
                .get(k)
                .cloned()
                .unwrap_or_else(|| MISSING_VALUE.to_string())
        });
        let acc = groups.entry(key).or_default();
        acc.draws += d.count;
        match d.pair.class {
            PairClass::Split => acc.split += c,
            PairClass::Merge => acc.merge += c,
            PairClass::Stable => acc.stable += c,
        }
        draws += d.count;
        contribution += c;
    }
    let mut out: Vec<SliceGroup> = groups
        .into_iter()
        .map(|(k, acc)| acc.into_group(k, sample_total))
        .collect();
    out.sort_by(|a, b| {
        b.contribution
            .total_cmp(&a.contribution)
            .then_with(|| a.group.cmp(&b.group))
    });
    if out.len() > MAX_GROUPS {
        let rest = out.split_off(MAX_GROUPS);
        let mut acc = Acc::default();
        for g in rest {
            acc.draws += g.draws;
            acc.split += g.split_contribution;
            acc.merge += g.merge_contribution;
            acc.stable += g.stable_contribution;
        }
        out.push(acc.into_group(Some(OTHER_GROUP.to_string()), sample_total));
    }
    Ok(SliceResult {
        groups: out,
        draws,
        contribution,
        sample_total,
    })
}
