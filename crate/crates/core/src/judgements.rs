//! Equivalence verdicts for sampled pairs and missing-verdict reweighting.
//!
//! Verdicts are keyed by the unordered pair `{i, j}`: equivalence is
//! symmetric and so is the pair class, so `(i, j)` and `(j, i)` share one
//! task and one verdict.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Equivalence;
use crate::model::{ClusteringPair, ItemIx};
use crate::pairs::{ItemPair, PairClass};
use crate::sampler::{SampledDraw, SampledPairSet};

pub const REFLEXIVE_SOURCE: &str = "reflexive";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictValue {
    Equivalent,
    NotEquivalent,
    Unknown,
}

impl VerdictValue {
    pub fn from_equivalent(eq: bool) -> Self {
        if eq {
            VerdictValue::Equivalent
        } else {
            VerdictValue::NotEquivalent
        }
    }

    /// `Some(i ≡ j)` for usable verdicts.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            VerdictValue::Equivalent => Some(true),
            VerdictValue::NotEquivalent => Some(false),
            VerdictValue::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub i: String,
    pub j: String,
    pub value: VerdictValue,
    pub source: String,
    /// Unix seconds.
    #[serde(default)]
    pub timestamp: u64,
}

/// The four reweighting classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightClass {
    SelfPairs,
    SplitPairs,
    MergePairs,
    IntersectionPairs,
}

impl ReweightClass {
    pub const ALL: [ReweightClass; 4] = [
        ReweightClass::SelfPairs,
        ReweightClass::SplitPairs,
        ReweightClass::MergePairs,
        ReweightClass::IntersectionPairs,
    ];

    pub fn of(pair: &ItemPair) -> Self {
        match pair.class {
            PairClass::Split => ReweightClass::SplitPairs,
            PairClass::Merge => ReweightClass::MergePairs,
            PairClass::Stable if pair.is_self() => ReweightClass::SelfPairs,
            PairClass::Stable => ReweightClass::IntersectionPairs,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReweightClass::SelfPairs => "self_pairs",
            ReweightClass::SplitPairs => "split_pairs",
            ReweightClass::MergePairs => "merge_pairs",
            ReweightClass::IntersectionPairs => "intersection_pairs",
        }
    }
}

impl fmt::Display for ReweightClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn canonical(i: ItemIx, j: ItemIx) -> (ItemIx, ItemIx) {
    if i <= j {
        (i, j)
    } else {
        (j, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Answered,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub id: String,
    pub weight: f64,
    pub attributes: BTreeMap<String, String>,
    pub base_cluster: String,
    pub exp_cluster: String,
}

impl ItemView {
    pub fn new(cp: &ClusteringPair, ix: ItemIx) -> Self {
        let item = cp.item(ix);
        ItemView {
            id: item.id.clone(),
            weight: item.weight,
            attributes: item.attributes.clone(),
            base_cluster: cp.base().cluster_id(cp.base().cluster_of(ix)).to_string(),
            exp_cluster: cp.exp().cluster_id(cp.exp().cluster_of(ix)).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgementTask {
    pub i: String,
    pub j: String,
    pub class: PairClass,
    /// Draws of `(i, j)` and `(j, i)` combined.
    pub draw_count: u64,
    pub status: TaskStatus,
    pub left: ItemView,
    pub right: ItemView,
}

/// One task per distinct unordered non-self pair, in item order.
pub fn export_tasks(cp: &ClusteringPair, sample: &SampledPairSet) -> Vec<JudgementTask> {
    let mut grouped: BTreeMap<(ItemIx, ItemIx), (PairClass, u64)> = BTreeMap::new();
    for d in sample.draws.iter().filter(|d| !d.pair.is_self()) {
        grouped
            .entry(canonical(d.pair.i, d.pair.j))
            .or_insert((d.pair.class, 0))
            .1 += d.count;
    }
    grouped
        .into_iter()
        .map(|((i, j), (class, draw_count))| JudgementTask {
            i: cp.id(i).to_string(),
            j: cp.id(j).to_string(),
            class,
            draw_count,
            status: TaskStatus::Pending,
            left: ItemView::new(cp, i),
            right: ItemView::new(cp, j),
        })
        .collect()
}

/// The pre-answered verdicts for the sampled self pairs.
pub fn reflexive_verdicts(cp: &ClusteringPair, sample: &SampledPairSet) -> Vec<Verdict> {
    let selfs: BTreeSet<ItemIx> = sample
        .draws
        .iter()
        .filter(|d| d.pair.is_self())
        .map(|d| d.pair.i)
        .collect();
    selfs
        .into_iter()
        .map(|ix| Verdict {
            i: cp.id(ix).to_string(),
            j: cp.id(ix).to_string(),
            value: VerdictValue::Equivalent,
            source: REFLEXIVE_SOURCE.to_string(),
            timestamp: 0,
        })
        .collect()
}

/// `sampled / usable` kept as a ratio so reweighted totals are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassReweight {
    pub sampled_draws: u64,
    pub usable_draws: u64,
}

impl ClassReweight {
    /// `None` when the class was sampled but has no usable draws.
    pub fn factor(&self) -> Option<f64> {
        match (self.sampled_draws, self.usable_draws) {
            (_, 0) => None,
            (s, u) => Some(s as f64 / u as f64),
        }
    }

    pub fn is_unestimable(&self) -> bool {
        self.sampled_draws > 0 && self.usable_draws == 0
    }

    /// `Σ count · sampled / usable` over `counts`, as an exact fraction.
    pub fn reweighted_total(&self, counts: impl IntoIterator<Item = u64>) -> (u128, u128) {
        let sum: u128 = counts.into_iter().map(u128::from).sum();
        let (n, d) = (
            sum * self.sampled_draws as u128,
            self.usable_draws.max(1) as u128,
        );
        let g = gcd(n, d);
        (n / g, d / g)
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedPair {
    pub i: String,
    pub j: String,
    pub reason: String,
}

/// A sample with one resolved verdict per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgedSample {
    pub sample: SampledPairSet,
    /// `Some(i ≡ j)` for usable draws, parallel to `sample.draws`.
    pub resolved: Vec<Option<bool>>,
    pub class_reweights: BTreeMap<ReweightClass, ClassReweight>,
    pub flagged: Vec<FlaggedPair>,
}

impl JudgedSample {
    pub fn reweight(&self, class: ReweightClass) -> Option<f64> {
        self.class_reweights
            .get(&class)
            .and_then(ClassReweight::factor)
    }

    /// Usable draws with their observation weight (design weight × class reweight).
    pub fn usable(&self) -> impl Iterator<Item = (&SampledDraw, bool, f64)> + '_ {
        self.sample
            .draws
            .iter()
            .zip(&self.resolved)
            .filter_map(move |(d, r)| {
                let eq = (*r)?;
                let factor = self.reweight(ReweightClass::of(&d.pair))?;
                Some((d, eq, self.sample.observation_weight(d) * factor))
            })
    }

    pub fn unestimable_classes(&self) -> Vec<ReweightClass> {
        self.class_reweights
            .iter()
            .filter(|(_, r)| r.is_unestimable())
            .map(|(c, _)| *c)
            .collect()
    }
}

/// Folds a verdict log into per-pair decisions and class reweights.
///
/// Within one source the last record wins. Across sources an
/// equivalent/not-equivalent disagreement is an error; an unknown next to a
/// usable verdict excludes the pair and flags it.
pub fn ingest_verdicts(
    cp: &ClusteringPair,
    sample: &SampledPairSet,
    verdicts: &[Verdict],
) -> Result<JudgedSample> {
    let sampled: BTreeSet<(ItemIx, ItemIx)> = sample
        .draws
        .iter()
        .map(|d| canonical(d.pair.i, d.pair.j))
        .collect();
    let mut latest: BTreeMap<(ItemIx, ItemIx), BTreeMap<&str, VerdictValue>> = BTreeMap::new();
    for v in verdicts {
        let (i, j) = (cp.ix(&v.i)?, cp.ix(&v.j)?);
        let key = canonical(i, j);
        if !sampled.contains(&key) {
            return Err(Error::UnknownPair {
                i: v.i.clone(),
                j: v.j.clone(),
            });
        }
        if i == j && v.value != VerdictValue::Equivalent {
            return Err(Error::ConflictingVerdicts {
                i: v.i.clone(),
                j: v.j.clone(),
            });
        }
        latest.entry(key).or_default().insert(&v.source, v.value);
    }

    let mut decision: BTreeMap<(ItemIx, ItemIx), bool> = BTreeMap::new();
    let mut flagged = Vec::new();
    for (key, by_source) in &latest {
        let values: BTreeSet<Option<bool>> = by_source.values().map(|v| v.as_bool()).collect();
        let usable: Vec<bool> = values.iter().flatten().copied().collect();
        if usable.len() > 1 {
            return Err(Error::ConflictingVerdicts {
                i: cp.id(key.0).to_string(),
                j: cp.id(key.1).to_string(),
            });
        }
        match (usable.first(), values.contains(&None)) {
            (Some(&eq), false) => {
                decision.insert(*key, eq);
            }
            (Some(_), true) => flagged.push(FlaggedPair {
                i: cp.id(key.0).to_string(),
                j: cp.id(key.1).to_string(),
                reason: "unknown and usable verdicts from different sources; excluded".into(),
            }),
            (None, _) => {}
        }
    }

    let mut resolved = Vec::with_capacity(sample.draws.len());
    let mut class_reweights: BTreeMap<ReweightClass, ClassReweight> = BTreeMap::new();
    for d in &sample.draws {
        let r = if d.pair.is_self() {
            Some(true)
        } else {
            decision.get(&canonical(d.pair.i, d.pair.j)).copied()
        };
        let entry = class_reweights
            .entry(ReweightClass::of(&d.pair))
            .or_insert(ClassReweight {
                sampled_draws: 0,
                usable_draws: 0,
            });
        entry.sampled_draws += d.count;
        if r.is_some() {
            entry.usable_draws += d.count;
        }
        resolved.push(r);
    }
    Ok(JudgedSample {
        sample: sample.clone(),
        resolved,
        class_reweights,
        flagged,
    })
}

/// Verdicts read straight from ground truth, with a seeded share of tasks
/// answered `unknown` instead.
///
/// Exactly `round(rate · tasks)` tasks are skipped.
pub fn synthetic_judge<E: Equivalence + ?Sized>(
    cp: &ClusteringPair,
    tasks: &[JudgementTask],
    truth: &E,
    unanswerable_rate: f64,
    seed: u64,
    source: &str,
) -> Result<Vec<Verdict>> {
    if !(0.0..=1.0).contains(&unanswerable_rate) {
        return Err(Error::InvalidParams(format!(
            "unanswerable rate {unanswerable_rate} is outside [0, 1]"
        )));
    }
    let skip_count = (unanswerable_rate * tasks.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skipped: BTreeSet<usize> = rand::seq::index::sample(&mut rng, tasks.len(), skip_count)
        .into_iter()
        .collect();
    tasks
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let value = if skipped.contains(&k) {
                VerdictValue::Unknown
            } else {
                let (i, j) = (cp.ix(&t.i)?, cp.ix(&t.j)?);
                let eq = truth.equivalent(cp.item(i), cp.item(j)).ok_or_else(|| {
                    Error::OracleIncomplete {
                        i: t.i.clone(),
                        j: t.j.clone(),
                    }
                })?;
                VerdictValue::from_equivalent(eq)
            };
            Ok(Verdict {
                i: t.i.clone(),
                j: t.j.clone(),
                value,
                source: source.to_string(),
                timestamp: 0,
            })
        })
        .collect()
}

/// Marks tasks answered (usable verdict) or skipped (only unknowns).
pub fn apply_status(
    cp: &ClusteringPair,
    tasks: &mut [JudgementTask],
    verdicts: &[Verdict],
) -> Result<()> {
    let mut seen: BTreeMap<(ItemIx, ItemIx), TaskStatus> = BTreeMap::new();
    for v in verdicts {
        let key = canonical(cp.ix(&v.i)?, cp.ix(&v.j)?);
        let status = if v.value.as_bool().is_some() {
            TaskStatus::Answered
        } else {
            TaskStatus::Skipped
        };
        let e = seen.entry(key).or_insert(status);
        if status == TaskStatus::Answered {
            *e = TaskStatus::Answered;
        }
    }
    for t in tasks {
        let key = canonical(cp.ix(&t.i)?, cp.ix(&t.j)?);
        t.status = seen.get(&key).copied().unwrap_or(TaskStatus::Pending);
    }
    Ok(())
}
