//! Brute-force exact metrics under a complete ground truth, and the seeded
//! synthetic instance generator used by tests and calibration.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Equivalence, ItemImpact, ItemQuality, ReportRow};
use crate::model::{affected_partition, ClusteringPair, Item, JoinedRecord, Side};
use crate::pairs::{enumerate_pairs, pair_count, PairClass};

pub const DEFAULT_ORACLE_LIMIT: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub item_id: String,
    pub truth_class_id: String,
}

/// Ground truth as a partition of item ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruthTable {
    class_of: HashMap<String, String>,
}

impl TruthTable {
    pub fn from_records<I: IntoIterator<Item = TruthRecord>>(records: I) -> Result<Self> {
        let mut class_of = HashMap::new();
        for r in records {
            if class_of
                .insert(r.item_id.clone(), r.truth_class_id)
                .is_some()
            {
                return Err(Error::InvalidTruth(format!(
                    "item {} listed twice",
                    r.item_id
                )));
            }
        }
        Ok(TruthTable { class_of })
    }

    /// Builds the partition implied by pairwise judgements, rejecting tables
    /// whose not-equivalent pairs contradict the transitive closure.
    pub fn from_pairs<'a, I>(ids: &[String], pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, bool)>,
    {
        let pos: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.as_str(), k))
            .collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let lookup = |id: &str| {
            pos.get(id)
                .copied()
                .ok_or_else(|| Error::UnknownItem(id.to_string()))
        };
        let mut apart = Vec::new();
        for (i, j, eq) in pairs {
            let (a, b) = (lookup(i)?, lookup(j)?);
            if eq {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra.max(rb)] = ra.min(rb);
            } else {
                apart.push((a, b));
            }
        }
        for (a, b) in apart {
            if root(&mut parent, a) == root(&mut parent, b) {
                return Err(Error::InvalidTruth(format!(
                    "{} and {} are judged not equivalent but are linked by equivalent pairs",
                    ids[a], ids[b]
                )));
            }
        }
        let class_of = (0..ids.len())
            .map(|k| {
                let r = root(&mut parent, k);
                (ids[k].clone(), ids[r].clone())
            })
            .collect();
        Ok(TruthTable { class_of })
    }

    /// Each distinct value of `key` is one class; items without it are singletons.
    pub fn from_attribute(cp: &ClusteringPair, key: &str) -> Self {
        let class_of = cp
            .items()
            .iter()
            .map(|it| {
                let class = match it.attributes.get(key) {
                    Some(v) => format!("{key}={v}"),
                    None => format!("item:{}", it.id),
                };
                (it.id.clone(), class)
            })
            .collect();
        TruthTable { class_of }
    }

    pub fn class(&self, id: &str) -> Option<&str> {
        self.class_of.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    /// Records sorted by item id.
    pub fn records(&self) -> Vec<TruthRecord> {
        let mut out: Vec<TruthRecord> = self
            .class_of
            .iter()
            .map(|(i, c)| TruthRecord {
                item_id: i.clone(),
                truth_class_id: c.clone(),
            })
            .collect();
        out.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        out
    }

    /// Dense class index per item of `cp`.
    pub fn dense(&self, cp: &ClusteringPair) -> Result<Vec<u32>> {
        let mut ids: HashMap<&str, u32> = HashMap::new();
        cp.items()
            .iter()
            .map(|it| {
                let c = self.class(&it.id).ok_or_else(|| {
                    Error::InvalidTruth(format!("item {} has no truth class", it.id))
                })?;
                let next = ids.len() as u32;
                Ok(*ids.entry(c).or_insert(next))
            })
            .collect()
    }
}

impl Equivalence for TruthTable {
    fn lookup(&self, i: &Item, j: &Item) -> Option<bool> {
        Some(self.class(&i.id)? == self.class(&j.id)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverallExact {
    pub jaccard_distance: f64,
    pub split_distance: f64,
    pub merge_distance: f64,
    pub jaccard_index: f64,
    pub affected_jaccard_index: f64,
    pub unaffected_jaccard_index: f64,
    pub good_split_distance: f64,
    pub bad_split_distance: f64,
    pub good_merge_distance: f64,
    pub bad_merge_distance: f64,
    pub good_distance: f64,
    pub bad_distance: f64,
    pub affected_good_index: f64,
    pub affected_bad_index: f64,
    pub delta_precision: f64,
    pub delta_precision_multiplier: f64,
    pub affected_weight_fraction: f64,
}

impl OverallExact {
    pub fn fields(&self) -> [(&'static str, f64); 17] {
        [
            ("jaccard_distance", self.jaccard_distance),
            ("split_distance", self.split_distance),
            ("merge_distance", self.merge_distance),
            ("jaccard_index", self.jaccard_index),
            ("affected_jaccard_index", self.affected_jaccard_index),
            ("unaffected_jaccard_index", self.unaffected_jaccard_index),
            ("good_split_distance", self.good_split_distance),
            ("bad_split_distance", self.bad_split_distance),
            ("good_merge_distance", self.good_merge_distance),
            ("bad_merge_distance", self.bad_merge_distance),
            ("good_distance", self.good_distance),
            ("bad_distance", self.bad_distance),
            ("affected_good_index", self.affected_good_index),
            ("affected_bad_index", self.affected_bad_index),
            ("delta_precision", self.delta_precision),
            (
                "delta_precision_multiplier",
                self.delta_precision_multiplier,
            ),
            ("affected_weight_fraction", self.affected_weight_fraction),
        ]
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.fields()
            .into_iter()
            .find(|(k, _)| *k == metric)
            .map(|(_, v)| v)
    }
}

type ItemField = fn(&ExactItem) -> f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactItem {
    pub id: String,
    pub affected: bool,
    pub impact: ItemImpact,
    pub quality: ItemQuality,
    pub precision_base: f64,
    pub precision_exp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMetrics {
    pub overall: OverallExact,
    pub items: Vec<ExactItem>,
}

/// Region weights of one vantage point, in `[B∩E, B\E, E\B]` × `[≡, ≢]`.
#[derive(Debug, Clone, Copy, Default)]
struct Regions {
    stable: [f64; 2],
    split: [f64; 2],
    merge: [f64; 2],
}

fn item_from_regions(r: &Regions, union: f64) -> ItemQuality {
    ItemQuality {
        good_split_distance: r.split[1] / union,
        bad_split_distance: r.split[0] / union,
        good_merge_distance: r.merge[0] / union,
        bad_merge_distance: r.merge[1] / union,
        good_index: r.stable[0] / union,
        bad_index: r.stable[1] / union,
        good_distance: (r.split[1] + r.merge[0]) / union,
        bad_distance: (r.split[0] + r.merge[1]) / union,
        delta_precision: 0.0,
    }
}

/// Computes every metric twice, by region algebra over grouped weights and by
/// explicit sums over the enumerated pairs, and fails if the two disagree.
pub fn exact_metrics(
    cp: &ClusteringPair,
    truth: &TruthTable,
    pair_limit: u64,
) -> Result<ExactMetrics> {
    let partition = affected_partition(cp);
    let pairs = pair_count(cp, &partition);
    if pairs > pair_limit {
        return Err(Error::InstanceTooLarge {
            pairs,
            limit: pair_limit,
        });
    }
    let class = truth.dense(cp)?;
    let total = cp.total_weight();
    let (base, exp) = (cp.base(), cp.exp());

    // (a) region algebra
    let mut base_truth: HashMap<(usize, u32), f64> = HashMap::new();
    let mut exp_truth: HashMap<(usize, u32), f64> = HashMap::new();
    let mut cell_truth: HashMap<(usize, usize, u32), f64> = HashMap::new();
    let mut cell: HashMap<(usize, usize), f64> = HashMap::new();
    for ix in cp.indices() {
        let (b, e, t, w) = (
            base.cluster_of(ix),
            exp.cluster_of(ix),
            class[ix.index()],
            cp.weight(ix),
        );
        *base_truth.entry((b, t)).or_default() += w;
        *exp_truth.entry((e, t)).or_default() += w;
        *cell_truth.entry((b, e, t)).or_default() += w;
        *cell.entry((b, e)).or_default() += w;
    }
    let mut items = Vec::with_capacity(cp.len());
    for ix in cp.indices() {
        let (b, e, t) = (base.cluster_of(ix), exp.cluster_of(ix), class[ix.index()]);
        let (wb, we) = (cp.base_weight(ix), cp.exp_weight(ix));
        let bt = base_truth[&(b, t)];
        let et = exp_truth[&(e, t)];
        let bet = cell_truth[&(b, e, t)];
        let be = cell[&(b, e)];
        let affected = partition.contains_affected(ix);
        let union = if affected { wb + we - be } else { wb };
        let regions = if affected {
            Regions {
                stable: [bet, be - bet],
                split: [bt - bet, (wb - be) - (bt - bet)],
                merge: [et - bet, (we - be) - (et - bet)],
            }
        } else {
            Regions {
                stable: [bt, wb - bt],
                ..Regions::default()
            }
        };
        let (precision_base, precision_exp) = if affected {
            (bt / wb, et / we)
        } else {
            (bt / wb, bt / wb)
        };
        let mut quality = item_from_regions(&regions, union);
        quality.delta_precision = precision_exp - precision_base;
        let split = regions.split[0] + regions.split[1];
        let merge = regions.merge[0] + regions.merge[1];
        items.push(ExactItem {
            id: cp.id(ix).to_string(),
            affected,
            impact: ItemImpact {
                jaccard_distance: (split + merge) / union,
                split_distance: split / union,
                merge_distance: merge / union,
                jaccard_index: (regions.stable[0] + regions.stable[1]) / union,
            },
            quality,
            precision_base,
            precision_exp,
        });
    }
    let lift = |f: &dyn Fn(&ExactItem) -> f64| -> f64 {
        cp.indices()
            .map(|ix| cp.weight(ix) * f(&items[ix.index()]))
            .sum::<f64>()
            / total
    };
    let lift_affected = |f: &dyn Fn(&ExactItem) -> f64| -> f64 {
        partition
            .affected
            .iter()
            .map(|&ix| cp.weight(ix) * f(&items[ix.index()]))
            .sum::<f64>()
            / total
    };
    let split_distance = lift(&|m| m.impact.split_distance);
    let merge_distance = lift(&|m| m.impact.merge_distance);
    let affected_ji = lift_affected(&|m| m.impact.jaccard_index);
    let overall = OverallExact {
        jaccard_distance: lift(&|m| m.impact.jaccard_distance),
        split_distance,
        merge_distance,
        jaccard_index: lift(&|m| m.impact.jaccard_index),
        affected_jaccard_index: affected_ji,
        unaffected_jaccard_index: partition.unaffected_weight / total,
        good_split_distance: lift(&|m| m.quality.good_split_distance),
        bad_split_distance: lift(&|m| m.quality.bad_split_distance),
        good_merge_distance: lift(&|m| m.quality.good_merge_distance),
        bad_merge_distance: lift(&|m| m.quality.bad_merge_distance),
        good_distance: lift(&|m| m.quality.good_distance),
        bad_distance: lift(&|m| m.quality.bad_distance),
        affected_good_index: lift_affected(&|m| m.quality.good_index),
        affected_bad_index: lift_affected(&|m| m.quality.bad_index),
        delta_precision: lift(&|m| m.quality.delta_precision),
        delta_precision_multiplier: split_distance + merge_distance + affected_ji,
        affected_weight_fraction: partition.affected_weight / total,
    };

    // (b) pair sums
    let mut regions = vec![Regions::default(); cp.len()];
    let mut sums = OverallExact::default();
    for p in enumerate_pairs(cp, &partition) {
        let eq = class[p.i.index()] == class[p.j.index()];
        let slot = usize::from(!eq);
        let wj = cp.weight(p.j);
        let r = &mut regions[p.i.index()];
        match p.class {
            PairClass::Split => {
                r.split[slot] += wj;
                sums.split_distance += p.w;
                if eq {
                    sums.bad_split_distance += p.w;
                } else {
                    sums.good_split_distance += p.w;
                }
            }
            PairClass::Merge => {
                r.merge[slot] += wj;
                sums.merge_distance += p.w;
                if eq {
                    sums.good_merge_distance += p.w;
                } else {
                    sums.bad_merge_distance += p.w;
                }
            }
            PairClass::Stable => {
                r.stable[slot] += wj;
                sums.affected_jaccard_index += p.w;
                if eq {
                    sums.affected_good_index += p.w;
                } else {
                    sums.affected_bad_index += p.w;
                }
            }
        }
        if eq {
            sums.delta_precision += p.w * p.l;
        }
    }
    sums.jaccard_distance = sums.split_distance + sums.merge_distance;
    sums.good_distance = sums.good_split_distance + sums.good_merge_distance;
    sums.bad_distance = sums.bad_split_distance + sums.bad_merge_distance;
    sums.unaffected_jaccard_index = partition.unaffected_weight / total;
    sums.jaccard_index = sums.affected_jaccard_index + sums.unaffected_jaccard_index;
    sums.delta_precision_multiplier =
        sums.split_distance + sums.merge_distance + sums.affected_jaccard_index;
    sums.affected_weight_fraction = overall.affected_weight_fraction;

    let unit = cp.items().iter().all(|it| it.weight == 1.0);
    let tol = if unit { 1e-12 } else { 1e-9 };
    let check = |metric: &str, left: f64, right: f64| -> Result<()> {
        if (left - right).abs() > tol {
            return Err(Error::OracleMismatch {
                metric: metric.to_string(),
                left,
                right,
            });
        }
        Ok(())
    };
    for ((name, a), (_, b)) in overall.fields().into_iter().zip(sums.fields()) {
        check(name, a, b)?;
    }
    for &ix in &partition.affected {
        let m = &items[ix.index()];
        let q = item_from_regions(&regions[ix.index()], cp.union_weight(ix));
        let id = cp.id(ix);
        check(
            &format!("{id}.good_split_distance"),
            m.quality.good_split_distance,
            q.good_split_distance,
        )?;
        check(
            &format!("{id}.bad_split_distance"),
            m.quality.bad_split_distance,
            q.bad_split_distance,
        )?;
        check(
            &format!("{id}.good_merge_distance"),
            m.quality.good_merge_distance,
            q.good_merge_distance,
        )?;
        check(
            &format!("{id}.bad_merge_distance"),
            m.quality.bad_merge_distance,
            q.bad_merge_distance,
        )?;
        check(
            &format!("{id}.good_index"),
            m.quality.good_index,
            q.good_index,
        )?;
        check(&format!("{id}.bad_index"), m.quality.bad_index, q.bad_index)?;
    }
    Ok(ExactMetrics { overall, items })
}

impl ExactMetrics {
    pub fn item(&self, id: &str) -> Option<&ExactItem> {
        self.items.iter().find(|m| m.id == id)
    }

    /// Overall rows, then per-Base-cluster and per-Exp-cluster lifts of the
    /// item metrics.
    pub fn rows(&self, cp: &ClusteringPair) -> Vec<ReportRow> {
        let mut out: Vec<ReportRow> = self
            .overall
            .fields()
            .into_iter()
            .map(|(k, v)| ReportRow::new("overall", "T", k, v))
            .collect();
        let metrics: [(&str, ItemField); 11] = [
            ("jaccard_distance", |m| m.impact.jaccard_distance),
            ("split_distance", |m| m.impact.split_distance),
            ("merge_distance", |m| m.impact.merge_distance),
            ("jaccard_index", |m| m.impact.jaccard_index),
            ("good_split_distance", |m| m.quality.good_split_distance),
            ("bad_split_distance", |m| m.quality.bad_split_distance),
            ("good_merge_distance", |m| m.quality.good_merge_distance),
            ("bad_merge_distance", |m| m.quality.bad_merge_distance),
            ("good_index", |m| m.quality.good_index),
            ("bad_index", |m| m.quality.bad_index),
            ("delta_precision", |m| m.quality.delta_precision),
        ];
        for (side, name) in [(Side::Base, "base_cluster"), (Side::Exp, "exp_cluster")] {
            let clustering = cp.side(side);
            for c in 0..clustering.len() {
                let members = clustering.members(c);
                let w = clustering.weight(c);
                for (metric, f) in metrics {
                    let v = members
                        .iter()
                        .map(|&ix| cp.weight(ix) * f(&self.items[ix.index()]))
                        .sum::<f64>()
                        / w;
                    out.push(ReportRow::new(name, clustering.cluster_id(c), metric, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub items: usize,
    /// Truth class sizes are uniform on `1..=max_class_size`.
    pub max_class_size: usize,
    /// Chance that a truth class is split, and separately merged with its
    /// neighbour, in Base.
    pub base_noise: f64,
    /// Per Base cluster chance of a split in Exp.
    pub split_rate: f64,
    /// Per Base cluster chance of a merge in Exp.
    pub merge_rate: f64,
    /// Chance that an Exp change is attempted as a good one. Good changes
    /// need an opportunity in Base, so the realized share is lower.
    pub good_fraction: f64,
    /// Item weights are uniform on `[1, weight_spread]`; 1 gives unit weights.
    pub weight_spread: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            items: 1000,
            max_class_size: 8,
            base_noise: 0.4,
            split_rate: 0.3,
            merge_rate: 0.3,
            good_fraction: 0.75,
            weight_spread: 1.0,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "{name} = {v} is outside [0, 1]"
                )))
            }
        };
        if self.items == 0 {
            return Err(Error::InvalidParams("items must be positive".into()));
        }
        if self.max_class_size == 0 {
            return Err(Error::InvalidParams(
                "max_class_size must be positive".into(),
            ));
        }
        unit("base_noise", self.base_noise)?;
        unit("split_rate", self.split_rate)?;
        unit("merge_rate", self.merge_rate)?;
        unit("good_fraction", self.good_fraction)?;
        if !(self.weight_spread.is_finite() && self.weight_spread >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "weight_spread = {} must be >= 1",
                self.weight_spread
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub cp: ClusteringPair,
    pub truth: TruthTable,
    pub params: GeneratorParams,
}

impl SyntheticInstance {
    pub fn joined_records(&self) -> Vec<JoinedRecord> {
        self.cp.joined_records()
    }
}

fn item_id(k: usize) -> String {
    format!("i{k:06}")
}

/// Seeded instance: truth classes, a noisy Base, and an Exp that applies
/// good and bad splits and merges to Base.
pub fn generate_instance(params: &GeneratorParams) -> Result<SyntheticInstance> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.items;

    let mut truth = vec![0usize; n];
    let mut truth_classes: Vec<Vec<usize>> = Vec::new();
    let mut k = 0;
    while k < n {
        let size = rng.random_range(1..=params.max_class_size).min(n - k);
        truth_classes.push((k..k + size).collect());
        for t in &mut truth[k..k + size] {
            *t = truth_classes.len() - 1;
        }
        k += size;
    }

    // Base: truth with random splits, then random neighbour merges.
    let mut base: Vec<Vec<usize>> = Vec::new();
    for class in &truth_classes {
        if class.len() > 1 && rng.random_bool(params.base_noise) {
            let mut members = class.clone();
            members.shuffle(&mut rng);
            let cut = rng.random_range(1..members.len());
            let mut rest = members.split_off(cut);
            members.sort_unstable();
            rest.sort_unstable();
            base.push(members);
            base.push(rest);
        } else {
            base.push(class.clone());
        }
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    for cluster in base {
        match merged.last_mut() {
            Some(last) if rng.random_bool(params.base_noise / 2.0) => last.extend(cluster),
            _ => merged.push(cluster),
        }
    }
    let base = merged;

    // Exp: per Base cluster, a split and/or a merge, each good or bad.
    let mut exp_of: Vec<String> = vec![String::new(); n];
    for (c, members) in base.iter().enumerate() {
        for &m in members {
            exp_of[m] = format!("e{c}");
        }
    }
    let mut truth_clusters: Vec<Vec<usize>> = vec![Vec::new(); truth_classes.len()];
    for (c, members) in base.iter().enumerate() {
        for &m in members {
            if truth_clusters[truth[m]].last() != Some(&c) {
                truth_clusters[truth[m]].push(c);
            }
        }
    }
    let mut touched = vec![false; base.len()];
    let mut extra = 0usize;
    for c in 0..base.len() {
        let members = &base[c];
        if members.len() > 1 && rng.random_bool(params.split_rate) {
            let mut classes: Vec<usize> = members.iter().map(|&m| truth[m]).collect();
            classes.dedup();
            let good = rng.random_bool(params.good_fraction);
            let moved: Vec<usize> = if good {
                // Separate one truth class from the rest; a pure cluster has
                // no good split.
                let t = classes[rng.random_range(0..classes.len())];
                if classes.len() > 1 {
                    members.iter().copied().filter(|&m| truth[m] == t).collect()
                } else {
                    Vec::new()
                }
            } else {
                // Cut inside a truth class where possible.
                let big: Vec<usize> = classes
                    .iter()
                    .copied()
                    .filter(|&t| members.iter().filter(|&&m| truth[m] == t).count() > 1)
                    .collect();
                match big.as_slice() {
                    [] => vec![members[rng.random_range(0..members.len())]],
                    big => {
                        let t = big[rng.random_range(0..big.len())];
                        let mut inside: Vec<usize> =
                            members.iter().copied().filter(|&m| truth[m] == t).collect();
                        inside.shuffle(&mut rng);
                        let cut = rng.random_range(1..inside.len());
                        inside.truncate(cut);
                        inside
                    }
                }
            };
            if !moved.is_empty() && moved.len() < members.len() {
                let label = format!("x{extra}");
                extra += 1;
                for m in moved {
                    exp_of[m] = label.clone();
                }
                touched[c] = true;
            }
        }
        if !touched[c] && rng.random_bool(params.merge_rate) {
            let good = rng.random_bool(params.good_fraction);
            let partner = if good {
                // Another Base cluster holding part of one of our truth classes.
                let mut candidates: Vec<usize> = members
                    .iter()
                    .flat_map(|&m| truth_clusters[truth[m]].iter().copied())
                    .filter(|&d| d != c && !touched[d])
                    .collect();
                candidates.sort_unstable();
                candidates.dedup();
                (!candidates.is_empty()).then(|| candidates[rng.random_range(0..candidates.len())])
            } else {
                let ours: Vec<usize> = members.iter().map(|&m| truth[m]).collect();
                (0..8).find_map(|_| {
                    let d = rng.random_range(0..base.len());
                    let disjoint = base[d].iter().all(|m| !ours.contains(&truth[*m]));
                    (d != c && !touched[d] && disjoint).then_some(d)
                })
            };
            if let Some(d) = partner {
                let label = format!("e{c}");
                for &m in &base[d] {
                    exp_of[m] = label.clone();
                }
                touched[c] = true;
                touched[d] = true;
            }
        }
    }

    let weights: Vec<f64> = (0..n)
        .map(|_| {
            if params.weight_spread > 1.0 {
                rng.random_range(1.0..params.weight_spread)
            } else {
                1.0
            }
        })
        .collect();
    let mut records = Vec::with_capacity(n);
    for (c, members) in base.iter().enumerate() {
        for &m in members {
            let mut attributes = BTreeMap::new();
            attributes.insert(
                "type".to_string(),
                if m % 2 == 0 { "A" } else { "B" }.to_string(),
            );
            attributes.insert("source".to_string(), format!("s{}", m % 4));
            records.push(JoinedRecord {
                item_id: item_id(m),
                base_cluster_id: format!("b{c}"),
                exp_cluster_id: exp_of[m].clone(),
                weight: weights[m],
                attributes,
            });
        }
    }
    records.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let cp = ClusteringPair::from_joined(records)?;
    let truth = TruthTable::from_records((0..n).map(|m| TruthRecord {
        item_id: item_id(m),
        truth_class_id: format!("t{}", truth[m]),
    }))?;
    Ok(SyntheticInstance {
        cp,
        truth,
        params: *params,
    })
}

/// Re-derived Exp clustering that equals the truth, keeping Base.
pub fn perfect_repair(instance: &SyntheticInstance) -> Result<ClusteringPair> {
    let records = instance.cp.joined_records().into_iter().map(|mut r| {
        r.exp_cluster_id = instance
            .truth
            .class(&r.item_id)
            .unwrap_or(&r.item_id)
            .to_string();
        r
    });
    ClusteringPair::from_joined(records)
}
