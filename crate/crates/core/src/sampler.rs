//! Seeded weighted sampling of pairs with replacement.
//!
//! Each of the `k` draws of a stratum is an independent size-one weighted
//! reservoir over the pair stream. Instead of testing every slot against every
//! pair, each slot keeps a cumulative-weight threshold `W / U` (with `U`
//! uniform on `(0, 1]`, `W` the cumulative weight when the slot was last
//! filled); the slot is refilled by the first later pair that pushes the
//! cumulative weight past it. A slot filled at cumulative weight `W_s`
//! survives to cumulative weight `W_t` with probability `W_s / W_t`, which is
//! exactly the size-one reservoir law, so every draw ends up holding pair `x`
//! with probability `w_x / Σw`. The pass is single and streaming, costs
//! `O(1)` per pair plus `O(log k)` per slot refill, and the expected number of
//! refills is `O(k log n)`.
//!
//! Randomness comes from ChaCha8 seeded with the plan seed and one stream per
//! stratum, so samples are reproducible across platforms.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusteringPair, ItemIx};
use crate::pairs::{pair_at, ItemPair, PairClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strata {
    Single,
    TwoStrata { diff_draws: u64, stable_draws: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub total_draws: u64,
    pub seed: u64,
    pub strata: Strata,
    /// Pairs with `w` below the floor are not drawn.
    #[serde(default)]
    pub weight_floor: f64,
}

impl SamplePlan {
    pub fn single(total_draws: u64, seed: u64) -> Self {
        SamplePlan {
            total_draws,
            seed,
            strata: Strata::Single,
            weight_floor: 0.0,
        }
    }

    pub fn two_strata(diff_draws: u64, stable_draws: u64, seed: u64) -> Self {
        SamplePlan {
            total_draws: diff_draws + stable_draws,
            seed,
            strata: Strata::TwoStrata {
                diff_draws,
                stable_draws,
            },
            weight_floor: 0.0,
        }
    }

    /// Two strata with `round(total · diff_fraction)` diff draws.
    pub fn with_diff_fraction(total_draws: u64, diff_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&diff_fraction) {
            return Err(Error::InvalidPlan(format!(
                "diff fraction {diff_fraction} is outside [0, 1]"
            )));
        }
        let diff = (total_draws as f64 * diff_fraction).round() as u64;
        Ok(Self::two_strata(diff, total_draws - diff, seed))
    }

    /// The default stratification: half the draws in each stratum.
    pub fn stratified(total_draws: u64, seed: u64) -> Self {
        Self::with_diff_fraction(total_draws, 0.5, seed).expect("0.5 is a valid fraction")
    }

    pub fn with_weight_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight_floor.is_finite() && self.weight_floor >= 0.0) {
            return Err(Error::InvalidPlan(format!(
                "weight floor {} must be >= 0",
                self.weight_floor
            )));
        }
        if let Strata::TwoStrata {
            diff_draws,
            stable_draws,
        } = self.strata
        {
            if diff_draws + stable_draws != self.total_draws {
                return Err(Error::InvalidPlan(format!(
                    "strata draws {diff_draws} + {stable_draws} do not add up to {}",
                    self.total_draws
                )));
            }
        }
        Ok(())
    }

    pub fn is_single(&self) -> bool {
        matches!(self.strata, Strata::Single)
    }

    fn draws_for(&self, stratum: Stratum) -> u64 {
        match (self.strata, stratum) {
            (Strata::Single, Stratum::All) => self.total_draws,
            (Strata::TwoStrata { diff_draws, .. }, Stratum::Diff) => diff_draws,
            (Strata::TwoStrata { stable_draws, .. }, Stratum::Stable) => stable_draws,
            _ => 0,
        }
    }

    fn strata_list(&self) -> &'static [Stratum] {
        match self.strata {
            Strata::Single => &[Stratum::All],
            Strata::TwoStrata { .. } => &[Stratum::Diff, Stratum::Stable],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    All,
    Diff,
    Stable,
}

impl Stratum {
    pub fn of(strata: Strata, class: PairClass) -> Stratum {
        match strata {
            Strata::Single => Stratum::All,
            Strata::TwoStrata { .. } if class.is_diff() => Stratum::Diff,
            Strata::TwoStrata { .. } => Stratum::Stable,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::Diff => "diff",
            Stratum::Stable => "stable",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Stratum::All => 0,
            Stratum::Diff => 1,
            Stratum::Stable => 2,
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How observation weights arise from a sampled entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleDesign {
    /// Drawn proportionally to `w`; each draw is one unit-weight observation.
    #[default]
    Drawn,
    /// Every pair of the population listed once, observed with weight `w`.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledDraw {
    pub pair: ItemPair,
    pub count: u64,
    pub stratum: Stratum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub stratum: Stratum,
    pub draws: u64,
    /// Σw over the pairs of the stream routed to this stratum.
    pub total_weight: f64,
    pub population: u64,
}

/// Σw and pair count per class over the whole input stream (after the floor).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub class_weight: BTreeMap<PairClass, f64>,
    pub class_pairs: BTreeMap<PairClass, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPairSet {
    pub draws: Vec<SampledDraw>,
    pub plan: SamplePlan,
    pub design: SampleDesign,
    pub strata: Vec<StratumSummary>,
    pub stream: StreamSummary,
}

impl SampledPairSet {
    pub fn total_draws(&self) -> u64 {
        self.draws.iter().map(|d| d.count).sum()
    }

    pub fn class_counts(&self) -> BTreeMap<PairClass, u64> {
        let mut out = BTreeMap::new();
        for d in &self.draws {
            *out.entry(d.pair.class).or_insert(0) += d.count;
        }
        out
    }

    pub fn stratum(&self, stratum: Stratum) -> Option<&StratumSummary> {
        self.strata.iter().find(|s| s.stratum == stratum)
    }

    /// Observation weight of an entry before any judgement reweighting.
    pub fn observation_weight(&self, draw: &SampledDraw) -> f64 {
        match self.design {
            SampleDesign::Drawn => draw.count as f64,
            SampleDesign::Exhaustive => draw.count as f64 * draw.pair.w,
        }
    }

    /// Σ observation weight per stratum.
    fn stratum_mass(&self) -> BTreeMap<Stratum, f64> {
        let mut out = BTreeMap::new();
        for d in &self.draws {
            *out.entry(d.stratum).or_insert(0.0) += self.observation_weight(d);
        }
        out
    }

    /// Each entry's share of its stratum total: `count / N · stratumTotal`.
    pub fn contributions(&self) -> Vec<f64> {
        let mass = self.stratum_mass();
        self.draws
            .iter()
            .map(|d| {
                let total = self.stratum(d.stratum).map_or(0.0, |s| s.total_weight);
                self.observation_weight(d) / mass[&d.stratum] * total
            })
            .collect()
    }

    /// Treats every pair of the stream as drawn once with observation weight `w`.
    pub fn exhaustive<I: IntoIterator<Item = ItemPair>>(pairs: I) -> Self {
        let mut draws = Vec::new();
        let mut stream = StreamSummary::default();
        let mut total = 0.0;
        for pair in pairs {
            if pair.w <= 0.0 {
                continue;
            }
            *stream.class_weight.entry(pair.class).or_insert(0.0) += pair.w;
            *stream.class_pairs.entry(pair.class).or_insert(0) += 1;
            total += pair.w;
            draws.push(SampledDraw {
                pair,
                count: 1,
                stratum: Stratum::All,
            });
        }
        draws.sort_by_key(|d| d.pair.key());
        let n = draws.len() as u64;
        SampledPairSet {
            draws,
            plan: SamplePlan::single(n, 0),
            design: SampleDesign::Exhaustive,
            strata: vec![StratumSummary {
                stratum: Stratum::All,
                draws: n,
                total_weight: total,
                population: n,
            }],
            stream,
        }
    }
}

#[derive(Debug, PartialEq)]
struct Threshold {
    at: f64,
    slot: usize,
}

impl Eq for Threshold {}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Threshold {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at
            .total_cmp(&other.at)
            .then(self.slot.cmp(&other.slot))
    }
}

/// `k` independent size-one weighted reservoirs.
struct Reservoir {
    slots: Vec<Option<ItemPair>>,
    thresholds: BinaryHeap<Reverse<Threshold>>,
    cumulative: f64,
    population: u64,
    rng: ChaCha8Rng,
}

impl Reservoir {
    fn new(k: u64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Reservoir {
            slots: vec![None; k as usize],
            thresholds: (0..k as usize)
                .map(|slot| Reverse(Threshold { at: 0.0, slot }))
                .collect(),
            cumulative: 0.0,
            population: 0,
            rng,
        }
    }

    fn offer(&mut self, pair: &ItemPair) {
        self.cumulative += pair.w;
        self.population += 1;
        while let Some(Reverse(top)) = self.thresholds.peek() {
            if top.at >= self.cumulative {
                break;
            }
            let slot = top.slot;
            self.thresholds.pop();
            self.slots[slot] = Some(*pair);
            // 1 - [0, 1) is (0, 1]
            let u = 1.0 - self.rng.random::<f64>();
            self.thresholds.push(Reverse(Threshold {
                at: self.cumulative / u,
                slot,
            }));
        }
    }
}

/// Draws a seeded weighted sample with replacement in one pass over `pairs`.
pub fn sample<I: IntoIterator<Item = ItemPair>>(
    pairs: I,
    plan: &SamplePlan,
) -> Result<SampledPairSet> {
    plan.validate()?;
    let strata = plan.strata_list();
    let mut reservoirs: Vec<Reservoir> = strata
        .iter()
        .map(|&s| Reservoir::new(plan.draws_for(s), plan.seed, s.stream_id()))
        .collect();
    let mut stream = StreamSummary::default();
    for pair in pairs {
        if pair.w <= 0.0 || pair.w < plan.weight_floor {
            continue;
        }
        *stream.class_weight.entry(pair.class).or_insert(0.0) += pair.w;
        *stream.class_pairs.entry(pair.class).or_insert(0) += 1;
        let stratum = Stratum::of(plan.strata, pair.class);
        let slot = strata
            .iter()
            .position(|&s| s == stratum)
            .expect("stratum routed");
        reservoirs[slot].offer(&pair);
    }

    let mut draws = Vec::new();
    let mut summaries = Vec::new();
    for (&stratum, reservoir) in strata.iter().zip(reservoirs) {
        let k = plan.draws_for(stratum);
        if k > 0 && reservoir.population == 0 {
            return Err(Error::EmptyStratum(stratum.to_string()));
        }
        let mut counts: BTreeMap<(ItemIx, ItemIx), (ItemPair, u64)> = BTreeMap::new();
        for pair in reservoir.slots.into_iter().flatten() {
            counts.entry(pair.key()).or_insert((pair, 0)).1 += 1;
        }
        draws.extend(counts.into_values().map(|(pair, count)| SampledDraw {
            pair,
            count,
            stratum,
        }));
        summaries.push(StratumSummary {
            stratum,
            draws: k,
            total_weight: reservoir.cumulative,
            population: reservoir.population,
        });
    }
    Ok(SampledPairSet {
        draws,
        plan: *plan,
        design: SampleDesign::Drawn,
        strata: summaries,
        stream,
    })
}

/// Sum of `count / N · stratumTotal` over the entries matching `filter`.
///
/// With the trivial filter this is the sum of the sampled stratum totals.
pub fn contribution<F: Fn(&SampledDraw) -> bool>(set: &SampledPairSet, filter: F) -> f64 {
    set.draws
        .iter()
        .zip(set.contributions())
        .filter(|(d, _)| filter(d))
        .map(|(_, c)| c)
        .sum()
}

/// Sample export line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub i: String,
    pub j: String,
    pub class: PairClass,
    pub is_self: bool,
    pub w: f64,
    pub l: f64,
    pub draw_count: u64,
    pub stratum: Stratum,
}

/// Everything about a sample that is not per-entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub plan: SamplePlan,
    pub design: SampleDesign,
    pub strata: Vec<StratumSummary>,
    pub stream: StreamSummary,
}

impl SampledPairSet {
    pub fn records(&self, cp: &ClusteringPair) -> Vec<SampleRecord> {
        self.draws
            .iter()
            .map(|d| SampleRecord {
                i: cp.id(d.pair.i).to_string(),
                j: cp.id(d.pair.j).to_string(),
                class: d.pair.class,
                is_self: d.pair.is_self(),
                w: d.pair.w,
                l: d.pair.l,
                draw_count: d.count,
                stratum: d.stratum,
            })
            .collect()
    }

    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            plan: self.plan,
            design: self.design,
            strata: self.strata.clone(),
            stream: self.stream.clone(),
        }
    }

    /// Rebuilds a sample from its export; pairs are re-derived from `cp`.
    pub fn from_records(
        cp: &ClusteringPair,
        records: &[SampleRecord],
        meta: SampleMeta,
    ) -> Result<Self> {
        let mut draws = Vec::with_capacity(records.len());
        for r in records {
            let (i, j) = (cp.ix(&r.i)?, cp.ix(&r.j)?);
            let pair = pair_at(cp, i, j).ok_or_else(|| Error::NotAPair {
                i: r.i.clone(),
                j: r.j.clone(),
            })?;
            if pair.class != r.class {
                return Err(Error::InvalidParams(format!(
                    "sample lists ({}, {}) as {} but the clusterings make it {}",
                    r.i, r.j, r.class, pair.class
                )));
            }
            draws.push(SampledDraw {
                pair,
                count: r.draw_count,
                stratum: r.stratum,
            });
        }
        Ok(SampledPairSet {
            draws,
            plan: meta.plan,
            design: meta.design,
            strata: meta.strata,
            stream: meta.stream,
        })
    }
}
