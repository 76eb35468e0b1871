//! Quality estimates from a judged sample and the exact pair totals.
//!
//! Every estimator is a class-restricted weighted mean of an indicator, scaled
//! by an exact class total. Bad variants are the total minus the Good point and
//! share its standard error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judgements::{ClassReweight, FlaggedPair, JudgedSample, ReweightClass};
use crate::pairs::{PairClass, PairTotals};
use crate::sampler::SampleDesign;

pub const DEFAULT_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedStats {
    pub mean: f64,
    pub std_err: f64,
    pub effective_sample_size: f64,
    pub observations: u64,
}

/// Weighted mean and its standard error in effective-sample-size form.
///
/// Input is `(value, weight, copies)`; each copy is one observation. With
/// `μ = Σwx/Σw` and `n_eff = (Σw)²/Σw²`, the variance is
/// `Σw(x-μ)²/Σw · n_eff/(n_eff-1)` and the standard error `√(var/n_eff)`.
/// Unit weights reduce this to `s/√n` with the `n-1` sample deviation.
pub fn weighted_sample_stats<I>(values: I) -> Result<WeightedStats>
where
    I: IntoIterator<Item = (f64, f64, u64)>,
{
    let values: Vec<(f64, f64, f64)> = values
        .into_iter()
        .map(|(x, w, c)| (x, w, c as f64))
        .collect();
    let (mut sw, mut sw2, mut swx) = (0.0, 0.0, 0.0);
    let mut observations = 0u64;
    for &(x, w, c) in &values {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "observation weight {w} must be positive"
            )));
        }
        sw += c * w;
        sw2 += c * w * w;
        swx += c * w * x;
        observations += c as u64;
    }
    if observations == 0 {
        return Err(Error::EmptySample);
    }
    let mean = swx / sw;
    let n_eff = sw * sw / sw2;
    let dev: f64 = values
        .iter()
        .map(|&(x, w, c)| c * w * (x - mean) * (x - mean))
        .sum::<f64>()
        / sw;
    let std_err = if n_eff > 1.0 {
        (dev * n_eff / (n_eff - 1.0) / n_eff).sqrt()
    } else {
        0.0
    };
    Ok(WeightedStats {
        mean,
        std_err,
        effective_sample_size: n_eff,
        observations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub metric: String,
    pub point: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_draws: u64,
    pub n_usable: u64,
    pub effective_sample_size: f64,
    pub multiplier: f64,
    pub reweights: BTreeMap<ReweightClass, f64>,
    pub notes: Vec<String>,
}

impl EstimateReport {
    fn set_ci(&mut self, z: f64) {
        self.ci_low = self.point - z * self.std_err;
        self.ci_high = self.point + z * self.std_err;
    }

    /// `c · X`, with `StdErr(c · X) = c · StdErr(X)`.
    pub fn scaled(&self, metric: &str, c: f64, z: f64) -> EstimateReport {
        let mut out = self.clone();
        out.metric = metric.to_string();
        out.point *= c;
        out.std_err *= c.abs();
        out.multiplier *= c;
        out.set_ci(z);
        out
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub z: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { z: DEFAULT_Z }
    }
}

struct Observations {
    values: Vec<(f64, f64, u64)>,
    n_draws: u64,
    reweights: BTreeMap<ReweightClass, f64>,
}

fn collect<F, V>(js: &JudgedSample, keep: F, value: V) -> Result<Observations>
where
    F: Fn(PairClass) -> bool,
    V: Fn(&crate::pairs::ItemPair, bool) -> f64,
{
    let mut n_draws = 0;
    let mut reweights = BTreeMap::new();
    for d in js.sample.draws.iter().filter(|d| keep(d.pair.class)) {
        n_draws += d.count;
        let class = ReweightClass::of(&d.pair);
        match js.reweight(class) {
            Some(f) => {
                reweights.insert(class, f);
            }
            None => return Err(Error::UnestimableClass(class.to_string())),
        }
    }
    let values = js
        .usable()
        .filter(|(d, _, _)| keep(d.pair.class))
        .map(|(d, eq, w)| (value(&d.pair, eq), w / d.count as f64, d.count))
        .collect();
    Ok(Observations {
        values,
        n_draws,
        reweights,
    })
}

fn report(metric: &str, obs: Observations, total: f64, z: f64) -> Result<EstimateReport> {
    let mut notes = Vec::new();
    let (point, std_err, n_usable, ess) = if total == 0.0 {
        notes.push("class total is zero".to_string());
        (0.0, 0.0, 0, 0.0)
    } else {
        if obs.n_draws == 0 {
            return Err(Error::UnestimableClass(format!(
                "{metric}: no draws in the required class"
            )));
        }
        let stats = weighted_sample_stats(obs.values)?;
        if stats.effective_sample_size <= 1.0 {
            notes.push("single observation; standard error not estimable".to_string());
        }
        (
            total * stats.mean,
            total * stats.std_err,
            stats.observations,
            stats.effective_sample_size,
        )
    };
    let mut r = EstimateReport {
        metric: metric.to_string(),
        point,
        std_err,
        ci_low: 0.0,
        ci_high: 0.0,
        n_draws: obs.n_draws,
        n_usable,
        effective_sample_size: ess,
        multiplier: total,
        reweights: obs.reweights,
        notes,
    };
    r.set_ci(z);
    Ok(r)
}

fn complement(good: &EstimateReport, metric: &str, z: f64) -> EstimateReport {
    let mut bad = good.clone();
    bad.metric = metric.to_string();
    bad.point = good.multiplier - good.point;
    bad.set_ci(z);
    bad
}

fn sum_reports(metric: &str, parts: [&EstimateReport; 2], z: f64) -> EstimateReport {
    let [a, b] = parts;
    let mut reweights = a.reweights.clone();
    reweights.extend(b.reweights.iter().map(|(k, v)| (*k, *v)));
    let mut r = EstimateReport {
        metric: metric.to_string(),
        point: a.point + b.point,
        std_err: a.std_err.hypot(b.std_err),
        ci_low: 0.0,
        ci_high: 0.0,
        n_draws: a.n_draws + b.n_draws,
        n_usable: a.n_usable + b.n_usable,
        effective_sample_size: a.effective_sample_size + b.effective_sample_size,
        multiplier: a.multiplier + b.multiplier,
        reweights,
        notes: a.notes.iter().chain(&b.notes).cloned().collect(),
    };
    r.set_ci(z);
    r
}

/// Good and Bad estimate for one class: `(good, bad)`.
pub fn estimate_class(
    js: &JudgedSample,
    totals: &PairTotals,
    class: PairClass,
    config: &EstimatorConfig,
) -> Result<(EstimateReport, EstimateReport)> {
    // Good splits separate non-equivalent items; good merges and stable
    // pairs join equivalent ones.
    let good_when_eq = class != PairClass::Split;
    let obs = collect(
        js,
        |c| c == class,
        |_, eq| if eq == good_when_eq { 1.0 } else { 0.0 },
    )?;
    let (good, bad) = match class {
        PairClass::Split => ("good_split_distance", "bad_split_distance"),
        PairClass::Merge => ("good_merge_distance", "bad_merge_distance"),
        PairClass::Stable => ("affected_good_index", "affected_bad_index"),
    };
    let g = report(good, obs, totals.class_total(class), config.z)?;
    let b = complement(&g, bad, config.z);
    Ok((g, b))
}

/// Good/Bad split and merge distances plus their sums, in that order:
/// GoodSplit, BadSplit, GoodMerge, BadMerge, GoodDistance, BadDistance.
pub fn estimate_distance_quality(
    js: &JudgedSample,
    totals: &PairTotals,
    config: &EstimatorConfig,
) -> Result<Vec<EstimateReport>> {
    let (gs, bs) = estimate_class(js, totals, PairClass::Split, config)?;
    let (gm, bm) = estimate_class(js, totals, PairClass::Merge, config)?;
    let gd = sum_reports("good_distance", [&gs, &gm], config.z);
    let bd = sum_reports("bad_distance", [&bs, &bm], config.z);
    Ok(vec![gs, bs, gm, bm, gd, bd])
}

/// AffectedGoodIndex and AffectedBadIndex.
pub fn estimate_index_quality(
    js: &JudgedSample,
    totals: &PairTotals,
    config: &EstimatorConfig,
) -> Result<Vec<EstimateReport>> {
    let (g, b) = estimate_class(js, totals, PairClass::Stable, config)?;
    Ok(vec![g, b])
}

/// Multiplier × weighted mean of `l · 𝟙(i ≡ j)` over all usable draws.
pub fn estimate_delta_precision(
    js: &JudgedSample,
    totals: &PairTotals,
    config: &EstimatorConfig,
) -> Result<EstimateReport> {
    let s = &js.sample;
    if s.design == SampleDesign::Drawn && !s.plan.is_single() {
        return Err(Error::StratifiedSampleUnsupported);
    }
    for class in PairClass::ALL {
        let drawn_from = s.stream.class_weight.get(&class).copied().unwrap_or(0.0);
        if totals.class_total(class) > 0.0 && drawn_from <= 0.0 {
            return Err(Error::SampleCoverage(format!(
                "the sample was not drawn from {class} pairs; ΔPrecision needs all pairs"
            )));
        }
    }
    let obs = collect(js, |_| true, |p, eq| if eq { p.l } else { 0.0 })?;
    report(
        "delta_precision",
        obs,
        totals.delta_precision_multiplier,
        config.z,
    )
}

/// One line of the estimate export; metrics that could not be estimated
/// carry the reason instead of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateLine {
    pub metric: String,
    pub point: Option<f64>,
    pub std_err: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_draws: u64,
    pub n_usable: u64,
    pub effective_sample_size: Option<f64>,
    pub multiplier: Option<f64>,
    pub reweights: BTreeMap<ReweightClass, f64>,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

impl From<&EstimateReport> for EstimateLine {
    fn from(r: &EstimateReport) -> Self {
        EstimateLine {
            metric: r.metric.clone(),
            point: Some(r.point),
            std_err: Some(r.std_err),
            ci_low: Some(r.ci_low),
            ci_high: Some(r.ci_high),
            n_draws: r.n_draws,
            n_usable: r.n_usable,
            effective_sample_size: Some(r.effective_sample_size),
            multiplier: Some(r.multiplier),
            reweights: r.reweights.clone(),
            notes: r.notes.clone(),
            unavailable: None,
        }
    }
}

impl EstimateLine {
    fn unavailable(metric: &str, err: &Error) -> Self {
        EstimateLine {
            metric: metric.to_string(),
            point: None,
            std_err: None,
            ci_low: None,
            ci_high: None,
            n_draws: 0,
            n_usable: 0,
            effective_sample_size: None,
            multiplier: None,
            reweights: BTreeMap::new(),
            notes: Vec::new(),
            unavailable: Some(err.to_string()),
        }
    }
}

/// Point estimates of the quality summary; `None` where unavailable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub affected_good_split_distance: Option<f64>,
    pub affected_bad_split_distance: Option<f64>,
    pub affected_good_merge_distance: Option<f64>,
    pub affected_bad_merge_distance: Option<f64>,
    pub affected_good_index: Option<f64>,
    pub affected_bad_index: Option<f64>,
    pub good_distance: Option<f64>,
    pub bad_distance: Option<f64>,
    pub overall_affected_good_index: Option<f64>,
    pub overall_affected_bad_index: Option<f64>,
    pub delta_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSuite {
    pub lines: Vec<EstimateLine>,
    pub summary: QualitySummary,
    pub class_reweights: BTreeMap<ReweightClass, ClassReweight>,
    pub flagged: Vec<FlaggedPair>,
}

impl EstimateSuite {
    pub fn line(&self, metric: &str) -> Option<&EstimateLine> {
        self.lines.iter().find(|l| l.metric == metric)
    }

    pub fn point(&self, metric: &str) -> Option<f64> {
        self.line(metric).and_then(|l| l.point)
    }
}

const DISTANCE_METRICS: [&str; 6] = [
    "good_split_distance",
    "bad_split_distance",
    "good_merge_distance",
    "bad_merge_distance",
    "good_distance",
    "bad_distance",
];

/// Every estimator, plus the affected-population expectations
/// (`overall · W / W_affected`, prefixed `affected.`).
///
/// `affected_scale` is `W / W_affected`, or 0 when nothing is affected.
pub fn estimate_all(
    js: &JudgedSample,
    totals: &PairTotals,
    affected_scale: f64,
    config: &EstimatorConfig,
) -> EstimateSuite {
    let mut lines = Vec::new();
    let mut summary = QualitySummary::default();
    let scaled = |r: &EstimateReport, lines: &mut Vec<EstimateLine>| {
        let name = format!("affected.{}", r.metric);
        let s = r.scaled(&name, affected_scale, config.z);
        lines.push(EstimateLine::from(&s));
        s.point
    };

    match estimate_distance_quality(js, totals, config) {
        Ok(reports) => {
            for r in &reports {
                lines.push(EstimateLine::from(r));
            }
            summary.good_distance = Some(reports[4].point);
            summary.bad_distance = Some(reports[5].point);
            summary.affected_good_split_distance = Some(scaled(&reports[0], &mut lines));
            summary.affected_bad_split_distance = Some(scaled(&reports[1], &mut lines));
            summary.affected_good_merge_distance = Some(scaled(&reports[2], &mut lines));
            summary.affected_bad_merge_distance = Some(scaled(&reports[3], &mut lines));
        }
        Err(e) => {
            // Retry per class so one unestimable class does not hide the other.
            for (class, names) in [
                (PairClass::Split, &DISTANCE_METRICS[0..2]),
                (PairClass::Merge, &DISTANCE_METRICS[2..4]),
            ] {
                match estimate_class(js, totals, class, config) {
                    Ok((g, b)) => {
                        lines.push(EstimateLine::from(&g));
                        lines.push(EstimateLine::from(&b));
                    }
                    Err(ce) => names
                        .iter()
                        .for_each(|n| lines.push(EstimateLine::unavailable(n, &ce))),
                }
            }
            for n in &DISTANCE_METRICS[4..] {
                lines.push(EstimateLine::unavailable(n, &e));
            }
        }
    }

    match estimate_index_quality(js, totals, config) {
        Ok(reports) => {
            lines.push(EstimateLine::from(&reports[0]));
            lines.push(EstimateLine::from(&reports[1]));
            summary.overall_affected_good_index = Some(reports[0].point);
            summary.overall_affected_bad_index = Some(reports[1].point);
            summary.affected_good_index = Some(scaled(&reports[0], &mut lines));
            summary.affected_bad_index = Some(scaled(&reports[1], &mut lines));
        }
        Err(e) => {
            lines.push(EstimateLine::unavailable("affected_good_index", &e));
            lines.push(EstimateLine::unavailable("affected_bad_index", &e));
        }
    }

    match estimate_delta_precision(js, totals, config) {
        Ok(r) => {
            summary.delta_precision = Some(r.point);
            lines.push(EstimateLine::from(&r));
        }
        Err(e) => lines.push(EstimateLine::unavailable("delta_precision", &e)),
    }

    EstimateSuite {
        lines,
        summary,
        class_reweights: js.class_reweights.clone(),
        flagged: js.flagged.clone(),
    }
}
