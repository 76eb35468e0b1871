//! Monte-Carlo calibration: repeated sample + synthetic judge + estimate on a
//! fixed instance, compared against the oracle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::{estimate_all, EstimatorConfig};
use crate::judgements::{export_tasks, ingest_verdicts, synthetic_judge};
use crate::model::affected_partition;
use crate::oracle::{
    exact_metrics, generate_instance, GeneratorParams, OverallExact, SyntheticInstance,
};
use crate::pairs::{enumerate_pairs, pair_totals, ItemPair};
use crate::sampler::{sample, SamplePlan};

/// Metrics checked by default.
pub const CALIBRATED_METRICS: [&str; 4] = [
    "good_split_distance",
    "good_merge_distance",
    "affected_good_index",
    "delta_precision",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub repetitions: usize,
    pub draws: u64,
    pub seed: u64,
    pub unanswerable_rate: f64,
    pub z: f64,
    pub oracle_limit: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            repetitions: 1000,
            draws: 500,
            seed: 1,
            unanswerable_rate: 0.0,
            z: crate::estimator::DEFAULT_Z,
            oracle_limit: crate::oracle::DEFAULT_ORACLE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCalibration {
    pub metric: String,
    pub exact: f64,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    /// Standard error of the mean over repetitions.
    pub sem: Option<f64>,
    pub bias: Option<f64>,
    pub bias_within_3_sem: Option<bool>,
    /// `None` when fewer than two repetitions ran.
    pub coverage: Option<f64>,
    pub estimated_reps: usize,
    pub unavailable_reps: usize,
}

impl MetricCalibration {
    /// Mean within 3 SEM and, when `band` is given, coverage inside it.
    pub fn passes(&self, band: Option<(f64, f64)>) -> bool {
        let bias_ok = self.bias_within_3_sem == Some(true);
        let cover_ok = match (band, self.coverage) {
            (None, _) => true,
            (Some((lo, hi)), Some(c)) => lo <= c && c <= hi,
            (Some(_), None) => false,
        };
        bias_ok && cover_ok && self.unavailable_reps == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub params: GeneratorParams,
    pub config: CalibrationConfig,
    pub items: usize,
    pub pairs: usize,
    /// Set when the instance has no affected items, so every quality metric
    /// is trivially 0.
    pub degenerate: bool,
    pub exact: OverallExact,
    pub metrics: Vec<MetricCalibration>,
}

impl CalibrationReport {
    pub fn metric(&self, name: &str) -> Option<&MetricCalibration> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn summarize(metric: &str, exact: f64, outcomes: &[Option<(f64, bool)>]) -> MetricCalibration {
    let got: Vec<(f64, bool)> = outcomes.iter().flatten().copied().collect();
    let n = got.len();
    let unavailable = outcomes.len() - n;
    if n == 0 {
        return MetricCalibration {
            metric: metric.to_string(),
            exact,
            mean: None,
            std_dev: None,
            sem: None,
            bias: None,
            bias_within_3_sem: None,
            coverage: None,
            estimated_reps: 0,
            unavailable_reps: unavailable,
        };
    }
    let mean = got.iter().map(|g| g.0).sum::<f64>() / n as f64;
    let (sd, sem) = if n > 1 {
        let var = got.iter().map(|g| (g.0 - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var.sqrt(), (var / n as f64).sqrt())
    } else {
        (0.0, 0.0)
    };
    let bias = mean - exact;
    // A zero SEM only passes when the estimates are exact.
    let within = bias.abs() <= 3.0 * sem + 1e-12;
    let coverage = (n > 1).then(|| got.iter().filter(|g| g.1).count() as f64 / n as f64);
    MetricCalibration {
        metric: metric.to_string(),
        exact,
        mean: Some(mean),
        std_dev: Some(sd),
        sem: Some(sem),
        bias: Some(bias),
        bias_within_3_sem: Some(within),
        coverage,
        estimated_reps: n,
        unavailable_reps: unavailable,
    }
}

/// Runs the calibration loop on an existing instance.
pub fn calibrate(
    instance: &SyntheticInstance,
    config: &CalibrationConfig,
) -> Result<CalibrationReport> {
    let cp = &instance.cp;
    let exact = exact_metrics(cp, &instance.truth, config.oracle_limit)?.overall;
    let partition = affected_partition(cp);
    let totals = pair_totals(cp, &partition);
    let scale = if partition.affected_weight > 0.0 {
        cp.total_weight() / partition.affected_weight
    } else {
        0.0
    };
    let pairs: Vec<ItemPair> = enumerate_pairs(cp, &partition).collect();
    let estimator = EstimatorConfig { z: config.z };
    let degenerate = partition.affected.is_empty();

    let per_rep: Vec<Vec<Option<(f64, bool)>>> = if degenerate {
        Vec::new()
    } else {
        (0..config.repetitions)
            .into_par_iter()
            .map(|rep| -> Result<Vec<Option<(f64, bool)>>> {
                let seed = rep_seed(config.seed, rep);
                let s = sample(
                    pairs.iter().copied(),
                    &SamplePlan::single(config.draws, seed),
                )?;
                let tasks = export_tasks(cp, &s);
                let verdicts = synthetic_judge(
                    cp,
                    &tasks,
                    &instance.truth,
                    config.unanswerable_rate,
                    seed ^ 0x5EED,
                    "synthetic",
                )?;
                let js = ingest_verdicts(cp, &s, &verdicts)?;
                let suite = estimate_all(&js, &totals, scale, &estimator);
                Ok(CALIBRATED_METRICS
                    .iter()
                    .map(|m| {
                        let line = suite.line(m)?;
                        let truth = exact.get(m).expect("calibrated metric has an exact value");
                        Some((line.point?, line.ci_low? <= truth && truth <= line.ci_high?))
                    })
                    .collect())
            })
            .collect::<Result<_>>()?
    };

    let metrics = CALIBRATED_METRICS
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let outcomes: Vec<Option<(f64, bool)>> = per_rep.iter().map(|r| r[k]).collect();
            let mut c = summarize(m, exact.get(m).unwrap_or(0.0), &outcomes);
            if degenerate {
                c.bias_within_3_sem = Some(exact.get(m) == Some(0.0));
            }
            c
        })
        .collect();
    Ok(CalibrationReport {
        params: instance.params,
        config: *config,
        items: cp.len(),
        pairs: pairs.len(),
        degenerate,
        exact,
        metrics,
    })
}

/// Generates the instance from `params` and calibrates on it.
pub fn simulate(params: &GeneratorParams, config: &CalibrationConfig) -> Result<CalibrationReport> {
    let instance = generate_instance(params)?;
    calibrate(&instance, config)
}
