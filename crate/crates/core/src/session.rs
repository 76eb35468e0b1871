//! Session directory layout and the pipeline stages that fill it.
//!
//! ```text
//! clustering.jsonl   joined clustering (item, base/exp cluster, weight, attributes)
//! impact.jsonl       exact impact rows
//! totals.json        pair class totals
//! pairs.jsonl        all pairs (optional)
//! sample.jsonl       sampled pairs with draw counts
//! sample_meta.json   sample plan, design, stratum totals
//! tasks.jsonl        judgement tasks
//! verdicts.jsonl     append-only verdict log
//! estimates.jsonl    estimate lines
//! reweights.jsonl    per-class reweights of the last estimate
//! config.json        parameters of the stages run so far
//! ```
//!
//! Every stage writes only its own files and is deterministic in its inputs.

use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_all, EstimateSuite, EstimatorConfig};
use crate::judgements::{
    apply_status, export_tasks, ingest_verdicts, synthetic_judge, ClassReweight, JudgedSample,
    JudgementTask, ReweightClass, Verdict,
};
use crate::metrics::impact_report;
use crate::model::{affected_partition, ClusteringPair, JoinedRecord};
use crate::oracle::TruthTable;
use crate::pairs::{enumerate_pairs, pair_totals, PairRecord, PairTotals};
use crate::records::{
    read_json_file, read_jsonl_file, write_json_file, write_jsonl, write_jsonl_file,
};
use crate::sampler::{sample, SampleMeta, SamplePlan, SampleRecord, SampledPairSet};

pub const CLUSTERING: &str = "clustering.jsonl";
pub const IMPACT: &str = "impact.jsonl";
pub const TOTALS: &str = "totals.json";
pub const PAIRS: &str = "pairs.jsonl";
pub const SAMPLE: &str = "sample.jsonl";
pub const SAMPLE_META: &str = "sample_meta.json";
pub const TASKS: &str = "tasks.jsonl";
pub const VERDICTS: &str = "verdicts.jsonl";
pub const ESTIMATES: &str = "estimates.jsonl";
pub const REWEIGHTS: &str = "reweights.jsonl";
pub const CONFIG: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub unanswerable_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SamplePlan>,
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReweightRecord {
    pub class: ReweightClass,
    pub sampled_draws: u64,
    pub usable_draws: u64,
    pub reweight: Option<f64>,
}

impl ReweightRecord {
    fn new(class: ReweightClass, r: &ClassReweight) -> Self {
        ReweightRecord {
            class,
            sampled_draws: r.sampled_draws,
            usable_draws: r.usable_draws,
            reweight: r.factor(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    root: PathBuf,
}

impl Session {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Session { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::SessionIncomplete(p))
        }
    }

    pub fn config(&self) -> Result<SessionConfig> {
        let p = self.path(CONFIG);
        if p.is_file() {
            read_json_file(&p)
        } else {
            Ok(SessionConfig::default())
        }
    }

    fn update_config(&self, f: impl FnOnce(&mut SessionConfig)) -> Result<()> {
        let mut c = self.config()?;
        f(&mut c);
        write_json_file(&self.path(CONFIG), &c)
    }

    /// Creates the session from a clustering pair and writes the exact impact.
    pub fn init(&self, cp: &ClusteringPair) -> Result<PairTotals> {
        fs::create_dir_all(&self.root)?;
        write_jsonl_file(&self.path(CLUSTERING), &cp.joined_records())?;
        let partition = affected_partition(cp);
        write_jsonl_file(&self.path(IMPACT), &impact_report(cp, &partition, false))?;
        let totals = pair_totals(cp, &partition);
        write_json_file(&self.path(TOTALS), &totals)?;
        Ok(totals)
    }

    pub fn clustering(&self) -> Result<ClusteringPair> {
        let records: Vec<JoinedRecord> = read_jsonl_file(&self.require(CLUSTERING)?)?;
        ClusteringPair::from_joined(records)
    }

    pub fn totals(&self) -> Result<PairTotals> {
        read_json_file(&self.require(TOTALS)?)
    }

    /// Writes every pair with its attributes.
    pub fn write_pairs(&self, cp: &ClusteringPair) -> Result<u64> {
        let partition = affected_partition(cp);
        let file = fs::File::create(self.path(PAIRS))?;
        let mut out = BufWriter::new(file);
        let mut n = 0;
        for pair in enumerate_pairs(cp, &partition) {
            write_jsonl(&mut out, [&PairRecord::new(cp, &pair)])?;
            n += 1;
        }
        out.flush()?;
        Ok(n)
    }

    pub fn run_sample(&self, cp: &ClusteringPair, plan: &SamplePlan) -> Result<SampledPairSet> {
        let partition = affected_partition(cp);
        let s = sample(enumerate_pairs(cp, &partition), plan)?;
        self.save_sample(cp, &s)?;
        self.update_config(|c| {
            c.sample = Some(*plan);
            c.exhaustive = false;
        })?;
        Ok(s)
    }

    /// Lists every pair once, observed with weight `w`.
    pub fn run_exhaustive_sample(&self, cp: &ClusteringPair) -> Result<SampledPairSet> {
        let partition = affected_partition(cp);
        let s = SampledPairSet::exhaustive(enumerate_pairs(cp, &partition));
        self.save_sample(cp, &s)?;
        self.update_config(|c| {
            c.sample = None;
            c.exhaustive = true;
        })?;
        Ok(s)
    }

    fn save_sample(&self, cp: &ClusteringPair, s: &SampledPairSet) -> Result<()> {
        write_jsonl_file(&self.path(SAMPLE), &s.records(cp))?;
        write_json_file(&self.path(SAMPLE_META), &s.meta())
    }

    pub fn sample(&self, cp: &ClusteringPair) -> Result<SampledPairSet> {
        let records: Vec<SampleRecord> = read_jsonl_file(&self.require(SAMPLE)?)?;
        let meta: SampleMeta = read_json_file(&self.require(SAMPLE_META)?)?;
        SampledPairSet::from_records(cp, &records, meta)
    }

    pub fn run_tasks(&self, cp: &ClusteringPair, s: &SampledPairSet) -> Result<Vec<JudgementTask>> {
        let mut tasks = export_tasks(cp, s);
        if let Ok(verdicts) = self.verdicts() {
            apply_status(cp, &mut tasks, &verdicts)?;
        }
        write_jsonl_file(&self.path(TASKS), &tasks)?;
        Ok(tasks)
    }

    pub fn tasks(&self) -> Result<Vec<JudgementTask>> {
        read_jsonl_file(&self.require(TASKS)?)
    }

    /// Replaces the verdict log with synthetic verdicts from `truth`.
    pub fn run_synthetic_judge(
        &self,
        cp: &ClusteringPair,
        tasks: &[JudgementTask],
        truth: &TruthTable,
        config: JudgeConfig,
    ) -> Result<Vec<Verdict>> {
        let verdicts = synthetic_judge(
            cp,
            tasks,
            truth,
            config.unanswerable_rate,
            config.seed,
            "synthetic",
        )?;
        write_jsonl_file(&self.path(VERDICTS), &verdicts)?;
        self.update_config(|c| c.judge = Some(config))?;
        Ok(verdicts)
    }

    pub fn verdicts(&self) -> Result<Vec<Verdict>> {
        read_jsonl_file(&self.require(VERDICTS)?)
    }

    /// Creates an empty verdict log if there is none.
    pub fn ensure_verdict_log(&self) -> Result<()> {
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(VERDICTS))?;
        Ok(())
    }

    pub fn append_verdict(&self, verdict: &Verdict) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path(VERDICTS))?;
        let mut line = serde_json::to_vec(verdict)?;
        line.push(b'\n');
        f.write_all(&line)?;
        f.flush()?;
        Ok(())
    }

    pub fn judged(&self, cp: &ClusteringPair, s: &SampledPairSet) -> Result<JudgedSample> {
        ingest_verdicts(cp, s, &self.verdicts()?)
    }

    pub fn run_estimate(&self, config: &EstimatorConfig) -> Result<EstimateSuite> {
        let cp = self.clustering()?;
        let totals = self.totals()?;
        let s = self.sample(&cp)?;
        let js = self.judged(&cp, &s)?;
        let suite = estimate_all(&js, &totals, affected_scale(&cp), config);
        write_jsonl_file(&self.path(ESTIMATES), &suite.lines)?;
        let reweights: Vec<ReweightRecord> = suite
            .class_reweights
            .iter()
            .map(|(c, r)| ReweightRecord::new(*c, r))
            .collect();
        write_jsonl_file(&self.path(REWEIGHTS), &reweights)?;
        self.update_config(|c| c.estimator = Some(*config))?;
        Ok(suite)
    }
}

/// `W / W_affected`, or 0 without affected items.
pub fn affected_scale(cp: &ClusteringPair) -> f64 {
    let p = affected_partition(cp);
    if p.affected_weight > 0.0 {
        cp.total_weight() / p.affected_weight
    } else {
        0.0
    }
}
