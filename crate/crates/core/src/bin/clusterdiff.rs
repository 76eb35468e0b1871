use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use clusterdiff::estimator::EstimatorConfig;
use clusterdiff::explore::{self, Explorer, SystemClock};
use clusterdiff::metrics::impact_report;
use clusterdiff::model::{affected_partition, ClusterRecord, ClusteringPair, JoinedRecord};
use clusterdiff::oracle::{
    exact_metrics, generate_instance, GeneratorParams, TruthRecord, TruthTable,
};
use clusterdiff::records::{read_jsonl_file, write_jsonl, write_jsonl_file};
use clusterdiff::sampler::SamplePlan;
use clusterdiff::session::{JudgeConfig, Session};
use clusterdiff::simulate::{simulate, CalibrationConfig};

#[derive(Parser)]
#[command(
    name = "clusterdiff",
    version,
    about = "Compare two clusterings of the same weighted items"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact impact metrics; with --session-dir also starts a session.
    Impact(ImpactArgs),
    /// Write every pair with weight, label and attributes to pairs.jsonl.
    Pairs(SessionArgs),
    /// Draw a weighted sample of pairs.
    Sample(SampleArgs),
    /// Export judgement tasks for the sampled pairs.
    Tasks(SessionArgs),
    /// Answer every task from a truth file (replaces verdicts.jsonl).
    JudgeSynthetic(JudgeArgs),
    /// Estimate quality metrics from the verdict log.
    Estimate(EstimateArgs),
    /// Serve the session over HTTP.
    Explore(ExploreArgs),
    /// Repeated sample/judge/estimate runs against the exact values.
    Simulate(SimulateArgs),
    /// Write a synthetic instance (base, exp, joined and truth files).
    Generate(GenerateArgs),
    /// Exact quality metrics of a session under a complete truth file.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    session_dir: PathBuf,
}

#[derive(Args)]
struct ImpactArgs {
    #[arg(long, requires = "exp", conflicts_with = "joined")]
    base: Option<PathBuf>,
    #[arg(long, requires = "base")]
    exp: Option<PathBuf>,
    /// Joined file with item_id, base_cluster_id, exp_cluster_id per line.
    #[arg(long)]
    joined: Option<PathBuf>,
    #[arg(long)]
    session_dir: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_item: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrataArg {
    Single,
    DiffStable,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    session_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    draws: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "diff-stable")]
    strata: StrataArg,
    #[arg(long, default_value_t = 0.5)]
    diff_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_floor: f64,
    /// List every pair once with its weight instead of drawing.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    session_dir: PathBuf,
    /// Truth file with item_id and truth_class_id per line.
    #[arg(long, required_unless_present = "truth_attribute")]
    truth: Option<PathBuf>,
    /// Use an item attribute as the truth class instead.
    #[arg(long)]
    truth_attribute: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    unanswerable_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    session_dir: PathBuf,
    #[arg(long, default_value_t = clusterdiff::estimator::DEFAULT_Z)]
    z: f64,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    session_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value_t = explore::DEFAULT_LEASE_SECONDS)]
    lease_seconds: u64,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, default_value_t = 10_000)]
    items: usize,
    #[arg(long, default_value_t = GeneratorParams::default().max_class_size)]
    max_class_size: usize,
    #[arg(long, default_value_t = GeneratorParams::default().base_noise)]
    base_noise: f64,
    #[arg(long, default_value_t = GeneratorParams::default().split_rate)]
    split_rate: f64,
    #[arg(long, default_value_t = GeneratorParams::default().merge_rate)]
    merge_rate: f64,
    #[arg(long, default_value_t = GeneratorParams::default().good_fraction)]
    good_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    weight_spread: f64,
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
}

impl InstanceArgs {
    fn params(&self) -> GeneratorParams {
        GeneratorParams {
            items: self.items,
            max_class_size: self.max_class_size,
            base_noise: self.base_noise,
            split_rate: self.split_rate,
            merge_rate: self.merge_rate,
            good_fraction: self.good_fraction,
            weight_spread: self.weight_spread,
            seed: self.instance_seed,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 500)]
    draws: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    unanswerable_rate: f64,
    #[arg(long, default_value_t = clusterdiff::estimator::DEFAULT_Z)]
    z: f64,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    session_dir: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = clusterdiff::oracle::DEFAULT_ORACLE_LIMIT)]
    pair_limit: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_pair(args: &ImpactArgs) -> anyhow::Result<ClusteringPair> {
    match (&args.base, &args.exp, &args.joined) {
        (Some(b), Some(e), None) => {
            let base: Vec<ClusterRecord> = read_jsonl_file(b)?;
            let exp: Vec<ClusterRecord> = read_jsonl_file(e)?;
            Ok(ClusteringPair::from_records(base, exp)?)
        }
        (None, None, Some(j)) => {
            let rows: Vec<JoinedRecord> = read_jsonl_file(j)?;
            Ok(ClusteringPair::from_joined(rows)?)
        }
        _ => bail!("pass either --base and --exp, or --joined"),
    }
}

fn emit<T: serde::Serialize>(out: Option<&Path>, rows: &[T]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_jsonl_file(p, rows)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write_jsonl(&mut lock, rows)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn truth_table(
    cp: &ClusteringPair,
    file: Option<&Path>,
    attribute: Option<&str>,
) -> anyhow::Result<TruthTable> {
    match (file, attribute) {
        (Some(p), _) => {
            let records: Vec<TruthRecord> = read_jsonl_file(p)?;
            Ok(TruthTable::from_records(records)?)
        }
        (None, Some(key)) => Ok(TruthTable::from_attribute(cp, key)),
        (None, None) => bail!("pass --truth or --truth-attribute"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Impact(args) => {
            let cp = load_pair(&args)?;
            if let Some(dir) = &args.session_dir {
                Session::open(dir).init(&cp)?;
            }
            let rows = impact_report(&cp, &affected_partition(&cp), args.per_item);
            emit(args.out.as_deref(), &rows)?;
        }
        Command::Pairs(args) => {
            let s = Session::open(&args.session_dir);
            let cp = s.clustering()?;
            let n = s.write_pairs(&cp)?;
            log::info!("wrote {n} pairs");
        }
        Command::Sample(args) => {
            let s = Session::open(&args.session_dir);
            let cp = s.clustering()?;
            let set = if args.exhaustive {
                s.run_exhaustive_sample(&cp)?
            } else {
                if args.draws == 0 {
                    log::warn!("--draws 0 gives an empty sample");
                }
                let plan = match args.strata {
                    StrataArg::Single => SamplePlan::single(args.draws, args.seed),
                    StrataArg::DiffStable => {
                        SamplePlan::with_diff_fraction(args.draws, args.diff_fraction, args.seed)?
                    }
                }
                .with_weight_floor(args.weight_floor);
                s.run_sample(&cp, &plan)?
            };
            log::info!(
                "{} draws over {} distinct pairs",
                set.total_draws(),
                set.draws.len()
            );
        }
        Command::Tasks(args) => {
            let s = Session::open(&args.session_dir);
            let cp = s.clustering()?;
            let set = s.sample(&cp)?;
            let tasks = s.run_tasks(&cp, &set)?;
            log::info!("{} tasks", tasks.len());
        }
        Command::JudgeSynthetic(args) => {
            let s = Session::open(&args.session_dir);
            let cp = s.clustering()?;
            let truth = truth_table(&cp, args.truth.as_deref(), args.truth_attribute.as_deref())?;
            let tasks = s.tasks()?;
            let config = JudgeConfig {
                unanswerable_rate: args.unanswerable_rate,
                seed: args.seed,
            };
            let v = s.run_synthetic_judge(&cp, &tasks, &truth, config)?;
            log::info!("{} verdicts", v.len());
        }
        Command::Estimate(args) => {
            let s = Session::open(&args.session_dir);
            let suite = s.run_estimate(&EstimatorConfig { z: args.z })?;
            emit(None, &suite.lines)?;
        }
        Command::Explore(args) => {
            let s = Session::open(&args.session_dir);
            let explorer = Explorer::load(s, args.lease_seconds, Box::new(SystemClock))?;
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(explore::serve(explorer, &args.bind))?;
        }
        Command::Simulate(args) => {
            let config = CalibrationConfig {
                repetitions: args.reps,
                draws: args.draws,
                seed: args.seed,
                unanswerable_rate: args.unanswerable_rate,
                z: args.z,
                ..CalibrationConfig::default()
            };
            let report = simulate(&args.instance.params(), &config)?;
            emit(args.out.as_deref(), std::slice::from_ref(&report))?;
        }
        Command::Generate(args) => {
            let inst = generate_instance(&args.instance.params())?;
            std::fs::create_dir_all(&args.out_dir)?;
            let joined = inst.joined_records();
            let side = |exp: bool| -> Vec<ClusterRecord> {
                joined
                    .iter()
                    .map(|r| ClusterRecord {
                        item_id: r.item_id.clone(),
                        cluster_id: if exp {
                            r.exp_cluster_id.clone()
                        } else {
                            r.base_cluster_id.clone()
                        },
                        weight: r.weight,
                        attributes: r.attributes.clone(),
                    })
                    .collect()
            };
            write_jsonl_file(&args.out_dir.join("base.jsonl"), &side(false))?;
            write_jsonl_file(&args.out_dir.join("exp.jsonl"), &side(true))?;
            write_jsonl_file(&args.out_dir.join("joined.jsonl"), &joined)?;
            write_jsonl_file(&args.out_dir.join("truth.jsonl"), &inst.truth.records())?;
        }
        Command::Oracle(args) => {
            let s = Session::open(&args.session_dir);
            let cp = s.clustering()?;
            let truth = truth_table(&cp, Some(&args.truth), None)?;
            let exact = exact_metrics(&cp, &truth, args.pair_limit)?;
            emit(args.out.as_deref(), &exact.rows(&cp))?;
        }
    }
    Ok(())
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<io::Error>().or_else(|| {
            match c.downcast_ref::<clusterdiff::Error>() {
                Some(clusterdiff::Error::Io(io)) => Some(io),
                _ => None,
            }
        });
        io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed stdout (e.g. piped into `head`) is not a failure.
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
