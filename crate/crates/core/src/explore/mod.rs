//! Local HTTP service over one session directory.
//!
//! Endpoints:
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/overview` | |
//! | GET | `/api/metrics/exact` | |
//! | GET | `/api/estimates` | |
//! | POST | `/api/slices/query` | [`SliceQuery`] |
//! | GET | `/api/tasks/next` | |
//! | POST | `/api/verdicts` | [`VerdictPost`] |
//! | GET | `/api/pairs/{i}/{j}` | |

pub mod queue;
pub mod slice;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_all, EstimateSuite, EstimatorConfig};
use crate::judgements::{
    apply_status, export_tasks, ingest_verdicts, ItemView, JudgementTask, TaskStatus, Verdict,
    VerdictValue,
};
use crate::metrics::{impact_report, overall_impact, OverallImpact, ReportRow};
use crate::model::{affected_partition, AffectedPartition, ClusteringPair};
use crate::pairs::{pair_at, PairRecord, PairTotals};
use crate::sampler::{SampleDesign, SampledPairSet, StratumSummary};
use crate::session::{affected_scale, Session};

pub use queue::{Clock, ManualClock, SystemClock, TaskQueue};
pub use slice::{slice, Predicate, SliceGroup, SliceQuery, SliceResult};

pub const DEFAULT_LEASE_SECONDS: u64 = 300;

struct Mutable {
    verdicts: Vec<Verdict>,
    queue: TaskQueue,
    cache: Option<(usize, EstimateSuite)>,
}

/// Everything the service reads, loaded once per process.
pub struct Explorer {
    session: Session,
    cp: ClusteringPair,
    partition: AffectedPartition,
    overall: OverallImpact,
    totals: PairTotals,
    sample: SampledPairSet,
    estimator: EstimatorConfig,
    clock: Box<dyn Clock>,
    state: Mutex<Mutable>,
}

impl Explorer {
    /// Loads a session; the verdict log is created when absent.
    pub fn load(session: Session, lease_seconds: u64, clock: Box<dyn Clock>) -> Result<Self> {
        let cp = session.clustering()?;
        let totals = session.totals()?;
        let sample = session.sample(&cp)?;
        session.ensure_verdict_log()?;
        let verdicts = session.verdicts()?;
        let mut tasks = export_tasks(&cp, &sample);
        apply_status(&cp, &mut tasks, &verdicts)?;
        let partition = affected_partition(&cp);
        let overall = overall_impact(&cp, &partition);
        let estimator = session.config()?.estimator.unwrap_or_default();
        Ok(Explorer {
            session,
            cp,
            partition,
            overall,
            totals,
            sample,
            estimator,
            clock,
            state: Mutex::new(Mutable {
                verdicts,
                queue: TaskQueue::new(tasks, lease_seconds),
                cache: None,
            }),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Mutable> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn overview(&self) -> Overview {
        let st = self.lock();
        Overview {
            impact: self.overall,
            affected_weight_fraction: self.overall.affected_weight_fraction(),
            totals: self.totals,
            sample: SampleOverview {
                draws: self.sample.total_draws(),
                distinct_pairs: self.sample.draws.len(),
                design: self.sample.design,
                strata: self.sample.strata.clone(),
            },
            tasks: TaskCounts {
                total: st.queue.tasks().len(),
                pending: st.queue.count(TaskStatus::Pending),
                answered: st.queue.count(TaskStatus::Answered),
                skipped: st.queue.count(TaskStatus::Skipped),
            },
            verdicts: st.verdicts.len(),
        }
    }

    pub fn exact(&self) -> ExactView {
        ExactView {
            impact: self.overall,
            totals: self.totals,
            rows: impact_report(&self.cp, &self.partition, false),
        }
    }

    /// Recomputed when the verdict log has grown since the last call.
    pub fn estimates(&self) -> Result<EstimateSuite> {
        let mut st = self.lock();
        let n = st.verdicts.len();
        if let Some((len, suite)) = &st.cache {
            if *len == n {
                return Ok(suite.clone());
            }
        }
        let js = ingest_verdicts(&self.cp, &self.sample, &st.verdicts)?;
        let suite = estimate_all(&js, &self.totals, affected_scale(&self.cp), &self.estimator);
        st.cache = Some((n, suite.clone()));
        Ok(suite)
    }

    pub fn slice(&self, query: &SliceQuery) -> Result<SliceResult> {
        slice::slice(&self.cp, &self.sample, query)
    }

    pub fn next_task(&self) -> Option<JudgementTask> {
        let now = self.clock.now();
        self.lock().queue.next(now)
    }

    /// Validates against the sample and the current log, then appends.
    pub fn post_verdict(&self, post: VerdictPost) -> Result<usize> {
        let verdict = Verdict {
            i: post.i,
            j: post.j,
            value: post.value,
            source: post.source.unwrap_or_else(|| "ui".to_string()),
            timestamp: post.timestamp.unwrap_or_else(|| self.clock.now()),
        };
        let mut st = self.lock();
        st.verdicts.push(verdict.clone());
        if let Err(e) = ingest_verdicts(&self.cp, &self.sample, &st.verdicts) {
            st.verdicts.pop();
            return Err(e);
        }
        if let Err(e) = self.session.append_verdict(&verdict) {
            st.verdicts.pop();
            return Err(e);
        }
        let status = if verdict.value == VerdictValue::Unknown {
            TaskStatus::Skipped
        } else {
            TaskStatus::Answered
        };
        st.queue.resolve(&verdict.i, &verdict.j, status);
        Ok(st.verdicts.len())
    }

    pub fn pair(&self, i: &str, j: &str) -> Result<PairDetail> {
        let (a, b) = (self.cp.ix(i)?, self.cp.ix(j)?);
        let pair = pair_at(&self.cp, a, b).ok_or_else(|| Error::NotAPair {
            i: i.to_string(),
            j: j.to_string(),
        })?;
        let draw_count = self
            .sample
            .draws
            .iter()
            .filter(|d| d.pair.key() == (a, b))
            .map(|d| d.count)
            .sum();
        let ids = |members: &[crate::ItemIx]| -> Vec<String> {
            members
                .iter()
                .take(CONTEXT_LIMIT)
                .map(|&m| self.cp.id(m).to_string())
                .collect()
        };
        let st = self.lock();
        let verdicts = st
            .verdicts
            .iter()
            .filter(|v| (v.i == i && v.j == j) || (v.i == j && v.j == i))
            .cloned()
            .collect();
        Ok(PairDetail {
            pair: PairRecord::new(&self.cp, &pair),
            left: ItemView::new(&self.cp, a),
            right: ItemView::new(&self.cp, b),
            base_cluster_members: ids(self.cp.base_members(a)),
            exp_cluster_members: ids(self.cp.exp_members(a)),
            base_cluster_size: self.cp.base_members(a).len(),
            exp_cluster_size: self.cp.exp_members(a).len(),
            draw_count,
            verdicts,
        })
    }
}

const CONTEXT_LIMIT: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOverview {
    pub draws: u64,
    pub distinct_pairs: usize,
    pub design: SampleDesign,
    pub strata: Vec<StratumSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskCounts {
    pub total: usize,
    pub pending: usize,
    pub answered: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Overview {
    pub impact: OverallImpact,
    pub affected_weight_fraction: f64,
    pub totals: PairTotals,
    pub sample: SampleOverview,
    pub tasks: TaskCounts,
    pub verdicts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactView {
    pub impact: OverallImpact,
    pub totals: PairTotals,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictPost {
    pub i: String,
    pub j: String,
    pub value: VerdictValue,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDetail {
    pub pair: PairRecord,
    pub left: ItemView,
    pub right: ItemView,
    /// Base(i) and Exp(i) of the vantage item, truncated to 50 ids.
    pub base_cluster_members: Vec<String>,
    pub exp_cluster_members: Vec<String>,
    pub base_cluster_size: usize,
    pub exp_cluster_size: usize,
    pub draw_count: u64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            Error::UnknownPair { .. } => (StatusCode::CONFLICT, "unknown_pair"),
            Error::ConflictingVerdicts { .. } => (StatusCode::CONFLICT, "conflicting_verdicts"),
            Error::UnknownItem(_) => (StatusCode::NOT_FOUND, "unknown_item"),
            Error::NotAPair { .. } => (StatusCode::NOT_FOUND, "not_a_pair"),
            Error::UnknownAttributeKey(_) => (StatusCode::BAD_REQUEST, "unknown_attribute_key"),
            Error::InvalidParams(_) => (StatusCode::BAD_REQUEST, "invalid_params"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = ErrorBody {
            error: kind.to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<Explorer>;

async fn overview(State(x): State<Shared>) -> Json<Overview> {
    Json(x.overview())
}

async fn exact(State(x): State<Shared>) -> Json<ExactView> {
    Json(x.exact())
}

async fn estimates(State(x): State<Shared>) -> Result<Json<EstimateSuite>, ApiError> {
    Ok(Json(x.estimates()?))
}

async fn slice_query(
    State(x): State<Shared>,
    Json(q): Json<SliceQuery>,
) -> Result<Json<SliceResult>, ApiError> {
    Ok(Json(x.slice(&q)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<JudgementTask>,
}

async fn next_task(State(x): State<Shared>) -> Json<NextTask> {
    Json(NextTask {
        task: x.next_task(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerdictAck {
    pub accepted: bool,
    pub verdicts: usize,
}

async fn post_verdict(
    State(x): State<Shared>,
    Json(v): Json<VerdictPost>,
) -> Result<Json<VerdictAck>, ApiError> {
    let n = x.post_verdict(v)?;
    Ok(Json(VerdictAck {
        accepted: true,
        verdicts: n,
    }))
}

async fn pair_detail(
    State(x): State<Shared>,
    Path((i, j)): Path<(String, String)>,
) -> Result<Json<PairDetail>, ApiError> {
    Ok(Json(x.pair(&i, &j)?))
}

pub fn router(explorer: Shared) -> Router {
    Router::new()
        .route("/api/overview", get(overview))
        .route("/api/metrics/exact", get(exact))
        .route("/api/estimates", get(estimates))
        .route("/api/slices/query", post(slice_query))
        .route("/api/tasks/next", get(next_task))
        .route("/api/verdicts", post(post_verdict))
        .route("/api/pairs/{i}/{j}", get(pair_detail))
        .with_state(explorer)
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(explorer: Explorer, addr: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| Error::PortUnavailable {
            addr: addr.to_string(),
            source,
        })?;
    let local: SocketAddr = listener.local_addr()?;
    log::info!(
        "serving {} on http://{local}",
        explorer.session.root().display()
    );
    axum::serve(listener, router(Arc::new(explorer)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
