//! C ABI over the clusterdiff library.
//!
//! Every function returns a [`CdStatus`]. On failure the message is kept per
//! thread and can be read with [`cd_last_error`]. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use clusterdiff::estimator::{estimate_all, EstimatorConfig};
use clusterdiff::judgements::{ingest_verdicts, Verdict};
use clusterdiff::model::{affected_partition, AffectedPartition, ClusteringPair};
use clusterdiff::pairs::{enumerate_pairs, pair_totals};
use clusterdiff::records::{read_jsonl_file, write_json_file, write_jsonl_file};
use clusterdiff::sampler::{sample, SamplePlan, SampledPairSet};
use clusterdiff::session::affected_scale;
use clusterdiff::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidInput = 5,
    NotFound = 6,
    Conflict = 7,
    Unestimable = 8,
    Panic = 99,
}

impl From<&Error> for CdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io(_) => CdStatus::Io,
            Error::Parse { .. } | Error::Json(_) => CdStatus::Parse,
            Error::UnknownItem(_)
            | Error::UnknownPair { .. }
            | Error::NotAPair { .. }
            | Error::UnknownAttributeKey(_)
            | Error::SessionIncomplete(_) => CdStatus::NotFound,
            Error::ConflictingVerdicts { .. } => CdStatus::Conflict,
            Error::UnestimableClass(_)
            | Error::StratifiedSampleUnsupported
            | Error::SampleCoverage(_)
            | Error::EmptySample => CdStatus::Unestimable,
            _ => CdStatus::InvalidInput,
        }
    }
}

/// A loaded Base/Exp clustering pair.
pub struct CdClustering {
    cp: ClusteringPair,
    partition: AffectedPartition,
}

/// A drawn pair sample, tied to the clustering it was drawn from.
pub struct CdSample {
    set: SampledPairSet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdOverallImpact {
    pub jaccard_distance: f64,
    pub split_distance: f64,
    pub merge_distance: f64,
    pub jaccard_index: f64,
    pub affected_jaccard_index: f64,
    pub unaffected_jaccard_index: f64,
    pub total_weight: f64,
    pub affected_weight: f64,
    pub affected_items: u64,
    pub items: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdItemImpact {
    pub jaccard_distance: f64,
    pub split_distance: f64,
    pub merge_distance: f64,
    pub jaccard_index: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CdPairTotals {
    pub split_total: f64,
    pub merge_total: f64,
    pub stable_total: f64,
    pub delta_precision_multiplier: f64,
}

/// Sampling parameters. With `stratified` false all draws come from one
/// stratum and `diff_fraction` is ignored.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CdSamplePlan {
    pub total_draws: u64,
    pub seed: u64,
    pub stratified: bool,
    pub diff_fraction: f64,
    pub weight_floor: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(CdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(CdStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Fail>;

fn guard<F: FnOnce() -> FfiResult<()>>(f: F) -> CdStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Fail(CdStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref()
        .ok_or_else(|| Fail(CdStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut()
        .ok_or_else(|| Fail(CdStatus::NullArgument, format!("{name} is null")))
}

fn clustering_handle(cp: ClusteringPair) -> *mut CdClustering {
    let partition = affected_partition(&cp);
    Box::into_raw(Box::new(CdClustering { cp, partition }))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn cd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads Base and Exp from two cluster JSONL files.
///
/// # Safety
/// Paths must be null or NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_clustering_load(
    base_path: *const c_char,
    exp_path: *const c_char,
    out: *mut *mut CdClustering,
) -> CdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let base = read_jsonl_file(Path::new(str_arg(base_path, "base_path")?))?;
        let exp = read_jsonl_file(Path::new(str_arg(exp_path, "exp_path")?))?;
        *out = clustering_handle(ClusteringPair::from_records(base, exp)?);
        Ok(())
    })
}

/// Loads Base and Exp from one joined JSONL file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_clustering_load_joined(
    path: *const c_char,
    out: *mut *mut CdClustering,
) -> CdStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let records = read_jsonl_file(Path::new(str_arg(path, "path")?))?;
        *out = clustering_handle(ClusteringPair::from_joined(records)?);
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from a `cd_clustering_load*` call.
#[no_mangle]
pub unsafe extern "C" fn cd_clustering_free(handle: *mut CdClustering) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live clustering handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_clustering_item_count(
    handle: *const CdClustering,
    out: *mut u64,
) -> CdStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(handle, "handle")?.cp.len() as u64;
        Ok(())
    })
}

/// # Safety
/// `handle` must be a live clustering handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_overall_impact(
    handle: *const CdClustering,
    out: *mut CdOverallImpact,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(handle, "handle")?;
        let o = clusterdiff::metrics::overall_impact(&h.cp, &h.partition);
        *out_arg(out, "out")? = CdOverallImpact {
            jaccard_distance: o.jaccard_distance,
            split_distance: o.split_distance,
            merge_distance: o.merge_distance,
            jaccard_index: o.jaccard_index,
            affected_jaccard_index: o.affected_jaccard_index,
            unaffected_jaccard_index: o.unaffected_jaccard_index,
            total_weight: o.total_weight,
            affected_weight: o.affected_weight,
            affected_items: o.affected_items as u64,
            items: o.items as u64,
        };
        Ok(())
    })
}

/// # Safety
/// `handle` must be a live clustering handle, `item_id` a NUL-terminated
/// string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_item_impact(
    handle: *const CdClustering,
    item_id: *const c_char,
    out: *mut CdItemImpact,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(handle, "handle")?;
        let m = clusterdiff::metrics::item_impact(&h.cp, str_arg(item_id, "item_id")?)?;
        *out_arg(out, "out")? = CdItemImpact {
            jaccard_distance: m.jaccard_distance,
            split_distance: m.split_distance,
            merge_distance: m.merge_distance,
            jaccard_index: m.jaccard_index,
        };
        Ok(())
    })
}

/// # Safety
/// `handle` must be a live clustering handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_pair_totals(
    handle: *const CdClustering,
    out: *mut CdPairTotals,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(handle, "handle")?;
        let t = pair_totals(&h.cp, &h.partition);
        *out_arg(out, "out")? = CdPairTotals {
            split_total: t.split_total,
            merge_total: t.merge_total,
            stable_total: t.stable_total,
            delta_precision_multiplier: t.delta_precision_multiplier,
        };
        Ok(())
    })
}

/// Draws a weighted pair sample.
///
/// # Safety
/// `handle` must be a live clustering handle, `plan` readable and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cd_sample(
    handle: *const CdClustering,
    plan: *const CdSamplePlan,
    out: *mut *mut CdSample,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(handle, "handle")?;
        let p = ref_arg(plan, "plan")?;
        let out = out_arg(out, "out")?;
        let plan = if p.stratified {
            SamplePlan::with_diff_fraction(p.total_draws, p.diff_fraction, p.seed)?
        } else {
            SamplePlan::single(p.total_draws, p.seed)
        }
        .with_weight_floor(p.weight_floor);
        let set = sample(enumerate_pairs(&h.cp, &h.partition), &plan)?;
        *out = Box::into_raw(Box::new(CdSample { set }));
        Ok(())
    })
}

/// # Safety
/// `handle` must be null or come from `cd_sample`.
#[no_mangle]
pub unsafe extern "C" fn cd_sample_free(handle: *mut CdSample) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of distinct sampled pairs.
///
/// # Safety
/// `sample` must be a live sample handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cd_sample_pair_count(sample: *const CdSample, out: *mut u64) -> CdStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(sample, "sample")?.set.draws.len() as u64;
        Ok(())
    })
}

/// Writes `sample.jsonl` records to `path` and the sample metadata to
/// `meta_path`.
///
/// # Safety
/// Handles must be live, the sample drawn from `clustering`, and the paths
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn cd_sample_write(
    clustering: *const CdClustering,
    sample: *const CdSample,
    path: *const c_char,
    meta_path: *const c_char,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(clustering, "clustering")?;
        let s = ref_arg(sample, "sample")?;
        write_jsonl_file(Path::new(str_arg(path, "path")?), &s.set.records(&h.cp))?;
        write_json_file(Path::new(str_arg(meta_path, "meta_path")?), &s.set.meta())?;
        Ok(())
    })
}

/// Estimates every metric from the verdict JSONL file at `verdicts_path`.
/// On success `*out_json` holds a JSON array of estimate lines; release it
/// with [`cd_string_free`].
///
/// # Safety
/// Handles must be live, the sample drawn from `clustering`, the path a
/// NUL-terminated string and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn cd_estimate_json(
    clustering: *const CdClustering,
    sample: *const CdSample,
    verdicts_path: *const c_char,
    z: f64,
    out_json: *mut *mut c_char,
) -> CdStatus {
    guard(|| {
        let h = ref_arg(clustering, "clustering")?;
        let s = ref_arg(sample, "sample")?;
        let out = out_arg(out_json, "out_json")?;
        if !(z.is_finite() && z > 0.0) {
            return Err(Fail(
                CdStatus::InvalidInput,
                format!("z must be positive, got {z}"),
            ));
        }
        let verdicts: Vec<Verdict> =
            read_jsonl_file(Path::new(str_arg(verdicts_path, "verdicts_path")?))?;
        let js = ingest_verdicts(&h.cp, &s.set, &verdicts)?;
        let totals = pair_totals(&h.cp, &h.partition);
        let suite = estimate_all(&js, &totals, affected_scale(&h.cp), &EstimatorConfig { z });
        let json = serde_json::to_string(&suite.lines).map_err(Error::from)?;
        *out = CString::new(json)
            .map_err(|e| Fail(CdStatus::Panic, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn cd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
