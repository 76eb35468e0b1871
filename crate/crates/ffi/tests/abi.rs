use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use clusterdiff_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn c_path(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = cd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const TOY3: &str = r#"{"item_id":"a","base_cluster_id":"X","exp_cluster_id":"P"}
{"item_id":"b","base_cluster_id":"X","exp_cluster_id":"Q"}
{"item_id":"c","base_cluster_id":"Y","exp_cluster_id":"P"}
"#;

fn load_toy3(dir: &Path) -> *mut CdClustering {
    let path = dir.join("joined.jsonl");
    fs::write(&path, TOY3).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { cd_clustering_load_joined(c_path(&path).as_ptr(), &mut h) },
        CdStatus::Ok
    );
    assert!(!h.is_null());
    h
}

#[test]
fn toy3_metrics_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let h = load_toy3(dir.path());
    let mut n = 0;
    assert_eq!(unsafe { cd_clustering_item_count(h, &mut n) }, CdStatus::Ok);
    assert_eq!(n, 3);

    let mut o = CdOverallImpact::default();
    assert_eq!(unsafe { cd_overall_impact(h, &mut o) }, CdStatus::Ok);
    assert!((o.jaccard_distance - 5.0 / 9.0).abs() < 1e-12);
    assert!((o.split_distance - 5.0 / 18.0).abs() < 1e-12);
    assert_eq!(o.affected_items, 3);

    let mut m = CdItemImpact::default();
    assert_eq!(
        unsafe { cd_item_impact(h, c("a").as_ptr(), &mut m) },
        CdStatus::Ok
    );
    assert!((m.jaccard_distance - 2.0 / 3.0).abs() < 1e-12);

    let mut t = CdPairTotals::default();
    assert_eq!(unsafe { cd_pair_totals(h, &mut t) }, CdStatus::Ok);
    assert!((t.stable_total - 4.0 / 9.0).abs() < 1e-12);
    assert!((t.delta_precision_multiplier - 1.0).abs() < 1e-12);
    unsafe { cd_clustering_free(h) };
}

#[test]
fn sample_write_and_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let h = load_toy3(dir.path());
    let plan = CdSamplePlan {
        total_draws: 200,
        seed: 7,
        stratified: false,
        diff_fraction: 0.0,
        weight_floor: 0.0,
    };
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { cd_sample(h, &plan, &mut s) }, CdStatus::Ok);
    let mut pairs = 0;
    assert_eq!(unsafe { cd_sample_pair_count(s, &mut pairs) }, CdStatus::Ok);
    assert_eq!(pairs, 7);

    let (sp, mp) = (
        dir.path().join("sample.jsonl"),
        dir.path().join("sample_meta.json"),
    );
    assert_eq!(
        unsafe { cd_sample_write(h, s, c_path(&sp).as_ptr(), c_path(&mp).as_ptr()) },
        CdStatus::Ok
    );
    assert_eq!(fs::read_to_string(&sp).unwrap().lines().count(), 7);

    let verdicts = dir.path().join("verdicts.jsonl");
    fs::write(
        &verdicts,
        "{\"i\":\"a\",\"j\":\"b\",\"value\":\"equivalent\",\"source\":\"t\"}\n\
         {\"i\":\"c\",\"j\":\"a\",\"value\":\"not_equivalent\",\"source\":\"t\"}\n",
    )
    .unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { cd_estimate_json(h, s, c_path(&verdicts).as_ptr(), 1.96, &mut json) },
        CdStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { cd_string_free(json) };
    let lines: Vec<serde_json::Value> = serde_json::from_str(&text).unwrap();
    let point = |name: &str| {
        lines.iter().find(|l| l["metric"] == name).unwrap()["point"]
            .as_f64()
            .unwrap()
    };
    // Every split is bad and every merge is bad, whatever the draw counts.
    assert!((point("bad_distance") - 5.0 / 9.0).abs() < 1e-12);
    assert_eq!(point("good_distance"), 0.0);
    assert!((point("affected_good_index") - 4.0 / 9.0).abs() < 1e-12);

    unsafe {
        cd_sample_free(s);
        cd_clustering_free(h);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = ptr::null_mut();
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(
        unsafe { cd_clustering_load_joined(c_path(&missing).as_ptr(), &mut h) },
        CdStatus::Io
    );
    assert!(h.is_null());
    assert!(!last_error().is_empty());

    assert_eq!(
        unsafe { cd_clustering_load_joined(ptr::null(), &mut h) },
        CdStatus::NullArgument
    );
    assert!(last_error().contains("path"));

    let bad = dir.path().join("bad.jsonl");
    fs::write(
        &bad,
        "{\"item_id\":\"a\",\"base_cluster_id\":\"X\",\"exp_cluster_id\":\"P\",\"weight\":-1}\n",
    )
    .unwrap();
    assert_eq!(
        unsafe { cd_clustering_load_joined(c_path(&bad).as_ptr(), &mut h) },
        CdStatus::InvalidInput
    );

    let h = load_toy3(dir.path());
    assert!(cd_last_error().is_null());
    let mut m = CdItemImpact::default();
    assert_eq!(
        unsafe { cd_item_impact(h, c("zz").as_ptr(), &mut m) },
        CdStatus::NotFound
    );

    let plan = CdSamplePlan {
        total_draws: 10,
        seed: 0,
        stratified: true,
        diff_fraction: 1.5,
        weight_floor: 0.0,
    };
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { cd_sample(h, &plan, &mut s) },
        CdStatus::InvalidInput
    );
    assert!(s.is_null());

    let plan = CdSamplePlan {
        diff_fraction: 0.5,
        ..plan
    };
    assert_eq!(unsafe { cd_sample(h, &plan, &mut s) }, CdStatus::Ok);
    let verdicts = dir.path().join("v.jsonl");
    fs::write(
        &verdicts,
        "{\"i\":\"a\",\"j\":\"zz\",\"value\":\"equivalent\",\"source\":\"t\"}\n",
    )
    .unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { cd_estimate_json(h, s, c_path(&verdicts).as_ptr(), 1.96, &mut json) },
        CdStatus::NotFound
    );
    assert!(json.is_null());
    unsafe {
        cd_sample_free(s);
        cd_clustering_free(h);
        cd_clustering_free(ptr::null_mut());
        cd_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(cd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/clusterdiff.h");
    let text = fs::read_to_string(&header).unwrap();
    for f in [
        "cd_clustering_load",
        "cd_sample",
        "cd_estimate_json",
        "cd_last_error",
        "CD_STATUS_OK",
    ] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler found, skipping syntax check");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
