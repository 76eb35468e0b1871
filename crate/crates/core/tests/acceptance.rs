//! Acceptance suite: one PASS/FAIL line per criterion.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num::{BigInt, BigRational, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clusterdiff::estimator::{estimate_all, EstimatorConfig};
use clusterdiff::judgements::{
    export_tasks, ingest_verdicts, reflexive_verdicts, synthetic_judge, ClassReweight,
    ReweightClass, Verdict, VerdictValue,
};
use clusterdiff::metrics::{affected_index_split, lift, overall_impact, quality_at};
use clusterdiff::model::{affected_partition, ClusteringPair, ItemIx, JoinedRecord, Side};
use clusterdiff::oracle::{
    exact_metrics, generate_instance, GeneratorParams, TruthRecord, TruthTable,
};
use clusterdiff::pairs::{enumerate_pairs, pair_totals, PairClass};
use clusterdiff::records::write_jsonl;
use clusterdiff::sampler::{sample, SamplePlan, SampledPairSet};
use clusterdiff::session::affected_scale;
use clusterdiff::simulate::{calibrate, CalibrationConfig, CalibrationReport, CALIBRATED_METRICS};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn joined(base: &[usize], exp: &[usize], weights: &[f64]) -> Vec<JoinedRecord> {
    (0..base.len())
        .map(|k| JoinedRecord {
            item_id: format!("i{k:03}"),
            base_cluster_id: format!("b{}", base[k]),
            exp_cluster_id: format!("e{}", exp[k]),
            weight: weights[k],
            attributes: Default::default(),
        })
        .collect()
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = rng.random_range(1..=n);
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(1..=20) as f64 / 4.0)
        .collect()
}

fn truth_from_labels(labels: &[usize]) -> TruthTable {
    TruthTable::from_records(labels.iter().enumerate().map(|(k, t)| TruthRecord {
        item_id: format!("i{k:03}"),
        truth_class_id: format!("t{t}"),
    }))
    .unwrap()
}

/// Half generated instances, half independent random partitions.
fn random_instance(rng: &mut ChaCha8Rng, k: u64) -> (ClusteringPair, TruthTable) {
    if k.is_multiple_of(2) {
        let inst = generate_instance(&GeneratorParams {
            items: rng.random_range(2..=500),
            max_class_size: rng.random_range(1..=12),
            base_noise: rng.random_range(0.0..1.0),
            split_rate: rng.random_range(0.0..1.0),
            merge_rate: rng.random_range(0.0..1.0),
            good_fraction: rng.random_range(0.0..1.0),
            weight_spread: rng.random_range(1.0..10.0),
            seed: k,
        })
        .unwrap();
        (inst.cp, inst.truth)
    } else {
        let n = rng.random_range(1..=500);
        let (b, e, t, w) = (
            labels(rng, n),
            labels(rng, n),
            labels(rng, n),
            weights(rng, n),
        );
        (
            ClusteringPair::from_joined(joined(&b, &e, &w)).unwrap(),
            truth_from_labels(&t),
        )
    }
}

/// Every granularity: each item, each Base and Exp cluster, the affected
/// items, a random subset and T.
fn granularities(cp: &ClusteringPair, rng: &mut ChaCha8Rng) -> Vec<Vec<ItemIx>> {
    let all: Vec<ItemIx> = cp.indices().collect();
    let mut sets: Vec<Vec<ItemIx>> = all.iter().map(|&i| vec![i]).collect();
    for side in [Side::Base, Side::Exp] {
        let c = cp.side(side);
        sets.extend((0..c.len()).map(|k| c.members(k).to_vec()));
    }
    let affected: Vec<ItemIx> = all.iter().copied().filter(|&i| cp.is_affected(i)).collect();
    if !affected.is_empty() {
        sets.push(affected);
    }
    let subset: Vec<ItemIx> = all
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.5))
        .collect();
    if !subset.is_empty() {
        sets.push(subset);
    }
    sets.push(all);
    sets
}

fn decomposition_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checks = 0u64;
    let mut worst = 0.0f64;
    let tol = 1e-9;
    for k in 0..200 {
        let (cp, truth) = random_instance(&mut rng, k);
        let all: Vec<ItemIx> = cp.indices().collect();
        let rows: Vec<[f64; 15]> = all
            .iter()
            .map(|&ix| {
                let m = cp.impact(ix);
                let q = quality_at(&cp, ix, &truth).unwrap();
                let g = cp.geometry(ix);
                let dp = g.a * q.good_merge_distance + (g.a - g.b) * q.good_index
                    - g.b * q.bad_split_distance;
                [
                    m.jaccard_distance,
                    m.split_distance,
                    m.merge_distance,
                    m.jaccard_index,
                    q.good_split_distance,
                    q.bad_split_distance,
                    q.good_merge_distance,
                    q.bad_merge_distance,
                    q.good_index,
                    q.bad_index,
                    q.good_distance,
                    q.bad_distance,
                    q.delta_precision,
                    dp,
                    if cp.is_affected(ix) { 1.0 } else { 0.0 },
                ]
            })
            .collect();
        for set in granularities(&cp, &mut rng) {
            let l: Vec<f64> = (0..15)
                .map(|f| lift(&cp, &set, |ix| rows[ix.index()][f]).unwrap())
                .collect();
            let [jd, sd, md, ji, gs, bs, gm, bm, gi, bi, gd, bd, dp, dp_labels, _] = l[..] else {
                unreachable!()
            };
            let residuals = [
                jd - (sd + md),
                sd - (gs + bs),
                md - (gm + bm),
                ji - (gi + bi),
                gd - (gs + gm),
                bd - (bs + bm),
                jd + ji - 1.0,
                dp - dp_labels,
            ];
            for (e, r) in residuals.iter().enumerate() {
                worst = worst.max(r.abs());
                ensure!(
                    r.abs() <= tol,
                    "instance {k}, identity {e}: residual {r:e} over {} items",
                    set.len()
                );
            }
            checks += residuals.len() as u64;
        }

        // Affected/Unaffected split of the overall index.
        let p = affected_partition(&cp);
        let (aji, uji) = affected_index_split(&cp, &p);
        let o = overall_impact(&cp, &p);
        let w = cp.total_weight();
        let unaffected_fraction = (w - p.affected_weight) / w;
        ensure!(
            close(o.jaccard_index, aji + uji, tol),
            "instance {k}: JI(T) != AJI + UJI"
        );
        ensure!(
            close(uji, unaffected_fraction, tol),
            "instance {k}: UJI is not the unaffected weight ratio"
        );
        if p.affected_weight > 0.0 {
            let affected: Vec<ItemIx> =
                all.iter().copied().filter(|&i| cp.is_affected(i)).collect();
            let ji_aff = lift(&cp, &affected, |ix| rows[ix.index()][3]).unwrap();
            ensure!(
                close(ji_aff, w / p.affected_weight * aji, tol),
                "instance {k}: JI(Affected) rescaling"
            );
        }
        checks += 3;

        // The oracle's region and pair paths agree internally; its ΔP matches
        // the precision difference and the label algebra.
        let exact =
            exact_metrics(&cp, &truth, 2_000_000).map_err(|e| format!("instance {k}: {e}"))?;
        let dp_t = lift(&cp, &all, |ix| rows[ix.index()][12]).unwrap();
        let precision_delta = lift(&cp, &all, |ix| {
            let e = &exact.items[ix.index()];
            e.precision_exp - e.precision_base
        })
        .unwrap();
        ensure!(
            close(exact.overall.delta_precision, dp_t, tol),
            "instance {k}: oracle ΔP"
        );
        ensure!(
            close(precision_delta, dp_t, tol),
            "instance {k}: ΔP != ΔPrecision of precisions"
        );
        checks += 2;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!(
        "200 instances, {checks} identities, max residual {worst:.1e}, {elapsed:.1?}"
    ))
}

fn one_split_example() -> Outcome {
    let n = 1000;
    let base = vec![0; n];
    let mut exp = vec![0; n];
    exp[0] = 1;
    let cp = ClusteringPair::from_joined(joined(&base, &exp, &vec![1.0; n])).unwrap();
    let p = affected_partition(&cp);
    let (mut split, mut merge, mut stable, mut selfs) = (0u64, 0u64, 0u64, 0u64);
    for pair in enumerate_pairs(&cp, &p) {
        match pair.class {
            PairClass::Split => split += 1,
            PairClass::Merge => merge += 1,
            PairClass::Stable => stable += 1,
        }
        selfs += pair.is_self() as u64;
    }
    let total = split + merge + stable;
    ensure!(split == 1998, "split pairs {split}");
    ensure!(merge == 0, "merge pairs {merge}");
    ensure!(stable == 998_002, "stable pairs {stable}");
    ensure!(selfs == 1000, "self pairs {selfs}");
    ensure!(total == 1_000_000, "population {total}");
    // 0.1998% as an exact ratio: split / total == 1998 / 1_000_000.
    ensure!(split * 1_000_000 == 1998 * total, "share {split}/{total}");
    Ok(format!(
        "split {split}, stable {stable} ({selfs} self), share {split}/{total} = 0.1998%"
    ))
}

fn multiplier_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut instances: Vec<ClusteringPair> =
        (0..20).map(|k| random_instance(&mut rng, k).0).collect();
    instances.push(
        generate_instance(&GeneratorParams {
            items: 10_000,
            weight_spread: 4.0,
            ..GeneratorParams::default()
        })
        .unwrap()
        .cp,
    );
    let mut one_split = vec![0; 1000];
    one_split[0] = 1;
    instances.push(
        ClusteringPair::from_joined(joined(&vec![0; 1000], &one_split, &vec![1.0; 1000])).unwrap(),
    );
    let tol = 1e-9;
    let mut max_pairs = 0u64;
    for (k, cp) in instances.iter().enumerate() {
        let p = affected_partition(cp);
        let o = overall_impact(cp, &p);
        let t = pair_totals(cp, &p);
        let w = cp.total_weight();
        let mut sums = [0.0f64; 3];
        let mut pairs = 0u64;
        for pair in enumerate_pairs(cp, &p) {
            pairs += 1;
            let c = match pair.class {
                PairClass::Split => 0,
                PairClass::Merge => 1,
                PairClass::Stable => 2,
            };
            sums[c] += pair.w;
            // w·l equals the natural ΔPrecision weight of the pair.
            let (wi, wj) = (cp.weight(pair.i), cp.weight(pair.j));
            let natural = match pair.class {
                PairClass::Merge => wi * wj / (w * cp.exp_weight(pair.i)),
                PairClass::Split => -wi * wj / (w * cp.base_weight(pair.i)),
                PairClass::Stable => {
                    wi * wj / (w * cp.exp_weight(pair.i)) - wi * wj / (w * cp.base_weight(pair.i))
                }
            };
            ensure!(
                close(pair.w * pair.l, natural, 1e-12),
                "instance {k}: w·l mismatch"
            );
        }
        max_pairs = max_pairs.max(pairs);
        ensure!(pairs <= 2_000_000, "instance {k} has {pairs} pairs");
        ensure!(
            close(sums[0], o.split_distance, tol),
            "instance {k}: Σw splits {} vs {}",
            sums[0],
            o.split_distance
        );
        ensure!(
            close(sums[1], o.merge_distance, tol),
            "instance {k}: Σw merges {} vs {}",
            sums[1],
            o.merge_distance
        );
        ensure!(
            close(sums[2], o.affected_jaccard_index, tol),
            "instance {k}: Σw stable"
        );
        ensure!(
            close(t.split_total, sums[0], tol) && close(t.merge_total, sums[1], tol),
            "instance {k}: totals"
        );
        ensure!(
            close(t.stable_total, sums[2], tol),
            "instance {k}: stable total"
        );
        ensure!(
            close(t.delta_precision_multiplier, sums.iter().sum(), tol),
            "instance {k}: multiplier"
        );
    }
    Ok(format!(
        "{} instances up to {max_pairs} pairs",
        instances.len()
    ))
}

fn truth_verdicts(cp: &ClusteringPair, set: &SampledPairSet, truth: &TruthTable) -> Vec<Verdict> {
    let mut out = reflexive_verdicts(cp, set);
    for t in export_tasks(cp, set) {
        let eq = truth.class(&t.i) == truth.class(&t.j);
        out.push(Verdict {
            i: t.i,
            j: t.j,
            value: VerdictValue::from_equivalent(eq),
            source: "truth".into(),
            timestamp: 0,
        });
    }
    out
}

fn exhaustive_exactness() -> Outcome {
    let toy = ClusteringPair::from_joined(joined(&[0, 0, 1], &[0, 1, 0], &[1.0; 3])).unwrap();
    let toy_truth = truth_from_labels(&[0, 0, 1]);
    let mut cases = vec![(toy, toy_truth)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    cases.extend((0..10).map(|k| random_instance(&mut rng, k)));
    let mut compared = 0;
    for (k, (cp, truth)) in cases.iter().enumerate() {
        let p = affected_partition(cp);
        let set = SampledPairSet::exhaustive(enumerate_pairs(cp, &p));
        let js = ingest_verdicts(cp, &set, &truth_verdicts(cp, &set, truth))
            .map_err(|e| e.to_string())?;
        let suite = estimate_all(
            &js,
            &pair_totals(cp, &p),
            affected_scale(cp),
            &EstimatorConfig::default(),
        );
        let exact = exact_metrics(cp, truth, 2_000_000)
            .map_err(|e| e.to_string())?
            .overall;
        for metric in [
            "good_split_distance",
            "bad_split_distance",
            "good_merge_distance",
            "bad_merge_distance",
            "good_distance",
            "bad_distance",
            "affected_good_index",
            "affected_bad_index",
            "delta_precision",
        ] {
            let want = exact.get(metric).unwrap();
            let line = suite.line(metric).ok_or(format!("no {metric} line"))?;
            match line.point {
                Some(got) => {
                    ensure!(
                        close(got, want, 1e-9),
                        "case {k} {metric}: {got} vs exact {want}"
                    );
                    compared += 1;
                }
                // A class with a zero total has nothing to draw; only legal
                // when the exact value is 0 as well.
                None => ensure!(
                    want == 0.0,
                    "case {k} {metric} unavailable: {:?}",
                    line.unavailable
                ),
            }
        }
        if k == 0 {
            let pt = |m| suite.point(m).unwrap();
            ensure!(
                close(pt("delta_precision"), -1.0 / 3.0, 1e-9),
                "toy-3 ΔP {}",
                pt("delta_precision")
            );
            ensure!(
                close(pt("bad_distance"), 5.0 / 9.0, 1e-9),
                "toy-3 BadDistance"
            );
            ensure!(
                close(pt("affected_good_index"), 4.0 / 9.0, 1e-9),
                "toy-3 AffectedGoodIndex"
            );
        }
    }
    Ok(format!("toy-3 ΔP = -1/3, BadDistance = 5/9, AffectedGoodIndex = 4/9; {compared} estimates match the oracle"))
}

fn calibration_instance() -> clusterdiff::oracle::SyntheticInstance {
    generate_instance(&GeneratorParams {
        items: 10_000,
        ..GeneratorParams::default()
    })
    .unwrap()
}

fn check_calibration(report: &CalibrationReport) -> Result<String, String> {
    let mut parts = Vec::new();
    for name in CALIBRATED_METRICS {
        let m = report.metric(name).ok_or(format!("no {name}"))?;
        let cov = m.coverage.ok_or(format!("{name}: no coverage"))?;
        let (bias, sem) = (m.bias.unwrap_or(f64::NAN), m.sem.unwrap_or(f64::NAN));
        ensure!(
            m.unavailable_reps == 0,
            "{name}: {} unavailable reps",
            m.unavailable_reps
        );
        ensure!(
            m.bias_within_3_sem == Some(true),
            "{name}: bias {bias:e} exceeds 3 × sem {sem:e}"
        );
        ensure!((0.92..=0.98).contains(&cov), "{name}: coverage {cov}");
        parts.push(format!("{name} bias/sem {:+.2} cov {:.3}", bias / sem, cov));
    }
    Ok(parts.join(", "))
}

fn statistical_calibration() -> Outcome {
    let start = Instant::now();
    let inst = calibration_instance();
    let report = calibrate(&inst, &CalibrationConfig::default()).map_err(|e| e.to_string())?;
    ensure!(
        report.config.repetitions == 1000 && report.config.draws == 500,
        "wrong config"
    );
    let ratio = report.exact.bad_distance / report.exact.jaccard_distance;
    ensure!(
        (0.4..=0.6).contains(&ratio),
        "generator BadDistance/JD {ratio}"
    );
    let detail = check_calibration(&report)?;
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "10k items, 1000 × 500 draws, BadDistance/JD {ratio:.3}; {detail}; {elapsed:.1?}"
    ))
}

/// Overall JaccardDistance in exact rational arithmetic, straight from the
/// set definitions. Weights are quarter units, scaled to integers.
fn exact_distance(x: &[usize], y: &[usize], w: &[f64]) -> BigRational {
    let n = x.len();
    let iw: Vec<i64> = w.iter().map(|v| (v * 4.0) as i64).collect();
    let mut sum = BigRational::zero();
    for i in 0..n {
        let (mut only_x, mut only_y, mut union) = (0i64, 0i64, 0i64);
        for j in 0..n {
            let (in_x, in_y) = (x[i] == x[j], y[i] == y[j]);
            if in_x || in_y {
                union += iw[j];
            }
            if in_x && !in_y {
                only_x += iw[j];
            }
            if in_y && !in_x {
                only_y += iw[j];
            }
        }
        sum += BigRational::new(BigInt::from(iw[i] * (only_x + only_y)), BigInt::from(union));
    }
    sum / BigRational::from_integer(BigInt::from(iw.iter().sum::<i64>()))
}

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut triangles = 0;
    let mut worst = 0.0f64;
    for t in 0..100 {
        let n = rng.random_range(1..=50);
        let w = weights(&mut rng, n);
        let a = labels(&mut rng, n);
        // Nearby clusterings make the triangle inequality close to tight.
        let perturb = |rng: &mut ChaCha8Rng, x: &[usize]| -> Vec<usize> {
            x.iter()
                .map(|&l| {
                    if rng.random_bool(0.2) {
                        rng.random_range(0..n)
                    } else {
                        l
                    }
                })
                .collect()
        };
        let (b, c) = if t % 2 == 0 {
            let b = perturb(&mut rng, &a);
            let c = perturb(&mut rng, &b);
            (b, c)
        } else {
            (labels(&mut rng, n), labels(&mut rng, n))
        };
        let d = |x: &[usize], y: &[usize]| {
            let cp = ClusteringPair::from_joined(joined(x, y, &w)).unwrap();
            overall_impact(&cp, &affected_partition(&cp)).jaccard_distance
        };
        let q = |x: &[usize], y: &[usize]| exact_distance(x, y, &w);
        let same_partition = |x: &[usize], y: &[usize]| {
            (0..n).all(|i| (0..n).all(|j| (x[i] == x[j]) == (y[i] == y[j])))
        };
        let all = [&a, &b, &c];
        for x in all {
            for y in all {
                let (fd, qd) = (d(x, y), q(x, y));
                let qf = qd.to_f64().unwrap();
                worst = worst.max((fd - qf).abs());
                ensure!(close(fd, qf, 1e-12), "triple {t}: float {fd} vs exact {qf}");
                ensure!(fd == d(y, x) && qd == q(y, x), "triple {t}: asymmetric");
                ensure!(
                    qd.is_zero() == same_partition(x, y),
                    "triple {t}: d = 0 iff same clustering fails"
                );
                ensure!(
                    !same_partition(x, y) || fd == 0.0,
                    "triple {t}: float d(A,A) = {fd}"
                );
            }
            let relabeled: Vec<usize> = x.iter().map(|l| l + 1000).collect();
            ensure!(
                d(x, &relabeled) == 0.0,
                "triple {t}: relabeled clustering at distance > 0"
            );
        }
        for (x, y, z) in [(&a, &b, &c), (&b, &a, &c), (&a, &c, &b)] {
            ensure!(
                q(x, z) <= q(x, y) + q(y, z),
                "triple {t}: triangle inequality fails"
            );
            triangles += 1;
        }
    }
    Ok(format!(
        "100 triples, symmetry, identity and {triangles} triangle checks in exact arithmetic; float within {worst:.1e}"
    ))
}

fn missing_judgement_reweighting() -> Outcome {
    // The §8 pattern: 1000 split draws of which exactly 800 are answered.
    let n = 1000;
    let mut exp = vec![0; n];
    exp[0] = 1;
    let cp = ClusteringPair::from_joined(joined(&vec![0; n], &exp, &vec![1.0; n])).unwrap();
    let p = affected_partition(&cp);
    let set = sample(
        enumerate_pairs(&cp, &p),
        &SamplePlan::two_strata(1000, 0, 3),
    )
    .map_err(|e| e.to_string())?;
    let mut unknown = 0;
    let mut verdicts = reflexive_verdicts(&cp, &set);
    for t in export_tasks(&cp, &set) {
        let value = if unknown + t.draw_count <= 200 {
            unknown += t.draw_count;
            VerdictValue::Unknown
        } else {
            VerdictValue::NotEquivalent
        };
        verdicts.push(Verdict {
            i: t.i,
            j: t.j,
            value,
            source: "s".into(),
            timestamp: 0,
        });
    }
    ensure!(unknown == 200, "could only mark {unknown} draws unknown");
    let js = ingest_verdicts(&cp, &set, &verdicts).map_err(|e| e.to_string())?;
    let r = js.class_reweights[&ReweightClass::SplitPairs];
    ensure!(
        r == ClassReweight {
            sampled_draws: 1000,
            usable_draws: 800
        },
        "{r:?}"
    );
    ensure!(r.factor() == Some(1.25), "factor {:?}", r.factor());
    let usable_total: f64 = js.usable().map(|(d, _, _)| d.count as f64 * 1.25).sum();
    ensure!(
        usable_total == 1000.0,
        "reweighted split draws {usable_total}"
    );

    // 20% seeded unanswerable on the calibration instance.
    let inst = calibration_instance();
    let cp = &inst.cp;
    let p = affected_partition(cp);
    let mut classes_checked = 0;
    for seed in 0..20 {
        let set = sample(enumerate_pairs(cp, &p), &SamplePlan::single(500, seed))
            .map_err(|e| e.to_string())?;
        let tasks = export_tasks(cp, &set);
        let v = synthetic_judge(cp, &tasks, &inst.truth, 0.2, seed, "synthetic")
            .map_err(|e| e.to_string())?;
        let js = ingest_verdicts(cp, &set, &v).map_err(|e| e.to_string())?;
        let mut sampled: BTreeMap<ReweightClass, u64> = BTreeMap::new();
        let mut usable: BTreeMap<ReweightClass, Vec<u64>> = BTreeMap::new();
        for (d, r) in set.draws.iter().zip(&js.resolved) {
            let class = ReweightClass::of(&d.pair);
            *sampled.entry(class).or_default() += d.count;
            if r.is_some() {
                usable.entry(class).or_default().push(d.count);
            }
        }
        for (class, &s) in &sampled {
            let counts = usable.get(class).cloned().unwrap_or_default();
            let u: u64 = counts.iter().sum();
            let r = js.class_reweights[class];
            ensure!(
                r.sampled_draws == s && r.usable_draws == u,
                "seed {seed} {class:?}: {r:?} vs {s}/{u}"
            );
            if u > 0 {
                ensure!(
                    r.reweighted_total(counts) == (s as u128, 1),
                    "seed {seed} {class:?}: total not preserved"
                );
                classes_checked += 1;
            }
        }
        let self_rw = js.class_reweights.get(&ReweightClass::SelfPairs);
        ensure!(
            self_rw.is_none_or(|r| r.sampled_draws == r.usable_draws),
            "self pairs were reweighted"
        );
    }

    let report = calibrate(
        &inst,
        &CalibrationConfig {
            unanswerable_rate: 0.2,
            ..CalibrationConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let detail = check_calibration(&report)?;
    Ok(format!("1000/800 → 1.25 exact; {classes_checked} class totals preserved; calibration at 20%: {detail}"))
}

fn determinism() -> Outcome {
    let inst = generate_instance(&GeneratorParams {
        items: 3000,
        weight_spread: 3.0,
        seed: 9,
        ..GeneratorParams::default()
    })
    .unwrap();
    let run = || -> Result<(Vec<u8>, Vec<u8>, Vec<u8>), String> {
        let cp = &inst.cp;
        let p = affected_partition(cp);
        let set = sample(enumerate_pairs(cp, &p), &SamplePlan::single(800, 17))
            .map_err(|e| e.to_string())?;
        let mut sample_bytes = Vec::new();
        write_jsonl(&mut sample_bytes, &set.records(cp)).map_err(|e| e.to_string())?;
        let v = synthetic_judge(cp, &export_tasks(cp, &set), &inst.truth, 0.2, 3, "s")
            .map_err(|e| e.to_string())?;
        let js = ingest_verdicts(cp, &set, &v).map_err(|e| e.to_string())?;
        let suite = estimate_all(
            &js,
            &pair_totals(cp, &p),
            affected_scale(cp),
            &EstimatorConfig::default(),
        );
        let mut report_bytes = Vec::new();
        write_jsonl(&mut report_bytes, &suite.lines).map_err(|e| e.to_string())?;
        let cal = calibrate(
            &inst,
            &CalibrationConfig {
                repetitions: 50,
                draws: 200,
                ..CalibrationConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        Ok((
            sample_bytes,
            report_bytes,
            serde_json::to_vec(&cal).unwrap(),
        ))
    };
    let first = run()?;
    let second = run()?;
    ensure!(first.0 == second.0, "sample bytes differ");
    ensure!(first.1 == second.1, "estimate report bytes differ");
    ensure!(first.2 == second.2, "calibration report bytes differ");
    let inst2 = generate_instance(&inst.params).unwrap();
    ensure!(
        inst2.cp.joined_records() == inst.cp.joined_records(),
        "instance differs"
    );
    Ok(format!(
        "sample {} B, estimates {} B, calibration {} B identical",
        first.0.len(),
        first.1.len(),
        first.2.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("decomposition identities", decomposition_identities),
        ("one-split worked example", one_split_example),
        ("multiplier identities", multiplier_identities),
        ("exhaustive-sample exactness", exhaustive_exactness),
        ("statistical calibration", statistical_calibration),
        ("metric axioms", metric_axioms),
        (
            "missing-judgement reweighting",
            missing_judgement_reweighting,
        ),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name} ({t:.1?}): {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name} ({t:.1?}): {why}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
