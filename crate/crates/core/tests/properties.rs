use proptest::prelude::*;

use clusterdiff::explore::{slice, Predicate, SliceQuery};
use clusterdiff::judgements::{export_tasks, ingest_verdicts, synthetic_judge, ReweightClass};
use clusterdiff::metrics::{lift, overall_impact};
use clusterdiff::model::{affected_partition, ClusteringPair, ItemIx, JoinedRecord};
use clusterdiff::oracle::{exact_metrics, TruthRecord, TruthTable};
use clusterdiff::pairs::{enumerate_pairs, pair_totals, PairClass};
use clusterdiff::sampler::{sample, SamplePlan, Stratum};

#[derive(Debug, Clone)]
struct Instance {
    base: Vec<u8>,
    exp: Vec<u8>,
    truth: Vec<u8>,
    weights: Vec<u8>,
}

impl Instance {
    fn cp(&self) -> ClusteringPair {
        let rows = (0..self.base.len()).map(|k| JoinedRecord {
            item_id: format!("i{k}"),
            base_cluster_id: self.base[k].to_string(),
            exp_cluster_id: self.exp[k].to_string(),
            weight: f64::from(self.weights[k]),
            attributes: [("kind".to_string(), (k % 3).to_string())].into(),
        });
        ClusteringPair::from_joined(rows).unwrap()
    }

    fn truth(&self) -> TruthTable {
        TruthTable::from_records(self.truth.iter().enumerate().map(|(k, t)| TruthRecord {
            item_id: format!("i{k}"),
            truth_class_id: t.to_string(),
        }))
        .unwrap()
    }
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..6, n),
            prop::collection::vec(0u8..6, n),
            prop::collection::vec(0u8..4, n),
            prop::collection::vec(1u8..8, n),
        )
            .prop_map(|(base, exp, truth, weights)| Instance {
                base,
                exp,
                truth,
                weights,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_identities(inst in instance()) {
        let cp = inst.cp();
        let all: Vec<ItemIx> = cp.indices().collect();
        let p = affected_partition(&cp);
        let o = overall_impact(&cp, &p);
        prop_assert!((o.jaccard_distance + o.jaccard_index - 1.0).abs() < 1e-12);
        prop_assert!((o.jaccard_distance - o.split_distance - o.merge_distance).abs() < 1e-12);
        let jd = lift(&cp, &all, |ix| cp.impact(ix).jaccard_distance).unwrap();
        prop_assert!((jd - o.jaccard_distance).abs() < 1e-12);
    }

    #[test]
    fn membership_is_symmetric(inst in instance()) {
        let cp = inst.cp();
        for i in cp.indices() {
            for j in cp.indices() {
                prop_assert_eq!(cp.in_base(i, j), cp.in_base(j, i));
                prop_assert_eq!(cp.in_exp(i, j), cp.in_exp(j, i));
            }
        }
    }

    #[test]
    fn oracle_paths_agree(inst in instance()) {
        // exact_metrics fails with OracleMismatch when its two paths disagree.
        let cp = inst.cp();
        let exact = exact_metrics(&cp, &inst.truth(), 1_000_000).unwrap();
        let o = &exact.overall;
        prop_assert!((o.good_distance + o.bad_distance - o.jaccard_distance).abs() < 1e-9);
        prop_assert!((o.affected_good_index + o.affected_bad_index - o.affected_jaccard_index).abs() < 1e-9);
    }

    #[test]
    fn sample_contributions_total_stratum_weights(inst in instance(), draws in 0u64..200, seed: u64, diff in 0.0f64..=1.0) {
        let cp = inst.cp();
        let p = affected_partition(&cp);
        let plan = SamplePlan::with_diff_fraction(draws, diff, seed).unwrap();
        let Ok(set) = sample(enumerate_pairs(&cp, &p), &plan) else {
            // A stratum with draws but no pairs.
            return Ok(());
        };
        prop_assert_eq!(set.total_draws(), draws);
        let t = pair_totals(&cp, &p);
        let contributions = set.contributions();
        for (stratum, total) in [(Stratum::Diff, t.split_total + t.merge_total), (Stratum::Stable, t.stable_total)] {
            let sum: f64 = set.draws.iter().zip(&contributions).filter(|(d, _)| d.stratum == stratum).map(|(_, c)| c).sum();
            if set.draws.iter().any(|d| d.stratum == stratum) {
                prop_assert!((sum - total).abs() < 1e-9, "{:?}: {} vs {}", stratum, sum, total);
            }
        }
    }

    #[test]
    fn slices_are_additive(inst in instance(), seed: u64) {
        let cp = inst.cp();
        let p = affected_partition(&cp);
        let Ok(set) = sample(enumerate_pairs(&cp, &p), &SamplePlan::single(100, seed)) else {
            return Ok(());
        };
        let total = slice(&cp, &set, &SliceQuery::default()).unwrap().contribution;
        let by_class: f64 = PairClass::ALL
            .iter()
            .map(|&class| {
                let q = SliceQuery { predicates: vec![Predicate::Class { class }], group_by: None };
                slice(&cp, &set, &q).unwrap().contribution
            })
            .sum();
        prop_assert!((total - by_class).abs() < 1e-9);
        let grouped = slice(&cp, &set, &SliceQuery { predicates: vec![], group_by: Some("i.kind".into()) }).unwrap();
        let sum: f64 = grouped.groups.iter().map(|g| g.contribution).sum();
        prop_assert!((total - sum).abs() < 1e-9);
    }

    #[test]
    fn reweighting_preserves_class_totals(inst in instance(), seed: u64, rate in 0.0f64..0.9) {
        let cp = inst.cp();
        let p = affected_partition(&cp);
        let Ok(set) = sample(enumerate_pairs(&cp, &p), &SamplePlan::single(150, seed)) else {
            return Ok(());
        };
        let tasks = export_tasks(&cp, &set);
        let verdicts = synthetic_judge(&cp, &tasks, &inst.truth(), rate, seed, "p").unwrap();
        let js = ingest_verdicts(&cp, &set, &verdicts).unwrap();
        prop_assert_eq!(&js, &ingest_verdicts(&cp, &set, &verdicts).unwrap());
        for class in ReweightClass::ALL {
            let Some(r) = js.class_reweights.get(&class) else { continue };
            let usable = set.draws.iter().zip(&js.resolved)
                .filter(|(d, v)| ReweightClass::of(&d.pair) == class && v.is_some())
                .map(|(d, _)| d.count);
            if r.usable_draws > 0 {
                prop_assert_eq!(r.reweighted_total(usable), (u128::from(r.sampled_draws), 1));
            }
        }
    }
}
