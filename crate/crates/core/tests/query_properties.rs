use std::collections::BTreeSet;

use esd_core::fixtures::synthetic_corpus;
use esd_core::query::{execute_filter, histogram_of, median, quantile, summarize, FieldSummary, FilterSpec, NumericField};
use esd_core::record::{AccessionId, ExperimentRecord};
use proptest::prelude::*;
use std::sync::OnceLock;

fn corpus() -> &'static Vec<ExperimentRecord> {
    static CORPUS: OnceLock<Vec<ExperimentRecord>> = OnceLock::new();
    CORPUS.get_or_init(|| {
        synthetic_corpus(600, 7)
            .records
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.record_id = Some(AccessionId::new(i as u32 + 1));
                r
            })
            .collect()
    })
}

const RANGED: [NumericField; 5] = [
    NumericField::Voltage,
    NumericField::FlowRate,
    NumericField::Concentration,
    NumericField::TipCollectorDistance,
    NumericField::FiberDiameter,
];

fn spec() -> impl Strategy<Value = FilterSpec> {
    let polymers = proptest::option::of(proptest::sample::subsequence(vec!["PVA", "PEO", "PAN", "PCL", "PVDF"], 1..3));
    let ranges = proptest::collection::vec((0usize..5, 0.0f64..400.0, 0.0f64..400.0), 0..3);
    (polymers, ranges, any::<bool>()).prop_map(|(polymers, ranges, exclusive)| {
        let mut spec = FilterSpec::default();
        if let Some(p) = polymers {
            spec = spec.polymers(&p);
        }
        for (f, a, b) in ranges {
            spec = spec.range(RANGED[f], a.min(b), a.max(b));
        }
        spec.exclusive = exclusive;
        spec
    })
}

fn ids(spec: &FilterSpec) -> BTreeSet<AccessionId> {
    execute_filter(corpus(), spec).unwrap().into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tightening_a_range_never_adds_records(s in spec(), f in 0usize..5, lo in 0.0f64..200.0, width in 0.0f64..200.0) {
        let field = RANGED[f];
        let base = ids(&s);
        let (lo, hi) = match s.ranges.get(&field) {
            Some(r) => (r.min.max(lo), r.max.min(lo + width)),
            None => (lo, lo + width),
        };
        prop_assume!(lo <= hi);
        let tighter = s.clone().range(field, lo, hi);
        prop_assert!(ids(&tighter).is_subset(&base));
    }

    #[test]
    fn exclusive_matching_is_a_subset_of_inclusive(s in spec()) {
        let mut inclusive = s.clone();
        inclusive.exclusive = false;
        let mut exclusive = s;
        exclusive.exclusive = true;
        prop_assert!(ids(&exclusive).is_subset(&ids(&inclusive)));
    }

    #[test]
    fn summary_ignores_record_order(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut refs: Vec<&ExperimentRecord> = corpus().iter().take(200).collect();
        let before = summarize(&refs, &RANGED).unwrap();
        refs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(summarize(&refs, &RANGED).unwrap(), before);
    }

    #[test]
    fn histogram_counts_every_value_once(values in proptest::collection::vec(-1e6f64..1e6, 1..300), bins in 1usize..40) {
        let h = histogram_of(&values, bins).unwrap();
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), values.len());
        prop_assert!(h.windows(2).all(|w| w[0].upper == w[1].lower));
    }

    #[test]
    fn quartiles_are_ordered_and_bounded(mut values in proptest::collection::vec(-1e6f64..1e6, 1..300)) {
        values.sort_by(f64::total_cmp);
        let q1 = quantile(&values, 0.25).unwrap();
        let m = median(&values).unwrap();
        let q3 = quantile(&values, 0.75).unwrap();
        prop_assert!(values[0] <= q1 && q1 <= m && m <= q3 && q3 <= *values.last().unwrap());
        let summary = FieldSummary::of_values(NumericField::Voltage, values.clone());
        prop_assert_eq!(summary.median, Some(m));
        prop_assert_eq!(summary.n, values.len());
    }
}

#[test]
fn median_matches_hand_computed_values() {
    assert_eq!(median(&[1.0, 2.0, 3.0]), Some(2.0));
    assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), Some(2.5));
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), Some(2.0));
    assert_eq!(quantile(&[0.0, 10.0], 0.75), Some(7.5));
    assert_eq!(median(&[]), None);
}
