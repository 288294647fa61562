use std::sync::Arc;

use esd_core::evvr::validate_record;
use esd_core::fixtures::{golden_image_bytes, golden_record};
use esd_core::record::{AccessionId, ExperimentRecord, PayloadRef};
use esd_core::store::{FileBackend, StoreError};
use esd_core::units::Quantity;
use esd_core::Store;
use proptest::prelude::*;

fn accession(store: &Store, mut r: ExperimentRecord) -> Result<AccessionId, StoreError> {
    store.write(|tx| {
        r.record_id = Some(tx.next_accession());
        tx.put_accepted(r)
    })
}

#[derive(Debug, Clone)]
enum Op {
    Insert { voltage_v: f64 },
    Image(Vec<u8>),
    Repeat,
    Conflict,
    Snapshot,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (1_000.0f64..40_000.0).prop_map(|v| Op::Insert { voltage_v: v.round() }),
        1 => proptest::collection::vec(any::<u8>(), 1..64).prop_map(Op::Image),
        1 => Just(Op::Repeat),
        1 => Just(Op::Conflict),
        1 => Just(Op::Snapshot),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_operations_keep_the_store_consistent(ops in proptest::collection::vec(op(), 1..30)) {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let store = Store::open_dir(&data).unwrap();
        store.put_image(golden_image_bytes()).unwrap();
        let mut inserted: Vec<AccessionId> = Vec::new();
        let mut images = 1;
        for (i, op) in ops.into_iter().enumerate() {
            match op {
                Op::Insert { voltage_v } => {
                    let mut r = golden_record();
                    r.process.voltage = Some(Quantity::of(voltage_v, "V"));
                    let id = accession(&store, r).unwrap();
                    prop_assert_eq!(id.number() as usize, inserted.len() + 1);
                    inserted.push(id);
                }
                Op::Image(bytes) => {
                    let known = store.has_image(&PayloadRef::for_bytes(&bytes)).unwrap();
                    store.put_image(bytes).unwrap();
                    if !known {
                        images += 1;
                    }
                }
                Op::Repeat => {
                    if let Some(&id) = inserted.last() {
                        let again = store.get_record(id).unwrap();
                        prop_assert_eq!(store.put_accepted(again).unwrap(), id);
                    }
                }
                Op::Conflict => {
                    if let Some(&id) = inserted.first() {
                        let mut other = store.get_record(id).unwrap();
                        other.provenance.title = Some(format!("changed {i}"));
                        prop_assert_eq!(store.put_accepted(other), Err(StoreError::DuplicateAccession(id)));
                    }
                }
                Op::Snapshot => {
                    let path = dir.path().join(format!("snap-{i}.zip"));
                    let manifest = store.snapshot(&path).unwrap();
                    let target = dir.path().join(format!("restored-{i}"));
                    let (restored, m2) = Store::restore(&path, Arc::new(FileBackend::open(&target).unwrap())).unwrap();
                    prop_assert_eq!(&manifest, &m2);
                    prop_assert_eq!(restored.digest().unwrap(), store.digest().unwrap());
                }
            }
        }
        prop_assert_eq!(store.record_count().unwrap(), inserted.len());
        store.with_records(|records| {
            for r in records.values() {
                assert!(validate_record(r).passed);
                assert!(r.unit_issues().is_empty());
                assert_eq!(r.process.voltage.as_ref().unwrap().unit, "kV");
            }
        }).unwrap();
        let digest = store.digest().unwrap();
        drop(store);
        let reopened = Store::open_dir(&data).unwrap();
        prop_assert_eq!(reopened.digest().unwrap(), digest);
        prop_assert_eq!(reopened.record_count().unwrap(), inserted.len());
        let _ = images;
    }
}

#[test]
fn records_referencing_missing_images_are_refused() {
    let store = Store::in_memory();
    let err = accession(&store, golden_record()).unwrap_err();
    assert!(matches!(err, StoreError::IntegrityViolation { .. }), "{err:?}");
    assert_eq!(store.record_count().unwrap(), 0);
}

#[test]
fn restore_into_a_populated_target_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open_dir(dir.path().join("a")).unwrap();
    store.put_image(golden_image_bytes()).unwrap();
    accession(&store, golden_record()).unwrap();
    let snap = dir.path().join("s.zip");
    store.snapshot(&snap).unwrap();
    let err = Store::restore(&snap, store.backend()).err().unwrap();
    assert_eq!(err, StoreError::NotEmpty);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reopened_records_keep_every_bit(kv in 0.001f64..60.0, nm in 1.0f64..5000.0) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_dir(dir.path()).unwrap();
        store.put_image(golden_image_bytes()).unwrap();
        let mut r = golden_record();
        r.process.voltage = Some(Quantity::of(kv, "kV"));
        r.fiber.fiber_diameter = Some(Quantity::of(nm, "nm"));
        let id = accession(&store, r).unwrap();
        let before = store.get_record(id).unwrap();
        drop(store);
        let after = Store::open_dir(dir.path()).unwrap().get_record(id).unwrap();
        prop_assert_eq!(after.process.voltage.as_ref().unwrap().value.to_bits(), kv.to_bits());
        prop_assert_eq!(after.fiber.fiber_diameter.as_ref().unwrap().value.to_bits(), nm.to_bits());
        prop_assert_eq!(after, before);
    }
}
