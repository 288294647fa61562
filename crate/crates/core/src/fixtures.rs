//! Synthetic records for seeding, demos and tests. Nothing here is real
//! experimental data.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::bundle::ImportBundle;
use crate::emcv::{MorphologyAnnotation, MorphologyDescriptor, Vocabulary, BUILTIN_VERSION};
use crate::record::*;
use crate::units::Quantity;

pub const POLYMERS: [&str; 12] = [
    "PVA", "PVDF", "PVP", "PAN", "PEO", "PCL", "PLA", "PS", "PU", "PMMA", "PA6", "CA",
];

pub const SOLVENTS: [&str; 14] = [
    "water",
    "DMF",
    "DMAc",
    "acetone",
    "ethanol",
    "methanol",
    "THF",
    "chloroform",
    "DCM",
    "HFIP",
    "formic_acid",
    "acetic_acid",
    "NMP",
    "toluene",
];

pub const PUBLICATIONS: u32 = 57;

const WATER_SOLUBLE: [&str; 3] = ["PVA", "PEO", "PVP"];
const FLOW_RATES_ML_H: [f64; 12] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5, 0.8, 1.0, 1.5, 2.0];

pub fn golden_image_bytes() -> Vec<u8> {
    let mut bytes = b"\x89PNG\r\n\x1a\ngolden-sem-image".to_vec();
    bytes.extend((0u8..64).map(|b| b.wrapping_mul(37)));
    bytes
}

/// A complete record with every optional group populated, in canonical
/// units, that passes every validation rule.
pub fn golden_record() -> ExperimentRecord {
    ExperimentRecord {
        record_id: None,
        polymers: vec![PolymerComponent {
            polymer_id: "PVA".into(),
            polymer_weight: Some(Quantity::of(89000.0, "g/mol")),
            weight_ratio: Some(1.0),
        }],
        solvents: vec![SolventComponent {
            solvent_id: "water".into(),
            volume_ratio: Some(1.0),
            weight: Some(Quantity::of(900.0, "mg")),
        }],
        solution: SolutionProperties {
            concentration: Some(Quantity::of(10.0, "wt%")),
            viscosity: Some(Quantity::of(350.0, "cP")),
            surface_tension: Some(Quantity::of(45.0, "mN/m")),
            conductivity: Some(Quantity::of(0.05, "S/m")),
            evaporation_rate: Some(Quantity::of(12.0, "mg/h")),
            ph: Some(6.5),
        },
        process: ProcessParameters {
            voltage: Some(Quantity::of(20.0, "kV")),
            flow_rate: Some(Quantity::of(0.3, "mL/h")),
            tip_collector_distance: Some(Quantity::of(15.0, "cm")),
            spinning_duration: Some(Quantity::of(60.0, "min")),
        },
        ambient: AmbientConditions {
            temperature: Some(Quantity::of(25.0, "°C")),
            humidity: Some(Quantity::of(45.0, "%RH")),
        },
        needle: NeedleConfig {
            needle_type: Some(NeedleClass::SingleNeedle),
            needle_definition: json!({"gauge": 22, "inner_diameter_mm": 0.41}),
        },
        collector: CollectorConfig {
            collector_type: Some(CollectorClass::FlatPlate),
            collector_definition: json!({"material": "aluminium foil", "size_cm": [20, 20]}),
        },
        fiber: FiberProperties {
            fiber_diameter: Some(Quantity::of(250.0, "nm")),
            diameter_variation: Some(Quantity::of(12.0, "%")),
            is_formation_stable: Some(true),
            fiber_weight: Some(Quantity::of(5.0, "mg")),
        },
        morphology: Some(
            MorphologyAnnotation::parse(
                "Cylinder|Random|250|12|Single Material|Smooth|Bead",
                BUILTIN_VERSION,
            )
            .expect("golden descriptor"),
        ),
        instabilities: vec![InstabilityTag::new("jet_instability_whipping_excess")],
        images: vec![ImageRef {
            image_type: ImageType::Sem,
            image_definition: ImageDefinition {
                magnification: Some(5000.0),
                scale_bar: Some(Quantity::of(1.0, "µm")),
                modality_notes: Some("secondary electron, 10 kV".into()),
                file_name: Some("golden_sem.png".into()),
                extra: BTreeMap::new(),
            },
            payload_ref: PayloadRef::for_bytes(&golden_image_bytes()),
        }],
        derived: DerivedProperties {
            mechanical: Some(MechanicalProperties {
                tensile_strength: Some(Quantity::of(5.2, "MPa")),
                modulus: Some(Quantity::of(120.0, "MPa")),
                elongation_at_break: Some(Quantity::of(35.0, "%")),
                fracture_behavior: Some("ductile".into()),
            }),
            functional: Some(FunctionalProperties {
                surface_area: Some(Quantity::of(12.0, "m²/g")),
                porosity: Some(Quantity::of(80.0, "%")),
                thermal_conductivity: Some(Quantity::of(0.04, "W/(m·K)")),
                permeability: Some(Quantity::of(85.0, "mm/s")),
                electrical_conductivity: Some(Quantity::of(0.001, "S/m")),
                wettability: Some(Quantity::of(35.0, "°")),
            }),
            application_type: vec!["filtration".into()],
        },
        provenance: Provenance {
            doi: Some("10.5555/esd.golden".into()),
            title: Some("Synthetic golden record".into()),
            bibliographic: Some("Fixture Journal 1 (2026) 1-2".into()),
            contributor_name: Some("Fixture Curator".into()),
            contributor_contact: Some("curation@example.org".into()),
            source_kind: SourceKind::Literature,
        },
    }
}

/// The golden record reduced to exactly the required elements.
pub fn minimal_record() -> ExperimentRecord {
    let g = golden_record();
    ExperimentRecord {
        polymers: vec![PolymerComponent::named("PVA")],
        solvents: vec![SolventComponent::named("water")],
        solution: SolutionProperties {
            concentration: g.solution.concentration,
            ..Default::default()
        },
        process: ProcessParameters {
            spinning_duration: None,
            ..g.process
        },
        needle: NeedleConfig {
            needle_type: g.needle.needle_type,
            ..Default::default()
        },
        collector: CollectorConfig {
            collector_type: g.collector.collector_type,
            ..Default::default()
        },
        fiber: FiberProperties {
            fiber_diameter: g.fiber.fiber_diameter,
            ..Default::default()
        },
        provenance: Provenance {
            title: None,
            bibliographic: None,
            ..g.provenance
        },
        ..Default::default()
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn stepped(rng: &mut ChaCha8Rng, lo: f64, hi: f64, step: f64) -> f64 {
    let steps = ((hi - lo) / step).round() as u32;
    lo + f64::from(rng.random_range(0..=steps)) * step
}

fn random_descriptor(rng: &mut ChaCha8Rng, size_nm: Option<f64>, failed: bool) -> MorphologyDescriptor {
    let vocab = Vocabulary::builtin();
    let term = |rng: &mut ChaCha8Rng, axis, p: f64| {
        rng.random_bool(p)
            .then(|| pick(rng, vocab.terms(axis)).clone())
    };
    use crate::emcv::Axis;
    let mut d = MorphologyDescriptor {
        shape: term(rng, Axis::Shape, 0.8),
        topography: term(rng, Axis::Topography, 0.7),
        size_nm,
        size_variation_pct: None,
        composition: term(rng, Axis::Composition, 0.5),
        texture: term(rng, Axis::Texture, 0.6),
        defects: Default::default(),
    };
    let defect_count = if failed { rng.random_range(1..=2) } else { rng.random_range(0..=1) };
    for _ in 0..defect_count {
        d.defects.insert(pick(rng, vocab.terms(Axis::Defects)).clone());
    }
    if d.is_empty() {
        d.shape = Some("Cylinder".into());
    }
    d
}

fn synthetic_record(rng: &mut ChaCha8Rng, images: &mut BTreeMap<PayloadRef, Vec<u8>>, index: usize) -> ExperimentRecord {
    let primary = if rng.random_bool(0.25) { "PVA" } else { *pick(rng, &POLYMERS) };
    let mut polymers = vec![PolymerComponent::named(primary)];
    if rng.random_bool(0.1) {
        let second = if primary == "PEO" { "PVA" } else { "PEO" };
        polymers[0].weight_ratio = Some(0.7);
        polymers.push(PolymerComponent {
            weight_ratio: Some(0.3),
            ..PolymerComponent::named(second)
        });
    }
    if rng.random_bool(0.2) {
        let (value, unit) = if rng.random_bool(0.5) {
            (stepped(rng, 30.0, 200.0, 1.0), "kDa")
        } else {
            (stepped(rng, 10_000.0, 150_000.0, 1000.0), "g/mol")
        };
        polymers[0].polymer_weight = Some(Quantity::of(value, unit));
    }

    let primary_solvent = if WATER_SOLUBLE.contains(&primary) && rng.random_bool(0.8) {
        "water"
    } else {
        *pick(rng, &SOLVENTS)
    };
    let mut solvents = vec![SolventComponent::named(primary_solvent)];
    if rng.random_bool(0.15) {
        let other = *pick(rng, &SOLVENTS);
        if other != primary_solvent {
            solvents[0].volume_ratio = Some(0.6);
            solvents.push(SolventComponent {
                volume_ratio: Some(0.4),
                ..SolventComponent::named(other)
            });
        }
    }

    let mut voltage_kv = stepped(rng, 8.0, 30.0, 0.5);
    if rng.random_bool(0.03) {
        voltage_kv = -voltage_kv;
    }
    let voltage = if rng.random_bool(0.1) {
        Quantity::of(voltage_kv * 1000.0, "V")
    } else {
        Quantity::of(voltage_kv, "kV")
    };
    let distance_cm = stepped(rng, 5.0, 30.0, 0.5);
    let distance = if rng.random_bool(0.1) {
        Quantity::of(distance_cm * 10.0, "mm")
    } else {
        Quantity::of(distance_cm, "cm")
    };
    let flow = Quantity::of(*pick(rng, &FLOW_RATES_ML_H), "mL/h");

    let needle_type = match rng.random_range(0..100) {
        0..=74 => NeedleClass::SingleNeedle,
        75..=82 => NeedleClass::Coaxial,
        83..=89 => NeedleClass::MultiNeedle,
        90..=96 => NeedleClass::Needleless,
        _ => NeedleClass::Other,
    };
    let collector_type = match rng.random_range(0..100) {
        0..=59 => CollectorClass::FlatPlate,
        60..=79 => CollectorClass::RotatingDrum,
        80..=87 => CollectorClass::RotatingDisk,
        88..=92 => CollectorClass::Patterned,
        93..=96 => CollectorClass::LiquidBath,
        _ => CollectorClass::Other,
    };
    let mut needle_definition = json!({});
    if rng.random_bool(0.4) {
        needle_definition = json!({ "gauge": rng.random_range(18..=27) });
    }
    let mut collector_definition = json!({});
    if collector_type == CollectorClass::RotatingDrum {
        collector_definition = json!({ "rpm": stepped(rng, 100.0, 3000.0, 100.0) });
    }

    let failed = rng.random_bool(0.15);
    let fiber_diameter = (!failed).then(|| (30.0 + 1970.0 * rng.random::<f64>().powi(2)).round());
    let instabilities = if failed {
        let n = rng.random_range(1..=2);
        let mut tags: Vec<InstabilityTag> = (0..n)
            .map(|_| InstabilityTag::new(pick(rng, SEED_INSTABILITIES)))
            .collect();
        tags.dedup();
        tags
    } else {
        Vec::new()
    };
    let morphology = rng.random_bool(0.4).then(|| {
        let d = random_descriptor(rng, fiber_diameter, failed);
        MorphologyAnnotation::new(d, BUILTIN_VERSION).expect("generated descriptor is valid")
    });

    let mut record_images = Vec::new();
    if rng.random_bool(0.05) {
        let mut bytes = format!("synthetic-sem-{index}").into_bytes();
        bytes.extend((0..48).map(|_| rng.random::<u8>()));
        let payload_ref = PayloadRef::for_bytes(&bytes);
        images.insert(payload_ref.clone(), bytes);
        record_images.push(ImageRef {
            image_type: ImageType::Sem,
            image_definition: ImageDefinition {
                magnification: Some(stepped(rng, 1000.0, 20000.0, 1000.0)),
                scale_bar: Some(Quantity::of(1.0, "µm")),
                modality_notes: None,
                file_name: Some(format!("sem_{index}.png")),
                extra: BTreeMap::new(),
            },
            payload_ref,
        });
    }

    let publication = rng.random_range(1..=PUBLICATIONS);
    ExperimentRecord {
        record_id: None,
        polymers,
        solvents,
        solution: SolutionProperties {
            concentration: Some(Quantity::of(stepped(rng, 2.0, 25.0, 0.5), "wt%")),
            viscosity: rng
                .random_bool(0.3)
                .then(|| Quantity::of(stepped(rng, 50.0, 2000.0, 10.0), "cP")),
            surface_tension: rng
                .random_bool(0.15)
                .then(|| Quantity::of(stepped(rng, 25.0, 70.0, 0.5), "mN/m")),
            conductivity: rng
                .random_bool(0.2)
                .then(|| Quantity::of(stepped(rng, 1.0, 2000.0, 1.0), "µS/cm")),
            evaporation_rate: None,
            ph: rng.random_bool(0.05).then(|| stepped(rng, 3.0, 10.0, 0.1)),
        },
        process: ProcessParameters {
            voltage: Some(voltage),
            flow_rate: Some(flow),
            tip_collector_distance: Some(distance),
            spinning_duration: rng
                .random_bool(0.2)
                .then(|| Quantity::of(stepped(rng, 10.0, 480.0, 10.0), "min")),
        },
        ambient: AmbientConditions {
            temperature: rng
                .random_bool(0.55)
                .then(|| Quantity::of(stepped(rng, 15.0, 40.0, 0.5), "°C")),
            humidity: rng
                .random_bool(0.5)
                .then(|| Quantity::of(stepped(rng, 20.0, 80.0, 1.0), "%RH")),
        },
        needle: NeedleConfig {
            needle_type: Some(needle_type),
            needle_definition,
        },
        collector: CollectorConfig {
            collector_type: Some(collector_type),
            collector_definition,
        },
        fiber: FiberProperties {
            fiber_diameter: fiber_diameter.map(|d| Quantity::of(d, "nm")),
            diameter_variation: (fiber_diameter.is_some() && rng.random_bool(0.6))
                .then(|| Quantity::of(stepped(rng, 5.0, 40.0, 1.0), "%")),
            is_formation_stable: rng.random_bool(0.7).then_some(!failed),
            fiber_weight: None,
        },
        morphology,
        instabilities,
        images: record_images,
        derived: DerivedProperties {
            mechanical: rng.random_bool(0.08).then(|| MechanicalProperties {
                tensile_strength: Some(Quantity::of(stepped(rng, 1.0, 60.0, 0.1), "MPa")),
                ..Default::default()
            }),
            functional: rng.random_bool(0.06).then(|| FunctionalProperties {
                porosity: Some(Quantity::of(stepped(rng, 40.0, 95.0, 1.0), "%")),
                ..Default::default()
            }),
            application_type: if rng.random_bool(0.2) {
                vec![pick(rng, &["filtration", "tissue_engineering", "drug_delivery", "energy_storage"]).to_string()]
            } else {
                Vec::new()
            },
        },
        provenance: Provenance {
            doi: Some(format!("10.5555/esd-synthetic.{publication:03}")),
            title: None,
            bibliographic: None,
            contributor_name: Some("Fixture Curator".into()),
            contributor_contact: Some("curation@example.org".into()),
            source_kind: SourceKind::Literature,
        },
    }
}

/// Deterministic corpus of `n` records (all passing validation) plus the
/// image payloads they reference.
pub fn synthetic_corpus(n: usize, seed: u64) -> ImportBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = BTreeMap::new();
    let records = (0..n)
        .map(|i| synthetic_record(&mut rng, &mut images, i))
        .collect();
    ImportBundle::new(records, images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evvr::validate_record;

    #[test]
    fn synthetic_records_pass_validation() {
        let corpus = synthetic_corpus(500, 7);
        assert_eq!(corpus.records.len(), 500);
        for r in &corpus.records {
            assert!(r.structure_issues().is_empty(), "{:?}", r.structure_issues());
            let report = validate_record(r);
            assert!(report.passed, "{:?}", report.violations);
        }
        for r in &corpus.records {
            for img in &r.images {
                assert!(corpus.image_bytes(&img.payload_ref).is_some());
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(synthetic_corpus(50, 3), synthetic_corpus(50, 3));
        assert_ne!(synthetic_corpus(50, 3), synthetic_corpus(50, 4));
    }

    #[test]
    fn minimal_record_is_valid_minimal() {
        let r = minimal_record();
        assert!(validate_record(&r).passed);
        assert!(crate::record::completeness_profile(&r).is_valid_minimal());
    }
}
