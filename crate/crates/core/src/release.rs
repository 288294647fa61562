//! Versioned dataset releases.
//!
//! A release is a set of byte-deterministic artifacts built from the
//! accepted records in accession order: the flattened `dataset.csv`, a
//! spreadsheet rendering of it, one CSV per record group in `tables.zip`,
//! the linked images in `images.zip`, and `manifest.json`. Artifacts are
//! written once and served from memory afterwards, so serving never touches
//! the record store.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::archive::write_zip;
use crate::digest::sha256_hex;
use crate::emcv::{render_number, BUILTIN_VERSION};
use crate::evvr::CATALOG_VERSION;
use crate::record::{ExperimentRecord, PayloadRef};
use crate::store::{Backend, Store, StoreError, SCHEMA_VERSION};
use crate::units::{Quantity, UnitRegistry};

/// Column layout of `dataset.csv`, in order.
pub const DATASET_HEADER: [&str; 41] = [
    "record_id",
    "doi",
    "polymers",
    "polymer_weight_ratios",
    "solvents",
    "solvent_volume_ratios",
    "concentration_wtpct",
    "viscosity",
    "surface_tension",
    "conductivity",
    "evaporation_rate",
    "ph",
    "voltage_kv",
    "flow_rate_ml_h",
    "distance_cm",
    "duration_min",
    "temperature_c",
    "humidity_pct",
    "needle_class",
    "needle_definition",
    "collector_class",
    "collector_definition",
    "fiber_diameter_nm",
    "diameter_variation_pct",
    "is_formation_stable",
    "fiber_weight",
    "morphology_emcv",
    "instabilities",
    "image_count",
    "tensile_strength",
    "modulus",
    "elongation_at_break",
    "fracture_behavior",
    "surface_area",
    "porosity",
    "thermal_conductivity",
    "permeability",
    "electrical_conductivity",
    "wettability",
    "application_types",
    "vocabulary_version",
];

const LIST_SEPARATOR: &str = ";";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Dataset,
    Spreadsheet,
    Tables,
    Images,
    Manifest,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Dataset,
        ArtifactKind::Spreadsheet,
        ArtifactKind::Tables,
        ArtifactKind::Images,
        ArtifactKind::Manifest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Dataset => "dataset",
            ArtifactKind::Spreadsheet => "spreadsheet",
            ArtifactKind::Tables => "tables",
            ArtifactKind::Images => "images",
            ArtifactKind::Manifest => "manifest",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            ArtifactKind::Dataset => "dataset.csv",
            ArtifactKind::Spreadsheet => "dataset.xml",
            ArtifactKind::Tables => "tables.zip",
            ArtifactKind::Images => "images.zip",
            ArtifactKind::Manifest => "manifest.json",
        }
    }

    pub fn media_type(self) -> &'static str {
        match self {
            ArtifactKind::Dataset => "text/csv; charset=utf-8",
            ArtifactKind::Spreadsheet => "application/xml",
            ArtifactKind::Tables | ArtifactKind::Images => "application/zip",
            ArtifactKind::Manifest => "application/json",
        }
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactKind {
    type Err = ReleaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArtifactKind::ALL
            .into_iter()
            .find(|a| a.name() == s || a.file_name() == s)
            .ok_or_else(|| ReleaseError::UnknownArtifact(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseManifest {
    pub label: String,
    pub released_at: NaiveDate,
    pub record_count: usize,
    pub image_count: usize,
    pub dataset_digest: String,
    pub spreadsheet_digest: String,
    pub tables_digest: String,
    pub images_digest: String,
    /// Vocabulary versions used by the released morphology annotations,
    /// `;`-separated.
    pub vocabulary_version: String,
    pub catalog_version: String,
    pub schema_version: String,
}

impl ReleaseManifest {
    pub fn digest_of(&self, kind: ArtifactKind) -> Option<&str> {
        match kind {
            ArtifactKind::Dataset => Some(&self.dataset_digest),
            ArtifactKind::Spreadsheet => Some(&self.spreadsheet_digest),
            ArtifactKind::Tables => Some(&self.tables_digest),
            ArtifactKind::Images => Some(&self.images_digest),
            ArtifactKind::Manifest => None,
        }
    }

    pub fn number(&self) -> u32 {
        parse_label(&self.label).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReleaseError {
    #[error("no accepted records since the last release")]
    NothingToRelease,
    #[error("another release cut is in progress")]
    ConcurrentCut,
    #[error("unknown release {0:?}")]
    UnknownRelease(String),
    #[error("unknown artifact {0:?}")]
    UnknownArtifact(String),
    #[error("release archive is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub fn parse_label(label: &str) -> Option<u32> {
    let n = label.strip_prefix('v')?;
    if n.starts_with('0') || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    n.parse().ok().filter(|&n| n >= 1)
}

pub fn label_for(n: u32) -> String {
    format!("v{n}")
}

fn value_in(q: &Quantity, unit: &str) -> Option<f64> {
    if q.unit == unit {
        return Some(q.value);
    }
    UnitRegistry::standard().convert(q, unit).ok().map(|q| q.value)
}

fn num_in(q: &Option<Quantity>, unit: &str) -> String {
    q.as_ref().and_then(|q| value_in(q, unit)).map(render_number).unwrap_or_default()
}

fn with_unit(q: &Option<Quantity>) -> String {
    q.as_ref()
        .map(|q| format!("{} {}", render_number(q.value), q.unit))
        .unwrap_or_default()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(render_number).unwrap_or_default()
}

fn opt_text(v: &Option<String>) -> String {
    v.clone().unwrap_or_default()
}

fn ratios(values: impl Iterator<Item = Option<f64>>) -> String {
    let values: Vec<Option<f64>> = values.collect();
    if values.iter().all(Option::is_none) {
        return String::new();
    }
    values.into_iter().map(opt_num).collect::<Vec<_>>().join(LIST_SEPARATOR)
}

/// JSON with object keys sorted at every level.
pub fn canonical_json(v: &Value) -> String {
    fn sort(v: &Value) -> Value {
        match v {
            Value::Object(map) => {
                let sorted: BTreeMap<&String, Value> = map.iter().map(|(k, v)| (k, sort(v))).collect();
                Value::Object(sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect())
            }
            Value::Array(items) => Value::Array(items.iter().map(sort).collect()),
            other => other.clone(),
        }
    }
    serde_json::to_string(&sort(v)).expect("json value serializes")
}

fn definition(v: &Value) -> String {
    match v {
        Value::Object(map) if map.is_empty() => String::new(),
        other => canonical_json(other),
    }
}

fn bool_text(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

/// One flattened row per record, in [`DATASET_HEADER`] order.
pub fn dataset_row(r: &ExperimentRecord) -> Vec<String> {
    let mech = r.derived.mechanical.clone().unwrap_or_default();
    let func = r.derived.functional.clone().unwrap_or_default();
    vec![
        r.record_id.map(|id| id.to_string()).unwrap_or_default(),
        opt_text(&r.provenance.doi),
        r.polymer_ids().collect::<Vec<_>>().join(LIST_SEPARATOR),
        ratios(r.polymers.iter().map(|p| p.weight_ratio)),
        r.solvent_ids().collect::<Vec<_>>().join(LIST_SEPARATOR),
        ratios(r.solvents.iter().map(|s| s.volume_ratio)),
        num_in(&r.solution.concentration, "wt%"),
        with_unit(&r.solution.viscosity),
        with_unit(&r.solution.surface_tension),
        with_unit(&r.solution.conductivity),
        with_unit(&r.solution.evaporation_rate),
        opt_num(r.solution.ph),
        num_in(&r.process.voltage, "kV"),
        num_in(&r.process.flow_rate, "mL/h"),
        num_in(&r.process.tip_collector_distance, "cm"),
        num_in(&r.process.spinning_duration, "min"),
        num_in(&r.ambient.temperature, "°C"),
        num_in(&r.ambient.humidity, "%RH"),
        r.needle.needle_type.map(|c| c.to_string()).unwrap_or_default(),
        definition(&r.needle.needle_definition),
        r.collector.collector_type.map(|c| c.to_string()).unwrap_or_default(),
        definition(&r.collector.collector_definition),
        num_in(&r.fiber.fiber_diameter, "nm"),
        num_in(&r.fiber.diameter_variation, "%"),
        bool_text(r.fiber.is_formation_stable),
        with_unit(&r.fiber.fiber_weight),
        r.morphology.as_ref().map(|m| m.encoded()).unwrap_or_default(),
        r.instabilities
            .iter()
            .map(|t| t.instability_id.as_str())
            .collect::<Vec<_>>()
            .join(LIST_SEPARATOR),
        r.images.len().to_string(),
        with_unit(&mech.tensile_strength),
        with_unit(&mech.modulus),
        with_unit(&mech.elongation_at_break),
        opt_text(&mech.fracture_behavior),
        with_unit(&func.surface_area),
        with_unit(&func.porosity),
        with_unit(&func.thermal_conductivity),
        with_unit(&func.permeability),
        with_unit(&func.electrical_conductivity),
        with_unit(&func.wettability),
        r.derived.application_type.join(LIST_SEPARATOR),
        r.morphology
            .as_ref()
            .map(|m| m.vocabulary_version().to_owned())
            .unwrap_or_default(),
    ]
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("writing to memory cannot fail");
    for row in rows {
        w.write_record(&row).expect("writing to memory cannot fail");
    }
    w.into_inner().expect("writing to memory cannot fail")
}

pub fn render_dataset(records: &[ExperimentRecord]) -> Vec<u8> {
    csv_bytes(&DATASET_HEADER, records.iter().map(dataset_row))
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// SpreadsheetML 2003 workbook with the same cells as `dataset.csv`.
/// Opens in common spreadsheet applications.
pub fn render_spreadsheet(records: &[ExperimentRecord]) -> Vec<u8> {
    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <?mso-application progid=\"Excel.Sheet\"?>\n\
         <Workbook xmlns=\"urn:schemas-microsoft-com:office:spreadsheet\" \
         xmlns:ss=\"urn:schemas-microsoft-com:office:spreadsheet\">\n\
         <Worksheet ss:Name=\"dataset\">\n<Table>\n",
    );
    let header = DATASET_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    for (i, row) in std::iter::once(header).chain(records.iter().map(dataset_row)).enumerate() {
        out.push_str("<Row>");
        for cell in row {
            if cell.is_empty() {
                out.push_str("<Cell/>");
            } else if i > 0 && cell.parse::<f64>().is_ok_and(f64::is_finite) && !cell.starts_with(['+', '.']) {
                out.push_str(&format!("<Cell><Data ss:Type=\"Number\">{cell}</Data></Cell>"));
            } else {
                out.push_str(&format!("<Cell><Data ss:Type=\"String\">{}</Data></Cell>", xml_escape(&cell)));
            }
        }
        out.push_str("</Row>\n");
    }
    out.push_str("</Table>\n</Worksheet>\n</Workbook>\n");
    out.into_bytes()
}

fn qcols(q: &Option<Quantity>) -> [String; 2] {
    match q {
        Some(q) => [render_number(q.value), q.unit.clone()],
        None => [String::new(), String::new()],
    }
}

macro_rules! row {
    ($($cell:expr),* $(,)?) => {{
        let mut row: Vec<String> = Vec::new();
        $(row.extend(IntoCells::cells($cell));)*
        row
    }};
}

trait IntoCells {
    fn cells(self) -> Vec<String>;
}

impl IntoCells for String {
    fn cells(self) -> Vec<String> {
        vec![self]
    }
}

impl IntoCells for [String; 2] {
    fn cells(self) -> Vec<String> {
        self.to_vec()
    }
}

/// One CSV per record group, keyed by `record_id`, plus the unit registry.
pub fn render_tables(records: &[ExperimentRecord], image_paths: &BTreeMap<(String, PayloadRef), String>) -> Vec<u8> {
    let id = |r: &ExperimentRecord| r.record_id.map(|i| i.to_string()).unwrap_or_default();
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut table = |name: &str, header: &[&str], rows: Vec<Vec<String>>| {
        files.insert(format!("{name}.csv"), csv_bytes(header, rows));
    };

    table(
        "experiment_records",
        &["record_id", "doi", "title", "bibliographic", "contributor_name", "source_kind"],
        records
            .iter()
            .map(|r| {
                let p = &r.provenance;
                let kind = serde_json::to_value(p.source_kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                row![id(r), opt_text(&p.doi), opt_text(&p.title), opt_text(&p.bibliographic), opt_text(&p.contributor_name), kind]
            })
            .collect(),
    );
    table(
        "polymers",
        &["record_id", "position", "polymer_id", "polymer_weight", "polymer_weight_unit", "weight_ratio"],
        records
            .iter()
            .flat_map(|r| {
                r.polymers.iter().enumerate().map(move |(i, p)| {
                    row![id(r), (i + 1).to_string(), p.polymer_id.clone(), qcols(&p.polymer_weight), opt_num(p.weight_ratio)]
                })
            })
            .collect(),
    );
    table(
        "solvents",
        &["record_id", "position", "solvent_id", "volume_ratio", "weight", "weight_unit"],
        records
            .iter()
            .flat_map(|r| {
                r.solvents.iter().enumerate().map(move |(i, s)| {
                    row![id(r), (i + 1).to_string(), s.solvent_id.clone(), opt_num(s.volume_ratio), qcols(&s.weight)]
                })
            })
            .collect(),
    );
    table(
        "solution_properties",
        &[
            "record_id", "concentration", "concentration_unit", "viscosity", "viscosity_unit", "surface_tension",
            "surface_tension_unit", "conductivity", "conductivity_unit", "evaporation_rate", "evaporation_rate_unit", "ph",
        ],
        records
            .iter()
            .map(|r| {
                let s = &r.solution;
                row![id(r), qcols(&s.concentration), qcols(&s.viscosity), qcols(&s.surface_tension), qcols(&s.conductivity), qcols(&s.evaporation_rate), opt_num(s.ph)]
            })
            .collect(),
    );
    table(
        "process_parameters",
        &[
            "record_id", "voltage", "voltage_unit", "flow_rate", "flow_rate_unit", "tip_collector_distance",
            "tip_collector_distance_unit", "spinning_duration", "spinning_duration_unit",
        ],
        records
            .iter()
            .map(|r| {
                let p = &r.process;
                row![id(r), qcols(&p.voltage), qcols(&p.flow_rate), qcols(&p.tip_collector_distance), qcols(&p.spinning_duration)]
            })
            .collect(),
    );
    table(
        "ambient_conditions",
        &["record_id", "temperature", "temperature_unit", "humidity", "humidity_unit"],
        records
            .iter()
            .map(|r| row![id(r), qcols(&r.ambient.temperature), qcols(&r.ambient.humidity)])
            .collect(),
    );
    table(
        "needle_configurations",
        &["record_id", "needle_type", "needle_definition"],
        records
            .iter()
            .map(|r| {
                row![id(r), r.needle.needle_type.map(|c| c.to_string()).unwrap_or_default(), canonical_json(&r.needle.needle_definition)]
            })
            .collect(),
    );
    table(
        "collector_configurations",
        &["record_id", "collector_type", "collector_definition"],
        records
            .iter()
            .map(|r| {
                row![id(r), r.collector.collector_type.map(|c| c.to_string()).unwrap_or_default(), canonical_json(&r.collector.collector_definition)]
            })
            .collect(),
    );
    table(
        "fiber_properties",
        &[
            "record_id", "fiber_diameter", "fiber_diameter_unit", "diameter_variation", "diameter_variation_unit",
            "is_formation_stable", "fiber_weight", "fiber_weight_unit",
        ],
        records
            .iter()
            .map(|r| {
                let f = &r.fiber;
                row![id(r), qcols(&f.fiber_diameter), qcols(&f.diameter_variation), bool_text(f.is_formation_stable), qcols(&f.fiber_weight)]
            })
            .collect(),
    );
    table(
        "morphology",
        &[
            "record_id", "morphology_id", "shape", "topography", "size_nm", "size_variation_pct", "composition", "texture",
            "defects", "vocabulary_version",
        ],
        records
            .iter()
            .filter_map(|r| {
                let m = r.morphology.as_ref()?;
                let d = m.descriptor();
                Some(row![
                    id(r),
                    m.encoded(),
                    opt_text(&d.shape),
                    opt_text(&d.topography),
                    opt_num(d.size_nm),
                    opt_num(d.size_variation_pct),
                    opt_text(&d.composition),
                    opt_text(&d.texture),
                    d.defects.iter().cloned().collect::<Vec<_>>().join(LIST_SEPARATOR),
                    m.vocabulary_version().to_owned(),
                ])
            })
            .collect(),
    );
    table(
        "instabilities",
        &["record_id", "position", "instability_id"],
        records
            .iter()
            .flat_map(|r| {
                r.instabilities
                    .iter()
                    .enumerate()
                    .map(move |(i, t)| row![id(r), (i + 1).to_string(), t.instability_id.clone()])
            })
            .collect(),
    );
    table(
        "images",
        &["record_id", "position", "image_type", "payload_ref", "archive_path", "image_definition"],
        records
            .iter()
            .flat_map(|r| {
                r.images.iter().enumerate().map(move |(i, img)| {
                    let kind = serde_json::to_value(img.image_type)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default();
                    let definition = serde_json::to_value(&img.image_definition).expect("image definition serializes");
                    let path = image_paths
                        .get(&(id(r), img.payload_ref.clone()))
                        .cloned()
                        .unwrap_or_default();
                    row![id(r), (i + 1).to_string(), kind, img.payload_ref.to_string(), path, canonical_json(&definition)]
                })
            })
            .collect(),
    );
    table(
        "mechanical_properties",
        &[
            "record_id", "tensile_strength", "tensile_strength_unit", "modulus", "modulus_unit", "elongation_at_break",
            "elongation_at_break_unit", "fracture_behavior",
        ],
        records
            .iter()
            .filter_map(|r| {
                let m = r.derived.mechanical.as_ref()?;
                Some(row![id(r), qcols(&m.tensile_strength), qcols(&m.modulus), qcols(&m.elongation_at_break), opt_text(&m.fracture_behavior)])
            })
            .collect(),
    );
    table(
        "functional_properties",
        &[
            "record_id", "surface_area", "surface_area_unit", "porosity", "porosity_unit", "thermal_conductivity",
            "thermal_conductivity_unit", "permeability", "permeability_unit", "electrical_conductivity",
            "electrical_conductivity_unit", "wettability", "wettability_unit",
        ],
        records
            .iter()
            .filter_map(|r| {
                let f = r.derived.functional.as_ref()?;
                Some(row![
                    id(r),
                    qcols(&f.surface_area),
                    qcols(&f.porosity),
                    qcols(&f.thermal_conductivity),
                    qcols(&f.permeability),
                    qcols(&f.electrical_conductivity),
                    qcols(&f.wettability),
                ])
            })
            .collect(),
    );
    table(
        "applications",
        &["record_id", "position", "application_type"],
        records
            .iter()
            .flat_map(|r| {
                r.derived
                    .application_type
                    .iter()
                    .enumerate()
                    .map(move |(i, a)| row![id(r), (i + 1).to_string(), a.clone()])
            })
            .collect(),
    );
    table(
        "units",
        &["unit_id", "symbol", "kind", "scale", "offset"],
        UnitRegistry::standard()
            .units()
            .map(|u| row![u.unit_id.to_owned(), u.symbol.to_owned(), u.kind.to_string(), render_number(u.scale), render_number(u.offset)])
            .collect(),
    );
    write_zip(&files)
}

/// Archive paths per (record id, payload): `<record_id>/<hex>.<ext>`.
fn image_layout(records: &[ExperimentRecord]) -> BTreeMap<(String, PayloadRef), String> {
    let mut paths = BTreeMap::new();
    for r in records {
        let id = r.record_id.map(|i| i.to_string()).unwrap_or_default();
        for img in &r.images {
            let path = format!("{id}/{}.{}", img.payload_ref.hex(), img.image_definition.extension());
            paths.entry((id.clone(), img.payload_ref.clone())).or_insert(path);
        }
    }
    paths
}

pub fn render_images(layout: &BTreeMap<(String, PayloadRef), String>, images: &BTreeMap<PayloadRef, Vec<u8>>) -> Result<Vec<u8>, ReleaseError> {
    let mut files = BTreeMap::new();
    let mut index: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for ((_, r), path) in layout {
        let bytes = images
            .get(r)
            .ok_or_else(|| ReleaseError::Corrupt(format!("image {r} is missing")))?;
        files.insert(path.clone(), bytes.clone());
        index.entry(r.to_string()).or_default().push(path.clone());
    }
    files.insert("index.json".into(), serde_json::to_vec_pretty(&index).expect("index serializes"));
    Ok(write_zip(&files))
}

#[derive(Debug, Clone)]
pub struct ReleaseBundle {
    pub manifest: ReleaseManifest,
    artifacts: BTreeMap<ArtifactKind, Arc<Vec<u8>>>,
}

impl ReleaseBundle {
    pub fn artifact(&self, kind: ArtifactKind) -> Arc<Vec<u8>> {
        self.artifacts[&kind].clone()
    }
}

/// Builds every artifact of a release. A pure function of its inputs.
pub fn build_release(label: &str, released_at: NaiveDate, records: &[ExperimentRecord], images: &BTreeMap<PayloadRef, Vec<u8>>) -> Result<ReleaseBundle, ReleaseError> {
    let layout = image_layout(records);
    let dataset = render_dataset(records);
    let spreadsheet = render_spreadsheet(records);
    let tables = render_tables(records, &layout);
    let image_zip = render_images(&layout, images)?;
    let mut versions: Vec<&str> = records
        .iter()
        .filter_map(|r| r.morphology.as_ref().map(|m| m.vocabulary_version()))
        .collect();
    versions.sort();
    versions.dedup();
    let manifest = ReleaseManifest {
        label: label.to_owned(),
        released_at,
        record_count: records.len(),
        image_count: layout.len(),
        dataset_digest: sha256_hex(&dataset),
        spreadsheet_digest: sha256_hex(&spreadsheet),
        tables_digest: sha256_hex(&tables),
        images_digest: sha256_hex(&image_zip),
        vocabulary_version: if versions.is_empty() { BUILTIN_VERSION.to_owned() } else { versions.join(LIST_SEPARATOR) },
        catalog_version: CATALOG_VERSION.to_owned(),
        schema_version: SCHEMA_VERSION.to_owned(),
    };
    let manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let artifacts = [
        (ArtifactKind::Dataset, dataset),
        (ArtifactKind::Spreadsheet, spreadsheet),
        (ArtifactKind::Tables, tables),
        (ArtifactKind::Images, image_zip),
        (ArtifactKind::Manifest, manifest_bytes),
    ]
    .into_iter()
    .map(|(k, v)| (k, Arc::new(v)))
    .collect();
    Ok(ReleaseBundle { manifest, artifacts })
}

fn artifact_key(label: &str, kind: ArtifactKind) -> String {
    format!("releases/{label}/{}", kind.file_name())
}

fn load_bundle(backend: &dyn Backend, label: &str) -> Result<Option<ReleaseBundle>, ReleaseError> {
    let io = |e: std::io::Error| ReleaseError::Corrupt(e.to_string());
    let Some(manifest_bytes) = backend.get(&artifact_key(label, ArtifactKind::Manifest)).map_err(io)? else {
        return Ok(None);
    };
    let manifest: ReleaseManifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| ReleaseError::Corrupt(format!("{label}: {e}")))?;
    let mut artifacts = BTreeMap::new();
    for kind in ArtifactKind::ALL {
        let bytes = if kind == ArtifactKind::Manifest {
            manifest_bytes.clone()
        } else {
            backend
                .get(&artifact_key(label, kind))
                .map_err(io)?
                .ok_or_else(|| ReleaseError::Corrupt(format!("{label}: {} is missing", kind.file_name())))?
        };
        if let Some(expected) = manifest.digest_of(kind) {
            if sha256_hex(&bytes) != expected {
                return Err(ReleaseError::Corrupt(format!("{label}: {} digest mismatch", kind.file_name())));
            }
        }
        artifacts.insert(kind, Arc::new(bytes));
    }
    Ok(Some(ReleaseBundle { manifest, artifacts }))
}

/// Published releases, held in memory after the first load.
pub struct ReleaseArchive {
    backend: Arc<dyn Backend>,
    releases: RwLock<BTreeMap<u32, Arc<ReleaseBundle>>>,
    cutting: Mutex<()>,
}

impl ReleaseArchive {
    /// Loads every complete release under `releases/` and checks its digests.
    pub fn open(backend: Arc<dyn Backend>) -> Result<Self, ReleaseError> {
        let archive = Self {
            backend,
            releases: RwLock::new(BTreeMap::new()),
            cutting: Mutex::new(()),
        };
        archive.refresh()?;
        Ok(archive)
    }

    /// Picks up releases written to the backend by another process.
    pub fn refresh(&self) -> Result<usize, ReleaseError> {
        let io = |e: std::io::Error| ReleaseError::Corrupt(e.to_string());
        let mut added = 0;
        for dir in self.backend.list("releases").map_err(io)? {
            let label = dir.trim_start_matches("releases/").to_owned();
            let Some(n) = parse_label(&label) else { continue };
            if self.releases.read().unwrap().contains_key(&n) {
                continue;
            }
            if let Some(bundle) = load_bundle(self.backend.as_ref(), &label)? {
                self.releases.write().unwrap().entry(n).or_insert_with(|| Arc::new(bundle));
                added += 1;
            }
        }
        Ok(added)
    }

    /// Cuts the next release from all accepted records. Unless `force` is
    /// set, at least one record must be new since the previous release.
    pub fn cut(&self, store: &Store, released_at: NaiveDate, force: bool) -> Result<ReleaseManifest, ReleaseError> {
        let _cutting = self.cutting.try_lock().map_err(|_| ReleaseError::ConcurrentCut)?;
        let guard = store.begin_cut().map_err(|e| match e {
            StoreError::ConcurrentRelease => ReleaseError::ConcurrentCut,
            other => other.into(),
        })?;
        let (records, images) = store.release_view(&guard)?;
        self.refresh()?;
        let (next, last_count) = {
            let releases = self.releases.read().unwrap();
            let last = releases.values().next_back();
            (
                last.map_or(1, |b| b.manifest.number() + 1),
                last.map_or(0, |b| b.manifest.record_count),
            )
        };
        if !force && records.len() <= last_count {
            return Err(ReleaseError::NothingToRelease);
        }
        let label = label_for(next);
        let bundle = build_release(&label, released_at, &records, &images)?;
        drop(guard);

        let io = |e: std::io::Error| ReleaseError::Store(e.into());
        if self.backend.get(&artifact_key(&label, ArtifactKind::Manifest)).map_err(io)?.is_some() {
            return Err(ReleaseError::Corrupt(format!("{label} already exists on disk")));
        }
        for kind in ArtifactKind::ALL {
            self.backend
                .put(&artifact_key(&label, kind), &bundle.artifact(kind))
                .map_err(io)?;
        }
        let manifest = bundle.manifest.clone();
        self.releases.write().unwrap().insert(next, Arc::new(bundle));
        Ok(manifest)
    }

    /// All manifests in label order.
    pub fn list(&self) -> Vec<ReleaseManifest> {
        self.refresh().ok();
        self.releases
            .read()
            .unwrap()
            .values()
            .map(|b| b.manifest.clone())
            .collect()
    }

    pub fn manifest(&self, label: &str) -> Result<ReleaseManifest, ReleaseError> {
        Ok(self.bundle(label)?.manifest.clone())
    }

    fn bundle(&self, label: &str) -> Result<Arc<ReleaseBundle>, ReleaseError> {
        let unknown = || ReleaseError::UnknownRelease(label.to_owned());
        let n = parse_label(label).ok_or_else(unknown)?;
        if let Some(b) = self.releases.read().unwrap().get(&n) {
            return Ok(b.clone());
        }
        self.refresh().ok();
        self.releases.read().unwrap().get(&n).cloned().ok_or_else(unknown)
    }

    /// Cached artifact bytes. Never reads the record store.
    pub fn fetch(&self, label: &str, artifact: &str) -> Result<(ArtifactKind, Arc<Vec<u8>>), ReleaseError> {
        let bundle = self.bundle(label)?;
        let kind: ArtifactKind = artifact.parse()?;
        Ok((kind, bundle.artifact(kind)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{golden_image_bytes, golden_record};
    use crate::record::AccessionId;
    use crate::store::MemoryBackend;

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2026, 3, 1).unwrap()
    }

    fn stocked_store(n: u32) -> Store {
        let store = Store::in_memory();
        store.put_image(golden_image_bytes()).unwrap();
        for i in 1..=n {
            let mut r = golden_record();
            r.record_id = Some(AccessionId::new(i));
            store.put_accepted(r).unwrap();
        }
        store
    }

    #[test]
    fn golden_row_matches_header() {
        let mut r = golden_record();
        r.record_id = Some(AccessionId::new(1));
        let row = dataset_row(&r);
        assert_eq!(row.len(), DATASET_HEADER.len());
        let cell = |name: &str| row[DATASET_HEADER.iter().position(|h| *h == name).unwrap()].as_str();
        assert_eq!(cell("record_id"), "ESD-000001");
        assert_eq!(cell("voltage_kv"), "20");
        assert_eq!(cell("flow_rate_ml_h"), "0.3");
        assert_eq!(cell("distance_cm"), "15");
        assert_eq!(cell("concentration_wtpct"), "10");
        assert_eq!(cell("viscosity"), "350 cP");
        assert_eq!(cell("morphology_emcv"), "Cylinder|Random|250|12|Single Material|Smooth|Bead");
        assert_eq!(cell("needle_definition"), r#"{"gauge":22,"inner_diameter_mm":0.41}"#);
        assert_eq!(cell("image_count"), "1");
        assert_eq!(cell("temperature_c"), "25");
    }

    #[test]
    fn cut_list_fetch() {
        let dir = MemoryBackend::new();
        let backend: Arc<dyn Backend> = Arc::new(dir);
        let archive = ReleaseArchive::open(backend.clone()).unwrap();
        assert!(archive.list().is_empty());
        let store = stocked_store(3);
        let v1 = archive.cut(&store, date(), false).unwrap();
        assert_eq!(v1.label, "v1");
        assert_eq!(v1.record_count, 3);
        let (_, dataset) = archive.fetch("v1", "dataset").unwrap();
        assert_eq!(sha256_hex(&dataset), v1.dataset_digest);
        assert_eq!(dataset.iter().filter(|&&b| b == b'\n').count(), 4);
        assert_eq!(archive.cut(&store, date(), false), Err(ReleaseError::NothingToRelease));

        let v2 = archive.cut(&store, date(), true).unwrap();
        assert_eq!(v2.label, "v2");
        assert_eq!(v2.dataset_digest, v1.dataset_digest);
        assert_eq!(archive.list().iter().map(|m| m.label.as_str()).collect::<Vec<_>>(), ["v1", "v2"]);
        assert!(matches!(archive.fetch("v99", "dataset"), Err(ReleaseError::UnknownRelease(_))));
        assert!(matches!(archive.fetch("v1", "pdf"), Err(ReleaseError::UnknownArtifact(_))));

        let reopened = ReleaseArchive::open(backend).unwrap();
        assert_eq!(reopened.list(), archive.list());
        store.detach();
        assert_eq!(reopened.fetch("v1", "dataset").unwrap().1, dataset);
    }

    #[test]
    fn artifacts_are_deterministic() {
        let store = stocked_store(2);
        let guard = store.begin_cut().unwrap();
        let (records, images) = store.release_view(&guard).unwrap();
        let a = build_release("v1", date(), &records, &images).unwrap();
        let b = build_release("v1", date(), &records, &images).unwrap();
        for kind in ArtifactKind::ALL {
            assert_eq!(a.artifact(kind), b.artifact(kind), "{kind}");
        }
        let images_zip = crate::archive::read_zip(&a.artifact(ArtifactKind::Images)).unwrap();
        let hex = PayloadRef::for_bytes(&golden_image_bytes()).hex().to_owned();
        assert!(images_zip.contains_key(&format!("ESD-000001/{hex}.png")));
        assert!(images_zip.contains_key("index.json"));
        let tables = crate::archive::read_zip(&a.artifact(ArtifactKind::Tables)).unwrap();
        assert!(tables.contains_key("units.csv"));
        assert!(tables.contains_key("polymers.csv"));
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_label("v1"), Some(1));
        assert_eq!(parse_label("v12"), Some(12));
        assert_eq!(parse_label("v0"), None);
        assert_eq!(parse_label("v01"), None);
        assert_eq!(parse_label("1"), None);
    }
}
