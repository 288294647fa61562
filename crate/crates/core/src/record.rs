//! Process–structure–property experiment record.
//!
//! Required fields are modelled as `Option`/possibly-empty collections so that
//! incomplete submissions can still be represented, stored in a flagged state
//! and reported on. Presence is enforced by the schema rules in
//! [`crate::evvr`], not by the type.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest;
use crate::emcv::MorphologyAnnotation;
use crate::units::{Quantity, UnitError, UnitKind, UnitRegistry};

const RATIO_SUM_TOLERANCE: f64 = 1e-6;

/// Permanent identifier assigned on acceptance: `ESD-` + six digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccessionId(u32);

impl AccessionId {
    pub const PREFIX: &'static str = "ESD-";

    pub fn new(n: u32) -> Self {
        assert!(n >= 1, "accession numbers start at 1");
        AccessionId(n)
    }

    pub fn number(self) -> u32 {
        self.0
    }

    pub fn next(self) -> Self {
        AccessionId(self.0 + 1)
    }
}

impl fmt::Display for AccessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:06}", Self::PREFIX, self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid accession id {0:?}")]
pub struct InvalidAccession(pub String);

impl FromStr for AccessionId {
    type Err = InvalidAccession;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s
            .strip_prefix(Self::PREFIX)
            .filter(|d| d.len() >= 6 && d.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| InvalidAccession(s.to_owned()))?;
        match digits.parse::<u32>() {
            Ok(n) if n >= 1 && AccessionId(n).to_string() == s => Ok(AccessionId(n)),
            _ => Err(InvalidAccession(s.to_owned())),
        }
    }
}

impl Serialize for AccessionId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccessionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolymerComponent {
    pub polymer_id: String,
    /// Batch mass or molecular weight; the unit tells which.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polymer_weight: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_ratio: Option<f64>,
}

impl PolymerComponent {
    pub fn named(id: &str) -> Self {
        Self {
            polymer_id: id.to_owned(),
            polymer_weight: None,
            weight_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolventComponent {
    pub solvent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Quantity>,
}

impl SolventComponent {
    pub fn named(id: &str) -> Self {
        Self {
            solvent_id: id.to_owned(),
            volume_ratio: None,
            weight: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concentration: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub viscosity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_tension: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductivity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaporation_rate: Option<Quantity>,
    #[serde(default, alias = "pH", skip_serializing_if = "Option::is_none")]
    pub ph: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessParameters {
    /// Signed: negative values encode reversed polarity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow_rate: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tip_collector_distance: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spinning_duration: Option<Quantity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientConditions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub humidity: Option<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeedleClass {
    SingleNeedle,
    MultiNeedle,
    Coaxial,
    Needleless,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectorClass {
    FlatPlate,
    RotatingDrum,
    RotatingDisk,
    Patterned,
    LiquidBath,
    Other,
}

macro_rules! class_names {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(<$ty>::$variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {} {other:?}", stringify!($ty))),
                }
            }
        }
    };
}

class_names!(NeedleClass {
    SingleNeedle => "single_needle",
    MultiNeedle => "multi_needle",
    Coaxial => "coaxial",
    Needleless => "needleless",
    Other => "other",
});

class_names!(CollectorClass {
    FlatPlate => "flat_plate",
    RotatingDrum => "rotating_drum",
    RotatingDisk => "rotating_disk",
    Patterned => "patterned",
    LiquidBath => "liquid_bath",
    Other => "other",
});

fn empty_document() -> Value {
    Value::Object(Default::default())
}

fn is_empty_document(v: &Value) -> bool {
    v.as_object().is_some_and(|o| o.is_empty())
}

/// Needle configuration: typed class plus a free-form geometry document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needle_type: Option<NeedleClass>,
    #[serde(default = "empty_document", skip_serializing_if = "is_empty_document")]
    pub needle_definition: Value,
}

impl Default for NeedleConfig {
    fn default() -> Self {
        Self {
            needle_type: None,
            needle_definition: empty_document(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collector_type: Option<CollectorClass>,
    #[serde(default = "empty_document", skip_serializing_if = "is_empty_document")]
    pub collector_definition: Value,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        Self {
            collector_type: None,
            collector_definition: empty_document(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_diameter: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diameter_variation: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_formation_stable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_weight: Option<Quantity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicalProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensile_strength: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elongation_at_break: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracture_behavior: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_area: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub porosity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_conductivity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permeability: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrical_conductivity: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wettability: Option<Quantity>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedProperties {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanical: Option<MechanicalProperties>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<FunctionalProperties>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub application_type: Vec<String>,
}

/// Code from the instability registry. Unknown codes are accepted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstabilityTag {
    pub instability_id: String,
}

impl InstabilityTag {
    pub fn new(id: &str) -> Self {
        Self {
            instability_id: id.to_owned(),
        }
    }
}

/// Seed set of the instability registry (provisional, extensible).
pub const SEED_INSTABILITIES: &[&str] = &[
    "jet_breakup",
    "dripping",
    "electrospraying",
    "bead_dominated",
    "jet_instability_whipping_excess",
    "clogging",
    "film_formation",
    "no_jet",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageType {
    Sem,
    Optical,
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageDefinition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnification: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_bar: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_notes: Option<String>,
    /// Original file name; its extension names the file in release archives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ImageDefinition {
    pub fn extension(&self) -> &str {
        self.file_name
            .as_deref()
            .and_then(|n| n.rsplit_once('.'))
            .map(|(_, ext)| ext)
            .filter(|ext| !ext.is_empty() && ext.bytes().all(|b| b.is_ascii_alphanumeric()))
            .unwrap_or("bin")
    }
}

/// Content address of stored image bytes: `sha256:<hex>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PayloadRef(String);

impl PayloadRef {
    pub const PREFIX: &'static str = "sha256:";

    pub fn for_bytes(bytes: &[u8]) -> Self {
        PayloadRef(format!("{}{}", Self::PREFIX, digest::sha256_hex(bytes)))
    }

    pub fn hex(&self) -> &str {
        &self.0[Self::PREFIX.len()..]
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PayloadRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for PayloadRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix(Self::PREFIX) {
            Some(h) if h.len() == 64 && h.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) => {
                Ok(PayloadRef(s.to_owned()))
            }
            _ => Err(format!("invalid payload reference {s:?}")),
        }
    }
}

impl Serialize for PayloadRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for PayloadRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    pub image_type: ImageType,
    #[serde(default)]
    pub image_definition: ImageDefinition,
    pub payload_ref: PayloadRef,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    Literature,
    DirectContribution,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bibliographic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contributor_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contributor_contact: Option<String>,
    #[serde(default)]
    pub source_kind: SourceKind,
}

fn filled(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|s| !s.trim().is_empty())
}

impl Provenance {
    pub fn has_attribution(&self) -> bool {
        filled(&self.contributor_name) && filled(&self.contributor_contact)
    }

    /// A DOI for literature records; direct contributions are traced
    /// through their contributor attribution instead.
    pub fn has_source_identifier(&self) -> bool {
        match self.source_kind {
            SourceKind::Literature => filled(&self.doi),
            SourceKind::DirectContribution => true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<AccessionId>,
    #[serde(default)]
    pub polymers: Vec<PolymerComponent>,
    #[serde(default)]
    pub solvents: Vec<SolventComponent>,
    #[serde(default)]
    pub solution: SolutionProperties,
    #[serde(default)]
    pub process: ProcessParameters,
    #[serde(default)]
    pub ambient: AmbientConditions,
    #[serde(default)]
    pub needle: NeedleConfig,
    #[serde(default)]
    pub collector: CollectorConfig,
    #[serde(default)]
    pub fiber: FiberProperties,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub morphology: Option<MorphologyAnnotation>,
    #[serde(default)]
    pub instabilities: Vec<InstabilityTag>,
    #[serde(default)]
    pub images: Vec<ImageRef>,
    #[serde(default)]
    pub derived: DerivedProperties,
    #[serde(default)]
    pub provenance: Provenance,
}

/// Where a quantity lives in the record and which units it accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantitySlot {
    pub path: String,
    pub kinds: &'static [UnitKind],
    /// Field-specific storage unit; `None` uses the kind's default.
    pub canonical: Option<&'static str>,
}

impl QuantitySlot {
    fn fixed(path: &str, kinds: &'static [UnitKind], canonical: Option<&'static str>) -> Self {
        Self {
            path: path.to_owned(),
            kinds,
            canonical,
        }
    }

    /// Storage unit for a quantity of `kind` in this slot.
    pub fn target_unit(&self, kind: UnitKind) -> &'static str {
        self.canonical.unwrap_or_else(|| kind.default_canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {source}")]
pub struct FieldUnitError {
    pub path: String,
    #[source]
    pub source: UnitError,
}

use UnitKind as K;

macro_rules! quantity_slots {
    ($r:expr, $as:ident, $iter:ident) => {{
        let r = $r;
        let mut out = Vec::new();
        for (i, p) in r.polymers.$iter().enumerate() {
            out.push((
                QuantitySlot::fixed(&format!("polymers[{i}].polymer_weight"), &[K::Mass, K::MolarMass], None),
                p.polymer_weight.$as(),
            ));
        }
        for (i, s) in r.solvents.$iter().enumerate() {
            out.push((QuantitySlot::fixed(&format!("solvents[{i}].weight"), &[K::Mass], None), s.weight.$as()));
        }
        out.push((QuantitySlot::fixed("solution.concentration", &[K::MassFraction], Some("wt%")), r.solution.concentration.$as()));
        out.push((QuantitySlot::fixed("solution.viscosity", &[K::Viscosity], None), r.solution.viscosity.$as()));
        out.push((QuantitySlot::fixed("solution.surface_tension", &[K::SurfaceTension], None), r.solution.surface_tension.$as()));
        out.push((QuantitySlot::fixed("solution.conductivity", &[K::Conductivity], None), r.solution.conductivity.$as()));
        out.push((QuantitySlot::fixed("solution.evaporation_rate", &[K::Rate], None), r.solution.evaporation_rate.$as()));
        out.push((QuantitySlot::fixed("process.voltage", &[K::Voltage], Some("kV")), r.process.voltage.$as()));
        out.push((QuantitySlot::fixed("process.flow_rate", &[K::FlowRate], Some("mL/h")), r.process.flow_rate.$as()));
        out.push((QuantitySlot::fixed("process.tip_collector_distance", &[K::Length], Some("cm")), r.process.tip_collector_distance.$as()));
        out.push((QuantitySlot::fixed("process.spinning_duration", &[K::Time], Some("min")), r.process.spinning_duration.$as()));
        out.push((QuantitySlot::fixed("ambient.temperature", &[K::Temperature], Some("°C")), r.ambient.temperature.$as()));
        out.push((QuantitySlot::fixed("ambient.humidity", &[K::RelativeHumidity], Some("%RH")), r.ambient.humidity.$as()));
        out.push((QuantitySlot::fixed("fiber.fiber_diameter", &[K::Length], Some("nm")), r.fiber.fiber_diameter.$as()));
        out.push((QuantitySlot::fixed("fiber.diameter_variation", &[K::Fraction], Some("%")), r.fiber.diameter_variation.$as()));
        out.push((QuantitySlot::fixed("fiber.fiber_weight", &[K::Mass], None), r.fiber.fiber_weight.$as()));
        for (i, img) in r.images.$iter().enumerate() {
            out.push((
                QuantitySlot::fixed(&format!("images[{i}].image_definition.scale_bar"), &[K::Length], Some("µm")),
                img.image_definition.scale_bar.$as(),
            ));
        }
        if let Some(m) = r.derived.mechanical.$as() {
            out.push((QuantitySlot::fixed("derived.mechanical.tensile_strength", &[K::PressureLike], Some("MPa")), m.tensile_strength.$as()));
            out.push((QuantitySlot::fixed("derived.mechanical.modulus", &[K::PressureLike], Some("MPa")), m.modulus.$as()));
            out.push((QuantitySlot::fixed("derived.mechanical.elongation_at_break", &[K::Fraction], Some("%")), m.elongation_at_break.$as()));
        }
        if let Some(f) = r.derived.functional.$as() {
            out.push((QuantitySlot::fixed("derived.functional.surface_area", &[K::AreaPerMass], None), f.surface_area.$as()));
            out.push((QuantitySlot::fixed("derived.functional.porosity", &[K::Fraction], Some("%")), f.porosity.$as()));
            out.push((QuantitySlot::fixed("derived.functional.thermal_conductivity", &[K::ThermalConductivity], None), f.thermal_conductivity.$as()));
            out.push((QuantitySlot::fixed("derived.functional.permeability", &[K::Permeability], None), f.permeability.$as()));
            out.push((QuantitySlot::fixed("derived.functional.electrical_conductivity", &[K::Conductivity], None), f.electrical_conductivity.$as()));
            out.push((QuantitySlot::fixed("derived.functional.wettability", &[K::Angle], None), f.wettability.$as()));
        }
        out
    }};
}

/// Problems that make a document structurally unacceptable regardless of the
/// validation rules.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct StructureIssue {
    pub path: String,
    pub message: String,
}

impl ExperimentRecord {
    /// Every quantity slot, present or not, with its path.
    pub fn quantity_slots(&self) -> Vec<(QuantitySlot, Option<&Quantity>)> {
        quantity_slots!(self, as_ref, iter)
    }

    fn quantity_slots_mut(&mut self) -> Vec<(QuantitySlot, Option<&mut Quantity>)> {
        quantity_slots!(self, as_mut, iter_mut)
    }

    /// Canonical, byte-stable serialization.
    pub fn canonical_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("record serializes")
    }

    pub fn content_digest(&self) -> String {
        digest::sha256_hex(&self.canonical_json())
    }

    /// Fiber diameter, morphology, or at least one instability tag.
    pub fn has_outcome(&self) -> bool {
        self.fiber.fiber_diameter.is_some()
            || self.morphology.is_some()
            || !self.instabilities.is_empty()
    }

    pub fn polymer_ids(&self) -> impl Iterator<Item = &str> {
        self.polymers.iter().map(|p| p.polymer_id.as_str())
    }

    pub fn solvent_ids(&self) -> impl Iterator<Item = &str> {
        self.solvents.iter().map(|s| s.solvent_id.as_str())
    }

    /// Construction-level invariants. Rule-level checks (required fields,
    /// physical bounds, unit resolution) live in the validation catalog.
    pub fn structure_issues(&self) -> Vec<StructureIssue> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: &str| {
            issues.push(StructureIssue {
                path,
                message: message.to_owned(),
            })
        };
        for (i, p) in self.polymers.iter().enumerate() {
            if p.polymer_id.trim().is_empty() {
                issue(format!("polymers[{i}].polymer_id"), "must not be empty");
            }
            if let Some(r) = p.weight_ratio {
                if !(r > 0.0 && r <= 1.0) {
                    issue(format!("polymers[{i}].weight_ratio"), "must be in (0, 1]");
                }
            }
        }
        for (i, s) in self.solvents.iter().enumerate() {
            if s.solvent_id.trim().is_empty() {
                issue(format!("solvents[{i}].solvent_id"), "must not be empty");
            }
            if let Some(r) = s.volume_ratio {
                if !(r > 0.0 && r <= 1.0) {
                    issue(format!("solvents[{i}].volume_ratio"), "must be in (0, 1]");
                }
            }
        }
        let weight_ratios: Option<Vec<f64>> = self.polymers.iter().map(|p| p.weight_ratio).collect();
        if let Some(ratios) = weight_ratios.filter(|r| r.len() > 1) {
            if (ratios.iter().sum::<f64>() - 1.0).abs() > RATIO_SUM_TOLERANCE {
                issue("polymers".into(), "weight ratios must sum to 1");
            }
        }
        let volume_ratios: Option<Vec<f64>> = self.solvents.iter().map(|s| s.volume_ratio).collect();
        if let Some(ratios) = volume_ratios.filter(|r| r.len() > 1) {
            if (ratios.iter().sum::<f64>() - 1.0).abs() > RATIO_SUM_TOLERANCE {
                issue("solvents".into(), "volume ratios must sum to 1");
            }
        }
        if let Some(c) = &self.solution.concentration {
            if c.value <= 0.0 {
                issue("solution.concentration".into(), "must be positive");
            }
        }
        if let Some(ph) = self.solution.ph {
            if !(0.0..=14.0).contains(&ph) {
                issue("solution.ph".into(), "must be within [0, 14]");
            }
        }
        if !self.needle.needle_definition.is_object() {
            issue("needle.needle_definition".into(), "must be a structured document");
        }
        if !self.collector.collector_definition.is_object() {
            issue("collector.collector_definition".into(), "must be a structured document");
        }
        for (i, t) in self.instabilities.iter().enumerate() {
            if t.instability_id.trim().is_empty() {
                issue(format!("instabilities[{i}].instability_id"), "must not be empty");
            }
        }
        for (i, img) in self.images.iter().enumerate() {
            if let Some(m) = img.image_definition.magnification {
                if !(m.is_finite() && m > 0.0) {
                    issue(format!("images[{i}].image_definition.magnification"), "must be positive");
                }
            }
        }
        for (i, a) in self.derived.application_type.iter().enumerate() {
            if a.trim().is_empty() {
                issue(format!("derived.application_type[{i}]"), "must not be empty");
            }
        }
        issues
    }

    /// Unit problems per quantity: unresolvable symbols and kinds the field
    /// does not accept.
    pub fn unit_issues(&self) -> Vec<FieldUnitError> {
        let registry = UnitRegistry::standard();
        self.quantity_slots()
            .into_iter()
            .filter_map(|(slot, q)| {
                let q = q?;
                check_slot_unit(registry, &slot, q)
                    .err()
                    .map(|source| FieldUnitError {
                        path: slot.path,
                        source,
                    })
            })
            .collect()
    }
}

fn check_slot_unit(registry: &UnitRegistry, slot: &QuantitySlot, q: &Quantity) -> Result<Quantity, UnitError> {
    let unit = registry.resolve(&q.unit)?;
    if !slot.kinds.contains(&unit.kind) {
        let to_kind = slot.kinds[0];
        return Err(UnitError::IncompatibleUnits {
            from: unit.symbol.to_owned(),
            from_kind: unit.kind,
            to: slot.target_unit(to_kind).to_owned(),
            to_kind,
        });
    }
    registry.convert(q, slot.target_unit(unit.kind))
}

/// Converts one quantity into the storage unit of the slot it occupies.
pub fn normalize_quantity(slot: &QuantitySlot, q: &Quantity) -> Result<Quantity, FieldUnitError> {
    check_slot_unit(UnitRegistry::standard(), slot, q).map_err(|source| FieldUnitError {
        path: slot.path.clone(),
        source,
    })
}

/// Expresses every quantity in its field's storage unit. Idempotent.
pub fn normalize_record(r: &ExperimentRecord) -> Result<ExperimentRecord, FieldUnitError> {
    let mut out = r.clone();
    for (slot, q) in out.quantity_slots_mut() {
        if let Some(q) = q {
            *q = normalize_quantity(&slot, q)?;
        }
    }
    Ok(out)
}

/// Required elements of a minimal valid record, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RequiredElement {
    SourceIdentifier,
    PolymerIdentity,
    SolventIdentity,
    Concentration,
    Voltage,
    FlowRate,
    TipCollectorDistance,
    NeedleClass,
    CollectorClass,
    OutcomeDescriptor,
}

impl RequiredElement {
    pub const ALL: [RequiredElement; 10] = [
        RequiredElement::SourceIdentifier,
        RequiredElement::PolymerIdentity,
        RequiredElement::SolventIdentity,
        RequiredElement::Concentration,
        RequiredElement::Voltage,
        RequiredElement::FlowRate,
        RequiredElement::TipCollectorDistance,
        RequiredElement::NeedleClass,
        RequiredElement::CollectorClass,
        RequiredElement::OutcomeDescriptor,
    ];

    pub fn field_path(self) -> &'static str {
        match self {
            RequiredElement::SourceIdentifier => "provenance.doi",
            RequiredElement::PolymerIdentity => "polymers",
            RequiredElement::SolventIdentity => "solvents",
            RequiredElement::Concentration => "solution.concentration",
            RequiredElement::Voltage => "process.voltage",
            RequiredElement::FlowRate => "process.flow_rate",
            RequiredElement::TipCollectorDistance => "process.tip_collector_distance",
            RequiredElement::NeedleClass => "needle.needle_type",
            RequiredElement::CollectorClass => "collector.collector_type",
            RequiredElement::OutcomeDescriptor => "outcome",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            RequiredElement::SourceIdentifier => "traceable source identifier (DOI)",
            RequiredElement::PolymerIdentity => "polymer identity",
            RequiredElement::SolventIdentity => "solvent identity",
            RequiredElement::Concentration => "solution concentration",
            RequiredElement::Voltage => "applied voltage",
            RequiredElement::FlowRate => "flow rate",
            RequiredElement::TipCollectorDistance => "tip-to-collector distance",
            RequiredElement::NeedleClass => "needle configuration class",
            RequiredElement::CollectorClass => "collector configuration class",
            RequiredElement::OutcomeDescriptor => {
                "outcome descriptor (fiber diameter, morphology or instability)"
            }
        }
    }

    pub fn is_present(self, r: &ExperimentRecord) -> bool {
        match self {
            RequiredElement::SourceIdentifier => r.provenance.has_source_identifier(),
            RequiredElement::PolymerIdentity => !r.polymers.is_empty(),
            RequiredElement::SolventIdentity => !r.solvents.is_empty(),
            RequiredElement::Concentration => r.solution.concentration.is_some(),
            RequiredElement::Voltage => r.process.voltage.is_some(),
            RequiredElement::FlowRate => r.process.flow_rate.is_some(),
            RequiredElement::TipCollectorDistance => r.process.tip_collector_distance.is_some(),
            RequiredElement::NeedleClass => r.needle.needle_type.is_some(),
            RequiredElement::CollectorClass => r.collector.collector_type.is_some(),
            RequiredElement::OutcomeDescriptor => r.has_outcome(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupStatus {
    RequiredPresent,
    RequiredMissing,
    OptionalPresent,
    OptionalAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionalGroup {
    SolutionProperties,
    SpinningDuration,
    Ambient,
    FiberDetails,
    Morphology,
    Instabilities,
    Images,
    MechanicalProperties,
    FunctionalProperties,
    ApplicationProperties,
}

impl OptionalGroup {
    pub const ALL: [OptionalGroup; 10] = [
        OptionalGroup::SolutionProperties,
        OptionalGroup::SpinningDuration,
        OptionalGroup::Ambient,
        OptionalGroup::FiberDetails,
        OptionalGroup::Morphology,
        OptionalGroup::Instabilities,
        OptionalGroup::Images,
        OptionalGroup::MechanicalProperties,
        OptionalGroup::FunctionalProperties,
        OptionalGroup::ApplicationProperties,
    ];

    pub fn is_present(self, r: &ExperimentRecord) -> bool {
        let s = &r.solution;
        match self {
            OptionalGroup::SolutionProperties => {
                s.viscosity.is_some()
                    || s.surface_tension.is_some()
                    || s.conductivity.is_some()
                    || s.evaporation_rate.is_some()
                    || s.ph.is_some()
            }
            OptionalGroup::SpinningDuration => r.process.spinning_duration.is_some(),
            OptionalGroup::Ambient => {
                r.ambient.temperature.is_some() || r.ambient.humidity.is_some()
            }
            OptionalGroup::FiberDetails => {
                r.fiber.diameter_variation.is_some()
                    || r.fiber.is_formation_stable.is_some()
                    || r.fiber.fiber_weight.is_some()
            }
            OptionalGroup::Morphology => r.morphology.is_some(),
            OptionalGroup::Instabilities => !r.instabilities.is_empty(),
            OptionalGroup::Images => !r.images.is_empty(),
            OptionalGroup::MechanicalProperties => r.derived.mechanical.is_some(),
            OptionalGroup::FunctionalProperties => r.derived.functional.is_some(),
            OptionalGroup::ApplicationProperties => !r.derived.application_type.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletenessProfile {
    pub required: BTreeMap<RequiredElement, GroupStatus>,
    pub optional: BTreeMap<OptionalGroup, GroupStatus>,
}

impl CompletenessProfile {
    /// True when every required element is present.
    pub fn is_valid_minimal(&self) -> bool {
        self.required
            .values()
            .all(|s| *s == GroupStatus::RequiredPresent)
    }

    pub fn missing(&self) -> Vec<RequiredElement> {
        self.required
            .iter()
            .filter(|(_, s)| **s == GroupStatus::RequiredMissing)
            .map(|(e, _)| *e)
            .collect()
    }
}

pub fn completeness_profile(r: &ExperimentRecord) -> CompletenessProfile {
    let required = RequiredElement::ALL
        .into_iter()
        .map(|e| {
            let status = if e.is_present(r) {
                GroupStatus::RequiredPresent
            } else {
                GroupStatus::RequiredMissing
            };
            (e, status)
        })
        .collect();
    let optional = OptionalGroup::ALL
        .into_iter()
        .map(|g| {
            let status = if g.is_present(r) {
                GroupStatus::OptionalPresent
            } else {
                GroupStatus::OptionalAbsent
            };
            (g, status)
        })
        .collect();
    CompletenessProfile { required, optional }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn accession_format() {
        let id = AccessionId::new(1);
        assert_eq!(id.to_string(), "ESD-000001");
        assert_eq!("ESD-000042".parse::<AccessionId>().unwrap(), AccessionId::new(42));
        assert_eq!("ESD-1234567".parse::<AccessionId>().unwrap().number(), 1_234_567);
        for bad in ["ESD-1", "ESD-000000", "XYZ-000001", "ESD-00000a", "ESD-0000001"] {
            assert!(bad.parse::<AccessionId>().is_err(), "{bad}");
        }
    }

    #[test]
    fn normalizes_to_canonical_units() {
        let mut r = fixtures::golden_record();
        r.process.voltage = Some(Quantity::of(15000.0, "V"));
        r.process.tip_collector_distance = Some(Quantity::of(150.0, "mm"));
        r.process.flow_rate = Some(Quantity::of(0.005, "mL/min"));
        let n = normalize_record(&r).unwrap();
        assert_eq!(n.process.voltage, Some(Quantity::of(15.0, "kV")));
        assert_eq!(n.process.tip_collector_distance, Some(Quantity::of(15.0, "cm")));
        assert_eq!(n.process.flow_rate, Some(Quantity::of(0.3, "mL/h")));
        assert_eq!(normalize_record(&n).unwrap(), n);
    }

    #[test]
    fn canonical_record_is_unchanged() {
        let r = fixtures::golden_record();
        assert_eq!(normalize_record(&r).unwrap(), r);
    }

    #[test]
    fn normalization_reports_field_path() {
        let mut r = fixtures::golden_record();
        r.process.tip_collector_distance = Some(Quantity::of(3.0, "kV"));
        let err = normalize_record(&r).unwrap_err();
        assert_eq!(err.path, "process.tip_collector_distance");
        assert!(matches!(err.source, UnitError::IncompatibleUnits { .. }));
    }

    #[test]
    fn completeness_classification() {
        let full = fixtures::golden_record();
        let p = completeness_profile(&full);
        assert!(p.is_valid_minimal());
        assert!(p.optional.values().all(|s| *s == GroupStatus::OptionalPresent));

        let mut no_ambient = full.clone();
        no_ambient.ambient = AmbientConditions::default();
        let p = completeness_profile(&no_ambient);
        assert_eq!(p.optional[&OptionalGroup::Ambient], GroupStatus::OptionalAbsent);
        assert!(p.is_valid_minimal());

        let mut no_conc = full;
        no_conc.solution.concentration = None;
        let p = completeness_profile(&no_conc);
        assert_eq!(p.required[&RequiredElement::Concentration], GroupStatus::RequiredMissing);
        assert_eq!(p.missing(), vec![RequiredElement::Concentration]);
    }

    #[test]
    fn images_and_derived_alone_are_not_outcomes() {
        let mut r = fixtures::golden_record();
        r.fiber.fiber_diameter = None;
        r.morphology = None;
        r.instabilities.clear();
        assert!(!r.images.is_empty());
        assert!(r.derived.mechanical.is_some());
        assert!(!r.has_outcome());
    }

    #[test]
    fn structure_issues_cover_ratios_and_ph() {
        let mut r = fixtures::golden_record();
        assert!(r.structure_issues().is_empty());
        r.polymers = vec![
            PolymerComponent { weight_ratio: Some(0.6), ..PolymerComponent::named("PVA") },
            PolymerComponent { weight_ratio: Some(0.6), ..PolymerComponent::named("PEO") },
        ];
        r.solution.ph = Some(15.0);
        let paths: Vec<_> = r.structure_issues().into_iter().map(|i| i.path).collect();
        assert_eq!(paths, vec!["polymers", "solution.ph"]);
    }

    #[test]
    fn serialization_uses_table_field_names() {
        let r = fixtures::golden_record();
        let v: Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["process"]["voltage"]["unit"], "kV");
        assert_eq!(v["needle"]["needle_type"], "single_needle");
        assert_eq!(v["collector"]["collector_type"], "flat_plate");
        let back: ExperimentRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<ExperimentRecord>(r#"{"polymerz": []}"#).is_err());
    }
}
