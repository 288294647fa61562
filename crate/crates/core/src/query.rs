//! Structured filters over accepted records and summary statistics of the
//! selected values.
//!
//! Quartiles use linear interpolation between closest ranks at zero-indexed
//! position `(n - 1) * p`. Histograms use equal-width bins over `[min, max]`,
//! right-open except the last.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emcv::{Axis, VocabularyCatalog};
use crate::record::{AccessionId, CollectorClass, ExperimentRecord, NeedleClass};
use crate::units::{Quantity, UnitRegistry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("no values selected for any requested field")]
    EmptySelection,
    #[error("histogram needs at least one bin")]
    InvalidBins,
}

fn invalid(msg: impl Into<String>) -> QueryError {
    QueryError::InvalidFilter(msg.into())
}

macro_rules! numeric_fields {
    ($($variant:ident => $key:literal, $unit:literal, |$r:ident| $get:expr;)+) => {
        /// Numeric record fields that can be range-filtered and summarized.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum NumericField {
            $($variant),+
        }

        impl NumericField {
            pub const ALL: &'static [NumericField] = &[$(NumericField::$variant),+];

            pub fn key(self) -> &'static str {
                match self {
                    $(NumericField::$variant => $key),+
                }
            }

            /// Unit in which ranges and statistics are expressed.
            pub fn canonical_unit(self) -> &'static str {
                match self {
                    $(NumericField::$variant => $unit),+
                }
            }

            fn quantity(self, r: &ExperimentRecord) -> Option<Quantity> {
                match self {
                    $(NumericField::$variant => { let $r = r; $get }),+
                }
            }
        }
    };
}

numeric_fields! {
    Concentration => "concentration", "wt%", |r| r.solution.concentration.clone();
    Viscosity => "viscosity", "cP", |r| r.solution.viscosity.clone();
    SurfaceTension => "surface_tension", "mN/m", |r| r.solution.surface_tension.clone();
    Conductivity => "conductivity", "S/m", |r| r.solution.conductivity.clone();
    EvaporationRate => "evaporation_rate", "mg/h", |r| r.solution.evaporation_rate.clone();
    Ph => "ph", "pH", |r| r.solution.ph.map(|v| Quantity::of(v, "pH"));
    Voltage => "voltage", "kV", |r| r.process.voltage.clone();
    FlowRate => "flow_rate", "mL/h", |r| r.process.flow_rate.clone();
    TipCollectorDistance => "tip_collector_distance", "cm", |r| r.process.tip_collector_distance.clone();
    SpinningDuration => "spinning_duration", "min", |r| r.process.spinning_duration.clone();
    Temperature => "temperature", "°C", |r| r.ambient.temperature.clone();
    Humidity => "humidity", "%RH", |r| r.ambient.humidity.clone();
    FiberDiameter => "fiber_diameter", "nm", |r| r.fiber.fiber_diameter.clone();
    DiameterVariation => "diameter_variation", "%", |r| r.fiber.diameter_variation.clone();
    FiberWeight => "fiber_weight", "mg", |r| r.fiber.fiber_weight.clone();
    MorphologySize => "morphology_size", "nm", |r| r.morphology.as_ref().and_then(|m| m.descriptor().size_nm).map(|v| Quantity::of(v, "nm"));
    MorphologySizeVariation => "morphology_size_variation", "%", |r| r.morphology.as_ref().and_then(|m| m.descriptor().size_variation_pct).map(|v| Quantity::of(v, "%"));
    TensileStrength => "tensile_strength", "MPa", |r| r.derived.mechanical.as_ref().and_then(|m| m.tensile_strength.clone());
    Modulus => "modulus", "MPa", |r| r.derived.mechanical.as_ref().and_then(|m| m.modulus.clone());
    ElongationAtBreak => "elongation_at_break", "%", |r| r.derived.mechanical.as_ref().and_then(|m| m.elongation_at_break.clone());
    SurfaceArea => "surface_area", "m²/g", |r| r.derived.functional.as_ref().and_then(|f| f.surface_area.clone());
    Porosity => "porosity", "%", |r| r.derived.functional.as_ref().and_then(|f| f.porosity.clone());
    ThermalConductivity => "thermal_conductivity", "W/(m·K)", |r| r.derived.functional.as_ref().and_then(|f| f.thermal_conductivity.clone());
    Permeability => "permeability", "mm/s", |r| r.derived.functional.as_ref().and_then(|f| f.permeability.clone());
    ElectricalConductivity => "electrical_conductivity", "S/m", |r| r.derived.functional.as_ref().and_then(|f| f.electrical_conductivity.clone());
    Wettability => "wettability", "°", |r| r.derived.functional.as_ref().and_then(|f| f.wettability.clone());
}

impl NumericField {
    /// Value in the canonical unit, or `None` when absent or unconvertible.
    pub fn value(self, r: &ExperimentRecord) -> Option<f64> {
        let q = self.quantity(r)?;
        let unit = self.canonical_unit();
        if q.unit == unit {
            return Some(q.value);
        }
        UnitRegistry::standard().convert(&q, unit).ok().map(|q| q.value)
    }
}

impl fmt::Display for NumericField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for NumericField {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = match s {
            "distance" => "tip_collector_distance",
            "duration" => "spinning_duration",
            other => other,
        };
        NumericField::ALL
            .iter()
            .copied()
            .find(|f| f.key() == s)
            .ok_or_else(|| invalid(format!("unknown numeric field {s:?}")))
    }
}

/// Closed interval; bounds are in `unit` when given, else canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl RangeSpec {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max, unit: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polymer_ids: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvent_ids: Option<BTreeSet<String>>,
    /// Require every component to be in the requested set instead of any.
    #[serde(default)]
    pub exclusive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needle_class: Option<NeedleClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collector_class: Option<CollectorClass>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ranges: BTreeMap<NumericField, RangeSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub morphology_terms: BTreeMap<Axis, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instability_ids: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub has_images: Option<bool>,
}

fn set_of(items: &[&str]) -> Option<BTreeSet<String>> {
    Some(items.iter().map(|s| s.to_string()).collect())
}

impl FilterSpec {
    pub fn polymers(mut self, ids: &[&str]) -> Self {
        self.polymer_ids = set_of(ids);
        self
    }

    pub fn solvents(mut self, ids: &[&str]) -> Self {
        self.solvent_ids = set_of(ids);
        self
    }

    pub fn range(mut self, field: NumericField, min: f64, max: f64) -> Self {
        self.ranges.insert(field, RangeSpec::new(min, max));
        self
    }

    /// Parses URL-style parameters: `polymer`, `solvent` (repeatable or
    /// comma-separated), `exclusive`, `needle`, `collector`, `instability`,
    /// `has_images`, `morphology.<axis>=<term>`, and `<numeric field>=min:max`
    /// in canonical units.
    pub fn from_params<'a>(params: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, QueryError> {
        let mut spec = FilterSpec::default();
        let add = |set: &mut Option<BTreeSet<String>>, v: &str| {
            let set = set.get_or_insert_with(BTreeSet::new);
            set.extend(v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned));
        };
        let parse_bool = |k: &str, v: &str| match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(invalid(format!("{k} must be true or false"))),
        };
        for (key, value) in params {
            match key {
                "polymer" | "polymer_id" => add(&mut spec.polymer_ids, value),
                "solvent" | "solvent_id" => add(&mut spec.solvent_ids, value),
                "instability" | "instability_id" => add(&mut spec.instability_ids, value),
                "exclusive" => spec.exclusive = parse_bool(key, value)?,
                "has_images" => spec.has_images = Some(parse_bool(key, value)?),
                "needle" | "needle_class" => {
                    spec.needle_class = Some(value.parse().map_err(|_| invalid(format!("unknown needle class {value:?}")))?)
                }
                "collector" | "collector_class" => {
                    spec.collector_class =
                        Some(value.parse().map_err(|_| invalid(format!("unknown collector class {value:?}")))?)
                }
                _ => {
                    if let Some(axis) = key.strip_prefix("morphology.") {
                        let axis = Axis::from_key(axis).ok_or_else(|| invalid(format!("unknown morphology axis {axis:?}")))?;
                        spec.morphology_terms.insert(axis, value.to_owned());
                    } else {
                        let field: NumericField = key.parse()?;
                        spec.ranges.insert(field, parse_range(value)?);
                    }
                }
            }
        }
        Ok(spec)
    }

    /// Checks the spec and converts ranges to canonical units.
    pub fn compile(&self) -> Result<CompiledFilter, QueryError> {
        for (name, set) in [("polymer_ids", &self.polymer_ids), ("solvent_ids", &self.solvent_ids), ("instability_ids", &self.instability_ids)] {
            if set.as_ref().is_some_and(BTreeSet::is_empty) {
                return Err(invalid(format!("{name} must not be an empty set")));
            }
        }
        let mut ranges = Vec::with_capacity(self.ranges.len());
        for (&field, range) in &self.ranges {
            let (mut lo, mut hi) = (range.min, range.max);
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("{field}: bounds must be finite")));
            }
            if let Some(unit) = range.unit.as_deref().filter(|u| *u != field.canonical_unit()) {
                let convert = |v: f64| {
                    UnitRegistry::standard()
                        .convert(&Quantity::of(v, unit), field.canonical_unit())
                        .map(|q| q.value)
                        .map_err(|e| invalid(format!("{field}: {e}")))
                };
                lo = convert(lo)?;
                hi = convert(hi)?;
            }
            if lo > hi {
                return Err(invalid(format!("{field}: empty interval [{}, {}]", range.min, range.max)));
            }
            ranges.push((field, lo, hi));
        }
        let catalog = VocabularyCatalog::global();
        for (&axis, term) in &self.morphology_terms {
            if !axis.is_categorical() {
                return Err(invalid(format!("morphology axis {axis} is quantitative; use a range on morphology_{axis}")));
            }
            let known = catalog
                .versions()
                .iter()
                .filter_map(|v| catalog.get(v).ok())
                .any(|vocab| vocab.contains(axis, term));
            if !known {
                return Err(invalid(format!("{term:?} is not a {} term", axis.name())));
            }
        }
        Ok(CompiledFilter { spec: self.clone(), ranges })
    }
}

fn parse_range(value: &str) -> Result<RangeSpec, QueryError> {
    let (lo, hi) = value
        .split_once(':')
        .ok_or_else(|| invalid(format!("range {value:?} must have the form min:max")))?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| invalid(format!("range bound {s:?} is not a number")))
    };
    Ok(RangeSpec::new(num(lo)?, num(hi)?))
}

#[derive(Debug, Clone)]
pub struct CompiledFilter {
    spec: FilterSpec,
    ranges: Vec<(NumericField, f64, f64)>,
}

fn set_matches<'a>(wanted: &Option<BTreeSet<String>>, mut ids: impl Iterator<Item = &'a str>, exclusive: bool) -> bool {
    let Some(wanted) = wanted else { return true };
    if exclusive {
        let mut any = false;
        let all = ids.all(|id| {
            any = true;
            wanted.contains(id)
        });
        any && all
    } else {
        ids.any(|id| wanted.contains(id))
    }
}

impl CompiledFilter {
    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn matches(&self, r: &ExperimentRecord) -> bool {
        let s = &self.spec;
        if !set_matches(&s.polymer_ids, r.polymer_ids(), s.exclusive)
            || !set_matches(&s.solvent_ids, r.solvent_ids(), s.exclusive)
        {
            return false;
        }
        if s.needle_class.is_some() && r.needle.needle_type != s.needle_class {
            return false;
        }
        if s.collector_class.is_some() && r.collector.collector_type != s.collector_class {
            return false;
        }
        if let Some(wanted) = s.has_images {
            if r.images.is_empty() == wanted {
                return false;
            }
        }
        if let Some(ids) = &s.instability_ids {
            if !r.instabilities.iter().any(|t| ids.contains(&t.instability_id)) {
                return false;
            }
        }
        if !s.morphology_terms.is_empty() {
            let Some(m) = &r.morphology else { return false };
            let d = m.descriptor();
            for (&axis, term) in &s.morphology_terms {
                let hit = match axis {
                    Axis::Defects => d.defects.contains(term),
                    _ => d.term(axis) == Some(term.as_str()),
                };
                if !hit {
                    return false;
                }
            }
        }
        self.ranges.iter().all(|&(field, lo, hi)| {
            field.value(r).is_some_and(|v| lo <= v && v <= hi)
        })
    }
}

/// Ids of all matching records, ordered by accession.
pub fn execute_filter<'a>(records: impl IntoIterator<Item = &'a ExperimentRecord>, spec: &FilterSpec) -> Result<Vec<AccessionId>, QueryError> {
    let filter = spec.compile()?;
    let mut ids: Vec<AccessionId> = records
        .into_iter()
        .filter(|r| filter.matches(r))
        .filter_map(|r| r.record_id)
        .collect();
    ids.sort();
    Ok(ids)
}

/// Median of sorted values: the middle element, or the mean of the two
/// middle elements.
pub fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) / 2.0),
    }
}

/// Empirical quantile of sorted values at probability `p` in [0, 1].
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n || frac == 0.0 {
        return Some(sorted[lo.min(n - 1)]);
    }
    Some(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub field: NumericField,
    pub unit: &'static str,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl FieldSummary {
    pub fn of_values(field: NumericField, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        FieldSummary {
            field,
            unit: field.canonical_unit(),
            n: values.len(),
            median: median(&values),
            q1: quantile(&values, 0.25),
            q3: quantile(&values, 0.75),
            min: values.first().copied(),
            max: values.last().copied(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub field: NumericField,
    pub unit: &'static str,
    pub bins: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    /// Number of selected records.
    pub n: usize,
    pub fields: Vec<FieldSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

fn field_values(records: &[&ExperimentRecord], field: NumericField) -> Vec<f64> {
    records.iter().filter_map(|r| field.value(r)).collect()
}

/// Per-field statistics; records missing a field are dropped for that field
/// only.
pub fn summarize(records: &[&ExperimentRecord], fields: &[NumericField]) -> Result<SummaryStats, QueryError> {
    let stats = summarize_lenient(records, fields);
    if stats.fields.iter().all(|f| f.n == 0) {
        return Err(QueryError::EmptySelection);
    }
    Ok(stats)
}

/// Like [`summarize`] but reports `n = 0` fields instead of failing.
pub fn summarize_lenient(records: &[&ExperimentRecord], fields: &[NumericField]) -> SummaryStats {
    SummaryStats {
        n: records.len(),
        fields: fields
            .iter()
            .map(|&f| FieldSummary::of_values(f, field_values(records, f)))
            .collect(),
        histogram: None,
    }
}

/// Equal-width bins spanning the observed values. When all values are
/// equal a single bin `[v, v]` holds them all.
pub fn histogram_of(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>, QueryError> {
    if bins == 0 {
        return Err(QueryError::InvalidBins);
    }
    if values.is_empty() {
        return Err(QueryError::EmptySelection);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Ok(vec![HistogramBin {
            lower: min,
            upper: max,
            count: values.len(),
        }]);
    }
    let width = (max - min) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| min + width * i as f64).collect();
    edges.push(max);
    let interior = &edges[1..bins];
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[interior.partition_point(|&e| e <= v)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: edges[i],
            upper: edges[i + 1],
            count,
        })
        .collect())
}

pub fn histogram(records: &[&ExperimentRecord], field: NumericField, bins: usize) -> Result<Histogram, QueryError> {
    Ok(Histogram {
        field,
        unit: field.canonical_unit(),
        bins: histogram_of(&field_values(records, field), bins)?,
    })
}
