//! Automated validation rules: schema rules (`S-*`) for required fields,
//! attribution and units, and physical rules (`P-*`) for plausibility bounds.
//!
//! Physical rules read canonical values (kV, mL/h, nm, °C, %RH). A quantity
//! whose unit cannot be converted is reported once by `S-03` and skipped by
//! the physical rules.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::record::{normalize_quantity, ExperimentRecord, RequiredElement};

pub const CATALOG_VERSION: &str = "1.0";

pub const TEMPERATURE_BOUNDS_C: (f64, f64) = (-50.0, 200.0);
pub const HUMIDITY_BOUNDS_PCT: (f64, f64) = (0.0, 100.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleClass {
    Schema,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// Blocks the submission until corrected.
    Reject,
    /// Stored with the violation attached. No catalog rule uses it yet.
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleDescriptor {
    pub rule_id: &'static str,
    pub rule_class: RuleClass,
    pub description: &'static str,
    pub severity: Severity,
}

pub const S_REQUIRED: &str = "S-01";
pub const S_ATTRIBUTION: &str = "S-02";
pub const S_UNITS: &str = "S-03";
pub const P_VOLTAGE: &str = "P-VOLT";
pub const P_FLOW: &str = "P-FLOW";
pub const P_DIAMETER: &str = "P-DIAM";
pub const P_TEMPERATURE: &str = "P-TEMP";
pub const P_HUMIDITY: &str = "P-HUM";

const CATALOG: &[RuleDescriptor] = &[
    RuleDescriptor {
        rule_id: S_REQUIRED,
        rule_class: RuleClass::Schema,
        description: "Mandatory fields present: source identifier, polymer and solvent identity, \
                      concentration, voltage, flow rate, tip-to-collector distance, needle and \
                      collector class, and at least one outcome descriptor",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: S_ATTRIBUTION,
        rule_class: RuleClass::Schema,
        description: "Contributor attribution (name and contact) present",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: S_UNITS,
        rule_class: RuleClass::Schema,
        description: "Every quantity uses a registered unit convertible to its field's canonical unit",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: P_VOLTAGE,
        rule_class: RuleClass::Physical,
        description: "Applied voltage is non-zero (either polarity)",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: P_FLOW,
        rule_class: RuleClass::Physical,
        description: "Flow rate is strictly positive",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: P_DIAMETER,
        rule_class: RuleClass::Physical,
        description: "Fiber diameter, when reported, is strictly positive",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: P_TEMPERATURE,
        rule_class: RuleClass::Physical,
        description: "Temperature, when reported, lies within [-50, 200] °C",
        severity: Severity::Reject,
    },
    RuleDescriptor {
        rule_id: P_HUMIDITY,
        rule_class: RuleClass::Physical,
        description: "Relative humidity, when reported, lies within [0, 100] %RH",
        severity: Severity::Reject,
    },
];

pub fn rule_catalog() -> &'static [RuleDescriptor] {
    CATALOG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub field_path: String,
    pub observed: String,
    pub message: String,
}

impl Violation {
    fn new(rule_id: &str, field_path: &str, observed: String, message: String) -> Self {
        Self {
            rule_id: rule_id.to_owned(),
            field_path: field_path.to_owned(),
            observed,
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub record_ref: String,
    pub catalog_version: String,
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub evaluated_at: DateTime<Utc>,
}

impl ValidationReport {
    pub fn new(record_ref: String, violations: Vec<Violation>, evaluated_at: DateTime<Utc>) -> Self {
        Self {
            record_ref,
            catalog_version: CATALOG_VERSION.to_owned(),
            passed: violations.is_empty(),
            violations,
            evaluated_at,
        }
    }

    pub fn rule_ids(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule_id.as_str()).collect()
    }

    pub fn has(&self, rule_id: &str) -> bool {
        self.violations.iter().any(|v| v.rule_id == rule_id)
    }
}

/// Accession id when assigned, otherwise the content digest.
pub fn record_ref(r: &ExperimentRecord) -> String {
    match r.record_id {
        Some(id) => id.to_string(),
        None => format!("sha256:{}", r.content_digest()),
    }
}

pub fn check_s_rules(r: &ExperimentRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    for element in RequiredElement::ALL {
        if !element.is_present(r) {
            out.push(Violation::new(
                S_REQUIRED,
                element.field_path(),
                "missing".into(),
                format!("required: {}", element.description()),
            ));
        }
    }
    if !r.provenance.has_attribution() {
        out.push(Violation::new(
            S_ATTRIBUTION,
            "provenance.contributor",
            "missing".into(),
            "contributor name and contact are required".into(),
        ));
    }
    for issue in r.unit_issues() {
        let observed = r
            .quantity_slots()
            .into_iter()
            .find(|(slot, _)| slot.path == issue.path)
            .and_then(|(_, q)| q.map(|q| q.to_string()))
            .unwrap_or_default();
        out.push(Violation::new(
            S_UNITS,
            &issue.path,
            observed,
            issue.source.to_string(),
        ));
    }
    out
}

/// Canonical value of a quantity field, or `None` when absent or not
/// convertible.
fn canonical_value(r: &ExperimentRecord, path: &str) -> Option<f64> {
    r.quantity_slots()
        .into_iter()
        .find(|(slot, _)| slot.path == path)
        .and_then(|(slot, q)| normalize_quantity(&slot, q?).ok())
        .map(|q| q.value)
}

pub fn check_p_rules(r: &ExperimentRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut fire = |rule: &str, path: &str, value: f64, unit: &str, message: &str| {
        out.push(Violation::new(rule, path, format!("{value} {unit}"), message.to_owned()));
    };
    if let Some(v) = canonical_value(r, "process.voltage") {
        if v == 0.0 {
            fire(P_VOLTAGE, "process.voltage", v, "kV", "applied voltage must be non-zero");
        }
    }
    if let Some(v) = canonical_value(r, "process.flow_rate") {
        if v <= 0.0 {
            fire(P_FLOW, "process.flow_rate", v, "mL/h", "flow rate must be positive");
        }
    }
    if let Some(v) = canonical_value(r, "fiber.fiber_diameter") {
        if v <= 0.0 {
            fire(P_DIAMETER, "fiber.fiber_diameter", v, "nm", "fiber diameter must be positive");
        }
    }
    if let Some(v) = canonical_value(r, "ambient.temperature") {
        let (lo, hi) = TEMPERATURE_BOUNDS_C;
        if !(lo..=hi).contains(&v) {
            fire(P_TEMPERATURE, "ambient.temperature", v, "°C", "temperature must lie within [-50, 200] °C");
        }
    }
    if let Some(v) = canonical_value(r, "ambient.humidity") {
        let (lo, hi) = HUMIDITY_BOUNDS_PCT;
        if !(lo..=hi).contains(&v) {
            fire(P_HUMIDITY, "ambient.humidity", v, "%RH", "relative humidity must lie within [0, 100] %RH");
        }
    }
    out
}

pub fn validate_record_at(r: &ExperimentRecord, at: DateTime<Utc>) -> ValidationReport {
    let mut violations = check_s_rules(r);
    violations.extend(check_p_rules(r));
    ValidationReport::new(record_ref(r), violations, at)
}

/// Runs the full catalog; every violation is reported.
pub fn validate_record(r: &ExperimentRecord) -> ValidationReport {
    validate_record_at(r, Utc::now())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::golden_record;
    use crate::units::Quantity;
    use std::collections::HashSet;

    #[test]
    fn golden_record_passes() {
        let r = golden_record();
        assert_eq!(r.process.voltage, Some(Quantity::of(20.0, "kV")));
        let report = validate_record(&r);
        assert!(report.passed, "{:?}", report.violations);
        assert_eq!(report.catalog_version, CATALOG_VERSION);
    }

    #[test]
    fn humidity_out_of_range() {
        let mut r = golden_record();
        r.ambient.humidity = Some(Quantity::of(150.0, "%RH"));
        let report = validate_record(&r);
        assert!(!report.passed);
        assert_eq!(report.rule_ids(), vec![P_HUMIDITY]);
    }

    #[test]
    fn missing_attribution() {
        let mut r = golden_record();
        r.provenance.contributor_name = None;
        assert_eq!(validate_record(&r).rule_ids(), vec![S_ATTRIBUTION]);
    }

    #[test]
    fn s_rule_examples() {
        let mut r = golden_record();
        r.solution.concentration = None;
        let v = check_s_rules(&r);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].rule_id.as_str(), v[0].field_path.as_str()), (S_REQUIRED, "solution.concentration"));

        let mut r = golden_record();
        r.fiber.fiber_diameter = None;
        r.morphology = None;
        r.instabilities.clear();
        let v = check_s_rules(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field_path, "outcome");

        let mut r = golden_record();
        r.process.tip_collector_distance = Some(Quantity::of(0.1, "furlong"));
        let v = check_s_rules(&r);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule_id, S_UNITS);
        assert_eq!(v[0].observed, "0.1 furlong");
    }

    #[test]
    fn p_rule_examples() {
        let with = |f: &dyn Fn(&mut ExperimentRecord)| {
            let mut r = golden_record();
            f(&mut r);
            check_p_rules(&r).into_iter().map(|v| v.rule_id).collect::<Vec<_>>()
        };
        assert_eq!(with(&|r| r.process.voltage = Some(Quantity::of(0.0, "kV"))), vec![P_VOLTAGE]);
        assert_eq!(with(&|r| r.process.flow_rate = Some(Quantity::of(-0.1, "mL/h"))), vec![P_FLOW]);
        assert!(with(&|r| {
            r.ambient.temperature = Some(Quantity::of(-50.0, "°C"));
            r.ambient.humidity = Some(Quantity::of(100.0, "%RH"));
        })
        .is_empty());
        assert_eq!(with(&|r| r.ambient.temperature = Some(Quantity::of(200.1, "°C"))), vec![P_TEMPERATURE]);
        assert!(with(&|r| r.process.voltage = Some(Quantity::of(-15.0, "kV"))).is_empty());
        assert_eq!(with(&|r| r.fiber.fiber_diameter = Some(Quantity::of(0.0, "nm"))), vec![P_DIAMETER]);
    }

    #[test]
    fn p_rules_use_canonical_units() {
        let mut r = golden_record();
        r.process.flow_rate = Some(Quantity::of(5.0, "µL/min"));
        r.fiber.fiber_diameter = Some(Quantity::of(0.25, "µm"));
        assert!(check_p_rules(&r).is_empty());
        // not convertible: S-03 only, no physical rule
        r.process.voltage = Some(Quantity::of(0.0, "cm"));
        let report = validate_record(&r);
        assert_eq!(report.rule_ids(), vec![S_UNITS]);
    }

    #[test]
    fn absent_optionals_fire_nothing() {
        let mut r = golden_record();
        r.ambient.temperature = None;
        r.ambient.humidity = None;
        assert!(check_p_rules(&r).is_empty());
    }

    #[test]
    fn catalog_shape() {
        let cat = rule_catalog();
        assert_eq!(cat.iter().filter(|r| r.rule_class == RuleClass::Schema).count(), 3);
        assert_eq!(cat.iter().filter(|r| r.rule_class == RuleClass::Physical).count(), 5);
        let ids: HashSet<_> = cat.iter().map(|r| r.rule_id).collect();
        assert_eq!(ids.len(), cat.len());
        assert!(cat.iter().all(|r| r.severity == Severity::Reject));
    }

    #[test]
    fn report_order_follows_catalog_and_is_deterministic() {
        let mut r = golden_record();
        r.ambient.humidity = Some(Quantity::of(-1.0, "%RH"));
        r.process.voltage = Some(Quantity::of(0.0, "kV"));
        r.provenance.contributor_contact = None;
        r.solvents.clear();
        let at = Utc::now();
        let a = validate_record_at(&r, at);
        let b = validate_record_at(&r, at);
        assert_eq!(a, b);
        assert_eq!(a.rule_ids(), vec![S_REQUIRED, S_ATTRIBUTION, P_VOLTAGE, P_HUMIDITY]);
    }
}
