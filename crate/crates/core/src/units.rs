//! Shared unit table and exact same-kind conversions.
//!
//! Every unit belongs to one [`UnitKind`] and carries an integer scale relative
//! to the smallest unit registered for that kind. Converting multiplies by the
//! source scale and divides by the target scale, so conversions between units
//! whose ratio is an integer power of ten (or 60) are exact in `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Voltage,
    FlowRate,
    Length,
    Temperature,
    RelativeHumidity,
    MassFraction,
    Mass,
    MolarMass,
    Viscosity,
    SurfaceTension,
    Conductivity,
    PressureLike,
    Fraction,
    Ph,
    Time,
    AreaPerMass,
    Rate,
    ThermalConductivity,
    Permeability,
    Angle,
}

impl UnitKind {
    pub const ALL: [UnitKind; 20] = [
        UnitKind::Voltage,
        UnitKind::FlowRate,
        UnitKind::Length,
        UnitKind::Temperature,
        UnitKind::RelativeHumidity,
        UnitKind::MassFraction,
        UnitKind::Mass,
        UnitKind::MolarMass,
        UnitKind::Viscosity,
        UnitKind::SurfaceTension,
        UnitKind::Conductivity,
        UnitKind::PressureLike,
        UnitKind::Fraction,
        UnitKind::Ph,
        UnitKind::Time,
        UnitKind::AreaPerMass,
        UnitKind::Rate,
        UnitKind::ThermalConductivity,
        UnitKind::Permeability,
        UnitKind::Angle,
    ];

    /// Unit that quantities of this kind are stored in when the field itself
    /// does not pin one.
    pub fn default_canonical(self) -> &'static str {
        match self {
            UnitKind::Voltage => "kV",
            UnitKind::FlowRate => "mL/h",
            UnitKind::Length => "cm",
            UnitKind::Temperature => "°C",
            UnitKind::RelativeHumidity => "%RH",
            UnitKind::MassFraction => "wt%",
            UnitKind::Mass => "mg",
            UnitKind::MolarMass => "g/mol",
            UnitKind::Viscosity => "cP",
            UnitKind::SurfaceTension => "mN/m",
            UnitKind::Conductivity => "S/m",
            UnitKind::PressureLike => "MPa",
            UnitKind::Fraction => "%",
            UnitKind::Ph => "pH",
            UnitKind::Time => "min",
            UnitKind::AreaPerMass => "m²/g",
            UnitKind::Rate => "mg/h",
            UnitKind::ThermalConductivity => "W/(m·K)",
            UnitKind::Permeability => "mm/s",
            UnitKind::Angle => "°",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Unit {
    pub unit_id: &'static str,
    pub symbol: &'static str,
    pub kind: UnitKind,
    /// Multiples of the smallest registered unit of the same kind.
    pub scale: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit symbol {0:?}")]
    UnknownUnit(String),
    #[error("cannot convert {from} ({from_kind}) to {to} ({to_kind})")]
    IncompatibleUnits {
        from: String,
        from_kind: UnitKind,
        to: String,
        to_kind: UnitKind,
    },
    #[error("non-finite quantity value {0}")]
    NonFinite(f64),
}

/// A finite measured value with the symbol of its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantity")]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

#[derive(Deserialize)]
struct RawQuantity {
    value: f64,
    unit: String,
}

impl TryFrom<RawQuantity> for Quantity {
    type Error = UnitError;

    fn try_from(raw: RawQuantity) -> Result<Self, Self::Error> {
        Quantity::new(raw.value, raw.unit)
    }
}

impl Quantity {
    pub fn new(value: f64, unit: impl Into<String>) -> Result<Self, UnitError> {
        if !value.is_finite() {
            return Err(UnitError::NonFinite(value));
        }
        Ok(Self {
            value,
            unit: unit.into(),
        })
    }

    /// Panics on non-finite input. Meant for literals in fixtures and tests.
    pub fn of(value: f64, unit: &str) -> Self {
        Self::new(value, unit).expect("finite quantity")
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit)
    }
}

// (unit_id, symbol, kind, scale)
const UNIT_TABLE: &[(&str, &str, UnitKind, f64)] = &[
    ("volt", "V", UnitKind::Voltage, 1.0),
    ("kilovolt", "kV", UnitKind::Voltage, 1_000.0),
    ("microlitre_per_hour", "µL/h", UnitKind::FlowRate, 1.0),
    ("microlitre_per_minute", "µL/min", UnitKind::FlowRate, 60.0),
    ("millilitre_per_hour", "mL/h", UnitKind::FlowRate, 1_000.0),
    ("millilitre_per_minute", "mL/min", UnitKind::FlowRate, 60_000.0),
    ("nanometre", "nm", UnitKind::Length, 1.0),
    ("micrometre", "µm", UnitKind::Length, 1_000.0),
    ("millimetre", "mm", UnitKind::Length, 1_000_000.0),
    ("centimetre", "cm", UnitKind::Length, 10_000_000.0),
    ("metre", "m", UnitKind::Length, 1_000_000_000.0),
    ("degree_celsius", "°C", UnitKind::Temperature, 1.0),
    ("percent_relative_humidity", "%RH", UnitKind::RelativeHumidity, 1.0),
    ("weight_percent", "wt%", UnitKind::MassFraction, 1.0),
    ("mass_ratio", "w/w", UnitKind::MassFraction, 100.0),
    ("milligram", "mg", UnitKind::Mass, 1.0),
    ("gram", "g", UnitKind::Mass, 1_000.0),
    ("kilogram", "kg", UnitKind::Mass, 1_000_000.0),
    ("gram_per_mole", "g/mol", UnitKind::MolarMass, 1.0),
    ("dalton", "Da", UnitKind::MolarMass, 1.0),
    ("kilogram_per_mole", "kg/mol", UnitKind::MolarMass, 1_000.0),
    ("kilodalton", "kDa", UnitKind::MolarMass, 1_000.0),
    ("millipascal_second", "mPa·s", UnitKind::Viscosity, 1.0),
    ("centipoise", "cP", UnitKind::Viscosity, 1.0),
    ("poise", "P", UnitKind::Viscosity, 100.0),
    ("pascal_second", "Pa·s", UnitKind::Viscosity, 1_000.0),
    ("millinewton_per_metre", "mN/m", UnitKind::SurfaceTension, 1.0),
    ("dyne_per_centimetre", "dyn/cm", UnitKind::SurfaceTension, 1.0),
    ("newton_per_metre", "N/m", UnitKind::SurfaceTension, 1_000.0),
    ("microsiemens_per_centimetre", "µS/cm", UnitKind::Conductivity, 1.0),
    ("millisiemens_per_metre", "mS/m", UnitKind::Conductivity, 10.0),
    ("millisiemens_per_centimetre", "mS/cm", UnitKind::Conductivity, 1_000.0),
    ("siemens_per_metre", "S/m", UnitKind::Conductivity, 10_000.0),
    ("pascal", "Pa", UnitKind::PressureLike, 1.0),
    ("kilopascal", "kPa", UnitKind::PressureLike, 1_000.0),
    ("megapascal", "MPa", UnitKind::PressureLike, 1_000_000.0),
    ("gigapascal", "GPa", UnitKind::PressureLike, 1_000_000_000.0),
    ("percent", "%", UnitKind::Fraction, 1.0),
    ("ph_unit", "pH", UnitKind::Ph, 1.0),
    ("second", "s", UnitKind::Time, 1.0),
    ("minute", "min", UnitKind::Time, 60.0),
    ("hour", "h", UnitKind::Time, 3_600.0),
    ("square_metre_per_gram", "m²/g", UnitKind::AreaPerMass, 1.0),
    ("milligram_per_hour", "mg/h", UnitKind::Rate, 1.0),
    ("milligram_per_minute", "mg/min", UnitKind::Rate, 60.0),
    ("gram_per_hour", "g/h", UnitKind::Rate, 1_000.0),
    ("milliwatt_per_metre_kelvin", "mW/(m·K)", UnitKind::ThermalConductivity, 1.0),
    ("watt_per_metre_kelvin", "W/(m·K)", UnitKind::ThermalConductivity, 1_000.0),
    ("millimetre_per_second", "mm/s", UnitKind::Permeability, 1.0),
    ("centimetre_per_second", "cm/s", UnitKind::Permeability, 10.0),
    ("metre_per_second", "m/s", UnitKind::Permeability, 1_000.0),
    ("degree", "°", UnitKind::Angle, 1.0),
];

// ASCII spellings accepted on input and rewritten to the registered symbol.
const ALIASES: &[(&str, &str)] = &[
    ("uL/h", "µL/h"),
    ("uL/min", "µL/min"),
    ("um", "µm"),
    ("degC", "°C"),
    ("C", "°C"),
    ("RH%", "%RH"),
    ("mPa.s", "mPa·s"),
    ("Pa.s", "Pa·s"),
    ("uS/cm", "µS/cm"),
    ("m2/g", "m²/g"),
    ("W/(m.K)", "W/(m·K)"),
    ("mW/(m.K)", "mW/(m·K)"),
    ("deg", "°"),
];

#[derive(Debug)]
pub struct UnitRegistry {
    units: BTreeMap<&'static str, Unit>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl UnitRegistry {
    pub fn standard() -> &'static UnitRegistry {
        static REGISTRY: OnceLock<UnitRegistry> = OnceLock::new();
        REGISTRY.get_or_init(|| {
            let mut units = BTreeMap::new();
            for &(unit_id, symbol, kind, scale) in UNIT_TABLE {
                let previous = units.insert(
                    symbol,
                    Unit {
                        unit_id,
                        symbol,
                        kind,
                        scale,
                        offset: 0.0,
                    },
                );
                assert!(previous.is_none(), "duplicate unit symbol {symbol}");
            }
            let aliases = ALIASES.iter().copied().collect();
            UnitRegistry { units, aliases }
        })
    }

    pub fn resolve(&self, symbol: &str) -> Result<&Unit, UnitError> {
        let key = self.aliases.get(symbol).copied().unwrap_or(symbol);
        self.units
            .get(key)
            .ok_or_else(|| UnitError::UnknownUnit(symbol.to_owned()))
    }

    pub fn units(&self) -> impl Iterator<Item = &Unit> {
        self.units.values()
    }

    pub fn units_of(&self, kind: UnitKind) -> impl Iterator<Item = &Unit> {
        self.units.values().filter(move |u| u.kind == kind)
    }

    pub fn convert(&self, q: &Quantity, target: &str) -> Result<Quantity, UnitError> {
        let from = self.resolve(&q.unit)?;
        let to = self.resolve(target)?;
        if from.kind != to.kind {
            return Err(UnitError::IncompatibleUnits {
                from: from.symbol.to_owned(),
                from_kind: from.kind,
                to: to.symbol.to_owned(),
                to_kind: to.kind,
            });
        }
        let value = if from.symbol == to.symbol || from.scale == to.scale && from.offset == to.offset
        {
            q.value
        } else {
            (q.value * from.scale + from.offset - to.offset) / to.scale
        };
        Quantity::new(value, to.symbol)
    }
}

/// Converts with the standard registry.
pub fn convert_quantity(q: &Quantity, target: &str) -> Result<Quantity, UnitError> {
    UnitRegistry::standard().convert(q, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prefix_and_identity_conversions() {
        let v = convert_quantity(&Quantity::of(1.0, "kV"), "V").unwrap();
        assert_eq!(v, Quantity::of(1000.0, "V"));
        let d = convert_quantity(&Quantity::of(10.0, "cm"), "cm").unwrap();
        assert_eq!(d, Quantity::of(10.0, "cm"));
        let f = convert_quantity(&Quantity::of(0.005, "mL/min"), "mL/h").unwrap();
        assert_eq!(f.unit, "mL/h");
        assert!((f.value - 0.30).abs() < 1e-15);
        let mm = convert_quantity(&Quantity::of(150.0, "mm"), "cm").unwrap();
        assert_eq!(mm.value, 15.0);
        let um = convert_quantity(&Quantity::of(0.25, "µm"), "nm").unwrap();
        assert_eq!(um.value, 250.0);
    }

    #[test]
    fn kind_mismatch_is_incompatible() {
        let err = convert_quantity(&Quantity::of(1.0, "kV"), "cm").unwrap_err();
        assert!(matches!(err, UnitError::IncompatibleUnits { .. }));
        let err = convert_quantity(&Quantity::of(1.0, "furlong"), "cm").unwrap_err();
        assert_eq!(err, UnitError::UnknownUnit("furlong".into()));
    }

    #[test]
    fn aliases_resolve_to_registered_symbol() {
        let q = convert_quantity(&Quantity::of(5.0, "uL/min"), "mL/h").unwrap();
        assert_eq!(q.unit, "mL/h");
        assert!((q.value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Quantity::new(f64::NAN, "kV").is_err());
        assert!(Quantity::new(f64::INFINITY, "kV").is_err());
        assert!(serde_json::from_str::<Quantity>(r#"{"value": 1e400, "unit": "kV"}"#).is_err());
    }

    #[test]
    fn every_kind_has_a_registered_default_canonical() {
        let reg = UnitRegistry::standard();
        for kind in UnitKind::ALL {
            assert_eq!(reg.resolve(kind.default_canonical()).unwrap().kind, kind);
        }
    }

    fn convertible_pair() -> impl Strategy<Value = (&'static str, &'static str)> {
        let pairs: Vec<(&'static str, &'static str)> = UNIT_TABLE
            .iter()
            .flat_map(|a| {
                UNIT_TABLE
                    .iter()
                    .filter(move |b| b.2 == a.2)
                    .map(move |b| (a.1, b.1))
            })
            .collect();
        proptest::sample::select(pairs)
    }

    proptest! {
        #[test]
        fn round_trip_within_relative_tolerance(
            (u1, u2) in convertible_pair(),
            value in -1.0e6f64..1.0e6,
        ) {
            let q = Quantity::of(value, u1);
            let there = convert_quantity(&q, u2).unwrap();
            let back = convert_quantity(&there, u1).unwrap();
            let tol = 1e-9 * value.abs().max(f64::MIN_POSITIVE);
            prop_assert!((back.value - value).abs() <= tol, "{value} {u1}->{u2}->{}", back.value);
        }
    }
}
