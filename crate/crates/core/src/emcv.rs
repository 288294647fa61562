//! Seven-axis fiber morphology vocabulary and its pipe-delimited encoding.
//!
//! A descriptor is written as seven fields in fixed order:
//!
//! ```text
//! Shape|Topography|Size|Size Variation|Composition|Texture|Defects
//! ```
//!
//! `-` marks an axis without evidence. Size is in nanometres, size variation
//! in percent. Defects may hold several comma-separated terms. Categorical
//! terms are matched exactly (case-sensitive) after trimming surrounding
//! whitespace.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::{OnceLock, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BUILTIN_VERSION: &str = "1.0";
const BUILTIN_REGISTRY: &str = include_str!("../vocab/emcv-1.0.json");

pub const MISSING: &str = "-";
const FIELD_SEPARATOR: char = '|';
const DEFECT_SEPARATOR: char = ',';

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Shape,
    Topography,
    Size,
    SizeVariation,
    Composition,
    Texture,
    Defects,
}

impl Axis {
    /// Encoding order of the pipe-delimited form.
    pub const CANONICAL_ORDER: [Axis; 7] = [
        Axis::Shape,
        Axis::Topography,
        Axis::Size,
        Axis::SizeVariation,
        Axis::Composition,
        Axis::Texture,
        Axis::Defects,
    ];

    pub const CATEGORICAL: [Axis; 5] = [
        Axis::Shape,
        Axis::Topography,
        Axis::Composition,
        Axis::Texture,
        Axis::Defects,
    ];

    pub fn is_categorical(self) -> bool {
        !matches!(self, Axis::Size | Axis::SizeVariation)
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Shape => "Shape",
            Axis::Topography => "Topography",
            Axis::Size => "Size",
            Axis::SizeVariation => "Size Variation",
            Axis::Composition => "Composition",
            Axis::Texture => "Texture",
            Axis::Defects => "Defects",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Axis::Shape => "shape",
            Axis::Topography => "topography",
            Axis::Size => "size",
            Axis::SizeVariation => "size_variation",
            Axis::Composition => "composition",
            Axis::Texture => "texture",
            Axis::Defects => "defects",
        }
    }

    pub fn from_key(key: &str) -> Option<Axis> {
        Axis::CANONICAL_ORDER.into_iter().find(|a| a.key() == key)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmcvError {
    #[error("descriptor must have 7 '|'-separated fields, found {fields}")]
    MalformedDescriptor { fields: usize },
    #[error("unknown {axis} term {token:?}{}", suggestion.as_ref().map(|s| format!(" (did you mean {s:?}?)")).unwrap_or_default())]
    UnknownTerm {
        axis: Axis,
        token: String,
        suggestion: Option<String>,
    },
    #[error("invalid {axis} value {token:?}: {reason}")]
    InvalidNumber {
        axis: Axis,
        token: String,
        reason: &'static str,
    },
    #[error("defect {token:?} listed more than once")]
    DuplicateDefect { token: String },
    #[error("vocabulary version {0:?} is not registered")]
    VersionUnknown(String),
    #[error("invalid vocabulary registry: {0}")]
    InvalidRegistry(String),
    #[error("an all-missing descriptor cannot be attached to a record")]
    EmptyDescriptor,
}

/// Value of the seven morphology axes. Terms are kept as their canonical
/// strings; membership is checked against a [`Vocabulary`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MorphologyDescriptor {
    pub shape: Option<String>,
    pub topography: Option<String>,
    pub size_nm: Option<f64>,
    pub size_variation_pct: Option<f64>,
    pub composition: Option<String>,
    pub texture: Option<String>,
    pub defects: BTreeSet<String>,
}

impl MorphologyDescriptor {
    pub fn is_empty(&self) -> bool {
        self.shape.is_none()
            && self.topography.is_none()
            && self.size_nm.is_none()
            && self.size_variation_pct.is_none()
            && self.composition.is_none()
            && self.texture.is_none()
            && self.defects.is_empty()
    }

    /// Single-valued categorical term on `axis`. Defects and quantitative
    /// axes return `None`.
    pub fn term(&self, axis: Axis) -> Option<&str> {
        match axis {
            Axis::Shape => self.shape.as_deref(),
            Axis::Topography => self.topography.as_deref(),
            Axis::Composition => self.composition.as_deref(),
            Axis::Texture => self.texture.as_deref(),
            _ => None,
        }
    }

    fn term_mut(&mut self, axis: Axis) -> &mut Option<String> {
        match axis {
            Axis::Shape => &mut self.shape,
            Axis::Topography => &mut self.topography,
            Axis::Composition => &mut self.composition,
            Axis::Texture => &mut self.texture,
            _ => unreachable!("{axis} is not a single-valued categorical axis"),
        }
    }

    /// Canonical pipe-delimited form.
    pub fn encode(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MorphologyDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn term(o: &Option<String>) -> &str {
            o.as_deref().unwrap_or(MISSING)
        }
        fn number(o: Option<f64>) -> String {
            o.map(render_number).unwrap_or_else(|| MISSING.to_owned())
        }
        let defects = if self.defects.is_empty() {
            MISSING.to_owned()
        } else {
            // BTreeSet iteration is already lexicographic.
            self.defects.iter().cloned().collect::<Vec<_>>().join(",")
        };
        write!(
            f,
            "{}|{}|{}|{}|{}|{}|{}",
            term(&self.shape),
            term(&self.topography),
            number(self.size_nm),
            number(self.size_variation_pct),
            term(&self.composition),
            term(&self.texture),
            defects
        )
    }
}

/// Shortest decimal that parses back to the same `f64`, never in
/// exponent notation.
pub fn render_number(v: f64) -> String {
    format!("{v}")
}

pub fn serialize_descriptor(d: &MorphologyDescriptor) -> String {
    d.encode()
}

/// Term registry of one categorical axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTermRegistry {
    pub axis: Axis,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegistryFile {
    version: String,
    axes: Vec<AxisTermRegistry>,
}

/// One immutable version of the controlled vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    version: String,
    axes: BTreeMap<Axis, AxisTermRegistry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnknownTermFinding {
    pub axis: Axis,
    pub token: String,
    pub suggestion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisManifest {
    pub axis: Axis,
    pub name: &'static str,
    pub kind: &'static str,
    pub multi_valued: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<&'static str>,
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VocabularyManifest {
    pub version: String,
    pub axes: Vec<AxisManifest>,
    pub categorical_axes: usize,
    pub quantitative_axes: usize,
    pub term_count: usize,
}

impl Vocabulary {
    pub fn builtin() -> &'static Vocabulary {
        static BUILTIN: OnceLock<Vocabulary> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Vocabulary::from_json(BUILTIN_REGISTRY).expect("shipped registry is valid")
        })
    }

    pub fn from_json(text: &str) -> Result<Vocabulary, EmcvError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| EmcvError::InvalidRegistry(e.to_string()))?;
        Vocabulary::new(file.version, file.axes)
    }

    pub fn load(path: &Path) -> Result<Vocabulary, EmcvError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EmcvError::InvalidRegistry(format!("{}: {e}", path.display())))?;
        Vocabulary::from_json(&text)
    }

    pub fn new(version: String, registries: Vec<AxisTermRegistry>) -> Result<Vocabulary, EmcvError> {
        if version.trim().is_empty() {
            return Err(EmcvError::InvalidRegistry("empty version".into()));
        }
        let mut axes = BTreeMap::new();
        for reg in registries {
            if !reg.axis.is_categorical() {
                return Err(EmcvError::InvalidRegistry(format!(
                    "{} is quantitative and takes no terms",
                    reg.axis
                )));
            }
            let mut seen = BTreeSet::new();
            for term in &reg.terms {
                if term.is_empty()
                    || term.trim() != term
                    || term == MISSING
                    || term.contains(FIELD_SEPARATOR)
                    || term.contains(DEFECT_SEPARATOR)
                {
                    return Err(EmcvError::InvalidRegistry(format!(
                        "{} term {term:?} is not encodable",
                        reg.axis
                    )));
                }
                if !seen.insert(term.as_str()) {
                    return Err(EmcvError::InvalidRegistry(format!(
                        "{} term {term:?} repeated",
                        reg.axis
                    )));
                }
            }
            if axes.insert(reg.axis, reg.clone()).is_some() {
                return Err(EmcvError::InvalidRegistry(format!("{} listed twice", reg.axis)));
            }
        }
        for axis in Axis::CATEGORICAL {
            if !axes.contains_key(&axis) {
                return Err(EmcvError::InvalidRegistry(format!("missing axis {axis}")));
            }
        }
        Ok(Vocabulary { version, axes })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn terms(&self, axis: Axis) -> &[String] {
        self.axes.get(&axis).map(|r| r.terms.as_slice()).unwrap_or(&[])
    }

    pub fn contains(&self, axis: Axis, term: &str) -> bool {
        self.terms(axis).iter().any(|t| t == term)
    }

    /// Case-insensitive exact match first, then the closest term within an
    /// edit distance of two.
    pub fn suggest(&self, axis: Axis, token: &str) -> Option<String> {
        let terms = self.terms(axis);
        if let Some(t) = terms.iter().find(|t| t.eq_ignore_ascii_case(token)) {
            return Some(t.clone());
        }
        terms
            .iter()
            .map(|t| (strsim::levenshtein(t, token), t))
            .filter(|(d, _)| *d <= 2)
            .min_by_key(|(d, _)| *d)
            .map(|(_, t)| t.clone())
    }

    fn unknown(&self, axis: Axis, token: &str) -> EmcvError {
        EmcvError::UnknownTerm {
            axis,
            token: token.to_owned(),
            suggestion: self.suggest(axis, token),
        }
    }

    pub fn parse(&self, text: &str) -> Result<MorphologyDescriptor, EmcvError> {
        let fields: Vec<&str> = text.split(FIELD_SEPARATOR).collect();
        if fields.len() != Axis::CANONICAL_ORDER.len() {
            return Err(EmcvError::MalformedDescriptor {
                fields: fields.len(),
            });
        }
        let mut d = MorphologyDescriptor::default();
        for (axis, raw) in Axis::CANONICAL_ORDER.into_iter().zip(fields) {
            let field = raw.trim();
            if field == MISSING {
                continue;
            }
            match axis {
                Axis::Size => d.size_nm = Some(parse_number(axis, field)?),
                Axis::SizeVariation => d.size_variation_pct = Some(parse_number(axis, field)?),
                Axis::Defects => {
                    for token in field.split(DEFECT_SEPARATOR).map(str::trim) {
                        if !self.contains(axis, token) {
                            return Err(self.unknown(axis, token));
                        }
                        if !d.defects.insert(token.to_owned()) {
                            return Err(EmcvError::DuplicateDefect {
                                token: token.to_owned(),
                            });
                        }
                    }
                }
                _ => {
                    if !self.contains(axis, field) {
                        return Err(self.unknown(axis, field));
                    }
                    *d.term_mut(axis) = Some(field.to_owned());
                }
            }
        }
        Ok(d)
    }

    /// Checks a descriptor built in code against this vocabulary.
    pub fn check(&self, d: &MorphologyDescriptor) -> Result<(), EmcvError> {
        for axis in [Axis::Shape, Axis::Topography, Axis::Composition, Axis::Texture] {
            if let Some(t) = d.term(axis) {
                if !self.contains(axis, t) {
                    return Err(self.unknown(axis, t));
                }
            }
        }
        for t in &d.defects {
            if !self.contains(Axis::Defects, t) {
                return Err(self.unknown(Axis::Defects, t));
            }
        }
        if let Some(v) = d.size_nm {
            check_number(Axis::Size, v, &render_number(v))?;
        }
        if let Some(v) = d.size_variation_pct {
            check_number(Axis::SizeVariation, v, &render_number(v))?;
        }
        Ok(())
    }

    /// Membership findings for an axis → token map. Defect tokens may be
    /// comma-separated.
    pub fn validate_terms(&self, tokens: &BTreeMap<Axis, String>) -> Vec<UnknownTermFinding> {
        let mut findings = Vec::new();
        for (&axis, raw) in tokens {
            if !axis.is_categorical() {
                continue;
            }
            let parts: Vec<&str> = if axis == Axis::Defects {
                raw.split(DEFECT_SEPARATOR).map(str::trim).collect()
            } else {
                vec![raw.trim()]
            };
            for token in parts {
                if !self.contains(axis, token) {
                    findings.push(UnknownTermFinding {
                        axis,
                        token: token.to_owned(),
                        suggestion: self.suggest(axis, token),
                    });
                }
            }
        }
        findings
    }

    pub fn manifest(&self) -> VocabularyManifest {
        let axes: Vec<AxisManifest> = Axis::CANONICAL_ORDER
            .into_iter()
            .map(|axis| AxisManifest {
                axis,
                name: axis.name(),
                kind: if axis.is_categorical() {
                    "categorical"
                } else {
                    "quantitative"
                },
                multi_valued: axis == Axis::Defects,
                unit: match axis {
                    Axis::Size => Some("nm"),
                    Axis::SizeVariation => Some("%"),
                    _ => None,
                },
                terms: self.terms(axis).to_vec(),
            })
            .collect();
        VocabularyManifest {
            version: self.version.clone(),
            categorical_axes: axes.iter().filter(|a| a.kind == "categorical").count(),
            quantitative_axes: axes.iter().filter(|a| a.kind == "quantitative").count(),
            term_count: axes.iter().map(|a| a.terms.len()).sum(),
            axes,
        }
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            version: self.version.clone(),
            axes: Axis::CATEGORICAL
                .into_iter()
                .filter_map(|a| self.axes.get(&a).cloned())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }
}

fn parse_number(axis: Axis, token: &str) -> Result<f64, EmcvError> {
    let invalid = |reason| EmcvError::InvalidNumber {
        axis,
        token: token.to_owned(),
        reason,
    };
    let (int, frac) = match token.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (token, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(int) || frac.is_some_and(|f| !digits(f)) {
        return Err(invalid("expected a plain decimal number"));
    }
    let v: f64 = token.parse().map_err(|_| invalid("not a number"))?;
    check_number(axis, v, token)?;
    Ok(v)
}

fn check_number(axis: Axis, v: f64, token: &str) -> Result<(), EmcvError> {
    let invalid = |reason| EmcvError::InvalidNumber {
        axis,
        token: token.to_owned(),
        reason,
    };
    if !v.is_finite() {
        return Err(invalid("not finite"));
    }
    if v.is_sign_negative() {
        return Err(invalid("must not be negative"));
    }
    if axis == Axis::Size && v <= 0.0 {
        return Err(invalid("size must be positive"));
    }
    Ok(())
}

/// Registered vocabulary versions. Versions are immutable once registered.
#[derive(Debug)]
pub struct VocabularyCatalog {
    versions: RwLock<BTreeMap<String, &'static Vocabulary>>,
}

impl VocabularyCatalog {
    pub fn global() -> &'static VocabularyCatalog {
        static CATALOG: OnceLock<VocabularyCatalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            let builtin = Vocabulary::builtin();
            let mut versions = BTreeMap::new();
            versions.insert(builtin.version.clone(), builtin);
            VocabularyCatalog {
                versions: RwLock::new(versions),
            }
        })
    }

    pub fn get(&self, version: &str) -> Result<&'static Vocabulary, EmcvError> {
        self.versions
            .read()
            .expect("vocabulary catalog lock")
            .get(version)
            .copied()
            .ok_or_else(|| EmcvError::VersionUnknown(version.to_owned()))
    }

    pub fn versions(&self) -> Vec<String> {
        self.versions
            .read()
            .expect("vocabulary catalog lock")
            .keys()
            .cloned()
            .collect()
    }

    /// Adds a vocabulary version. Re-registering an identical snapshot is a
    /// no-op; a different snapshot under an existing version is refused.
    pub fn register(&self, vocab: Vocabulary) -> Result<&'static Vocabulary, EmcvError> {
        let mut versions = self.versions.write().expect("vocabulary catalog lock");
        if let Some(existing) = versions.get(&vocab.version) {
            if **existing == vocab {
                return Ok(existing);
            }
            return Err(EmcvError::InvalidRegistry(format!(
                "version {} is already registered with different terms",
                vocab.version
            )));
        }
        let leaked: &'static Vocabulary = Box::leak(Box::new(vocab));
        versions.insert(leaked.version.clone(), leaked);
        Ok(leaked)
    }
}

pub fn parse_descriptor(text: &str) -> Result<MorphologyDescriptor, EmcvError> {
    Vocabulary::builtin().parse(text)
}

pub fn validate_terms(tokens: &BTreeMap<Axis, String>) -> Vec<UnknownTermFinding> {
    Vocabulary::builtin().validate_terms(tokens)
}

pub fn vocabulary_manifest(version: &str) -> Result<VocabularyManifest, EmcvError> {
    Ok(VocabularyCatalog::global().get(version)?.manifest())
}

/// Morphology attached to a record: the descriptor plus the vocabulary
/// version it was validated against. Serialized as
/// `{"morphology_id": "<encoded>", "vocabulary_version": "1.0"}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyAnnotation {
    descriptor: MorphologyDescriptor,
    vocabulary_version: String,
}

impl MorphologyAnnotation {
    /// Rejects all-missing descriptors: they carry no outcome information.
    pub fn new(
        descriptor: MorphologyDescriptor,
        vocabulary_version: impl Into<String>,
    ) -> Result<Self, EmcvError> {
        let vocabulary_version = vocabulary_version.into();
        let vocab = VocabularyCatalog::global().get(&vocabulary_version)?;
        vocab.check(&descriptor)?;
        if descriptor.is_empty() {
            return Err(EmcvError::EmptyDescriptor);
        }
        Ok(Self {
            descriptor,
            vocabulary_version,
        })
    }

    pub fn parse(text: &str, vocabulary_version: &str) -> Result<Self, EmcvError> {
        let vocab = VocabularyCatalog::global().get(vocabulary_version)?;
        Self::new(vocab.parse(text)?, vocabulary_version)
    }

    pub fn descriptor(&self) -> &MorphologyDescriptor {
        &self.descriptor
    }

    pub fn vocabulary_version(&self) -> &str {
        &self.vocabulary_version
    }

    pub fn encoded(&self) -> String {
        self.descriptor.encode()
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationDoc {
    morphology_id: String,
    #[serde(default = "builtin_version")]
    vocabulary_version: String,
}

fn builtin_version() -> String {
    BUILTIN_VERSION.to_owned()
}

impl Serialize for MorphologyAnnotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        AnnotationDoc {
            morphology_id: self.encoded(),
            vocabulary_version: self.vocabulary_version.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MorphologyAnnotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = AnnotationDoc::deserialize(d)?;
        MorphologyAnnotation::parse(&doc.morphology_id, &doc.vocabulary_version)
            .map_err(serde::de::Error::custom)
    }
}
