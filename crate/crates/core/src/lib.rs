//! Curation core for electrospinning experiment records: the record model,
//! the morphology vocabulary, validation rules, moderation workflow, storage,
//! queries and dataset releases.

pub mod archive;
pub mod bundle;
pub mod digest;
pub mod emcv;
pub mod evvr;
pub mod fixtures;
pub mod moderation;
pub mod query;
pub mod record;
pub mod release;
pub mod store;
pub mod units;

pub use bundle::ImportBundle;
pub use emcv::{MorphologyAnnotation, MorphologyDescriptor, Vocabulary, VocabularyCatalog};
pub use evvr::{validate_record, ValidationReport, Violation};
pub use moderation::{Actor, Decision, ModerationDesk, ModerationState, SubmissionEnvelope};
pub use query::{execute_filter, FilterSpec, NumericField, SummaryStats};
pub use record::{AccessionId, ExperimentRecord, PayloadRef};
pub use release::{ReleaseArchive, ReleaseManifest};
pub use store::Store;
pub use units::{Quantity, UnitKind, UnitRegistry};
