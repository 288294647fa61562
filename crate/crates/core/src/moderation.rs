//! Submission lifecycle: automated validation followed by expert review.
//!
//! ```text
//! draft → submitted → auto_validated → under_review → accepted
//!             ↓  ↑                          ↓
//!          flagged ┘ ← (resubmit)       rejected ─→ submitted
//! ```

use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::bundle::ImportBundle;
use crate::evvr::{validate_record_at, ValidationReport};
use crate::record::{AccessionId, ExperimentRecord, StructureIssue};
use crate::store::{Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModerationState {
    Draft,
    Submitted,
    AutoValidated,
    Flagged,
    UnderReview,
    Accepted,
    Rejected,
}

impl ModerationState {
    pub const ALL: [ModerationState; 7] = [
        ModerationState::Draft,
        ModerationState::Submitted,
        ModerationState::AutoValidated,
        ModerationState::Flagged,
        ModerationState::UnderReview,
        ModerationState::Accepted,
        ModerationState::Rejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModerationState::Draft => "draft",
            ModerationState::Submitted => "submitted",
            ModerationState::AutoValidated => "auto_validated",
            ModerationState::Flagged => "flagged",
            ModerationState::UnderReview => "under_review",
            ModerationState::Accepted => "accepted",
            ModerationState::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|st| st.as_str() == s)
    }

    pub fn is_terminal(self) -> bool {
        self == ModerationState::Accepted
    }
}

impl fmt::Display for ModerationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Submit,
    ValidationPassed,
    ValidationFailed,
    Resubmit,
    StartReview,
    Accept,
    Reject,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Submit,
        Action::ValidationPassed,
        Action::ValidationFailed,
        Action::Resubmit,
        Action::StartReview,
        Action::Accept,
        Action::Reject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Submit => "submit",
            Action::ValidationPassed => "validation_passed",
            Action::ValidationFailed => "validation_failed",
            Action::Resubmit => "resubmit",
            Action::StartReview => "start_review",
            Action::Accept => "accept",
            Action::Reject => "reject",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The transition table. Every pair not listed is illegal.
pub fn transition(state: ModerationState, action: Action) -> Result<ModerationState, ModerationError> {
    use Action as A;
    use ModerationState as S;
    match (state, action) {
        (S::Draft, A::Submit) => Ok(S::Submitted),
        (S::Submitted, A::ValidationPassed) => Ok(S::AutoValidated),
        (S::Submitted, A::ValidationFailed) => Ok(S::Flagged),
        (S::Flagged, A::Resubmit) | (S::Rejected, A::Resubmit) => Ok(S::Submitted),
        (S::AutoValidated, A::StartReview) => Ok(S::UnderReview),
        (S::UnderReview, A::Accept) => Ok(S::Accepted),
        (S::UnderReview, A::Reject) => Ok(S::Rejected),
        _ => Err(ModerationError::IllegalTransition { state, action: action.as_str() }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    System,
    Contributor,
    Moderator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub identity: String,
}

impl Actor {
    pub fn system() -> Self {
        Self::new(ActorKind::System, "system")
    }

    pub fn contributor(identity: &str) -> Self {
        Self::new(ActorKind::Contributor, identity)
    }

    pub fn moderator(identity: &str) -> Self {
        Self::new(ActorKind::Moderator, identity)
    }

    fn new(kind: ActorKind, identity: &str) -> Self {
        Self {
            kind,
            identity: identity.to_owned(),
        }
    }
}

pub const COMMENT_ACTION: &str = "comment";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub actor: Actor,
    /// A transition name, or `comment`.
    pub action: String,
    pub from: ModerationState,
    pub to: ModerationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModerationError {
    #[error("record is malformed: {}", join_issues(.0))]
    MalformedRecord(Vec<StructureIssue>),
    #[error("contributor attribution (name and contact) is required")]
    MissingAttribution,
    #[error("action {action} is not allowed in state {state}")]
    IllegalTransition { state: ModerationState, action: &'static str },
    #[error("a rejection must state its reason")]
    MissingReason,
    #[error("envelope {0} not found")]
    UnknownEnvelope(Uuid),
    #[error("envelope {0} belongs to another contributor")]
    NotOwner(Uuid),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join_issues(issues: &[StructureIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionEnvelope {
    pub envelope_id: Uuid,
    pub record: ExperimentRecord,
    pub state: ModerationState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_history: Vec<ValidationReport>,
    pub decisions: Vec<AuditEvent>,
    /// Identity of the submitting contributor.
    pub contributor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<AccessionId>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

fn check_submittable(record: &ExperimentRecord) -> Result<(), ModerationError> {
    let issues = record.structure_issues();
    if !issues.is_empty() {
        return Err(ModerationError::MalformedRecord(issues));
    }
    if !record.provenance.has_attribution() {
        return Err(ModerationError::MissingAttribution);
    }
    Ok(())
}

impl SubmissionEnvelope {
    /// Creates a draft and submits it.
    pub fn submit(mut record: ExperimentRecord, contributor: &Actor, at: DateTime<Utc>) -> Result<Self, ModerationError> {
        check_submittable(&record)?;
        record.record_id = None;
        let mut env = SubmissionEnvelope {
            envelope_id: Uuid::new_v4(),
            record,
            state: ModerationState::Draft,
            validation: None,
            validation_history: Vec::new(),
            decisions: Vec::new(),
            contributor: contributor.identity.clone(),
            record_id: None,
            created_at: at,
            updated_at: at,
        };
        env.apply(Action::Submit, contributor.clone(), None, at)?;
        Ok(env)
    }

    fn apply(&mut self, action: Action, actor: Actor, reason: Option<String>, at: DateTime<Utc>) -> Result<(), ModerationError> {
        let to = transition(self.state, action)?;
        self.push_event(actor, action.as_str(), to, reason, at);
        Ok(())
    }

    fn push_event(&mut self, actor: Actor, action: &str, to: ModerationState, reason: Option<String>, at: DateTime<Utc>) {
        let at = at.max(self.updated_at);
        self.decisions.push(AuditEvent {
            actor,
            action: action.to_owned(),
            from: self.state,
            to,
            reason,
            at,
        });
        self.state = to;
        self.updated_at = at;
    }

    pub fn auto_validate(&mut self, at: DateTime<Utc>) -> Result<&ValidationReport, ModerationError> {
        if self.state != ModerationState::Submitted {
            return Err(ModerationError::IllegalTransition {
                state: self.state,
                action: "auto_validate",
            });
        }
        let report = validate_record_at(&self.record, at.max(self.updated_at));
        let action = if report.passed {
            Action::ValidationPassed
        } else {
            Action::ValidationFailed
        };
        let reason = (!report.passed).then(|| report.rule_ids().join(","));
        self.apply(action, Actor::system(), reason, at)?;
        if let Some(old) = self.validation.replace(report) {
            self.validation_history.push(old);
        }
        Ok(self.validation.as_ref().expect("report just stored"))
    }

    pub fn revise_and_resubmit(&mut self, mut record: ExperimentRecord, contributor: &Actor, at: DateTime<Utc>) -> Result<(), ModerationError> {
        transition(self.state, Action::Resubmit)?;
        check_submittable(&record)?;
        record.record_id = None;
        self.apply(Action::Resubmit, contributor.clone(), None, at)?;
        self.record = record;
        Ok(())
    }

    pub fn start_review(&mut self, moderator: &Actor, at: DateTime<Utc>) -> Result<(), ModerationError> {
        self.apply(Action::StartReview, moderator.clone(), None, at)
    }

    /// Applies the decision. Accession assignment on acceptance is the
    /// caller's job; see [`ModerationDesk::decide`].
    pub fn decide(&mut self, decision: Decision, moderator: &Actor, reason: Option<&str>, at: DateTime<Utc>) -> Result<(), ModerationError> {
        let reason = reason.map(str::trim).filter(|r| !r.is_empty()).map(str::to_owned);
        match decision {
            Decision::Accept => self.apply(Action::Accept, moderator.clone(), reason, at),
            Decision::Reject => {
                transition(self.state, Action::Reject)?;
                if reason.is_none() {
                    return Err(ModerationError::MissingReason);
                }
                self.apply(Action::Reject, moderator.clone(), reason, at)
            }
        }
    }

    pub fn comment(&mut self, moderator: &Actor, text: &str, at: DateTime<Utc>) -> Result<(), ModerationError> {
        if self.state.is_terminal() {
            return Err(ModerationError::IllegalTransition {
                state: self.state,
                action: COMMENT_ACTION,
            });
        }
        self.push_event(moderator.clone(), COMMENT_ACTION, self.state, Some(text.to_owned()), at);
        Ok(())
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Mutex::new(start))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().unwrap() = t;
    }

    pub fn advance(&self, d: chrono::Duration) {
        *self.0.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImportOutcome {
    pub accepted: Vec<AccessionId>,
    /// Index in the batch and the failed report or error.
    pub failed: Vec<ImportFailure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportFailure {
    pub index: usize,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

pub const BATCH_IMPORT_IDENTITY: &str = "batch-import";

/// Moderation operations persisted through the store. Every operation runs
/// inside one store write, so state checks and updates are atomic.
pub struct ModerationDesk {
    store: Arc<Store>,
    clock: Arc<dyn Clock>,
}

impl ModerationDesk {
    pub fn new(store: Arc<Store>, clock: Arc<dyn Clock>) -> Self {
        Self { store, clock }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Submits and immediately runs automated validation.
    pub fn submit(&self, record: ExperimentRecord, contributor: &Actor) -> Result<SubmissionEnvelope, ModerationError> {
        let now = self.clock.now();
        let mut env = SubmissionEnvelope::submit(record, contributor, now)?;
        env.auto_validate(now)?;
        self.store.write(|tx| {
            tx.put_envelope(env.clone());
            Ok::<_, StoreError>(())
        })?;
        Ok(env)
    }

    fn update<T>(
        &self,
        id: Uuid,
        f: impl FnOnce(&mut SubmissionEnvelope, &mut crate::store::Tx<'_>, DateTime<Utc>) -> Result<T, ModerationError>,
    ) -> Result<SubmissionEnvelope, ModerationError> {
        let now = self.clock.now();
        self.store.write(|tx| {
            let mut env = tx
                .envelope(id)
                .cloned()
                .ok_or(ModerationError::UnknownEnvelope(id))?;
            f(&mut env, tx, now)?;
            tx.put_envelope(env.clone());
            Ok(env)
        })
    }

    pub fn auto_validate(&self, id: Uuid) -> Result<SubmissionEnvelope, ModerationError> {
        self.update(id, |env, _, now| env.auto_validate(now).map(|_| ()))
    }

    /// Replaces the record of a flagged or rejected envelope and runs
    /// automated validation on the new version.
    pub fn revise(&self, id: Uuid, record: ExperimentRecord, contributor: &Actor) -> Result<SubmissionEnvelope, ModerationError> {
        self.update(id, |env, _, now| {
            if env.contributor != contributor.identity {
                return Err(ModerationError::NotOwner(id));
            }
            env.revise_and_resubmit(record, contributor, now)?;
            env.auto_validate(now).map(|_| ())
        })
    }

    /// Atomic claim: succeeds for exactly one caller per validated envelope.
    pub fn claim(&self, id: Uuid, moderator: &Actor) -> Result<SubmissionEnvelope, ModerationError> {
        self.update(id, |env, _, now| env.start_review(moderator, now))
    }

    pub fn decide(&self, id: Uuid, decision: Decision, moderator: &Actor, reason: Option<&str>) -> Result<SubmissionEnvelope, ModerationError> {
        self.update(id, |env, tx, now| {
            env.decide(decision, moderator, reason, now)?;
            if decision == Decision::Accept {
                accession(env, tx)?;
            }
            Ok(())
        })
    }

    pub fn comment(&self, id: Uuid, moderator: &Actor, text: &str) -> Result<SubmissionEnvelope, ModerationError> {
        self.update(id, |env, _, now| env.comment(moderator, text, now))
    }

    pub fn envelope(&self, id: Uuid) -> Result<SubmissionEnvelope, ModerationError> {
        self.store
            .envelope(id)?
            .ok_or(ModerationError::UnknownEnvelope(id))
    }

    /// Envelopes in the given states ordered by submission time.
    pub fn queue(&self, states: &[ModerationState]) -> Result<Vec<SubmissionEnvelope>, ModerationError> {
        Ok(self.store.envelopes(|e| states.contains(&e.state))?)
    }

    /// Trusted batch import: images are stored first, then every record is
    /// submitted and validated; records that pass are accepted without
    /// expert review. Failing records stay flagged.
    pub fn import_trusted(&self, bundle: &ImportBundle) -> Result<ImportOutcome, ModerationError> {
        let actor = Actor {
            kind: ActorKind::System,
            identity: BATCH_IMPORT_IDENTITY.into(),
        };
        self.store.write(|tx| {
            for bytes in bundle.images.values() {
                tx.put_image(bytes.clone());
            }
            let mut outcome = ImportOutcome::default();
            for (index, record) in bundle.records.iter().enumerate() {
                let now = self.clock.now();
                let mut env = match SubmissionEnvelope::submit(record.clone(), &actor, now) {
                    Ok(env) => env,
                    Err(e) => {
                        outcome.failed.push(ImportFailure {
                            index,
                            detail: e.to_string(),
                            report: None,
                        });
                        continue;
                    }
                };
                let report = env.auto_validate(now)?.clone();
                if report.passed {
                    env.start_review(&actor, now)?;
                    env.decide(Decision::Accept, &actor, Some("trusted batch import"), now)?;
                    outcome.accepted.push(accession(&mut env, tx)?);
                } else {
                    outcome.failed.push(ImportFailure {
                        index,
                        detail: format!("failed automated validation: {}", report.rule_ids().join(", ")),
                        report: Some(report),
                    });
                }
                tx.put_envelope(env);
            }
            Ok(outcome)
        })
    }
}

fn accession(env: &mut SubmissionEnvelope, tx: &mut crate::store::Tx<'_>) -> Result<AccessionId, ModerationError> {
    let id = tx.next_accession();
    let mut record = env.record.clone();
    record.record_id = Some(id);
    tx.put_accepted(record)?;
    env.record_id = Some(id);
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::golden_record;
    use crate::units::Quantity;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn passing_record_is_auto_validated() {
        let mut env = SubmissionEnvelope::submit(golden_record(), &Actor::contributor("ana"), t0()).unwrap();
        assert_eq!(env.state, ModerationState::Submitted);
        env.auto_validate(t0()).unwrap();
        assert_eq!(env.state, ModerationState::AutoValidated);
        assert_eq!(env.decisions.len(), 2);
    }

    #[test]
    fn humidity_out_of_bounds_is_flagged_then_fixed() {
        let mut r = golden_record();
        r.ambient.humidity = Some(Quantity::of(150.0, "%RH"));
        let who = Actor::contributor("ana");
        let mut env = SubmissionEnvelope::submit(r.clone(), &who, t0()).unwrap();
        let report = env.auto_validate(t0()).unwrap();
        assert!(report.has("P-HUM"));
        assert_eq!(env.state, ModerationState::Flagged);

        r.ambient.humidity = Some(Quantity::of(45.0, "%RH"));
        env.revise_and_resubmit(r, &who, t0()).unwrap();
        assert_eq!(env.state, ModerationState::Submitted);
        env.auto_validate(t0()).unwrap();
        assert_eq!(env.state, ModerationState::AutoValidated);
        assert_eq!(env.validation_history.len(), 1);
        assert!(env.validation_history[0].has("P-HUM"));
    }

    #[test]
    fn missing_attribution_is_refused() {
        let mut r = golden_record();
        r.provenance.contributor_contact = None;
        assert_eq!(
            SubmissionEnvelope::submit(r, &Actor::contributor("ana"), t0()),
            Err(ModerationError::MissingAttribution)
        );
    }

    #[test]
    fn reject_needs_reason_and_accepted_is_terminal() {
        let mut env = SubmissionEnvelope::submit(golden_record(), &Actor::contributor("ana"), t0()).unwrap();
        env.auto_validate(t0()).unwrap();
        let m = Actor::moderator("mo");
        env.start_review(&m, t0()).unwrap();
        assert_eq!(env.decide(Decision::Reject, &m, Some("  "), t0()), Err(ModerationError::MissingReason));
        assert_eq!(env.state, ModerationState::UnderReview);
        env.decide(Decision::Accept, &m, None, t0()).unwrap();
        assert!(matches!(env.auto_validate(t0()), Err(ModerationError::IllegalTransition { .. })));
        assert!(env.comment(&m, "late", t0()).is_err());
        assert!(env.revise_and_resubmit(golden_record(), &Actor::contributor("ana"), t0()).is_err());
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let later = t0() + chrono::Duration::hours(1);
        let mut env = SubmissionEnvelope::submit(golden_record(), &Actor::contributor("ana"), later).unwrap();
        env.auto_validate(t0()).unwrap();
        assert!(env.decisions.windows(2).all(|w| w[0].at <= w[1].at));
        assert_eq!(env.updated_at, later);
    }
}
