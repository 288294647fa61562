use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Barrier};

use chrono::{TimeZone, Utc};
use esd_core::bundle::ImportBundle;
use esd_core::fixtures::{golden_image_bytes, golden_record, minimal_record};
use esd_core::moderation::{transition, Action, ActorKind, ManualClock, ModerationError, BATCH_IMPORT_IDENTITY};
use esd_core::units::Quantity;
use esd_core::{Actor, Decision, ModerationDesk, ModerationState as S, Store};

fn desk() -> ModerationDesk {
    let store = Store::in_memory();
    store.put_image(golden_image_bytes()).unwrap();
    let clock = ManualClock::new(Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap());
    ModerationDesk::new(Arc::new(store), Arc::new(clock))
}

#[test]
fn accepted_is_reachable_only_through_validation_and_review() {
    // Every path from draft to accepted, found by breadth-first search over
    // the transition function, must pass auto_validated and under_review.
    let mut queue = VecDeque::from([(S::Draft, vec![S::Draft])]);
    let mut seen = BTreeSet::new();
    let mut reached = false;
    while let Some((state, path)) = queue.pop_front() {
        if state == S::Accepted {
            reached = true;
            assert!(path.contains(&S::AutoValidated) && path.contains(&S::UnderReview), "{path:?}");
            continue;
        }
        for action in Action::ALL {
            if let Ok(next) = transition(state, action) {
                if seen.insert((state, next)) {
                    let mut p = path.clone();
                    p.push(next);
                    queue.push_back((next, p));
                }
            }
        }
    }
    assert!(reached);
    assert!(Action::ALL.iter().all(|a| transition(S::Accepted, *a).is_err()));
}

#[test]
fn concurrent_claims_have_one_winner() {
    let desk = Arc::new(desk());
    let env = desk.submit(golden_record(), &Actor::contributor("ana")).unwrap();
    assert_eq!(env.state, S::AutoValidated);
    let barrier = Arc::new(Barrier::new(8));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let (desk, barrier) = (desk.clone(), barrier.clone());
            std::thread::spawn(move || {
                barrier.wait();
                desk.claim(env.envelope_id, &Actor::moderator(&format!("mod{i}")))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, ModerationError::IllegalTransition { state: S::UnderReview, .. })));
}

#[test]
fn flagged_submission_is_revised_claimed_rejected_and_accepted() {
    let desk = desk();
    let ana = Actor::contributor("ana");
    let moderator = Actor::moderator("mia");
    let mut bad = golden_record();
    bad.ambient.humidity = Some(Quantity::of(150.0, "%RH"));
    let env = desk.submit(bad, &ana).unwrap();
    assert_eq!(env.state, S::Flagged);
    assert!(env.validation.as_ref().unwrap().has("P-HUM"));

    assert!(matches!(
        desk.revise(env.envelope_id, golden_record(), &Actor::contributor("eve")),
        Err(ModerationError::NotOwner(_))
    ));
    let env = desk.revise(env.envelope_id, golden_record(), &ana).unwrap();
    assert_eq!(env.state, S::AutoValidated);
    assert_eq!(env.validation_history.len(), 1);

    desk.claim(env.envelope_id, &moderator).unwrap();
    for reason in [None, Some(""), Some("   ")] {
        assert_eq!(
            desk.decide(env.envelope_id, Decision::Reject, &moderator, reason).unwrap_err(),
            ModerationError::MissingReason
        );
    }
    let env = desk.decide(env.envelope_id, Decision::Reject, &moderator, Some("diameter unsupported by SEM")).unwrap();
    assert_eq!(env.state, S::Rejected);
    assert_eq!(env.record_id, None);

    let env = desk.revise(env.envelope_id, golden_record(), &ana).unwrap();
    desk.claim(env.envelope_id, &moderator).unwrap();
    desk.comment(env.envelope_id, &moderator, "looks complete").unwrap();
    let env = desk.decide(env.envelope_id, Decision::Accept, &moderator, None).unwrap();
    assert_eq!(env.state, S::Accepted);
    let id = env.record_id.unwrap();
    assert_eq!(desk.store().get_record(id).unwrap().record_id, Some(id));

    let actions: Vec<&str> = env.decisions.iter().map(|e| e.action.as_str()).collect();
    assert_eq!(
        actions,
        [
            "submit", "validation_failed", "resubmit", "validation_passed", "start_review", "reject", "resubmit",
            "validation_passed", "start_review", "comment", "accept"
        ]
    );
    assert!(env.decisions.windows(2).all(|w| w[0].at <= w[1].at));
    assert!(desk.comment(env.envelope_id, &moderator, "late").is_err());
    assert!(desk.revise(env.envelope_id, golden_record(), &ana).is_err());
}

#[test]
fn trusted_import_accepts_valid_records_and_keeps_failures_flagged() {
    let desk = desk();
    let mut bad = minimal_record();
    bad.process.voltage = Some(Quantity::of(0.0, "kV"));
    let mut unattributed = minimal_record();
    unattributed.provenance.contributor_contact = None;
    let bundle = ImportBundle::new(vec![minimal_record(), bad, unattributed, minimal_record()], Default::default());
    let outcome = desk.import_trusted(&bundle).unwrap();
    assert_eq!(outcome.accepted.len(), 2);
    assert_eq!(outcome.failed.iter().map(|f| f.index).collect::<Vec<_>>(), [1, 2]);
    assert!(outcome.failed[0].report.as_ref().unwrap().has("P-VOLT"));
    let flagged = desk.queue(&[S::Flagged]).unwrap();
    assert_eq!(flagged.len(), 1);
    let accepted = desk.queue(&[S::Accepted]).unwrap();
    assert!(accepted
        .iter()
        .all(|e| e.decisions.iter().skip(2).all(|d| d.actor.kind == ActorKind::System && d.actor.identity == BATCH_IMPORT_IDENTITY)));
    assert_eq!(desk.store().record_count().unwrap(), 2);
}
