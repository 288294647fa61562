use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::NaiveDate;
use esd_core::digest::sha256_hex;
use esd_core::fixtures::{golden_image_bytes, golden_record, synthetic_corpus};
use esd_core::query::{execute_filter, summarize_lenient, FilterSpec, NumericField};
use esd_core::record::ExperimentRecord;
use esd_core::units::Quantity;
use esd_server::api::DEFAULT_STATS_FIELDS;
use esd_server::{ApiError, App, Credential, Credentials, Role};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const ANA: &str = "tok-ana";
const EVE: &str = "tok-eve";
const MIA: &str = "tok-mia";
const ZOE: &str = "tok-zoe";

fn app() -> Arc<App> {
    let creds = Credentials::new([
        Credential { token: ANA.into(), identity: "ana".into(), role: Role::Contributor },
        Credential { token: EVE.into(), identity: "eve".into(), role: Role::Contributor },
        Credential { token: MIA.into(), identity: "mia".into(), role: Role::Moderator },
        Credential { token: ZOE.into(), identity: "zoe".into(), role: Role::Moderator },
    ]);
    let app = Arc::new(App::in_memory(creds).unwrap());
    app.store.put_image(golden_image_bytes()).unwrap();
    app
}

fn seeded(n: usize) -> Arc<App> {
    let app = app();
    let outcome = app.desk.import_trusted(&synthetic_corpus(n, 5)).unwrap();
    assert!(outcome.failed.is_empty());
    app
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("not JSON ({e}): {:?}", String::from_utf8_lossy(&self.bytes)))
    }

    fn error(&self) -> ApiError {
        assert!(!self.status.is_success());
        let err: ApiError = serde_json::from_slice(&self.bytes).expect("error body is an ApiError");
        assert_eq!(err.status, self.status.as_u16());
        err
    }
}

async fn call(router: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Vec<u8>>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let body = match body {
        Some(b) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(b)
        }
        None => Body::empty(),
    };
    let res = router.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

async fn get(router: &Router, uri: &str) -> Reply {
    call(router, Method::GET, uri, None, None).await
}

async fn post_json(router: &Router, uri: &str, token: &str, body: &impl serde::Serialize) -> Reply {
    call(router, Method::POST, uri, Some(token), Some(serde_json::to_vec(body).unwrap())).await
}

#[tokio::test]
async fn submission_outcomes() {
    let app = app();
    let router = app.router();

    let ok = post_json(&router, "/api/v1/records", ANA, &golden_record()).await;
    assert_eq!(ok.status, StatusCode::CREATED);
    assert_eq!(ok.json()["state"], "auto_validated");
    assert!(ok.json()["envelope_id"].is_string());

    let mut bad = golden_record();
    bad.process.voltage = Some(Quantity::of(0.0, "kV"));
    let flagged = post_json(&router, "/api/v1/records", ANA, &bad).await;
    assert_eq!(flagged.status, StatusCode::UNPROCESSABLE_ENTITY);
    let err = flagged.error();
    let report = err.violations.expect("full report");
    assert!(report.has("P-VOLT"));
    assert!(!report.passed);
    let envelope_id = err.envelope_id.expect("flagged envelope id");

    let mut unattributed = golden_record();
    unattributed.provenance.contributor_contact = None;
    let refused = post_json(&router, "/api/v1/records", ANA, &unattributed).await;
    assert_eq!(refused.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(refused.error().violations.unwrap().has("S-02"));

    for body in [&b"not json"[..], b"[1,2,3]", b"\"text\"", b"{\"polymers\": 7}"] {
        let r = call(&router, Method::POST, "/api/v1/records", Some(ANA), Some(body.to_vec())).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{}", String::from_utf8_lossy(body));
        r.error();
    }

    let anonymous = call(&router, Method::POST, "/api/v1/records", None, Some(b"{}".to_vec())).await;
    assert_eq!(anonymous.status, StatusCode::UNAUTHORIZED);
    anonymous.error();
    let wrong_token = post_json(&router, "/api/v1/records", "nope", &golden_record()).await;
    assert_eq!(wrong_token.status, StatusCode::UNAUTHORIZED);
    let moderator = post_json(&router, "/api/v1/records", MIA, &golden_record()).await;
    assert_eq!(moderator.status, StatusCode::FORBIDDEN);

    // Owner may view and revise; other contributors may not.
    let uri = format!("/api/v1/submissions/{envelope_id}");
    assert_eq!(call(&router, Method::GET, &uri, Some(ANA), None).await.status, StatusCode::OK);
    assert_eq!(call(&router, Method::GET, &uri, Some(MIA), None).await.status, StatusCode::OK);
    assert_eq!(call(&router, Method::GET, &uri, Some(EVE), None).await.status, StatusCode::FORBIDDEN);
    assert_eq!(get(&router, &uri).await.status, StatusCode::UNAUTHORIZED);
    let body = serde_json::to_vec(&golden_record()).unwrap();
    let stolen = call(&router, Method::PUT, &uri, Some(EVE), Some(body.clone())).await;
    assert_eq!(stolen.status, StatusCode::FORBIDDEN);
    let revised = call(&router, Method::PUT, &uri, Some(ANA), Some(body)).await;
    assert_eq!(revised.status, StatusCode::OK);
    assert_eq!(revised.json()["state"], "auto_validated");
}

#[tokio::test]
async fn moderation_round_trip() {
    let app = app();
    let router = app.router();
    let env = post_json(&router, "/api/v1/records", ANA, &golden_record()).await.json();
    let id = env["envelope_id"].as_str().unwrap().to_owned();

    assert_eq!(get(&router, "/api/v1/moderation/queue").await.status, StatusCode::UNAUTHORIZED);
    let as_contributor = call(&router, Method::GET, "/api/v1/moderation/queue", Some(ANA), None).await;
    assert_eq!(as_contributor.status, StatusCode::FORBIDDEN);
    let queue = call(&router, Method::GET, "/api/v1/moderation/queue", Some(MIA), None).await.json();
    assert_eq!(queue.as_array().unwrap().len(), 1);

    let early = post_json(&router, &format!("/api/v1/moderation/{id}/decision"), MIA, &json!({"decision": "accept"})).await;
    assert_eq!(early.status, StatusCode::CONFLICT);
    assert_eq!(early.error().code, "illegal_transition");

    let claim = call(&router, Method::POST, &format!("/api/v1/moderation/{id}/claim"), Some(MIA), None).await;
    assert_eq!(claim.status, StatusCode::OK);
    assert_eq!(claim.json()["state"], "under_review");
    let again = call(&router, Method::POST, &format!("/api/v1/moderation/{id}/claim"), Some(ZOE), None).await;
    assert_eq!(again.status, StatusCode::CONFLICT);

    let decision_uri = format!("/api/v1/moderation/{id}/decision");
    let no_reason = post_json(&router, &decision_uri, MIA, &json!({"decision": "reject"})).await;
    assert_eq!(no_reason.status, StatusCode::UNPROCESSABLE_ENTITY);
    let blank = post_json(&router, &decision_uri, MIA, &json!({"decision": "reject", "reason": "  "})).await;
    assert_eq!(blank.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bogus = post_json(&router, &decision_uri, MIA, &json!({"decision": "maybe"})).await;
    assert_eq!(bogus.status, StatusCode::BAD_REQUEST);

    let comment = post_json(&router, &format!("/api/v1/moderation/{id}/comment"), MIA, &json!({"text": "units verified"})).await;
    assert_eq!(comment.status, StatusCode::OK);
    let accepted = post_json(&router, &decision_uri, MIA, &json!({"decision": "accept"})).await;
    assert_eq!(accepted.status, StatusCode::OK);
    let env = accepted.json();
    assert_eq!(env["state"], "accepted");
    let record_id = env["record_id"].as_str().unwrap();

    let record = get(&router, &format!("/api/v1/records/{record_id}")).await;
    assert_eq!(record.status, StatusCode::OK);
    let stored: ExperimentRecord = serde_json::from_slice(&record.bytes).unwrap();
    assert_eq!(stored, app.store.get_record(record_id.parse().unwrap()).unwrap());

    let unknown = call(&router, Method::POST, "/api/v1/moderation/00000000-0000-0000-0000-000000000000/claim", Some(MIA), None).await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&router, "/api/v1/records/ESD-999999").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn parallel_claims_yield_one_success_and_one_conflict() {
    for _ in 0..20 {
        let app = app();
        let router = app.router();
        let env = post_json(&router, "/api/v1/records", ANA, &golden_record()).await.json();
        let uri = format!("/api/v1/moderation/{}/claim", env["envelope_id"].as_str().unwrap());
        let (a, b) = (router.clone(), router.clone());
        let (ua, ub) = (uri.clone(), uri);
        let first = tokio::spawn(async move { call(&a, Method::POST, &ua, Some(MIA), None).await.status });
        let second = tokio::spawn(async move { call(&b, Method::POST, &ub, Some(ZOE), None).await.status });
        let mut statuses = vec![first.await.unwrap(), second.await.unwrap()];
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    }
}

#[tokio::test]
async fn query_results_match_the_engine() {
    let app = seeded(400);
    let router = app.router();
    let cases = [
        "polymer=PVA&solvent=water&needle=single_needle&collector=flat_plate&fiber_diameter=180:380",
        "polymer=PVA,PEO&exclusive=true",
        "voltage=10:20&flow_rate=0.1:1",
        "instability=jet_instability_whipping_excess",
        "morphology.shape=Cylinder",
        "has_images=true",
        "",
    ];
    for q in cases {
        let params: Vec<(String, String)> = serde_urlencoded_pairs(q);
        let spec = FilterSpec::from_params(params.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        let expected = app.store.with_records(|rs| execute_filter(rs.values(), &spec).unwrap()).unwrap();

        let page = get(&router, &format!("/api/v1/records?{q}&limit=1000")).await;
        assert_eq!(page.status, StatusCode::OK, "{q}");
        let page = page.json();
        assert_eq!(page["total"].as_u64().unwrap() as usize, expected.len(), "{q}");
        let got: Vec<String> = page["items"].as_array().unwrap().iter().map(|i| i["record_id"].as_str().unwrap().to_owned()).collect();
        assert_eq!(got, expected.iter().map(|id| id.to_string()).collect::<Vec<_>>(), "{q}");

        let stats = get(&router, &format!("/api/v1/stats/summary?{q}")).await;
        assert_eq!(stats.status, StatusCode::OK);
        let local = app
            .store
            .with_records(|rs| {
                let filter = spec.compile().unwrap();
                let selected: Vec<&ExperimentRecord> = rs.values().filter(|r| filter.matches(r)).collect();
                serde_json::to_value(summarize_lenient(&selected, &DEFAULT_STATS_FIELDS)).unwrap()
            })
            .unwrap();
        assert_eq!(stats.json(), local, "{q}");
    }

    let paged = get(&router, "/api/v1/records?limit=7&offset=3").await.json();
    assert_eq!(paged["items"].as_array().unwrap().len(), 7);
    assert_eq!(paged["items"][0]["record_id"], "ESD-000004");
    assert_eq!(paged["total"], 400);
    assert_eq!(get(&router, "/api/v1/records").await.json()["limit"], 100);

    for bad in [
        "fiber_diameter=380:180",
        "fiber_diameter=abc",
        "colour=blue",
        "needle=garden_hose",
        "morphology.shape=Sphere",
        "limit=0",
        "limit=1001",
        "polymer=",
    ] {
        let r = get(&router, &format!("/api/v1/records?{bad}")).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(r.error().code, "invalid_filter");
    }
    assert_eq!(get(&router, "/api/v1/stats/summary?histogram=nope").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&router, "/api/v1/stats/summary?bins=0&histogram=voltage").await.status, StatusCode::BAD_REQUEST);
}

fn serde_urlencoded_pairs(q: &str) -> Vec<(String, String)> {
    q.split('&')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv.split_once('=').unwrap();
            (k.to_owned(), v.to_owned())
        })
        .collect()
}

#[tokio::test]
async fn stats_over_an_empty_selection_report_zero_counts() {
    let app = seeded(50);
    let router = app.router();
    let r = get(&router, "/api/v1/stats/summary?polymer=NOPE&fields=voltage,fiber_diameter&histogram=voltage").await;
    assert_eq!(r.status, StatusCode::OK);
    let body = r.json();
    assert_eq!(body["n"], 0);
    for f in body["fields"].as_array().unwrap() {
        assert_eq!(f["n"], 0);
        assert!(f.get("median").is_none());
    }
    assert!(body.get("histogram").is_none());

    let h = get(&router, "/api/v1/stats/summary?histogram=voltage&bins=5").await.json();
    let bins = h["histogram"]["bins"].as_array().unwrap();
    assert_eq!(bins.len(), 5);
    let total: u64 = bins.iter().map(|b| b["count"].as_u64().unwrap()).sum();
    let voltages = app.store.with_records(|rs| rs.values().filter(|r| NumericField::Voltage.value(r).is_some()).count()).unwrap();
    assert_eq!(total as usize, voltages);
}

#[tokio::test]
async fn metadata_and_releases() {
    let app = seeded(60);
    let router = app.router();

    let vocab = get(&router, "/api/v1/vocabulary/emcv").await;
    assert_eq!(vocab.status, StatusCode::OK);
    let vocab = vocab.json();
    assert_eq!(vocab["version"], "1.0");
    assert_eq!(vocab["categorical_axes"], 5);
    assert_eq!(vocab["term_count"], 24);
    assert_eq!(get(&router, "/api/v1/vocabulary/emcv?version=9.9").await.status, StatusCode::NOT_FOUND);

    let rules = get(&router, "/api/v1/rules").await.json();
    let ids: Vec<&str> = rules["rules"].as_array().unwrap().iter().map(|r| r["rule_id"].as_str().unwrap()).collect();
    for id in ["S-01", "S-02", "P-VOLT", "P-FLOW", "P-TEMP", "P-HUM", "P-DIAM"] {
        assert!(ids.contains(&id), "{id}");
    }

    assert_eq!(get(&router, "/api/v1/releases").await.json(), json!([]));
    assert_eq!(get(&router, "/api/v1/releases/v1/dataset").await.status, StatusCode::NOT_FOUND);

    let manifest = app.releases.cut(&app.store, NaiveDate::from_ymd_opt(2026, 4, 1).unwrap(), false).unwrap();
    let list = get(&router, "/api/v1/releases").await.json();
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["label"], "v1");
    assert_eq!(list[0]["record_count"], 60);

    let dataset = get(&router, "/api/v1/releases/v1/dataset").await;
    assert_eq!(dataset.status, StatusCode::OK);
    assert_eq!(sha256_hex(&dataset.bytes), manifest.dataset_digest);
    assert!(dataset.headers[header::CONTENT_TYPE].to_str().unwrap().starts_with("text/csv"));
    assert!(dataset.headers[header::CONTENT_DISPOSITION].to_str().unwrap().contains("attachment"));
    assert_eq!(dataset.headers[header::ETAG].to_str().unwrap(), format!("\"{}\"", manifest.dataset_digest));

    for artifact in ["spreadsheet", "tables", "images", "manifest"] {
        let r = get(&router, &format!("/api/v1/releases/v1/{artifact}")).await;
        assert_eq!(r.status, StatusCode::OK, "{artifact}");
    }
    assert_eq!(get(&router, "/api/v1/releases/v1/secrets").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&router, "/api/v1/releases/v2/dataset").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn every_failure_is_an_api_error() {
    let app = app();
    let router = app.router();
    let r = get(&router, "/api/v1/nothing-here").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    r.error();
    let r = call(&router, Method::DELETE, "/api/v1/records", Some(ANA), None).await;
    assert_eq!(r.status, StatusCode::METHOD_NOT_ALLOWED);
    r.error();
    let r = call(&router, Method::POST, "/api/v1/moderation/not-a-uuid/claim", Some(MIA), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    r.error();

    app.store.detach();
    let r = get(&router, "/api/v1/records").await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
    r.error();
}

#[tokio::test]
async fn reads_do_not_change_the_store() {
    let app = seeded(80);
    let router = app.router();
    let env = post_json(&router, "/api/v1/records", ANA, &golden_record()).await.json();
    let id = env["envelope_id"].as_str().unwrap();
    let before = app.store.digest().unwrap();
    for uri in [
        "/api/v1/records",
        "/api/v1/records?polymer=PVA&limit=5",
        "/api/v1/records/ESD-000001",
        "/api/v1/stats/summary?histogram=fiber_diameter",
        "/api/v1/vocabulary/emcv",
        "/api/v1/rules",
        "/api/v1/releases",
    ] {
        assert_eq!(get(&router, uri).await.status, StatusCode::OK, "{uri}");
    }
    call(&router, Method::GET, "/api/v1/moderation/queue", Some(MIA), None).await;
    call(&router, Method::GET, &format!("/api/v1/submissions/{id}"), Some(ANA), None).await;
    assert_eq!(app.store.digest().unwrap(), before);
}
