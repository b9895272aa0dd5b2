mod common;

use std::collections::BTreeSet;

use blockies::client::{simulate_participant, Api, Policy, SimulateRequest};
use blockies::report::{export_trial_logs, read_trial_logs};
use blockies::store::SessionStore;
use blockies_core::metrics::Phase;
use blockies_core::study::SessionState;
use common::*;
use serde_json::{json, Value};

fn create(api: &Api, stratum: &str) -> Value {
    let r = api.post("/api/sessions", &json!({ "participant": "p", "stratum": stratum, "demographics": {"age": 30} })).unwrap();
    assert_eq!(r.status, 201, "{}", r.body);
    r.body
}

fn decide(api: &Api, token: &str, sample_id: &str, label: &str) -> (u16, Value) {
    let r = api.post(&format!("/api/sessions/{token}/decision"), &json!({ "sample_id": sample_id, "label": label })).unwrap();
    (r.status, r.body)
}

fn results(api: &Api) -> Value {
    let r = api.get_auth(&format!("/api/admin/studies/{STUDY_ID}/results"), ADMIN).unwrap();
    assert_eq!(r.status, 200, "{}", r.body);
    r.body
}

fn sim(url: &str, policy: Policy, plan: Option<&blockies_core::study::StudyPlan>) -> blockies::client::SimulateOutcome {
    simulate_participant(&SimulateRequest {
        base_url: url.into(),
        policy,
        seed: 1,
        participant: "sim".into(),
        stratum: Some("other".into()),
        plan: plan.cloned(),
        delay: std::time::Duration::ZERO,
        questionnaire: true,
    })
    .unwrap()
}

#[test]
fn responses_never_leak_truth_and_follow_phase_rules() {
    let fx = fixture();
    let clock = TestClock::new(1_000_000);
    let server = start_server(&fx.server_config(), clock.clock());
    let api = Api::new(&server.url);

    // two sessions in one stratum get opposite conditions
    let a = create(&api, "female");
    let b = create(&api, "female");
    let mut reminders = Vec::new();
    let mut last_seq = a["seq"].as_u64().unwrap();
    let token = a["token"].as_str().unwrap();
    let mut phases_seen = BTreeSet::new();
    for i in 0..100 {
        let first = api.get(&format!("/api/sessions/{token}/trial")).unwrap();
        assert_eq!(first.status, 200);
        let again = api.get(&format!("/api/sessions/{token}/trial")).unwrap();
        assert_eq!(first.body, again.body, "trial {i} not idempotent");
        let seq = first.body["seq"].as_u64().unwrap();
        assert!(seq >= last_seq);
        last_seq = seq;
        let trial = &first.body["trial"];
        let phase: Phase = serde_json::from_value(trial["phase"].clone()).unwrap();
        phases_seen.insert(phase.as_str());
        let mut keys = Vec::new();
        common::all_keys(&first.body, &mut keys);
        match phase {
            Phase::Tutorial => {
                assert!(trial["tutorial"]["truth"].is_string());
                assert!(trial["tutorial"]["symptoms"].is_array());
                assert!(trial["advisor"]["label"].is_string());
            }
            Phase::Baseline => {
                assert!(trial.get("advisor").is_none(), "advisor key present in baseline");
                assert!(!keys.iter().any(|k| k == "truth" || k == "symptoms" || k == "tutorial"), "{keys:?}");
            }
            Phase::AiSupported => {
                assert!(trial["advisor"]["label"].is_string());
                assert!(trial["advisor"]["confidence"].is_f64());
                assert!(!keys.iter().any(|k| k == "truth" || k == "symptoms" || k == "tutorial"), "{keys:?}");
                reminders.push(trial["stakes_reminder"].as_bool().unwrap());
            }
            Phase::Done => unreachable!(),
        }
        assert!(first.body["image_url"].as_str().unwrap().starts_with("/media/"));
        clock.advance(1500);
        let (status, ack) = decide(&api, token, trial["sample_id"].as_str().unwrap(), "healthy");
        assert_eq!(status, 200, "{ack}");
        assert!(ack["seq"].as_u64().unwrap() > last_seq);
        last_seq = ack["seq"].as_u64().unwrap();
        assert!(ack.get("truth").is_none());
        assert_eq!(ack["done"], i == 99);
        if i == 99 {
            assert_eq!(ack["next"], "questionnaire");
        }
    }
    assert_eq!(phases_seen.len(), 3);
    let done = api.get(&format!("/api/sessions/{token}/trial")).unwrap();
    assert_eq!(done.status, 409);
    assert_eq!(done.body["error"]["code"], "session_done");

    // reminders are per condition and constant within a session
    assert!(reminders.iter().all(|r| *r == reminders[0]));
    let res = results(&api);
    let sessions = res["sessions"].as_array().unwrap();
    let cond = |id: &Value| sessions.iter().find(|s| s["session_id"] == *id).unwrap()["condition"].clone();
    assert_ne!(cond(&a["session_id"]), cond(&b["session_id"]));
    assert_eq!(reminders[0], cond(&a["session_id"]) == "high_stakes");
    let mine = sessions.iter().find(|s| s["session_id"] == a["session_id"]).unwrap();
    let trials = mine["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 100);
    assert!(trials.iter().all(|t| t["decision_time_ms"] == 1500));
    assert!(trials.iter().filter(|t| t["phase"] == "baseline").all(|t| t.get("advisor").is_none()));
}

#[test]
fn metric_oracles_over_http() {
    let fx = fixture();
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let agree = sim(&server.url, Policy::AlwaysAgree, None);
    let correct = sim(&server.url, Policy::GroundTruth, Some(&fx.plan));
    assert_eq!(agree.decisions, 100);
    assert!(agree.completion_code.is_some());

    let api = Api::new(&server.url);
    let res = results(&api);
    let ai_report = |id: &str| -> Value {
        let s = res["sessions"].as_array().unwrap().iter().find(|s| s["session_id"] == id).unwrap();
        s["reports"].as_array().unwrap().iter().find(|r| r["phase"] == "ai_supported").unwrap().clone()
    };
    let frac = |v: &Value| (v["num"].as_u64().unwrap(), v["den"].as_u64().unwrap());
    let r = ai_report(&agree.session_id);
    assert_eq!(frac(&r["accuracy"]), (28, 40));
    assert_eq!(frac(&r["agreement"]), (40, 40));
    assert_eq!(frac(&r["healthy_trust"]), (28, 28));
    assert_eq!(frac(&r["healthy_distrust"]), (0, 12));
    let r = ai_report(&correct.session_id);
    assert_eq!(frac(&r["accuracy"]), (40, 40));
    assert_eq!(frac(&r["agreement"]), (28, 40));
    assert_eq!(frac(&r["healthy_trust"]), (28, 28));
    assert_eq!(frac(&r["healthy_distrust"]), (12, 12));
}

#[test]
fn validation_auth_and_ordering_errors() {
    let fx = fixture();
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let api = Api::new(&server.url);

    for bad in [json!({}), json!({"participant": ""}), json!({"participant": "x", "stratum": "nope"}), json!({"participant": 3}), json!({"participant": "x", "extra": 1})] {
        let r = api.post("/api/sessions", &bad).unwrap();
        assert_eq!(r.status, 422, "{bad} -> {}", r.body);
        assert!(r.body["error"]["code"].is_string());
    }
    assert_eq!(api.get("/api/sessions/deadbeef/trial").unwrap().status, 404);

    let s = create(&api, "male");
    let token = s["token"].as_str().unwrap();
    let t = api.get(&format!("/api/sessions/{token}/trial")).unwrap().body;
    let id = t["trial"]["sample_id"].as_str().unwrap();
    let (status, body) = decide(&api, token, id, "maybe");
    assert_eq!(status, 422);
    assert_eq!(body["error"]["code"], "invalid_request");
    let other = fx.plan.tutorial.iter().find(|x| *x != id).unwrap();
    let (status, body) = decide(&api, token, other, "sick");
    assert_eq!(status, 409);
    assert_eq!(body["error"]["code"], "out_of_order");
    let q = api.post(&format!("/api/sessions/{token}/questionnaire"), &json!({"name": "x", "payload": {}})).unwrap();
    assert_eq!(q.status, 409);

    // duplicate submission is acknowledged once
    let (s1, a1) = decide(&api, token, id, "sick");
    let (s2, a2) = decide(&api, token, id, "sick");
    assert_eq!((s1, s2), (200, 200));
    assert_eq!(a1["duplicate"], false);
    assert_eq!(a2["duplicate"], true);
    assert_eq!(a1["seq"], a2["seq"]);

    assert_eq!(api.get(&format!("/api/admin/studies/{STUDY_ID}/results")).unwrap().status, 401);
    assert_eq!(api.get_auth(&format!("/api/admin/studies/{STUDY_ID}/results"), "wrong").unwrap().status, 401);
    assert_eq!(api.get_auth("/api/admin/studies/other/results", ADMIN).unwrap().status, 404);
    let res = results(&api);
    assert_eq!(res["sessions"][0]["trials"].as_array().unwrap().len(), 1);
}

#[test]
fn media_is_restricted_and_immutable() {
    let fx = fixture();
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
    let image = &fx.plan.samples.values().next().unwrap().image;
    let mut r = agent.get(&format!("{}/media/{image}", server.url)).call().unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(r.headers()["cache-control"], "public, max-age=31536000, immutable");
    assert_eq!(r.headers()["content-type"], "image/png");
    let bytes = r.body_mut().read_to_vec().unwrap();
    assert!(blockies::fsutil::decode_png(&bytes).is_ok());
    for bad in ["experimental_999999.png", "..%2Fplan.json", "plan.json"] {
        let r = agent.get(&format!("{}/media/{bad}", server.url)).call().unwrap();
        assert_eq!(r.status(), 404, "{bad}");
    }
}

#[test]
fn closed_study_rejects_new_sessions() {
    let fx = fixture_with(true);
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let r = Api::new(&server.url).post("/api/sessions", &json!({"participant": "p", "stratum": "male"})).unwrap();
    assert_eq!(r.status, 403);
    assert_eq!(r.body["error"]["code"], "study_closed");
}

#[test]
fn concurrent_creations_are_distinct_and_balanced() {
    let fx = fixture();
    let server = start_server(&fx.server_config(), blockies::server::system_clock());
    let url = server.url.clone();
    let handles: Vec<_> = (0..50)
        .map(|_| {
            let url = url.clone();
            std::thread::spawn(move || create(&Api::new(&url), "female"))
        })
        .collect();
    let created: Vec<Value> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let tokens: BTreeSet<_> = created.iter().map(|c| c["token"].as_str().unwrap().to_string()).collect();
    let ids: BTreeSet<_> = created.iter().map(|c| c["session_id"].as_str().unwrap().to_string()).collect();
    assert_eq!((tokens.len(), ids.len()), (50, 50));
    assert!(tokens.iter().all(|t| t.len() >= 32));
    let res = results(&Api::new(&url));
    let high = res["sessions"].as_array().unwrap().iter().filter(|s| s["condition"] == "high_stakes").count();
    assert_eq!(high, 25);
}

#[test]
fn restart_resumes_pending_trial_and_export_is_complete() {
    let fx = fixture();
    let clock = TestClock::new(5_000);
    let (token, pending) = {
        let server = start_server(&fx.server_config(), clock.clock());
        let api = Api::new(&server.url);
        let token = create(&api, "other")["token"].as_str().unwrap().to_string();
        for _ in 0..30 {
            let t = api.get(&format!("/api/sessions/{token}/trial")).unwrap().body;
            clock.advance(700);
            decide(&api, &token, t["trial"]["sample_id"].as_str().unwrap(), "sick");
        }
        let pending = api.get(&format!("/api/sessions/{token}/trial")).unwrap().body;
        (token, pending)
    };
    clock.advance(60_000);
    let server = start_server(&fx.server_config(), clock.clock());
    let api = Api::new(&server.url);
    let resumed = api.get(&format!("/api/sessions/{token}/trial")).unwrap().body;
    assert_eq!(resumed, pending);
    loop {
        let r = api.get(&format!("/api/sessions/{token}/trial")).unwrap();
        if r.status == 409 {
            break;
        }
        clock.advance(900);
        decide(&api, &token, r.body["trial"]["sample_id"].as_str().unwrap(), "healthy");
    }
    let q = api.post(&format!("/api/sessions/{token}/questionnaire"), &json!({"name": "trust", "payload": {"score": 4}})).unwrap();
    assert_eq!(q.status, 200);
    assert!(q.body["completion_code"].is_string());
    let res = results(&api);
    drop(server);

    let store = SessionStore::open(&fx.data_dir).unwrap();
    let sessions = store.load_all(&fx.plan).unwrap();
    assert_eq!(sessions.len(), 1);
    let events = store.read_events(&sessions[0].session_id).unwrap();
    assert_eq!(SessionState::replay(&fx.plan, &events).unwrap(), sessions[0]);
    assert_eq!(serde_json::to_value(&sessions[0].records).unwrap(), res["sessions"][0]["trials"]);
    // the pending trial's clock started before the restart
    assert_eq!(sessions[0].records[30].decision_time_ms, 60_900);

    let out = fx.path("logs");
    let paths = export_trial_logs(&sessions, &out).unwrap();
    let lines = read_lines(&paths[0]);
    assert_eq!(lines.len(), 101);
    assert_eq!(lines.iter().filter(|l| l["record"] == "trial").count(), 100);
    assert!(lines.iter().all(|l| l["session_id"] == sessions[0].session_id.as_str() && l["condition"].is_string()));
    let back = read_trial_logs(&[out]).unwrap();
    assert_eq!(back[0].trials, sessions[0].records);
}

#[test]
fn static_bundle_is_served() {
    let fx = fixture();
    let web = fx.path("web");
    std::fs::create_dir_all(&web).unwrap();
    std::fs::write(web.join("index.html"), "<!doctype html><title>study</title>").unwrap();
    let mut cfg = fx.server_config();
    cfg.static_dir = Some(web);
    let server = start_server(&cfg, blockies::server::system_clock());
    let api = Api::new(&server.url);
    let r = api.get("/index.html").unwrap();
    assert_eq!(r.status, 200);
    assert!(r.body.as_str().unwrap().contains("study"));
    assert_eq!(api.get("/").unwrap().status, 200);
    assert_eq!(api.get("/api/sessions/x/trial").unwrap().status, 404);
}
