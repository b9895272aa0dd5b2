//! Headless scripted participant speaking the study-server HTTP API.

use std::str::FromStr;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use blockies_core::blocky::DiagnosisLabel;
use blockies_core::metrics::Phase;
use blockies_core::rng::{derive_seed, stream, tag};
use blockies_core::study::StudyPlan;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Follows the advisor whenever one is shown.
    AlwaysAgree,
    /// Contradicts the advisor whenever one is shown.
    AlwaysDisagree,
    /// Answers the true label.
    GroundTruth,
    /// Answers the true label with probability `p`, the other label otherwise.
    NoisyExpert(f64),
}

impl Policy {
    pub fn needs_truth(self) -> bool {
        matches!(self, Policy::GroundTruth | Policy::NoisyExpert(_))
    }
}

impl FromStr for Policy {
    type Err = anyhow::Error;

    /// Accepts `always-agree`, `always-disagree`, `ground-truth`,
    /// `noisy-expert:P` and `noisy-expert(P)`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always-agree" => return Ok(Policy::AlwaysAgree),
            "always-disagree" => return Ok(Policy::AlwaysDisagree),
            "ground-truth" => return Ok(Policy::GroundTruth),
            _ => {}
        }
        let arg = s
            .strip_prefix("noisy-expert:")
            .or_else(|| s.strip_prefix("noisy-expert(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| anyhow!("unknown policy {s:?}; expected always-agree, always-disagree, ground-truth or noisy-expert:P"))?;
        let p: f64 = arg.trim().parse().with_context(|| format!("noisy-expert probability {arg:?}"))?;
        if !(0.0..=1.0).contains(&p) {
            bail!("noisy-expert probability must lie in [0, 1], got {p}");
        }
        Ok(Policy::NoisyExpert(p))
    }
}

#[derive(Debug, Clone)]
pub struct SimulateRequest {
    pub base_url: String,
    pub policy: Policy,
    pub seed: u64,
    pub participant: String,
    pub stratum: Option<String>,
    /// Truth source for policies that need it.
    pub plan: Option<StudyPlan>,
    pub delay: Duration,
    pub questionnaire: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutcome {
    pub token: String,
    pub session_id: String,
    pub decisions: usize,
    pub duplicates: usize,
    pub final_seq: u64,
    pub completion_code: Option<String>,
    pub elapsed_ms: u64,
}

/// Thin JSON client that reports non-2xx responses as errors with the body.
pub struct Api {
    agent: ureq::Agent,
    base: String,
}

pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl Api {
    pub fn new(base_url: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self { agent, base: base_url.trim_end_matches('/').to_string() }
    }

    fn finish(resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>, what: &str) -> Result<ApiResponse> {
        let mut resp = resp.with_context(|| format!("{what}: request failed"))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().with_context(|| format!("{what}: reading body"))?;
        let body = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap_or(Value::String(text)) };
        Ok(ApiResponse { status, body })
    }

    pub fn get(&self, path: &str) -> Result<ApiResponse> {
        Self::finish(self.agent.get(&format!("{}{path}", self.base)).call(), path)
    }

    pub fn get_auth(&self, path: &str, bearer: &str) -> Result<ApiResponse> {
        Self::finish(
            self.agent.get(&format!("{}{path}", self.base)).header("Authorization", &format!("Bearer {bearer}")).call(),
            path,
        )
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<ApiResponse> {
        Self::finish(self.agent.post(&format!("{}{path}", self.base)).send_json(body), path)
    }
}

fn expect_ok(r: ApiResponse, what: &str) -> Result<Value> {
    if (200..300).contains(&r.status) {
        Ok(r.body)
    } else {
        bail!("{what}: HTTP {} {}", r.status, r.body)
    }
}

fn parse_label(v: &Value) -> Option<DiagnosisLabel> {
    v.as_str().and_then(|s| s.parse().ok())
}

/// Runs one full session and returns its outcome.
pub fn simulate_participant(req: &SimulateRequest) -> Result<SimulateOutcome> {
    if req.policy.needs_truth() && req.plan.is_none() {
        bail!("policy {:?} needs the study plan for ground truth", req.policy);
    }
    let api = Api::new(&req.base_url);
    let mut rng = stream(derive_seed(req.seed, tag("simulate-participant")));
    let started = Instant::now();

    let created = expect_ok(
        api.post(
            "/api/sessions",
            &json!({
                "participant": req.participant,
                "stratum": req.stratum,
                "demographics": { "simulated": true },
            }),
        )?,
        "create session",
    )?;
    let token = created["token"].as_str().ok_or_else(|| anyhow!("no token in {created}"))?.to_string();
    let session_id = created["session_id"].as_str().unwrap_or_default().to_string();
    let mut last_seq = created["seq"].as_u64().unwrap_or(0);
    let (mut decisions, mut duplicates) = (0, 0);

    loop {
        let r = api.get(&format!("/api/sessions/{token}/trial"))?;
        if r.status == 409 && r.body["error"]["code"] == "session_done" {
            break;
        }
        let body = expect_ok(r, "get trial")?;
        let seq = body["seq"].as_u64().ok_or_else(|| anyhow!("trial response without seq"))?;
        if seq < last_seq {
            bail!("sequence number went backwards: {last_seq} -> {seq}");
        }
        last_seq = seq;
        let trial = &body["trial"];
        let sample_id = trial["sample_id"].as_str().ok_or_else(|| anyhow!("trial without sample_id"))?.to_string();
        let phase: Phase = serde_json::from_value(trial["phase"].clone()).context("trial phase")?;
        let advisor = parse_label(&trial["advisor"]["label"]);
        let truth = match &req.plan {
            Some(plan) => Some(plan.samples.get(&sample_id).ok_or_else(|| anyhow!("sample {sample_id} not in plan"))?.truth),
            None => parse_label(&trial["tutorial"]["truth"]),
        };
        let coin = if rng.random::<bool>() { DiagnosisLabel::Sick } else { DiagnosisLabel::Healthy };
        let label = match (req.policy, advisor) {
            (Policy::AlwaysAgree, Some(a)) => a,
            (Policy::AlwaysDisagree, Some(a)) => a.flipped(),
            (Policy::AlwaysAgree | Policy::AlwaysDisagree, None) => coin,
            (Policy::GroundTruth, _) => truth.expect("checked above"),
            (Policy::NoisyExpert(p), _) => {
                let t = truth.expect("checked above");
                if rng.random::<f64>() < p { t } else { t.flipped() }
            }
        };
        if !req.delay.is_zero() {
            std::thread::sleep(req.delay);
        }
        let ack = expect_ok(
            api.post(
                &format!("/api/sessions/{token}/decision"),
                &json!({
                    "sample_id": sample_id,
                    "label": label.as_str(),
                    "phase": phase,
                    "client_elapsed_ms": req.delay.as_millis() as u64,
                }),
            )?,
            "post decision",
        )?;
        decisions += 1;
        duplicates += ack["duplicate"].as_bool().unwrap_or(false) as usize;
        last_seq = ack["seq"].as_u64().unwrap_or(last_seq);
        if ack["done"].as_bool() == Some(true) {
            break;
        }
    }

    let mut completion_code = None;
    if req.questionnaire {
        let q = expect_ok(
            api.post(
                &format!("/api/sessions/{token}/questionnaire"),
                &json!({ "name": "post_study", "payload": { "policy": format!("{:?}", req.policy) } }),
            )?,
            "post questionnaire",
        )?;
        last_seq = q["seq"].as_u64().unwrap_or(last_seq);
        completion_code = q["completion_code"].as_str().map(str::to_string);
    }
    Ok(SimulateOutcome {
        token,
        session_id,
        decisions,
        duplicates,
        final_seq: last_seq,
        completion_code,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}
