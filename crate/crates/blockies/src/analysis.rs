//! Analyst-side report over exported trial logs.

use std::collections::BTreeMap;

use anyhow::Result;
use blockies_core::metrics::{compute_metrics, Decision, DecisionSet, MetricsReport, Phase};
use blockies_core::stats::{
    mann_whitney_u, paired_t_test, welch_t_test, wilcoxon_signed_rank, MannWhitney, TTest, Wilcoxon,
};
use blockies_core::study::{Condition, TrialRecord};
use serde::Serialize;

use crate::report::{LoggedSession, SessionMeta};

pub const TRIALS_PER_SESSION: usize = 100;

/// Parses durations such as `20m`, `90s`, `1h30m` or a bare number of
/// minutes.
pub fn parse_duration(text: &str) -> Result<std::time::Duration> {
    let t = text.trim();
    if t.is_empty() {
        anyhow::bail!("empty duration");
    }
    if let Ok(minutes) = t.parse::<f64>() {
        if minutes >= 0.0 && minutes.is_finite() {
            return Ok(std::time::Duration::from_secs_f64(minutes * 60.0));
        }
        anyhow::bail!("invalid duration {text:?}");
    }
    humantime::parse_duration(t).map_err(|e| anyhow::anyhow!("invalid duration {text:?}: {e}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct ParticipantSummary {
    #[serde(flatten)]
    pub meta: SessionMeta,
    pub trials: usize,
    pub complete: bool,
    /// First presentation to last decision.
    pub duration_ms: Option<u64>,
    pub below_min_duration: bool,
    pub included: bool,
    pub baseline: Option<MetricsReport>,
    pub ai_supported: Option<MetricsReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetweenTest {
    pub metric: &'static str,
    pub phase: Phase,
    pub high_stakes_n: usize,
    pub low_stakes_n: usize,
    pub high_stakes_mean: Option<f64>,
    pub low_stakes_mean: Option<f64>,
    pub mann_whitney: Option<MannWhitney>,
    pub welch: Option<TTest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WithinTest {
    pub metric: &'static str,
    /// `all`, `high_stakes` or `low_stakes`.
    pub group: &'static str,
    pub n: usize,
    pub baseline_mean: Option<f64>,
    pub ai_supported_mean: Option<f64>,
    /// Differences are AI-supported minus baseline.
    pub wilcoxon: Option<Wilcoxon>,
    pub paired_t: Option<TTest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub ranks: &'static str,
    pub zeros: &'static str,
    pub p_values: &'static str,
    pub mann_whitney_u: &'static str,
    pub effect_size_r: &'static str,
    pub cohens_d: &'static str,
    pub undefined_metrics: &'static str,
    pub normality: &'static str,
    pub inclusion: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub tool: &'static str,
    pub conventions: Conventions,
    pub min_duration_ms: Option<u64>,
    pub sessions: usize,
    pub included: usize,
    pub flagged_short: Vec<String>,
    pub incomplete: Vec<String>,
    pub participants: Vec<ParticipantSummary>,
    pub between_conditions: Vec<BetweenTest>,
    pub baseline_vs_ai: Vec<WithinTest>,
}

fn decision_set(trials: &[TrialRecord], phase: Phase) -> Option<DecisionSet> {
    let decisions: Vec<Decision> = trials
        .iter()
        .filter(|r| r.phase == phase)
        .map(|r| Decision {
            sample_id: r.sample_id.clone(),
            truth: r.truth,
            advisor: r.advisor,
            participant: r.participant,
            decision_time: r.decision_time_ms as f64 / 1000.0,
        })
        .collect();
    (!decisions.is_empty()).then_some(DecisionSet { phase, decisions })
}

fn phase_report(trials: &[TrialRecord], phase: Phase) -> Result<Option<MetricsReport>> {
    decision_set(trials, phase).map(|d| compute_metrics(&d)).transpose().map_err(Into::into)
}

pub fn summarize(session: &LoggedSession, min_duration_ms: Option<u64>) -> Result<ParticipantSummary> {
    let t = &session.trials;
    let duration_ms = match (t.iter().map(|r| r.presented_at_ms).min(), t.iter().map(|r| r.decided_at_ms).max()) {
        (Some(a), Some(b)) => Some(b.saturating_sub(a)),
        _ => None,
    };
    let complete = t.len() == TRIALS_PER_SESSION;
    let below = match (min_duration_ms, duration_ms) {
        (Some(min), Some(d)) => d < min,
        _ => false,
    };
    Ok(ParticipantSummary {
        meta: session.meta.clone(),
        trials: t.len(),
        complete,
        duration_ms,
        below_min_duration: below,
        included: complete && !below,
        baseline: phase_report(t, Phase::Baseline)?,
        ai_supported: phase_report(t, Phase::AiSupported)?,
    })
}

type Extract = fn(&MetricsReport) -> Option<f64>;

const METRICS: [(&str, Extract); 5] = [
    ("accuracy", |r| r.accuracy.map(|p| p.value())),
    ("agreement", |r| r.agreement.map(|p| p.value())),
    ("healthy_trust", |r| r.healthy_trust.map(|p| p.value())),
    ("healthy_distrust", |r| r.healthy_distrust.map(|p| p.value())),
    ("mean_decision_time", |r| Some(r.mean_decision_time)),
];

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn report_of(p: &ParticipantSummary, phase: Phase) -> Option<&MetricsReport> {
    match phase {
        Phase::Baseline => p.baseline.as_ref(),
        Phase::AiSupported => p.ai_supported.as_ref(),
        _ => None,
    }
}

fn between(included: &[&ParticipantSummary], metric: &'static str, f: Extract, phase: Phase) -> BetweenTest {
    let values = |c: Condition| -> Vec<f64> {
        included.iter().filter(|p| p.meta.condition == c).filter_map(|p| report_of(p, phase).and_then(f)).collect()
    };
    let (hi, lo) = (values(Condition::HighStakes), values(Condition::LowStakes));
    let mut notes = Vec::new();
    let mann_whitney = mann_whitney_u(&hi, &lo).map_err(|e| notes.push(format!("mann-whitney: {e}"))).ok();
    let welch = welch_t_test(&hi, &lo).map_err(|e| notes.push(format!("welch: {e}"))).ok();
    BetweenTest {
        metric,
        phase,
        high_stakes_n: hi.len(),
        low_stakes_n: lo.len(),
        high_stakes_mean: mean(&hi),
        low_stakes_mean: mean(&lo),
        mann_whitney,
        welch,
        notes,
    }
}

fn within(included: &[&ParticipantSummary], metric: &'static str, f: Extract, group: &'static str) -> WithinTest {
    let (mut base, mut ai) = (Vec::new(), Vec::new());
    for p in included {
        let keep = match group {
            "high_stakes" => p.meta.condition == Condition::HighStakes,
            "low_stakes" => p.meta.condition == Condition::LowStakes,
            _ => true,
        };
        if let (true, Some(b), Some(a)) = (keep, p.baseline.as_ref().and_then(f), p.ai_supported.as_ref().and_then(f)) {
            base.push(b);
            ai.push(a);
        }
    }
    let diffs: Vec<f64> = ai.iter().zip(&base).map(|(a, b)| a - b).collect();
    let mut notes = Vec::new();
    let wilcoxon = wilcoxon_signed_rank(&diffs).map_err(|e| notes.push(format!("wilcoxon: {e}"))).ok();
    let paired_t = paired_t_test(&ai, &base).map_err(|e| notes.push(format!("paired t: {e}"))).ok();
    WithinTest {
        metric,
        group,
        n: diffs.len(),
        baseline_mean: mean(&base),
        ai_supported_mean: mean(&ai),
        wilcoxon,
        paired_t,
        notes,
    }
}

pub fn analyze(sessions: &[LoggedSession], min_duration: Option<std::time::Duration>) -> Result<AnalysisReport> {
    let min_ms = min_duration.map(|d| d.as_millis() as u64);
    let participants: Vec<ParticipantSummary> =
        sessions.iter().map(|s| summarize(s, min_ms)).collect::<Result<_>>()?;
    let included: Vec<&ParticipantSummary> = participants.iter().filter(|p| p.included).collect();

    let mut between_conditions = Vec::new();
    for (name, f) in METRICS {
        between_conditions.push(between(&included, name, f, Phase::AiSupported));
    }
    between_conditions.push(between(&included, "accuracy", METRICS[0].1, Phase::Baseline));
    between_conditions.push(between(&included, "mean_decision_time", METRICS[4].1, Phase::Baseline));

    let mut baseline_vs_ai = Vec::new();
    for group in ["all", "high_stakes", "low_stakes"] {
        for (name, f) in [METRICS[0], METRICS[4]] {
            baseline_vs_ai.push(within(&included, name, f, group));
        }
    }

    let inclusion = match min_ms {
        Some(ms) => format!("complete sessions ({TRIALS_PER_SESSION} trials) lasting at least {ms} ms; shorter sessions are flagged and excluded from tests"),
        None => format!("complete sessions ({TRIALS_PER_SESSION} trials); no duration filter"),
    };
    Ok(AnalysisReport {
        tool: concat!("blockies ", env!("CARGO_PKG_VERSION")),
        conventions: Conventions {
            ranks: "ties receive midranks",
            zeros: "zero paired differences are dropped before ranking",
            p_values: "two-sided; exact null distribution for tie-free samples (mann-whitney n <= 16, wilcoxon n <= 12), otherwise normal approximation with tie and continuity correction",
            mann_whitney_u: "U of the high-stakes sample",
            effect_size_r: "|z| / sqrt(N) with z from the normal approximation without continuity correction; interpretation, not a published formula",
            cohens_d: "mean difference over pooled SD (between) or SD of differences (within)",
            undefined_metrics: "metrics with an empty denominator are null and the participant is left out of that test",
            normality: "no normality test is run; both rank-based and t-tests are reported",
            inclusion,
        },
        min_duration_ms: min_ms,
        sessions: participants.len(),
        included: included.len(),
        flagged_short: participants.iter().filter(|p| p.below_min_duration).map(|p| p.meta.session_id.clone()).collect(),
        incomplete: participants.iter().filter(|p| !p.complete).map(|p| p.meta.session_id.clone()).collect(),
        between_conditions,
        baseline_vs_ai,
        participants,
    })
}

/// Short plain-text table of the main numbers.
pub fn render_summary(r: &AnalysisReport) -> String {
    let mut out = String::new();
    out += &format!("sessions {} included {} flagged-short {} incomplete {}\n", r.sessions, r.included, r.flagged_short.len(), r.incomplete.len());
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    out += "between conditions (high vs low)\n";
    for t in &r.between_conditions {
        out += &format!(
            "  {:<20} {:<13} n={}/{} mean={}/{} mwu_p={} welch_p={}\n",
            t.metric,
            t.phase.as_str(),
            t.high_stakes_n,
            t.low_stakes_n,
            fmt(t.high_stakes_mean),
            fmt(t.low_stakes_mean),
            fmt(t.mann_whitney.map(|m| m.p)),
            fmt(t.welch.map(|w| w.p)),
        );
    }
    out += "baseline vs ai-supported\n";
    for t in &r.baseline_vs_ai {
        out += &format!(
            "  {:<20} {:<12} n={} mean={}/{} wilcoxon_p={} paired_t_p={}\n",
            t.metric,
            t.group,
            t.n,
            fmt(t.baseline_mean),
            fmt(t.ai_supported_mean),
            fmt(t.wilcoxon.map(|w| w.p)),
            fmt(t.paired_t.map(|w| w.p)),
        );
    }
    let mut by_group: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &r.participants {
        *by_group.entry(p.meta.condition.as_str()).or_default() += p.included as usize;
    }
    for (c, n) in by_group {
        out += &format!("included {c}: {n}\n");
    }
    out
}
