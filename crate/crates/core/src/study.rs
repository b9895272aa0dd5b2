//! Study plans and the participant session state machine.
//!
//! Sessions are event sourced: every state change is a [`SessionEvent`], and
//! replaying a session's events through [`SessionState::replay`] rebuilds it.
//! Time is always passed in by the caller as milliseconds.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::advisor::PredictionTable;
use crate::blocky::{DiagnosisLabel, SymptomKind};
use crate::dataset::{select_study_subset, SampleRecord, SelectionCandidate};
use crate::hash::json_hash;
use crate::metrics::{compute_metrics, Decision, DecisionSet, MetricsReport, Phase};
use crate::rng::{derive_seed, tag, tagged_stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("session is complete")]
    Done,
    #[error("decision for {got} but the current trial is {expected}")]
    OutOfOrder { expected: String, got: String },
    #[error("trial {0} has not been presented yet")]
    NotPresented(String),
    #[error("questionnaires open after the last trial")]
    QuestionnaireTooEarly,
    #[error("event log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LowStakes,
    HighStakes,
}

impl Condition {
    pub const fn as_str(self) -> &'static str {
        match self {
            Condition::LowStakes => "low_stakes",
            Condition::HighStakes => "high_stakes",
        }
    }
}

/// Condition for the `index`-th session (0-based) within a stratum:
/// alternating, starting from a seeded coin flip per stratum.
pub fn assign_condition(seed: u64, stratum: &str, index: u64) -> Condition {
    let first = derive_seed(seed, tag(stratum)) & 1;
    if (first ^ (index & 1)) == 0 {
        Condition::LowStakes
    } else {
        Condition::HighStakes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusPolicy {
    /// Accuracy at and above which the full amount is paid.
    pub threshold: f64,
    /// Accuracy below which nothing is paid.
    pub floor: f64,
    pub max_amount: f64,
}

impl BonusPolicy {
    pub const HIGH_STAKES: BonusPolicy = BonusPolicy { threshold: 0.90, floor: 0.75, max_amount: 4.50 };
    pub const LOW_STAKES: BonusPolicy = BonusPolicy { threshold: 0.75, floor: 0.60, max_amount: 1.50 };

    pub fn validate(&self) -> Result<()> {
        let ok = self.floor.is_finite()
            && self.threshold.is_finite()
            && self.max_amount.is_finite()
            && 0.0 <= self.floor
            && self.floor < self.threshold
            && self.threshold <= 1.0
            && self.max_amount >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bonus policy {self:?}")))
        }
    }
}

/// Linear between 0 at the floor and the full amount at the threshold.
pub fn bonus_for_accuracy(accuracy: f64, policy: &BonusPolicy) -> f64 {
    if accuracy >= policy.threshold {
        policy.max_amount
    } else if accuracy < policy.floor {
        0.0
    } else {
        policy.max_amount * (accuracy - policy.floor) / (policy.threshold - policy.floor)
    }
}

pub fn compute_bonus(report: &MetricsReport, policy: &BonusPolicy) -> Result<f64> {
    let acc = report.accuracy.ok_or_else(|| Error::Stats("bonus needs a defined accuracy".into()))?;
    Ok(bonus_for_accuracy(acc.value(), policy))
}

/// Narrative content for one condition. Reminders are shown only when set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StakesTexts {
    pub narrative: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stakes_reminder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bonus_reminder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSettings {
    pub texts: StakesTexts,
    pub bonus: BonusPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub tutorial_size: usize,
    pub tutorial_correct: usize,
    pub main_size: usize,
    pub main_correct: usize,
    pub low_stakes: ConditionSettings,
    pub high_stakes: ConditionSettings,
}

impl Default for StudyDesign {
    fn default() -> Self {
        StudyDesign {
            tutorial_size: 20,
            tutorial_correct: 14,
            main_size: 40,
            main_correct: 28,
            low_stakes: ConditionSettings {
                texts: StakesTexts {
                    narrative: "You are helping a research team sort Blocky X-rays. Your answers feed into a study \
                                of the Blocky population. You can earn a small bonus for accurate diagnoses."
                        .into(),
                    stakes_reminder: None,
                    bonus_reminder: None,
                },
                bonus: BonusPolicy::LOW_STAKES,
            },
            high_stakes: ConditionSettings {
                texts: StakesTexts {
                    narrative: "You are the attending physician for these Blockies. A missed OCDegen diagnosis \
                                leaves a patient untreated, and a false alarm sends a healthy Blocky into surgery. \
                                You can earn a significant bonus for accurate diagnoses."
                        .into(),
                    stakes_reminder: Some("Each misdiagnosis harms a real patient.".into()),
                    bonus_reminder: Some("Bonus: full amount for accuracy of 90% or more.".into()),
                },
                bonus: BonusPolicy::HIGH_STAKES,
            },
        }
    }
}

impl StudyDesign {
    pub fn validate(&self) -> Result<()> {
        if self.tutorial_correct > self.tutorial_size || self.main_correct > self.main_size {
            return Err(Error::Config("correct counts exceed subset sizes".into()));
        }
        if self.main_size < 2 {
            return Err(Error::Config("main set needs at least two samples".into()));
        }
        self.low_stakes.bonus.validate()?;
        self.high_stakes.bonus.validate()
    }

    pub fn settings(&self, condition: Condition) -> &ConditionSettings {
        match condition {
            Condition::LowStakes => &self.low_stakes,
            Condition::HighStakes => &self.high_stakes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSample {
    pub image: String,
    pub truth: DiagnosisLabel,
    pub symptoms: Vec<SymptomKind>,
    pub advisor_label: DiagnosisLabel,
    pub advisor_confidence: f64,
}

impl PlanSample {
    pub fn advisor_correct(&self) -> bool {
        self.advisor_label == self.truth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub seed: u64,
    pub design: StudyDesign,
    pub tutorial: Vec<String>,
    pub baseline_order: Vec<String>,
    pub ai_order: Vec<String>,
    pub samples: BTreeMap<String, PlanSample>,
    pub prediction_hash: String,
}

/// Selects tutorial and main subsets from a manifest and fixes the two
/// presentation orders of the main set.
pub fn build_plan(
    manifest: &[SampleRecord],
    predictions: &PredictionTable,
    design: StudyDesign,
    seed: u64,
) -> Result<StudyPlan> {
    design.validate()?;
    let mut candidates = Vec::with_capacity(manifest.len());
    for rec in manifest {
        let pred = predictions.get(&rec.sample_id)?;
        candidates.push(SelectionCandidate {
            sample_id: rec.sample_id.clone(),
            pose_deviation: rec.params.pose_deviation(),
            advisor_correct: pred.label == rec.label,
        });
    }
    let main = select_study_subset(&candidates, design.main_size, design.main_correct, derive_seed(seed, tag("main")), &BTreeSet::new())?;
    let exclude: BTreeSet<String> = main.iter().cloned().collect();
    let tutorial = select_study_subset(
        &candidates,
        design.tutorial_size,
        design.tutorial_correct,
        derive_seed(seed, tag("tutorial")),
        &exclude,
    )?;

    let mut sorted = main.clone();
    sorted.sort();
    let mut rng = tagged_stream(seed, "orders");
    let mut baseline_order = sorted.clone();
    baseline_order.shuffle(&mut rng);
    let mut ai_order = sorted;
    loop {
        ai_order.shuffle(&mut rng);
        if ai_order != baseline_order {
            break;
        }
    }

    let by_id: BTreeMap<&str, &SampleRecord> = manifest.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let mut samples = BTreeMap::new();
    for id in tutorial.iter().chain(&main) {
        let rec = by_id[id.as_str()];
        let pred = predictions.get(id)?;
        samples.insert(
            id.clone(),
            PlanSample {
                image: rec.image_name(),
                truth: rec.label,
                symptoms: rec.symptoms.active().collect(),
                advisor_label: pred.label,
                advisor_confidence: pred.confidence,
            },
        );
    }
    Ok(StudyPlan { seed, design, tutorial, baseline_order, ai_order, samples, prediction_hash: json_hash(predictions) })
}

impl StudyPlan {
    pub fn hash(&self) -> String {
        json_hash(self)
    }

    pub fn order(&self, phase: Phase) -> &[String] {
        match phase {
            Phase::Tutorial => &self.tutorial,
            Phase::Baseline => &self.baseline_order,
            Phase::AiSupported => &self.ai_order,
            Phase::Done => &[],
        }
    }

    pub fn total_trials(&self) -> usize {
        self.tutorial.len() + self.baseline_order.len() + self.ai_order.len()
    }

    fn next_phase(&self, phase: Phase) -> Phase {
        let mut p = phase;
        loop {
            p = match p {
                Phase::Tutorial => Phase::Baseline,
                Phase::Baseline => Phase::AiSupported,
                Phase::AiSupported | Phase::Done => Phase::Done,
            };
            if p == Phase::Done || !self.order(p).is_empty() {
                return p;
            }
        }
    }

    fn first_phase(&self) -> Phase {
        if self.tutorial.is_empty() {
            self.next_phase(Phase::Tutorial)
        } else {
            Phase::Tutorial
        }
    }

    /// Checks structural invariants of a plan loaded from disk.
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        let mut a = self.baseline_order.clone();
        let mut b = self.ai_order.clone();
        a.sort();
        b.sort();
        if a != b {
            return Err(Error::Config("baseline and AI-phase orders hold different samples".into()));
        }
        for id in self.tutorial.iter().chain(&self.baseline_order) {
            if !self.samples.contains_key(id) {
                return Err(Error::Config(format!("plan lacks sample info for {id}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sample_id: String,
    pub phase: Phase,
    pub presented_at_ms: u64,
    pub decided_at_ms: u64,
    pub decision_time_ms: u64,
    pub client_elapsed_ms: Option<u64>,
    pub participant: DiagnosisLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisor: Option<DiagnosisLabel>,
    pub truth: DiagnosisLabel,
    pub feedback_shown: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireEntry {
    pub name: String,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        participant: String,
        stratum: String,
        condition: Condition,
        plan_hash: String,
        #[serde(default)]
        demographics: serde_json::Value,
    },
    Presented {
        phase: Phase,
        index: usize,
        sample_id: String,
        at_ms: u64,
    },
    Decided {
        phase: Phase,
        index: usize,
        sample_id: String,
        label: DiagnosisLabel,
        decided_at_ms: u64,
        client_elapsed_ms: Option<u64>,
        /// Optional symptom checklist. Stored, never scored.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        checklist: Option<serde_json::Value>,
    },
    Questionnaire {
        name: String,
        payload: serde_json::Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub participant: String,
    pub stratum: String,
    pub condition: Condition,
    pub plan_hash: String,
    pub demographics: serde_json::Value,
    pub phase: Phase,
    pub cursor: usize,
    /// When the current trial was first served.
    pub presented_at_ms: Option<u64>,
    pub records: Vec<TrialRecord>,
    pub checklists: BTreeMap<String, serde_json::Value>,
    pub questionnaires: Vec<QuestionnaireEntry>,
    /// Number of events applied so far.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorView {
    pub label: DiagnosisLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TutorialFeedback {
    pub truth: DiagnosisLabel,
    pub symptoms: Vec<SymptomKind>,
}

/// What the participant sees for one trial. Absent fields are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub phase: Phase,
    pub index: usize,
    pub phase_length: usize,
    pub overall_index: usize,
    pub overall_length: usize,
    pub sample_id: String,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisor: Option<AdvisorView>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tutorial: Option<TutorialFeedback>,
    pub stakes_reminder: bool,
    pub bonus_reminder: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stakes_reminder_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bonus_reminder_text: Option<String>,
}

/// Result of a decision submission.
#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    /// New record; the event must be persisted before acknowledging.
    Accepted { event: SessionEvent, record: TrialRecord },
    /// Replay of an already recorded decision.
    Duplicate { record: TrialRecord },
}

impl SessionState {
    pub fn created_event(
        session_id: String,
        participant: String,
        stratum: String,
        condition: Condition,
        plan: &StudyPlan,
        demographics: serde_json::Value,
    ) -> SessionEvent {
        SessionEvent::Created { session_id, participant, stratum, condition, plan_hash: plan.hash(), demographics }
    }

    /// Rebuilds a session from its events.
    pub fn replay<'a>(plan: &StudyPlan, events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<SessionState> {
        let mut iter = events.into_iter();
        let mut state = match iter.next() {
            Some(SessionEvent::Created { session_id, participant, stratum, condition, plan_hash, demographics }) => {
                if *plan_hash != plan.hash() {
                    return Err(SessionError::Log(format!("session {session_id} was created for another plan")).into());
                }
                SessionState {
                    session_id: session_id.clone(),
                    participant: participant.clone(),
                    stratum: stratum.clone(),
                    condition: *condition,
                    plan_hash: plan_hash.clone(),
                    demographics: demographics.clone(),
                    phase: plan.first_phase(),
                    cursor: 0,
                    presented_at_ms: None,
                    records: Vec::new(),
                    checklists: BTreeMap::new(),
                    questionnaires: Vec::new(),
                    seq: 1,
                }
            }
            _ => return Err(SessionError::Log("log does not start with a creation event".into()).into()),
        };
        for ev in iter {
            state.apply(plan, ev)?;
        }
        Ok(state)
    }

    fn current_id<'p>(&self, plan: &'p StudyPlan) -> Option<&'p String> {
        plan.order(self.phase).get(self.cursor)
    }

    /// Applies one event after checking it against the current state.
    pub fn apply(&mut self, plan: &StudyPlan, event: &SessionEvent) -> Result<()> {
        match event {
            SessionEvent::Created { .. } => {
                return Err(SessionError::Log("duplicate creation event".into()).into());
            }
            SessionEvent::Presented { phase, index, sample_id, at_ms } => {
                self.expect_position(plan, *phase, *index, sample_id)?;
                if self.presented_at_ms.is_some() {
                    return Err(SessionError::Log(format!("trial {sample_id} presented twice")).into());
                }
                self.presented_at_ms = Some(*at_ms);
            }
            SessionEvent::Decided { phase, index, sample_id, label, decided_at_ms, client_elapsed_ms, checklist } => {
                self.expect_position(plan, *phase, *index, sample_id)?;
                let presented = self.presented_at_ms.ok_or_else(|| SessionError::NotPresented(sample_id.clone()))?;
                if *decided_at_ms <= presented {
                    return Err(SessionError::Log(format!("non-positive decision time for {sample_id}")).into());
                }
                let info = &plan.samples[sample_id];
                self.records.push(TrialRecord {
                    sample_id: sample_id.clone(),
                    phase: *phase,
                    presented_at_ms: presented,
                    decided_at_ms: *decided_at_ms,
                    decision_time_ms: decided_at_ms - presented,
                    client_elapsed_ms: *client_elapsed_ms,
                    participant: *label,
                    advisor: (*phase != Phase::Baseline).then_some(info.advisor_label),
                    truth: info.truth,
                    feedback_shown: *phase == Phase::Tutorial,
                });
                if let Some(c) = checklist {
                    self.checklists.insert(format!("{}/{}", phase.as_str(), sample_id), c.clone());
                }
                self.presented_at_ms = None;
                self.cursor += 1;
                if self.cursor == plan.order(self.phase).len() {
                    self.phase = plan.next_phase(self.phase);
                    self.cursor = 0;
                }
            }
            SessionEvent::Questionnaire { name, payload } => {
                if self.phase != Phase::Done {
                    return Err(SessionError::QuestionnaireTooEarly.into());
                }
                self.questionnaires.push(QuestionnaireEntry { name: name.clone(), payload: payload.clone() });
            }
        }
        self.seq += 1;
        Ok(())
    }

    fn expect_position(&self, plan: &StudyPlan, phase: Phase, index: usize, sample_id: &str) -> Result<()> {
        let current = self.current_id(plan).ok_or(SessionError::Done)?;
        if phase != self.phase || index != self.cursor || current != sample_id {
            return Err(SessionError::Log(format!(
                "event for {}/{index}/{sample_id} but session is at {}/{}/{current}",
                phase.as_str(),
                self.phase.as_str(),
                self.cursor
            ))
            .into());
        }
        Ok(())
    }

    /// Current trial view, plus the presentation event to persist when the
    /// trial is served for the first time.
    pub fn present(&self, plan: &StudyPlan, now_ms: u64) -> Result<(TrialView, Option<SessionEvent>)> {
        let id = self.current_id(plan).ok_or(SessionError::Done)?;
        let info = &plan.samples[id];
        let texts = &plan.design.settings(self.condition).texts;
        let high = self.condition == Condition::HighStakes;
        let (offset, _) = self.progress(plan);
        let view = TrialView {
            phase: self.phase,
            index: self.cursor,
            phase_length: plan.order(self.phase).len(),
            overall_index: offset,
            overall_length: plan.total_trials(),
            sample_id: id.clone(),
            image: info.image.clone(),
            advisor: (self.phase != Phase::Baseline)
                .then_some(AdvisorView { label: info.advisor_label, confidence: info.advisor_confidence }),
            tutorial: (self.phase == Phase::Tutorial)
                .then(|| TutorialFeedback { truth: info.truth, symptoms: info.symptoms.clone() }),
            stakes_reminder: high,
            bonus_reminder: high,
            stakes_reminder_text: if high { texts.stakes_reminder.clone() } else { None },
            bonus_reminder_text: if high { texts.bonus_reminder.clone() } else { None },
        };
        let event = self.presented_at_ms.is_none().then(|| SessionEvent::Presented {
            phase: self.phase,
            index: self.cursor,
            sample_id: id.clone(),
            at_ms: now_ms,
        });
        Ok((view, event))
    }

    /// Trials completed so far and the total.
    pub fn progress(&self, plan: &StudyPlan) -> (usize, usize) {
        (self.records.len(), plan.total_trials())
    }

    /// Validates a decision. Resubmitting a recorded (sample, phase) pair is a
    /// no-op that returns the stored record. Without `phase`, a sample other
    /// than the pending one is matched against the most recent phase.
    #[allow(clippy::too_many_arguments)]
    pub fn decide(
        &self,
        plan: &StudyPlan,
        phase: Option<Phase>,
        sample_id: &str,
        label: DiagnosisLabel,
        client_elapsed_ms: Option<u64>,
        checklist: Option<serde_json::Value>,
        now_ms: u64,
    ) -> Result<Submission> {
        let current = self.current_id(plan);
        let pending = current.is_some_and(|c| c == sample_id) && self.presented_at_ms.is_some();
        let previous = match phase {
            Some(p) => self.records.iter().find(|r| r.phase == p && r.sample_id == sample_id),
            None if !pending => self.duplicate_of(sample_id),
            None => None,
        };
        if let Some(rec) = previous {
            return Ok(Submission::Duplicate { record: rec.clone() });
        }
        let current = current.ok_or(SessionError::Done)?;
        if current != sample_id || phase.is_some_and(|p| p != self.phase) {
            return Err(SessionError::OutOfOrder { expected: current.clone(), got: sample_id.into() }.into());
        }
        let presented = self.presented_at_ms.ok_or_else(|| SessionError::NotPresented(sample_id.into()))?;
        let event = SessionEvent::Decided {
            phase: self.phase,
            index: self.cursor,
            sample_id: sample_id.into(),
            label,
            decided_at_ms: now_ms.max(presented + 1),
            client_elapsed_ms,
            checklist,
        };
        let mut next = self.clone();
        next.apply(plan, &event)?;
        let record = next.records.pop().expect("decision appends a record");
        Ok(Submission::Accepted { event, record })
    }

    /// The most recent record for `sample_id`, if it belongs to the phase
    /// currently being answered or to the one just finished.
    fn duplicate_of(&self, sample_id: &str) -> Option<&TrialRecord> {
        let last = self.records.last()?;
        let phase = if self.cursor == 0 { last.phase } else { self.phase };
        self.records.iter().rev().take_while(|r| r.phase == phase).find(|r| r.sample_id == sample_id)
    }

    pub fn questionnaire(&self, name: String, payload: serde_json::Value) -> Result<SessionEvent> {
        if self.phase != Phase::Done {
            return Err(SessionError::QuestionnaireTooEarly.into());
        }
        Ok(SessionEvent::Questionnaire { name, payload })
    }

    pub fn decision_set(&self, phase: Phase) -> Option<DecisionSet> {
        let decisions: Vec<Decision> = self
            .records
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

    /// Metrics for each phase that has at least one decision.
    pub fn reports(&self) -> Result<Vec<MetricsReport>> {
        [Phase::Tutorial, Phase::Baseline, Phase::AiSupported]
            .into_iter()
            .filter_map(|p| self.decision_set(p))
            .map(|d| compute_metrics(&d))
            .collect()
    }

    /// Bonus on accuracy over both main rounds. `None` until a main decision exists.
    pub fn bonus(&self, plan: &StudyPlan) -> Option<f64> {
        let main: Vec<&TrialRecord> = self.records.iter().filter(|r| r.phase != Phase::Tutorial).collect();
        if main.is_empty() {
            return None;
        }
        let correct = main.iter().filter(|r| r.participant == r.truth).count();
        let acc = correct as f64 / main.len() as f64;
        Some(bonus_for_accuracy(acc, &plan.design.settings(self.condition).bonus))
    }

    /// Short code shown on completion.
    pub fn completion_code(&self) -> Option<String> {
        (self.phase == Phase::Done).then(|| {
            let h = crate::hash::sha256_hex(format!("{}:{}", self.session_id, self.plan_hash).as_bytes());
            h[..10].to_uppercase()
        })
    }
}
