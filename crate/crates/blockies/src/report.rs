//! Per-session exports: the admin results payload and self-contained
//! trial-log files.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blockies_core::metrics::{MetricsReport, Phase};
use blockies_core::study::{Condition, QuestionnaireEntry, SessionState, StudyPlan, TrialRecord};
use serde::{Deserialize, Serialize};

use crate::fsutil::atomic_write;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    #[serde(rename = "participant_id")]
    pub participant: String,
    pub stratum: String,
    pub condition: Condition,
    pub plan_hash: String,
}

impl SessionMeta {
    pub fn of(s: &SessionState) -> Self {
        Self {
            session_id: s.session_id.clone(),
            participant: s.participant.clone(),
            stratum: s.stratum.clone(),
            condition: s.condition,
            plan_hash: s.plan_hash.clone(),
        }
    }
}

/// Everything the results endpoint reports for one session.
#[derive(Debug, Clone, Serialize)]
pub struct SessionExport {
    #[serde(flatten)]
    pub meta: SessionMeta,
    pub demographics: serde_json::Value,
    pub phase: Phase,
    pub completed: bool,
    pub completion_code: Option<String>,
    pub bonus: Option<f64>,
    pub reports: Vec<MetricsReport>,
    pub trials: Vec<TrialRecord>,
    pub questionnaires: Vec<QuestionnaireEntry>,
}

pub fn session_export(s: &SessionState, plan: &StudyPlan) -> Result<SessionExport> {
    Ok(SessionExport {
        meta: SessionMeta::of(s),
        demographics: s.demographics.clone(),
        phase: s.phase,
        completed: s.phase == Phase::Done,
        completion_code: s.completion_code(),
        bonus: s.bonus(plan),
        reports: s.reports()?,
        trials: s.records.clone(),
        questionnaires: s.questionnaires.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogBody {
    Trial(TrialRecord),
    Questionnaire(QuestionnaireEntry),
}

/// One line of an exported trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    #[serde(flatten)]
    pub meta: SessionMeta,
    #[serde(flatten)]
    pub body: LogBody,
}

pub fn trial_log_lines(s: &SessionState) -> Vec<LogLine> {
    let meta = SessionMeta::of(s);
    s.records
        .iter()
        .map(|r| LogBody::Trial(r.clone()))
        .chain(s.questionnaires.iter().map(|q| LogBody::Questionnaire(q.clone())))
        .map(|body| LogLine { meta: meta.clone(), body })
        .collect()
}

/// Writes `<out>/<session_id>.jsonl` for every session; returns the paths.
pub fn export_trial_logs(sessions: &[SessionState], out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut paths = Vec::with_capacity(sessions.len());
    for s in sessions {
        let mut buf = Vec::new();
        for line in trial_log_lines(s) {
            serde_json::to_writer(&mut buf, &line)?;
            buf.write_all(b"\n")?;
        }
        let path = out.join(format!("{}.jsonl", s.session_id));
        atomic_write(&path, &buf)?;
        paths.push(path);
    }
    Ok(paths)
}

/// A session reassembled from trial-log lines.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedSession {
    pub meta: SessionMeta,
    pub trials: Vec<TrialRecord>,
    pub questionnaires: Vec<QuestionnaireEntry>,
}

/// Reads trial logs from files or directories of `*.jsonl` files and groups
/// them by session, ordered by session id.
pub fn read_trial_logs(inputs: &[PathBuf]) -> Result<Vec<LoggedSession>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    let mut sessions: BTreeMap<String, LoggedSession> = BTreeMap::new();
    for file in &files {
        let f = std::fs::File::open(file).with_context(|| format!("opening {}", file.display()))?;
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: not a trial-log record", file.display(), i + 1))?;
            let entry = sessions.entry(parsed.meta.session_id.clone()).or_insert_with(|| LoggedSession {
                meta: parsed.meta.clone(),
                trials: Vec::new(),
                questionnaires: Vec::new(),
            });
            if entry.meta != parsed.meta {
                bail!("{}:{}: session {} has inconsistent metadata", file.display(), i + 1, parsed.meta.session_id);
            }
            match parsed.body {
                LogBody::Trial(t) => entry.trials.push(t),
                LogBody::Questionnaire(q) => entry.questionnaires.push(q),
            }
        }
    }
    Ok(sessions.into_values().collect())
}
