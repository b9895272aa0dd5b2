//! Applied-trust metrics over one phase of decisions.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::blocky::DiagnosisLabel;
use crate::{Error, Result};

/// Study phase a decision belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Tutorial,
    Baseline,
    AiSupported,
    Done,
}

impl Phase {
    pub const fn as_str(self) -> &'static str {
        match self {
            Phase::Tutorial => "tutorial",
            Phase::Baseline => "baseline",
            Phase::AiSupported => "ai_supported",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub sample_id: String,
    pub truth: DiagnosisLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advisor: Option<DiagnosisLabel>,
    pub participant: DiagnosisLabel,
    /// Seconds.
    pub decision_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSet {
    pub phase: Phase,
    pub decisions: Vec<Decision>,
}

impl DecisionSet {
    pub fn new(phase: Phase, decisions: Vec<Decision>) -> Result<Self> {
        let set = DecisionSet { phase, decisions };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.decisions.is_empty() {
            return Err(Error::Stats("empty decision set".into()));
        }
        let mut seen = BTreeSet::new();
        for d in &self.decisions {
            if !seen.insert(d.sample_id.as_str()) {
                return Err(Error::Stats(format!("duplicate sample {} in phase {}", d.sample_id, self.phase.as_str())));
            }
            if !d.decision_time.is_finite() || d.decision_time <= 0.0 {
                return Err(Error::Stats(format!("non-positive decision time for sample {}", d.sample_id)));
            }
        }
        Ok(())
    }
}

/// Exact count ratio. Compare proportions by cross-multiplication, not by `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct Proportion {
    pub num: u64,
    pub den: u64,
}

impl Proportion {
    /// `None` for an empty denominator.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0 && num <= den).then_some(Proportion { num, den })
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True when `self == p / q`.
    pub fn equals_ratio(self, p: u64, q: u64) -> bool {
        self.num as u128 * q as u128 == p as u128 * self.den as u128
    }
}

impl Serialize for Proportion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Proportion", 3)?;
        st.serialize_field("num", &self.num)?;
        st.serialize_field("den", &self.den)?;
        st.serialize_field("value", &self.value())?;
        st.end()
    }
}

/// Undefined metrics serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub phase: Phase,
    pub accuracy: Option<Proportion>,
    pub agreement: Option<Proportion>,
    pub healthy_trust: Option<Proportion>,
    pub healthy_distrust: Option<Proportion>,
    pub mean_decision_time: f64,
    pub n: u64,
    pub n_mc: u64,
    pub n_mi: u64,
}

pub fn compute_metrics(set: &DecisionSet) -> Result<MetricsReport> {
    set.validate()?;
    let (mut correct, mut with_advisor, mut agree) = (0u64, 0u64, 0u64);
    let (mut n_mc, mut n_mi, mut trusted, mut distrusted) = (0u64, 0u64, 0u64, 0u64);
    let mut time = 0.0;
    for d in &set.decisions {
        time += d.decision_time;
        correct += (d.participant == d.truth) as u64;
        if let Some(m) = d.advisor {
            with_advisor += 1;
            agree += (d.participant == m) as u64;
            if m == d.truth {
                n_mc += 1;
                trusted += (d.participant == m) as u64;
            } else {
                n_mi += 1;
                distrusted += (d.participant == d.truth) as u64;
            }
        }
    }
    let n = set.decisions.len() as u64;
    Ok(MetricsReport {
        phase: set.phase,
        accuracy: Proportion::new(correct, n),
        agreement: Proportion::new(agree, with_advisor),
        healthy_trust: Proportion::new(trusted, n_mc),
        healthy_distrust: Proportion::new(distrusted, n_mi),
        mean_decision_time: time / n as f64,
        n,
        n_mc,
        n_mi,
    })
}

/// Checks both binary-task identities in exact integer arithmetic.
/// Returns `None` when a term is undefined.
pub fn identities_hold(r: &MetricsReport) -> Option<bool> {
    let (acc, agr, ht, hd) = (r.accuracy?, r.agreement?, r.healthy_trust?, r.healthy_distrust?);
    if r.n != r.n_mc + r.n_mi {
        return Some(false);
    }
    // Denominators are n, n, n_mc, n_mi, so every term is a plain count.
    let first = acc.num == ht.num + hd.num;
    let second = agr.num == ht.num + (hd.den - hd.num);
    Some(first && second && acc.den == r.n && ht.den == r.n_mc && hd.den == r.n_mi)
}
