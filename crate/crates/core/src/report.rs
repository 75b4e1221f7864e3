//! Structured pass/fail records shared by every verifier.

use serde::{Deserialize, Serialize};

use crate::numeric::ext_real;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    /// Conjunction: any failure dominates, then any inconclusive result.
    pub fn and(self, other: Status) -> Status {
        self.max(other)
    }

    pub fn all<I: IntoIterator<Item = Status>>(it: I) -> Status {
        it.into_iter().fold(Status::Pass, Status::and)
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Inconclusive => 2,
        }
    }
}

/// One checked inequality instance: `slack = lhs - rhs`, where the inequality
/// being verified is `lhs >= rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlackRecord {
    pub label: String,
    #[serde(with = "ext_real")]
    pub lhs: f64,
    #[serde(with = "ext_real")]
    pub rhs: f64,
    #[serde(with = "ext_real")]
    pub slack: f64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub id: String,
    pub events: usize,
    #[serde(with = "ext_real")]
    pub worst_slack: f64,
    pub tolerance: f64,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<SlackRecord>,
}

impl VerificationReport {
    pub fn new(id: impl Into<String>, tolerance: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            events: 0,
            worst_slack: f64::INFINITY,
            tolerance,
            status: Status::Pass,
            notes: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Records `lhs >= rhs` within `tolerance`. NaN slack (e.g. `inf - inf`)
    /// is treated as inconclusive.
    pub fn check(&mut self, label: impl Into<String>, lhs: f64, rhs: f64) -> Status {
        let slack = slack_of(lhs, rhs);
        let status = if slack.is_nan() {
            Status::Inconclusive
        } else if slack >= -self.tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        self.push(label, lhs, rhs, slack, status);
        status
    }

    pub fn push(&mut self, label: impl Into<String>, lhs: f64, rhs: f64, slack: f64, status: Status) {
        self.events += 1;
        if !slack.is_nan() && slack < self.worst_slack {
            self.worst_slack = slack;
        }
        self.status = self.status.and(status);
        self.records.push(SlackRecord { label: label.into(), lhs, rhs, slack, status });
    }

    /// Folds a status in without a slack record (e.g. a precondition).
    pub fn mark(&mut self, status: Status, note: impl Into<String>) {
        self.status = self.status.and(status);
        self.notes.push(note.into());
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Appends the records, notes and status of `other`, labels prefixed by its id.
    pub fn absorb(&mut self, other: VerificationReport) {
        let record_status = Status::all(other.records.iter().map(|r| r.status));
        for r in other.records {
            self.push(format!("{}: {}", other.id, r.label), r.lhs, r.rhs, r.slack, r.status);
        }
        self.notes.extend(other.notes.into_iter().map(|n| format!("{}: {n}", other.id)));
        if other.status != record_status {
            self.status = self.status.and(other.status);
        }
    }

    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status == Status::Fail).count()
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// `lhs - rhs` on the extended reals, with `-inf >= -inf` read as satisfied.
pub fn slack_of(lhs: f64, rhs: f64) -> f64 {
    if lhs == rhs && lhs.is_infinite() {
        0.0
    } else {
        lhs - rhs
    }
}
