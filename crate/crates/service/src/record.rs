//! Session records and the events that build them.
//!
//! Every state change is captured as an [`Event`] carrying its results (the
//! generated turn and its report), so applying the stored events in order
//! rebuilds the record without calling the backend again.

use callsim::corpus::Turn;
use callsim::validation::{FeedbackRecord, SessionState, SessionStatus, SupersededTurn, ValidationReport};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: SessionState,
    pub created_ms: u64,
    pub updated_ms: u64,
    /// Time spent while the session was active.
    pub active_ms: u64,
}

impl SessionRecord {
    pub fn active_seconds(&self) -> f64 {
        self.active_ms as f64 / 1000.0
    }

    /// Rebuilds a record from its event log.
    pub fn replay(events: &[Event]) -> Result<Self, ReplayError> {
        let mut it = events.iter();
        let mut record = match it.next() {
            Some(Event::Created { session, at_ms }) => {
                SessionRecord { session: (**session).clone(), created_ms: *at_ms, updated_ms: *at_ms, active_ms: 0 }
            }
            Some(_) => return Err(ReplayError::NotCreatedFirst),
            None => return Err(ReplayError::Empty),
        };
        for (i, e) in it.enumerate() {
            record.apply(e).map_err(|message| ReplayError::Inconsistent { event: i + 1, message })?;
        }
        Ok(record)
    }

    fn tick(&mut self, at_ms: u64) {
        if self.session.status == SessionStatus::Active {
            self.active_ms += at_ms.saturating_sub(self.updated_ms);
        }
        self.updated_ms = self.updated_ms.max(at_ms);
    }

    /// Applies one event. Events are produced by the service after the
    /// corresponding core operation succeeded, so a failure here means the
    /// log was edited or truncated mid-line.
    pub fn apply(&mut self, event: &Event) -> Result<(), String> {
        let s = &mut self.session;
        match event {
            Event::Created { .. } => return Err("duplicate creation event".into()),
            Event::CallerTurn { turn, report, at_ms } => {
                if turn.index != s.history.len() {
                    return Err(format!("caller turn {} out of sequence", turn.index));
                }
                s.history.push(turn.clone());
                s.reports.push(report.clone());
                self.tick(*at_ms);
            }
            Event::Exchange { trainee, caller, report, at_ms } => {
                if trainee.index != s.history.len() || caller.index != trainee.index + 1 {
                    return Err(format!("exchange at turn {} out of sequence", trainee.index));
                }
                s.history.push(trainee.clone());
                s.history.push(caller.clone());
                s.reports.push(report.clone());
                self.tick(*at_ms);
            }
            Event::Feedback { record } => {
                if record.turn_index >= s.history.len() {
                    return Err(format!("feedback on missing turn {}", record.turn_index));
                }
                if record.rejected {
                    s.rejected.insert(record.turn_index);
                }
                s.feedback.push(record.clone());
                self.tick(record.timestamp_ms);
            }
            Event::Regenerated { turn, report, at_ms } => {
                let i = turn.index;
                if i + 1 != s.history.len() {
                    return Err(format!("regenerated turn {i} is not the latest"));
                }
                let old_turn = s.history.pop().expect("checked above");
                let pos = s
                    .reports
                    .iter()
                    .position(|r| r.turn_index == i)
                    .ok_or_else(|| format!("no report for turn {i}"))?;
                let old_report = s.reports.remove(pos);
                s.superseded.push(SupersededTurn { turn: old_turn, report: old_report });
                s.rejected.remove(&i);
                s.regenerations += 1;
                s.history.push(turn.clone());
                s.reports.push(report.clone());
                self.tick(*at_ms);
            }
            Event::Ended { at_ms } => {
                self.tick(*at_ms);
                self.session.status = SessionStatus::Completed;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session: Box<SessionState>,
        at_ms: u64,
    },
    /// The caller's opening line.
    CallerTurn {
        turn: Turn,
        report: ValidationReport,
        at_ms: u64,
    },
    Exchange {
        trainee: Turn,
        caller: Turn,
        report: ValidationReport,
        at_ms: u64,
    },
    Feedback {
        record: FeedbackRecord,
    },
    Regenerated {
        turn: Turn,
        report: ValidationReport,
        at_ms: u64,
    },
    Ended {
        at_ms: u64,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("event log does not start with a creation event")]
    NotCreatedFirst,
    #[error("event {event}: {message}")]
    Inconsistent { event: usize, message: String },
}
