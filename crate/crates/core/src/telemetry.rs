//! Append-only behavioural telemetry: sessions, post view durations and ad clicks.
//!
//! Closed sessions and recorded events are never mutated or removed; the only
//! in-place change is closing the single open session an account may hold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;
use crate::model::{AccountId, AdId, PostId, SessionId};

/// Client-reported view durations are clamped to this bound.
pub const MAX_VIEW_MS: u64 = 6 * 60 * 60 * 1000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub account_id: AccountId,
    pub started_at: Timestamp,
    pub ended_at: Option<Timestamp>,
}

impl Session {
    pub fn is_open(&self) -> bool {
        self.ended_at.is_none()
    }

    /// Seconds of overlap with `[from, to)`, treating an open session as running until `as_of`.
    pub fn overlap_seconds(&self, from: Timestamp, to: Timestamp, as_of: Timestamp) -> i64 {
        let end = self.ended_at.unwrap_or(as_of);
        let lo = self.started_at.max(from);
        let hi = end.min(to);
        (hi - lo).num_seconds().max(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEvent {
    pub session_id: SessionId,
    pub post_id: PostId,
    pub duration_ms: u64,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdClickEvent {
    pub session_id: SessionId,
    pub ad_id: AdId,
    pub clicked_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TelemetryError {
    #[error("view duration must be non-negative, got {0} ms")]
    NegativeDuration(i64),
    #[error("session {0} is not open")]
    SessionNotOpen(SessionId),
    #[error("session cannot end before it started")]
    EndBeforeStart,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TelemetryLog {
    sessions: Vec<Session>,
    views: Vec<ViewEvent>,
    ad_clicks: Vec<AdClickEvent>,
    next_session: u64,
}

impl TelemetryLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a session for `account`, closing any session it still holds at `at`.
    pub fn open_session(&mut self, account: AccountId, at: Timestamp) -> SessionId {
        if let Some(open) = self.open_session_of(account) {
            let _ = self.close_session(open, at);
        }
        self.next_session += 1;
        let session_id = SessionId(self.next_session);
        self.sessions.push(Session {
            session_id,
            account_id: account,
            started_at: at,
            ended_at: None,
        });
        session_id
    }

    pub fn open_session_of(&self, account: AccountId) -> Option<SessionId> {
        self.sessions
            .iter()
            .rev()
            .find(|s| s.account_id == account && s.is_open())
            .map(|s| s.session_id)
    }

    pub fn close_session(&mut self, id: SessionId, at: Timestamp) -> Result<(), TelemetryError> {
        let session = self
            .sessions
            .iter_mut()
            .find(|s| s.session_id == id && s.is_open())
            .ok_or(TelemetryError::SessionNotOpen(id))?;
        if at < session.started_at {
            return Err(TelemetryError::EndBeforeStart);
        }
        session.ended_at = Some(at);
        Ok(())
    }

    pub fn session(&self, id: SessionId) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    /// Appends a view; negative durations are rejected and long ones clamped.
    pub fn record_view(
        &mut self,
        session_id: SessionId,
        post_id: PostId,
        duration_ms: i64,
        at: Timestamp,
    ) -> Result<&ViewEvent, TelemetryError> {
        if duration_ms < 0 {
            return Err(TelemetryError::NegativeDuration(duration_ms));
        }
        self.require_open(session_id)?;
        self.views.push(ViewEvent {
            session_id,
            post_id,
            duration_ms: (duration_ms as u64).min(MAX_VIEW_MS),
            recorded_at: at,
        });
        Ok(self.views.last().expect("just pushed"))
    }

    pub fn record_ad_click(
        &mut self,
        session_id: SessionId,
        ad_id: AdId,
        at: Timestamp,
    ) -> Result<&AdClickEvent, TelemetryError> {
        self.require_open(session_id)?;
        self.ad_clicks.push(AdClickEvent {
            session_id,
            ad_id,
            clicked_at: at,
        });
        Ok(self.ad_clicks.last().expect("just pushed"))
    }

    fn require_open(&self, id: SessionId) -> Result<(), TelemetryError> {
        match self.session(id) {
            Some(s) if s.is_open() => Ok(()),
            _ => Err(TelemetryError::SessionNotOpen(id)),
        }
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn views(&self) -> &[ViewEvent] {
        &self.views
    }

    pub fn ad_clicks(&self) -> &[AdClickEvent] {
        &self.ad_clicks
    }

    pub fn sessions_of(&self, account: AccountId) -> impl Iterator<Item = &Session> {
        self.sessions.iter().filter(move |s| s.account_id == account)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2023, 5, 1, 8, 0, 0).unwrap()
    }

    #[test]
    fn second_open_closes_first() {
        let mut log = TelemetryLog::new();
        let first = log.open_session(AccountId(1), t0());
        let second = log.open_session(AccountId(1), t0() + Duration::minutes(5));
        assert_ne!(first, second);
        assert_eq!(
            log.session(first).unwrap().ended_at,
            Some(t0() + Duration::minutes(5))
        );
        assert_eq!(log.open_session_of(AccountId(1)), Some(second));
        assert_eq!(log.sessions().iter().filter(|s| s.is_open()).count(), 1);
    }

    #[test]
    fn views_are_validated_and_clamped() {
        let mut log = TelemetryLog::new();
        let s = log.open_session(AccountId(1), t0());
        assert_eq!(
            log.record_view(s, PostId(1), -1, t0()).unwrap_err(),
            TelemetryError::NegativeDuration(-1)
        );
        assert_eq!(
            log.record_view(s, PostId(1), 4500, t0()).unwrap().duration_ms,
            4500
        );
        assert_eq!(
            log.record_view(s, PostId(1), i64::MAX, t0()).unwrap().duration_ms,
            MAX_VIEW_MS
        );
        assert_eq!(log.views().len(), 2);
    }

    #[test]
    fn closed_sessions_reject_events() {
        let mut log = TelemetryLog::new();
        let s = log.open_session(AccountId(1), t0());
        log.close_session(s, t0() + Duration::minutes(1)).unwrap();
        assert!(log.record_ad_click(s, AdId(1), t0()).is_err());
        assert!(log.close_session(s, t0() + Duration::minutes(2)).is_err());
    }

    #[test]
    fn overlap_is_clipped_to_window() {
        let session = Session {
            session_id: SessionId(1),
            account_id: AccountId(1),
            started_at: t0(),
            ended_at: Some(t0() + Duration::minutes(30)),
        };
        let from = t0() + Duration::minutes(10);
        assert_eq!(
            session.overlap_seconds(from, from + Duration::hours(1), from),
            20 * 60
        );
        assert_eq!(
            session.overlap_seconds(t0() + Duration::hours(2), t0() + Duration::hours(3), t0()),
            0
        );
    }
}
