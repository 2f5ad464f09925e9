//! Turns relative fixture plans into absolute events, runs them against the
//! platform, applies the treatment's like-distribution protocol to
//! participant posts and checks daily task compliance.

mod compliance;
mod schedule;
mod scheduler;
mod treatment;

use thiserror::Error;

use crate::model::{ExperimentState, PostId};

pub use compliance::{
    compliance_report, ComplianceReport, ComplianceRules, DayCompliance, ParticipantActivity,
};
pub use schedule::{materialize_schedule, EventAction, EventId, EventStatus, LikeBinding, ScheduledEvent};
pub use scheduler::{ActionSink, ExecutionFailure, Scheduler};
pub use treatment::{
    grant_likes_for_participant_post, GrantOutcome, GrantPattern, TreatmentLedger, FEW_LIKES_TOTAL,
    MANY_LIKES_TOTAL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error("schedule can only be materialized for a CREATED experiment, not {0:?}")]
    NotCreated(ExperimentState),
    #[error("fixture was validated for {fixture} days but the experiment runs {experiment}")]
    DayCountMismatch { fixture: u32, experiment: u32 },
    #[error("post {0} is not authored by the experiment's participant")]
    NotParticipantPost(PostId),
    #[error("grant rejected: {0}")]
    GrantRejected(String),
    #[error("invalid grant pattern: {0}")]
    InvalidPattern(String),
}
