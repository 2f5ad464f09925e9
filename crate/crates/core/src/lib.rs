//! Core of a self-hostable social-media experiment platform.
//!
//! A participant is placed in a closed network with six scripted bot
//! accounts. Bots post and like on a schedule expressed relative to the
//! participant's start, the treatment condition decides how many likes the
//! participant's own posts receive, and every interaction is logged so the
//! study can be exported and analysed with the bundled nonparametric
//! statistics.
//!
//! Module map:
//!
//! - [`model`]: accounts, posts, reactions, friend graph and feed visibility
//! - [`fixture`]: CSV ingestion and validation of bot rosters and plans
//! - [`orchestrator`]: relative schedules, like-distribution protocol, compliance
//! - [`platform`]: the stateful service behind the HTTP API, plus export
//! - [`measures`]: survey instruments and scale scoring
//! - [`stats`]: Mann-Whitney U, Wilcoxon signed-rank, effect sizes, reports

pub mod clock;
pub mod fixture;
pub mod measures;
pub mod model;
pub mod orchestrator;
pub mod platform;
pub mod stats;
pub mod telemetry;

pub use clock::{Clock, SystemClock, Timestamp, VirtualClock};
pub use model::{AccountId, AdId, Condition, ExperimentId, FeatureFlags, PostId, ReactionKind, Role};
