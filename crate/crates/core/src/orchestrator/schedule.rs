use std::collections::HashMap;
use std::fmt;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::OrchestratorError;
use crate::clock::Timestamp;
use crate::fixture::{LikeTarget, ValidatedFixture};
use crate::model::{Experiment, ExperimentId, ExperimentState, PostId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "evt-{}", self.0)
    }
}

/// What a bot like points at, from fixture reference to concrete post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LikeBinding {
    /// A bot's planned post, resolved once its creation event has run.
    BotPlan {
        plan_id: String,
    },
    /// The participant's post on a study day; not yet posted.
    ParticipantDay {
        day: u32,
    },
    Post {
        post_id: PostId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventAction {
    CreateBotPost {
        plan_id: String,
        bot_index: u8,
    },
    ApplyBotLike {
        /// Fixture plan this like came from; `None` for protocol grants.
        plan_id: Option<String>,
        actor_bot_index: u8,
        target: LikeBinding,
        delay_seconds: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventStatus {
    Pending,
    Done,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub event_id: EventId,
    pub experiment_id: ExperimentId,
    /// `None` while the event waits for its participant target to exist.
    pub due_at: Option<Timestamp>,
    pub action: EventAction,
    pub status: EventStatus,
}

impl ScheduledEvent {
    pub fn is_pending(&self) -> bool {
        self.status == EventStatus::Pending
    }

    pub fn is_like(&self) -> bool {
        matches!(self.action, EventAction::ApplyBotLike { .. })
    }
}

/// Expands a validated fixture into absolute events for one experiment.
///
/// Bot posts land at `start + day_offset days + time_offset`; bot-to-bot
/// likes at their target's time plus the like delay. Likes on participant
/// posts are emitted without a due time and bound when that post appears.
/// The result depends only on the inputs; event ids are assigned in fixture
/// order, posts first.
pub fn materialize_schedule(
    experiment: &Experiment,
    fixture: &ValidatedFixture,
) -> Result<Vec<ScheduledEvent>, OrchestratorError> {
    if experiment.state() != ExperimentState::Created {
        return Err(OrchestratorError::NotCreated(experiment.state()));
    }
    if fixture.day_count() != experiment.day_count {
        return Err(OrchestratorError::DayCountMismatch {
            fixture: fixture.day_count(),
            experiment: experiment.day_count,
        });
    }
    let bundle = fixture.bundle();
    let start = experiment.start_instant;
    let mut events = Vec::with_capacity(bundle.planned_posts.len() + bundle.planned_likes.len());
    let mut post_due: HashMap<&str, Timestamp> = HashMap::new();
    let mut next_id = 0u64;
    let mut push = |due_at, action| {
        events.push(ScheduledEvent {
            event_id: EventId(next_id),
            experiment_id: experiment.experiment_id,
            due_at,
            action,
            status: EventStatus::Pending,
        });
        next_id += 1;
    };

    for post in &bundle.planned_posts {
        let due = start + Duration::seconds(post.offset_seconds());
        post_due.insert(post.plan_id.as_str(), due);
        push(
            Some(due),
            EventAction::CreateBotPost {
                plan_id: post.plan_id.clone(),
                bot_index: post.bot_index,
            },
        );
    }
    for like in &bundle.planned_likes {
        let (due, target) = match &like.target {
            LikeTarget::BotPost { plan_id } => (
                post_due
                    .get(plan_id.as_str())
                    .map(|t| *t + Duration::seconds(like.delay_seconds as i64)),
                LikeBinding::BotPlan {
                    plan_id: plan_id.clone(),
                },
            ),
            LikeTarget::ParticipantPost { day } => (None, LikeBinding::ParticipantDay { day: *day }),
        };
        push(
            due,
            EventAction::ApplyBotLike {
                plan_id: Some(like.plan_id.clone()),
                actor_bot_index: like.actor_bot_index,
                target,
                delay_seconds: like.delay_seconds,
            },
        );
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{FixtureBundle, PlannedLike, ValidationOptions};
    use crate::model::{AccountId, Condition};
    use chrono::{Datelike, TimeZone, Utc, Weekday};

    fn monday() -> Timestamp {
        let t = Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap();
        assert_eq!(t.weekday(), Weekday::Mon);
        t
    }

    fn experiment() -> Experiment {
        Experiment::new(
            ExperimentId(7),
            AccountId(1),
            (2..8).map(AccountId).collect(),
            Condition::ManyLikes,
            monday(),
        )
        .unwrap()
    }

    fn validated(bundle: FixtureBundle) -> ValidatedFixture {
        ValidatedFixture::new(bundle, &ValidationOptions::new(Condition::ManyLikes, 5)).unwrap()
    }

    #[test]
    fn event_count_is_posts_plus_likes() {
        let mut bundle = FixtureBundle::study_default();
        bundle.planned_likes.truncate(75);
        let events = materialize_schedule(&experiment(), &validated(bundle)).unwrap();
        assert_eq!(events.len(), 30 + 75);
        let full = materialize_schedule(&experiment(), &validated(FixtureBundle::study_default())).unwrap();
        assert_eq!(full.len(), 30 + 77);
    }

    #[test]
    fn offsets_are_added_to_start() {
        let mut bundle = FixtureBundle::study_default();
        let first = &mut bundle.planned_posts[0];
        first.day_offset = 0;
        first.time_offset = 9 * 3600;
        let plan = first.plan_id.clone();
        let events = materialize_schedule(&experiment(), &validated(bundle)).unwrap();
        let ev = events
            .iter()
            .find(|e| matches!(&e.action, EventAction::CreateBotPost { plan_id, .. } if *plan_id == plan))
            .unwrap();
        assert_eq!(
            ev.due_at,
            Some(Utc.with_ymd_and_hms(2023, 1, 2, 9, 0, 0).unwrap())
        );
        // likes on that post follow it by their delay
        for e in &events {
            if let EventAction::ApplyBotLike {
                target: LikeBinding::BotPlan { plan_id },
                delay_seconds,
                ..
            } = &e.action
            {
                if *plan_id == plan {
                    assert_eq!(
                        e.due_at,
                        Some(ev.due_at.unwrap() + Duration::seconds(*delay_seconds as i64))
                    );
                }
            }
        }
    }

    #[test]
    fn participant_likes_are_deferred() {
        let mut bundle = FixtureBundle::study_default();
        bundle.planned_likes.push(PlannedLike {
            plan_id: "pp1".into(),
            actor_bot_index: 2,
            target: LikeTarget::ParticipantPost { day: 1 },
            delay_seconds: 600,
        });
        let events = materialize_schedule(&experiment(), &validated(bundle)).unwrap();
        let last = events.last().unwrap();
        assert_eq!(last.due_at, None);
        assert!(matches!(
            last.action,
            EventAction::ApplyBotLike {
                target: LikeBinding::ParticipantDay { day: 1 },
                ..
            }
        ));
    }

    #[test]
    fn deterministic() {
        let fixture = validated(FixtureBundle::study_default());
        assert_eq!(
            materialize_schedule(&experiment(), &fixture).unwrap(),
            materialize_schedule(&experiment(), &fixture).unwrap()
        );
    }

    #[test]
    fn running_experiment_rejected() {
        let mut exp = experiment();
        exp.start(monday()).unwrap();
        assert!(matches!(
            materialize_schedule(&exp, &validated(FixtureBundle::study_default())),
            Err(OrchestratorError::NotCreated(ExperimentState::Running))
        ));
    }

    #[test]
    fn day_count_must_match() {
        let mut exp = experiment();
        exp.day_count = 4;
        assert!(matches!(
            materialize_schedule(&exp, &validated(FixtureBundle::study_default())),
            Err(OrchestratorError::DayCountMismatch { .. })
        ));
    }
}
