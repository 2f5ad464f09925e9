use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schedule::{materialize_schedule, EventAction, EventId, EventStatus, LikeBinding, ScheduledEvent};
use super::treatment::{grant_likes_for_participant_post, GrantPattern, TreatmentLedger};
use super::OrchestratorError;
use crate::clock::Timestamp;
use crate::fixture::ValidatedFixture;
use crate::model::{AccountId, Experiment, ExperimentId, Post, PostId};

/// Where scheduled bot actions land. Implemented by the platform store.
pub trait ActionSink {
    fn create_bot_post(&mut self, bot: AccountId, body: &str, at: Timestamp) -> Result<PostId, String>;
    fn apply_like(&mut self, actor: AccountId, post: PostId, at: Timestamp) -> Result<(), String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionFailure {
    pub event_id: EventId,
    pub attempted_at: Timestamp,
    pub reason: String,
}

/// Per-experiment event queue and treatment state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scheduler {
    experiment_id: ExperimentId,
    events: Vec<ScheduledEvent>,
    bot_bodies: BTreeMap<String, String>,
    bot_posts: BTreeMap<String, PostId>,
    ledger: TreatmentLedger,
    pattern: GrantPattern,
    high_water: Option<Timestamp>,
    next_event_id: u64,
    failures: Vec<ExecutionFailure>,
}

impl Scheduler {
    pub fn new(
        experiment: &Experiment,
        fixture: &ValidatedFixture,
        pattern: GrantPattern,
    ) -> Result<Self, OrchestratorError> {
        let events = materialize_schedule(experiment, fixture)?;
        Ok(Self {
            experiment_id: experiment.experiment_id,
            next_event_id: events.len() as u64,
            events,
            bot_bodies: fixture
                .bundle()
                .planned_posts
                .iter()
                .map(|p| (p.plan_id.clone(), p.body.clone()))
                .collect(),
            bot_posts: BTreeMap::new(),
            ledger: TreatmentLedger::new(experiment.experiment_id),
            pattern,
            high_water: None,
            failures: Vec::new(),
        })
    }

    pub fn experiment_id(&self) -> ExperimentId {
        self.experiment_id
    }

    pub fn events(&self) -> &[ScheduledEvent] {
        &self.events
    }

    pub fn ledger(&self) -> &TreatmentLedger {
        &self.ledger
    }

    pub fn failures(&self) -> &[ExecutionFailure] {
        &self.failures
    }

    /// Post created for a bot's planned post, once its event has run.
    pub fn bot_post(&self, plan_id: &str) -> Option<PostId> {
        self.bot_posts.get(plan_id).copied()
    }

    pub fn pending(&self) -> impl Iterator<Item = &ScheduledEvent> {
        self.events.iter().filter(|e| e.is_pending())
    }

    /// Earliest due time among pending events.
    pub fn next_due(&self) -> Option<Timestamp> {
        self.pending().filter_map(|e| e.due_at).min()
    }

    /// Grants likes for a fresh participant post and queues them.
    pub fn on_participant_post(
        &mut self,
        experiment: &Experiment,
        post: &Post,
    ) -> Result<Vec<ScheduledEvent>, OrchestratorError> {
        let day = self.ledger.posts_seen() + 1;
        let (deferred, rest): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.events).into_iter().partition(|e| {
                e.is_pending()
                    && matches!(&e.action, EventAction::ApplyBotLike {
                        target: LikeBinding::ParticipantDay { day: d }, ..
                    } if *d == day)
            });
        self.events = rest;
        let mut next = self.next_event_id;
        match grant_likes_for_participant_post(
            experiment,
            post,
            &mut self.ledger,
            &self.pattern,
            deferred.clone(),
            &mut next,
        ) {
            Ok(outcome) => {
                self.next_event_id = next;
                let granted = outcome.granted.clone();
                self.events.extend(outcome.granted);
                self.events.extend(outcome.skipped);
                self.events.sort_by_key(|e| e.event_id);
                Ok(granted)
            }
            Err(e) => {
                self.events.extend(deferred);
                self.events.sort_by_key(|e| e.event_id);
                Err(e)
            }
        }
    }

    /// Runs every pending event due at or before `now`, in due order.
    ///
    /// Created entities carry the event's due time, not `now`. Calls with a
    /// `now` earlier than one already seen do nothing. Failed events stay
    /// pending and are retried on the next tick.
    pub fn tick(
        &mut self,
        now: Timestamp,
        experiment: &Experiment,
        sink: &mut dyn ActionSink,
    ) -> Vec<ScheduledEvent> {
        if self.high_water.is_some_and(|hw| now < hw) {
            return Vec::new();
        }
        self.high_water = Some(now);
        let mut due: Vec<usize> = self
            .events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_pending() && e.due_at.is_some_and(|d| d <= now))
            .map(|(i, _)| i)
            .collect();
        due.sort_by_key(|&i| (self.events[i].due_at, self.events[i].event_id));

        let mut executed = Vec::new();
        for i in due {
            let event = self.events[i].clone();
            let at = event.due_at.expect("filtered on due_at");
            match self.execute(&event.action, at, experiment, sink) {
                Ok(()) => {
                    self.events[i].status = EventStatus::Done;
                    executed.push(self.events[i].clone());
                }
                Err(reason) => {
                    tracing::warn!(event = %event.event_id, %reason, "scheduled action failed");
                    self.failures.push(ExecutionFailure {
                        event_id: event.event_id,
                        attempted_at: now,
                        reason,
                    });
                }
            }
        }
        executed
    }

    fn execute(
        &mut self,
        action: &EventAction,
        at: Timestamp,
        experiment: &Experiment,
        sink: &mut dyn ActionSink,
    ) -> Result<(), String> {
        let bot = |index: u8| {
            experiment
                .bot(index)
                .ok_or_else(|| format!("no bot at roster index {index}"))
        };
        match action {
            EventAction::CreateBotPost { plan_id, bot_index } => {
                let body = self
                    .bot_bodies
                    .get(plan_id)
                    .ok_or_else(|| format!("no body for planned post {plan_id}"))?;
                let post = sink.create_bot_post(bot(*bot_index)?, body, at)?;
                self.bot_posts.insert(plan_id.clone(), post);
                Ok(())
            }
            EventAction::ApplyBotLike {
                actor_bot_index,
                target,
                ..
            } => {
                let post = match target {
                    LikeBinding::Post { post_id } => *post_id,
                    LikeBinding::BotPlan { plan_id } => self
                        .bot_post(plan_id)
                        .ok_or_else(|| format!("planned post {plan_id} has not been created"))?,
                    LikeBinding::ParticipantDay { day } => {
                        return Err(format!("participant day-{day} post is not bound yet"))
                    }
                };
                sink.apply_like(bot(*actor_bot_index)?, post, at)
            }
        }
    }
}
