use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::schedule::{EventAction, EventId, EventStatus, LikeBinding, ScheduledEvent};
use super::OrchestratorError;
use crate::clock::Timestamp;
use crate::model::{Condition, Experiment, ExperimentId, Post, PostId, BOTS_PER_EXPERIMENT};

/// Likes a many-likes participant receives over the study.
pub const MANY_LIKES_TOTAL: u32 = 24;
/// Likes a few-likes participant receives, all on the first post.
pub const FEW_LIKES_TOTAL: u32 = 1;

const MIN_GRANT_DELAY_SECS: i64 = 3600;
const MAX_GRANT_DELAY_SECS: i64 = 10 * 3600;

/// Per-post like grants for the many-likes condition, by participant post ordinal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantPattern(Vec<u32>);

impl Default for GrantPattern {
    fn default() -> Self {
        Self(vec![5, 5, 5, 5, 4])
    }
}

impl GrantPattern {
    /// Every slot must be 4 or 5 and the slots must add up to 24.
    pub fn new(slots: Vec<u32>) -> Result<Self, OrchestratorError> {
        if let Some(bad) = slots.iter().find(|g| !(4..=5).contains(*g)) {
            return Err(OrchestratorError::InvalidPattern(format!(
                "slot {bad} is not four or five likes"
            )));
        }
        let total: u32 = slots.iter().sum();
        if total != MANY_LIKES_TOTAL {
            return Err(OrchestratorError::InvalidPattern(format!(
                "slots sum to {total}, expected {MANY_LIKES_TOTAL}"
            )));
        }
        Ok(Self(slots))
    }

    pub fn slots(&self) -> &[u32] {
        &self.0
    }

    /// Likes owed to the participant's `ordinal`-th post (0-based).
    pub fn grant_for(&self, condition: Condition, ordinal: usize) -> u32 {
        match condition {
            Condition::ManyLikes => self.0.get(ordinal).copied().unwrap_or(0),
            Condition::FewLikes => u32::from(ordinal == 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentLedger {
    pub experiment_id: ExperimentId,
    per_post_grants: Vec<(PostId, u32)>,
    total_granted: u32,
    posts_seen: u32,
    /// Next roster slot (0-based) for round-robin actor selection.
    cursor: usize,
}

impl TreatmentLedger {
    pub fn new(experiment_id: ExperimentId) -> Self {
        Self {
            experiment_id,
            per_post_grants: Vec::new(),
            total_granted: 0,
            posts_seen: 0,
            cursor: 0,
        }
    }

    /// Non-zero grants in post order.
    pub fn per_post_grants(&self) -> &[(PostId, u32)] {
        &self.per_post_grants
    }

    pub fn total_granted(&self) -> u32 {
        self.total_granted
    }

    pub fn posts_seen(&self) -> u32 {
        self.posts_seen
    }

    fn check(&self, condition: Condition, ordinal: usize, grant: u32) -> Result<(), String> {
        if grant == 0 {
            return Ok(());
        }
        let total = self.total_granted + grant;
        match condition {
            Condition::ManyLikes => {
                if !(4..=5).contains(&grant) {
                    return Err(format!("many-likes grant of {grant} is not four or five"));
                }
                if total > MANY_LIKES_TOTAL {
                    return Err(format!("total of {total} would exceed {MANY_LIKES_TOTAL}"));
                }
            }
            Condition::FewLikes => {
                if total > FEW_LIKES_TOTAL {
                    return Err(format!("total of {total} would exceed {FEW_LIKES_TOTAL}"));
                }
                if ordinal != 0 {
                    return Err("few-likes grants only go to the first post".into());
                }
            }
        }
        Ok(())
    }
}

/// Events produced by granting likes for one participant post.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrantOutcome {
    /// Pending likes bound to the post, one per distinct actor.
    pub granted: Vec<ScheduledEvent>,
    /// Fixture likes for this day that the protocol has no room for.
    pub skipped: Vec<ScheduledEvent>,
}

fn spread_delay(i: usize, n: usize) -> i64 {
    if n <= 1 {
        return MIN_GRANT_DELAY_SECS;
    }
    MIN_GRANT_DELAY_SECS + (MAX_GRANT_DELAY_SECS - MIN_GRANT_DELAY_SECS) * i as i64 / (n as i64 - 1)
}

fn capped_due(post: &Post, delay_secs: i64, study_end: Timestamp) -> Timestamp {
    let due = post.created_at + Duration::seconds(delay_secs);
    due.min(study_end.max(post.created_at))
}

/// Decides how many likes a new participant post receives and from whom.
///
/// The `k`-th participant post (0-based, by creation order) is owed
/// `pattern.grant_for(condition, k)` likes. Fixture likes planned for study
/// day `k + 1` (`deferred`) fill the grant first, in plan order and with
/// distinct actors; the remainder is drawn round-robin from the roster in
/// the many-likes condition and from the lowest roster index in the
/// few-likes condition. Fixture likes that do not fit are returned as
/// skipped. The ledger is left untouched when the grant would break the
/// condition's caps.
pub fn grant_likes_for_participant_post(
    experiment: &Experiment,
    post: &Post,
    ledger: &mut TreatmentLedger,
    pattern: &GrantPattern,
    deferred: Vec<ScheduledEvent>,
    next_event_id: &mut u64,
) -> Result<GrantOutcome, OrchestratorError> {
    if post.author_id != experiment.participant_id {
        return Err(OrchestratorError::NotParticipantPost(post.post_id));
    }
    let condition = experiment.condition();
    let ordinal = ledger.posts_seen as usize;
    let grant = pattern.grant_for(condition, ordinal);
    if let Err(reason) = ledger.check(condition, ordinal, grant) {
        tracing::warn!(experiment = %experiment.experiment_id, post = %post.post_id, %reason, "like grant rejected");
        return Err(OrchestratorError::GrantRejected(reason));
    }

    let study_end = experiment.end_instant();
    let mut outcome = GrantOutcome::default();
    let mut actors: Vec<u8> = Vec::new();
    for mut event in deferred {
        let actor = match &event.action {
            EventAction::ApplyBotLike { actor_bot_index, .. } => *actor_bot_index,
            EventAction::CreateBotPost { .. } => continue,
        };
        if actors.len() < grant as usize && !actors.contains(&actor) {
            if let EventAction::ApplyBotLike {
                target,
                delay_seconds,
                ..
            } = &mut event.action
            {
                *target = LikeBinding::Post {
                    post_id: post.post_id,
                };
                event.due_at = Some(capped_due(post, *delay_seconds as i64, study_end));
            }
            actors.push(actor);
            outcome.granted.push(event);
        } else {
            event.status = EventStatus::Skipped;
            outcome.skipped.push(event);
        }
    }

    let mut cursor = ledger.cursor;
    let from_fixture = actors.len();
    let missing = grant as usize - from_fixture;
    let mut filled = Vec::with_capacity(missing);
    let roster = BOTS_PER_EXPERIMENT;
    match condition {
        Condition::ManyLikes => {
            // one lap of the roster always finds enough distinct bots
            for _ in 0..roster {
                if filled.len() == missing {
                    break;
                }
                let candidate = (cursor % roster) as u8 + 1;
                cursor += 1;
                if !actors.contains(&candidate) {
                    actors.push(candidate);
                    filled.push(candidate);
                }
            }
        }
        Condition::FewLikes => {
            for candidate in 1..=roster as u8 {
                if filled.len() == missing {
                    break;
                }
                if !actors.contains(&candidate) {
                    actors.push(candidate);
                    filled.push(candidate);
                }
            }
        }
    }
    if actors.len() != grant as usize {
        return Err(OrchestratorError::GrantRejected(format!(
            "could not find {grant} distinct bots for post {}",
            post.post_id
        )));
    }
    let mut distinct = actors.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != actors.len() {
        return Err(OrchestratorError::GrantRejected(format!(
            "duplicate actor among {actors:?}"
        )));
    }

    for (i, actor) in filled.into_iter().enumerate() {
        let delay = spread_delay(from_fixture + i, grant as usize);
        outcome.granted.push(ScheduledEvent {
            event_id: EventId(*next_event_id),
            experiment_id: experiment.experiment_id,
            due_at: Some(capped_due(post, delay, study_end)),
            action: EventAction::ApplyBotLike {
                plan_id: None,
                actor_bot_index: actor,
                target: LikeBinding::Post {
                    post_id: post.post_id,
                },
                delay_seconds: delay as u32,
            },
            status: EventStatus::Pending,
        });
        *next_event_id += 1;
    }

    ledger.posts_seen += 1;
    ledger.cursor = cursor;
    if grant > 0 {
        ledger.per_post_grants.push((post.post_id, grant));
        ledger.total_granted += grant;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AccountId, PostOrigin};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn experiment(condition: Condition) -> Experiment {
        let mut exp = Experiment::new(
            ExperimentId(1),
            AccountId(1),
            (2..8).map(AccountId).collect(),
            condition,
            Utc.with_ymd_and_hms(2023, 1, 2, 0, 0, 0).unwrap(),
        )
        .unwrap();
        exp.start(exp.start_instant).unwrap();
        exp
    }

    fn participant_post(exp: &Experiment, id: u64, hours: i64) -> Post {
        Post {
            post_id: PostId(id),
            author_id: exp.participant_id,
            body: "x".repeat(600),
            created_at: exp.start_instant + Duration::hours(hours),
            origin: PostOrigin::Participant,
        }
    }

    fn grants_over_days(condition: Condition, posts: usize) -> (Vec<u32>, TreatmentLedger) {
        let exp = experiment(condition);
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let mut next = 1000;
        let mut counts = Vec::new();
        for day in 0..posts {
            let post = participant_post(&exp, day as u64 + 1, day as i64 * 24 + 12);
            let out = grant_likes_for_participant_post(
                &exp,
                &post,
                &mut ledger,
                &GrantPattern::default(),
                vec![],
                &mut next,
            )
            .unwrap();
            counts.push(out.granted.len() as u32);
        }
        (counts, ledger)
    }

    #[test]
    fn many_likes_follow_pattern() {
        let (counts, ledger) = grants_over_days(Condition::ManyLikes, 5);
        assert_eq!(counts, vec![5, 5, 5, 5, 4]);
        assert_eq!(ledger.total_granted(), 24);
    }

    #[test]
    fn few_likes_only_first_post() {
        let (counts, ledger) = grants_over_days(Condition::FewLikes, 5);
        assert_eq!(counts, vec![1, 0, 0, 0, 0]);
        assert_eq!(ledger.total_granted(), 1);
        assert_eq!(ledger.per_post_grants(), &[(PostId(1), 1)]);
    }

    #[test]
    fn extra_posts_get_nothing() {
        let (counts, ledger) = grants_over_days(Condition::ManyLikes, 7);
        assert_eq!(counts, vec![5, 5, 5, 5, 4, 0, 0]);
        assert_eq!(ledger.total_granted(), 24);
    }

    #[test]
    fn two_posts_on_day_one_take_consecutive_slots() {
        let exp = experiment(Condition::ManyLikes);
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let mut next = 0;
        let mut counts = Vec::new();
        for (id, hour) in [(1, 9), (2, 15), (3, 40), (4, 64), (5, 88), (6, 100)] {
            let out = grant_likes_for_participant_post(
                &exp,
                &participant_post(&exp, id, hour),
                &mut ledger,
                &GrantPattern::default(),
                vec![],
                &mut next,
            )
            .unwrap();
            counts.push(out.granted.len());
        }
        assert_eq!(counts, vec![5, 5, 5, 5, 4, 0]);
        assert!(ledger.total_granted() <= MANY_LIKES_TOTAL);
    }

    #[test]
    fn few_likes_actor_is_lowest_roster_index() {
        let exp = experiment(Condition::FewLikes);
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let out = grant_likes_for_participant_post(
            &exp,
            &participant_post(&exp, 1, 10),
            &mut ledger,
            &GrantPattern::default(),
            vec![],
            &mut 0,
        )
        .unwrap();
        assert!(matches!(
            out.granted[0].action,
            EventAction::ApplyBotLike {
                actor_bot_index: 1,
                ..
            }
        ));
        assert_eq!(
            out.granted[0].due_at,
            Some(exp.start_instant + Duration::hours(11))
        );
    }

    #[test]
    fn delays_spread_and_capped() {
        let exp = experiment(Condition::ManyLikes);
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let post = participant_post(&exp, 1, 12);
        let out = grant_likes_for_participant_post(
            &exp,
            &post,
            &mut ledger,
            &GrantPattern::default(),
            vec![],
            &mut 0,
        )
        .unwrap();
        let delays: Vec<i64> = out
            .granted
            .iter()
            .map(|e| (e.due_at.unwrap() - post.created_at).num_seconds())
            .collect();
        assert_eq!(delays, vec![3600, 3600 + 8100, 3600 + 16200, 3600 + 24300, 36000]);

        // a post just before the end of the study gets its likes by the end
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let late = participant_post(&exp, 2, 6 * 24 - 2);
        let out = grant_likes_for_participant_post(
            &exp,
            &late,
            &mut ledger,
            &GrantPattern::default(),
            vec![],
            &mut 0,
        )
        .unwrap();
        assert!(out.granted.iter().all(|e| e.due_at.unwrap() <= exp.end_instant()));
    }

    #[test]
    fn foreign_post_rejected() {
        let exp = experiment(Condition::ManyLikes);
        let mut post = participant_post(&exp, 1, 1);
        post.author_id = AccountId(3);
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        assert_eq!(
            grant_likes_for_participant_post(
                &exp,
                &post,
                &mut ledger,
                &GrantPattern::default(),
                vec![],
                &mut 0
            ),
            Err(OrchestratorError::NotParticipantPost(PostId(1)))
        );
    }

    #[test]
    fn fixture_likes_fill_first_and_overflow_is_skipped() {
        let exp = experiment(Condition::FewLikes);
        let deferred: Vec<ScheduledEvent> = [4u8, 5]
            .iter()
            .enumerate()
            .map(|(i, actor)| ScheduledEvent {
                event_id: EventId(i as u64),
                experiment_id: exp.experiment_id,
                due_at: None,
                action: EventAction::ApplyBotLike {
                    plan_id: Some(format!("pl{i}")),
                    actor_bot_index: *actor,
                    target: LikeBinding::ParticipantDay { day: 1 },
                    delay_seconds: 120,
                },
                status: EventStatus::Pending,
            })
            .collect();
        let mut ledger = TreatmentLedger::new(exp.experiment_id);
        let post = participant_post(&exp, 1, 3);
        let out = grant_likes_for_participant_post(
            &exp,
            &post,
            &mut ledger,
            &GrantPattern::default(),
            deferred,
            &mut 10,
        )
        .unwrap();
        assert_eq!(out.granted.len(), 1);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(
            out.granted[0].due_at,
            Some(post.created_at + Duration::seconds(120))
        );
        assert!(matches!(
            out.granted[0].action,
            EventAction::ApplyBotLike {
                actor_bot_index: 4,
                target: LikeBinding::Post { .. },
                ..
            }
        ));
        assert_eq!(out.skipped[0].status, EventStatus::Skipped);
    }

    #[test]
    fn pattern_validation() {
        assert!(GrantPattern::new(vec![4, 5, 5, 5, 5]).is_ok());
        assert!(GrantPattern::new(vec![4, 4, 4, 4, 4, 4]).is_ok());
        assert!(GrantPattern::new(vec![5, 5, 5, 5, 5]).is_err());
        assert!(GrantPattern::new(vec![6, 6, 6, 6]).is_err());
    }

    proptest! {
        #[test]
        fn totals_never_exceed_caps(
            many in any::<bool>(),
            hours in prop::collection::vec(0i64..150, 0..12),
            deferred_days in prop::collection::vec((1u32..=5, 1u8..=6), 0..10),
        ) {
            let condition = if many { Condition::ManyLikes } else { Condition::FewLikes };
            let exp = experiment(condition);
            let mut ledger = TreatmentLedger::new(exp.experiment_id);
            let mut pool: Vec<ScheduledEvent> = deferred_days.iter().enumerate().map(|(i, (day, actor))| ScheduledEvent {
                event_id: EventId(i as u64),
                experiment_id: exp.experiment_id,
                due_at: None,
                action: EventAction::ApplyBotLike {
                    plan_id: Some(format!("d{i}")),
                    actor_bot_index: *actor,
                    target: LikeBinding::ParticipantDay { day: *day },
                    delay_seconds: 60,
                },
                status: EventStatus::Pending,
            }).collect();
            let mut sorted = hours.clone();
            sorted.sort();
            let mut next = 100;
            let mut total = 0usize;
            for (k, h) in sorted.iter().enumerate() {
                let day = k as u32 + 1;
                let (mine, rest): (Vec<_>, Vec<_>) = pool.into_iter().partition(|e| matches!(
                    &e.action, EventAction::ApplyBotLike { target: LikeBinding::ParticipantDay { day: d }, .. } if *d == day));
                pool = rest;
                let post = participant_post(&exp, k as u64 + 1, *h);
                let out = grant_likes_for_participant_post(&exp, &post, &mut ledger, &GrantPattern::default(), mine, &mut next).unwrap();
                let mut actors: Vec<u8> = out.granted.iter().map(|e| match e.action {
                    EventAction::ApplyBotLike { actor_bot_index, .. } => actor_bot_index,
                    _ => unreachable!(),
                }).collect();
                let n = actors.len();
                actors.sort();
                actors.dedup();
                prop_assert_eq!(actors.len(), n);
                if many && n > 0 {
                    prop_assert!((4..=5).contains(&n));
                }
                total += n;
            }
            let cap = if many { MANY_LIKES_TOTAL } else { FEW_LIKES_TOTAL } as usize;
            prop_assert!(total <= cap);
            prop_assert_eq!(total as u32, ledger.total_granted());
            if sorted.len() >= 5 || (!many && !sorted.is_empty()) {
                prop_assert_eq!(total, cap);
            }
        }
    }
}
