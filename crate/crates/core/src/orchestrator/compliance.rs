use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::model::{Experiment, Post, Reaction, ReactionKind};
use crate::telemetry::Session;

/// Daily task thresholds participants had to meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceRules {
    pub min_post_chars: usize,
    pub min_likes_given: usize,
    pub min_active_seconds: i64,
    pub min_wrapup_active_seconds: i64,
}

impl ComplianceRules {
    pub const STUDY: ComplianceRules = ComplianceRules {
        min_post_chars: 600,
        min_likes_given: 2,
        min_active_seconds: 15 * 60,
        min_wrapup_active_seconds: 10 * 60,
    };
}

impl Default for ComplianceRules {
    fn default() -> Self {
        Self::STUDY
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayCompliance {
    pub day: u32,
    pub posted: bool,
    /// Longest post of the day, in characters.
    pub post_chars: usize,
    pub likes_given: usize,
    pub active_seconds: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub days: Vec<DayCompliance>,
    pub wrapup: DayCompliance,
    pub overall: bool,
}

impl ComplianceReport {
    pub fn day(&self, day: u32) -> Option<&DayCompliance> {
        self.days.iter().find(|d| d.day == day)
    }
}

/// The participant's own posts, the likes they gave and their sessions.
#[derive(Debug, Clone, Default)]
pub struct ParticipantActivity {
    pub posts: Vec<Post>,
    pub reactions_given: Vec<Reaction>,
    pub sessions: Vec<Session>,
}

fn day_record(
    day: u32,
    from: Timestamp,
    to: Timestamp,
    activity: &ParticipantActivity,
    as_of: Timestamp,
) -> DayCompliance {
    let in_window = |t: Timestamp| t >= from && t < to;
    let day_posts: Vec<&Post> = activity
        .posts
        .iter()
        .filter(|p| in_window(p.created_at))
        .collect();
    DayCompliance {
        day,
        posted: !day_posts.is_empty(),
        post_chars: day_posts.iter().map(|p| p.char_count()).max().unwrap_or(0),
        likes_given: activity
            .reactions_given
            .iter()
            .filter(|r| r.kind == ReactionKind::Like && in_window(r.created_at))
            .count(),
        active_seconds: activity
            .sessions
            .iter()
            .map(|s| s.overlap_seconds(from, to, as_of))
            .sum(),
    }
}

/// Evaluates the daily task rules for days `1..=day_count` and the wrap-up day.
///
/// Days are 24-hour windows counted from the experiment start. Open
/// sessions count as active until `as_of`. Missing days simply fail.
pub fn compliance_report(
    experiment: &Experiment,
    activity: &ParticipantActivity,
    as_of: Timestamp,
) -> ComplianceReport {
    let rules = ComplianceRules::STUDY;
    let window = |day: u32| {
        let from = experiment.start_instant + Duration::days(day as i64 - 1);
        (from, from + Duration::days(1))
    };
    let days: Vec<DayCompliance> = (1..=experiment.day_count)
        .map(|d| {
            let (from, to) = window(d);
            day_record(d, from, to, activity, as_of)
        })
        .collect();
    let (from, to) = window(experiment.wrapup_day);
    let wrapup = day_record(experiment.wrapup_day, from, to, activity, as_of);
    let overall = days.iter().all(|d| {
        d.posted
            && d.post_chars >= rules.min_post_chars
            && d.likes_given >= rules.min_likes_given
            && d.active_seconds >= rules.min_active_seconds
    }) && wrapup.active_seconds >= rules.min_wrapup_active_seconds;
    ComplianceReport {
        days,
        wrapup,
        overall,
    }
}
