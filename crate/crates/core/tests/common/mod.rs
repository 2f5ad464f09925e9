//! Scripted participants driven through the platform API on a virtual clock.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use fakebook_core::measures::{InstrumentSet, SurveyPhase};
use fakebook_core::model::SessionId;
use fakebook_core::platform::{
    AdminCredentials, ExperimentSummary, ExportBundle, ExportOptions, NewExperiment, Platform,
};
use fakebook_core::{AdId, Condition, PostId, ReactionKind, Timestamp, VirtualClock};

pub const ADMIN: (&str, &str) = ("admin", "secret");

pub fn study_start() -> Timestamp {
    Utc.with_ymd_and_hms(2023, 3, 6, 0, 0, 0).unwrap()
}

pub fn new_platform() -> (Platform, VirtualClock) {
    let clock = VirtualClock::new(study_start());
    let admin = AdminCredentials {
        login: ADMIN.0.into(),
        password: ADMIN.1.into(),
    };
    (Platform::new(Arc::new(clock.clone()), &admin), clock)
}

pub fn admin_token(platform: &Platform) -> String {
    platform.login(ADMIN.0, ADMIN.1).unwrap().token
}

pub fn create(platform: &Platform, condition: Condition, login: &str) -> ExperimentSummary {
    platform
        .admin_create_experiment(
            &admin_token(platform),
            NewExperiment::study_default(condition, login, "pw"),
        )
        .unwrap()
}

pub fn export(platform: &Platform, summary: &ExperimentSummary) -> ExportBundle {
    platform
        .admin_export(
            &admin_token(platform),
            summary.experiment_id,
            ExportOptions::default(),
        )
        .unwrap()
}

/// Ways a scripted participant can break exactly one daily task rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Deviation {
    /// Day whose post is one character short.
    pub short_post_day: Option<u32>,
    /// Day with a single like given.
    pub one_like_day: Option<u32>,
    /// Day with 14 instead of 16 active minutes.
    pub short_session_day: Option<u32>,
    /// Wrap-up day with 9 instead of 11 active minutes.
    pub short_wrapup: bool,
}

/// What the agent created through the API, for export cross-checks.
#[derive(Debug, Default, Clone)]
pub struct Trace {
    pub sessions: Vec<SessionId>,
    pub posts: Vec<PostId>,
    /// (post, kind) reactions given by the participant.
    pub likes: Vec<PostId>,
    pub views: Vec<(SessionId, PostId, i64)>,
    pub ad_clicks: Vec<(SessionId, AdId)>,
    pub survey_answers: usize,
}

pub struct Agent<'a> {
    pub platform: &'a Platform,
    pub clock: &'a VirtualClock,
    pub summary: ExperimentSummary,
    pub login: String,
    /// Hour of day at which the agent visits.
    pub hour: i64,
    pub deviation: Deviation,
    pub trace: Trace,
}

impl<'a> Agent<'a> {
    pub fn new(
        platform: &'a Platform,
        clock: &'a VirtualClock,
        summary: ExperimentSummary,
        hour: i64,
    ) -> Self {
        let login = summary.participant_login.clone();
        Self {
            platform,
            clock,
            summary,
            login,
            hour,
            deviation: Deviation::default(),
            trace: Trace::default(),
        }
    }

    fn visit_start(&self, day: u32) -> Timestamp {
        self.summary.start_instant + Duration::days(day as i64 - 1) + Duration::hours(self.hour)
    }

    fn open(&mut self, day: u32) -> String {
        self.clock.set(self.visit_start(day));
        let grant = self.platform.login(&self.login, "pw").unwrap();
        self.trace.sessions.push(grant.session_id);
        grant.token
    }

    /// Keeps the session alive for `minutes`, with a request at least every eight minutes.
    fn stay(&self, token: &str, minutes: i64) {
        let mut left = minutes;
        while left > 0 {
            let step = left.min(8);
            self.clock.advance(Duration::minutes(step));
            left -= step;
            self.platform.get_feed(token).unwrap();
        }
    }

    fn survey(&mut self, token: &str, phase: SurveyPhase) {
        let answers: BTreeMap<String, i32> = InstrumentSet::study_default()
            .iter()
            .flat_map(|i| i.items.iter())
            .map(|item| (item.item_key.clone(), item.response_min))
            .collect();
        self.trace.survey_answers += answers.len();
        self.platform.submit_survey(token, phase, answers).unwrap();
    }

    pub fn task_day(&mut self, day: u32) {
        let d = self.deviation;
        let token = self.open(day);
        let session = *self.trace.sessions.last().unwrap();
        if day == 1 {
            self.survey(&token, SurveyPhase::Pre);
        }
        let feed = self.platform.get_feed(&token).unwrap();
        let likes = if d.one_like_day == Some(day) { 1 } else { 2 };
        let targets: Vec<PostId> = feed
            .posts
            .iter()
            .filter(|p| !p.viewer_liked && p.author.account_id != self.summary.participant_id)
            .take(likes)
            .map(|p| p.post_id)
            .collect();
        assert_eq!(targets.len(), likes, "day {day}: not enough bot posts to like");
        for post in targets {
            self.platform.react(&token, post, ReactionKind::Like).unwrap();
            self.trace.likes.push(post);
        }
        if let Some(first) = feed.posts.first() {
            self.platform
                .record_view(&token, first.post_id, 3000 + day as i64)
                .unwrap();
            self.trace.views.push((session, first.post_id, 3000 + day as i64));
        }
        if let Some(ad) = feed.ads.get(day as usize % feed.ads.len().max(1)) {
            self.platform.record_ad_click(&token, ad.ad_id).unwrap();
            self.trace.ad_clicks.push((session, ad.ad_id));
        }
        let chars = if d.short_post_day == Some(day) {
            599
        } else {
            600 + day as usize
        };
        let created = self.platform.create_post(&token, &"w".repeat(chars)).unwrap();
        self.trace.posts.push(created.post.post_id);
        let minutes = if d.short_session_day == Some(day) { 14 } else { 16 };
        self.stay(&token, minutes);
        self.platform.end_session(&token).unwrap();
    }

    pub fn wrapup_day(&mut self) {
        let token = self.open(self.summary.day_count + 1);
        self.survey(&token, SurveyPhase::Post);
        let minutes = if self.deviation.short_wrapup { 9 } else { 11 };
        self.stay(&token, minutes);
        self.platform.end_session(&token).unwrap();
    }
}

/// Runs every agent through all task days and the wrap-up day in lockstep,
/// then moves past the end of the study so every scheduled action executes.
pub fn run_study(agents: &mut [Agent<'_>]) {
    let days = agents[0].summary.day_count;
    for day in 1..=days {
        for agent in agents.iter_mut() {
            agent.task_day(day);
        }
    }
    for agent in agents.iter_mut() {
        agent.wrapup_day();
    }
    let end = agents.iter().map(|a| a.summary.end_instant).max().unwrap();
    agents[0].clock.set(end + Duration::days(1));
    agents[0].platform.tick().unwrap();
}

/// Like rows on `posts`, per post, counted straight from the reactions table.
pub fn likes_on(bundle: &ExportBundle, posts: &[PostId]) -> BTreeMap<PostId, usize> {
    let reactions = bundle.table("reactions").unwrap();
    let (pi, ki) = (
        reactions.column("post_id").unwrap(),
        reactions.column("kind").unwrap(),
    );
    let mut out: BTreeMap<PostId, usize> = posts.iter().map(|p| (*p, 0)).collect();
    for row in &reactions.rows {
        let post: PostId = row[pi].parse().unwrap();
        if row[ki] == "LIKE" {
            if let Some(n) = out.get_mut(&post) {
                *n += 1;
            }
        }
    }
    out
}
