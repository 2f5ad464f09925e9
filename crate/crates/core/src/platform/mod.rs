//! The stateful service behind the participant and admin HTTP API.
//!
//! All state sits behind one lock. With a storage path configured, every
//! mutating call rewrites a versioned JSON snapshot (write to a temporary
//! file, then rename), so a restart resumes where the last request left off.

mod auth;
mod export;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, SecondsFormat};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, Timestamp};
use crate::fixture::{FixtureError, FixtureFiles, ValidatedFixture, ValidationOptions, ValidationReport};
use crate::measures::{InstrumentSet, SurveyPhase};
use crate::model::{
    like_count, visible_posts, Account, AccountId, AdId, Advertisement, Condition, Experiment, ExperimentId,
    ExperimentState, FeatureFlags, Post, PostId, PostOrigin, ProfileCard, ReactionCounts, ReactionKind, Role,
};
use crate::orchestrator::{
    compliance_report, ComplianceReport, ExecutionFailure, GrantPattern, ParticipantActivity, TreatmentLedger,
};
use crate::telemetry::{AdClickEvent, Session, ViewEvent};

pub use export::{read_export_tree, ExportBundle, ExportError, ExportTable, EXPORT_SCHEMA};
pub use store::SurveyRecord;
use store::{ExperimentRecord, Snapshot, Store, TokenState, SCHEMA_VERSION};

/// Sessions without a request for this long are closed at their last request.
pub const SESSION_IDLE_LIMIT: Duration = Duration::minutes(30);

/// Posts shorter than this are accepted but flagged for compliance.
pub const POST_CHAR_THRESHOLD: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("fixture could not be read: {0}")]
    FixtureParse(FixtureError),
    #[error("fixture failed validation: {}", .0.errors.join("; "))]
    InvalidFixture(ValidationReport),
    #[error("storage: {0}")]
    Storage(String),
}

type Result<T, E = PlatformError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminCredentials {
    pub login: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginGrant {
    pub token: String,
    pub account_id: AccountId,
    pub role: Role,
    pub session_id: crate::model::SessionId,
}

/// A post author or liker as shown to participants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorCard {
    pub account_id: AccountId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItem {
    pub post_id: PostId,
    pub author: AuthorCard,
    pub body: String,
    pub created_at: Timestamp,
    pub like_count: usize,
    pub likers: Vec<AuthorCard>,
    pub viewer_liked: bool,
    pub viewer_reactions: Vec<ReactionKind>,
    /// Present only when negative reactions are shown.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dislike_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedView {
    pub posts: Vec<FeedItem>,
    pub ads: Vec<Advertisement>,
    pub flags: FeatureFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedPost {
    pub post: Post,
    /// Shorter than the daily task threshold.
    pub sub_threshold: bool,
    pub scheduled_likes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileView {
    pub account_id: AccountId,
    pub display_name: String,
    pub profile: ProfileCard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewParticipant {
    pub login: String,
    pub password: String,
    pub display_name: String,
    #[serde(default)]
    pub profile: ProfileCard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewExperiment {
    pub condition: Condition,
    pub participant: NewParticipant,
    /// Uploaded CSV text; the bundled study fixture when absent.
    #[serde(default)]
    pub fixture: Option<FixtureFiles>,
    /// Defaults to the current time.
    #[serde(default)]
    pub start_at: Option<Timestamp>,
    #[serde(default)]
    pub day_count: Option<u32>,
    #[serde(default)]
    pub strict_profile: bool,
    #[serde(default)]
    pub grant_pattern: Option<Vec<u32>>,
    #[serde(default)]
    pub flags: Option<FeatureFlags>,
}

impl NewExperiment {
    pub fn study_default(condition: Condition, login: &str, password: &str) -> Self {
        Self {
            condition,
            participant: NewParticipant {
                login: login.to_owned(),
                password: password.to_owned(),
                display_name: login.to_owned(),
                profile: ProfileCard::default(),
            },
            fixture: None,
            start_at: None,
            day_count: None,
            strict_profile: false,
            grant_pattern: None,
            flags: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: ExperimentId,
    pub participant_id: AccountId,
    pub participant_login: String,
    pub bot_ids: Vec<AccountId>,
    pub condition: Condition,
    pub state: ExperimentState,
    pub start_instant: Timestamp,
    pub end_instant: Timestamp,
    pub day_count: u32,
    pub flags: FeatureFlags,
    pub accounts: usize,
    pub friend_edges: usize,
    pub scheduled_events: usize,
    pub pending_events: usize,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerView {
    pub ledger: TreatmentLedger,
    pub pending_events: usize,
    pub failures: Vec<ExecutionFailure>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Keep display names in the profiles table; blank by default.
    #[serde(default)]
    pub include_display_names: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickSummary {
    pub executed: usize,
    pub sessions_closed: usize,
}

struct Principal {
    account_id: AccountId,
    role: Role,
    session_id: crate::model::SessionId,
}

pub struct Platform {
    store: Mutex<Store>,
    clock: Arc<dyn Clock>,
    storage: Option<PathBuf>,
    instruments: InstrumentSet,
}

fn fmt_ts(t: Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Platform {
    /// In-memory platform with a bootstrapped admin account.
    pub fn new(clock: Arc<dyn Clock>, admin: &AdminCredentials) -> Self {
        let mut store = Store::default();
        bootstrap_admin(&mut store, admin);
        Self {
            store: Mutex::new(store),
            clock,
            storage: None,
            instruments: InstrumentSet::study_default(),
        }
    }

    /// File-backed platform; loads the snapshot at `path` when it exists.
    pub fn open(path: &Path, clock: Arc<dyn Clock>, admin: &AdminCredentials) -> Result<Self> {
        let mut store = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| PlatformError::Storage(e.to_string()))?;
            let snapshot: Snapshot =
                serde_json::from_str(&text).map_err(|e| PlatformError::Storage(e.to_string()))?;
            if snapshot.schema_version != SCHEMA_VERSION {
                return Err(PlatformError::Storage(format!(
                    "snapshot schema version {} is not supported (expected {SCHEMA_VERSION})",
                    snapshot.schema_version
                )));
            }
            snapshot.store
        } else {
            Store::default()
        };
        bootstrap_admin(&mut store, admin);
        let platform = Self {
            store: Mutex::new(store),
            clock,
            storage: Some(path.to_owned()),
            instruments: InstrumentSet::study_default(),
        };
        platform.persist(&platform.store.lock())?;
        Ok(platform)
    }

    pub fn with_instruments(mut self, instruments: InstrumentSet) -> Self {
        self.instruments = instruments;
        self
    }

    pub fn instruments(&self) -> &InstrumentSet {
        &self.instruments
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn persist(&self, store: &Store) -> Result<()> {
        let Some(path) = &self.storage else { return Ok(()) };
        let snapshot = SnapshotRef {
            schema_version: SCHEMA_VERSION,
            store,
        };
        let json = serde_json::to_vec(&snapshot).map_err(|e| PlatformError::Storage(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, json)
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| PlatformError::Storage(e.to_string()))
    }

    /// Runs `op` under the lock; persists afterwards when `mutates` and it succeeded.
    fn run<T>(&self, mutates: bool, op: impl FnOnce(&mut Store, Timestamp) -> Result<T>) -> Result<T> {
        let now = self.clock.now();
        let mut store = self.store.lock();
        let out = op(&mut store, now)?;
        if mutates {
            self.persist(&store)?;
        }
        Ok(out)
    }

    pub fn login(&self, login: &str, password: &str) -> Result<LoginGrant> {
        self.run(true, |store, now| {
            let bad = || PlatformError::Unauthorized("bad credentials".into());
            let account_id = *store.content.logins.get(login).ok_or_else(bad)?;
            let account = &store.content.accounts[&account_id];
            if account.role == Role::Bot {
                return Err(PlatformError::Forbidden("bot accounts cannot log in".into()));
            }
            let stored = account.credential_hash.as_deref().ok_or_else(bad)?;
            if !auth::verify_password(stored, password) {
                return Err(bad());
            }
            let role = account.role;
            store.tokens.retain(|_, t| t.account_id != account_id);
            let session_id = store.content.telemetry.open_session(account_id, now);
            let token = auth::new_token();
            store.tokens.insert(
                token.clone(),
                TokenState {
                    account_id,
                    session_id,
                    last_seen: now,
                },
            );
            Ok(LoginGrant {
                token,
                account_id,
                role,
                session_id,
            })
        })
    }

    /// Executes due bot actions of every experiment and closes idle sessions.
    pub fn tick(&self) -> Result<TickSummary> {
        self.run(true, |store, now| {
            let sessions_closed = expire_idle(store, now);
            let ids: Vec<ExperimentId> = store.experiments.keys().copied().collect();
            let executed = ids.into_iter().map(|id| store.run_due(id, now)).sum();
            Ok(TickSummary {
                executed,
                sessions_closed,
            })
        })
    }

    // ---- participant operations ----

    pub fn get_feed(&self, token: &str) -> Result<FeedView> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            store.run_due(exp_id, now);
            let record = &store.experiments[&exp_id];
            let content = &store.content;
            let card = |id: AccountId| AuthorCard {
                account_id: id,
                display_name: content.accounts[&id].display_name.clone(),
            };
            let posts = feed_posts(store, exp_id, who.account_id)?;
            let mut items = Vec::with_capacity(posts.len());
            for post in posts {
                let counts = content.reactions.counts(post.post_id);
                let viewer_reactions: Vec<ReactionKind> = ReactionKind::ALL
                    .into_iter()
                    .filter(|k| content.reactions.contains(who.account_id, post.post_id, *k))
                    .collect();
                let show_negative = record.flags.show_negative_reactions;
                items.push(FeedItem {
                    post_id: post.post_id,
                    author: card(post.author_id),
                    body: post.body.clone(),
                    created_at: post.created_at,
                    like_count: like_count(post.post_id, &content.posts, &content.reactions)
                        .map_err(|e| PlatformError::NotFound(e.to_string()))?,
                    likers: content
                        .reactions
                        .likers(post.post_id)
                        .into_iter()
                        .map(card)
                        .collect(),
                    viewer_liked: viewer_reactions.contains(&ReactionKind::Like),
                    viewer_reactions,
                    dislike_count: show_negative.then_some(counts.dislikes),
                    flag_count: show_negative.then_some(counts.flags),
                });
            }
            Ok(FeedView {
                posts: items,
                ads: record.ad_ids.iter().map(|id| content.ads[id].clone()).collect(),
                flags: record.flags,
            })
        })
    }

    pub fn get_profile(&self, token: &str, account_id: AccountId) -> Result<ProfileView> {
        self.run(false, |store, now| {
            let (_, exp_id) = participant(store, token, now)?;
            if !store.experiments[&exp_id].members().contains(&account_id) {
                return Err(PlatformError::NotFound(format!("account {account_id}")));
            }
            let account = &store.content.accounts[&account_id];
            Ok(ProfileView {
                account_id,
                display_name: account.display_name.clone(),
                profile: account.profile.clone(),
            })
        })
    }

    /// The survey instruments, for a logged-in participant.
    pub fn survey_instruments(&self, token: &str) -> Result<InstrumentSet> {
        self.run(false, |store, now| {
            participant(store, token, now)?;
            Ok(self.instruments.clone())
        })
    }

    pub fn create_post(&self, token: &str, body: &str) -> Result<CreatedPost> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            if body.trim().is_empty() {
                return Err(PlatformError::Validation("post body must not be empty".into()));
            }
            store.run_due(exp_id, now);
            let post = store
                .content
                .add_post(who.account_id, body, now, PostOrigin::Participant);
            let record = store.experiments.get_mut(&exp_id).expect("member experiment");
            let scheduled_likes = match record.scheduler.on_participant_post(&record.experiment, &post) {
                Ok(granted) => granted.len(),
                Err(e) => {
                    tracing::warn!(post = %post.post_id, error = %e, "like grant failed");
                    0
                }
            };
            store.run_due(exp_id, now);
            Ok(CreatedPost {
                sub_threshold: post.char_count() < POST_CHAR_THRESHOLD,
                post,
                scheduled_likes,
            })
        })
    }

    pub fn react(&self, token: &str, post_id: PostId, kind: ReactionKind) -> Result<ReactionCounts> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            store.run_due(exp_id, now);
            let post = visible_post(store, exp_id, who.account_id, post_id)?;
            if post.author_id == who.account_id {
                return Err(PlatformError::Forbidden("cannot react to your own post".into()));
            }
            store
                .content
                .add_reaction(who.account_id, post_id, kind, now)
                .map_err(|e| PlatformError::Validation(e.to_string()))?;
            Ok(store.content.reactions.counts(post_id))
        })
    }

    pub fn unreact(&self, token: &str, post_id: PostId, kind: ReactionKind) -> Result<ReactionCounts> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            visible_post(store, exp_id, who.account_id, post_id)?;
            store.content.reactions.remove(who.account_id, post_id, kind);
            Ok(store.content.reactions.counts(post_id))
        })
    }

    pub fn record_view(&self, token: &str, post_id: PostId, duration_ms: i64) -> Result<ViewEvent> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            if duration_ms < 0 {
                return Err(PlatformError::Validation(format!(
                    "view duration must be non-negative, got {duration_ms}"
                )));
            }
            visible_post(store, exp_id, who.account_id, post_id)?;
            store
                .content
                .telemetry
                .record_view(who.session_id, post_id, duration_ms, now)
                .cloned()
                .map_err(|e| PlatformError::Validation(e.to_string()))
        })
    }

    pub fn record_ad_click(&self, token: &str, ad_id: AdId) -> Result<AdClickEvent> {
        self.run(true, |store, now| {
            let (who, exp_id) = participant(store, token, now)?;
            if !store.experiments[&exp_id].ad_ids.contains(&ad_id) {
                return Err(PlatformError::NotFound(format!("ad {ad_id}")));
            }
            store
                .content
                .telemetry
                .record_ad_click(who.session_id, ad_id, now)
                .cloned()
                .map_err(|e| PlatformError::Validation(e.to_string()))
        })
    }

    /// Closes the caller's session and invalidates the token.
    pub fn end_session(&self, token: &str) -> Result<Session> {
        self.run(true, |store, now| {
            let who = authenticate(store, token, now)?;
            store.tokens.remove(token);
            store
                .content
                .telemetry
                .close_session(who.session_id, now)
                .map_err(|e| PlatformError::Validation(e.to_string()))?;
            Ok(store
                .content
                .telemetry
                .session(who.session_id)
                .expect("closed session")
                .clone())
        })
    }

    /// Stores survey answers after checking every key and value against the instruments.
    pub fn submit_survey(
        &self,
        token: &str,
        phase: SurveyPhase,
        answers: BTreeMap<String, i32>,
    ) -> Result<SurveyRecord> {
        let mut problems = Vec::new();
        for (key, value) in &answers {
            match self.instruments.item(key) {
                None => problems.push(format!("unknown item {key}")),
                Some(item) if !item.contains(*value) => problems.push(format!(
                    "item {key} answer {value} outside {}..={}",
                    item.response_min, item.response_max
                )),
                Some(_) => {}
            }
        }
        if answers.is_empty() {
            problems.push("no answers".into());
        }
        self.run(true, |store, now| {
            let (who, _) = participant(store, token, now)?;
            if !problems.is_empty() {
                return Err(PlatformError::Validation(problems.join("; ")));
            }
            let record = SurveyRecord {
                account_id: who.account_id,
                phase,
                answers,
                submitted_at: now,
            };
            store.content.surveys.push(record.clone());
            Ok(record)
        })
    }

    // ---- admin operations ----

    /// Parses and validates uploaded fixture CSVs without creating anything.
    pub fn admin_validate_fixture(
        &self,
        token: &str,
        files: &FixtureFiles,
        condition: Condition,
        day_count: u32,
    ) -> Result<ValidationReport> {
        self.run(false, |store, now| {
            admin(store, token, now)?;
            let bundle = files.parse().map_err(PlatformError::FixtureParse)?;
            Ok(crate::fixture::validate_fixture(&bundle, condition, day_count))
        })
    }

    /// Creates the participant and six bots, befriends all seven, materializes
    /// the schedule and starts the experiment. Nothing is created on failure.
    pub fn admin_create_experiment(&self, token: &str, spec: NewExperiment) -> Result<ExperimentSummary> {
        let files = spec.fixture.clone().unwrap_or_else(FixtureFiles::study_default);
        let bundle = files.parse().map_err(PlatformError::FixtureParse)?;
        let pattern = match &spec.grant_pattern {
            Some(slots) => {
                GrantPattern::new(slots.clone()).map_err(|e| PlatformError::Validation(e.to_string()))?
            }
            None => GrantPattern::default(),
        };
        let day_count = spec.day_count.unwrap_or(Experiment::DEFAULT_DAY_COUNT);
        if day_count == 0 {
            return Err(PlatformError::Validation("day_count must be positive".into()));
        }
        let options = ValidationOptions {
            strict_profile: spec.strict_profile,
            grant_pattern: pattern.clone(),
            ..ValidationOptions::new(spec.condition, day_count)
        };
        let fixture = ValidatedFixture::new(bundle, &options).map_err(PlatformError::InvalidFixture)?;
        let login = spec.participant.login.trim().to_owned();
        if login.is_empty() || spec.participant.password.is_empty() {
            return Err(PlatformError::Validation(
                "participant login and password are required".into(),
            ));
        }

        self.run(true, |store, now| {
            admin(store, token, now)?;
            if store.content.logins.contains_key(&login) {
                return Err(PlatformError::Conflict(format!("login {login} is taken")));
            }
            let start = spec.start_at.unwrap_or(now);
            let content = &mut store.content;
            let experiment_id = ExperimentId(content.next_experiment + 1);

            // Fallible steps run before anything is inserted.
            let participant_id = AccountId(content.next_account + 1);
            let bot_ids: Vec<AccountId> = (0..fixture.bundle().bots.len() as u64)
                .map(|i| AccountId(content.next_account + 2 + i))
                .collect();
            let mut experiment = Experiment::new(
                experiment_id,
                participant_id,
                bot_ids.clone(),
                spec.condition,
                start,
            )
            .map_err(|e| PlatformError::Validation(e.to_string()))?;
            experiment.day_count = day_count;
            experiment.wrapup_day = day_count + 1;
            let scheduler = crate::orchestrator::Scheduler::new(&experiment, &fixture, pattern)
                .map_err(|e| PlatformError::Validation(e.to_string()))?;
            experiment
                .start(start)
                .map_err(|e| PlatformError::Validation(e.to_string()))?;

            content.next_experiment += 1;
            let password_hash = auth::hash_password(&spec.participant.password);
            let new_participant = &spec.participant;
            let created = content.add_account(|id| Account {
                account_id: id,
                role: Role::Participant,
                display_name: new_participant.display_name.clone(),
                profile: new_participant.profile.clone(),
                credential_hash: Some(password_hash),
            });
            debug_assert_eq!(created, participant_id);
            content.logins.insert(login.clone(), participant_id);
            let mut bots: Vec<_> = fixture.bundle().bots.clone();
            bots.sort_by_key(|b| b.bot_index);
            for bot in &bots {
                let id = content.add_account(|id| Account {
                    account_id: id,
                    role: Role::Bot,
                    display_name: bot.display_name.clone(),
                    profile: bot.profile.clone(),
                    credential_hash: None,
                });
                debug_assert_eq!(Some(id), experiment.bot(bot.bot_index));
                content
                    .logins
                    .insert(format!("bot{}@exp{}", bot.bot_index, experiment_id.0), id);
            }
            for member in experiment.members() {
                content.membership.insert(member, experiment_id);
            }
            let members: Vec<AccountId> = experiment.members().collect();
            content
                .friends
                .connect_all(&members)
                .map_err(|e| PlatformError::Validation(e.to_string()))?;
            let ad_ids = fixture
                .bundle()
                .ads
                .iter()
                .map(|ad| content.add_ad(&ad.title, &ad.body, &ad.image_ref))
                .collect();
            store.experiments.insert(
                experiment_id,
                ExperimentRecord {
                    experiment,
                    participant_login: login.clone(),
                    flags: spec.flags.unwrap_or_default(),
                    scheduler,
                    ad_ids,
                    validation: fixture.report().clone(),
                },
            );
            store.run_due(experiment_id, now);
            Ok(summary(store, experiment_id))
        })
    }

    pub fn admin_experiments(&self, token: &str) -> Result<Vec<ExperimentSummary>> {
        self.run(false, |store, now| {
            admin(store, token, now)?;
            let ids: Vec<ExperimentId> = store.experiments.keys().copied().collect();
            Ok(ids.into_iter().map(|id| summary(store, id)).collect())
        })
    }

    pub fn admin_experiment(&self, token: &str, id: ExperimentId) -> Result<ExperimentSummary> {
        self.run(false, |store, now| {
            admin(store, token, now)?;
            require_experiment(store, id)?;
            Ok(summary(store, id))
        })
    }

    pub fn admin_set_flags(
        &self,
        token: &str,
        id: ExperimentId,
        flags: FeatureFlags,
    ) -> Result<FeatureFlags> {
        self.run(true, |store, now| {
            admin(store, token, now)?;
            require_experiment(store, id)?;
            store.experiments.get_mut(&id).expect("checked").flags = flags;
            Ok(flags)
        })
    }

    pub fn admin_ledger(&self, token: &str, id: ExperimentId) -> Result<LedgerView> {
        self.run(false, |store, now| {
            admin(store, token, now)?;
            let record = require_experiment(store, id)?;
            Ok(LedgerView {
                ledger: record.scheduler.ledger().clone(),
                pending_events: record.scheduler.pending().count(),
                failures: record.scheduler.failures().to_vec(),
            })
        })
    }

    pub fn admin_compliance(&self, token: &str, id: ExperimentId) -> Result<ComplianceReport> {
        self.run(false, |store, now| {
            admin(store, token, now)?;
            let record = require_experiment(store, id)?;
            let participant = record.experiment.participant_id;
            let content = &store.content;
            let activity = ParticipantActivity {
                posts: content
                    .posts
                    .values()
                    .filter(|p| p.author_id == participant)
                    .cloned()
                    .collect(),
                reactions_given: content.reactions.by_actor(participant).cloned().collect(),
                sessions: content.telemetry.sessions_of(participant).cloned().collect(),
            };
            Ok(compliance_report(&record.experiment, &activity, now))
        })
    }

    pub fn admin_export(
        &self,
        token: &str,
        id: ExperimentId,
        options: ExportOptions,
    ) -> Result<ExportBundle> {
        self.run(true, |store, now| {
            admin(store, token, now)?;
            require_experiment(store, id)?;
            store.run_due(id, now);
            Ok(build_export(store, id, options))
        })
    }
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    schema_version: u32,
    store: &'a Store,
}

fn bootstrap_admin(store: &mut Store, admin: &AdminCredentials) {
    let hash = auth::hash_password(&admin.password);
    match store.content.logins.get(&admin.login) {
        Some(id) => {
            let account = store.content.accounts.get_mut(id).expect("login target exists");
            if account.role == Role::Admin {
                account.credential_hash = Some(hash);
            }
        }
        None => {
            let id = store.content.add_account(|id| Account {
                account_id: id,
                role: Role::Admin,
                display_name: admin.login.clone(),
                profile: ProfileCard::default(),
                credential_hash: Some(hash),
            });
            store.content.logins.insert(admin.login.clone(), id);
        }
    }
}

/// Closes sessions idle past the limit at their last request; returns how many.
fn expire_idle(store: &mut Store, now: Timestamp) -> usize {
    let stale: Vec<String> = store
        .tokens
        .iter()
        .filter(|(_, t)| now - t.last_seen > SESSION_IDLE_LIMIT)
        .map(|(k, _)| k.clone())
        .collect();
    for key in &stale {
        let state = store.tokens.remove(key).expect("listed");
        let _ = store
            .content
            .telemetry
            .close_session(state.session_id, state.last_seen);
    }
    stale.len()
}

fn authenticate(store: &mut Store, token: &str, now: Timestamp) -> Result<Principal> {
    let expired = || PlatformError::Unauthorized("missing or expired token".into());
    let state = store.tokens.get(token).ok_or_else(expired)?;
    if now - state.last_seen > SESSION_IDLE_LIMIT {
        let state = store.tokens.remove(token).expect("present");
        let _ = store
            .content
            .telemetry
            .close_session(state.session_id, state.last_seen);
        return Err(expired());
    }
    let state = store.tokens.get_mut(token).expect("present");
    state.last_seen = state.last_seen.max(now);
    let role = store.content.accounts[&state.account_id].role;
    Ok(Principal {
        account_id: state.account_id,
        role,
        session_id: state.session_id,
    })
}

fn participant(store: &mut Store, token: &str, now: Timestamp) -> Result<(Principal, ExperimentId)> {
    let who = authenticate(store, token, now)?;
    if who.role != Role::Participant {
        return Err(PlatformError::Forbidden("participant endpoint".into()));
    }
    let exp = *store
        .content
        .membership
        .get(&who.account_id)
        .ok_or_else(|| PlatformError::Forbidden("account is not enrolled in an experiment".into()))?;
    Ok((who, exp))
}

fn admin(store: &mut Store, token: &str, now: Timestamp) -> Result<Principal> {
    let who = authenticate(store, token, now)?;
    if who.role != Role::Admin {
        return Err(PlatformError::Forbidden("admin endpoint".into()));
    }
    Ok(who)
}

fn require_experiment(store: &Store, id: ExperimentId) -> Result<&ExperimentRecord> {
    store
        .experiments
        .get(&id)
        .ok_or_else(|| PlatformError::NotFound(format!("experiment {id}")))
}

/// The viewer's feed, restricted to posts of the viewer's own experiment.
fn feed_posts(store: &Store, exp_id: ExperimentId, viewer: AccountId) -> Result<Vec<&Post>> {
    let record = &store.experiments[&exp_id];
    let members = record.members();
    visible_posts(
        viewer,
        &record.flags,
        &store.content.friends,
        &members,
        store
            .content
            .posts
            .values()
            .filter(|p| members.contains(&p.author_id)),
    )
    .map_err(|e| PlatformError::NotFound(e.to_string()))
}

fn visible_post(store: &Store, exp_id: ExperimentId, viewer: AccountId, post_id: PostId) -> Result<Post> {
    feed_posts(store, exp_id, viewer)?
        .into_iter()
        .find(|p| p.post_id == post_id)
        .cloned()
        .ok_or_else(|| PlatformError::NotFound(format!("post {post_id}")))
}

fn summary(store: &Store, id: ExperimentId) -> ExperimentSummary {
    let record = &store.experiments[&id];
    let members = record.members();
    let exp = &record.experiment;
    ExperimentSummary {
        experiment_id: id,
        participant_id: exp.participant_id,
        participant_login: record.participant_login.clone(),
        bot_ids: exp.bot_ids.clone(),
        condition: exp.condition(),
        state: exp.state(),
        start_instant: exp.start_instant,
        end_instant: exp.end_instant(),
        day_count: exp.day_count,
        flags: record.flags,
        accounts: members.len(),
        friend_edges: store
            .content
            .friends
            .edges()
            .filter(|e| members.contains(&e.a) && members.contains(&e.b))
            .count(),
        scheduled_events: record.scheduler.events().len(),
        pending_events: record.scheduler.pending().count(),
        validation: record.validation.clone(),
    }
}

fn build_export(store: &Store, id: ExperimentId, options: ExportOptions) -> ExportBundle {
    let record = &store.experiments[&id];
    let exp = &record.experiment;
    let members = record.members();
    let content = &store.content;
    let opt_ts = |t: Option<Timestamp>| t.map(fmt_ts).unwrap_or_default();

    let mut experiment = ExportTable::new("experiment");
    experiment.push(vec![
        id.0.to_string(),
        exp.participant_id.0.to_string(),
        exp.condition().as_str().to_owned(),
        fmt_ts(exp.start_instant),
        exp.day_count.to_string(),
    ]);

    let mut posts = ExportTable::new("posts");
    let post_ids: BTreeSet<PostId> = content
        .posts
        .values()
        .filter(|p| members.contains(&p.author_id))
        .map(|p| {
            posts.push(vec![
                p.post_id.0.to_string(),
                p.author_id.0.to_string(),
                p.origin.as_str().to_owned(),
                fmt_ts(p.created_at),
                p.body.clone(),
            ]);
            p.post_id
        })
        .collect();

    let mut reactions = ExportTable::new("reactions");
    for r in content.reactions.iter().filter(|r| post_ids.contains(&r.post_id)) {
        reactions.push(vec![
            r.reaction_id.0.to_string(),
            r.actor_id.0.to_string(),
            r.post_id.0.to_string(),
            r.kind.as_str().to_owned(),
            fmt_ts(r.created_at),
        ]);
    }

    let mut profiles = ExportTable::new("profiles");
    for account in members.iter().map(|m| &content.accounts[m]) {
        let p = &account.profile;
        profiles.push(vec![
            account.account_id.0.to_string(),
            account.role.as_str().to_owned(),
            if options.include_display_names {
                account.display_name.clone()
            } else {
                String::new()
            },
            p.gender.clone().unwrap_or_default(),
            p.age.map(|a| a.to_string()).unwrap_or_default(),
            p.nationality.clone().unwrap_or_default(),
            p.interests.join(";"),
            p.bio.clone().unwrap_or_default(),
        ]);
    }

    let mut sessions = ExportTable::new("sessions");
    let mut session_ids = BTreeSet::new();
    for s in content
        .telemetry
        .sessions()
        .iter()
        .filter(|s| members.contains(&s.account_id))
    {
        session_ids.insert(s.session_id);
        sessions.push(vec![
            s.session_id.0.to_string(),
            s.account_id.0.to_string(),
            fmt_ts(s.started_at),
            opt_ts(s.ended_at),
        ]);
    }

    let mut views = ExportTable::new("views");
    for v in content
        .telemetry
        .views()
        .iter()
        .filter(|v| session_ids.contains(&v.session_id))
    {
        views.push(vec![
            v.session_id.0.to_string(),
            v.post_id.0.to_string(),
            v.duration_ms.to_string(),
            fmt_ts(v.recorded_at),
        ]);
    }

    let mut ad_clicks = ExportTable::new("ad_clicks");
    for c in content
        .telemetry
        .ad_clicks()
        .iter()
        .filter(|c| session_ids.contains(&c.session_id))
    {
        ad_clicks.push(vec![
            c.session_id.0.to_string(),
            c.ad_id.0.to_string(),
            fmt_ts(c.clicked_at),
        ]);
    }

    let mut friend_edges = ExportTable::new("friend_edges");
    for e in content
        .friends
        .edges()
        .filter(|e| members.contains(&e.a) && members.contains(&e.b))
    {
        friend_edges.push(vec![e.a.0.to_string(), e.b.0.to_string()]);
    }

    let mut surveys = ExportTable::new("survey_responses");
    for s in content.surveys.iter().filter(|s| members.contains(&s.account_id)) {
        for (key, value) in &s.answers {
            surveys.push(vec![
                s.account_id.0.to_string(),
                s.phase.as_str().to_owned(),
                key.clone(),
                value.to_string(),
            ]);
        }
    }

    ExportBundle {
        experiment_id: id,
        tables: vec![
            experiment,
            posts,
            reactions,
            profiles,
            sessions,
            views,
            ad_clicks,
            friend_edges,
            surveys,
        ],
    }
}
