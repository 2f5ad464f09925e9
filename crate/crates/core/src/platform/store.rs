use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;
use crate::fixture::ValidationReport;
use crate::measures::SurveyPhase;
use crate::model::{
    Account, AccountId, AdId, Advertisement, Experiment, ExperimentId, FeatureFlags, FriendGraph, Post,
    PostId, PostOrigin, Reaction, ReactionId, ReactionKind, ReactionLedger, SessionId,
};
use crate::orchestrator::{ActionSink, Scheduler};
use crate::telemetry::TelemetryLog;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub account_id: AccountId,
    pub phase: SurveyPhase,
    pub answers: BTreeMap<String, i32>,
    pub submitted_at: Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct TokenState {
    pub account_id: AccountId,
    pub session_id: SessionId,
    pub last_seen: Timestamp,
}

/// Entities shared by every experiment on the deployment.
#[derive(Debug, Default, Serialize, Deserialize)]
pub(crate) struct Content {
    pub accounts: BTreeMap<AccountId, Account>,
    pub logins: BTreeMap<String, AccountId>,
    pub posts: BTreeMap<PostId, Post>,
    pub reactions: ReactionLedger,
    pub friends: FriendGraph,
    pub ads: BTreeMap<AdId, Advertisement>,
    pub telemetry: TelemetryLog,
    pub surveys: Vec<SurveyRecord>,
    /// Experiment each participant and bot belongs to.
    pub membership: BTreeMap<AccountId, ExperimentId>,
    pub next_account: u64,
    pub next_post: u64,
    pub next_reaction: u64,
    pub next_ad: u64,
    pub next_experiment: u64,
}

impl Content {
    pub fn add_account(&mut self, account: impl FnOnce(AccountId) -> Account) -> AccountId {
        self.next_account += 1;
        let id = AccountId(self.next_account);
        self.accounts.insert(id, account(id));
        id
    }

    pub fn add_post(&mut self, author: AccountId, body: &str, at: Timestamp, origin: PostOrigin) -> Post {
        self.next_post += 1;
        let post = Post {
            post_id: PostId(self.next_post),
            author_id: author,
            body: body.to_owned(),
            created_at: at,
            origin,
        };
        self.posts.insert(post.post_id, post.clone());
        post
    }

    /// Inserts a reaction; `Ok(false)` when the actor already holds it.
    pub fn add_reaction(
        &mut self,
        actor: AccountId,
        post_id: PostId,
        kind: ReactionKind,
        at: Timestamp,
    ) -> Result<bool, crate::model::ModelError> {
        let author = self
            .posts
            .get(&post_id)
            .ok_or(crate::model::ModelError::UnknownPost(post_id))?
            .author_id;
        if self.reactions.contains(actor, post_id, kind) {
            return Ok(false);
        }
        let reaction = Reaction {
            reaction_id: ReactionId(self.next_reaction + 1),
            actor_id: actor,
            post_id,
            kind,
            created_at: at,
        };
        self.reactions.insert(reaction, author)?;
        self.next_reaction += 1;
        Ok(true)
    }

    pub fn add_ad(&mut self, title: &str, body: &str, image_ref: &str) -> AdId {
        self.next_ad += 1;
        let ad_id = AdId(self.next_ad);
        self.ads.insert(
            ad_id,
            Advertisement {
                ad_id,
                title: title.to_owned(),
                body: body.to_owned(),
                image_ref: image_ref.to_owned(),
            },
        );
        ad_id
    }
}

impl ActionSink for Content {
    fn create_bot_post(&mut self, bot: AccountId, body: &str, at: Timestamp) -> Result<PostId, String> {
        if !self.accounts.contains_key(&bot) {
            return Err(format!("unknown bot account {bot}"));
        }
        Ok(self.add_post(bot, body, at, PostOrigin::BotPlanned).post_id)
    }

    fn apply_like(&mut self, actor: AccountId, post: PostId, at: Timestamp) -> Result<(), String> {
        match self.add_reaction(actor, post, ReactionKind::Like, at) {
            Ok(true) => Ok(()),
            Ok(false) => Err(format!("{actor} already likes {post}")),
            Err(e) => Err(e.to_string()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ExperimentRecord {
    pub experiment: Experiment,
    pub participant_login: String,
    pub flags: FeatureFlags,
    pub scheduler: Scheduler,
    pub ad_ids: Vec<AdId>,
    pub validation: ValidationReport,
}

impl ExperimentRecord {
    pub fn members(&self) -> BTreeSet<AccountId> {
        self.experiment.members().collect()
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub(crate) struct Store {
    pub content: Content,
    pub experiments: BTreeMap<ExperimentId, ExperimentRecord>,
    pub tokens: BTreeMap<String, TokenState>,
}

impl Store {
    /// Runs the experiment's due bot actions against the shared content.
    pub fn run_due(&mut self, experiment_id: ExperimentId, now: Timestamp) -> usize {
        match self.experiments.get_mut(&experiment_id) {
            Some(record) => record
                .scheduler
                .tick(now, &record.experiment, &mut self.content)
                .len(),
            None => 0,
        }
    }
}

/// Versioned on-disk form of the whole store.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Snapshot {
    pub schema_version: u32,
    pub store: Store,
}

pub(crate) const SCHEMA_VERSION: u32 = 1;
