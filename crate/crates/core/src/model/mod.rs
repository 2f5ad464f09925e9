//! Core entities shared by every other module.

mod feed;
mod reactions;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Timestamp;

pub use feed::{visible_posts, FriendGraph};
pub use reactions::{like_count, ReactionCounts, ReactionLedger};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = std::num::ParseIntError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                s.strip_prefix($prefix).unwrap_or(s).parse().map($name)
            }
        }
    };
}

id_newtype!(
    /// Pseudonymous account identifier; the only key participant data is stored under.
    AccountId,
    "acc-"
);
id_newtype!(PostId, "post-");
id_newtype!(ReactionId, "rx-");
id_newtype!(AdId, "ad-");
id_newtype!(ExperimentId, "exp-");
id_newtype!(SessionId, "ses-");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown post {0}")]
    UnknownPost(PostId),
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("{actor} already has a {kind} reaction on {post}")]
    DuplicateReaction {
        actor: AccountId,
        post: PostId,
        kind: ReactionKind,
    },
    #[error("{0} cannot react to their own post")]
    SelfReaction(AccountId),
    #[error("self friendship is not allowed for {0}")]
    SelfEdge(AccountId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Participant,
    Bot,
    Admin,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Participant => "PARTICIPANT",
            Role::Bot => "BOT",
            Role::Admin => "ADMIN",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCard {
    pub gender: Option<String>,
    pub age: Option<u32>,
    pub nationality: Option<String>,
    #[serde(default)]
    pub interests: Vec<String>,
    pub bio: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub account_id: AccountId,
    pub role: Role,
    pub display_name: String,
    pub profile: ProfileCard,
    /// Salted password hash; `None` for bots, which never authenticate.
    pub credential_hash: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    ManyLikes,
    FewLikes,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::ManyLikes => "MANY_LIKES",
            Condition::FewLikes => "FEW_LIKES",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MANY_LIKES" => Ok(Condition::ManyLikes),
            "FEW_LIKES" => Ok(Condition::FewLikes),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExperimentState {
    Created,
    Running,
    Finished,
}

pub const BOTS_PER_EXPERIMENT: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiment {
    pub experiment_id: ExperimentId,
    pub participant_id: AccountId,
    /// Roster order matters: position `i` holds the bot with fixture index `i + 1`.
    pub bot_ids: Vec<AccountId>,
    condition: Condition,
    /// Planned start while `Created`, actual start once `Running`.
    pub start_instant: Timestamp,
    pub day_count: u32,
    pub wrapup_day: u32,
    state: ExperimentState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExperimentError {
    #[error("an experiment needs exactly {BOTS_PER_EXPERIMENT} bots, got {0}")]
    RosterSize(usize),
    #[error("condition cannot change once the experiment is running")]
    ConditionLocked,
    #[error("invalid state transition from {from:?} to {to:?}")]
    Transition {
        from: ExperimentState,
        to: ExperimentState,
    },
}

impl Experiment {
    pub const DEFAULT_DAY_COUNT: u32 = 5;
    pub const DEFAULT_WRAPUP_DAY: u32 = 6;

    pub fn new(
        experiment_id: ExperimentId,
        participant_id: AccountId,
        bot_ids: Vec<AccountId>,
        condition: Condition,
        start_instant: Timestamp,
    ) -> Result<Self, ExperimentError> {
        if bot_ids.len() != BOTS_PER_EXPERIMENT {
            return Err(ExperimentError::RosterSize(bot_ids.len()));
        }
        Ok(Self {
            experiment_id,
            participant_id,
            bot_ids,
            condition,
            start_instant,
            day_count: Self::DEFAULT_DAY_COUNT,
            wrapup_day: Self::DEFAULT_WRAPUP_DAY,
            state: ExperimentState::Created,
        })
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn state(&self) -> ExperimentState {
        self.state
    }

    pub fn set_condition(&mut self, condition: Condition) -> Result<(), ExperimentError> {
        if self.state != ExperimentState::Created {
            return Err(ExperimentError::ConditionLocked);
        }
        self.condition = condition;
        Ok(())
    }

    pub fn start(&mut self, at: Timestamp) -> Result<(), ExperimentError> {
        if self.state != ExperimentState::Created {
            return Err(ExperimentError::Transition {
                from: self.state,
                to: ExperimentState::Running,
            });
        }
        self.start_instant = at;
        self.state = ExperimentState::Running;
        Ok(())
    }

    pub fn finish(&mut self) -> Result<(), ExperimentError> {
        if self.state != ExperimentState::Running {
            return Err(ExperimentError::Transition {
                from: self.state,
                to: ExperimentState::Finished,
            });
        }
        self.state = ExperimentState::Finished;
        Ok(())
    }

    /// Bot account for a 1-based fixture index.
    pub fn bot(&self, bot_index: u8) -> Option<AccountId> {
        (bot_index as usize)
            .checked_sub(1)
            .and_then(|i| self.bot_ids.get(i))
            .copied()
    }

    pub fn members(&self) -> impl Iterator<Item = AccountId> + '_ {
        std::iter::once(self.participant_id).chain(self.bot_ids.iter().copied())
    }

    /// End of the last study day including the wrap-up day.
    pub fn end_instant(&self) -> Timestamp {
        self.start_instant + chrono::Duration::days(self.wrapup_day as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PostOrigin {
    Participant,
    BotPlanned,
}

impl PostOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            PostOrigin::Participant => "PARTICIPANT",
            PostOrigin::BotPlanned => "BOT_PLANNED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: PostId,
    pub author_id: AccountId,
    pub body: String,
    pub created_at: Timestamp,
    pub origin: PostOrigin,
}

impl Post {
    /// Length in Unicode scalar values, the unit the 600-character task rule counts.
    pub fn char_count(&self) -> usize {
        self.body.chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReactionKind {
    Like,
    Dislike,
    Flag,
}

impl ReactionKind {
    pub const ALL: [ReactionKind; 3] = [ReactionKind::Like, ReactionKind::Dislike, ReactionKind::Flag];

    pub fn as_str(self) -> &'static str {
        match self {
            ReactionKind::Like => "LIKE",
            ReactionKind::Dislike => "DISLIKE",
            ReactionKind::Flag => "FLAG",
        }
    }
}

impl fmt::Display for ReactionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reaction {
    pub reaction_id: ReactionId,
    pub actor_id: AccountId,
    pub post_id: PostId,
    pub kind: ReactionKind,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advertisement {
    pub ad_id: AdId,
    pub title: String,
    pub body: String,
    pub image_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FriendEdge {
    pub a: AccountId,
    pub b: AccountId,
}

impl FriendEdge {
    /// Canonical form with `a < b`; rejects self edges.
    pub fn new(x: AccountId, y: AccountId) -> Result<Self, ModelError> {
        if x == y {
            return Err(ModelError::SelfEdge(x));
        }
        Ok(if x < y {
            Self { a: x, b: y }
        } else {
            Self { a: y, b: x }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub chat_enabled: bool,
    pub comments_enabled: bool,
    pub friend_requests_enabled: bool,
    pub friends_only_feed: bool,
    /// When false only like counts are shown to participants.
    #[serde(default)]
    pub show_negative_reactions: bool,
}

impl FeatureFlags {
    pub const fn study_default() -> Self {
        Self {
            chat_enabled: false,
            comments_enabled: false,
            friend_requests_enabled: false,
            friends_only_feed: true,
            show_negative_reactions: false,
        }
    }
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self::study_default()
    }
}
