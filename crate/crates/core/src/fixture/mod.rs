//! CSV fixtures describing a bot roster, its planned posts and planned likes.
//!
//! Four comma-separated, UTF-8 files with RFC 4180 quoting make up a fixture:
//!
//! | file     | header                                                            |
//! |----------|-------------------------------------------------------------------|
//! | bots     | `bot_index,display_name,gender,age,nationality,interests,bio`     |
//! | posts    | `plan_id,bot_index,day_offset,time_offset,body`                   |
//! | likes    | `plan_id,actor_bot_index,target_kind,target_ref,delay_seconds`    |
//! | ads      | `title,body,image_ref` (optional)                                 |
//!
//! Post times are relative to the participant's start (`day_offset` days plus
//! an `HH:MM:SS` offset into that day). Like times are relative to the
//! creation of the liked post. Likes on participant posts reference the
//! study day, since participant post ids do not exist before the study runs.

mod parse;
mod validate;
mod write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ProfileCard;

pub use parse::{parse_ads, parse_bots, parse_planned_likes, parse_planned_posts};
pub use validate::{
    validate_fixture, validate_fixture_with, ValidatedFixture, ValidationOptions, ValidationReport,
    ValidationStatus, MAX_LIKES_PER_BOT_POST,
};
pub use write::{write_ads, write_bots, write_planned_likes, write_planned_posts};

pub const BOTS_HEADER: [&str; 7] = [
    "bot_index",
    "display_name",
    "gender",
    "age",
    "nationality",
    "interests",
    "bio",
];
pub const POSTS_HEADER: [&str; 5] = ["plan_id", "bot_index", "day_offset", "time_offset", "body"];
pub const LIKES_HEADER: [&str; 5] = [
    "plan_id",
    "actor_bot_index",
    "target_kind",
    "target_ref",
    "delay_seconds",
];
pub const ADS_HEADER: [&str; 3] = ["title", "body", "image_ref"];

pub const SECONDS_PER_DAY: u32 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotProfile {
    /// 1-based roster position.
    pub bot_index: u8,
    pub display_name: String,
    pub profile: ProfileCard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedPost {
    pub plan_id: String,
    pub bot_index: u8,
    pub day_offset: u32,
    /// Seconds into the day, `0..86400`.
    pub time_offset: u32,
    pub body: String,
}

impl PlannedPost {
    /// Offset from the experiment start in seconds.
    pub fn offset_seconds(&self) -> i64 {
        self.day_offset as i64 * SECONDS_PER_DAY as i64 + self.time_offset as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LikeTarget {
    BotPost {
        plan_id: String,
    },
    /// The participant's post on study day `day` (1-based).
    ParticipantPost {
        day: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedLike {
    pub plan_id: String,
    pub actor_bot_index: u8,
    pub target: LikeTarget,
    pub delay_seconds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedAd {
    pub title: String,
    pub body: String,
    pub image_ref: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureBundle {
    pub bots: Vec<BotProfile>,
    pub planned_posts: Vec<PlannedPost>,
    pub planned_likes: Vec<PlannedLike>,
    pub ads: Vec<PlannedAd>,
}

/// Raw CSV text of a fixture, as uploaded through the admin panel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureFiles {
    pub bots_csv: String,
    pub posts_csv: String,
    pub likes_csv: String,
    #[serde(default)]
    pub ads_csv: Option<String>,
}

impl FixtureFiles {
    pub fn parse(&self) -> Result<FixtureBundle, FixtureError> {
        Ok(FixtureBundle {
            bots: parse_bots(self.bots_csv.as_bytes())?,
            planned_posts: parse_planned_posts(self.posts_csv.as_bytes())?,
            planned_likes: parse_planned_likes(self.likes_csv.as_bytes())?,
            ads: match &self.ads_csv {
                Some(csv) => parse_ads(csv.as_bytes())?,
                None => Vec::new(),
            },
        })
    }

    /// The ship-with study fixture.
    pub fn study_default() -> Self {
        Self {
            bots_csv: include_str!("../../fixtures/bots.csv").to_owned(),
            posts_csv: include_str!("../../fixtures/planned_posts.csv").to_owned(),
            likes_csv: include_str!("../../fixtures/planned_likes.csv").to_owned(),
            ads_csv: Some(include_str!("../../fixtures/ads.csv").to_owned()),
        }
    }
}

impl FixtureBundle {
    /// Six bot profiles, 30 posts and 77 bot-to-bot likes giving per-bot
    /// like sums of 24, 12, 2, 24, 12 and 3, plus a perfume and a travel ad.
    pub fn study_default() -> Self {
        FixtureFiles::study_default()
            .parse()
            .expect("bundled fixture parses")
    }

    pub fn planned_post(&self, plan_id: &str) -> Option<&PlannedPost> {
        self.planned_posts.iter().find(|p| p.plan_id == plan_id)
    }

    pub fn bot(&self, bot_index: u8) -> Option<&BotProfile> {
        self.bots.iter().find(|b| b.bot_index == bot_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureFile {
    Bots,
    Posts,
    Likes,
    Ads,
}

impl std::fmt::Display for FixtureFile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FixtureFile::Bots => "bots",
            FixtureFile::Posts => "planned posts",
            FixtureFile::Likes => "planned likes",
            FixtureFile::Ads => "ads",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum FixtureError {
    #[error("{file}: malformed CSV{}: {message}", fmt_row(*row))]
    Csv {
        file: FixtureFile,
        row: Option<u64>,
        message: String,
    },
    #[error("{file}: header mismatch (missing: [{}], unexpected: [{}]; expected `{}`)", missing.join(", "), unexpected.join(", "), expected.join(","))]
    Schema {
        file: FixtureFile,
        expected: Vec<String>,
        found: Vec<String>,
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("{file}: row {row}, column {column}: {reason} (value `{value}`)")]
    Field {
        file: FixtureFile,
        row: u64,
        column: String,
        value: String,
        reason: String,
    },
    #[error("{file}: row {row}: duplicate key `{key}`")]
    Duplicate {
        file: FixtureFile,
        row: u64,
        key: String,
    },
}

fn fmt_row(row: Option<u64>) -> String {
    row.map(|r| format!(" at row {r}")).unwrap_or_default()
}

impl FixtureError {
    /// 1-based row (header is row 1), when the error is tied to one.
    pub fn row(&self) -> Option<u64> {
        match self {
            FixtureError::Csv { row, .. } => *row,
            FixtureError::Schema { .. } => Some(1),
            FixtureError::Field { row, .. } | FixtureError::Duplicate { row, .. } => Some(*row),
        }
    }
}
