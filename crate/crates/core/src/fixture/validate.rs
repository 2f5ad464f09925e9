use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{FixtureBundle, LikeTarget};
use crate::model::{Condition, BOTS_PER_EXPERIMENT};
use crate::orchestrator::GrantPattern;

/// Upper bound on likes any single bot post may receive.
pub const MAX_LIKES_PER_BOT_POST: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationStatus {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: ValidationStatus,
    /// Likes each bot's planned posts will receive, indexed by `bot_index - 1`.
    pub bot_like_sums: Vec<u32>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.status == ValidationStatus::Pass
    }

    pub fn sorted_like_sums(&self) -> Vec<u32> {
        let mut sums = self.bot_like_sums.clone();
        sums.sort_unstable();
        sums
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationOptions {
    pub condition: Condition,
    pub day_count: u32,
    /// Treat a deviation from the study's like profile as an error rather than a warning.
    pub strict_profile: bool,
    pub grant_pattern: GrantPattern,
}

impl ValidationOptions {
    pub fn new(condition: Condition, day_count: u32) -> Self {
        Self {
            condition,
            day_count,
            strict_profile: false,
            grant_pattern: GrantPattern::default(),
        }
    }
}

/// Study like profile over the week: two low (2 or 3), two medium (12), two high (24).
fn matches_study_profile(sorted: &[u32]) -> bool {
    matches!(sorted, [a, b, 12, 12, 24, 24] if (2..=3).contains(a) && (2..=3).contains(b))
}

pub fn validate_fixture(bundle: &FixtureBundle, condition: Condition, day_count: u32) -> ValidationReport {
    validate_fixture_with(bundle, &ValidationOptions::new(condition, day_count))
}

pub fn validate_fixture_with(bundle: &FixtureBundle, opts: &ValidationOptions) -> ValidationReport {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();

    let mut indexes: Vec<u8> = bundle.bots.iter().map(|b| b.bot_index).collect();
    indexes.sort_unstable();
    let expected: Vec<u8> = (1..=BOTS_PER_EXPERIMENT as u8).collect();
    if indexes != expected {
        errors.push(format!(
            "roster must contain bots 1..={BOTS_PER_EXPERIMENT} exactly once, found {indexes:?}"
        ));
    }

    let mut posts_per_bot: BTreeMap<u8, usize> = BTreeMap::new();
    let mut author_of: HashMap<&str, u8> = HashMap::new();
    for post in &bundle.planned_posts {
        *posts_per_bot.entry(post.bot_index).or_default() += 1;
        author_of.insert(post.plan_id.as_str(), post.bot_index);
        if post.day_offset >= opts.day_count {
            errors.push(format!(
                "planned post {} has day_offset {} but the study lasts {} days",
                post.plan_id, post.day_offset, opts.day_count
            ));
        }
        if post.body.trim().is_empty() {
            errors.push(format!("planned post {} has an empty body", post.plan_id));
        }
    }
    for bot in 1..=BOTS_PER_EXPERIMENT as u8 {
        let n = posts_per_bot.get(&bot).copied().unwrap_or(0);
        if n != opts.day_count as usize {
            errors.push(format!(
                "bot {bot} has {n} planned posts, expected one per day ({})",
                opts.day_count
            ));
        }
    }

    let mut likes_per_post: BTreeMap<&str, usize> = BTreeMap::new();
    let mut participant_likes: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pairs: HashSet<(u8, &LikeTarget)> = HashSet::new();
    let mut bot_like_sums = vec![0u32; BOTS_PER_EXPERIMENT];
    for like in &bundle.planned_likes {
        if !pairs.insert((like.actor_bot_index, &like.target)) {
            errors.push(format!(
                "planned like {}: bot {} already likes this target",
                like.plan_id, like.actor_bot_index
            ));
        }
        match &like.target {
            LikeTarget::BotPost { plan_id } => match author_of.get(plan_id.as_str()) {
                None => errors.push(format!(
                    "planned like {} targets unknown planned post {plan_id}",
                    like.plan_id
                )),
                Some(&author) if author == like.actor_bot_index => errors.push(format!(
                    "planned like {}: bot {author} would like its own post {plan_id}",
                    like.plan_id
                )),
                Some(&author) => {
                    *likes_per_post.entry(plan_id.as_str()).or_default() += 1;
                    if let Some(sum) = bot_like_sums.get_mut(author as usize - 1) {
                        *sum += 1;
                    }
                }
            },
            LikeTarget::ParticipantPost { day } => {
                if *day == 0 || *day > opts.day_count {
                    errors.push(format!(
                        "planned like {} targets participant day {day} outside 1..={}",
                        like.plan_id, opts.day_count
                    ));
                } else {
                    *participant_likes.entry(*day).or_default() += 1;
                }
            }
        }
    }

    for (plan_id, n) in &likes_per_post {
        if *n > MAX_LIKES_PER_BOT_POST {
            warnings.push(format!(
                "planned post {plan_id} receives {n} likes, outside the zero to five likes per post range"
            ));
        }
    }

    let sorted = {
        let mut s = bot_like_sums.clone();
        s.sort_unstable();
        s
    };
    if !matches_study_profile(&sorted) {
        let msg =
            format!("bot like sums {sorted:?} differ from the study profile [2-3, 2-3, 12, 12, 24, 24]");
        if opts.strict_profile {
            errors.push(msg);
        } else {
            warnings.push(msg);
        }
    }

    // Participant likes are capped by the treatment protocol at runtime.
    for (day, n) in &participant_likes {
        let allowed = opts.grant_pattern.grant_for(opts.condition, *day as usize - 1);
        if *n as u32 > allowed {
            warnings.push(format!(
                "{n} planned likes on the participant's day-{day} post exceed the {} allowance of {allowed}; extras will be skipped",
                opts.condition
            ));
        }
    }

    ValidationReport {
        status: if errors.is_empty() {
            ValidationStatus::Pass
        } else {
            ValidationStatus::Fail
        },
        bot_like_sums,
        errors,
        warnings,
    }
}

/// A fixture that passed validation for a given day count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatedFixture {
    bundle: FixtureBundle,
    day_count: u32,
    report: ValidationReport,
}

impl ValidatedFixture {
    pub fn new(bundle: FixtureBundle, opts: &ValidationOptions) -> Result<Self, ValidationReport> {
        let report = validate_fixture_with(&bundle, opts);
        if !report.passed() {
            return Err(report);
        }
        Ok(Self {
            bundle,
            day_count: opts.day_count,
            report,
        })
    }

    pub fn bundle(&self) -> &FixtureBundle {
        &self.bundle
    }

    pub fn day_count(&self) -> u32 {
        self.day_count
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }
}
