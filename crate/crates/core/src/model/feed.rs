use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AccountId, FeatureFlags, FriendEdge, ModelError, Post};

/// Symmetric friendship relation without self edges.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FriendGraph {
    edges: BTreeSet<FriendEdge>,
}

impl FriendGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` if the edge already existed.
    pub fn befriend(&mut self, x: AccountId, y: AccountId) -> Result<bool, ModelError> {
        Ok(self.edges.insert(FriendEdge::new(x, y)?))
    }

    pub fn are_friends(&self, x: AccountId, y: AccountId) -> bool {
        FriendEdge::new(x, y).is_ok_and(|e| self.edges.contains(&e))
    }

    pub fn friends_of(&self, who: AccountId) -> BTreeSet<AccountId> {
        self.edges
            .iter()
            .filter_map(|e| match (e.a == who, e.b == who) {
                (true, _) => Some(e.b),
                (_, true) => Some(e.a),
                _ => None,
            })
            .collect()
    }

    /// Befriends every pair in `members`.
    pub fn connect_all(&mut self, members: &[AccountId]) -> Result<usize, ModelError> {
        let mut added = 0;
        for (i, &x) in members.iter().enumerate() {
            for &y in &members[i + 1..] {
                added += usize::from(self.befriend(x, y)?);
            }
        }
        Ok(added)
    }

    pub fn edges(&self) -> impl Iterator<Item = &FriendEdge> {
        self.edges.iter()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Posts `viewer` may see, newest first with ties broken by descending post id.
///
/// `accounts` is the set of known accounts used to reject unknown viewers.
pub fn visible_posts<'a>(
    viewer: AccountId,
    flags: &FeatureFlags,
    friends: &FriendGraph,
    accounts: &BTreeSet<AccountId>,
    posts: impl IntoIterator<Item = &'a Post>,
) -> Result<Vec<&'a Post>, ModelError> {
    if !accounts.contains(&viewer) {
        return Err(ModelError::UnknownAccount(viewer));
    }
    let mut out: Vec<&Post> = if flags.friends_only_feed {
        let circle = friends.friends_of(viewer);
        posts
            .into_iter()
            .filter(|p| p.author_id == viewer || circle.contains(&p.author_id))
            .collect()
    } else {
        posts.into_iter().collect()
    };
    out.sort_by(|x, y| {
        y.created_at
            .cmp(&x.created_at)
            .then_with(|| y.post_id.cmp(&x.post_id))
    });
    Ok(out)
}
