use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AccountId, ModelError, Post, PostId, Reaction, ReactionKind};

/// Like/dislike/flag ledger with at most one reaction per (actor, post, kind).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReactionLedger {
    #[serde(with = "entries")]
    entries: BTreeMap<(PostId, ReactionKind, AccountId), Reaction>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionCounts {
    pub likes: usize,
    pub dislikes: usize,
    pub flags: usize,
}

impl ReactionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `reaction`, rejecting duplicates and reactions on the actor's own post.
    pub fn insert(&mut self, reaction: Reaction, post_author: AccountId) -> Result<(), ModelError> {
        if reaction.actor_id == post_author {
            return Err(ModelError::SelfReaction(reaction.actor_id));
        }
        let key = (reaction.post_id, reaction.kind, reaction.actor_id);
        if self.entries.contains_key(&key) {
            return Err(ModelError::DuplicateReaction {
                actor: reaction.actor_id,
                post: reaction.post_id,
                kind: reaction.kind,
            });
        }
        self.entries.insert(key, reaction);
        Ok(())
    }

    pub fn remove(&mut self, actor: AccountId, post: PostId, kind: ReactionKind) -> Option<Reaction> {
        self.entries.remove(&(post, kind, actor))
    }

    pub fn contains(&self, actor: AccountId, post: PostId, kind: ReactionKind) -> bool {
        self.entries.contains_key(&(post, kind, actor))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn on_post(&self, post: PostId, kind: ReactionKind) -> impl Iterator<Item = &Reaction> {
        let lo = (post, kind, AccountId(u64::MIN));
        let hi = (post, kind, AccountId(u64::MAX));
        self.entries.range(lo..=hi).map(|(_, r)| r)
    }

    /// Accounts that currently like `post`, ordered by account id.
    pub fn likers(&self, post: PostId) -> Vec<AccountId> {
        self.on_post(post, ReactionKind::Like)
            .map(|r| r.actor_id)
            .collect()
    }

    pub fn counts(&self, post: PostId) -> ReactionCounts {
        ReactionCounts {
            likes: self.on_post(post, ReactionKind::Like).count(),
            dislikes: self.on_post(post, ReactionKind::Dislike).count(),
            flags: self.on_post(post, ReactionKind::Flag).count(),
        }
    }

    /// All reactions ordered by reaction id (creation order).
    pub fn iter(&self) -> impl Iterator<Item = &Reaction> {
        let mut all: Vec<&Reaction> = self.entries.values().collect();
        all.sort_by_key(|r| r.reaction_id);
        all.into_iter()
    }

    pub fn by_actor(&self, actor: AccountId) -> impl Iterator<Item = &Reaction> {
        self.iter().filter(move |r| r.actor_id == actor)
    }
}

/// Distinct actors with a LIKE on `post_id`.
pub fn like_count(
    post_id: PostId,
    posts: &BTreeMap<PostId, Post>,
    ledger: &ReactionLedger,
) -> Result<usize, ModelError> {
    if !posts.contains_key(&post_id) {
        return Err(ModelError::UnknownPost(post_id));
    }
    Ok(ledger.on_post(post_id, ReactionKind::Like).count())
}

// Tuple keys do not survive JSON maps, so the ledger persists as a plain list.
mod entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    type Keyed = BTreeMap<(PostId, ReactionKind, AccountId), Reaction>;

    pub fn serialize<S: Serializer>(map: &Keyed, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Keyed, D::Error> {
        let list = Vec::<Reaction>::deserialize(d)?;
        Ok(list
            .into_iter()
            .map(|r| ((r.post_id, r.kind, r.actor_id), r))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PostOrigin, ReactionId};
    use chrono::Utc;
    use proptest::prelude::*;

    fn post(id: u64, author: u64) -> Post {
        Post {
            post_id: PostId(id),
            author_id: AccountId(author),
            body: "hello".into(),
            created_at: Utc::now(),
            origin: PostOrigin::BotPlanned,
        }
    }

    fn reaction(id: u64, actor: u64, post: u64, kind: ReactionKind) -> Reaction {
        Reaction {
            reaction_id: ReactionId(id),
            actor_id: AccountId(actor),
            post_id: PostId(post),
            kind,
            created_at: Utc::now(),
        }
    }

    fn posts(list: &[Post]) -> BTreeMap<PostId, Post> {
        list.iter().map(|p| (p.post_id, p.clone())).collect()
    }

    #[test]
    fn empty_ledger_counts_zero() {
        let posts = posts(&[post(1, 100)]);
        assert_eq!(like_count(PostId(1), &posts, &ReactionLedger::new()), Ok(0));
    }

    #[test]
    fn five_bot_likes() {
        let posts = posts(&[post(1, 100)]);
        let mut ledger = ReactionLedger::new();
        for actor in 1..=5 {
            ledger
                .insert(reaction(actor, actor, 1, ReactionKind::Like), AccountId(100))
                .unwrap();
        }
        assert_eq!(like_count(PostId(1), &posts, &ledger), Ok(5));
    }

    #[test]
    fn only_likes_are_counted() {
        let posts = posts(&[post(1, 100)]);
        let mut ledger = ReactionLedger::new();
        ledger
            .insert(reaction(1, 1, 1, ReactionKind::Like), AccountId(100))
            .unwrap();
        ledger
            .insert(reaction(2, 2, 1, ReactionKind::Dislike), AccountId(100))
            .unwrap();
        ledger
            .insert(reaction(3, 3, 1, ReactionKind::Flag), AccountId(100))
            .unwrap();
        assert_eq!(like_count(PostId(1), &posts, &ledger), Ok(1));
        assert_eq!(
            ledger.counts(PostId(1)),
            ReactionCounts {
                likes: 1,
                dislikes: 1,
                flags: 1
            }
        );
    }

    #[test]
    fn unknown_post_is_not_found() {
        assert_eq!(
            like_count(PostId(9), &BTreeMap::new(), &ReactionLedger::new()),
            Err(ModelError::UnknownPost(PostId(9)))
        );
    }

    #[test]
    fn duplicate_and_self_reactions_rejected() {
        let mut ledger = ReactionLedger::new();
        ledger
            .insert(reaction(1, 1, 1, ReactionKind::Like), AccountId(100))
            .unwrap();
        assert!(matches!(
            ledger.insert(reaction(2, 1, 1, ReactionKind::Like), AccountId(100)),
            Err(ModelError::DuplicateReaction { .. })
        ));
        assert_eq!(
            ledger.insert(reaction(3, 100, 1, ReactionKind::Like), AccountId(100)),
            Err(ModelError::SelfReaction(AccountId(100)))
        );
        // a different kind from the same actor is a distinct reaction
        ledger
            .insert(reaction(4, 1, 1, ReactionKind::Flag), AccountId(100))
            .unwrap();
        assert_eq!(ledger.len(), 2);
    }

    #[test]
    fn retracted_like_no_longer_counts() {
        let mut ledger = ReactionLedger::new();
        ledger
            .insert(reaction(1, 1, 1, ReactionKind::Like), AccountId(100))
            .unwrap();
        assert!(ledger
            .remove(AccountId(1), PostId(1), ReactionKind::Like)
            .is_some());
        assert!(ledger.likers(PostId(1)).is_empty());
        assert!(ledger
            .remove(AccountId(1), PostId(1), ReactionKind::Like)
            .is_none());
    }

    #[test]
    fn ledger_roundtrips_through_json() {
        let mut ledger = ReactionLedger::new();
        ledger
            .insert(reaction(1, 1, 1, ReactionKind::Like), AccountId(100))
            .unwrap();
        ledger
            .insert(reaction(2, 2, 1, ReactionKind::Flag), AccountId(100))
            .unwrap();
        let json = serde_json::to_string(&ledger).unwrap();
        let back: ReactionLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(
            back.iter().cloned().collect::<Vec<_>>(),
            ledger.iter().cloned().collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn counts_match_raw_ledger(ops in prop::collection::vec((0u64..5, 0u64..4, 0usize..3), 0..80)) {
            let post_list: Vec<Post> = (0..4).map(|i| post(i, 1000 + i)).collect();
            let posts = posts(&post_list);
            let mut ledger = ReactionLedger::new();
            let mut raw: Vec<(u64, u64, ReactionKind)> = Vec::new();
            for (i, (actor, p, k)) in ops.into_iter().enumerate() {
                let kind = ReactionKind::ALL[k];
                let inserted = ledger
                    .insert(reaction(i as u64, actor, p, kind), AccountId(1000 + p))
                    .is_ok();
                let fresh = !raw.contains(&(actor, p, kind));
                prop_assert_eq!(inserted, fresh);
                if fresh {
                    raw.push((actor, p, kind));
                }
            }
            prop_assert!(ledger.len() <= 5 * 4 * 3);
            for p in 0..4 {
                let brute = raw.iter().filter(|(_, q, k)| *q == p && *k == ReactionKind::Like).count();
                prop_assert_eq!(like_count(PostId(p), &posts, &ledger).unwrap(), brute);
            }
        }
    }
}
