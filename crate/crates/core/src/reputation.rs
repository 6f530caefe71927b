//! The trust engine: Beta reputations, direct updates, discounted second-hand
//! merging, bounded LRU trust caches, and two-phase trust queries.
//!
//! A reputation is the pair (alpha, beta) of successful and unsuccessful
//! transaction counts; the trust value is the expected value of the
//! Beta(alpha + 1, beta + 1) reputation, (alpha + 1) / (alpha + beta + 2).
//! Second-hand reports are folded in with the belief-discounting weight
//! `2*a_ik / ((b_ik + 2)(a_kj + b_kj + 2) + 2*a_ik)`, so reports from
//! recommenders the observer has never seen succeed carry no weight.

use smallvec::SmallVec;

use crate::overlay::{OverlayGraph, PeerId};

/// Peers at or above this trust value are treated as trustworthy.
pub const TRUST_THRESHOLD: f64 = 0.5;

/// Trust value of a peer nobody has any history with.
pub const NEUTRAL_TRUST: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReputationRecord {
    pub alpha: f64,
    pub beta: f64,
}

impl ReputationRecord {
    pub const NEUTRAL: ReputationRecord = ReputationRecord { alpha: 0.0, beta: 0.0 };

    pub fn new(alpha: f64, beta: f64) -> Self {
        debug_assert!(alpha >= 0.0 && beta >= 0.0);
        ReputationRecord { alpha, beta }
    }

    /// Expected value of the Beta(alpha + 1, beta + 1) reputation; always in
    /// the open interval (0, 1).
    #[inline]
    pub fn trust_value(&self) -> f64 {
        (self.alpha + 1.0) / (self.alpha + self.beta + 2.0)
    }

    #[inline]
    pub fn is_trustworthy(&self) -> bool {
        self.trust_value() >= TRUST_THRESHOLD
    }

    /// Fold in a directly observed transaction outcome. `rho` discounts the
    /// existing counts first (1.0 leaves history untouched), which is how
    /// recent observations outweigh old ones when enabled.
    pub fn record_outcome(&mut self, authentic: bool, rho: f64) {
        self.alpha *= rho;
        self.beta *= rho;
        if authentic {
            self.alpha += 1.0;
        } else {
            self.beta += 1.0;
        }
    }

    /// Merge a second-hand report about the subject, discounted by the
    /// observer's record of the recommender. `recommender` is R_ik (observer's
    /// view of the recommender), `report` is R_kj (the recommender's view of
    /// the subject).
    pub fn merge_indirect(&self, recommender: ReputationRecord, report: ReputationRecord) -> ReputationRecord {
        let denom = (recommender.beta + 2.0) * (report.alpha + report.beta + 2.0)
            + 2.0 * recommender.alpha;
        let weight = 2.0 * recommender.alpha / denom;
        ReputationRecord {
            alpha: self.alpha + weight * report.alpha,
            beta: self.beta + weight * report.beta,
        }
    }
}

impl Default for ReputationRecord {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

/// One peer's knowledge about one subject. `direct` counts the observer's
/// own transactions and is the only part ever shared as a recommendation;
/// `belief` additionally folds in discounted second-hand reports and drives
/// all local trust decisions. Sharing beliefs instead of transactions would
/// let merged rumours circulate as evidence.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrustEntry {
    pub direct: ReputationRecord,
    pub belief: ReputationRecord,
}

impl TrustEntry {
    /// Whether the observer has first-hand history worth recommending.
    pub fn has_transactions(&self) -> bool {
        self.direct.alpha + self.direct.beta > 0.0
    }
}

/// Bounded per-peer reputation memory: the 32 most recently updated subjects,
/// most recent first. Reads do not reorder; writes move to the front and the
/// least recently written entry is evicted past capacity.
#[derive(Clone, Debug, Default)]
pub struct TrustCache {
    entries: Vec<(u32, TrustEntry)>,
}

impl TrustCache {
    pub const CAPACITY: usize = 32;

    pub fn peek(&self, subject: PeerId) -> Option<&TrustEntry> {
        self.entries.iter().find(|(p, _)| *p == subject.0).map(|(_, e)| e)
    }

    /// Insert or replace the entry for `subject`, marking it most recent.
    pub fn upsert(&mut self, subject: PeerId, entry: TrustEntry) {
        if let Some(pos) = self.entries.iter().position(|(p, _)| *p == subject.0) {
            self.entries.remove(pos);
        }
        self.entries.insert(0, (subject.0, entry));
        self.entries.truncate(Self::CAPACITY);
    }

    /// Seed a first-hand record (tests and setup): belief starts equal to the
    /// direct observations.
    pub fn set_direct(&mut self, subject: PeerId, record: ReputationRecord) {
        self.upsert(subject, TrustEntry { direct: record, belief: record });
    }

    /// Mutate (creating if absent) the entry for `subject`, marking it most
    /// recent.
    pub fn update(&mut self, subject: PeerId, f: impl FnOnce(&mut TrustEntry)) {
        let mut entry = self.peek(subject).copied().unwrap_or_default();
        f(&mut entry);
        self.upsert(subject, entry);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in most-recently-written order.
    pub fn iter(&self) -> impl Iterator<Item = (PeerId, &TrustEntry)> {
        self.entries.iter().map(|(p, e)| (PeerId(*p), e))
    }
}

/// All peers' trust caches.
pub struct TrustStore {
    caches: Vec<TrustCache>,
    recency_rho: f64,
}

impl TrustStore {
    pub fn new(n: usize, recency_rho: f64) -> Self {
        TrustStore {
            caches: vec![TrustCache::default(); n],
            recency_rho,
        }
    }

    pub fn cache(&self, owner: PeerId) -> &TrustCache {
        &self.caches[owner.index()]
    }

    pub fn cache_mut(&mut self, owner: PeerId) -> &mut TrustCache {
        &mut self.caches[owner.index()]
    }

    /// Observer's cached trust in the subject, if any history exists.
    #[inline]
    pub fn cached_trust(&self, observer: PeerId, subject: PeerId) -> Option<f64> {
        self.caches[observer.index()].peek(subject).map(|e| e.belief.trust_value())
    }

    /// Observer's working trust in the subject: cached value or the neutral
    /// prior.
    #[inline]
    pub fn view(&self, observer: PeerId, subject: PeerId) -> f64 {
        self.cached_trust(observer, subject).unwrap_or(NEUTRAL_TRUST)
    }

    /// What `recommender` would report about `subject`: its first-hand
    /// transaction record, if it has one.
    #[inline]
    pub fn recommendation(&self, recommender: PeerId, subject: PeerId) -> Option<ReputationRecord> {
        self.caches[recommender.index()]
            .peek(subject)
            .filter(|e| e.has_transactions())
            .map(|e| e.direct)
    }

    /// Record a download outcome observed by `observer` about `provider`.
    pub fn record_download(&mut self, observer: PeerId, provider: PeerId, authentic: bool) {
        let rho = self.recency_rho;
        self.cache_mut(observer).update(provider, |e| {
            e.direct.record_outcome(authentic, rho);
            e.belief.record_outcome(authentic, rho);
        });
    }

    /// Wipe a peer's own memory (used when it rejoins after churn).
    pub fn clear_peer(&mut self, owner: PeerId) {
        self.cache_mut(owner).clear();
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TrustQueryOutcome {
    pub record: ReputationRecord,
    /// Whether phase 2 (the directed DFS) ran; each escalation counts toward
    /// the generation's trust-query propagation overhead.
    pub escalated: bool,
    pub dfs_hops: u32,
    /// Whether any recommendation was found at all.
    pub informed: bool,
}

/// Resolve a reputation for `subject` on behalf of `observer`, who has no
/// cached record. Phase 1 polls all community neighbours (ascending id) and
/// merges every report. If none responds, phase 2 walks one directed DFS of
/// at most `dfs_ttl` hops without backtracking, stepping to the most trusted
/// neighbour at each hop; the first peer with a record responds. Finding
/// nothing yields the neutral record.
pub fn trust_query(
    observer: PeerId,
    subject: PeerId,
    graph: &OverlayGraph,
    trust: &mut TrustStore,
    active: &[bool],
    dfs_ttl: u32,
) -> TrustQueryOutcome {
    debug_assert!(trust.cache(observer).peek(subject).is_none());
    let mut acc = ReputationRecord::NEUTRAL;
    let mut informed = false;

    for &k in graph.community_neighbors(observer) {
        if k == subject.0 || !active[k as usize] {
            continue;
        }
        if let Some(report) = trust.recommendation(PeerId(k), subject) {
            let about_k = trust
                .cache(observer)
                .peek(PeerId(k))
                .map(|e| e.belief)
                .unwrap_or_default();
            acc = acc.merge_indirect(about_k, report);
            informed = true;
        }
    }
    if informed {
        store_belief(trust, observer, subject, acc);
        return TrustQueryOutcome {
            record: acc,
            escalated: false,
            dfs_hops: 0,
            informed,
        };
    }

    let mut visited: SmallVec<[u32; 16]> = SmallVec::new();
    visited.push(observer.0);
    visited.push(subject.0);
    let mut current = observer;
    let mut hops = 0u32;
    while hops < dfs_ttl {
        let mut best: Option<(f64, u32)> = None;
        for n in graph.neighbors(current) {
            if !active[n as usize] || visited.contains(&n) {
                continue;
            }
            let t = trust.view(current, PeerId(n));
            let better = match best {
                None => true,
                Some((bt, bn)) => t > bt || (t == bt && n < bn),
            };
            if better {
                best = Some((t, n));
            }
        }
        let Some((_, next)) = best else { break };
        hops += 1;
        visited.push(next);
        if let Some(report) = trust.recommendation(PeerId(next), subject) {
            let about_next = trust
                .cache(observer)
                .peek(PeerId(next))
                .map(|e| e.belief)
                .unwrap_or_default();
            acc = acc.merge_indirect(about_next, report);
            informed = true;
            break;
        }
        current = PeerId(next);
    }
    if informed {
        store_belief(trust, observer, subject, acc);
    }
    TrustQueryOutcome {
        record: acc,
        escalated: true,
        dfs_hops: hops,
        informed,
    }
}

fn store_belief(trust: &mut TrustStore, observer: PeerId, subject: PeerId, belief: ReputationRecord) {
    trust.cache_mut(observer).update(subject, |e| e.belief = belief);
}
