//! Post-search adaptation: source selection by trust, download verification,
//! direct trust updates, and the community-edge rewiring that follows every
//! download outcome.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::adversary::{serve_decision, Disposition, Outcome};
use crate::overlay::{OverlayGraph, PeerId};
use crate::reputation::{trust_query, TrustStore, TRUST_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeAction {
    None,
    Added,
    Removed,
}

impl EdgeAction {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeAction::None => "none",
            EdgeAction::Added => "add",
            EdgeAction::Removed => "del",
        }
    }
}

/// One verified download: who fetched what from whom, and what the rewiring
/// step did about it.
#[derive(Clone, Copy, Debug)]
pub struct DownloadAttempt {
    pub requester: PeerId,
    pub provider: PeerId,
    pub outcome: Outcome,
    pub edge_action: EdgeAction,
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptParams {
    pub degree_of_rewiring: f64,
    pub degree_of_deception: f64,
    pub dfs_ttl: u32,
}

pub struct AdaptCtx<'a> {
    pub graph: &'a mut OverlayGraph,
    pub dispositions: &'a mut [Disposition],
    pub active: &'a [bool],
    pub trust: &'a mut TrustStore,
    pub params: AdaptParams,
    pub rng: &'a mut ChaCha8Rng,
    pub tqpo: &'a mut [u32; 2],
    /// Community edges severed because a trust check classified the other
    /// endpoint as malicious (as opposed to a failed download).
    pub discovery_deletions: u32,
}

impl AdaptCtx<'_> {
    /// The requester's working trust in a peer, escalating to a trust query
    /// for strangers.
    fn resolve_trust(&mut self, observer: PeerId, subject: PeerId) -> f64 {
        match self.trust.cached_trust(observer, subject) {
            Some(t) => t,
            None => {
                let out = trust_query(
                    observer,
                    subject,
                    self.graph,
                    self.trust,
                    self.active,
                    self.params.dfs_ttl,
                );
                if out.escalated {
                    self.tqpo[self.dispositions[observer.index()].class()] += 1;
                }
                out.record.trust_value()
            }
        }
    }
}

/// Work through the responders best-trusted first: download, verify, update
/// the provider's reputation, rewire, and stop at the first authentic copy.
/// Providers the requester distrusts are skipped outright. Trust for unknown
/// providers is resolved lazily (only when a provider reaches the head of the
/// line), which keeps trust-query traffic proportional to actual downloads.
pub fn process_responses(
    ctx: &mut AdaptCtx<'_>,
    requester: PeerId,
    responders: &[PeerId],
) -> Vec<DownloadAttempt> {
    let mut remaining: SmallVec<[(PeerId, f64, bool); 16]> = responders
        .iter()
        .map(|&p| match ctx.trust.cached_trust(requester, p) {
            Some(t) => (p, t, true),
            None => (p, TRUST_THRESHOLD, false),
        })
        .collect();
    let mut attempts = Vec::new();
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.1.partial_cmp(&b.1).unwrap().then(b.0 .0.cmp(&a.0 .0))
            })
            .map(|(i, _)| i)
            .unwrap();
        let (provider, mut score, resolved) = remaining.remove(best);
        if !resolved {
            score = ctx.resolve_trust(requester, provider);
        }
        if score < TRUST_THRESHOLD {
            // the requester just found this provider malicious: an existing
            // community link with it does not survive the discovery
            if ctx.graph.remove_community_edge(requester, provider) {
                ctx.discovery_deletions += 1;
            }
            continue;
        }
        let outcome = serve_decision(
            &mut ctx.dispositions[provider.index()],
            ctx.graph,
            provider,
            ctx.params.degree_of_deception,
            ctx.rng,
        );
        ctx.trust.record_download(requester, provider, outcome.is_authentic());
        let edge_action = rewire(ctx, requester, provider, outcome);
        attempts.push(DownloadAttempt { requester, provider, outcome, edge_action });
        if outcome.is_authentic() {
            break;
        }
    }
    attempts
}

/// Adapt the topology after a download from `provider`: drop the community
/// edge on a fake, or probabilistically propose one on an authentic copy.
pub fn rewire(ctx: &mut AdaptCtx<'_>, requester: PeerId, provider: PeerId, outcome: Outcome) -> EdgeAction {
    match outcome {
        Outcome::Fake => {
            if ctx.graph.has_community_edge(requester, provider) {
                ctx.graph.remove_community_edge(requester, provider);
                EdgeAction::Removed
            } else {
                EdgeAction::None
            }
        }
        Outcome::Authentic => {
            if ctx.graph.has_community_edge(requester, provider)
                || ctx.graph.has_connectivity_edge(requester, provider)
            {
                return EdgeAction::None;
            }
            let draw: f64 = ctx.rng.random();
            if draw <= ctx.params.degree_of_rewiring
                && approve_link(ctx, requester, provider)
                && ctx.graph.add_community_edge(requester, provider)
            {
                EdgeAction::Added
            } else {
                EdgeAction::None
            }
        }
    }
}

/// The provider's side of link formation: refuse when either endpoint would
/// blow its edge budget or when the provider distrusts the requester.
pub fn approve_link(ctx: &mut AdaptCtx<'_>, requester: PeerId, provider: PeerId) -> bool {
    if ctx.graph.at_capacity(requester) || ctx.graph.at_capacity(provider) {
        return false;
    }
    ctx.resolve_trust(provider, requester) >= TRUST_THRESHOLD
}
