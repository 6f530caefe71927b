//! Query initiation and forwarding: the connectivity-index fan-out rule,
//! trust- and content-aware neighbour selection, TTL management, and the
//! blocking of packets from distrusted senders.
//!
//! Search starts as a TTL-limited BFS. As a peer's community links saturate,
//! its connectivity index approaches 1 and the fan-out floors at a single
//! neighbour, so the walk degenerates into a directed DFS on its own.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use smallvec::SmallVec;

use crate::adversary::Disposition;
use crate::content::{FileId, HashPrefix, PeerLibrary};
use crate::overlay::{OverlayGraph, PeerId};
use crate::reputation::{trust_query, TrustStore, TRUST_THRESHOLD};

#[derive(Clone, Copy, Debug)]
pub struct SearchParams {
    pub bfs_ttl: u32,
    pub dfs_ttl: u32,
    pub max_fanout: usize,
}

/// What a query is looking for: a concrete file, or (in the partial-hash
/// privacy scheme) the revealed prefix of a data handle's digest.
#[derive(Clone, Copy, Debug)]
pub enum Target {
    File(FileId),
    Handle(HashPrefix),
}

impl Target {
    /// The content category usable for neighbour ranking. Prefix lookups hide
    /// it by construction.
    #[inline]
    pub fn category_hint(&self) -> Option<u16> {
        match self {
            Target::File(f) => Some(f.category),
            Target::Handle(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QueryResponse {
    pub responder: PeerId,
    pub target: FileId,
}

/// Per-query duplicate suppression: each peer processes a given query once,
/// no matter how many branches deliver it.
pub struct VisitStamps {
    stamp: Vec<u64>,
    serial: u64,
}

impl VisitStamps {
    pub fn new(n: usize) -> Self {
        VisitStamps { stamp: vec![0; n], serial: 0 }
    }

    pub fn begin_query(&mut self) {
        self.serial += 1;
    }

    #[inline]
    fn mark(&mut self, peer: u32) {
        self.stamp[peer as usize] = self.serial;
    }

    #[inline]
    fn visited(&self, peer: u32) -> bool {
        self.stamp[peer as usize] == self.serial
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceAction {
    Forward,
    Block,
    Respond,
    Die,
}

impl TraceAction {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceAction::Forward => "forward",
            TraceAction::Block => "block",
            TraceAction::Respond => "respond",
            TraceAction::Die => "die",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    pub query_id: u64,
    pub hop: u32,
    pub peer: u32,
    pub action: TraceAction,
}

pub struct SearchCtx<'a> {
    pub graph: &'a OverlayGraph,
    pub libraries: &'a [PeerLibrary],
    pub dispositions: &'a [Disposition],
    pub active: &'a [bool],
    pub trust: &'a mut TrustStore,
    pub params: SearchParams,
    pub stamps: &'a mut VisitStamps,
    pub rng: &'a mut ChaCha8Rng,
    /// DFS-escalated trust queries this generation, split by the class of the
    /// peer that launched them.
    pub tqpo: &'a mut [u32; 2],
    pub trace: Option<&'a mut Vec<TraceRow>>,
    pub query_id: u64,
}

#[derive(Clone, Debug, Default)]
pub struct DispatchOutcome {
    pub responders: Vec<PeerId>,
    pub peers_visited: u32,
    pub packets_blocked: u32,
    /// Fan-out used at the origin; 1 means the query ran as a directed DFS.
    pub origin_fanout: usize,
    /// (observer, subject) pairs where a full trust resolution during this
    /// query classified the subject as malicious: first-hop candidates the
    /// origin rejected, and origins blocked by their first-hop receivers.
    /// A community edge between such a pair does not survive the discovery;
    /// the caller severs it once the dispatch ends.
    pub distrusted: Vec<(PeerId, PeerId)>,
}

/// Connectivity index of a peer: how saturated its community-edge budget is,
/// from 0 (no community links) to 1 (at the edge limit).
#[inline]
pub fn prob_com(graph: &OverlayGraph, x: PeerId) -> f64 {
    let initial = graph.initial_degree(x) as f64;
    let p = (graph.degree(x) as f64 - initial) / (initial * (graph.edge_limit() - 1.0));
    p.clamp(0.0, 1.0)
}

/// Number of neighbours a peer forwards to: `max(1, floor((1 - p) * N))`
/// where `N` is the contactable-neighbour count capped by `max_fanout`.
#[inline]
pub fn fanout(prob_com: f64, contactable: usize, max_fanout: usize) -> usize {
    debug_assert!(contactable >= 1);
    let n = contactable.min(max_fanout);
    (((1.0 - prob_com) * n as f64).floor() as usize).max(1)
}

fn tier(community: bool, category_match: bool) -> u8 {
    match (community, category_match) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// Rank a peer's eligible neighbours by the four-tier rule: community links
/// sharing the query's category, other community links, connectivity links
/// sharing the category, remaining connectivity links; within a tier by
/// descending trust, ties broken uniformly at random. Excluded: peers on the
/// packet's path, inactive peers, and neighbours the ranking peer distrusts.
pub fn rank_neighbors(
    graph: &OverlayGraph,
    libraries: &[PeerLibrary],
    trust: &TrustStore,
    active: &[bool],
    at: PeerId,
    category: Option<u16>,
    path: &[u32],
    rng: &mut ChaCha8Rng,
) -> SmallVec<[u32; 16]> {
    let mut candidates: SmallVec<[(u8, f64, u32, u32); 16]> = SmallVec::new();
    let lists = [
        (true, graph.community_neighbors(at)),
        (false, graph.connectivity_neighbors(at)),
    ];
    for (community, list) in lists {
        for &n in list {
            if !active[n as usize] || path.contains(&n) {
                continue;
            }
            let t = trust.view(at, PeerId(n));
            if t < TRUST_THRESHOLD {
                continue;
            }
            let cat_match = category.is_some_and(|c| libraries[n as usize].shares_category(c));
            candidates.push((tier(community, cat_match), t, rng.random(), n));
        }
    }
    candidates.sort_unstable_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| b.1.partial_cmp(&a.1).unwrap())
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    });
    candidates.into_iter().map(|(_, _, _, n)| n).collect()
}

/// Up to `k` neighbours in ranked order.
pub fn select_neighbors(
    graph: &OverlayGraph,
    libraries: &[PeerLibrary],
    trust: &TrustStore,
    active: &[bool],
    at: PeerId,
    category: Option<u16>,
    path: &[u32],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> SmallVec<[u32; 16]> {
    let mut ranked = rank_neighbors(graph, libraries, trust, active, at, category, path, rng);
    ranked.truncate(k);
    ranked
}

fn peer_matches(libraries: &[PeerLibrary], dispositions: &[Disposition], at: u32, target: &Target) -> bool {
    let lib = &libraries[at as usize];
    match target {
        // Malicious peers answer anything in a category they share and serve
        // corrupted content later; honest peers answer only exact holdings.
        Target::File(f) => {
            if dispositions[at as usize].is_malicious() {
                lib.shares_category(f.category)
            } else {
                lib.has_file(*f)
            }
        }
        Target::Handle(prefix) => lib.prefix_match_count(prefix) > 0,
    }
}

struct Packet {
    ttl: u32,
    path: SmallVec<[u32; 12]>,
}

/// Run one query from `origin` to completion: synchronous hop-by-hop
/// expansion, sender-trust blocking at every hop, duplicate suppression, and
/// response collection. The TTL budget comes from the origin's connectivity
/// index: saturated origins use the (longer) DFS budget with unit fan-out.
pub fn dispatch_query(ctx: &mut SearchCtx<'_>, origin: PeerId, target: Target) -> DispatchOutcome {
    let mut outcome = DispatchOutcome::default();
    ctx.stamps.begin_query();
    ctx.stamps.mark(origin.0);

    let p = prob_com(ctx.graph, origin);
    let ttl = if p >= 0.5 { ctx.params.dfs_ttl } else { ctx.params.bfs_ttl };
    if ttl == 0 {
        return outcome;
    }
    let origin_path = [origin.0];
    let contactable = ctx
        .graph
        .neighbors(origin)
        .filter(|&n| ctx.active[n as usize])
        .count();
    if contactable == 0 {
        return outcome;
    }
    let k = fanout(p, contactable, ctx.params.max_fanout);
    outcome.origin_fanout = k;

    // The initiator verifies the trust of each neighbour it is about to use,
    // escalating to a trust query for strangers. Forwarding hops further down
    // rely on cached knowledge only.
    let ranked = rank_neighbors(
        ctx.graph,
        ctx.libraries,
        ctx.trust,
        ctx.active,
        origin,
        target.category_hint(),
        &origin_path,
        ctx.rng,
    );
    let origin_class = ctx.dispositions[origin.index()].class();
    let mut first_hops: SmallVec<[u32; 16]> = SmallVec::new();
    for &cand in ranked.iter() {
        if first_hops.len() == k {
            break;
        }
        let t = match ctx.trust.cached_trust(origin, PeerId(cand)) {
            Some(t) => t,
            None => {
                let out = trust_query(origin, PeerId(cand), ctx.graph, ctx.trust, ctx.active, ctx.params.dfs_ttl);
                if out.escalated {
                    ctx.tqpo[origin_class] += 1;
                }
                out.record.trust_value()
            }
        };
        if t >= TRUST_THRESHOLD {
            first_hops.push(cand);
        } else {
            outcome.distrusted.push((origin, PeerId(cand)));
        }
    }

    let mut frontier: VecDeque<(u32, u32, Packet)> = VecDeque::new();
    for &hop in &first_hops {
        frontier.push_back((
            origin.0,
            hop,
            Packet { ttl: ttl - 1, path: SmallVec::from_slice(&origin_path) },
        ));
    }
    if let Some(t) = ctx.trace.as_deref_mut() {
        t.push(TraceRow { query_id: ctx.query_id, hop: 0, peer: origin.0, action: TraceAction::Forward });
    }

    while let Some((sender, at, packet)) = frontier.pop_front() {
        if !ctx.active[at as usize] || ctx.stamps.visited(at) {
            continue;
        }
        ctx.stamps.mark(at);
        outcome.peers_visited += 1;
        let hop = packet.path.len() as u32;

        // Drop anything arriving from a sender this peer considers malicious.
        // A packet straight from its initiator gets the full trust check
        // (cache, then trust query); relayed packets rely on cached knowledge
        // so the per-hop cost stays bounded.
        let receiver = PeerId(at);
        let sender_peer = PeerId(sender);
        let sender_trust = if sender == origin.0 {
            match ctx.trust.cached_trust(receiver, sender_peer) {
                Some(t) => t,
                None => {
                    let out = trust_query(receiver, sender_peer, ctx.graph, ctx.trust, ctx.active, ctx.params.dfs_ttl);
                    if out.escalated {
                        ctx.tqpo[ctx.dispositions[at as usize].class()] += 1;
                    }
                    out.record.trust_value()
                }
            }
        } else {
            ctx.trust.view(receiver, sender_peer)
        };
        if sender_trust < TRUST_THRESHOLD {
            outcome.packets_blocked += 1;
            if sender == origin.0 {
                outcome.distrusted.push((receiver, sender_peer));
            }
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.push(TraceRow { query_id: ctx.query_id, hop, peer: at, action: TraceAction::Block });
            }
            continue;
        }

        if peer_matches(ctx.libraries, ctx.dispositions, at, &target) {
            outcome.responders.push(PeerId(at));
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.push(TraceRow { query_id: ctx.query_id, hop, peer: at, action: TraceAction::Respond });
            }
        }

        let mut forwarded = false;
        if packet.ttl > 0 {
            let contactable = ctx
                .graph
                .neighbors(PeerId(at))
                .filter(|&n| ctx.active[n as usize] && !packet.path.contains(&n) && n != at)
                .count();
            if contactable > 0 {
                let k = fanout(prob_com(ctx.graph, PeerId(at)), contactable, ctx.params.max_fanout);
                let mut path = packet.path.clone();
                path.push(at);
                let selected = select_neighbors(
                    ctx.graph,
                    ctx.libraries,
                    ctx.trust,
                    ctx.active,
                    PeerId(at),
                    target.category_hint(),
                    &path,
                    k,
                    ctx.rng,
                );
                for &next in selected.iter() {
                    frontier.push_back((at, next, Packet { ttl: packet.ttl - 1, path: path.clone() }));
                }
                forwarded = !selected.is_empty();
            }
        }
        if let Some(t) = ctx.trace.as_deref_mut() {
            let action = if forwarded { TraceAction::Forward } else { TraceAction::Die };
            t.push(TraceRow { query_id: ctx.query_id, hop, peer: at, action });
        }
    }
    outcome
}

/// Issue a file query and collect every response that reaches the origin.
pub fn initiate_query(ctx: &mut SearchCtx<'_>, origin: PeerId, target: FileId) -> Vec<QueryResponse> {
    dispatch_query(ctx, origin, Target::File(target))
        .responders
        .into_iter()
        .map(|responder| QueryResponse { responder, target })
        .collect()
}
