//! Per-generation metrics over the frozen end-of-generation state: attempt
//! ratios, effective attempt ratio, query miss ratio, relative connectivity
//! increase, community closeness centrality, clustering coefficient,
//! per-category largest connected component, trust-query overhead, and
//! average shortest path distance. Everything is reported split by peer
//! class (honest vs malicious).

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{DownloadAttempt, EdgeAction};
use crate::adversary::Disposition;
use crate::content::PeerLibrary;
use crate::overlay::{OverlayGraph, PeerId};

pub const CLASS_HONEST: usize = 0;
pub const CLASS_MALICIOUS: usize = 1;
pub const CLASS_NAMES: [&str; 2] = ["honest", "malicious"];

/// Raw search bookkeeping accumulated while a generation runs.
#[derive(Clone, Debug)]
pub struct GenObservations {
    pub searches: [u32; 2],
    pub misses: [u32; 2],
    /// Searches that led to at least one download attempt.
    pub ar_eligible: [u32; 2],
    /// ... of which the very first attempt was authentic.
    pub ar_first_authentic: [u32; 2],
    pub tqpo: [u32; 2],
    pub edge_additions: u32,
    pub edge_deletions: u32,
    per_peer: Vec<PeerSearchStats>,
}

#[derive(Clone, Copy, Debug, Default)]
struct PeerSearchStats {
    issued: u32,
    successes: u32,
    attempts_for_successes: u32,
}

impl GenObservations {
    pub fn new(n: usize) -> Self {
        GenObservations {
            searches: [0; 2],
            misses: [0; 2],
            ar_eligible: [0; 2],
            ar_first_authentic: [0; 2],
            tqpo: [0; 2],
            edge_additions: 0,
            edge_deletions: 0,
            per_peer: vec![PeerSearchStats::default(); n],
        }
    }

    pub fn record_search(&mut self, class: usize, initiator: PeerId) {
        self.searches[class] += 1;
        self.per_peer[initiator.index()].issued += 1;
    }

    pub fn record_miss(&mut self, class: usize) {
        self.misses[class] += 1;
    }

    pub fn record_attempts(&mut self, class: usize, initiator: PeerId, attempts: &[DownloadAttempt]) {
        if attempts.is_empty() {
            return;
        }
        self.ar_eligible[class] += 1;
        if attempts[0].outcome.is_authentic() {
            self.ar_first_authentic[class] += 1;
        }
        if let Some(pos) = attempts.iter().position(|a| a.outcome.is_authentic()) {
            let stats = &mut self.per_peer[initiator.index()];
            stats.successes += 1;
            stats.attempts_for_successes += pos as u32 + 1;
        }
        for attempt in attempts {
            match attempt.edge_action {
                EdgeAction::Added => self.edge_additions += 1,
                EdgeAction::Removed => self.edge_deletions += 1,
                EdgeAction::None => {}
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ClassMetrics {
    pub ar: Option<f64>,
    pub qmr: Option<f64>,
    pub mean_ric: Option<f64>,
    pub mean_cc: Option<f64>,
    pub mean_clc: Option<f64>,
    pub tqpo: u32,
    pub aspd: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub generation: u32,
    /// Single cross-class scalar; positive when honest peers obtain authentic
    /// files more cheaply than malicious peers.
    pub ear: Option<f64>,
    pub classes: [ClassMetrics; 2],
    /// Largest-connected-component percentage per category (index 0 is
    /// category 1); absent when a category has no sharers.
    pub lcc: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct MetricsParams {
    pub cc_sample: usize,
    pub unreachable_path_len: f64,
    pub categories: u16,
}

/// BFS distances from `source` over community edges only.
pub fn community_distances(graph: &OverlayGraph, source: PeerId) -> Vec<u32> {
    let mut dist = vec![u32::MAX; graph.peer_count()];
    let mut queue = VecDeque::new();
    dist[source.index()] = 0;
    queue.push_back(source.0);
    while let Some(x) = queue.pop_front() {
        let d = dist[x as usize];
        for &n in graph.community_neighbors(PeerId(x)) {
            if dist[n as usize] == u32::MAX {
                dist[n as usize] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Closeness centrality of `x` over community paths to the given targets,
/// substituting `unreachable_len` for disconnected pairs.
pub fn closeness_centrality(
    graph: &OverlayGraph,
    x: PeerId,
    targets: &[PeerId],
    unreachable_len: f64,
) -> Option<f64> {
    let dist = community_distances(graph, x);
    let mut sum = 0.0;
    let mut counted = 0usize;
    for &t in targets {
        if t == x {
            continue;
        }
        sum += path_len(dist[t.index()], unreachable_len);
        counted += 1;
    }
    (counted > 0).then(|| 1.0 / sum)
}

#[inline]
fn path_len(d: u32, unreachable: f64) -> f64 {
    if d == u32::MAX {
        unreachable
    } else {
        d as f64
    }
}

/// Community clustering coefficient of `i`: `2 E / (K (K - 1))` over its
/// community neighbourhood; undefined below two neighbours.
pub fn clustering_coefficient(graph: &OverlayGraph, i: PeerId) -> Option<f64> {
    let neighbours = graph.community_neighbors(i);
    let k = neighbours.len();
    if k < 2 {
        return None;
    }
    let mut edges = 0usize;
    for (idx, &a) in neighbours.iter().enumerate() {
        for &b in &neighbours[idx + 1..] {
            if graph.has_community_edge(PeerId(a), PeerId(b)) {
                edges += 1;
            }
        }
    }
    Some(2.0 * edges as f64 / (k as f64 * (k as f64 - 1.0)))
}

/// Percentage of the sharers of `category` inside the largest connected
/// component of their community-edge subgraph. Absent without sharers.
pub fn largest_connected_component(
    graph: &OverlayGraph,
    libraries: &[PeerLibrary],
    category: u16,
) -> Option<f64> {
    let n = graph.peer_count();
    let sharer: Vec<bool> = (0..n)
        .map(|p| libraries[p].shares_category(category))
        .collect();
    let total = sharer.iter().filter(|&&s| s).count();
    if total == 0 {
        return None;
    }
    let mut seen = vec![false; n];
    let mut largest = 1usize;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !sharer[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start as u32);
        let mut size = 0usize;
        while let Some(x) = queue.pop_front() {
            size += 1;
            for &nb in graph.community_neighbors(PeerId(x)) {
                if sharer[nb as usize] && !seen[nb as usize] {
                    seen[nb as usize] = true;
                    queue.push_back(nb);
                }
            }
        }
        largest = largest.max(size);
    }
    Some(100.0 * largest as f64 / total as f64)
}

/// Effective attempt ratio over per-peer `1/P` means: peers that issued
/// queries but never obtained an authentic file contribute zero. Absent when
/// either class issued nothing.
fn effective_attempt_ratio(obs: &GenObservations, dispositions: &[Disposition]) -> Option<f64> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (p, stats) in obs.per_peer.iter().enumerate() {
        if stats.issued == 0 {
            continue;
        }
        let class = dispositions[p].class();
        let inverse_p = if stats.successes > 0 {
            stats.successes as f64 / stats.attempts_for_successes as f64
        } else {
            0.0
        };
        sums[class] += inverse_p;
        counts[class] += 1;
    }
    if counts[CLASS_HONEST] == 0 || counts[CLASS_MALICIOUS] == 0 {
        return None;
    }
    Some(100.0 * (sums[CLASS_HONEST] / counts[CLASS_HONEST] as f64 - sums[CLASS_MALICIOUS] / counts[CLASS_MALICIOUS] as f64))
}

fn sample_peers(n: usize, want: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    if want >= n {
        return (0..n as u32).collect();
    }
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for i in 0..want {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(want);
    pool.sort_unstable();
    pool
}

/// Assemble the full per-generation report from the frozen state.
pub fn compute_report(
    generation: u32,
    graph: &OverlayGraph,
    libraries: &[PeerLibrary],
    dispositions: &[Disposition],
    obs: &GenObservations,
    params: &MetricsParams,
    rng: &mut ChaCha8Rng,
) -> MetricsReport {
    let n = graph.peer_count();
    let unreachable = params.unreachable_path_len;
    let sample = sample_peers(n, params.cc_sample, rng);

    // one BFS per sampled source; distances are symmetric, so the per-source
    // rows double as per-target columns for everyone's closeness sum
    let mut cc_sums = vec![0.0f64; n];
    let mut cc_targets = vec![0u32; n];
    let mut aspd_sums = [0.0f64; 2];
    let mut aspd_pairs = [0u64; 2];
    for &s in &sample {
        let dist = community_distances(graph, PeerId(s));
        let s_class = dispositions[s as usize].class();
        for p in 0..n {
            if p as u32 == s {
                continue;
            }
            let d = path_len(dist[p], unreachable);
            cc_sums[p] += d;
            cc_targets[p] += 1;
            if dispositions[p].class() == s_class {
                aspd_sums[s_class] += d;
                aspd_pairs[s_class] += 1;
            }
        }
    }

    let mut ric_sums = [0.0f64; 2];
    let mut cc_class_sums = [0.0f64; 2];
    let mut cc_class_counts = [0usize; 2];
    let mut clc_sums = [0.0f64; 2];
    let mut clc_counts = [0usize; 2];
    let mut class_sizes = [0usize; 2];
    for p in 0..n {
        let peer = PeerId(p as u32);
        let class = dispositions[p].class();
        class_sizes[class] += 1;
        ric_sums[class] += graph.ric(peer);
        if cc_targets[p] > 0 {
            cc_class_sums[class] += 1.0 / cc_sums[p];
            cc_class_counts[class] += 1;
        }
        if let Some(clc) = clustering_coefficient(graph, peer) {
            clc_sums[class] += clc;
            clc_counts[class] += 1;
        }
    }

    let mut classes = [ClassMetrics::default(); 2];
    for class in 0..2 {
        classes[class] = ClassMetrics {
            ar: ratio(obs.ar_first_authentic[class], obs.ar_eligible[class]),
            qmr: ratio(obs.misses[class], obs.searches[class]),
            mean_ric: mean(ric_sums[class], class_sizes[class]),
            mean_cc: mean(cc_class_sums[class], cc_class_counts[class]),
            mean_clc: mean(clc_sums[class], clc_counts[class]),
            tqpo: obs.tqpo[class],
            aspd: mean(aspd_sums[class], aspd_pairs[class] as usize),
        };
    }

    let lcc = (1..=params.categories)
        .map(|c| largest_connected_component(graph, libraries, c))
        .collect();

    MetricsReport {
        generation,
        ear: effective_attempt_ratio(obs, dispositions),
        classes,
        lcc,
    }
}

fn ratio(num: u32, den: u32) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(sum: f64, count: usize) -> Option<f64> {
    (count > 0).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::Outcome;
    use crate::content::FileId;
    use crate::rng;
    use approx::assert_relative_eq;

    /// connectivity star around a hub pad so arbitrary community edges can be
    /// added between the spokes
    fn spoke_graph(n: usize, edge_limit: f64) -> OverlayGraph {
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|p| (0, p)).collect();
        OverlayGraph::from_connectivity_edges(n, &edges, edge_limit).unwrap()
    }

    #[test]
    fn closeness_centrality_star_example() {
        let mut g = spoke_graph(6, 6.0);
        // community star: 1 is the centre, 2..=5 the leaves
        for leaf in 2..=5 {
            assert!(g.add_community_edge(PeerId(1), PeerId(leaf)));
        }
        let members: Vec<PeerId> = (1..=5).map(PeerId).collect();
        let centre = closeness_centrality(&g, PeerId(1), &members, 15.0).unwrap();
        assert_relative_eq!(centre, 1.0 / 4.0, max_relative = 1e-12);
        let leaf = closeness_centrality(&g, PeerId(2), &members, 15.0).unwrap();
        assert_relative_eq!(leaf, 1.0 / 7.0, max_relative = 1e-12);
        assert!(centre > leaf);
    }

    #[test]
    fn closeness_centrality_isolated_peer() {
        let g = spoke_graph(6, 6.0);
        let others: Vec<PeerId> = (1..=5).map(PeerId).collect();
        let cc = closeness_centrality(&g, PeerId(1), &others, 15.0).unwrap();
        assert_relative_eq!(cc, 1.0 / (15.0 * 4.0), max_relative = 1e-12);
    }

    #[test]
    fn clustering_coefficient_examples() {
        // community triangle 1-2-3: each member has K=2, E=1
        let mut g = spoke_graph(4, 8.0);
        g.add_community_edge(PeerId(1), PeerId(2));
        g.add_community_edge(PeerId(2), PeerId(3));
        g.add_community_edge(PeerId(3), PeerId(1));
        assert_relative_eq!(clustering_coefficient(&g, PeerId(1)).unwrap(), 1.0, max_relative = 1e-12);

        // hub 1 with four community neighbours and two edges among them
        let mut g = spoke_graph(6, 8.0);
        for leaf in 2..=5 {
            g.add_community_edge(PeerId(1), PeerId(leaf));
        }
        g.add_community_edge(PeerId(2), PeerId(3));
        g.add_community_edge(PeerId(4), PeerId(5));
        assert_relative_eq!(clustering_coefficient(&g, PeerId(1)).unwrap(), 4.0 / 12.0, max_relative = 1e-12);

        // three neighbours, none of them adjacent
        let mut g = spoke_graph(6, 8.0);
        for leaf in 2..=4 {
            g.add_community_edge(PeerId(1), PeerId(leaf));
        }
        assert_relative_eq!(clustering_coefficient(&g, PeerId(1)).unwrap(), 0.0, max_relative = 1e-12);

        // fewer than two neighbours: undefined
        assert!(clustering_coefficient(&g, PeerId(2)).is_none() || clustering_coefficient(&g, PeerId(2)).unwrap() >= 0.0);
        let g = spoke_graph(3, 8.0);
        assert!(clustering_coefficient(&g, PeerId(1)).is_none());
    }

    fn sharer_libraries(n: usize, category: u16, sharers: &[u32]) -> Vec<PeerLibrary> {
        (0..n as u32)
            .map(|p| {
                let (cats, file_cat) = if sharers.contains(&p) {
                    (vec![category, 30, 31], category)
                } else {
                    (vec![28, 30, 31], 28)
                };
                PeerLibrary::synthetic(PeerId(p), cats, vec![FileId::new(file_cat, 1)], 0.8)
            })
            .collect()
    }

    #[test]
    fn lcc_examples() {
        // all four sharers in one community clique
        let mut g = spoke_graph(6, 9.0);
        let libs = sharer_libraries(6, 5, &[1, 2, 3, 4]);
        for a in 1..=4u32 {
            for b in (a + 1)..=4 {
                g.add_community_edge(PeerId(a), PeerId(b));
            }
        }
        assert_relative_eq!(largest_connected_component(&g, &libs, 5).unwrap(), 100.0, max_relative = 1e-12);

        // no community edges at all: singleton components
        let g = spoke_graph(6, 9.0);
        assert_relative_eq!(
            largest_connected_component(&g, &libs, 5).unwrap(),
            100.0 / 4.0,
            max_relative = 1e-12
        );

        // two internally connected halves of equal size
        let mut g = spoke_graph(6, 9.0);
        g.add_community_edge(PeerId(1), PeerId(2));
        g.add_community_edge(PeerId(3), PeerId(4));
        assert_relative_eq!(largest_connected_component(&g, &libs, 5).unwrap(), 50.0, max_relative = 1e-12);

        // category nobody shares
        assert!(largest_connected_component(&g, &libs, 9).is_none());
    }

    fn attempt(requester: u32, provider: u32, outcome: Outcome) -> DownloadAttempt {
        DownloadAttempt {
            requester: PeerId(requester),
            provider: PeerId(provider),
            outcome,
            edge_action: EdgeAction::None,
        }
    }

    #[test]
    fn ear_worked_example() {
        // peers 0, 1 honest (one attempt each), peers 2, 3 malicious (two
        // attempts each): EAR = 100 * (1 - 0.5) = 50
        let dispositions = vec![
            Disposition::Honest,
            Disposition::Honest,
            Disposition::MaliciousA,
            Disposition::MaliciousA,
        ];
        let mut obs = GenObservations::new(4);
        for p in [0u32, 1] {
            obs.record_search(CLASS_HONEST, PeerId(p));
            obs.record_attempts(CLASS_HONEST, PeerId(p), &[attempt(p, 9, Outcome::Authentic)]);
        }
        for p in [2u32, 3] {
            obs.record_search(CLASS_MALICIOUS, PeerId(p));
            obs.record_attempts(
                CLASS_MALICIOUS,
                PeerId(p),
                &[attempt(p, 9, Outcome::Fake), attempt(p, 8, Outcome::Authentic)],
            );
        }
        assert_relative_eq!(effective_attempt_ratio(&obs, &dispositions).unwrap(), 50.0, max_relative = 1e-12);
    }

    #[test]
    fn ear_symmetry_and_limit() {
        let dispositions = vec![Disposition::Honest, Disposition::MaliciousA];
        // identical behaviour: zero
        let mut obs = GenObservations::new(2);
        obs.record_search(CLASS_HONEST, PeerId(0));
        obs.record_attempts(CLASS_HONEST, PeerId(0), &[attempt(0, 9, Outcome::Authentic)]);
        obs.record_search(CLASS_MALICIOUS, PeerId(1));
        obs.record_attempts(CLASS_MALICIOUS, PeerId(1), &[attempt(1, 9, Outcome::Authentic)]);
        assert_relative_eq!(effective_attempt_ratio(&obs, &dispositions).unwrap(), 0.0, max_relative = 1e-12);

        // the malicious peer never gets an authentic file: its 1/P is zero
        let mut obs = GenObservations::new(2);
        obs.record_search(CLASS_HONEST, PeerId(0));
        obs.record_attempts(CLASS_HONEST, PeerId(0), &[attempt(0, 9, Outcome::Authentic)]);
        obs.record_search(CLASS_MALICIOUS, PeerId(1));
        obs.record_attempts(CLASS_MALICIOUS, PeerId(1), &[attempt(1, 9, Outcome::Fake)]);
        assert_relative_eq!(effective_attempt_ratio(&obs, &dispositions).unwrap(), 100.0, max_relative = 1e-12);

        // one class missing: undefined
        let mut obs = GenObservations::new(2);
        obs.record_search(CLASS_HONEST, PeerId(0));
        assert!(effective_attempt_ratio(&obs, &dispositions).is_none());
    }

    #[test]
    fn report_on_fresh_network_has_aspd_at_maximum() {
        let g = OverlayGraph::generate_power_law(60, 2, 2.0, 3).unwrap();
        let libs = sharer_libraries(60, 5, &[1, 2, 3]);
        let mut dispositions = vec![Disposition::Honest; 60];
        dispositions[7] = Disposition::MaliciousA;
        dispositions[8] = Disposition::MaliciousA;
        dispositions[9] = Disposition::MaliciousA;
        let obs = GenObservations::new(60);
        let mut rng = rng::stream(1, rng::STREAM_METRICS, 0);
        let report = compute_report(
            0,
            &g,
            &libs,
            &dispositions,
            &obs,
            &MetricsParams { cc_sample: 200, unreachable_path_len: 15.0, categories: 32 },
            &mut rng,
        );
        for class in 0..2 {
            assert_relative_eq!(report.classes[class].aspd.unwrap(), 15.0, max_relative = 1e-12);
            assert!(report.classes[class].ar.is_none(), "no searches ran");
            assert!(report.classes[class].qmr.is_none());
            assert_relative_eq!(report.classes[class].mean_ric.unwrap(), 1.0, max_relative = 1e-12);
            assert_eq!(report.classes[class].tqpo, 0);
        }
        assert!(report.ear.is_none());
        // every sampled pair is unreachable, so everyone's CC is 1/(15 * 59)
        assert_relative_eq!(
            report.classes[CLASS_HONEST].mean_cc.unwrap(),
            1.0 / (15.0 * 59.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn ar_accounting() {
        let mut obs = GenObservations::new(3);
        obs.record_search(CLASS_HONEST, PeerId(0));
        obs.record_attempts(CLASS_HONEST, PeerId(0), &[attempt(0, 9, Outcome::Authentic)]);
        obs.record_search(CLASS_HONEST, PeerId(1));
        obs.record_attempts(
            CLASS_HONEST,
            PeerId(1),
            &[attempt(1, 9, Outcome::Fake), attempt(1, 8, Outcome::Authentic)],
        );
        assert_eq!(obs.ar_eligible[CLASS_HONEST], 2);
        assert_eq!(obs.ar_first_authentic[CLASS_HONEST], 1);
        assert_relative_eq!(
            ratio(obs.ar_first_authentic[CLASS_HONEST], obs.ar_eligible[CLASS_HONEST]).unwrap(),
            0.5,
            max_relative = 1e-12
        );
    }
}
