//! Overlay graph: the peer set, immutable connectivity edges from the initial
//! power-law topology, and adaptive community edges bounded by the edge limit.
//!
//! Connectivity edges are fixed at construction time and are never removed, so
//! the network can never partition. Community edges come and go as peers adapt
//! the topology; every mutation is gated on the relative increase in
//! connectivity (current degree over initial degree) staying at or below
//! `edge_limit` for both endpoints.

use std::fmt;
use std::io::{self, Write};

use rand::Rng;

use crate::error::SimError;
use crate::rng;

/// Identifies a peer for the lifetime of a simulation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeerId(pub u32);

impl PeerId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct OverlayGraph {
    connectivity: Vec<Vec<u32>>,
    community: Vec<Vec<u32>>,
    initial_degree: Vec<u32>,
    edge_limit: f64,
    community_edges: usize,
    connectivity_edges: usize,
}

impl OverlayGraph {
    /// Build a connected power-law graph with the Barabasi-Albert process:
    /// a seed clique of `m + 1` peers, then each new peer attaches to `m`
    /// distinct existing peers chosen proportionally to current degree.
    pub fn generate_power_law(n: usize, m: usize, edge_limit: f64, seed: u64) -> Result<Self, SimError> {
        if m < 1 {
            return Err(SimError::param("ba_m must be at least 1"));
        }
        if n < m + 1 {
            return Err(SimError::param(format!(
                "peer count {n} too small for ba_m {m}; need at least {}",
                m + 1
            )));
        }
        let mut rng = rng::stream(seed, rng::STREAM_GRAPH, 0);
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(n * m);
        // Each endpoint appears in `slots` once per incident edge, so sampling a
        // uniform slot is sampling a peer proportionally to its degree.
        let mut slots: Vec<u32> = Vec::with_capacity(2 * n * m);
        for i in 0..=m {
            for j in (i + 1)..=m {
                edges.push((i as u32, j as u32));
                slots.push(i as u32);
                slots.push(j as u32);
            }
        }
        let mut picked: Vec<u32> = Vec::with_capacity(m);
        for v in (m + 1)..n {
            picked.clear();
            while picked.len() < m {
                let t = slots[rng.random_range(0..slots.len())];
                if !picked.contains(&t) {
                    picked.push(t);
                }
            }
            for &t in &picked {
                edges.push((t, v as u32));
                slots.push(t);
                slots.push(v as u32);
            }
        }
        Self::from_connectivity_edges(n, &edges, edge_limit)
    }

    /// Build a graph from an explicit connectivity edge list. The edge list
    /// must describe a simple connected graph covering all `n` peers.
    pub fn from_connectivity_edges(n: usize, edges: &[(u32, u32)], edge_limit: f64) -> Result<Self, SimError> {
        if edge_limit <= 1.0 {
            return Err(SimError::param(format!(
                "edge_limit must be > 1 (got {edge_limit})"
            )));
        }
        if n == 0 {
            return Err(SimError::param("graph needs at least one peer"));
        }
        let mut connectivity: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(SimError::param(format!("edge ({a}, {b}) references unknown peer")));
            }
            if a == b {
                return Err(SimError::param(format!("self loop at peer {a}")));
            }
            connectivity[a as usize].push(b);
            connectivity[b as usize].push(a);
        }
        for adj in &mut connectivity {
            adj.sort_unstable();
            if adj.windows(2).any(|w| w[0] == w[1]) {
                return Err(SimError::param("duplicate connectivity edge"));
            }
        }
        if connectivity.iter().any(|adj| adj.is_empty()) {
            return Err(SimError::param("every peer needs at least one connectivity edge"));
        }
        let initial_degree: Vec<u32> = connectivity.iter().map(|adj| adj.len() as u32).collect();
        let graph = OverlayGraph {
            community: vec![Vec::new(); n],
            connectivity_edges: edges.len(),
            connectivity,
            initial_degree,
            edge_limit,
            community_edges: 0,
        };
        if !graph.is_connectivity_connected() {
            return Err(SimError::param("connectivity graph is not connected"));
        }
        Ok(graph)
    }

    #[inline]
    pub fn peer_count(&self) -> usize {
        self.connectivity.len()
    }

    pub fn peers(&self) -> impl Iterator<Item = PeerId> {
        (0..self.peer_count() as u32).map(PeerId)
    }

    #[inline]
    pub fn edge_limit(&self) -> f64 {
        self.edge_limit
    }

    #[inline]
    pub fn initial_degree(&self, x: PeerId) -> u32 {
        self.initial_degree[x.index()]
    }

    #[inline]
    pub fn degree(&self, x: PeerId) -> u32 {
        (self.connectivity[x.index()].len() + self.community[x.index()].len()) as u32
    }

    /// Relative increase in connectivity: current total degree over the
    /// degree in the initial topology. Always at least 1.
    #[inline]
    pub fn ric(&self, x: PeerId) -> f64 {
        self.degree(x) as f64 / self.initial_degree[x.index()] as f64
    }

    /// Whether adding one more community edge at `x` would push its relative
    /// connectivity increase past the edge limit.
    #[inline]
    pub fn at_capacity(&self, x: PeerId) -> bool {
        (self.degree(x) + 1) as f64 > self.edge_limit * self.initial_degree[x.index()] as f64
    }

    #[inline]
    pub fn connectivity_neighbors(&self, x: PeerId) -> &[u32] {
        &self.connectivity[x.index()]
    }

    #[inline]
    pub fn community_neighbors(&self, x: PeerId) -> &[u32] {
        &self.community[x.index()]
    }

    pub fn neighbors(&self, x: PeerId) -> impl Iterator<Item = u32> + '_ {
        self.connectivity[x.index()]
            .iter()
            .chain(self.community[x.index()].iter())
            .copied()
    }

    #[inline]
    pub fn has_connectivity_edge(&self, i: PeerId, j: PeerId) -> bool {
        self.connectivity[i.index()].binary_search(&j.0).is_ok()
    }

    #[inline]
    pub fn has_community_edge(&self, i: PeerId, j: PeerId) -> bool {
        self.community[i.index()].binary_search(&j.0).is_ok()
    }

    #[inline]
    pub fn community_edge_count(&self) -> usize {
        self.community_edges
    }

    #[inline]
    pub fn connectivity_edge_count(&self) -> usize {
        self.connectivity_edges
    }

    fn check_peer(&self, x: PeerId) {
        assert!(
            x.index() < self.peer_count(),
            "unknown peer {x} (graph has {} peers)",
            self.peer_count()
        );
    }

    /// Add a community edge between `i` and `j`. The edge is added only when
    /// the pair is not already adjacent in either edge set and both endpoints
    /// stay within the edge limit; returns whether it was added.
    pub fn add_community_edge(&mut self, i: PeerId, j: PeerId) -> bool {
        self.check_peer(i);
        self.check_peer(j);
        assert_ne!(i, j, "community self loop at peer {i}");
        if self.has_connectivity_edge(i, j) || self.has_community_edge(i, j) {
            return false;
        }
        if self.at_capacity(i) || self.at_capacity(j) {
            return false;
        }
        let pos_i = self.community[i.index()].binary_search(&j.0).unwrap_err();
        self.community[i.index()].insert(pos_i, j.0);
        let pos_j = self.community[j.index()].binary_search(&i.0).unwrap_err();
        self.community[j.index()].insert(pos_j, i.0);
        self.community_edges += 1;
        debug_assert!(self.ric(i) <= self.edge_limit && self.ric(j) <= self.edge_limit);
        true
    }

    /// Remove the community edge between `i` and `j` if present, reporting
    /// whether one existed. Connectivity edges are untouchable; removing an
    /// absent edge is a no-op.
    pub fn remove_community_edge(&mut self, i: PeerId, j: PeerId) -> bool {
        if i.index() >= self.peer_count() || j.index() >= self.peer_count() || i == j {
            return false;
        }
        if let Ok(pos) = self.community[i.index()].binary_search(&j.0) {
            self.community[i.index()].remove(pos);
            let pos_j = self.community[j.index()]
                .binary_search(&i.0)
                .expect("community adjacency out of sync");
            self.community[j.index()].remove(pos_j);
            self.community_edges -= 1;
            true
        } else {
            false
        }
    }

    pub fn is_connectivity_connected(&self) -> bool {
        let n = self.peer_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0u32];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for &nb in &self.connectivity[x as usize] {
                if !seen[nb as usize] {
                    seen[nb as usize] = true;
                    count += 1;
                    stack.push(nb);
                }
            }
        }
        count == n
    }

    /// Order-independent digest of the connectivity edge set, used to audit
    /// that it never changes over a run.
    pub fn connectivity_signature(&self) -> u64 {
        let mut acc = 0u64;
        for (i, adj) in self.connectivity.iter().enumerate() {
            for &j in adj {
                if (i as u32) < j {
                    acc = acc.wrapping_add(mix_edge(i as u32, j));
                }
            }
        }
        acc.wrapping_add(self.connectivity_edges as u64)
    }

    /// Full structural audit: degree caps, sorted symmetric adjacency, no self
    /// loops, disjoint edge classes, connectivity still connected.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.peer_count();
        let mut community_total = 0usize;
        for x in 0..n {
            let peer = PeerId(x as u32);
            if self.ric(peer) > self.edge_limit + 1e-12 {
                return Err(format!("peer {x}: RIC {} exceeds edge limit {}", self.ric(peer), self.edge_limit));
            }
            for (label, adj) in [("connectivity", &self.connectivity[x]), ("community", &self.community[x])] {
                if adj.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(format!("peer {x}: {label} adjacency not strictly sorted"));
                }
                for &j in adj {
                    if j as usize >= n {
                        return Err(format!("peer {x}: {label} edge to unknown peer {j}"));
                    }
                    if j as usize == x {
                        return Err(format!("peer {x}: {label} self loop"));
                    }
                }
            }
            for &j in &self.community[x] {
                if self.connectivity[x].binary_search(&j).is_ok() {
                    return Err(format!("edge ({x}, {j}) present in both edge classes"));
                }
                if self.community[j as usize].binary_search(&(x as u32)).is_err() {
                    return Err(format!("community edge ({x}, {j}) not symmetric"));
                }
            }
            for &j in &self.connectivity[x] {
                if self.connectivity[j as usize].binary_search(&(x as u32)).is_err() {
                    return Err(format!("connectivity edge ({x}, {j}) not symmetric"));
                }
            }
            community_total += self.community[x].len();
        }
        if community_total != 2 * self.community_edges {
            return Err("community edge count out of sync with adjacency".to_owned());
        }
        if !self.is_connectivity_connected() {
            return Err("connectivity graph disconnected".to_owned());
        }
        Ok(())
    }

    /// Dump all edges, one per line: `<i> <j> <C|M>`.
    pub fn write_edge_list<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (i, adj) in self.connectivity.iter().enumerate() {
            for &j in adj {
                if (i as u32) < j {
                    writeln!(w, "{i} {j} C")?;
                }
            }
        }
        for (i, adj) in self.community.iter().enumerate() {
            for &j in adj {
                if (i as u32) < j {
                    writeln!(w, "{i} {j} M")?;
                }
            }
        }
        Ok(())
    }
}

fn mix_edge(i: u32, j: u32) -> u64 {
    let mut x = ((i as u64) << 32) | j as u64;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
