//! Malicious-peer behaviour: the two threat models, the degree of deception,
//! and the per-generation churn draw.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::overlay::{OverlayGraph, PeerId};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreatModel {
    /// Serve authentic files occasionally (with the degree-of-deception
    /// probability) to masquerade as honest.
    A,
    /// Serve authentic files until community connectivity hits the edge
    /// limit, then turn to fakes for good.
    B,
}

impl std::str::FromStr for ThreatModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(ThreatModel::A),
            "B" | "b" => Ok(ThreatModel::B),
            other => Err(format!("unknown threat model `{other}` (expected A or B)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Disposition {
    Honest,
    MaliciousA,
    MaliciousB { attacking: bool },
}

impl Disposition {
    #[inline]
    pub fn is_malicious(&self) -> bool {
        !matches!(self, Disposition::Honest)
    }

    /// Metrics class: 0 = honest, 1 = malicious.
    #[inline]
    pub fn class(&self) -> usize {
        usize::from(self.is_malicious())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Authentic,
    Fake,
}

impl Outcome {
    #[inline]
    pub fn is_authentic(self) -> bool {
        matches!(self, Outcome::Authentic)
    }
}

/// Mark `floor(fraction * n)` uniformly chosen peers malicious under the
/// given threat model; everyone else stays honest.
pub fn mark_malicious(n: usize, fraction: f64, model: ThreatModel, seed: u64) -> Vec<Disposition> {
    assert!((0.0..=1.0).contains(&fraction), "malicious fraction out of range");
    let mut dispositions = vec![Disposition::Honest; n];
    let count = (fraction * n as f64).floor() as usize;
    let mut rng = rng::stream(seed, rng::STREAM_MALICE, 0);
    for &p in sample_distinct(n, count, &mut rng).iter() {
        dispositions[p as usize] = match model {
            ThreatModel::A => Disposition::MaliciousA,
            ThreatModel::B => Disposition::MaliciousB { attacking: false },
        };
    }
    dispositions
}

/// What the provider serves for a download it agreed to. Model B flips to its
/// attacking phase the first time it is at community capacity; the flip is
/// permanent.
pub fn serve_decision(
    disposition: &mut Disposition,
    graph: &OverlayGraph,
    provider: PeerId,
    deception: f64,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    match disposition {
        Disposition::Honest => Outcome::Authentic,
        Disposition::MaliciousA => {
            if rng.random::<f64>() < deception {
                Outcome::Authentic
            } else {
                Outcome::Fake
            }
        }
        Disposition::MaliciousB { attacking } => {
            if !*attacking && graph.at_capacity(provider) {
                *attacking = true;
            }
            if *attacking {
                Outcome::Fake
            } else {
                Outcome::Authentic
            }
        }
    }
}

/// Draw the peers that sit out this generation, sorted ascending.
pub fn draw_churn_set(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    assert!((0.0..1.0).contains(&fraction), "churn fraction out of range");
    let count = (fraction * n as f64).floor() as usize;
    let mut set = sample_distinct(n, count, rng);
    set.sort_unstable();
    set
}

/// `count` distinct values from `0..n` via a partial Fisher-Yates pass.
fn sample_distinct(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    debug_assert!(count <= n);
    let mut pool: Vec<u32> = (0..n as u32).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::OverlayGraph;

    #[test]
    fn marks_expected_fractions() {
        let d = mark_malicious(6000, 0.10, ThreatModel::A, 1);
        assert_eq!(d.iter().filter(|x| x.is_malicious()).count(), 600);
        let d = mark_malicious(6000, 0.0, ThreatModel::A, 1);
        assert!(d.iter().all(|x| !x.is_malicious()));
        let d = mark_malicious(500, 0.40, ThreatModel::B, 2);
        assert_eq!(d.iter().filter(|x| x.is_malicious()).count(), 200);
        // deterministic for a fixed seed
        assert_eq!(mark_malicious(100, 0.3, ThreatModel::A, 9), mark_malicious(100, 0.3, ThreatModel::A, 9));
    }

    #[test]
    fn honest_peers_always_serve_authentic() {
        let g = OverlayGraph::generate_power_law(10, 2, 2.0, 3).unwrap();
        let mut rng = rng::stream(3, rng::STREAM_QUERY, 0);
        let mut d = Disposition::Honest;
        for _ in 0..100 {
            assert_eq!(serve_decision(&mut d, &g, PeerId(1), 0.1, &mut rng), Outcome::Authentic);
        }
    }

    #[test]
    fn model_a_deception_rate() {
        let g = OverlayGraph::generate_power_law(10, 2, 2.0, 3).unwrap();
        let mut rng = rng::stream(4, rng::STREAM_QUERY, 0);
        let mut d = Disposition::MaliciousA;
        let mut authentic = 0usize;
        for _ in 0..10_000 {
            if serve_decision(&mut d, &g, PeerId(1), 0.1, &mut rng).is_authentic() {
                authentic += 1;
            }
        }
        let fraction = authentic as f64 / 10_000.0;
        assert!((fraction - 0.1).abs() < 0.01, "authentic fraction {fraction}");
    }

    #[test]
    fn model_b_flips_at_capacity_and_stays() {
        // path of 4: peers 0 and 3 have initial degree 1, cap of one extra edge
        let mut g = OverlayGraph::from_connectivity_edges(4, &[(0, 1), (1, 2), (2, 3)], 2.0).unwrap();
        let mut rng = rng::stream(5, rng::STREAM_QUERY, 0);
        let mut d = Disposition::MaliciousB { attacking: false };
        assert_eq!(serve_decision(&mut d, &g, PeerId(0), 0.1, &mut rng), Outcome::Authentic);
        assert!(g.add_community_edge(PeerId(0), PeerId(3)));
        assert!(g.at_capacity(PeerId(0)));
        assert_eq!(serve_decision(&mut d, &g, PeerId(0), 0.1, &mut rng), Outcome::Fake);
        // even after losing the edge the phase never reverts
        g.remove_community_edge(PeerId(0), PeerId(3));
        assert_eq!(serve_decision(&mut d, &g, PeerId(0), 0.1, &mut rng), Outcome::Fake);
        assert_eq!(d, Disposition::MaliciousB { attacking: true });
    }

    #[test]
    fn churn_draw_bounds() {
        let mut rng = rng::stream(6, rng::STREAM_CHURN, 0);
        assert!(draw_churn_set(100, 0.0, &mut rng).is_empty());
        let set = draw_churn_set(100, 0.1, &mut rng);
        assert_eq!(set.len(), 10);
        assert!(set.windows(2).all(|w| w[0] < w[1]), "sorted and distinct");
    }
}
