use trustnet::overlay::PeerId;
use trustnet::{SimConfig, Simulation};

fn main() {
    let t0 = std::time::Instant::now();
    let cfg = SimConfig {
        peers: 1000,
        ba_m: 3,
        searches_per_generation: 1000,
        generations: 50,
        malicious_fraction: 0.2,
        seed: 11,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let out = sim.run();
    let last = out.reports.last().unwrap();
    println!("desk run: {:?}", t0.elapsed());
    println!(
        "last gen ear={:?} tqpo={}/{} cc_h={:?} cc_m={:?} aspd_h={:?} aspd_m={:?}",
        last.ear, last.classes[0].tqpo, last.classes[1].tqpo,
        last.classes[0].mean_cc, last.classes[1].mean_cc,
        last.classes[0].aspd, last.classes[1].aspd
    );
    println!("additions={} deletions={}", out.edge_additions, out.edge_deletions);

    let graph = sim.graph();
    let disps = trustnet::adversary::mark_malicious(1000, 0.2, trustnet::adversary::ThreatModel::A, 11);
    let (mut hh, mut hm, mut mm) = (0u32, 0u32, 0u32);
    let mut hm_known_good = 0u32;
    let mut hm_unknown = 0u32;
    let mut hm_known_bad = 0u32;
    for p in graph.peers() {
        for &n in graph.community_neighbors(p) {
            if n > p.0 {
                let pm = disps[p.index()].is_malicious();
                let nm = disps[n as usize].is_malicious();
                match (pm, nm) {
                    (false, false) => hh += 1,
                    (true, true) => mm += 1,
                    _ => {
                        hm += 1;
                        let (honest, mal) = if pm { (PeerId(n), p) } else { (p, PeerId(n)) };
                        match sim.trust().cached_trust(honest, mal) {
                            Some(t) if t >= 0.5 => hm_known_good += 1,
                            Some(_) => hm_known_bad += 1,
                            None => hm_unknown += 1,
                        }
                    }
                }
            }
        }
    }
    println!("community edges: hh={hh} hm={hm} mm={mm}");
    println!("hm honest-side views: good-cached={hm_known_good} bad-cached={hm_known_bad} unknown={hm_unknown}");
}
