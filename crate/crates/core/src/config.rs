//! Run configuration: defaults, the flat `key = value` config file format,
//! and command-line overrides (precedence: CLI > file > defaults).

use std::path::Path;

use crate::adversary::ThreatModel;
use crate::error::SimError;
use crate::privacy::PrivacyMode;

#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Number of peers in the overlay.
    pub peers: usize,
    /// Edges brought in by each new node of the power-law generator.
    pub ba_m: usize,
    /// Number of content categories.
    pub categories: u16,
    /// Zipf exponent for category popularity and file ranks.
    pub zipf_alpha: f64,
    /// Cap on a peer's degree relative to its initial degree; must exceed 1.
    pub edge_limit: f64,
    /// Probability an authentic download proposes a community edge.
    pub degree_of_rewiring: f64,
    /// Probability a model-A malicious peer serves an authentic file.
    pub degree_of_deception: f64,
    pub malicious_fraction: f64,
    pub threat_model: ThreatModel,
    pub churn_fraction: f64,
    pub bfs_ttl: u32,
    pub dfs_ttl: u32,
    /// Poisson budget of searches per generation.
    pub searches_per_generation: usize,
    pub generations: u32,
    pub privacy: PrivacyMode,
    /// Revealed bits of the handle digest in the partial-hash scheme.
    pub hash_prefix_bits: u8,
    pub bloom_m: usize,
    pub bloom_k: u32,
    pub files_per_peer: usize,
    pub files_per_category: u32,
    pub max_fanout: usize,
    /// Peers sampled as path targets for closeness/ASPD computation.
    pub cc_sample: usize,
    /// Decay applied to reputation counts before each direct update; 1 keeps
    /// full history.
    pub recency_rho: f64,
    /// Path length substituted for community-disconnected pairs.
    pub unreachable_path_len: u32,
    /// Draw exactly `searches_per_generation` queries instead of treating it
    /// as a Poisson budget.
    pub exact_queries: bool,
    /// Emit query/adaptation/protocol traces when writing to a directory.
    pub trace: bool,
    /// Emit per-generation trust snapshots when writing to a directory.
    pub trust_snapshots: bool,
    /// Dump the overlay edge list every n generations (0 = never).
    pub graph_dump_interval: u32,
    /// Re-audit graph invariants after every search (slows the run).
    pub audit: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            peers: 6000,
            ba_m: 3,
            categories: 32,
            zipf_alpha: 0.8,
            edge_limit: 2.0,
            degree_of_rewiring: 0.3,
            degree_of_deception: 0.1,
            malicious_fraction: 0.1,
            threat_model: ThreatModel::A,
            churn_fraction: 0.1,
            bfs_ttl: 5,
            dfs_ttl: 10,
            searches_per_generation: 5000,
            generations: 100,
            privacy: PrivacyMode::Off,
            hash_prefix_bits: 16,
            bloom_m: 1024,
            bloom_k: 7,
            files_per_peer: 20,
            files_per_category: 100,
            max_fanout: 10,
            cc_sample: 200,
            recency_rho: 1.0,
            unreachable_path_len: 15,
            exact_queries: false,
            trace: false,
            trust_snapshots: false,
            graph_dump_interval: 0,
            audit: false,
            seed: 42,
        }
    }
}

impl SimConfig {
    /// Set one configuration key from its textual form.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        let value = value.trim();
        macro_rules! parse {
            ($field:expr) => {
                $field = value
                    .parse()
                    .map_err(|e| SimError::config(key, format!("cannot parse `{value}`: {e}")))?
            };
        }
        match key {
            "peers" => parse!(self.peers),
            "ba_m" => parse!(self.ba_m),
            "categories" => parse!(self.categories),
            "zipf_alpha" => parse!(self.zipf_alpha),
            "edge_limit" => parse!(self.edge_limit),
            "degree_of_rewiring" => parse!(self.degree_of_rewiring),
            "degree_of_deception" => parse!(self.degree_of_deception),
            "malicious_fraction" => parse!(self.malicious_fraction),
            "threat_model" => parse!(self.threat_model),
            "churn_fraction" => parse!(self.churn_fraction),
            "bfs_ttl" => parse!(self.bfs_ttl),
            "dfs_ttl" => parse!(self.dfs_ttl),
            "searches_per_generation" => parse!(self.searches_per_generation),
            "generations" => parse!(self.generations),
            "privacy" => parse!(self.privacy),
            "hash_prefix_bits" => parse!(self.hash_prefix_bits),
            "bloom_m" => parse!(self.bloom_m),
            "bloom_k" => parse!(self.bloom_k),
            "files_per_peer" => parse!(self.files_per_peer),
            "files_per_category" => parse!(self.files_per_category),
            "max_fanout" => parse!(self.max_fanout),
            "cc_sample" => parse!(self.cc_sample),
            "recency_rho" => parse!(self.recency_rho),
            "unreachable_path_len" => parse!(self.unreachable_path_len),
            "exact_queries" => parse!(self.exact_queries),
            "trace" => parse!(self.trace),
            "trust_snapshots" => parse!(self.trust_snapshots),
            "graph_dump_interval" => parse!(self.graph_dump_interval),
            "audit" => parse!(self.audit),
            "seed" => parse!(self.seed),
            other => return Err(SimError::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Apply `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), SimError> {
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::config(line, "expected `key = value`"))?;
            self.set_key(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SimError::config(path.display().to_string(), format!("cannot read config file: {e}"))
        })?;
        self.apply_text(&text)
    }

    /// Apply `--key value` style overrides.
    pub fn apply_overrides(&mut self, pairs: &[(String, String)]) -> Result<(), SimError> {
        for (key, value) in pairs {
            self.set_key(key, value)?;
        }
        Ok(())
    }

    /// Full load path: defaults, then the optional file, then CLI overrides,
    /// then validation.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<SimConfig, SimError> {
        let mut cfg = SimConfig::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_overrides(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.edge_limit <= 1.0 {
            return Err(SimError::config(
                "edge_limit",
                format!("must be > 1 (the degree budget divides by edge_limit - 1); got {}", self.edge_limit),
            ));
        }
        if self.ba_m < 1 {
            return Err(SimError::config("ba_m", "must be at least 1"));
        }
        if self.peers < self.ba_m + 1 {
            return Err(SimError::config(
                "peers",
                format!("need at least ba_m + 1 = {} peers", self.ba_m + 1),
            ));
        }
        if self.categories < 6 {
            return Err(SimError::config("categories", "need at least 6 categories"));
        }
        if self.zipf_alpha <= 0.0 {
            return Err(SimError::config("zipf_alpha", "must be positive"));
        }
        for (key, value) in [
            ("degree_of_rewiring", self.degree_of_rewiring),
            ("degree_of_deception", self.degree_of_deception),
            ("malicious_fraction", self.malicious_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::config(key, format!("must lie in [0, 1]; got {value}")));
            }
        }
        if !(0.0..1.0).contains(&self.churn_fraction) {
            return Err(SimError::config(
                "churn_fraction",
                format!("must lie in [0, 1); got {}", self.churn_fraction),
            ));
        }
        if self.bfs_ttl < 1 || self.dfs_ttl < 1 {
            return Err(SimError::config("bfs_ttl", "TTL values must be at least 1"));
        }
        if self.generations < 1 {
            return Err(SimError::config("generations", "must run at least one generation"));
        }
        if !(0.0..=1.0).contains(&self.recency_rho) {
            return Err(SimError::config("recency_rho", "must lie in [0, 1]"));
        }
        if self.hash_prefix_bits < 1 || self.hash_prefix_bits > 64 {
            return Err(SimError::config("hash_prefix_bits", "must lie in 1..=64"));
        }
        if self.bloom_m < 8 || self.bloom_k < 1 {
            return Err(SimError::config("bloom_m", "bloom filter needs m >= 8 and k >= 1"));
        }
        if self.max_fanout < 1 {
            return Err(SimError::config("max_fanout", "must be at least 1"));
        }
        if self.files_per_peer < 1 || self.files_per_category < 1 {
            return Err(SimError::config("files_per_peer", "content model needs at least one file"));
        }
        if self.unreachable_path_len < 1 {
            return Err(SimError::config("unreachable_path_len", "must be at least 1"));
        }
        if self.cc_sample < 2 {
            return Err(SimError::config("cc_sample", "need at least two sampled peers"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn file_text_and_overrides_with_precedence() {
        let mut cfg = SimConfig::default();
        cfg.apply_text("peers = 1000  # desk scale\nmalicious_fraction = 0.2\n\n# comment\nprivacy = proxy\n")
            .unwrap();
        assert_eq!(cfg.peers, 1000);
        assert_eq!(cfg.privacy, PrivacyMode::Proxy);
        cfg.apply_overrides(&[("peers".into(), "500".into())]).unwrap();
        assert_eq!(cfg.peers, 500, "CLI overrides the file");
        assert_eq!(cfg.malicious_fraction, 0.2, "file overrides defaults");
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let mut cfg = SimConfig::default();
        let err = cfg.set_key("edge_limitt", "2.0").unwrap_err();
        assert!(err.to_string().contains("edge_limitt"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unsatisfiable_edge_limit_is_rejected_with_explanation() {
        let mut cfg = SimConfig::default();
        cfg.set_key("edge_limit", "0.3").unwrap();
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("edge_limit"));
        assert!(msg.contains("> 1"), "must cite the > 1 requirement: {msg}");
    }

    #[test]
    fn malformed_values_are_config_errors() {
        let mut cfg = SimConfig::default();
        assert!(cfg.set_key("peers", "many").is_err());
        assert!(cfg.set_key("threat_model", "C").is_err());
        assert!(cfg.set_key("privacy", "both").is_err());
        assert!(cfg.apply_text("peers 1000").is_err(), "missing equals sign");
    }
}
