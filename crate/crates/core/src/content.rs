//! Content model: zipf-distributed categories and files per peer, the Poisson
//! query workload, and the churn-time library exchange.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use sha2::{Digest, Sha256};

use crate::overlay::PeerId;
use crate::rng;

pub const MIN_CATEGORIES_PER_PEER: usize = 3;
pub const MAX_CATEGORIES_PER_PEER: usize = 6;

/// A shared file: content category plus popularity rank within the category.
/// Categories and ranks are 1-based; category 1 is the most popular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileId {
    pub category: u16,
    pub rank: u32,
}

impl FileId {
    pub fn new(category: u16, rank: u32) -> Self {
        debug_assert!(category >= 1 && rank >= 1);
        FileId { category, rank }
    }

    /// Canonical byte form of the data handle used for hashing.
    pub fn handle_bytes(self) -> [u8; 6] {
        let mut b = [0u8; 6];
        b[0..2].copy_from_slice(&self.category.to_le_bytes());
        b[2..6].copy_from_slice(&self.rank.to_le_bytes());
        b
    }
}

/// Unnormalized zipf weight `rank^(-alpha)`. Callers normalize over their
/// support.
pub fn zipf_weight(rank: u32, alpha: f64) -> f64 {
    assert!(rank >= 1, "zipf rank must be >= 1");
    assert!(alpha > 0.0, "zipf exponent must be positive");
    (rank as f64).powf(-alpha)
}

/// SHA-256 digest of a file's data handle.
pub fn handle_digest(file: FileId) -> [u8; 32] {
    Sha256::digest(file.handle_bytes()).into()
}

/// The first `len` bits of a handle digest, as revealed in a partial-hash
/// lookup request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HashPrefix {
    bits: u64,
    len: u8,
}

impl HashPrefix {
    pub fn of_digest(digest: &[u8; 32], len: u8) -> Self {
        assert!(len >= 1 && len <= 64, "prefix length must be in 1..=64 bits");
        let head = u64::from_be_bytes(digest[0..8].try_into().unwrap());
        HashPrefix {
            bits: head >> (64 - len),
            len,
        }
    }

    #[inline]
    pub fn len_bits(&self) -> u8 {
        self.len
    }

    #[inline]
    pub fn matches(&self, digest: &[u8; 32]) -> bool {
        let head = u64::from_be_bytes(digest[0..8].try_into().unwrap());
        (head >> (64 - self.len)) == self.bits
    }
}

/// The unrevealed remainder of a digest after the first `skip` bits, packed
/// left-aligned into bytes. This is what partial-hash responders feed into
/// their Bloom filters.
pub fn digest_suffix(digest: &[u8; 32], skip: u8) -> Vec<u8> {
    assert!((skip as usize) < 256);
    let byte_skip = (skip / 8) as usize;
    let bit_skip = (skip % 8) as u32;
    if bit_skip == 0 {
        return digest[byte_skip..].to_vec();
    }
    let mut out = Vec::with_capacity(32 - byte_skip);
    for i in byte_skip..32 {
        let hi = digest[i] << bit_skip;
        let lo = if i + 1 < 32 { digest[i + 1] >> (8 - bit_skip) } else { 0 };
        out.push(hi | lo);
    }
    out
}

/// What one peer shares: its 3-6 interest categories (ascending index, which
/// is descending popularity) and the files it holds in them.
#[derive(Clone, Debug, Default)]
pub struct PeerLibrary {
    pub owner: PeerId,
    content: LibraryContent,
}

#[derive(Clone, Debug, Default)]
struct LibraryContent {
    categories: Vec<u16>,
    files: Vec<FileId>,
    digests: Vec<[u8; 32]>,
    /// Cumulative normalized zipf weights over `categories`; the peer's
    /// interest level in each of its categories.
    interest_cum: Vec<f64>,
}

impl PeerLibrary {
    /// Test-only constructor with pinned categories and files.
    #[cfg(test)]
    pub fn synthetic(owner: PeerId, mut categories: Vec<u16>, mut files: Vec<FileId>, alpha: f64) -> Self {
        categories.sort_unstable();
        categories.dedup();
        files.sort_unstable();
        debug_assert!(files.iter().all(|f| categories.binary_search(&f.category).is_ok()));
        let digests = files.iter().map(|&f| handle_digest(f)).collect();
        let interest_cum = cumulative(categories.iter().map(|&c| zipf_weight(c as u32, alpha)));
        PeerLibrary {
            owner,
            content: LibraryContent { categories, files, digests, interest_cum },
        }
    }

    pub fn categories(&self) -> &[u16] {
        &self.content.categories
    }

    pub fn files(&self) -> &[FileId] {
        &self.content.files
    }

    #[inline]
    pub fn shares_category(&self, c: u16) -> bool {
        self.content.categories.binary_search(&c).is_ok()
    }

    #[inline]
    pub fn has_file(&self, f: FileId) -> bool {
        self.content.files.binary_search(&f).is_ok()
    }

    pub fn file_count_in(&self, c: u16) -> usize {
        self.content.files.iter().filter(|f| f.category == c).count()
    }

    /// Draw one of the peer's categories proportionally to its interest.
    pub fn sample_interest_category(&self, rng: &mut ChaCha8Rng) -> u16 {
        let total = *self.content.interest_cum.last().expect("library has categories");
        let x: f64 = rng.random::<f64>() * total;
        let idx = self
            .content
            .interest_cum
            .partition_point(|&c| c <= x)
            .min(self.content.categories.len() - 1);
        self.content.categories[idx]
    }

    pub fn matched_digests<'a>(&'a self, prefix: &'a HashPrefix) -> impl Iterator<Item = &'a [u8; 32]> {
        self.content.digests.iter().filter(move |d| prefix.matches(d))
    }

    pub fn prefix_match_count(&self, prefix: &HashPrefix) -> usize {
        self.matched_digests(prefix).count()
    }
}

/// Lay out largest-remainder integer shares of `total` proportional to
/// `weights`. For strictly decreasing weights the shares are non-increasing.
fn allocate_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, &w) in weights.iter().enumerate() {
        let share = w / sum * total as f64;
        let base = share.floor() as usize;
        counts.push(base);
        assigned += base;
        fracs.push((share - base as f64, i));
    }
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in fracs.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

pub struct ContentParams {
    pub categories: u16,
    pub zipf_alpha: f64,
    pub files_per_peer: usize,
    pub files_per_category: u32,
}

/// Assign every peer 3-6 categories drawn with zipf popularity weighting and
/// a zipf-ranked file set within them. Popular categories end up replicated
/// on more peers and carry more files per holder.
pub fn assign_content(n_peers: usize, params: &ContentParams, seed: u64) -> Vec<PeerLibrary> {
    assert!(params.categories >= MAX_CATEGORIES_PER_PEER as u16, "need at least 6 categories");
    let mut rng = rng::stream(seed, rng::STREAM_CONTENT, 0);
    let cat_cum: Vec<f64> = cumulative(
        (1..=params.categories).map(|c| zipf_weight(c as u32, params.zipf_alpha)),
    );
    let mut libraries = Vec::with_capacity(n_peers);
    for p in 0..n_peers {
        let k = rng.random_range(MIN_CATEGORIES_PER_PEER..=MAX_CATEGORIES_PER_PEER);
        let mut categories: Vec<u16> = Vec::with_capacity(k);
        while categories.len() < k {
            let c = sample_cumulative(&cat_cum, &mut rng) as u16 + 1;
            if !categories.contains(&c) {
                categories.push(c);
            }
        }
        categories.sort_unstable();

        let weights: Vec<f64> = categories
            .iter()
            .map(|&c| zipf_weight(c as u32, params.zipf_alpha))
            .collect();
        let counts = allocate_counts(&weights, params.files_per_peer);

        let mut files: Vec<FileId> = Vec::with_capacity(params.files_per_peer);
        let rank_cum: Vec<f64> = cumulative(
            (1..=params.files_per_category).map(|r| zipf_weight(r, params.zipf_alpha)),
        );
        for (ci, &c) in categories.iter().enumerate() {
            let want = counts[ci].min(params.files_per_category as usize);
            let mut ranks: Vec<u32> = Vec::with_capacity(want);
            while ranks.len() < want {
                let r = sample_cumulative(&rank_cum, &mut rng) as u32 + 1;
                if !ranks.contains(&r) {
                    ranks.push(r);
                }
            }
            for r in ranks {
                files.push(FileId::new(c, r));
            }
        }
        files.sort_unstable();
        let digests = files.iter().map(|&f| handle_digest(f)).collect();
        let interest_cum = cumulative(weights.iter().copied());
        libraries.push(PeerLibrary {
            owner: PeerId(p as u32),
            content: LibraryContent {
                categories,
                files,
                digests,
                interest_cum,
            },
        });
    }
    libraries
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn sample_cumulative(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cum.last().unwrap();
    let x: f64 = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}

/// Network-wide view of which ranks exist per category, with zipf weights for
/// target sampling. Built once at start-up; churn exchanges permute whole
/// libraries so the union never changes.
pub struct Catalog {
    per_category: Vec<CategoryRanks>,
}

struct CategoryRanks {
    ranks: Vec<u32>,
    cum: Vec<f64>,
}

impl Catalog {
    pub fn build(libraries: &[PeerLibrary], categories: u16, alpha: f64) -> Catalog {
        let mut sets: Vec<Vec<u32>> = vec![Vec::new(); categories as usize + 1];
        for lib in libraries {
            for f in lib.files() {
                sets[f.category as usize].push(f.rank);
            }
        }
        let per_category = sets
            .into_iter()
            .map(|mut ranks| {
                ranks.sort_unstable();
                ranks.dedup();
                let cum = cumulative(ranks.iter().map(|&r| zipf_weight(r, alpha)));
                CategoryRanks { ranks, cum }
            })
            .collect();
        Catalog { per_category }
    }

    pub fn sample_rank(&self, category: u16, rng: &mut ChaCha8Rng) -> Option<u32> {
        let entry = &self.per_category[category as usize];
        if entry.ranks.is_empty() {
            return None;
        }
        Some(entry.ranks[sample_cumulative(&entry.cum, rng)])
    }

    pub fn distinct_files(&self, category: u16) -> usize {
        self.per_category[category as usize].ranks.len()
    }
}

/// One search request in a generation's workload.
#[derive(Clone, Copy, Debug)]
pub struct Query {
    pub initiator: PeerId,
    pub target: FileId,
}

pub struct WorkloadParams {
    pub total_queries: usize,
    pub exact: bool,
}

/// Draw the generation's queries. Each active peer issues `K ~ Poisson(M/N)`
/// queries (N = active peers), each targeting a file in one of its interest
/// categories that exists somewhere in the network. In exact mode, exactly
/// `M` queries are drawn from uniformly chosen active initiators.
pub fn sample_queries(
    libraries: &[PeerLibrary],
    active: &[bool],
    catalog: &Catalog,
    params: &WorkloadParams,
    rng: &mut ChaCha8Rng,
) -> Vec<Query> {
    let active_peers: Vec<u32> = (0..libraries.len() as u32)
        .filter(|&p| active[p as usize])
        .collect();
    if params.total_queries == 0 || active_peers.is_empty() {
        return Vec::new();
    }
    let mut workload = Vec::with_capacity(params.total_queries + params.total_queries / 4);
    if params.exact {
        for _ in 0..params.total_queries {
            let p = active_peers[rng.random_range(0..active_peers.len())];
            if let Some(q) = draw_query(PeerId(p), libraries, catalog, rng) {
                workload.push(q);
            }
        }
    } else {
        let lambda = params.total_queries as f64 / active_peers.len() as f64;
        let poisson = Poisson::new(lambda).expect("positive query rate");
        for &p in &active_peers {
            let k = poisson.sample(rng) as usize;
            for _ in 0..k {
                if let Some(q) = draw_query(PeerId(p), libraries, catalog, rng) {
                    workload.push(q);
                }
            }
        }
    }
    workload
}

fn draw_query(
    initiator: PeerId,
    libraries: &[PeerLibrary],
    catalog: &Catalog,
    rng: &mut ChaCha8Rng,
) -> Option<Query> {
    let lib = &libraries[initiator.index()];
    let category = lib.sample_interest_category(rng);
    let rank = catalog.sample_rank(category, rng)?;
    Some(Query {
        initiator,
        target: FileId::new(category, rank),
    })
}

/// Permute the libraries of churned peers (a single random cycle, so every
/// peer with at least one partner receives new content) while leaving the
/// network-wide multiset of libraries untouched. Fewer than two churned peers
/// is a no-op.
pub fn churn_exchange(libraries: &mut [PeerLibrary], churned: &[PeerId], rng: &mut ChaCha8Rng) {
    if churned.len() < 2 {
        return;
    }
    let mut order: Vec<usize> = churned.iter().map(|p| p.index()).collect();
    shuffle(&mut order, rng);
    let last = std::mem::take(&mut libraries[order[order.len() - 1]].content);
    for w in (1..order.len()).rev() {
        libraries[order[w]].content = std::mem::take(&mut libraries[order[w - 1]].content);
    }
    libraries[order[0]].content = last;
}

fn shuffle(xs: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

/// Per-category census of the live libraries: (category, holders, files).
pub fn content_census(libraries: &[PeerLibrary], categories: u16) -> Vec<(u16, u32, u32)> {
    let mut holders = vec![0u32; categories as usize + 1];
    let mut files = vec![0u32; categories as usize + 1];
    for lib in libraries {
        for &c in lib.categories() {
            holders[c as usize] += 1;
        }
        for f in lib.files() {
            files[f.category as usize] += 1;
        }
    }
    (1..=categories)
        .map(|c| (c, holders[c as usize], files[c as usize]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ContentParams {
        ContentParams {
            categories: 32,
            zipf_alpha: 0.8,
            files_per_peer: 20,
            files_per_category: 100,
        }
    }

    #[test]
    fn zipf_weight_examples() {
        assert_relative_eq!(zipf_weight(1, 0.8), 1.0, max_relative = 1e-12);
        assert_relative_eq!(
            zipf_weight(1, 0.8) / zipf_weight(2, 0.8),
            2f64.powf(0.8),
            max_relative = 1e-12
        );
        assert_relative_eq!(zipf_weight(4, 1.0), 0.25, max_relative = 1e-12);
    }

    #[test]
    #[should_panic(expected = "rank must be >= 1")]
    fn zipf_weight_rejects_rank_zero() {
        zipf_weight(0, 0.8);
    }

    #[test]
    fn assignment_respects_per_peer_constraints() {
        let libs = assign_content(500, &params(), 3);
        for lib in &libs {
            let k = lib.categories().len();
            assert!((MIN_CATEGORIES_PER_PEER..=MAX_CATEGORIES_PER_PEER).contains(&k));
            assert_eq!(lib.files().len(), 20);
            for f in lib.files() {
                assert!(lib.shares_category(f.category));
            }
            // categories ascend in index == descend in popularity, so file
            // counts must be non-increasing along the list
            let counts: Vec<usize> = lib.categories().iter().map(|&c| lib.file_count_in(c)).collect();
            assert!(counts.windows(2).all(|w| w[0] >= w[1]), "counts {counts:?}");
        }
    }

    #[test]
    fn popular_categories_are_more_replicated() {
        let libs = assign_content(2000, &params(), 9);
        let census = content_census(&libs, 32);
        let holders: Vec<u32> = census.iter().map(|&(_, h, _)| h).collect();
        assert!(holders[0] > holders[31], "category 1 should out-replicate category 32");
        // Smooth sampling noise by comparing averages over blocks of 8
        // consecutive categories; the popularity curve must decay.
        let block: Vec<f64> = holders
            .chunks(8)
            .map(|c| c.iter().map(|&h| h as f64).sum::<f64>() / c.len() as f64)
            .collect();
        assert!(block.windows(2).all(|w| w[0] > w[1]), "blocks {block:?}");
    }

    #[test]
    fn poisson_rate_matches_workload_budget() {
        let libs = assign_content(2000, &params(), 4);
        let catalog = Catalog::build(&libs, 32, 0.8);
        let active = vec![true; libs.len()];
        let generations = 20usize;
        let m = 2000usize;
        let lambda = m as f64 / libs.len() as f64;
        let mut total = 0usize;
        for g in 0..generations {
            let mut rng = rng::stream(77, rng::STREAM_WORKLOAD, g as u64);
            let wl = sample_queries(
                &libs,
                &active,
                &catalog,
                &WorkloadParams { total_queries: m, exact: false },
                &mut rng,
            );
            for q in &wl {
                assert!(libs[q.initiator.index()].shares_category(q.target.category));
                assert!(catalog.distinct_files(q.target.category) > 0);
            }
            total += wl.len();
        }
        let mean = total as f64 / (libs.len() * generations) as f64;
        let tolerance = 3.0 * (lambda / (libs.len() * generations) as f64).sqrt();
        assert!(
            (mean - lambda).abs() <= tolerance,
            "sample mean {mean} vs lambda {lambda} (tolerance {tolerance})"
        );
    }

    #[test]
    fn poisson_zero_count_probability() {
        // lambda = 5000/6000; share of peers issuing no query approaches e^-lambda
        let libs = assign_content(6000, &params(), 21);
        let catalog = Catalog::build(&libs, 32, 0.8);
        let active = vec![true; libs.len()];
        let mut rng = rng::stream(21, rng::STREAM_WORKLOAD, 0);
        let wl = sample_queries(
            &libs,
            &active,
            &catalog,
            &WorkloadParams { total_queries: 5000, exact: false },
            &mut rng,
        );
        let mut issued = vec![false; libs.len()];
        for q in &wl {
            issued[q.initiator.index()] = true;
        }
        let idle = issued.iter().filter(|&&b| !b).count() as f64 / libs.len() as f64;
        let expected = (-5000.0f64 / 6000.0).exp();
        assert!(
            (idle - expected).abs() < 0.02,
            "idle fraction {idle} vs e^-lambda {expected}"
        );
    }

    #[test]
    fn zero_budget_means_empty_workload() {
        let libs = assign_content(50, &params(), 5);
        let catalog = Catalog::build(&libs, 32, 0.8);
        let active = vec![true; libs.len()];
        let mut rng = rng::stream(5, rng::STREAM_WORKLOAD, 0);
        let wl = sample_queries(
            &libs,
            &active,
            &catalog,
            &WorkloadParams { total_queries: 0, exact: false },
            &mut rng,
        );
        assert!(wl.is_empty());
    }

    #[test]
    fn exact_mode_issues_exactly_m() {
        let libs = assign_content(200, &params(), 6);
        let catalog = Catalog::build(&libs, 32, 0.8);
        let active = vec![true; libs.len()];
        let mut rng = rng::stream(6, rng::STREAM_WORKLOAD, 0);
        let wl = sample_queries(
            &libs,
            &active,
            &catalog,
            &WorkloadParams { total_queries: 123, exact: true },
            &mut rng,
        );
        assert_eq!(wl.len(), 123);
    }

    #[test]
    fn churn_exchange_swaps_and_preserves_multiset() {
        let mut libs = assign_content(10, &params(), 8);
        let mut all_files = |libs: &[PeerLibrary]| {
            let mut v: Vec<Vec<FileId>> = libs.iter().map(|l| l.files().to_vec()).collect();
            v.sort();
            v
        };
        let before = all_files(&libs);
        let a = libs[2].files().to_vec();
        let b = libs[7].files().to_vec();
        let mut rng = rng::stream(8, rng::STREAM_CHURN, 0);
        churn_exchange(&mut libs, &[PeerId(2), PeerId(7)], &mut rng);
        assert_eq!(libs[2].files(), b.as_slice());
        assert_eq!(libs[7].files(), a.as_slice());
        assert_eq!(all_files(&libs), before);
        assert_eq!(libs[2].owner, PeerId(2));

        // singleton: nothing to exchange with
        let only = libs[3].files().to_vec();
        churn_exchange(&mut libs, &[PeerId(3)], &mut rng);
        assert_eq!(libs[3].files(), only.as_slice());
    }

    #[test]
    fn prefix_and_suffix_split() {
        let f = FileId::new(3, 17);
        let d = handle_digest(f);
        for len in [4u8, 8, 16, 33] {
            let p = HashPrefix::of_digest(&d, len);
            assert!(p.matches(&d));
            let mut other = d;
            other[0] ^= 0x80; // flip the very first bit
            assert!(!p.matches(&other));
        }
        // byte-aligned suffix is a plain tail slice
        assert_eq!(digest_suffix(&d, 16), d[2..].to_vec());
        // unaligned suffix shifts bits left
        let s = digest_suffix(&d, 4);
        assert_eq!(s.len(), 32 - 0);
        assert_eq!(s[0], (d[0] << 4) | (d[1] >> 4));
    }
}
