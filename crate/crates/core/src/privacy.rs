//! Privacy-preserving lookup: proxy search through a trusted community
//! neighbour, partial-hash matching with Bloom-filter elimination, and
//! end-to-end encrypted transfer that keeps the proxy blind to the content.
//!
//! Every session leaves a message trace; the anonymity and blindness claims
//! are checked against that trace, not assumed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::adaptation::{self, AdaptCtx, AdaptParams, DownloadAttempt, EdgeAction};
use crate::adversary::{serve_decision, Disposition, Outcome};
use crate::content::{digest_suffix, handle_digest, FileId, HashPrefix, PeerLibrary};
use crate::error::SimError;
use crate::overlay::{OverlayGraph, PeerId};
use crate::reputation::{TrustStore, TRUST_THRESHOLD};
use crate::search::{self, SearchCtx, SearchParams, Target, VisitStamps};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PrivacyMode {
    #[default]
    Off,
    /// Scheme (a): a trusted peer looks the data up and relays it.
    Proxy,
    /// Schemes (a)+(b): the lookup reveals only a hash prefix; responders
    /// return Bloom filters over the unrevealed remainders.
    Handle,
    /// Schemes (a)+(b)+(c): additionally hide the content from the proxy.
    Full,
}

impl PrivacyMode {
    pub fn is_on(self) -> bool {
        self != PrivacyMode::Off
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyMode::Off => "off",
            PrivacyMode::Proxy => "proxy",
            PrivacyMode::Handle => "handle",
            PrivacyMode::Full => "full",
        }
    }
}

impl std::str::FromStr for PrivacyMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "off" => Ok(PrivacyMode::Off),
            "proxy" => Ok(PrivacyMode::Proxy),
            "handle" => Ok(PrivacyMode::Handle),
            "full" => Ok(PrivacyMode::Full),
            other => Err(format!("unknown privacy mode `{other}` (off|proxy|handle|full)")),
        }
    }
}

// ---------------------------------------------------------------------------
// Bloom filter

/// Plain m-bit Bloom filter with k double-hashed probes. No false negatives;
/// false-positive rate approaches (1 - e^(-k n / m))^k.
#[derive(Clone, Debug)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: usize,
    k: u32,
    inserted: usize,
}

impl BloomFilter {
    pub fn new(m: usize, k: u32) -> Self {
        assert!(m >= 1 && k >= 1);
        BloomFilter {
            bits: vec![0; m.div_ceil(64)],
            m,
            k,
            inserted: 0,
        }
    }

    fn probes(&self, element: &[u8]) -> impl Iterator<Item = usize> + '_ {
        let digest: [u8; 32] = Sha256::digest(element).into();
        let h1 = u64::from_le_bytes(digest[0..8].try_into().unwrap());
        // odd step keeps the probe sequence full-period on power-of-two m
        let h2 = u64::from_le_bytes(digest[8..16].try_into().unwrap()) | 1;
        let m = self.m as u64;
        (0..self.k as u64).map(move |i| (h1.wrapping_add(i.wrapping_mul(h2)) % m) as usize)
    }

    pub fn insert(&mut self, element: &[u8]) {
        let positions: Vec<usize> = self.probes(element).collect();
        for pos in positions {
            self.bits[pos / 64] |= 1 << (pos % 64);
        }
        self.inserted += 1;
    }

    /// `true` means "maybe present"; `false` is definite absence.
    pub fn query(&self, element: &[u8]) -> bool {
        self.probes(element).all(|pos| self.bits[pos / 64] & (1 << (pos % 64)) != 0)
    }

    pub fn inserted(&self) -> usize {
        self.inserted
    }

    /// The classic false-positive estimate for the current load.
    pub fn expected_fpr(&self) -> f64 {
        (1.0 - (-(self.k as f64) * self.inserted as f64 / self.m as f64).exp()).powi(self.k as i32)
    }
}

// ---------------------------------------------------------------------------
// Abstract crypto suite

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CipherBlob {
    recipient: u32,
    pub bytes: Vec<u8>,
    mac: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymBlob {
    pub bytes: Vec<u8>,
    mac: [u8; 32],
}

impl SymBlob {
    /// The on-the-wire form a relay signs.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut v = self.bytes.clone();
        v.extend_from_slice(&self.mac);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionKey(pub [u8; 32]);

impl SessionKey {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut k = [0u8; 32];
        rng.fill(&mut k);
        SessionKey(k)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    signer: u32,
    tag: [u8; 32],
}

/// The primitives the protocols are written against. The simulator verifies
/// protocol structure, not cryptanalysis, so any implementation with the
/// usual inverse and authenticity properties will do.
pub trait CryptoSuite {
    fn hash(&self, data: &[u8]) -> [u8; 32];
    fn asym_encrypt(&self, to: PeerId, plain: &[u8]) -> CipherBlob;
    fn asym_decrypt(&self, as_peer: PeerId, blob: &CipherBlob) -> Result<Vec<u8>, SimError>;
    fn sign(&self, signer: PeerId, message: &[u8]) -> Signature;
    fn verify(&self, signer: PeerId, message: &[u8], signature: &Signature) -> bool;
    fn sym_encrypt(&self, key: &SessionKey, plain: &[u8]) -> SymBlob;
    fn sym_decrypt(&self, key: &SessionKey, blob: &SymBlob) -> Result<Vec<u8>, SimError>;
}

/// Deterministic stand-in for the real primitives: per-peer secrets derived
/// by hashing, XOR keystreams, and hash MACs. Wrong-key decryption and
/// tampering fail loudly, which is all the protocol layer relies on.
#[derive(Clone, Copy, Debug, Default)]
pub struct StubCrypto;

impl StubCrypto {
    fn peer_secret(peer: u32) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"peer-secret");
        h.update(peer.to_le_bytes());
        h.finalize().into()
    }

    fn keystream_xor(secret: &[u8; 32], data: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(data.len());
        for (block, chunk) in data.chunks(32).enumerate() {
            let mut h = Sha256::new();
            h.update(secret);
            h.update((block as u64).to_le_bytes());
            let pad: [u8; 32] = h.finalize().into();
            out.extend(chunk.iter().zip(pad.iter()).map(|(d, p)| d ^ p));
        }
        out
    }

    fn mac(secret: &[u8; 32], data: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"mac");
        h.update(secret);
        h.update(data);
        h.finalize().into()
    }
}

impl CryptoSuite for StubCrypto {
    fn hash(&self, data: &[u8]) -> [u8; 32] {
        Sha256::digest(data).into()
    }

    fn asym_encrypt(&self, to: PeerId, plain: &[u8]) -> CipherBlob {
        let secret = Self::peer_secret(to.0);
        let bytes = Self::keystream_xor(&secret, plain);
        let mac = Self::mac(&secret, &bytes);
        CipherBlob { recipient: to.0, bytes, mac }
    }

    fn asym_decrypt(&self, as_peer: PeerId, blob: &CipherBlob) -> Result<Vec<u8>, SimError> {
        if blob.recipient != as_peer.0 {
            return Err(SimError::Protocol(format!(
                "peer {as_peer} cannot decrypt a message for peer {}",
                blob.recipient
            )));
        }
        let secret = Self::peer_secret(as_peer.0);
        if Self::mac(&secret, &blob.bytes) != blob.mac {
            return Err(SimError::Protocol("ciphertext integrity check failed".into()));
        }
        Ok(Self::keystream_xor(&secret, &blob.bytes))
    }

    fn sign(&self, signer: PeerId, message: &[u8]) -> Signature {
        let secret = Self::peer_secret(signer.0);
        Signature { signer: signer.0, tag: Self::mac(&secret, message) }
    }

    fn verify(&self, signer: PeerId, message: &[u8], signature: &Signature) -> bool {
        let secret = Self::peer_secret(signer.0);
        signature.signer == signer.0 && Self::mac(&secret, message) == signature.tag
    }

    fn sym_encrypt(&self, key: &SessionKey, plain: &[u8]) -> SymBlob {
        let bytes = Self::keystream_xor(&key.0, plain);
        let mac = Self::mac(&key.0, &bytes);
        SymBlob { bytes, mac }
    }

    fn sym_decrypt(&self, key: &SessionKey, blob: &SymBlob) -> Result<Vec<u8>, SimError> {
        if Self::mac(&key.0, &blob.bytes) != blob.mac {
            return Err(SimError::Protocol("session-key integrity check failed".into()));
        }
        Ok(Self::keystream_xor(&key.0, &blob.bytes))
    }
}

// ---------------------------------------------------------------------------
// Content bytes

/// Canonical payload of an authentic copy of a file.
pub fn authentic_bytes(file: FileId) -> Vec<u8> {
    let mut v = b"content:".to_vec();
    v.extend_from_slice(&file.handle_bytes());
    v
}

fn served_bytes(provider: PeerId, file: FileId, outcome: Outcome) -> Vec<u8> {
    match outcome {
        Outcome::Authentic => authentic_bytes(file),
        Outcome::Fake => {
            let mut v = b"fake:".to_vec();
            v.extend_from_slice(&provider.0.to_le_bytes());
            v.extend_from_slice(&file.handle_bytes());
            v
        }
    }
}

// ---------------------------------------------------------------------------
// Protocol trace

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsgType {
    ProxyRequest,
    ProxyResponse,
    PrefixRequest,
    FilterResponse,
    FullRequest,
    NotFound,
    KeyWrap,
    Data,
}

impl MsgType {
    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::ProxyRequest => "proxy_req",
            MsgType::ProxyResponse => "proxy_res",
            MsgType::PrefixRequest => "prefix_req",
            MsgType::FilterResponse => "filter_res",
            MsgType::FullRequest => "full_req",
            MsgType::NotFound => "not_found",
            MsgType::KeyWrap => "key_wrap",
            MsgType::Data => "data",
        }
    }
}

/// One hop of one protocol message. `payload_visible` records whether the
/// receiving peer can read the payload it was handed.
#[derive(Clone, Copy, Debug)]
pub struct ProtocolEvent {
    pub session: u64,
    pub step: u32,
    pub from: u32,
    pub to: u32,
    pub msg: MsgType,
    pub payload_visible: bool,
}

/// Appends a session's events with an auto-incrementing step counter.
pub struct Trace<'a> {
    events: &'a mut Vec<ProtocolEvent>,
    session: u64,
    step: u32,
}

impl<'a> Trace<'a> {
    pub fn new(events: &'a mut Vec<ProtocolEvent>, session: u64) -> Self {
        Trace { events, session, step: 0 }
    }

    fn push(&mut self, from: PeerId, to: PeerId, msg: MsgType, payload_visible: bool) {
        self.events.push(ProtocolEvent {
            session: self.session,
            step: self.step,
            from: from.0,
            to: to.0,
            msg,
            payload_visible,
        });
        self.step += 1;
    }
}

// ---------------------------------------------------------------------------
// Sessions

pub struct SessionCtx<'a> {
    pub graph: &'a mut OverlayGraph,
    pub libraries: &'a [PeerLibrary],
    pub dispositions: &'a mut [Disposition],
    pub active: &'a [bool],
    pub trust: &'a mut TrustStore,
    pub stamps: &'a mut VisitStamps,
    pub rng: &'a mut ChaCha8Rng,
    pub search: SearchParams,
    pub adapt: AdaptParams,
    pub crypto: &'a dyn CryptoSuite,
    pub mode: PrivacyMode,
    pub prefix_bits: u8,
    pub bloom_bits: usize,
    pub bloom_hashes: u32,
    pub tqpo: &'a mut [u32; 2],
    pub query_id: u64,
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub session_id: u64,
    pub requester: PeerId,
    pub proxy: Option<PeerId>,
    /// False when no trusted proxy was available and the search fell back to
    /// the direct, non-private pipeline.
    pub private: bool,
    /// How many suppliers the lookup produced (search responders, or
    /// surviving candidates in the partial-hash schemes).
    pub lookup_responses: usize,
    pub attempts: Vec<DownloadAttempt>,
    pub delivered: bool,
    pub protocol_violation: bool,
    /// Community edges severed by trust discoveries during the session.
    pub discovery_deletions: u32,
    pub events: Vec<ProtocolEvent>,
}

impl SessionOutcome {
    /// No message in the trace travels from the true requester to anyone but
    /// its proxy, so no supplier can observe who asked.
    pub fn anonymity_holds(&self) -> bool {
        let Some(proxy) = self.proxy else { return false };
        self.events
            .iter()
            .filter(|e| e.from == self.requester.0)
            .all(|e| e.to == proxy.0)
    }

    /// Every content-bearing message the proxy receives is opaque to it.
    pub fn proxy_blindness_holds(&self) -> bool {
        let Some(proxy) = self.proxy else { return false };
        self.events
            .iter()
            .filter(|e| e.to == proxy.0 && e.msg == MsgType::Data)
            .all(|e| !e.payload_visible)
    }
}

/// The requester's most trusted active community neighbour, if any qualifies.
pub fn choose_proxy(
    graph: &OverlayGraph,
    trust: &TrustStore,
    active: &[bool],
    requester: PeerId,
) -> Option<PeerId> {
    let mut best: Option<(f64, u32)> = None;
    for &n in graph.community_neighbors(requester) {
        if !active[n as usize] {
            continue;
        }
        let t = trust.view(requester, PeerId(n));
        if t < TRUST_THRESHOLD {
            continue;
        }
        let better = match best {
            None => true,
            Some((bt, bn)) => t > bt || (t == bt && n < bn),
        };
        if better {
            best = Some((t, n));
        }
    }
    best.map(|(_, n)| PeerId(n))
}

/// Run one search under the session's privacy mode. Without an eligible
/// proxy the query degrades to the ordinary pipeline, flagged non-private.
pub fn run_session(ctx: &mut SessionCtx<'_>, session_id: u64, requester: PeerId, target: FileId) -> SessionOutcome {
    debug_assert!(ctx.mode.is_on());
    let mut events = Vec::new();
    let Some(proxy) = choose_proxy(ctx.graph, ctx.trust, ctx.active, requester) else {
        let (responses, attempts, deletions) = direct_pipeline(ctx, requester, target);
        let delivered = attempts.iter().any(|a| a.outcome.is_authentic());
        return SessionOutcome {
            session_id,
            requester,
            proxy: None,
            private: false,
            lookup_responses: responses,
            attempts,
            delivered,
            protocol_violation: false,
            discovery_deletions: deletions,
            events,
        };
    };
    let mut trace = Trace::new(&mut events, session_id);
    let (lookup_responses, attempts, delivered, violation, deletions) = match ctx.mode {
        PrivacyMode::Proxy => proxy_lookup(ctx, &mut trace, requester, proxy, target),
        PrivacyMode::Handle | PrivacyMode::Full => partial_hash_session(ctx, &mut trace, requester, proxy, target),
        PrivacyMode::Off => unreachable!("session started with privacy off"),
    };
    SessionOutcome {
        session_id,
        requester,
        proxy: Some(proxy),
        private: true,
        lookup_responses,
        attempts,
        delivered,
        protocol_violation: violation,
        discovery_deletions: deletions,
        events,
    }
}

fn direct_pipeline(
    ctx: &mut SessionCtx<'_>,
    origin: PeerId,
    target: FileId,
) -> (usize, Vec<DownloadAttempt>, u32) {
    let dispatch = {
        let mut sctx = SearchCtx {
            graph: ctx.graph,
            libraries: ctx.libraries,
            dispositions: ctx.dispositions,
            active: ctx.active,
            trust: ctx.trust,
            params: ctx.search,
            stamps: ctx.stamps,
            rng: ctx.rng,
            tqpo: ctx.tqpo,
            trace: None,
            query_id: ctx.query_id,
        };
        search::dispatch_query(&mut sctx, origin, Target::File(target))
    };
    let mut deletions = 0u32;
    for &(observer, subject) in &dispatch.distrusted {
        if ctx.graph.remove_community_edge(observer, subject) {
            deletions += 1;
        }
    }
    let count = dispatch.responders.len();
    if dispatch.responders.is_empty() {
        return (0, Vec::new(), deletions);
    }
    let mut actx = AdaptCtx {
        graph: ctx.graph,
        dispositions: ctx.dispositions,
        active: ctx.active,
        trust: ctx.trust,
        params: ctx.adapt,
        rng: ctx.rng,
        tqpo: ctx.tqpo,
        discovery_deletions: 0,
    };
    let attempts = adaptation::process_responses(&mut actx, origin, &dispatch.responders);
    deletions += actx.discovery_deletions;
    (count, attempts, deletions)
}

/// Scheme (a): the proxy runs the whole search and download pipeline as if it
/// were the origin, then relays the result. Suppliers only ever talk to the
/// proxy.
fn proxy_lookup(
    ctx: &mut SessionCtx<'_>,
    trace: &mut Trace<'_>,
    requester: PeerId,
    proxy: PeerId,
    target: FileId,
) -> (usize, Vec<DownloadAttempt>, bool, bool, u32) {
    trace.push(requester, proxy, MsgType::ProxyRequest, true);
    let (responses, attempts, deletions) = direct_pipeline(ctx, proxy, target);
    for attempt in &attempts {
        trace.push(proxy, attempt.provider, MsgType::FullRequest, true);
        trace.push(attempt.provider, proxy, MsgType::Data, true);
    }
    let delivered = attempts.iter().any(|a| a.outcome.is_authentic());
    trace.push(proxy, requester, MsgType::ProxyResponse, true);
    (responses, attempts, delivered, false, deletions)
}

#[derive(Clone, Debug)]
pub struct LookupSets {
    /// Peers whose libraries matched the revealed prefix and answered with a
    /// Bloom filter.
    pub respondents: Vec<PeerId>,
    /// Respondents whose filter accepted the requester's suffix.
    pub candidates: Vec<PeerId>,
    /// Community edges severed by trust discoveries while the lookup flooded.
    pub discovery_deletions: u32,
}

/// Scheme (b) lookup: flood the revealed prefix through the proxy, collect
/// Bloom filters over the unrevealed hash remainders, and eliminate every
/// peer whose filter rejects the requester's suffix. True holders always
/// survive.
pub fn partial_hash_lookup(
    ctx: &mut SessionCtx<'_>,
    trace: &mut Trace<'_>,
    requester: PeerId,
    proxy: PeerId,
    target: FileId,
) -> LookupSets {
    let digest = handle_digest(target);
    let prefix = HashPrefix::of_digest(&digest, ctx.prefix_bits);
    trace.push(requester, proxy, MsgType::PrefixRequest, true);

    let dispatch = {
        let mut sctx = SearchCtx {
            graph: ctx.graph,
            libraries: ctx.libraries,
            dispositions: ctx.dispositions,
            active: ctx.active,
            trust: ctx.trust,
            params: ctx.search,
            stamps: ctx.stamps,
            rng: ctx.rng,
            tqpo: ctx.tqpo,
            trace: None,
            query_id: ctx.query_id,
        };
        search::dispatch_query(&mut sctx, proxy, Target::Handle(prefix))
    };
    let mut discovery_deletions = 0u32;
    for &(observer, subject) in &dispatch.distrusted {
        if ctx.graph.remove_community_edge(observer, subject) {
            discovery_deletions += 1;
        }
    }
    let respondents = dispatch.responders;

    let suffix = digest_suffix(&digest, ctx.prefix_bits);
    let mut candidates = Vec::new();
    for &peer in &respondents {
        let mut filter = BloomFilter::new(ctx.bloom_bits, ctx.bloom_hashes);
        for matched in ctx.libraries[peer.index()].matched_digests(&prefix) {
            filter.insert(&digest_suffix(matched, ctx.prefix_bits));
        }
        trace.push(peer, proxy, MsgType::FilterResponse, true);
        trace.push(proxy, requester, MsgType::FilterResponse, true);
        if filter.query(&suffix) {
            candidates.push(peer);
        }
    }
    LookupSets { respondents, candidates, discovery_deletions }
}

/// Schemes (b)/(c) end-to-end: partial-hash lookup, then encrypted full
/// requests to surviving candidates best-trusted first, with the transfer
/// relayed (and in full mode sealed) through the proxy. Rewiring is skipped:
/// a community-edge handshake would hand the supplier the requester's
/// identity.
fn partial_hash_session(
    ctx: &mut SessionCtx<'_>,
    trace: &mut Trace<'_>,
    requester: PeerId,
    proxy: PeerId,
    target: FileId,
) -> (usize, Vec<DownloadAttempt>, bool, bool, u32) {
    let sets = partial_hash_lookup(ctx, trace, requester, proxy, target);
    let deletions = sets.discovery_deletions;
    let mut candidates = sets.candidates;
    let candidate_count = candidates.len();
    // cached knowledge only: a trust query about the candidate could leak
    // interest to the candidate itself
    candidates.sort_by(|a, b| {
        let ta = ctx.trust.view(requester, *a);
        let tb = ctx.trust.view(requester, *b);
        tb.partial_cmp(&ta).unwrap().then(a.0.cmp(&b.0))
    });

    let mut attempts = Vec::new();
    let mut delivered = false;
    let mut violation = false;
    for candidate in candidates.iter().copied() {
        if ctx.trust.view(requester, candidate) < TRUST_THRESHOLD {
            continue;
        }
        // the full request travels encrypted for the candidate only
        let request = ctx.crypto.asym_encrypt(candidate, &target.handle_bytes());
        trace.push(requester, proxy, MsgType::FullRequest, false);
        trace.push(proxy, candidate, MsgType::FullRequest, true);
        let Ok(opened) = ctx.crypto.asym_decrypt(candidate, &request) else {
            violation = true;
            continue;
        };
        debug_assert_eq!(opened, target.handle_bytes());

        let disposition = &mut ctx.dispositions[candidate.index()];
        let serves = match disposition {
            Disposition::Honest => ctx.libraries[candidate.index()].has_file(target),
            _ => ctx.libraries[candidate.index()].shares_category(target.category),
        };
        if !serves {
            trace.push(candidate, proxy, MsgType::NotFound, true);
            trace.push(proxy, requester, MsgType::NotFound, true);
            continue;
        }
        let outcome = serve_decision(disposition, ctx.graph, candidate, ctx.adapt.degree_of_deception, ctx.rng);
        let payload = served_bytes(candidate, target, outcome);
        let received = match ctx.mode {
            PrivacyMode::Full => {
                match secure_transfer(ctx.crypto, trace, requester, proxy, candidate, &payload, ctx.rng) {
                    Ok(bytes) => bytes,
                    Err(_) => {
                        violation = true;
                        continue;
                    }
                }
            }
            _ => {
                trace.push(candidate, proxy, MsgType::Data, true);
                trace.push(proxy, requester, MsgType::Data, true);
                payload.clone()
            }
        };
        let authentic = received == authentic_bytes(target);
        debug_assert_eq!(authentic, outcome.is_authentic());
        ctx.trust.record_download(requester, candidate, authentic);
        attempts.push(DownloadAttempt {
            requester,
            provider: candidate,
            outcome,
            edge_action: EdgeAction::None,
        });
        if authentic {
            delivered = true;
            break;
        }
    }
    (candidate_count, attempts, delivered, violation, deletions)
}

/// Scheme (c): wrap a fresh session key for the supplier, receive the content
/// sealed under it through the signing proxy, and verify both the relay
/// signature and the ciphertext integrity before opening.
pub fn secure_transfer(
    crypto: &dyn CryptoSuite,
    trace: &mut Trace<'_>,
    requester: PeerId,
    proxy: PeerId,
    supplier: PeerId,
    payload: &[u8],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<u8>, SimError> {
    let key = SessionKey::random(rng);
    let wrapped = crypto.asym_encrypt(supplier, &key.0);
    trace.push(requester, proxy, MsgType::KeyWrap, false);
    trace.push(proxy, supplier, MsgType::KeyWrap, true);
    let key_bytes = crypto.asym_decrypt(supplier, &wrapped)?;
    let key_at_supplier = SessionKey(key_bytes.try_into().map_err(|_| SimError::Protocol("bad session key".into()))?);

    let sealed = crypto.sym_encrypt(&key_at_supplier, payload);
    trace.push(supplier, proxy, MsgType::Data, false);
    let signature = crypto.sign(proxy, &sealed.signed_bytes());
    trace.push(proxy, requester, MsgType::Data, false);
    verify_relayed_data(crypto, proxy, &sealed, &signature, &key)
}

/// Requester-side checks on a proxy-relayed sealed packet: the proxy's
/// signature must verify and the ciphertext must decrypt intact.
pub fn verify_relayed_data(
    crypto: &dyn CryptoSuite,
    proxy: PeerId,
    sealed: &SymBlob,
    signature: &Signature,
    key: &SessionKey,
) -> Result<Vec<u8>, SimError> {
    if !crypto.verify(proxy, &sealed.signed_bytes(), signature) {
        return Err(SimError::Protocol("relay signature rejected".into()));
    }
    crypto.sym_decrypt(key, sealed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    const ALPHA: f64 = 0.8;

    #[test]
    fn bloom_no_false_negatives_exhaustive() {
        let mut filter = BloomFilter::new(1 << 14, 7);
        let elements: Vec<Vec<u8>> = (0..1000u32).map(|i| i.to_le_bytes().to_vec()).collect();
        for e in &elements {
            filter.insert(e);
        }
        assert!(elements.iter().all(|e| filter.query(e)));
        assert_eq!(filter.inserted(), 1000);
    }

    #[test]
    fn bloom_empty_filter_rejects_everything() {
        let filter = BloomFilter::new(1024, 7);
        assert!(!filter.query(b"anything"));
        assert!(!filter.query(b""));
    }

    #[test]
    fn bloom_false_positive_rate_near_formula() {
        let mut filter = BloomFilter::new(1024, 7);
        for i in 0..100u32 {
            filter.insert(format!("member-{i}").as_bytes());
        }
        let probes = 100_000u32;
        let mut hits = 0u32;
        for i in 0..probes {
            if filter.query(format!("absent-{i}").as_bytes()) {
                hits += 1;
            }
        }
        let measured = hits as f64 / probes as f64;
        let expected = (1.0 - (-(7.0 * 100.0) / 1024.0f64).exp()).powi(7);
        assert!(
            (measured - expected).abs() <= 0.5 * expected,
            "measured {measured} vs formula {expected}"
        );
        assert!((filter.expected_fpr() - expected).abs() < 1e-12);
    }

    #[test]
    fn stub_crypto_roundtrips_and_rejections() {
        let crypto = StubCrypto;
        let blob = crypto.asym_encrypt(PeerId(3), b"hello world, this is longer than a block maybe");
        assert_eq!(crypto.asym_decrypt(PeerId(3), &blob).unwrap(), b"hello world, this is longer than a block maybe");
        assert!(crypto.asym_decrypt(PeerId(4), &blob).is_err(), "wrong identity");
        let mut tampered = blob.clone();
        tampered.bytes[0] ^= 1;
        assert!(crypto.asym_decrypt(PeerId(3), &tampered).is_err(), "tampered ciphertext");

        let key = SessionKey([7u8; 32]);
        let sealed = crypto.sym_encrypt(&key, b"payload");
        assert_eq!(crypto.sym_decrypt(&key, &sealed).unwrap(), b"payload");
        assert!(crypto.sym_decrypt(&SessionKey([8u8; 32]), &sealed).is_err(), "wrong key");

        let sig = crypto.sign(PeerId(5), b"msg");
        assert!(crypto.verify(PeerId(5), b"msg", &sig));
        assert!(!crypto.verify(PeerId(5), b"other", &sig));
        assert!(!crypto.verify(PeerId(6), b"msg", &sig));
    }

    struct World {
        graph: OverlayGraph,
        libraries: Vec<PeerLibrary>,
        dispositions: Vec<Disposition>,
        active: Vec<bool>,
        trust: TrustStore,
        stamps: VisitStamps,
        rng: ChaCha8Rng,
        tqpo: [u32; 2],
        mode: PrivacyMode,
        prefix_bits: u8,
    }

    impl World {
        fn new(n: usize, edges: &[(u32, u32)], mode: PrivacyMode) -> World {
            let graph = OverlayGraph::from_connectivity_edges(n, edges, 8.0).unwrap();
            let libraries = (0..n)
                .map(|p| PeerLibrary::synthetic(PeerId(p as u32), vec![29, 30, 31], vec![], ALPHA))
                .collect();
            World {
                graph,
                libraries,
                dispositions: vec![Disposition::Honest; n],
                active: vec![true; n],
                trust: TrustStore::new(n, 1.0),
                stamps: VisitStamps::new(n),
                rng: rng::stream(9, rng::STREAM_QUERY, 0),
                tqpo: [0, 0],
                mode,
                prefix_bits: 16,
            }
        }

        fn ctx(&mut self) -> SessionCtx<'_> {
            SessionCtx {
                graph: &mut self.graph,
                libraries: &self.libraries,
                dispositions: &mut self.dispositions,
                active: &self.active,
                trust: &mut self.trust,
                stamps: &mut self.stamps,
                rng: &mut self.rng,
                search: SearchParams { bfs_ttl: 5, dfs_ttl: 10, max_fanout: 10 },
                adapt: AdaptParams { degree_of_rewiring: 0.3, degree_of_deception: 0.1, dfs_ttl: 10 },
                crypto: &StubCrypto,
                mode: self.mode,
                prefix_bits: self.prefix_bits,
                bloom_bits: 1024,
                bloom_hashes: 7,
                tqpo: &mut self.tqpo,
                query_id: 0,
            }
        }
    }

    /// requester 0, proxy 1 (community neighbour), supplier 3 two hops out
    fn proxied_world(mode: PrivacyMode) -> (World, FileId) {
        let wanted = FileId::new(29, 4);
        let mut w = World::new(4, &[(0, 2), (1, 2), (2, 3), (0, 3)], mode);
        assert!(w.graph.add_community_edge(PeerId(0), PeerId(1)));
        w.libraries[3] = PeerLibrary::synthetic(PeerId(3), vec![29, 30, 31], vec![wanted], ALPHA);
        (w, wanted)
    }

    #[test]
    fn proxy_session_hides_the_requester() {
        let (mut w, wanted) = proxied_world(PrivacyMode::Proxy);
        let mut ctx = w.ctx();
        let session = run_session(&mut ctx, 1, PeerId(0), wanted);
        assert!(session.private);
        assert_eq!(session.proxy, Some(PeerId(1)));
        assert!(session.delivered);
        assert!(session.anonymity_holds());
        // the supplier observed only the proxy
        for e in session.events.iter().filter(|e| e.to == 3 || e.from == 3) {
            assert_ne!(e.from, 0);
            assert_ne!(e.to, 0);
        }
        // the proxy did the downloading, so its trust record moved
        assert!(w.trust.cache(PeerId(1)).peek(PeerId(3)).is_some());
    }

    #[test]
    fn no_trusted_proxy_falls_back_to_direct_search() {
        let (mut w, wanted) = proxied_world(PrivacyMode::Proxy);
        w.trust.cache_mut(PeerId(0)).upsert(PeerId(1), crate::reputation::ReputationRecord::new(0.0, 5.0));
        let mut ctx = w.ctx();
        let session = run_session(&mut ctx, 2, PeerId(0), wanted);
        assert!(!session.private);
        assert!(session.proxy.is_none());
        assert!(session.delivered, "direct pipeline still finds the file");
    }

    #[test]
    fn handle_lookup_finds_holder_and_delivers() {
        let (mut w, wanted) = proxied_world(PrivacyMode::Handle);
        let mut ctx = w.ctx();
        let session = run_session(&mut ctx, 3, PeerId(0), wanted);
        assert!(session.private);
        assert!(session.delivered);
        assert!(session.anonymity_holds());
        assert_eq!(session.attempts.len(), 1);
        assert_eq!(session.attempts[0].provider, PeerId(3));
        // scheme (b) alone leaves the relayed content readable at the proxy
        assert!(!session.proxy_blindness_holds());
    }

    #[test]
    fn full_mode_keeps_the_proxy_blind() {
        let (mut w, wanted) = proxied_world(PrivacyMode::Full);
        let mut ctx = w.ctx();
        let session = run_session(&mut ctx, 4, PeerId(0), wanted);
        assert!(session.private);
        assert!(session.delivered);
        assert!(!session.protocol_violation);
        assert!(session.anonymity_holds());
        assert!(session.proxy_blindness_holds());
        assert!(session
            .events
            .iter()
            .any(|e| e.msg == MsgType::KeyWrap && e.from == 0 && e.to == 1 && !e.payload_visible));
    }

    #[test]
    fn true_holder_survives_elimination_and_fakes_are_detected() {
        let (mut w, wanted) = proxied_world(PrivacyMode::Full);
        w.dispositions[3] = Disposition::MaliciousA;
        let mut ctx = w.ctx();
        ctx.adapt.degree_of_deception = 0.0;
        let session = run_session(&mut ctx, 5, PeerId(0), wanted);
        assert!(!session.delivered, "only source is malicious and always fakes");
        assert_eq!(session.attempts.len(), 1);
        assert!(!session.attempts[0].outcome.is_authentic());
        // the requester learned about the supplier despite the privacy layer
        let rec = w.trust.cache(PeerId(0)).peek(PeerId(3)).unwrap();
        assert_eq!((rec.alpha, rec.beta), (0.0, 1.0));
    }

    #[test]
    fn elimination_grows_with_revealed_prefix_length() {
        // one requester, one proxy, and a crowd of peers with random files
        let n = 120usize;
        let mut edges: Vec<(u32, u32)> = (2..n as u32).map(|p| (1, p)).collect();
        edges.push((0, 2));
        edges.push((1, 0));
        let wanted = FileId::new(29, 5);
        let mut survivors = Vec::new();
        for bits in [4u8, 8, 16] {
            let mut w = World::new(n, &edges, PrivacyMode::Handle);
            w.prefix_bits = bits;
            // crowd libraries: 40 files each, identical corpus for every
            // prefix length so the counts are comparable
            let mut seed_rng = rng::stream(31, rng::STREAM_CONTENT, 0);
            for p in 2..n as u32 {
                let files: Vec<FileId> = (0..40)
                    .map(|_| FileId::new(29 + seed_rng.random_range(0..3) as u16, 1 + seed_rng.random_range(0..5000)))
                    .collect();
                w.libraries[p as usize] =
                    PeerLibrary::synthetic(PeerId(p), vec![29, 30, 31], files, ALPHA);
            }
            w.libraries[7] = PeerLibrary::synthetic(PeerId(7), vec![29, 30, 31], vec![wanted], ALPHA);
            let mut events = Vec::new();
            let mut trace = Trace::new(&mut events, 0);
            let mut ctx = w.ctx();
            ctx.search.bfs_ttl = 3;
            ctx.search.max_fanout = 200; // let the hub flood the whole crowd
            let sets = partial_hash_lookup(&mut ctx, &mut trace, PeerId(0), PeerId(3), wanted);
            assert!(sets.respondents.contains(&PeerId(7)), "holder must match its own prefix");
            assert!(sets.candidates.contains(&PeerId(7)), "holder must survive the filter");
            survivors.push((sets.respondents.len(), sets.candidates.len()));
        }
        assert!(survivors[0].0 > survivors[1].0 && survivors[1].0 > survivors[2].0,
            "prefix respondents must shrink as more bits are revealed: {survivors:?}");
        assert!(survivors[0].1 >= survivors[1].1 && survivors[1].1 >= survivors[2].1);
    }

    #[test]
    fn tampered_relay_packets_are_rejected() {
        let crypto = StubCrypto;
        let key = SessionKey([3u8; 32]);
        let sealed = crypto.sym_encrypt(&key, b"the real content");
        let signature = crypto.sign(PeerId(1), &sealed.signed_bytes());
        assert!(verify_relayed_data(&crypto, PeerId(1), &sealed, &signature, &key).is_ok());

        let mut swapped = sealed.clone();
        swapped.bytes[0] ^= 0xff;
        assert!(verify_relayed_data(&crypto, PeerId(1), &swapped, &signature, &key).is_err(),
            "content swap must break the relay signature");
        // a forged signature from someone other than the proxy fails too
        let forged = crypto.sign(PeerId(2), &sealed.signed_bytes());
        assert!(verify_relayed_data(&crypto, PeerId(1), &sealed, &forged, &key).is_err());
    }

    #[test]
    fn secure_transfer_round_trip() {
        let mut events = Vec::new();
        let mut trace = Trace::new(&mut events, 9);
        let mut rng = rng::stream(2, rng::STREAM_QUERY, 1);
        let payload = authentic_bytes(FileId::new(1, 1));
        let got = secure_transfer(&StubCrypto, &mut trace, PeerId(0), PeerId(1), PeerId(2), &payload, &mut rng).unwrap();
        assert_eq!(got, payload);
        // the data hops via the proxy are ciphertext
        assert!(events.iter().filter(|e| e.msg == MsgType::Data).all(|e| !e.payload_visible));
    }
}
