//! Proof-of-Delivery chains: initial certificates, per-chunk proofs, chain
//! construction and third-party verification, and provider-nonce admission.
//!
//! A chain is rooted at a provider-signed Initial Certificate (IC) and grows
//! by one peer-signed Proof of Delivery (PoD) per chunk. Each PoD signs the
//! digest of everything before it, so no element can be altered, reordered,
//! or transplanted without breaking a signature downstream.

use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::contract::SmartContract;
use crate::primitives::{
    decode_list, hash_bytes, put_list, put_u32, sign_digest, verify_signature,
    verify_signatures_batch, ByteReader, CanonicalDecode, CanonicalEncode, DecodeError, Digest,
    KeyPair, PublicKey, Signature,
};

/// A peer's contact identity: verifying key plus host:port address.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerEndpoint {
    pub key: PublicKey,
    pub address: String,
}

/// One entry of an IC's download guide: which peer serves which chunk.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PeerAssignment {
    pub chunk_index: u64,
    pub peer_key: PublicKey,
    pub peer_address: String,
}

/// Provider-signed, nonce-bearing download guide for a single request.
///
/// Chunk 0 is always assigned to the backup node so that the first-chunk
/// rule is verifiable by third parties from the chain alone.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct InitialCertificate {
    pub nonce: u64,
    pub file_id: crate::contract::FileId,
    pub peer_assignments: Vec<PeerAssignment>,
    pub backup_key: PublicKey,
    pub backup_address: String,
    pub provider_key: PublicKey,
    pub timestamp: u64,
    pub provider_signature: Signature,
}

impl InitialCertificate {
    /// Digest the provider signs: every field before the signature.
    pub fn signing_digest(&self) -> Digest {
        let mut out = Vec::new();
        self.encode_body(&mut out);
        hash_bytes(&out)
    }

    fn encode_body(&self, out: &mut Vec<u8>) {
        self.nonce.encode_into(out);
        self.file_id.0.encode_into(out);
        put_list(out, &self.peer_assignments);
        self.backup_key.encode_into(out);
        self.backup_address.encode_into(out);
        self.provider_key.encode_into(out);
        self.timestamp.encode_into(out);
    }

    /// Assigned serving key for `chunk_index`, if the chunk exists.
    pub fn assigned_key(&self, chunk_index: u64) -> Option<PublicKey> {
        self.peer_assignments
            .get(chunk_index as usize)
            .map(|a| a.peer_key)
    }

    pub fn chunk_count(&self) -> u64 {
        self.peer_assignments.len() as u64
    }
}

/// A peer's attestation that it served one chunk.
///
/// The signed digest covers the chain prefix digest together with the PoD's
/// own fields, so every byte of a finished chain is authenticated by some
/// signature. The timestamp is supplied by the client with the request,
/// which leaves the peer nothing to vary: the signature, and therefore
/// payment eligibility, is fixed before the chunk is served.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProofOfDelivery {
    pub chunk_index: u64,
    pub peer_key: PublicKey,
    /// Digest of the chain up to but excluding this PoD.
    pub prefix_digest: Digest,
    pub timestamp: u64,
    pub signature: Signature,
}

impl ProofOfDelivery {
    /// Digest the serving peer signs: every field before the signature.
    pub fn signing_digest(&self) -> Digest {
        let mut out = Vec::new();
        self.encode_body(&mut out);
        hash_bytes(&out)
    }

    fn encode_body(&self, out: &mut Vec<u8>) {
        self.chunk_index.encode_into(out);
        self.peer_key.encode_into(out);
        self.prefix_digest.encode_into(out);
        self.timestamp.encode_into(out);
    }

    /// Digest identifying this PoD, used for ledger replay protection.
    pub fn pod_digest(&self) -> Digest {
        hash_bytes(&self.canonical_encode())
    }
}

/// The tamper-evident sequence: an IC followed by sequential PoDs.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PoDChain {
    pub ic: InitialCertificate,
    pub pods: Vec<ProofOfDelivery>,
}

impl PoDChain {
    pub fn new(ic: InitialCertificate) -> Self {
        PoDChain { ic, pods: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.pods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pods.is_empty()
    }

    pub fn last_pod(&self) -> Option<&ProofOfDelivery> {
        self.pods.last()
    }
}

/// Digest of the full chain encoding. Any mutation of any field changes it.
pub fn chain_digest(chain: &PoDChain) -> Digest {
    hash_bytes(&chain.canonical_encode())
}

/// Creates a PoD over the given prefix digest at `timestamp`.
pub fn generate_pod(
    peer_keypair: &KeyPair,
    prefix_digest: Digest,
    chunk_index: u64,
    timestamp: u64,
) -> ProofOfDelivery {
    let mut pod = ProofOfDelivery {
        chunk_index,
        peer_key: peer_keypair.public(),
        prefix_digest,
        timestamp,
        signature: Signature::from_bytes([0; 64]),
    };
    pod.signature = sign_digest(peer_keypair, &pod.signing_digest());
    pod
}

/// Checks a PoD's signature against an expected prefix digest.
pub fn verify_pod(pod: &ProofOfDelivery, expected_prefix: &Digest) -> bool {
    pod.prefix_digest == *expected_prefix
        && verify_signature(&pod.peer_key, &pod.signing_digest(), &pod.signature)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("pod index {got} does not extend chain of length {expected}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("pod signed by a peer not assigned to this chunk")]
    WrongPeer,
    #[error("pod prefix digest does not match the current chain")]
    StalePrefix,
    #[error("pod signature is invalid")]
    InvalidSignature,
}

/// Why a chain failed third-party verification.
#[derive(Debug, Error, PartialEq, Eq, Clone, Copy)]
pub enum ChainViolation {
    #[error("initial certificate is malformed")]
    IcStructure,
    #[error("initial certificate signature is invalid")]
    IcSignature,
    #[error("chain has more pods than assigned chunks")]
    TooManyPods,
    #[error("pod {0} is out of sequence")]
    PodIndex(u64),
    #[error("pod {0} was signed by a non-assigned peer")]
    PodPeer(u64),
    #[error("pod {0} does not bind its chain prefix")]
    PodPrefix(u64),
    #[error("pod {0} carries an invalid signature")]
    PodSignature(u64),
}

fn ic_structure_ok(ic: &InitialCertificate) -> bool {
    if ic.peer_assignments.is_empty() {
        return false;
    }
    for (k, assignment) in ic.peer_assignments.iter().enumerate() {
        if assignment.chunk_index != k as u64 {
            return false;
        }
    }
    // First-chunk rule: chunk 0 must name the backup node.
    let first = &ic.peer_assignments[0];
    first.peer_key == ic.backup_key && first.peer_address == ic.backup_address
}

/// True iff the IC is structurally sound and carries a valid provider
/// signature.
pub fn verify_ic(ic: &InitialCertificate) -> bool {
    ic_structure_ok(ic)
        && verify_signature(&ic.provider_key, &ic.signing_digest(), &ic.provider_signature)
}

/// Digests of every truncation of the chain: entry `k` covers the IC plus
/// the first `k` pods. Entry `pods.len()` equals [`chain_digest`].
fn prefix_digests(chain: &PoDChain) -> Vec<Digest> {
    let ic_bytes = chain.ic.canonical_encode();
    let mut pods_concat: Vec<u8> = Vec::new();
    let mut digests = Vec::with_capacity(chain.pods.len() + 1);
    for k in 0..=chain.pods.len() {
        let mut buf = Vec::with_capacity(ic_bytes.len() + 4 + pods_concat.len());
        buf.extend_from_slice(&ic_bytes);
        put_u32(&mut buf, k as u32);
        buf.extend_from_slice(&pods_concat);
        digests.push(hash_bytes(&buf));
        if k < chain.pods.len() {
            chain.pods[k].encode_into(&mut pods_concat);
        }
    }
    digests
}

/// Structural rule for who may sign chunk `k`: the assigned peer, or the
/// backup node standing in for an unreachable or refusing peer.
fn acceptable_signer(ic: &InitialCertificate, chunk_index: u64, key: &PublicKey) -> bool {
    ic.assigned_key(chunk_index) == Some(*key) || *key == ic.backup_key
}

/// Full third-party verification: IC validity plus, for every PoD, sequence
/// position, signer admissibility, prefix binding (recomputed from scratch),
/// and signature validity.
pub fn verify_chain(chain: &PoDChain) -> Result<(), ChainViolation> {
    if !ic_structure_ok(&chain.ic) {
        return Err(ChainViolation::IcStructure);
    }
    if chain.pods.len() as u64 > chain.ic.chunk_count() {
        return Err(ChainViolation::TooManyPods);
    }
    let prefixes = prefix_digests(chain);
    for (k, pod) in chain.pods.iter().enumerate() {
        if pod.chunk_index != k as u64 {
            return Err(ChainViolation::PodIndex(k as u64));
        }
        if !acceptable_signer(&chain.ic, k as u64, &pod.peer_key) {
            return Err(ChainViolation::PodPeer(k as u64));
        }
        if pod.prefix_digest != prefixes[k] {
            return Err(ChainViolation::PodPrefix(k as u64));
        }
    }

    // Signature checks: batch first, walk for the reason only on failure.
    let mut batch = Vec::with_capacity(chain.pods.len() + 1);
    batch.push((
        chain.ic.provider_key,
        chain.ic.signing_digest(),
        chain.ic.provider_signature,
    ));
    for pod in &chain.pods {
        batch.push((pod.peer_key, pod.signing_digest(), pod.signature));
    }
    if verify_signatures_batch(&batch) {
        return Ok(());
    }
    if !verify_signature(
        &chain.ic.provider_key,
        &chain.ic.signing_digest(),
        &chain.ic.provider_signature,
    ) {
        return Err(ChainViolation::IcSignature);
    }
    for (k, pod) in chain.pods.iter().enumerate() {
        if !verify_signature(&pod.peer_key, &pod.signing_digest(), &pod.signature) {
            return Err(ChainViolation::PodSignature(k as u64));
        }
    }
    // Batch rejected but every individual signature passed: only possible
    // for adversarial mixed-scalar edge cases; treat as invalid.
    Err(ChainViolation::IcSignature)
}

/// Appends a PoD after checking it extends this exact chain.
pub fn append_pod(chain: &mut PoDChain, pod: ProofOfDelivery) -> Result<(), ChainError> {
    let next = chain.pods.len() as u64;
    if pod.chunk_index != next {
        return Err(ChainError::OutOfOrder { expected: next, got: pod.chunk_index });
    }
    if !acceptable_signer(&chain.ic, next, &pod.peer_key) {
        return Err(ChainError::WrongPeer);
    }
    if pod.prefix_digest != chain_digest(chain) {
        return Err(ChainError::StalePrefix);
    }
    if !verify_signature(&pod.peer_key, &pod.signing_digest(), &pod.signature) {
        return Err(ChainError::InvalidSignature);
    }
    chain.pods.push(pod);
    Ok(())
}

/// Provider-side issuing state: key plus the strictly increasing nonce.
#[derive(Debug)]
pub struct IssuerState {
    keypair: KeyPair,
    last_nonce: u64,
}

impl IssuerState {
    pub fn new(keypair: KeyPair) -> Self {
        IssuerState { keypair, last_nonce: 0 }
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.keypair
    }

    pub fn last_nonce(&self) -> u64 {
        self.last_nonce
    }
}

/// Builds and signs an IC with an explicit nonce.
///
/// Chunk 0 goes to the backup node; chunks 1..l-1 are drawn uniformly from
/// `live_peers`. An empty peer pool falls back to the backup for every
/// chunk. Honest issuers go through [`issue_ic`], which enforces nonce
/// monotonicity; this entry point exists so that a misbehaving issuer can
/// be modeled.
pub fn issue_ic_with_nonce<R: Rng + ?Sized>(
    keypair: &KeyPair,
    nonce: u64,
    contract: &SmartContract,
    live_peers: &[PeerEndpoint],
    backup: &PeerEndpoint,
    timestamp: u64,
    rng: &mut R,
) -> InitialCertificate {
    let mut assignments = Vec::with_capacity(contract.chunk_count_l as usize);
    assignments.push(PeerAssignment {
        chunk_index: 0,
        peer_key: backup.key,
        peer_address: backup.address.clone(),
    });
    for chunk_index in 1..contract.chunk_count_l {
        let endpoint = if live_peers.is_empty() {
            backup
        } else {
            &live_peers[rng.random_range(0..live_peers.len())]
        };
        assignments.push(PeerAssignment {
            chunk_index,
            peer_key: endpoint.key,
            peer_address: endpoint.address.clone(),
        });
    }
    let mut ic = InitialCertificate {
        nonce,
        file_id: contract.file_id.clone(),
        peer_assignments: assignments,
        backup_key: backup.key,
        backup_address: backup.address.clone(),
        provider_key: keypair.public(),
        timestamp,
        provider_signature: Signature::from_bytes([0; 64]),
    };
    ic.provider_signature = sign_digest(keypair, &ic.signing_digest());
    ic
}

/// Issues a fresh IC with a nonce strictly greater than any issued before.
pub fn issue_ic<R: Rng + ?Sized>(
    issuer: &mut IssuerState,
    contract: &SmartContract,
    live_peers: &[PeerEndpoint],
    backup: &PeerEndpoint,
    timestamp: u64,
    rng: &mut R,
) -> InitialCertificate {
    issuer.last_nonce += 1;
    issue_ic_with_nonce(
        &issuer.keypair,
        issuer.last_nonce,
        contract,
        live_peers,
        backup,
        timestamp,
        rng,
    )
}

pub const DEFAULT_NONCE_WINDOW: usize = 1024;

/// Verdict of admitting a provider nonce at a peer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NonceVerdict {
    Accept,
    /// Nonce already seen inside the window.
    RejectReplay,
    /// Nonce at or below the window floor.
    RejectStale,
}

/// Sliding window of recently admitted nonces.
///
/// Accepts a nonce iff it is unseen and above the floor, which tolerates
/// bounded out-of-order arrival while rejecting every replay. When the
/// window overflows its capacity the smallest nonce is evicted and becomes
/// the new floor.
#[derive(Clone, Debug)]
pub struct NonceWindow {
    window: BTreeSet<u64>,
    floor: u64,
    capacity: usize,
}

impl Default for NonceWindow {
    fn default() -> Self {
        NonceWindow::new(DEFAULT_NONCE_WINDOW)
    }
}

impl NonceWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        NonceWindow { window: BTreeSet::new(), floor: 0, capacity }
    }

    pub fn floor(&self) -> u64 {
        self.floor
    }

    pub fn contains(&self, nonce: u64) -> bool {
        self.window.contains(&nonce)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }
}

/// Admits or rejects a nonce, updating the window on acceptance.
pub fn nonce_admit(window: &mut NonceWindow, nonce: u64) -> NonceVerdict {
    if window.window.contains(&nonce) {
        return NonceVerdict::RejectReplay;
    }
    if nonce <= window.floor {
        return NonceVerdict::RejectStale;
    }
    window.window.insert(nonce);
    if window.window.len() > window.capacity {
        let smallest = *window.window.iter().next().unwrap();
        window.window.remove(&smallest);
        window.floor = smallest;
    }
    NonceVerdict::Accept
}

impl CanonicalEncode for PeerAssignment {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.chunk_index.encode_into(out);
        self.peer_key.encode_into(out);
        self.peer_address.encode_into(out);
    }
}

impl CanonicalDecode for PeerAssignment {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(PeerAssignment {
            chunk_index: reader.u64_be()?,
            peer_key: PublicKey::decode_from(reader)?,
            peer_address: String::decode_from(reader)?,
        })
    }
}

impl CanonicalEncode for InitialCertificate {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.encode_body(out);
        self.provider_signature.encode_into(out);
    }
}

impl CanonicalDecode for InitialCertificate {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(InitialCertificate {
            nonce: reader.u64_be()?,
            file_id: crate::contract::FileId(String::decode_from(reader)?),
            peer_assignments: decode_list(reader)?,
            backup_key: PublicKey::decode_from(reader)?,
            backup_address: String::decode_from(reader)?,
            provider_key: PublicKey::decode_from(reader)?,
            timestamp: reader.u64_be()?,
            provider_signature: Signature::decode_from(reader)?,
        })
    }
}

impl CanonicalEncode for ProofOfDelivery {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.encode_body(out);
        self.signature.encode_into(out);
    }
}

impl CanonicalDecode for ProofOfDelivery {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(ProofOfDelivery {
            chunk_index: reader.u64_be()?,
            peer_key: PublicKey::decode_from(reader)?,
            prefix_digest: Digest::decode_from(reader)?,
            timestamp: reader.u64_be()?,
            signature: Signature::decode_from(reader)?,
        })
    }
}

impl CanonicalEncode for PoDChain {
    fn encode_into(&self, out: &mut Vec<u8>) {
        self.ic.encode_into(out);
        put_list(out, &self.pods);
    }
}

impl CanonicalDecode for PoDChain {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(PoDChain {
            ic: InitialCertificate::decode_from(reader)?,
            pods: decode_list(reader)?,
        })
    }
}

pub const CHAIN_FILE_MAGIC: &[u8; 8] = b"PODC0001";

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("chain file is malformed: {0}")]
    Decode(#[from] DecodeError),
}

/// Serializes a chain in the on-disk format: magic header then the
/// canonical encoding.
pub fn encode_chain_file(chain: &PoDChain) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHAIN_FILE_MAGIC);
    chain.encode_into(&mut out);
    out
}

pub fn decode_chain_file(bytes: &[u8]) -> Result<PoDChain, DecodeError> {
    if bytes.len() < CHAIN_FILE_MAGIC.len() || &bytes[..CHAIN_FILE_MAGIC.len()] != CHAIN_FILE_MAGIC
    {
        return Err(DecodeError::BadMagic);
    }
    PoDChain::canonical_decode(&bytes[CHAIN_FILE_MAGIC.len()..])
}

pub fn write_chain_file(path: &Path, chain: &PoDChain) -> io::Result<()> {
    std::fs::write(path, encode_chain_file(chain))
}

pub fn read_chain_file(path: &Path) -> Result<PoDChain, ChainFileError> {
    Ok(decode_chain_file(&std::fs::read(path)?)?)
}
