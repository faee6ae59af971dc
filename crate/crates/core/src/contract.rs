//! Smart contracts: per-file payment terms, chunk hashes, and the
//! probabilistic payment-eligibility rule.
//!
//! A payout is owed only for a proof of delivery whose derived eligibility
//! value is divisible by the contract's modulus `N`, which thins ledger
//! traffic by a factor of `N` while keeping the expected per-chunk payment
//! fixed: the per-payout amount is `N` times the per-chunk price.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{
    decode_list, hash_bytes, put_byte_string, put_list, put_u64, ByteReader, CanonicalDecode,
    CanonicalEncode, DecodeError, Digest, PublicKey, Signature,
};

/// Scale for encoding probabilities as fixed-point u64.
pub const PROB_SCALE: u64 = 1_000_000_000;

/// Currency amount in integer micro-units (1 unit = 10^-6 currency units).
///
/// Payments are tiny and numerous; integer arithmetic avoids drift. All
/// additions are checked.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MoneyError {
    #[error("money arithmetic overflow")]
    Overflow,
    #[error("insufficient balance")]
    Underflow,
}

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micro(micro: u64) -> Self {
        Money(micro)
    }

    pub fn micro(&self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Money) -> Result<Money, MoneyError> {
        self.0
            .checked_add(other.0)
            .map(Money)
            .ok_or(MoneyError::Overflow)
    }

    pub fn checked_sub(self, other: Money) -> Result<Money, MoneyError> {
        self.0
            .checked_sub(other.0)
            .map(Money)
            .ok_or(MoneyError::Underflow)
    }

    pub fn checked_mul(self, factor: u64) -> Result<Money, MoneyError> {
        self.0
            .checked_mul(factor)
            .map(Money)
            .ok_or(MoneyError::Overflow)
    }
}

impl std::fmt::Display for Money {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Opaque content file identifier.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileId(pub String);

impl FileId {
    pub fn new(id: impl Into<String>) -> Self {
        FileId(id.into())
    }
}

impl std::fmt::Display for FileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("eligibility modulus must be at least 1")]
    InvalidModulus,
    #[error("a file must have at least one chunk hash")]
    InvalidFile,
    #[error("spot-check probability must lie in [0, 1]")]
    InvalidProbability,
}

/// Per-file payment terms published by a content provider.
#[derive(Clone, PartialEq, Debug)]
pub struct SmartContract {
    pub file_id: FileId,
    pub provider_key: PublicKey,
    /// Amount transferred per settled payout; the expected per-chunk payment
    /// is this divided by `eligibility_modulus_n`.
    pub payment_per_eligible_pod: Money,
    pub eligibility_modulus_n: u64,
    /// Number of chunks `l`; always equals `chunk_hashes.len()`.
    pub chunk_count_l: u64,
    pub chunk_hashes: Vec<Digest>,
    /// Probability `p` that a peer spot-checks the chain after serving a
    /// chunk whose proof is not payment-eligible. Quantized to 10^-9.
    pub podc_request_prob_p: f64,
}

/// Builds a well-formed contract.
///
/// `p` is quantized to the encoding's 10^-9 fixed-point grid at construction
/// so that encode/decode is an exact roundtrip.
pub fn new_contract(
    file_id: FileId,
    provider_key: PublicKey,
    payment_per_eligible_pod: Money,
    eligibility_modulus_n: u64,
    chunk_hashes: Vec<Digest>,
    podc_request_prob_p: f64,
) -> Result<SmartContract, ContractError> {
    if eligibility_modulus_n == 0 {
        return Err(ContractError::InvalidModulus);
    }
    if chunk_hashes.is_empty() {
        return Err(ContractError::InvalidFile);
    }
    if !(0.0..=1.0).contains(&podc_request_prob_p) || podc_request_prob_p.is_nan() {
        return Err(ContractError::InvalidProbability);
    }
    let quantized = (podc_request_prob_p * PROB_SCALE as f64).round() / PROB_SCALE as f64;
    Ok(SmartContract {
        file_id,
        provider_key,
        payment_per_eligible_pod,
        eligibility_modulus_n,
        chunk_count_l: chunk_hashes.len() as u64,
        chunk_hashes,
        podc_request_prob_p: quantized,
    })
}

/// Maps a proof-of-delivery signature to its eligibility value: the first
/// 8 bytes of SHA-256 over the signature, read big-endian.
///
/// Hashing first removes any structural bias in signature bytes; the
/// 2^64 mod N bias is negligible for any practical modulus.
pub fn eligibility_value(pod_signature: &Signature) -> u64 {
    let digest = hash_bytes(pod_signature.as_bytes());
    u64::from_be_bytes(digest.as_bytes()[..8].try_into().unwrap())
}

/// True iff the proof's eligibility value is divisible by the contract's N.
pub fn is_payment_eligible(
    pod: &crate::podchain::ProofOfDelivery,
    contract: &SmartContract,
) -> bool {
    eligibility_value(&pod.signature) % contract.eligibility_modulus_n == 0
}

impl CanonicalEncode for SmartContract {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_byte_string(out, self.file_id.0.as_bytes());
        self.provider_key.encode_into(out);
        put_u64(out, self.payment_per_eligible_pod.micro());
        put_u64(out, self.eligibility_modulus_n);
        put_u64(out, self.chunk_count_l);
        put_list(out, &self.chunk_hashes);
        put_u64(out, (self.podc_request_prob_p * PROB_SCALE as f64).round() as u64);
    }
}

impl CanonicalDecode for SmartContract {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let file_id = String::decode_from(reader)?;
        let provider_key = PublicKey::decode_from(reader)?;
        let payment = reader.u64_be()?;
        let modulus = reader.u64_be()?;
        let chunk_count = reader.u64_be()?;
        let chunk_hashes: Vec<Digest> = decode_list(reader)?;
        let prob_fixed = reader.u64_be()?;
        if modulus == 0 {
            return Err(DecodeError::InvalidValue("modulus zero"));
        }
        if chunk_count != chunk_hashes.len() as u64 || chunk_hashes.is_empty() {
            return Err(DecodeError::InvalidValue("chunk count mismatch"));
        }
        if prob_fixed > PROB_SCALE {
            return Err(DecodeError::InvalidValue("probability out of range"));
        }
        Ok(SmartContract {
            file_id: FileId(file_id),
            provider_key,
            payment_per_eligible_pod: Money::from_micro(payment),
            eligibility_modulus_n: modulus,
            chunk_count_l: chunk_count,
            chunk_hashes,
            podc_request_prob_p: prob_fixed as f64 / PROB_SCALE as f64,
        })
    }
}
