//! Cryptographic bedrock: SHA-256 digests, deterministic Ed25519 signatures,
//! and the canonical byte encoding every party hashes and signs.
//!
//! All protocol values are immutable after construction and the operations
//! here are pure functions, so everything is safe to share across threads.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const SEED_LEN: usize = 32;

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// Ed25519 verifying key bytes. Identifies providers, peers, and accounts.
///
/// Stored as raw bytes; point validity is only checked when verifying, so a
/// malformed key simply fails verification instead of poisoning containers.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_bytes(bytes: [u8; PUBLIC_KEY_LEN]) -> Self {
        PublicKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

/// Detached Ed25519 signature (64 bytes). The scheme is deterministic:
/// signing the same digest with the same key twice yields identical bytes,
/// which is what makes payment eligibility ungrindable.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: [u8; SIGNATURE_LEN]) -> Self {
        Signature(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("seed must be exactly {SEED_LEN} bytes, got {0}")]
    InvalidSeedLength(usize),
}

/// Signing key plus its derived verifying key.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public(&self) -> PublicKey {
        self.public
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair({})", self.public.to_hex())
    }
}

/// SHA-256 of `data`.
pub fn hash_bytes(data: &[u8]) -> Digest {
    let out = Sha256::digest(data);
    Digest(out.into())
}

/// Derives a key pair deterministically from a 32-byte seed.
pub fn keygen_from_seed(seed: &[u8]) -> Result<KeyPair, KeyError> {
    let seed: [u8; SEED_LEN] = seed
        .try_into()
        .map_err(|_| KeyError::InvalidSeedLength(seed.len()))?;
    let signing = SigningKey::from_bytes(&seed);
    let public = PublicKey(signing.verifying_key().to_bytes());
    Ok(KeyPair { signing, public })
}

/// Signs a digest. Deterministic: identical inputs produce identical bytes.
pub fn sign_digest(kp: &KeyPair, digest: &Digest) -> Signature {
    Signature(kp.signing.sign(digest.as_bytes()).to_bytes())
}

/// Returns true iff `sig` is a valid signature of `digest` under `key`.
/// Malformed key or signature bytes return false rather than erroring.
pub fn verify_signature(key: &PublicKey, digest: &Digest, sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(digest.as_bytes(), &sig).is_ok()
}

/// Batch-verifies (key, digest, signature) triples; true iff all are valid.
///
/// Same accept set as [`verify_signature`] applied item-wise, roughly 2x
/// faster for the chain walks the ledger performs on every payout.
pub fn verify_signatures_batch(items: &[(PublicKey, Digest, Signature)]) -> bool {
    if items.is_empty() {
        return true;
    }
    let mut keys = Vec::with_capacity(items.len());
    let mut msgs: Vec<&[u8]> = Vec::with_capacity(items.len());
    let mut sigs = Vec::with_capacity(items.len());
    for (key, digest, sig) in items {
        let Ok(vk) = VerifyingKey::from_bytes(&key.0) else {
            return false;
        };
        keys.push(vk);
        msgs.push(digest.as_bytes().as_slice());
        sigs.push(ed25519_dalek::Signature::from_bytes(&sig.0));
    }
    ed25519_dalek::verify_batch(&msgs, &sigs, &keys).is_ok()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input ended before field could be decoded")]
    UnexpectedEnd,
    #[error("trailing bytes after decoded value")]
    TrailingBytes,
    #[error("declared length {0} exceeds remaining input")]
    LengthOverrun(u32),
    #[error("invalid field value: {0}")]
    InvalidValue(&'static str),
    #[error("bad magic header")]
    BadMagic,
}

/// Canonical encoding.
///
/// The byte layout is normative and bit-exact so that every implementation
/// hashes identical bytes: unsigned integers are fixed-width big-endian
/// (u64 = 8 bytes), byte strings are a u32 big-endian length followed by the
/// bytes, lists are a u32 big-endian count followed by the elements, and
/// records are the concatenation of their encoded fields in declared order.
/// No padding, no alignment. The encoding is injective by construction.
pub trait CanonicalEncode {
    fn encode_into(&self, out: &mut Vec<u8>);

    fn canonical_encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }
}

/// Inverse of [`CanonicalEncode`]; rejects malformed or trailing input.
pub trait CanonicalDecode: Sized {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError>;

    fn canonical_decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut reader = ByteReader::new(bytes);
        let value = Self::decode_from(&mut reader)?;
        if reader.remaining() != 0 {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(value)
    }
}

/// Cursor over an input buffer for decoding.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEnd);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub fn u64_be(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn u32_be(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// Reads a u32-length-prefixed byte string.
    pub fn byte_string(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32_be()?;
        if self.remaining() < len as usize {
            return Err(DecodeError::LengthOverrun(len));
        }
        self.take(len as usize)
    }
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Writes a u32-length-prefixed byte string.
pub fn put_byte_string(out: &mut Vec<u8>, bytes: &[u8]) {
    debug_assert!(bytes.len() <= u32::MAX as usize);
    put_u32(out, bytes.len() as u32);
    out.extend_from_slice(bytes);
}

/// Writes a u32-count-prefixed list of encodable elements.
pub fn put_list<T: CanonicalEncode>(out: &mut Vec<u8>, items: &[T]) {
    debug_assert!(items.len() <= u32::MAX as usize);
    put_u32(out, items.len() as u32);
    for item in items {
        item.encode_into(out);
    }
}

pub fn decode_list<T: CanonicalDecode>(reader: &mut ByteReader<'_>) -> Result<Vec<T>, DecodeError> {
    let count = reader.u32_be()?;
    // Cap preallocation; a corrupt count must not trigger a huge alloc.
    let mut items = Vec::with_capacity((count as usize).min(4096));
    for _ in 0..count {
        items.push(T::decode_from(reader)?);
    }
    Ok(items)
}

impl CanonicalEncode for u64 {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_u64(out, *self);
    }
}

impl CanonicalDecode for u64 {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        reader.u64_be()
    }
}

impl CanonicalEncode for Digest {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl CanonicalDecode for Digest {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(reader.take(DIGEST_LEN)?.try_into().unwrap()))
    }
}

impl CanonicalEncode for PublicKey {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl CanonicalDecode for PublicKey {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(PublicKey(reader.take(PUBLIC_KEY_LEN)?.try_into().unwrap()))
    }
}

impl CanonicalEncode for Signature {
    fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.0);
    }
}

impl CanonicalDecode for Signature {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        Ok(Signature(reader.take(SIGNATURE_LEN)?.try_into().unwrap()))
    }
}

impl CanonicalEncode for String {
    fn encode_into(&self, out: &mut Vec<u8>) {
        put_byte_string(out, self.as_bytes());
    }
}

impl CanonicalDecode for String {
    fn decode_from(reader: &mut ByteReader<'_>) -> Result<Self, DecodeError> {
        let bytes = reader.byte_string()?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::InvalidValue("non-utf8 string"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(n: u8) -> [u8; 32] {
        [n; 32]
    }

    #[test]
    fn hash_is_deterministic_and_injective_on_samples() {
        assert_eq!(hash_bytes(b"payload"), hash_bytes(b"payload"));
        assert_ne!(hash_bytes(b"a"), hash_bytes(b"b"));
    }

    #[test]
    fn hash_empty_matches_sha256_test_vector() {
        // FIPS 180-4 SHA-256 empty-message vector.
        assert_eq!(
            hash_bytes(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_abc_matches_sha256_test_vector() {
        assert_eq!(
            hash_bytes(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn keygen_is_deterministic() {
        let a = keygen_from_seed(&seed(1)).unwrap();
        let b = keygen_from_seed(&seed(1)).unwrap();
        assert_eq!(a.public(), b.public());
    }

    #[test]
    fn keygen_distinct_seeds_give_distinct_keys() {
        let a = keygen_from_seed(&seed(1)).unwrap();
        let b = keygen_from_seed(&seed(2)).unwrap();
        assert_ne!(a.public(), b.public());
    }

    #[test]
    fn keygen_rejects_wrong_seed_length() {
        assert_eq!(
            keygen_from_seed(&[0u8; 31]).unwrap_err(),
            KeyError::InvalidSeedLength(31)
        );
        assert_eq!(
            keygen_from_seed(&[0u8; 33]).unwrap_err(),
            KeyError::InvalidSeedLength(33)
        );
    }

    #[test]
    fn sign_verify_roundtrip() {
        let kp = keygen_from_seed(&seed(3)).unwrap();
        let d = hash_bytes(b"chunk");
        let sig = sign_digest(&kp, &d);
        assert!(verify_signature(&kp.public(), &d, &sig));
    }

    #[test]
    fn signing_is_deterministic() {
        let kp = keygen_from_seed(&seed(4)).unwrap();
        let d = hash_bytes(b"same input");
        assert_eq!(
            sign_digest(&kp, &d).as_bytes(),
            sign_digest(&kp, &d).as_bytes()
        );
    }

    #[test]
    fn signature_fails_against_other_digest() {
        let kp = keygen_from_seed(&seed(5)).unwrap();
        let sig = sign_digest(&kp, &hash_bytes(b"one"));
        assert!(!verify_signature(&kp.public(), &hash_bytes(b"two"), &sig));
    }

    #[test]
    fn verify_rejects_wrong_key_and_flipped_bit() {
        let kp = keygen_from_seed(&seed(6)).unwrap();
        let other = keygen_from_seed(&seed(7)).unwrap();
        let d = hash_bytes(b"x");
        let sig = sign_digest(&kp, &d);
        assert!(!verify_signature(&other.public(), &d, &sig));

        let mut bad = *sig.as_bytes();
        bad[10] ^= 0x01;
        assert!(!verify_signature(&kp.public(), &d, &Signature::from_bytes(bad)));
    }

    #[test]
    fn verify_rejects_malformed_key_bytes() {
        let kp = keygen_from_seed(&seed(8)).unwrap();
        let d = hash_bytes(b"x");
        let sig = sign_digest(&kp, &d);
        // All-ones is not a valid curve point encoding.
        let bogus = PublicKey::from_bytes([0xff; 32]);
        assert!(!verify_signature(&bogus, &d, &sig));
    }

    #[test]
    fn verify_rejects_single_byte_mutations() {
        // Soundness fuzz: any single-byte mutation of (digest, sig, key)
        // must fail verification. 1200 mutations across the three fields.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xf00d);
        let kp = keygen_from_seed(&seed(9)).unwrap();
        let d = hash_bytes(b"soundness");
        let sig = sign_digest(&kp, &d);
        for trial in 0..1200u32 {
            let field = trial % 3;
            let mut dig = *d.as_bytes();
            let mut sg = *sig.as_bytes();
            let mut key = *kp.public().as_bytes();
            let (buf, len): (&mut [u8], usize) = match field {
                0 => (&mut dig, DIGEST_LEN),
                1 => (&mut sg, SIGNATURE_LEN),
                _ => (&mut key, PUBLIC_KEY_LEN),
            };
            let idx = rng.random_range(0..len);
            let old = buf[idx];
            let mut new = old;
            while new == old {
                new = rng.random();
            }
            buf[idx] = new;
            assert!(
                !verify_signature(
                    &PublicKey::from_bytes(key),
                    &Digest::from_bytes(dig),
                    &Signature::from_bytes(sg)
                ),
                "mutation accepted: field {field} idx {idx}"
            );
        }
    }

    #[test]
    fn batch_verify_matches_serial() {
        let items: Vec<_> = (0..8u8)
            .map(|i| {
                let kp = keygen_from_seed(&seed(20 + i)).unwrap();
                let d = hash_bytes(&[i]);
                let s = sign_digest(&kp, &d);
                (kp.public(), d, s)
            })
            .collect();
        assert!(verify_signatures_batch(&items));

        let mut broken = items.clone();
        let mut sig = *broken[3].2.as_bytes();
        sig[0] ^= 1;
        broken[3].2 = Signature::from_bytes(sig);
        assert!(!verify_signatures_batch(&broken));
        assert!(verify_signatures_batch(&[]));
    }

    #[test]
    fn integer_and_byte_string_layout_is_big_endian_and_length_prefixed() {
        // Built by hand from the layout rules, independent of the encoder.
        let mut out = Vec::new();
        put_u64(&mut out, 0x0102030405060708);
        put_byte_string(&mut out, b"hi");
        assert_eq!(
            out,
            vec![1, 2, 3, 4, 5, 6, 7, 8, 0, 0, 0, 2, b'h', b'i']
        );

        let mut r = ByteReader::new(&out);
        assert_eq!(r.u64_be().unwrap(), 0x0102030405060708);
        assert_eq!(r.byte_string().unwrap(), b"hi");
        assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn list_layout_is_count_prefixed() {
        let mut out = Vec::new();
        put_list(&mut out, &[1u64, 2u64]);
        assert_eq!(
            out,
            vec![0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 2]
        );
    }

    #[test]
    fn decode_rejects_truncation_and_trailing_bytes() {
        let encoded = 7u64.canonical_encode();
        assert_eq!(
            u64::canonical_decode(&encoded[..7]).unwrap_err(),
            DecodeError::UnexpectedEnd
        );
        let mut extra = encoded.clone();
        extra.push(0);
        assert_eq!(
            u64::canonical_decode(&extra).unwrap_err(),
            DecodeError::TrailingBytes
        );
        assert_eq!(u64::canonical_decode(&encoded).unwrap(), 7);
    }

    #[test]
    fn string_roundtrip_rejects_invalid_utf8() {
        let s = "peer-9.example:4433".to_string();
        assert_eq!(
            String::canonical_decode(&s.canonical_encode()).unwrap(),
            s
        );
        let mut bad = Vec::new();
        put_byte_string(&mut bad, &[0xff, 0xfe]);
        assert!(String::canonical_decode(&bad).is_err());
    }
}
