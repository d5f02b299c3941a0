//! Session keys (Mersenne Twister output hashed with SHA-256), group keys and
//! salted secret hashes.

use std::fmt;

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mt64::Mt19937_64;
use crate::ids::{GroupId, TransactionId, UserId};

/// Number of 64-bit generator words hashed into one session key.
pub const SESSION_KEY_WORDS: usize = 4;

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey {
    pub bytes: [u8; 32],
    pub issued_to: UserId,
    pub transaction_id: TransactionId,
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionKey")
            .field("issued_to", &self.issued_to)
            .field("transaction_id", &self.transaction_id)
            .finish_non_exhaustive()
    }
}

/// SHA-256 over `SESSION_KEY_WORDS` consecutive words (big-endian) drawn from
/// the generator. Each word lies in `[0, 2^64 - 2]`.
pub fn generate_session_key(prng: &mut Mt19937_64, issued_to: UserId, transaction_id: TransactionId) -> SessionKey {
    let mut block = [0u8; SESSION_KEY_WORDS * 8];
    for chunk in block.chunks_exact_mut(8) {
        chunk.copy_from_slice(&prng.next_word().to_be_bytes());
    }
    SessionKey { bytes: Sha256::digest(block).into(), issued_to, transaction_id }
}

/// Lockable generator handle. A single state is never advanced by two
/// threads at once; callers go through [`SessionKeyGenerator::issue`].
#[derive(Debug)]
pub struct SessionKeyGenerator {
    prng: Mutex<Mt19937_64>,
}

impl SessionKeyGenerator {
    pub fn seeded(seed: u64) -> Self {
        Self { prng: Mutex::new(Mt19937_64::new(seed)) }
    }

    pub fn from_entropy() -> Self {
        let mut key = [0u64; 4];
        for k in &mut key {
            *k = rand::rngs::OsRng.next_u64();
        }
        Self { prng: Mutex::new(Mt19937_64::from_key(&key)) }
    }

    pub fn issue(&self, issued_to: UserId, transaction_id: TransactionId) -> SessionKey {
        generate_session_key(&mut self.prng.lock(), issued_to, transaction_id)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct GroupKey {
    pub group_id: GroupId,
    pub bytes: [u8; 32],
}

impl fmt::Debug for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupKey").field("group_id", &self.group_id).finish_non_exhaustive()
    }
}

impl GroupKey {
    pub fn random<R: RngCore + ?Sized>(group_id: GroupId, rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self { group_id, bytes }
    }

    /// Wire form `<group id>:<64 hex digits>`.
    pub fn to_wire(&self) -> String {
        format!("{}:{}", self.group_id.0, hex::encode(self.bytes))
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        let (id, key) = s.split_once(':')?;
        let group_id = GroupId(id.parse().ok()?);
        let raw = hex::decode(key).ok()?;
        let bytes = raw.try_into().ok()?;
        Some(Self { group_id, bytes })
    }
}

/// Salted SHA-256 of a secret (passwords, group keys).
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaltedHash {
    #[serde(with = "crate::value::hex_bytes")]
    salt: Vec<u8>,
    #[serde(with = "crate::value::hex_bytes")]
    digest: Vec<u8>,
}

impl fmt::Debug for SaltedHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SaltedHash(..)")
    }
}

pub const SALT_LEN: usize = 16;

impl SaltedHash {
    pub fn new<R: RngCore + ?Sized>(secret: &[u8], rng: &mut R) -> Self {
        let mut salt = vec![0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        let digest = Self::digest(&salt, secret);
        Self { salt, digest }
    }

    fn digest(salt: &[u8], secret: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(secret);
        h.finalize().to_vec()
    }

    pub fn verify(&self, secret: &[u8]) -> bool {
        let candidate = Self::digest(&self.salt, secret);
        candidate.len() == self.digest.len()
            && candidate.iter().zip(&self.digest).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
    }
}
