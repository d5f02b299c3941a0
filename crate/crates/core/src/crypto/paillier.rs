//! Paillier additively homomorphic encryption.
//!
//! Key roles follow the gateway's trust model: the server keeps the
//! encryption key `(n, g)` and hands the decryption key `(lambda, mu)` only to
//! users whose active role may read sensitive data. Textbook Paillier calls
//! these the public and private halves respectively; the names here describe
//! what each key does.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::prime::{is_probable_prime, lcm, random_prime, MILLER_RABIN_ROUNDS};
use super::CryptoError;

pub const KEY_FORMAT_VERSION: u8 = 1;
const KIND_ENCRYPTION: u8 = b'E';
const KIND_DECRYPTION: u8 = b'D';
const KIND_CIPHERTEXT: u8 = b'C';

/// Upper bound on prime-pair / generator retries during key generation.
const MAX_KEYGEN_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyId(pub [u8; 8]);

impl KeyId {
    fn for_modulus(n: &BigUint) -> Self {
        let mut h = Sha256::new();
        h.update(b"rolegate-paillier-key");
        h.update(n.to_bytes_be());
        let digest = h.finalize();
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        KeyId(id)
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// How the generator `g` is chosen during key generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorMode {
    /// `g = n + 1`, always valid and gives `mu = lambda^-1 mod n`.
    #[default]
    NPlusOne,
    /// `g` drawn uniformly from `Z*_{n^2}` until the inverse `mu` exists.
    Random,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierEncryptionKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    key_id: KeyId,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierDecryptionKey {
    lambda: BigUint,
    mu: BigUint,
    n: BigUint,
    n_squared: BigUint,
    key_id: KeyId,
}

#[derive(Clone, PartialEq, Eq)]
pub struct PaillierKeyPair {
    pub encryption: PaillierEncryptionKey,
    pub decryption: PaillierDecryptionKey,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PaillierCiphertext {
    pub value: BigUint,
    pub key_id: KeyId,
}

impl fmt::Debug for PaillierEncryptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierEncryptionKey")
            .field("key_id", &self.key_id)
            .field("bits", &self.n.bits())
            .finish()
    }
}

impl fmt::Debug for PaillierDecryptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierDecryptionKey").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

impl fmt::Debug for PaillierKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PaillierKeyPair").field("encryption", &self.encryption).finish_non_exhaustive()
    }
}

/// `L(u) = (u - 1) / n`.
fn l_function(u: &BigUint, n: &BigUint) -> BigUint {
    (u - 1u32) / n
}

impl PaillierKeyPair {
    /// Generates a key pair whose modulus has exactly `bit_length` bits.
    pub fn generate<R: RngCore + ?Sized>(
        bit_length: u64,
        mode: GeneratorMode,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        if bit_length < 16 || bit_length % 2 != 0 {
            return Err(CryptoError::InvalidKeySize(bit_length));
        }
        let half = bit_length / 2;
        for _ in 0..MAX_KEYGEN_ATTEMPTS {
            let p = random_prime(half, rng);
            let q = random_prime(half, rng);
            if p == q || !gcd_condition(&p, &q) {
                continue;
            }
            let g = match mode {
                GeneratorMode::NPlusOne => None,
                GeneratorMode::Random => match random_generator(&p, &q, rng) {
                    Some(g) => Some(g),
                    None => continue,
                },
            };
            return Self::from_primes(&p, &q, g);
        }
        Err(CryptoError::GenerationFailure)
    }

    /// Builds a key pair from explicit primes; `g` defaults to `n + 1`.
    pub fn from_primes(p: &BigUint, q: &BigUint, g: Option<BigUint>) -> Result<Self, CryptoError> {
        let mut check_rng = ChaCha8Rng::seed_from_u64(0x5eed);
        if p == q
            || !is_probable_prime(p, MILLER_RABIN_ROUNDS, &mut check_rng)
            || !is_probable_prime(q, MILLER_RABIN_ROUNDS, &mut check_rng)
        {
            return Err(CryptoError::InvalidPrimes);
        }
        if !gcd_condition(p, q) {
            return Err(CryptoError::InvalidPrimes);
        }
        let n = p * q;
        let n_squared = &n * &n;
        let one = BigUint::one();
        let lambda = lcm(&(p - &one), &(q - &one));
        let g = g.unwrap_or_else(|| &n + &one);
        if g.is_zero() || g >= n_squared || !g.gcd(&n_squared).is_one() {
            return Err(CryptoError::GenerationFailure);
        }
        let u = g.modpow(&lambda, &n_squared);
        let mu = l_function(&u, &n).modinv(&n).ok_or(CryptoError::GenerationFailure)?;
        let key_id = KeyId::for_modulus(&n);
        Ok(Self {
            encryption: PaillierEncryptionKey { n: n.clone(), g, n_squared: n_squared.clone(), key_id },
            decryption: PaillierDecryptionKey { lambda, mu, n, n_squared, key_id },
        })
    }

    pub fn key_id(&self) -> KeyId {
        self.encryption.key_id
    }
}

/// `gcd(p*q, (p-1)(q-1)) = 1`.
fn gcd_condition(p: &BigUint, q: &BigUint) -> bool {
    let one = BigUint::one();
    (p * q).gcd(&((p - &one) * (q - &one))).is_one()
}

fn random_generator<R: RngCore + ?Sized>(p: &BigUint, q: &BigUint, rng: &mut R) -> Option<BigUint> {
    let one = BigUint::one();
    let n = p * q;
    let n_squared = &n * &n;
    let lambda = lcm(&(p - &one), &(q - &one));
    for _ in 0..MAX_KEYGEN_ATTEMPTS {
        let g = rng.gen_biguint_range(&one, &n_squared);
        if !g.gcd(&n_squared).is_one() {
            continue;
        }
        let u = g.modpow(&lambda, &n_squared);
        if l_function(&u, &n).modinv(&n).is_some() {
            return Some(g);
        }
    }
    None
}

impl PaillierEncryptionKey {
    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    pub fn encrypt<R: RngCore + ?Sized>(
        &self,
        plaintext: &BigUint,
        rng: &mut R,
    ) -> Result<PaillierCiphertext, CryptoError> {
        if plaintext >= &self.n {
            return Err(CryptoError::PlaintextOutOfRange);
        }
        let one = BigUint::one();
        let r = loop {
            let r = rng.gen_biguint_range(&one, &self.n);
            if r.gcd(&self.n).is_one() {
                break r;
            }
        };
        self.encrypt_with_r(plaintext, &r)
    }

    /// Encrypts with caller-chosen randomness `r`, which must lie in `Z*_n`.
    pub fn encrypt_with_r(&self, plaintext: &BigUint, r: &BigUint) -> Result<PaillierCiphertext, CryptoError> {
        if plaintext >= &self.n {
            return Err(CryptoError::PlaintextOutOfRange);
        }
        if r.is_zero() || r >= &self.n || !r.gcd(&self.n).is_one() {
            return Err(CryptoError::InvalidRandomness);
        }
        let gm = if self.g == &self.n + 1u32 {
            (BigUint::one() + plaintext * &self.n) % &self.n_squared
        } else {
            self.g.modpow(plaintext, &self.n_squared)
        };
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(PaillierCiphertext { value: (gm * rn) % &self.n_squared, key_id: self.key_id })
    }

    /// Deterministic encryption: `r` is derived from the plaintext itself, so
    /// equal plaintexts give equal ciphertexts. Only meant for test oracles.
    pub fn encrypt_deterministic(&self, plaintext: &BigUint) -> Result<PaillierCiphertext, CryptoError> {
        let mut counter = 0u32;
        loop {
            let mut h = Sha256::new();
            h.update(b"rolegate-deterministic-r");
            h.update(self.n.to_bytes_be());
            h.update(plaintext.to_bytes_be());
            h.update(counter.to_be_bytes());
            let mut bytes = Vec::new();
            let target = (self.n.bits() as usize / 8) + 16;
            let mut block = h.finalize().to_vec();
            while bytes.len() < target {
                bytes.extend_from_slice(&block);
                block = Sha256::digest(&block).to_vec();
            }
            let r = BigUint::from_bytes_be(&bytes) % &self.n;
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return self.encrypt_with_r(plaintext, &r);
            }
            counter += 1;
        }
    }

    /// Homomorphic addition: the product of ciphertexts decrypts to the sum
    /// of plaintexts modulo `n`.
    pub fn add(&self, a: &PaillierCiphertext, b: &PaillierCiphertext) -> Result<PaillierCiphertext, CryptoError> {
        if a.key_id != self.key_id || b.key_id != self.key_id {
            return Err(CryptoError::KeyMismatch);
        }
        Ok(PaillierCiphertext { value: (&a.value * &b.value) % &self.n_squared, key_id: self.key_id })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![KEY_FORMAT_VERSION, KIND_ENCRYPTION];
        put_int(&mut out, &self.n);
        put_int(&mut out, &self.g);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, KIND_ENCRYPTION)?;
        let n = r.int()?;
        let g = r.int()?;
        r.finish()?;
        if n < BigUint::from(2u32) {
            return Err(CryptoError::MalformedKey("modulus too small"));
        }
        let n_squared = &n * &n;
        if g.is_zero() || g >= n_squared {
            return Err(CryptoError::MalformedKey("generator outside Z_n^2"));
        }
        let key_id = KeyId::for_modulus(&n);
        Ok(Self { n, g, n_squared, key_id })
    }
}

impl PaillierDecryptionKey {
    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn key_id(&self) -> KeyId {
        self.key_id
    }

    /// `m = L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt(&self, c: &PaillierCiphertext) -> Result<BigUint, CryptoError> {
        if c.key_id != self.key_id {
            return Err(CryptoError::KeyMismatch);
        }
        self.decrypt_value(&c.value)
    }

    pub fn decrypt_value(&self, c: &BigUint) -> Result<BigUint, CryptoError> {
        if c.is_zero() || c >= &self.n_squared || !c.gcd(&self.n_squared).is_one() {
            return Err(CryptoError::InvalidCiphertext);
        }
        let u = c.modpow(&self.lambda, &self.n_squared);
        Ok((l_function(&u, &self.n) * &self.mu) % &self.n)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![KEY_FORMAT_VERSION, KIND_DECRYPTION];
        put_int(&mut out, &self.lambda);
        put_int(&mut out, &self.mu);
        put_int(&mut out, &self.n);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, KIND_DECRYPTION)?;
        let lambda = r.int()?;
        let mu = r.int()?;
        let n = r.int()?;
        r.finish()?;
        if n < BigUint::from(2u32) || mu >= n {
            return Err(CryptoError::MalformedKey("inconsistent decryption key"));
        }
        let n_squared = &n * &n;
        let key_id = KeyId::for_modulus(&n);
        Ok(Self { lambda, mu, n, n_squared, key_id })
    }
}

impl PaillierKeyPair {
    /// Encryption key followed by decryption key, each in its canonical layout
    /// and preceded by a 4-byte big-endian length.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for part in [self.encryption.to_bytes(), self.decryption.to_bytes()] {
            out.extend_from_slice(&(part.len() as u32).to_be_bytes());
            out.extend_from_slice(&part);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let (enc, rest) = split_prefixed(bytes)?;
        let (dec, rest) = split_prefixed(rest)?;
        if !rest.is_empty() {
            return Err(CryptoError::MalformedKey("trailing bytes"));
        }
        let encryption = PaillierEncryptionKey::from_bytes(enc)?;
        let decryption = PaillierDecryptionKey::from_bytes(dec)?;
        if encryption.n != decryption.n {
            return Err(CryptoError::KeyMismatch);
        }
        Ok(Self { encryption, decryption })
    }
}

impl PaillierCiphertext {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![KEY_FORMAT_VERSION, KIND_CIPHERTEXT];
        out.extend_from_slice(&self.key_id.0);
        put_int(&mut out, &self.value);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, KIND_CIPHERTEXT)?;
        let id = r.take(8)?;
        let mut key_id = [0u8; 8];
        key_id.copy_from_slice(id);
        let value = r.int()?;
        r.finish()?;
        Ok(Self { value, key_id: KeyId(key_id) })
    }
}

fn put_int(out: &mut Vec<u8>, v: &BigUint) {
    let bytes = if v.is_zero() { Vec::new() } else { v.to_bytes_be() };
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(&bytes);
}

fn split_prefixed(bytes: &[u8]) -> Result<(&[u8], &[u8]), CryptoError> {
    if bytes.len() < 4 {
        return Err(CryptoError::MalformedKey("truncated length"));
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let rest = &bytes[4..];
    if rest.len() < len {
        return Err(CryptoError::MalformedKey("truncated body"));
    }
    Ok(rest.split_at(len))
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], kind: u8) -> Result<Self, CryptoError> {
        match buf {
            [KEY_FORMAT_VERSION, k, rest @ ..] if *k == kind => Ok(Self { buf: rest }),
            [KEY_FORMAT_VERSION, ..] => Err(CryptoError::MalformedKey("wrong record kind")),
            [_, ..] => Err(CryptoError::MalformedKey("unsupported version")),
            [] => Err(CryptoError::MalformedKey("empty input")),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CryptoError> {
        if self.buf.len() < n {
            return Err(CryptoError::MalformedKey("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn int(&mut self) -> Result<BigUint, CryptoError> {
        let (body, rest) = split_prefixed(self.buf)?;
        self.buf = rest;
        if body.first() == Some(&0) {
            return Err(CryptoError::MalformedKey("non-canonical integer"));
        }
        Ok(BigUint::from_bytes_be(body))
    }

    fn finish(self) -> Result<(), CryptoError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CryptoError::MalformedKey("trailing bytes"))
        }
    }
}
