//! Cryptographic primitives: Paillier encryption for sensitive columns,
//! Mersenne-Twister/SHA-256 session keys and AES-GCM transport encryption.
//!
//! Paillier is IND-CPA secure but malleable (that is what makes it
//! homomorphic), so it offers no protection against chosen-ciphertext attacks.

mod encoding;
mod mt64;
mod paillier;
mod prime;
mod session_key;
mod transport;

use thiserror::Error;

pub use encoding::{
    decode_int, decode_text, encode_int, encode_text, text_chunk_len, EncryptedValue, Randomness, ValueKind,
};
pub use mt64::{Mt19937_64, DEFAULT_SEED as MT_DEFAULT_SEED};
pub use paillier::{
    GeneratorMode, KeyId, PaillierCiphertext, PaillierDecryptionKey, PaillierEncryptionKey, PaillierKeyPair,
    KEY_FORMAT_VERSION,
};
pub use prime::{is_probable_prime, random_prime, MILLER_RABIN_ROUNDS};
pub use session_key::{generate_session_key, GroupKey, SaltedHash, SessionKey, SessionKeyGenerator};
pub use transport::{transport_decrypt, transport_encrypt};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("key size must be even and at least 16 bits, got {0}")]
    InvalidKeySize(u64),
    #[error("primes do not satisfy the Paillier key conditions")]
    InvalidPrimes,
    #[error("key generation failed to find a valid generator")]
    GenerationFailure,
    #[error("plaintext outside Z_n")]
    PlaintextOutOfRange,
    #[error("randomness must be a unit modulo n")]
    InvalidRandomness,
    #[error("ciphertext is not a unit modulo n^2")]
    InvalidCiphertext,
    #[error("ciphertexts or keys belong to different key pairs")]
    KeyMismatch,
    #[error("value does not fit the plaintext space")]
    EncodingOverflow,
    #[error("malformed encrypted value")]
    InvalidEncoding,
    #[error("malformed key: {0}")]
    MalformedKey(&'static str),
    #[error("authentication tag mismatch")]
    AuthenticationTagMismatch,
}
