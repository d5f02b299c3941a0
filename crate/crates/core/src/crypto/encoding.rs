//! Mapping column values into the Paillier plaintext space.
//!
//! Integers map directly: non-negative `v` to `v`, negative `v` to `n + v`,
//! both limited to magnitudes at most `(n - 1) / 2`. Text is UTF-8, split into
//! chunks of `(bits(n) - 1) / 8 - 1` bytes; each chunk gets a `0x01` marker byte
//! in front (so leading zero bytes survive) and is read as a big-endian integer.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::RngCore;

use super::paillier::{KeyId, PaillierCiphertext, PaillierDecryptionKey, PaillierEncryptionKey};
use super::CryptoError;
use crate::value::Value;

const VALUE_FORMAT_VERSION: u8 = 1;
const CHUNK_MARKER: u8 = 0x01;
/// Texts longer than this many chunks are refused.
pub const MAX_TEXT_CHUNKS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    Int = 1,
    Text = 2,
}

/// A sensitive cell: one ciphertext for an integer, one per chunk for text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedValue {
    pub kind: ValueKind,
    pub key_id: KeyId,
    pub chunks: Vec<BigUint>,
}

/// Source of Paillier randomness for value encryption.
pub enum Randomness<'a> {
    Rng(&'a mut dyn RngCore),
    /// Equal plaintexts give equal ciphertexts. Test oracles only.
    Deterministic,
}

pub fn encode_int(v: i64, n: &BigUint) -> Result<BigUint, CryptoError> {
    let half = (n - 1u32) >> 1;
    let mag = BigUint::from(v.unsigned_abs());
    if mag > half {
        return Err(CryptoError::EncodingOverflow);
    }
    Ok(if v >= 0 { mag } else { n - mag })
}

pub fn decode_int(m: &BigUint, n: &BigUint) -> Result<i64, CryptoError> {
    let half = (n - 1u32) >> 1;
    if m <= &half {
        m.to_i64().ok_or(CryptoError::EncodingOverflow)
    } else {
        let mag = n - m;
        let mag = mag.to_u64().ok_or(CryptoError::EncodingOverflow)?;
        if mag == 1 << 63 {
            Ok(i64::MIN)
        } else {
            i64::try_from(mag).map(|x| -x).map_err(|_| CryptoError::EncodingOverflow)
        }
    }
}

pub fn text_chunk_len(n: &BigUint) -> usize {
    ((n.bits().saturating_sub(1)) / 8).saturating_sub(1) as usize
}

pub fn encode_text(s: &str, n: &BigUint) -> Result<Vec<BigUint>, CryptoError> {
    let chunk = text_chunk_len(n);
    if chunk == 0 {
        return Err(CryptoError::EncodingOverflow);
    }
    let bytes = s.as_bytes();
    if bytes.is_empty() {
        return Ok(vec![BigUint::from(CHUNK_MARKER)]);
    }
    if bytes.len().div_ceil(chunk) > MAX_TEXT_CHUNKS {
        return Err(CryptoError::EncodingOverflow);
    }
    Ok(bytes
        .chunks(chunk)
        .map(|c| {
            let mut buf = Vec::with_capacity(c.len() + 1);
            buf.push(CHUNK_MARKER);
            buf.extend_from_slice(c);
            BigUint::from_bytes_be(&buf)
        })
        .collect())
}

pub fn decode_text(chunks: &[BigUint]) -> Result<String, CryptoError> {
    let mut out = Vec::new();
    for m in chunks {
        let bytes = m.to_bytes_be();
        match bytes.split_first() {
            Some((&CHUNK_MARKER, rest)) => out.extend_from_slice(rest),
            _ => return Err(CryptoError::InvalidEncoding),
        }
    }
    String::from_utf8(out).map_err(|_| CryptoError::InvalidEncoding)
}

impl EncryptedValue {
    pub fn encrypt(
        key: &PaillierEncryptionKey,
        value: &Value,
        randomness: &mut Randomness<'_>,
    ) -> Result<Self, CryptoError> {
        let (kind, plain) = match value {
            Value::Int(v) => (ValueKind::Int, vec![encode_int(*v, key.n())?]),
            Value::Text(s) => (ValueKind::Text, encode_text(s, key.n())?),
            Value::Cipher(_) => return Err(CryptoError::InvalidEncoding),
        };
        let chunks = plain
            .iter()
            .map(|m| match randomness {
                Randomness::Rng(rng) => key.encrypt(m, &mut **rng),
                Randomness::Deterministic => key.encrypt_deterministic(m),
            })
            .map(|c| c.map(|c| c.value))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { kind, key_id: key.key_id(), chunks })
    }

    pub fn decrypt(&self, key: &PaillierDecryptionKey) -> Result<Value, CryptoError> {
        if self.key_id != key.key_id() {
            return Err(CryptoError::KeyMismatch);
        }
        let plain = self
            .chunks
            .iter()
            .map(|c| key.decrypt(&PaillierCiphertext { value: c.clone(), key_id: self.key_id }))
            .collect::<Result<Vec<_>, _>>()?;
        match self.kind {
            ValueKind::Int => match plain.as_slice() {
                [m] => Ok(Value::Int(decode_int(m, key.n())?)),
                _ => Err(CryptoError::InvalidEncoding),
            },
            ValueKind::Text => Ok(Value::Text(decode_text(&plain)?)),
        }
    }

    /// Layout: version, kind, 8-byte key id, u32 BE chunk count, then each
    /// chunk as u32 BE length + big-endian magnitude.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![VALUE_FORMAT_VERSION, self.kind as u8];
        out.extend_from_slice(&self.key_id.0);
        out.extend_from_slice(&(self.chunks.len() as u32).to_be_bytes());
        for c in &self.chunks {
            let bytes = if c.is_zero() { Vec::new() } else { c.to_bytes_be() };
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let bad = || CryptoError::InvalidEncoding;
        if bytes.len() < 14 || bytes[0] != VALUE_FORMAT_VERSION {
            return Err(bad());
        }
        let kind = match bytes[1] {
            1 => ValueKind::Int,
            2 => ValueKind::Text,
            _ => return Err(bad()),
        };
        let mut key_id = [0u8; 8];
        key_id.copy_from_slice(&bytes[2..10]);
        let count = u32::from_be_bytes(bytes[10..14].try_into().unwrap()) as usize;
        if count > MAX_TEXT_CHUNKS {
            return Err(bad());
        }
        let mut rest = &bytes[14..];
        let mut chunks = Vec::with_capacity(count);
        for _ in 0..count {
            if rest.len() < 4 {
                return Err(bad());
            }
            let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
            rest = &rest[4..];
            if rest.len() < len {
                return Err(bad());
            }
            chunks.push(BigUint::from_bytes_be(&rest[..len]));
            rest = &rest[len..];
        }
        if !rest.is_empty() {
            return Err(bad());
        }
        Ok(Self { kind, key_id: KeyId(key_id), chunks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{GeneratorMode, PaillierKeyPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn int_encoding_edges() {
        let n = BigUint::from(35u32);
        assert_eq!(encode_int(17, &n).unwrap(), BigUint::from(17u32));
        assert_eq!(encode_int(-17, &n).unwrap(), BigUint::from(18u32));
        assert_eq!(encode_int(18, &n).unwrap_err(), CryptoError::EncodingOverflow);
        for v in -17..=17 {
            assert_eq!(decode_int(&encode_int(v, &n).unwrap(), &n).unwrap(), v);
        }
    }

    #[test]
    fn text_chunking_keeps_leading_zero_bytes() {
        let n = BigUint::from(u32::MAX); // 32 bits -> 2-byte chunks
        assert_eq!(text_chunk_len(&n), 2);
        let s = "\0\0a\0bcd";
        let chunks = encode_text(s, &n).unwrap();
        assert_eq!(chunks.len(), 4);
        assert!(chunks.iter().all(|c| c < &n));
        assert_eq!(decode_text(&chunks).unwrap(), s);
    }

    #[test]
    fn tiny_modulus_cannot_hold_text() {
        let n = BigUint::from(35u32);
        assert_eq!(encode_text("x", &n).unwrap_err(), CryptoError::EncodingOverflow);
    }

    #[test]
    fn value_roundtrip_through_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kp = PaillierKeyPair::generate(64, GeneratorMode::NPlusOne, &mut rng).unwrap();
        for v in [
            Value::Int(0),
            Value::Int(-42),
            Value::Int(i64::from(i32::MAX)),
            Value::Text(String::new()),
            Value::Text("O'Brien; DROP TABLE x --".into()),
            Value::Text("ünïcødé".into()),
        ] {
            let enc =
                EncryptedValue::encrypt(&kp.encryption, &v, &mut Randomness::Rng(&mut rng)).unwrap();
            let back = EncryptedValue::from_bytes(&enc.to_bytes()).unwrap();
            assert_eq!(back, enc);
            assert_eq!(back.decrypt(&kp.decryption).unwrap(), v);
        }
    }

    #[test]
    fn int_outside_plaintext_space_overflows() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let kp = PaillierKeyPair::generate(32, GeneratorMode::NPlusOne, &mut rng).unwrap();
        let err = EncryptedValue::encrypt(
            &kp.encryption,
            &Value::Int(i64::MAX),
            &mut Randomness::Deterministic,
        )
        .unwrap_err();
        assert_eq!(err, CryptoError::EncodingOverflow);
    }
}
