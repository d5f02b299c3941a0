use std::fmt;

use serde::{Deserialize, Serialize};

/// A scalar as it appears in SQL literals, stored cells and result rows.
///
/// `Cipher` holds the serialized [`crate::crypto::EncryptedValue`] of a
/// sensitive column; it renders as a hex blob literal `X'..'`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Text(String),
    Cipher(#[serde(with = "hex_bytes")] Vec<u8>),
}

impl Value {
    pub fn is_cipher(&self) -> bool {
        matches!(self, Value::Cipher(_))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Value::Cipher(b) => write!(f, "X'{}'", hex::encode_upper(b)),
        }
    }
}

pub(crate) mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}
