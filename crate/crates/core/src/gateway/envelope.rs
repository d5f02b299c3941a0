//! The client's single input string.
//!
//! Wire form, tab separated:
//! `<user id>\t<session id>\t<base64 ciphertext>\t<group key or empty>\t<requests or empty>`
//!
//! The group key is `<group id>:<64 hex>`. Requests are comma separated
//! `name=value` pairs; the only recognized one is `sensitive=true|false`.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use thiserror::Error;

use crate::crypto::GroupKey;
use crate::ids::{SessionId, UserId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("envelope must have 5 tab-separated fields, found {0}")]
    FieldCount(usize),
    #[error("bad {0} field")]
    BadField(&'static str),
    #[error("unknown request `{0}`")]
    UnknownRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    /// Ask for the tenant decryption key with the result.
    SensitiveAccess(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEnvelope {
    pub user_id: UserId,
    pub session_id: SessionId,
    pub ciphertext: Vec<u8>,
    pub group_key: Option<GroupKey>,
    pub requests: Vec<Request>,
}

impl QueryEnvelope {
    pub fn wants_sensitive(&self) -> bool {
        self.requests.iter().any(|r| *r == Request::SensitiveAccess(true))
    }

    pub fn to_wire(&self) -> String {
        let key = self.group_key.as_ref().map(GroupKey::to_wire).unwrap_or_default();
        let reqs: Vec<String> = self
            .requests
            .iter()
            .map(|r| match r {
                Request::SensitiveAccess(b) => format!("sensitive={b}"),
            })
            .collect();
        format!("{}\t{}\t{}\t{}\t{}", self.user_id.0, self.session_id.0, B64.encode(&self.ciphertext), key, reqs.join(","))
    }

    pub fn from_wire(s: &str) -> Result<Self, EnvelopeError> {
        let fields: Vec<&str> = s.split('\t').collect();
        if fields.len() != 5 {
            return Err(EnvelopeError::FieldCount(fields.len()));
        }
        let user_id = UserId(fields[0].parse().map_err(|_| EnvelopeError::BadField("user id"))?);
        let session_id = SessionId(fields[1].parse().map_err(|_| EnvelopeError::BadField("session id"))?);
        let ciphertext = B64.decode(fields[2]).map_err(|_| EnvelopeError::BadField("ciphertext"))?;
        let group_key = match fields[3] {
            "" => None,
            k => Some(GroupKey::from_wire(k).ok_or(EnvelopeError::BadField("group key"))?),
        };
        let mut requests = Vec::new();
        for r in fields[4].split(',').filter(|r| !r.is_empty()) {
            match r {
                "sensitive=true" => requests.push(Request::SensitiveAccess(true)),
                "sensitive=false" => requests.push(Request::SensitiveAccess(false)),
                other => return Err(EnvelopeError::UnknownRequest(other.to_string())),
            }
        }
        Ok(Self { user_id, session_id, ciphertext, group_key, requests })
    }
}
