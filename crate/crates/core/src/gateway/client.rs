//! Client side: transports to a gateway and a query helper that performs
//! the key request, envelope sealing and reply opening.

use std::net::TcpStream;
use std::sync::Arc;

use thiserror::Error;

use super::protocol::{decode_query_result, read_frame, write_frame, Frame, ProtocolError, Tag};
use super::{open_reply, Gateway, QueryEnvelope, Reply, Request, ResultPayload, Timings};
use crate::crypto::{transport_encrypt, GroupKey, PaillierDecryptionKey, SessionKey};
use crate::ids::{SessionId, UserId};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("server error: {0}")]
    Server(String),
    #[error("unexpected response: {0}")]
    Unexpected(&'static str),
    #[error("reply could not be opened with the session key")]
    BadReply,
    #[error("not logged in")]
    NotLoggedIn,
}

/// How a client reaches the gateway.
pub trait Transport {
    fn login(&mut self, tenant: &str, user: &str, password: &str) -> Result<UserId, ClientError>;
    fn request_key(&mut self) -> Result<(SessionId, [u8; 32]), ClientError>;
    fn send_query(&mut self, envelope_wire: &str) -> Result<Reply, ClientError>;
}

/// Calls the gateway directly in the same process.
#[derive(Debug, Clone)]
pub struct InProcess {
    gateway: Arc<Gateway>,
    user: Option<UserId>,
}

impl InProcess {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Self { gateway, user: None }
    }
}

impl Transport for InProcess {
    fn login(&mut self, tenant: &str, user: &str, password: &str) -> Result<UserId, ClientError> {
        let uid = self.gateway.login(tenant, user, password).map_err(|e| ClientError::Server(e.to_string()))?;
        self.user = Some(uid);
        Ok(uid)
    }

    fn request_key(&mut self) -> Result<(SessionId, [u8; 32]), ClientError> {
        let uid = self.user.ok_or(ClientError::NotLoggedIn)?;
        let (sid, key) = self.gateway.issue_session(uid).map_err(|e| ClientError::Server(e.to_string()))?;
        Ok((sid, key.bytes))
    }

    fn send_query(&mut self, envelope_wire: &str) -> Result<Reply, ClientError> {
        Ok(self.gateway.handle_wire(envelope_wire).reply)
    }
}

/// Framed TCP connection to a gateway server.
#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr).map_err(ProtocolError::from)?;
        stream.set_nodelay(true).map_err(ProtocolError::from)?;
        Ok(Self { stream })
    }

    fn call(&mut self, tag: Tag, body: impl Into<Vec<u8>>) -> Result<Frame, ClientError> {
        write_frame(&mut self.stream, &Frame::new(tag, body))?;
        let f = read_frame(&mut self.stream)?.ok_or(ClientError::Unexpected("connection closed"))?;
        match f.tag {
            Tag::Result => Ok(f),
            Tag::Error => Err(ClientError::Server(String::from_utf8_lossy(&f.body).into_owned())),
            _ => Err(ClientError::Unexpected("frame tag")),
        }
    }
}

impl Transport for TcpTransport {
    fn login(&mut self, tenant: &str, user: &str, password: &str) -> Result<UserId, ClientError> {
        let f = self.call(Tag::Login, format!("{tenant}\t{user}\t{password}"))?;
        f.text()?.parse().map(UserId).map_err(|_| ClientError::Unexpected("user id"))
    }

    fn request_key(&mut self) -> Result<(SessionId, [u8; 32]), ClientError> {
        let f = self.call(Tag::KeyRequest, Vec::new())?;
        let (sid, key) = f.text()?.split_once('\t').ok_or(ClientError::Unexpected("key response"))?;
        let sid = sid.parse().map(SessionId).map_err(|_| ClientError::Unexpected("session id"))?;
        let key = hex::decode(key).ok().and_then(|k| k.try_into().ok()).ok_or(ClientError::Unexpected("session key"))?;
        Ok((sid, key))
    }

    fn send_query(&mut self, envelope_wire: &str) -> Result<Reply, ClientError> {
        write_frame(&mut self.stream, &Frame::new(Tag::Query, envelope_wire))?;
        let f = read_frame(&mut self.stream)?.ok_or(ClientError::Unexpected("connection closed"))?;
        match f.tag {
            Tag::Result => {
                let (timings, sealed) = decode_query_result(&f.body)?;
                Ok(Reply::Sealed { sealed: sealed.to_vec(), timings })
            }
            Tag::Error => Ok(Reply::Rejected(String::from_utf8_lossy(&f.body).into_owned())),
            _ => Err(ClientError::Unexpected("frame tag")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryResponse {
    pub payload: ResultPayload,
    pub timings: Timings,
    /// The envelope as sent, for replay experiments.
    pub envelope_wire: String,
}

impl QueryResponse {
    pub fn decryption_key(&self) -> Option<PaillierDecryptionKey> {
        let hex_key = self.payload.decryption_key.as_ref()?;
        PaillierDecryptionKey::from_bytes(&hex::decode(hex_key).ok()?).ok()
    }
}

/// A logged-in user issuing queries, one fresh session key per query.
pub struct QueryClient<T: Transport> {
    transport: T,
    user: UserId,
    pub group_key: Option<GroupKey>,
}

impl<T: Transport> QueryClient<T> {
    pub fn login(mut transport: T, tenant: &str, user: &str, password: &str) -> Result<Self, ClientError> {
        let user = transport.login(tenant, user, password)?;
        Ok(Self { transport, user, group_key: None })
    }

    pub fn user_id(&self) -> UserId {
        self.user
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Builds a sealed envelope for `sql` under a freshly issued key.
    pub fn seal(&mut self, sql: &str, sensitive: bool) -> Result<(SessionKey, QueryEnvelope), ClientError> {
        let (sid, bytes) = self.transport.request_key()?;
        let key = SessionKey { bytes, issued_to: self.user, transaction_id: sid };
        let env = QueryEnvelope {
            user_id: self.user,
            session_id: sid,
            ciphertext: transport_encrypt(&key, sql.as_bytes(), &mut rand::thread_rng()),
            group_key: self.group_key.clone(),
            requests: if sensitive { vec![Request::SensitiveAccess(true)] } else { Vec::new() },
        };
        Ok((key, env))
    }

    pub fn query(&mut self, sql: &str, sensitive: bool) -> Result<QueryResponse, ClientError> {
        let (key, env) = self.seal(sql, sensitive)?;
        let wire = env.to_wire();
        match self.transport.send_query(&wire)? {
            Reply::Sealed { sealed, timings } => {
                let payload = open_reply(&key, &sealed).ok_or(ClientError::BadReply)?;
                Ok(QueryResponse { payload, timings, envelope_wire: wire })
            }
            Reply::Rejected(m) => Err(ClientError::Server(m)),
        }
    }
}
