//! Single-use session keys.
//!
//! A session moves `Issued -> InQuery -> Completed` or `Issued -> Expired`.
//! The `Issued -> InQuery` step is an atomic check-and-set, so a key can
//! back at most one query; any later use of the session is rejected before
//! its ciphertext is even looked at.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use thiserror::Error;

use crate::crypto::{SessionKey, SessionKeyGenerator};
use crate::ids::{SessionId, UserId};

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(60);

/// Finished sessions are remembered this many TTLs before being dropped.
/// After that an id is unknown, which is rejected just the same.
const RETENTION_TTLS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    Issued,
    InQuery,
    Completed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    Unknown(SessionId),
    #[error("session {0} was issued to another user")]
    NotOwner(SessionId),
    #[error("session {0} has already been used")]
    Replay(SessionId),
    #[error("session {0} is in use")]
    InUse(SessionId),
    #[error("session {0} has expired")]
    Expired(SessionId),
}

#[derive(Debug)]
struct SessionRecord {
    user: UserId,
    key: SessionKey,
    phase: SessionPhase,
    issued_at: Instant,
    finished_at: Option<Instant>,
}

#[derive(Debug)]
pub struct SessionManager {
    generator: SessionKeyGenerator,
    next_id: AtomicU64,
    ttl: Duration,
    sessions: Mutex<HashMap<SessionId, SessionRecord>>,
}

impl SessionManager {
    pub fn new(generator: SessionKeyGenerator, ttl: Duration) -> Self {
        Self { generator, next_id: AtomicU64::new(1), ttl, sessions: Mutex::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    /// Mints a fresh session and key for `user`.
    pub fn issue(&self, user: UserId) -> (SessionId, SessionKey) {
        let sid = SessionId(self.next_id.fetch_add(1, Ordering::Relaxed));
        let key = self.generator.issue(user, sid);
        let rec = SessionRecord {
            user,
            key: key.clone(),
            phase: SessionPhase::Issued,
            issued_at: Instant::now(),
            finished_at: None,
        };
        self.sessions.lock().insert(sid, rec);
        (sid, key)
    }

    /// Claims the session for one query and returns its key.
    pub fn begin_transaction(&self, sid: SessionId, user: UserId) -> Result<SessionKey, SessionError> {
        let mut sessions = self.sessions.lock();
        let rec = sessions.get_mut(&sid).ok_or(SessionError::Unknown(sid))?;
        if rec.user != user {
            return Err(SessionError::NotOwner(sid));
        }
        match rec.phase {
            SessionPhase::Issued if rec.issued_at.elapsed() > self.ttl => {
                rec.phase = SessionPhase::Expired;
                rec.finished_at = Some(Instant::now());
                Err(SessionError::Expired(sid))
            }
            SessionPhase::Issued => {
                rec.phase = SessionPhase::InQuery;
                Ok(rec.key.clone())
            }
            SessionPhase::InQuery => Err(SessionError::InUse(sid)),
            SessionPhase::Completed => Err(SessionError::Replay(sid)),
            SessionPhase::Expired => Err(SessionError::Expired(sid)),
        }
    }

    /// Marks an in-flight session as used up.
    pub fn complete(&self, sid: SessionId) {
        if let Some(rec) = self.sessions.lock().get_mut(&sid) {
            if rec.phase == SessionPhase::InQuery {
                rec.phase = SessionPhase::Completed;
                rec.finished_at = Some(Instant::now());
            }
        }
    }

    pub fn phase(&self, sid: SessionId) -> Option<SessionPhase> {
        self.sessions.lock().get(&sid).map(|r| r.phase)
    }

    /// True if `user` holds an issued or in-flight session.
    pub fn has_live_session(&self, user: UserId) -> bool {
        self.sessions
            .lock()
            .values()
            .any(|r| r.user == user && matches!(r.phase, SessionPhase::Issued | SessionPhase::InQuery))
    }

    /// Expires stale issued sessions and forgets long-finished ones.
    /// Returns the number of sessions expired.
    pub fn expire_sweep(&self) -> usize {
        let now = Instant::now();
        let retention = self.ttl * RETENTION_TTLS;
        let mut expired = 0;
        let mut sessions = self.sessions.lock();
        for rec in sessions.values_mut() {
            if rec.phase == SessionPhase::Issued && now.duration_since(rec.issued_at) > self.ttl {
                rec.phase = SessionPhase::Expired;
                rec.finished_at = Some(now);
                expired += 1;
            }
        }
        sessions.retain(|_, r| r.finished_at.is_none_or(|t| now.duration_since(t) <= retention));
        expired
    }

    /// Number of sessions currently tracked, in any phase.
    pub fn len(&self) -> usize {
        self.sessions.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mgr(ttl: Duration) -> SessionManager {
        SessionManager::new(SessionKeyGenerator::seeded(1), ttl)
    }

    #[test]
    fn single_use() {
        let m = mgr(DEFAULT_SESSION_TTL);
        let (sid, key) = m.issue(UserId(1));
        assert_eq!(m.begin_transaction(sid, UserId(2)), Err(SessionError::NotOwner(sid)));
        assert_eq!(m.begin_transaction(sid, UserId(1)).unwrap().bytes, key.bytes);
        assert_eq!(m.begin_transaction(sid, UserId(1)), Err(SessionError::InUse(sid)));
        m.complete(sid);
        assert_eq!(m.begin_transaction(sid, UserId(1)), Err(SessionError::Replay(sid)));
        assert_eq!(m.phase(sid), Some(SessionPhase::Completed));
    }

    #[test]
    fn keys_are_distinct_per_session() {
        let m = mgr(DEFAULT_SESSION_TTL);
        let (_, a) = m.issue(UserId(1));
        let (_, b) = m.issue(UserId(1));
        assert_ne!(a.bytes, b.bytes);
    }

    #[test]
    fn expiry() {
        let m = mgr(Duration::from_millis(1));
        let (sid, _) = m.issue(UserId(1));
        assert!(m.has_live_session(UserId(1)));
        std::thread::sleep(Duration::from_millis(5));
        assert_eq!(m.begin_transaction(sid, UserId(1)), Err(SessionError::Expired(sid)));
        let (sid2, _) = m.issue(UserId(1));
        std::thread::sleep(Duration::from_millis(5));
        assert_eq!(m.expire_sweep(), 1);
        assert!(!m.has_live_session(UserId(1)));
        std::thread::sleep(Duration::from_millis(20));
        m.expire_sweep();
        assert_eq!(m.begin_transaction(sid2, UserId(1)), Err(SessionError::Unknown(sid2)));
    }

    #[test]
    fn concurrent_claims_admit_one() {
        let m = std::sync::Arc::new(mgr(DEFAULT_SESSION_TTL));
        let (sid, _) = m.issue(UserId(1));
        let wins: usize = (0..16)
            .map(|_| {
                let m = m.clone();
                std::thread::spawn(move || m.begin_transaction(sid, UserId(1)).is_ok() as usize)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .sum();
        assert_eq!(wins, 1);
    }
}
