//! The query pipeline.
//!
//! For one envelope: claim the session, decrypt the query, parse it,
//! resolve and activate roles, check columns, regenerate with encrypted
//! literals and row filters, execute, seal the result, deactivate, and
//! complete the session. Deactivation runs on every path once activation
//! succeeded.

pub mod client;
pub mod config;
mod envelope;
pub mod protocol;
pub mod server;

use std::sync::Arc;
use std::time::{Instant, SystemTime};

use parking_lot::{RwLock, RwLockReadGuard, RwLockWriteGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use envelope::{EnvelopeError, QueryEnvelope, Request};

use crate::catalog::{Catalog, CatalogError, ResultSet};
use crate::crypto::{transport_decrypt, transport_encrypt, Randomness, SessionKey, SessionKeyGenerator};
use crate::hierarchy::Action;
use crate::ids::{SessionId, TenantId, UserId};
use crate::rbac::{minute_of_day, RbacEngine, RbacError};
use crate::session::{SessionManager, DEFAULT_SESSION_TTL};
use crate::sqlparse::{parse, regenerate, RegenerateError};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("not logged in")]
    NotLoggedIn,
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Pipeline checkpoints reported to [`PipelineHooks`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    SessionClaimed,
    Decrypted,
    Parsed,
    RolesResolved,
    Activated,
    Authorized,
    Regenerated,
    /// Reported immediately before execution.
    Execute,
    Executed,
    Sealed,
    Deactivated,
    Completed,
}

/// Observation points for tests and instrumentation. Hooks run with no
/// gateway lock held, so they may mutate the catalog.
pub trait PipelineHooks: Send + Sync {
    fn on_stage(&self, gateway: &Gateway, user: UserId, session: SessionId, stage: Stage);
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Denied(String),
    Error(String),
}

impl Outcome {
    pub fn is_ok(&self) -> bool {
        *self == Outcome::Ok
    }

    pub fn is_denied(&self) -> bool {
        matches!(self, Outcome::Denied(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub access_us: u64,
    pub activate_us: u64,
    pub deactivate_us: u64,
}

/// Plaintext of a sealed reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub outcome: Outcome,
    #[serde(default)]
    pub result: ResultSet,
    /// Tenant decryption key, hex of its canonical bytes, when sensitive
    /// access was requested and authorized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decryption_key: Option<String>,
}

/// What goes back to the client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    /// Encrypted under the session key.
    Sealed { sealed: Vec<u8>, timings: Timings },
    /// The session could not be used; nothing was decrypted.
    Rejected(String),
}

/// Full in-process view of one handled envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handled {
    pub outcome: Outcome,
    pub reply: Reply,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub session_ttl: std::time::Duration,
    /// Fixed PRNG seed for session keys (tests); entropy otherwise.
    pub key_seed: Option<u64>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self { session_ttl: DEFAULT_SESSION_TTL, key_seed: None }
    }
}

pub struct Gateway {
    catalog: RwLock<Catalog>,
    rbac: RbacEngine,
    sessions: SessionManager,
    hooks: RwLock<Option<Arc<dyn PipelineHooks>>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").finish_non_exhaustive()
    }
}

fn us(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}

struct Ctx<'a> {
    gw: &'a Gateway,
    user: UserId,
    sid: SessionId,
}

impl Ctx<'_> {
    fn stage(&self, s: Stage) {
        let hooks = self.gw.hooks.read().clone();
        if let Some(h) = hooks {
            h.on_stage(self.gw, self.user, self.sid, s);
        }
    }
}

fn rbac_outcome(e: RbacError) -> Outcome {
    match e {
        RbacError::UserNotFound(_) | RbacError::Hierarchy(_) | RbacError::AlreadyActivated(_) => Outcome::Error(e.to_string()),
        _ => Outcome::Denied(e.to_string()),
    }
}

impl Gateway {
    pub fn new(catalog: Catalog, options: GatewayOptions) -> Self {
        let generator = match options.key_seed {
            Some(seed) => SessionKeyGenerator::seeded(seed),
            None => SessionKeyGenerator::from_entropy(),
        };
        Self {
            catalog: RwLock::new(catalog),
            rbac: RbacEngine::new(),
            sessions: SessionManager::new(generator, options.session_ttl),
            hooks: RwLock::new(None),
        }
    }

    pub fn set_hooks(&self, hooks: Option<Arc<dyn PipelineHooks>>) {
        *self.hooks.write() = hooks;
    }

    pub fn catalog(&self) -> RwLockReadGuard<'_, Catalog> {
        self.catalog.read()
    }

    pub fn catalog_mut(&self) -> RwLockWriteGuard<'_, Catalog> {
        self.catalog.write()
    }

    pub fn rbac(&self) -> &RbacEngine {
        &self.rbac
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    /// Password login; failures do not say which part was wrong.
    pub fn login(&self, tenant: &str, username: &str, password: &str) -> Result<UserId, GatewayError> {
        self.catalog.read().verify_credentials(tenant, username, password).map_err(|_| GatewayError::AuthenticationFailed)
    }

    /// Issues a fresh single-use session key to an existing user.
    pub fn issue_session(&self, user: UserId) -> Result<(SessionId, SessionKey), GatewayError> {
        self.catalog.read().find_user(user)?;
        Ok(self.sessions.issue(user))
    }

    /// Parses and handles a wire-form envelope.
    pub fn handle_wire(&self, wire: &str) -> Handled {
        match QueryEnvelope::from_wire(wire) {
            Ok(env) => self.handle(&env),
            Err(e) => Handled {
                outcome: Outcome::Error(e.to_string()),
                reply: Reply::Rejected(e.to_string()),
                timings: Timings::default(),
            },
        }
    }

    pub fn handle(&self, env: &QueryEnvelope) -> Handled {
        let start = Instant::now();
        let ctx = Ctx { gw: self, user: env.user_id, sid: env.session_id };
        let key = match self.sessions.begin_transaction(env.session_id, env.user_id) {
            Ok(k) => k,
            Err(e) => {
                return Handled {
                    outcome: Outcome::Denied(e.to_string()),
                    reply: Reply::Rejected(e.to_string()),
                    timings: Timings { access_us: us(start), ..Timings::default() },
                };
            }
        };
        ctx.stage(Stage::SessionClaimed);

        let mut timings = Timings::default();
        let mut activated = false;
        let (outcome, payload) = self.run(&ctx, env, &key, &mut timings, &mut activated);
        let body = serde_json::to_vec(&ResultPayload {
            outcome: outcome.clone(),
            result: payload.0,
            decryption_key: payload.1,
        })
        .expect("payload serializes");
        let sealed = transport_encrypt(&key, &body, &mut rand::thread_rng());
        ctx.stage(Stage::Sealed);

        if activated {
            let t = Instant::now();
            if let Err(e) = self.rbac.deactivate_transaction(env.user_id, env.session_id) {
                log::error!("deactivation failed for {}: {e}", env.session_id);
            }
            timings.deactivate_us = us(t);
            ctx.stage(Stage::Deactivated);
        }
        self.sessions.complete(env.session_id);
        ctx.stage(Stage::Completed);
        timings.access_us = us(start);
        Handled { outcome, reply: Reply::Sealed { sealed, timings }, timings }
    }

    fn run(
        &self,
        ctx: &Ctx<'_>,
        env: &QueryEnvelope,
        key: &SessionKey,
        timings: &mut Timings,
        activated: &mut bool,
    ) -> (Outcome, (ResultSet, Option<String>)) {
        let none = || (ResultSet::default(), None);
        let plaintext = match transport_decrypt(key, &env.ciphertext) {
            Ok(p) => p,
            Err(e) => return (Outcome::Error(format!("query decryption failed: {e}")), none()),
        };
        ctx.stage(Stage::Decrypted);
        let Ok(text) = String::from_utf8(plaintext) else {
            return (Outcome::Error("query is not valid UTF-8".into()), none());
        };
        let parsed = match parse(&text) {
            Ok(q) => q,
            Err(e) => return (Outcome::Error(e.to_string()), none()),
        };
        ctx.stage(Stage::Parsed);

        let (tenant_id, role_set, hierarchy, schema, filters, enc_key, dec_key) = {
            let cat = self.catalog.read();
            let tenant_id = match cat.find_user(env.user_id) {
                Ok(u) => u.tenant_id,
                Err(e) => return (Outcome::Error(e.to_string()), none()),
            };
            let t = cat.tenant(tenant_id).expect("user's tenant exists");
            let roles = match self.rbac.get_user_roles(t, env.user_id, env.group_key.as_ref(), minute_of_day(SystemTime::now())) {
                Ok(r) => r,
                Err(e) => return (rbac_outcome(e), none()),
            };
            (
                tenant_id,
                roles,
                t.hierarchy.clone(),
                t.tables.get(&parsed.table).cloned(),
                t.row_filters(&parsed.table),
                t.keypair.encryption.clone(),
                t.keypair.decryption.clone(),
            )
        };
        ctx.stage(Stage::RolesResolved);

        let t = Instant::now();
        let activation = self.rbac.activate_permission(&hierarchy, env.session_id, &role_set, Some(&parsed));
        timings.activate_us = us(t);
        if let Err(e) = activation {
            return (rbac_outcome(e), none());
        }
        *activated = true;
        ctx.stage(Stage::Activated);

        let Some(schema) = schema else {
            return (Outcome::Denied(RbacError::TableDenied(parsed.table.clone()).to_string()), none());
        };
        let grant = match self.rbac.get_user_columns(env.user_id, env.session_id, &schema, &parsed) {
            Ok(g) => g,
            Err(e) => return (rbac_outcome(e), none()),
        };
        ctx.stage(Stage::Authorized);

        let regenerated = match regenerate(&parsed, &grant, &schema, &filters, &enc_key, &mut Randomness::Rng(&mut rand::thread_rng())) {
            Ok(r) => r,
            Err(e @ RegenerateError::EmptyProjection) => return (Outcome::Denied(e.to_string()), none()),
            Err(e) => return (Outcome::Error(e.to_string()), none()),
        };
        ctx.stage(Stage::Regenerated);

        ctx.stage(Stage::Execute);
        let result = if regenerated.statement.kind == Action::Select {
            self.catalog.read().execute_read(tenant_id, &regenerated.statement)
        } else {
            self.catalog.write().execute_write(tenant_id, &regenerated.statement)
        };
        let result = match result {
            Ok(r) => r,
            Err(e) => return (Outcome::Error(e.to_string()), none()),
        };
        ctx.stage(Stage::Executed);

        let touches_sensitive = regenerated.statement.referenced_columns().iter().any(|c| schema.is_sensitive(c));
        let release = env.wants_sensitive() && touches_sensitive;
        let key = release.then(|| hex::encode(dec_key.to_bytes()));
        (Outcome::Ok, (result, key))
    }

    /// Tenant of a user, for callers that need to scope admin actions.
    pub fn tenant_of(&self, user: UserId) -> Result<TenantId, GatewayError> {
        Ok(self.catalog.read().find_user(user)?.tenant_id)
    }
}

/// Opens a sealed reply with the session key.
pub fn open_reply(key: &SessionKey, sealed: &[u8]) -> Option<ResultPayload> {
    let body = transport_decrypt(key, sealed).ok()?;
    serde_json::from_slice(&body).ok()
}

/// Renders result cells for display; ciphertext cells are decrypted when a
/// key is available.
pub fn display_cell(v: &Value, key: Option<&crate::crypto::PaillierDecryptionKey>) -> String {
    match (v, key) {
        (Value::Cipher(b), Some(k)) => crate::crypto::EncryptedValue::from_bytes(b)
            .and_then(|e| e.decrypt(k))
            .map(|p| display_cell(&p, None))
            .unwrap_or_else(|_| "<undecryptable>".into()),
        (Value::Cipher(b), None) => format!("<encrypted {} bytes>", b.len()),
        (Value::Text(s), _) => s.clone(),
        (Value::Int(i), _) => i.to_string(),
    }
}
