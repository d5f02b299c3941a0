//! Role resolution, least-privilege activation, symmetric deactivation and
//! accessible-column computation.
//!
//! Per user the engine keeps one [`ActivationRecord`] per activated role and
//! a live permission set `L`. Each record holds the atoms of `L` it is
//! responsible for, so that `L` is always the union of held sets. A record
//! created by senior domination is *standing*: its role already implies every
//! other member of the role set, so it is used for its transaction without
//! adding anything to `L`.
//!
//! On final deactivation of a record, held atoms still derivable from another
//! live record move to that record; the rest are revoked. This keeps the
//! live set equal to its pre-activation value whenever activations and
//! deactivations are balanced.

mod policy;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

pub use policy::{minute_of_day, Policy};

use crate::catalog::{TableSchema, TenantState, TENANT_COLUMN};
use crate::crypto::GroupKey;
use crate::hierarchy::{Action, HierarchyError, PermissionSet, RoleHierarchy, ALL_COLUMNS};
use crate::ids::{RoleId, TransactionId, UserId};
use crate::sqlparse::ParsedQuery;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RbacError {
    #[error("group key authentication failed")]
    GroupAuthFailure,
    #[error("user {0} not found")]
    UserNotFound(UserId),
    #[error("no activatable role in the role set")]
    NoActivatableRole,
    #[error("no live activation for this transaction")]
    NotActivated,
    #[error("transaction {0} already holds an activation")]
    AlreadyActivated(TransactionId),
    #[error("access denied to column(s): {}", .0.join(", "))]
    ColumnDenied(Vec<String>),
    #[error("access denied to table `{0}`")]
    TableDenied(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
}

/// The roles a user may activate for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleSet {
    pub user_id: UserId,
    pub roles: BTreeSet<RoleId>,
    /// The subset contributed by an authenticated group.
    pub group_roles: BTreeSet<RoleId>,
}

impl RoleSet {
    pub fn new(user_id: UserId, roles: impl IntoIterator<Item = RoleId>) -> Self {
        Self { user_id, roles: roles.into_iter().collect(), group_roles: BTreeSet::new() }
    }
}

/// Columns a transaction may touch on one table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnGrant {
    pub table: String,
    pub columns: BTreeSet<String>,
    /// Members of `columns` that are sensitive.
    pub sensitive_columns: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationRecord {
    pub user_id: UserId,
    pub activated_role: RoleId,
    /// Transactions sharing this activation; the refcount is its size.
    pub transactions: BTreeSet<TransactionId>,
    /// Atoms of the live set this record is responsible for. At creation
    /// this is exactly the activation delta.
    pub granted_permissions: PermissionSet,
    /// Role permissions plus those of all juniors, captured at activation.
    pub authority: PermissionSet,
    /// Every transaction holding this record came from a dominating role
    /// set. A standing record holds no atoms of the live set.
    pub standing: bool,
}

impl ActivationRecord {
    pub fn refcount(&self) -> usize {
        self.transactions.len()
    }
}

/// Result of [`RbacEngine::activate_permission`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activation {
    pub activated_role: RoleId,
    pub delta: PermissionSet,
    pub refcount: usize,
}

#[derive(Debug, Clone)]
struct TxActivation {
    role: RoleId,
    admin: bool,
    dominating: bool,
}

#[derive(Debug, Default)]
struct UserActivations {
    records: BTreeMap<RoleId, ActivationRecord>,
    live: PermissionSet,
    transactions: HashMap<TransactionId, TxActivation>,
}

/// Shared activation state. Mutations are serialized per user.
#[derive(Debug, Default)]
pub struct RbacEngine {
    users: RwLock<HashMap<UserId, Arc<Mutex<UserActivations>>>>,
}

impl RbacEngine {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, user: UserId) -> Arc<Mutex<UserActivations>> {
        if let Some(s) = self.users.read().get(&user) {
            return s.clone();
        }
        self.users.write().entry(user).or_default().clone()
    }

    fn existing(&self, user: UserId) -> Option<Arc<Mutex<UserActivations>>> {
        self.users.read().get(&user).cloned()
    }

    /// Individual roles plus, after group-key verification, the group's
    /// roles. Roles rejected by a time-window or concurrency policy at
    /// `minute` are left out.
    pub fn get_user_roles(
        &self,
        tenant: &TenantState,
        user_id: UserId,
        group_key: Option<&GroupKey>,
        minute: u16,
    ) -> Result<RoleSet, RbacError> {
        let user = tenant.users.get(&user_id).ok_or(RbacError::UserNotFound(user_id))?;
        let mut set = RoleSet::new(user_id, user.assigned_role_ids.iter().copied());
        if let Some(key) = group_key {
            let group = tenant.groups.get(&key.group_id).ok_or(RbacError::GroupAuthFailure)?;
            if !group.member_user_ids.contains(&user_id) || !group.group_key_hash.verify(&key.bytes) {
                return Err(RbacError::GroupAuthFailure);
            }
            set.group_roles = group.role_ids.clone();
            set.roles.extend(group.role_ids.iter().copied());
        }
        let admitted = |r: &RoleId| {
            tenant.hierarchy.contains(*r)
                && tenant.policies.iter().all(|p| {
                    p.role() != Some(*r) || p.admits_role(*r, minute, self.live_activation_count(*r) as u32)
                })
        };
        set.roles.retain(admitted);
        set.group_roles.retain(|r| set.roles.contains(r));
        Ok(set)
    }

    /// Activates the least-privileged role of `role_set` for `tx`.
    ///
    /// If one member is senior to every other member it becomes the
    /// activated role and the delta is empty. Otherwise the member granting
    /// the most of the query's columns (ties: smallest `lft`) is activated
    /// and the delta is its authority minus the live set.
    pub fn activate_permission(
        &self,
        hierarchy: &RoleHierarchy,
        tx: TransactionId,
        role_set: &RoleSet,
        hint: Option<&ParsedQuery>,
    ) -> Result<Activation, RbacError> {
        let members: Vec<RoleId> = role_set.roles.iter().copied().filter(|r| hierarchy.contains(*r)).collect();
        if members.is_empty() {
            return Err(RbacError::NoActivatableRole);
        }
        let dominating = dominating_role(hierarchy, &members)?;
        let role = match dominating {
            Some(r) => r,
            None => pick_role(hierarchy, &members, hint)?,
        };
        let authority = hierarchy.authority(role)?;
        let admin = hierarchy.is_root(role)?;

        let slot = self.slot(role_set.user_id);
        let mut st = slot.lock();
        if st.transactions.contains_key(&tx) {
            return Err(RbacError::AlreadyActivated(tx));
        }
        let UserActivations { records, live, transactions } = &mut *st;
        let delta = match records.get_mut(&role) {
            Some(rec) => {
                rec.transactions.insert(tx);
                if rec.standing && dominating.is_none() {
                    rec.standing = false;
                    let delta = rec.authority.difference(live);
                    rec.granted_permissions.extend(&delta);
                    live.extend(&delta);
                    delta
                } else {
                    PermissionSet::new()
                }
            }
            None => {
                let delta = if dominating.is_some() { PermissionSet::new() } else { authority.difference(live) };
                live.extend(&delta);
                records.insert(
                    role,
                    ActivationRecord {
                        user_id: role_set.user_id,
                        activated_role: role,
                        transactions: BTreeSet::from([tx]),
                        granted_permissions: delta.clone(),
                        authority,
                        standing: dominating.is_some(),
                    },
                );
                delta
            }
        };
        transactions.insert(tx, TxActivation { role, admin, dominating: dominating.is_some() });
        let refcount = records[&role].refcount();
        Ok(Activation { activated_role: role, delta, refcount })
    }

    /// Releases `tx`'s hold on `role` and returns the permissions actually
    /// revoked from the live set.
    pub fn deactivate_permission(&self, user: UserId, tx: TransactionId, role: RoleId) -> Result<PermissionSet, RbacError> {
        let slot = self.existing(user).ok_or(RbacError::NotActivated)?;
        let mut st = slot.lock();
        match st.transactions.get(&tx) {
            Some(t) if t.role == role => {}
            _ => return Err(RbacError::NotActivated),
        }
        st.transactions.remove(&tx);
        let UserActivations { records, live, transactions } = &mut *st;
        let rec = records.get_mut(&role).ok_or(RbacError::NotActivated)?;
        rec.transactions.remove(&tx);
        let released = if rec.refcount() == 0 {
            records.remove(&role).expect("record present").granted_permissions
        } else if !rec.standing && rec.transactions.iter().all(|t| transactions[t].dominating) {
            // Only dominating holders remain: the record reverts to standing.
            rec.standing = true;
            std::mem::take(&mut rec.granted_permissions)
        } else {
            return Ok(PermissionSet::new());
        };
        let mut revoked = PermissionSet::new();
        for atom in released.grants() {
            // Standing records authorize through their own authority and never hold atoms.
            match records.values_mut().find(|r| !r.standing && r.authority.contains(atom)) {
                Some(heir) => {
                    heir.granted_permissions.insert_grant(atom.clone());
                }
                None => {
                    revoked.insert_grant(atom.clone());
                }
            }
        }
        *live = live.difference(&revoked);
        Ok(revoked)
    }

    /// Deactivates whatever `tx` activated. Returns the revoked permissions.
    pub fn deactivate_transaction(&self, user: UserId, tx: TransactionId) -> Result<PermissionSet, RbacError> {
        let role = self.transaction_role(user, tx).ok_or(RbacError::NotActivated)?;
        self.deactivate_permission(user, tx, role)
    }

    pub fn transaction_role(&self, user: UserId, tx: TransactionId) -> Option<RoleId> {
        self.existing(user)?.lock().transactions.get(&tx).map(|t| t.role)
    }

    /// Permissions usable by `tx`: the live set plus its role's authority.
    /// The flag is true when the activated role is the tenant root.
    pub fn transaction_authorization(&self, user: UserId, tx: TransactionId) -> Result<(PermissionSet, bool), RbacError> {
        let slot = self.existing(user).ok_or(RbacError::NotActivated)?;
        let st = slot.lock();
        let t = st.transactions.get(&tx).ok_or(RbacError::NotActivated)?;
        let rec = &st.records[&t.role];
        Ok((st.live.union(&rec.authority), t.admin))
    }

    /// Accessible columns of `parsed` for transaction `tx`.
    pub fn get_user_columns(
        &self,
        user: UserId,
        tx: TransactionId,
        schema: &TableSchema,
        parsed: &ParsedQuery,
    ) -> Result<ColumnGrant, RbacError> {
        let (auth, admin) = self.transaction_authorization(user, tx)?;
        compute_user_columns(&auth, admin, schema, parsed)
    }

    pub fn live_permissions(&self, user: UserId) -> PermissionSet {
        self.existing(user).map(|s| s.lock().live.clone()).unwrap_or_default()
    }

    pub fn records(&self, user: UserId) -> Vec<ActivationRecord> {
        self.existing(user).map(|s| s.lock().records.values().cloned().collect()).unwrap_or_default()
    }

    pub fn has_activations(&self, user: UserId) -> bool {
        self.existing(user).is_some_and(|s| !s.lock().records.is_empty())
    }

    /// Live transactions using `role`, across all users.
    pub fn live_activation_count(&self, role: RoleId) -> usize {
        let slots: Vec<_> = self.users.read().values().cloned().collect();
        slots.iter().map(|s| s.lock().records.get(&role).map_or(0, |r| r.refcount())).sum()
    }

    pub fn is_role_in_use(&self, role: RoleId) -> bool {
        self.live_activation_count(role) > 0
    }

    /// Every user's live set; empty sets are omitted.
    pub fn snapshot(&self) -> BTreeMap<UserId, PermissionSet> {
        let slots: Vec<_> = self.users.read().iter().map(|(u, s)| (*u, s.clone())).collect();
        slots
            .into_iter()
            .filter_map(|(u, s)| {
                let live = s.lock().live.clone();
                (!live.is_empty()).then_some((u, live))
            })
            .collect()
    }
}

/// A member senior to every other member, if the set has at least two.
fn dominating_role(h: &RoleHierarchy, members: &[RoleId]) -> Result<Option<RoleId>, RbacError> {
    if members.len() < 2 {
        return Ok(None);
    }
    for &cand in members {
        let mut all = true;
        for &other in members {
            if other != cand && !h.is_senior(cand, other)? {
                all = false;
                break;
            }
        }
        if all {
            return Ok(Some(cand));
        }
    }
    Ok(None)
}

fn pick_role(h: &RoleHierarchy, members: &[RoleId], hint: Option<&ParsedQuery>) -> Result<RoleId, RbacError> {
    let mut best: Option<(usize, u32, RoleId)> = None;
    for &r in members {
        let score = match hint {
            Some(q) => {
                let auth = h.authority(r)?;
                q.referenced_columns().iter().filter(|c| covers(&auth, q.kind, &q.table, c)).count()
            }
            None => 0,
        };
        let lft = h.get(r)?.lft;
        let better = match best {
            None => true,
            Some((s, l, _)) => score > s || (score == s && lft < l),
        };
        if better {
            best = Some((score, lft, r));
        }
    }
    Ok(best.expect("members is nonempty").2)
}

fn covers(set: &PermissionSet, action: Action, table: &str, column: &str) -> bool {
    set.for_table(action, table).any(|g| g.column == ALL_COLUMNS || g.column == column)
}

/// Column admissibility for one statement under `authorization`.
///
/// Every referenced column must be granted for the statement's action and
/// table, and every referenced sensitive column must be granted with the
/// sensitive flag unless `admin` is set. `SELECT *` is narrowed to the
/// accessible columns by the caller.
pub fn compute_user_columns(
    authorization: &PermissionSet,
    admin: bool,
    schema: &TableSchema,
    parsed: &ParsedQuery,
) -> Result<ColumnGrant, RbacError> {
    let mut granted = BTreeSet::new();
    let mut sensitive_ok = BTreeSet::new();
    let mut any = false;
    for g in authorization.for_table(parsed.kind, &parsed.table) {
        any = true;
        let cols: Vec<&String> = if g.column == ALL_COLUMNS {
            schema.columns.iter().collect()
        } else {
            schema.columns.iter().filter(|c| **c == g.column).collect()
        };
        for c in cols {
            granted.insert(c.clone());
            if g.sensitive {
                sensitive_ok.insert(c.clone());
            }
        }
    }
    if !any {
        return Err(RbacError::TableDenied(parsed.table.clone()));
    }
    let usable = |c: &str| granted.contains(c) && (admin || !schema.is_sensitive(c) || sensitive_ok.contains(c));

    let mut denied: Vec<String> = parsed
        .referenced_columns()
        .into_iter()
        .filter(|c| *c == TENANT_COLUMN || !usable(c))
        .map(str::to_string)
        .collect();
    if parsed.selects_all() && !granted.iter().any(|c| usable(c)) {
        denied.push(ALL_COLUMNS.to_string());
    }
    if !denied.is_empty() {
        return Err(RbacError::ColumnDenied(denied));
    }
    let columns: BTreeSet<String> = granted.iter().filter(|c| usable(c)).cloned().collect();
    let sensitive_columns = columns.iter().filter(|c| schema.is_sensitive(c)).cloned().collect();
    Ok(ColumnGrant { table: parsed.table.clone(), columns, sensitive_columns })
}
