//! Multi-tenant catalog: tenants, users, groups, roles and permissions, the
//! sensitive-column registry, and the shared-schema row store.
//!
//! Every data row carries its tenant id; statements only ever see rows of the
//! issuing tenant. All changes go through [`Mutation`] so that they can be
//! appended to the on-disk log and replayed on open.

mod exec;
pub mod fixture;
mod state;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{ExecutionError, ResultSet};
pub use state::Mutation;
pub use store::{LOG_FILE, SNAPSHOT_FILE, SNAPSHOT_INTERVAL, STORE_MAGIC, STORE_VERSION};

use crate::crypto::{
    EncryptedValue, GeneratorMode, GroupKey, KeyId, PaillierKeyPair, Randomness, SaltedHash,
};
use crate::hierarchy::{Action, HierarchyError, Permission, PermissionSet, RoleHierarchy, RoleNode, ALL_COLUMNS};
use crate::ids::{GroupId, RoleId, TenantId, UserId};
use crate::rbac::Policy;
use crate::value::Value;
use state::CatalogState;
use store::Store;

/// Column holding the owning tenant on every physical row. Not addressable
/// from queries.
pub const TENANT_COLUMN: &str = "tenant_id";
pub const DEFAULT_ROOT_ROLE: &str = "Admin";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0} already exists")]
    Duplicate(String),
    #[error("referential integrity violation: {0}")]
    ReferentialViolation(String),
    #[error("entity belongs to a different tenant")]
    TenantMismatch,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("key material: {0}")]
    Crypto(#[from] crate::crypto::CryptoError),
    #[error("storage: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<String>,
    pub sensitive: BTreeSet<String>,
}

impl TableSchema {
    pub fn new<C, S>(name: &str, columns: C, sensitive: S) -> Self
    where
        C: IntoIterator,
        C::Item: Into<String>,
        S: IntoIterator,
        S::Item: Into<String>,
    {
        Self {
            name: name.to_string(),
            columns: columns.into_iter().map(Into::into).collect(),
            sensitive: sensitive.into_iter().map(Into::into).collect(),
        }
    }

    pub fn has_column(&self, column: &str) -> bool {
        self.columns.iter().any(|c| c == column)
    }

    pub fn is_sensitive(&self, column: &str) -> bool {
        self.sensitive.contains(column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantRecord {
    pub tenant_id: TenantId,
    pub name: String,
    pub root_role_id: RoleId,
    pub paillier_key_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub tenant_id: TenantId,
    pub username: String,
    pub credential_hash: SaltedHash,
    pub assigned_role_ids: BTreeSet<RoleId>,
    pub group_ids: BTreeSet<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: GroupId,
    pub tenant_id: TenantId,
    pub name: String,
    pub group_key_hash: SaltedHash,
    pub role_ids: BTreeSet<RoleId>,
    pub member_user_ids: BTreeSet<UserId>,
}

/// Flattened view of one role permission, as listed by the admin tools.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionRow {
    pub permission_id: u64,
    pub role_id: RoleId,
    pub action: Action,
    pub table: String,
    pub columns: BTreeSet<String>,
    pub sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataRow {
    pub row_id: u64,
    pub tenant_id: TenantId,
    pub cells: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantState {
    pub record: TenantRecord,
    pub hierarchy: RoleHierarchy,
    pub users: BTreeMap<UserId, UserRecord>,
    pub groups: BTreeMap<GroupId, GroupRecord>,
    pub tables: BTreeMap<String, TableSchema>,
    pub policies: Vec<Policy>,
    #[serde(with = "keypair_hex")]
    pub keypair: PaillierKeyPair,
}

mod keypair_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::crypto::PaillierKeyPair;

    pub fn serialize<S: Serializer>(kp: &PaillierKeyPair, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(kp.to_bytes()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PaillierKeyPair, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        PaillierKeyPair::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

impl TenantState {
    pub fn user_by_name(&self, username: &str) -> Option<&UserRecord> {
        self.users.values().find(|u| u.username == username)
    }

    pub fn group_by_name(&self, name: &str) -> Option<&GroupRecord> {
        self.groups.values().find(|g| g.name == name)
    }

    pub fn role_by_name(&self, name: &str) -> Option<&RoleNode> {
        self.hierarchy.by_name(name)
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.get(name)
    }

    pub fn permission_rows(&self) -> Vec<PermissionRow> {
        let mut out = Vec::new();
        for node in self.hierarchy.iter() {
            for p in node.permissions.permissions() {
                out.push(PermissionRow {
                    permission_id: out.len() as u64 + 1,
                    role_id: node.role_id,
                    action: p.action,
                    table: p.table,
                    columns: p.columns,
                    sensitive: p.sensitive,
                });
            }
        }
        out
    }

    pub fn row_filters(&self, table: &str) -> Vec<crate::sqlparse::Predicate> {
        self.policies.iter().filter_map(|p| p.row_filter_for(table)).cloned().collect()
    }
}

/// The catalog plus its (optional) on-disk store.
#[derive(Debug)]
pub struct Catalog {
    state: CatalogState,
    store: Option<Store>,
}

impl Catalog {
    pub fn in_memory() -> Self {
        Self { state: CatalogState::default(), store: None }
    }

    /// Opens (or creates) a catalog persisted under `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let (store, state) = Store::open(dir.as_ref())?;
        Ok(Self { state, store: Some(store) })
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.store.as_ref().map(|s| s.dir().to_path_buf())
    }

    /// Writes a snapshot and truncates the log.
    pub fn compact(&mut self) -> Result<(), CatalogError> {
        if let Some(store) = &mut self.store {
            store.snapshot(&self.state)?;
        }
        Ok(())
    }

    /// Serialized form of the full state, used to compare catalogs.
    pub fn state_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.state).expect("catalog state is serializable")
    }

    fn commit(&mut self, m: Mutation) -> Result<(), CatalogError> {
        self.state.apply(&m)?;
        if let Some(store) = &mut self.store {
            store.append(&m, &self.state)?;
        }
        Ok(())
    }

    fn next_id(&self) -> u64 {
        self.state.next_id
    }

    // ---- lookups ----

    pub fn tenants(&self) -> impl Iterator<Item = &TenantState> {
        self.state.tenants.values()
    }

    pub fn tenant(&self, id: TenantId) -> Result<&TenantState, CatalogError> {
        self.state.tenant(id)
    }

    pub fn tenant_by_name(&self, name: &str) -> Result<&TenantState, CatalogError> {
        self.state
            .tenants
            .values()
            .find(|t| t.record.name == name)
            .ok_or_else(|| CatalogError::NotFound(format!("tenant `{name}`")))
    }

    pub fn user(&self, tenant: TenantId, user: UserId) -> Result<&UserRecord, CatalogError> {
        self.tenant(tenant)?.users.get(&user).ok_or_else(|| CatalogError::NotFound(format!("user {user}")))
    }

    /// Finds a user anywhere; users are unique across tenants by id.
    pub fn find_user(&self, user: UserId) -> Result<&UserRecord, CatalogError> {
        self.state
            .tenants
            .values()
            .find_map(|t| t.users.get(&user))
            .ok_or_else(|| CatalogError::NotFound(format!("user {user}")))
    }

    pub fn list_users(&self, tenant: TenantId) -> Result<Vec<&UserRecord>, CatalogError> {
        Ok(self.tenant(tenant)?.users.values().collect())
    }

    pub fn rows(&self, tenant: TenantId, table: &str) -> Vec<&DataRow> {
        self.state
            .rows
            .get(table)
            .map(|rows| rows.iter().filter(|r| r.tenant_id == tenant).collect())
            .unwrap_or_default()
    }

    /// Returns `Ok(())` when credentials match, a uniform error otherwise.
    pub fn verify_credentials(&self, tenant: &str, username: &str, password: &str) -> Result<UserId, CatalogError> {
        let fail = || CatalogError::NotFound("matching credentials".into());
        let t = self.tenant_by_name(tenant).map_err(|_| fail())?;
        let u = t.user_by_name(username).ok_or_else(fail)?;
        if u.credential_hash.verify(password.as_bytes()) {
            Ok(u.user_id)
        } else {
            Err(fail())
        }
    }

    // ---- tenants and roles ----

    /// Creates a tenant with its root role and a fresh Paillier key pair.
    pub fn create_tenant<R: RngCore>(
        &mut self,
        name: &str,
        root_role: &str,
        key_bits: u64,
        rng: &mut R,
    ) -> Result<TenantId, CatalogError> {
        if self.tenant_by_name(name).is_ok() {
            return Err(CatalogError::Duplicate(format!("tenant `{name}`")));
        }
        let keypair = PaillierKeyPair::generate(key_bits, GeneratorMode::NPlusOne, rng)?;
        let tenant_id = TenantId(self.next_id());
        let root_role_id = RoleId(self.next_id() + 1);
        self.commit(Mutation::CreateTenant {
            tenant_id,
            name: name.to_string(),
            root_role_id,
            root_role: root_role.to_string(),
            keypair: hex::encode(keypair.to_bytes()),
        })?;
        Ok(tenant_id)
    }

    pub fn add_role(&mut self, tenant: TenantId, name: &str, parent: RoleId) -> Result<RoleId, CatalogError> {
        self.ensure_role_in(tenant, parent)?;
        let role_id = RoleId(self.next_id());
        self.commit(Mutation::AddRole { tenant, role_id, parent, name: name.to_string() })?;
        Ok(role_id)
    }

    /// Deletes a role; `in_use` reports roles referenced by live activations.
    pub fn delete_role(
        &mut self,
        tenant: TenantId,
        role: RoleId,
        in_use: impl FnOnce(RoleId) -> bool,
    ) -> Result<(), CatalogError> {
        self.ensure_role_in(tenant, role)?;
        if in_use(role) {
            return Err(HierarchyError::RoleInUse(role).into());
        }
        self.commit(Mutation::DeleteRole { tenant, role })
    }

    pub fn grant_permission(&mut self, tenant: TenantId, role: RoleId, permission: Permission) -> Result<(), CatalogError> {
        self.ensure_role_in(tenant, role)?;
        let t = self.tenant(tenant)?;
        let schema = t
            .tables
            .get(&permission.table)
            .ok_or_else(|| CatalogError::NotFound(format!("table `{}`", permission.table)))?;
        if permission.columns.is_empty() {
            return Err(CatalogError::InvalidInput("permission needs at least one column".into()));
        }
        for c in &permission.columns {
            if c != ALL_COLUMNS && !schema.has_column(c) {
                return Err(CatalogError::NotFound(format!("column `{}.{c}`", schema.name)));
            }
        }
        self.commit(Mutation::GrantPermission { tenant, role, permission })
    }

    pub fn revoke_permission(&mut self, tenant: TenantId, role: RoleId, permission: Permission) -> Result<(), CatalogError> {
        self.ensure_role_in(tenant, role)?;
        self.commit(Mutation::RevokePermission { tenant, role, permission })
    }

    pub fn role_permissions(&self, tenant: TenantId, role: RoleId) -> Result<&PermissionSet, CatalogError> {
        Ok(&self.tenant(tenant)?.hierarchy.get(role)?.permissions)
    }

    /// Checks that `role` exists in `tenant`; a role of another tenant yields
    /// `TenantMismatch`.
    pub fn ensure_role_in(&self, tenant: TenantId, role: RoleId) -> Result<(), CatalogError> {
        let t = self.tenant(tenant)?;
        if t.hierarchy.contains(role) {
            return Ok(());
        }
        if self.state.tenants.values().any(|o| o.hierarchy.contains(role)) {
            Err(CatalogError::TenantMismatch)
        } else {
            Err(CatalogError::NotFound(format!("role {role}")))
        }
    }

    fn ensure_user_in(&self, tenant: TenantId, user: UserId) -> Result<(), CatalogError> {
        if self.tenant(tenant)?.users.contains_key(&user) {
            return Ok(());
        }
        if self.state.tenants.values().any(|o| o.users.contains_key(&user)) {
            Err(CatalogError::TenantMismatch)
        } else {
            Err(CatalogError::NotFound(format!("user {user}")))
        }
    }

    fn ensure_group_in(&self, tenant: TenantId, group: GroupId) -> Result<(), CatalogError> {
        if self.tenant(tenant)?.groups.contains_key(&group) {
            return Ok(());
        }
        if self.state.tenants.values().any(|o| o.groups.contains_key(&group)) {
            Err(CatalogError::TenantMismatch)
        } else {
            Err(CatalogError::NotFound(format!("group {group}")))
        }
    }

    // ---- users and groups ----

    pub fn register_user<R: RngCore>(
        &mut self,
        tenant: TenantId,
        username: &str,
        password: &str,
        rng: &mut R,
    ) -> Result<UserId, CatalogError> {
        if self.tenant(tenant)?.user_by_name(username).is_some() {
            return Err(CatalogError::Duplicate(format!("user `{username}`")));
        }
        let user_id = UserId(self.next_id());
        let credential_hash = SaltedHash::new(password.as_bytes(), rng);
        self.commit(Mutation::AddUser { tenant, user_id, username: username.to_string(), credential_hash })?;
        Ok(user_id)
    }

    /// Deletes a user, cascading group memberships. Refused while
    /// `has_live_session` reports an open session.
    pub fn delete_user(
        &mut self,
        tenant: TenantId,
        user: UserId,
        has_live_session: impl FnOnce(UserId) -> bool,
    ) -> Result<(), CatalogError> {
        self.ensure_user_in(tenant, user)?;
        if has_live_session(user) {
            return Err(CatalogError::ReferentialViolation(format!("user {user} has a live session")));
        }
        self.commit(Mutation::DeleteUser { tenant, user })
    }

    pub fn assign_role(&mut self, tenant: TenantId, user: UserId, role: RoleId) -> Result<(), CatalogError> {
        self.ensure_user_in(tenant, user)?;
        self.ensure_role_in(tenant, role)?;
        self.commit(Mutation::AssignRole { tenant, user, role })
    }

    pub fn unassign_role(&mut self, tenant: TenantId, user: UserId, role: RoleId) -> Result<(), CatalogError> {
        self.ensure_user_in(tenant, user)?;
        self.ensure_role_in(tenant, role)?;
        self.commit(Mutation::UnassignRole { tenant, user, role })
    }

    /// Creates a group with a freshly generated key; the key is returned once
    /// and only its salted hash is kept.
    pub fn create_group<R: RngCore>(&mut self, tenant: TenantId, name: &str, rng: &mut R) -> Result<GroupKey, CatalogError> {
        let group_id = GroupId(self.next_id());
        let key = GroupKey::random(group_id, rng);
        self.create_group_with_key(tenant, name, &key.bytes, rng)?;
        Ok(key)
    }

    pub fn create_group_with_key<R: RngCore>(
        &mut self,
        tenant: TenantId,
        name: &str,
        key: &[u8; 32],
        rng: &mut R,
    ) -> Result<GroupId, CatalogError> {
        if self.tenant(tenant)?.group_by_name(name).is_some() {
            return Err(CatalogError::Duplicate(format!("group `{name}`")));
        }
        let group_id = GroupId(self.next_id());
        let key_hash = SaltedHash::new(key, rng);
        self.commit(Mutation::AddGroup { tenant, group_id, name: name.to_string(), key_hash })?;
        Ok(group_id)
    }

    pub fn add_group_role(&mut self, tenant: TenantId, group: GroupId, role: RoleId) -> Result<(), CatalogError> {
        self.ensure_group_in(tenant, group)?;
        self.ensure_role_in(tenant, role)?;
        self.commit(Mutation::AddGroupRole { tenant, group, role })
    }

    pub fn add_group_member(&mut self, tenant: TenantId, group: GroupId, user: UserId) -> Result<(), CatalogError> {
        self.ensure_group_in(tenant, group)?;
        self.ensure_user_in(tenant, user)?;
        self.commit(Mutation::AddGroupMember { tenant, group, user })
    }

    pub fn remove_group_member(&mut self, tenant: TenantId, group: GroupId, user: UserId) -> Result<(), CatalogError> {
        self.ensure_group_in(tenant, group)?;
        self.ensure_user_in(tenant, user)?;
        self.commit(Mutation::RemoveGroupMember { tenant, group, user })
    }

    // ---- tables, sensitivity and policies ----

    /// Creates a table; the tenant's root role receives every action on all
    /// of its columns.
    pub fn create_table(&mut self, tenant: TenantId, name: &str, columns: &[&str]) -> Result<(), CatalogError> {
        let t = self.tenant(tenant)?;
        if t.tables.contains_key(name) {
            return Err(CatalogError::Duplicate(format!("table `{name}`")));
        }
        let mut seen = BTreeSet::new();
        for c in columns {
            if !is_identifier(c) || *c == TENANT_COLUMN || !seen.insert(*c) {
                return Err(CatalogError::InvalidInput(format!("bad column name `{c}`")));
            }
        }
        if !is_identifier(name) || columns.is_empty() {
            return Err(CatalogError::InvalidInput(format!("bad table definition `{name}`")));
        }
        let root = t.record.root_role_id;
        self.commit(Mutation::CreateTable { tenant, schema: TableSchema::new(name, columns.iter().copied(), None::<String>) })?;
        for action in Action::ALL {
            self.commit(Mutation::GrantPermission {
                tenant,
                role: root,
                permission: Permission::new(action, name, [ALL_COLUMNS], true),
            })?;
        }
        Ok(())
    }

    pub fn drop_table(&mut self, tenant: TenantId, name: &str) -> Result<(), CatalogError> {
        if !self.tenant(tenant)?.tables.contains_key(name) {
            return Err(CatalogError::NotFound(format!("table `{name}`")));
        }
        self.commit(Mutation::DropTable { tenant, table: name.to_string() })
    }

    /// Marks a column sensitive and encrypts the tenant's existing values in it.
    pub fn mark_sensitive<R: RngCore>(
        &mut self,
        tenant: TenantId,
        table: &str,
        column: &str,
        rng: &mut R,
    ) -> Result<(), CatalogError> {
        let t = self.tenant(tenant)?;
        let schema = t.tables.get(table).ok_or_else(|| CatalogError::NotFound(format!("table `{table}`")))?;
        if !schema.has_column(column) {
            return Err(CatalogError::NotFound(format!("column `{table}.{column}`")));
        }
        let key = &t.keypair.encryption;
        let mut encrypted = Vec::new();
        for row in self.rows(tenant, table) {
            if let Some(v) = row.cells.get(column) {
                if !v.is_cipher() {
                    let enc = EncryptedValue::encrypt(key, v, &mut Randomness::Rng(rng))?;
                    encrypted.push((row.row_id, Value::Cipher(enc.to_bytes())));
                }
            }
        }
        self.commit(Mutation::MarkSensitive { tenant, table: table.to_string(), column: column.to_string(), encrypted })
    }

    pub fn add_policy(&mut self, tenant: TenantId, policy: Policy) -> Result<(), CatalogError> {
        if let Some(role) = policy.role() {
            self.ensure_role_in(tenant, role)?;
        }
        if let Policy::RowFilter { table, predicate } = &policy {
            let schema = self
                .tenant(tenant)?
                .tables
                .get(table)
                .ok_or_else(|| CatalogError::NotFound(format!("table `{table}`")))?;
            if !schema.has_column(&predicate.column) {
                return Err(CatalogError::NotFound(format!("column `{table}.{}`", predicate.column)));
            }
        }
        self.commit(Mutation::AddPolicy { tenant, policy })
    }

    pub fn remove_policy(&mut self, tenant: TenantId, index: usize) -> Result<(), CatalogError> {
        if index >= self.tenant(tenant)?.policies.len() {
            return Err(CatalogError::NotFound(format!("policy #{index}")));
        }
        self.commit(Mutation::RemovePolicy { tenant, index })
    }

    /// Inserts a row as the administrator (fixtures, bulk load): sensitive
    /// values are encrypted, every column must be supplied.
    pub fn insert_row_admin<R: RngCore>(
        &mut self,
        tenant: TenantId,
        table: &str,
        values: BTreeMap<String, Value>,
        rng: &mut R,
    ) -> Result<u64, CatalogError> {
        let t = self.tenant(tenant)?;
        let schema = t.tables.get(table).ok_or_else(|| CatalogError::NotFound(format!("table `{table}`")))?;
        let mut cells = BTreeMap::new();
        for c in &schema.columns {
            let v = values.get(c).ok_or_else(|| CatalogError::InvalidInput(format!("missing value for `{c}`")))?;
            let v = if schema.is_sensitive(c) {
                Value::Cipher(EncryptedValue::encrypt(&t.keypair.encryption, v, &mut Randomness::Rng(rng))?.to_bytes())
            } else {
                v.clone()
            };
            cells.insert(c.clone(), v);
        }
        if let Some(extra) = values.keys().find(|k| !schema.has_column(k)) {
            return Err(CatalogError::NotFound(format!("column `{table}.{extra}`")));
        }
        let row_id = self.state.next_row_id;
        self.commit(Mutation::InsertRow { table: table.to_string(), row: DataRow { row_id, tenant_id: tenant, cells } })?;
        Ok(row_id)
    }

    pub fn key_id(&self, tenant: TenantId) -> Result<KeyId, CatalogError> {
        Ok(self.tenant(tenant)?.keypair.key_id())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}
