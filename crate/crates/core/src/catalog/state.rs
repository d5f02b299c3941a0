use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CatalogError, DataRow, GroupRecord, TableSchema, TenantRecord, TenantState, UserRecord};
use crate::crypto::{PaillierKeyPair, SaltedHash};
use crate::hierarchy::{Permission, PermissionSet, RoleHierarchy};
use crate::ids::{GroupId, RoleId, TenantId, UserId};
use crate::rbac::Policy;
use crate::value::Value;

/// One durable catalog change. Ids are allocated by the caller and carried
/// in the record so that replay is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    CreateTenant { tenant_id: TenantId, name: String, root_role_id: RoleId, root_role: String, keypair: String },
    AddRole { tenant: TenantId, role_id: RoleId, parent: RoleId, name: String },
    DeleteRole { tenant: TenantId, role: RoleId },
    GrantPermission { tenant: TenantId, role: RoleId, permission: Permission },
    RevokePermission { tenant: TenantId, role: RoleId, permission: Permission },
    AddUser { tenant: TenantId, user_id: UserId, username: String, credential_hash: SaltedHash },
    DeleteUser { tenant: TenantId, user: UserId },
    AssignRole { tenant: TenantId, user: UserId, role: RoleId },
    UnassignRole { tenant: TenantId, user: UserId, role: RoleId },
    AddGroup { tenant: TenantId, group_id: GroupId, name: String, key_hash: SaltedHash },
    AddGroupRole { tenant: TenantId, group: GroupId, role: RoleId },
    AddGroupMember { tenant: TenantId, group: GroupId, user: UserId },
    RemoveGroupMember { tenant: TenantId, group: GroupId, user: UserId },
    CreateTable { tenant: TenantId, schema: TableSchema },
    DropTable { tenant: TenantId, table: String },
    MarkSensitive { tenant: TenantId, table: String, column: String, encrypted: Vec<(u64, Value)> },
    AddPolicy { tenant: TenantId, policy: Policy },
    RemovePolicy { tenant: TenantId, index: usize },
    InsertRow { table: String, row: DataRow },
    UpdateRows { tenant: TenantId, table: String, updates: Vec<(u64, BTreeMap<String, Value>)> },
    DeleteRows { tenant: TenantId, table: String, row_ids: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct CatalogState {
    pub next_id: u64,
    pub next_row_id: u64,
    pub tenants: BTreeMap<TenantId, TenantState>,
    pub rows: BTreeMap<String, Vec<DataRow>>,
}

impl Default for CatalogState {
    fn default() -> Self {
        Self { next_id: 1, next_row_id: 1, tenants: BTreeMap::new(), rows: BTreeMap::new() }
    }
}

fn not_found(what: impl std::fmt::Display) -> CatalogError {
    CatalogError::NotFound(what.to_string())
}

impl CatalogState {
    pub fn tenant(&self, id: TenantId) -> Result<&TenantState, CatalogError> {
        self.tenants.get(&id).ok_or_else(|| not_found(format!("tenant {id}")))
    }

    fn tenant_mut(&mut self, id: TenantId) -> Result<&mut TenantState, CatalogError> {
        self.tenants.get_mut(&id).ok_or_else(|| not_found(format!("tenant {id}")))
    }

    fn bump(&mut self, id: u64) {
        self.next_id = self.next_id.max(id + 1);
    }

    /// Validates `m` against the current state and applies it. On error the
    /// state is unchanged.
    pub fn apply(&mut self, m: &Mutation) -> Result<(), CatalogError> {
        match m {
            Mutation::CreateTenant { tenant_id, name, root_role_id, root_role, keypair } => {
                if self.tenants.contains_key(tenant_id) || self.tenants.values().any(|t| t.record.name == *name) {
                    return Err(CatalogError::Duplicate(format!("tenant `{name}`")));
                }
                let bytes = hex::decode(keypair).map_err(|e| CatalogError::InvalidInput(e.to_string()))?;
                let keypair = PaillierKeyPair::from_bytes(&bytes)?;
                let mut hierarchy = RoleHierarchy::new(*tenant_id);
                hierarchy.insert_role(*root_role_id, None, root_role, PermissionSet::new())?;
                let record = TenantRecord {
                    tenant_id: *tenant_id,
                    name: name.clone(),
                    root_role_id: *root_role_id,
                    paillier_key_id: keypair.key_id().to_string(),
                };
                self.tenants.insert(
                    *tenant_id,
                    TenantState {
                        record,
                        hierarchy,
                        users: BTreeMap::new(),
                        groups: BTreeMap::new(),
                        tables: BTreeMap::new(),
                        policies: Vec::new(),
                        keypair,
                    },
                );
                self.bump(tenant_id.0);
                self.bump(root_role_id.0);
            }
            Mutation::AddRole { tenant, role_id, parent, name } => {
                if self.tenants.values().any(|t| t.hierarchy.contains(*role_id)) {
                    return Err(CatalogError::Duplicate(format!("role {role_id}")));
                }
                self.tenant_mut(*tenant)?.hierarchy.insert_role(*role_id, Some(*parent), name, PermissionSet::new())?;
                self.bump(role_id.0);
            }
            Mutation::DeleteRole { tenant, role } => {
                let t = self.tenant_mut(*tenant)?;
                t.hierarchy.delete_role(*role, |_| false)?;
                for u in t.users.values_mut() {
                    u.assigned_role_ids.remove(role);
                }
                for g in t.groups.values_mut() {
                    g.role_ids.remove(role);
                }
                t.policies.retain(|p| p.role() != Some(*role));
            }
            Mutation::GrantPermission { tenant, role, permission } => {
                self.tenant_mut(*tenant)?.hierarchy.permissions_mut(*role)?.insert(permission);
            }
            Mutation::RevokePermission { tenant, role, permission } => {
                let perms = self.tenant_mut(*tenant)?.hierarchy.permissions_mut(*role)?;
                for g in PermissionSet::from_iter([permission.clone()]).grants() {
                    perms.remove_grant(g);
                }
            }
            Mutation::AddUser { tenant, user_id, username, credential_hash } => {
                if self.tenants.values().any(|t| t.users.contains_key(user_id)) {
                    return Err(CatalogError::Duplicate(format!("user {user_id}")));
                }
                let t = self.tenant_mut(*tenant)?;
                if t.user_by_name(username).is_some() {
                    return Err(CatalogError::Duplicate(format!("user `{username}`")));
                }
                t.users.insert(
                    *user_id,
                    UserRecord {
                        user_id: *user_id,
                        tenant_id: *tenant,
                        username: username.clone(),
                        credential_hash: credential_hash.clone(),
                        assigned_role_ids: BTreeSet::new(),
                        group_ids: BTreeSet::new(),
                    },
                );
                self.bump(user_id.0);
            }
            Mutation::DeleteUser { tenant, user } => {
                let t = self.tenant_mut(*tenant)?;
                t.users.remove(user).ok_or_else(|| not_found(format!("user {user}")))?;
                for g in t.groups.values_mut() {
                    g.member_user_ids.remove(user);
                }
            }
            Mutation::AssignRole { tenant, user, role } | Mutation::UnassignRole { tenant, user, role } => {
                let t = self.tenant_mut(*tenant)?;
                if !t.hierarchy.contains(*role) {
                    return Err(not_found(format!("role {role}")));
                }
                let u = t.users.get_mut(user).ok_or_else(|| not_found(format!("user {user}")))?;
                if matches!(m, Mutation::AssignRole { .. }) {
                    u.assigned_role_ids.insert(*role);
                } else {
                    u.assigned_role_ids.remove(role);
                }
            }
            Mutation::AddGroup { tenant, group_id, name, key_hash } => {
                if self.tenants.values().any(|t| t.groups.contains_key(group_id)) {
                    return Err(CatalogError::Duplicate(format!("group {group_id}")));
                }
                let t = self.tenant_mut(*tenant)?;
                if t.group_by_name(name).is_some() {
                    return Err(CatalogError::Duplicate(format!("group `{name}`")));
                }
                t.groups.insert(
                    *group_id,
                    GroupRecord {
                        group_id: *group_id,
                        tenant_id: *tenant,
                        name: name.clone(),
                        group_key_hash: key_hash.clone(),
                        role_ids: BTreeSet::new(),
                        member_user_ids: BTreeSet::new(),
                    },
                );
                self.bump(group_id.0);
            }
            Mutation::AddGroupRole { tenant, group, role } => {
                let t = self.tenant_mut(*tenant)?;
                if !t.hierarchy.contains(*role) {
                    return Err(not_found(format!("role {role}")));
                }
                t.groups.get_mut(group).ok_or_else(|| not_found(format!("group {group}")))?.role_ids.insert(*role);
            }
            Mutation::AddGroupMember { tenant, group, user } | Mutation::RemoveGroupMember { tenant, group, user } => {
                let t = self.tenant_mut(*tenant)?;
                let add = matches!(m, Mutation::AddGroupMember { .. });
                let u = t.users.get_mut(user).ok_or_else(|| not_found(format!("user {user}")))?;
                let g = t.groups.get_mut(group).ok_or_else(|| not_found(format!("group {group}")))?;
                if add {
                    g.member_user_ids.insert(*user);
                    u.group_ids.insert(*group);
                } else {
                    g.member_user_ids.remove(user);
                    u.group_ids.remove(group);
                }
            }
            Mutation::CreateTable { tenant, schema } => {
                let t = self.tenant_mut(*tenant)?;
                if t.tables.contains_key(&schema.name) {
                    return Err(CatalogError::Duplicate(format!("table `{}`", schema.name)));
                }
                t.tables.insert(schema.name.clone(), schema.clone());
            }
            Mutation::DropTable { tenant, table } => {
                let t = self.tenant_mut(*tenant)?;
                t.tables.remove(table).ok_or_else(|| not_found(format!("table `{table}`")))?;
                let ids: Vec<RoleId> = t.hierarchy.iter().map(|n| n.role_id).collect();
                for id in ids {
                    let perms = t.hierarchy.permissions_mut(id)?;
                    let stale: Vec<_> = perms.grants().filter(|g| g.table == *table).cloned().collect();
                    for g in &stale {
                        perms.remove_grant(g);
                    }
                }
                t.policies.retain(|p| p.row_filter_for(table).is_none());
                if let Some(rows) = self.rows.get_mut(table) {
                    rows.retain(|r| r.tenant_id != *tenant);
                }
            }
            Mutation::MarkSensitive { tenant, table, column, encrypted } => {
                let t = self.tenant_mut(*tenant)?;
                let schema = t.tables.get_mut(table).ok_or_else(|| not_found(format!("table `{table}`")))?;
                if !schema.has_column(column) {
                    return Err(not_found(format!("column `{table}.{column}`")));
                }
                schema.sensitive.insert(column.clone());
                let updates: BTreeMap<u64, &Value> = encrypted.iter().map(|(id, v)| (*id, v)).collect();
                for row in self.rows.get_mut(table).into_iter().flatten() {
                    if row.tenant_id == *tenant {
                        if let Some(v) = updates.get(&row.row_id) {
                            row.cells.insert(column.clone(), (*v).clone());
                        }
                    }
                }
            }
            Mutation::AddPolicy { tenant, policy } => self.tenant_mut(*tenant)?.policies.push(policy.clone()),
            Mutation::RemovePolicy { tenant, index } => {
                let t = self.tenant_mut(*tenant)?;
                if *index >= t.policies.len() {
                    return Err(not_found(format!("policy #{index}")));
                }
                t.policies.remove(*index);
            }
            Mutation::InsertRow { table, row } => {
                let t = self.tenant(row.tenant_id)?;
                let schema = t.tables.get(table).ok_or_else(|| not_found(format!("table `{table}`")))?;
                if row.cells.len() != schema.columns.len() || !schema.columns.iter().all(|c| row.cells.contains_key(c)) {
                    return Err(CatalogError::InvalidInput(format!("row does not match `{table}`")));
                }
                self.next_row_id = self.next_row_id.max(row.row_id + 1);
                self.rows.entry(table.clone()).or_default().push(row.clone());
            }
            Mutation::UpdateRows { tenant, table, updates } => {
                let updates: BTreeMap<u64, &BTreeMap<String, Value>> = updates.iter().map(|(id, c)| (*id, c)).collect();
                for row in self.rows.get_mut(table).into_iter().flatten() {
                    if row.tenant_id != *tenant {
                        continue;
                    }
                    if let Some(cells) = updates.get(&row.row_id) {
                        for (c, v) in cells.iter() {
                            row.cells.insert(c.clone(), v.clone());
                        }
                    }
                }
            }
            Mutation::DeleteRows { tenant, table, row_ids } => {
                let ids: BTreeSet<u64> = row_ids.iter().copied().collect();
                if let Some(rows) = self.rows.get_mut(table) {
                    rows.retain(|r| r.tenant_id != *tenant || !ids.contains(&r.row_id));
                }
            }
        }
        Ok(())
    }
}
