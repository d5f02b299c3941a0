//! Nested-set storage of a tenant's role hierarchy.
//!
//! Every role is a single row carrying `(lft, rgt)` bounds; ancestry is
//! interval containment. A tenant has exactly one root (its admin role).
//! Deleting a role promotes its children to the deleted role's parent.

mod permission;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use permission::{Action, Grant, Permission, PermissionSet, ALL_COLUMNS};

use crate::ids::{RoleId, TenantId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("role {0} not found")]
    RoleNotFound(RoleId),
    #[error("parent role {0} not found")]
    ParentNotFound(RoleId),
    #[error("role name `{0}` already exists in this tenant")]
    DuplicateRoleName(String),
    #[error("role id {0} already exists")]
    DuplicateRoleId(RoleId),
    #[error("tenant already has a root role")]
    RootExists,
    #[error("a non-root role needs a parent")]
    ParentRequired,
    #[error("role {0} is referenced by a live activation")]
    RoleInUse(RoleId),
    #[error("cannot delete the root role while it has children")]
    CannotDeleteRootWithChildren,
    #[error("corrupt hierarchy: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleNode {
    pub role_id: RoleId,
    pub tenant_id: TenantId,
    pub name: String,
    pub lft: u32,
    pub rgt: u32,
    pub permissions: PermissionSet,
}

impl RoleNode {
    /// True when the role carries the extra permission for sensitive columns.
    pub fn sensitive_allowed(&self) -> bool {
        self.permissions.grants().any(|g| g.sensitive)
    }

    /// `self` strictly contains `other`.
    pub fn is_senior_of(&self, other: &RoleNode) -> bool {
        self.lft < other.lft && self.rgt > other.rgt
    }

    fn width(&self) -> u32 {
        self.rgt - self.lft + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleHierarchy {
    tenant_id: TenantId,
    nodes: BTreeMap<RoleId, RoleNode>,
}

impl RoleHierarchy {
    pub fn new(tenant_id: TenantId) -> Self {
        Self { tenant_id, nodes: BTreeMap::new() }
    }

    pub fn tenant_id(&self) -> TenantId {
        self.tenant_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: RoleId) -> Result<&RoleNode, HierarchyError> {
        self.nodes.get(&id).ok_or(HierarchyError::RoleNotFound(id))
    }

    pub fn contains(&self, id: RoleId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn by_name(&self, name: &str) -> Option<&RoleNode> {
        self.nodes.values().find(|n| n.name == name)
    }

    pub fn root(&self) -> Option<&RoleNode> {
        self.nodes.values().min_by_key(|n| n.lft)
    }

    /// All roles in pre-order (ascending `lft`).
    pub fn iter(&self) -> impl Iterator<Item = &RoleNode> {
        let mut v: Vec<_> = self.nodes.values().collect();
        v.sort_by_key(|n| n.lft);
        v.into_iter()
    }

    pub fn insert_role(
        &mut self,
        role_id: RoleId,
        parent: Option<RoleId>,
        name: &str,
        permissions: PermissionSet,
    ) -> Result<&RoleNode, HierarchyError> {
        if self.nodes.contains_key(&role_id) {
            return Err(HierarchyError::DuplicateRoleId(role_id));
        }
        if self.by_name(name).is_some() {
            return Err(HierarchyError::DuplicateRoleName(name.to_string()));
        }
        let (lft, rgt) = match parent {
            None if self.nodes.is_empty() => (1, 2),
            None => return Err(HierarchyError::RootExists),
            Some(p) => {
                let boundary = self.nodes.get(&p).ok_or(HierarchyError::ParentNotFound(p))?.rgt;
                for n in self.nodes.values_mut() {
                    if n.lft >= boundary {
                        n.lft += 2;
                    }
                    if n.rgt >= boundary {
                        n.rgt += 2;
                    }
                }
                (boundary, boundary + 1)
            }
        };
        let node = RoleNode { role_id, tenant_id: self.tenant_id, name: name.to_string(), lft, rgt, permissions };
        Ok(self.nodes.entry(role_id).or_insert(node))
    }

    /// Removes `id`, promoting its children to its parent. `in_use` reports
    /// whether a live activation still references the role.
    pub fn delete_role(
        &mut self,
        id: RoleId,
        in_use: impl FnOnce(RoleId) -> bool,
    ) -> Result<RoleNode, HierarchyError> {
        let node = self.get(id)?.clone();
        if in_use(id) {
            return Err(HierarchyError::RoleInUse(id));
        }
        let is_root = self.immediate_senior(id)?.is_none();
        if is_root && node.width() > 2 {
            return Err(HierarchyError::CannotDeleteRootWithChildren);
        }
        self.nodes.remove(&id);
        for n in self.nodes.values_mut() {
            if n.lft > node.lft && n.rgt < node.rgt {
                n.lft -= 1;
                n.rgt -= 1;
            } else {
                if n.lft > node.rgt {
                    n.lft -= 2;
                }
                if n.rgt > node.rgt {
                    n.rgt -= 2;
                }
            }
        }
        Ok(node)
    }

    pub fn rename(&mut self, id: RoleId, name: &str) -> Result<(), HierarchyError> {
        if self.by_name(name).is_some_and(|n| n.role_id != id) {
            return Err(HierarchyError::DuplicateRoleName(name.to_string()));
        }
        self.nodes.get_mut(&id).ok_or(HierarchyError::RoleNotFound(id))?.name = name.to_string();
        Ok(())
    }

    pub fn permissions_mut(&mut self, id: RoleId) -> Result<&mut PermissionSet, HierarchyError> {
        self.nodes.get_mut(&id).map(|n| &mut n.permissions).ok_or(HierarchyError::RoleNotFound(id))
    }

    /// Strict ancestors, nearest first.
    pub fn seniors(&self, id: RoleId) -> Result<Vec<&RoleNode>, HierarchyError> {
        let node = self.get(id)?;
        let mut out: Vec<_> = self.nodes.values().filter(|n| n.is_senior_of(node)).collect();
        out.sort_by(|a, b| b.lft.cmp(&a.lft));
        Ok(out)
    }

    /// Strict descendants in pre-order.
    pub fn juniors(&self, id: RoleId) -> Result<Vec<&RoleNode>, HierarchyError> {
        let node = self.get(id)?;
        let mut out: Vec<_> = self.nodes.values().filter(|n| node.is_senior_of(n)).collect();
        out.sort_by_key(|n| n.lft);
        Ok(out)
    }

    pub fn immediate_senior(&self, id: RoleId) -> Result<Option<&RoleNode>, HierarchyError> {
        let node = self.get(id)?;
        Ok(self.nodes.values().filter(|n| n.is_senior_of(node)).max_by_key(|n| n.lft))
    }

    /// Immediate juniors in pre-order.
    pub fn children(&self, id: RoleId) -> Result<Vec<&RoleNode>, HierarchyError> {
        let juniors = self.juniors(id)?;
        Ok(juniors
            .iter()
            .copied()
            .filter(|j| !juniors.iter().any(|k| k.is_senior_of(j)))
            .collect())
    }

    /// Roles sharing the immediate senior of `id`, excluding `id` itself.
    pub fn siblings(&self, id: RoleId) -> Result<Vec<&RoleNode>, HierarchyError> {
        match self.immediate_senior(id)? {
            None => Ok(Vec::new()),
            Some(parent) => Ok(self.children(parent.role_id)?.into_iter().filter(|n| n.role_id != id).collect()),
        }
    }

    /// `a` is a strict senior of `b`.
    pub fn is_senior(&self, a: RoleId, b: RoleId) -> Result<bool, HierarchyError> {
        Ok(self.get(a)?.is_senior_of(self.get(b)?))
    }

    pub fn is_root(&self, id: RoleId) -> Result<bool, HierarchyError> {
        Ok(self.immediate_senior(id)?.is_none())
    }

    /// A role's own permissions together with those of all its juniors.
    pub fn authority(&self, id: RoleId) -> Result<PermissionSet, HierarchyError> {
        let mut set = self.get(id)?.permissions.clone();
        for j in self.juniors(id)? {
            set.extend(&j.permissions);
        }
        Ok(set)
    }

    /// Checks the nested-set encoding: bounds form a permutation of
    /// `1..=2n`, every interval has odd width, intervals never partially
    /// overlap, and a single root spans everything.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let corrupt = |m: String| Err(HierarchyError::Corrupt(m));
        let total = 2 * self.nodes.len() as u32;
        let mut seen = vec![false; total as usize + 1];
        for n in self.nodes.values() {
            if n.tenant_id != self.tenant_id {
                return corrupt(format!("{} belongs to another tenant", n.role_id));
            }
            if n.lft >= n.rgt || (n.rgt - n.lft) % 2 == 0 {
                return corrupt(format!("{} has bad bounds ({}, {})", n.role_id, n.lft, n.rgt));
            }
            for b in [n.lft, n.rgt] {
                if b == 0 || b > total || std::mem::replace(&mut seen[b as usize], true) {
                    return corrupt(format!("bound {b} repeated or out of range"));
                }
            }
        }
        let nodes: Vec<_> = self.nodes.values().collect();
        for a in &nodes {
            for b in &nodes {
                let partial = a.lft < b.lft && b.lft < a.rgt && a.rgt < b.rgt;
                if partial {
                    return corrupt(format!("{} and {} partially overlap", a.role_id, b.role_id));
                }
            }
        }
        if let Some(root) = self.root() {
            if root.lft != 1 || root.rgt != total {
                return corrupt("root does not span the tree".into());
            }
        }
        Ok(())
    }
}
