use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Column name that grants every column of a table.
pub const ALL_COLUMNS: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Select,
    Insert,
    Update,
    Delete,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Select, Action::Insert, Action::Update, Action::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Select => "SELECT",
            Action::Insert => "INSERT",
            Action::Update => "UPDATE",
            Action::Delete => "DELETE",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SELECT" => Ok(Action::Select),
            "INSERT" => Ok(Action::Insert),
            "UPDATE" => Ok(Action::Update),
            "DELETE" => Ok(Action::Delete),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// One rule of a role: `action` on `columns` of `table`. `sensitive` marks the
/// extra permission needed to touch sensitive columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permission {
    pub action: Action,
    pub table: String,
    pub columns: BTreeSet<String>,
    pub sensitive: bool,
}

impl Permission {
    pub fn new<I, S>(action: Action, table: &str, columns: I, sensitive: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            action,
            table: table.to_string(),
            columns: columns.into_iter().map(Into::into).collect(),
            sensitive,
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cols: Vec<_> = self.columns.iter().map(String::as_str).collect();
        write!(f, "{} {}({})", self.action, self.table, cols.join(","))?;
        if self.sensitive {
            f.write_str(" +sensitive")?;
        }
        Ok(())
    }
}

/// The atomic unit the permission algebra works on: one action on one column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grant {
    pub action: Action,
    pub table: String,
    pub column: String,
    pub sensitive: bool,
}

impl Grant {
    pub fn covers(&self, action: Action, table: &str, column: &str) -> bool {
        self.action == action && self.table == table && (self.column == column || self.column == ALL_COLUMNS)
    }
}

/// Set of permissions, normalized to single-column grants so that overlap
/// between roles is computed per column.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PermissionSet {
    grants: BTreeSet<Grant>,
}

impl PermissionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, permission: &Permission) {
        for column in &permission.columns {
            self.grants.insert(Grant {
                action: permission.action,
                table: permission.table.clone(),
                column: column.clone(),
                sensitive: permission.sensitive,
            });
        }
    }

    pub fn insert_grant(&mut self, grant: Grant) -> bool {
        self.grants.insert(grant)
    }

    pub fn remove_grant(&mut self, grant: &Grant) -> bool {
        self.grants.remove(grant)
    }

    pub fn contains(&self, grant: &Grant) -> bool {
        self.grants.contains(grant)
    }

    pub fn is_empty(&self) -> bool {
        self.grants.is_empty()
    }

    pub fn len(&self) -> usize {
        self.grants.len()
    }

    pub fn grants(&self) -> impl Iterator<Item = &Grant> {
        self.grants.iter()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { grants: self.grants.union(&other.grants).cloned().collect() }
    }

    pub fn extend(&mut self, other: &Self) {
        self.grants.extend(other.grants.iter().cloned());
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self { grants: self.grants.difference(&other.grants).cloned().collect() }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { grants: self.grants.intersection(&other.grants).cloned().collect() }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.grants.is_subset(&other.grants)
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.grants.is_disjoint(&other.grants)
    }

    /// Grants matching `action` on `table`.
    pub fn for_table<'a>(&'a self, action: Action, table: &'a str) -> impl Iterator<Item = &'a Grant> + 'a {
        self.grants.iter().filter(move |g| g.action == action && g.table == table)
    }

    /// Regroups grants into one [`Permission`] per (action, table, sensitive).
    pub fn permissions(&self) -> Vec<Permission> {
        let mut out: Vec<Permission> = Vec::new();
        for g in &self.grants {
            match out
                .iter_mut()
                .find(|p| p.action == g.action && p.table == g.table && p.sensitive == g.sensitive)
            {
                Some(p) => {
                    p.columns.insert(g.column.clone());
                }
                None => out.push(Permission {
                    action: g.action,
                    table: g.table.clone(),
                    columns: [g.column.clone()].into(),
                    sensitive: g.sensitive,
                }),
            }
        }
        out
    }
}

impl FromIterator<Permission> for PermissionSet {
    fn from_iter<T: IntoIterator<Item = Permission>>(iter: T) -> Self {
        let mut set = Self::new();
        for p in iter {
            set.insert(&p);
        }
        set
    }
}

impl FromIterator<Grant> for PermissionSet {
    fn from_iter<T: IntoIterator<Item = Grant>>(iter: T) -> Self {
        Self { grants: iter.into_iter().collect() }
    }
}
