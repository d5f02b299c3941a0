//! Statement execution against the shared row store.
//!
//! Every statement is implicitly restricted to the issuing tenant's rows.
//! Predicates on sensitive columns compare the decrypted cell with the
//! decrypted literal; plaintext never leaves this function.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Catalog, CatalogError, DataRow, Mutation, TableSchema, TenantState};
use crate::crypto::{EncryptedValue, PaillierDecryptionKey};
use crate::hierarchy::Action;
use crate::ids::TenantId;
use crate::sqlparse::{ParsedQuery, Predicate};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecutionError {
    #[error("no such table `{0}`")]
    NoSuchTable(String),
    #[error("no such column `{0}`")]
    NoSuchColumn(String),
    #[error("INSERT must supply every column; missing: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("type mismatch on column `{0}`")]
    TypeMismatch(String),
    #[error("plaintext value for sensitive column `{0}`")]
    PlaintextIntoSensitive(String),
    #[error("statement kind not valid here")]
    WrongKind,
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Rows returned by a SELECT, or the affected-row count of a write.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub affected: u64,
}

fn schema<'a>(t: &'a TenantState, table: &str) -> Result<&'a TableSchema, ExecutionError> {
    t.tables.get(table).ok_or_else(|| ExecutionError::NoSuchTable(table.to_string()))
}

fn check_columns<'a>(schema: &TableSchema, cols: impl IntoIterator<Item = &'a str>) -> Result<(), ExecutionError> {
    for c in cols {
        if !schema.has_column(c) {
            return Err(ExecutionError::NoSuchColumn(c.to_string()));
        }
    }
    Ok(())
}

fn open(v: &Value, key: &PaillierDecryptionKey, column: &str) -> Result<Value, ExecutionError> {
    match v {
        Value::Cipher(b) => EncryptedValue::from_bytes(b)
            .and_then(|e| e.decrypt(key))
            .map_err(|_| ExecutionError::TypeMismatch(column.to_string())),
        other => Ok(other.clone()),
    }
}

fn compare(cell: &Value, lit: &Value, key: &PaillierDecryptionKey, column: &str) -> Result<Ordering, ExecutionError> {
    match (open(cell, key, column)?, open(lit, key, column)?) {
        (Value::Int(a), Value::Int(b)) => Ok(a.cmp(&b)),
        (Value::Text(a), Value::Text(b)) => Ok(a.cmp(&b)),
        _ => Err(ExecutionError::TypeMismatch(column.to_string())),
    }
}

fn matches(row: &DataRow, preds: &[Predicate], key: &PaillierDecryptionKey) -> Result<bool, ExecutionError> {
    for p in preds {
        let cell = row.cells.get(&p.column).ok_or_else(|| ExecutionError::NoSuchColumn(p.column.clone()))?;
        if !p.op.holds(compare(cell, &p.value, key, &p.column)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sensitive columns only accept ciphertext; others reject it.
fn check_assignment(schema: &TableSchema, column: &str, v: &Value) -> Result<(), ExecutionError> {
    match (schema.is_sensitive(column), v.is_cipher()) {
        (true, false) => Err(ExecutionError::PlaintextIntoSensitive(column.to_string())),
        (false, true) => Err(ExecutionError::TypeMismatch(column.to_string())),
        _ => Ok(()),
    }
}

impl Catalog {
    fn matching_rows(&self, tenant: TenantId, q: &ParsedQuery) -> Result<Vec<&DataRow>, ExecutionError> {
        let t = self.tenant(tenant)?;
        let s = schema(t, &q.table)?;
        check_columns(s, q.where_columns())?;
        let key = &t.keypair.decryption;
        // Decrypt each literal once rather than once per row.
        let mut preds = q.predicates.clone();
        for p in &mut preds {
            p.value = open(&p.value, key, &p.column)?;
        }
        let mut out = Vec::new();
        for row in self.rows(tenant, &q.table) {
            if matches(row, &preds, key)? {
                out.push(row);
            }
        }
        Ok(out)
    }

    /// Runs a SELECT. `SELECT *` is expected to have been narrowed already;
    /// if not, every column is returned.
    pub fn execute_read(&self, tenant: TenantId, q: &ParsedQuery) -> Result<ResultSet, ExecutionError> {
        if q.kind != Action::Select {
            return Err(ExecutionError::WrongKind);
        }
        let t = self.tenant(tenant)?;
        let s = schema(t, &q.table)?;
        let columns: Vec<String> = if q.selects_all() { s.columns.clone() } else { q.select_columns().to_vec() };
        check_columns(s, columns.iter().map(String::as_str))?;
        let rows = self
            .matching_rows(tenant, q)?
            .into_iter()
            .map(|r| columns.iter().map(|c| r.cells[c].clone()).collect())
            .collect();
        Ok(ResultSet { columns, rows, affected: 0 })
    }

    /// Runs INSERT, UPDATE or DELETE and persists the change.
    pub fn execute_write(&mut self, tenant: TenantId, q: &ParsedQuery) -> Result<ResultSet, ExecutionError> {
        let t = self.tenant(tenant)?;
        let s = schema(t, &q.table)?;
        check_columns(s, q.assignment_columns())?;
        for (c, v) in &q.assignments {
            check_assignment(s, c, v)?;
        }
        let m = match q.kind {
            Action::Select => return Err(ExecutionError::WrongKind),
            Action::Insert => {
                let given = q.assignment_columns();
                let missing: Vec<String> = s.columns.iter().filter(|c| !given.contains(c.as_str())).cloned().collect();
                if !missing.is_empty() {
                    return Err(ExecutionError::MissingColumns(missing));
                }
                let cells: BTreeMap<String, Value> = q.assignments.iter().cloned().collect();
                Mutation::InsertRow {
                    table: q.table.clone(),
                    row: DataRow { row_id: self.state.next_row_id, tenant_id: tenant, cells },
                }
            }
            Action::Update => {
                let cells: BTreeMap<String, Value> = q.assignments.iter().cloned().collect();
                let updates = self.matching_rows(tenant, q)?.into_iter().map(|r| (r.row_id, cells.clone())).collect();
                Mutation::UpdateRows { tenant, table: q.table.clone(), updates }
            }
            Action::Delete => {
                let row_ids = self.matching_rows(tenant, q)?.into_iter().map(|r| r.row_id).collect();
                Mutation::DeleteRows { tenant, table: q.table.clone(), row_ids }
            }
        };
        let affected = match &m {
            Mutation::InsertRow { .. } => 1,
            Mutation::UpdateRows { updates, .. } => updates.len() as u64,
            Mutation::DeleteRows { row_ids, .. } => row_ids.len() as u64,
            _ => unreachable!("only row mutations are built here"),
        };
        if affected > 0 {
            self.commit(m)?;
        }
        Ok(ResultSet { columns: Vec::new(), rows: Vec::new(), affected })
    }

    /// Dispatches on the statement kind.
    pub fn execute(&mut self, tenant: TenantId, q: &ParsedQuery) -> Result<ResultSet, ExecutionError> {
        match q.kind {
            Action::Select => self.execute_read(tenant, q),
            _ => self.execute_write(tenant, q),
        }
    }
}
