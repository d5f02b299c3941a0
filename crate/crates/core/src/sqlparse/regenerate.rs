use thiserror::Error;

use super::{ParsedQuery, Predicate, Projection};
use crate::hierarchy::Action;
use crate::catalog::TableSchema;
use crate::crypto::{CryptoError, EncryptedValue, PaillierEncryptionKey, Randomness};
use crate::rbac::ColumnGrant;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegenerateError {
    #[error("literal for column `{column}` does not fit the plaintext space")]
    EncodingOverflow { column: String },
    #[error("ciphertext literals are not accepted from clients (column `{column}`)")]
    CiphertextLiteral { column: String },
    #[error("no accessible column to project")]
    EmptyProjection,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// An authorized statement ready for execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegeneratedQuery {
    pub statement: ParsedQuery,
    pub text: String,
    /// Literal positions (see [`ParsedQuery::literals`]) replaced by ciphertexts.
    pub encrypted_positions: Vec<usize>,
    pub applied_filters: Vec<Predicate>,
}

/// Narrows `SELECT *` to the accessible columns, appends policy row filters
/// as extra conjuncts (INSERT has no WHERE clause, so filters are skipped), and replaces every literal bound to a sensitive column
/// with its Paillier encryption. Other literals are left untouched.
pub fn regenerate(
    parsed: &ParsedQuery,
    grant: &ColumnGrant,
    schema: &TableSchema,
    filters: &[Predicate],
    enc_key: &PaillierEncryptionKey,
    randomness: &mut Randomness<'_>,
) -> Result<RegeneratedQuery, RegenerateError> {
    let mut statement = parsed.clone();
    if statement.selects_all() {
        let cols: Vec<String> =
            schema.columns.iter().filter(|c| grant.columns.contains(c.as_str())).cloned().collect();
        if cols.is_empty() {
            return Err(RegenerateError::EmptyProjection);
        }
        statement.projection = Projection::Columns(cols);
    }
    let filters = if statement.kind == Action::Insert { &[][..] } else { filters };
    statement.predicates.extend(filters.iter().cloned());

    let mut position = 0usize;
    let mut encrypted_positions = Vec::new();
    let literals = statement
        .assignments
        .iter_mut()
        .map(|(c, v)| (&*c, v))
        .chain(statement.predicates.iter_mut().map(|p| (&p.column, &mut p.value)));
    for (column, value) in literals {
        if let Value::Cipher(_) = value {
            return Err(RegenerateError::CiphertextLiteral { column: column.clone() });
        }
        if schema.is_sensitive(column) {
            let enc = EncryptedValue::encrypt(enc_key, value, randomness).map_err(|e| match e {
                CryptoError::EncodingOverflow => RegenerateError::EncodingOverflow { column: column.clone() },
                other => RegenerateError::Crypto(other),
            })?;
            *value = Value::Cipher(enc.to_bytes());
            encrypted_positions.push(position);
        }
        position += 1;
    }

    Ok(RegeneratedQuery {
        text: statement.render(),
        statement,
        encrypted_positions,
        applied_filters: filters.to_vec(),
    })
}
