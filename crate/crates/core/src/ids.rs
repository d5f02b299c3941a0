use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident, $prefix:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(TenantId, "t");
id_type!(UserId, "u");
id_type!(RoleId, "r");
id_type!(GroupId, "g");
id_type!(
    /// One session covers exactly one query transaction, so the session id
    /// doubles as the transaction id.
    SessionId,
    "s"
);

pub type TransactionId = SessionId;
