//! Multi-tenant role-based access gateway with encrypted sensitive columns.

pub mod bench;
pub mod catalog;
pub mod crypto;
pub mod gateway;
pub mod hierarchy;
pub mod ids;
pub mod rbac;
pub mod session;
pub mod sqlparse;
pub mod value;
