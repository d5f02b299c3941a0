//! Policy and constraint records evaluated by the access-control engine.
//!
//! Two hook points consume them: role-set validation (may this role join the
//! set right now?) and query regeneration (row filters appended to WHERE).

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ids::RoleId;
use crate::sqlparse::Predicate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// The role can only be used between `start_minute` and `end_minute`
    /// (UTC minutes since midnight, end exclusive). Windows may wrap midnight.
    TimeWindow { role: RoleId, start_minute: u16, end_minute: u16 },
    /// At most `max` live activations of the role across all users.
    MaxConcurrentActivations { role: RoleId, max: u32 },
    /// Conjunct appended to every statement on `table`.
    RowFilter { table: String, predicate: Predicate },
}

pub fn minute_of_day(now: SystemTime) -> u16 {
    let secs = now.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    ((secs / 60) % (24 * 60)) as u16
}

impl Policy {
    /// Role-set validation hook. `live_activations` counts current live
    /// activations of the role.
    pub fn admits_role(&self, role: RoleId, minute: u16, live_activations: u32) -> bool {
        match *self {
            Policy::TimeWindow { role: r, start_minute, end_minute } if r == role => {
                if start_minute <= end_minute {
                    (start_minute..end_minute).contains(&minute)
                } else {
                    minute >= start_minute || minute < end_minute
                }
            }
            Policy::MaxConcurrentActivations { role: r, max } if r == role => live_activations < max,
            _ => true,
        }
    }

    pub fn row_filter_for(&self, table: &str) -> Option<&Predicate> {
        match self {
            Policy::RowFilter { table: t, predicate } if t == table => Some(predicate),
            _ => None,
        }
    }

    pub fn role(&self) -> Option<RoleId> {
        match *self {
            Policy::TimeWindow { role, .. } | Policy::MaxConcurrentActivations { role, .. } => Some(role),
            Policy::RowFilter { .. } => None,
        }
    }
}
