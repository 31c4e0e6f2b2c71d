//! Foundational types: configuration, timestamps and the contact vector.

mod bits;
mod config;
mod timestamp;
mod vector;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bits::SlotBits;
pub use config::{slot_count, ConfigError, ConfigParams, TraceConfig, MINUTES_PER_DAY};
pub use timestamp::{TimeError, Timestamp};
pub use vector::{resolve_slot, ContactVector, VectorError};

/// Index of a user in the population, `0..N`. Displayed as `P<index>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

impl From<u32> for UserId {
    fn from(v: u32) -> Self {
        UserId(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid user id {0:?}")]
pub struct UserIdParseError(pub String);

impl FromStr for UserId {
    type Err = UserIdParseError;

    /// Accepts `P12`, `p12` or a bare `12`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.strip_prefix(['P', 'p']).unwrap_or(s);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(UserIdParseError(s.to_string()));
        }
        digits
            .parse::<u32>()
            .map(UserId)
            .map_err(|_| UserIdParseError(s.to_string()))
    }
}
