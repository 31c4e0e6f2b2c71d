use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Timestamp;

pub const MINUTES_PER_DAY: u64 = 1440;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field} must be at least {min}, got {value}")]
    TooSmall { field: &'static str, min: u64, value: u64 },
    #[error("tau ({tau} min) is not an integer multiple of delta ({delta} min)")]
    RhoNotInteger { tau: u32, delta: u32 },
    #[error("rho = tau / delta must be greater than 1, got {0}")]
    RhoTooSmall(u32),
    #[error("rho given as {given} but tau / delta = {derived}")]
    RhoMismatch { given: u32, derived: u32 },
    #[error("value out of range: {0}")]
    OutOfRange(&'static str),
}

/// Number of tau-minute slots covering `days` days: `ceil(1440 * days / tau)`.
pub fn slot_count(days: u32, tau: u32) -> u32 {
    let minutes = MINUTES_PER_DAY * u64::from(days);
    minutes.div_ceil(u64::from(tau)) as u32
}

/// User-facing configuration as written in a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigParams {
    /// Incubation period in days.
    pub days: u32,
    /// Proximity duration in minutes.
    pub tau: u32,
    /// Sample interval in minutes.
    pub delta: u32,
    /// Optional cross-check for tau / delta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<u32>,
    /// Population size.
    pub population: u32,
    /// Average distinct close contacts per window (direct-area width).
    pub q: u32,
    /// Virtual IDs per user.
    pub r: u32,
    /// System deployment time.
    pub deployment: Timestamp,
}

/// Validated trace parameters with the derived slot counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ConfigParams", into = "ConfigParams")]
pub struct TraceConfig {
    days: u32,
    tau: u32,
    delta: u32,
    rho: u32,
    n: u32,
    n_prime: u32,
    population: u32,
    q: u32,
    r: u32,
    deployment: Timestamp,
}

impl TraceConfig {
    pub fn new(params: ConfigParams) -> Result<Self, ConfigError> {
        let ConfigParams {
            days,
            tau,
            delta,
            rho,
            population,
            q,
            r,
            deployment,
        } = params;
        for (field, value) in [
            ("days", days),
            ("tau", tau),
            ("delta", delta),
            ("population", population),
            ("q", q),
            ("r", r),
        ] {
            if value < 1 {
                return Err(ConfigError::TooSmall {
                    field,
                    min: 1,
                    value: u64::from(value),
                });
            }
        }
        if tau % delta != 0 {
            return Err(ConfigError::RhoNotInteger { tau, delta });
        }
        let derived = tau / delta;
        if derived <= 1 {
            return Err(ConfigError::RhoTooSmall(derived));
        }
        if let Some(given) = rho {
            if given != derived {
                return Err(ConfigError::RhoMismatch { given, derived });
            }
        }
        let minutes = MINUTES_PER_DAY * u64::from(days);
        let n_prime = minutes.div_ceil(u64::from(delta));
        if n_prime > u64::from(u32::MAX) {
            return Err(ConfigError::OutOfRange("days / delta"));
        }
        if u64::from(population) * u64::from(r) > u64::from(u32::MAX) {
            return Err(ConfigError::OutOfRange("population * r"));
        }
        Ok(TraceConfig {
            days,
            tau,
            delta,
            rho: derived,
            n: slot_count(days, tau),
            n_prime: n_prime as u32,
            population,
            q,
            r,
            deployment,
        })
    }

    pub fn days(&self) -> u32 {
        self.days
    }
    pub fn tau(&self) -> u32 {
        self.tau
    }
    pub fn delta(&self) -> u32 {
        self.delta
    }
    /// Sample intervals per slot.
    pub fn rho(&self) -> u32 {
        self.rho
    }
    /// Slots per window.
    pub fn n(&self) -> u32 {
        self.n
    }
    /// Sample intervals per window.
    pub fn n_prime(&self) -> u32 {
        self.n_prime
    }
    pub fn population(&self) -> u32 {
        self.population
    }
    pub fn q(&self) -> u32 {
        self.q
    }
    pub fn r(&self) -> u32 {
        self.r
    }
    pub fn deployment(&self) -> Timestamp {
        self.deployment
    }

    pub fn params(&self) -> ConfigParams {
        ConfigParams {
            days: self.days,
            tau: self.tau,
            delta: self.delta,
            rho: Some(self.rho),
            population: self.population,
            q: self.q,
            r: self.r,
            deployment: self.deployment,
        }
    }
}

impl TryFrom<ConfigParams> for TraceConfig {
    type Error = ConfigError;
    fn try_from(p: ConfigParams) -> Result<Self, ConfigError> {
        TraceConfig::new(p)
    }
}

impl From<TraceConfig> for ConfigParams {
    fn from(c: TraceConfig) -> Self {
        c.params()
    }
}
