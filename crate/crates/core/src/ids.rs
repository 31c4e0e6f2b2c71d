//! Virtual-ID assignment.
//!
//! The positive integers `1..=N*r` are cut into `N` blocks of `r` consecutive
//! IDs. Each user owns one block per epoch; which block is decided either
//! deterministically (user `i` owns block `i`) or by a seeded permutation.
//! Rotation moves to the next epoch with a fresh permutation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::UserId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("unknown virtual id {vid} in epoch {epoch}")]
    UnknownVirtualId { vid: u64, epoch: u64 },
    #[error("unknown id epoch {0}")]
    UnknownEpoch(u64),
    #[error("invalid id table: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum IdMode {
    #[default]
    Deterministic,
    Seeded {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualIdTable {
    r: u32,
    users: u32,
    epoch: u64,
    mode: IdMode,
    /// `block_of[user]` is the block index owned by that user.
    block_of: Vec<u32>,
    /// `owner[block]` is the inverse permutation.
    owner: Vec<u32>,
}

fn permutation(users: u32, mode: IdMode) -> Vec<u32> {
    let mut blocks: Vec<u32> = (0..users).collect();
    if let IdMode::Seeded { seed } = mode {
        blocks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    blocks
}

impl VirtualIdTable {
    pub fn assign(users: u32, r: u32, mode: IdMode) -> Result<Self, IdError> {
        Self::build(users, r, 0, mode)
    }

    fn build(users: u32, r: u32, epoch: u64, mode: IdMode) -> Result<Self, IdError> {
        if users == 0 || r == 0 {
            return Err(IdError::Invalid("population and ids per user must be >= 1"));
        }
        if u64::from(users) * u64::from(r) > u64::from(u32::MAX) {
            return Err(IdError::Invalid("id universe exceeds 32 bits"));
        }
        let block_of = permutation(users, mode);
        let mut owner = vec![0; users as usize];
        for (user, &block) in block_of.iter().enumerate() {
            owner[block as usize] = user as u32;
        }
        Ok(VirtualIdTable {
            r,
            users,
            epoch,
            mode,
            block_of,
            owner,
        })
    }

    /// Next epoch, re-permuted with `seed`.
    pub fn rotate(&self, seed: u64) -> Self {
        Self::build(self.users, self.r, self.epoch + 1, IdMode::Seeded { seed }).expect("dimensions already validated")
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn mode(&self) -> IdMode {
        self.mode
    }

    pub fn users(&self) -> u32 {
        self.users
    }

    pub fn ids_per_user(&self) -> u32 {
        self.r
    }

    /// Largest assigned virtual ID; the universe is `1..=max_vid`.
    pub fn max_vid(&self) -> u64 {
        u64::from(self.users) * u64::from(self.r)
    }

    /// The set owned by `user`, in ascending order.
    pub fn ids_of(&self, user: UserId) -> Option<std::ops::RangeInclusive<u64>> {
        let block = u64::from(*self.block_of.get(user.index())?);
        let r = u64::from(self.r);
        Some(block * r + 1..=(block + 1) * r)
    }

    pub fn resolve(&self, vid: u64) -> Result<UserId, IdError> {
        if vid == 0 || vid > self.max_vid() {
            return Err(IdError::UnknownVirtualId { vid, epoch: self.epoch });
        }
        let block = (vid - 1) / u64::from(self.r);
        Ok(UserId(self.owner[block as usize]))
    }
}

/// Every epoch's table, so streams recorded under an older epoch still
/// resolve against the assignment they were produced with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRegistry {
    tables: BTreeMap<u64, VirtualIdTable>,
}

/// Persisted form: the tables are rebuilt from their modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRegistryState {
    pub users: u32,
    pub r: u32,
    pub epochs: Vec<IdMode>,
}

impl IdRegistry {
    pub fn new(table: VirtualIdTable) -> Self {
        IdRegistry {
            tables: BTreeMap::from([(table.epoch, table)]),
        }
    }

    pub fn current(&self) -> &VirtualIdTable {
        self.tables.values().next_back().expect("registry is never empty")
    }

    pub fn table(&self, epoch: u64) -> Result<&VirtualIdTable, IdError> {
        self.tables.get(&epoch).ok_or(IdError::UnknownEpoch(epoch))
    }

    pub fn rotate(&mut self, seed: u64) -> &VirtualIdTable {
        let next = self.current().rotate(seed);
        let epoch = next.epoch;
        self.tables.insert(epoch, next);
        &self.tables[&epoch]
    }

    pub fn resolve(&self, epoch: u64, vid: u64) -> Result<UserId, IdError> {
        self.table(epoch)?.resolve(vid)
    }

    pub fn state(&self) -> IdRegistryState {
        let cur = self.current();
        IdRegistryState {
            users: cur.users,
            r: cur.r,
            epochs: self.tables.values().map(|t| t.mode).collect(),
        }
    }

    pub fn from_state(state: &IdRegistryState) -> Result<Self, IdError> {
        let mut tables = BTreeMap::new();
        for (epoch, &mode) in state.epochs.iter().enumerate() {
            let t = VirtualIdTable::build(state.users, state.r, epoch as u64, mode)?;
            tables.insert(epoch as u64, t);
        }
        if tables.is_empty() {
            return Err(IdError::Invalid("no epochs recorded"));
        }
        Ok(IdRegistry { tables })
    }
}
