use num_bigint::BigUint;
use thiserror::Error;

use super::{SlotBits, TraceConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("interval index {lambda} out of range for rho = {rho}")]
    LambdaOutOfRange { lambda: u32, rho: u32 },
}

/// Slot that receives a contact detected at `abs_slot` whose run completed at
/// interval `lambda` of that slot.
///
/// A run ending in the first half of its slot (`lambda <= rho / 2`) lies mostly
/// in the previous slot. Slot 0 and single-slot windows have no previous slot.
pub fn resolve_slot(abs_slot: u64, lambda: u32, rho: u32, n: u32) -> u64 {
    if lambda > rho / 2 || abs_slot == 0 || n == 1 {
        abs_slot
    } else {
        abs_slot - 1
    }
}

/// Fixed-width circular bit queue holding the latest `n` slots of contacts
/// between two users.
///
/// Slot `s` lives at array index `s mod n`. The vector keeps its own clock
/// (`last_abs_slot`); bits older than `n` slots relative to that clock are
/// cleared when the clock advances, and reads at a later time mask whatever
/// has aged out since.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactVector {
    n: u32,
    slots: Vec<u64>,
    latest_pos: u32,
    last_abs_slot: Option<u64>,
}

impl ContactVector {
    pub fn new(n: u32) -> Self {
        assert!(n >= 1, "contact vector needs at least one slot");
        ContactVector {
            n,
            slots: vec![0; (n as usize).div_ceil(64)],
            latest_pos: 0,
            last_abs_slot: None,
        }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Array index currently mapped to `c_0`.
    pub fn latest_pos(&self) -> u32 {
        self.latest_pos
    }

    pub fn last_abs_slot(&self) -> Option<u64> {
        self.last_abs_slot
    }

    fn pos(&self, abs: u64) -> u32 {
        (abs % u64::from(self.n)) as u32
    }

    fn bit(&self, pos: u32) -> bool {
        self.slots[(pos / 64) as usize] >> (pos % 64) & 1 == 1
    }

    fn put(&mut self, pos: u32, on: bool) {
        let w = &mut self.slots[(pos / 64) as usize];
        if on {
            *w |= 1 << (pos % 64);
        } else {
            *w &= !(1 << (pos % 64));
        }
    }

    /// Moves the vector clock forward to `abs`, clearing every position whose
    /// slot falls out of the window.
    pub fn advance(&mut self, abs: u64) {
        match self.last_abs_slot {
            None => {
                self.slots.iter_mut().for_each(|w| *w = 0);
            }
            Some(last) if abs > last => {
                let steps = (abs - last).min(u64::from(self.n));
                for s in abs + 1 - steps..=abs {
                    let p = self.pos(s);
                    self.put(p, false);
                }
            }
            Some(_) => return,
        }
        self.last_abs_slot = Some(abs);
        self.latest_pos = self.pos(abs);
    }

    /// Records a close contact detected at `abs_slot`, interval `lambda`.
    ///
    /// Returns the absolute slot that was set, or `None` when that slot is
    /// already older than the window relative to the vector clock.
    pub fn set(&mut self, abs_slot: u64, lambda: u32, config: &TraceConfig) -> Result<Option<u64>, VectorError> {
        let rho = config.rho();
        if lambda >= rho {
            return Err(VectorError::LambdaOutOfRange { lambda, rho });
        }
        let target = resolve_slot(abs_slot, lambda, rho, self.n);
        Ok(self.set_slot(abs_slot, target))
    }

    /// Advances the clock to `now` and sets `target` if it is still inside the
    /// window.
    pub(crate) fn set_slot(&mut self, now: u64, target: u64) -> Option<u64> {
        self.advance(now);
        let last = self.last_abs_slot.expect("clock set by advance");
        if target > last || target + u64::from(self.n) <= last {
            return None;
        }
        let p = self.pos(target);
        self.put(p, true);
        Some(target)
    }

    /// Logical vector with `c_0` at slot `now`.
    pub fn view_at(&self, now: u64) -> SlotBits {
        let mut out = SlotBits::zeros(self.n);
        let Some(last) = self.last_abs_slot else {
            return out;
        };
        let n = u64::from(self.n);
        for i in 0..self.n {
            let Some(abs) = now.checked_sub(u64::from(i)) else {
                break;
            };
            if abs <= last && abs + n > last && self.bit(self.pos(abs)) {
                out.set(i, true);
            }
        }
        out
    }

    /// Logical vector relative to the vector's own clock.
    pub fn view(&self) -> SlotBits {
        self.view_at(self.last_abs_slot.unwrap_or(0))
    }

    pub fn value(&self) -> BigUint {
        self.view().value()
    }

    pub fn earliest(&self) -> Option<u32> {
        self.view().earliest()
    }

    pub fn latest(&self) -> Option<u32> {
        self.view().latest()
    }

    pub fn is_zero(&self) -> bool {
        self.view().is_zero()
    }

    pub fn is_zero_at(&self, now: u64) -> bool {
        self.view_at(now).is_zero()
    }

    /// Physical array contents after masking everything that is stale at
    /// `now`, index `s mod n` per slot. Used by the snapshot codec.
    pub(crate) fn physical_at(&self, now: u64) -> SlotBits {
        let view = self.view_at(now);
        let mut phys = SlotBits::zeros(self.n);
        for i in view.iter_ones() {
            phys.set(self.pos(now - u64::from(i)), true);
        }
        phys
    }

    /// Inverse of [`physical_at`](Self::physical_at): the clock is set to `now`.
    pub(crate) fn from_physical(phys: &SlotBits, now: Option<u64>) -> Self {
        let mut cv = ContactVector::new(phys.len());
        if let Some(now) = now {
            cv.slots.copy_from_slice(phys.words());
            cv.last_abs_slot = Some(now);
            cv.latest_pos = cv.pos(now);
        }
        cv
    }
}
