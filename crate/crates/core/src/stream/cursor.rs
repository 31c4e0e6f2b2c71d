use crate::model::{TimeError, Timestamp, TraceConfig};

/// Position of a stream on the system timeline, counted in sample
/// intervals since deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotCursor {
    interval: u64,
    rho: u32,
    n: u32,
}

impl SlotCursor {
    pub fn at_interval(interval: u64, config: &TraceConfig) -> Self {
        SlotCursor {
            interval,
            rho: config.rho(),
            n: config.n(),
        }
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn abs_slot(&self) -> u64 {
        self.interval / u64::from(self.rho)
    }

    pub fn lambda(&self) -> u32 {
        (self.interval % u64::from(self.rho)) as u32
    }

    pub fn nu(&self) -> u32 {
        (self.abs_slot() % u64::from(self.n)) as u32
    }

    /// Moves to the next sample interval.
    pub fn step(&mut self) {
        self.interval += 1;
    }

    /// Skips `x` intervals.
    pub fn apply_gap(&mut self, x: u64) {
        self.interval += x;
    }
}

/// Maps a device start time onto the system slot grid.
pub fn sync_time(deployment: Timestamp, t: Timestamp, config: &TraceConfig) -> Result<SlotCursor, TimeError> {
    let minutes = t
        .minutes_since(&deployment)
        .ok_or(TimeError::BeforeDeployment { t, deployment })?;
    Ok(SlotCursor::at_interval(minutes / u64::from(config.delta()), config))
}
