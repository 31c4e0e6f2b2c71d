//! Close-contact detection over one device stream and installation into
//! the graph.

use serde::Serialize;

use super::cursor::{sync_time, SlotCursor};
use super::window::WatchWindow;
use super::wire::StreamRecord;
use crate::error::{Error, Result};
use crate::graph::ContactGraph;
use crate::ids::{IdRegistry, VirtualIdTable};
use crate::model::{TraceConfig, UserId};

/// A receiver that completed a run of `rho` intervals in a sender's stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Detection {
    pub sender: UserId,
    pub receiver: UserId,
    pub abs_slot: u64,
    pub lambda: u32,
}

/// A problem confined to one record; the rest of the stream is processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Index of the record within its stream.
    pub record: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessReport {
    pub samples: u64,
    pub gaps: u64,
    pub contacts_installed: u64,
    pub edges_created: u64,
    /// Detections that were already older than the window when installed.
    pub contacts_stale: u64,
    pub diagnostics: Vec<Diagnostic>,
}

/// Watch-window state of one stream, independent of the graph.
#[derive(Debug, Clone)]
pub struct Detector<'a> {
    table: &'a VirtualIdTable,
    sender: UserId,
    cursor: SlotCursor,
    window: WatchWindow,
    scratch: Vec<UserId>,
}

impl<'a> Detector<'a> {
    /// Opens a stream from its header fields.
    pub fn start(
        sender: UserId,
        start: crate::model::Timestamp,
        epoch: u64,
        config: &TraceConfig,
        ids: &'a IdRegistry,
    ) -> Result<Self> {
        if sender.0 >= config.population() {
            return Err(Error::InvalidStream(format!(
                "sender {sender} outside population of {}",
                config.population()
            )));
        }
        let table = ids.table(epoch)?;
        let cursor = sync_time(config.deployment(), start, config)?;
        Ok(Detector {
            table,
            sender,
            cursor,
            window: WatchWindow::new(config.rho()),
            scratch: Vec::new(),
        })
    }

    pub fn sender(&self) -> UserId {
        self.sender
    }

    pub fn cursor(&self) -> SlotCursor {
        self.cursor
    }

    /// Consumes one sample interval. The cursor advances even when the sample
    /// is rejected; a rejected sample counts as an empty interval.
    pub fn sample(
        &mut self,
        tran_vid: u64,
        rec_vids: &[u64],
        out: &mut Vec<Detection>,
    ) -> std::result::Result<(), String> {
        let res = self.resolve_sample(tran_vid, rec_vids);
        let here = self.cursor;
        self.cursor.step();
        match res {
            Ok(()) => {
                for receiver in self.window.observe(&self.scratch) {
                    out.push(Detection {
                        sender: self.sender,
                        receiver,
                        abs_slot: here.abs_slot(),
                        lambda: here.lambda(),
                    });
                }
                Ok(())
            }
            Err(msg) => {
                self.window.observe(&[]);
                Err(msg)
            }
        }
    }

    fn resolve_sample(&mut self, tran_vid: u64, rec_vids: &[u64]) -> std::result::Result<(), String> {
        self.scratch.clear();
        let tran = self.table.resolve(tran_vid).map_err(|e| e.to_string())?;
        if tran != self.sender {
            return Err(format!(
                "transmitter id {tran_vid} belongs to {tran}, not the stream owner {}",
                self.sender
            ));
        }
        for &vid in rec_vids {
            let u = self.table.resolve(vid).map_err(|e| e.to_string())?;
            if u == self.sender {
                return Err(format!("receiver id {vid} belongs to the stream owner"));
            }
            if !self.scratch.contains(&u) {
                self.scratch.push(u);
            }
        }
        Ok(())
    }

    /// Skips `x` intervals; every run is broken. Returns the slot of the last
    /// skipped interval.
    pub fn gap(&mut self, x: u64) -> u64 {
        self.window.reset();
        let mut last = self.cursor;
        last.apply_gap(x - 1);
        self.cursor.apply_gap(x);
        last.abs_slot()
    }
}

fn header(records: &[StreamRecord]) -> Result<(UserId, crate::model::Timestamp, u64)> {
    match records.first() {
        Some(&StreamRecord::Header { uid, start, epoch }) => Ok((uid, start, epoch)),
        _ => Err(Error::InvalidStream("stream does not begin with a header".into())),
    }
}

/// Runs the watch window over a parsed stream without touching a graph.
pub fn detect(
    records: &[StreamRecord],
    config: &TraceConfig,
    ids: &IdRegistry,
) -> Result<(Vec<Detection>, Vec<Diagnostic>)> {
    let (uid, start, epoch) = header(records)?;
    let mut det = Detector::start(uid, start, epoch, config, ids)?;
    let mut found = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, rec) in records.iter().enumerate().skip(1) {
        match rec {
            StreamRecord::Sample { tran_vid, rec_vids } => {
                if let Err(message) = det.sample(*tran_vid, rec_vids, &mut found) {
                    diagnostics.push(Diagnostic { record: i, message });
                }
            }
            StreamRecord::Gap { x } => {
                det.gap(*x);
            }
            StreamRecord::End => break,
            StreamRecord::Header { .. } => {
                return Err(Error::InvalidStream(format!("header at record {i} inside a stream")))
            }
        }
    }
    Ok((found, diagnostics))
}

/// Processes one stream into the graph: every detection is installed at the
/// interval where its run completed.
pub fn process(g: &mut ContactGraph, records: &[StreamRecord], ids: &IdRegistry) -> Result<ProcessReport> {
    let (uid, start, epoch) = header(records)?;
    let config = g.config().clone();
    let mut det = Detector::start(uid, start, epoch, &config, ids)?;
    let mut report = ProcessReport::default();
    let mut found = Vec::new();
    for (i, rec) in records.iter().enumerate().skip(1) {
        match rec {
            StreamRecord::Sample { tran_vid, rec_vids } => {
                report.samples += 1;
                g.advance_clock(det.cursor().abs_slot());
                found.clear();
                if let Err(message) = det.sample(*tran_vid, rec_vids, &mut found) {
                    report.diagnostics.push(Diagnostic { record: i, message });
                }
                for d in &found {
                    let out = g.install(d.sender, d.receiver, d.abs_slot, d.lambda)?;
                    report.edges_created += u64::from(out.created);
                    if out.slot.is_some() {
                        report.contacts_installed += 1;
                    } else {
                        report.contacts_stale += 1;
                    }
                }
            }
            StreamRecord::Gap { x } => {
                report.gaps += 1;
                let last = det.gap(*x);
                g.advance_clock(last);
            }
            StreamRecord::End => break,
            StreamRecord::Header { .. } => {
                return Err(Error::InvalidStream(format!("header at record {i} inside a stream")))
            }
        }
    }
    Ok(report)
}
