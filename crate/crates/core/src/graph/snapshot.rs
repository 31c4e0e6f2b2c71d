//! Binary snapshot of the graph sketch.
//!
//! Little-endian layout:
//!
//! ```text
//! "CSKG" | version u16 | N u64 | q u32 | n u32 | epoch u64 | now u64 (MAX = unset)
//! uid_bytes u8 | ref_bytes u8
//! overflow_len u64 | overflow_free_len u64 | cells_len u64 | vacancy_len u64
//! direct records    N*(q+1) x (uid, ptr)
//! overflow records  overflow_len x (uid, ptr, next)
//! overflow free     overflow_free_len x ptr
//! vector cells      cells_len x ceil((n+1)/8) bytes: n slot bits, then the deletion flag
//! vacancy list      vacancy_len x ptr
//! ```
//!
//! `uid` is `ceil(log2 N)` bits and `ptr` at least `ceil(log2(qN/2))` bits,
//! each padded to whole bytes. An all-ones `ptr` is the empty marker. Cells
//! are written in physical (circular) order with stale slots masked, so the
//! clock of every vector restores to `now`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{ContactGraph, IndexRecord, OverflowRecord, NIL};
use crate::model::{ContactVector, SlotBits, TraceConfig};

pub const MAGIC: &[u8; 4] = b"CSKG";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("not a graph snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u16),
    #[error("snapshot truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after snapshot")]
    TrailingBytes(usize),
    #[error("snapshot dimensions {found} do not match configuration {expected}")]
    DimensionMismatch { found: String, expected: String },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn bits_for(count: u64) -> u32 {
    // ceil(log2 count), 0 for count <= 1
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

fn bytes_for_bits(bits: u32) -> u8 {
    bits.div_ceil(8).max(1) as u8
}

pub(crate) fn uid_bytes(users: u64) -> u8 {
    bytes_for_bits(bits_for(users))
}

/// Pointer width: the sizing-model width `ceil(log2(qN/2))`, widened when
/// the stores have grown past it (one value is reserved for empty).
pub(crate) fn ref_bytes(users: u64, q: u64, max_index: u64) -> u8 {
    let s = bits_for((q * users).div_ceil(2));
    let need = bits_for(max_index + 2);
    bytes_for_bits(s.max(need)).min(4)
}

fn put_uint(out: &mut Vec<u8>, v: u64, width: u8) {
    out.extend_from_slice(&v.to_le_bytes()[..width as usize]);
}

fn put_ptr(out: &mut Vec<u8>, v: u32, width: u8) {
    let v = if v == NIL {
        (1u64 << (8 * width as u32)) - 1
    } else {
        u64::from(v)
    };
    put_uint(out, v, width);
}

pub fn encode(graph: &ContactGraph, epoch: u64) -> Vec<u8> {
    let cfg = graph.config();
    let users = u64::from(cfg.population());
    let q = u64::from(cfg.q());
    let n = cfg.n();
    let psi = &graph.psi;
    let theta = &graph.theta;
    let ub = uid_bytes(users);
    let max_index = (theta.cells.len() as u64).max(psi.overflow.len() as u64);
    let rb = ref_bytes(users, q, max_index);

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&users.to_le_bytes());
    out.extend_from_slice(&cfg.q().to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&epoch.to_le_bytes());
    out.extend_from_slice(&graph.now.unwrap_or(u64::MAX).to_le_bytes());
    out.push(ub);
    out.push(rb);
    for len in [
        psi.overflow.len(),
        psi.overflow_free.len(),
        theta.cells.len(),
        theta.vacant.len(),
    ] {
        out.extend_from_slice(&(len as u64).to_le_bytes());
    }
    for rec in &psi.direct {
        put_uint(&mut out, u64::from(rec.uid), ub);
        put_ptr(&mut out, rec.ptr, rb);
    }
    for rec in &psi.overflow {
        put_uint(&mut out, u64::from(rec.uid), ub);
        put_ptr(&mut out, rec.ptr, rb);
        put_ptr(&mut out, rec.next, rb);
    }
    for &idx in &psi.overflow_free {
        put_ptr(&mut out, idx, rb);
    }
    let cell_bytes = (n as usize + 1).div_ceil(8);
    let now = graph.now.unwrap_or(0);
    for (cell, &deleted) in theta.cells.iter().zip(&theta.deleted) {
        let phys = cell.physical_at(now);
        let mut buf = vec![0u8; cell_bytes];
        for i in phys.iter_ones() {
            buf[i as usize / 8] |= 1 << (i % 8);
        }
        if deleted {
            buf[n as usize / 8] |= 1 << (n % 8);
        }
        out.extend_from_slice(&buf);
    }
    for &a in &theta.vacant {
        put_ptr(&mut out, a, rb);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or(SnapshotError::Truncated(self.buf.len()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn uint(&mut self, width: u8) -> Result<u64, SnapshotError> {
        let mut raw = [0u8; 8];
        raw[..width as usize].copy_from_slice(self.take(width as usize)?);
        Ok(u64::from_le_bytes(raw))
    }

    fn u16(&mut self) -> Result<u16, SnapshotError> {
        Ok(self.uint(2)? as u16)
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(self.uint(4)? as u32)
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        self.uint(8)
    }

    fn ptr(&mut self, width: u8) -> Result<u32, SnapshotError> {
        let v = self.uint(width)?;
        if v == (1u64 << (8 * width as u32)) - 1 {
            Ok(NIL)
        } else {
            u32::try_from(v).map_err(|_| SnapshotError::Corrupt(format!("pointer {v} out of range")))
        }
    }

    fn len(&mut self, limit: usize, what: &str) -> Result<usize, SnapshotError> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&l| l <= limit)
            .ok_or_else(|| SnapshotError::Corrupt(format!("{what} length {v} exceeds file size")))
    }
}

/// Decodes a snapshot written for `config`. Returns the graph and the id
/// epoch recorded in the header.
pub fn decode(bytes: &[u8], config: &TraceConfig) -> Result<(ContactGraph, u64), SnapshotError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| SnapshotError::BadMagic)? != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let users = r.u64()?;
    let q = r.u32()?;
    let n = r.u32()?;
    let expected = (u64::from(config.population()), config.q(), config.n());
    if (users, q, n) != expected {
        return Err(SnapshotError::DimensionMismatch {
            found: format!("N={users} q={q} n={n}"),
            expected: format!("N={} q={} n={}", expected.0, expected.1, expected.2),
        });
    }
    let epoch = r.u64()?;
    let now = match r.u64()? {
        u64::MAX => None,
        v => Some(v),
    };
    let ub = r.take(1)?[0];
    let rb = r.take(1)?[0];
    if ub != uid_bytes(users) || !(1..=4).contains(&rb) {
        return Err(SnapshotError::Corrupt(format!("field widths uid={ub} ptr={rb}")));
    }
    let limit = bytes.len();
    let overflow_len = r.len(limit, "overflow")?;
    let overflow_free_len = r.len(limit, "overflow free list")?;
    let cells_len = r.len(limit, "vector store")?;
    let vacancy_len = r.len(limit, "vacancy list")?;

    let mut graph = ContactGraph::new(config.clone());
    graph.now = now;
    let uid = |r: &mut Reader, users: u64| -> Result<u32, SnapshotError> {
        let v = r.uint(ub)?;
        if v >= users.max(1) {
            return Err(SnapshotError::Corrupt(format!("user id {v} out of range")));
        }
        Ok(v as u32)
    };
    for rec in graph.psi.direct.iter_mut() {
        let u = uid(&mut r, users)?;
        let ptr = r.ptr(rb)?;
        *rec = IndexRecord { uid: u, ptr };
    }
    let mut overflow = Vec::with_capacity(overflow_len.min(limit));
    for _ in 0..overflow_len {
        let u = uid(&mut r, users)?;
        let ptr = r.ptr(rb)?;
        let next = r.ptr(rb)?;
        overflow.push(OverflowRecord { uid: u, ptr, next });
    }
    graph.psi.overflow = overflow;
    for _ in 0..overflow_free_len {
        let idx = r.ptr(rb)?;
        graph.psi.overflow_free.push(idx);
    }
    let cell_bytes = (n as usize + 1).div_ceil(8);
    for _ in 0..cells_len {
        let raw = r.take(cell_bytes)?;
        let mut phys = SlotBits::zeros(n);
        for i in 0..n {
            if raw[i as usize / 8] >> (i % 8) & 1 == 1 {
                phys.set(i, true);
            }
        }
        let deleted = raw[n as usize / 8] >> (n % 8) & 1 == 1;
        graph.theta.cells.push(ContactVector::from_physical(&phys, now));
        graph.theta.deleted.push(deleted);
    }
    for _ in 0..vacancy_len {
        let a = r.ptr(rb)?;
        if a as usize >= cells_len {
            return Err(SnapshotError::Corrupt(format!("vacant cell {a} out of range")));
        }
        graph.theta.vacant.push(a);
    }
    if r.pos != bytes.len() {
        return Err(SnapshotError::TrailingBytes(bytes.len() - r.pos));
    }
    validate_links(&graph)?;
    graph.check_invariants().map_err(SnapshotError::Corrupt)?;
    Ok((graph, epoch))
}

/// Pointer range checks that must hold before the graph can be walked.
fn validate_links(graph: &ContactGraph) -> Result<(), SnapshotError> {
    let q = graph.psi.q as usize;
    let cells = graph.theta.cells.len() as u32;
    let ovf = graph.psi.overflow.len() as u32;
    for (i, rec) in graph.psi.direct.iter().enumerate() {
        let limit = if i % (q + 1) == q { ovf } else { cells };
        if rec.ptr != NIL && rec.ptr >= limit {
            return Err(SnapshotError::Corrupt(format!("record {i} points past its store")));
        }
    }
    let mut on_chain = vec![false; graph.psi.overflow.len()];
    for p in 0..graph.config().population() as usize {
        let mut cur = graph.psi.direct[p * (q + 1) + q].ptr;
        while cur != NIL {
            let slot = on_chain
                .get_mut(cur as usize)
                .ok_or_else(|| SnapshotError::Corrupt("overflow link out of range".into()))?;
            if std::mem::replace(slot, true) {
                return Err(SnapshotError::Corrupt("overflow chain revisits a record".into()));
            }
            let rec = graph.psi.overflow[cur as usize];
            if rec.ptr >= cells {
                return Err(SnapshotError::Corrupt(
                    "overflow record points past the vector store".into(),
                ));
            }
            cur = rec.next;
        }
    }
    for &idx in &graph.psi.overflow_free {
        match on_chain.get(idx as usize) {
            Some(false) => {}
            _ => return Err(SnapshotError::Corrupt(format!("bad overflow free entry {idx}"))),
        }
    }
    Ok(())
}

/// Writes `bytes` next to `path` and renames over it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    write_atomic_inner(path, bytes, false)
}

pub(crate) fn write_atomic_inner(path: &Path, bytes: &[u8], crash_before_rename: bool) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    if crash_before_rename {
        return Ok(());
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        // directory fsync is best effort; not every platform allows opening a directory
        if let Ok(d) = fs::File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}

pub fn save(graph: &ContactGraph, epoch: u64, path: &Path) -> Result<(), SnapshotError> {
    write_atomic(path, &encode(graph, epoch))?;
    Ok(())
}

pub fn load(path: &Path, config: &TraceConfig) -> Result<(ContactGraph, u64), SnapshotError> {
    decode(&fs::read(path)?, config)
}
