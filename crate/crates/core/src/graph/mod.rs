//! The contact graph sketch.
//!
//! Two stores back the graph:
//!
//! * the index store holds, for every user `P`, a direct group of `q + 1`
//!   records starting at `P * (q + 1)`. The first `q` records are
//!   `(neighbor, vector position)` pairs packed to the front of the group;
//!   the last one only links to the user's chain in the overflow area, which
//!   takes neighbors beyond `q` in insertion order.
//! * the vector store holds one [`ContactVector`] per undirected edge, shared
//!   by the two symmetric index records, plus a deletion flag and a vacancy
//!   list for recycled cells.
//!
//! All reads are made at the graph clock (`now`), so a vector whose contacts
//! have aged out reads as zero even before a sweep frees it.

pub mod snapshot;

use thiserror::Error;

use crate::model::{resolve_slot, ContactVector, SlotBits, TraceConfig, UserId, VectorError};

pub(crate) const NIL: u32 = u32::MAX;

/// Bits in one gigabyte for space estimates.
pub const GB_BITS: f64 = 8_589_934_592.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("self edge on {0}")]
    SelfEdge(UserId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("capacity exhausted: {0}")]
    CapacityExhausted(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Position of a contact vector in the vector store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VecRef(pub u32);

/// `(uid, ptr)` pair. In a data record `ptr` is the vector position; in the
/// link record at the end of a direct group it is the overflow chain head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct IndexRecord {
    pub uid: u32,
    pub ptr: u32,
}

impl IndexRecord {
    pub const EMPTY: IndexRecord = IndexRecord { uid: 0, ptr: NIL };

    fn is_used(&self) -> bool {
        self.ptr != NIL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct OverflowRecord {
    pub uid: u32,
    pub ptr: u32,
    pub next: u32,
}

/// Where a neighbor record lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordPos {
    Direct(usize),
    Overflow(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct IndexStore {
    pub q: u32,
    pub direct: Vec<IndexRecord>,
    pub overflow: Vec<OverflowRecord>,
    pub overflow_free: Vec<u32>,
}

impl IndexStore {
    fn new(users: u32, q: u32) -> Self {
        IndexStore {
            q,
            direct: vec![IndexRecord::EMPTY; users as usize * (q as usize + 1)],
            overflow: Vec::new(),
            overflow_free: Vec::new(),
        }
    }

    fn group(&self, p: UserId) -> usize {
        p.index() * (self.q as usize + 1)
    }

    fn link(&self, p: UserId) -> usize {
        self.group(p) + self.q as usize
    }

    fn records(&self, p: UserId) -> impl Iterator<Item = (RecordPos, IndexRecord)> + '_ {
        let start = self.group(p);
        let direct = (start..start + self.q as usize)
            .map(move |i| (RecordPos::Direct(i), self.direct[i]))
            .take_while(|(_, r)| r.is_used());
        let mut cursor = self.direct[self.link(p)].ptr;
        let chain = std::iter::from_fn(move || {
            if cursor == NIL {
                return None;
            }
            let idx = cursor;
            let rec = self.overflow[idx as usize];
            cursor = rec.next;
            Some((
                RecordPos::Overflow(idx),
                IndexRecord {
                    uid: rec.uid,
                    ptr: rec.ptr,
                },
            ))
        });
        direct.chain(chain)
    }

    fn find(&self, p: UserId, other: UserId) -> Option<(RecordPos, u32)> {
        self.records(p)
            .find(|(_, r)| r.uid == other.0)
            .map(|(pos, r)| (pos, r.ptr))
    }

    fn alloc_overflow(&mut self, rec: OverflowRecord) -> Result<u32, GraphError> {
        if let Some(idx) = self.overflow_free.pop() {
            self.overflow[idx as usize] = rec;
            return Ok(idx);
        }
        if self.overflow.len() >= NIL as usize {
            return Err(GraphError::CapacityExhausted("overflow area index space"));
        }
        if self.overflow.len() == self.overflow.capacity() {
            let grow = self.overflow.len().max(16);
            self.overflow
                .try_reserve(grow)
                .map_err(|_| GraphError::CapacityExhausted("overflow area allocation"))?;
        }
        self.overflow.push(rec);
        Ok(self.overflow.len() as u32 - 1)
    }

    /// Appends `(uid, ptr)` under `p`: the first empty direct record, or the
    /// tail of the overflow chain.
    fn insert(&mut self, p: UserId, uid: u32, ptr: u32) -> Result<RecordPos, GraphError> {
        let start = self.group(p);
        if let Some(i) = (start..start + self.q as usize).find(|&i| !self.direct[i].is_used()) {
            self.direct[i] = IndexRecord { uid, ptr };
            return Ok(RecordPos::Direct(i));
        }
        let idx = self.alloc_overflow(OverflowRecord { uid, ptr, next: NIL })?;
        let link = self.link(p);
        if self.direct[link].ptr == NIL {
            self.direct[link].ptr = idx;
        } else {
            let mut tail = self.direct[link].ptr;
            while self.overflow[tail as usize].next != NIL {
                tail = self.overflow[tail as usize].next;
            }
            self.overflow[tail as usize].next = idx;
        }
        Ok(RecordPos::Overflow(idx))
    }

    /// Removes the record for `other` under `p`, keeping the direct group
    /// packed and refilling it from the head of the overflow chain.
    fn remove(&mut self, p: UserId, other: UserId) -> bool {
        let Some((pos, _)) = self.find(p, other) else {
            return false;
        };
        let link = self.link(p);
        match pos {
            RecordPos::Direct(i) => {
                let end = self.group(p) + self.q as usize;
                self.direct.copy_within(i + 1..end, i);
                self.direct[end - 1] = IndexRecord::EMPTY;
                let head = self.direct[link].ptr;
                if head != NIL {
                    let rec = self.overflow[head as usize];
                    self.direct[link].ptr = rec.next;
                    self.overflow_free.push(head);
                    let slot = (self.group(p)..end)
                        .find(|&k| !self.direct[k].is_used())
                        .expect("a direct slot was just freed");
                    self.direct[slot] = IndexRecord {
                        uid: rec.uid,
                        ptr: rec.ptr,
                    };
                }
            }
            RecordPos::Overflow(idx) => {
                let next = self.overflow[idx as usize].next;
                if self.direct[link].ptr == idx {
                    self.direct[link].ptr = next;
                } else {
                    let mut prev = self.direct[link].ptr;
                    while self.overflow[prev as usize].next != idx {
                        prev = self.overflow[prev as usize].next;
                    }
                    self.overflow[prev as usize].next = next;
                }
                self.overflow_free.push(idx);
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct VectorStore {
    pub cells: Vec<ContactVector>,
    pub deleted: Vec<bool>,
    pub vacant: Vec<u32>,
}

impl VectorStore {
    fn alloc(&mut self, n: u32) -> Result<u32, GraphError> {
        if let Some(a) = self.vacant.pop() {
            self.cells[a as usize] = ContactVector::new(n);
            self.deleted[a as usize] = false;
            return Ok(a);
        }
        if self.cells.len() >= NIL as usize {
            return Err(GraphError::CapacityExhausted("vector store index space"));
        }
        if self.cells.len() == self.cells.capacity() {
            let grow = self.cells.len().max(16);
            self.cells
                .try_reserve(grow)
                .and_then(|_| self.deleted.try_reserve(grow))
                .map_err(|_| GraphError::CapacityExhausted("vector store allocation"))?;
        }
        self.cells.push(ContactVector::new(n));
        self.deleted.push(false);
        Ok(self.cells.len() as u32 - 1)
    }

    fn free(&mut self, a: u32) {
        self.deleted[a as usize] = true;
        self.vacant.push(a);
    }
}

/// Result of a single [`ContactGraph::install`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstallOutcome {
    /// A new edge (and vector cell) was created.
    pub created: bool,
    /// Slot that was set, or `None` if the contact had already aged out.
    pub slot: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContactGraph {
    config: TraceConfig,
    pub(crate) psi: IndexStore,
    pub(crate) theta: VectorStore,
    pub(crate) now: Option<u64>,
}

impl ContactGraph {
    pub fn new(config: TraceConfig) -> Self {
        ContactGraph {
            psi: IndexStore::new(config.population(), config.q()),
            theta: VectorStore {
                cells: Vec::new(),
                deleted: Vec::new(),
                vacant: Vec::new(),
            },
            now: None,
            config,
        }
    }

    pub fn config(&self) -> &TraceConfig {
        &self.config
    }

    /// Current absolute slot of the graph clock.
    pub fn now(&self) -> Option<u64> {
        self.now
    }

    /// Moves the graph clock forward (never backward).
    pub fn advance_clock(&mut self, abs: u64) {
        self.now = Some(self.now.map_or(abs, |n| n.max(abs)));
    }

    fn check_user(&self, p: UserId) -> Result<(), GraphError> {
        if p.0 < self.config.population() {
            Ok(())
        } else {
            Err(GraphError::UnknownUser(p))
        }
    }

    fn check_pair(&self, p: UserId, other: UserId) -> Result<(), GraphError> {
        self.check_user(p)?;
        self.check_user(other)?;
        if p == other {
            return Err(GraphError::SelfEdge(p));
        }
        Ok(())
    }

    /// Position of `other`'s record in `p`'s adjacency, if any.
    pub fn search(&self, p: UserId, other: UserId) -> Result<Option<RecordPos>, GraphError> {
        self.check_pair(p, other)?;
        Ok(self.psi.find(p, other).map(|(pos, _)| pos))
    }

    /// Vector shared by the edge `(p, other)`, if the edge exists.
    pub fn edge(&self, p: UserId, other: UserId) -> Result<Option<VecRef>, GraphError> {
        self.check_pair(p, other)?;
        Ok(self.psi.find(p, other).map(|(_, ptr)| VecRef(ptr)))
    }

    pub fn record_at(&self, pos: RecordPos) -> (UserId, VecRef) {
        match pos {
            RecordPos::Direct(i) => {
                let r = self.psi.direct[i];
                (UserId(r.uid), VecRef(r.ptr))
            }
            RecordPos::Overflow(i) => {
                let r = self.psi.overflow[i as usize];
                (UserId(r.uid), VecRef(r.ptr))
            }
        }
    }

    /// Records a close contact between `p` and `other` detected at
    /// `abs_slot`, interval `lambda`.
    pub fn install(
        &mut self,
        p: UserId,
        other: UserId,
        abs_slot: u64,
        lambda: u32,
    ) -> Result<InstallOutcome, GraphError> {
        self.check_pair(p, other)?;
        let rho = self.config.rho();
        if lambda >= rho {
            return Err(VectorError::LambdaOutOfRange { lambda, rho }.into());
        }
        let n = self.config.n();
        self.advance_clock(abs_slot);
        let now = self.now.expect("clock just advanced");
        let target = resolve_slot(abs_slot, lambda, rho, n);
        let existing = self.psi.find(p, other).map(|(_, ptr)| ptr);
        if target + u64::from(n) <= now && existing.is_none() {
            return Ok(InstallOutcome {
                created: false,
                slot: None,
            });
        }
        let (a, created) = match existing {
            Some(a) => (a, false),
            None => (self.create_edge(p, other)?, true),
        };
        let slot = self.theta.cells[a as usize].set(abs_slot, lambda, &self.config)?;
        Ok(InstallOutcome { created, slot })
    }

    fn create_edge(&mut self, p: UserId, other: UserId) -> Result<u32, GraphError> {
        let a = self.theta.alloc(self.config.n())?;
        if let Err(e) = self.psi.insert(p, other.0, a) {
            self.theta.free(a);
            return Err(e);
        }
        if let Err(e) = self.psi.insert(other, p.0, a) {
            self.psi.remove(p, other);
            self.theta.free(a);
            return Err(e);
        }
        Ok(a)
    }

    /// Every record under `p` (direct area, then overflow chain), including
    /// edges whose vectors have aged out but were not swept yet.
    pub fn adjacency(&self, p: UserId) -> Result<Vec<(UserId, VecRef)>, GraphError> {
        self.check_user(p)?;
        Ok(self
            .psi
            .records(p)
            .map(|(_, r)| (UserId(r.uid), VecRef(r.ptr)))
            .collect())
    }

    /// Live neighbors of `p`: records whose vector is nonzero at the clock.
    pub fn neighbors(&self, p: UserId) -> Result<Vec<(UserId, VecRef)>, GraphError> {
        let now = self.now.unwrap_or(0);
        Ok(self
            .adjacency(p)?
            .into_iter()
            .filter(|&(_, a)| !self.theta.cells[a.0 as usize].is_zero_at(now))
            .collect())
    }

    pub fn vector(&self, a: VecRef) -> &ContactVector {
        &self.theta.cells[a.0 as usize]
    }

    /// Logical view of a vector at the graph clock.
    pub fn view(&self, a: VecRef) -> SlotBits {
        self.vector(a).view_at(self.now.unwrap_or(0))
    }

    /// Frees every edge whose vector is zero at `now_abs_slot` (or the graph
    /// clock, if later). Returns the number of edges removed.
    pub fn expire(&mut self, now_abs_slot: u64) -> usize {
        self.advance_clock(now_abs_slot);
        let now = self.now.expect("clock just advanced");
        let mut dead = Vec::new();
        for p in 0..self.config.population() {
            for (_, r) in self.psi.records(UserId(p)) {
                if r.uid > p && self.theta.cells[r.ptr as usize].is_zero_at(now) {
                    dead.push((UserId(p), UserId(r.uid), r.ptr));
                }
            }
        }
        for &(p, other, a) in &dead {
            self.psi.remove(p, other);
            self.psi.remove(other, p);
            self.theta.free(a);
        }
        dead.len()
    }

    /// Undirected edges `(p, other, vector)` with `p < other`.
    pub fn edges(&self) -> Vec<(UserId, UserId, VecRef)> {
        let mut out = Vec::new();
        for p in 0..self.config.population() {
            for (_, r) in self.psi.records(UserId(p)) {
                if r.uid > p {
                    out.push((UserId(p), UserId(r.uid), VecRef(r.ptr)));
                }
            }
        }
        out
    }

    pub fn stats(&self) -> GraphStats {
        let live = self.theta.cells.len() - self.theta.vacant.len();
        GraphStats {
            users: self.config.population(),
            edges: live,
            vector_cells: self.theta.cells.len(),
            vacant_cells: self.theta.vacant.len(),
            overflow_records: self.psi.overflow.len() - self.psi.overflow_free.len(),
            now: self.now,
        }
    }

    /// Number of records in `p`'s direct area and overflow chain.
    pub fn record_counts(&self, p: UserId) -> Result<(usize, usize), GraphError> {
        self.check_user(p)?;
        let mut direct = 0;
        let mut overflow = 0;
        for (pos, _) in self.psi.records(p) {
            match pos {
                RecordPos::Direct(_) => direct += 1,
                RecordPos::Overflow(_) => overflow += 1,
            }
        }
        Ok((direct, overflow))
    }

    /// Structural self-check: symmetric records sharing one cell, packed
    /// direct groups, and cell accounting. Returns a description of the first
    /// violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let q = self.config.q() as usize;
        let mut refs = vec![0u32; self.theta.cells.len()];
        for p in 0..self.config.population() {
            let pu = UserId(p);
            let start = self.psi.group(pu);
            let group = &self.psi.direct[start..start + q];
            let used = group.iter().take_while(|r| r.is_used()).count();
            if group[used..].iter().any(|r| r.is_used()) {
                return Err(format!("{pu}: direct group not packed"));
            }
            if used < q && self.psi.direct[self.psi.link(pu)].ptr != NIL {
                return Err(format!("{pu}: overflow in use with free direct records"));
            }
            let mut seen = std::collections::HashSet::new();
            for (_, r) in self.psi.records(pu) {
                if r.uid == p {
                    return Err(format!("{pu}: self edge"));
                }
                if !seen.insert(r.uid) {
                    return Err(format!("{pu}: duplicate neighbor P{}", r.uid));
                }
                let Some(cell) = refs.get_mut(r.ptr as usize) else {
                    return Err(format!("{pu}: dangling vector ref {}", r.ptr));
                };
                if self.theta.deleted[r.ptr as usize] {
                    return Err(format!("{pu}: ref to deleted cell {}", r.ptr));
                }
                *cell += 1;
                match self.psi.find(UserId(r.uid), pu) {
                    Some((_, ptr)) if ptr == r.ptr => {}
                    _ => return Err(format!("{pu} -> P{}: missing symmetric record", r.uid)),
                }
            }
        }
        let mut vacant = vec![false; self.theta.cells.len()];
        for &a in &self.theta.vacant {
            if std::mem::replace(&mut vacant[a as usize], true) {
                return Err(format!("cell {a} vacant twice"));
            }
        }
        for (a, &count) in refs.iter().enumerate() {
            match (count, vacant[a]) {
                (2, false) | (0, true) => {}
                _ => return Err(format!("cell {a}: {count} refs, vacant = {}", vacant[a])),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct GraphStats {
    pub users: u32,
    pub edges: usize,
    pub vector_cells: usize,
    pub vacant_cells: usize,
    pub overflow_records: usize,
    pub now: Option<u64>,
}

/// Sketch size in bits for `users` users, `q` contacts on average and `n`
/// slots: `N * ((q + 1) * (2 log2 N + log2 q - 1) + (n + 1) * q / 2)`.
pub fn space_estimate(users: u64, q: u64, n: u64) -> Result<f64, GraphError> {
    if users == 0 || q == 0 || n == 0 {
        return Err(GraphError::InvalidArgument("N, q and n must be positive"));
    }
    let (users, q, n) = (users as f64, q as f64, n as f64);
    let index = (q + 1.0) * (2.0 * users.log2() + q.log2() - 1.0);
    let vectors = (n + 1.0) * q / 2.0;
    Ok(users * (index + vectors))
}
