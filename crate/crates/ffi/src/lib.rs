//! C ABI over the contact-sketch engine.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free` function. Every fallible call returns a [`CsStatus`];
//! on failure [`cs_last_error_message`] describes the most recent error on
//! the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use contact_sketch::trace::TraceError;
use contact_sketch::{Engine, Error, SlotBits, TraceResult, UserId};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Data = 5,
    Io = 6,
    Panic = 7,
}

/// Totals of one ingest call.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsIngestCounts {
    pub streams: u64,
    pub samples: u64,
    pub gaps: u64,
    pub contacts_installed: u64,
    pub edges_created: u64,
    pub edges_expired: u64,
    pub parse_errors: u64,
    pub sample_errors: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsTraceEntry {
    pub user: u32,
    pub level: u32,
    pub via: u32,
    pub source: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CsEdge {
    pub from: u32,
    pub to: u32,
}

/// Opaque engine handle.
pub struct CsEngine(Engine);

/// Opaque snapshot of accumulated trace state.
pub struct CsTraceResult(TraceResult);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::Config(_) | Error::InvalidConfig(_) | Error::Time(_) => CsStatus::Config,
        Error::Parse(_) | Error::InvalidStream(_) | Error::Gen(_) => CsStatus::Parse,
        Error::Io(_) => CsStatus::Io,
        Error::Trace(TraceError::InvalidLevels | TraceError::UnknownUser(_)) => CsStatus::InvalidArgument,
        _ => CsStatus::Data,
    }
}

fn fail(e: Error) -> CsStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn guard(f: impl FnOnce() -> CsStatus) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == CsStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => {
            set_error("internal panic");
            CsStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("null pointer: ", stringify!($p)));
            return CsStatus::NullPointer;
        })+
    };
}

unsafe fn utf8<'a>(s: *const c_char, what: &str) -> Result<&'a str, CsStatus> {
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        CsStatus::InvalidArgument
    })
}

/// Message for the most recent failure on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an engine from a JSON configuration document.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_new(config_json: *const c_char, out: *mut *mut CsEngine) -> CsStatus {
    non_null!(config_json, out);
    guard(|| {
        let text = match utf8(config_json, "config") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Engine::from_config_json(text) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(CsEngine(e)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Loads an engine saved with [`cs_engine_save`].
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_load(dir: *const c_char, out: *mut *mut CsEngine) -> CsStatus {
    non_null!(dir, out);
    guard(|| {
        let dir = match utf8(dir, "dir") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Engine::load(Path::new(dir)) {
            Ok(e) => {
                *out = Box::into_raw(Box::new(CsEngine(e)));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_free(engine: *mut CsEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Writes the graph snapshot and state sidecar into `dir`.
///
/// # Safety
/// `engine` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_save(engine: *const CsEngine, dir: *const c_char) -> CsStatus {
    non_null!(engine, dir);
    guard(|| {
        let dir = match utf8(dir, "dir") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*engine).0.save(Path::new(dir)) {
            Ok(()) => CsStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Ingests wire-format streams. Malformed streams are counted in
/// `parse_errors` and do not fail the call.
///
/// # Safety
/// `bytes` must point to `len` readable bytes (or be null with `len == 0`);
/// `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_ingest(
    engine: *mut CsEngine,
    bytes: *const u8,
    len: usize,
    out: *mut CsIngestCounts,
) -> CsStatus {
    non_null!(engine);
    if bytes.is_null() && len != 0 {
        set_error("null pointer: bytes");
        return CsStatus::NullPointer;
    }
    guard(|| {
        let data = if len == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(bytes, len)
        };
        let r = (*engine).0.ingest_bytes(data);
        if !out.is_null() {
            *out = CsIngestCounts {
                streams: r.streams,
                samples: r.samples,
                gaps: r.gaps,
                contacts_installed: r.contacts_installed,
                edges_created: r.edges_created,
                edges_expired: r.edges_expired,
                parse_errors: r.parse_errors,
                sample_errors: r.sample_errors,
            };
        }
        CsStatus::Ok
    })
}

/// Frees edges with no contact left in the window.
///
/// # Safety
/// `engine` must be a live handle; `freed` may be null.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_sweep(engine: *mut CsEngine, freed: *mut u64) -> CsStatus {
    non_null!(engine);
    guard(|| {
        let n = (*engine).0.sweep() as u64;
        if !freed.is_null() {
            *freed = n;
        }
        CsStatus::Ok
    })
}

/// Traces `count` newly infected users for up to `levels` levels and
/// returns the accumulated trace state.
///
/// # Safety
/// `infected` must point to `count` user indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_engine_trace(
    engine: *mut CsEngine,
    infected: *const u32,
    count: usize,
    levels: u32,
    out: *mut *mut CsTraceResult,
) -> CsStatus {
    non_null!(engine, out);
    if infected.is_null() && count != 0 {
        set_error("null pointer: infected");
        return CsStatus::NullPointer;
    }
    guard(|| {
        let ids: Vec<UserId> = if count == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(infected, count)
                .iter()
                .map(|&u| UserId(u))
                .collect()
        };
        match (*engine).0.trace(&ids, levels) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(CsTraceResult(r.clone())));
                CsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of suspected users in a trace result (0 for null).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_len(result: *const CsTraceResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.gamma.len())
}

/// Copies suspect `index` (ordered by level, then discovery).
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_entry(
    result: *const CsTraceResult,
    index: usize,
    out: *mut CsTraceEntry,
) -> CsStatus {
    non_null!(result, out);
    let result = &*result;
    guard(|| match result.0.gamma.get(index) {
        Some(e) => {
            *out = CsTraceEntry {
                user: e.user.0,
                level: e.level,
                via: e.via.0,
                source: e.source.0,
            };
            CsStatus::Ok
        }
        None => {
            set_error(format!("entry index {index} out of range"));
            CsStatus::InvalidArgument
        }
    })
}

/// Number of infection edges in a trace result (0 for null).
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_edge_count(result: *const CsTraceResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.chi.len())
}

/// Copies infection edge `index`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_edge(result: *const CsTraceResult, index: usize, out: *mut CsEdge) -> CsStatus {
    non_null!(result, out);
    let result = &*result;
    guard(|| match result.0.chi.get(index) {
        Some(e) => {
            *out = CsEdge {
                from: e.from.0,
                to: e.to.0,
            };
            CsStatus::Ok
        }
        None => {
            set_error(format!("edge index {index} out of range"));
            CsStatus::InvalidArgument
        }
    })
}

/// Releases a trace result. Null is ignored.
///
/// # Safety
/// `result` must come from [`cs_engine_trace`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cs_trace_free(result: *mut CsTraceResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Trace operator on two `n`-slot vectors given as integers (bit 0 is the
/// latest slot), `1 <= n <= 64`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_sigma(c1: u64, c2: u64, n: u32, out: *mut bool) -> CsStatus {
    non_null!(out);
    guard(|| {
        if n == 0 || n > 64 || (n < 64 && (c1 | c2) >> n != 0) {
            set_error(format!("vectors do not fit in {n} slots"));
            return CsStatus::InvalidArgument;
        }
        let a = SlotBits::from_u128(n, c1.into());
        let b = SlotBits::from_u128(n, c2.into());
        match contact_sketch::sigma(&a, &b) {
            Ok(v) => {
                *out = v;
                CsStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                CsStatus::InvalidArgument
            }
        }
    })
}

/// Sizing-model space estimate in GB (2^33 bits).
///
/// # Safety
/// `gb` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cs_space_estimate(users: u64, q: u64, n: u64, gb: *mut f64) -> CsStatus {
    non_null!(gb);
    guard(|| match contact_sketch::graph::space_estimate(users, q, n) {
        Ok(v) => {
            *gb = v / contact_sketch::graph::GB_BITS;
            CsStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            CsStatus::InvalidArgument
        }
    })
}
