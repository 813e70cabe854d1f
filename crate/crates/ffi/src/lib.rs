//! C ABI over the evmdiff engine.
//!
//! Programs, contexts and traces cross the boundary as opaque handles that
//! the caller releases with the matching `*_free` function. Every fallible
//! call returns an [`EvmdiffStatus`]; on failure [`evmdiff_last_error`]
//! describes what went wrong on the calling thread. Strings handed out by
//! this library are released with [`evmdiff_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use evmdiff::bytecode::{disassemble, parse_hex, BytecodeProgram};
use evmdiff::differ::compare;
use evmdiff::engine::{engine_from_id, execute, make_context, parse_jsonl, ExecContext, Trace};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvmdiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidHex = 3,
    InvalidContext = 4,
    UnknownEngine = 5,
    InvalidTrace = 6,
    CompareFailed = 7,
    Panic = 8,
}

/// Decoded bytecode.
pub struct EvmdiffProgram(BytecodeProgram);

/// Execution environment.
pub struct EvmdiffContext(ExecContext);

/// Per-step execution trace plus final state.
pub struct EvmdiffTrace(Trace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EvmdiffStatus, msg: impl Into<String>) -> EvmdiffStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> EvmdiffStatus) -> EvmdiffStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(EvmdiffStatus::Panic, msg)
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, EvmdiffStatus> {
    if s.is_null() {
        return Err(fail(EvmdiffStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(EvmdiffStatus::InvalidUtf8, e.to_string()))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> EvmdiffStatus {
    *out = Box::into_raw(Box::new(value));
    EvmdiffStatus::Ok
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> EvmdiffStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            EvmdiffStatus::Ok
        }
        Err(e) => fail(EvmdiffStatus::Panic, e.to_string()),
    }
}

macro_rules! nonnull {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(EvmdiffStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn evmdiff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn evmdiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Decodes hex (with or without `0x`) into a program.
///
/// # Safety
/// `hex` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_program_from_hex(hex: *const c_char, out: *mut *mut EvmdiffProgram) -> EvmdiffStatus {
    guard(|| {
        nonnull!(out);
        let text = match read_str(hex) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_hex(text) {
            Ok(bytes) => put(out, EvmdiffProgram(disassemble(&bytes))),
            Err(e) => fail(EvmdiffStatus::InvalidHex, e.to_string()),
        }
    })
}

/// # Safety
/// `p` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_program_free(p: *mut EvmdiffProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// One instruction per line, `MNEMONIC [0ximmediate]`.
///
/// # Safety
/// `p` must be a live program handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_program_disassemble(p: *const EvmdiffProgram, out: *mut *mut c_char) -> EvmdiffStatus {
    guard(|| {
        nonnull!(p, out);
        put_string(out, (*p).0.to_listing())
    })
}

/// The fixed baseline context.
#[no_mangle]
pub extern "C" fn evmdiff_context_baseline() -> *mut EvmdiffContext {
    Box::into_raw(Box::new(EvmdiffContext(ExecContext::baseline())))
}

/// Context drawn deterministically from `seed`.
#[no_mangle]
pub extern "C" fn evmdiff_context_from_seed(seed: u64) -> *mut EvmdiffContext {
    Box::into_raw(Box::new(EvmdiffContext(make_context(seed))))
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_context_from_json(json: *const c_char, out: *mut *mut EvmdiffContext) -> EvmdiffStatus {
    guard(|| {
        nonnull!(out);
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExecContext::from_json(text) {
            Ok(c) => put(out, EvmdiffContext(c)),
            Err(e) => fail(EvmdiffStatus::InvalidContext, e.to_string()),
        }
    })
}

/// # Safety
/// `c` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_context_free(c: *mut EvmdiffContext) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Runs `program` under `ctx` on the engine named `engine_id`
/// (`reference` or `mutant:F1` .. `mutant:F8`).
///
/// # Safety
/// All pointers must be live handles or NUL-terminated strings; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_execute(
    engine_id: *const c_char,
    program: *const EvmdiffProgram,
    ctx: *const EvmdiffContext,
    out: *mut *mut EvmdiffTrace,
) -> EvmdiffStatus {
    guard(|| {
        nonnull!(program, ctx, out);
        let id = match read_str(engine_id) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let engine = match engine_from_id(id, &Default::default()) {
            Ok(e) => e,
            Err(e) => return fail(EvmdiffStatus::UnknownEngine, e.to_string()),
        };
        put(out, EvmdiffTrace(execute(engine.as_ref(), &(*program).0, &(*ctx).0)))
    })
}

/// Parses a JSON-lines trace.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_trace_from_jsonl(jsonl: *const c_char, out: *mut *mut EvmdiffTrace) -> EvmdiffStatus {
    guard(|| {
        nonnull!(out);
        let text = match read_str(jsonl) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_jsonl(text) {
            Ok(t) => put(out, EvmdiffTrace(t)),
            Err(e) => fail(EvmdiffStatus::InvalidTrace, e.to_string()),
        }
    })
}

/// # Safety
/// `t` must be a live trace handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_trace_to_jsonl(t: *const EvmdiffTrace, out: *mut *mut c_char) -> EvmdiffStatus {
    guard(|| {
        nonnull!(t, out);
        put_string(out, (*t).0.to_jsonl())
    })
}

/// # Safety
/// `t` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_trace_steps(t: *const EvmdiffTrace) -> usize {
    if t.is_null() {
        return 0;
    }
    (*t).0.steps.len()
}

/// # Safety
/// `t` must be a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_trace_gas_used(t: *const EvmdiffTrace) -> u64 {
    if t.is_null() {
        return 0;
    }
    (*t).0.final_state.gas_used
}

/// # Safety
/// `t` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_trace_free(t: *mut EvmdiffTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Compares `other` against `baseline`. Writes the divergences as a JSON
/// array to `out_json` and their number to `out_count`.
///
/// # Safety
/// Both traces must be live handles; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn evmdiff_compare(
    baseline: *const EvmdiffTrace,
    other: *const EvmdiffTrace,
    out_json: *mut *mut c_char,
    out_count: *mut usize,
) -> EvmdiffStatus {
    guard(|| {
        nonnull!(baseline, other, out_json, out_count);
        let pair = [("baseline".to_string(), (*baseline).0.clone()), ("other".to_string(), (*other).0.clone())];
        match compare(&pair, 0) {
            Ok(ds) => {
                *out_count = ds.len();
                put_string(out_json, serde_json::to_string(&ds).expect("divergences serialize"))
            }
            Err(e) => fail(EvmdiffStatus::CompareFailed, e.to_string()),
        }
    })
}
