//! C interface to the checker.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every fallible call returns an
//! [`OsctaStatus`]; on failure a description is kept per thread and can be
//! read with [`oscta_last_error`]. Strings returned to the caller must be
//! released with [`oscta_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use oscta::instrument::instrument;
use oscta::ir::{parse_ir, IrProgram};
use oscta::ir_typing::{ir_policy, ir_verdict};
use oscta::secenv::{Policy, PolicyFile};
use oscta::while_lang::{parse_program, Cmd};
use oscta::while_typing::{check_program, Mode};

/// Result of a call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OsctaStatus {
    Ok = 0,
    /// The program text, policy or JSON could not be parsed.
    ParseError = 2,
    /// An analysis invariant failed.
    InternalError = 3,
    NullArgument = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// Typing mode for While programs.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OsctaMode {
    Base = 0,
    ConstantTime = 1,
}

/// A validated While policy.
pub struct OsctaPolicy {
    inner: Arc<Policy>,
}

/// A parsed While program.
pub struct OsctaWhileProgram {
    cmd: Cmd,
}

/// A parsed IR program.
pub struct OsctaIrProgram {
    prog: IrProgram,
}

/// The outcome of a check.
pub struct OsctaReport {
    accepted: bool,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(s).expect("NULs removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(OsctaStatus, String);

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OsctaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OsctaStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("panic inside the checker");
            OsctaStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(
            OsctaStatus::NullArgument,
            "null string argument".into(),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(OsctaStatus::InvalidUtf8, e.to_string()))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(OsctaStatus::NullArgument, "null handle".into()))
}

fn out_ptr<T>(out: *mut *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail(
            OsctaStatus::NullArgument,
            "null output pointer".into(),
        ))
    } else {
        Ok(())
    }
}

fn parse_fail(e: impl ToString) -> Fail {
    Fail(OsctaStatus::ParseError, e.to_string())
}

fn internal_fail(e: impl ToString) -> Fail {
    Fail(OsctaStatus::InternalError, e.to_string())
}

fn c_string(s: String) -> CString {
    CString::new(s.replace('\0', " ")).expect("NULs removed")
}

/// Description of the last failure on this thread, or NULL. The pointer
/// stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn oscta_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oscta_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a While policy from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn oscta_policy_from_json(
    json: *const c_char,
    out: *mut *mut OsctaPolicy,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let p = Policy::from_json(text(json)?).map_err(parse_fail)?;
        *out = Box::into_raw(Box::new(OsctaPolicy { inner: Arc::new(p) }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`oscta_policy_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oscta_policy_free(p: *mut OsctaPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Parses a While program whose names must be declared by `policy`.
///
/// # Safety
/// Pointers must be valid; `src` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oscta_while_parse(
    src: *const c_char,
    policy: *const OsctaPolicy,
    out: *mut *mut OsctaWhileProgram,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let pol = handle(policy)?;
        let cmd = parse_program(text(src)?, &pol.inner).map_err(parse_fail)?;
        *out = Box::into_raw(Box::new(OsctaWhileProgram { cmd }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`oscta_while_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oscta_while_free(p: *mut OsctaWhileProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Parses an IR program.
///
/// # Safety
/// Pointers must be valid; `src` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oscta_ir_parse(
    src: *const c_char,
    out: *mut *mut OsctaIrProgram,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let prog = parse_ir(text(src)?).map_err(parse_fail)?;
        *out = Box::into_raw(Box::new(OsctaIrProgram { prog }));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`oscta_ir_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oscta_ir_free(p: *mut OsctaIrProgram) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Types a While program. A rejection is still `Ok`; read the verdict
/// from the report.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn oscta_check_while(
    prog: *const OsctaWhileProgram,
    policy: *const OsctaPolicy,
    mode: OsctaMode,
    out: *mut *mut OsctaReport,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let (prog, pol) = (handle(prog)?, handle(policy)?);
        let mode = match mode {
            OsctaMode::Base => Mode::Base,
            OsctaMode::ConstantTime => Mode::ConstantTime,
        };
        let rep = check_program(mode, pol.inner.clone(), &prog.cmd).map_err(internal_fail)?;
        let json = c_string(rep.to_json().to_string());
        *out = Box::into_raw(Box::new(OsctaReport {
            accepted: rep.verdict.is_accept(),
            json,
        }));
        Ok(())
    })
}

/// Types an IR program against a policy given as JSON.
///
/// # Safety
/// Pointers must be valid; `policy_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn oscta_check_ir(
    prog: *const OsctaIrProgram,
    policy_json: *const c_char,
    out: *mut *mut OsctaReport,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let prog = &handle(prog)?.prog;
        let file = PolicyFile::from_json(text(policy_json)?).map_err(parse_fail)?;
        let policy = ir_policy(prog, &file).map_err(parse_fail)?;
        let rep = ir_verdict(prog, policy).map_err(internal_fail)?;
        let json = c_string(rep.to_json(prog).to_string());
        *out = Box::into_raw(Box::new(OsctaReport {
            accepted: rep.verdict.is_accept(),
            json,
        }));
        Ok(())
    })
}

/// 1 when the program was accepted, 0 when not, -1 for a null handle.
///
/// # Safety
/// `r` must be NULL or a live report.
#[no_mangle]
pub unsafe extern "C" fn oscta_report_accepted(r: *const OsctaReport) -> i32 {
    match r.as_ref() {
        Some(r) => i32::from(r.accepted),
        None => -1,
    }
}

/// The report as JSON; release with [`oscta_string_free`]. NULL for a null
/// handle.
///
/// # Safety
/// `r` must be NULL or a live report.
#[no_mangle]
pub unsafe extern "C" fn oscta_report_json(r: *const OsctaReport) -> *mut c_char {
    match r.as_ref() {
        Some(r) => r.json.clone().into_raw(),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `r` must come from a check function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn oscta_report_free(r: *mut OsctaReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Writes the instrumented program text to `out`; release it with
/// [`oscta_string_free`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn oscta_instrument(
    prog: *const OsctaWhileProgram,
    out: *mut *mut c_char,
) -> OsctaStatus {
    guard(|| {
        out_ptr(out)?;
        let w = instrument(&handle(prog)?.cmd).map_err(internal_fail)?;
        *out = c_string(w.to_string()).into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn oscta_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
