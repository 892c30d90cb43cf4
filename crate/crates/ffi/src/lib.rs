//! C ABI over the `fairdraw` core.
//!
//! Conventions:
//!
//! * Every function returns an [`FdStatus`]; results come back through out
//!   pointers.
//! * Handles (`FdKeyPair`, `FdSetup`, `FdParticipant`) are opaque and must be
//!   released with their `*_free` function.
//! * Strings passed in are NUL-terminated UTF-8. Strings handed out are
//!   owned by the caller and released with [`fd_string_free`].
//! * On failure, [`fd_last_error`] describes the most recent error on the
//!   calling thread.
//! * Structured values cross the boundary as JSON in the same shapes the
//!   relay API and transcripts use.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fairdraw::audit::{audit_transcript, Transcript};
use fairdraw::crypto::KeyPair;
use fairdraw::protocol::{start_session, Delivery, Message, Participant, Phase};
use fairdraw::specfile::{SessionSetup, SpecFile};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Malformed JSON, key bytes or drawing definition.
    InvalidInput = 3,
    /// The protocol refused the operation, e.g. a key that is not a
    /// stakeholder.
    Protocol = 4,
    /// Reveal requested before every commitment was verified.
    RevealGated = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdPhase {
    Setup = 0,
    Committing = 1,
    Revealing = 2,
    Complete = 3,
    Aborted = 4,
}

impl From<Phase> for FdPhase {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Setup => FdPhase::Setup,
            Phase::Committing => FdPhase::Committing,
            Phase::Revealing => FdPhase::Revealing,
            Phase::Complete => FdPhase::Complete,
            Phase::Aborted => FdPhase::Aborted,
        }
    }
}

/// What happened to a delivered message.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdDelivery {
    Recorded = 0,
    Duplicate = 1,
    /// The message proved misbehavior; the session is now Aborted.
    Aborted = 2,
    /// Refused and logged as an incident; the session state is unchanged.
    Rejected = 3,
}

/// Audit verdicts; the values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdVerdict {
    Fair = 0,
    Manipulated = 2,
    Incomplete = 3,
}

pub struct FdKeyPair(KeyPair);
pub struct FdSetup(SessionSetup);
pub struct FdParticipant(Participant);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(FdStatus);

impl Fail {
    fn new(status: FdStatus, message: impl Into<String>) -> Self {
        set_error(message);
        Fail(status)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FdStatus::Ok,
        Ok(Err(Fail(s))) => s,
        Err(_) => {
            set_error("internal panic");
            FdStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(FdStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail::new(FdStatus::InvalidUtf8, e.to_string()))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::new(FdStatus::NullArgument, "null handle"))
}

unsafe fn handle_mut<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(FdStatus::NullArgument, "null handle"))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::new(FdStatus::NullArgument, "null out pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail::new(FdStatus::InvalidInput, e.to_string()))?;
    put(out, c.into_raw())
}

macro_rules! json {
    ($v:expr) => {
        serde_json::to_string($v).expect("serializable")
    };
}

fn invalid(e: impl ToString) -> Fail {
    Fail::new(FdStatus::InvalidInput, e.to_string())
}

/// Message for the last failure on this thread, or NULL. Valid until the
/// next call into this library from the same thread; do not free.
#[no_mangle]
pub extern "C" fn fd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Fresh key pair from the operating system RNG.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_keypair_generate(out: *mut *mut FdKeyPair) -> FdStatus {
    guard(|| put(out, Box::into_raw(Box::new(FdKeyPair(KeyPair::generate())))))
}

/// Key pair from a 32-byte secret.
///
/// # Safety
/// `secret` must point to `len` readable bytes; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_keypair_from_secret(secret: *const u8, len: usize, out: *mut *mut FdKeyPair) -> FdStatus {
    guard(|| {
        if secret.is_null() {
            return Err(Fail::new(FdStatus::NullArgument, "null secret"));
        }
        let bytes: [u8; 32] = std::slice::from_raw_parts(secret, len)
            .try_into()
            .map_err(|_| invalid(format!("secret key must be 32 bytes, got {len}")))?;
        put(out, Box::into_raw(Box::new(FdKeyPair(KeyPair::from_secret(bytes)))))
    })
}

/// Writes the 32-byte Ed25519 public key to `out32`.
///
/// # Safety
/// `kp` must be a live handle; `out32` must be valid for 32 bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn fd_keypair_public_key(kp: *const FdKeyPair, out32: *mut u8) -> FdStatus {
    guard(|| {
        let kp = handle(kp)?;
        if out32.is_null() {
            return Err(Fail::new(FdStatus::NullArgument, "null out pointer"));
        }
        ptr::copy_nonoverlapping(kp.0.public_key().0.as_ptr(), out32, 32);
        Ok(())
    })
}

/// Hex SHA-256 fingerprint of the public key.
///
/// # Safety
/// `kp` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_keypair_fingerprint(kp: *const FdKeyPair, out: *mut *mut c_char) -> FdStatus {
    guard(|| put_string(out, handle(kp)?.0.fingerprint().to_hex()))
}

/// # Safety
/// `kp` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fd_keypair_free(kp: *mut FdKeyPair) {
    if !kp.is_null() {
        drop(Box::from_raw(kp));
    }
}

/// Session setup from an operator spec file (stakeholders, mode, draws).
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_setup_from_spec(spec_json: *const c_char, out: *mut *mut FdSetup) -> FdStatus {
    guard(|| {
        let setup = SpecFile::parse(text(spec_json)?)
            .and_then(SpecFile::into_setup)
            .map_err(invalid)?;
        put(out, Box::into_raw(Box::new(FdSetup(setup))))
    })
}

/// Session setup from its relay JSON form (`{"session", "keys"}`).
///
/// # Safety
/// `setup_json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_setup_from_json(setup_json: *const c_char, out: *mut *mut FdSetup) -> FdStatus {
    guard(|| {
        let setup: SessionSetup = serde_json::from_str(text(setup_json)?).map_err(invalid)?;
        let setup = SessionSetup::new(setup.session, setup.keys).map_err(invalid)?;
        put(out, Box::into_raw(Box::new(FdSetup(setup))))
    })
}

/// Relay JSON form of the setup, as posted to `POST /sessions`.
///
/// # Safety
/// `setup` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_setup_to_json(setup: *const FdSetup, out: *mut *mut c_char) -> FdStatus {
    guard(|| put_string(out, json!(&handle(setup)?.0)))
}

/// Relay session id for the setup.
///
/// # Safety
/// `setup` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_setup_session_id(setup: *const FdSetup, out: *mut *mut c_char) -> FdStatus {
    guard(|| put_string(out, fairdraw::relay::session_id(&handle(setup)?.0)))
}

/// # Safety
/// `setup` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fd_setup_free(setup: *mut FdSetup) {
    if !setup.is_null() {
        drop(Box::from_raw(setup));
    }
}

/// Draws a fresh mask and shares, commits and signs. `out_commit_json`
/// receives the commit message to post.
///
/// # Safety
/// Handles must be live; out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_start(
    setup: *const FdSetup,
    kp: *const FdKeyPair,
    out: *mut *mut FdParticipant,
    out_commit_json: *mut *mut c_char,
) -> FdStatus {
    guard(|| {
        let setup = &handle(setup)?.0;
        let kp = &handle(kp)?.0;
        if out.is_null() || out_commit_json.is_null() {
            return Err(Fail::new(FdStatus::NullArgument, "null out pointer"));
        }
        let (p, commit) = start_session(setup.session.clone(), setup.keys.clone(), kp)
            .map_err(|e| Fail::new(FdStatus::Protocol, e.to_string()))?;
        put_string(out_commit_json, json!(&Message::Commit(commit)))?;
        put(out, Box::into_raw(Box::new(FdParticipant(p))))
    })
}

/// Delivers one message (JSON, `"type": "commit" | "reveal"`).
///
/// # Safety
/// `p` must be a live handle; `message_json` a NUL-terminated string;
/// `out_delivery` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_receive(
    p: *mut FdParticipant,
    message_json: *const c_char,
    out_delivery: *mut FdDelivery,
) -> FdStatus {
    guard(|| {
        let p = handle_mut(p)?;
        let msg: Message = serde_json::from_str(text(message_json)?).map_err(invalid)?;
        let d = match p.0.receive(&msg) {
            Ok(Delivery::Recorded) => FdDelivery::Recorded,
            Ok(Delivery::Duplicate) => FdDelivery::Duplicate,
            Ok(Delivery::Aborted) => FdDelivery::Aborted,
            Err(r) => {
                set_error(r.to_string());
                FdDelivery::Rejected
            }
        };
        put(out_delivery, d)
    })
}

/// # Safety
/// `p` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_phase(p: *const FdParticipant, out: *mut FdPhase) -> FdStatus {
    guard(|| put(out, handle(p)?.0.phase().into()))
}

/// The reveal message, available only once every commitment is verified;
/// otherwise returns `RevealGated` and writes nothing.
///
/// # Safety
/// `p` must be a live handle; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_reveal(p: *const FdParticipant, out_json: *mut *mut c_char) -> FdStatus {
    guard(|| {
        let reveal = handle(p)?
            .0
            .reveal()
            .map_err(|e| Fail::new(FdStatus::RevealGated, e.to_string()))?;
        put_string(out_json, json!(&Message::Reveal(reveal)))
    })
}

/// Session status JSON: phase, per-stakeholder progress, outcome, abort.
///
/// # Safety
/// `p` must be a live handle; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_status(p: *const FdParticipant, out_json: *mut *mut c_char) -> FdStatus {
    guard(|| put_string(out_json, json!(&handle(p)?.0.session().status())))
}

/// Aborts the session for a passed phase deadline, naming silent
/// stakeholders. No effect outside Committing and Revealing.
///
/// # Safety
/// `p` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_timeout(p: *mut FdParticipant) -> FdStatus {
    guard(|| {
        handle_mut(p)?.0.handle_timeout();
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fd_participant_free(p: *mut FdParticipant) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Audits a `transcriptv1` document. Writes the report JSON and verdict.
/// Unparseable transcripts return `InvalidInput` with the byte offset in
/// the error message.
///
/// # Safety
/// `transcript_json` must be a NUL-terminated string; out pointers valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn fd_audit_transcript(
    transcript_json: *const c_char,
    out_report_json: *mut *mut c_char,
    out_verdict: *mut FdVerdict,
) -> FdStatus {
    guard(|| {
        let t = Transcript::parse(text(transcript_json)?).map_err(invalid)?;
        let report = audit_transcript(&t).map_err(invalid)?;
        if out_verdict.is_null() {
            return Err(Fail::new(FdStatus::NullArgument, "null out pointer"));
        }
        put_string(out_report_json, json!(&report))?;
        let verdict = match report.verdict {
            fairdraw::Verdict::Fair => FdVerdict::Fair,
            fairdraw::Verdict::Manipulated => FdVerdict::Manipulated,
            fairdraw::Verdict::Incomplete => FdVerdict::Incomplete,
        };
        put(out_verdict, verdict)
    })
}

/// Library version, static; do not free.
#[no_mangle]
pub extern "C" fn fd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
