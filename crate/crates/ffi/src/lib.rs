//! C ABI for the gemini engine.
//!
//! Sessions are opaque handles. Every fallible call returns a [`GmStatus`];
//! on failure a message is available from [`gm_last_error`] on the same
//! thread. Strings returned through `out` parameters are owned by the caller
//! and must be released with [`gm_string_free`].

use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use gemini_core::engine::{EngineError, Session, Step};
use gemini_core::grammar::TranscriptToken;
use gemini_core::harness::{decode_records, DeviceEvent, DeviceInput};
use gemini_core::inference::{infer, InferenceConfig, Recording};
use gemini_core::mapper::keys::Key;
use gemini_core::mapper::scheme::validate_document;
use gemini_core::mapper::{MouseButton, OutputEvent, OutputKind};
use gemini_core::skeleton::{decode_frame, JointPosition, SkeletonFrame, SkeletonStream, JOINT_COUNT};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    SchemeInvalid = 4,
    DecodeError = 5,
    StaleFrame = 6,
    IllegalTransition = 7,
    InferenceFailed = 8,
    /// No event is pending.
    Empty = 9,
    Internal = 10,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmEventKind {
    KeyDown = 0,
    KeyUp = 1,
    MouseDelta = 2,
    MouseDown = 3,
    MouseUp = 4,
}

/// One synthesized output event. `code` is a key code for key events (see
/// [`gm_key_name`]) and 0/1/2 for left/right/middle mouse buttons.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GmEvent {
    pub timestamp_ms: u64,
    pub kind: GmEventKind,
    pub code: u32,
    pub dx: i64,
    pub dy: i64,
}

/// Opaque engine session.
pub struct GmSession {
    session: Session,
    pending: VecDeque<OutputEvent>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let msg = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: GmStatus, message: impl Into<String>) -> GmStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> GmStatus) -> GmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(GmStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, GmStatus> {
    if p.is_null() {
        return Err(fail(GmStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GmStatus::InvalidUtf8, "string argument is not UTF-8"))
}

unsafe fn session<'a>(s: *mut GmSession) -> Result<&'a mut GmSession, GmStatus> {
    s.as_mut().ok_or_else(|| fail(GmStatus::NullPointer, "null session"))
}

unsafe fn give_string(out: *mut *mut c_char, value: String) -> GmStatus {
    match CString::new(value) {
        Ok(c) => {
            *out = c.into_raw();
            GmStatus::Ok
        }
        Err(_) => fail(GmStatus::Internal, "string contains NUL"),
    }
}

fn engine_status(e: &EngineError) -> GmStatus {
    let status = match e {
        EngineError::StaleFrame { .. } => GmStatus::StaleFrame,
        EngineError::IllegalTransition { .. } => GmStatus::IllegalTransition,
        EngineError::DuplicatePose(_) | EngineError::InvalidPoseId(_) => GmStatus::InvalidArgument,
        EngineError::InvalidScheme(_) => GmStatus::SchemeInvalid,
        EngineError::Inference(_) => GmStatus::InferenceFailed,
        EngineError::Clock(_) => GmStatus::Internal,
    };
    fail(status, format!("{}: {e}", e.code()))
}

fn absorb(s: &mut GmSession, result: Result<Step, EngineError>) -> GmStatus {
    match result {
        Ok(step) => {
            s.pending.extend(step.outputs);
            GmStatus::Ok
        }
        Err(e) => engine_status(&e),
    }
}

macro_rules! unwrap_or_return {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn gm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version string (static).
#[no_mangle]
pub extern "C" fn gm_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).expect("version has no NUL"))
        .as_ptr()
}

/// Name of a key code (`"w"`, `"enter"`, ...), or NULL if unknown. Static.
#[no_mangle]
pub extern "C" fn gm_key_name(code: u32) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        Key::all()
            .map(|k| CString::new(k.to_string()).expect("key names have no NUL"))
            .collect()
    });
    names.get(code as usize).map_or(ptr::null(), |c| c.as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from an `out` string parameter of this library and must not
/// be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a session from a scheme document. On `GmStatus::SchemeInvalid`
/// the last error holds the JSON array of validation errors.
///
/// # Safety
/// `scheme_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gm_session_new(scheme_json: *const c_char, out: *mut *mut GmSession) -> GmStatus {
    guard(|| {
        if out.is_null() {
            return fail(GmStatus::NullPointer, "null out pointer");
        }
        let doc = unwrap_or_return!(text(scheme_json));
        let scheme = match validate_document(doc) {
            Ok(s) => s,
            Err(errors) => {
                return fail(
                    GmStatus::SchemeInvalid,
                    serde_json::to_string(&errors).expect("errors serialize"),
                )
            }
        };
        match Session::new(scheme) {
            Ok(session) => {
                *out = Box::into_raw(Box::new(GmSession {
                    session,
                    pending: VecDeque::new(),
                }));
                GmStatus::Ok
            }
            Err(errors) => fail(
                GmStatus::SchemeInvalid,
                serde_json::to_string(&errors).expect("errors serialize"),
            ),
        }
    })
}

/// Destroys a session. NULL is ignored.
///
/// # Safety
/// `s` must come from [`gm_session_new`] and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gm_session_free(s: *mut GmSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Pushes one skeleton frame: `coords` holds 20 joints × (x, y, z) in
/// canonical joint order (head, shoulder_center, ...).
///
/// # Safety
/// `s` must be a live session; `coords` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gm_session_push_frame(
    s: *mut GmSession,
    timestamp_ms: u64,
    coords: *const f64,
    len: usize,
) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        if coords.is_null() {
            return fail(GmStatus::NullPointer, "null coordinates");
        }
        if len != JOINT_COUNT * 3 {
            return fail(GmStatus::InvalidArgument, format!("expected {} coordinates, got {len}", JOINT_COUNT * 3));
        }
        let values = std::slice::from_raw_parts(coords, len);
        let mut joints = [JointPosition::default(); JOINT_COUNT];
        for (j, c) in joints.iter_mut().zip(values.chunks_exact(3)) {
            *j = JointPosition::new(c[0], c[1], c[2]);
        }
        let frame = match SkeletonFrame::new(timestamp_ms, joints) {
            Ok(f) => f,
            Err(e) => return fail(GmStatus::InvalidArgument, e.to_string()),
        };
        let result = s.session.on_frame(frame);
        absorb(s, result)
    })
}

/// Pushes one skeleton record in stream format (`{"t":..,"joints":{..}}`).
///
/// # Safety
/// `s` must be a live session; `record` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gm_session_push_frame_json(s: *mut GmSession, record: *const c_char) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let line = unwrap_or_return!(text(record));
        match decode_frame(line) {
            Ok(frame) => {
                let result = s.session.on_frame(frame);
                absorb(s, result)
            }
            Err(e) => fail(GmStatus::DecodeError, format!("{}: {e}", e.code())),
        }
    })
}

/// Pushes one transcript word.
///
/// # Safety
/// `s` must be a live session; `word` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gm_session_push_token(s: *mut GmSession, timestamp_ms: u64, word: *const c_char) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let word = unwrap_or_return!(text(word));
        let result = s.session.on_token(&TranscriptToken::new(timestamp_ms, word));
        absorb(s, result)
    })
}

/// Pushes a device button transition.
///
/// # Safety
/// `s` must be a live session; `device` and `button` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn gm_session_push_button(
    s: *mut GmSession,
    timestamp_ms: u64,
    device: *const c_char,
    button: *const c_char,
    down: bool,
) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let device = unwrap_or_return!(text(device));
        let button = unwrap_or_return!(text(button));
        let event = DeviceEvent {
            timestamp_ms,
            device: device.to_string(),
            input: DeviceInput::Button {
                button: button.to_string(),
                down,
            },
        };
        let result = s.session.on_device(&event);
        absorb(s, result)
    })
}

/// Pushes an analog stick position; components are clamped to [-1, 1].
///
/// # Safety
/// `s` must be a live session; `device` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gm_session_push_analog(
    s: *mut GmSession,
    timestamp_ms: u64,
    device: *const c_char,
    x: f64,
    y: f64,
) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let device = unwrap_or_return!(text(device));
        let event = DeviceEvent {
            timestamp_ms,
            device: device.to_string(),
            input: DeviceInput::Analog { x, y },
        };
        let result = s.session.on_device(&event);
        absorb(s, result)
    })
}

/// Advances virtual time, emitting due key repeats and mouse motion.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn gm_session_tick(s: *mut GmSession, now_ms: u64) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let result = s.session.tick(now_ms);
        absorb(s, result)
    })
}

/// Ends input: flushes pending phrases and releases every hold.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn gm_session_finish(s: *mut GmSession) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let result = s.session.finish();
        absorb(s, result)
    })
}

/// Number of output events waiting in the queue.
///
/// # Safety
/// `s` must be a live session or NULL.
#[no_mangle]
pub unsafe extern "C" fn gm_session_pending(s: *const GmSession) -> usize {
    s.as_ref().map_or(0, |s| s.pending.len())
}

/// Pops the oldest output event into `out`; `GmStatus::Empty` when none.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gm_session_next_event(s: *mut GmSession, out: *mut GmEvent) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        if out.is_null() {
            return fail(GmStatus::NullPointer, "null out pointer");
        }
        let Some(e) = s.pending.pop_front() else {
            return GmStatus::Empty;
        };
        let button = |b: MouseButton| match b {
            MouseButton::Left => 0,
            MouseButton::Right => 1,
            MouseButton::Middle => 2,
        };
        let (kind, code, dx, dy) = match e.kind {
            OutputKind::KeyDown(k) => (GmEventKind::KeyDown, k.code(), 0, 0),
            OutputKind::KeyUp(k) => (GmEventKind::KeyUp, k.code(), 0, 0),
            OutputKind::MouseDelta { dx, dy } => (GmEventKind::MouseDelta, 0, dx, dy),
            OutputKind::MouseButtonDown(b) => (GmEventKind::MouseDown, button(b), 0, 0),
            OutputKind::MouseButtonUp(b) => (GmEventKind::MouseUp, button(b), 0, 0),
        };
        *out = GmEvent {
            timestamp_ms: e.timestamp_ms,
            kind,
            code,
            dx,
            dy,
        };
        GmStatus::Ok
    })
}

/// Resumes a paused session.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn gm_session_start(s: *mut GmSession) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let result = s.session.start();
        absorb(s, result)
    })
}

/// Pauses the session, releasing all holds.
///
/// # Safety
/// `s` must be a live session.
#[no_mangle]
pub unsafe extern "C" fn gm_session_stop(s: *mut GmSession) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let result = s.session.stop();
        absorb(s, result)
    })
}

/// Starts buffering frames for a new pose.
///
/// # Safety
/// `s` must be a live session; `pose_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gm_session_start_recording(s: *mut GmSession, pose_id: *const c_char) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        let pose_id = unwrap_or_return!(text(pose_id));
        let result = s.session.start_recording(pose_id);
        absorb(s, result)
    })
}

/// Infers the recorded pose and adds it to the scheme. On success `out`
/// receives the pose definition as JSON.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gm_session_finish_recording(s: *mut GmSession, out: *mut *mut c_char) -> GmStatus {
    guard(|| {
        let s = unwrap_or_return!(session(s));
        if out.is_null() {
            return fail(GmStatus::NullPointer, "null out pointer");
        }
        match s.session.finish_recording() {
            Ok(pose) => give_string(out, serde_json::to_string(&pose).expect("pose serializes")),
            Err(e) => engine_status(&e),
        }
    })
}

/// The session's current scheme in canonical form.
///
/// # Safety
/// `s` must be a live session; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gm_session_scheme_json(s: *const GmSession, out: *mut *mut c_char) -> GmStatus {
    guard(|| {
        let Some(s) = s.as_ref() else {
            return fail(GmStatus::NullPointer, "null session");
        };
        if out.is_null() {
            return fail(GmStatus::NullPointer, "null out pointer");
        }
        give_string(out, s.session.scheme().to_canonical_json())
    })
}

/// Validates a scheme document. `out_errors` (optional) receives a JSON
/// array with every error, empty when valid.
///
/// # Safety
/// `scheme_json` must be a NUL-terminated string; `out_errors` NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn gm_scheme_validate(scheme_json: *const c_char, out_errors: *mut *mut c_char) -> GmStatus {
    guard(|| {
        let doc = unwrap_or_return!(text(scheme_json));
        let errors = match validate_document(doc) {
            Ok(_) => Vec::new(),
            Err(errors) => errors,
        };
        if !out_errors.is_null() {
            let status = give_string(out_errors, serde_json::to_string(&errors).expect("errors serialize"));
            if status != GmStatus::Ok {
                return status;
            }
        }
        if errors.is_empty() {
            GmStatus::Ok
        } else {
            fail(GmStatus::SchemeInvalid, format!("{}", errors[0]))
        }
    })
}

/// Infers a pose from a `.skel.jsonl` recording with default settings.
///
/// # Safety
/// `recording` and `pose_id` must be NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gm_infer_jsonl(
    recording: *const c_char,
    pose_id: *const c_char,
    out: *mut *mut c_char,
) -> GmStatus {
    guard(|| {
        let recording = unwrap_or_return!(text(recording));
        let pose_id = unwrap_or_return!(text(pose_id));
        if out.is_null() {
            return fail(GmStatus::NullPointer, "null out pointer");
        }
        let frames: Vec<SkeletonFrame> = match decode_records(recording) {
            Ok(f) => f,
            Err(e) => return fail(GmStatus::DecodeError, e.to_string()),
        };
        let r = Recording::new(frames, SkeletonStream::DEFAULT_FPS);
        match infer(&r, &InferenceConfig::default(), pose_id) {
            Ok(pose) => give_string(out, serde_json::to_string(&pose).expect("pose serializes")),
            Err(e) => fail(GmStatus::InferenceFailed, format!("{}: {e}", e.code())),
        }
    })
}
