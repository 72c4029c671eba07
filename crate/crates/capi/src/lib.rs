//! C ABI for the seer recommender.
//!
//! A session wraps a prepared data directory plus a trained checkpoint
//! behind an opaque handle. All functions return a [`SeerStatus`]; on any
//! non-OK status, `seer_last_error_message` holds a UTF-8 description valid
//! until the next failing call on the same thread.
//!
//! Strings returned through out-pointers are heap-allocated by this library
//! and must be released with `seer_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use seer_core::commands::{load_prepared, PreparedData};
use seer_core::explain::{export_explanation, segment_forward_propagation};
use seer_core::models::{load_checkpoint, recommend, Checkpoint, Ranker, SeerRanker};
use seer_core::timeseries::events_to_timeseries;

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeerStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The data directory or checkpoint could not be read or parsed.
    LoadFailed = 3,
    /// Unknown user or song id.
    NotFound = 4,
    /// The operation is not supported by this model kind.
    Unsupported = 5,
    /// Anything else; see `seer_last_error_message`.
    Internal = 6,
}

/// Opaque session handle: prepared corpus plus a trained model.
pub struct SeerSession {
    data: PreparedData,
    model: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: SeerStatus, message: impl AsRef<str>) -> SeerStatus {
    set_error(message.as_ref());
    status
}

/// The last error message for this thread. The pointer stays valid until
/// the next failing call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn seer_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn seer_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn utf8_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, SeerStatus> {
    if ptr.is_null() {
        return Err(fail(SeerStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            SeerStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

fn guard<F: FnOnce() -> SeerStatus>(body: F) -> SeerStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(SeerStatus::Internal, "internal panic"),
    }
}

/// Open a session over a prepared data directory and a checkpoint produced
/// by `seer train`. On success writes the handle to `out_session`; release
/// it with `seer_session_close`.
///
/// # Safety
/// `data_dir` and `checkpoint` must be NUL-terminated strings;
/// `out_session` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn seer_session_open(
    data_dir: *const c_char,
    checkpoint: *const c_char,
    out_session: *mut *mut SeerSession,
) -> SeerStatus {
    guard(|| {
        if out_session.is_null() {
            return fail(SeerStatus::NullArgument, "out_session is null");
        }
        let dir = match utf8_arg(data_dir, "data_dir") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let ckpt = match utf8_arg(checkpoint, "checkpoint") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let data = match load_prepared(Path::new(dir)) {
            Ok(d) => d,
            Err(e) => return fail(SeerStatus::LoadFailed, format!("{e:#}")),
        };
        let model = match load_checkpoint(Path::new(ckpt)) {
            Ok(m) => m,
            Err(e) => return fail(SeerStatus::LoadFailed, e.to_string()),
        };
        *out_session = Box::into_raw(Box::new(SeerSession { data, model }));
        SeerStatus::Ok
    })
}

/// Release a session. Null is ignored.
///
/// # Safety
/// `session` must be a pointer returned by `seer_session_open` that has not
/// been closed yet.
#[no_mangle]
pub unsafe extern "C" fn seer_session_close(session: *mut SeerSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Number of users / songs in the session's corpus.
///
/// # Safety
/// `session` must be a live session handle; out-pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn seer_session_counts(
    session: *const SeerSession,
    out_users: *mut usize,
    out_songs: *mut usize,
) -> SeerStatus {
    guard(|| {
        if session.is_null() {
            return fail(SeerStatus::NullArgument, "session is null");
        }
        let s = &*session;
        if !out_users.is_null() {
            *out_users = s.data.dataset.n_users();
        }
        if !out_songs.is_null() {
            *out_songs = s.data.lookup.n_songs();
        }
        SeerStatus::Ok
    })
}

fn score_pair(session: &SeerSession, user: usize, song: usize) -> f32 {
    match &session.model {
        Checkpoint::Seer(model) => model.predict(user, &session.data.lookup, song),
        Checkpoint::Mf(model) => model.predict(user, song),
    }
}

/// Predicted rating for a (user id, song id) pair.
///
/// # Safety
/// String arguments must be NUL-terminated; `out_rating` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seer_session_predict(
    session: *const SeerSession,
    user_id: *const c_char,
    song_id: *const c_char,
    out_rating: *mut f32,
) -> SeerStatus {
    guard(|| {
        if session.is_null() || out_rating.is_null() {
            return fail(SeerStatus::NullArgument, "session or out_rating is null");
        }
        let s = &*session;
        let user = match utf8_arg(user_id, "user_id") {
            Ok(id) => match s.data.user_of(id) {
                Ok(u) => u,
                Err(e) => return fail(SeerStatus::NotFound, e.to_string()),
            },
            Err(status) => return status,
        };
        let song = match utf8_arg(song_id, "song_id") {
            Ok(id) => match s.data.song_of(id) {
                Ok(v) => v,
                Err(e) => return fail(SeerStatus::NotFound, e.to_string()),
            },
            Err(status) => return status,
        };
        *out_rating = score_pair(s, user, song);
        SeerStatus::Ok
    })
}

/// Top-K recommendations for a user as a heap CSV string with
/// `song_id,score` lines, scores descending. Free with `seer_string_free`.
///
/// # Safety
/// `user_id` must be NUL-terminated; `out_csv` must be valid.
#[no_mangle]
pub unsafe extern "C" fn seer_session_recommend(
    session: *const SeerSession,
    user_id: *const c_char,
    k: usize,
    include_rated: bool,
    out_csv: *mut *mut c_char,
) -> SeerStatus {
    guard(|| {
        if session.is_null() || out_csv.is_null() {
            return fail(SeerStatus::NullArgument, "session or out_csv is null");
        }
        let s = &*session;
        let user = match utf8_arg(user_id, "user_id") {
            Ok(id) => match s.data.user_of(id) {
                Ok(u) => u,
                Err(e) => return fail(SeerStatus::NotFound, e.to_string()),
            },
            Err(status) => return status,
        };
        let candidates = s.data.dataset.candidates(user, include_rated);
        let ranked = match &s.model {
            Checkpoint::Seer(model) => {
                let ranker = SeerRanker {
                    model,
                    lookup: &s.data.lookup,
                };
                recommend(&ranker, user, &candidates, k)
            }
            Checkpoint::Mf(model) => recommend(model as &dyn Ranker, user, &candidates, k),
        };
        let ids = s.data.song_ids();
        let mut csv = String::new();
        for (song, score) in ranked.items {
            csv.push_str(&format!("{},{:.6}\n", ids[song], score));
        }
        match CString::new(csv) {
            Ok(c) => {
                *out_csv = c.into_raw();
                SeerStatus::Ok
            }
            Err(_) => fail(SeerStatus::Internal, "recommendation text contained NUL"),
        }
    })
}

/// Explain a (user, song) pair: writes the winning 10-second segment as a
/// MIDI file plus a metadata CSV line, and reports its bounds and rating.
///
/// # Safety
/// String arguments must be NUL-terminated; out-pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn seer_session_explain(
    session: *const SeerSession,
    user_id: *const c_char,
    song_id: *const c_char,
    out_midi_path: *const c_char,
    out_meta_path: *const c_char,
    out_start_us: *mut u64,
    out_end_us: *mut u64,
    out_rating: *mut f32,
) -> SeerStatus {
    guard(|| {
        if session.is_null() {
            return fail(SeerStatus::NullArgument, "session is null");
        }
        let s = &*session;
        let model = match &s.model {
            Checkpoint::Seer(model) => model,
            Checkpoint::Mf(_) => {
                return fail(
                    SeerStatus::Unsupported,
                    "explanations need a seer checkpoint, got mf",
                )
            }
        };
        let user_text = match utf8_arg(user_id, "user_id") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let user = match s.data.user_of(user_text) {
            Ok(u) => u,
            Err(e) => return fail(SeerStatus::NotFound, e.to_string()),
        };
        let song_text = match utf8_arg(song_id, "song_id") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if s.data.song_of(song_text).is_err() {
            return fail(
                SeerStatus::NotFound,
                format!("unknown song id {song_text:?}"),
            );
        }
        let midi_path = match utf8_arg(out_midi_path, "out_midi_path") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let meta_path = match utf8_arg(out_meta_path, "out_meta_path") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let song = match s.data.midi_song(song_text) {
            Ok(song) => song,
            Err(e) => return fail(SeerStatus::LoadFailed, format!("{e:#}")),
        };
        let series = events_to_timeseries(&song);
        let explanation = match segment_forward_propagation(model, user, &series, 10, 1) {
            Ok(e) => e,
            Err(e) => return fail(SeerStatus::Internal, e.to_string()),
        };
        if let Err(e) = export_explanation(
            &explanation,
            &song,
            user_text,
            Path::new(midi_path),
            Path::new(meta_path),
        ) {
            return fail(SeerStatus::Internal, e.to_string());
        }
        if !out_start_us.is_null() {
            *out_start_us = explanation.segment.start_us;
        }
        if !out_end_us.is_null() {
            *out_end_us = explanation.segment.end_us;
        }
        if !out_rating.is_null() {
            *out_rating = explanation.predicted_rating;
        }
        SeerStatus::Ok
    })
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a pointer previously returned through an out-parameter of
/// this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn seer_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
