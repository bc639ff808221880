//! C ABI over the planner, reasoner and simulator.
//!
//! Every entry point returns a [`SemlandStatus`]. On failure the message is
//! available from [`semland_last_error`] on the same thread. Strings returned
//! through `out` pointers are owned by the caller and must be released with
//! [`semland_string_free`]; handles with their matching `_free` function.
//! Panics are caught at the boundary and reported as `Panic`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use semland::search::{plan_request, PlanRequest, SearchError};
use semland::semantics::{
    self, default_entries, index, kb::load_entries, parse_response, retrieve, Caption,
    DeterministicBackend, KnowledgeBase, ParseLimits,
};
use semland::sim::{builtin, run_trial, Pipeline, Scenario, SimError, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemlandStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    NoPath = 4,
    Infeasible = 5,
    Io = 6,
    Panic = 7,
}

/// Indexed knowledge base.
pub struct SemlandKb(KnowledgeBase);

/// Validated scenario.
pub struct SemlandScenario(Scenario);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SemlandStatus, String);

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::ScenarioInfeasible(_) => SemlandStatus::Infeasible,
            SimError::Io(_) => SemlandStatus::Io,
            SimError::InvalidScenario(_) | SimError::MalformedTrace(_) => {
                SemlandStatus::InvalidInput
            }
        };
        Failure(status, e.to_string())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        let status = match e {
            SearchError::NoPath { .. } => SemlandStatus::NoPath,
            SearchError::Config(_) => SemlandStatus::InvalidInput,
            _ => SemlandStatus::Infeasible,
        };
        Failure(status, e.to_string())
    }
}

impl From<semantics::SemanticsError> for Failure {
    fn from(e: semantics::SemanticsError) -> Self {
        Failure(SemlandStatus::InvalidInput, e.to_string())
    }
}

fn invalid(msg: impl ToString) -> Failure {
    Failure(SemlandStatus::InvalidInput, msg.to_string())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemlandStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SemlandStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SemlandStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(
            SemlandStatus::NullArgument,
            format!("{name} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            SemlandStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SemlandStatus::NullArgument, format!("{name} is null")))
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(SemlandStatus::NullArgument, "out is null".into()));
    }
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| invalid("output contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_json<T: serde::Serialize>(out: *mut *mut c_char, v: &T) -> Result<(), Failure> {
    put_string(out, serde_json::to_string(v).map_err(invalid)?)
}

/// Knowledge base shipped with the library.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_kb_default(out: *mut *mut SemlandKb) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        *out = Box::into_raw(Box::new(SemlandKb(index(default_entries())?)));
        Ok(())
    })
}

/// Index a JSON array of knowledge entries.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_kb_from_json(
    json: *const c_char,
    out: *mut *mut SemlandKb,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let entries = load_entries(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(SemlandKb(index(entries)?)));
        Ok(())
    })
}

/// # Safety
/// `kb` must come from a `semland_kb_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn semland_kb_free(kb: *mut SemlandKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// Top-`k` entries for `caption` as a JSON array of `{id, class_name, score, cosine, overlap}`.
///
/// # Safety
/// Pointers must be valid; `caption` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn semland_kb_query(
    kb: *const SemlandKb,
    caption: *const c_char,
    k: usize,
    out: *mut *mut c_char,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let kb = handle(kb, "kb")?;
        let caption = text(caption, "caption")?;
        if k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        put_json(out, &retrieve(&kb.0, caption, k))
    })
}

/// Safety spec for `caption` from the deterministic reasoner, with fallback.
/// Writes the spec as JSON.
///
/// # Safety
/// Pointers must be valid; `caption` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn semland_infer_safety(
    kb: *const SemlandKb,
    caption: *const c_char,
    capture_time: f64,
    out: *mut *mut c_char,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let kb = handle(kb, "kb")?;
        let caption = Caption {
            text: text(caption, "caption")?.to_string(),
            capture_time,
        };
        let spec = semantics::infer_safety(
            &kb.0,
            &caption,
            &mut DeterministicBackend,
            semantics::DEFAULT_DEADLINE,
            &ParseLimits::default(),
        );
        put_json(out, &spec)
    })
}

/// Strictly parse a raw reasoner answer into `{is_dynamic, z_min}` JSON.
/// Malformed answers return `InvalidInput`.
///
/// # Safety
/// `raw` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_parse_response(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let ans = parse_response(text(raw, "raw")?, &ParseLimits::default()).map_err(invalid)?;
        put_json(
            out,
            &serde_json::json!({ "is_dynamic": ans.is_dynamic, "z_min": ans.z_min }),
        )
    })
}

/// Plan from a JSON request (`start`, `goal`, `corridor`, optional
/// `unsafe_regions` and `config`) and write the reference trajectory JSON.
///
/// # Safety
/// `request` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_plan_json(
    request: *const c_char,
    out: *mut *mut c_char,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let req: PlanRequest = serde_json::from_str(text(request, "request")?).map_err(invalid)?;
        put_json(out, &plan_request(&req)?)
    })
}

/// # Safety
/// `json` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_scenario_from_json(
    json: *const c_char,
    out: *mut *mut SemlandScenario,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let s = Scenario::from_json(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(SemlandScenario(s)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_scenario_load(
    path: *const c_char,
    out: *mut *mut SemlandScenario,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let s = Scenario::load(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(SemlandScenario(s)));
        Ok(())
    })
}

/// Bundled scenario: `open_field`, `urban` or `grassland`.
///
/// # Safety
/// `name` must be NUL-terminated; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semland_scenario_builtin(
    name: *const c_char,
    out: *mut *mut SemlandScenario,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let name = text(name, "name")?;
        let s = builtin(name).ok_or_else(|| invalid(format!("unknown scenario '{name}'")))?;
        *out = Box::into_raw(Box::new(SemlandScenario(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must come from a `semland_scenario_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn semland_scenario_free(s: *mut SemlandScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Run one trial and write its result JSON. `pipeline_json` may be null for
/// the full pipeline with the deterministic backend; otherwise it is a
/// pipeline object such as `{"variant":"Baseline", ...}`.
///
/// # Safety
/// Handles must be valid; `pipeline_json` null or NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn semland_run_trial(
    scenario: *const SemlandScenario,
    kb: *const SemlandKb,
    pipeline_json: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> SemlandStatus {
    guard(|| {
        check_out(out)?;
        let mut sc = handle(scenario, "scenario")?.0.clone();
        let kb = handle(kb, "kb")?;
        let pipeline = if pipeline_json.is_null() {
            Pipeline::new(Variant::Full)
        } else {
            serde_json::from_str(text(pipeline_json, "pipeline_json")?).map_err(invalid)?
        };
        sc.seed = seed;
        put_json(out, &run_trial(&sc, &pipeline, &kb.0)?.result)
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn semland_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn semland_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn semland_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
