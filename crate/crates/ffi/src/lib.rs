//! C ABI for `resest`.
//!
//! Every fallible function returns a [`ResestStatus`] and writes its result
//! through an out pointer. On failure `resest_last_error` returns a message
//! for the calling thread. Handles are opaque and must be released with the
//! matching `_free` function; strings returned by the library are released
//! with `resest_string_free`. Node ids are 1-indexed, trace rows are
//! 0-indexed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use resest::graph::{build_medag_with_threshold, parse_edge_list, GraphError};
use resest::output::{medag_json, mss_json, trace_json};
use resest::scenario::{bundled, ScenarioError, ScenarioFile};
use resest::sim::{monte_carlo_mss, pbar, run_simulation, SimError};
use resest::{Digraph, MssReport, NodeSet, SimConfig, Trace};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResestStatus {
    Ok = 0,
    /// Null pointer, bad index or non-UTF-8 text.
    InvalidArgument = 1,
    ParseError = 2,
    /// The graph fails the requested robustness test.
    NotRobust = 3,
    /// A hypothesis of the guarantees does not hold.
    ConfigInvalid = 4,
    DomainError = 5,
    /// A panic was caught at the boundary.
    Internal = 6,
}

pub struct ResestGraph(Digraph);
pub struct ResestScenario(SimConfig);
pub struct ResestTrace(Trace);
pub struct ResestMssReport(MssReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

type Fail = (ResestStatus, String);

fn from_graph(e: GraphError) -> Fail {
    let status = match e {
        GraphError::NotRobust { .. } => ResestStatus::NotRobust,
        GraphError::Parse { .. } => ResestStatus::ParseError,
        _ => ResestStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn from_sim(e: SimError) -> Fail {
    let status = match e {
        SimError::ConfigInvalid { .. } => ResestStatus::ConfigInvalid,
        SimError::Domain(_) => ResestStatus::DomainError,
        SimError::Input(_) => ResestStatus::InvalidArgument,
        SimError::Protocol(_) => ResestStatus::Internal,
    };
    (status, e.to_string())
}

fn from_scenario(e: ScenarioError) -> Fail {
    let status = match e {
        ScenarioError::Parse(_) | ScenarioError::Schema { .. } => ResestStatus::ParseError,
        _ => ResestStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn invalid(msg: &str) -> Fail {
    (ResestStatus::InvalidArgument, msg.to_string())
}

/// Runs `body` behind a panic guard and records any failure.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> ResestStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ResestStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ResestStatus::Internal
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid("null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("string is not UTF-8"))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid("null handle"))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("null out pointer"));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (ResestStatus::Internal, "string contains NUL".to_string()))
}

unsafe fn source_set(sources: *const usize, len: usize, n: usize) -> Result<NodeSet, Fail> {
    if sources.is_null() || len == 0 {
        return Err(invalid("source set is empty"));
    }
    let mut set = NodeSet::new();
    for &id in std::slice::from_raw_parts(sources, len) {
        if id == 0 || id > n {
            return Err(invalid(&format!("source {id} is outside 1..={n}")));
        }
        set.insert(id - 1);
    }
    Ok(set)
}

/// Message of the last failure on this thread, or null. Free with
/// `resest_string_free`.
#[no_mangle]
pub extern "C" fn resest_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn resest_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn resest_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an edge list; `nodes` of 0 infers the node count.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_graph_parse(
    text: *const c_char,
    nodes: usize,
    out: *mut *mut ResestGraph,
) -> ResestStatus {
    guard(|| {
        let g = parse_edge_list(cstr(text)?, (nodes > 0).then_some(nodes)).map_err(from_graph)?;
        put(out, Box::into_raw(Box::new(ResestGraph(g))))
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resest_graph_complete(nodes: usize, out: *mut *mut ResestGraph) -> ResestStatus {
    guard(|| {
        if nodes == 0 {
            return Err(invalid("a graph needs at least one node"));
        }
        put(out, Box::into_raw(Box::new(ResestGraph(Digraph::complete(nodes)))))
    })
}

/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn resest_graph_free(g: *mut ResestGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn resest_graph_node_count(g: *const ResestGraph) -> usize {
    g.as_ref().map_or(0, |g| g.0.node_count())
}

/// Writes whether `g` is strongly `r`-robust with respect to `sources`.
/// A negative answer is reported as `Ok` with `*out = false`.
///
/// # Safety
/// `sources` must point to `len` ids and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resest_check_robust(
    g: *const ResestGraph,
    sources: *const usize,
    len: usize,
    r: usize,
    out: *mut bool,
) -> ResestStatus {
    guard(|| {
        let g = &handle(g)?.0;
        let s = source_set(sources, len, g.node_count())?;
        if r == 0 {
            return Err(invalid("r must be at least 1"));
        }
        put(out, resest::graph::is_strongly_r_robust(g, &s, r))
    })
}

/// Builds the estimation DAG for `f` adversaries and writes it as JSON.
///
/// # Safety
/// `sources` must point to `len` ids and `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resest_build_medag_json(
    g: *const ResestGraph,
    sources: *const usize,
    len: usize,
    f: usize,
    out_json: *mut *mut c_char,
) -> ResestStatus {
    guard(|| {
        let g = &handle(g)?.0;
        let s = source_set(sources, len, g.node_count())?;
        let medag = build_medag_with_threshold(g, &s, 2 * f + 1).map_err(from_graph)?;
        put(out_json, owned_string(medag_json(&medag).to_string())?)
    })
}

/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_scenario_parse(
    toml: *const c_char,
    out: *mut *mut ResestScenario,
) -> ResestStatus {
    guard(|| {
        let cfg = ScenarioFile::from_toml(cstr(toml)?)
            .and_then(|s| s.to_config())
            .map_err(from_scenario)?;
        put(out, Box::into_raw(Box::new(ResestScenario(cfg))))
    })
}

/// Loads a scenario shipped with the library.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_scenario_bundled(
    name: *const c_char,
    out: *mut *mut ResestScenario,
) -> ResestStatus {
    guard(|| {
        let cfg = bundled(cstr(name)?)
            .and_then(|s| s.to_config())
            .map_err(from_scenario)?;
        put(out, Box::into_raw(Box::new(ResestScenario(cfg))))
    })
}

/// # Safety
/// `s` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn resest_scenario_free(s: *mut ResestScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn resest_scenario_set_seed(s: *mut ResestScenario, seed: u64) -> ResestStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| invalid("null handle"))?;
        s.0.seed = seed;
        Ok(())
    })
}

/// Validates the scenario and runs one simulation.
///
/// # Safety
/// `s` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_simulate(s: *const ResestScenario, out: *mut *mut ResestTrace) -> ResestStatus {
    guard(|| {
        let trace = run_simulation(&handle(s)?.0).map_err(from_sim)?;
        put(out, Box::into_raw(Box::new(ResestTrace(trace))))
    })
}

/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn resest_trace_free(t: *mut ResestTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of recorded steps (horizon + 1), or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn resest_trace_steps(t: *const ResestTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.steps())
}

/// Number of regular nodes in the trace, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trace handle.
#[no_mangle]
pub unsafe extern "C" fn resest_trace_node_count(t: *const ResestTrace) -> usize {
    t.as_ref().map_or(0, |t| t.0.nodes.len())
}

/// Full-state error `‖x̂_i[k] − x[k]‖` of the `index`-th regular node.
///
/// # Safety
/// `t` must be a live trace handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_trace_state_error(
    t: *const ResestTrace,
    k: usize,
    index: usize,
    out: *mut f64,
) -> ResestStatus {
    guard(|| {
        let t = &handle(t)?.0;
        let v = t
            .state_errors
            .get(k)
            .and_then(|row| row.get(index))
            .ok_or_else(|| invalid("step or node index out of range"))?;
        put(out, *v)
    })
}

/// Summary of the trace as JSON.
///
/// # Safety
/// `t` must be a live trace handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_trace_json(t: *const ResestTrace, out_json: *mut *mut c_char) -> ResestStatus {
    guard(|| put(out_json, owned_string(trace_json(&handle(t)?.0).to_string())?))
}

/// Monte Carlo mean-square error over `trials` runs.
///
/// # Safety
/// `s` must be a live scenario handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_montecarlo(
    s: *const ResestScenario,
    trials: usize,
    out: *mut *mut ResestMssReport,
) -> ResestStatus {
    guard(|| {
        let report = monte_carlo_mss(&handle(s)?.0, trials).map_err(from_sim)?;
        put(out, Box::into_raw(Box::new(ResestMssReport(report))))
    })
}

/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn resest_mss_free(r: *mut ResestMssReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Sample mean of the squared state error of the `index`-th regular node.
///
/// # Safety
/// `r` must be a live report handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_mss_mean_sq(
    r: *const ResestMssReport,
    k: usize,
    index: usize,
    out: *mut f64,
) -> ResestStatus {
    guard(|| {
        let r = &handle(r)?.0;
        let v = r
            .mean_sq
            .get(k)
            .and_then(|row| row.get(index))
            .ok_or_else(|| invalid("step or node index out of range"))?;
        put(out, *v)
    })
}

/// # Safety
/// `r` must be a live report handle and `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn resest_mss_json(r: *const ResestMssReport, out_json: *mut *mut c_char) -> ResestStatus {
    guard(|| put(out_json, owned_string(mss_json(&handle(r)?.0).to_string())?))
}

/// Probability that too few of the `(m−1)f+1` erasure links deliver.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn resest_pbar(p: f64, m: usize, f: usize, out: *mut f64) -> ResestStatus {
    guard(|| put(out, pbar(p, m, f).map_err(from_sim)?))
}
