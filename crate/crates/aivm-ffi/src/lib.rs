//! C ABI for the adaptive incremental view maintenance engine.
//!
//! All functions return an `AivmStatus`; results come back through out
//! parameters. Handles are opaque and must be released with the matching
//! `_free` function. Strings returned by the library are UTF-8,
//! NUL-terminated, and owned by the caller via `aivm_string_free`.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use aivm::engine::{Engine, EngineError, UpdateOutcome};
use aivm::enumerate::enumerate;
use aivm::planner::{build_plan, Plan};
use aivm::query::parse_query;
use aivm::viewtree::EnumerationLimits;

/// Status codes returned by every API function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AivmStatus {
    /// Success.
    AivmOk = 0,
    /// A required pointer argument was null.
    AivmNullArgument = 1,
    /// A string argument was not valid UTF-8.
    AivmInvalidUtf8 = 2,
    /// The query text did not parse.
    AivmParseError = 3,
    /// Planning failed (for example, the view tree limit was exceeded).
    AivmPlanError = 4,
    /// The relation name is not an atom of the query.
    AivmUnknownRelation = 5,
    /// The tuple arity does not match the relation schema.
    AivmArityMismatch = 6,
    /// Duplicate insert or delete of an absent tuple; the state is
    /// unchanged.
    AivmRejected = 7,
    /// The enumeration procedure failed on an inconsistent plan.
    AivmEnumerateError = 8,
}

/// Opaque maintenance plan.
pub struct AivmPlan {
    inner: Plan,
}

/// Opaque engine instance.
pub struct AivmEngine {
    inner: Engine,
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, AivmStatus> {
    if s.is_null() {
        return Err(AivmStatus::AivmNullArgument);
    }
    unsafe { CStr::from_ptr(s) }.to_str().map_err(|_| AivmStatus::AivmInvalidUtf8)
}

fn give_string(text: String, out: *mut *mut c_char) -> AivmStatus {
    // Internal strings never contain NUL bytes.
    let c = CString::new(text).expect("no interior NUL");
    unsafe { *out = c.into_raw() };
    AivmStatus::AivmOk
}

/// Build a plan from query text such as `Q(A,B,C) = R(A,B), S(B,C)`.
///
/// # Safety
/// `query` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aivm_plan_build(
    query: *const c_char,
    out: *mut *mut AivmPlan,
) -> AivmStatus {
    if out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    unsafe { *out = ptr::null_mut() };
    let text = match unsafe { read_str(query) } {
        Ok(t) => t,
        Err(s) => return s,
    };
    let q = match parse_query(text.trim()) {
        Ok(q) => q,
        Err(_) => return AivmStatus::AivmParseError,
    };
    match build_plan(&q, &EnumerationLimits::default(), None) {
        Ok(plan) => {
            unsafe { *out = Box::into_raw(Box::new(AivmPlan { inner: plan })) };
            AivmStatus::AivmOk
        }
        Err(_) => AivmStatus::AivmPlanError,
    }
}

/// Restore a plan from its serialized text form.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aivm_plan_deserialize(
    text: *const c_char,
    out: *mut *mut AivmPlan,
) -> AivmStatus {
    if out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    unsafe { *out = ptr::null_mut() };
    let text = match unsafe { read_str(text) } {
        Ok(t) => t,
        Err(s) => return s,
    };
    match Plan::deserialize(text) {
        Ok(plan) => {
            unsafe { *out = Box::into_raw(Box::new(AivmPlan { inner: plan })) };
            AivmStatus::AivmOk
        }
        Err(_) => AivmStatus::AivmPlanError,
    }
}

/// Serialize a plan; reload it with `aivm_plan_deserialize`.
///
/// # Safety
/// `plan` must be a live plan handle and `out` a valid pointer. Free the
/// result with `aivm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn aivm_plan_serialize(
    plan: *const AivmPlan,
    out: *mut *mut c_char,
) -> AivmStatus {
    if plan.is_null() || out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    let plan = unsafe { &*plan };
    give_string(plan.inner.serialize(), out)
}

/// Release a plan handle.
///
/// # Safety
/// `plan` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aivm_plan_free(plan: *mut AivmPlan) {
    if !plan.is_null() {
        drop(unsafe { Box::from_raw(plan) });
    }
}

/// Create an engine maintaining the plan's query over an empty database.
///
/// # Safety
/// `plan` must be a live plan handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_new(
    plan: *const AivmPlan,
    out: *mut *mut AivmEngine,
) -> AivmStatus {
    if plan.is_null() || out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    let plan = unsafe { &*plan };
    let engine = Engine::new(plan.inner.clone());
    unsafe { *out = Box::into_raw(Box::new(AivmEngine { inner: engine })) };
    AivmStatus::AivmOk
}

/// Release an engine handle.
///
/// # Safety
/// `engine` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_free(engine: *mut AivmEngine) {
    if !engine.is_null() {
        drop(unsafe { Box::from_raw(engine) });
    }
}

unsafe fn apply(
    engine: *mut AivmEngine,
    relation: *const c_char,
    tokens: *const *const c_char,
    arity: usize,
    insert: bool,
) -> AivmStatus {
    if engine.is_null() || (tokens.is_null() && arity > 0) {
        return AivmStatus::AivmNullArgument;
    }
    let engine = unsafe { &mut (*engine).inner };
    let relation = match unsafe { read_str(relation) } {
        Ok(r) => r,
        Err(s) => return s,
    };
    let mut declared = Vec::with_capacity(arity);
    for i in 0..arity {
        let token = match unsafe { read_str(*tokens.add(i)) } {
            Ok(t) => t,
            Err(s) => return s,
        };
        declared.push(engine.interner.intern(token));
    }
    let atom = match engine.atom_index(relation) {
        Ok(a) => a,
        Err(_) => return AivmStatus::AivmUnknownRelation,
    };
    let tuple = match engine.layout_tuple(atom, &declared) {
        Ok(t) => t,
        Err(_) => return AivmStatus::AivmArityMismatch,
    };
    let outcome = if insert { engine.insert(relation, &tuple) } else { engine.delete(relation, &tuple) };
    match outcome {
        Ok(UpdateOutcome::Applied) => AivmStatus::AivmOk,
        Ok(UpdateOutcome::Rejected) => AivmStatus::AivmRejected,
        Err(EngineError::UnknownRelation(_)) => AivmStatus::AivmUnknownRelation,
        Err(EngineError::Arity(_)) => AivmStatus::AivmArityMismatch,
    }
}

/// Insert one tuple given as string tokens in the relation's declared
/// variable order. Duplicate inserts return `AivmRejected` and leave the
/// state unchanged.
///
/// # Safety
/// `tokens` must point to `arity` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_insert(
    engine: *mut AivmEngine,
    relation: *const c_char,
    tokens: *const *const c_char,
    arity: usize,
) -> AivmStatus {
    unsafe { apply(engine, relation, tokens, arity, true) }
}

/// Delete one tuple; deletes of absent tuples return `AivmRejected`.
///
/// # Safety
/// `tokens` must point to `arity` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_delete(
    engine: *mut AivmEngine,
    relation: *const c_char,
    tokens: *const *const c_char,
    arity: usize,
) -> AivmStatus {
    unsafe { apply(engine, relation, tokens, arity, false) }
}

/// Current multiplicity-weighted result count.
///
/// # Safety
/// `engine` must be a live engine handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_count(
    engine: *const AivmEngine,
    out: *mut i64,
) -> AivmStatus {
    if engine.is_null() || out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    unsafe { *out = (*engine).inner.count() };
    AivmStatus::AivmOk
}

/// Enumerate the current result, one `v1 v2 ... # mult` line per tuple in
/// sorted order, values in the query's head-variable order.
///
/// # Safety
/// `engine` must be a live engine handle and `out` a valid pointer. Free
/// the result with `aivm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn aivm_engine_enumerate(
    engine: *mut AivmEngine,
    out: *mut *mut c_char,
) -> AivmStatus {
    if engine.is_null() || out.is_null() {
        return AivmStatus::AivmNullArgument;
    }
    let engine = unsafe { &mut (*engine).inner };
    let result = match enumerate(engine) {
        Ok(r) => r,
        Err(_) => return AivmStatus::AivmEnumerateError,
    };
    let head: Vec<usize> = engine
        .query
        .free_vars
        .iter()
        .map(|v| engine.query.var_id(v).expect("head var"))
        .collect();
    let mut text = String::new();
    for (tuple, mult) in &result.tuples {
        let row: Vec<String> =
            head.iter().map(|&id| engine.interner.render(tuple[id])).collect();
        text.push_str(&row.join(" "));
        text.push_str(&format!(" # {mult}\n"));
    }
    give_string(text, out)
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aivm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
