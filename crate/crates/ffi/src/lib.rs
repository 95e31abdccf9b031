//! C ABI over `forum-core`.
//!
//! Every fallible function returns a [`ForumStatus`]; on failure the message is
//! kept per thread and read with [`forum_last_error_message`]. Handles are
//! opaque, created by `*_new`/`*_from_json` functions and released with the
//! matching `*_free`. Output buffers are caller-owned and must hold the stated
//! number of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use forum_core::baselines::{run_moml, MomlMode};
use forum_core::direction::{mgda_direction, project_simplex, solve_dual_qp};
use forum_core::harness::{BuiltProblem, ProblemSpec};
use forum_core::{DecisionPoint, ForumConfig as SolverConfig, ForumError, QpConfig, RunOutput};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForumStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Dimension = 4,
    Capability = 5,
    Divergence = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForumMethod {
    Forum = 0,
    MomlExact = 1,
    MomlUnrolled = 2,
}

/// One iterate record. Metrics that were not computed are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForumRecord {
    pub k: usize,
    pub q_tilde: f64,
    pub q_exact: f64,
    pub kkt_residual: f64,
    pub optimality_gap: f64,
    pub nu: f64,
    pub direction_norm: f64,
    pub wall_time_s: f64,
    pub workspace_floats: usize,
    pub approximate_metrics: bool,
}

/// Opaque problem handle.
pub struct ForumProblem {
    inner: BuiltProblem,
}

/// Opaque solver configuration handle.
pub struct ForumConfig {
    inner: SolverConfig,
}

/// Opaque result of a completed run.
pub struct ForumRun {
    inner: RunOutput,
    m: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(ForumStatus, String);

impl From<ForumError> for Failure {
    fn from(e: ForumError) -> Self {
        let status = match &e {
            ForumError::Config(_) | ForumError::Json(_) => ForumStatus::Config,
            ForumError::Dimension { .. } => ForumStatus::Dimension,
            ForumError::Capability { .. } => ForumStatus::Capability,
            ForumError::Divergence { .. } | ForumError::LowerLevelDivergence { .. } => ForumStatus::Divergence,
            ForumError::Io { .. } | ForumError::Csv(_) => ForumStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ForumStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ForumStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(ForumStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            ForumStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(ForumStatus::NullPointer, format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or point to `len` writable doubles.
unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or writable.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    non_null(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Row-major `m x dim` gradients.
unsafe fn gradient_rows(grads: *const f64, m: usize, dim: usize) -> Result<Vec<Vec<f64>>, Failure> {
    if m == 0 || dim == 0 {
        return Err(invalid("need m >= 1 and dim >= 1"));
    }
    let flat = slice(grads, m * dim, "grads")?;
    Ok(flat.chunks(dim).map(<[f64]>::to_vec).collect())
}

/// NUL-terminated crate version; static storage.
#[no_mangle]
pub extern "C" fn forum_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// plus one. An empty message means the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn forum_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len() + 1
    })
}

/// The three-variable synthetic problem (one upper-level, two lower-level coordinates, two objectives).
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn forum_problem_synthetic_new(out: *mut *mut ForumProblem) -> ForumStatus {
    guard(|| {
        let inner = BuiltProblem::build(&ProblemSpec::Synthetic, 0)?;
        emit(out, ForumProblem { inner })
    })
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn forum_problem_random_quadratic_new(
    seed: u64,
    n: usize,
    p: usize,
    m: usize,
    out: *mut *mut ForumProblem,
) -> ForumStatus {
    guard(|| {
        if n == 0 || p == 0 || m == 0 {
            return Err(invalid("random quadratic dimensions must be >= 1"));
        }
        let inner = BuiltProblem::build(&ProblemSpec::RandomQuadratic { n, p, m }, seed)?;
        emit(out, ForumProblem { inner })
    })
}

/// Builds a problem from the JSON problem selector used in experiment configs,
/// e.g. `{"kind": "hyperclean", "corruption_rate": 0.4}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn forum_problem_from_json(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut ForumProblem,
) -> ForumStatus {
    guard(|| {
        let text = string(spec_json, "spec_json")?;
        let spec: ProblemSpec = serde_json::from_str(text).map_err(ForumError::from)?;
        let inner = BuiltProblem::build(&spec, seed)?;
        emit(out, ForumProblem { inner })
    })
}

/// # Safety
/// `problem` must be a live handle; each output pointer must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn forum_problem_dims(
    problem: *const ForumProblem,
    n: *mut usize,
    p: *mut usize,
    m: *mut usize,
) -> ForumStatus {
    guard(|| {
        non_null(problem, "problem")?;
        let dims = (*problem).inner.as_dyn().dims();
        for (slot, v) in [(n, dims.n), (p, dims.p), (m, dims.m)] {
            if !slot.is_null() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forum_problem_free(problem: *mut ForumProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn forum_config_default(out: *mut *mut ForumConfig) -> ForumStatus {
    guard(|| {
        emit(
            out,
            ForumConfig {
                inner: SolverConfig::default(),
            },
        )
    })
}

/// Parses the `solver` object of an experiment config; omitted fields take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn forum_config_from_json(json: *const c_char, out: *mut *mut ForumConfig) -> ForumStatus {
    guard(|| {
        let text = string(json, "json")?;
        let inner: SolverConfig = serde_json::from_str(text).map_err(ForumError::from)?;
        inner.validate()?;
        emit(out, ForumConfig { inner })
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forum_config_free(config: *mut ForumConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs `method` from `(alpha, omega)`. On divergence no handle is produced.
///
/// # Safety
/// `alpha` and `omega` must hold `n` and `p` doubles; handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn forum_run_new(
    problem: *const ForumProblem,
    config: *const ForumConfig,
    method: ForumMethod,
    alpha: *const f64,
    n: usize,
    omega: *const f64,
    p: usize,
    out: *mut *mut ForumRun,
) -> ForumStatus {
    guard(|| {
        non_null(problem, "problem")?;
        non_null(config, "config")?;
        let problem = (*problem).inner.as_dyn();
        let cfg = &(*config).inner;
        let z0 = DecisionPoint::new(slice(alpha, n, "alpha")?.to_vec(), slice(omega, p, "omega")?.to_vec())?;
        z0.check_dims(problem.dims())?;
        let inner = match method {
            ForumMethod::Forum => forum_core::run_forum(problem, &z0, cfg)?,
            ForumMethod::MomlExact => run_moml(problem, &z0, MomlMode::Exact, cfg)?,
            ForumMethod::MomlUnrolled => run_moml(problem, &z0, MomlMode::Unrolled, cfg)?,
        };
        emit(
            out,
            ForumRun {
                inner,
                m: problem.dims().m,
            },
        )
    })
}

/// Number of records in the trace; 0 for a null handle.
///
/// # Safety
/// `run` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn forum_run_len(run: *const ForumRun) -> usize {
    if run.is_null() {
        0
    } else {
        (*run).inner.trace.len()
    }
}

/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn forum_run_record(run: *const ForumRun, index: usize, out: *mut ForumRecord) -> ForumStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(out, "out")?;
        let records = &(*run).inner.trace.records;
        let r = records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range (len {})", records.len())))?;
        *out = ForumRecord {
            k: r.k,
            q_tilde: r.q_tilde,
            q_exact: r.q_exact.unwrap_or(f64::NAN),
            kkt_residual: r.kkt_residual.unwrap_or(f64::NAN),
            optimality_gap: r.optimality_gap.unwrap_or(f64::NAN),
            nu: r.nu,
            direction_norm: r.direction_norm,
            wall_time_s: r.wall_time_seconds,
            workspace_floats: r.workspace_floats,
            approximate_metrics: r.approximate_metrics,
        };
        Ok(())
    })
}

/// Writes `F_1..F_m` of record `index` into `out` (length `m`).
///
/// # Safety
/// `run` must be a live handle and `out` must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn forum_run_f_values(
    run: *const ForumRun,
    index: usize,
    out: *mut f64,
    m: usize,
) -> ForumStatus {
    guard(|| {
        non_null(run, "run")?;
        let run = &*run;
        if m != run.m {
            return Err(invalid(format!("expected m = {}, got {m}", run.m)));
        }
        let r = run
            .inner
            .trace
            .records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range")))?;
        slice_mut(out, m, "out")?.copy_from_slice(&r.f_values);
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle; `alpha` and `omega` must hold `n` and `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn forum_run_final_point(
    run: *const ForumRun,
    alpha: *mut f64,
    n: usize,
    omega: *mut f64,
    p: usize,
) -> ForumStatus {
    guard(|| {
        non_null(run, "run")?;
        let z = &(*run).inner.final_point;
        if n != z.n() || p != z.p() {
            return Err(invalid(format!("expected n = {}, p = {}", z.n(), z.p())));
        }
        slice_mut(alpha, n, "alpha")?.copy_from_slice(&z.alpha);
        slice_mut(omega, p, "omega")?.copy_from_slice(&z.omega);
        Ok(())
    })
}

/// # Safety
/// `run` must be a live handle and `out` must hold `m` doubles.
#[no_mangle]
pub unsafe extern "C" fn forum_run_final_lambda(run: *const ForumRun, out: *mut f64, m: usize) -> ForumStatus {
    guard(|| {
        non_null(run, "run")?;
        let lambda = (*run).inner.final_lambda.as_slice();
        if m != lambda.len() {
            return Err(invalid(format!("expected m = {}, got {m}", lambda.len())));
        }
        slice_mut(out, m, "out")?.copy_from_slice(lambda);
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn forum_run_free(run: *mut ForumRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Euclidean projection of `v` onto the probability simplex.
///
/// # Safety
/// `v` and `out` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn forum_project_simplex(v: *const f64, len: usize, out: *mut f64) -> ForumStatus {
    guard(|| {
        if len == 0 {
            return Err(invalid("cannot project onto an empty simplex"));
        }
        let w = project_simplex(slice(v, len, "v")?);
        slice_mut(out, len, "out")?.copy_from_slice(w.as_slice());
        Ok(())
    })
}

/// Solves the weight subproblem for `m` row-major gradients of length `dim`,
/// the constraint gradient `grad_q` and margin `phi`. `dual_objective` and
/// `converged` may be null.
///
/// # Safety
/// `grads` must hold `m * dim` doubles, `grad_q` `dim`, `lambda` `m`.
#[no_mangle]
pub unsafe extern "C" fn forum_solve_dual_qp(
    grads: *const f64,
    m: usize,
    dim: usize,
    grad_q: *const f64,
    phi: f64,
    lambda: *mut f64,
    dual_objective: *mut f64,
    converged: *mut bool,
) -> ForumStatus {
    guard(|| {
        let rows = gradient_rows(grads, m, dim)?;
        let gq = slice(grad_q, dim, "grad_q")?;
        if phi.is_nan() || phi < 0.0 {
            return Err(invalid("phi must be >= 0"));
        }
        let sol = solve_dual_qp(&rows, gq, phi, &QpConfig::default());
        slice_mut(lambda, m, "lambda")?.copy_from_slice(sol.lambda.as_slice());
        if !dual_objective.is_null() {
            *dual_objective = sol.dual_objective;
        }
        if !converged.is_null() {
            *converged = sol.converged;
        }
        Ok(())
    })
}

/// Min-norm weights over `m` row-major gradients; `direction` receives the
/// negated min-norm combination.
///
/// # Safety
/// `grads` must hold `m * dim` doubles, `lambda` `m`, `direction` `dim`.
#[no_mangle]
pub unsafe extern "C" fn forum_mgda_direction(
    grads: *const f64,
    m: usize,
    dim: usize,
    lambda: *mut f64,
    direction: *mut f64,
) -> ForumStatus {
    guard(|| {
        let rows = gradient_rows(grads, m, dim)?;
        let sol = mgda_direction(&rows, &QpConfig::default());
        slice_mut(lambda, m, "lambda")?.copy_from_slice(sol.lambda.as_slice());
        slice_mut(direction, dim, "direction")?.copy_from_slice(&sol.direction);
        Ok(())
    })
}
