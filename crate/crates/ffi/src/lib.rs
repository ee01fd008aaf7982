//! C ABI over `manakov-scatter`.
//!
//! Objects are opaque heap handles created by `ms_*_new`/`ms_direct`/...
//! and released with the matching `ms_*_free`. Every fallible call returns
//! an [`MsStatus`]; the message of the last failure on the calling thread
//! is available through [`ms_last_error`]. Complex arrays are interleaved
//! `re, im` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use manakov_scatter::cli_io::{self, EvolutionStamp, PotentialFile, ScatteringFile};
use manakov_scatter::direct_scattering::ScatteringData;
use manakov_scatter::evolution_oracle::{evolve_scattering, FlowTag};
use manakov_scatter::rhp_inverse::{reconstruct_profile_with, CaseTag, SolverOptions};
use manakov_scatter::{Epsilon, Error, GridPotential, LambdaGrid, XGrid, C64};

/// Status codes. The numeric values of the library errors match the exit
/// codes of the `manakov` binary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    Input = 2,
    Numerical = 3,
    CaseViolation = 4,
    Panic = 5,
}

/// Sampled potential `(u, v)` on a uniform x-grid.
pub struct MsPotential {
    inner: GridPotential,
}

/// Reflection coefficients and discrete spectrum on a lambda grid.
pub struct MsScattering {
    inner: ScatteringData,
    evolution: Option<EvolutionStamp>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MsStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("null pointer passed for `{name}`"));
            MsStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e {
                Error::Input(_) => MsStatus::Input,
                Error::Numerical(_) => MsStatus::Numerical,
                Error::CaseViolation(_) => MsStatus::CaseViolation,
            }
        }
        Err(_) => {
            set_error("internal panic".to_string());
            MsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn read_complex(p: *const f64, n: usize, name: &'static str) -> Result<Vec<C64>, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = std::slice::from_raw_parts(p, 2 * n);
    Ok(s.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect())
}

unsafe fn write_complex(p: *mut f64, data: &[C64], name: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    let s = std::slice::from_raw_parts_mut(p, 2 * data.len());
    for (c, z) in s.chunks_exact_mut(2).zip(data) {
        c[0] = z.re;
        c[1] = z.im;
    }
    Ok(())
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::input("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn epsilon(e: c_int) -> Result<Epsilon, Failure> {
    match e {
        1 => Ok(Epsilon::Focusing),
        -1 => Ok(Epsilon::Defocusing),
        _ => Err(Error::input(format!("epsilon must be +1 or -1, got {e}")).into()),
    }
}

fn flow(f: c_int) -> Result<FlowTag, Failure> {
    match f {
        2 => Ok(FlowTag::MANAKOV),
        3 => Ok(FlowTag::SASA_SATSUMA),
        _ => Err(Error::input(format!("flow must be 2 (Manakov) or 3 (Sasa-Satsuma), got {f}")).into()),
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ms_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds a potential from `n` interleaved complex samples of `u` and `v`
/// on the uniform grid `[x_min, x_max]`.
///
/// # Safety
/// `u` and `v` must point to `2 n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_new(
    x_min: f64,
    x_max: f64,
    n: usize,
    eps: c_int,
    u: *const f64,
    v: *const f64,
    out_pot: *mut *mut MsPotential,
) -> MsStatus {
    guard(|| {
        let o = out(out_pot, "out")?;
        let grid = XGrid::new(x_min, x_max, n)?;
        let inner = GridPotential::new(grid, read_complex(u, n, "u")?, read_complex(v, n, "v")?, epsilon(eps)?)?;
        *o = boxed(MsPotential { inner });
        Ok(())
    })
}

/// Reads a potential text file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_read(file: *const c_char, out_pot: *mut *mut MsPotential) -> MsStatus {
    guard(|| {
        let o = out(out_pot, "out")?;
        let inner = cli_io::read_potential(&path(file)?)?.into_potential()?;
        *o = boxed(MsPotential { inner });
        Ok(())
    })
}

/// # Safety
/// `pot` must be a live handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_write(pot: *const MsPotential, file: *const c_char) -> MsStatus {
    guard(|| {
        let p = deref(pot, "pot")?;
        cli_io::write_potential(&path(file)?, &PotentialFile::from_potential(&p.inner))?;
        Ok(())
    })
}

/// Number of grid nodes.
///
/// # Safety
/// `pot` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_len(pot: *const MsPotential) -> usize {
    pot.as_ref().map_or(0, |p| p.inner.grid.n)
}

/// Copies the samples into `u` and `v` (each `2 * ms_potential_len` doubles).
///
/// # Safety
/// `pot` must be a live handle; `u`, `v` must be writable for the length above.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_samples(pot: *const MsPotential, u: *mut f64, v: *mut f64) -> MsStatus {
    guard(|| {
        let p = deref(pot, "pot")?;
        write_complex(u, &p.inner.u, "u")?;
        write_complex(v, &p.inner.v, "v")
    })
}

/// # Safety
/// `pot` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_potential_free(pot: *mut MsPotential) {
    if !pot.is_null() {
        drop(Box::from_raw(pot));
    }
}

/// Direct transform on `n_lambda` nodes of `[-lambda_max, lambda_max]`.
/// `case_out` receives 1, 2 or 3. In case 3 (a real zero of `s11` below
/// `tol_zero`) no handle is produced and the status is `CaseViolation`.
///
/// # Safety
/// `pot` must be a live handle; `out` must be writable; `case_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ms_direct(
    pot: *const MsPotential,
    lambda_max: f64,
    n_lambda: usize,
    tol_zero: f64,
    out_data: *mut *mut MsScattering,
    case_out: *mut c_int,
) -> MsStatus {
    guard(|| {
        let p = deref(pot, "pot")?;
        let o = out(out_data, "out")?;
        if !(tol_zero.is_finite() && tol_zero > 0.0) {
            return Err(Error::input(format!("tol_zero must be positive, got {tol_zero}")).into());
        }
        LambdaGrid::new(lambda_max, n_lambda)?;
        let cfg = cli_io::RunConfig { lambda_max, n_lambda, tol_zero, ..cli_io::RunConfig::default() };
        let d = cli_io::run_direct(&p.inner, &cfg)?;
        if let Some(c) = case_out.as_mut() {
            *c = match d.classification.case {
                CaseTag::I => 1,
                CaseTag::II => 2,
                CaseTag::III => 3,
            };
        }
        let inner = d.data.ok_or_else(|| Error::case(d.classification.to_string()))?;
        *o = boxed(MsScattering { inner, evolution: None });
        Ok(())
    })
}

/// Reconstructs the potential on `nx` nodes of `[x_min, x_max]`.
/// `residual_out` (optional) receives the largest solver residual.
///
/// # Safety
/// `data` must be a live handle; `out` writable; `residual_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn ms_inverse(
    data: *const MsScattering,
    x_min: f64,
    x_max: f64,
    nx: usize,
    out_pot: *mut *mut MsPotential,
    residual_out: *mut f64,
) -> MsStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let o = out(out_pot, "out")?;
        let grid = XGrid::new(x_min, x_max, nx)?;
        let r = reconstruct_profile_with(&d.inner, &grid, &SolverOptions::default())?;
        if let Some(res) = residual_out.as_mut() {
            *res = r.residual_max;
        }
        if let Some((x, why)) = r.failures.first() {
            return Err(Error::numerical(format!("{} node(s) failed, first at x = {x}: {why}", r.failures.len())).into());
        }
        let inner = GridPotential::new(r.grid, r.u, r.v, r.epsilon)?;
        *o = boxed(MsPotential { inner });
        Ok(())
    })
}

/// Evolves the data to time `t`; `flow` is the power of lambda (2 or 3).
/// A non-finite `kappa` selects the calibrated default of the flow.
///
/// # Safety
/// `data` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_evolve(
    data: *const MsScattering,
    t: f64,
    flow_power: c_int,
    kappa: f64,
    out_data: *mut *mut MsScattering,
) -> MsStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let o = out(out_data, "out")?;
        let f = flow(flow_power)?;
        let kappa = if kappa.is_finite() { kappa } else { f.default_kappa() };
        let e = evolve_scattering(&d.inner, t, f, kappa)?;
        let prior = d.evolution.filter(|p| p.flow == f && p.kappa == kappa).map_or(0.0, |p| p.t);
        *o = boxed(MsScattering { inner: e.data, evolution: Some(EvolutionStamp { t: prior + t, flow: f, kappa }) });
        Ok(())
    })
}

/// Number of lambda nodes.
///
/// # Safety
/// `data` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_len(data: *const MsScattering) -> usize {
    data.as_ref().map_or(0, |d| d.inner.lambda_grid.n)
}

/// Copies `rho1` and `rho2` (each `2 * ms_scattering_len` doubles).
///
/// # Safety
/// `data` must be a live handle; the output buffers writable for that length.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_rho(data: *const MsScattering, rho1: *mut f64, rho2: *mut f64) -> MsStatus {
    guard(|| {
        let d = deref(data, "data")?;
        write_complex(rho1, &d.inner.rho1, "rho1")?;
        write_complex(rho2, &d.inner.rho2, "rho2")
    })
}

/// Number of discrete eigenvalues.
///
/// # Safety
/// `data` must be null or a live handle. Null yields 0.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_n_discrete(data: *const MsScattering) -> usize {
    data.as_ref().map_or(0, |d| d.inner.discrete.len())
}

/// Eigenvalue `k` into `z` (2 doubles) and its norming vector into `c`
/// (4 doubles, may be null).
///
/// # Safety
/// `data` must be a live handle; `z` writable for 2 doubles, `c` for 4.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_eigenvalue(data: *const MsScattering, k: usize, z: *mut f64, c: *mut f64) -> MsStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let disc = &d.inner.discrete;
        if k >= disc.len() {
            return Err(Error::input(format!("eigenvalue index {k} out of range ({} available)", disc.len())).into());
        }
        write_complex(z, &disc.eigenvalues[k..=k], "z")?;
        if !c.is_null() {
            write_complex(c, &disc.norming_constants[k], "c")?;
        }
        Ok(())
    })
}

/// # Safety
/// `file` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_read(file: *const c_char, out_data: *mut *mut MsScattering) -> MsStatus {
    guard(|| {
        let o = out(out_data, "out")?;
        let f = cli_io::read_scattering(&path(file)?)?;
        *o = boxed(MsScattering { inner: f.data, evolution: f.evolution });
        Ok(())
    })
}

/// # Safety
/// `data` must be a live handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_write(data: *const MsScattering, file: *const c_char) -> MsStatus {
    guard(|| {
        let d = deref(data, "data")?;
        let f = ScatteringFile { data: d.inner.clone(), evolution: d.evolution };
        cli_io::write_scattering(&path(file)?, &f)?;
        Ok(())
    })
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_scattering_free(data: *mut MsScattering) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}
