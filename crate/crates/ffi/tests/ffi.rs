use std::ffi::CString;
use std::ptr;

use manakov_scatter_ffi::*;

fn sech_potential(amp: f64, n: usize) -> *mut MsPotential {
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / (n - 1) as f64;
    let mut u = Vec::new();
    let mut v = Vec::new();
    for k in 0..n {
        let x = a + k as f64 * h;
        let s = amp / x.cosh();
        u.extend([0.6 * s, 0.0]);
        v.extend([0.0, 0.8 * s]);
    }
    let mut p = ptr::null_mut();
    let st = unsafe { ms_potential_new(a, b, n, 1, u.as_ptr(), v.as_ptr(), &mut p) };
    assert_eq!(st, MsStatus::Ok);
    p
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let n = unsafe { ms_last_error(buf.as_mut_ptr(), buf.len()) };
    let s: Vec<u8> = buf.iter().take(n.min(255)).map(|&c| c as u8).collect();
    String::from_utf8(s).unwrap()
}

#[test]
fn zero_potential_round_trip() {
    let n = 256;
    let zeros = vec![0.0; 2 * n];
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(ms_potential_new(-10.0, 10.0, n, -1, zeros.as_ptr(), zeros.as_ptr(), &mut p), MsStatus::Ok);
        let mut s = ptr::null_mut();
        let mut case = 0;
        assert_eq!(ms_direct(p, 10.0, 256, 1e-6, &mut s, &mut case), MsStatus::Ok);
        assert_eq!(case, 1);
        let m = ms_scattering_len(s);
        let (mut r1, mut r2) = (vec![1.0; 2 * m], vec![1.0; 2 * m]);
        assert_eq!(ms_scattering_rho(s, r1.as_mut_ptr(), r2.as_mut_ptr()), MsStatus::Ok);
        assert!(r1.iter().chain(&r2).all(|&x| x.abs() < 1e-14));
        let mut q = ptr::null_mut();
        let mut res = f64::NAN;
        assert_eq!(ms_inverse(s, -5.0, 5.0, 33, &mut q, &mut res), MsStatus::Ok);
        assert_eq!(ms_potential_len(q), 33);
        let (mut u, mut v) = (vec![1.0; 66], vec![1.0; 66]);
        assert_eq!(ms_potential_samples(q, u.as_mut_ptr(), v.as_mut_ptr()), MsStatus::Ok);
        assert!(u.iter().chain(&v).all(|&x| x.abs() < 1e-14));
        ms_potential_free(q);
        ms_scattering_free(s);
        ms_potential_free(p);
    }
}

#[test]
fn soliton_potential_is_case_two() {
    let p = sech_potential(1.2, 1201);
    unsafe {
        let mut s = ptr::null_mut();
        let mut case = 0;
        assert_eq!(ms_direct(p, 20.0, 512, 1e-6, &mut s, &mut case), MsStatus::Ok);
        assert_eq!(case, 2);
        assert_eq!(ms_scattering_n_discrete(s), 1);
        let mut z = [0.0; 2];
        assert_eq!(ms_scattering_eigenvalue(s, 0, z.as_mut_ptr(), ptr::null_mut()), MsStatus::Ok);
        assert!(z[0].abs() < 1e-6 && (z[1] - 0.7).abs() < 1e-4, "{z:?}");
        assert_eq!(ms_scattering_eigenvalue(s, 1, z.as_mut_ptr(), ptr::null_mut()), MsStatus::Input);

        let mut e = ptr::null_mut();
        assert_eq!(ms_evolve(s, 0.0, 2, f64::NAN, &mut e), MsStatus::Ok);
        let m = ms_scattering_len(s);
        let mut a = vec![0.0; 2 * m];
        let mut b = vec![0.0; 2 * m];
        ms_scattering_rho(s, a.as_mut_ptr(), b.as_mut_ptr());
        let mut a2 = vec![0.0; 2 * m];
        ms_scattering_rho(e, a2.as_mut_ptr(), b.as_mut_ptr());
        assert_eq!(a, a2);
        assert_eq!(ms_evolve(s, 0.1, 4, 1.0, &mut e), MsStatus::Input);
        ms_scattering_free(e);
        ms_scattering_free(s);
        ms_potential_free(p);
    }
}

#[test]
fn spectral_singularity_reports_case_violation() {
    // Amplitude 0.5 sits exactly at the threshold: s11(0) = 0.
    let p = sech_potential(0.5, 2001);
    unsafe {
        let mut s = ptr::null_mut();
        let mut case = 0;
        assert_eq!(ms_direct(p, 10.0, 513, 1e-3, &mut s, &mut case), MsStatus::CaseViolation);
        assert_eq!(case, 3, "{}", last_error());
        assert!(s.is_null());
        assert!(last_error().contains("case"), "{}", last_error());
        ms_potential_free(p);
    }
}

#[test]
fn null_and_bad_arguments() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(ms_direct(ptr::null(), 10.0, 64, 1e-6, &mut s, ptr::null_mut()), MsStatus::NullPointer);
        assert!(last_error().contains("pot"));
        let zeros = [0.0; 8];
        let mut p = ptr::null_mut();
        assert_eq!(ms_potential_new(1.0, -1.0, 4, 1, zeros.as_ptr(), zeros.as_ptr(), &mut p), MsStatus::Input);
        assert_eq!(ms_potential_new(-1.0, 1.0, 4, 0, zeros.as_ptr(), zeros.as_ptr(), &mut p), MsStatus::Input);
        assert_eq!(ms_potential_new(-1.0, 1.0, 4, 1, ptr::null(), zeros.as_ptr(), &mut p), MsStatus::NullPointer);
        assert!(p.is_null());
        assert_eq!(ms_potential_len(ptr::null()), 0);
        ms_potential_free(ptr::null_mut());
        ms_scattering_free(ptr::null_mut());
        let missing = CString::new("/nonexistent/file.txt").unwrap();
        assert_eq!(ms_potential_read(missing.as_ptr(), &mut p), MsStatus::Input);
    }
}

#[test]
fn files_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let pf = CString::new(dir.path().join("p.txt").to_str().unwrap()).unwrap();
    let sf = CString::new(dir.path().join("s.txt").to_str().unwrap()).unwrap();
    let p = sech_potential(0.3, 401);
    unsafe {
        assert_eq!(ms_potential_write(p, pf.as_ptr()), MsStatus::Ok);
        let mut q = ptr::null_mut();
        assert_eq!(ms_potential_read(pf.as_ptr(), &mut q), MsStatus::Ok);
        let n = ms_potential_len(p);
        let (mut u1, mut v1, mut u2, mut v2) = (vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]);
        ms_potential_samples(p, u1.as_mut_ptr(), v1.as_mut_ptr());
        ms_potential_samples(q, u2.as_mut_ptr(), v2.as_mut_ptr());
        assert_eq!((u1, v1), (u2, v2));

        let mut s = ptr::null_mut();
        assert_eq!(ms_direct(p, 10.0, 128, 1e-6, &mut s, ptr::null_mut()), MsStatus::Ok);
        assert_eq!(ms_scattering_write(s, sf.as_ptr()), MsStatus::Ok);
        let mut s2 = ptr::null_mut();
        assert_eq!(ms_scattering_read(sf.as_ptr(), &mut s2), MsStatus::Ok);
        let m = ms_scattering_len(s);
        let (mut a, mut b, mut c, mut d) = (vec![0.0; 2 * m], vec![0.0; 2 * m], vec![0.0; 2 * m], vec![0.0; 2 * m]);
        ms_scattering_rho(s, a.as_mut_ptr(), b.as_mut_ptr());
        ms_scattering_rho(s2, c.as_mut_ptr(), d.as_mut_ptr());
        assert_eq!((a, b), (c, d));
        ms_scattering_free(s2);
        ms_scattering_free(s);
        ms_potential_free(q);
        ms_potential_free(p);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/manakov_scatter.h")).unwrap();
    for sym in ["ms_direct", "ms_inverse", "ms_evolve", "ms_last_error", "ms_potential_free", "MS_STATUS_CASE_VIOLATION", "typedef struct MsPotential"] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}
