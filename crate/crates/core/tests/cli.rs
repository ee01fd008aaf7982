//! End-to-end runs of the `manakov` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use manakov_scatter::cli_io::{read_potential, read_scattering, write_potential, PotentialFile};
use manakov_scatter::{Epsilon, GridPotential, XGrid, C64};

const GRID: [&str; 8] = ["--xmin", "-12", "--xmax", "12", "--nx", "513", "--nlambda", "512"];

fn manakov(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manakov"))
        .args(args)
        .args(GRID)
        .arg("--out")
        .arg(dir)
        .env("MANAKOV_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn sech_file(dir: &Path, amp: f64) -> PathBuf {
    let grid = XGrid::new(-12.0, 12.0, 513).unwrap();
    let pot = GridPotential::from_fn(grid, Epsilon::Focusing, |x| {
        let a = amp / x.cosh();
        (C64::new(0.6 * a, 0.0), C64::new(0.0, 0.8 * a))
    })
    .unwrap();
    let path = dir.join(format!("sech{amp}.txt"));
    write_potential(&path, &PotentialFile::from_potential(&pot)).unwrap();
    path
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn direct_inverse_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = sech_file(dir.path(), 1.2);
    let o = manakov(dir.path(), &["direct", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let scat = dir.path().join("sech1.2.scattering.txt");
    let data = read_scattering(&scat).unwrap().data;
    assert_eq!(data.discrete.len(), 1);
    assert!((data.discrete.eigenvalues[0] - C64::new(0.0, 0.7)).norm() < 1e-3);

    let o = manakov(dir.path(), &["inverse", scat.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = read_potential(&dir.path().join("sech1.2.scattering.potential.txt")).unwrap();
    let orig = read_potential(&input).unwrap();
    let err = rec.u.iter().zip(&orig.u).chain(rec.v.iter().zip(&orig.v)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-3, "round trip error {err}");
    assert_eq!(rec.trailer.unwrap().failures, 0);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = sech_file(dir.path(), 1.2);
    let scat = dir.path().join("sech1.2.scattering.txt");
    assert_eq!(code(&manakov(dir.path(), &["direct", input.to_str().unwrap()])), 0);
    let first = std::fs::read(&scat).unwrap();
    assert_eq!(code(&manakov(dir.path(), &["direct", input.to_str().unwrap()])), 0);
    assert_eq!(first, std::fs::read(&scat).unwrap());
}

#[test]
fn evolve_stacks_times() {
    let dir = tempfile::tempdir().unwrap();
    let input = sech_file(dir.path(), 1.2);
    assert_eq!(code(&manakov(dir.path(), &["direct", input.to_str().unwrap()])), 0);
    let scat = dir.path().join("sech1.2.scattering.txt");
    assert_eq!(code(&manakov(dir.path(), &["evolve", scat.to_str().unwrap(), "--t", "0.25"])), 0);
    let once = dir.path().join("sech1.2.scattering.evolved.txt");
    assert_eq!(code(&manakov(dir.path(), &["evolve", once.to_str().unwrap(), "--t", "0.25"])), 0);
    let twice = read_scattering(&dir.path().join("sech1.2.scattering.evolved.evolved.txt")).unwrap();
    assert_eq!(twice.evolution.unwrap().t, 0.5);

    let direct = dir.path().join("direct");
    std::fs::create_dir(&direct).unwrap();
    assert_eq!(code(&manakov(&direct, &["evolve", scat.to_str().unwrap(), "--t", "0.5"])), 0);
    let ref_ = read_scattering(&direct.join("sech1.2.scattering.evolved.txt")).unwrap();
    let diff = twice.data.rho1.iter().zip(&ref_.data.rho1).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");

    // A different flow cannot be stacked on top.
    let o = manakov(dir.path(), &["evolve", once.to_str().unwrap(), "--t", "0.1", "--flow", "sasa-satsuma"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Unknown flag, missing file, malformed grid.
    assert_eq!(code(&manakov(d, &["direct", "--bogus"])), 2);
    assert_eq!(code(&manakov(d, &["direct", "/nonexistent/potential.txt"])), 2);
    assert_eq!(code(&manakov(d, &["spectrum", "--epsilon", "-1", "--nlambda", "500"])), 2);
    let garbage = d.join("garbage.txt");
    std::fs::write(&garbage, "not a potential\n").unwrap();
    assert_eq!(code(&manakov(d, &["direct", garbage.to_str().unwrap()])), 2);

    // Forcing case I on data with an eigenvalue violates the assumption.
    let input = sech_file(d, 1.2);
    assert_eq!(code(&manakov(d, &["direct", input.to_str().unwrap(), "--case", "I"])), 4);

    // An unattainable error bound reports a numerical failure.
    let o = manakov(d, &["roundtrip", input.to_str().unwrap(), "--max-error", "1e-14"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    let o = manakov(d, &["roundtrip", input.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn random_input_when_file_is_omitted() {
    let dir = tempfile::tempdir().unwrap();
    let o = manakov(dir.path(), &["direct", "--epsilon", "-1", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = read_scattering(&dir.path().join("random-7.scattering.txt")).unwrap();
    assert_eq!(f.data.epsilon, Epsilon::Defocusing);
    assert_eq!(f.data.lambda_grid.n, 512);
}
