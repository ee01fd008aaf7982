//! Run configuration, text file formats and the batch commands behind the
//! `manakov` binary.
//!
//! Potential files:
//!
//! ```text
//! # manakov-potential epsilon=+1 n=2048 xmin=-2.0e1 xmax=2.0e1
//! x re_u im_u re_v im_v
//! ...
//! # residual_max=... h11_norm=... h21_norm=... failures=...
//! ```
//!
//! The trailer line is only written for reconstructions. Scattering files
//! carry one row per lambda node (`lambda re_rho1 im_rho1 re_rho2 im_rho2`,
//! optionally followed by the four left-coefficient columns), then one
//! row per eigenvalue (`re_z im_z re_C1 im_C1 re_C2 im_C2`) and finally the
//! eigenvalue rows of the reflected potential `-U(-x)`. Floats are
//! written with 17 significant digits so that reading reproduces the
//! written doubles exactly.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::direct_scattering::{
    attach_discrete_spectrum, compute_transition_matrix, find_discrete_spectrum, reflection_coefficients, verify_symmetries, DiscreteSpectrum, LeftCoefficients, Rect,
    ScatteringData, SpectrumOptions, SymmetryReport, TransitionMatrix,
};
use crate::evolution_oracle::{evolve_scattering, FlowTag};
use crate::grid_core::{sobolev_report, weighted_sobolev_norm, SobolevReport};
use crate::rhp_inverse::{reconstruct_profile_with, CaseTag, ReconstructedPotential, SolverOptions};
use crate::spectral_singularities::{prepare_case3, solve_case3, Case3Options, MATCHING_TOL};
use crate::{Epsilon, Error, GridPotential, LambdaGrid, Result, XGrid, C64};

/// Lower edge of the eigenvalue search rectangle.
pub const SPECTRUM_DELTA: f64 = 1e-3;

/// Requested case, `Auto` classifies from the direct transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaseChoice {
    #[default]
    Auto,
    I,
    II,
    III,
}

impl FromStr for CaseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "i" | "1" => Ok(Self::I),
            "ii" | "2" => Ok(Self::II),
            "iii" | "3" => Ok(Self::III),
            _ => Err(Error::input(format!("unknown case '{s}' (expected auto, I, II or III)"))),
        }
    }
}

/// Everything a command needs besides its input file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub lambda_max: f64,
    pub n_lambda: usize,
    /// Overrides or cross-checks the sign stored in input files.
    pub epsilon: Option<Epsilon>,
    pub case: CaseChoice,
    pub tol_zero: f64,
    pub tol_residual: f64,
    pub tol_matching: f64,
    pub flow: FlowTag,
    pub t: f64,
    /// `None` selects the flow's calibrated default.
    pub kappa: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
    /// Relative L2 bound for `roundtrip`.
    pub max_error: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            x_min: -20.0,
            x_max: 20.0,
            nx: 2048,
            lambda_max: 30.0,
            n_lambda: 2048,
            epsilon: None,
            case: CaseChoice::Auto,
            tol_zero: 1e-6,
            tol_residual: 1e-10,
            tol_matching: MATCHING_TOL,
            flow: FlowTag::MANAKOV,
            t: 0.0,
            kappa: None,
            out: PathBuf::from("."),
            seed: 0,
            max_error: 1e-3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol-zero", self.tol_zero),
            ("tol-residual", self.tol_residual),
            ("tol-matching", self.tol_matching),
            ("max-error", self.max_error),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        self.x_grid()?;
        self.lambda_grid()?;
        // The real-line Cauchy transform runs through FFTs on the lambda grid.
        if !self.n_lambda.is_power_of_two() {
            return Err(Error::input(format!("nlambda must be a power of two, got {}", self.n_lambda)));
        }
        if !self.t.is_finite() {
            return Err(Error::input(format!("t must be finite, got {}", self.t)));
        }
        if let Some(k) = self.kappa {
            if !k.is_finite() || k == 0.0 {
                return Err(Error::input(format!("kappa must be finite and nonzero, got {k}")));
            }
        }
        Ok(())
    }

    pub fn x_grid(&self) -> Result<XGrid> {
        XGrid::new(self.x_min, self.x_max, self.nx)
    }

    pub fn lambda_grid(&self) -> Result<LambdaGrid> {
        LambdaGrid::new(self.lambda_max, self.n_lambda)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.tol_residual, ..SolverOptions::default() }
    }

    pub fn case3(&self) -> Case3Options {
        Case3Options { solver: self.solver(), matching_tol: self.tol_matching, ..Case3Options::default() }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or_else(|| self.flow.default_kappa())
    }

    fn check_epsilon(&self, found: Epsilon, what: &str) -> Result<()> {
        match self.epsilon {
            Some(e) if e != found => Err(Error::input(format!(
                "{what} has epsilon={} but --epsilon {} was requested",
                found.label(),
                e.label()
            ))),
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Formatting and parsing
// ---------------------------------------------------------------------------

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::input(format!("line {line}: cannot parse number '{tok}'")))
}

/// `key=value` pairs of a header or trailer line.
fn parse_pairs(body: &str, line: usize) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for tok in body.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::input(format!("line {line}: expected key=value, got '{tok}'")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn get<'a>(map: &'a HashMap<String, String>, key: &str, line: usize) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| Error::input(format!("line {line}: header lacks '{key}='")))
}

fn get_usize(map: &HashMap<String, String>, key: &str, line: usize) -> Result<usize> {
    let v = get(map, key, line)?;
    v.parse().map_err(|_| Error::input(format!("line {line}: {key}={v} is not a non-negative integer")))
}

fn get_f64(map: &HashMap<String, String>, key: &str, line: usize) -> Result<f64> {
    parse_f(get(map, key, line)?, line)
}

/// Non-empty lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(k, l)| (k + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn numeric_row(l: &str, line: usize, widths: &[usize]) -> Result<Vec<f64>> {
    let vals = l.split_whitespace().map(|t| parse_f(t, line)).collect::<Result<Vec<_>>>()?;
    if !widths.contains(&vals.len()) {
        return Err(Error::input(format!("line {line}: expected {widths:?} columns, found {}", vals.len())));
    }
    Ok(vals)
}

fn check_node(found: f64, expected: f64, h: f64, line: usize) -> Result<()> {
    if (found - expected).abs() > 1e-6 * h {
        return Err(Error::input(format!("line {line}: abscissa {found} does not match grid node {expected}")));
    }
    Ok(())
}

/// Summary appended to reconstructed potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionTrailer {
    pub residual_max: f64,
    pub h11_norm: f64,
    pub h21_norm: f64,
    pub failures: usize,
}

impl ReconstructionTrailer {
    pub fn from_reconstruction(r: &ReconstructedPotential) -> Self {
        let norm = |i| r.report(i).map_or(f64::NAN, |s| s.norm_value);
        Self { residual_max: r.residual_max, h11_norm: norm(1), h21_norm: norm(2), failures: r.failures.len() }
    }
}

/// Parsed potential file. Samples may be NaN where a reconstruction failed.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialFile {
    pub grid: XGrid,
    pub epsilon: Epsilon,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub trailer: Option<ReconstructionTrailer>,
}

impl PotentialFile {
    pub fn from_potential(p: &GridPotential) -> Self {
        Self { grid: p.grid, epsilon: p.epsilon, u: p.u.clone(), v: p.v.clone(), trailer: None }
    }

    pub fn from_reconstruction(r: &ReconstructedPotential) -> Self {
        Self {
            grid: r.grid,
            epsilon: r.epsilon,
            u: r.u.clone(),
            v: r.v.clone(),
            trailer: Some(ReconstructionTrailer::from_reconstruction(r)),
        }
    }

    /// Fails on non-finite samples.
    pub fn into_potential(self) -> Result<GridPotential> {
        GridPotential::new(self.grid, self.u, self.v, self.epsilon)
    }
}

pub fn format_potential(p: &PotentialFile) -> String {
    let g = &p.grid;
    let mut s = format!(
        "# manakov-potential epsilon={} n={} xmin={} xmax={}\n",
        p.epsilon.label(),
        g.n,
        fmt_f(g.x_min),
        fmt_f(g.x_max)
    );
    s.push_str("# x re_u im_u re_v im_v\n");
    for k in 0..g.n {
        let (u, v) = (p.u[k], p.v[k]);
        s.push_str(&format!("{} {} {} {} {}\n", fmt_f(g.node(k)), fmt_f(u.re), fmt_f(u.im), fmt_f(v.re), fmt_f(v.im)));
    }
    if let Some(t) = &p.trailer {
        s.push_str(&format!(
            "# residual_max={} h11_norm={} h21_norm={} failures={}\n",
            fmt_f(t.residual_max),
            fmt_f(t.h11_norm),
            fmt_f(t.h21_norm),
            t.failures
        ));
    }
    s
}

pub fn parse_potential(text: &str) -> Result<PotentialFile> {
    let mut it = lines(text);
    let (hl, header) = it.next().ok_or_else(|| Error::input("empty potential file"))?;
    let body = header
        .strip_prefix("# manakov-potential")
        .ok_or_else(|| Error::input(format!("line {hl}: expected '# manakov-potential' header")))?;
    let map = parse_pairs(body, hl)?;
    let epsilon = Epsilon::parse(get(&map, "epsilon", hl)?)?;
    let grid = XGrid::new(get_f64(&map, "xmin", hl)?, get_f64(&map, "xmax", hl)?, get_usize(&map, "n", hl)?)?;
    let (mut u, mut v) = (Vec::with_capacity(grid.n), Vec::with_capacity(grid.n));
    let mut trailer = None;
    for (ln, l) in it {
        if let Some(c) = l.strip_prefix('#') {
            let c = c.trim();
            if c.starts_with("residual_max=") {
                let m = parse_pairs(c, ln)?;
                trailer = Some(ReconstructionTrailer {
                    residual_max: get_f64(&m, "residual_max", ln)?,
                    h11_norm: get_f64(&m, "h11_norm", ln)?,
                    h21_norm: get_f64(&m, "h21_norm", ln)?,
                    failures: m.get("failures").map_or(Ok(0), |f| {
                        f.parse().map_err(|_| Error::input(format!("line {ln}: bad failure count '{f}'")))
                    })?,
                });
            }
            continue;
        }
        if u.len() == grid.n {
            return Err(Error::input(format!("line {ln}: more than n={} data rows", grid.n)));
        }
        let r = numeric_row(l, ln, &[5])?;
        check_node(r[0], grid.node(u.len()), grid.h(), ln)?;
        u.push(C64::new(r[1], r[2]));
        v.push(C64::new(r[3], r[4]));
    }
    if u.len() != grid.n {
        return Err(Error::input(format!("potential file has {} rows, header says n={}", u.len(), grid.n)));
    }
    Ok(PotentialFile { grid, epsilon, u, v, trailer })
}

/// Parameters of an evolution already applied to the stored data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionStamp {
    pub t: f64,
    pub flow: FlowTag,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFile {
    pub data: ScatteringData,
    pub evolution: Option<EvolutionStamp>,
}

pub fn format_scattering(f: &ScatteringFile) -> String {
    let d = &f.data;
    let g = &d.lambda_grid;
    let mut s = format!(
        "# manakov-scattering epsilon={} n={} lambda_max={} n_discrete={} left={} n_left_discrete={}",
        d.epsilon.label(),
        g.n,
        fmt_f(g.lambda_max),
        d.discrete.len(),
        u8::from(d.left.is_some()),
        d.left.as_ref().map_or(0, |l| l.discrete.len())
    );
    if let Some(e) = &f.evolution {
        s.push_str(&format!(" t={} flow={} kappa={}", fmt_f(e.t), e.flow, fmt_f(e.kappa)));
    }
    s.push('\n');
    s.push_str("# lambda re_rho1 im_rho1 re_rho2 im_rho2");
    if d.left.is_some() {
        s.push_str(" re_left1 im_left1 re_left2 im_left2");
    }
    s.push('\n');
    for k in 0..g.n {
        let (a, b) = (d.rho1[k], d.rho2[k]);
        s.push_str(&format!("{} {} {} {} {}", fmt_f(g.node(k)), fmt_f(a.re), fmt_f(a.im), fmt_f(b.re), fmt_f(b.im)));
        if let Some(l) = &d.left {
            let (a, b) = (l.rho1[k], l.rho2[k]);
            s.push_str(&format!(" {} {} {} {}", fmt_f(a.re), fmt_f(a.im), fmt_f(b.re), fmt_f(b.im)));
        }
        s.push('\n');
    }
    let empty = DiscreteSpectrum::default();
    let left_disc = d.left.as_ref().map_or(&empty, |l| &l.discrete);
    for (title, spec) in [("", &d.discrete), ("reflected ", left_disc)] {
        if !spec.is_empty() {
            s.push_str(&format!("# {title}re_z im_z re_C1 im_C1 re_C2 im_C2\n"));
        }
        for (z, c) in spec.eigenvalues.iter().zip(&spec.norming_constants) {
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                fmt_f(z.re),
                fmt_f(z.im),
                fmt_f(c[0].re),
                fmt_f(c[0].im),
                fmt_f(c[1].re),
                fmt_f(c[1].im)
            ));
        }
    }
    s
}

pub fn parse_scattering(text: &str) -> Result<ScatteringFile> {
    let mut it = lines(text);
    let (hl, header) = it.next().ok_or_else(|| Error::input("empty scattering file"))?;
    let body = header
        .strip_prefix("# manakov-scattering")
        .ok_or_else(|| Error::input(format!("line {hl}: expected '# manakov-scattering' header")))?;
    let map = parse_pairs(body, hl)?;
    let epsilon = Epsilon::parse(get(&map, "epsilon", hl)?)?;
    let grid = LambdaGrid::new(get_f64(&map, "lambda_max", hl)?, get_usize(&map, "n", hl)?)?;
    let n_discrete = get_usize(&map, "n_discrete", hl)?;
    let has_left = match map.get("left").map(String::as_str) {
        None | Some("0") => false,
        Some("1") => true,
        Some(o) => return Err(Error::input(format!("line {hl}: left={o} must be 0 or 1"))),
    };
    let n_left_discrete = if map.contains_key("n_left_discrete") { get_usize(&map, "n_left_discrete", hl)? } else { 0 };
    if n_left_discrete > 0 && !has_left {
        return Err(Error::input(format!("line {hl}: n_left_discrete={n_left_discrete} without left coefficients")));
    }
    let evolution = match map.get("t") {
        None => None,
        Some(_) => Some(EvolutionStamp {
            t: get_f64(&map, "t", hl)?,
            flow: get(&map, "flow", hl)?.parse()?,
            kappa: get_f64(&map, "kappa", hl)?,
        }),
    };
    if epsilon == Epsilon::Defocusing && n_discrete + n_left_discrete > 0 {
        return Err(Error::input("defocusing data cannot carry eigenvalues"));
    }
    let width = if has_left { 9 } else { 5 };
    let mut d = ScatteringData::zero(grid, epsilon);
    let mut left = has_left.then(|| LeftCoefficients {
        rho1: Vec::with_capacity(grid.n),
        rho2: Vec::with_capacity(grid.n),
        discrete: DiscreteSpectrum::default(),
    });
    let mut left_disc = DiscreteSpectrum::default();
    d.rho1.clear();
    d.rho2.clear();
    for (ln, l) in it {
        if l.starts_with('#') {
            continue;
        }
        if d.rho1.len() < grid.n {
            let r = numeric_row(l, ln, &[width])?;
            check_node(r[0], grid.node(d.rho1.len()), grid.h(), ln)?;
            d.rho1.push(C64::new(r[1], r[2]));
            d.rho2.push(C64::new(r[3], r[4]));
            if let Some(lc) = left.as_mut() {
                lc.rho1.push(C64::new(r[5], r[6]));
                lc.rho2.push(C64::new(r[7], r[8]));
            }
        } else {
            let spec = if d.discrete.len() < n_discrete {
                &mut d.discrete
            } else if left_disc.len() < n_left_discrete {
                &mut left_disc
            } else {
                return Err(Error::input(format!(
                    "line {ln}: unexpected row after {} + {n_discrete} + {n_left_discrete} records",
                    grid.n
                )));
            };
            let r = numeric_row(l, ln, &[6])?;
            let z = C64::new(r[0], r[1]);
            if !(z.im > 0.0) {
                return Err(Error::input(format!("line {ln}: eigenvalue {z} is not in the upper half-plane")));
            }
            spec.eigenvalues.push(z);
            spec.norming_constants.push([C64::new(r[2], r[3]), C64::new(r[4], r[5])]);
        }
    }
    if d.rho1.len() != grid.n || d.discrete.len() != n_discrete || left_disc.len() != n_left_discrete {
        return Err(Error::input(format!(
            "scattering file has {} lambda rows and {} + {} eigenvalues, header says {} and {n_discrete} + {n_left_discrete}",
            d.rho1.len(),
            d.discrete.len(),
            left_disc.len(),
            grid.n
        )));
    }
    if let Some(l) = left.as_mut() {
        l.discrete = left_disc;
    }
    d.left = left;
    Ok(ScatteringFile { data: d, evolution })
}

/// Write via a temporary file in the target directory and rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::from(e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn read_potential(path: &Path) -> Result<PotentialFile> {
    parse_potential(&read_text(path)?).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn write_potential(path: &Path, p: &PotentialFile) -> Result<()> {
    write_atomic(path, &format_potential(p))
}

pub fn read_scattering(path: &Path) -> Result<ScatteringFile> {
    parse_scattering(&read_text(path)?).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn write_scattering(path: &Path, f: &ScatteringFile) -> Result<()> {
    write_atomic(path, &format_scattering(f))
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Sum of three Gaussian bumps with random centres, widths and complex
/// amplitudes; `amplitude` bounds the modulus of each bump.
pub fn random_potential(grid: XGrid, epsilon: Epsilon, seed: u64, amplitude: f64) -> Result<GridPotential> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = grid.x_max - grid.x_min;
    let mid = 0.5 * (grid.x_max + grid.x_min);
    let bumps: Vec<(f64, f64, C64, C64)> = (0..3)
        .map(|_| {
            let c = mid + span * rng.random_range(-0.1..0.1);
            let w = rng.random_range(0.6..1.5);
            let mut amp = || C64::from_polar(amplitude * rng.random_range(0.2..1.0), rng.random_range(0.0..std::f64::consts::TAU));
            (c, w, amp(), amp())
        })
        .collect();
    GridPotential::from_fn(grid, epsilon, |x| {
        bumps.iter().fold((C64::default(), C64::default()), |(u, v), &(c, w, a, b)| {
            let g = (-((x - c) / w).powi(2)).exp();
            (u + a * g, v + b * g)
        })
    })
}

/// Case classification with its evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub case: CaseTag,
    pub min_abs_s11: f64,
    pub at_lambda: f64,
    pub n_eigenvalues: usize,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.case {
            CaseTag::I => "I",
            CaseTag::II => "II",
            CaseTag::III => "III",
        };
        write!(
            f,
            "case {name}: min |s11| on the real line = {:.6e} at lambda = {:.6}, {} eigenvalue(s)",
            self.min_abs_s11, self.at_lambda, self.n_eigenvalues
        )
    }
}

pub fn classify(tm: &TransitionMatrix, spectrum: &DiscreteSpectrum, tol_zero: f64) -> Classification {
    let (min_abs_s11, at_lambda) = tm.min_abs_s11();
    let case = if min_abs_s11 < tol_zero {
        CaseTag::III
    } else if !spectrum.is_empty() {
        CaseTag::II
    } else {
        CaseTag::I
    };
    Classification { case, min_abs_s11, at_lambda, n_eigenvalues: spectrum.len() }
}

/// Result of the direct transform. `data` is `None` in Case III, where
/// the reflection coefficients do not exist on the whole line.
#[derive(Debug, Clone)]
pub struct DirectOutcome {
    pub tm: TransitionMatrix,
    pub spectrum: DiscreteSpectrum,
    pub classification: Classification,
    pub data: Option<ScatteringData>,
}

pub fn run_direct(pot: &GridPotential, cfg: &RunConfig) -> Result<DirectOutcome> {
    let grid = cfg.lambda_grid()?;
    let tm = compute_transition_matrix(pot, &grid)?;
    let opts = SpectrumOptions { tol_zero: cfg.tol_zero, ..SpectrumOptions::default() };
    let region = Rect::default_for(grid.lambda_max, SPECTRUM_DELTA);
    let spectrum = find_discrete_spectrum(pot, region, &opts)?;
    let classification = classify(&tm, &spectrum, cfg.tol_zero);
    match (cfg.case, classification.case) {
        (CaseChoice::I, CaseTag::II) => {
            return Err(Error::case(format!("--case I requested but the potential has {} eigenvalue(s)", spectrum.len())))
        }
        (CaseChoice::I | CaseChoice::II, CaseTag::III) => {
            return Err(Error::case(format!("{classification}; a spectral singularity requires --case III")))
        }
        _ => {}
    }
    let data = if classification.case == CaseTag::III || cfg.case == CaseChoice::III {
        None
    } else {
        let mut d = reflection_coefficients(&tm, cfg.tol_zero)?;
        attach_discrete_spectrum(&mut d, pot, spectrum.clone(), region, &opts)?;
        Some(d)
    };
    Ok(DirectOutcome { tm, spectrum, classification, data })
}

/// Inverse transform for the configured case; Case III works from the
/// potential because the circle data come from its cut-off pieces.
pub fn run_inverse_case3(pot: &GridPotential, grid: &XGrid, cfg: &RunConfig) -> Result<ReconstructedPotential> {
    let aug = prepare_case3(pot, &cfg.lambda_grid()?, cfg.tol_zero, &cfg.case3())?;
    solve_case3(&aug, grid, &cfg.solver())
}

/// `(||a - b||, ||b||)` for the combined `(u, v)` norm `H^{i,j}`.
pub fn profile_error(a: (&[C64], &[C64]), b: (&[C64], &[C64]), grid: &XGrid, i: u32, j: u32) -> Result<(f64, f64)> {
    let du: Vec<C64> = a.0.iter().zip(b.0).map(|(x, y)| x - y).collect();
    let dv: Vec<C64> = a.1.iter().zip(b.1).map(|(x, y)| x - y).collect();
    let e = weighted_sobolev_norm(&du, grid, i, j)?.hypot(weighted_sobolev_norm(&dv, grid, i, j)?);
    let n = weighted_sobolev_norm(b.0, grid, i, j)?.hypot(weighted_sobolev_norm(b.1, grid, i, j)?);
    Ok((e, n))
}

fn relative(e: f64, n: f64) -> f64 {
    if n > 0.0 {
        e / n
    } else {
        e
    }
}

/// Files written and the exit status a command asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub status: i32,
}

impl Outcome {
    fn ok(files: Vec<PathBuf>) -> Self {
        Self { files, status: 0 }
    }
}

fn stem(path: Option<&Path>, seed: u64) -> String {
    match path {
        Some(p) => {
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("input");
            name.strip_suffix(".txt").unwrap_or(name).to_string()
        }
        None => format!("random-{seed}"),
    }
}

/// Input potential: the given file, or a seeded random one on the
/// configured x-grid.
pub fn load_potential(input: Option<&Path>, cfg: &RunConfig) -> Result<GridPotential> {
    match input {
        Some(p) => {
            let f = read_potential(p)?;
            cfg.check_epsilon(f.epsilon, &p.display().to_string())?;
            f.into_potential()
        }
        None => random_potential(cfg.x_grid()?, cfg.epsilon.unwrap_or(Epsilon::Defocusing), cfg.seed, 0.8),
    }
}

fn io(e: std::io::Error) -> Error {
    Error::input(format!("cannot write report: {e}"))
}

pub fn cmd_direct(input: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    let pot = load_potential(input, cfg)?;
    let d = run_direct(&pot, cfg)?;
    writeln!(out, "{}", d.classification).map_err(io)?;
    writeln!(out, "unitarity residual = {:.3e}", d.tm.unitarity_defect()).map_err(io)?;
    writeln!(out, "det S deviation    = {:.3e}", d.tm.det_defect()).map_err(io)?;
    for (z, c) in d.spectrum.eigenvalues.iter().zip(&d.spectrum.norming_constants) {
        writeln!(out, "eigenvalue {z:.10}  C = ({:.6e}, {:.6e})", c[0], c[1]).map_err(io)?;
    }
    let data = d.data.ok_or_else(|| {
        Error::case(format!("{}; scattering data are not defined on the whole real line", d.classification))
    })?;
    let path = cfg.out.join(format!("{}.scattering.txt", stem(input, cfg.seed)));
    write_scattering(&path, &ScatteringFile { data, evolution: None })?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(Outcome::ok(vec![path]))
}

fn report_reconstruction(r: &ReconstructedPotential, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "max solver residual = {:.3e}", r.residual_max).map_err(io)?;
    for s in &r.sobolev {
        writeln!(out, "H^{{{},{}}} norm = {:.6e} (refinement ratio {:.4})", s.i, s.j, s.norm_value, s.refinement_ratio).map_err(io)?;
    }
    if !r.failures.is_empty() {
        writeln!(out, "{} node(s) failed; first at x = {}: {}", r.failures.len(), r.failures[0].0, r.failures[0].1).map_err(io)?;
    }
    Ok(())
}

pub fn cmd_inverse(input: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    if cfg.case == CaseChoice::III {
        return Err(Error::input("Case III reconstruction needs the potential; use roundtrip --case III"));
    }
    let f = read_scattering(input)?;
    cfg.check_epsilon(f.data.epsilon, &input.display().to_string())?;
    if cfg.case == CaseChoice::I && !f.data.discrete.is_empty() {
        return Err(Error::case("--case I requested but the data carry eigenvalues"));
    }
    let r = reconstruct_profile_with(&f.data, &cfg.x_grid()?, &cfg.solver())?;
    report_reconstruction(&r, out)?;
    let path = cfg.out.join(format!("{}.potential.txt", stem(Some(input), cfg.seed)));
    write_potential(&path, &PotentialFile::from_reconstruction(&r))?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(Outcome { files: vec![path], status: if r.failures.is_empty() { 0 } else { 3 } })
}

/// Errors and timings of a direct-inverse round trip.
#[derive(Debug, Clone)]
pub struct RoundTrip {
    pub case: CaseTag,
    pub reconstruction: ReconstructedPotential,
    pub l2_error: f64,
    pub h11_error: f64,
    pub direct_seconds: f64,
    pub inverse_seconds: f64,
}

/// Direct then inverse on the potential's own grid.
pub fn run_roundtrip(pot: &GridPotential, cfg: &RunConfig) -> Result<RoundTrip> {
    let t0 = Instant::now();
    let d = run_direct(pot, cfg)?;
    let direct_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (case, reconstruction) = match d.data {
        Some(data) => (d.classification.case, reconstruct_profile_with(&data, &pot.grid, &cfg.solver())?),
        None => (CaseTag::III, run_inverse_case3(pot, &pot.grid, cfg)?),
    };
    let inverse_seconds = t1.elapsed().as_secs_f64();
    let (l2_error, h11_error) = if reconstruction.failures.is_empty() {
        let a = (reconstruction.u.as_slice(), reconstruction.v.as_slice());
        let b = (pot.u.as_slice(), pot.v.as_slice());
        let (e0, n0) = profile_error(a, b, &pot.grid, 0, 0)?;
        let (e1, n1) = profile_error(a, b, &pot.grid, 1, 1)?;
        (relative(e0, n0), relative(e1, n1))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RoundTrip { case, reconstruction, l2_error, h11_error, direct_seconds, inverse_seconds })
}

pub fn cmd_roundtrip(input: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    let pot = load_potential(input, cfg)?;
    let rt = run_roundtrip(&pot, cfg)?;
    writeln!(out, "case {:?}", rt.case).map_err(io)?;
    writeln!(out, "direct  {:.3} s", rt.direct_seconds).map_err(io)?;
    writeln!(out, "inverse {:.3} s", rt.inverse_seconds).map_err(io)?;
    report_reconstruction(&rt.reconstruction, out)?;
    writeln!(out, "relative L2 error      = {:.6e}", rt.l2_error).map_err(io)?;
    writeln!(out, "relative H^{{1,1}} error = {:.6e}", rt.h11_error).map_err(io)?;
    let path = cfg.out.join(format!("{}.roundtrip.txt", stem(input, cfg.seed)));
    write_potential(&path, &PotentialFile::from_reconstruction(&rt.reconstruction))?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    let pass = rt.l2_error < cfg.max_error;
    writeln!(out, "{} (bound {:.1e})", if pass { "within bound" } else { "ERROR ABOVE BOUND" }, cfg.max_error).map_err(io)?;
    Ok(Outcome { files: vec![path], status: if pass { 0 } else { 3 } })
}

pub fn cmd_evolve(input: &Path, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    let f = read_scattering(input)?;
    cfg.check_epsilon(f.data.epsilon, &input.display().to_string())?;
    let kappa = cfg.kappa();
    let evolved = evolve_scattering(&f.data, cfg.t, cfg.flow, kappa)?;
    let t_total = match f.evolution {
        None => cfg.t,
        Some(prev) if prev.flow == cfg.flow && prev.kappa == kappa => prev.t + cfg.t,
        Some(prev) => {
            return Err(Error::input(format!(
                "input was evolved with flow={} kappa={}; cannot stack flow={} kappa={kappa}",
                prev.flow, prev.kappa, cfg.flow
            )))
        }
    };
    writeln!(out, "flow {} kappa = {kappa} t = {} (total {t_total})", cfg.flow, cfg.t).map_err(io)?;
    let path = cfg.out.join(format!("{}.evolved.txt", stem(Some(input), cfg.seed)));
    let stamp = EvolutionStamp { t: t_total, flow: cfg.flow, kappa };
    write_scattering(&path, &ScatteringFile { data: evolved.data, evolution: Some(stamp) })?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(Outcome::ok(vec![path]))
}

pub fn cmd_spectrum(input: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    let pot = load_potential(input, cfg)?;
    let grid = cfg.lambda_grid()?;
    let tm = compute_transition_matrix(&pot, &grid)?;
    let opts = SpectrumOptions { tol_zero: cfg.tol_zero, ..SpectrumOptions::default() };
    let spectrum = find_discrete_spectrum(&pot, Rect::default_for(grid.lambda_max, SPECTRUM_DELTA), &opts)?;
    writeln!(out, "{}", classify(&tm, &spectrum, cfg.tol_zero)).map_err(io)?;
    let mut text = String::from("# re_z im_z re_C1 im_C1 re_C2 im_C2\n");
    for (z, c) in spectrum.eigenvalues.iter().zip(&spectrum.norming_constants) {
        writeln!(out, "eigenvalue {z:.12}").map_err(io)?;
        text.push_str(&format!(
            "{} {} {} {} {} {}\n",
            fmt_f(z.re),
            fmt_f(z.im),
            fmt_f(c[0].re),
            fmt_f(c[0].im),
            fmt_f(c[1].re),
            fmt_f(c[1].im)
        ));
    }
    let path = cfg.out.join(format!("{}.spectrum.txt", stem(input, cfg.seed)));
    write_atomic(&path, &text)?;
    writeln!(out, "wrote {}", path.display()).map_err(io)?;
    Ok(Outcome::ok(vec![path]))
}

/// Numbers printed by `diagnose`.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub classification: Classification,
    pub unitarity: f64,
    pub det: f64,
    pub symmetry: SymmetryReport,
    /// `H^{0,2}` of `(rho1, rho2)` on the lambda grid, when defined.
    pub rho_h02: Option<SobolevReport>,
    /// `H^{2,0}` of the input potential.
    pub potential_h2: SobolevReport,
}

fn combined_report(a: &[C64], b: &[C64], grid: &XGrid, i: u32, j: u32) -> Result<SobolevReport> {
    let ra = sobolev_report(a, grid, i, j)?;
    let rb = sobolev_report(b, grid, i, j)?;
    let norm_value = ra.norm_value.hypot(rb.norm_value);
    let coarse = (ra.norm_value / ra.refinement_ratio).hypot(rb.norm_value / rb.refinement_ratio);
    let refinement_ratio = if coarse > 0.0 && coarse.is_finite() { norm_value / coarse } else { 1.0 };
    Ok(SobolevReport { i, j, norm_value, refinement_ratio })
}

pub fn run_diagnostics(pot: &GridPotential, cfg: &RunConfig) -> Result<Diagnostics> {
    let relaxed = RunConfig { case: CaseChoice::Auto, ..cfg.clone() };
    let d = run_direct(pot, &relaxed)?;
    let rho_h02 = match &d.data {
        Some(data) => Some(combined_report(&data.rho1, &data.rho2, &data.lambda_grid.as_xgrid(), 0, 2)?),
        None => None,
    };
    Ok(Diagnostics {
        classification: d.classification,
        unitarity: d.tm.unitarity_defect(),
        det: d.tm.det_defect(),
        symmetry: verify_symmetries(&d.tm, pot.epsilon),
        rho_h02,
        potential_h2: combined_report(&pot.u, &pot.v, &pot.grid, 2, 0)?,
    })
}

pub fn cmd_diagnose(input: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome> {
    cfg.validate()?;
    let pot = load_potential(input, cfg)?;
    let dg = run_diagnostics(&pot, cfg)?;
    writeln!(out, "{}", dg.classification).map_err(io)?;
    writeln!(out, "unitarity residual = {:.3e}", dg.unitarity).map_err(io)?;
    writeln!(out, "det S deviation    = {:.3e}", dg.det).map_err(io)?;
    writeln!(out, "symmetry deviation = {:.3e}", dg.symmetry.max()).map_err(io)?;
    if let Some(r) = dg.rho_h02 {
        writeln!(out, "H^{{0,2}} norm of rho = {:.6e} (refinement ratio {:.4})", r.norm_value, r.refinement_ratio).map_err(io)?;
    }
    let r = dg.potential_h2;
    writeln!(out, "H^2 norm of potential = {:.6e} (refinement ratio {:.4})", r.norm_value, r.refinement_ratio).map_err(io)?;
    let mut files = Vec::new();
    let wants_case3 = dg.classification.case == CaseTag::III || cfg.case == CaseChoice::III;
    if wants_case3 && pot.epsilon == Epsilon::Focusing {
        let aug = prepare_case3(&pot, &cfg.lambda_grid()?, cfg.tol_zero, &cfg.case3())?;
        let (right, left) = aug.matching();
        writeln!(out, "augmented contour: S_inf = {:.6}, {} nodes", aug.s_inf(), aug.contour.len()).map_err(io)?;
        writeln!(out, "cut points x_left = {:.6}, x_right = {:.6}", aug.cut.x_left, aug.cut.x_right).map_err(io)?;
        writeln!(out, "junction residual right = {:.3e}, left = {:.3e}", right.max(), left.max()).map_err(io)?;
        let x = aug.cut.switch_point();
        writeln!(out, "min positivity minor at x = {x:.4}: {:.3e}", aug.min_positivity_minor(x)).map_err(io)?;
        let mut buf = Vec::new();
        aug.dump(x, &mut buf)?;
        let path = cfg.out.join(format!("{}.contour.txt", stem(input, cfg.seed)));
        write_atomic(&path, &String::from_utf8_lossy(&buf))?;
        writeln!(out, "wrote {}", path.display()).map_err(io)?;
        files.push(path);
    }
    Ok(Outcome::ok(files))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GridPotential {
        random_potential(XGrid::new(-6.0, 6.0, 97).unwrap(), Epsilon::Focusing, 7, 0.5).unwrap()
    }

    #[test]
    fn potential_text_round_trip_is_exact() {
        let p = PotentialFile::from_potential(&sample());
        assert_eq!(parse_potential(&format_potential(&p)).unwrap(), p);
        let with_trailer = PotentialFile {
            trailer: Some(ReconstructionTrailer { residual_max: 1e-12, h11_norm: 1.5, h21_norm: f64::NAN, failures: 0 }),
            ..p.clone()
        };
        let back = parse_potential(&format_potential(&with_trailer)).unwrap();
        assert_eq!(back.u, p.u);
        assert!(back.trailer.unwrap().h21_norm.is_nan());
    }

    #[test]
    fn scattering_text_round_trip_is_exact() {
        let g = LambdaGrid::new(3.0, 16).unwrap();
        let mut d = ScatteringData::zero(g, Epsilon::Focusing);
        for k in 0..g.n {
            d.rho1[k] = C64::new(0.1 * k as f64, -1.0 / 3.0);
            d.rho2[k] = C64::new(f64::MIN_POSITIVE, 1e300);
        }
        d.discrete.eigenvalues.push(C64::new(0.25, 0.5));
        d.discrete.norming_constants.push([C64::new(1.0, 2.0), C64::new(-3.0, 0.1)]);
        let mirrored = DiscreteSpectrum { eigenvalues: vec![C64::new(-0.25, 0.5)], norming_constants: vec![[C64::new(0.5, 0.0), C64::new(0.0, 1.0)]] };
        d.left = Some(LeftCoefficients { rho1: d.rho2.clone(), rho2: d.rho1.clone(), discrete: mirrored });
        let f = ScatteringFile { data: d, evolution: Some(EvolutionStamp { t: 0.5, flow: FlowTag::SASA_SATSUMA, kappa: -8.0 }) };
        assert_eq!(parse_scattering(&format_scattering(&f)).unwrap(), f);
    }

    #[test]
    fn malformed_files_are_input_errors() {
        let good = format_potential(&PotentialFile::from_potential(&sample()));
        let bad_header = good.replacen("manakov-potential", "something", 1);
        let truncated: String = good.lines().take(10).map(|l| format!("{l}\n")).collect();
        let bad_number = good.replacen("e-", "q-", 1);
        for text in [bad_header, truncated, bad_number, String::new()] {
            assert_eq!(parse_potential(&text).unwrap_err().exit_code(), 2);
        }
        let defocusing_eig = "# manakov-scattering epsilon=-1 n=4 lambda_max=1 n_discrete=1\n";
        assert_eq!(parse_scattering(defocusing_eig).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        for cfg in [
            RunConfig { tol_zero: 0.0, ..RunConfig::default() },
            RunConfig { lambda_max: -1.0, ..RunConfig::default() },
            RunConfig { n_lambda: 1000, ..RunConfig::default() },
            RunConfig { tol_residual: f64::NAN, ..RunConfig::default() },
        ] {
            assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn case_choice_parses() {
        assert_eq!("iii".parse::<CaseChoice>().unwrap(), CaseChoice::III);
        assert_eq!("Auto".parse::<CaseChoice>().unwrap(), CaseChoice::Auto);
        assert!("IV".parse::<CaseChoice>().is_err());
    }

    #[test]
    fn random_potential_is_seeded() {
        let g = XGrid::new(-5.0, 5.0, 64).unwrap();
        let a = random_potential(g, Epsilon::Defocusing, 3, 1.0).unwrap();
        assert_eq!(a, random_potential(g, Epsilon::Defocusing, 3, 1.0).unwrap());
        assert_ne!(a, random_potential(g, Epsilon::Defocusing, 4, 1.0).unwrap());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
