//! Jost solutions, transition matrix, reflection coefficients and discrete
//! spectrum of a sampled potential.
//!
//! The x-problem is integrated by transfer matrices: on each cell the
//! potential is replaced by its midpoint average and the cell matrix
//! `exp((i lambda sigma + U) h)` is evaluated in closed form. The matrix
//! `i lambda sigma + U` leaves the span of `e1` and `(0, u*, v*)` invariant,
//! where it squares to a multiple of the identity, and acts as `i lambda` on
//! the orthogonal direction `(0, -v, u)`.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_core::{Complex3x3, Epsilon, GridPotential, LambdaGrid, XGrid, C64, I, ONE, ZERO};

/// Which end the Jost solution is normalized at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    PlusInfinity,
    MinusInfinity,
}

/// Normalized Jost solution `m(x, lambda)` on every node of the grid.
#[derive(Debug, Clone)]
pub struct JostSolution {
    pub normalization: Side,
    pub lambda: C64,
    pub values: Vec<Complex3x3>,
}

impl JostSolution {
    /// Largest `|det m(x) - 1|` over the grid.
    pub fn det_defect(&self) -> f64 {
        self.values.iter().map(|m| (m.det() - ONE).norm()).fold(0.0, f64::max)
    }
}

/// S(lambda) and T(lambda) = S(lambda)^-1 on a lambda grid.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    pub lambda_grid: LambdaGrid,
    pub s: Vec<Complex3x3>,
    pub t: Vec<Complex3x3>,
    pub epsilon: Epsilon,
}

impl TransitionMatrix {
    /// Largest `| |s11|^2 + eps (|s21|^2 + |s31|^2) - 1 |` over the grid.
    pub fn unitarity_defect(&self) -> f64 {
        let e = self.epsilon.value();
        self.s
            .iter()
            .map(|s| (s[(0, 0)].norm_sqr() + e * (s[(1, 0)].norm_sqr() + s[(2, 0)].norm_sqr()) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|det S - 1|` over the grid.
    pub fn det_defect(&self) -> f64 {
        self.s.iter().map(|s| (s.det() - ONE).norm()).fold(0.0, f64::max)
    }

    pub fn s11(&self) -> Vec<C64> {
        self.s.iter().map(|s| s[(0, 0)]).collect()
    }

    pub fn min_abs_s11(&self) -> (f64, f64) {
        self.s
            .iter()
            .enumerate()
            .map(|(k, s)| (s[(0, 0)].norm(), self.lambda_grid.node(k)))
            .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
    }
}

/// Simple zeros of s11 in the upper half-plane with their norming data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscreteSpectrum {
    pub eigenvalues: Vec<C64>,
    /// `C_i = c_i / s11'(z_i)`.
    pub norming_constants: Vec<[C64; 2]>,
}

impl DiscreteSpectrum {
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Reflection coefficients for the left normalization,
/// `-t21 / t11` and `-t31 / t11`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftCoefficients {
    pub rho1: Vec<C64>,
    pub rho2: Vec<C64>,
    /// Eigenvalues and norming constants of the reflected potential
    /// `-U(-x)`; empty unless a spectrum search filled them in.
    pub discrete: DiscreteSpectrum,
}

/// Continuous and discrete scattering data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringData {
    pub lambda_grid: LambdaGrid,
    pub rho1: Vec<C64>,
    pub rho2: Vec<C64>,
    pub discrete: DiscreteSpectrum,
    pub epsilon: Epsilon,
    /// Present when the data came from a direct pass with access to T.
    pub left: Option<LeftCoefficients>,
}

impl ScatteringData {
    pub fn zero(lambda_grid: LambdaGrid, epsilon: Epsilon) -> Self {
        Self {
            lambda_grid,
            rho1: vec![ZERO; lambda_grid.n],
            rho2: vec![ZERO; lambda_grid.n],
            discrete: DiscreteSpectrum::default(),
            epsilon,
            left: None,
        }
    }

    /// Data of the reflected potential `-U(-x)`, available when the left
    /// coefficients carry a matching discrete spectrum. The reflected
    /// reflection coefficients are `-rho_left(-lambda)`.
    pub fn reflected(&self) -> Option<ScatteringData> {
        let left = self.left.as_ref()?;
        if left.discrete.len() != self.discrete.len() {
            return None;
        }
        let flip = |r: &[C64]| -> Vec<C64> { r.iter().rev().map(|z| -z).collect() };
        Some(ScatteringData {
            lambda_grid: self.lambda_grid,
            rho1: flip(&left.rho1),
            rho2: flip(&left.rho2),
            discrete: left.discrete.clone(),
            epsilon: self.epsilon,
            left: Some(LeftCoefficients { rho1: flip(&self.rho1), rho2: flip(&self.rho2), discrete: self.discrete.clone() }),
        })
    }

    /// Largest `|rho1|^2 + |rho2|^2`.
    pub fn sup_rho_sq(&self) -> f64 {
        self.rho1.iter().zip(&self.rho2).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).fold(0.0, f64::max)
    }
}

/// `cosh(k h)` and `sinh(k h) / (k h)` as functions of `z = k^2 h^2`.
fn cosh_sinhc(z: C64) -> (C64, C64) {
    if z.norm() < 1.0 {
        let mut c = ONE;
        let mut s = ONE;
        // term = z^m / (2m)!
        let mut term = ONE;
        for m in 1..40 {
            let mf = m as f64;
            term = term * z / ((2.0 * mf - 1.0) * (2.0 * mf));
            c += term;
            s += term / (2.0 * mf + 1.0);
            if term.norm() < 1e-18 {
                break;
            }
        }
        (c, s)
    } else {
        let k = z.sqrt();
        (k.cosh(), k.sinh() / k)
    }
}

/// `(cosh(k h) - sinh(k h)/(k h)) / (k h)^2` as a series in `z = k^2 h^2`.
fn q_series(z: C64) -> C64 {
    // sum_{m >= 1} 2m z^{m-1} / (2m+1)!
    let mut q = ZERO;
    let mut zp = ONE;
    let mut f = 6.0;
    for m in 1..40 {
        let mf = m as f64;
        let t = zp * (2.0 * mf / f);
        q += t;
        if t.norm() < 1e-18 {
            break;
        }
        zp *= z;
        f *= (2.0 * mf + 2.0) * (2.0 * mf + 3.0);
    }
    q
}

/// Closed-form `exp((i lambda sigma + U) h)` for one cell, together with its
/// derivative in `lambda` when requested.
pub fn cell_propagator(lambda: C64, u: C64, v: C64, eps: Epsilon, h: f64) -> Complex3x3 {
    cell_propagator_impl(lambda, u, v, eps, h, false).0
}

/// Cell propagator and its lambda-derivative.
pub fn cell_propagator_d(lambda: C64, u: C64, v: C64, eps: Epsilon, h: f64) -> (Complex3x3, Complex3x3) {
    cell_propagator_impl(lambda, u, v, eps, h, true)
}

fn cell_propagator_impl(lambda: C64, u: C64, v: C64, eps: Epsilon, h: f64, want_d: bool) -> (Complex3x3, Complex3x3) {
    let e = eps.value();
    let n2 = u.norm_sqr() + v.norm_sqr();
    let k2 = -(lambda * lambda) - e * n2;
    let z = k2 * h * h;
    let (ch, shc) = cosh_sinhc(z);
    let c = ch;
    let sk = shc * h; // sinh(k h) / k
    let phase = (I * lambda * h).exp();
    let il = I * lambda;

    let a = c - il * sk;
    let d = c + il * sk;
    let mut p = Complex3x3::zero();
    p[(0, 0)] = a;
    p[(0, 1)] = sk * u;
    p[(0, 2)] = sk * v;
    p[(1, 0)] = -sk * u.conj() * e;
    p[(2, 0)] = -sk * v.conj() * e;
    let (t, f) = if n2 > 1e-300 {
        let f = [[C64::from(u.norm_sqr()), u.conj() * v], [v.conj() * u, C64::from(v.norm_sqr())]];
        ((d - phase) / n2, Some(f))
    } else {
        (ZERO, None)
    };
    p[(1, 1)] = phase;
    p[(2, 2)] = phase;
    if let Some(f) = f {
        p[(1, 1)] += t * f[0][0];
        p[(1, 2)] = t * f[0][1];
        p[(2, 1)] = t * f[1][0];
        p[(2, 2)] += t * f[1][1];
    }
    if !p.is_finite() {
        let a_mat = (Complex3x3::sigma().scale(il) + Complex3x3::potential(u, v, eps)).scale(C64::from(h));
        p = expm3(&a_mat);
    }
    if !want_d {
        return (p, Complex3x3::zero());
    }

    // d/dlambda with dk/dlambda = -lambda / k.
    let q = if z.norm() < 1.0 { q_series(z) } else { (c - shc) / z };
    let dc = -lambda * h * sk;
    // d(sinh(kh)/k) = -lambda (h cosh - sinh/k) / k^2 = -lambda h^3 q
    let dsk = -lambda * h * h * h * q;
    let da = dc - I * sk - il * dsk;
    let dd = dc + I * sk + il * dsk;
    let dphase = I * h * phase;
    let mut dp = Complex3x3::zero();
    dp[(0, 0)] = da;
    dp[(0, 1)] = dsk * u;
    dp[(0, 2)] = dsk * v;
    dp[(1, 0)] = -dsk * u.conj() * e;
    dp[(2, 0)] = -dsk * v.conj() * e;
    dp[(1, 1)] = dphase;
    dp[(2, 2)] = dphase;
    if let Some(f) = f {
        let dt = (dd - dphase) / n2;
        dp[(1, 1)] += dt * f[0][0];
        dp[(1, 2)] = dt * f[0][1];
        dp[(2, 1)] = dt * f[1][0];
        dp[(2, 2)] += dt * f[1][1];
    }
    (p, dp)
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
pub fn expm3(a: &Complex3x3) -> Complex3x3 {
    let norm = a.m.iter().map(|r| r.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a.scale(C64::from(0.5f64.powi(s)));
    let mut term = Complex3x3::identity();
    let mut sum = Complex3x3::identity();
    for k in 1..30 {
        term = (term * scaled).scale(C64::from(1.0 / k as f64));
        sum += term;
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

/// Cell-wise view of a potential used by every integrator.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub grid: XGrid,
    pub epsilon: Epsilon,
    cells: Vec<(C64, C64)>,
}

impl Stepper {
    pub fn new(pot: &GridPotential) -> Self {
        Self { grid: pot.grid, epsilon: pot.epsilon, cells: pot.cell_values() }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    fn prop(&self, k: usize, lambda: C64, h: f64) -> Complex3x3 {
        let (u, v) = self.cells[k];
        cell_propagator(lambda, u, v, self.epsilon, h)
    }

    /// Product of cell propagators over `cells`, rightmost cell leftmost
    /// factor (the psi-frame transfer matrix).
    pub fn transfer(&self, lambda: C64, cells: Range<usize>) -> Complex3x3 {
        let h = self.grid.h();
        let mut q = Complex3x3::identity();
        for k in cells {
            q = self.prop(k, lambda, h) * q;
        }
        q
    }

    /// Transition matrix of the potential restricted to nodes `from..`,
    /// i.e. of the cut-off potential vanishing left of `grid.node(from)`.
    pub fn s_matrix_from(&self, lambda: f64, from: usize) -> Complex3x3 {
        let l = C64::from(lambda);
        // Cells where U vanishes identically propagate freely; leave them out
        // of the product so the free problem gives S = I exactly.
        let live = |k: &usize| self.cells[*k] != (ZERO, ZERO);
        let Some(first) = (from..self.n_cells()).find(live) else {
            return Complex3x3::identity();
        };
        let last = (first..self.n_cells()).rev().find(live).unwrap_or(first);
        let q = self.transfer(l, first..last + 1);
        let xr = self.grid.node(last + 1);
        let xl = self.grid.node(first);
        // e^{-i l x_R sigma} Q e^{i l x_L sigma}
        let left = Complex3x3::diag((I * l * xr).exp(), (-I * l * xr).exp(), (-I * l * xr).exp());
        let right = Complex3x3::diag((-I * l * xl).exp(), (I * l * xl).exp(), (I * l * xl).exp());
        left * q * right
    }

    /// `T = S^{-1}` from the product of inverse cell propagators, which
    /// avoids amplifying the rounding in S by its norm.
    pub fn t_matrix_from(&self, lambda: f64, from: usize) -> Complex3x3 {
        let l = C64::from(lambda);
        let live = |k: &usize| self.cells[*k] != (ZERO, ZERO);
        let Some(first) = (from..self.n_cells()).find(live) else {
            return Complex3x3::identity();
        };
        let last = (first..self.n_cells()).rev().find(live).unwrap_or(first);
        let h = self.grid.h();
        let mut q = Complex3x3::identity();
        for k in first..=last {
            q = q * self.prop(k, l, -h);
        }
        let xr = self.grid.node(last + 1);
        let xl = self.grid.node(first);
        let left = Complex3x3::diag((I * l * xl).exp(), (-I * l * xl).exp(), (-I * l * xl).exp());
        let right = Complex3x3::diag((-I * l * xr).exp(), (I * l * xr).exp(), (I * l * xr).exp());
        left * q * right
    }

    pub fn s_matrix(&self, lambda: f64) -> Complex3x3 {
        self.s_matrix_from(lambda, 0)
    }

    /// Full Jost matrix on all nodes.
    pub fn jost(&self, lambda: C64, side: Side) -> Result<JostSolution> {
        let n = self.grid.n;
        let h = self.grid.h();
        let mut values = vec![Complex3x3::identity(); n];
        let il = I * lambda;
        match side {
            Side::MinusInfinity => {
                // m_{k+1} = P_k m_k e^{-i lambda h sigma}
                let d = Complex3x3::diag((il * h).exp(), (-il * h).exp(), (-il * h).exp());
                for k in 0..n - 1 {
                    values[k + 1] = self.prop(k, lambda, h) * values[k] * d;
                }
            }
            Side::PlusInfinity => {
                let d = Complex3x3::diag((-il * h).exp(), (il * h).exp(), (il * h).exp());
                for k in (0..n - 1).rev() {
                    values[k] = self.prop(k, lambda, -h) * values[k + 1] * d;
                }
            }
        }
        if let Some(k) = values.iter().position(|m| !m.is_finite()) {
            return Err(Error::numerical(format!(
                "Jost solution overflowed at x = {} for lambda = {lambda}; shrink |Im lambda| or the domain",
                self.grid.node(k)
            )));
        }
        Ok(JostSolution { normalization: side, lambda, values })
    }

    /// First column of m^- (analytic in the upper half-plane) from node
    /// `from` (where it equals e1) to every later node.
    pub fn minus_col1(&self, lambda: C64, from: usize) -> Vec<[C64; 3]> {
        let h = self.grid.h();
        let ph = (I * lambda * h).exp();
        let mut out = Vec::with_capacity(self.grid.n - from);
        let mut m = [ONE, ZERO, ZERO];
        out.push(m);
        for k in from..self.n_cells() {
            let p = self.prop(k, lambda, h);
            let w = p.mul_vec(m);
            m = [w[0] * ph, w[1] * ph, w[2] * ph];
            out.push(m);
        }
        out
    }

    /// Columns 2 and 3 of m^+ (analytic in the upper half-plane) on nodes
    /// `to..n`, integrated from the right end.
    pub fn plus_cols23(&self, lambda: C64, to: usize) -> Vec<[[C64; 3]; 2]> {
        let n = self.grid.n;
        let h = self.grid.h();
        let ph = (I * lambda * h).exp();
        let mut out = vec![[[ZERO; 3]; 2]; n - to];
        let mut c2 = [ZERO, ONE, ZERO];
        let mut c3 = [ZERO, ZERO, ONE];
        out[n - 1 - to] = [c2, c3];
        for k in (to..n - 1).rev() {
            let p = self.prop(k, lambda, -h);
            let w2 = p.mul_vec(c2);
            let w3 = p.mul_vec(c3);
            c2 = [w2[0] * ph, w2[1] * ph, w2[2] * ph];
            c3 = [w3[0] * ph, w3[1] * ph, w3[2] * ph];
            out[k - to] = [c2, c3];
        }
        out
    }

    /// Row 1 of (m^-)^{-1} (analytic in the lower half-plane) from node
    /// `from` (where it equals e1) to every later node.
    pub fn inv_minus_row1(&self, lambda: C64, from: usize) -> Vec<[C64; 3]> {
        let h = self.grid.h();
        let ph = (-I * lambda * h).exp();
        let mut out = Vec::with_capacity(self.grid.n - from);
        let mut r = [ONE, ZERO, ZERO];
        out.push(r);
        for k in from..self.n_cells() {
            let w = Complex3x3::vec_mul(r, &self.prop(k, lambda, -h));
            r = [w[0] * ph, w[1] * ph, w[2] * ph];
            out.push(r);
        }
        out
    }

    /// Rows 2 and 3 of (m^+)^{-1} (analytic in the lower half-plane) on
    /// nodes `to..n`, integrated from the right end.
    pub fn inv_plus_rows23(&self, lambda: C64, to: usize) -> Vec<[[C64; 3]; 2]> {
        let n = self.grid.n;
        let h = self.grid.h();
        let ph = (-I * lambda * h).exp();
        let mut out = vec![[[ZERO; 3]; 2]; n - to];
        let mut r2 = [ZERO, ONE, ZERO];
        let mut r3 = [ZERO, ZERO, ONE];
        out[n - 1 - to] = [r2, r3];
        for k in (to..n - 1).rev() {
            let p = self.prop(k, lambda, h);
            let w2 = Complex3x3::vec_mul(r2, &p);
            let w3 = Complex3x3::vec_mul(r3, &p);
            r2 = [w2[0] * ph, w2[1] * ph, w2[2] * ph];
            r3 = [w3[0] * ph, w3[1] * ph, w3[2] * ph];
            out[k - to] = [r2, r3];
        }
        out
    }

    /// s11 at any lambda in the closed upper half-plane, from the analytic
    /// column m^-_1 at the right end (where m^+ = I).
    pub fn s11(&self, lambda: C64) -> C64 {
        self.s11_from(lambda, 0)
    }

    /// s11 of the cut-off potential supported right of node `from`.
    pub fn s11_from(&self, lambda: C64, from: usize) -> C64 {
        let h = self.grid.h();
        let ph = (I * lambda * h).exp();
        let mut m = [ONE, ZERO, ZERO];
        for k in from..self.n_cells() {
            let w = self.prop(k, lambda, h).mul_vec(m);
            m = [w[0] * ph, w[1] * ph, w[2] * ph];
        }
        m[0]
    }

    /// s11 and its exact derivative for the discrete model.
    pub fn s11_with_derivative(&self, lambda: C64) -> (C64, C64) {
        let h = self.grid.h();
        let ph = (I * lambda * h).exp();
        let mut m = [ONE, ZERO, ZERO];
        let mut dm = [ZERO; 3];
        for &(u, v) in &self.cells {
            let (p, dp) = cell_propagator_d(lambda, u, v, self.epsilon, h);
            // G = P e^{i l h}, dG = (dP + i h P) e^{i l h}
            let pm = p.mul_vec(m);
            let dpm = dp.mul_vec(m);
            let pdm = p.mul_vec(dm);
            for j in 0..3 {
                dm[j] = (dpm[j] + I * h * pm[j] + pdm[j]) * ph;
                m[j] = pm[j] * ph;
            }
        }
        (m[0], dm[0])
    }
}

/// Jost solution on the whole grid, normalized at the chosen end.
///
/// Off the real axis only the analytic columns (m^-_1, m^+_2, m^+_3 in the
/// upper half-plane) are meaningful.
pub fn integrate_jost(pot: &GridPotential, lambda: C64, side: Side) -> Result<JostSolution> {
    Stepper::new(pot).jost(lambda, side)
}

/// S(lambda) at the right endpoint, `T = S^-1`, for every node of `grid`.
pub fn compute_transition_matrix(pot: &GridPotential, grid: &LambdaGrid) -> Result<TransitionMatrix> {
    let stepper = Stepper::new(pot);
    compute_transition_matrix_with(&stepper, grid, 0)
}

/// Transition matrix of the cut-off potential supported right of node `from`.
pub fn compute_transition_matrix_with(stepper: &Stepper, grid: &LambdaGrid, from: usize) -> Result<TransitionMatrix> {
    let tail = {
        let n = stepper.n_cells();
        let (a, b) = (stepper.cells[from.min(n - 1)], stepper.cells[n - 1]);
        (a.0.norm_sqr() + a.1.norm_sqr()).sqrt().max((b.0.norm_sqr() + b.1.norm_sqr()).sqrt())
    };
    if tail > 1e-6 && from == 0 {
        log::warn!("potential is not decayed at the grid ends (|U| = {tail:.3e})");
    }
    let pairs: Vec<(Complex3x3, Option<Complex3x3>)> = (0..grid.n)
        .into_par_iter()
        .map(|k| {
            let s = stepper.s_matrix_from(grid.node(k), from);
            let t = stepper.t_matrix_from(grid.node(k), from);
            (s, t.is_finite().then_some(t))
        })
        .collect();
    let mut s = Vec::with_capacity(grid.n);
    let mut t = Vec::with_capacity(grid.n);
    for (k, (sk, tk)) in pairs.into_iter().enumerate() {
        let tk = tk.ok_or_else(|| {
            Error::numerical(format!("singular transition matrix at lambda = {}", grid.node(k)))
        })?;
        if !sk.is_finite() {
            return Err(Error::numerical(format!("non-finite S at lambda = {}", grid.node(k))));
        }
        s.push(sk);
        t.push(tk);
    }
    Ok(TransitionMatrix { lambda_grid: *grid, s, t, epsilon: stepper.epsilon })
}

/// S(lambda) from `I + int e^{-i lambda y ad sigma} U m^- dy`, trapezoid in y.
/// Agrees with the endpoint formula to the order of the quadrature.
pub fn transition_matrix_integral(pot: &GridPotential, lambda: f64) -> Result<Complex3x3> {
    let jost = integrate_jost(pot, C64::from(lambda), Side::MinusInfinity)?;
    let h = pot.grid.h();
    let n = pot.grid.n;
    let mut acc = Complex3x3::zero();
    for k in 0..n {
        let y = pot.grid.node(k);
        let u = Complex3x3::potential(pot.u[k], pot.v[k], pot.epsilon);
        let integrand = crate::grid_core::ad_sigma_exp(-I * lambda * y, &(u * jost.values[k]));
        let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        acc += integrand.scale(C64::from(w));
    }
    Ok(Complex3x3::identity() + acc)
}

/// Which entries of S fail the symmetry `S = J T^dagger J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryReport {
    /// `deviation[i][j] = max over lambda of |s_ij - J_i J_j conj(t_ji)|`.
    pub deviation: [[f64; 3]; 3],
}

impl SymmetryReport {
    pub fn max(&self) -> f64 {
        self.deviation.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }
}

/// Deviations of the nine relations `s_ij = J_i J_j t_ji*` over the grid.
pub fn verify_symmetries(tm: &TransitionMatrix, epsilon: Epsilon) -> SymmetryReport {
    let e = epsilon.value();
    let j = [1.0, e, e];
    let mut deviation = [[0.0; 3]; 3];
    for (s, t) in tm.s.iter().zip(&tm.t) {
        for a in 0..3 {
            for b in 0..3 {
                let d = (s[(a, b)] - t[(b, a)].conj() * (j[a] * j[b])).norm();
                deviation[a][b] = f64::max(deviation[a][b], d);
            }
        }
    }
    SymmetryReport { deviation }
}

/// Default zero tolerance for |s11|.
pub const TOL_ZERO: f64 = 1e-6;

/// rho_k = s_k1 / s11. Fails with a case violation when |s11| dips below
/// `tol_zero` somewhere on the grid (a spectral singularity).
pub fn reflection_coefficients(tm: &TransitionMatrix, tol_zero: f64) -> Result<ScatteringData> {
    let (min_s11, at) = tm.min_abs_s11();
    if min_s11 < tol_zero {
        return Err(Error::case(format!(
            "|s11| = {min_s11:.3e} < {tol_zero:.1e} at lambda = {at:.6}: spectral singularity, use the augmented contour"
        )));
    }
    let mut rho1 = Vec::with_capacity(tm.s.len());
    let mut rho2 = Vec::with_capacity(tm.s.len());
    let mut l1 = Vec::with_capacity(tm.s.len());
    let mut l2 = Vec::with_capacity(tm.s.len());
    let mut left_ok = true;
    for (s, t) in tm.s.iter().zip(&tm.t) {
        rho1.push(s[(1, 0)] / s[(0, 0)]);
        rho2.push(s[(2, 0)] / s[(0, 0)]);
        let t11 = t[(0, 0)];
        left_ok &= t11.norm() >= tol_zero;
        l1.push(-t[(1, 0)] / t11);
        l2.push(-t[(2, 0)] / t11);
    }
    Ok(ScatteringData {
        lambda_grid: tm.lambda_grid,
        rho1,
        rho2,
        discrete: DiscreteSpectrum::default(),
        epsilon: tm.epsilon,
        left: left_ok.then_some(LeftCoefficients { rho1: l1, rho2: l2, discrete: DiscreteSpectrum::default() }),
    })
}

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self { re_min, re_max, im_min, im_max }
    }

    /// `[-L, L] x [delta, L]`.
    pub fn default_for(lambda_max: f64, delta: f64) -> Self {
        Self::new(-lambda_max, lambda_max, delta, lambda_max)
    }

    fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    fn contains(&self, z: C64, pad: f64) -> bool {
        z.re >= self.re_min - pad && z.re <= self.re_max + pad && z.im >= self.im_min - pad && z.im <= self.im_max + pad
    }

    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re_min, self.im_min),
            C64::new(self.re_max, self.im_min),
            C64::new(self.re_max, self.im_max),
            C64::new(self.re_min, self.im_max),
        ]
    }
}

/// Knobs for the zero search.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumOptions {
    pub tol_zero: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Rectangles smaller than this in both directions go to Newton.
    pub leaf_size: f64,
    /// Below this size a winding number above one is reported as a
    /// multiple zero.
    pub min_size: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { tol_zero: TOL_ZERO, newton_tol: 1e-12, newton_max_iter: 50, leaf_size: 0.05, min_size: 1e-7 }
    }
}

fn arg_step(a: C64, b: C64) -> f64 {
    (b / a).arg()
}

/// Winding number of `f` around the boundary of `rect`.
fn winding_number(f: &(dyn Fn(C64) -> C64 + Sync), rect: &Rect) -> Result<i64> {
    let corners = rect.corners();
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let len = (b - a).norm();
        let scale = rect.width().max(rect.height());
        let n0 = ((len / scale) * 48.0).ceil().max(8.0) as usize;
        let pts: Vec<C64> = (0..=n0).map(|k| a + (b - a) * (k as f64 / n0 as f64)).collect();
        let vals: Vec<C64> = pts.par_iter().map(|&z| f(z)).collect();
        let mut edge_total = 0.0;
        for k in 0..n0 {
            edge_total += refine_arg(f, pts[k], pts[k + 1], vals[k], vals[k + 1], 0)?;
        }
        total += edge_total;
    }
    Ok((total / std::f64::consts::TAU).round() as i64)
}

fn refine_arg(f: &(dyn Fn(C64) -> C64 + Sync), za: C64, zb: C64, fa: C64, fb: C64, depth: u32) -> Result<f64> {
    if fa.norm() < 1e-300 || fb.norm() < 1e-300 || !fa.is_finite() || !fb.is_finite() {
        return Err(Error::numerical("s11 vanished or overflowed on a search contour"));
    }
    let d = arg_step(fa, fb);
    if d.abs() < 0.5 || depth > 24 {
        return Ok(d);
    }
    let zm = (za + zb) * 0.5;
    let fm = f(zm);
    Ok(refine_arg(f, za, zm, fa, fm, depth + 1)? + refine_arg(f, zm, zb, fm, fb, depth + 1)?)
}

fn newton(stepper: &Stepper, z0: C64, opts: &SpectrumOptions) -> Option<(C64, C64)> {
    let mut z = z0;
    for _ in 0..opts.newton_max_iter {
        let (f, df) = stepper.s11_with_derivative(z);
        if df.norm() == 0.0 || !df.is_finite() {
            return None;
        }
        let step = f / df;
        z -= step;
        if step.norm() <= opts.newton_tol * z.norm().max(1.0) {
            let (_, df) = stepper.s11_with_derivative(z);
            return Some((z, df));
        }
    }
    None
}

fn search(
    stepper: &Stepper,
    f: &(dyn Fn(C64) -> C64 + Sync),
    rect: Rect,
    opts: &SpectrumOptions,
    depth: u32,
    out: &mut Vec<(C64, C64)>,
) -> Result<()> {
    let w = match winding_number(f, &rect) {
        Ok(w) => w,
        Err(_) if depth < 60 => {
            // A zero sits on the boundary: nudge the rectangle.
            let dx = 1e-3 * rect.width().max(1e-9);
            let dy = 1e-3 * rect.height().max(1e-9);
            let nudged = Rect::new(rect.re_min - dx, rect.re_max + 0.7 * dx, rect.im_min, rect.im_max + 0.7 * dy);
            return search(stepper, f, nudged, opts, depth + 1, out);
        }
        Err(e) => return Err(e),
    };
    if w < 0 {
        return Err(Error::numerical(format!("negative winding number {w} on {rect:?}")));
    }
    if w == 0 {
        return Ok(());
    }
    let small = rect.width() <= opts.leaf_size && rect.height() <= opts.leaf_size;
    if small && w == 1 {
        let centre = C64::new(0.5 * (rect.re_min + rect.re_max), 0.5 * (rect.im_min + rect.im_max));
        if let Some((z, d)) = newton(stepper, centre, opts) {
            if rect.contains(z, 1e-9) {
                out.push((z, d));
                return Ok(());
            }
        }
    }
    if rect.width() <= opts.min_size && rect.height() <= opts.min_size {
        return Err(Error::case(format!(
            "winding number {w} in a rectangle of size {:.1e} near {}+{}i: zero is not simple",
            rect.width(),
            rect.re_min,
            rect.im_min
        )));
    }
    // Split the longer side slightly off-centre so that symmetric
    // potentials do not put zeros on the cut.
    let children = if rect.width() >= rect.height() {
        let c = rect.re_min + 0.4937 * rect.width();
        [Rect::new(rect.re_min, c, rect.im_min, rect.im_max), Rect::new(c, rect.re_max, rect.im_min, rect.im_max)]
    } else {
        let c = rect.im_min + 0.4937 * rect.height();
        [Rect::new(rect.re_min, rect.re_max, rect.im_min, c), Rect::new(rect.re_min, rect.re_max, c, rect.im_max)]
    };
    let mut found = Vec::new();
    for child in children {
        search(stepper, f, child, opts, depth + 1, &mut found)?;
    }
    out.extend(found);
    Ok(())
}

/// Norming vector c with `m^-_1(x, z) = m^{++}(x, z) e^{2 i x z} c`, by
/// least squares over nodes around the bulk of the potential.
pub fn dependency_vector(stepper: &Stepper, z: C64, magnitude: &[f64]) -> Result<[C64; 2]> {
    let n = stepper.grid.n;
    let minus = stepper.minus_col1(z, 0);
    let plus = stepper.plus_cols23(z, 0);
    // nodes between the 20% and 80% quantiles of the L1 mass
    let mut cum = vec![0.0; n];
    for k in 1..n {
        cum[k] = cum[k - 1] + 0.5 * (magnitude[k] + magnitude[k - 1]);
    }
    let total = cum[n - 1];
    let (lo, hi) = if total > 0.0 {
        let lo = cum.iter().position(|&c| c >= 0.2 * total).unwrap_or(0);
        let hi = cum.iter().position(|&c| c >= 0.8 * total).unwrap_or(n - 1);
        (lo, hi.max(lo))
    } else {
        (n / 2, n / 2)
    };
    let stride = ((hi - lo) / 32).max(1);
    // normal equations A^H A c = A^H b
    let mut g = [[ZERO; 2]; 2];
    let mut r = [ZERO; 2];
    for k in (lo..=hi).step_by(stride) {
        let x = stepper.grid.node(k);
        let phase = (-2.0 * I * x * z).exp();
        let b = [minus[k][0] * phase, minus[k][1] * phase, minus[k][2] * phase];
        let a = plus[k];
        let w = 1.0 / (1.0 + b.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        for row in 0..3 {
            let ar = [a[0][row] * w, a[1][row] * w];
            let br = b[row] * w;
            for p in 0..2 {
                for q in 0..2 {
                    g[p][q] += ar[p].conj() * ar[q];
                }
                r[p] += ar[p].conj() * br;
            }
        }
    }
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if det.norm() < 1e-300 {
        return Err(Error::numerical(format!("cannot extract norming vector at z = {z}")));
    }
    Ok([(r[0] * g[1][1] - g[0][1] * r[1]) / det, (g[0][0] * r[1] - g[1][0] * r[0]) / det])
}

/// Zeros of s11 inside `region` by argument-principle subdivision and
/// Newton refinement, with norming constants.
pub fn find_discrete_spectrum(pot: &GridPotential, region: Rect, opts: &SpectrumOptions) -> Result<DiscreteSpectrum> {
    if pot.epsilon == Epsilon::Defocusing {
        return Ok(DiscreteSpectrum::default());
    }
    if region.im_min <= 0.0 {
        return Err(Error::input("search region must lie in the open upper half-plane"));
    }
    let stepper = Stepper::new(pot);
    let f = |z: C64| stepper.s11(z);
    let mut found = Vec::new();
    search(&stepper, &f, region, opts, 0, &mut found)?;
    found.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    found.dedup_by(|a, b| (a.0 - b.0).norm() < 1e-9 * a.0.norm().max(1.0));
    let magnitude = pot.magnitude();
    let mut spec = DiscreteSpectrum::default();
    for (z, ds11) in found {
        let val = stepper.s11(z);
        if val.norm() > opts.tol_zero {
            return Err(Error::numerical(format!("refined zero {z} has |s11| = {:.3e}", val.norm())));
        }
        let c = dependency_vector(&stepper, z, &magnitude)?;
        spec.eigenvalues.push(z);
        spec.norming_constants.push([c[0] / ds11, c[1] / ds11]);
    }
    Ok(spec)
}

/// The potential `-U(-x)` on the mirrored grid. Its right scattering data
/// are the left scattering data of `pot` at `-lambda`.
pub fn reflect_potential(pot: &GridPotential) -> GridPotential {
    let grid = XGrid { x_min: -pot.grid.x_max, x_max: -pot.grid.x_min, n: pot.grid.n };
    let u = pot.u.iter().rev().map(|z| -z).collect();
    let v = pot.v.iter().rev().map(|z| -z).collect();
    GridPotential { grid, u, v, epsilon: pot.epsilon }
}

/// Attach `spectrum` to `data` and, when left coefficients are present, the
/// spectrum of the reflected potential searched in the mirrored `region`.
/// A reflected search that finds a different number of zeros leaves the
/// left spectrum empty.
pub fn attach_discrete_spectrum(
    data: &mut ScatteringData,
    pot: &GridPotential,
    spectrum: DiscreteSpectrum,
    region: Rect,
    opts: &SpectrumOptions,
) -> Result<()> {
    if let (Some(left), false) = (data.left.as_mut(), spectrum.is_empty()) {
        let mirrored = Rect::new(-region.re_max, -region.re_min, region.im_min, region.im_max);
        let reflected = find_discrete_spectrum(&reflect_potential(pot), mirrored, opts)?;
        if reflected.len() == spectrum.len() {
            left.discrete = reflected;
        } else {
            log::warn!(
                "reflected potential has {} eigenvalue(s), expected {}; left spectrum not attached",
                reflected.len(),
                spectrum.len()
            );
        }
    }
    data.discrete = spectrum;
    Ok(())
}
