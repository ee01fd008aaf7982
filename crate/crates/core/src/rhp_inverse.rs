//! Riemann-Hilbert inverse problem: contour, Cauchy projections, the
//! singular integral equation `mu = I + C+(mu W-) + C-(mu W+)` and the
//! reconstruction of the potential from `mu`.
//!
//! Only the first row of `mu` enters the reconstruction, and rows decouple
//! because the jump multiplies from the right, so profile reconstruction
//! solves for that row alone.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::direct_scattering::{DiscreteSpectrum, LeftCoefficients, ScatteringData, TransitionMatrix};
use crate::error::{Error, Result};
use crate::grid_core::{sobolev_report, Complex3x3, Epsilon, LambdaGrid, SobolevReport, XGrid, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Clockwise,
    CounterClockwise,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Clockwise => -1.0,
            Orientation::CounterClockwise => 1.0,
        }
    }
}

/// One piece of the contour. The real line is oriented left to right.
#[derive(Debug, Clone, PartialEq)]
pub enum Component {
    Line(LambdaGrid),
    Circle { center: C64, radius: f64, n: usize, orientation: Orientation },
}

impl Component {
    pub fn len(&self) -> usize {
        match self {
            Component::Line(g) => g.n,
            Component::Circle { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, k: usize) -> C64 {
        match self {
            Component::Line(g) => C64::from(g.node(k)),
            Component::Circle { center, radius, n, .. } => {
                center + C64::from_polar(*radius, 2.0 * PI * k as f64 / *n as f64)
            }
        }
    }

    /// Oriented quadrature weight `d lambda` at node `k`.
    pub fn weight(&self, k: usize) -> C64 {
        match self {
            Component::Line(g) => C64::from(g.h()),
            Component::Circle { radius, n, orientation, .. } => {
                let th = 2.0 * PI * k as f64 / *n as f64;
                I * C64::from_polar(*radius, th) * (2.0 * PI / *n as f64 * orientation.sign())
            }
        }
    }
}

/// Union of components with a flat node numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub components: Vec<Component>,
    offsets: Vec<usize>,
}

impl Contour {
    pub fn new(components: Vec<Component>) -> Self {
        let mut offsets = Vec::with_capacity(components.len() + 1);
        let mut acc = 0;
        for c in &components {
            offsets.push(acc);
            acc += c.len();
        }
        offsets.push(acc);
        Self { components, offsets }
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self, c: usize) -> std::ops::Range<usize> {
        self.offsets[c]..self.offsets[c + 1]
    }

    pub fn nodes(&self) -> Vec<C64> {
        self.components.iter().flat_map(|c| (0..c.len()).map(move |k| c.node(k))).collect()
    }

    pub fn weights(&self) -> Vec<C64> {
        self.components.iter().flat_map(|c| (0..c.len()).map(move |k| c.weight(k))).collect()
    }
}

/// `W+` and `W-` at every contour node, x-phases included.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpFactors {
    pub w_plus: Vec<Complex3x3>,
    pub w_minus: Vec<Complex3x3>,
}

impl JumpFactors {
    /// `(I - W-)^-1 (I + W+)` at node `k`.
    pub fn jump(&self, k: usize) -> Complex3x3 {
        let vm = Complex3x3::identity() - self.w_minus[k];
        let vm_inv = vm.inverse().unwrap_or_else(Complex3x3::zero);
        vm_inv * (Complex3x3::identity() + self.w_plus[k])
    }

    pub fn is_trivial(&self) -> bool {
        self.w_plus.iter().chain(&self.w_minus).all(|w| w.max_abs() == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseTag {
    I,
    II,
    III,
}

/// Which factorization the real-line jump uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// `W-` upper with `eps rho*`, `W+` lower with `rho`.
    Right,
    /// Opposite triangularity built from the left coefficients.
    Left,
    /// Right problem of the reflected potential at `-x`; `u(x) = -u'(-x)`.
    Reflected,
}

#[derive(Debug, Clone)]
pub struct ContourRHP {
    pub case_tag: CaseTag,
    pub contour: Contour,
    pub jump: JumpFactors,
    pub x: f64,
    pub normalization: Normalization,
}

/// Solution of the singular integral equation.
#[derive(Debug, Clone)]
pub struct BealsCoifmanSolution {
    pub mu: Vec<Complex3x3>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Circle radius and node count for the eigenvalue circles.
pub const CIRCLE_NODES: usize = 64;

/// Radius `min(Im z, half the distance to the nearest other eigenvalue) / 2`,
/// capped at 0.5.
pub fn circle_radii(eigs: &[C64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(eigs.len());
    for (i, z) in eigs.iter().enumerate() {
        let mut r = z.im;
        for (j, w) in eigs.iter().enumerate() {
            if i != j {
                r = r.min(0.5 * (z - w).norm());
            }
        }
        let r = (0.5 * r).min(0.5);
        if !(r > 1e-8) {
            return Err(Error::case(format!(
                "eigenvalue {z} is too close to the real axis or to another eigenvalue for disjoint circles"
            )));
        }
        out.push(r);
    }
    Ok(out)
}

fn line_factors(rho1: &[C64], rho2: &[C64], grid: &LambdaGrid, x: f64, eps: f64, normalization: Normalization) -> JumpFactors {
    let mut w_plus = Vec::with_capacity(grid.n);
    let mut w_minus = Vec::with_capacity(grid.n);
    for k in 0..grid.n {
        let l = grid.node(k);
        let up = C64::from_polar(1.0, -2.0 * l * x);
        let down = up.conj();
        let (a, b) = (rho1[k], rho2[k]);
        let lower = Complex3x3::lower(a * down, b * down);
        let upper = Complex3x3::upper(a.conj() * up * eps, b.conj() * up * eps);
        match normalization {
            Normalization::Right | Normalization::Reflected => {
                w_plus.push(lower);
                w_minus.push(upper);
            }
            Normalization::Left => {
                w_plus.push(upper);
                w_minus.push(lower);
            }
        }
    }
    JumpFactors { w_plus, w_minus }
}

/// Jump on the real line and on the eigenvalue circles at position `x`,
/// in the right normalization.
pub fn build_jump(data: &ScatteringData, x: f64) -> Result<ContourRHP> {
    build_rhp(data, x, Normalization::Right)
}

/// Contour problem in the requested normalization. The left one needs
/// `data.left` and no discrete spectrum.
pub fn build_rhp(data: &ScatteringData, x: f64, normalization: Normalization) -> Result<ContourRHP> {
    let grid = data.lambda_grid;
    if data.rho1.len() != grid.n || data.rho2.len() != grid.n {
        return Err(Error::input("reflection coefficient length does not match the lambda grid"));
    }
    if normalization == Normalization::Reflected {
        let refl = data.reflected().ok_or_else(|| Error::input("reflected data need left coefficients with their spectrum"))?;
        let mut rhp = build_rhp(&refl, -x, Normalization::Right)?;
        rhp.x = x;
        rhp.normalization = Normalization::Reflected;
        return Ok(rhp);
    }
    let eps = data.epsilon.value();
    let mut jump = match normalization {
        Normalization::Right | Normalization::Reflected => line_factors(&data.rho1, &data.rho2, &grid, x, eps, normalization),
        Normalization::Left => {
            let left = data.left.as_ref().ok_or_else(|| Error::input("left coefficients are not available"))?;
            if !data.discrete.is_empty() {
                return Err(Error::input("left normalization is only built for data without eigenvalues"));
            }
            line_factors(&left.rho1, &left.rho2, &grid, x, eps, normalization)
        }
    };
    let mut components = vec![Component::Line(grid)];
    let spec = &data.discrete;
    if spec.is_empty() {
        return Ok(ContourRHP { case_tag: CaseTag::I, contour: Contour::new(components), jump, x, normalization });
    }
    if data.epsilon == Epsilon::Defocusing {
        return Err(Error::case("defocusing data cannot carry eigenvalues"));
    }
    add_circles(&mut components, &mut jump, spec, x)?;
    Ok(ContourRHP { case_tag: CaseTag::II, contour: Contour::new(components), jump, x, normalization })
}

fn add_circles(components: &mut Vec<Component>, jump: &mut JumpFactors, spec: &DiscreteSpectrum, x: f64) -> Result<()> {
    let radii = circle_radii(&spec.eigenvalues)?;
    // circles around z_i: clockwise, lower jump C e^{2 i z x} / (lambda - z)
    for (i, &z) in spec.eigenvalues.iter().enumerate() {
        let comp = Component::Circle { center: z, radius: radii[i], n: CIRCLE_NODES, orientation: Orientation::Clockwise };
        let phase = (2.0 * I * z * x).exp();
        let [c1, c2] = spec.norming_constants[i];
        for k in 0..comp.len() {
            let l = comp.node(k);
            let f = phase / (l - z);
            jump.w_plus.push(Complex3x3::lower(c1 * f, c2 * f));
            jump.w_minus.push(Complex3x3::zero());
        }
        components.push(comp);
    }
    // mirror circles around z_i*: counterclockwise, upper jump
    for (i, &z) in spec.eigenvalues.iter().enumerate() {
        let zc = z.conj();
        let comp = Component::Circle { center: zc, radius: radii[i], n: CIRCLE_NODES, orientation: Orientation::CounterClockwise };
        let phase = (-2.0 * I * zc * x).exp();
        let [c1, c2] = spec.norming_constants[i];
        for k in 0..comp.len() {
            let l = comp.node(k);
            let f = phase / (l - zc);
            jump.w_plus.push(Complex3x3::zero());
            jump.w_minus.push(Complex3x3::upper(c1.conj() * f, c2.conj() * f));
        }
        components.push(comp);
    }
    Ok(())
}

/// Left-normalized real-line factors at `x` built from `T = S^-1`.
pub fn left_normalized_jump(tm: &TransitionMatrix, x: f64, tol_zero: f64) -> Result<JumpFactors> {
    let left = left_coefficients(tm, tol_zero)?;
    Ok(line_factors(&left.rho1, &left.rho2, &tm.lambda_grid, x, tm.epsilon.value(), Normalization::Left))
}

/// `-t21 / t11`, `-t31 / t11`.
pub fn left_coefficients(tm: &TransitionMatrix, tol_zero: f64) -> Result<LeftCoefficients> {
    let mut rho1 = Vec::with_capacity(tm.t.len());
    let mut rho2 = Vec::with_capacity(tm.t.len());
    for (k, t) in tm.t.iter().enumerate() {
        let t11 = t[(0, 0)];
        if t11.norm() < tol_zero {
            return Err(Error::case(format!(
                "|t11| = {:.3e} at lambda = {}: spectral singularity",
                t11.norm(),
                tm.lambda_grid.node(k)
            )));
        }
        rho1.push(-t[(1, 0)] / t11);
        rho2.push(-t[(2, 0)] / t11);
    }
    Ok(LeftCoefficients { rho1, rho2, discrete: DiscreteSpectrum::default() })
}

/// Smallest leading minor of `V + V^dagger` over the real-line nodes.
pub fn min_positivity_minor(rhp: &ContourRHP) -> f64 {
    let line = rhp.contour.range(0);
    let mut worst = f64::INFINITY;
    for k in line {
        let v = rhp.jump.jump(k);
        let h = v + v.dagger();
        let m1 = h[(0, 0)].re;
        let m2 = (h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)]).re;
        let m3 = h.det().re;
        worst = worst.min(m1).min(m2).min(m3);
    }
    worst
}

/// Raised-cosine taper equal to 1 on `|l| <= 0.9 L` and 0 at `|l| = L`.
fn window(l: f64, lmax: f64) -> f64 {
    let a = l.abs() / lmax;
    if a <= 0.9 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * (a - 0.9) / 0.1).cos())
    }
}

/// C+ on the real line for data sampled on a uniform symmetric grid.
///
/// The data are split into a rational tail `a/(l - i) + b/(l + i)` matching
/// the end values, whose projections are exact, and a remainder handled by
/// the discrete Hilbert transform `(H g)_j = sum_k g_k K(j - k)` with
/// `K(m) = 2 / (pi m)` for odd `m` and 0 otherwise.
pub struct LineProjector {
    n: usize,
    nodes: Vec<f64>,
    window: Vec<f64>,
    tail_inv: [[C64; 2]; 2],
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<C64>,
}

impl std::fmt::Debug for LineProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LineProjector").field("n", &self.n).finish()
    }
}

impl LineProjector {
    pub fn new(grid: &LambdaGrid) -> Self {
        let n = grid.n;
        let nodes = grid.nodes();
        let lmax = grid.lambda_max;
        let window = nodes.iter().map(|&l| window(l, lmax)).collect();
        let (a, b) = (nodes[0], nodes[n - 1]);
        let t = |l: f64| [ONE / (C64::from(l) - I), ONE / (C64::from(l) + I)];
        let (ta, tb) = (t(a), t(b));
        let det = ta[0] * tb[1] - ta[1] * tb[0];
        let tail_inv = [[tb[1] / det, -ta[1] / det], [-tb[0] / det, ta[0] / det]];
        let len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let mut kernel_hat = vec![ZERO; len];
        for m in (1..n).step_by(2) {
            let k = 2.0 / (PI * m as f64);
            kernel_hat[m] = C64::from(k);
            kernel_hat[len - m] = C64::from(-k);
        }
        fft.process(&mut kernel_hat);
        Self { n, nodes, window, tail_inv, fft, ifft, kernel_hat }
    }

    /// Plus boundary value of the Cauchy integral of `g`. The minus value is
    /// this minus `g`.
    pub fn plus(&self, g: &[C64]) -> Vec<C64> {
        let n = self.n;
        let (g0, g1) = (g[0], g[n - 1]);
        let alpha = self.tail_inv[0][0] * g0 + self.tail_inv[0][1] * g1;
        let beta = self.tail_inv[1][0] * g0 + self.tail_inv[1][1] * g1;
        let len = self.kernel_hat.len();
        let mut buf = vec![ZERO; len];
        let mut rem = vec![ZERO; n];
        for k in 0..n {
            let l = C64::from(self.nodes[k]);
            rem[k] = g[k] - alpha / (l - I) - beta / (l + I);
            buf[k] = rem[k] * self.window[k];
        }
        self.fft.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / len as f64;
        (0..n)
            .map(|k| {
                let l = C64::from(self.nodes[k]);
                0.5 * rem[k] + 0.5 * I * buf[k] * scale + beta / (l + I)
            })
            .collect()
    }
}

/// Cauchy projections on a contour made of one real line and circles.
#[derive(Debug)]
pub struct CauchyOperator {
    pub contour: Contour,
    nodes: Vec<C64>,
    weights: Vec<C64>,
    line: Vec<Option<LineProjector>>,
    /// Per circle component: dense C+ of the component on itself.
    circle_plus: Vec<Option<Vec<C64>>>,
}

impl CauchyOperator {
    pub fn new(contour: Contour) -> Self {
        let nodes = contour.nodes();
        let weights = contour.weights();
        let mut line = Vec::new();
        let mut circle_plus = Vec::new();
        for comp in &contour.components {
            match comp {
                Component::Line(g) => {
                    line.push(Some(LineProjector::new(g)));
                    circle_plus.push(None);
                }
                Component::Circle { n, orientation, .. } => {
                    line.push(None);
                    circle_plus.push(Some(circle_self_plus(*n, *orientation)));
                }
            }
        }
        Self { contour, nodes, weights, line, circle_plus }
    }

    /// `C+ f` at every node. Components with `active[c] == false` are
    /// treated as carrying zero data.
    pub fn plus(&self, f: &[C64], active: &[bool]) -> Vec<C64> {
        let mut out = vec![ZERO; f.len()];
        let nc = self.contour.components.len();
        for src in 0..nc {
            if !active[src] {
                continue;
            }
            let rs = self.contour.range(src);
            let fs = &f[rs.clone()];
            // self part
            let selfv = if let Some(lp) = &self.line[src] {
                lp.plus(fs)
            } else {
                let m = self.circle_plus[src].as_ref().expect("circle component");
                let n = fs.len();
                (0..n).map(|j| (0..n).map(|k| m[j * n + k] * fs[k]).sum()).collect()
            };
            for (o, v) in out[rs.clone()].iter_mut().zip(selfv) {
                *o += v;
            }
            // cross parts by the trapezoid rule
            let src_nodes = &self.nodes[rs.clone()];
            let fw: Vec<C64> = fs.iter().zip(&self.weights[rs.clone()]).map(|(a, w)| a * w / (2.0 * PI * I)).collect();
            for tgt in 0..nc {
                if tgt == src {
                    continue;
                }
                for t in self.contour.range(tgt) {
                    let zt = self.nodes[t];
                    let mut acc = ZERO;
                    for (s, fwk) in src_nodes.iter().zip(&fw) {
                        acc += fwk / (s - zt);
                    }
                    out[t] += acc;
                }
            }
        }
        out
    }
}

/// Dense C+ of a circle onto itself: the Fourier modes analytic on the
/// `+` side.
fn circle_self_plus(n: usize, orientation: Orientation) -> Vec<C64> {
    // nonnegative modes 0..n/2 are analytic inside
    let mut p = vec![ZERO; n * n];
    for j in 0..n {
        for k in 0..n {
            let d = 2.0 * PI * (j as f64 - k as f64) / n as f64;
            let s: C64 = (0..n / 2).map(|m| C64::from_polar(1.0, m as f64 * d)).sum::<C64>() / n as f64;
            p[j * n + k] = match orientation {
                Orientation::CounterClockwise => s,
                Orientation::Clockwise => {
                    if j == k {
                        ONE - s
                    } else {
                        -s
                    }
                }
            };
        }
    }
    p
}

/// Dense or matrix-free linear operator on complex vectors.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Vec<C64>;
}

/// Result of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres(op: &dyn LinearOperator, b: &[C64], x0: Vec<C64>, restart: usize, max_iter: usize, tol: f64) -> (Vec<C64>, SolveStats) {
    let n = op.dim();
    let bnorm = norm(b).max(1e-300);
    let mut x = x0;
    let mut total = 0;
    loop {
        let ax = op.apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol || total >= max_iter {
            return (x, SolveStats { iterations: total, residual: beta / bnorm, converged: beta / bnorm <= tol });
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::from(beta);
        let mut used = 0;
        for j in 0..m {
            let mut w = op.apply(&v[j]);
            for i in 0..=j {
                let hij = dot(&v[i], &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C64::from(wn);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                cs[j] = ONE;
                sn[j] = ZERO;
            } else {
                cs[j] = a / den;
                sn[j] = bb / den;
            }
            h[j][j] = C64::from(den);
            h[j + 1][j] = ZERO;
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            total += 1;
            if g[j + 1].norm() / bnorm <= tol * 0.5 || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wk| wk / wn).collect());
        }
        // back substitution
        let mut y = vec![ZERO; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&v[i]) {
                *xk += yi * vk;
            }
        }
        let _ = n;
    }
}

/// Assembles the operator column by column and solves with LU.
pub fn dense_solve(op: &dyn LinearOperator, b: &[C64]) -> Result<Vec<C64>> {
    let n = op.dim();
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut e = vec![ZERO; n];
    for j in 0..n {
        e[j] = ONE;
        let col = op.apply(&e);
        for i in 0..n {
            a[(i, j)] = col[i];
        }
        e[j] = ZERO;
    }
    let rhs = DVector::from_column_slice(b);
    a.lu()
        .solve(&rhs)
        .map(|x| x.iter().copied().collect())
        .ok_or_else(|| Error::numerical("singular system in dense solve"))
}

/// `phi -> phi - C+(phi (W- + W+)) + phi W+` acting on one row of `mu`.
pub struct RowOperator<'a> {
    pub cauchy: &'a CauchyOperator,
    pub jump: &'a JumpFactors,
    active: Vec<bool>,
}

impl<'a> RowOperator<'a> {
    pub fn new(cauchy: &'a CauchyOperator, jump: &'a JumpFactors) -> Self {
        let active = (0..cauchy.contour.components.len())
            .map(|c| cauchy.contour.range(c).any(|k| jump.w_plus[k].max_abs() > 0.0 || jump.w_minus[k].max_abs() > 0.0))
            .collect();
        Self { cauchy, jump, active }
    }
}

impl LinearOperator for RowOperator<'_> {
    fn dim(&self) -> usize {
        3 * self.cauchy.contour.len()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.cauchy.contour.len();
        let mut sum = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
        let mut out = x.to_vec();
        for k in 0..n {
            let phi = [x[3 * k], x[3 * k + 1], x[3 * k + 2]];
            let a = Complex3x3::vec_mul(phi, &(self.jump.w_minus[k] + self.jump.w_plus[k]));
            let b = Complex3x3::vec_mul(phi, &self.jump.w_plus[k]);
            for c in 0..3 {
                sum[c][k] = a[c];
                out[3 * k + c] += b[c];
            }
        }
        for (c, s) in sum.iter().enumerate() {
            let p = self.cauchy.plus(s, &self.active);
            for k in 0..n {
                out[3 * k + c] -= p[k];
            }
        }
        out
    }
}

/// Solver knobs.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    /// Dense LU fallback when the contour has at most this many nodes.
    pub dense_max_nodes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 500, restart: 100, dense_max_nodes: 512 }
    }
}

/// One row of `mu`, solved iteratively with a dense fallback.
pub fn solve_row(cauchy: &CauchyOperator, jump: &JumpFactors, row: usize, opts: &SolverOptions) -> Result<(Vec<[C64; 3]>, SolveStats)> {
    let n = cauchy.contour.len();
    let mut b = vec![ZERO; 3 * n];
    for k in 0..n {
        b[3 * k + row] = ONE;
    }
    if jump.is_trivial() {
        return Ok((to_rows(&b), SolveStats { iterations: 0, residual: 0.0, converged: true }));
    }
    let op = RowOperator::new(cauchy, jump);
    let (x, stats) = gmres(&op, &b, b.clone(), opts.restart, opts.max_iter, opts.tol);
    if stats.converged {
        return Ok((to_rows(&x), stats));
    }
    if n <= opts.dense_max_nodes {
        log::warn!("GMRES stalled at residual {:.2e}; using dense LU", stats.residual);
        let x = dense_solve(&op, &b)?;
        let r = residual(&op, &x, &b);
        return Ok((to_rows(&x), SolveStats { iterations: stats.iterations, residual: r, converged: r <= opts.tol }));
    }
    Err(Error::numerical(format!(
        "GMRES did not converge: residual {:.3e} after {} iterations",
        stats.residual, stats.iterations
    )))
}

fn residual(op: &dyn LinearOperator, x: &[C64], b: &[C64]) -> f64 {
    let ax = op.apply(x);
    let r: Vec<C64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
    norm(&r) / norm(b).max(1e-300)
}

fn to_rows(x: &[C64]) -> Vec<[C64; 3]> {
    x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Full `mu` (all three rows).
pub fn solve_beals_coifman(rhp: &ContourRHP) -> Result<BealsCoifmanSolution> {
    solve_beals_coifman_with(rhp, &SolverOptions::default())
}

pub fn solve_beals_coifman_with(rhp: &ContourRHP, opts: &SolverOptions) -> Result<BealsCoifmanSolution> {
    let cauchy = CauchyOperator::new(rhp.contour.clone());
    let n = rhp.contour.len();
    let mut mu = vec![Complex3x3::zero(); n];
    let mut residual_norm: f64 = 0.0;
    let mut iterations = 0;
    for row in 0..3 {
        let (r, stats) = solve_row(&cauchy, &rhp.jump, row, opts)?;
        for (m, v) in mu.iter_mut().zip(r) {
            m.m[row] = v;
        }
        residual_norm = residual_norm.max(stats.residual);
        iterations += stats.iterations;
    }
    Ok(BealsCoifmanSolution { mu, residual_norm, iterations })
}

/// `(u, v) = -(1/pi) int (mu (W+ + W-))_{12, 13}` over the contour.
fn reconstruct_from_row(row1: &[[C64; 3]], rhp: &ContourRHP) -> (C64, C64) {
    let weights = rhp.contour.weights();
    let mut acc = [ZERO; 2];
    for (k, phi) in row1.iter().enumerate() {
        let w = rhp.jump.w_plus[k] + rhp.jump.w_minus[k];
        let r = Complex3x3::vec_mul(*phi, &w);
        acc[0] += r[1] * weights[k];
        acc[1] += r[2] * weights[k];
    }
    let scale = if rhp.normalization == Normalization::Reflected { 1.0 / PI } else { -1.0 / PI };
    (acc[0] * scale, acc[1] * scale)
}

/// `u(x)`, `v(x)` from a solved `mu`.
pub fn reconstruct_potential(sol: &BealsCoifmanSolution, rhp: &ContourRHP) -> (C64, C64) {
    let row1: Vec<[C64; 3]> = sol.mu.iter().map(|m| m.m[0]).collect();
    reconstruct_from_row(&row1, rhp)
}

/// Solve for the first row only and reconstruct at `rhp.x`.
pub fn reconstruct_at(rhp: &ContourRHP, opts: &SolverOptions) -> Result<(C64, C64, SolveStats)> {
    let cauchy = CauchyOperator::new(rhp.contour.clone());
    let (row1, stats) = solve_row(&cauchy, &rhp.jump, 0, opts)?;
    let (u, v) = reconstruct_from_row(&row1, rhp);
    Ok((u, v, stats))
}

/// Potential reconstructed on an x-grid.
#[derive(Debug, Clone)]
pub struct ReconstructedPotential {
    pub grid: XGrid,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub epsilon: Epsilon,
    pub residual_max: f64,
    /// Nodes where the solve failed, with the reason. Their samples are NaN.
    pub failures: Vec<(f64, String)>,
    pub sobolev: Vec<SobolevReport>,
}

impl ReconstructedPotential {
    /// H^{i,1} norm reports of `(|u|^2 + |v|^2)^{1/2}`-combined samples,
    /// summed in quadrature over the two components.
    pub fn report(&self, i: u32) -> Option<SobolevReport> {
        self.sobolev.iter().copied().find(|r| r.i == i)
    }
}

/// Which normalization `reconstruct_profile` uses at `x`.
pub fn normalization_for(data: &ScatteringData, x: f64) -> Normalization {
    match &data.left {
        Some(_) if x < 0.0 && data.discrete.is_empty() => Normalization::Left,
        Some(l) if x < 0.0 && l.discrete.len() == data.discrete.len() => Normalization::Reflected,
        _ => Normalization::Right,
    }
}

/// Solve and reconstruct at every node of `grid`.
pub fn reconstruct_profile(data: &ScatteringData, grid: &XGrid) -> Result<ReconstructedPotential> {
    reconstruct_profile_with(data, grid, &SolverOptions::default())
}

pub fn reconstruct_profile_with(data: &ScatteringData, grid: &XGrid, opts: &SolverOptions) -> Result<ReconstructedPotential> {
    // The operator skeleton is shared per contour; only the jump depends on x.
    let right = CauchyOperator::new(build_rhp(data, 0.0, Normalization::Right)?.contour);
    let reflected = if (0..grid.n).any(|k| normalization_for(data, grid.node(k)) == Normalization::Reflected) {
        Some(CauchyOperator::new(build_rhp(data, 0.0, Normalization::Reflected)?.contour))
    } else {
        None
    };
    let results: Vec<Result<(C64, C64, f64)>> = (0..grid.n)
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            let rhp = build_rhp(data, x, normalization_for(data, x))?;
            let cauchy = match (rhp.normalization, &reflected) {
                (Normalization::Reflected, Some(c)) => c,
                _ => &right,
            };
            let (row1, stats) = solve_row(cauchy, &rhp.jump, 0, opts)?;
            let (u, v) = reconstruct_from_row(&row1, &rhp);
            Ok((u, v, stats.residual))
        })
        .collect();
    assemble_profile(grid, data.epsilon, results)
}

/// Collect per-node `(u, v, residual)` results into a profile; failed nodes
/// become NaN samples and disable the Sobolev reports.
pub fn assemble_profile(grid: &XGrid, epsilon: Epsilon, results: Vec<Result<(C64, C64, f64)>>) -> Result<ReconstructedPotential> {
    let mut u = Vec::with_capacity(grid.n);
    let mut v = Vec::with_capacity(grid.n);
    let mut failures = Vec::new();
    let mut residual_max: f64 = 0.0;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok((a, b, res)) => {
                u.push(a);
                v.push(b);
                residual_max = residual_max.max(res);
            }
            Err(e) => {
                let nan = C64::new(f64::NAN, f64::NAN);
                u.push(nan);
                v.push(nan);
                failures.push((grid.node(k), e.to_string()));
            }
        }
    }
    let mut sobolev = Vec::new();
    if failures.is_empty() {
        for i in [1, 2] {
            let ru = sobolev_report(&u, grid, i, 1)?;
            let rv = sobolev_report(&v, grid, i, 1)?;
            let norm_value = ru.norm_value.hypot(rv.norm_value);
            let coarse = (ru.norm_value / ru.refinement_ratio).hypot(rv.norm_value / rv.refinement_ratio);
            let refinement_ratio = if coarse > 0.0 { norm_value / coarse } else { 1.0 };
            sobolev.push(SobolevReport { i, j: 1, norm_value, refinement_ratio });
        }
    }
    Ok(ReconstructedPotential { grid: *grid, u, v, epsilon, residual_max, failures, sobolev })
}

/// Closed-form focusing one-soliton for eigenvalue `z = xi + i eta` and
/// norming vector `c`.
pub fn one_soliton(z: C64, c: [C64; 2], x: f64) -> (C64, C64) {
    let (xi, eta) = (z.re, z.im);
    let cn = (c[0].norm_sqr() + c[1].norm_sqr()).sqrt();
    let x0 = (cn / (2.0 * eta)).ln() / (2.0 * eta);
    let amp = -2.0 * I * C64::from_polar(1.0, -2.0 * xi * x) * (eta / (2.0 * eta * (x - x0)).cosh()) / cn;
    (amp * c[0].conj(), amp * c[1].conj())
}
