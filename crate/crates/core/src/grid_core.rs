//! Grids, sampled potentials, 3x3 complex matrix algebra and weighted
//! Sobolev norms.
//!
//! Everything here is immutable after construction.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Double precision complex number used throughout the crate.
pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Sign of the nonlinearity. `Focusing` is +1, `Defocusing` is -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Epsilon {
    Focusing,
    Defocusing,
}

impl Epsilon {
    pub fn value(self) -> f64 {
        match self {
            Epsilon::Focusing => 1.0,
            Epsilon::Defocusing => -1.0,
        }
    }

    /// Parses `+1`, `1`, `-1`, `focusing` or `defocusing`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "focusing" => Ok(Epsilon::Focusing),
            "-1" | "defocusing" => Ok(Epsilon::Defocusing),
            other => Err(Error::input(format!("epsilon must be +1 or -1, got `{other}`"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Epsilon::Focusing => "+1",
            Epsilon::Defocusing => "-1",
        }
    }
}

/// Dense 3x3 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex3x3 {
    pub m: [[C64; 3]; 3],
}

impl Default for Complex3x3 {
    fn default() -> Self {
        Self::zero()
    }
}

impl Complex3x3 {
    pub const fn zero() -> Self {
        Self { m: [[ZERO; 3]; 3] }
    }

    pub const fn identity() -> Self {
        Self {
            m: [[ONE, ZERO, ZERO], [ZERO, ONE, ZERO], [ZERO, ZERO, ONE]],
        }
    }

    pub const fn from_rows(m: [[C64; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn diag(a: C64, b: C64, c: C64) -> Self {
        let mut out = Self::zero();
        out.m[0][0] = a;
        out.m[1][1] = b;
        out.m[2][2] = c;
        out
    }

    /// sigma = diag(-1, 1, 1).
    pub fn sigma() -> Self {
        Self::diag(-ONE, ONE, ONE)
    }

    /// J = diag(1, eps, eps).
    pub fn j_eps(eps: Epsilon) -> Self {
        let e = C64::from(eps.value());
        Self::diag(ONE, e, e)
    }

    /// The potential matrix U for samples (u, v).
    pub fn potential(u: C64, v: C64, eps: Epsilon) -> Self {
        let e = eps.value();
        Self::from_rows([
            [ZERO, u, v],
            [-u.conj() * e, ZERO, ZERO],
            [-v.conj() * e, ZERO, ZERO],
        ])
    }

    /// Strictly lower matrix with `a`, `b` in the (2,1), (3,1) slots.
    pub fn lower(a: C64, b: C64) -> Self {
        let mut out = Self::zero();
        out.m[1][0] = a;
        out.m[2][0] = b;
        out
    }

    /// Strictly upper matrix with `a`, `b` in the (1,2), (1,3) slots.
    pub fn upper(a: C64, b: C64) -> Self {
        let mut out = Self::zero();
        out.m[0][1] = a;
        out.m[0][2] = b;
        out
    }

    pub fn col(&self, j: usize) -> [C64; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn set_col(&mut self, j: usize, c: [C64; 3]) {
        for (i, ci) in c.into_iter().enumerate() {
            self.m[i][j] = ci;
        }
    }

    pub fn det(&self) -> C64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Transposed cofactor matrix, so that `A * A.adjugate() = det(A) I`.
    pub fn adjugate(&self) -> Self {
        let m = &self.m;
        let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        Self::from_rows([
            [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
            [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
            [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
        ])
    }

    /// Closed-form inverse. Returns `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(d.inv()))
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[j][i].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |a, x| a.max(x.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }

    pub fn mul_vec(&self, v: [C64; 3]) -> [C64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Row vector times matrix.
    pub fn vec_mul(v: [C64; 3], m: &Self) -> [C64; 3] {
        let m = &m.m;
        [
            v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
            v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
            v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
        ]
    }
}

impl Index<(usize, usize)> for Complex3x3 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.m[i][j]
    }
}

impl IndexMut<(usize, usize)> for Complex3x3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.m[i][j]
    }
}

impl Mul for Complex3x3 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][0] * rhs.m[0][j] + self.m[i][1] * rhs.m[1][j] + self.m[i][2] * rhs.m[2][j];
            }
        }
        out
    }
}

impl Add for Complex3x3 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        out += rhs;
        out
    }
}

impl AddAssign for Complex3x3 {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += rhs.m[i][j];
            }
        }
    }
}

impl Sub for Complex3x3 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Complex3x3 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-ONE)
    }
}

/// `e^{t ad sigma} B`: entries (1,2), (1,3) pick up `e^{-2t}`, entries
/// (2,1), (3,1) pick up `e^{2t}`. With `t = i lambda x` this is the
/// x-dependence of every jump matrix.
pub fn ad_sigma_exp(t: C64, b: &Complex3x3) -> Complex3x3 {
    let up = (-2.0 * t).exp();
    let down = (2.0 * t).exp();
    let mut out = *b;
    out.m[0][1] *= up;
    out.m[0][2] *= up;
    out.m[1][0] *= down;
    out.m[2][0] *= down;
    out
}

/// Uniform grid on `[x_min, x_max]` with `n` nodes including both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl XGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::input(format!("x-grid needs at least 2 nodes, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::input(format!("x-grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k + 1 == self.n {
            self.x_max
        } else {
            self.x_min + k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let k = ((x - self.x_min) / self.h()).round();
        k.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Uniform grid on `[-lambda_max, lambda_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub lambda_max: f64,
    pub n: usize,
}

impl LambdaGrid {
    pub fn new(lambda_max: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::input(format!("lambda grid needs at least 4 nodes, got {n}")));
        }
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(Error::input(format!("lambda_max must be positive, got {lambda_max}")));
        }
        Ok(Self { lambda_max, n })
    }

    pub fn h(&self) -> f64 {
        2.0 * self.lambda_max / (self.n - 1) as f64
    }

    /// Nodes are symmetric about zero: `node(k) = -node(n - 1 - k)`.
    pub fn node(&self, k: usize) -> f64 {
        let half = (self.n - 1) as f64 / 2.0;
        (k as f64 - half) * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.node(k)).collect()
    }

    pub fn as_xgrid(&self) -> XGrid {
        XGrid { x_min: -self.lambda_max, x_max: self.lambda_max, n: self.n }
    }
}

/// Sampled potential (u, v) on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPotential {
    pub grid: XGrid,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub epsilon: Epsilon,
}

impl GridPotential {
    pub fn new(grid: XGrid, u: Vec<C64>, v: Vec<C64>, epsilon: Epsilon) -> Result<Self> {
        if u.len() != grid.n || v.len() != grid.n {
            return Err(Error::input(format!(
                "potential has {} / {} samples but the grid has {} nodes",
                u.len(),
                v.len(),
                grid.n
            )));
        }
        if let Some(k) = u.iter().chain(v.iter()).position(|z| !z.is_finite()) {
            return Err(Error::input(format!("non-finite potential sample at index {}", k % grid.n)));
        }
        Ok(Self { grid, u, v, epsilon })
    }

    pub fn from_fn(grid: XGrid, epsilon: Epsilon, f: impl Fn(f64) -> (C64, C64)) -> Result<Self> {
        let (u, v): (Vec<_>, Vec<_>) = grid.nodes().into_iter().map(f).unzip();
        Self::new(grid, u, v, epsilon)
    }

    pub fn zero(grid: XGrid, epsilon: Epsilon) -> Self {
        Self { grid, u: vec![ZERO; grid.n], v: vec![ZERO; grid.n], epsilon }
    }

    /// Pointwise magnitude sqrt(|u|^2 + |v|^2), the operator norm of U.
    pub fn magnitude(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt()).collect()
    }

    /// Trapezoid L1 norm of the operator norm of U.
    pub fn l1_norm(&self) -> f64 {
        trapezoid(&self.magnitude(), self.grid.h())
    }

    /// Trapezoid value of the integral of |u|^2 + |v|^2.
    pub fn mass(&self) -> f64 {
        let dens: Vec<f64> = self.u.iter().zip(&self.v).map(|(a, b)| a.norm_sqr() + b.norm_sqr()).collect();
        trapezoid(&dens, self.grid.h())
    }

    /// Midpoint (cell-averaged) samples, one per cell.
    pub fn cell_values(&self) -> Vec<(C64, C64)> {
        (0..self.grid.n - 1)
            .map(|k| ((self.u[k] + self.u[k + 1]) * 0.5, (self.v[k] + self.v[k + 1]) * 0.5))
            .collect()
    }

    /// Largest sample magnitude over the two end nodes.
    pub fn tail_magnitude(&self) -> f64 {
        let mag = self.magnitude();
        mag[0].max(mag[mag.len() - 1])
    }
}

/// Weighted Sobolev norm together with its grid-refinement ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevReport {
    pub i: u32,
    pub j: u32,
    pub norm_value: f64,
    /// Norm on the full grid divided by the norm on every other node.
    pub refinement_ratio: f64,
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    match f.len() {
        0 | 1 => 0.0,
        n => h * (f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1])),
    }
}

/// Complex trapezoid rule on a uniform grid.
pub fn trapezoid_c(f: &[C64], h: f64) -> C64 {
    match f.len() {
        0 | 1 => ZERO,
        n => (f[1..n - 1].iter().sum::<C64>() + (f[0] + f[n - 1]) * 0.5) * h,
    }
}

/// Second-order finite difference derivative of order `order` (0, 1 or 2),
/// centered inside and one-sided at both ends.
pub fn derivative(f: &[C64], h: f64, order: u32) -> Vec<C64> {
    let n = f.len();
    match order {
        0 => f.to_vec(),
        1 => {
            let mut d = vec![ZERO; n];
            if n < 3 {
                if n == 2 {
                    let s = (f[1] - f[0]) / h;
                    d.fill(s);
                }
                return d;
            }
            d[0] = (f[0] * -3.0 + f[1] * 4.0 - f[2]) / (2.0 * h);
            d[n - 1] = (f[n - 1] * 3.0 - f[n - 2] * 4.0 + f[n - 3]) / (2.0 * h);
            for k in 1..n - 1 {
                d[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
            }
            d
        }
        _ => {
            let mut d = vec![ZERO; n];
            if n < 4 {
                return d;
            }
            let h2 = h * h;
            d[0] = (f[0] * 2.0 - f[1] * 5.0 + f[2] * 4.0 - f[3]) / h2;
            d[n - 1] = (f[n - 1] * 2.0 - f[n - 2] * 5.0 + f[n - 3] * 4.0 - f[n - 4]) / h2;
            for k in 1..n - 1 {
                d[k] = (f[k + 1] - f[k] * 2.0 + f[k - 1]) / h2;
            }
            d
        }
    }
}

/// `(||f^(i)||^2 + ||x^j f||^2)^(1/2)` on a uniform grid, with the two
/// terms collapsing to one when `i = j = 0`. Weights up to `x^2` are
/// accepted here; [`h_ij_norm`] is the validated entry point.
pub fn weighted_sobolev_norm(f: &[C64], grid: &XGrid, i: u32, j: u32) -> Result<f64> {
    if f.len() != grid.n {
        return Err(Error::input(format!("{} samples on a {}-node grid", f.len(), grid.n)));
    }
    if i > 2 || j > 2 {
        return Err(Error::input(format!("unsupported Sobolev index ({i}, {j})")));
    }
    if f.iter().any(|z| !z.is_finite()) {
        return Err(Error::input("non-finite sample in Sobolev norm"));
    }
    let h = grid.h();
    let weighted: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(k, z)| grid.node(k).powi(2 * j as i32) * z.norm_sqr())
        .collect();
    let weight_term = trapezoid(&weighted, h);
    if i == 0 && j == 0 {
        return Ok(weight_term.sqrt());
    }
    let d = derivative(f, h, i);
    let dsq: Vec<f64> = d.iter().map(|z| z.norm_sqr()).collect();
    Ok((trapezoid(&dsq, h) + weight_term).sqrt())
}

/// H^{i,j} norm for `i <= 2`, `j <= 1`.
pub fn h_ij_norm(f: &[C64], grid: &XGrid, i: u32, j: u32) -> Result<f64> {
    if i > 2 || j > 1 {
        return Err(Error::input(format!("H^{{{i},{j}}} is not supported (need i <= 2, j <= 1)")));
    }
    weighted_sobolev_norm(f, grid, i, j)
}

/// Norm plus the ratio against the same norm on every other node.
pub fn sobolev_report(f: &[C64], grid: &XGrid, i: u32, j: u32) -> Result<SobolevReport> {
    let norm_value = weighted_sobolev_norm(f, grid, i, j)?;
    let coarse_n = grid.n.div_ceil(2);
    let refinement_ratio = if coarse_n >= 4 {
        let coarse_f: Vec<C64> = f.iter().step_by(2).copied().collect();
        let coarse = XGrid::new(grid.x_min, grid.node(2 * (coarse_n - 1)), coarse_n)?;
        let c = weighted_sobolev_norm(&coarse_f, &coarse, i, j)?;
        if c > 0.0 {
            norm_value / c
        } else if norm_value == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        f64::NAN
    };
    Ok(SobolevReport { i, j, norm_value, refinement_ratio })
}
