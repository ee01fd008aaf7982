//! Case III: real zeros of `s11` (spectral singularities).
//!
//! The potential is cut at `x0`; the cut-off part has small L1 norm and hence
//! zero-free `s11`. Inside a circle of radius `s_inf` the problem switches to
//! the auxiliary solution built from the cut-off data, which moves the real
//! zeros off the contour. The augmented contour is discretized with
//! Gauss-Legendre panels graded towards the two self-intersection points and
//! the Cauchy operator is assembled densely with product integration for
//! self and near interactions.

use std::f64::consts::PI;
use std::io::Write;
use std::num::NonZeroUsize;
use std::ops::Range;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::direct_scattering::{
    compute_transition_matrix, compute_transition_matrix_with, find_discrete_spectrum, reflect_potential, Rect, SpectrumOptions,
    Stepper, TransitionMatrix, TOL_ZERO,
};
use crate::error::{Error, Result};
use crate::grid_core::{Complex3x3, Epsilon, GridPotential, LambdaGrid, XGrid, C64, I, ONE, ZERO};
use crate::rhp_inverse::{assemble_profile, gmres, LinearOperator, ReconstructedPotential, SolveStats, SolverOptions};

/// Default bound on the L1 norm of the cut-off potential.
pub const CUTOFF_THRESHOLD: f64 = 0.25;
/// Junction matching tolerance.
pub const MATCHING_TOL: f64 = 1e-6;

/// `|U| = (|u|^2 + |v|^2)^{1/2}` integrated over `(x_k, x_max)` for every k.
pub fn right_tails(pot: &GridPotential) -> Vec<f64> {
    let a = pot.magnitude();
    let h = pot.grid.h();
    let mut t = vec![0.0; a.len()];
    for k in (0..a.len() - 1).rev() {
        t[k] = t[k + 1] + 0.5 * h * (a[k] + a[k + 1]);
    }
    t
}

/// `|U|` integrated over `(x_min, x_k)` for every k.
pub fn left_tails(pot: &GridPotential) -> Vec<f64> {
    let a = pot.magnitude();
    let h = pot.grid.h();
    let mut t = vec![0.0; a.len()];
    for k in 1..a.len() {
        t[k] = t[k - 1] + 0.5 * h * (a[k] + a[k - 1]);
    }
    t
}

/// Cut points on both sides of the potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutPoints {
    /// Smallest node with `||U||_{L1(x, inf)} < threshold`.
    pub x_right: f64,
    pub right_node: usize,
    /// Largest node with `||U||_{L1(-inf, x)} < threshold`.
    pub x_left: f64,
    pub left_node: usize,
    pub threshold: f64,
}

impl CutPoints {
    /// Common `|x0|` covering both sides.
    pub fn x0(&self) -> f64 {
        self.x_right.max(-self.x_left)
    }

    /// Points below this use the reflected (left) problem.
    pub fn switch_point(&self) -> f64 {
        0.5 * (self.x_right + self.x_left)
    }
}

pub fn choose_cutoff(pot: &GridPotential, threshold: f64) -> Result<CutPoints> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::input(format!("cut-off threshold must be positive, got {threshold}")));
    }
    let n = pot.grid.n;
    let rt = right_tails(pot);
    let lt = left_tails(pot);
    let right_node = rt.iter().position(|&t| t < threshold).unwrap_or(n - 1);
    let left_node = lt.iter().rposition(|&t| t < threshold).unwrap_or(0);
    if rt[0] >= threshold && (right_node >= n - 1 || left_node == 0) {
        return Err(Error::input(
            "cut-off threshold unreachable inside the grid: the potential is too wide or does not decay",
        ));
    }
    Ok(CutPoints {
        x_right: pot.grid.node(right_node),
        right_node,
        x_left: pot.grid.node(left_node),
        left_node,
        threshold,
    })
}

/// Scattering data of the cut-off potential `U 1_(x0, inf)`.
#[derive(Debug, Clone)]
pub struct CutoffData {
    pub x0: f64,
    pub node: usize,
    pub bold_s: TransitionMatrix,
    pub r1: Vec<C64>,
    pub r2: Vec<C64>,
    pub l1_tail: f64,
}

impl CutoffData {
    /// Volterra-series bound on `|bold s11 - 1|`.
    pub fn volterra_bound(&self) -> f64 {
        self.l1_tail.exp() - 1.0
    }

    pub fn max_s11_deviation(&self) -> f64 {
        self.bold_s.s.iter().map(|s| (s.m[0][0] - ONE).norm()).fold(0.0, f64::max)
    }
}

pub fn cutoff_scattering(pot: &GridPotential, node: usize, grid: &LambdaGrid) -> Result<CutoffData> {
    if node >= pot.grid.n {
        return Err(Error::input(format!("cut node {node} outside the grid")));
    }
    let stepper = Stepper::new(pot);
    let bold_s = compute_transition_matrix_with(&stepper, grid, node)?;
    let (min_s11, at) = bold_s.min_abs_s11();
    if min_s11 < TOL_ZERO {
        return Err(Error::numerical(format!(
            "cut-off s11 nearly vanishes ({min_s11:.3e} at lambda = {at}); the small-norm assumption fails, move the cut right"
        )));
    }
    let r1 = bold_s.s.iter().map(|s| s.m[1][0] / s.m[0][0]).collect();
    let r2 = bold_s.s.iter().map(|s| s.m[2][0] / s.m[0][0]).collect();
    Ok(CutoffData { x0: pot.grid.node(node), node, bold_s, r1, r2, l1_tail: right_tails(pot)[node] })
}

/// `1.5 max(|z_i|, |lambda| where |s11| < tol, 1)`.
pub fn choose_radius(eigenvalues: &[C64], tm: &TransitionMatrix, tol: f64) -> Result<f64> {
    let mut r: f64 = 1.0;
    for z in eigenvalues {
        r = r.max(z.norm());
    }
    for (k, s) in tm.s.iter().enumerate() {
        if s.m[0][0].norm() < tol {
            r = r.max(tm.lambda_grid.node(k).abs());
        }
    }
    let s_inf = 1.5 * r;
    if s_inf >= tm.lambda_grid.lambda_max {
        return Err(Error::input(format!(
            "zeros of s11 reach |lambda| = {r:.4}; the circle radius {s_inf:.4} does not fit inside lambda_max = {}",
            tm.lambda_grid.lambda_max
        )));
    }
    Ok(s_inf)
}

/// Pieces of the augmented contour. Real pieces run left to right; the
/// circle is traversed clockwise, upper arc first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    OuterLeft,
    Inner,
    OuterRight,
    UpperArc,
    LowerArc,
}

impl Piece {
    pub const ALL: [Piece; 5] = [Piece::OuterLeft, Piece::Inner, Piece::OuterRight, Piece::UpperArc, Piece::LowerArc];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn is_real(self) -> bool {
        matches!(self, Piece::OuterLeft | Piece::Inner | Piece::OuterRight)
    }
}

/// Panel layout knobs.
#[derive(Debug, Clone, Copy)]
pub struct PanelOptions {
    /// Gauss-Legendre nodes per panel.
    pub order: usize,
    /// Upper bound on panel length.
    pub panel_len: f64,
    /// Dyadic refinement levels towards each self-intersection point.
    pub grading_levels: usize,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self { order: 16, panel_len: 0.5, grading_levels: 8 }
    }
}

#[derive(Debug, Clone)]
struct Panel {
    start: usize,
    len: usize,
    center: C64,
    half: C64,
}

/// Panel discretization of the augmented contour.
#[derive(Debug, Clone)]
pub struct PanelContour {
    pub s_inf: f64,
    pub lambda_max: f64,
    pub nodes: Vec<C64>,
    /// Complex quadrature weights (`d lambda`).
    pub weights: Vec<C64>,
    pub pieces: Vec<Piece>,
    tangents: Vec<C64>,
    panels: Vec<Panel>,
    ranges: [Range<usize>; 5],
}

fn breakpoints(length: f64, panel_len: f64, grade_start: bool, grade_end: bool, levels: usize) -> Vec<f64> {
    let m = ((length / panel_len).ceil() as usize).max(2);
    let step = 1.0 / m as f64;
    let mut t = vec![0.0];
    if grade_start {
        for l in (1..=levels).rev() {
            t.push(step / f64::powi(2.0, l as i32));
        }
    }
    for k in 1..m {
        t.push(k as f64 * step);
    }
    if grade_end {
        for l in 1..=levels {
            t.push(1.0 - step / f64::powi(2.0, l as i32));
        }
    }
    t.push(1.0);
    t
}

impl PanelContour {
    pub fn new(s_inf: f64, lambda_max: f64, opts: &PanelOptions) -> Result<Self> {
        if !(s_inf > 0.0 && lambda_max > s_inf) {
            return Err(Error::input(format!("need 0 < s_inf < lambda_max, got {s_inf} and {lambda_max}")));
        }
        let order = NonZeroUsize::new(opts.order).ok_or_else(|| Error::input("panel order must be positive"))?;
        let mut gl: Vec<(f64, f64)> = GaussLegendre::new(order).as_node_weight_pairs().to_vec();
        gl.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut c = PanelContour {
            s_inf,
            lambda_max,
            nodes: Vec::new(),
            weights: Vec::new(),
            pieces: Vec::new(),
            tangents: Vec::new(),
            panels: Vec::new(),
            ranges: Default::default(),
        };
        let lv = opts.grading_levels;
        for piece in Piece::ALL {
            let first = c.nodes.len();
            // s(t) and s'(t) on [0, 1]
            let (len, gs, ge): (f64, bool, bool) = match piece {
                Piece::OuterLeft | Piece::OuterRight => (lambda_max - s_inf, piece == Piece::OuterRight, piece == Piece::OuterLeft),
                Piece::Inner => (2.0 * s_inf, true, true),
                Piece::UpperArc | Piece::LowerArc => (PI * s_inf, true, true),
            };
            let map = |t: f64| -> (C64, C64) {
                match piece {
                    Piece::OuterLeft => (C64::from(-lambda_max + len * t), C64::from(len)),
                    Piece::Inner => (C64::from(-s_inf + len * t), C64::from(len)),
                    Piece::OuterRight => (C64::from(s_inf + len * t), C64::from(len)),
                    Piece::UpperArc => {
                        let s = C64::from_polar(s_inf, PI * (1.0 - t));
                        (s, -I * PI * s)
                    }
                    Piece::LowerArc => {
                        let s = C64::from_polar(s_inf, -PI * t);
                        (s, -I * PI * s)
                    }
                }
            };
            let bp = breakpoints(len, opts.panel_len, gs, ge, lv);
            for w in bp.windows(2) {
                let (ta, tb) = (w[0], w[1]);
                let (sa, _) = map(ta);
                let (sb, _) = map(tb);
                let start = c.nodes.len();
                for &(xi, wi) in &gl {
                    let t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * xi;
                    let (s, ds) = map(t);
                    c.nodes.push(s);
                    c.weights.push(ds * (0.5 * (tb - ta) * wi));
                    c.tangents.push(ds / ds.norm());
                    c.pieces.push(piece);
                }
                c.panels.push(Panel { start, len: gl.len(), center: 0.5 * (sa + sb), half: 0.5 * (sb - sa) });
            }
            c.ranges[piece.id()] = first..c.nodes.len();
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn range(&self, piece: Piece) -> Range<usize> {
        self.ranges[piece.id()].clone()
    }

    /// Drop whole panels for which `keep` is false on every node. Returns the
    /// surviving original node indices.
    fn retain(&mut self, keep: &[bool]) -> Vec<usize> {
        let mut kept = Vec::new();
        let mut panels = Vec::new();
        for p in &self.panels {
            if (p.start..p.start + p.len).any(|k| keep[k]) {
                panels.push(Panel { start: kept.len(), ..p.clone() });
                kept.extend(p.start..p.start + p.len);
            }
        }
        let pick = |v: &[C64]| kept.iter().map(|&k| v[k]).collect::<Vec<_>>();
        self.nodes = pick(&self.nodes);
        self.weights = pick(&self.weights);
        self.tangents = pick(&self.tangents);
        self.pieces = kept.iter().map(|&k| self.pieces[k]).collect();
        self.panels = panels;
        for piece in Piece::ALL {
            let a = self.pieces.iter().position(|&p| p == piece).unwrap_or(0);
            let b = self.pieces.iter().rposition(|&p| p == piece).map_or(0, |b| b + 1);
            self.ranges[piece.id()] = a..b.max(a);
        }
        kept
    }

    /// Dense matrix of the boundary value `C+` (left side of each piece).
    pub fn cauchy_matrix(&self) -> DenseCauchy {
        let n = self.len();
        let lus: Vec<_> = self
            .panels
            .iter()
            .map(|p| {
                let tau: Vec<C64> = (0..p.len).map(|j| (self.nodes[p.start + j] - p.center) / p.half).collect();
                DMatrix::from_fn(p.len, p.len, |k, j| tau[j].powi(k as i32)).lu()
            })
            .collect();
        let scale = 1.0 / (2.0 * PI * I);
        let m: Vec<C64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let z = self.nodes[i];
                let mut row = vec![ZERO; n];
                for (p, lu) in self.panels.iter().zip(&lus) {
                    let tz = (z - p.center) / p.half;
                    let own = (p.start..p.start + p.len).contains(&i);
                    if !own && tz.norm() > 2.0 {
                        for j in p.start..p.start + p.len {
                            row[j] = self.weights[j] / (self.nodes[j] - z) * scale;
                        }
                        continue;
                    }
                    let p0 = if own {
                        let tf = (self.tangents[i] / p.half).arg();
                        let wrap = |a: f64| (a + PI).rem_euclid(2.0 * PI) - PI;
                        let d1 = wrap((ONE - tz).arg() - tf);
                        let d2 = wrap((-ONE - tz).arg() - tf - PI);
                        C64::new(((ONE - tz).norm() / (ONE + tz).norm()).ln(), d1 - d2 + PI)
                    } else {
                        ((ONE - tz) / (-ONE - tz)).ln()
                    };
                    let mut pk = DVector::from_element(p.len, ZERO);
                    pk[0] = p0;
                    for k in 0..p.len - 1 {
                        let mono = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
                        pk[k + 1] = tz * pk[k] + mono;
                    }
                    if let Some(w) = lu.solve(&pk) {
                        for j in 0..p.len {
                            row[p.start + j] = w[j] * scale;
                        }
                    }
                }
                row
            })
            .collect();
        DenseCauchy { n, m }
    }
}

/// Row-major dense `C+` matrix.
#[derive(Debug, Clone)]
pub struct DenseCauchy {
    n: usize,
    m: Vec<C64>,
}

impl DenseCauchy {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        self.m.par_chunks(self.n).map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
    }

    /// Three right-hand sides at once (one matrix sweep).
    pub fn apply3(&self, f: &[[C64; 3]]) -> Vec<[C64; 3]> {
        self.m
            .par_chunks(self.n)
            .map(|row| {
                let mut acc = [ZERO; 3];
                for (a, b) in row.iter().zip(f) {
                    acc[0] += a * b[0];
                    acc[1] += a * b[1];
                    acc[2] += a * b[2];
                }
                acc
            })
            .collect()
    }
}

/// How the lower-arc jump entries are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerArcData {
    /// From the adjoint Jost rows analytic in the lower half-plane.
    Direct,
    /// Conjugate reflection of the upper-arc data.
    Schwarz,
}

/// Junction mismatch of the four factor families at `-s_inf` and `+s_inf`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MatchingReport {
    /// `V+` on the outer boundary in the upper half-plane.
    pub plus_upper_outer: f64,
    /// `V-` on the inner boundary in the upper half-plane.
    pub minus_upper_inner: f64,
    /// `V-` on the outer boundary in the lower half-plane.
    pub minus_lower_outer: f64,
    /// `V+` on the inner boundary in the lower half-plane.
    pub plus_lower_inner: f64,
}

impl MatchingReport {
    pub fn max(&self) -> f64 {
        self.plus_upper_outer.max(self.minus_upper_inner).max(self.minus_lower_outer).max(self.plus_lower_inner)
    }
}

fn rho_of(s: &Complex3x3) -> [C64; 2] {
    [s.m[1][0] / s.m[0][0], s.m[2][0] / s.m[0][0]]
}

/// `(v21+, v31+)` at `x0` for `lambda` in the closed upper half-plane.
fn v_plus(stepper: &Stepper, lambda: C64, cut: usize) -> [C64; 2] {
    let m1 = stepper.minus_col1(lambda, 0);
    let s11 = m1[m1.len() - 1][0];
    let m = m1[cut];
    let [c2, c3] = stepper.plus_cols23(lambda, cut)[0];
    let bold_s11 = c2[1] * c3[2] - c3[1] * c2[2];
    let d = bold_s11 * s11;
    [(m[1] * c3[2] - m[2] * c3[1]) / d, (c2[1] * m[2] - c2[2] * m[1]) / d]
}

/// `(v12-, v13-)` at `x0` for `lambda` in the closed lower half-plane.
fn v_minus(stepper: &Stepper, lambda: C64, cut: usize) -> Result<[C64; 2]> {
    let a = stepper.inv_minus_row1(lambda, 0);
    let t11 = a[a.len() - 1][0];
    let a = a[cut];
    let [r2, r3] = stepper.inv_plus_rows23(lambda, cut)[0];
    let bold_t11 = r2[1] * r3[2] - r2[2] * r3[1];
    let m0inv = Complex3x3::from_rows([[ONE / bold_t11, ZERO, ZERO], r2, r3]);
    let m0 = m0inv.inverse().ok_or_else(|| Error::numerical(format!("singular cut-off solution at lambda = {lambda}")))?;
    let row = Complex3x3::vec_mul([a[0] / t11, a[1] / t11, a[2] / t11], &m0);
    Ok([row[1], row[2]])
}

/// Jump data for one side (the original potential, or its reflection for
/// the left problem).
#[derive(Debug, Clone)]
struct SideData {
    x0: f64,
    /// rho on outer nodes, r on inner nodes.
    line: Vec<[C64; 2]>,
    v_up: Vec<[C64; 2]>,
    v_low: Vec<[C64; 2]>,
    /// Linear interpolant `L = a + b lambda` per component.
    l_a: [C64; 2],
    l_b: [C64; 2],
    matching: MatchingReport,
}

impl SideData {
    fn line_data(stepper: &Stepper, cut: usize, c: &PanelContour) -> Vec<[C64; 2]> {
        (0..c.len())
            .into_par_iter()
            .map(|k| match c.pieces[k] {
                Piece::OuterLeft | Piece::OuterRight => rho_of(&stepper.s_matrix(c.nodes[k].re)),
                Piece::Inner => rho_of(&stepper.s_matrix_from(c.nodes[k].re, cut)),
                _ => [ZERO; 2],
            })
            .collect()
    }

    fn new(pot: &GridPotential, cut: usize, c: &PanelContour, lower: LowerArcData) -> Result<Self> {
        let stepper = Stepper::new(pot);
        let x0 = pot.grid.node(cut);
        let s = c.s_inf;
        let line = Self::line_data(&stepper, cut, c);
        let up = c.range(Piece::UpperArc);
        let v_up: Vec<[C64; 2]> = up.clone().into_par_iter().map(|k| v_plus(&stepper, c.nodes[k], cut)).collect();
        let low = c.range(Piece::LowerArc);
        let v_low: Vec<[C64; 2]> = match lower {
            LowerArcData::Direct => low.clone().into_par_iter().map(|k| v_minus(&stepper, c.nodes[k], cut)).collect::<Result<_>>()?,
            LowerArcData::Schwarz => (0..low.len()).map(|j| {
                let v = v_up[up.len() - 1 - j];
                [v[0].conj(), v[1].conj()]
            }).collect(),
        };
        let rho_at = |l: f64| rho_of(&stepper.s_matrix(l));
        let r_at = |l: f64| rho_of(&stepper.s_matrix_from(l, cut));
        let (rho_m, rho_p) = (rho_at(-s), rho_at(s));
        let ph = |l: f64| C64::from_polar(1.0, 2.0 * l * x0);
        let (lm, lp) = ([ph(-s) * rho_m[0], ph(-s) * rho_m[1]], [ph(s) * rho_p[0], ph(s) * rho_p[1]]);
        let l_b = [(lp[0] - lm[0]) / (2.0 * s), (lp[1] - lm[1]) / (2.0 * s)];
        let l_a = [0.5 * (lp[0] + lm[0]), 0.5 * (lp[1] + lm[1])];

        let mut matching = MatchingReport::default();
        for l in [-s, s] {
            let rho = rho_at(l);
            let r = r_at(l);
            let vp = v_plus(&stepper, C64::from(l), cut);
            let vm = v_minus(&stepper, C64::from(l), cut)?;
            for i in 0..2 {
                let big_l = l_a[i] + l_b[i] * l;
                let e = ph(l);
                // V+ on the outer boundary is built from L, V- on the inner one from v - L.
                matching.plus_upper_outer = matching.plus_upper_outer.max((big_l - e * rho[i]).norm());
                matching.minus_upper_inner = matching.minus_upper_inner.max((vp[i] / e + r[i] - rho[i]).norm());
                matching.minus_lower_outer = matching.minus_lower_outer.max((big_l.conj() - (e * rho[i]).conj()).norm());
                matching.plus_lower_inner = matching.plus_lower_inner.max((vm[i] * e + r[i].conj() - rho[i].conj()).norm());
            }
        }
        Ok(Self { x0, line, v_up, v_low, l_a, l_b, matching })
    }

    /// `(W+, W-)` at `y` in this side's coordinates.
    fn jump(&self, c: &PanelContour, y: f64) -> (Vec<Complex3x3>, Vec<Complex3x3>) {
        let n = c.len();
        let mut wp = vec![Complex3x3::zero(); n];
        let mut wm = vec![Complex3x3::zero(); n];
        let up = c.range(Piece::UpperArc);
        let low = c.range(Piece::LowerArc);
        for k in 0..n {
            let l = c.nodes[k];
            let piece = c.pieces[k];
            if piece.is_real() {
                let d = self.line[k];
                let e = C64::from_polar(1.0, 2.0 * l.re * y);
                wp[k] = Complex3x3::lower(d[0] * e, d[1] * e);
                wm[k] = Complex3x3::upper((d[0] * e).conj(), (d[1] * e).conj());
            } else if piece == Piece::UpperArc {
                let v = self.v_up[k - up.start];
                let e = (2.0 * I * l * (y - self.x0)).exp();
                let big_l = [self.l_a[0] + self.l_b[0] * l, self.l_a[1] + self.l_b[1] * l];
                wm[k] = Complex3x3::lower(e * (v[0] - big_l[0]), e * (v[1] - big_l[1]));
                wp[k] = Complex3x3::lower(e * big_l[0], e * big_l[1]);
            } else {
                let v = self.v_low[k - low.start];
                let e = (-2.0 * I * l * (y - self.x0)).exp();
                let ls = [self.l_a[0].conj() + self.l_b[0].conj() * l, self.l_a[1].conj() + self.l_b[1].conj() * l];
                // Factors for the counterclockwise arc, flipped for clockwise traversal.
                let wp_ccw = Complex3x3::upper(e * (v[0] - ls[0]), e * (v[1] - ls[1]));
                let wm_ccw = Complex3x3::upper(e * ls[0], e * ls[1]);
                wp[k] = wm_ccw.scale(-ONE);
                wm[k] = wp_ccw.scale(-ONE);
            }
        }
        (wp, wm)
    }
}

/// Case III knobs.
#[derive(Debug, Clone, Copy)]
pub struct Case3Options {
    pub panels: PanelOptions,
    pub solver: SolverOptions,
    pub threshold: f64,
    pub lower_arc: LowerArcData,
    /// Drop real panels where every reflection coefficient is below this.
    pub prune_below: f64,
    /// Largest accepted junction residual at the self-intersection points.
    pub matching_tol: f64,
}

impl Default for Case3Options {
    fn default() -> Self {
        Self {
            panels: PanelOptions::default(),
            solver: SolverOptions::default(),
            threshold: CUTOFF_THRESHOLD,
            lower_arc: LowerArcData::Direct,
            prune_below: 1e-15,
            matching_tol: MATCHING_TOL,
        }
    }
}

/// Discretized Case III problem: geometry, Cauchy matrix and jump data for
/// the right problem and the reflected left problem.
#[derive(Debug, Clone)]
pub struct AugmentedContour {
    pub contour: PanelContour,
    pub cut: CutPoints,
    pub epsilon: Epsilon,
    cauchy: DenseCauchy,
    right: SideData,
    left: SideData,
}

impl AugmentedContour {
    pub fn build(pot: &GridPotential, lambda_max: f64, s_inf: f64, cut: CutPoints, opts: &Case3Options) -> Result<Self> {
        if pot.epsilon != Epsilon::Focusing {
            return Err(Error::input("Case III is only defined for the focusing system; use Case I for defocusing data"));
        }
        let mut popts = opts.panels;
        let extent = pot.grid.x_min.abs().max(pot.grid.x_max.abs()).max(1.0);
        popts.panel_len = popts.panel_len.min(4.0 / extent);
        let mut contour = PanelContour::new(s_inf, lambda_max, &popts)?;

        let reflected = reflect_potential(pot);
        let left_cut = reflected.grid.nearest(-cut.x_left);
        let right_stepper = Stepper::new(pot);
        let left_stepper = Stepper::new(&reflected);
        let rd = SideData::line_data(&right_stepper, cut.right_node, &contour);
        let ld = SideData::line_data(&left_stepper, left_cut, &contour);
        let keep: Vec<bool> = (0..contour.len())
            .map(|k| {
                !matches!(contour.pieces[k], Piece::OuterLeft | Piece::OuterRight)
                    || rd[k].iter().chain(&ld[k]).any(|z| z.norm() >= opts.prune_below)
            })
            .collect();
        contour.retain(&keep);
        log::info!("Case III contour: {} nodes, s_inf = {s_inf}", contour.len());

        let right = SideData::new(pot, cut.right_node, &contour, opts.lower_arc)?;
        let left = SideData::new(&reflected, left_cut, &contour, opts.lower_arc)?;
        for (name, side) in [("right", &right), ("left", &left)] {
            let m = side.matching.max();
            if !(m < opts.matching_tol) {
                return Err(Error::numerical(format!(
                    "{name} matching residual {m:.3e} at the self-intersection points exceeds {:e}",
                    opts.matching_tol
                )));
            }
        }
        let cauchy = contour.cauchy_matrix();
        Ok(Self { contour, cut, epsilon: pot.epsilon, cauchy, right, left })
    }

    pub fn s_inf(&self) -> f64 {
        self.contour.s_inf
    }

    /// Matching residuals of the right and left problems.
    pub fn matching(&self) -> (MatchingReport, MatchingReport) {
        (self.right.matching, self.left.matching)
    }

    fn side(&self, x: f64) -> (&SideData, f64, f64) {
        if x >= self.cut.switch_point() {
            (&self.right, x, 1.0)
        } else {
            (&self.left, -x, -1.0)
        }
    }

    /// Jump factors `(W+, W-)` at `x` for the problem used there.
    pub fn jump_at(&self, x: f64) -> (Vec<Complex3x3>, Vec<Complex3x3>) {
        let (side, y, _) = self.side(x);
        side.jump(&self.contour, y)
    }

    /// Solve for the first row of `mu` at `x` and reconstruct `(u, v)`.
    pub fn reconstruct_at(&self, x: f64, opts: &SolverOptions) -> Result<(C64, C64, SolveStats)> {
        let (side, y, sign) = self.side(x);
        let (wp, wm) = side.jump(&self.contour, y);
        let op = Case3Operator::new(&self.cauchy, &wp, &wm);
        let n = self.contour.len();
        let mut b = vec![ZERO; 3 * n];
        for k in 0..n {
            b[3 * k] = ONE;
        }
        let (phi, stats) = gmres(&op, &b, b.clone(), opts.restart, opts.max_iter, opts.tol);
        if !stats.converged {
            return Err(Error::numerical(format!(
                "Case III GMRES did not converge at x = {x}: residual {:.3e} after {} iterations",
                stats.residual, stats.iterations
            )));
        }
        let mut acc = [ZERO; 2];
        for k in 0..n {
            let r = Complex3x3::vec_mul([phi[3 * k], phi[3 * k + 1], phi[3 * k + 2]], &(wp[k] + wm[k]));
            acc[0] += r[1] * self.contour.weights[k];
            acc[1] += r[2] * self.contour.weights[k];
        }
        let f = -sign / PI;
        Ok((acc[0] * f, acc[1] * f, stats))
    }

    /// Smallest leading principal minor of `V + V^dagger` over the real nodes
    /// at `x`.
    pub fn min_positivity_minor(&self, x: f64) -> f64 {
        let (wp, wm) = self.jump_at(x);
        let mut worst = f64::INFINITY;
        for k in 0..self.contour.len() {
            if !self.contour.pieces[k].is_real() {
                continue;
            }
            let Some(inv) = (Complex3x3::identity() - wm[k]).inverse() else {
                return f64::NEG_INFINITY;
            };
            let v = inv * (Complex3x3::identity() + wp[k]);
            let h = v + v.dagger();
            let m = &h.m;
            let d1 = m[0][0].re;
            let d2 = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).re;
            worst = worst.min(d1).min(d2).min(h.det().re);
        }
        worst
    }

    /// Per-node `piece_id lambda_re lambda_im` followed by V at `x` as 18
    /// floats (row-major, re/im interleaved).
    pub fn dump(&self, x: f64, out: &mut dyn Write) -> Result<()> {
        let (wp, wm) = self.jump_at(x);
        writeln!(out, "# case3-contour s_inf={:.17e} x={:.17e} nodes={}", self.s_inf(), x, self.contour.len())?;
        for k in 0..self.contour.len() {
            let v = (Complex3x3::identity() - wm[k]).inverse().map(|a| a * (Complex3x3::identity() + wp[k])).unwrap_or_else(|| {
                let nan = C64::new(f64::NAN, f64::NAN);
                Complex3x3::from_rows([[nan; 3]; 3])
            });
            let l = self.contour.nodes[k];
            write!(out, "{} {:.17e} {:.17e}", self.contour.pieces[k].id(), l.re, l.im)?;
            for row in &v.m {
                for z in row {
                    write!(out, " {:.17e} {:.17e}", z.re, z.im)?;
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `phi -> phi + phi W+ - C+(phi (W+ + W-))` with a dense `C+`.
struct Case3Operator<'a> {
    cauchy: &'a DenseCauchy,
    wp: &'a [Complex3x3],
    w: Vec<Complex3x3>,
}

impl<'a> Case3Operator<'a> {
    fn new(cauchy: &'a DenseCauchy, wp: &'a [Complex3x3], wm: &'a [Complex3x3]) -> Self {
        let w = wp.iter().zip(wm).map(|(a, b)| *a + *b).collect();
        Self { cauchy, wp, w }
    }
}

impl LinearOperator for Case3Operator<'_> {
    fn dim(&self) -> usize {
        3 * self.cauchy.dim()
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.cauchy.dim();
        let g: Vec<[C64; 3]> = (0..n).map(|k| Complex3x3::vec_mul([x[3 * k], x[3 * k + 1], x[3 * k + 2]], &self.w[k])).collect();
        let cg = self.cauchy.apply3(&g);
        let mut out = x.to_vec();
        for k in 0..n {
            let b = Complex3x3::vec_mul([x[3 * k], x[3 * k + 1], x[3 * k + 2]], &self.wp[k]);
            for c in 0..3 {
                out[3 * k + c] += b[c] - cg[k][c];
            }
        }
        out
    }
}

/// Radius and cut points from the potential: spectrum search, real-axis
/// dips of `|s11|` below `dip_tol`, and the L1 cut-off rule.
pub fn prepare_case3(pot: &GridPotential, grid: &LambdaGrid, dip_tol: f64, opts: &Case3Options) -> Result<AugmentedContour> {
    let tm = compute_transition_matrix(pot, grid)?;
    let spectrum = find_discrete_spectrum(pot, Rect::default_for(grid.lambda_max, 1e-3), &SpectrumOptions::default())?;
    let s_inf = choose_radius(&spectrum.eigenvalues, &tm, dip_tol)?;
    let cut = choose_cutoff(pot, opts.threshold)?;
    AugmentedContour::build(pot, grid.lambda_max, s_inf, cut, opts)
}

/// Reconstruct on every node of `grid`.
pub fn solve_case3(aug: &AugmentedContour, grid: &XGrid, opts: &SolverOptions) -> Result<ReconstructedPotential> {
    let results = grid.nodes().into_iter().map(|x| aug.reconstruct_at(x, opts).map(|(u, v, s)| (u, v, s.residual))).collect();
    assemble_profile(grid, aug.epsilon, results)
}
