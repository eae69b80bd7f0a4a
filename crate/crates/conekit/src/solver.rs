//! Discretized operator and fixed-point location.
//!
//! The operator under study sends a pair of functions on [0,1] to
//!
//! ```text
//! T1(u,v)(t) = sum_j gamma_1j(t) (H_1j(beta_1j[u]) + L_1j(delta_1j[v]))
//!            + int_0^1 k_1(t,s) g_1(s) f_1(s, u(s), v(s)) ds
//! T2(u,v)(t) = sum_j gamma_2j(t) (H_2j(beta_2j[v]) + L_2j(delta_2j[u]))
//!            + int_0^1 k_2(t,s) g_2(s) f_2(s, u(s), v(s)) ds
//! ```
//!
//! (the second component applies beta to its own component v and delta to
//! the other one). Functions live on a shared node set; between nodes they
//! are piecewise-cubic Hermite interpolants with finite-difference slopes.
//! The s-integral uses a fixed 15-point Gauss rule on every inter-node
//! panel, which is accurate here because every integrand kink (the kernel's
//! diagonal, g's breakpoints, interpolant joints) lies on a panel boundary.
//!
//! Negative transient values are clamped to 0 before f, H, and L see them;
//! the clamp is inactive at any genuine fixed point in the cone.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::constants::TheoryConstants;
use crate::expr::EvalError;
use crate::problem::ProblemDef;
use crate::quadrature::{gl15, QuadError, Quadrature};
use crate::scalar::rat_to_f64;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("boundary term ({0},{1}) has no concrete {2} expression; bounds alone cannot drive the operator")]
    MissingFn(usize, usize, &'static str),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("iteration diverged: norm {norm:.3e} exceeded ceiling {ceiling:.3e} at iteration {iteration}")]
    Diverged {
        norm: f64,
        ceiling: f64,
        iteration: usize,
    },
}

// ---------------------------------------------------------------------------
// Grid functions

/// A function sampled on a fixed node set, evaluated between nodes by cubic
/// Hermite interpolation with quadratic-fit slopes.
#[derive(Debug, Clone)]
pub struct GridFunction {
    nodes: Arc<[f64]>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

fn fd_slopes(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut d = vec![0.0; n];
    // Derivative of the quadratic through three consecutive samples,
    // evaluated at each of them in turn for the two ends.
    let quad_fit = |i0: usize, at: usize| -> f64 {
        let (x0, x1, x2) = (nodes[i0], nodes[i0 + 1], nodes[i0 + 2]);
        let (y0, y1, y2) = (values[i0], values[i0 + 1], values[i0 + 2]);
        let x = nodes[at];
        y0 * (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    d[0] = quad_fit(0, 0);
    for i in 1..n - 1 {
        d[i] = quad_fit(i - 1, i);
    }
    d[n - 1] = quad_fit(n - 3, n - 1);
    d
}

impl GridFunction {
    pub fn new(nodes: Arc<[f64]>, values: Vec<f64>) -> Self {
        assert_eq!(nodes.len(), values.len(), "one value per node");
        assert!(nodes.len() >= 3, "need at least three nodes");
        let slopes = fd_slopes(&nodes, &values);
        GridFunction {
            nodes,
            values,
            slopes,
        }
    }

    pub fn constant(nodes: Arc<[f64]>, value: f64) -> Self {
        let values = vec![value; nodes.len()];
        GridFunction::new(nodes, values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let nodes = &self.nodes;
        let n = nodes.len();
        if x <= nodes[0] {
            return self.values[0];
        }
        if x >= nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = match nodes.partition_point(|&t| t <= x) {
            0 => 0,
            idx => idx - 1,
        };
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let h = x1 - x0;
        let tau = (x - x0) / h;
        let t2 = tau * tau;
        let t3 = t2 * tau;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + tau;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k]
            + h10 * h * self.slopes[k]
            + h01 * self.values[k + 1]
            + h11 * h * self.slopes[k + 1]
    }

    /// Discrete sup-norm over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Minimum of the interpolant over [lo, hi], sampled at nodes, interval
    /// ends, and a few interior points per panel (a cubic can dip between
    /// nodes).
    pub fn min_on(&self, lo: f64, hi: f64) -> f64 {
        let mut m = self.eval(lo).min(self.eval(hi));
        let n = self.nodes.len();
        for k in 0..n - 1 {
            let (a, b) = (self.nodes[k], self.nodes[k + 1]);
            if b < lo || a > hi {
                continue;
            }
            if a >= lo && a <= hi {
                m = m.min(self.values[k]);
            }
            for q in 1..4 {
                let x = a + (b - a) * (q as f64) / 4.0;
                if x >= lo && x <= hi {
                    m = m.min(self.eval(x));
                }
            }
        }
        if self.nodes[n - 1] >= lo && self.nodes[n - 1] <= hi {
            m = m.min(self.values[n - 1]);
        }
        m
    }

    fn sup_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// (1 - d) self + d other, clamped to be non-negative nodewise.
    fn blend_clamped(&self, other: &GridFunction, d: f64) -> GridFunction {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| ((1.0 - d) * a + d * b).max(0.0))
            .collect();
        GridFunction::new(self.nodes.clone(), values)
    }
}

/// Node set for a problem: `n` Chebyshev extrema mapped to [0,1], plus every
/// measure atom and every expression breakpoint that the s-integration or
/// the boundary sums must not interpolate across.
pub fn solver_nodes(p: &ProblemDef, n: usize) -> Arc<[f64]> {
    let n = n.max(9);
    let mut pts: Vec<f64> = (0..n)
        .map(|k| (1.0 - (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos()) / 2.0)
        .collect();
    for eq in &p.equations {
        pts.extend(eq.g.breakpoints().iter().map(rat_to_f64));
        pts.extend(eq.f.breakpoints().iter().map(rat_to_f64));
    }
    for row in &p.boundary {
        for term in row {
            pts.extend(term.beta.atom_locations_f64());
            pts.extend(term.delta.atom_locations_f64());
            pts.extend(term.gamma.expr.breakpoints().iter().map(rat_to_f64));
        }
    }
    pts.retain(|x| (0.0..=1.0).contains(x));
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    pts.into()
}

// ---------------------------------------------------------------------------
// The discretized operator

/// Reusable discretization of the operator on a fixed node set. Building
/// one precomputes the kernel-times-weight matrices, so each application is
/// a pair of mat-vecs plus the boundary sums.
pub struct Operator<'p> {
    p: &'p ProblemDef,
    nodes: Arc<[f64]>,
    /// Gauss points of all inter-node panels, concatenated.
    s_pts: Vec<f64>,
    /// g_i(s_q) times the Gauss weight, per equation.
    gw: [Vec<f64>; 2],
    /// Row-major [node * s_pts.len() + q] = k_i(node, s_q) w_q g_i(s_q).
    kg: [Vec<f64>; 2],
    /// gamma_ij sampled at the nodes.
    gamma: [[Vec<f64>; 2]; 2],
    tilde_c: [f64; 2],
    interval: [(f64, f64); 2],
    quad: Quadrature,
}

impl<'p> Operator<'p> {
    pub fn new(
        p: &'p ProblemDef,
        k: &TheoryConstants,
        n: usize,
    ) -> Result<Operator<'p>, SolveError> {
        Operator::from_nodes(p, k, solver_nodes(p, n))
    }

    /// Build the discretization on an explicit node set. The caller is
    /// responsible for the set containing every point [`solver_nodes`]
    /// would force (atoms, breakpoints); missing ones degrade the panel
    /// quadrature but nothing else.
    pub fn from_nodes(
        p: &'p ProblemDef,
        k: &TheoryConstants,
        nodes: Arc<[f64]>,
    ) -> Result<Operator<'p>, SolveError> {
        for (i, row) in p.boundary.iter().enumerate() {
            for (j, term) in row.iter().enumerate() {
                if term.h_fn.is_none() {
                    return Err(SolveError::MissingFn(i + 1, j + 1, "H"));
                }
                if term.l_fn.is_none() {
                    return Err(SolveError::MissingFn(i + 1, j + 1, "L"));
                }
            }
        }
        if nodes.len() < 3
            || nodes.windows(2).any(|w| w[0] >= w[1])
            || nodes[0] != 0.0
            || nodes[nodes.len() - 1] != 1.0
        {
            return Err(SolveError::Request(
                "nodes must be strictly increasing from 0 to 1 with at least three points".into(),
            ));
        }
        let rule = gl15();
        let mut s_pts = Vec::with_capacity((nodes.len() - 1) * 15);
        let mut s_wts = Vec::with_capacity(s_pts.capacity());
        for w in nodes.windows(2) {
            let half = (w[1] - w[0]) / 2.0;
            let mid = (w[1] + w[0]) / 2.0;
            for q in 0..15 {
                s_pts.push(mid + half * rule.nodes[q]);
                s_wts.push(half * rule.weights[q]);
            }
        }

        let ns = s_pts.len();
        let mut gw: [Vec<f64>; 2] = [vec![], vec![]];
        let mut kg: [Vec<f64>; 2] = [vec![0.0; nodes.len() * ns], vec![0.0; nodes.len() * ns]];
        for i in 0..2 {
            let eq = &p.equations[i];
            gw[i] = s_pts
                .iter()
                .zip(&s_wts)
                .map(|(&s, &w)| Ok(eq.g.eval(&[s])? * w))
                .collect::<Result<_, EvalError>>()?;
            let weights = &gw[i];
            let rows: Vec<Vec<f64>> = nodes
                .par_iter()
                .map(|&t| {
                    s_pts
                        .iter()
                        .zip(weights)
                        .map(|(&s, &w)| Ok(eq.kernel.eval(t, s)? * w))
                        .collect::<Result<Vec<f64>, EvalError>>()
                })
                .collect::<Result<_, EvalError>>()?;
            for (r, row) in rows.into_iter().enumerate() {
                kg[i][r * ns..(r + 1) * ns].copy_from_slice(&row);
            }
        }

        let mut gamma: [[Vec<f64>; 2]; 2] = Default::default();
        for i in 0..2 {
            for j in 0..2 {
                gamma[i][j] = nodes
                    .iter()
                    .map(|&t| p.boundary[i][j].gamma.expr.eval(&[t]))
                    .collect::<Result<_, EvalError>>()?;
            }
        }

        Ok(Operator {
            p,
            nodes,
            s_pts,
            gw,
            kg,
            gamma,
            tilde_c: [
                k.per_equation[0].tilde_c.to_f64(),
                k.per_equation[1].tilde_c.to_f64(),
            ],
            interval: [
                (
                    p.equations[0].interval.0.to_f64(),
                    p.equations[0].interval.1.to_f64(),
                ),
                (
                    p.equations[1].interval.0.to_f64(),
                    p.equations[1].interval.1.to_f64(),
                ),
            ],
            quad: p.quad(),
        })
    }

    pub fn nodes(&self) -> Arc<[f64]> {
        self.nodes.clone()
    }

    pub fn grid_from_fn(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        let values = self.nodes.iter().map(|&x| f(x)).collect();
        GridFunction::new(self.nodes.clone(), values)
    }

    fn check_nodes(&self, g: &GridFunction) -> Result<(), SolveError> {
        let same = Arc::ptr_eq(&g.nodes, &self.nodes) || g.nodes[..] == self.nodes[..];
        if same {
            Ok(())
        } else {
            Err(SolveError::Request(
                "grid function does not live on this operator's nodes".into(),
            ))
        }
    }

    /// beta-or-delta functional applied to a clamped interpolant.
    fn functional(
        &self,
        meas: &crate::quadrature::Measure,
        g: &GridFunction,
    ) -> Result<f64, SolveError> {
        if meas.density.is_none() {
            let mut acc = 0.0;
            for (t, w) in &meas.atoms {
                acc += w.to_f64() * g.eval(t.to_f64()).max(0.0);
            }
            return Ok(acc);
        }
        let v = meas.apply(
            |_| None,
            |x| Ok(g.eval(x).max(0.0)),
            &self.nodes,
            &self.quad,
        )?;
        Ok(v.to_f64())
    }

    /// f_i at the panel Gauss points and the boundary scalars, the two
    /// state-dependent ingredients of an application.
    fn forcing(
        &self,
        u: &GridFunction,
        v: &GridFunction,
    ) -> Result<([Vec<f64>; 2], [[f64; 2]; 2]), SolveError> {
        // f_i(s, u(s), v(s)) at the panel Gauss points, inputs clamped.
        let uv: Vec<(f64, f64)> = self
            .s_pts
            .iter()
            .map(|&s| (u.eval(s).max(0.0), v.eval(s).max(0.0)))
            .collect();
        let fvals: [Vec<f64>; 2] = [
            self.s_pts
                .par_iter()
                .zip(&uv)
                .map(|(&s, &(a, b))| self.p.equations[0].f.eval(&[s, a, b]))
                .collect::<Result<_, EvalError>>()?,
            self.s_pts
                .par_iter()
                .zip(&uv)
                .map(|(&s, &(a, b))| self.p.equations[1].f.eval(&[s, a, b]))
                .collect::<Result<_, EvalError>>()?,
        ];

        // Boundary sums: the first component feeds its own u to H via beta
        // and the partner v to L via delta; the second swaps the roles.
        let mut hl = [[0.0; 2]; 2];
        for j in 0..2 {
            for i in 0..2 {
                let term = &self.p.boundary[i][j];
                let (own, other) = if i == 0 { (u, v) } else { (v, u) };
                let bw = self.functional(&term.beta, own)?.max(0.0);
                let lw = self.functional(&term.delta, other)?.max(0.0);
                let h = term.h_fn.as_ref().unwrap().eval(&[bw])?;
                let l = term.l_fn.as_ref().unwrap().eval(&[lw])?;
                hl[i][j] = h + l;
            }
        }
        Ok((fvals, hl))
    }

    /// One application of the operator.
    pub fn apply(
        &self,
        u: &GridFunction,
        v: &GridFunction,
    ) -> Result<(GridFunction, GridFunction), SolveError> {
        self.check_nodes(u)?;
        self.check_nodes(v)?;
        let ns = self.s_pts.len();
        let (fvals, hl) = self.forcing(u, v)?;

        let component = |i: usize| -> Vec<f64> {
            let kg = &self.kg[i];
            let f = &fvals[i];
            (0..self.nodes.len())
                .into_par_iter()
                .map(|r| {
                    let row = &kg[r * ns..(r + 1) * ns];
                    let integral: f64 = row.iter().zip(f).map(|(a, b)| a * b).sum();
                    self.gamma[i][0][r] * hl[i][0] + self.gamma[i][1][r] * hl[i][1] + integral
                })
                .collect()
        };
        Ok((
            GridFunction::new(self.nodes.clone(), component(0)),
            GridFunction::new(self.nodes.clone(), component(1)),
        ))
    }

    /// sup |(u,v) - T(u,v)| over the nodes AND the panel midpoints. The
    /// midpoint probes see the interpolation error a node-only residual is
    /// blind to, so this is the number worth reporting.
    pub fn residual(&self, u: &GridFunction, v: &GridFunction) -> Result<f64, SolveError> {
        self.check_nodes(u)?;
        self.check_nodes(v)?;
        let (fvals, hl) = self.forcing(u, v)?;
        let ns = self.s_pts.len();

        let mut worst = 0.0f64;
        for i in 0..2 {
            let x = if i == 0 { u } else { v };
            let kg = &self.kg[i];
            for r in 0..self.nodes.len() {
                let row = &kg[r * ns..(r + 1) * ns];
                let integral: f64 = row.iter().zip(&fvals[i]).map(|(a, b)| a * b).sum();
                let t_val =
                    self.gamma[i][0][r] * hl[i][0] + self.gamma[i][1][r] * hl[i][1] + integral;
                worst = worst.max((x.values[r] - t_val).abs());
            }
        }

        let probes: Vec<(usize, f64)> = self
            .nodes
            .windows(2)
            .enumerate()
            .map(|(pi, w)| (pi, (w[0] + w[1]) / 2.0))
            .collect();
        let rule = gl15();
        for i in 0..2 {
            let x = if i == 0 { u } else { v };
            let eq = &self.p.equations[i];
            let diffs: Vec<f64> = probes
                .par_iter()
                .map(|&(pi, t)| {
                    let mut integral = 0.0;
                    for (q, &s) in self.s_pts.iter().enumerate() {
                        // The probe's own panel is redone below, split at
                        // s = t where the kernel kinks.
                        if q / 15 == pi {
                            continue;
                        }
                        integral += eq.kernel.eval(t, s)? * self.gw[i][q] * fvals[i][q];
                    }
                    let (a, b) = (self.nodes[pi], self.nodes[pi + 1]);
                    for (lo, hi) in [(a, t), (t, b)] {
                        let half = (hi - lo) / 2.0;
                        let mid = (hi + lo) / 2.0;
                        for q in 0..15 {
                            let s = mid + half * rule.nodes[q];
                            let w = half * rule.weights[q];
                            let fv = eq.f.eval(&[s, u.eval(s).max(0.0), v.eval(s).max(0.0)])?;
                            integral += eq.kernel.eval(t, s)? * eq.g.eval(&[s])? * w * fv;
                        }
                    }
                    let g0 = self.p.boundary[i][0].gamma.expr.eval(&[t])?;
                    let g1 = self.p.boundary[i][1].gamma.expr.eval(&[t])?;
                    let t_val = g0 * hl[i][0] + g1 * hl[i][1] + integral;
                    Ok((x.eval(t) - t_val).abs())
                })
                .collect::<Result<_, EvalError>>()?;
            worst = diffs.into_iter().fold(worst, f64::max);
        }
        Ok(worst)
    }

    /// min over [a_i, b_i] at least tilde_c_i times the sup-norm, with a
    /// small slack for discretization.
    pub fn in_cone(&self, g: &GridFunction, i: usize) -> bool {
        let (a, b) = self.interval[i];
        g.min_on(a, b) >= self.tilde_c[i] * g.sup_norm() - 1e-9
    }
}

/// One-shot convenience wrapper; builds the discretization on the input's
/// own node set and applies it once.
pub fn apply_t(
    p: &ProblemDef,
    k: &TheoryConstants,
    u: &GridFunction,
    v: &GridFunction,
) -> Result<(GridFunction, GridFunction), SolveError> {
    let op = Operator::from_nodes(p, k, u.nodes.clone())?;
    op.apply(u, v)
}

// ---------------------------------------------------------------------------
// Picard iteration and multistart

#[derive(Debug, Clone)]
pub struct PicardOptions {
    /// Step fraction in (0, 1]; 1 is the undamped map.
    pub damping: f64,
    /// Stop when the sup-norm update falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Norm ceiling beyond which the iteration counts as diverged.
    pub ceiling: f64,
}

impl PicardOptions {
    pub fn from_problem(p: &ProblemDef) -> Self {
        PicardOptions {
            damping: p.options.damping,
            tol: p.options.picard_tol,
            max_iters: p.options.max_iters,
            ceiling: 1e8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: GridFunction,
    pub v: GridFunction,
    /// sup over nodes of |x - T(x)| at the returned iterate.
    pub residual: f64,
    /// Same quantity probed at panel midpoints as well; includes the
    /// interpolation error the node residual cannot see, so this is the
    /// honest accuracy figure.
    pub residual_probed: f64,
    pub iterations: usize,
    pub converged: bool,
    pub in_cone: [bool; 2],
    /// max of the two component sup-norms.
    pub norm: f64,
    /// Seed bracket, when produced by [`multistart`].
    pub bracket: Option<(f64, f64)>,
}

/// Damped Picard iteration x <- (1-d) x + d T(x), nodewise clamped to be
/// non-negative. Stops when the update falls below `tol`; returns the
/// iterate with the smallest residual seen.
pub fn picard(
    op: &Operator,
    start: (GridFunction, GridFunction),
    opts: &PicardOptions,
) -> Result<SolveResult, SolveError> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(SolveError::Request(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(SolveError::Request("tolerance must be positive".into()));
    }

    let (mut u, mut v) = start;
    op.check_nodes(&u)?;
    op.check_nodes(&v)?;

    let mut best: Option<(f64, GridFunction, GridFunction)> = None;
    let mut iterations = 0;
    let mut converged = false;
    for iteration in 1..=opts.max_iters {
        let (tu, tv) = op.apply(&u, &v)?;
        let resid = u.sup_diff(&tu).max(v.sup_diff(&tv));
        if best.as_ref().is_none_or(|b| resid < b.0) {
            best = Some((resid, u.clone(), v.clone()));
        }
        let nu = u.blend_clamped(&tu, opts.damping);
        let nv = v.blend_clamped(&tv, opts.damping);
        let update = u.sup_diff(&nu).max(v.sup_diff(&nv));
        u = nu;
        v = nv;
        iterations = iteration;
        let norm = u.sup_norm().max(v.sup_norm());
        if !norm.is_finite() || norm > opts.ceiling {
            return Err(SolveError::Diverged {
                norm,
                ceiling: opts.ceiling,
                iteration,
            });
        }
        if update < opts.tol {
            converged = true;
            break;
        }
    }

    let (tu, tv) = op.apply(&u, &v)?;
    let final_resid = u.sup_diff(&tu).max(v.sup_diff(&tv));
    let (residual, u, v) = match best {
        Some((r, bu, bv)) if r < final_resid => (r, bu, bv),
        _ => (final_resid, u, v),
    };
    // Node residuals steered the iteration; the probed figure also looks
    // between nodes.
    let residual_probed = op.residual(&u, &v)?;

    let norm = u.sup_norm().max(v.sup_norm());
    let in_cone = [op.in_cone(&u, 0), op.in_cone(&v, 1)];
    Ok(SolveResult {
        u,
        v,
        residual,
        residual_probed,
        iterations,
        converged,
        in_cone,
        norm,
        bracket: None,
    })
}

/// Run Picard from constant seeds whose norms span each bracket, in
/// parallel. Diverged seeds are dropped; converged results within 1e-4
/// sup-distance of each other collapse to the best-residual representative.
pub fn multistart(
    op: &Operator,
    brackets: &[(f64, f64)],
    seeds_per_bracket: usize,
    opts: &PicardOptions,
) -> Result<Vec<SolveResult>, SolveError> {
    if brackets.is_empty() || seeds_per_bracket == 0 {
        return Err(SolveError::Request(
            "need at least one bracket and one seed per bracket".into(),
        ));
    }
    for b in brackets {
        if !(b.0 >= 0.0 && b.1 > b.0) {
            return Err(SolveError::Request(format!(
                "bracket ({}, {}) is not an increasing pair of non-negative norms",
                b.0, b.1
            )));
        }
    }
    for w in brackets.windows(2) {
        if w[0].1 > w[1].0 {
            return Err(SolveError::Request(format!(
                "brackets ({}, {}) and ({}, {}) overlap or are out of order",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }

    let mut seeds = Vec::new();
    for &(lo, hi) in brackets {
        for s in 0..seeds_per_bracket {
            let c = lo + (hi - lo) * (s as f64 + 1.0) / (seeds_per_bracket as f64 + 1.0);
            seeds.push((c, (lo, hi)));
        }
    }

    let runs = seeds
        .par_iter()
        .map(|&(c, bracket)| {
            let start = (
                GridFunction::constant(op.nodes(), c),
                GridFunction::constant(op.nodes(), c),
            );
            match picard(op, start, opts) {
                Ok(mut r) => {
                    r.bracket = Some(bracket);
                    Ok(Some(r))
                }
                Err(SolveError::Diverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, SolveError>>()?;

    let mut results: Vec<SolveResult> = runs.into_iter().flatten().collect();
    results.sort_by(|a, b| a.residual.partial_cmp(&b.residual).unwrap_or(Ordering::Equal));
    let mut kept: Vec<SolveResult> = Vec::new();
    for r in results {
        let fresh = kept
            .iter()
            .all(|k| k.u.sup_diff(&r.u).max(k.v.sup_diff(&r.v)) >= 1e-4);
        if fresh {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| a.norm.partial_cmp(&b.norm).unwrap_or(Ordering::Equal));
    Ok(kept)
}

/// Re-evaluate a result's residual on a `factor` times finer node set,
/// guarding the reported residual against interpolation artifacts.
pub fn refined_residual(
    p: &ProblemDef,
    k: &TheoryConstants,
    r: &SolveResult,
    factor: usize,
) -> Result<f64, SolveError> {
    let n = (r.u.nodes().len() - 1) * factor.max(1) + 1;
    let op = Operator::new(p, k, n)?;
    let u = op.grid_from_fn(|x| r.u.eval(x));
    let v = op.grid_from_fn(|x| r.v.eval(x));
    let (tu, tv) = op.apply(&u, &v)?;
    Ok(u.sup_diff(&tu).max(v.sup_diff(&tv)))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::compute_all;
    use std::path::Path;
    use std::sync::OnceLock;

    fn load(name: &str) -> (ProblemDef, TheoryConstants) {
        let path = format!(
            concat!(env!("CARGO_MANIFEST_DIR"), "/../../problems/{}"),
            name
        );
        let p = ProblemDef::load(Path::new(&path)).expect("problem loads");
        let k = compute_all(&p).expect("constants");
        (p, k)
    }

    fn toy() -> &'static (ProblemDef, TheoryConstants) {
        static CELL: OnceLock<(ProblemDef, TheoryConstants)> = OnceLock::new();
        CELL.get_or_init(|| load("linear_toy.problem"))
    }

    fn example() -> &'static (ProblemDef, TheoryConstants) {
        static CELL: OnceLock<(ProblemDef, TheoryConstants)> = OnceLock::new();
        CELL.get_or_init(|| load("example.problem"))
    }

    #[test]
    fn grid_function_reproduces_polynomials() {
        let nodes: Arc<[f64]> = (0..21).map(|k| k as f64 / 20.0).collect::<Vec<_>>().into();
        // Quadratics interpolate exactly: values and quadratic-fit slopes
        // are both exact.
        let g = GridFunction::new(nodes.clone(), nodes.iter().map(|&x| x * (1.0 - x)).collect());
        for k in 0..=100 {
            let x = k as f64 / 100.0;
            assert!((g.eval(x) - x * (1.0 - x)).abs() < 1e-14);
        }
        assert!((g.sup_norm() - 0.25).abs() < 1e-15);
        assert!((g.min_on(0.25, 0.75) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn linear_toy_converges_to_the_closed_forms() {
        let (p, k) = toy();
        let op = Operator::new(p, k, 33).unwrap();
        let start = (
            GridFunction::constant(op.nodes(), 0.0),
            GridFunction::constant(op.nodes(), 0.0),
        );
        let opts = PicardOptions {
            damping: 1.0,
            tol: 1e-13,
            max_iters: 10,
            ceiling: 1e8,
        };
        let r = picard(&op, start, &opts).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3, "affine map converges immediately");
        assert!(r.residual < 1e-12);
        // The probed residual honestly reports the beam component's
        // between-node interpolation floor instead of the node zeros.
        assert!(r.residual_probed > r.residual && r.residual_probed < 1e-5);
        // First component: the interpolant matches t(1-t)/2 everywhere.
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!((r.u.eval(t) - t * (1.0 - t) / 2.0).abs() < 1e-10);
        }
        // Second component: node values are Gauss-exact for the quartic;
        // between nodes the interpolant is merely close.
        for (&t, &y) in r.v.nodes().iter().zip(r.v.values()) {
            let exact = t.powi(4) / 24.0 - t.powi(3) / 12.0 + t / 24.0;
            assert!((y - exact).abs() < 1e-12);
        }
        assert!(r.in_cone.iter().all(|&b| b));
    }

    #[test]
    fn example_fixed_point_is_found_and_lies_in_the_cone() {
        let (p, k) = example();
        let op = Operator::new(p, k, 129).unwrap();
        let start = (
            GridFunction::constant(op.nodes(), 0.0),
            GridFunction::constant(op.nodes(), 0.0),
        );
        let opts = PicardOptions {
            damping: 0.5,
            tol: 1e-12,
            max_iters: 400,
            ceiling: 1e8,
        };
        let r = picard(&op, start, &opts).unwrap();
        assert!(r.converged);
        assert!(r.residual_probed < 1e-8, "residual {}", r.residual_probed);
        assert!(r.norm > 0.0);
        assert!(r.in_cone[0] && r.in_cone[1]);

        let fine = refined_residual(p, k, &r, 4).unwrap();
        assert!(
            fine < r.residual_probed * 10.0,
            "refined residual {fine} vs reported {}",
            r.residual_probed
        );
    }

    #[test]
    fn operator_maps_random_cone_pairs_into_the_cone() {
        let (p, k) = example();
        let op = Operator::new(p, k, 65).unwrap();
        let ct = [
            k.per_equation[0].tilde_c.to_f64(),
            k.per_equation[1].tilde_c.to_f64(),
        ];
        // Cheap deterministic congruential stream; the family
        // m + (M-m)(1+sin)/2 keeps min/sup ratios above tilde_c by
        // construction.
        let mut state = 0x243f6a8885a308d3u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let mut comps = Vec::new();
            for i in 0..2 {
                let sup = 0.1 + 9.9 * unit();
                let floor = sup * (ct[i] + (1.0 - ct[i]) * unit());
                let omega = 1.0 + 3.0 * unit();
                let phase = std::f64::consts::TAU * unit();
                comps.push(op.grid_from_fn(|t| {
                    floor
                        + (sup - floor)
                            * (1.0 + (std::f64::consts::TAU * omega * t + phase).sin())
                            / 2.0
                }));
            }
            let v = comps.pop().unwrap();
            let u = comps.pop().unwrap();
            assert!(op.in_cone(&u, 0) && op.in_cone(&v, 1), "seed pair in cone");
            let (tu, tv) = op.apply(&u, &v).unwrap();
            assert!(op.in_cone(&tu, 0), "first component leaves the cone");
            assert!(op.in_cone(&tv, 1), "second component leaves the cone");
        }
    }

    #[test]
    fn superlinear_growth_from_a_large_start_diverges_cleanly() {
        let (p, k) = example();
        let op = Operator::new(p, k, 33).unwrap();
        let start = (
            GridFunction::constant(op.nodes(), 300.0),
            GridFunction::constant(op.nodes(), 300.0),
        );
        let opts = PicardOptions {
            damping: 1.0,
            tol: 1e-10,
            max_iters: 50,
            ceiling: 1e8,
        };
        match picard(&op, start, &opts) {
            Err(SolveError::Diverged { norm, .. }) => assert!(norm > 1e8),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn multistart_deduplicates_and_reports_brackets() {
        let (p, k) = toy();
        let op = Operator::new(p, k, 33).unwrap();
        let opts = PicardOptions {
            damping: 1.0,
            tol: 1e-12,
            max_iters: 20,
            ceiling: 1e8,
        };
        // The affine toy has a single fixed point; every seed lands on it.
        let rs = multistart(&op, &[(0.01, 0.1), (0.1, 0.5)], 2, &opts).unwrap();
        assert_eq!(rs.len(), 1);
        assert!(rs[0].bracket.is_some());
        assert!(rs[0].residual < 1e-12);

        // Zero nonlinearity: only the trivial fixed point remains.
        let mut zv: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/../../problems/linear_toy.problem"
            ))
            .unwrap())
            .unwrap();
        zv["equations"][0]["f"] = "0".into();
        zv["equations"][1]["f"] = "0".into();
        let zp = ProblemDef::from_text(&zv.to_string()).unwrap();
        let zk = compute_all(&zp).unwrap();
        let zop = Operator::new(&zp, &zk, 33).unwrap();
        let rs = multistart(&zop, &[(0.01, 0.1), (0.1, 0.5)], 2, &opts).unwrap();
        assert_eq!(rs.len(), 1);
        assert!(rs[0].norm < 1e-13);

        // Malformed bracket lists are rejected.
        assert!(matches!(
            multistart(&op, &[(0.5, 0.1)], 2, &opts),
            Err(SolveError::Request(_))
        ));
        assert!(matches!(
            multistart(&op, &[(0.0, 0.3), (0.2, 0.4)], 2, &opts),
            Err(SolveError::Request(_))
        ));
    }

    #[test]
    fn operator_rejects_foreign_grids_and_missing_h() {
        let (p, k) = example();
        let op = Operator::new(p, k, 33).unwrap();
        let other: Arc<[f64]> = (0..11).map(|k| k as f64 / 10.0).collect::<Vec<_>>().into();
        let g = GridFunction::constant(other, 1.0);
        assert!(matches!(
            op.apply(&g, &g),
            Err(SolveError::Request(_))
        ));

        let mut stripped = p.clone();
        stripped.boundary[0][0].h_fn = None;
        assert!(matches!(
            Operator::new(&stripped, k, 33),
            Err(SolveError::MissingFn(1, 1, "H"))
        ));
    }

    #[test]
    fn apply_t_matches_the_reusable_operator() {
        let (p, k) = example();
        let op = Operator::new(p, k, 33).unwrap();
        let u = op.grid_from_fn(|t| 1.0 + t);
        let v = op.grid_from_fn(|t| 2.0 - t);
        let (a1, a2) = op.apply(&u, &v).unwrap();
        // The wrapper rebuilds the discretization on the input's own nodes,
        // so it reproduces the reusable operator bit for bit.
        let (b1, b2) = apply_t(p, k, &u, &v).unwrap();
        assert!(a1.sup_diff(&b1) == 0.0);
        assert!(a2.sup_diff(&b2) == 0.0);
        // All summands are non-negative on non-negative input.
        assert!(a1.values().iter().all(|&x| x.is_finite() && x >= 0.0));
        assert!(a2.values().iter().all(|&x| x.is_finite() && x >= 0.0));
    }
}
