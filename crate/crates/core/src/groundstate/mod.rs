//! Radial ground state of `Δ²U − bΔU + aU = U^p` on `R^n`.
//!
//! The linear part is split into `(−Δ + μ1²)(−Δ + μ2²)`, each factor a banded
//! fourth-order finite-difference operator on a uniform radial grid. A
//! Nehari-rescaled fixed-point iteration brings the Gaussian start close to the
//! ground state; Newton on the banded Jacobian finishes the job.

mod interp;
mod spectrum;

pub use interp::{Derivs, ProfileInterp};
pub use spectrum::{linearized_spectrum, linearized_spectrum_with, SpectrumOptions, SpectrumReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::Banded;
use crate::params::{ParamError, ProblemParams};
use crate::quad::radial_weights;
use crate::sphere_area;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundStateError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("grid spacing must be positive and below r_max, got h = {h}, r_max = {r_max}")]
    BadGrid { h: f64, r_max: f64 },
    #[error("grid too short: r_max * decay_rate = {0:.3} < 10")]
    GridTooShort(f64),
    #[error("solver did not converge after {iterations} iterations, last residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("singular linear system at column {0}")]
    Singular(usize),
    #[error("profile fails {0}")]
    Shape(&'static str),
    #[error("tail underflow: U drops below 1e-300 before r_max/2")]
    TailUnderflow,
    #[error("tail window has only {0} usable nodes, need 20")]
    TailWindow(usize),
    #[error("invalid spectrum request: {0}")]
    Spectrum(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spacing {
    Uniform,
}

/// Uniform radial grid `r_i = i h`, `i = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub h: f64,
    pub spacing: Spacing,
    pub nodes: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(h: f64, r_max: f64) -> Result<Self, GroundStateError> {
        if !(h > 0.0 && r_max > 8.0 * h && r_max.is_finite()) {
            return Err(GroundStateError::BadGrid { h, r_max });
        }
        let k = (r_max / h).round() as usize;
        let nodes = (0..=k).map(|i| i as f64 * h).collect();
        Ok(RadialGrid {
            h,
            spacing: Spacing::Uniform,
            nodes,
        })
    }

    /// Default grid: spacing `h` and a radius long enough that the plain
    /// log-slope tail fit sits within about 1% of the true rate.
    pub fn for_params(params: &ProblemParams, h: f64) -> Result<Self, GroundStateError> {
        let mu = params.roots().decay_rate;
        let r_max = (60.0 * (params.n as f64 - 1.0) / mu).max(10.0 / mu);
        Self::uniform(h, (r_max / h).ceil() * h)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Weights for `∫ f(r) r^{n-1} dr`.
    /// Integrands built from the even profile are even in `r` for odd `n`, so
    /// the origin keeps the plain trapezoid weight there.
    pub fn volume_weights(&self, n: usize) -> Vec<f64> {
        let w = radial_weights(self.len() - 1, self.h, n % 2 == 1);
        w.iter()
            .zip(&self.nodes)
            .map(|(w, r)| w * r.powi(n as i32 - 1))
            .collect()
    }
}

/// Ground state sampled on a radial grid with its first three derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub params: ProblemParams,
    pub grid: RadialGrid,
    pub u: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub decay_rate: f64,
    /// Relative residual, see [`relative_residual`].
    pub residual: f64,
    /// `|‖U‖² − ∫U^{p+1}|`.
    pub nehari_gap: f64,
}

impl RadialProfile {
    /// Radial Laplacian `U'' + (n−1)U'/r`, with `n U''(0)` at the origin.
    pub fn laplacian(&self) -> Vec<f64> {
        let nm1 = self.params.n as f64 - 1.0;
        (0..self.u.len())
            .map(|i| {
                if i == 0 {
                    self.params.n as f64 * self.u2[0]
                } else {
                    self.u2[i] + nm1 * self.u1[i] / self.grid.nodes[i]
                }
            })
            .collect()
    }

    /// `∫_{R^n} U^{p+1}`.
    pub fn potential_integral(&self) -> f64 {
        let w = self.grid.volume_weights(self.params.n);
        let p = self.params.p;
        sphere_area(self.params.n)
            * self
                .u
                .iter()
                .zip(&w)
                .map(|(u, w)| w * u.max(0.0).powf(p + 1.0))
                .sum::<f64>()
    }

    /// `‖U‖² = ∫_{R^n} (ΔU)² + b|∇U|² + aU²`.
    pub fn norm_sq(&self) -> f64 {
        let w = self.grid.volume_weights(self.params.n);
        let lap = self.laplacian();
        let ProblemParams { a, b, .. } = self.params;
        let s: f64 = (0..self.u.len())
            .map(|i| {
                w[i] * (lap[i] * lap[i] + b * self.u1[i] * self.u1[i] + a * self.u[i] * self.u[i])
            })
            .sum();
        sphere_area(self.params.n) * s
    }

    pub fn interpolant(&self) -> ProfileInterp<'_> {
        ProfileInterp::new(self)
    }

    /// Same residual evaluated on the every-other-node grid. For a converged
    /// profile this measures the truncation error of the `2h` scheme, so it
    /// shrinks like `h^4` under refinement.
    pub fn consistency_residual(&self) -> f64 {
        let coarse: Vec<f64> = self.u.iter().step_by(2).copied().collect();
        let k = coarse.len() - 1;
        let grid = RadialGrid {
            h: 2.0 * self.grid.h,
            spacing: Spacing::Uniform,
            nodes: (0..=k).map(|i| i as f64 * 2.0 * self.grid.h).collect(),
        };
        residual_on(&self.params, &grid, &coarse)
    }
}

const D1: [f64; 7] = [
    -1.0 / 60.0,
    3.0 / 20.0,
    -3.0 / 4.0,
    0.0,
    3.0 / 4.0,
    -3.0 / 20.0,
    1.0 / 60.0,
];
const D2: [f64; 7] = [
    1.0 / 90.0,
    -3.0 / 20.0,
    3.0 / 2.0,
    -49.0 / 18.0,
    3.0 / 2.0,
    -3.0 / 20.0,
    1.0 / 90.0,
];
const D3: [f64; 9] = [
    -7.0 / 240.0,
    3.0 / 10.0,
    -169.0 / 120.0,
    61.0 / 30.0,
    0.0,
    -61.0 / 30.0,
    169.0 / 120.0,
    -3.0 / 10.0,
    7.0 / 240.0,
];

/// Banded sixth-order `Δ_h` (bandwidth 3) with the even mirror at the origin,
/// where `Δu(0) = n u''(0)`, and a decaying ghost `u_{K+j} = u_K e^{−μ j h}`
/// past the outer node.
fn laplacian_matrix(grid: &RadialGrid, n: usize, mu_ghost: f64) -> Banded {
    let k = grid.len() - 1;
    let h = grid.h;
    let nm1 = n as f64 - 1.0;
    let g = (-mu_ghost * h).exp();
    let mut m = Banded::zeros(k + 1, 3, 3);
    for i in 0..=k {
        for off in 0..7 {
            let coef = if i == 0 {
                n as f64 * D2[off] / (h * h)
            } else {
                D2[off] / (h * h) + nm1 / grid.nodes[i] * D1[off] / h
            };
            let j = i as isize + off as isize - 3;
            if j < 0 {
                m.add(i, (-j) as usize, coef);
            } else if j as usize > k {
                m.add(i, k, coef * g.powi((j as usize - k) as i32));
            } else {
                m.add(i, j as usize, coef);
            }
        }
    }
    m
}

fn factor_matrix(grid: &RadialGrid, n: usize, mu_sq: f64) -> Banded {
    let lap = laplacian_matrix(grid, n, mu_sq.sqrt());
    let len = grid.len();
    let mut out = Banded::zeros(len, 3, 3);
    for i in 0..len {
        for j in i.saturating_sub(3)..(i + 4).min(len) {
            out.set(i, j, -lap.get(i, j));
        }
        out.add(i, i, mu_sq);
    }
    out
}

/// Discrete operator `(−Δ_h + μ1²)(−Δ_h + μ2²)` and its two factors.
pub(crate) struct Operator {
    pub outer: Banded,
    pub inner: Banded,
    pub full: Banded,
}

pub(crate) fn operator(params: &ProblemParams, grid: &RadialGrid) -> Operator {
    let roots = params.roots();
    let outer = factor_matrix(grid, params.n, roots.mu1_sq);
    let inner = factor_matrix(grid, params.n, roots.mu2_sq);
    let full = outer.mul(&inner);
    Operator { outer, inner, full }
}

fn weighted_norm(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt()
}

fn weighted_dot(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((x, y), w)| w * x * y).sum()
}

fn pow_pos(u: &[f64], p: f64) -> Vec<f64> {
    u.iter().map(|x| x.max(0.0).powf(p)).collect()
}

fn residual_on(params: &ProblemParams, grid: &RadialGrid, u: &[f64]) -> f64 {
    let op = operator(params, grid);
    let lu = op.full.matvec(u);
    let f = pow_pos(u, params.p);
    let res: Vec<f64> = lu.iter().zip(&f).map(|(l, f)| l - f).collect();
    weighted_norm(&res, &grid.volume_weights(params.n))
}

/// Weighted (`r^{n−1}`) L² norm of `Δ²U − bΔU + aU − U₊^p` on the grid,
/// using the same discrete operator as the solver.
pub fn residual(profile: &RadialProfile) -> f64 {
    residual_on(&profile.params, &profile.grid, &profile.u)
}

/// [`residual`] divided by the weighted norm of `U₊^p`; zero for `U ≡ 0`.
pub fn relative_residual(profile: &RadialProfile) -> f64 {
    let abs = residual(profile);
    let w = profile.grid.volume_weights(profile.params.n);
    let scale = weighted_norm(&pow_pos(&profile.u, profile.params.p), &w);
    if abs == 0.0 {
        0.0
    } else {
        abs / scale
    }
}

/// Least-squares slope of `−log u` against `r`.
pub fn fit_decay(r: &[f64], u: &[f64]) -> Result<f64, GroundStateError> {
    let pts: Vec<(f64, f64)> = r
        .iter()
        .zip(u)
        .filter(|(_, u)| **u > 1e-300)
        .map(|(r, u)| (*r, -u.ln()))
        .collect();
    if pts.len() < 20 {
        return Err(GroundStateError::TailWindow(pts.len()));
    }
    let m = pts.len() as f64;
    let rbar = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - rbar) * (p.1 - ybar)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - rbar) * (p.0 - rbar)).sum();
    Ok(sxy / sxx)
}

/// Tail decay rate over `[r_max/2, r_max]`.
pub fn decay_rate(profile: &RadialProfile) -> Result<f64, GroundStateError> {
    tail_rate(&profile.grid, &profile.u)
}

fn tail_rate(grid: &RadialGrid, u: &[f64]) -> Result<f64, GroundStateError> {
    let half = 0.5 * grid.r_max();
    let start = grid.nodes.iter().position(|r| *r >= half).unwrap();
    if u[..start].iter().any(|v| *v <= 1e-300) {
        return Err(GroundStateError::TailUnderflow);
    }
    fit_decay(&grid.nodes[start..], &u[start..])
}

/// Solves the radial limit equation to relative residual `tol`.
pub fn solve_ground_state(
    params: ProblemParams,
    grid: RadialGrid,
    tol: f64,
) -> Result<RadialProfile, GroundStateError> {
    let params = crate::params::validate(params)?;
    assert!(tol > 0.0, "tolerance must be positive");
    let roots = params.roots();
    let reach = grid.r_max() * roots.decay_rate;
    if reach < 10.0 {
        return Err(GroundStateError::GridTooShort(reach));
    }
    let p = params.p;
    let w = grid.volume_weights(params.n);
    let op = operator(&params, &grid);
    let outer = op
        .outer
        .clone()
        .factor()
        .map_err(|e| GroundStateError::Singular(e.column))?;
    let inner = op
        .inner
        .clone()
        .factor()
        .map_err(|e| GroundStateError::Singular(e.column))?;

    let mu2 = roots.mu2_sq;
    let mut u: Vec<f64> = grid
        .nodes
        .iter()
        .map(|r| (-0.5 * r * r * mu2).exp())
        .collect();
    let lu = op.full.matvec(&u);
    let t = (weighted_dot(&u, &lu, &w) / weighted_dot(&u, &pow_pos(&u, p), &w)).powf(1.0 / (p - 1.0));
    u.iter_mut().for_each(|x| *x *= t);

    // Nehari-rescaled fixed point
    let mut iterations = 0;
    for _ in 0..500 {
        iterations += 1;
        let f = pow_pos(&u, p);
        let v = inner.solve(&outer.solve(&f));
        let num = weighted_dot(&v, &f, &w);
        let den = weighted_dot(&v, &pow_pos(&v, p), &w);
        let t = (num / den).powf(1.0 / (p - 1.0));
        let next: Vec<f64> = v.iter().map(|x| t * x).collect();
        let scale = next.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let change = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        u = next;
        if change < 1e-7 {
            break;
        }
    }

    // Newton polish
    let mut rel = f64::INFINITY;
    for _ in 0..30 {
        iterations += 1;
        let f = pow_pos(&u, p);
        let lu = op.full.matvec(&u);
        let res: Vec<f64> = lu.iter().zip(&f).map(|(l, f)| l - f).collect();
        let new_rel = weighted_norm(&res, &w) / weighted_norm(&f, &w);
        if new_rel < 1e-14 || new_rel > 0.5 * rel {
            rel = rel.min(new_rel);
            break;
        }
        rel = new_rel;
        let mut jac = op.full.clone();
        let d: Vec<f64> = u.iter().map(|x| -p * x.max(0.0).powf(p - 1.0)).collect();
        jac.add_diagonal(&d);
        let lu_j = jac
            .factor()
            .map_err(|e| GroundStateError::Singular(e.column))?;
        let delta = lu_j.solve(&res);
        u.iter_mut().zip(&delta).for_each(|(x, d)| *x -= d);
    }
    if !(rel < tol) {
        return Err(GroundStateError::NotConverged {
            iterations,
            residual: rel,
        });
    }
    build_profile(params, grid, u)
}

/// Fills in derivatives and diagnostics for a converged sample vector.
pub(crate) fn build_profile(
    params: ProblemParams,
    grid: RadialGrid,
    u: Vec<f64>,
) -> Result<RadialProfile, GroundStateError> {
    let mu = params.roots().decay_rate;
    let (u1, u2, u3) = derivatives(&u, grid.h, mu);
    if u.iter().any(|x| !(*x > 0.0)) {
        return Err(GroundStateError::Shape("positivity"));
    }
    if u.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GroundStateError::Shape("strict radial monotonicity"));
    }
    let decay = tail_rate(&grid, &u)?;
    let mut profile = RadialProfile {
        params,
        grid,
        u,
        u1,
        u2,
        u3,
        decay_rate: decay,
        residual: 0.0,
        nehari_gap: 0.0,
    };
    profile.residual = relative_residual(&profile);
    profile.nehari_gap = (profile.norm_sq() - profile.potential_integral()).abs();
    Ok(profile)
}

/// Sixth-order central differences with even mirror at 0 and exponential ghosts.
fn derivatives(u: &[f64], h: f64, mu: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = u.len() - 1;
    let g = (-mu * h).exp();
    let at = |j: isize| -> f64 {
        if j < 0 {
            u[(-j) as usize]
        } else if j as usize > k {
            u[k] * g.powi((j as usize - k) as i32)
        } else {
            u[j as usize]
        }
    };
    let mut d1 = vec![0.0; k + 1];
    let mut d2 = vec![0.0; k + 1];
    let mut d3 = vec![0.0; k + 1];
    for i in 1..=k {
        let c = i as isize;
        d1[i] = (0..7).map(|o| D1[o] * at(c + o as isize - 3)).sum::<f64>() / h;
        d2[i] = (0..7).map(|o| D2[o] * at(c + o as isize - 3)).sum::<f64>() / (h * h);
        d3[i] = (0..9).map(|o| D3[o] * at(c + o as isize - 4)).sum::<f64>() / (h * h * h);
    }
    d2[0] = (0..7).map(|o| D2[o] * at(o as isize - 3)).sum::<f64>() / (h * h);
    (d1, d2, d3)
}
