//! Approximate solution `W = U(z/ε)χ(z)` on a normal-coordinate chart, the
//! ε-scaled energy, its expansion in ε², and remainder scaling.
//!
//! Everything is evaluated in stretched coordinates `y = z/ε`, where the
//! metric reads `g^{ij} = δ + ½ε² H_ijkl y_k y_l` and
//! `√|g| = 1 − ¼ε² Σ_l H_llkm y_k y_m`. Both truncations are used as the exact
//! metric. The scaled Laplace–Beltrami operator is taken in divergence form,
//! `ŝ⁻¹ ∂_i(ŝ a^{ij} ∂_j)`.

mod ball;
pub mod jet2;
mod norms;
mod remainder;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_moment, radial_moment_samples, tau, GeometryError, MetricJet};
use crate::groundstate::{ProfileInterp, RadialProfile};
use crate::sphere_area;

pub use ball::{AngularRule, RadialSamples};
pub use jet2::Jet2;
pub use norms::{
    eps_norm, eps_norm_sq, lp_eps_norm, BallRule, ChartFunction, ConstantFunction,
    TranslationMode,
};
pub use remainder::{
    remainder_term_norms, remainder_norm, remainder_scaling, TermTable, RemainderOptions,
    RemainderSample, RemainderScaling, TermKind, TermNorm, TERM_LABELS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("quadrature not converged: value {value:e}, estimate {estimate:e}")]
    Quadrature { value: f64, estimate: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// S(t) = t⁵(126 − 420t + 540t² − 315t³ + 70t⁴)
const SMOOTHSTEP: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

/// Value and first four derivatives of a polynomial.
fn poly_derivs(c: &[f64], t: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in (k..c.len()).rev() {
            let mut f = 1.0;
            for q in 0..k {
                f *= (j - q) as f64;
            }
            acc = acc * t + f * c[j];
        }
        *slot = acc;
    }
    out
}

/// Default chart radius; large enough that the cutoff leaks below rounding
/// at ε = 0.2 for the standard parameters.
pub const DEFAULT_CHART_RADIUS: f64 = 10.0;

/// Radial cutoff equal to 1 on `|z| ≤ r/2` and 0 on `|z| ≥ r`, with a
/// degree-9 smoothstep in between (four continuous derivatives).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub r: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        CutoffSpec {
            r: DEFAULT_CHART_RADIUS,
        }
    }
}

impl CutoffSpec {
    pub fn new(r: f64) -> Result<Self, EnergyError> {
        if !(r.is_finite() && r > 0.0) {
            return Err(EnergyError::Config(format!("chart radius must be positive, got {r}")));
        }
        Ok(CutoffSpec { r })
    }

    /// `χ, χ', …, χ''''` at radius `s = |z|`.
    pub fn eval(&self, s: f64) -> [f64; 5] {
        let half = 0.5 * self.r;
        let s = s.abs();
        if s <= half {
            return [1.0, 0.0, 0.0, 0.0, 0.0];
        }
        if s >= self.r {
            return [0.0; 5];
        }
        let t = (s - half) / half;
        let d = poly_derivs(&SMOOTHSTEP, t);
        let k = 1.0 / half;
        [1.0 - d[0], -d[1] * k, -d[2] * k * k, -d[3] * k.powi(3), -d[4] * k.powi(4)]
    }

    /// `sup |χ^{(k)}|` for `k = 1..4`, from a dense scan of the transition.
    pub fn derivative_bounds(&self) -> [f64; 4] {
        let mut out = [0.0f64; 4];
        let m = 20_000;
        for i in 0..=m {
            let s = 0.5 * self.r * (1.0 + i as f64 / m as f64);
            let d = self.eval(s);
            for k in 0..4 {
                out[k] = out[k].max(d[k + 1].abs());
            }
        }
        out
    }
}

/// Quadrature settings for ball integrals in stretched coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// Use every `stride`-th profile node as a radial node.
    pub stride: usize,
    /// Gauss points per polar angle.
    pub angular: usize,
    /// Radial cut where `U < tail · U(0)`.
    pub tail: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            stride: 1,
            angular: 6,
            tail: 1e-20,
        }
    }
}

impl QuadOptions {
    fn validate(&self) -> Result<(), EnergyError> {
        if self.stride == 0 || self.angular == 0 || !(self.tail > 0.0 && self.tail < 1.0) {
            return Err(EnergyError::Config(format!("bad quadrature options {self:?}")));
        }
        Ok(())
    }
}

// ψ(t) with t = ρ², fitted near the origin where the conversion from
// ρ-derivatives loses precision
const SMALL_RHO: f64 = 1.0;
const FIT_RHO: f64 = 1.5;
const FIT_DEGREE: usize = 12;

#[derive(Debug, Clone)]
struct SmallFit {
    c: Vec<f64>,
    t0: f64,
}

impl SmallFit {
    fn new(profile: &RadialProfile) -> Self {
        let h = profile.grid.h;
        let kmax = ((FIT_RHO / h).round() as usize).clamp(12, profile.u.len() - 1);
        let rho_fit = kmax as f64 * h;
        let t0 = rho_fit * rho_fit;
        let nc = FIT_DEGREE + 1;
        let rows = 4 * (kmax + 1);
        let mut a = DMatrix::<f64>::zeros(rows, nc);
        let mut rhs = DVector::<f64>::zeros(rows);
        let series = [&profile.u, &profile.u1, &profile.u2, &profile.u3];
        for i in 0..=kmax {
            let r = i as f64 * h;
            for (d, s) in series.iter().enumerate() {
                let row = 4 * i + d;
                // derivatives scaled by ρ_fit^d so all rows are commensurate
                let scale = rho_fit.powi(d as i32);
                rhs[row] = s[i] * scale;
                for j in 0..nc {
                    let pw = 2 * j;
                    if d > pw {
                        continue;
                    }
                    let mut f = 1.0;
                    for q in 0..d {
                        f *= (pw - q) as f64;
                    }
                    a[(row, j)] = f * r.powi((pw - d) as i32) / t0.powi(j as i32) * scale;
                }
            }
        }
        let svd = a.svd(true, true);
        let c = svd
            .solve(&rhs, 1e-13)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|_| vec![0.0; nc]);
        SmallFit { c, t0 }
    }

    fn psi(&self, t: f64) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in (k..self.c.len()).rev() {
                let mut f = 1.0;
                for q in 0..k {
                    f *= (j - q) as f64;
                }
                acc = acc * (t / self.t0) + f * self.c[j];
            }
            *slot = acc / self.t0.powi(k as i32);
        }
        out
    }
}

/// `t`-derivatives of `ψ(t) = Φ(√t)` from `ρ`-derivatives of `Φ`.
fn psi_from_phi(rho: f64, f: &[f64; 5]) -> [f64; 5] {
    let r = rho;
    [
        f[0],
        f[1] / (2.0 * r),
        (f[2] - f[1] / r) / (4.0 * r * r),
        (f[3] - 3.0 * f[2] / r + 3.0 * f[1] / (r * r)) / (8.0 * r.powi(3)),
        (f[4] - 6.0 * f[3] / r + 15.0 * f[2] / (r * r) - 15.0 * f[1] / r.powi(3))
            / (16.0 * r.powi(4)),
    ]
}

/// Shared metric checks for a jet on a chart of radius `r`.
pub(crate) fn check_chart(jet: &MetricJet, r: f64) -> Result<(), EnergyError> {
    let n = jet.n;
    let mut row_max = 0.0f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            let mut fro = 0.0;
            for k in 0..n {
                for l in 0..n {
                    fro += jet.get(i, j, k, l).powi(2);
                }
            }
            row += fro.sqrt();
        }
        row_max = row_max.max(row);
    }
    let mut tr = 0.0;
    for k in 0..n {
        for m in 0..n {
            let t: f64 = (0..n).map(|l| jet.get(l, l, k, m)).sum();
            tr += t * t;
        }
    }
    let g_margin = 1.0 - 0.5 * r * r * row_max;
    let s_margin = 1.0 - 0.25 * r * r * tr.sqrt();
    if g_margin <= 0.0 || s_margin <= 0.0 {
        return Err(EnergyError::Config(format!(
            "jet too large for chart radius {r}: metric positivity margins {g_margin:.3e}, {s_margin:.3e}"
        )));
    }
    Ok(())
}

/// `W_ε(z) = U(z/ε) χ(z)` together with the chart metric.
#[derive(Debug, Clone)]
pub struct ApproxSolution<'a> {
    pub profile: &'a RadialProfile,
    pub eps: f64,
    pub jet: MetricJet,
    pub cutoff: CutoffSpec,
    pub quad: QuadOptions,
    interp: ProfileInterp<'a>,
    small: SmallFit,
}

pub fn assemble_w<'a>(
    profile: &'a RadialProfile,
    eps: f64,
    jet: &MetricJet,
    cutoff: CutoffSpec,
) -> Result<ApproxSolution<'a>, EnergyError> {
    let n = profile.params.n;
    if jet.n != n {
        return Err(EnergyError::Config(format!(
            "jet dimension {} does not match profile dimension {n}",
            jet.n
        )));
    }
    if n > jet2::MAX_DIM {
        return Err(EnergyError::Config(format!(
            "dimension {n} exceeds the supported {}",
            jet2::MAX_DIM
        )));
    }
    let mu = profile.params.roots().decay_rate;
    let limit = cutoff.r * mu / 10.0;
    if !(eps > 0.0 && eps < limit) {
        return Err(EnergyError::Config(format!(
            "ε = {eps} must lie in (0, r·μ/10) = (0, {limit:.4})"
        )));
    }
    if 0.5 * cutoff.r / eps <= FIT_RHO {
        return Err(EnergyError::Config(format!(
            "cutoff transition at ρ = {} overlaps the near-origin fit",
            0.5 * cutoff.r / eps
        )));
    }
    check_chart(jet, cutoff.r)?;
    Ok(ApproxSolution {
        profile,
        eps,
        jet: jet.clone(),
        cutoff,
        quad: QuadOptions::default(),
        interp: profile.interpolant(),
        small: SmallFit::new(profile),
    })
}

impl<'a> ApproxSolution<'a> {
    pub fn with_quad(mut self, quad: QuadOptions) -> Result<Self, EnergyError> {
        quad.validate()?;
        self.quad = quad;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.profile.params.n
    }

    /// `W(z)`.
    pub fn value(&self, z: &[f64]) -> f64 {
        let s = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.radial_z(s)[0]
    }

    /// `W` and its first four radial derivatives at `|z| = s`.
    pub fn radial_z(&self, s: f64) -> [f64; 5] {
        let f = self.phi(s / self.eps);
        let mut out = [0.0; 5];
        for k in 0..5 {
            out[k] = f[k] / self.eps.powi(k as i32);
        }
        out
    }

    /// `χ̂^{(k)}(ρ)` for `χ̂(ρ) = χ(ερ)`.
    pub fn cutoff_y(&self, rho: f64) -> [f64; 5] {
        let c = self.cutoff.eval(self.eps * rho);
        let mut out = c;
        for (k, v) in out.iter_mut().enumerate() {
            *v *= self.eps.powi(k as i32);
        }
        out
    }

    /// Radial derivatives of `Φ = U χ̂` at `ρ` from supplied `U` derivatives.
    pub fn phi_from(&self, rho: f64, u: &[f64; 5]) -> [f64; 5] {
        let c = self.cutoff_y(rho);
        if c[0] == 1.0 && c[1] == 0.0 {
            return *u;
        }
        const BINOM: [[f64; 5]; 5] = [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0, 0.0],
            [1.0, 2.0, 1.0, 0.0, 0.0],
            [1.0, 3.0, 3.0, 1.0, 0.0],
            [1.0, 4.0, 6.0, 4.0, 1.0],
        ];
        let mut out = [0.0; 5];
        for k in 0..5 {
            for j in 0..=k {
                out[k] += BINOM[k][j] * u[j] * c[k - j];
            }
        }
        out
    }

    /// Radial derivatives of `Φ = U χ̂` at `ρ` through the profile interpolant.
    pub fn phi(&self, rho: f64) -> [f64; 5] {
        let d = self.interp.eval(rho);
        self.phi_from(rho, &[d.u, d.u1, d.u2, d.u3, d.u4])
    }

    /// `t`-derivatives of `Ŵ` as a function of `t = |y|²`.
    pub(crate) fn psi(&self, rho: f64, phi: &[f64; 5]) -> [f64; 5] {
        if rho < SMALL_RHO {
            self.small.psi(rho * rho)
        } else {
            psi_from_phi(rho, phi)
        }
    }

    /// Second-order jet of `Ŵ(y) = W(εy)` with respect to `y`.
    pub fn jet_y(&self, y: &[f64]) -> Jet2 {
        let rho = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ps = self.psi(rho, &self.phi(rho));
        let n = self.n();
        Jet2::from_parts(
            n,
            ps[0],
            &y.iter().map(|x| 2.0 * x * ps[1]).collect::<Vec<_>>(),
            |a, b| 4.0 * y[a] * y[b] * ps[2] + if a == b { 2.0 * ps[1] } else { 0.0 },
        )
    }

    /// Second-order jet of `W` with respect to `z`.
    pub fn jet_z(&self, z: &[f64]) -> Jet2 {
        let y: Vec<f64> = z.iter().map(|x| x / self.eps).collect();
        rescale_jet(self.jet_y(&y), self.eps)
    }

    /// Radius in `y` beyond which the profile is negligible or the cutoff
    /// vanishes.
    pub fn rho_max(&self) -> f64 {
        let p = self.profile;
        let thresh = self.quad.tail * p.u[0];
        let k = p.u.iter().position(|u| *u < thresh).unwrap_or(p.u.len() - 1);
        (k as f64 * p.grid.h).min(self.cutoff.r / self.eps)
    }
}

/// Converts a `y`-jet to a `z = εy` jet.
pub(crate) fn rescale_jet(mut j: Jet2, eps: f64) -> Jet2 {
    let n = j.n;
    for a in 0..n {
        j.g[a] /= eps;
        for b in 0..n {
            j.h[a][b] /= eps * eps;
        }
    }
    j
}

/// Per-direction contractions of the jet used by radial integrands.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DirectionData {
    /// `ωᵀMω` with `M_ij = Σ H_ijkl ω_k ω_l`
    q: f64,
    /// `tr M`
    t: f64,
    /// `Σ H_ijik ω_k ω_j`
    p: f64,
    /// `Σ Q_i M_ij ω_j` with `Q_i = Σ H_llim ω_m`
    qm: f64,
}

impl DirectionData {
    pub(crate) fn new(jet: &MetricJet, w: &[f64]) -> Self {
        let n = jet.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += jet.get(i, j, k, l) * w[k] * w[l];
                    }
                }
                m[i * n + j] = s;
            }
        }
        let mut q = 0.0;
        let mut t = 0.0;
        let mut p = 0.0;
        for i in 0..n {
            t += m[i * n + i];
            for j in 0..n {
                q += w[i] * m[i * n + j] * w[j];
                for k in 0..n {
                    p += jet.get(i, j, i, k) * w[k] * w[j];
                }
            }
        }
        let mut qm = 0.0;
        for i in 0..n {
            let mut qi = 0.0;
            for l in 0..n {
                for mm in 0..n {
                    qi += jet.get(l, l, i, mm) * w[mm];
                }
            }
            for j in 0..n {
                qm += qi * m[i * n + j] * w[j];
            }
        }
        DirectionData { q, t, p, qm }
    }
}

/// Energy density (including the volume factor `ŝ`) at `ρω`.
#[inline]
fn energy_density(
    rho: f64,
    f: &[f64; 3],
    d: &DirectionData,
    e: f64,
    n: usize,
    a: f64,
    b: f64,
    p: f64,
) -> f64 {
    let (phi, d1, d2) = (f[0], f[1], f[2]);
    let r2 = rho * rho;
    let s = 1.0 - 0.25 * e * r2 * d.t;
    let over = if rho == 0.0 { d2 } else { d1 / rho };
    let lap = d2 * (1.0 + 0.5 * e * r2 * d.q)
        + over * (n as f64 - 1.0 + 0.5 * e * r2 * (d.t - d.q))
        + e * rho * d1 * d.p
        - e * rho * d1 / (2.0 * s) * (d.t + 0.5 * e * r2 * d.qm);
    let grad = d1 * d1 * (1.0 + 0.5 * e * r2 * d.q);
    let pos = phi.max(0.0);
    (0.5 * lap * lap + 0.5 * b * grad + 0.5 * a * phi * phi - pos.powf(p + 1.0) / (p + 1.0)) * s
}

/// `J_ε(W)` together with the flat-space value from the same radial nodes.
fn j_eps_raw(w: &ApproxSolution, stride: usize, m: usize) -> (f64, f64) {
    let prof = w.profile;
    let (n, a, b, p) = (prof.params.n, prof.params.a, prof.params.b, prof.params.p);
    let samples = RadialSamples::new(prof, stride, w.rho_max());
    let rule = AngularRule::product(n, m, true);
    let dirs: Vec<DirectionData> = (0..rule.len())
        .map(|k| DirectionData::new(&w.jet, rule.node(k)))
        .collect();
    let flat_dir = DirectionData {
        q: 0.0,
        t: 0.0,
        p: 0.0,
        qm: 0.0,
    };
    let e = w.eps * w.eps;
    let area = sphere_area(n);
    let mut total = 0.0;
    let mut flat = 0.0;
    for i in 0..samples.len() {
        let wr = samples.weights[i];
        if wr == 0.0 {
            continue;
        }
        let rho = samples.rho[i];
        let u = [
            samples.u[i],
            samples.u1[i],
            samples.u2[i],
            samples.u3[i],
            samples.u4[i],
        ];
        let f = w.phi_from(rho, &u);
        let f3 = [f[0], f[1], f[2]];
        let mut acc = 0.0;
        for (d, wa) in dirs.iter().zip(&rule.weights) {
            acc += wa * energy_density(rho, &f3, d, e, n, a, b, p);
        }
        total += wr * acc;
        let u3 = [u[0], u[1], u[2]];
        flat += wr * area * energy_density(rho, &u3, &flat_dir, e, n, a, b, p);
    }
    (total, flat)
}

/// `ε^{−n} ∫ (ε⁴/2 (Δ_g W)² + ε² b/2 |∇W|²_g + a/2 W² − W₊^{p+1}/(p+1)) dV_g`.
pub fn j_eps(w: &ApproxSolution) -> Result<f64, EnergyError> {
    w.quad.validate()?;
    let (j, _) = j_eps_raw(w, w.quad.stride, w.quad.angular);
    if !j.is_finite() {
        return Err(EnergyError::Quadrature {
            value: j,
            estimate: f64::NAN,
        });
    }
    Ok(j)
}

/// `J_ε`, the matching flat reference `α_h` on the same radial nodes, and a
/// quadrature error estimate from a coarser radial and angular rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JEps {
    pub value: f64,
    pub alpha_h: f64,
    pub error: f64,
}

pub fn j_eps_detailed(w: &ApproxSolution) -> Result<JEps, EnergyError> {
    w.quad.validate()?;
    let (j, a0) = j_eps_raw(w, w.quad.stride, w.quad.angular);
    let (j2, a2) = j_eps_raw(w, 2 * w.quad.stride, w.quad.angular);
    let m_lo = w.quad.angular.saturating_sub(2).max(1);
    let (j3, a3) = j_eps_raw(w, w.quad.stride, m_lo);
    let rounding = 64.0 * f64::EPSILON * a0.abs();
    let error = ((j - a0) - (j2 - a2)).abs() + ((j - a0) - (j3 - a3)).abs() + rounding;
    if !(j.is_finite() && error.is_finite()) {
        return Err(EnergyError::Quadrature {
            value: j,
            estimate: error,
        });
    }
    Ok(JEps {
        value: j,
        alpha_h: a0,
        error,
    })
}

/// `½∫(ΔU)² + b|∇U|² + aU² − (1/(p+1))∫U^{p+1}` over `R^n`.
pub fn alpha(profile: &RadialProfile) -> f64 {
    let (a, b, p) = (profile.params.a, profile.params.b, profile.params.p);
    let lap = profile.laplacian();
    let w = profile.grid.volume_weights(profile.params.n);
    let s: f64 = (0..profile.u.len())
        .map(|i| {
            let u = profile.u[i];
            w[i] * (0.5 * (lap[i] * lap[i] + b * profile.u1[i].powi(2) + a * u * u)
                - u.max(0.0).powf(p + 1.0) / (p + 1.0))
        })
        .sum();
    sphere_area(profile.params.n) * s
}

fn moment(profile: &RadialProfile, f: impl Fn(usize) -> f64, power: i32) -> f64 {
    let w: Vec<f64> = (0..profile.u.len()).map(f).collect();
    match radial_moment_samples(profile.grid.h, &w, power) {
        Ok(v) => v,
        Err(GeometryError::Quadrature { fine, .. }) => fine,
        Err(_) => f64::NAN,
    }
}

fn over_r(profile: &RadialProfile, i: usize) -> f64 {
    let r = profile.grid.nodes[i];
    if r == 0.0 {
        profile.u2[i]
    } else {
        profile.u1[i] / r
    }
}

/// `∫(U'/|z| − U'')² z₁²z₂² dz + (b/2)∫(U')² z₁²z₂² dz`.
pub fn beta(profile: &RadialProfile) -> f64 {
    let n = profile.params.n;
    let b = profile.params.b;
    let rad = moment(
        profile,
        |i| (over_r(profile, i) - profile.u2[i]).powi(2) + 0.5 * b * profile.u1[i].powi(2),
        n as i32 + 3,
    );
    rad * angular_moment(n, 1, 1)
}

/// Radial integrals entering the ε² coefficient of `J_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionMoments {
    /// `∫ ΔU (U'' − U'/ρ) ρ^{n+1}`
    pub hess_lap: f64,
    /// `∫ ΔU U' ρ^n`
    pub lap_grad: f64,
    /// `∫ U'² ρ^{n+1}`
    pub grad_sq: f64,
    /// `∫ [½(ΔU)² + (b/2)U'² + (a/2)U² − U^{p+1}/(p+1)] ρ^{n+1}`
    pub density: f64,
    /// `∫ (ΔU)² ρ^{n+1}`
    pub lap_sq: f64,
    /// `∫ [(b/8)U'² − U^{p+1}/(4(p+1)) − (a/8)U²] ρ^{n+1}`
    pub reference_density: f64,
    /// `|S^{n−1}|/n`
    pub m2: f64,
    /// `|S^{n−1}|/(n(n+2))`
    pub m4: f64,
}

pub fn expansion_moments(profile: &RadialProfile) -> ExpansionMoments {
    let n = profile.params.n;
    let (a, b, p) = (profile.params.a, profile.params.b, profile.params.p);
    let lap = profile.laplacian();
    let np = n as i32;
    let area = sphere_area(n);
    ExpansionMoments {
        hess_lap: moment(profile, |i| lap[i] * (profile.u2[i] - over_r(profile, i)), np + 1),
        lap_grad: moment(profile, |i| lap[i] * profile.u1[i], np),
        grad_sq: moment(profile, |i| profile.u1[i].powi(2), np + 1),
        density: moment(
            profile,
            |i| {
                let u = profile.u[i];
                0.5 * lap[i] * lap[i] + 0.5 * b * profile.u1[i].powi(2) + 0.5 * a * u * u
                    - u.max(0.0).powf(p + 1.0) / (p + 1.0)
            },
            np + 1,
        ),
        lap_sq: moment(profile, |i| lap[i] * lap[i], np + 1),
        reference_density: moment(
            profile,
            |i| {
                let u = profile.u[i];
                b / 8.0 * profile.u1[i].powi(2)
                    - u.max(0.0).powf(p + 1.0) / (4.0 * (p + 1.0))
                    - a / 8.0 * u * u
            },
            np + 1,
        ),
        m2: area / n as f64,
        m4: area / (n * (n + 2)) as f64,
    }
}

/// ε² coefficient of `J_ε(W)` for a general jet, from radial moments:
/// `½m₄(τ+2σ)I₁ + σm₂I₂ + (b/4)m₄(τ+2σ)I₃ − (τ/4)m₂I₄`.
pub fn semi_analytic_c2(profile: &RadialProfile, jet: &MetricJet) -> f64 {
    let mo = expansion_moments(profile);
    let b = profile.params.b;
    let (t, s) = (tau(jet), jet.sigma());
    0.5 * mo.m4 * (t + 2.0 * s) * mo.hess_lap + s * mo.m2 * mo.lap_grad
        + 0.25 * b * mo.m4 * (t + 2.0 * s) * mo.grad_sq
        - 0.25 * t * mo.m2 * mo.density
}

/// The standard four-term ε² bracket for this expansion,
/// each term evaluated exactly. It omits the first-order drift cross term and
/// carries different weights on the `(ΔU)²` and `U²` pieces, so it differs
/// from [`semi_analytic_c2`].
pub fn reference_bracket_c2(profile: &RadialProfile, jet: &MetricJet) -> f64 {
    let mo = expansion_moments(profile);
    let b = profile.params.b;
    let (t, s) = (tau(jet), jet.sigma());
    let p1 = 0.5 * (mo.m4 * (t + 2.0 * s) * mo.hess_lap + t * mo.m2 * mo.lap_grad);
    let p2 = -0.25 * t * mo.m2 * mo.lap_sq;
    let p3 = 0.25 * b * mo.m4 * (t + 2.0 * s) * mo.grad_sq;
    let p4 = -t * mo.m2 * mo.reference_density;
    p1 + p2 + p3 + p4
}

/// Limits of the translation-mode norms as ε → 0, for `Ψ = ∂U/∂z₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationLimits {
    /// `∫ (ΔΨ)² + b|∇Ψ|² + aΨ²`, the limit of `ε²‖∂_{z₁}W‖²_ε`
    pub eps_norm_sq: f64,
    /// `∫ |∇Ψ|² + Ψ²`
    pub h1_sq: f64,
    pub psi_sq: f64,
    pub grad_psi_sq: f64,
    pub lap_psi_sq: f64,
}

pub fn translation_limits(profile: &RadialProfile) -> TranslationLimits {
    let n = profile.params.n;
    let np = n as i32;
    let (a, b) = (profile.params.a, profile.params.b);
    let area = sphere_area(n);
    let m2 = area / n as f64;
    let nf = n as f64;
    // (ΔU)' = U''' + (n−1)(U''/ρ − U'/ρ²), with limit 0 at the origin
    let dlap = |i: usize| {
        let r = profile.grid.nodes[i];
        if r == 0.0 {
            0.0
        } else {
            profile.u3[i] + (nf - 1.0) * (profile.u2[i] / r - profile.u1[i] / (r * r))
        }
    };
    let psi_sq = m2 * moment(profile, |i| profile.u1[i].powi(2), np - 1);
    let grad_psi_sq = moment(
        profile,
        |i| {
            let o = over_r(profile, i).powi(2);
            area * o + m2 * (profile.u2[i].powi(2) - o)
        },
        np - 1,
    );
    let lap_psi_sq = m2 * moment(profile, |i| dlap(i).powi(2), np - 1);
    TranslationLimits {
        eps_norm_sq: lap_psi_sq + b * grad_psi_sq + a * psi_sq,
        h1_sq: grad_psi_sq + psi_sq,
        psi_sq,
        grad_psi_sq,
        lap_psi_sq,
    }
}

/// Energy samples over an ε grid with the fitted ε² coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: Vec<f64>,
    pub j: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub sigma: f64,
    /// `(J − α − βε²τ)/ε²`
    pub residual: Vec<f64>,
    /// `(J − α)/ε²`
    pub scaled: Vec<f64>,
    /// Quadrature error estimates of `J`.
    pub quad_error: Vec<f64>,
    pub c2: f64,
    /// Error bar on `c2` propagated from the quadrature estimates.
    pub c2_error: f64,
    pub c4: f64,
    pub c2_over_tau: Option<f64>,
    pub c2_over_beta_tau: Option<f64>,
    pub semi_analytic_c2: f64,
    pub reference_bracket_c2: f64,
    /// Log–log slope of `|J − α − c₂ε²|`.
    pub order: Option<f64>,
    /// Residual magnitudes failed to decrease beyond quadrature error.
    pub flagged: bool,
    pub angular_nodes: usize,
    pub radial_stride: usize,
    pub chart_radius: f64,
}

/// Least-squares polynomial fit `y ≈ Σ c_k x^k`.
pub(crate) fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let m = x.len();
    let nc = (degree + 1).min(m);
    let a = DMatrix::from_fn(m, nc, |i, k| x[i].powi(k as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-15)
        .map(|v| v.iter().copied().collect())
        .unwrap_or_else(|_| vec![f64::NAN; nc])
}

/// Slope of `log|v|` against `log ε`; `None` when fewer than two nonzero
/// finite values are available.
pub fn log_slope(eps: &[f64], v: &[f64]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(v)
        .filter(|(_, v)| v.is_finite() && v.abs() > 0.0)
        .map(|(e, v)| (e.ln(), v.abs().ln()))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    let c = polyfit(&x, &y, 1);
    c.get(1).copied()
}

pub fn expansion_fit(
    profile: &RadialProfile,
    jet: &MetricJet,
    eps_grid: &[f64],
    cutoff: CutoffSpec,
    quad: QuadOptions,
) -> Result<EnergyReport, EnergyError> {
    if eps_grid.len() < 4 {
        return Err(EnergyError::Config("ε grid needs at least 4 values".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(EnergyError::Config("ε grid must be strictly decreasing".into()));
    }
    let al = alpha(profile);
    let be = beta(profile);
    let t = tau(jet);
    let mut j = Vec::new();
    let mut diff = Vec::new();
    let mut quad_error = Vec::new();
    let mut angular_nodes = 0;
    for &e in eps_grid {
        let w = assemble_w(profile, e, jet, cutoff)?.with_quad(quad)?;
        angular_nodes = AngularRule::product(profile.params.n, quad.angular, true).len();
        let r = j_eps_detailed(&w)?;
        j.push(r.value);
        // differences against the flat value on the same nodes cancel the
        // radial discretization of α
        diff.push(r.value - r.alpha_h);
        quad_error.push(r.error);
    }
    let x: Vec<f64> = eps_grid.iter().map(|e| e * e).collect();
    let scaled: Vec<f64> = diff.iter().zip(&x).map(|(d, x)| d / x).collect();
    let degree = if eps_grid.len() >= 4 { 2 } else { 1 };
    let c = polyfit(&x, &scaled, degree);
    let c2 = c[0];
    let c4 = c.get(1).copied().unwrap_or(0.0);
    let c2_error = quad_error
        .iter()
        .zip(&x)
        .map(|(q, x)| q / x)
        .fold(0.0f64, f64::max);
    let residual: Vec<f64> = scaled.iter().map(|s| s - be * t).collect();
    let mut flagged = false;
    for k in 1..residual.len() {
        if residual[k].abs() > residual[k - 1].abs() + quad_error[k] / x[k] + quad_error[k - 1] / x[k - 1]
        {
            flagged = true;
        }
    }
    let rest: Vec<f64> = diff.iter().zip(&x).map(|(d, x)| d - c2 * x).collect();
    let order = log_slope(eps_grid, &rest);
    let nonzero = t.abs() > 1e-300;
    Ok(EnergyReport {
        eps: eps_grid.to_vec(),
        j,
        alpha: al,
        beta: be,
        tau: t,
        sigma: jet.sigma(),
        residual,
        scaled,
        quad_error,
        c2,
        c2_error,
        c4,
        c2_over_tau: nonzero.then(|| c2 / t),
        c2_over_beta_tau: nonzero.then(|| c2 / (be * t)),
        semi_analytic_c2: semi_analytic_c2(profile, jet),
        reference_bracket_c2: reference_bracket_c2(profile, jet),
        order,
        flagged,
        angular_nodes,
        radial_stride: quad.stride,
        chart_radius: cutoff.r,
    })
}

impl EnergyReport {
    /// CSV with columns `eps,J,alpha,beta,tau,residual,order`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,J,alpha,beta,tau,residual,order\n");
        let order = self.order.unwrap_or(f64::NAN);
        for k in 0..self.eps.len() {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.eps[k], self.j[k], self.alpha, self.beta, self.tau, self.residual[k], order
            ));
        }
        s
    }
}
