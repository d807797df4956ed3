//! The error `R = f(W) − (ε⁴Δ_g²W − ε²bΔ_gW + aW)` of the approximate solution,
//! split into cutoff terms and metric terms.
//!
//! In `y = z/ε`, with `L̃ = Δ + M`, `M = A:∂² + B·∇`,
//! `R̂ = U^p(χ̂^p − χ̂) − C(U, χ̂) − (ΔMŴ + MΔŴ + MMŴ − bMŴ)`
//! where `C` collects the cutoff-derivative terms of the flat operator.

use serde::{Deserialize, Serialize};

use super::ball::{AngularRule, RadialSamples};
use super::jet2::Jet2;
use super::{assemble_w, log_slope, ApproxSolution, CutoffSpec, EnergyError, QuadOptions};
use crate::geometry::MetricJet;
use crate::groundstate::RadialProfile;
use crate::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    Cutoff,
    Metric,
}

pub const TERM_LABELS: [(&str, TermKind); 17] = [
    ("U^p (chi^p - chi)", TermKind::Cutoff),
    ("2 LapU Lapchi", TermKind::Cutoff),
    ("2 chi' (LapU)'", TermKind::Cutoff),
    ("U Lap^2 chi", TermKind::Cutoff),
    ("2 U' (Lapchi)'", TermKind::Cutoff),
    ("2 Lap(U' chi')", TermKind::Cutoff),
    ("b (U Lapchi + 2 U' chi')", TermKind::Cutoff),
    ("Lap(A:D2 W)", TermKind::Metric),
    ("Lap(B.D W)", TermKind::Metric),
    ("A:D2 (Lap W)", TermKind::Metric),
    ("B.D (Lap W)", TermKind::Metric),
    ("A:D2 (A:D2 W)", TermKind::Metric),
    ("A:D2 (B.D W)", TermKind::Metric),
    ("B.D (A:D2 W)", TermKind::Metric),
    ("B.D (B.D W)", TermKind::Metric),
    ("b A:D2 W", TermKind::Metric),
    ("b B.D W", TermKind::Metric),
];
const NT: usize = TERM_LABELS.len();
const N_CUT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderOptions {
    pub quad: QuadOptions,
}

impl Default for RemainderOptions {
    fn default() -> Self {
        RemainderOptions {
            quad: QuadOptions {
                stride: 2,
                angular: 4,
                tail: 1e-20,
            },
        }
    }
}

/// One ε: the normalized remainder norm and the un-normalized per-term
/// integrals `∫_{B(0,r)} |term|^{(p+1)/p} dz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderSample {
    pub eps: f64,
    pub norm: f64,
    pub terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermNorm {
    pub label: String,
    pub kind: TermKind,
    pub values: Vec<f64>,
    /// Fitted ε-order; `None` when the term vanishes on the whole grid.
    pub order: Option<f64>,
    pub identically_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTable {
    pub eps: Vec<f64>,
    pub terms: Vec<TermNorm>,
    /// `n + 2(p+1)/p`, the target order for single metric terms.
    pub metric_target_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderScaling {
    pub eps: Vec<f64>,
    pub norms: Vec<f64>,
    /// `norm / ε²`
    pub scaled: Vec<f64>,
    pub slope: Option<f64>,
    pub table: TermTable,
}

fn radial_lap(n: f64, r: f64, f: &[f64]) -> [f64; 3] {
    // Δf, (Δf)', (Δf)'' for a radial f with derivatives f[0..=4]
    let k = n - 1.0;
    let lap = f[2] + k * f[1] / r;
    let d1 = f[3] + k * (f[2] / r - f[1] / (r * r));
    let d2 = f[4] + k * (f[3] / r - 2.0 * f[2] / (r * r) + 2.0 * f[1] / r.powi(3));
    [lap, d1, d2]
}

/// Signed contributions of the cutoff terms to `R̂` at radius `ρ`.
fn cutoff_terms(w: &ApproxSolution, rho: f64, u: &[f64; 5], out: &mut [f64; NT]) {
    let c = w.cutoff_y(rho);
    if c[0] == 1.0 && c[1] == 0.0 && c[2] == 0.0 {
        return;
    }
    let prm = &w.profile.params;
    let (n, b, p) = (prm.n as f64, prm.b, prm.p);
    let pos = u[0].max(0.0);
    out[0] = pos.powf(p) * (c[0].max(0.0).powf(p) - c[0]);
    if rho == 0.0 {
        return;
    }
    let lu = radial_lap(n, rho, u);
    let lc = radial_lap(n, rho, &c);
    let lap2c = lc[2] + (n - 1.0) * lc[1] / rho;
    // f = U'χ'
    let f1 = u[2] * c[1] + u[1] * c[2];
    let f2 = u[3] * c[1] + 2.0 * u[2] * c[2] + u[1] * c[3];
    let lap_f = f2 + (n - 1.0) * f1 / rho;
    out[1] = -2.0 * lu[0] * lc[0];
    out[2] = -2.0 * c[1] * lu[1];
    out[3] = -u[0] * lap2c;
    out[4] = -2.0 * u[1] * lc[1];
    out[5] = -2.0 * lap_f;
    out[6] = b * (u[0] * lc[0] + 2.0 * u[1] * c[1]);
}

/// Precomputed jet contractions for the metric operator in `y`.
struct MetricData {
    n: usize,
    e: f64,
    /// `T_km = Σ_l H_llkm`
    t: Vec<f64>,
    /// `D_jm = Σ_i H_ijim`
    d: Vec<f64>,
}

impl MetricData {
    fn new(jet: &MetricJet, eps: f64) -> Self {
        let n = jet.n;
        let mut t = vec![0.0; n * n];
        let mut d = vec![0.0; n * n];
        for k in 0..n {
            for m in 0..n {
                t[k * n + m] = (0..n).map(|l| jet.get(l, l, k, m)).sum();
                d[k * n + m] = (0..n).map(|i| jet.get(i, k, i, m)).sum();
            }
        }
        MetricData {
            n,
            e: eps * eps,
            t,
            d,
        }
    }
}

/// Signed contributions of the metric terms at `y`, and `ŝ(y)`.
fn metric_terms(
    jet: &MetricJet,
    md: &MetricData,
    y: &[f64],
    psi: &[f64; 5],
    b: f64,
    out: &mut [f64; NT],
) -> f64 {
    let n = md.n;
    let e = md.e;
    let jf = |k: usize| {
        Jet2::from_parts(
            n,
            psi[k],
            &y.iter().map(|x| 2.0 * x * psi[k + 1]).collect::<Vec<_>>(),
            |a, c| 4.0 * y[a] * y[c] * psi[k + 2] + if a == c { 2.0 * psi[k + 1] } else { 0.0 },
        )
    };
    let j1 = jf(1);
    let j2 = jf(2);
    let yv: Vec<Jet2> = (0..n).map(|i| Jet2::variable(n, i, y[i])).collect();
    // first and second derivatives of Ŵ as jets
    let dw: Vec<Jet2> = (0..n).map(|j| (yv[j] * j1).scale(2.0)).collect();
    let mut d2w = vec![Jet2::constant(n, 0.0); n * n];
    let j2s = j2.scale(4.0);
    for i in 0..n {
        let yi = yv[i] * j2s;
        for j in i..n {
            let mut x = yi * yv[j];
            if i == j {
                x.add_scaled(2.0, &j1);
            }
            d2w[i * n + j] = x;
            d2w[j * n + i] = x;
        }
    }
    let mut lapw = Jet2::constant(n, 0.0);
    for i in 0..n {
        lapw.add_scaled(1.0, &d2w[i * n + i]);
    }
    // metric coefficient jets
    let mut amat = vec![Jet2::constant(n, 0.0); n * n];
    for i in 0..n {
        for j in i..n {
            let mut g = [0.0; 8];
            let mut v = 0.0;
            for m in 0..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += jet.get(i, j, m, l) * y[l];
                }
                g[m] = e * s;
                v += 0.5 * e * s * y[m];
            }
            let x = Jet2::from_parts(n, v, &g, |m, l| e * jet.get(i, j, m, l));
            amat[i * n + j] = x;
            amat[j * n + i] = x;
        }
    }
    let ty: Vec<f64> = (0..n)
        .map(|k| (0..n).map(|m| md.t[k * n + m] * y[m]).sum())
        .collect();
    let sv = 1.0 - 0.25 * e * (0..n).map(|k| ty[k] * y[k]).sum::<f64>();
    let s = Jet2::from_parts(
        n,
        sv,
        &ty.iter().map(|x| -0.5 * e * x).collect::<Vec<_>>(),
        |k, m| -0.5 * e * md.t[k * n + m],
    );
    let sinv = s.recip();
    let dlog: Vec<Jet2> = (0..n)
        .map(|i| {
            let ds = Jet2::from_parts(
                n,
                -0.5 * e * ty[i],
                &(0..n).map(|m| -0.5 * e * md.t[i * n + m]).collect::<Vec<_>>(),
                |_, _| 0.0,
            );
            ds * sinv
        })
        .collect();
    let bvec: Vec<Jet2> = (0..n)
        .map(|j| {
            let dv: f64 = (0..n).map(|m| md.d[j * n + m] * y[m]).sum();
            let mut bj = Jet2::from_parts(
                n,
                e * dv,
                &(0..n).map(|m| e * md.d[j * n + m]).collect::<Vec<_>>(),
                |_, _| 0.0,
            );
            for i in 0..n {
                let mut aij = amat[i * n + j];
                if i == j {
                    aij.v += 1.0;
                }
                bj = bj + aij * dlog[i];
            }
            bj
        })
        .collect();
    let mut maw = Jet2::constant(n, 0.0);
    for i in 0..n {
        for j in i..n {
            let c = if i == j { 1.0 } else { 2.0 };
            maw.add_scaled(c, &(amat[i * n + j] * d2w[i * n + j]));
        }
    }
    let mut mbw = Jet2::constant(n, 0.0);
    for j in 0..n {
        mbw.add_scaled(1.0, &(bvec[j] * dw[j]));
    }
    let a_dot_h = |f: &Jet2| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += amat[i * n + j].v * f.h[i][j];
            }
        }
        acc
    };
    let b_dot_g = |f: &Jet2| -> f64 { (0..n).map(|j| bvec[j].v * f.g[j]).sum() };
    out[7] = -maw.trace_hessian();
    out[8] = -mbw.trace_hessian();
    out[9] = -a_dot_h(&lapw);
    out[10] = -b_dot_g(&lapw);
    out[11] = -a_dot_h(&maw);
    out[12] = -a_dot_h(&mbw);
    out[13] = -b_dot_g(&maw);
    out[14] = -b_dot_g(&mbw);
    out[15] = b * maw.v;
    out[16] = b * mbw.v;
    sv
}

fn flat_jet(jet: &MetricJet) -> bool {
    jet.data.iter().all(|x| *x == 0.0)
}

fn evaluate(w: &ApproxSolution, opts: &RemainderOptions) -> RemainderSample {
    let prof = w.profile;
    let (n, p, b) = (prof.params.n, prof.params.p, prof.params.b);
    let q = (p + 1.0) / p;
    let eps = w.eps;
    let samples = RadialSamples::new(prof, opts.quad.stride, w.cutoff.r / eps);
    let rho_metric = w.rho_max();
    let rule = AngularRule::product(n, opts.quad.angular, true);
    let md = MetricData::new(&w.jet, eps);
    let flat = flat_jet(&w.jet);
    let area = sphere_area(n);
    let mut acc_terms = [0.0f64; NT];
    let mut acc_total = 0.0;
    let mut y = vec![0.0; n];
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
        let mut radial = [0.0f64; NT];
        cutoff_terms(w, rho, &u, &mut radial);
        let r_rad: f64 = radial[..N_CUT].iter().sum();
        for k in 0..N_CUT {
            acc_terms[k] += wr * area * radial[k].abs().powf(q);
        }
        if flat || rho > rho_metric {
            // ŝ = 1 for a flat jet; beyond the tail only radial terms remain
            let mean_s = if flat {
                1.0
            } else {
                let mut sacc = 0.0;
                for a in 0..rule.len() {
                    let om = rule.node(a);
                    let mut xs = 0.0;
                    for k in 0..n {
                        for m in 0..n {
                            xs += md.t[k * n + m] * om[k] * om[m];
                        }
                    }
                    sacc += rule.weights[a] * (1.0 - 0.25 * md.e * rho * rho * xs);
                }
                sacc / area
            };
            acc_total += wr * area * mean_s * r_rad.abs().powf(q);
            continue;
        }
        let phi = w.phi_from(rho, &u);
        let psi = w.psi(rho, &phi);
        for a in 0..rule.len() {
            let om = rule.node(a);
            for k in 0..n {
                y[k] = rho * om[k];
            }
            let mut terms = radial;
            let s = metric_terms(&w.jet, &md, &y, &psi, b, &mut terms);
            let wa = wr * rule.weights[a];
            for k in N_CUT..NT {
                acc_terms[k] += wa * terms[k].abs().powf(q);
            }
            let r: f64 = terms.iter().sum();
            acc_total += wa * s * r.abs().powf(q);
        }
    }
    let scale = eps.powi(n as i32);
    RemainderSample {
        eps,
        norm: acc_total.powf(1.0 / q),
        terms: acc_terms.iter().map(|x| x * scale).collect(),
    }
}

fn check_opts(opts: &RemainderOptions) -> Result<(), EnergyError> {
    let qd = opts.quad;
    if qd.stride == 0 || qd.angular == 0 || !(qd.tail > 0.0 && qd.tail < 1.0) {
        return Err(EnergyError::Config(format!("bad remainder options {opts:?}")));
    }
    Ok(())
}

fn sample(
    profile: &RadialProfile,
    eps: f64,
    jet: &MetricJet,
    cutoff: CutoffSpec,
    opts: &RemainderOptions,
) -> Result<RemainderSample, EnergyError> {
    check_opts(opts)?;
    let w = assemble_w(profile, eps, jet, cutoff)?.with_quad(opts.quad)?;
    let s = evaluate(&w, opts);
    if !s.norm.is_finite() {
        return Err(EnergyError::Quadrature {
            value: s.norm,
            estimate: f64::NAN,
        });
    }
    Ok(s)
}

/// `(ε^{−n} ∫ |f(W) − V|^{(p+1)/p} dV_g)^{p/(p+1)}`.
pub fn remainder_norm(
    profile: &RadialProfile,
    eps: f64,
    jet: &MetricJet,
    cutoff: CutoffSpec,
    opts: &RemainderOptions,
) -> Result<f64, EnergyError> {
    Ok(sample(profile, eps, jet, cutoff, opts)?.norm)
}

/// Per-term `∫_{B(0,r)} |term|^{(p+1)/p} dz` at one ε, labelled.
pub fn remainder_term_norms(
    profile: &RadialProfile,
    eps: f64,
    jet: &MetricJet,
    cutoff: CutoffSpec,
    opts: &RemainderOptions,
) -> Result<Vec<(String, f64)>, EnergyError> {
    let s = sample(profile, eps, jet, cutoff, opts)?;
    Ok(TERM_LABELS
        .iter()
        .zip(s.terms)
        .map(|((l, _), v)| (l.to_string(), v))
        .collect())
}

/// Remainder norms and per-term integrals over an ε grid, with fitted orders.
pub fn remainder_scaling(
    profile: &RadialProfile,
    eps_grid: &[f64],
    jet: &MetricJet,
    cutoff: CutoffSpec,
    opts: &RemainderOptions,
) -> Result<RemainderScaling, EnergyError> {
    if eps_grid.len() < 2 {
        return Err(EnergyError::Config("ε grid needs at least 2 values".into()));
    }
    let samples = eps_grid
        .iter()
        .map(|&e| sample(profile, e, jet, cutoff, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let norms: Vec<f64> = samples.iter().map(|s| s.norm).collect();
    let scaled = norms.iter().zip(eps_grid).map(|(v, e)| v / (e * e)).collect();
    let terms = TERM_LABELS
        .iter()
        .enumerate()
        .map(|(k, (label, kind))| {
            let values: Vec<f64> = samples.iter().map(|s| s.terms[k]).collect();
            let identically_zero = values.iter().all(|v| *v == 0.0);
            TermNorm {
                label: label.to_string(),
                kind: *kind,
                order: log_slope(eps_grid, &values),
                values,
                identically_zero,
            }
        })
        .collect();
    let p = profile.params.p;
    Ok(RemainderScaling {
        eps: eps_grid.to_vec(),
        slope: log_slope(eps_grid, &norms),
        norms,
        scaled,
        table: TermTable {
            eps: eps_grid.to_vec(),
            terms,
            metric_target_order: profile.params.n as f64 + 2.0 * (p + 1.0) / p,
        },
    })
}
