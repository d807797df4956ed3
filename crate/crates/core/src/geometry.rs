//! Normal-coordinate metric jets, curvature tensors, sphere moments, and the
//! index-contraction identities used by the energy expansion.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::groundstate::{Derivs, RadialProfile};
use crate::quad::{gamma_half_integer, radial_weights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("expected {expected} entries for n = {n}, got {got}")]
    Shape { n: usize, expected: usize, got: usize },
    #[error("symmetry {0} violated by {1:e}")]
    Symmetry(&'static str, f64),
    #[error("radial quadrature diverges or is unresolved (h: {fine:e}, 2h: {coarse:e})")]
    Quadrature { fine: f64, coarse: f64 },
    #[error("jet file: {0}")]
    Io(String),
}

const SYM_TOL: f64 = 1e-12;

fn idx(n: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * n + j) * n + k) * n + l
}

/// `H[i][j][k][l] = ∂²g^{ij}/∂z_k∂z_l (0)` in normal coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricJet {
    pub n: usize,
    pub data: Vec<f64>,
}

impl MetricJet {
    pub fn zeros(n: usize) -> Self {
        MetricJet {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut jet = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        jet.data[idx(n, i, j, k, l)] = f(i, j, k, l);
                    }
                }
            }
        }
        jet
    }

    /// Validating constructor from a dense row-major array.
    pub fn from_array(n: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        let jet = Self::unchecked(n, data)?;
        let (a, b) = jet.asymmetry();
        if a > SYM_TOL {
            return Err(GeometryError::Symmetry("H[i][j][k][l] = H[j][i][k][l]", a));
        }
        if b > SYM_TOL {
            return Err(GeometryError::Symmetry("H[i][j][k][l] = H[i][j][l][k]", b));
        }
        Ok(jet)
    }

    /// Symmetrizes in `(ij)` and `(kl)`; the flag says whether anything moved.
    pub fn from_array_symmetrized(n: usize, data: Vec<f64>) -> Result<(Self, bool), GeometryError> {
        let raw = Self::unchecked(n, data)?;
        let (a, b) = raw.asymmetry();
        let sym = Self::from_fn(n, |i, j, k, l| {
            0.25 * (raw.get(i, j, k, l) + raw.get(j, i, k, l) + raw.get(i, j, l, k) + raw.get(j, i, l, k))
        });
        Ok((sym, a > 0.0 || b > 0.0))
    }

    fn unchecked(n: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        let expected = n * n * n * n;
        if data.len() != expected {
            return Err(GeometryError::Shape {
                n,
                expected,
                got: data.len(),
            });
        }
        Ok(MetricJet { n, data })
    }

    fn asymmetry(&self) -> (f64, f64) {
        let n = self.n;
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        a = a.max((v - self.get(j, i, k, l)).abs());
                        b = b.max((v - self.get(i, j, l, k)).abs());
                    }
                }
            }
        }
        (a, b)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[idx(self.n, i, j, k, l)]
    }

    /// `H[i][i][k][k] = c` for all `i, k`, zero elsewhere.
    pub fn isotropic_diagonal(n: usize, c: f64) -> Self {
        Self::from_fn(n, |i, j, k, l| if i == j && k == l { c } else { 0.0 })
    }

    pub fn scaled(&self, c: f64) -> Self {
        MetricJet {
            n: self.n,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    /// `c1·self + c2·other`.
    pub fn combine(&self, c1: f64, other: &MetricJet, c2: f64) -> Self {
        assert_eq!(self.n, other.n);
        MetricJet {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| c1 * a + c2 * b)
                .collect(),
        }
    }

    /// `Σ H[i][j][i][j]`.
    pub fn sigma(&self) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += self.get(i, j, i, j);
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// True when the two double traces agree to `1e−12` (relative to the
    /// jet's size once it exceeds one).
    pub fn ricci_flat_compatible(&self) -> bool {
        (tau(self) - self.sigma()).abs() <= SYM_TOL * self.max_abs().max(1.0)
    }

    /// Removes `τ − σ` along a fixed direction that carries unit `τ` and no
    /// `σ`, so the result is compatible and agrees elsewhere.
    pub fn project_compatible(&self) -> Self {
        assert!(self.n >= 2);
        let gap = tau(self) - self.sigma();
        let mut out = self.clone();
        out.data[idx(self.n, 0, 0, 1, 1)] -= gap;
        out
    }

    /// Random jet with entries in `[-scale, scale]`, symmetric in `(ij)` and
    /// `(kl)`, then made compatible.
    pub fn random_compatible(n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let raw = Self::random_symmetric(n, scale, rng);
        raw.project_compatible()
    }

    pub fn random_symmetric(n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut jet = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                for k in 0..n {
                    for l in k..n {
                        let v = scale * rng.random_range(-1.0..1.0);
                        for (a, b) in [(i, j), (j, i)] {
                            for (c, d) in [(k, l), (l, k)] {
                                jet.data[idx(n, a, b, c, d)] = v;
                            }
                        }
                    }
                }
            }
        }
        jet
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("jet serializes")
    }

    /// Parses `{"n": .., "data": [..]}`; with `symmetrize`, asymmetric input is
    /// repaired and flagged instead of rejected.
    pub fn from_json(text: &str, symmetrize: bool) -> Result<(Self, bool), GeometryError> {
        let raw: MetricJet =
            serde_json::from_str(text).map_err(|e| GeometryError::Io(e.to_string()))?;
        if symmetrize {
            Self::from_array_symmetrized(raw.n, raw.data)
        } else {
            Self::from_array(raw.n, raw.data).map(|j| (j, false))
        }
    }
}

/// `τ = Σ H[i][i][j][j]`.
pub fn tau(jet: &MetricJet) -> f64 {
    let n = jet.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += jet.get(i, i, j, j);
        }
    }
    s
}

/// `Σ H[i][i][j][j] − Σ H[i][j][i][j]`.
pub fn scalar_curvature_from_jet(jet: &MetricJet) -> f64 {
    tau(jet) - jet.sigma()
}

/// Algebraic curvature tensor with the convention `R_ijij` = sectional
/// curvature of the `(i, j)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureTensor {
    pub n: usize,
    pub data: Vec<f64>,
}

impl CurvatureTensor {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        let expected = n * n * n * n;
        if data.len() != expected {
            return Err(GeometryError::Shape {
                n,
                expected,
                got: data.len(),
            });
        }
        let r = CurvatureTensor { n, data };
        r.check()?;
        Ok(r)
    }

    fn from_fn(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        data[idx(n, i, j, k, l)] = f(i, j, k, l);
                    }
                }
            }
        }
        CurvatureTensor { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[idx(self.n, i, j, k, l)]
    }

    fn check(&self) -> Result<(), GeometryError> {
        let n = self.n;
        let scale = self.data.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let tol = SYM_TOL * scale;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let v = self.get(i, j, k, l);
                        let checks = [
                            ("antisymmetry in (i,j)", v + self.get(j, i, k, l)),
                            ("antisymmetry in (k,l)", v + self.get(i, j, l, k)),
                            ("pair symmetry", v - self.get(k, l, i, j)),
                            (
                                "first Bianchi identity",
                                v + self.get(i, k, l, j) + self.get(i, l, j, k),
                            ),
                        ];
                        for (name, d) in checks {
                            if d.abs() > tol {
                                return Err(GeometryError::Symmetry(name, d.abs()));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Round sphere form `K(δ_ik δ_jl − δ_il δ_jk)`.
    pub fn constant_curvature(n: usize, k: f64) -> Self {
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Self::from_fn(n, |i, j, kk, l| k * (d(i, kk) * d(j, l) - d(i, l) * d(j, kk)))
    }

    /// Kulkarni–Nomizu product of two symmetric matrices (row-major `n × n`).
    pub fn kulkarni_nomizu(n: usize, h: &[f64], k: &[f64]) -> Self {
        let m = |a: &[f64], i: usize, j: usize| a[i * n + j];
        Self::from_fn(n, |i, j, kk, l| {
            m(h, i, kk) * m(k, j, l) + m(h, j, l) * m(k, i, kk)
                - m(h, i, l) * m(k, j, kk)
                - m(h, j, kk) * m(k, i, l)
        })
    }

    /// Sum of a few Kulkarni–Nomizu products of random symmetric matrices.
    pub fn random(n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut out = Self::from_fn(n, |_, _, _, _| 0.0);
        for _ in 0..3 {
            let mut a = vec![0.0; n * n];
            let mut b = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                    b[i * n + j] = y;
                    b[j * n + i] = y;
                }
            }
            let kn = Self::kulkarni_nomizu(n, &a, &b);
            for (o, v) in out.data.iter_mut().zip(&kn.data) {
                *o += scale * v;
            }
        }
        out
    }

    /// `Ric_jl = Σ_i R_ijil`, row-major.
    pub fn ricci(&self) -> Vec<f64> {
        let n = self.n;
        let mut ric = vec![0.0; n * n];
        for j in 0..n {
            for l in 0..n {
                ric[j * n + l] = (0..n).map(|i| self.get(i, j, i, l)).sum();
            }
        }
        ric
    }

    pub fn scalar(&self) -> f64 {
        let n = self.n;
        let ric = self.ricci();
        (0..n).map(|j| ric[j * n + j]).sum()
    }

    /// Weyl part: Ricci-flat by construction.
    pub fn weyl(&self) -> Self {
        let n = self.n;
        let nf = n as f64;
        let ric = self.ricci();
        let s = self.scalar();
        let mut traceless = ric.clone();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            traceless[i * n + i] -= s / nf;
            g[i * n + i] = 1.0;
        }
        let p1 = Self::kulkarni_nomizu(n, &traceless, &g);
        let p2 = Self::kulkarni_nomizu(n, &g, &g);
        let c1 = 1.0 / (nf - 2.0);
        let c2 = s / (2.0 * nf * (nf - 1.0));
        let mut out = self.clone();
        for ((o, a), b) in out.data.iter_mut().zip(&p1.data).zip(&p2.data) {
            *o -= c1 * a + c2 * b;
        }
        out
    }
}

/// `H_ijkl = (R_ikjl + R_iljk)/3`, from `g^{ij} = δ^{ij} + (1/3) R_ikjl z^k z^l + …`.
pub fn jet_from_curvature(r: &CurvatureTensor) -> Result<MetricJet, GeometryError> {
    r.check()?;
    let third = 1.0 / 3.0;
    Ok(MetricJet::from_fn(r.n, |i, j, k, l| {
        third * (r.get(i, k, j, l) + r.get(i, l, j, k))
    }))
}

/// `∫_{S^{n−1}} ω₁^{2e1} ω₂^{2e2} dσ`.
pub fn angular_moment(n: usize, e1: usize, e2: usize) -> f64 {
    let mut powers = vec![0usize; n];
    powers[0] = 2 * e1;
    if n > 1 {
        powers[1] = 2 * e2;
    } else {
        assert_eq!(e2, 0, "angular_moment needs n >= 2 for a second exponent");
    }
    sphere_monomial(n, &powers)
}

/// `∫_{S^{n−1}} Π ω_i^{powers[i]} dσ`; zero when any power is odd.
pub fn sphere_monomial(n: usize, powers: &[usize]) -> f64 {
    assert!(powers.len() <= n);
    if powers.iter().any(|p| p % 2 == 1) {
        return 0.0;
    }
    let half_sum: usize = powers.iter().map(|p| p / 2).sum();
    let mut num = 2.0;
    for i in 0..n {
        let e = powers.get(i).copied().unwrap_or(0) / 2;
        num *= gamma_half_integer(e as f64 + 0.5);
    }
    num / gamma_half_integer(0.5 * n as f64 + half_sum as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RadialWeight {
    /// `(U'/r − U'')²`
    HessianAnisotropy,
    /// `(U')²`
    DerivSq,
    /// `|∇U|²`, equal to `(U')²` for radial `U`
    GradNormSq,
    /// `(ΔU)²`
    LaplacianSq,
    /// `(U'/r)²`
    GradOverRSq,
    /// `U^{p+1}`
    PowerP1,
    /// `U²`
    USq,
}

impl RadialWeight {
    pub const ALL: [RadialWeight; 7] = [
        RadialWeight::HessianAnisotropy,
        RadialWeight::DerivSq,
        RadialWeight::GradNormSq,
        RadialWeight::LaplacianSq,
        RadialWeight::GradOverRSq,
        RadialWeight::PowerP1,
        RadialWeight::USq,
    ];

    /// Value at radius `r` from radial derivatives; `U'/r` is replaced by its
    /// limit `U''(0)` at the origin.
    pub fn eval(&self, d: &Derivs, r: f64, n: usize, p: f64) -> f64 {
        let over_r = if r == 0.0 { d.u2 } else { d.u1 / r };
        match self {
            RadialWeight::HessianAnisotropy => (over_r - d.u2).powi(2),
            RadialWeight::DerivSq | RadialWeight::GradNormSq => d.u1 * d.u1,
            RadialWeight::LaplacianSq => (d.u2 + (n as f64 - 1.0) * over_r).powi(2),
            RadialWeight::GradOverRSq => over_r * over_r,
            RadialWeight::PowerP1 => d.u.max(0.0).powf(p + 1.0),
            RadialWeight::USq => d.u * d.u,
        }
    }

    /// Samples on the profile grid.
    pub fn samples(&self, profile: &RadialProfile) -> Vec<f64> {
        let (n, p) = (profile.params.n, profile.params.p);
        (0..profile.u.len())
            .map(|i| {
                let d = Derivs {
                    u: profile.u[i],
                    u1: profile.u1[i],
                    u2: profile.u2[i],
                    u3: profile.u3[i],
                    u4: 0.0,
                };
                self.eval(&d, profile.grid.nodes[i], n, p)
            })
            .collect()
    }
}

/// `∫_0^R w(r) r^power dr` for samples `w` on a uniform grid starting at 0.
/// `w` is taken as an even function of `r`. Divergence shows up as a
/// non-finite value or as disagreement between the `h` and `2h` sums.
pub fn radial_moment_samples(h: f64, w: &[f64], power: i32) -> Result<f64, GeometryError> {
    let k = w.len() - 1;
    let eval = |step: usize| -> f64 {
        let m = k / step;
        let hh = h * step as f64;
        let wts = radial_weights(m, hh, power % 2 == 0);
        (0..=m)
            .map(|i| {
                let r = i as f64 * hh;
                let rp = if power == 0 { 1.0 } else { r.powi(power) };
                let v = w[i * step] * rp;
                if wts[i] == 0.0 {
                    0.0
                } else {
                    wts[i] * v
                }
            })
            .sum()
    };
    let fine = eval(1);
    if !fine.is_finite() {
        return Err(GeometryError::Quadrature {
            fine,
            coarse: f64::NAN,
        });
    }
    if k % 2 == 0 && k >= 12 {
        let coarse = eval(2);
        let scale = fine.abs().max(coarse.abs());
        if !coarse.is_finite() || (fine - coarse).abs() > 1e-3 * scale + 1e-300 {
            return Err(GeometryError::Quadrature { fine, coarse });
        }
    }
    Ok(fine)
}

/// `∫_0^{R} w(r) r^power dr` over the profile grid.
pub fn radial_moment(
    weight: RadialWeight,
    profile: &RadialProfile,
    power: i32,
) -> Result<f64, GeometryError> {
    radial_moment_samples(profile.grid.h, &weight.samples(profile), power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub lhs: f64,
    pub rhs_tau_form: f64,
    pub ratio: Option<f64>,
    /// `rhs = 0` while `lhs ≠ 0`.
    pub violation: bool,
}

/// Brute-force `Σ H_ijkl ∫ w(|z|) z_i z_j z_k z_l dz` against `τ·∫ w z₁²z₂² dz`.
pub fn contraction_identity(
    jet: &MetricJet,
    weight: RadialWeight,
    profile: &RadialProfile,
) -> Result<ContractionReport, GeometryError> {
    let n = jet.n;
    let radial = radial_moment(weight, profile, n as i32 + 3)?;
    let mut lhs = 0.0;
    let mut powers = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let h = jet.get(i, j, k, l);
                    if h == 0.0 {
                        continue;
                    }
                    powers.iter_mut().for_each(|p| *p = 0);
                    for a in [i, j, k, l] {
                        powers[a] += 1;
                    }
                    let ang = sphere_monomial(n, &powers);
                    if ang != 0.0 {
                        lhs += h * ang;
                    }
                }
            }
        }
    }
    lhs *= radial;
    let rhs = tau(jet) * radial * angular_moment(n, 1, 1);
    let (ratio, violation) = if rhs != 0.0 {
        (Some(lhs / rhs), false)
    } else {
        (None, lhs.abs() > 0.0)
    };
    Ok(ContractionReport {
        lhs,
        rhs_tau_form: rhs,
        ratio,
        violation,
    })
}
