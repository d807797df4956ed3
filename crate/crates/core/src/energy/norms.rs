//! ε-scaled Sobolev and Lebesgue norms of functions on the chart ball.

use super::ball::AngularRule;
use super::jet2::Jet2;
use super::{rescale_jet, ApproxSolution, EnergyError};
use crate::geometry::MetricJet;
use crate::params::ProblemParams;
use crate::quad::radial_weights;

/// A function on the chart in `z` coordinates, with value, gradient and
/// Hessian.
pub trait ChartFunction {
    fn n(&self) -> usize;
    fn jet(&self, z: &[f64]) -> Jet2;
    /// Quadrature suited to the function's scale and support.
    fn default_rule(&self) -> BallRule;
}

/// Product quadrature on a ball in `z`.
#[derive(Debug, Clone)]
pub struct BallRule {
    pub radii: Vec<f64>,
    /// Includes the `s^{n−1}` Jacobian.
    pub radial_weights: Vec<f64>,
    pub angular: AngularRule,
}

impl BallRule {
    /// `k + 1` equispaced radii on `[0, radius]`.
    pub fn uniform(n: usize, radius: f64, k: usize, m: usize) -> Self {
        let h = radius / k as f64;
        let base = radial_weights(k, h, false);
        let radii: Vec<f64> = (0..=k).map(|i| i as f64 * h).collect();
        let radial_weights = base
            .iter()
            .zip(&radii)
            .map(|(w, r)| w * r.powi(n as i32 - 1))
            .collect();
        BallRule {
            radii,
            radial_weights,
            angular: AngularRule::product(n, m, false),
        }
    }

    /// Radii `ε·ρ_i` on the profile nodes used by `w`.
    pub fn for_approx(w: &ApproxSolution) -> Self {
        let n = w.n();
        let hs = w.profile.grid.h * w.quad.stride as f64;
        let k = (w.rho_max() / hs).floor() as usize;
        let base = radial_weights(k, hs * w.eps, n % 2 == 1);
        let radii: Vec<f64> = (0..=k).map(|i| i as f64 * hs * w.eps).collect();
        let radial_weights = base
            .iter()
            .zip(&radii)
            .map(|(w, r)| w * r.powi(n as i32 - 1))
            .collect();
        BallRule {
            radii,
            radial_weights,
            angular: AngularRule::product(n, w.quad.angular, false),
        }
    }

    fn for_each(&self, mut f: impl FnMut(&[f64], f64)) {
        let n = self.angular.n;
        let mut z = vec![0.0; n];
        for (r, wr) in self.radii.iter().zip(&self.radial_weights) {
            if *wr == 0.0 {
                continue;
            }
            for a in 0..self.angular.len() {
                let w = self.angular.node(a);
                for i in 0..n {
                    z[i] = r * w[i];
                }
                f(&z, wr * self.angular.weights[a]);
            }
        }
    }
}

/// Metric quantities at a chart point: `g^{ij}`, `√|g|`, and the drift
/// `B^j = ∂_i g^{ij} + g^{ij} ∂_i s / s`.
struct MetricAt {
    g: Vec<f64>,
    s: f64,
    drift: Vec<f64>,
}

fn metric_at(jet: &MetricJet, z: &[f64]) -> MetricAt {
    let n = jet.n;
    let mut g = vec![0.0; n * n];
    let mut div = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut s = 1.0;
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                for l in 0..n {
                    acc += jet.get(i, j, k, l) * z[k] * z[l];
                }
            }
            g[i * n + j] = if i == j { 1.0 } else { 0.0 } + 0.5 * acc;
        }
    }
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                div[j] += jet.get(i, j, i, k) * z[k];
            }
        }
    }
    for k in 0..n {
        let mut tk = 0.0;
        for m in 0..n {
            let t: f64 = (0..n).map(|l| jet.get(l, l, k, m)).sum();
            tk += t * z[m];
            s -= 0.25 * t * z[k] * z[m];
        }
        ds[k] = -0.5 * tk;
    }
    let drift = (0..n)
        .map(|j| div[j] + (0..n).map(|i| g[i * n + j] * ds[i]).sum::<f64>() / s)
        .collect();
    MetricAt { g, s, drift }
}

fn laplace_beltrami(m: &MetricAt, u: &Jet2) -> f64 {
    let n = u.n;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += m.g[i * n + j] * u.h[i][j];
        }
        acc += m.drift[i] * u.g[i];
    }
    acc
}

/// `ε^{−n} ∫ (ε⁴(Δ_g u)² + bε²|∇u|²_g + a u²) dV_g`.
pub fn eps_norm_sq(
    u: &dyn ChartFunction,
    eps: f64,
    jet: &MetricJet,
    params: &ProblemParams,
    rule: &BallRule,
) -> Result<f64, EnergyError> {
    check_dims(u, jet, params)?;
    let n = jet.n;
    let (a, b) = (params.a, params.b);
    let (e2, e4) = (eps * eps, eps.powi(4));
    let mut total = 0.0;
    rule.for_each(|z, w| {
        let f = u.jet(z);
        let m = metric_at(jet, z);
        let lap = laplace_beltrami(&m, &f);
        let mut grad = 0.0;
        for i in 0..n {
            for j in 0..n {
                grad += m.g[i * n + j] * f.g[i] * f.g[j];
            }
        }
        total += w * m.s * (e4 * lap * lap + b * e2 * grad + a * f.v * f.v);
    });
    let v = total / eps.powi(n as i32);
    if !v.is_finite() {
        return Err(EnergyError::Quadrature {
            value: v,
            estimate: f64::NAN,
        });
    }
    Ok(v)
}

pub fn eps_norm(
    u: &dyn ChartFunction,
    eps: f64,
    jet: &MetricJet,
    params: &ProblemParams,
    rule: &BallRule,
) -> Result<f64, EnergyError> {
    Ok(eps_norm_sq(u, eps, jet, params, rule)?.max(0.0).sqrt())
}

/// `(ε^{−n} ∫ |u|^q dV_g)^{1/q}`.
pub fn lp_eps_norm(
    u: &dyn ChartFunction,
    q: f64,
    eps: f64,
    jet: &MetricJet,
    rule: &BallRule,
) -> Result<f64, EnergyError> {
    if !(q >= 1.0) {
        return Err(EnergyError::Config(format!("exponent q = {q} must be at least 1")));
    }
    if u.n() != jet.n {
        return Err(EnergyError::Config("function and jet dimensions differ".into()));
    }
    let mut total = 0.0;
    rule.for_each(|z, w| {
        let v = u.jet(z).v;
        let m = metric_at(jet, z);
        total += w * m.s * v.abs().powf(q);
    });
    let v = (total / eps.powi(jet.n as i32)).powf(1.0 / q);
    if !v.is_finite() {
        return Err(EnergyError::Quadrature {
            value: v,
            estimate: f64::NAN,
        });
    }
    Ok(v)
}

fn check_dims(
    u: &dyn ChartFunction,
    jet: &MetricJet,
    params: &ProblemParams,
) -> Result<(), EnergyError> {
    if u.n() != jet.n || jet.n != params.n {
        return Err(EnergyError::Config(format!(
            "dimensions differ: function {}, jet {}, params {}",
            u.n(),
            jet.n,
            params.n
        )));
    }
    Ok(())
}

impl ChartFunction for ApproxSolution<'_> {
    fn n(&self) -> usize {
        ApproxSolution::n(self)
    }

    fn jet(&self, z: &[f64]) -> Jet2 {
        self.jet_z(z)
    }

    fn default_rule(&self) -> BallRule {
        BallRule::for_approx(self)
    }
}

/// `u = −∂W/∂z_k`.
#[derive(Debug, Clone)]
pub struct TranslationMode<'a, 'b> {
    pub w: &'b ApproxSolution<'a>,
    pub k: usize,
}

impl ChartFunction for TranslationMode<'_, '_> {
    fn n(&self) -> usize {
        self.w.n()
    }

    fn jet(&self, z: &[f64]) -> Jet2 {
        let w = self.w;
        let n = w.n();
        let y: Vec<f64> = z.iter().map(|x| x / w.eps).collect();
        let rho = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ps = w.psi(rho, &w.phi(rho));
        // ∂_k Ŵ = 2 y_k ψ'(t); its jet needs ψ'', ψ''', ψ''''
        let p1 = Jet2::from_parts(
            n,
            ps[1],
            &y.iter().map(|x| 2.0 * x * ps[2]).collect::<Vec<_>>(),
            |a, b| 4.0 * y[a] * y[b] * ps[3] + if a == b { 2.0 * ps[2] } else { 0.0 },
        );
        let yk = Jet2::variable(n, self.k, y[self.k]);
        let dk = (yk * p1).scale(-2.0 / w.eps);
        rescale_jet(dk, w.eps)
    }

    fn default_rule(&self) -> BallRule {
        BallRule::for_approx(self.w)
    }
}

/// A constant function on a ball of radius `radius`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunction {
    pub n: usize,
    pub value: f64,
    pub radius: f64,
}

impl ChartFunction for ConstantFunction {
    fn n(&self) -> usize {
        self.n
    }

    fn jet(&self, z: &[f64]) -> Jet2 {
        let r2: f64 = z.iter().map(|x| x * x).sum();
        let v = if r2 <= self.radius * self.radius * (1.0 + 1e-12) {
            self.value
        } else {
            0.0
        };
        Jet2::constant(self.n, v)
    }

    fn default_rule(&self) -> BallRule {
        BallRule::uniform(self.n, self.radius, 64, 4)
    }
}
