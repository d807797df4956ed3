//! Product quadrature on balls: profile-grid radial nodes times a Gauss rule
//! on the sphere in hyperspherical angles.

use crate::groundstate::RadialProfile;
use crate::quad::{gauss_gegenbauer, radial_weights};
use crate::sphere_area;

/// Quadrature rule on `S^{n−1}`.
#[derive(Debug, Clone)]
pub struct AngularRule {
    pub n: usize,
    /// Row-major `len × n` unit vectors.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    /// Product rule: `m` Gauss–Gegenbauer nodes per polar angle, `2m` uniform
    /// azimuths. Exact for polynomials of degree `2m − 1`. With `half`, only
    /// azimuths in `[0, π)` are kept at double weight, which is exact for
    /// integrands invariant under `ω → −ω`.
    pub fn product(n: usize, m: usize, half: bool) -> Self {
        assert!(n >= 2 && m >= 1);
        let polar: Vec<(Vec<f64>, Vec<f64>)> = (0..n - 2)
            .map(|j| gauss_gegenbauer(m, 0.5 * (n - 2 - j) as f64))
            .collect();
        let naz = if half { m } else { 2 * m };
        let dphi = std::f64::consts::PI / m as f64;
        let wphi = if half { 2.0 * dphi } else { dphi };
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let total = m.pow((n - 2) as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            let mut lead = vec![0.0; n];
            let mut sin_prod = 1.0;
            for (j, (x, wx)) in polar.iter().enumerate() {
                let a = rem % m;
                rem /= m;
                let c = x[a];
                lead[j] = sin_prod * c;
                sin_prod *= (1.0 - c * c).max(0.0).sqrt();
                w *= wx[a];
            }
            for k in 0..naz {
                let phi = (k as f64 + 0.5) * dphi;
                let mut v = lead.clone();
                v[n - 2] = sin_prod * phi.cos();
                v[n - 1] = sin_prod * phi.sin();
                nodes.extend_from_slice(&v);
                weights.push(w * wphi);
            }
        }
        AngularRule { n, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, a: usize) -> &[f64] {
        &self.nodes[a * self.n..(a + 1) * self.n]
    }

    /// Sum of weights; equals `|S^{n−1}|` up to rounding.
    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn exact_total(&self) -> f64 {
        sphere_area(self.n)
    }
}

/// Profile samples on every `stride`-th node, with `U''''` added and
/// volume weights for `∫ f ρ^{n−1} dρ`.
#[derive(Debug, Clone)]
pub struct RadialSamples {
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u3: Vec<f64>,
    pub u4: Vec<f64>,
    pub weights: Vec<f64>,
    pub h: f64,
}

impl RadialSamples {
    /// Nodes `0, sh, 2sh, …` up to `rho_max` (clipped to the profile grid).
    pub fn new(profile: &RadialProfile, stride: usize, rho_max: f64) -> Self {
        let stride = stride.max(1);
        let n = profile.params.n;
        let h = profile.grid.h;
        let last = profile.u.len() - 1;
        let kmax = ((rho_max / h).floor() as usize).min(last) / stride;
        let u4_full = fourth_derivative(profile);
        let pick = |v: &[f64]| (0..=kmax).map(|i| v[i * stride]).collect::<Vec<f64>>();
        let hs = h * stride as f64;
        let rho: Vec<f64> = (0..=kmax).map(|i| i as f64 * hs).collect();
        let base = radial_weights(kmax, hs, n % 2 == 1);
        let weights = base
            .iter()
            .zip(&rho)
            .map(|(w, r)| w * r.powi(n as i32 - 1))
            .collect();
        RadialSamples {
            u: pick(&profile.u),
            u1: pick(&profile.u1),
            u2: pick(&profile.u2),
            u3: pick(&profile.u3),
            u4: pick(&u4_full),
            rho,
            weights,
            h: hs,
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Sixth-order second difference of `U''` (even mirror, exponential ghost).
fn fourth_derivative(profile: &RadialProfile) -> Vec<f64> {
    const D2: [f64; 7] = [
        1.0 / 90.0,
        -3.0 / 20.0,
        3.0 / 2.0,
        -49.0 / 18.0,
        3.0 / 2.0,
        -3.0 / 20.0,
        1.0 / 90.0,
    ];
    let u2 = &profile.u2;
    let k = u2.len() - 1;
    let h = profile.grid.h;
    let g = (-profile.params.roots().decay_rate * h).exp();
    let at = |j: isize| -> f64 {
        if j < 0 {
            u2[(-j) as usize]
        } else if j as usize > k {
            u2[k] * g.powi((j as usize - k) as i32)
        } else {
            u2[j as usize]
        }
    };
    (0..=k)
        .map(|i| {
            (0..7)
                .map(|o| D2[o] * at(i as isize + o as isize - 3))
                .sum::<f64>()
                / (h * h)
        })
        .collect()
}
