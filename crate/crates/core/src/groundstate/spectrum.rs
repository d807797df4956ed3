//! Mode-by-mode spectrum of the linearization `Δ² − bΔ + a − pU^{p−1}`.
//!
//! With `v = r^{−(n−1)/2} φ` the mode-`ℓ` radial Laplacian becomes
//! `D = d²/dr² − c/r²`, `c = (n−1)(n−3)/4 + ℓ(ℓ+n−2)`, which is symmetric in
//! plain `L²(dr)`. `D` is discretized with the five-point fourth-order stencil,
//! `φ(0) = 0`, and the ghost `φ(−h) = ±φ(h)` given by the parity of `φ` near 0.
//! For even `n` that parity is not defined and the odd extension is used, which
//! costs accuracy near the origin.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{GroundStateError, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub h: f64,
    pub r_max: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { h: 0.05, r_max: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub ell: usize,
    /// Lowest eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors in the symmetric variable `φ = r^{(n−1)/2} v`.
    pub vectors: Vec<Vec<f64>>,
    /// Radii of the unknowns (`h, 2h, …`).
    pub nodes: Vec<f64>,
    pub size: usize,
}

impl SpectrumReport {
    /// Index of the eigenvalue closest to zero.
    pub fn nearest_zero(&self) -> usize {
        (0..self.eigenvalues.len())
            .min_by(|&i, &j| self.eigenvalues[i].abs().total_cmp(&self.eigenvalues[j].abs()))
            .unwrap()
    }

    pub fn negative_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| **l < 0.0).count()
    }

    /// Relative L² mismatch between eigenvector `idx` and `r^{(n−1)/2} U'`,
    /// after normalizing both and aligning signs.
    pub fn translation_mismatch(&self, profile: &RadialProfile, idx: usize) -> f64 {
        let interp = profile.interpolant();
        let half = 0.5 * (profile.params.n as f64 - 1.0);
        let target: Vec<f64> = self
            .nodes
            .iter()
            .map(|r| r.powf(half) * interp.eval(*r).u1)
            .collect();
        let v = &self.vectors[idx];
        let nt = target.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot: f64 = target.iter().zip(v).map(|(a, b)| a * b).sum();
        let sign = dot.signum();
        let diff: f64 = target
            .iter()
            .zip(v)
            .map(|(a, b)| {
                let d = a / nt - sign * b / nv;
                d * d
            })
            .sum();
        diff.sqrt()
    }
}

pub fn linearized_spectrum(
    profile: &RadialProfile,
    ell: usize,
    k: usize,
) -> Result<SpectrumReport, GroundStateError> {
    linearized_spectrum_with(profile, ell, k, &SpectrumOptions::default())
}

pub fn linearized_spectrum_with(
    profile: &RadialProfile,
    ell: usize,
    k: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumReport, GroundStateError> {
    if k == 0 {
        return Err(GroundStateError::Spectrum("k must be at least 1".into()));
    }
    if !(opts.h > 0.0 && opts.r_max > 10.0 * opts.h) {
        return Err(GroundStateError::Spectrum(format!(
            "bad discretization h = {}, r_max = {}",
            opts.h, opts.r_max
        )));
    }
    let r_max = opts.r_max.min(profile.grid.r_max());
    let m = (r_max / opts.h).round() as usize;
    if k > m {
        return Err(GroundStateError::Spectrum(format!(
            "k = {k} exceeds the discretization size {m}"
        )));
    }
    let n = profile.params.n;
    let (a, b, p) = (profile.params.a, profile.params.b, profile.params.p);
    let nf = n as f64;
    let lf = ell as f64;
    let c = (nf - 1.0) * (nf - 3.0) / 4.0 + lf * (lf + nf - 2.0);
    let parity = if n % 2 == 1 {
        if ((n - 1) / 2 + ell) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    } else {
        -1.0
    };
    let h = opts.h;
    let c2 = 1.0 / (12.0 * h * h);
    let nodes: Vec<f64> = (1..=m).map(|i| i as f64 * h).collect();
    let mut d = DMatrix::<f64>::zeros(m, m);
    let stencil = [-1.0, 16.0, -30.0, 16.0, -1.0];
    for row in 0..m {
        let i = row as isize + 1;
        for (off, s) in stencil.iter().enumerate() {
            let j = i + off as isize - 2;
            if j == 0 || j > m as isize {
                continue;
            }
            if j < 0 {
                d[(row, (-j - 1) as usize)] += parity * s * c2;
            } else {
                d[(row, (j - 1) as usize)] += s * c2;
            }
        }
        d[(row, row)] -= c / (nodes[row] * nodes[row]);
    }
    let interp = profile.interpolant();
    let mut l = &d * &d - &d * b;
    for (row, r) in nodes.iter().enumerate() {
        let u = interp.eval(*r).u.max(0.0);
        l[(row, row)] += a - p * u.powf(p - 1.0);
    }
    let l = (&l + l.transpose()) * 0.5;
    if l.iter().any(|x| !x.is_finite()) {
        return Err(GroundStateError::Spectrum("non-finite operator entries".into()));
    }
    let eig = SymmetricEigen::try_new(l, 1e-14, 0)
        .ok_or_else(|| GroundStateError::Spectrum(format!("eigensolver failed (size {m})")))?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    Ok(SpectrumReport {
        ell,
        eigenvalues,
        vectors,
        nodes,
        size: m,
    })
}
