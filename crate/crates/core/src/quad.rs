//! Quadrature rules shared by the radial and ball integrators.

use nalgebra::{DMatrix, SymmetricEigen};

/// End-corrected trapezoid weights (Gregory, fourth order) for `k+1` uniform
/// nodes with spacing `h`. Falls back to Simpson/trapezoid on very short grids.
pub fn gregory_weights(k: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; k + 1];
    if k >= 6 {
        let ends = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (j, e) in ends.iter().enumerate() {
            w[j] = e * h;
            w[k - j] = e * h;
        }
    } else if k >= 1 {
        w[0] = 0.5 * h;
        w[k] = 0.5 * h;
    } else {
        w[0] = 0.0;
    }
    w
}

/// Weights for `∫_0^{kh} f` on uniform nodes: Gregory at the right end, and at
/// the left end either Gregory or, when `f` extends to an even smooth function,
/// the plain trapezoid weight (whose Euler–Maclaurin terms then vanish).
pub fn radial_weights(k: usize, h: f64, even_at_origin: bool) -> Vec<f64> {
    let mut w = gregory_weights(k, h);
    if even_at_origin && k >= 6 {
        w[0] = 0.5 * h;
        w[1] = h;
        w[2] = h;
    }
    w
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = mf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss rule for the weight `(1 − x²)^(λ − 1/2)` on `[-1, 1]` (Golub–Welsch).
/// `λ` must be a non-negative multiple of one half.
pub fn gauss_gegenbauer(m: usize, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(lambda >= 0.5, "gauss_gegenbauer needs lambda >= 1/2");
    if (lambda - 0.5).abs() < 1e-15 {
        return gauss_legendre(m);
    }
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * lambda - 1.0) / (4.0 * (kf + lambda) * (kf + lambda - 1.0));
        let s = beta.sqrt();
        jac[(k, k - 1)] = s;
        jac[(k - 1, k)] = s;
    }
    let mu0 =
        std::f64::consts::PI.sqrt() * gamma_half_integer(lambda + 0.5) / gamma_half_integer(lambda + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // enforce exact symmetry of the rule
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

/// Gamma function at integers and half-integers, exact up to rounding.
pub fn gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round();
    assert!(
        (2.0 * x - twice).abs() < 1e-12 && twice >= 1.0,
        "gamma_half_integer needs a positive integer or half-integer, got {x}"
    );
    let t = twice as i64;
    let (mut g, mut y) = if t % 2 == 0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while y + 0.5 < x {
        g *= y;
        y += 1.0;
    }
    g
}
