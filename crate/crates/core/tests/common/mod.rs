//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Radial ground state from a second-order finite-difference collocation of
/// `(−Δ + μ₂²)U = V`, `(−Δ + μ₁²)V = U₊^p` on `[0, R]` with `U(R) = V(R) = 0`,
/// solved by damped Newton with a 2×2 block tridiagonal solve.
pub struct Colloc {
    pub n: usize,
    pub h: f64,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub iterations: usize,
}

type B2 = [[f64; 2]; 2];

fn mul(a: &B2, b: &B2) -> B2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn inv(a: &B2) -> B2 {
    let d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

fn mulv(a: &B2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Solves the block tridiagonal system `lo_i x_{i−1} + di_i x_i + up_i x_{i+1} = f_i`.
fn block_thomas(lo: &[B2], di: &[B2], up: &[B2], f: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let m = di.len();
    let mut cp = vec![[[0.0; 2]; 2]; m];
    let mut fp = vec![[0.0; 2]; m];
    let mut piv = di[0];
    let mut pinv = inv(&piv);
    cp[0] = mul(&pinv, &up[0]);
    fp[0] = mulv(&pinv, f[0]);
    for i in 1..m {
        let lc = mul(&lo[i], &cp[i - 1]);
        for a in 0..2 {
            for b in 0..2 {
                piv[a][b] = di[i][a][b] - lc[a][b];
            }
        }
        pinv = inv(&piv);
        cp[i] = mul(&pinv, &up[i]);
        let lf = mulv(&lo[i], fp[i - 1]);
        fp[i] = mulv(&pinv, [f[i][0] - lf[0], f[i][1] - lf[1]]);
    }
    let mut x = vec![[0.0; 2]; m];
    x[m - 1] = fp[m - 1];
    for i in (0..m - 1).rev() {
        let c = mulv(&cp[i], x[i + 1]);
        x[i] = [fp[i][0] - c[0], fp[i][1] - c[1]];
    }
    x
}

pub fn collocation(n: usize, p: f64, a: f64, b: f64, h: f64, r_max: f64) -> Colloc {
    let disc = (b * b - 4.0 * a).sqrt();
    let m1 = 0.5 * (b + disc);
    let m2 = 0.5 * (b - disc);
    let m = (r_max / h).round() as usize;
    let nf = n as f64;
    let r: Vec<f64> = (0..=m).map(|i| i as f64 * h).collect();
    // −Δ stencil (lower, diagonal, upper) at node i
    let st = |i: usize| -> (f64, f64, f64) {
        if i == 0 {
            (0.0, 2.0 * nf / (h * h), -2.0 * nf / (h * h))
        } else {
            let c = (nf - 1.0) / (2.0 * h * r[i]);
            (-1.0 / (h * h) + c, 2.0 / (h * h), -1.0 / (h * h) - c)
        }
    };
    let mut x: Vec<[f64; 2]> = (0..m)
        .map(|i| {
            let u = 10.0 * (-r[i] * r[i] / 10.0).exp();
            [u, m1 * u]
        })
        .collect();
    let resid = |x: &[[f64; 2]]| -> Vec<[f64; 2]> {
        (0..m)
            .map(|i| {
                let (l, d, up) = st(i);
                let prev = if i == 0 { [0.0; 2] } else { x[i - 1] };
                let next = if i + 1 == m { [0.0; 2] } else { x[i + 1] };
                let lap = |k: usize| l * prev[k] + d * x[i][k] + up * next[k];
                [
                    lap(0) + m2 * x[i][0] - x[i][1],
                    lap(1) + m1 * x[i][1] - pos(x[i][0]).powf(p),
                ]
            })
            .collect()
    };
    let norm = |f: &[[f64; 2]]| f.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>().sqrt();
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let f = resid(&x);
        let f0 = norm(&f);
        let mut lo = vec![[[0.0; 2]; 2]; m];
        let mut di = vec![[[0.0; 2]; 2]; m];
        let mut upb = vec![[[0.0; 2]; 2]; m];
        for i in 0..m {
            let (l, d, up) = st(i);
            lo[i] = [[l, 0.0], [0.0, l]];
            upb[i] = [[up, 0.0], [0.0, up]];
            di[i] = [[d + m2, -1.0], [-p * pos(x[i][0]).powf(p - 1.0), d + m1]];
        }
        let dx = block_thomas(&lo, &di, &upb, &f);
        let mut t = 1.0;
        let mut trial = x.clone();
        for _ in 0..50 {
            for i in 0..m {
                trial[i] = [x[i][0] - t * dx[i][0], x[i][1] - t * dx[i][1]];
            }
            if norm(&resid(&trial)) < f0 || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        let step = dx.iter().map(|v| v[0].abs()).fold(0.0, f64::max) * t;
        x = trial.clone();
        if step < 1e-13 * x[0][0].abs() {
            break;
        }
    }
    let mut u: Vec<f64> = x.iter().map(|v| v[0]).collect();
    u.push(0.0);
    Colloc { n, h, r, u, iterations }
}

impl Colloc {
    pub fn u0(&self) -> f64 {
        self.u[0]
    }

    /// Linear interpolation of `U`.
    pub fn u_at(&self, r: f64) -> f64 {
        let k = ((r / self.h) as usize).min(self.r.len() - 2);
        let t = (r - self.r[k]) / self.h;
        (1.0 - t) * self.u[k] + t * self.u[k + 1]
    }

    /// `∫ f(U) r^{n−1} dr` by the trapezoid rule.
    pub fn radial_integral(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = |k: usize| f(self.u[k]) * self.r[k].powi(self.n as i32 - 1);
        (1..self.r.len()).map(|i| 0.5 * self.h * (w(i) + w(i - 1))).sum()
    }
}

/// Richardson extrapolation of a second-order quantity from `h` and `h/2`.
pub fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Area of the unit 4-sphere.
pub const AREA_S4: f64 = 8.0 * std::f64::consts::PI * std::f64::consts::PI / 3.0;

/// Adaptive Simpson on `[lo, hi]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let d = left + right - whole;
        if depth == 0 || d.abs() <= 15.0 * tol {
            left + right + d / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb) = (f(lo), f(hi));
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, lo, hi, fa, fm, fb, whole, tol, 40)
}

/// Halton point `k` in the given prime bases.
pub fn halton(k: u64, bases: &[u64]) -> Vec<f64> {
    bases
        .iter()
        .map(|&b| {
            let (mut f, mut r, mut i) = (1.0, 0.0, k);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Inverse standard normal CDF (Acklam's rational approximation, ~1e−9).
pub fn inv_normal(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

const N: f64 = 5.0;

/// Lowest eigenvalues of the mode-ℓ linearization at n = 5 with a plain
/// second-order stencil and Dirichlet ends.
pub fn dense_mode_spectrum(
    u: &dyn Fn(f64) -> f64,
    p: f64,
    a: f64,
    b: f64,
    ell: usize,
    h: f64,
    r_max: f64,
    k: usize,
) -> Vec<f64> {
    let m = (r_max / h).round() as usize - 1;
    let c = (N - 1.0) * (N - 3.0) / 4.0 + (ell * (ell + 3)) as f64;
    let mut d = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let r = (i + 1) as f64 * h;
        d[(i, i)] = -2.0 / (h * h) - c / (r * r);
        if i > 0 {
            d[(i, i - 1)] = 1.0 / (h * h);
        }
        if i + 1 < m {
            d[(i, i + 1)] = 1.0 / (h * h);
        }
    }
    let mut l = &d * &d - &d * b;
    for i in 0..m {
        let r = (i + 1) as f64 * h;
        l[(i, i)] += a - p * pos(u(r)).powf(p - 1.0);
    }
    let sym = 0.5 * (&l + l.transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(k);
    ev
}
