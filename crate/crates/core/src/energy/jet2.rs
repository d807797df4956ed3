//! Second-order forward-mode differentiation in up to eight variables.

use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_DIM: usize = 8;

/// Value, gradient and (symmetric) Hessian of a scalar function at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub n: usize,
    pub v: f64,
    pub g: [f64; MAX_DIM],
    pub h: [[f64; MAX_DIM]; MAX_DIM],
}

impl Jet2 {
    pub fn constant(n: usize, v: f64) -> Self {
        assert!(n <= MAX_DIM, "Jet2 supports at most {MAX_DIM} variables");
        Jet2 {
            n,
            v,
            g: [0.0; MAX_DIM],
            h: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    /// The coordinate function `x_i`, at value `x`.
    pub fn variable(n: usize, i: usize, x: f64) -> Self {
        let mut j = Self::constant(n, x);
        j.g[i] = 1.0;
        j
    }

    /// Builds from explicit parts; `h` is read from its upper triangle.
    pub fn from_parts(n: usize, v: f64, g: &[f64], h: impl Fn(usize, usize) -> f64) -> Self {
        let mut j = Self::constant(n, v);
        j.g[..n].copy_from_slice(&g[..n]);
        for a in 0..n {
            for b in a..n {
                let x = h(a, b);
                j.h[a][b] = x;
                j.h[b][a] = x;
            }
        }
        j
    }

    /// Chain rule `f(self)` given `f, f', f''` at `self.v`.
    pub fn compose(&self, f0: f64, f1: f64, f2: f64) -> Self {
        let n = self.n;
        let mut out = Self::constant(n, f0);
        for a in 0..n {
            out.g[a] = f1 * self.g[a];
        }
        for a in 0..n {
            for b in a..n {
                let x = f1 * self.h[a][b] + f2 * self.g[a] * self.g[b];
                out.h[a][b] = x;
                out.h[b][a] = x;
            }
        }
        out
    }

    pub fn recip(&self) -> Self {
        let v = self.v;
        self.compose(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        out.v *= c;
        for a in 0..self.n {
            out.g[a] *= c;
            for b in 0..self.n {
                out.h[a][b] *= c;
            }
        }
        out
    }

    pub fn trace_hessian(&self) -> f64 {
        (0..self.n).map(|a| self.h[a][a]).sum()
    }

    /// `self + c·other`, in place.
    pub fn add_scaled(&mut self, c: f64, other: &Jet2) {
        self.v += c * other.v;
        for a in 0..self.n {
            self.g[a] += c * other.g[a];
            for b in 0..self.n {
                self.h[a][b] += c * other.h[a][b];
            }
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(mut self, o: Jet2) -> Jet2 {
        self.add_scaled(1.0, &o);
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(mut self, o: Jet2) -> Jet2 {
        self.add_scaled(-1.0, &o);
        self
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let n = self.n;
        let mut out = Jet2::constant(n, self.v * o.v);
        for a in 0..n {
            out.g[a] = self.v * o.g[a] + o.v * self.g[a];
        }
        for a in 0..n {
            for b in a..n {
                let x = self.v * o.h[a][b]
                    + o.v * self.h[a][b]
                    + self.g[a] * o.g[b]
                    + self.g[b] * o.g[a];
                out.h[a][b] = x;
                out.h[b][a] = x;
            }
        }
        out
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, c: f64) -> Jet2 {
        self.scale(c)
    }
}
