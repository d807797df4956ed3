//! Problem parameters for the limit equation `Δ²U − bΔU + aU = U^p` and the
//! product-manifold constants that feed it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("dimension n = {0} must be at least 5")]
    DimensionTooSmall(usize),
    #[error("fiber dimension m = {0} must be at least 2")]
    FiberTooSmall(usize),
    #[error("Einstein constant must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("coefficient a = {0} must be positive")]
    NonPositiveA(f64),
    #[error("coefficient b = {0} must be positive")]
    NonPositiveB(f64),
    #[error("discriminant b^2 - 4a = {0} is not positive")]
    Discriminant(f64),
    #[error("exponent p = {0} must exceed 1")]
    ExponentTooSmall(f64),
    #[error("exponent p = {p} is not below the critical value {critical}")]
    ExponentSupercritical { p: f64, critical: f64 },
    #[error("non-finite parameter value")]
    NonFinite,
}

/// Validated exponent and coefficients of the limit equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl ProblemParams {
    /// Builds and validates in one step.
    pub fn new(n: usize, p: f64, a: f64, b: f64) -> Result<Self, ParamError> {
        validate(ProblemParams { n, p, a, b })
    }

    /// Critical Sobolev exponent `(n+4)/(n−4)`.
    pub fn critical_exponent(&self) -> f64 {
        (self.n as f64 + 4.0) / (self.n as f64 - 4.0)
    }

    /// True when `p < (n+4)/n`, the range with a known non-degeneracy result.
    pub fn nondegenerate_range(&self) -> bool {
        self.p < (self.n as f64 + 4.0) / self.n as f64
    }

    pub fn roots(&self) -> FactorRoots {
        factor_roots(self.a, self.b).expect("validated params have b^2 > 4a")
    }
}

/// Checks every invariant of [`ProblemParams`], reporting the first violation.
pub fn validate(params: ProblemParams) -> Result<ProblemParams, ParamError> {
    let ProblemParams { n, p, a, b } = params;
    if !(p.is_finite() && a.is_finite() && b.is_finite()) {
        return Err(ParamError::NonFinite);
    }
    if n < 5 {
        return Err(ParamError::DimensionTooSmall(n));
    }
    if a <= 0.0 {
        return Err(ParamError::NonPositiveA(a));
    }
    if b <= 0.0 {
        return Err(ParamError::NonPositiveB(b));
    }
    let disc = b * b - 4.0 * a;
    if disc <= 0.0 {
        return Err(ParamError::Discriminant(disc));
    }
    if p <= 1.0 {
        return Err(ParamError::ExponentTooSmall(p));
    }
    let critical = params.critical_exponent();
    if p >= critical {
        return Err(ParamError::ExponentSupercritical { p, critical });
    }
    Ok(params)
}

/// Roots of `t² − bt + a`, so that `Δ² − bΔ + a = (−Δ + mu1_sq)(−Δ + mu2_sq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorRoots {
    pub mu1_sq: f64,
    pub mu2_sq: f64,
    pub decay_rate: f64,
}

pub fn factor_roots(a: f64, b: f64) -> Result<FactorRoots, ParamError> {
    if a <= 0.0 {
        return Err(ParamError::NonPositiveA(a));
    }
    if b <= 0.0 {
        return Err(ParamError::NonPositiveB(b));
    }
    let disc = b * b - 4.0 * a;
    if !(disc > 0.0) {
        return Err(ParamError::Discriminant(disc));
    }
    let mu1_sq = 0.5 * (b + disc.sqrt());
    // small root from the product, no cancellation
    let mu2_sq = a / mu1_sq;
    Ok(FactorRoots {
        mu1_sq,
        mu2_sq,
        decay_rate: mu2_sq.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Positive,
}

/// Constants of the product problem `M^n × X^m` with Einstein fiber constant `Λ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub n: usize,
    pub m: usize,
    pub lambda0: f64,
    pub big_n: usize,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub lambda_eps_sign: Sign,
    pub bsq_gt_4a: bool,
}

impl ProductSpec {
    /// Converts to [`ProblemParams`], applying the usual validation.
    pub fn to_params(&self) -> Result<ProblemParams, ParamError> {
        ProblemParams::new(self.n, self.p, self.a, self.b)
    }
}

pub fn derive_constants(n: usize, m: usize, lambda0: f64) -> Result<ProductSpec, ParamError> {
    if n < 5 {
        return Err(ParamError::DimensionTooSmall(n));
    }
    if m < 2 {
        return Err(ParamError::FiberTooSmall(m));
    }
    if !(lambda0 > 0.0) || !lambda0.is_finite() {
        return Err(ParamError::NonPositiveLambda(lambda0));
    }
    let nn = (n + m) as f64;
    let mf = m as f64;
    let poly = nn * nn * nn - 4.0 * nn * nn + 16.0 * nn - 16.0;
    let bracket = -2.0 + poly * mf / (8.0 * (nn - 1.0) * (nn - 1.0));
    let a_unit = mf * (nn - 4.0) / (2.0 * (nn - 2.0) * (nn - 2.0)) * bracket;
    let b_unit = (nn * nn - 4.0 * nn + 8.0) / (4.0 * (nn - 1.0) * (nn - 2.0)) * mf;
    let a = lambda0 * lambda0 * a_unit;
    let b = lambda0 * b_unit;
    let p = (nn + 4.0) / (nn - 4.0);
    let lambda_eps_sign = if m >= 3 || n + m >= 9 {
        Sign::Positive
    } else {
        Sign::Negative
    };
    Ok(ProductSpec {
        n,
        m,
        lambda0,
        big_n: n + m,
        a,
        b,
        p,
        lambda_eps_sign,
        bsq_gt_4a: b * b - 4.0 * a > 0.0,
    })
}
