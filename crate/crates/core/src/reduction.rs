//! Reduced energy over a sampled chart and tracking of its extremizer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    alpha, assemble_w, beta, j_eps, polyfit, CutoffSpec, EnergyError, QuadOptions,
};
use crate::geometry::{jet_from_curvature, tau, CurvatureTensor, GeometryError, MetricJet};
use crate::groundstate::RadialProfile;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("no isolated extremum: field is constant")]
    NoExtremum,
    #[error("extremum not isolated: samples {0} and {1} tie")]
    NotIsolated(usize, usize),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FieldOrigin {
    Explicit,
    SyntheticBump { amplitude: f64, flipped: bool },
    SyntheticRandom { seed: u64 },
    CurvatureDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Max,
    Min,
}

impl ExtremumKind {
    fn flip(self) -> Self {
        match self {
            ExtremumKind::Max => ExtremumKind::Min,
            ExtremumKind::Min => ExtremumKind::Max,
        }
    }

    fn sign(self) -> f64 {
        match self {
            ExtremumKind::Max => 1.0,
            ExtremumKind::Min => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Expansion,
    Direct,
}

/// Sample points in a chart ball with a τ value and optionally a jet each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartField {
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub jets: Option<Vec<MetricJet>>,
    /// Radius of the sampled region; must stay below the chart radius.
    pub radius: f64,
    pub origin: FieldOrigin,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl ChartField {
    fn validate(self, chart_radius: f64) -> Result<Self, ReductionError> {
        let m = self.points.len();
        if m == 0 {
            return Err(ReductionError::Config("field has no samples".into()));
        }
        if self.tau.len() != m {
            return Err(ReductionError::Config(format!(
                "{} τ values for {m} points",
                self.tau.len()
            )));
        }
        if let Some(j) = &self.jets {
            if j.len() != m {
                return Err(ReductionError::Config(format!("{} jets for {m} points", j.len())));
            }
            if j.iter().any(|x| x.n != self.n) {
                return Err(ReductionError::Config("jet dimension mismatch".into()));
            }
        }
        if self.points.iter().any(|p| p.len() != self.n) {
            return Err(ReductionError::Config("point dimension mismatch".into()));
        }
        if !(self.radius < chart_radius) {
            return Err(ReductionError::Config(format!(
                "sample radius {} must be below the chart radius {chart_radius}",
                self.radius
            )));
        }
        for (k, p) in self.points.iter().enumerate() {
            if dist(p, &vec![0.0; self.n]) > self.radius * (1.0 + 1e-12) {
                return Err(ReductionError::Config(format!("point {k} lies outside the sample ball")));
            }
            for (l, q) in self.points.iter().enumerate().skip(k + 1) {
                if dist(p, q) == 0.0 {
                    return Err(ReductionError::Config(format!("points {k} and {l} coincide")));
                }
            }
        }
        if self.tau.iter().any(|t| !t.is_finite()) {
            return Err(ReductionError::Config("non-finite τ value".into()));
        }
        Ok(self)
    }

    /// Field with explicit τ values and no jets.
    pub fn explicit(
        points: Vec<Vec<f64>>,
        tau: Vec<f64>,
        radius: f64,
        chart_radius: f64,
    ) -> Result<Self, ReductionError> {
        let n = points.first().map(|p| p.len()).unwrap_or(0);
        ChartField {
            n,
            points,
            tau,
            jets: None,
            radius,
            origin: FieldOrigin::Explicit,
        }
        .validate(chart_radius)
    }

    /// Field from explicit jets; τ is computed from each jet.
    pub fn from_jets(
        points: Vec<Vec<f64>>,
        jets: Vec<MetricJet>,
        radius: f64,
        chart_radius: f64,
    ) -> Result<Self, ReductionError> {
        let n = points.first().map(|p| p.len()).unwrap_or(0);
        ChartField {
            n,
            tau: jets.iter().map(tau).collect(),
            points,
            jets: Some(jets),
            radius,
            origin: FieldOrigin::Explicit,
        }
        .validate(chart_radius)
    }

    /// Jets from curvature tensors at each point.
    pub fn from_curvature(
        points: Vec<Vec<f64>>,
        curvature: &[CurvatureTensor],
        radius: f64,
        chart_radius: f64,
    ) -> Result<Self, ReductionError> {
        let jets = curvature
            .iter()
            .map(jet_from_curvature)
            .collect::<Result<Vec<_>, _>>()?;
        let mut f = Self::from_jets(points, jets, radius, chart_radius)?;
        f.origin = FieldOrigin::CurvatureDerived;
        Ok(f)
    }

    /// `side × side` grid with the given spacing on the `(y₁, y₂)` plane,
    /// centered at the origin.
    pub fn plane_grid(n: usize, side: usize, spacing: f64) -> Vec<Vec<f64>> {
        let c = 0.5 * (side as f64 - 1.0);
        let mut pts = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                let mut p = vec![0.0; n];
                p[0] = (i as f64 - c) * spacing;
                p[1] = (j as f64 - c) * spacing;
                pts.push(p);
            }
        }
        pts
    }

    /// Jets `(t/τ₀)·H₀` realizing a τ profile, where `H₀` is the round-sphere
    /// jet of unit curvature with `τ₀ = τ(H₀)`.
    pub fn scaled_sphere_jets(n: usize, taus: &[f64]) -> Vec<MetricJet> {
        let base = jet_from_curvature(&CurvatureTensor::constant_curvature(n, 1.0))
            .expect("round-sphere curvature is algebraic");
        let t0 = tau(&base);
        taus.iter().map(|t| base.scaled(t / t0)).collect()
    }

    /// `τ(y) = ±A(1 − |y|²/R²)` on a plane grid, with matching jets.
    pub fn synthetic_bump(
        n: usize,
        side: usize,
        spacing: f64,
        amplitude: f64,
        flipped: bool,
        chart_radius: f64,
    ) -> Result<Self, ReductionError> {
        let points = Self::plane_grid(n, side, spacing);
        let radius = points
            .iter()
            .map(|p| dist(p, &vec![0.0; n]))
            .fold(0.0, f64::max);
        let s = if flipped { -1.0 } else { 1.0 };
        let r2 = (radius * radius).max(f64::MIN_POSITIVE);
        let taus: Vec<f64> = points
            .iter()
            .map(|p| s * amplitude * (1.0 - p.iter().map(|x| x * x).sum::<f64>() / r2))
            .collect();
        let jets = Self::scaled_sphere_jets(n, &taus);
        ChartField {
            n,
            points,
            tau: taus,
            jets: Some(jets),
            radius,
            origin: FieldOrigin::SyntheticBump { amplitude, flipped },
        }
        .validate(chart_radius)
    }

    /// A sum of three Gaussian bumps with random centers, widths and weights.
    pub fn synthetic_random(
        n: usize,
        side: usize,
        spacing: f64,
        amplitude: f64,
        seed: u64,
        chart_radius: f64,
    ) -> Result<Self, ReductionError> {
        use rand::{RngExt, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let points = Self::plane_grid(n, side, spacing);
        let half = 0.5 * (side as f64 - 1.0) * spacing;
        let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(-half..half),
                    rng.random_range(-half..half),
                    rng.random_range(0.3..1.0) * half,
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let taus: Vec<f64> = points
            .iter()
            .map(|p| {
                amplitude
                    * bumps
                        .iter()
                        .map(|(cx, cy, w, a)| {
                            a * (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (w * w)).exp()
                        })
                        .sum::<f64>()
            })
            .collect();
        let radius = points
            .iter()
            .map(|p| dist(p, &vec![0.0; n]))
            .fold(0.0, f64::max);
        let jets = Self::scaled_sphere_jets(n, &taus);
        ChartField {
            n,
            points,
            tau: taus,
            jets: Some(jets),
            radius,
            origin: FieldOrigin::SyntheticRandom { seed },
        }
        .validate(chart_radius)
    }

    /// Rounding level of τ computed from the jets; τ values below it are
    /// indistinguishable from zero.
    pub fn tau_floor(&self) -> f64 {
        let n2 = (self.n * self.n) as f64;
        self.jets
            .iter()
            .flatten()
            .map(|j| 64.0 * n2 * f64::EPSILON * j.max_abs())
            .fold(0.0, f64::max)
    }

    /// Smallest distance between two samples.
    pub fn spacing(&self) -> f64 {
        let mut s = f64::INFINITY;
        for (k, p) in self.points.iter().enumerate() {
            for q in self.points.iter().skip(k + 1) {
                s = s.min(dist(p, q));
            }
        }
        s
    }
}

/// `J̄(y_k)` at every sample.
pub fn reduced_energy(
    field: &ChartField,
    profile: &RadialProfile,
    eps: f64,
    mode: Mode,
    cutoff: CutoffSpec,
    quad: QuadOptions,
) -> Result<Vec<f64>, ReductionError> {
    match mode {
        Mode::Expansion => {
            let (a, b) = (alpha(profile), beta(profile));
            Ok(field.tau.iter().map(|t| a + b * eps * eps * t).collect())
        }
        Mode::Direct => {
            let jets = field.jets.as_ref().ok_or_else(|| {
                ReductionError::Config("direct mode needs a jet at every sample".into())
            })?;
            jets.iter()
                .map(|jet| {
                    let w = assemble_w(profile, eps, jet, cutoff)?.with_quad(quad)?;
                    Ok(j_eps(&w)?)
                })
                .collect()
        }
    }
}

/// Sample extremizer with its isolation certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub point: Vec<f64>,
    pub value: f64,
    /// Neighborhood radius within which the extremizer is strictly best.
    pub radius: f64,
    /// Smallest gap to any other sample inside the neighborhood.
    pub margin: f64,
    pub neighbors: usize,
}

fn extremum_of(
    points: &[Vec<f64>],
    values: &[f64],
    kind: ExtremumKind,
    radius: f64,
    floor: f64,
) -> Result<Extremum, ReductionError> {
    if values.len() < 3 {
        return Err(ReductionError::Config("at least 3 samples are needed".into()));
    }
    let s = kind.sign();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = (1e-13 * scale).max(floor);
    if hi - lo <= tol {
        return Err(ReductionError::NoExtremum);
    }
    let best = (0..values.len())
        .max_by(|&i, &j| (s * values[i]).total_cmp(&(s * values[j])))
        .unwrap();
    for k in 0..values.len() {
        if k != best && (values[k] - values[best]).abs() <= tol {
            return Err(ReductionError::NotIsolated(best.min(k), best.max(k)));
        }
    }
    let mut margin = f64::INFINITY;
    let mut neighbors = 0;
    for k in 0..values.len() {
        if k != best && dist(&points[k], &points[best]) <= radius {
            neighbors += 1;
            margin = margin.min(s * (values[best] - values[k]));
        }
    }
    Ok(Extremum {
        index: best,
        point: points[best].clone(),
        value: values[best],
        radius,
        margin,
        neighbors,
    })
}

/// Extremum of τ over the field, isolated within 1.5 sample spacings.
pub fn locate_extremum(field: &ChartField, kind: ExtremumKind) -> Result<Extremum, ReductionError> {
    extremum_of(&field.points, &field.tau, kind, 1.5 * field.spacing(), field.tau_floor())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub eps: Vec<f64>,
    pub kind: ExtremumKind,
    pub y0: Vec<f64>,
    pub y0_index: usize,
    /// Slope of `(J̄ − α)/ε²` against τ over the samples, per ε.
    pub coefficient: Vec<f64>,
    /// Extremum kind of `J̄` searched (flipped when the coefficient is negative).
    pub energy_kind: Vec<ExtremumKind>,
    pub extremizers: Vec<Vec<f64>>,
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
    /// Expansion-mode extremizer with the same convention, per ε.
    pub expansion_indices: Vec<usize>,
    pub modes_agree: Vec<bool>,
    /// Largest ε of the grid below which both modes agree at every ε.
    pub agreement_threshold: Option<f64>,
    pub spacing: f64,
    pub beta: f64,
    pub pass: bool,
}

impl ConcentrationReport {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

pub fn concentration_sweep(
    field: &ChartField,
    profile: &RadialProfile,
    eps_grid: &[f64],
    kind: ExtremumKind,
    cutoff: CutoffSpec,
    quad: QuadOptions,
) -> Result<ConcentrationReport, ReductionError> {
    if eps_grid.is_empty() || eps_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(ReductionError::Config("ε grid must be non-empty and strictly decreasing".into()));
    }
    let y0 = locate_extremum(field, kind)?;
    let spacing = field.spacing();
    let al = alpha(profile);
    let be = beta(profile);
    let mut rep = ConcentrationReport {
        eps: eps_grid.to_vec(),
        kind,
        y0: y0.point.clone(),
        y0_index: y0.index,
        coefficient: vec![],
        energy_kind: vec![],
        extremizers: vec![],
        indices: vec![],
        distances: vec![],
        expansion_indices: vec![],
        modes_agree: vec![],
        agreement_threshold: None,
        spacing,
        beta: be,
        pass: false,
    };
    let radius = 1.5 * spacing;
    for &e in eps_grid {
        let jbar = reduced_energy(field, profile, e, Mode::Direct, cutoff, quad)?;
        let scaled: Vec<f64> = jbar.iter().map(|j| (j - al) / (e * e)).collect();
        let slope = polyfit(&field.tau, &scaled, 1).get(1).copied().unwrap_or(f64::NAN);
        let ekind = if slope < 0.0 { kind.flip() } else { kind };
        let ex = extremum_of(&field.points, &jbar, ekind, radius, 0.0)?;
        let jexp = reduced_energy(field, profile, e, Mode::Expansion, cutoff, quad)?;
        let xkind = if be < 0.0 { kind.flip() } else { kind };
        let exx = extremum_of(&field.points, &jexp, xkind, radius, 0.0)?;
        rep.coefficient.push(slope);
        rep.energy_kind.push(ekind);
        rep.distances.push(dist(&ex.point, &y0.point));
        rep.extremizers.push(ex.point);
        rep.indices.push(ex.index);
        rep.expansion_indices.push(exx.index);
        rep.modes_agree.push(exx.index == ex.index);
    }
    let mut threshold = None;
    for k in (0..eps_grid.len()).rev() {
        if rep.modes_agree[k] {
            threshold = Some(eps_grid[k]);
        } else {
            break;
        }
    }
    rep.agreement_threshold = threshold;
    rep.pass = rep
        .distances
        .last()
        .map(|d| *d <= spacing * (1.0 + 1e-9))
        .unwrap_or(false);
    Ok(rep)
}

impl ConcentrationReport {
    /// CSV with one row per ε.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,index,distance,coefficient,energy_kind,expansion_index,modes_agree\n");
        for k in 0..self.eps.len() {
            s.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{},{},{}\n",
                self.eps[k],
                self.indices[k],
                self.distances[k],
                self.coefficient[k],
                match self.energy_kind[k] {
                    ExtremumKind::Max => "max",
                    ExtremumKind::Min => "min",
                },
                self.expansion_indices[k],
                self.modes_agree[k]
            ));
        }
        s
    }
}
