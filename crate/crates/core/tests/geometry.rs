mod common;

use common::{adaptive_simpson, rel, AREA_S4};
use proptest::prelude::*;
use qspike::geometry::{
    angular_moment, contraction_identity, jet_from_curvature, radial_moment, radial_moment_samples,
    scalar_curvature_from_jet, sphere_monomial, tau, CurvatureTensor, GeometryError, MetricJet,
    RadialWeight,
};
use qspike::groundstate::{solve_ground_state, RadialGrid, RadialProfile};
use qspike::params::ProblemParams;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use std::sync::OnceLock;

fn profile() -> &'static RadialProfile {
    static P: OnceLock<RadialProfile> = OnceLock::new();
    P.get_or_init(|| {
        let params = ProblemParams::new(5, 1.5, 1.0, 3.0).unwrap();
        let grid = RadialGrid::for_params(&params, 0.05).unwrap();
        solve_ground_state(params, grid, 1e-9).unwrap()
    })
}

fn four_loop(jet: &MetricJet, f: impl Fn(usize, usize, usize, usize) -> bool) -> f64 {
    let n = jet.n;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if f(i, j, k, l) {
                        s += jet.get(i, j, k, l);
                    }
                }
            }
        }
    }
    s
}

#[test]
fn tau_examples() {
    assert_eq!(tau(&MetricJet::zeros(5)), 0.0);
    assert_eq!(tau(&MetricJet::isotropic_diagonal(5, 1.0)), 25.0);
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..10 {
        let jet = MetricJet::random_symmetric(5, 1.0, &mut rng);
        let t = four_loop(&jet, |i, j, k, l| i == j && k == l);
        let s = four_loop(&jet, |i, j, k, l| i == k && j == l);
        assert!((tau(&jet) - t).abs() < 1e-12);
        assert!((jet.sigma() - s).abs() < 1e-12);
        assert!((scalar_curvature_from_jet(&jet) - (t - s)).abs() < 1e-12);
    }
}

#[test]
fn compatible_jets_have_zero_scalar_curvature() {
    assert_eq!(scalar_curvature_from_jet(&MetricJet::zeros(5)), 0.0);
    let mut rng = StdRng::seed_from_u64(4);
    for _ in 0..10 {
        let jet = MetricJet::random_compatible(5, 1.0, &mut rng);
        assert!(jet.ricci_flat_compatible());
        assert!(scalar_curvature_from_jet(&jet).abs() < 1e-12);
    }
}

#[test]
fn jet_constructors_validate() {
    assert!(matches!(
        MetricJet::from_array(5, vec![0.0; 10]),
        Err(GeometryError::Shape { expected: 625, got: 10, .. })
    ));
    let mut data = vec![0.0; 625];
    data[1] = 1.0; // H[0][0][0][1] without its (kl) partner
    assert!(matches!(
        MetricJet::from_array(5, data.clone()),
        Err(GeometryError::Symmetry(..))
    ));
    let (jet, repaired) = MetricJet::from_array_symmetrized(5, data).unwrap();
    assert!(repaired);
    assert_eq!(jet.get(0, 0, 0, 1), 0.5);
    assert_eq!(jet.get(0, 0, 1, 0), 0.5);

    let jet = MetricJet::random_compatible(5, 0.1, &mut StdRng::seed_from_u64(5));
    let (back, flagged) = MetricJet::from_json(&jet.to_json(), false).unwrap();
    assert_eq!(back, jet);
    assert!(!flagged);
}

#[test]
fn curvature_jet_examples() {
    let zero = CurvatureTensor::constant_curvature(5, 0.0);
    assert_eq!(jet_from_curvature(&zero).unwrap(), MetricJet::zeros(5));

    // round sphere: S = n(n−1)K, τ = (2/3) Σ R_ijij = (2/3) S
    for k in [1.0, -0.3, 2.5] {
        let r = CurvatureTensor::constant_curvature(5, k);
        let s = 20.0 * k;
        assert!((r.scalar() - s).abs() < 1e-12);
        let jet = jet_from_curvature(&r).unwrap();
        assert!(rel(tau(&jet), 2.0 * s / 3.0) < 1e-14);
    }

    // in general τ = 2S/3 and σ = −S/3, so the jet formula returns S itself
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..10 {
        let r = CurvatureTensor::random(5, 0.5, &mut rng);
        let jet = jet_from_curvature(&r).unwrap();
        let s = r.scalar();
        assert!((tau(&jet) - 2.0 * s / 3.0).abs() < 1e-12 * s.abs().max(1.0));
        assert!((jet.sigma() + s / 3.0).abs() < 1e-12 * s.abs().max(1.0));
        assert!((scalar_curvature_from_jet(&jet) - s).abs() < 1e-12 * s.abs().max(1.0));

        let w = r.weyl();
        assert!(w.ricci().iter().all(|x| x.abs() < 1e-12));
        assert!(jet_from_curvature(&w).unwrap().ricci_flat_compatible());
    }
}

#[test]
fn curvature_tensor_rejects_broken_symmetries() {
    let mut data = vec![0.0; 625];
    data[1] = 1.0;
    assert!(matches!(
        CurvatureTensor::new(5, data),
        Err(GeometryError::Symmetry(..))
    ));
    let ok = CurvatureTensor::constant_curvature(5, 1.0);
    assert!(CurvatureTensor::new(5, ok.data.clone()).is_ok());
}

#[test]
fn angular_moment_examples() {
    assert!(rel(angular_moment(5, 0, 0), AREA_S4) < 1e-14);
    assert!(rel(angular_moment(5, 1, 1), AREA_S4 / 35.0) < 1e-14);
    assert!((angular_moment(5, 1, 1) - 0.751969).abs() < 1e-6);
    assert_eq!(sphere_monomial(5, &[1, 1]), 0.0);
    assert_eq!(sphere_monomial(5, &[2, 0, 3]), 0.0);
    // S¹ and S² areas
    assert!(rel(angular_moment(2, 0, 0), 2.0 * std::f64::consts::PI) < 1e-14);
    assert!(rel(angular_moment(3, 0, 0), 4.0 * std::f64::consts::PI) < 1e-14);
}

#[test]
fn angular_moment_against_monte_carlo() {
    // uniform points on S⁴ by normalizing Gaussians (Box–Muller)
    let mut rng = StdRng::seed_from_u64(7);
    let samples = 10_000_000usize;
    let (mut s11, mut s20) = (0.0, 0.0);
    let mut g = [0.0f64; 6];
    for _ in 0..samples {
        for pair in g.chunks_mut(2) {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            let rad = (-2.0 * u1.ln()).sqrt();
            let th = 2.0 * std::f64::consts::PI * u2;
            pair[0] = rad * th.cos();
            pair[1] = rad * th.sin();
        }
        let norm2: f64 = g[..5].iter().map(|x| x * x).sum();
        let (w1, w2) = (g[0] * g[0] / norm2, g[1] * g[1] / norm2);
        s11 += w1 * w2;
        s20 += w1 * w1;
    }
    let mc11 = AREA_S4 * s11 / samples as f64;
    let mc20 = AREA_S4 * s20 / samples as f64;
    assert!(rel(angular_moment(5, 1, 1), mc11) < 1e-3, "{mc11}");
    assert!(rel(angular_moment(5, 2, 0), mc20) < 1e-3, "{mc20}");
}

#[test]
fn angular_moment_sums_to_lower_moment() {
    // Σ_i ∫ ω₁² ω_i² = ∫ ω₁² since Σ ω_i² = 1
    for n in 2..=8 {
        let mut total = angular_moment(n, 2, 0);
        total += (n - 1) as f64 * angular_moment(n, 1, 1);
        assert!(rel(total, angular_moment(n, 1, 0)) < 1e-13, "n = {n}");
    }
}

#[test]
fn radial_moment_examples() {
    let h = 1e-3;
    let ones = vec![1.0; 1001];
    assert!(rel(radial_moment_samples(h, &ones, 4).unwrap(), 0.2) < 1e-10);

    let h = 0.01;
    let w: Vec<f64> = (0..=4000).map(|i| (-2.0 * i as f64 * h).exp()).collect();
    let m = radial_moment_samples(h, &w, 8).unwrap();
    assert!(rel(m, 78.75) < 1e-8, "{m}");
}

#[test]
fn radial_moment_flags_divergence() {
    let h = 0.01;
    let w: Vec<f64> = (0..=1000).map(|i| 1.0 / (i as f64 * h)).collect();
    assert!(matches!(
        radial_moment_samples(h, &w, 0),
        Err(GeometryError::Quadrature { .. })
    ));
    let ones = vec![1.0; 1001];
    assert!(matches!(
        radial_moment_samples(h, &ones, -2),
        Err(GeometryError::Quadrature { .. })
    ));
}

#[test]
fn profile_moment_matches_adaptive_quadrature() {
    let prof = profile();
    let interp = prof.interpolant();
    let r_end = *prof.grid.nodes.last().unwrap();
    let f = |r: f64| {
        let d = interp.eval(r);
        d.u1 * d.u1 * r.powi(8)
    };
    // unit panels so the tail cannot fool the error estimate
    let panels = r_end.ceil() as usize;
    let oracle: f64 = (0..panels)
        .map(|k| adaptive_simpson(&f, k as f64, (k as f64 + 1.0).min(r_end), 1e-7))
        .sum();
    let m = radial_moment(RadialWeight::DerivSq, prof, 8).unwrap();
    assert!(rel(m, oracle) < 1e-6, "{m} vs {oracle}");
    for w in RadialWeight::ALL {
        assert!(radial_moment(w, prof, 8).unwrap().is_finite());
    }
}

#[test]
fn contraction_examples() {
    let prof = profile();
    let zero = contraction_identity(&MetricJet::zeros(5), RadialWeight::USq, prof).unwrap();
    assert_eq!((zero.lhs, zero.rhs_tau_form, zero.ratio), (0.0, 0.0, None));
    assert!(!zero.violation);

    // isotropic diagonal: lhs = c (n I(z⁴) + n(n−1) I(z₁²z₂²)) = 35 c I₁₁, τ = 25 c
    let c = 0.7;
    let rep = contraction_identity(&MetricJet::isotropic_diagonal(5, c), RadialWeight::USq, prof)
        .unwrap();
    let i11 = radial_moment(RadialWeight::USq, prof, 8).unwrap() * angular_moment(5, 1, 1);
    assert!(rel(rep.lhs, 35.0 * c * i11) < 1e-13);
    assert!(rel(rep.ratio.unwrap(), 1.4) < 1e-13);

    // τ = 0 with a nonzero quartic moment
    let mut off = MetricJet::zeros(5);
    for (i, j) in [(0, 1), (1, 0)] {
        for (k, l) in [(0, 1), (1, 0)] {
            off.data[((i * 5 + j) * 5 + k) * 5 + l] = 1.0;
        }
    }
    let rep = contraction_identity(&off, RadialWeight::USq, prof).unwrap();
    assert!(rep.ratio.is_none() && rep.violation);
}

#[test]
fn contraction_ratio_is_three_for_compatible_jets() {
    // I(z_i z_j z_k z_l) = I₁₁ (δ_ij δ_kl + δ_ik δ_jl + δ_il δ_jk) gives
    // lhs = I₁₁ (τ + 2σ), which is 3 τ I₁₁ when τ = σ
    let prof = profile();
    let mut rng = StdRng::seed_from_u64(8);
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let jet = MetricJet::random_compatible(5, 1.0, &mut rng);
        for w in RadialWeight::ALL {
            ratios.push(contraction_identity(&jet, w, prof).unwrap().ratio.unwrap());
        }
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((hi - lo) / lo.abs() < 1e-10);
    assert!((lo - 3.0).abs() < 1e-10);
}

#[test]
fn contraction_matches_delta_formula_for_any_symmetric_jet() {
    let prof = profile();
    let i11 = radial_moment(RadialWeight::DerivSq, prof, 8).unwrap() * angular_moment(5, 1, 1);
    let mut rng = StdRng::seed_from_u64(9);
    for _ in 0..20 {
        let jet = MetricJet::random_symmetric(5, 1.0, &mut rng);
        let rep = contraction_identity(&jet, RadialWeight::DerivSq, prof).unwrap();
        let expect = i11 * (tau(&jet) + 2.0 * jet.sigma());
        assert!((rep.lhs - expect).abs() < 1e-10 * expect.abs().max(i11));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn tau_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let h1 = MetricJet::random_symmetric(5, 1.0, &mut StdRng::seed_from_u64(s1));
        let h2 = MetricJet::random_symmetric(5, 1.0, &mut StdRng::seed_from_u64(s2));
        let lhs = tau(&h1.combine(a, &h2, b));
        let rhs = a * tau(&h1) + b * tau(&h2);
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn projection_keeps_jets_compatible(seed in 0u64..10_000, scale in 1e-4f64..10.0) {
        let jet = MetricJet::random_compatible(5, scale, &mut StdRng::seed_from_u64(seed));
        prop_assert!(jet.ricci_flat_compatible());
        prop_assert!(MetricJet::from_array(5, jet.data.clone()).is_ok());
    }

    #[test]
    fn weyl_jets_are_compatible(seed in 0u64..10_000) {
        let r = CurvatureTensor::random(5, 1.0, &mut StdRng::seed_from_u64(seed));
        prop_assert!(jet_from_curvature(&r.weyl()).unwrap().ricci_flat_compatible());
    }
}
