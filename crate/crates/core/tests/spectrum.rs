mod common;

use common::{collocation, dense_mode_spectrum, rel};
use qspike::groundstate::{
    linearized_spectrum, linearized_spectrum_with, solve_ground_state, GroundStateError,
    RadialGrid, RadialProfile, SpectrumOptions,
};
use qspike::params::ProblemParams;
use std::sync::OnceLock;

fn profile() -> &'static RadialProfile {
    static P: OnceLock<RadialProfile> = OnceLock::new();
    P.get_or_init(|| {
        let params = ProblemParams::new(5, 1.5, 1.0, 3.0).unwrap();
        let grid = RadialGrid::for_params(&params, 0.05).unwrap();
        solve_ground_state(params, grid, 1e-9).unwrap()
    })
}

/// Dense second-order spectrum on the collocation profile. Same box as the
/// library: eigenvalues above `a` sit in the continuum and depend on it.
fn oracle(ell: usize, k: usize) -> Vec<f64> {
    static C: OnceLock<common::Colloc> = OnceLock::new();
    let c = C.get_or_init(|| collocation(5, 1.5, 1.0, 3.0, 0.02, 30.0));
    dense_mode_spectrum(&|r| c.u_at(r), 1.5, 1.0, 3.0, ell, 0.05, 30.0, k)
}

#[test]
fn translation_mode_is_a_kernel() {
    let prof = profile();
    let rep = linearized_spectrum(prof, 1, 6).unwrap();
    let z = rep.nearest_zero();
    assert!(rep.eigenvalues[z].abs() < 1e-4 * prof.params.a, "{}", rep.eigenvalues[z]);
    assert!(rep.translation_mismatch(prof, z) < 1e-3);
    // the oracle's lowest ℓ = 1 eigenvalue is also near zero at its resolution
    assert!(oracle(1, 1)[0].abs() < 1e-2);
}

#[test]
fn radial_mode_has_one_negative_direction() {
    let rep = linearized_spectrum(profile(), 0, 6).unwrap();
    assert_eq!(rep.negative_count(), 1);
    let o = oracle(0, 6);
    assert_eq!(o.iter().filter(|l| **l < 0.0).count(), 1);
    assert!(rel(rep.eigenvalues[0], o[0]) < 2e-2, "{} vs {}", rep.eigenvalues[0], o[0]);
}

#[test]
fn higher_modes_are_positive() {
    for ell in 2..=4 {
        let rep = linearized_spectrum(profile(), ell, 6).unwrap();
        assert!(rep.eigenvalues.iter().all(|l| *l > 0.0), "ℓ = {ell}");
        let o = oracle(ell, 6);
        assert!(o.iter().all(|l| *l > 0.0));
        assert!(rel(rep.eigenvalues[0], o[0]) < 2e-2, "ℓ = {ell}: {} vs {}", rep.eigenvalues[0], o[0]);
    }
}

#[test]
fn eigenvalues_sorted_and_monotone_in_ell() {
    let mut last = f64::NEG_INFINITY;
    for ell in 0..=5 {
        let rep = linearized_spectrum(profile(), ell, 4).unwrap();
        assert!(rep.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(rep.eigenvalues.len(), 4);
        assert!(rep.eigenvalues[0] >= last);
        last = rep.eigenvalues[0];
    }
}

#[test]
fn bad_requests_error() {
    assert!(matches!(
        linearized_spectrum(profile(), 0, 0),
        Err(GroundStateError::Spectrum(_))
    ));
    let opts = SpectrumOptions { h: 0.5, r_max: 1.0 };
    assert!(matches!(
        linearized_spectrum_with(profile(), 0, 3, &opts),
        Err(GroundStateError::Spectrum(_))
    ));
}
