//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
mod common;

use common::{collocation, rel, richardson};
use qspike::energy::{alpha, expansion_fit, remainder_scaling, CutoffSpec, QuadOptions, RemainderOptions};
use qspike::geometry::{contraction_identity, jet_from_curvature, CurvatureTensor, MetricJet, RadialWeight};
use qspike::groundstate::{decay_rate, linearized_spectrum, solve_ground_state, RadialGrid, RadialProfile};
use qspike::params::{derive_constants, ProblemParams};
use qspike::reduction::{concentration_sweep, ChartField, ExtremumKind, ReductionError};
use rand::rngs::StdRng;
use rand::SeedableRng;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

const EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const CHART: f64 = 10.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn solve(a: f64, b: f64) -> RadialProfile {
    let params = ProblemParams::new(5, 1.5, a, b).unwrap();
    let grid = RadialGrid::for_params(&params, 0.05).unwrap();
    solve_ground_state(params, grid, 1e-9).unwrap()
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo) / lo.abs()
}

fn ground_state() -> (Outcome, RadialProfile) {
    let t = Instant::now();
    let prof = solve(1.0, 3.0);
    let took = t.elapsed();
    let u0 = richardson(
        collocation(5, 1.5, 1.0, 3.0, 0.02, 30.0).u0(),
        collocation(5, 1.5, 1.0, 3.0, 0.01, 30.0).u0(),
    );
    let err = rel(prof.u[0], u0);
    let pass = prof.residual < 1e-8 && err < 1e-5 && took < Duration::from_secs(30);
    let detail = format!("residual {:.2e}, U(0) {:.10} vs oracle {:.10} (rel {err:.1e}), solve {took:.2?}", prof.residual, prof.u[0], u0);
    (outcome(pass, detail), prof)
}

fn decay(prof: &RadialProfile) -> Outcome {
    let t = Instant::now();
    let other = solve(4.0, 5.0);
    let mut errs = Vec::new();
    for (p, a, b) in [(prof, 1.0f64, 3.0f64), (&other, 4.0, 5.0)] {
        let expect = ((b - (b * b - 4.0 * a).sqrt()) / 2.0).sqrt();
        errs.push(rel(decay_rate(p).unwrap(), expect));
    }
    let took = t.elapsed();
    let pass = errs.iter().all(|e| *e < 0.02) && took < Duration::from_secs(5);
    outcome(pass, format!("rel errors (a,b)=(1,3): {:.1e}, (4,5): {:.1e}, {took:.2?}", errs[0], errs[1]))
}

fn nondegeneracy(prof: &RadialProfile) -> Outcome {
    let t = Instant::now();
    let one = linearized_spectrum(prof, 1, 6).unwrap();
    let z = one.nearest_zero();
    let lam = one.eigenvalues[z];
    let mismatch = one.translation_mismatch(prof, z);
    let zero = linearized_spectrum(prof, 0, 6).unwrap();
    let mut lowest = Vec::new();
    let mut positive = true;
    for ell in 2..=4 {
        let r = linearized_spectrum(prof, ell, 6).unwrap();
        positive &= r.eigenvalues.iter().all(|l| *l > 0.0);
        lowest.push(r.eigenvalues[0]);
    }
    let took = t.elapsed();
    let pass = lam.abs() < 1e-4 * prof.params.a
        && mismatch < 1e-3
        && zero.negative_count() == 1
        && positive
        && took < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "ℓ=1 λ {lam:.2e} mismatch {mismatch:.1e}; ℓ=0 negatives {}; ℓ=2..4 lowest {:.4?}; {took:.2?}",
            zero.negative_count(),
            lowest
        ),
    )
}

fn nehari(prof: &RadialProfile) -> Outcome {
    let p = prof.params.p;
    let a = alpha(prof);
    let form = (0.5 - 1.0 / (p + 1.0)) * prof.potential_integral();
    let err = rel(a, form);
    outcome(err < 1e-6, format!("α {a:.10} vs Nehari form {form:.10} (rel {err:.1e})"))
}

fn contraction(prof: &RadialProfile) -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let jet = MetricJet::random_compatible(5, 1.0, &mut rng);
        for w in RadialWeight::ALL {
            match contraction_identity(&jet, w, prof).unwrap().ratio {
                Some(r) => ratios.push(r),
                None => return outcome(false, "zero right-hand side".into()),
            }
        }
    }
    let s = spread(&ratios);
    outcome(
        s < 1e-10,
        format!("{} ratios, spread {s:.1e}, constant {:.12} (expected 1)", ratios.len(), ratios[0]),
    )
}

fn expansion(prof: &RadialProfile) -> Outcome {
    let t = Instant::now();
    let mut ratios = Vec::new();
    let mut converged = true;
    for seed in 100..110 {
        let r = CurvatureTensor::random(5, 2e-4, &mut StdRng::seed_from_u64(seed));
        let jet = jet_from_curvature(&r).unwrap();
        let rep = expansion_fit(prof, &jet, &EPS, CutoffSpec::default(), QuadOptions::default()).unwrap();
        let gaps: Vec<f64> = rep.scaled.iter().map(|v| (v - rep.c2).abs()).collect();
        converged &= gaps.windows(2).all(|g| g[1] < g[0]);
        ratios.push(rep.c2_over_tau.unwrap_or(f64::NAN));
    }
    let flat = expansion_fit(prof, &MetricJet::zeros(5), &EPS, CutoffSpec::default(), QuadOptions::default())
        .unwrap();
    let took = t.elapsed();
    let s = spread(&ratios);
    let pass = converged
        && s < 1e-2
        && flat.c2.abs() <= flat.c2_error
        && took < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "c₂/τ {:.6e} spread {s:.1e} over 10 jets, converging {converged}; flat |c₂| {:.1e} <= {:.1e}; {took:.2?}",
            ratios[0],
            flat.c2.abs(),
            flat.c2_error
        ),
    )
}

fn remainder(prof: &RadialProfile) -> Outcome {
    let t = Instant::now();
    let opts = RemainderOptions::default();
    let r = CurvatureTensor::random(5, 2e-4, &mut StdRng::seed_from_u64(21));
    let jet = jet_from_curvature(&r).unwrap();
    let curved = remainder_scaling(prof, &EPS, &jet, CutoffSpec::default(), &opts).unwrap();
    let flat = remainder_scaling(prof, &EPS, &MetricJet::zeros(5), CutoffSpec::default(), &opts).unwrap();
    let took = t.elapsed();
    let (s, f) = (curved.slope.unwrap_or(f64::NAN), flat.slope.unwrap_or(f64::NAN));
    let pass = s >= 1.9 && f > 4.0 && took < Duration::from_secs(300);
    outcome(pass, format!("slope {s:.4}, flat slope {f:.3}; {took:.2?}"))
}

fn reduced(prof: &RadialProfile) -> Outcome {
    let t = Instant::now();
    let f = ChartField::synthetic_bump(5, 11, 0.1, 1e-3, false, CHART).unwrap();
    let rep = concentration_sweep(&f, prof, &[0.2, 0.1, 0.05], ExtremumKind::Max, CutoffSpec::default(), QuadOptions::default())
        .unwrap();
    let d = *rep.distances.last().unwrap();
    let pts = ChartField::plane_grid(5, 5, 0.1);
    let m = pts.len();
    let flat = ChartField::from_jets(pts, ChartField::scaled_sphere_jets(5, &vec![1e-4; m]), 0.3, CHART).unwrap();
    let rejected = concentration_sweep(&flat, prof, &[0.1], ExtremumKind::Max, CutoffSpec::default(), QuadOptions::default());
    let msg = match &rejected {
        Err(e @ ReductionError::NoExtremum) => e.to_string(),
        _ => String::new(),
    };
    let took = t.elapsed();
    let pass = d <= rep.spacing && msg.contains("no isolated extremum") && took < Duration::from_secs(300);
    outcome(
        pass,
        format!("distance at ε=0.05 {d:.3} (spacing {:.3}), constant field: \"{msg}\"; {took:.2?}", rep.spacing),
    )
}

fn constants() -> Outcome {
    let t = Instant::now();
    let c = derive_constants(5, 10, 1.0).unwrap();
    let took = t.elapsed();
    let (a, b) = (655985.0 / 132496.0, 865.0 / 364.0);
    // b² − 4a in exact integers: 865²·132496 − 4·655985·364²
    let sign = 865i128 * 865 * 132496 - 4 * 655985 * 364 * 364 > 0;
    let (ea, eb) = (rel(c.a, a), rel(c.b, b));
    let pass = ea < 1e-12 && eb < 1e-12 && c.bsq_gt_4a == sign && took < Duration::from_secs(1);
    outcome(pass, format!("a {:.15} (rel {ea:.0e}), b {:.15} (rel {eb:.0e}), b²>4a {}; {took:.2?}", c.a, c.b, c.bsq_gt_4a))
}

fn snapshot(dir: &Path, into: &mut BTreeMap<String, Vec<u8>>) {
    for e in fs::read_dir(dir).unwrap() {
        let e = e.unwrap();
        let name = e.file_name().to_string_lossy().into_owned();
        if e.file_type().unwrap().is_file() {
            into.insert(name, fs::read(e.path()).unwrap());
        }
    }
}

fn reproducibility() -> Outcome {
    let runs: [&[&str]; 7] = [
        &["constants"],
        &["ground"],
        &["spectrum"],
        &["identities"],
        &["expansion", "--jets", "2"],
        &["remainder"],
        &["reduce", "--side", "5", "--eps", "0.1,0.05"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut snaps = [BTreeMap::new(), BTreeMap::new()];
    for (dir, snap) in dirs.iter().zip(&mut snaps) {
        for args in runs {
            let mut argv = vec!["qspike"];
            argv.extend_from_slice(args);
            argv.extend_from_slice(&["--out", dir.path().to_str().unwrap()]);
            let code = qspike::cli::main_with_args(argv);
            if code != 0 {
                return outcome(false, format!("{args:?} exited {code}"));
            }
        }
        snapshot(dir.path(), snap);
    }
    let differing: Vec<&String> = snaps[0].keys().filter(|k| snaps[0].get(*k) != snaps[1].get(*k)).collect();
    let pass = differing.is_empty() && snaps[0].len() == snaps[1].len();
    outcome(pass, format!("{} files compared, differing {differing:?}", snaps[0].len()))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let (first, prof) = ground_state();
    results.push(("ground state", first));
    results.push(("decay law", decay(&prof)));
    results.push(("non-degeneracy", nondegeneracy(&prof)));
    results.push(("Nehari identity", nehari(&prof)));
    results.push(("contraction identity", contraction(&prof)));
    results.push(("energy expansion", expansion(&prof)));
    results.push(("remainder scaling", remainder(&prof)));
    results.push(("reduced problem", reduced(&prof)));
    results.push(("constants table", constants()));
    results.push(("reproducibility", reproducibility()));
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
