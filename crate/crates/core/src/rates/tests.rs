use super::bounds::walk_gap_for_tests as walk_gap;
use crate::error::Error;
use crate::stats::Estimate;
use super::*;
use crate::bsde_solver::{BsdeProblem, GeneratorSpec, Terminal};
use crate::path_sim::Simulator;
use crate::rng::{par_map_paths, tag};

fn cgmy() -> LevyModel {
    LevyModel::cgmy(1.0, 5.0, 5.0, 0.5)
}

const LEVELS: [u64; 6] = [2, 4, 8, 16, 32, 64];

#[test]
fn merton_rate_is_three_halves() {
    let r = run_process_rate(&LevyModel::merton(1.0, 0.0, 1.0), &LEVELS, 1e-4, 10_000, 1.0, 0.5, 3).unwrap();
    let s = r.report.fit.slope;
    assert!((-1.65..=-1.35).contains(&s), "{s}");
    assert!(r.report.passed());
    assert!(r.report.errors.iter().all(|e| e.mean > 0.0));
}

#[test]
fn harmonic_terminal_errors_match_atom_sums() {
    let eps_ref = 5e-5;
    let r = run_process_rate(&LevyModel::harmonic(), &[2, 4, 8], eps_ref, 5_000, 1.0, 1.5, 4).unwrap();
    let big_n = 20_000u64;
    for (i, &n) in [2u64, 4, 8].iter().enumerate() {
        // E|X^ref_T − X^n_T|² = T Σ_{n < i <= N} i^{-2}
        let exact: f64 = (n + 1..=big_n).map(|i| 1.0 / (i * i) as f64).sum();
        let t = r.terminal_errors[i];
        let sq = t.mean * t.mean;
        assert!((sq - exact).abs() <= 4.0 * 2.0 * t.mean * t.se, "n={n}: {sq} vs {exact}");
        assert!(1.0 / (n + 1) as f64 - 1.0 / (big_n + 1) as f64 <= exact && exact <= 1.0 / n as f64);
        // sup dominates terminal, Doob bounds it by 4x
        let e = r.report.errors[i];
        assert!(e.mean >= t.mean && e.mean * e.mean <= 4.0 * exact * 1.05);
    }
}

#[test]
fn bias_precondition_refuses_and_suggests() {
    let err = run_process_rate(&LevyModel::harmonic(), &LEVELS, 1e-4, 100, 1.0, 1.5, 0).unwrap_err();
    match err {
        Error::ReferenceBias { required, bias, allowed, .. } => {
            assert!(bias > allowed);
            assert!(required < 1e-4);
            let ok = reference_bias_bound(&LevyModel::harmonic(), required, 1.0).unwrap();
            assert!(ok <= 0.05 * (removed_m2(&LevyModel::harmonic(), 1.0 / 64.0).unwrap() - required).sqrt());
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(run_process_rate(&cgmy(), &LEVELS, 1e-4, 100, 1.0, 0.5, 0), Err(Error::Config(_))));
    assert!(matches!(run_process_rate(&cgmy(), &[2, 4], 1e-4, 100, 1.0, 0.75, 0), Err(Error::Config(_))));
    assert!(matches!(run_process_rate(&cgmy(), &[2, 8, 4], 1e-4, 100, 1.0, 0.75, 0), Err(Error::Config(_))));
    assert!(matches!(run_process_rate(&cgmy(), &LEVELS, 0.1, 100, 1.0, 0.75, 0), Err(Error::Config(_))));
}

#[test]
fn process_report_is_reproducible_and_bounded() {
    let a = run_process_rate(&cgmy(), &LEVELS, 1e-4, 2_000, 1.0, 0.75, 9).unwrap().report;
    let b = run_process_rate(&cgmy(), &LEVELS, 1e-4, 2_000, 1.0, 0.75, 9).unwrap().report;
    let (mut ca, mut cb) = (vec![], vec![]);
    a.write_csv(&mut ca, "abc", 9).unwrap();
    b.write_csv(&mut cb, "abc", 9).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert!(text.starts_with("# config_hash=abc\n# seed=9\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 7);
    assert!(a.passed());
    let cb = cgmy().c_beta(0.75).unwrap();
    for (i, &n) in LEVELS.iter().enumerate() {
        assert!((a.bound_curve[i] - cb * (n as f64).powf(-0.625)).abs() < 1e-15);
    }
    assert_eq!(a.theory_slope, -0.625);
    assert_eq!(a.asymptotic_slope, -0.75);
}

#[test]
fn identity_terminal_reproduces_the_process() {
    let model = cgmy();
    let p = BsdeProblem::new(model, 0.5, GeneratorSpec::Zero, Terminal::Identity, 1.0);
    let cfg = BsdeRateConfig { refine_check: false, ..BsdeRateConfig::default() };
    let levels = [2u64, 4, 8];
    let r = run_bsde_rate(&p, &levels, &cfg, 3_000, 0.75, 5).unwrap();
    // Y^n_t = X^n_t, so the Y error is the grid sup of |X^n − X^ref| on the same paths
    let sim = Simulator::new(&model, 1.0 / 256.0, 1.0).unwrap();
    let times: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
    let drifts: Vec<f64> = levels.iter().map(|&n| -model.compensator_mean(1.0 / n as f64).unwrap()).collect();
    let sq: Vec<Vec<f64>> = par_map_paths(3_000, 5, tag("bsde-rate"), |_, rng| {
        let path = sim.simulate(rng);
        let xr = path.values_on(&times);
        levels
            .iter()
            .zip(&drifts)
            .map(|(&n, &d)| {
                let coarse = crate::path_sim::thin_to_level(&path, 1.0 / n as f64).unwrap();
                assert_eq!(coarse.drift, d);
                let xn = coarse.values_on(&times);
                xr.iter().zip(&xn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max).powi(2)
            })
            .collect()
    });
    for l in 0..levels.len() {
        let col: Vec<f64> = sq.iter().map(|s| s[l]).collect();
        let want = Estimate::from_samples(&col).root().mean;
        assert!((r.y.errors[l].mean - want).abs() < 1e-9 * want, "{} vs {want}", r.y.errors[l].mean);
    }
    // the continuous-time sup on the same paths dominates, and is close
    let cont: Vec<Vec<f64>> = par_map_paths(3_000, 5, tag("bsde-rate"), |_, rng| {
        let path = sim.simulate(rng);
        levels
            .iter()
            .zip(&drifts)
            .map(|(&n, &d)| crate::path_sim::sup_distance_to_level(&path, 1.0 / n as f64, d).powi(2))
            .collect()
    });
    for l in 0..levels.len() {
        let col: Vec<f64> = cont.iter().map(|s| s[l]).collect();
        let x = Estimate::from_samples(&col).root().mean;
        let y = r.y.errors[l].mean;
        assert!(y <= x && y >= 0.9 * x, "{y} vs {x}");
    }
}

#[test]
fn u_error_oracle_for_identity_terminal() {
    // U^n(z) = z on |z| >= 1/n, so E∫∫|Ū^n − U^ref|² ν dt = T (m₂(1/n) − m₂(1/n_ref))
    let model = LevyModel::merton(2.0, 0.1, 0.5);
    let p = BsdeProblem::new(model, 0.5, GeneratorSpec::Zero, Terminal::Identity, 1.0);
    let cfg = BsdeRateConfig { refine_check: false, per_octave: 16, ..BsdeRateConfig::default() };
    let levels = [2u64, 4, 8];
    let r = run_bsde_rate(&p, &levels, &cfg, 200, 0.5, 1).unwrap();
    for (l, &n) in levels.iter().enumerate() {
        let want = (removed_m2(&model, 1.0 / n as f64).unwrap() - removed_m2(&model, 1.0 / 256.0).unwrap()).sqrt();
        let got = r.u.errors[l].mean;
        assert!((got - want).abs() < 1e-3 * want, "n={n}: {got} vs {want}");
    }
}

#[test]
fn nu_quadrature_reproduces_moments() {
    let m = cgmy();
    let q = nu_quadrature(&m, 1e-3, &[0.25, 0.1], 4).unwrap();
    let mass: f64 = q.iter().map(|p| p.1).sum();
    assert!((mass - m.tail_mass(1e-3).unwrap()).abs() < 1e-9 * mass);
    let first: f64 = q.iter().map(|p| p.0 * p.1).sum();
    assert!((first - m.compensator_mean(1e-3).unwrap()).abs() < 1e-9);
    let second: f64 = q.iter().map(|p| p.0 * p.0 * p.1).sum();
    let want = m.second_moment_beyond(1e-3).unwrap();
    assert!((second - want).abs() < 0.01 * want);
    // no cell straddles a break
    let mass_above: f64 = q.iter().filter(|p| p.0.abs() >= 0.1).map(|p| p.1).sum();
    assert!((mass_above - m.tail_mass(0.1).unwrap()).abs() < 1e-9);
    let atoms = nu_quadrature(&LevyModel::harmonic(), 0.01, &[], 4).unwrap();
    assert_eq!(atoms.len(), 100);
    assert_eq!(atoms[99], (0.01, 1.0));
}

#[test]
fn generator_gap_rejects_plain_generators() {
    let p = BsdeProblem::new(cgmy(), 0.5, GeneratorSpec::Zero, Terminal::Identity, 1.0);
    assert!(matches!(
        run_generator_gap_rate(&p, &[2, 4, 8], &BsdeRateConfig::default(), 100, 0.75, 0),
        Err(Error::Config(_))
    ));
    let q = BsdeProblem::new(cgmy(), 0.5, GeneratorSpec::Zero, Terminal::Identity, 1.0);
    let cfg = BsdeRateConfig { n_ref: 8, ..BsdeRateConfig::default() };
    assert!(matches!(run_bsde_rate(&q, &[2, 4, 8], &cfg, 100, 0.75, 0), Err(Error::Config(_))));
}

#[test]
fn lower_bound_examples() {
    let r = wasserstein_bounds(&LevyModel::harmonic(), 8, 5e-5, 4_000, 1.0, 2).unwrap();
    assert_eq!(r.c_t, 1.0);
    assert!(r.lower >= (1.0f64 / 16.0).sqrt() && r.lower <= (1.0f64 / 15.0).sqrt());
    assert!(r.ok);
    let r = wasserstein_bounds(&cgmy(), 8, 1e-4, 4_000, 1.0, 2).unwrap();
    assert_eq!(r.c_t, 1.0);
    assert!(r.ok);
    let r = wasserstein_bounds(&LevyModel::merton(0.5, 0.0, 1.0), 4, 1e-4, 4_000, 2.0, 2).unwrap();
    assert!((r.c_t - (1.0 - (-1.0f64).exp()).sqrt()).abs() < 1e-15);
    assert!(r.ok && r.lower > 0.0);
    let mut out = vec![];
    write_lower_bound_csv(&mut out, &[r], "h", 2).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("n,lower,upper,upper_se,c_T,m2_half\n4,"));
}

#[test]
fn divergence_examples() {
    let levels: Vec<u64> = (2..=100).collect();
    let h = check_optimality_divergence(&LevyModel::harmonic(), 0.5, &levels).unwrap();
    assert!(h.growing);
    assert!(*h.running_max.last().unwrap() >= 5.0);
    for (&n, &v) in h.levels.iter().zip(&h.values) {
        assert!(v >= (n as f64).sqrt() / 2.0 * (1.0 - 1e-12));
    }
    let geo: Vec<u64> = (1..=14).map(|k| 1u64 << k).collect();
    let l = check_optimality_divergence(&LevyModel::log_harmonic(), 0.9, &geo).unwrap();
    assert!(l.growing, "{:?}", l.values);
    let c = check_optimality_divergence(&LevyModel::cgmy(1.0, 5.0, 5.0, 1.2), 1.0, &geo).unwrap();
    assert!(c.growing, "{:?}", c.values);
    assert!(check_optimality_divergence(&LevyModel::harmonic(), 1.0, &levels).is_err());
}

#[test]
fn boundary_examples() {
    let r = check_bg_boundary_examples(10_000).unwrap();
    let harmonic = &r.examples[0];
    assert!(harmonic.passed() && harmonic.checked == 9_999);
    let v = LevyModel::harmonic().partial_moment(2.0, 0.5).unwrap().value().unwrap();
    assert!((v - (std::f64::consts::PI.powi(2) / 6.0 - 1.0)).abs() < 1e-14);
    // the measure's partial moments leave the log bracket on both ends
    let log = &r.examples[1];
    assert!(!log.passed());
    assert_eq!(log.failures[0].0, 2);
    assert!(log.failures.iter().any(|f| f.0 == 100 && f.1 < f.2));
    assert!(!r.passed());
    assert!(check_bg_boundary_examples(1).is_err());
}

#[test]
fn walk_gap_cases() {
    assert_eq!(walk_gap(&[], 10, 1.0), 0.0);
    assert_eq!(walk_gap(&[0.55], 10, 1.0), 1.0);
    // two jumps in one cell, then one later
    assert_eq!(walk_gap(&[0.51, 0.52, 0.95], 10, 1.0), 2.0);
    // jumps in distinct cells: each is matched at the end of its cell
    assert_eq!(walk_gap(&[0.15, 0.25, 0.35], 10, 1.0), 1.0);
    // a jump in the last partial cell is never matched
    assert_eq!(walk_gap(&[0.05, 0.97], 10, 0.99), 1.0);
    // brute force on a fine grid
    let taus = [0.101, 0.1011, 0.13, 0.2, 0.2001, 0.2002, 0.69];
    let mut best = 0.0f64;
    for k in 0..=100_000 {
        let t = k as f64 / 100_000.0;
        let n = taus.iter().filter(|&&s| s <= t).count() as f64;
        let s = (1..=(10.0 * t).floor() as u64)
            .filter(|&i| taus.iter().any(|&s| s > (i - 1) as f64 / 10.0 && s <= i as f64 / 10.0))
            .count() as f64;
        best = best.max(n - s);
    }
    assert_eq!(walk_gap(&taus, 10, 1.0), best);
}

#[test]
fn appendix_gap_stays_above_bound() {
    for k in [1_000u64, 1_000_000] {
        let r = appendix_random_walk_gap(1.0, k, 20_000, 8).unwrap();
        assert!((r.bound - 0.316_060_279_414_278_6).abs() < 1e-15);
        assert!(r.passed);
        if k == 1_000_000 {
            // fine grids almost never put two jumps in one cell: sup = 1{N_T >= 1}
            let want = 1.0 - (-1.0f64).exp();
            assert!((r.estimate.mean - want).abs() <= 4.0 * r.estimate.se + 1e-3, "{:?}", r.estimate);
        }
    }
    let small = appendix_random_walk_gap(0.01, 1_000, 10_000, 8).unwrap();
    assert!(small.bound < 0.005 && small.passed);
    assert!(appendix_random_walk_gap(1e-6, 1_000, 10_000, 8).unwrap().bound < 1e-6);
    assert!(appendix_random_walk_gap(1.0, 1_000, 9_999, 8).is_err());
}
