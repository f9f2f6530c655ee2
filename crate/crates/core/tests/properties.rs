use levy_bsde::bsde_solver::{solve_markovian_grid, BsdeProblem, GeneratorSpec, GridSpec, Terminal};
use levy_bsde::config::ExperimentConfig;
use levy_bsde::path_sim::{simulate_reference, sup_distance, thin_to_level, CoupledPaths};
use levy_bsde::rates::fit_loglog_slope;
use levy_bsde::rng::{path_stream, tag};
use levy_bsde::LevyModel;
use proptest::prelude::*;

fn arb_model() -> impl Strategy<Value = LevyModel> {
    prop_oneof![
        (0.2..2.0f64, 1.0..8.0f64, 1.0..8.0f64, 0.0..1.5f64).prop_map(|(c, g, m, y)| LevyModel::cgmy(c, g, m, y)),
        (0.5..5.0f64, -1.0..1.0f64, 0.1..1.0f64).prop_map(|(l, mu, s)| LevyModel::merton(l, mu, s)),
        Just(LevyModel::harmonic()),
        Just(LevyModel::log_harmonic()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn thinning_is_consistent_across_levels(m in arb_model(), seed in 0u64..1000, a in 2u64..20, k in 2u64..5) {
        let (na, nb) = (a * k, a);
        let mut rng = path_stream(seed, tag("prop-coupling"), 0);
        let reference = simulate_reference(&m, 1.0 / (4 * na) as f64, 1.0, &mut rng).unwrap();
        let c = CoupledPaths::from_reference(reference, &[1.0 / na as f64, 1.0 / nb as f64]).unwrap();
        let again = thin_to_level(&c.levels[0], 1.0 / nb as f64).unwrap();
        prop_assert_eq!(&again.jumps, &c.levels[1].jumps);
        let d = sup_distance(&c.reference, &c.levels[1]).unwrap();
        prop_assert!(d.is_finite() && d >= 0.0);
    }

    #[test]
    fn slope_fit_is_exact_on_power_laws(slope in -2.0..0.5f64, scale in 0.01..100.0f64, len in 3usize..9, rel in 0.0..0.2f64) {
        let levels: Vec<u64> = (1..=len as u32).map(|i| 1u64 << i).collect();
        let e: Vec<f64> = levels.iter().map(|&n| scale * (n as f64).powf(slope)).collect();
        let se: Vec<f64> = e.iter().map(|v| rel * v).collect();
        let f = fit_loglog_slope(&levels, &e, &se).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-12, "{} vs {}", f.slope, slope);
        prop_assert!((f.intercept - scale.log2()).abs() < 1e-11);
    }

    #[test]
    fn config_round_trips(m in arb_model(), paths in 2u64..1_000_000, t in 0.01..10.0f64, eps in 1e-8..1e-2f64, seed: u64) {
        let mut c = ExperimentConfig::new(m);
        c.paths = paths;
        c.horizon = t;
        c.eps_ref = eps;
        c.seed = seed;
        c.beta = Some(1.0 + t / 20.0);
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), c.to_json().unwrap());
        prop_assert_eq!(back.hash(), c.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn grid_solution_invariants(cap in 0.5..3.0f64, a in 0.0..1.0f64, n in 2u64..16) {
        let p = BsdeProblem::new(
            LevyModel::cgmy(1.0, 5.0, 5.0, 0.5),
            1.0 / n as f64,
            GeneratorSpec::Linear { a, b: 0.0 },
            Terminal::AbsCapped { cap },
            1.0,
        );
        let s = solve_markovian_grid(&p, 16, &GridSpec { nodes: 257, ..GridSpec::default() }).unwrap();
        let last = s.steps();
        for j in 0..s.xi.len() {
            let x = s.node(last, j);
            prop_assert_eq!(s.values[last][j], x.abs().min(cap));
        }
        for i in [0, last / 2] {
            let bound = (a * (1.0 - s.times[i])).exp() * (1.0 + 1e-6);
            for w in s.values[i].windows(2) {
                prop_assert!((w[1] - w[0]).abs() <= bound * s.h);
            }
            for (x, z) in [(0.0, 0.3), (-0.4, -0.2), (0.25, 1.1)] {
                prop_assert!((s.jump_increment(i, x, z) + s.value(i, x) - s.value(i, x + z)).abs() < 1e-14);
            }
        }
    }
}
