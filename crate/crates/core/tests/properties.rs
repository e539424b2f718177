mod common;

use ocpkit::bench::{perf_profile, perf_ratios, BenchmarkResult, Run, R_M};
use ocpkit::colloc::lgr_nodes;
use ocpkit::expr::{eval, parse, EvalEnv};
use ocpkit::mpc::{predict_x0, ModelPlant};
use ocpkit::nlp::Status;
use ocpkit::problems;
use ocpkit::transcribe::{Interpolation, Trajectory};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn table(times: &[Vec<Option<f64>>]) -> BenchmarkResult {
    let mut runs = Vec::new();
    for (s, row) in times.iter().enumerate() {
        for (p, t) in row.iter().enumerate() {
            runs.push(Run {
                solver: format!("s{s}"),
                p,
                rep: 0,
                solve_time: t.unwrap_or(1.0),
                status: if t.is_some() { Status::Optimal } else { Status::IterLimit },
                collision: false,
            });
        }
    }
    BenchmarkResult::from_runs(runs)
}

fn time_table() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (1usize..5, 1usize..8).prop_flat_map(|(s, p)| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 1e-4..10.0f64), p), s)
    })
}

proptest! {
    #[test]
    fn printed_expressions_parse_back(seed in any::<u64>(), x in prop::array::uniform4(-1.0..1.0f64)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = parse(&common::random_expr(&mut rng, 4), 2, 1).unwrap();
        let back = parse(&e.to_string(), 2, 1).unwrap();
        let env = EvalEnv::new(vec![x[0], x[1]], vec![x[2]], x[3], 1.0);
        let (a, b) = (eval(&e, &env).unwrap(), eval(&back, &env).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{e} -> {back}: {a} vs {b}");
    }

    #[test]
    fn lgr_weights_sum_to_two(n in 1usize..=100) {
        let (_, w) = lgr_nodes(n).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 2.0).abs() <= 1e-13);
        prop_assert!(w.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn lgr_integrates_random_polynomials(
        n in 1usize..=30,
        coeffs in prop::collection::vec(-1.0..1.0f64, 59),
    ) {
        let (tau, w) = lgr_nodes(n).unwrap();
        let c = &coeffs[..2 * n - 1];
        let exact: f64 = c.iter().enumerate().map(|(k, c)| if k % 2 == 0 { 2.0 * c / (k + 1) as f64 } else { 0.0 }).sum();
        let q: f64 = tau
            .iter()
            .zip(&w)
            .map(|(t, w)| w * c.iter().rev().fold(0.0, |acc, c| acc * t + c))
            .sum();
        prop_assert!((q - exact).abs() <= 1e-11, "{q} vs {exact}");
    }

    #[test]
    fn profiles_are_bounded_and_nondecreasing(times in time_table(), mut gammas in prop::collection::vec(1.0..1e3f64, 1..20)) {
        let r = table(&times);
        gammas.sort_by(f64::total_cmp);
        for row in perf_profile(&perf_ratios(&r), &gammas) {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn ratios_ignore_the_time_unit(times in time_table(), c in 1e-3..1e3f64) {
        let scaled: Vec<Vec<Option<f64>>> = times.iter().map(|row| row.iter().map(|t| t.map(|t| t * c)).collect()).collect();
        let (a, b) = (perf_ratios(&table(&times)), perf_ratios(&table(&scaled)));
        for (ra, rb) in a.iter().flatten().zip(b.iter().flatten()) {
            prop_assert!((ra - rb).abs() <= 1e-9 * ra);
        }
    }

    #[test]
    fn failed_cells_and_only_those_get_the_maximum_ratio(times in time_table()) {
        let r = table(&times);
        let ratios = perf_ratios(&r);
        for (s, row) in ratios.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                prop_assert_eq!(v == R_M, r.failed(s, p));
                if !r.failed(s, p) {
                    prop_assert!(v >= 1.0);
                }
            }
        }
    }

    #[test]
    fn zero_execution_horizon_predicts_the_current_state(x in -20.0..20.0f64, v in -5.0..5.0f64, t in 0.0..4.0f64) {
        let plant = ModelPlant::new(&problems::moon_lander()).unwrap();
        let plan = Trajectory {
            t: vec![0.0, 4.0],
            x: vec![vec![10.0, -2.0], vec![0.0, 0.0]],
            u: vec![vec![3.0], vec![3.0]],
            tf: 4.0,
            slack_x0: vec![],
            slack_xf: vec![],
            interpolation: Interpolation::Linear,
        };
        prop_assert_eq!(predict_x0(&plant, &[x, v], &plan, t, 0.0).unwrap(), vec![x, v]);
    }
}
