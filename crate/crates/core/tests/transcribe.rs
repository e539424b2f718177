mod common;

use std::time::Instant;

use ocpkit::nlp::{InteriorPoint, SolveOptions, Status};
use ocpkit::problems;
use ocpkit::transcribe::{Scheme, Transcription};

fn solve(ocp: &ocpkit::ocp::Ocp, scheme: Scheme) -> (ocpkit::transcribe::Solved, f64) {
    let tr = Transcription::assemble(ocp, &scheme).unwrap();
    let t = Instant::now();
    let s = tr.solve(&InteriorPoint, None, None, &SolveOptions::default());
    (s, t.elapsed().as_secs_f64())
}

#[test]
fn bryson_trapezoid_and_lgr() {
    let ocp = problems::bryson();
    let exact = problems::bryson_optimum(1.0 / 12.0);
    for (scheme, rel) in [(Scheme::Trapezoid { n: 100 }, 5e-3), (Scheme::lgr(1, 30).unwrap(), 1e-3)] {
        let (s, secs) = solve(&ocp, scheme.clone());
        eprintln!("{scheme}: J={} iters={} {secs:.3}s", s.solution.objective, s.solution.iterations);
        assert_eq!(s.solution.status, Status::Optimal);
        assert!((s.solution.objective - exact).abs() / exact < rel);
        let xmax = s.trajectory.x.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
        assert!(xmax <= 1.0 / 12.0 + 1e-4);
    }
}

#[test]
fn moon_lander_lgr() {
    let (_, tf, j) = problems::moon_lander_optimum();
    let (s, secs) = solve(&problems::moon_lander(), Scheme::lgr(4, 10).unwrap());
    eprintln!("tf={} J={} iters={} {secs:.3}s", s.trajectory.tf, s.solution.objective, s.solution.iterations);
    assert_eq!(s.solution.status, Status::Optimal);
    assert!((s.trajectory.tf - tf).abs() / tf < 0.01);
    assert!((s.solution.objective - j).abs() / j < 0.01);
}

#[test]
fn single_interval_lgr_variable_count() {
    use ocpkit::nlp::Nlp;
    // Four state points of two states, three controls, and the final time.
    let tr = Transcription::assemble(&problems::moon_lander(), &Scheme::lgr(1, 3).unwrap()).unwrap();
    assert_eq!(tr.nlp.num_vars(), 12);
}

#[test]
fn moon_lander_trapezoid_and_euler() {
    let (_, tf, _) = problems::moon_lander_optimum();
    for scheme in [Scheme::Trapezoid { n: 50 }, Scheme::Euler { n: 50 }] {
        let (s, _) = solve(&problems::moon_lander(), scheme.clone());
        eprintln!("{scheme}: tf={} J={}", s.trajectory.tf, s.solution.objective);
        assert_eq!(s.solution.status, Status::Optimal);
        assert!((s.trajectory.tf - tf).abs() / tf < 0.05);
    }
}

#[test]
fn bicycle_trapezoid_and_lgr() {
    for scheme in [Scheme::Trapezoid { n: 50 }, Scheme::lgr(4, 10).unwrap()] {
        let (s, secs) = solve(&problems::bicycle(), scheme.clone());
        let x = s.trajectory.x.last().unwrap();
        eprintln!(
            "{scheme}: {} tf={} end=({:.3},{:.3}) iters={} {secs:.3}s",
            s.solution.status, s.trajectory.tf, x[0], x[1], s.solution.iterations
        );
        assert_eq!(s.solution.status, Status::Optimal);
    }
}

mod structure {
    use std::collections::HashSet;

    use ocpkit::nlp::Nlp;
    use ocpkit::ocp::{Bound, FinalTime, OcpModel, TimeConfig};
    use ocpkit::transcribe::{Interpolation, Scheme, Trajectory, Transcription};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng) -> ocpkit::ocp::Ocp {
        let n_st = rng.gen_range(1..=4);
        let n_ctr = rng.gen_range(0..=2);
        let mut vars: Vec<String> = (1..=n_st).map(|i| format!("x{i}")).collect();
        vars.extend((1..=n_ctr).map(|i| format!("u{i}")));
        vars.push("t".into());
        let pick = |rng: &mut ChaCha8Rng| vars[rng.gen_range(0..vars.len())].clone();
        let x0 = (0..n_st).map(|_| if rng.gen_bool(0.7) { Bound::Value(rng.gen_range(-1.0..1.0)) } else { Bound::Free }).collect();
        let xf = (0..n_st).map(|_| if rng.gen_bool(0.5) { Bound::Value(rng.gen_range(-1.0..1.0)) } else { Bound::Free }).collect();
        let mut m = OcpModel::define(
            n_st,
            n_ctr,
            x0,
            xf,
            vec![Bound::Value(-5.0); n_st],
            vec![Bound::Value(5.0); n_st],
            vec![Bound::Free; n_ctr],
            vec![Bound::Free; n_ctr],
        )
        .unwrap();
        let dynamics = (0..n_st)
            .map(|_| {
                let (a, b, c) = (pick(rng), pick(rng), pick(rng));
                m.expr(&format!("{a}*sin({b}) + 0.5*{c}")).unwrap()
            })
            .collect();
        m.set_dynamics(dynamics).unwrap();
        let (a, b) = (pick(rng), pick(rng));
        m.add_lagrange(m.expr(&format!("{a}^2 + {a}*{b}")).unwrap()).unwrap();
        if rng.gen_bool(0.5) {
            let a = pick(rng);
            m.add_path_constraint(m.expr(&format!("{a}^2")).unwrap(), -1.0, 4.0).unwrap();
        }
        if rng.gen_bool(0.4) {
            m.set_tolerances(vec![0.01; n_st], vec![0.0; n_st]).unwrap();
        }
        if rng.gen_bool(0.3) {
            m.enable_slack(true, rng.gen_bool(0.5), vec![10.0; n_st], vec![10.0; n_st]).unwrap();
        }
        let final_time =
            if rng.gen_bool(0.5) { FinalTime::Free { min: 0.5, max: 3.0 } } else { FinalTime::Fixed(2.0) };
        m.configure(TimeConfig { final_time, t0: 0.0, t_ex: rng.gen_range(0.0..0.3) }).unwrap();
        m.freeze().unwrap()
    }

    fn random_scheme(rng: &mut ChaCha8Rng) -> Scheme {
        match rng.gen_range(0..3) {
            0 => Scheme::Euler { n: rng.gen_range(2..8) },
            1 => Scheme::Trapezoid { n: rng.gen_range(2..8) },
            _ => Scheme::lgr(rng.gen_range(1..4), rng.gen_range(2..6)).unwrap(),
        }
    }

    #[test]
    fn declared_sizes_match_evaluators() {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::common::seed(11));
        for _ in 0..20 {
            let ocp = random_model(&mut rng);
            let scheme = random_scheme(&mut rng);
            let tr = Transcription::assemble(&ocp, &scheme).unwrap();
            let l = &tr.layout;
            let controls = l.control_points() * l.n_ctr;
            let slacks = (l.slack_x0.is_some() as usize + l.slack_xf.is_some() as usize) * l.n_st;
            assert_eq!(l.n, l.n_st * l.state_points() + controls + slacks + l.tf.is_some() as usize);
            assert_eq!(tr.nlp.num_vars(), l.n);
            assert_eq!((tr.nlp.num_ineq(), tr.nlp.num_eq()), (l.e, l.q));
            let z = tr.default_guess();
            let mut c = vec![f64::NAN; l.e + l.q];
            tr.nlp.constraints(&z, &mut c).unwrap();
            assert!(c.iter().all(|v| v.is_finite()));
            let mut g = vec![f64::NAN; l.n];
            tr.nlp.gradient(&z, &mut g).unwrap();
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn jacobian_pattern_covers_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::common::seed(5));
        for _ in 0..10 {
            let ocp = random_model(&mut rng);
            let scheme = random_scheme(&mut rng);
            let tr = Transcription::assemble(&ocp, &scheme).unwrap();
            let (n, m) = (tr.layout.n, tr.nlp.num_constraints());
            let pattern: HashSet<(usize, usize)> = tr.nlp.jacobian_structure().into_iter().collect();
            let (lo, hi) = tr.nlp.var_bounds();
            let z: Vec<f64> = (0..n)
                .map(|i| {
                    let (a, b) = (lo[i].max(-2.0), hi[i].min(2.0));
                    if a < b { rng.gen_range(a..b) } else { a }
                })
                .collect();
            let mut c0 = vec![0.0; m];
            tr.nlp.constraints(&z, &mut c0).unwrap();
            for j in 0..n {
                let mut zp = z.clone();
                zp[j] += 1e-6;
                let mut c1 = vec![0.0; m];
                tr.nlp.constraints(&zp, &mut c1).unwrap();
                for r in 0..m {
                    if (c1[r] - c0[r]).abs() > 1e-12 {
                        assert!(pattern.contains(&(r, j)), "row {r} depends on {j} outside the pattern");
                    }
                }
            }
        }
    }

    #[test]
    fn lgr_interpolation_reproduces_polynomials() {
        let mut m = OcpModel::define(
            1,
            1,
            vec![Bound::Free],
            vec![Bound::Free],
            vec![Bound::Free],
            vec![Bound::Free],
            vec![Bound::Free],
            vec![Bound::Free],
        )
        .unwrap();
        m.set_dynamics(vec![m.expr("u1").unwrap()]).unwrap();
        m.configure(TimeConfig { final_time: FinalTime::Fixed(3.0), t0: 1.0, t_ex: 0.0 }).unwrap();
        let tr = Transcription::assemble(&m.freeze().unwrap(), &Scheme::lgr(1, 5).unwrap()).unwrap();
        let p = |t: f64| 0.3 - t + 0.5 * t * t - 0.2 * t.powi(3) + 0.05 * t.powi(4);
        let mut traj = tr.extract(&tr.default_guess());
        for (x, &t) in traj.x.iter_mut().zip(&traj.t) {
            x[0] = p(t);
        }
        assert!(matches!(traj.interpolation, Interpolation::Lagrange { .. }));
        for k in 0..=200 {
            let t = 1.0 + 2.0 * k as f64 / 200.0;
            let (x, _) = traj.interpolate(t).unwrap();
            assert!((x[0] - p(t)).abs() < 1e-10, "t={t}");
        }
        let grid: &Trajectory = &traj;
        assert_eq!(grid.state_at(grid.t[2]), grid.x[2]);
    }
}

#[test]
fn trapezoid_solution_matches_forward_integration() {
    let (s, _) = solve(&problems::moon_lander(), Scheme::Trapezoid { n: 50 });
    let traj = &s.trajectory;
    let mut x = traj.x[0].clone();
    let steps = 4000;
    let h = (traj.tf - traj.t[0]) / steps as f64;
    let f = |t: f64, x: &[f64]| {
        let u = traj.control_at(t)[0];
        [x[1], u - 1.5]
    };
    for k in 0..steps {
        let t = traj.t[0] + k as f64 * h;
        let k1 = f(t, &x);
        let x2: Vec<f64> = (0..2).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = f(t + 0.5 * h, &x2);
        let x3: Vec<f64> = (0..2).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = f(t + 0.5 * h, &x3);
        let x4: Vec<f64> = (0..2).map(|i| x[i] + h * k3[i]).collect();
        let k4 = f(t + h, &x4);
        for i in 0..2 {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let last = traj.x.last().unwrap();
    for i in 0..2 {
        assert!((x[i] - last[i]).abs() < 0.1, "state {i}: {} vs {}", x[i], last[i]);
    }
}
