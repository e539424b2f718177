//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::time::Instant;

use ocpkit::bench::{collision_check, perf_profile, perf_ratios, run_matrix, BenchConfig, Obstacle, R_M};
use ocpkit::colloc::{lgr_diff_matrix, lgr_nodes};
use ocpkit::expr::{grad, hessian, parse, EvalEnv, Var, VarKind};
use ocpkit::mpc::{run_closed_loop, Goal, ModelPlant, MpcConfig};
use ocpkit::nlp::{kkt_residual, solve, InteriorPoint, Multipliers, SolveOptions, Status};
use ocpkit::problems;
use ocpkit::transcribe::{Scheme, Solved, Transcription};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn solve_ocp(ocp: &ocpkit::ocp::Ocp, scheme: Scheme) -> (Solved, f64) {
    let tr = Transcription::assemble(ocp, &scheme).unwrap();
    let t = Instant::now();
    let s = tr.solve(&InteriorPoint, None, None, &SolveOptions::default());
    (s, t.elapsed().as_secs_f64())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn bryson() -> Outcome {
    let ocp = problems::bryson();
    let exact = problems::bryson_optimum(1.0 / 12.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for (scheme, tol) in [(Scheme::Trapezoid { n: 100 }, 5e-3), (Scheme::lgr(1, 30).unwrap(), 1e-3)] {
        let name = scheme.to_string();
        let (s, secs) = solve_ocp(&ocp, scheme);
        let xmax = s.trajectory.x.iter().map(|x| x[0]).fold(f64::MIN, f64::max);
        let e = rel(s.solution.objective, exact);
        pass &= s.solution.status == Status::Optimal && e <= tol && xmax <= 1.0 / 12.0 + 1e-4 && secs < 10.0;
        parts.push(format!("{name}: J={:.5} (rel err {e:.1e}), max x={xmax:.6}, {secs:.2}s", s.solution.objective));
    }
    outcome(pass, parts.join("; "))
}

fn moon_lander() -> Outcome {
    let (t1, tf_exact, j_exact) = problems::moon_lander_optimum();
    let (s, _) = solve_ocp(&problems::moon_lander(), Scheme::lgr(4, 10).unwrap());
    let tr = &s.trajectory;
    let (etf, ej) = (rel(tr.tf, tf_exact), rel(s.solution.objective, j_exact));
    // Away from the switch the thrust sits at 0, then at 3.
    let mut off = 0;
    let mut checked = 0;
    for (t, u) in tr.t.iter().zip(&tr.u) {
        if (t - t1).abs() > 0.25 {
            checked += 1;
            let level = if *t < t1 { 0.0 } else { 3.0 };
            if (u[0] - level).abs() > 0.05 {
                off += 1;
            }
        }
    }
    let pass = s.solution.status == Status::Optimal && etf <= 0.01 && ej <= 0.01 && off == 0;
    outcome(
        pass,
        format!(
            "tf={:.4} (rel err {etf:.1e}), J={:.4} (rel err {ej:.1e}), {off}/{checked} control points off the 0/3 levels",
            tr.tf, s.solution.objective
        ),
    )
}

fn closed_loop() -> Outcome {
    let ocp = problems::moon_lander_mpc();
    let cfg = MpcConfig {
        t_ex: 0.2,
        predict_x0: true,
        goal: Some(Goal::from_final_state(&ocp, 0.1)),
        ..MpcConfig::default()
    };
    let plant = ModelPlant::new(&ocp).unwrap();
    let log = run_closed_loop(&ocp, &cfg, &InteriorPoint, &plant, &[10.0, -2.0]).unwrap();
    let x = log.final_state().unwrap();
    let all_optimal = log.initial_status == Some(Status::Optimal) && log.steps.iter().all(|s| s.status == Status::Optimal);
    let dev = log
        .steps
        .iter()
        .map(|s| {
            let r = problems::moon_lander_state(s.t0);
            (s.x0_actual[0] - r[0]).abs().max((s.x0_actual[1] - r[1]).abs())
        })
        .fold(0.0, f64::max);
    let worst_solve = log.steps.iter().map(|s| s.solve_time).fold(0.0, f64::max);
    let pass = x[0].abs() <= 0.1 && x[1].abs() <= 0.1 && all_optimal && dev <= 0.15;
    outcome(
        pass,
        format!(
            "{} solves, final x={:.4} v={:.4}, all optimal: {all_optimal}, max deviation from analytic {dev:.4}, slowest solve {worst_solve:.3}s vs t_ex 0.2s",
            log.steps.len(),
            x[0],
            x[1]
        ),
    )
}

fn bicycle() -> Outcome {
    let ocp = problems::bicycle();
    let obs = Obstacle::bicycle();
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in [Scheme::Trapezoid { n: 50 }, Scheme::lgr(4, 10).unwrap()] {
        let name = scheme.to_string();
        let (s, _) = solve_ocp(&ocp, scheme);
        let tr = &s.trajectory;
        let collision = collision_check(tr, &obs).unwrap();
        let (t0, t1) = (tr.t[0], tr.tf);
        let min_level = (0..200)
            .map(|k| {
                let p = tr.state_at(t0 + (t1 - t0) * k as f64 / 199.0);
                obs.level(p[0], p[1])
            })
            .fold(f64::INFINITY, f64::min);
        let end = tr.x.last().unwrap();
        let miss = (end[0] - problems::BICYCLE_GOAL[0]).hypot(end[1] - problems::BICYCLE_GOAL[1]);
        let full = tr.u.iter().filter(|u| u[0] >= 2.0 - 1e-3).count() as f64 / tr.u.len() as f64;
        let ok = s.solution.status == Status::Optimal
            && !collision
            && miss <= 2.0
            && (tr.tf - 5.1).abs() <= 0.3
            && full >= 0.9;
        pass &= ok;
        parts.push(format!(
            "{name}: {}, collision={collision} (min sampled level {min_level:.4}), goal miss {miss:.3}m, tf={:.3}, a_x at 2.0 on {:.0}% of points",
            s.solution.status,
            tr.tf,
            100.0 * full
        ));
    }
    outcome(pass, parts.join("; "))
}

fn kernels() -> Outcome {
    let mut worst_q = 0.0f64;
    let mut worst_d = 0.0f64;
    let mut worst_w = 0.0f64;
    for n in 1..=100 {
        let (tau, w) = lgr_nodes(n).unwrap();
        worst_w = worst_w.max((w.iter().sum::<f64>() - 2.0).abs());
        if n <= 40 {
            for k in 0..=(2 * n - 2) {
                let exact = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
                let q: f64 = tau.iter().zip(&w).map(|(t, w)| w * t.powi(k as i32)).sum();
                worst_q = worst_q.max((q - exact).abs());
            }
            let mut aug = tau.clone();
            aug.push(1.0);
            let d = lgr_diff_matrix(&aug).unwrap();
            for k in 0..=n {
                let vals: Vec<f64> = aug.iter().map(|t| t.powi(k as i32)).collect();
                let der = d.apply(&vals);
                for (i, t) in tau.iter().enumerate() {
                    let exact = if k == 0 { 0.0 } else { k as f64 * t.powi(k as i32 - 1) };
                    worst_d = worst_d.max((der[i] - exact).abs());
                }
            }
        }
    }
    let pass = worst_q <= 1e-11 && worst_d <= 1e-9 && worst_w <= 1e-13;
    outcome(pass, format!("quadrature err {worst_q:.1e}, D err {worst_d:.1e}, |Σw-2| {worst_w:.1e}"))
}

fn ad() -> Outcome {
    let seed = common::seed(2024);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = [
        Var { kind: VarKind::State, index: 0 },
        Var { kind: VarKind::State, index: 1 },
        Var { kind: VarKind::Control, index: 0 },
        Var::TIME,
    ];
    let env_at = |p: &[f64; 4]| EvalEnv::new(vec![p[0], p[1]], vec![p[2]], p[3], 1.0);
    let value = |e: &ocpkit::expr::Expr, p: &[f64; 4]| ocpkit::expr::eval(e, &env_at(p)).unwrap();
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut count = 0;
    while count < 100 {
        let text = common::random_expr(&mut rng, 4);
        let e = parse(&text, 2, 1).unwrap();
        let p: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let g = grad(&e, &env_at(&p)).unwrap();
        let h = hessian(&e, &env_at(&p)).unwrap();
        let index = |v: Var| match v.kind {
            VarKind::State => v.index,
            VarKind::Control => 2,
            _ => 3,
        };
        let at = |v: Var| g[index(v)];
        let mut ag = [0.0; 4];
        for v in vars {
            ag[index(v)] = at(v);
        }
        for (j, &vj) in vars.iter().enumerate() {
            let step = 1e-5;
            let (mut hi, mut lo) = (p, p);
            hi[j] += step;
            lo[j] -= step;
            let fd = (value(&e, &hi) - value(&e, &lo)) / (2.0 * step);
            worst_g = worst_g.max((ag[j] - fd).abs() / fd.abs().max(1.0));
            let gh = grad(&e, &env_at(&hi)).unwrap();
            let gl = grad(&e, &env_at(&lo)).unwrap();
            for &vi in &vars {
                let fd = (gh[index(vi)] - gl[index(vi)]) / (2.0 * step);
                worst_h = worst_h.max((h.get(vi, vj) - fd).abs() / fd.abs().max(1.0));
            }
        }
        count += 1;
    }
    let pass = worst_g < 1e-6 && worst_h < 1e-4;
    outcome(pass, format!("{count} expressions (seed {seed}): max gradient rel err {worst_g:.1e}, max Hessian rel err {worst_h:.1e}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn benchmark() -> Outcome {
    let ocp = problems::bicycle();
    let cfg = BenchConfig::default();
    let r = run_matrix(&ocp, Some(&Obstacle::bicycle()), &InteriorPoint, &cfg).unwrap();
    let ratios = perf_ratios(&r);
    let mut gammas: Vec<f64> = ratios.iter().flatten().copied().collect();
    gammas.extend([1.0, R_M]);
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let prof = perf_profile(&ratios, &gammas);
    let valid = prof.iter().all(|p| p.windows(2).all(|w| w[1] >= w[0]) && p.iter().all(|v| (0.0..=1.0).contains(v)));
    let only_failed_get_rm =
        (0..r.solvers.len()).all(|s| (0..r.fidelities.len()).all(|p| (ratios[s][p] == R_M) == r.failed(s, p)));

    // Timing comparison over solves that converged, independent of the collision audit.
    let times = |solver: &str| {
        let per_p: Vec<f64> = (20..=32)
            .filter_map(|p| {
                let cell: Vec<f64> = r
                    .runs
                    .iter()
                    .filter(|x| x.solver == solver && x.p == p && x.status == Status::Optimal)
                    .map(|x| x.solve_time)
                    .collect();
                (cell.len() == cfg.reps).then(|| cell.iter().sum::<f64>() / cell.len() as f64)
            })
            .collect();
        median(per_p)
    };
    let (trap, lgr1) = (times("trapezoid"), times("lgr-1"));
    let solved: Vec<String> = r
        .solvers
        .iter()
        .zip(&r.times)
        .map(|(s, row)| format!("{s} {}/{}", row.iter().filter(|t| !t.is_nan()).count(), row.len()))
        .collect();
    let optimal = r.runs.iter().filter(|x| x.status == Status::Optimal).count();
    let pass = valid && only_failed_get_rm && trap < lgr1;
    outcome(
        pass,
        format!(
            "profiles valid: {valid}, r_M exactly on failed cells: {only_failed_get_rm}, median p>=20 trapezoid {trap:.4}s vs lgr-1 {lgr1:.4}s; {optimal}/{} runs optimal; cells passing the collision audit: {}",
            r.runs.len(),
            solved.join(", ")
        ),
    )
}

fn solver_suite() -> Outcome {
    let opts = SolveOptions::default();
    let quad = solve(&common::scalar_quadratic(), &[0.0], &opts);
    let c1 = quad.status == Status::Optimal && (quad.z[0] - 1.0).abs() < 1e-9 && quad.objective.abs() < 1e-12;
    let sq = solve(&common::bounded_square(), &[5.0], &opts);
    let c2 = sq.status == Status::Optimal && (sq.z[0] - 1.0).abs() < 1e-6 && (sq.multipliers.lower[0] - 2.0).abs() < 1e-5;
    let hand = Multipliers { ineq: vec![], eq: vec![], lower: vec![2.0], upper: vec![0.0] };
    let c2 = c2 && kkt_residual(&common::bounded_square(), &[1.0], &hand) <= 1e-12;
    let rb = solve(&common::rosenbrock(), &[-1.2, 1.0], &opts);
    let c3 = rb.status == Status::Optimal && (rb.z[0] - 1.0).abs() < 1e-6 && (rb.z[1] - 1.0).abs() < 1e-6;

    let logged = SolveOptions { log: true, ..opts };
    let ocp = problems::moon_lander();
    let tr = Transcription::assemble(&ocp, &Scheme::lgr(4, 10).unwrap()).unwrap();
    let a = tr.solve(&InteriorPoint, None, None, &logged).solution;
    let b = tr.solve(&InteriorPoint, None, None, &logged).solution;
    let bits = |s: &ocpkit::nlp::Solution| -> Vec<u64> {
        s.log
            .iter()
            .flat_map(|l| [l.objective, l.kkt, l.mu, l.alpha_primal, l.alpha_dual, l.regularization])
            .chain(s.z.iter().copied())
            .map(f64::to_bits)
            .collect()
    };
    let same = !a.log.is_empty() && bits(&a) == bits(&b);
    outcome(
        c1 && c2 && c3 && same,
        format!("scalar quadratic {c1}, bound multiplier {c2}, rosenbrock {c3}, bit-identical reruns over {} iterations {same}", a.log.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Bryson-Denham", bryson),
        ("moon lander", moon_lander),
        ("closed-loop moon lander", closed_loop),
        ("kinematic bicycle", bicycle),
        ("collocation kernels", kernels),
        ("automatic differentiation", ad),
        ("benchmark methodology", benchmark),
        ("solver unit suite", solver_suite),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {}. {name} ({:.1}s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
