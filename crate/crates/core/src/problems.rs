//! Reference problems shipped with the crate, in the problem file format.

use crate::ocp::{parse_problem, Ocp, OcpError};

pub const BRYSON: &str = include_str!("../problems/bryson.ocp");
pub const MOON_LANDER: &str = include_str!("../problems/moonlander.ocp");
pub const MOON_LANDER_MPC: &str = include_str!("../problems/moonlander_mpc.ocp");
pub const BICYCLE: &str = include_str!("../problems/bicycle.ocp");

/// Obstacle of the bicycle problem: centre and radius.
pub const BICYCLE_OBSTACLE: ([f64; 2], f64) = ([0.0, 50.0], 7.5);
/// Goal position of the bicycle problem.
pub const BICYCLE_GOAL: [f64; 2] = [0.0, 100.0];

/// Analytic optimum of the Bryson-Denham problem with `x1 <= l`, `l <= 1/6`.
pub fn bryson_optimum(l: f64) -> f64 {
    4.0 / (9.0 * l)
}

/// Analytic moon lander solution: switch time, final time and thrust cost.
/// Free fall until `t1`, then full thrust (3) until touchdown.
pub fn moon_lander_optimum() -> (f64, f64, f64) {
    let t1 = (-8.0 + 272f64.sqrt()) / 6.0;
    let t2 = (2.0 + 1.5 * t1) / 1.5;
    (t1, t1 + t2, 3.0 * t2)
}

/// Analytic moon lander altitude and speed at time `t`.
pub fn moon_lander_state(t: f64) -> [f64; 2] {
    let (t1, _, _) = moon_lander_optimum();
    let fall = |t: f64| [10.0 - 2.0 * t - 0.75 * t * t, -2.0 - 1.5 * t];
    if t <= t1 {
        fall(t)
    } else {
        let [x1, v1] = fall(t1);
        let s = t - t1;
        [x1 + v1 * s + 0.75 * s * s, v1 + 1.5 * s]
    }
}

fn load(text: &str) -> Result<Ocp, OcpError> {
    parse_problem(text)?.freeze()
}

pub fn bryson() -> Ocp {
    load(BRYSON).expect("bundled problem parses")
}

pub fn moon_lander() -> Ocp {
    load(MOON_LANDER).expect("bundled problem parses")
}

/// Moon lander with endpoint tolerances and slack, for closed-loop runs.
pub fn moon_lander_mpc() -> Ocp {
    load(MOON_LANDER_MPC).expect("bundled problem parses")
}

pub fn bicycle() -> Ocp {
    load(BICYCLE).expect("bundled problem parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_problems_load() {
        assert_eq!(bryson().n_st, 2);
        assert!(moon_lander().final_time_is_dv());
        let b = bicycle();
        assert_eq!((b.n_st, b.n_ctr, b.path.len()), (4, 2, 1));
    }

    #[test]
    fn analytic_lander_touches_down() {
        let (_, tf, j) = moon_lander_optimum();
        let [x, v] = moon_lander_state(tf);
        assert!(x.abs() < 1e-12 && v.abs() < 1e-12);
        assert!((tf - 4.1641).abs() < 1e-4 && (j - 8.2462).abs() < 1e-4);
    }
}
