use std::sync::{Arc, OnceLock};

use glidepath::adaptive::{calibrate_target, solve_policy, GridConfig, McConfig, PolicyGrid};
use glidepath::error::{SimulationError, SolverError};
use glidepath::glide::{wealth_moments, PeriodMoments};
use glidepath::jump_model::KouParams;
use glidepath::simulation::run_monte_carlo;
use glidepath::strategy::{Scenario, Strategy};
use glidepath::synthetic::SyntheticMarket;

const W_STAR: f64 = 1_100_000.0;

fn params() -> KouParams {
    SyntheticMarket::fixture().equity
}

fn long_term_grid() -> &'static PolicyGrid {
    static GRID: OnceLock<PolicyGrid> = OnceLock::new();
    GRID.get_or_init(|| solve_policy(&params(), &Scenario::long_term(), W_STAR, &GridConfig::default()).unwrap())
}

fn decade() -> Scenario {
    Scenario {
        horizon_years: 10.0,
        ..Scenario::long_term()
    }
}

#[test]
fn grid_is_well_formed() {
    let g = long_term_grid();
    assert_eq!(g.policy.len(), 30);
    assert!(g.w_max() >= 8.0 * W_STAR);
    assert!(g.wealth_nodes.windows(2).all(|w| w[0] < w[1]));
    assert!(g.policy.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
    assert!(g.value.iter().flatten().all(|v| *v >= 0.0));
    assert!(g.lost_mass <= 1e-5);
}

#[test]
fn value_never_exceeds_any_constant_fraction() {
    let g = long_term_grid();
    let params = params();
    let pm = PeriodMoments::from_params(&params, 1.0).unwrap();
    for &w in g.wealth_nodes.iter().step_by(17) {
        let from_w = Scenario {
            initial_wealth: w,
            ..Scenario::long_term()
        };
        let v = g.value_at(w, 0).unwrap();
        for p in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
            let m = wealth_moments(&[p; 30], &from_w, &pm).unwrap();
            let fixed = m.variance() + (m.mean - W_STAR).powi(2);
            assert!(v <= fixed * (1.0 + 1e-9), "w = {w}, p = {p}: {v} > {fixed}");
        }
    }
}

#[test]
fn finer_wealth_and_control_grids_agree() {
    let coarse = long_term_grid().initial_value();
    let config = GridConfig {
        n_nodes: 1024,
        n_controls: 401,
        ..GridConfig::default()
    };
    let fine = solve_policy(&params(), &Scenario::long_term(), W_STAR, &config)
        .unwrap()
        .initial_value();
    let rel = (fine - coarse).abs() / fine;
    assert!(rel < 2e-3, "relative change {rel}");
}

#[test]
fn finer_quadrature_agrees() {
    let base = GridConfig {
        n_nodes: 256,
        ..GridConfig::default()
    };
    let fine = GridConfig {
        quadrature_nodes: 4096,
        ..base.clone()
    };
    let s = Scenario::long_term();
    let a = solve_policy(&params(), &s, W_STAR, &base).unwrap().initial_value();
    let b = solve_policy(&params(), &s, W_STAR, &fine).unwrap().initial_value();
    assert!((a - b).abs() / b < 2e-3, "{a} vs {b}");
}

#[test]
fn target_at_all_bond_wealth_has_zero_value() {
    let s = Scenario::long_term();
    let p = params();
    let floor = s.all_bond_terminal(p.bond_gross(1.0));
    let g = solve_policy(&p, &s, floor, &GridConfig::default()).unwrap();
    assert!(g.initial_value() <= 1e-12 * floor * floor);
    let run = run_monte_carlo(&Strategy::Adaptive(Arc::new(g)), &s, &p, 1000, 1).unwrap();
    assert!(run.terminal_wealth.iter().all(|w| (w / floor - 1.0).abs() < 1e-12));
}

#[test]
fn equity_fraction_falls_towards_the_horizon() {
    let run = run_monte_carlo(
        &Strategy::Adaptive(Arc::new(long_term_grid().clone())),
        &Scenario::long_term(),
        &params(),
        100_000,
        17,
    )
    .unwrap();
    let p = &run.diagnostics.mean_p;
    let early = p[..5].iter().sum::<f64>() / 5.0;
    let late = p[25..].iter().sum::<f64>() / 5.0;
    assert!(late < 0.6 * early, "early {early}, late {late}");
    assert!(p[29] < p[0]);
    assert!(run.diagnostics.std_p.iter().all(|s| *s >= 0.0));
}

#[test]
fn calibrated_target_is_monotone_and_above_goal() {
    let s = decade();
    let p = params();
    let floor = s.all_bond_terminal(p.bond_gross(1.0));
    let config = GridConfig {
        n_nodes: 256,
        ..GridConfig::default()
    };
    let mut last = 0.0;
    for k in 1..=5 {
        let goal = floor * (1.0 + 0.05 * k as f64);
        let cal = calibrate_target(&p, &s, goal, &config, &McConfig::default()).unwrap();
        assert!(cal.w_star > goal, "goal {goal}: W* {}", cal.w_star);
        assert!(cal.w_star >= last);
        let tol = (0.0025 * goal).max(2.0 * cal.standard_error);
        assert!((cal.mean - goal).abs() <= tol);
        last = cal.w_star;
    }
}

#[test]
fn goal_below_bond_floor_is_infeasible() {
    let s = decade();
    let p = params();
    let floor = s.all_bond_terminal(p.bond_gross(1.0));
    let err = calibrate_target(&p, &s, 0.9 * floor, &GridConfig::default(), &McConfig::default()).unwrap_err();
    assert!(matches!(err, SimulationError::Solver(SolverError::InfeasibleGoal { .. })));
}
