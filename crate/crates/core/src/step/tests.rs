use super::*;
use crate::oracles;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_data(grid: &Grid, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w2 = (0..grid.boundary_nodes().len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    (w1, w2)
}

fn catalog(dim: usize) -> Vec<FluxModel> {
    vec![
        FluxModel::quadratic(dim).unwrap(),
        FluxModel::p_laplacian(dim, 4.0, 1.0).unwrap(),
        FluxModel::p_laplacian(dim, 1.5, 1.0).unwrap(),
        FluxModel::fractured(dim, 2.0, 1.0, 0.5).unwrap(),
        FluxModel::log_growth(dim, 1.0).unwrap(),
        FluxModel::total_variation(dim, 1.0).unwrap(),
    ]
}

#[test]
fn objective_examples() {
    let grid = Grid::interval(2, 0.0, 1.0).unwrap();
    let q = FluxModel::quadratic(1).unwrap();
    let zero = vec![0.0; 3];
    assert_eq!(step_objective(&grid, &q, 0.0, 0.1, &zero, &[0.0; 2], &zero).unwrap(), 0.0);
    let c = 1.7;
    let u = vec![c; 3];
    let v = step_objective(&grid, &q, 0.0, 0.1, &u, &[c; 2], &u).unwrap();
    assert!((v + 0.5 * c * c * (1.0 + 2.0)).abs() < 1e-14);
}

#[test]
fn coercivity_floor_holds_on_samples() {
    let grid = Grid::interval(8, 0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = crate::flux::SampleSpec::default();
    for model in catalog(1).into_iter().take(2) {
        let c = match model.coercivity(&spec) {
            crate::flux::Coercivity::Strong(c) => c,
            _ => unreachable!(),
        };
        for _ in 0..50 {
            let h = rng.random_range(0.01..1.0);
            let (w1, w2) = random_data(&grid, rng.random());
            let u: Vec<f64> = (0..9).map(|_| rng.random_range(-3.0..3.0)).collect();
            let phi = step_objective(&grid, &model, 0.0, h, &w1, &w2, &u).unwrap();
            let grad = grid.gradient(&u);
            let lp: f64 = grad
                .iter()
                .zip(grid.cells())
                .map(|(g, cell)| cell.volume * g[0].abs().powf(c.p))
                .sum();
            let floor = 0.25 * grid.norm_sq_domain(&u) + h * c.c1 * lp + 0.25 * grid.norm_sq_trace(&u)
                + h * c.c1_0
                - 4.0 * grid.norm_sq_domain(&w1)
                - 4.0 * grid.norm_sq_boundary(&w2);
            assert!(phi >= floor - 1e-12);
        }
    }
}

#[test]
fn regularized_objective_properties() {
    let grid = Grid::interval(6, 0.0, 1.0).unwrap();
    let (w1, w2) = random_data(&grid, 4);
    let zero = vec![0.0; 7];
    let u: Vec<f64> = (0..7).map(|k| (k as f64).sin()).collect();
    for model in catalog(1) {
        assert_eq!(
            regularized_objective(&grid, &model, 0.0, 0.2, 0.1, &w1, &w2, &zero).unwrap(),
            step_objective(&grid, &model, 0.0, 0.2, &w1, &w2, &zero).unwrap()
        );
        // the j_λ part increases as λ decreases, and stays below j
        let h = 0.2;
        let exact = step_objective(&grid, &model, 0.0, h, &w1, &w2, &u).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for lambda in [1e-1, 1e-2, 1e-3] {
            let visc: f64 = grid
                .gradient(&u)
                .iter()
                .zip(grid.cells())
                .map(|(g, c)| lambda * c.volume * g[0] * g[0])
                .sum();
            let v = regularized_objective(&grid, &model, 0.0, h, lambda, &w1, &w2, &u).unwrap() - visc;
            assert!(v >= prev - 1e-14 && v <= exact + 1e-14);
            prev = v;
        }
    }
    // quadratic: j_λ = |r|²/(2(1+λ))
    let q = FluxModel::quadratic(1).unwrap();
    let lambda = 0.3;
    let h = 0.2;
    let grad = grid.gradient(&u);
    let dir: f64 = grad.iter().zip(grid.cells()).map(|(g, c)| c.volume * g[0] * g[0]).sum();
    let base = step_objective(&grid, &q, 0.0, h, &w1, &w2, &u).unwrap() - h * 0.5 * dir;
    let expect = base + h * dir / (2.0 * (1.0 + lambda)) + lambda * dir;
    let v = regularized_objective(&grid, &q, 0.0, h, lambda, &w1, &w2, &u).unwrap();
    assert!((v - expect).abs() < 1e-12);
}

#[test]
fn regularized_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (grid, dim) in [
        (Grid::interval(7, 0.0, 1.0).unwrap(), 1),
        (Grid::rectangle(3, 3, [0.0, 1.0], [0.0, 1.0]).unwrap(), 2),
    ] {
        let (w1, w2) = random_data(&grid, 9);
        for model in catalog(dim) {
            for _ in 0..10 {
                let u: Vec<f64> = (0..grid.node_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lambda = 0.05;
                let g = regularized_gradient(&grid, &model, 0.0, 0.3, lambda, &w1, &w2, &u).unwrap();
                let fd = oracles::fd_gradient(
                    |v| regularized_objective(&grid, &model, 0.0, 0.3, lambda, &w1, &w2, v).unwrap(),
                    &u,
                    1e-6,
                );
                for k in 0..u.len() {
                    assert!(
                        (g[k] - fd[k]).abs() <= 1e-5 * (1.0 + g[k].abs()),
                        "{model:?}: {} vs {}",
                        g[k],
                        fd[k]
                    );
                }
            }
        }
    }
}

#[test]
fn constants_are_fixed_points() {
    let grid = Grid::interval(8, 0.0, 1.0).unwrap();
    for model in catalog(1) {
        let sol = solve_step(&grid, &model, 0.0, 0.5, &[0.7; 9], &[0.7; 2], &StepConfig::default()).unwrap();
        assert!(sol.u.iter().all(|v| (v - 0.7).abs() < 1e-10), "{model:?}");
        assert!(sol.eta.iter().all(|e| e[0].abs() < 1e-8), "{model:?}");
    }
}

#[test]
fn quadratic_step_matches_dense_solve() {
    for grid in [
        Grid::interval(4, 0.0, 1.0).unwrap(),
        Grid::interval(16, 0.0, 1.0).unwrap(),
        Grid::rectangle(4, 5, [0.0, 1.0], [0.0, 2.0]).unwrap(),
    ] {
        let model = FluxModel::quadratic(grid.dim()).unwrap();
        let (w1, w2) = random_data(&grid, 1);
        let reference = oracles::dense_linear_step(&grid, 0.1, &w1, &w2).unwrap();
        for optimizer in [Optimizer::Auto, Optimizer::QuasiNewton, Optimizer::ProximalGradient] {
            let cfg = StepConfig {
                optimizer,
                ..StepConfig::default()
            };
            let sol = solve_step(&grid, &model, 0.0, 0.1, &w1, &w2, &cfg).unwrap();
            let err = sol
                .u
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-8, "{optimizer:?}: {err}");
        }
    }
}

#[test]
fn steps_satisfy_weak_form_and_certificate() {
    for (grid, dim) in [
        (Grid::interval(16, 0.0, 1.0).unwrap(), 1),
        (Grid::rectangle(5, 4, [0.0, 1.0], [0.0, 1.0]).unwrap(), 2),
    ] {
        let (w1, w2) = random_data(&grid, 2);
        for model in catalog(dim) {
            let cfg = StepConfig::default();
            let sol = solve_step(&grid, &model, 0.0, 0.05, &w1, &w2, &cfg)
                .unwrap_or_else(|e| panic!("{model:?}: {e}"));
            assert!(sol.min_cell_gap >= -1e-10, "{model:?}");
            assert!(sol.certificate <= cfg.certificate_tolerance, "{model:?}");
            let weak = weak_form_residual(&grid, 0.05, &sol.u, &sol.eta, &w1, &w2).unwrap();
            // the viscosity term λ∇u is not part of η
            let bound = if sol.lambda.is_some() { 1e-4 } else { 1e-8 };
            assert!(weak < bound, "{model:?}: weak-form residual {weak}");
            // uniqueness: a different start reaches the same minimizer
            let start: Vec<f64> = (0..grid.node_count()).map(|k| (k as f64).cos()).collect();
            let other = solve_step_from(&grid, &model, 0.0, 0.05, &w1, &w2, &cfg, &start).unwrap();
            let diff = sol.u.iter().zip(&other.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            // TV stops on the duality gap, which controls u only to its square root
            let bound = if model.id() == "tv" { 1e-4 } else { 1e-7 };
            assert!(diff < bound, "{model:?}: {diff}");
        }
    }
}

#[test]
fn continuation_objective_is_monotone() {
    let grid = Grid::interval(16, 0.0, 1.0).unwrap();
    let (w1, w2) = random_data(&grid, 3);
    for model in [
        FluxModel::fractured(1, 2.0, 1.0, 0.5).unwrap(),
        FluxModel::p_laplacian(1, 1.5, 1.0).unwrap(),
    ] {
        let cfg = StepConfig {
            optimizer: Optimizer::Newton,
            ..StepConfig::default()
        };
        let sol = solve_step(&grid, &model, 0.0, 0.1, &w1, &w2, &cfg).unwrap();
        assert_eq!(sol.stages.len(), cfg.schedule().len());
        for pair in sol.stages.windows(2) {
            assert!(pair[1].objective <= pair[0].objective + 1e-9, "{model:?}: {:?}", sol.stages);
        }
    }
}

#[test]
fn tv_step_examples() {
    let grid = Grid::interval(16, 0.0, 1.0).unwrap();
    let cfg = StepConfig::default();
    let sol = tv_step(&grid, 1.0, 0.1, &[0.4; 17], &cfg).unwrap();
    assert!(sol.u.iter().all(|v| (v - 0.4).abs() < 1e-12));

    let prev: Vec<f64> = (0..17).map(|k| if k < 8 { 0.0 } else { 1.0 }).collect();
    for rho_h in [0.01, 0.05, 0.2, 5.0] {
        let sol = tv_step(&grid, 1.0, rho_h, &prev, &cfg).unwrap();
        let trace = grid.trace(&prev);
        let reference = oracles::tv_step_1d(&grid, 1.0, rho_h, &prev, &trace).unwrap();
        let err = sol.u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "rho h = {rho_h}: {err}");
        let tv = |u: &[f64]| (0..16).map(|c| (u[c + 1] - u[c]).abs()).sum::<f64>();
        assert!(tv(&sol.u) <= tv(&prev) + 1e-12);
    }
    // large ρh: the weighted mean of Ω ∪ Γ
    let w = grid.total_weights();
    let mean = prev.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
    let sol = tv_step(&grid, 1.0, 5.0, &prev, &cfg).unwrap();
    assert!(sol.u.iter().all(|v| (v - mean).abs() < 1e-9));
}

#[test]
fn tv_step_in_two_dimensions() {
    let grid = Grid::rectangle(6, 6, [0.0, 1.0], [0.0, 1.0]).unwrap();
    let prev = grid.sample(|x| if x[0] + 0.3 * x[1] < 0.5 { 1.0 } else { -0.5 });
    let sol = tv_step(&grid, 1.0, 0.05, &prev, &StepConfig::default()).unwrap();
    assert!(sol.certificate >= -1e-10 && sol.certificate <= 1e-5);
    let trace = grid.trace(&prev);
    assert!(weak_form_residual(&grid, 0.05, &sol.u, &sol.eta, &prev, &trace).unwrap() < 1e-3);
}

#[test]
fn obstacle_examples() {
    let grid = Grid::interval(8, 0.0, 1.0).unwrap();
    let q = FluxModel::quadratic(1).unwrap();
    let cfg = StepConfig::default();
    let sol = solve_step_obstacle(&grid, &q, 0.0, 0.1, &[-1.0; 9], &[-1.0; 2], &cfg).unwrap();
    assert!(sol.u.iter().all(|&v| v == 0.0));

    let w1: Vec<f64> = (0..9).map(|k| 0.5 + 0.1 * k as f64).collect();
    let free = solve_step(&grid, &q, 0.0, 0.1, &w1, &[0.5, 1.3], &cfg).unwrap();
    let cons = solve_step_obstacle(&grid, &q, 0.0, 0.1, &w1, &[0.5, 1.3], &cfg).unwrap();
    for k in 0..9 {
        assert!((free.u[k] - cons.u[k]).abs() < 1e-10);
    }

    let w1: Vec<f64> = (0..9).map(|k| (3.0 * k as f64).sin()).collect();
    let w2 = vec![-0.4, 0.8];
    for model in [q, FluxModel::p_laplacian(1, 4.0, 1.0).unwrap()] {
        let sol = solve_step_obstacle(&grid, &model, 0.0, 0.1, &w1, &w2, &cfg).unwrap();
        assert!(sol.u.iter().all(|&v| v >= -1e-12));
        let comp = complementarity_residual(&grid, 0.1, &sol.u, &sol.eta, &w1, &w2).unwrap();
        assert!(comp <= 1e-6);
        let lip = if model.id() == "quadratic" { 1.0 } else { 3.0 * 50.0 };
        let m = model.clone();
        let reference = oracles::projected_gradient(
            &grid,
            0.1,
            &w1,
            &w2,
            |r| {
                let s = m.flux_select(0.0, &[0.5], &r[..1]).unwrap();
                [s[0], 0.0]
            },
            lip,
            2_000_000,
        )
        .unwrap();
        let err = sol.u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{model:?}: {err}");
    }
}

#[test]
fn bad_schedules_are_rejected() {
    let grid = Grid::interval(4, 0.0, 1.0).unwrap();
    let model = FluxModel::fractured(1, 2.0, 1.0, 0.5).unwrap();
    for cfg in [
        StepConfig {
            decay: 1.5,
            ..StepConfig::default()
        },
        StepConfig {
            lambda0: 1e-7,
            ..StepConfig::default()
        },
        StepConfig {
            optimizer: Optimizer::PrimalDual,
            ..StepConfig::default()
        },
    ] {
        let err = solve_step(&grid, &model, 0.0, 0.1, &[0.0; 5], &[0.0; 2], &cfg).unwrap_err();
        assert!(matches!(err, Error::BadConfig(_)), "{err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Nonexpansiveness of the step map in the (Ω, Γ) product norm.
    #[test]
    fn step_map_is_a_contraction(which in 0usize..6, seed in any::<u64>(), h in 0.01f64..1.0) {
        let grid = Grid::interval(10, 0.0, 1.0).unwrap();
        let model = &catalog(1)[which];
        let (w1, w2) = random_data(&grid, seed);
        let (v1, v2) = random_data(&grid, seed.wrapping_add(1));
        let cfg = StepConfig::default();
        let a = solve_step(&grid, model, 0.0, h, &w1, &w2, &cfg).unwrap();
        let b = solve_step(&grid, model, 0.0, h, &v1, &v2, &cfg).unwrap();
        let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
        let dw1: Vec<f64> = w1.iter().zip(&v1).map(|(x, y)| x - y).collect();
        let dw2: Vec<f64> = w2.iter().zip(&v2).map(|(x, y)| x - y).collect();
        let lhs = grid.norm_sq_domain(&du) + grid.norm_sq_trace(&du);
        let rhs = grid.norm_sq_domain(&dw1) + grid.norm_sq_boundary(&dw2);
        prop_assert!(lhs <= rhs + 1e-9, "{} > {}", lhs, rhs);
    }
}
