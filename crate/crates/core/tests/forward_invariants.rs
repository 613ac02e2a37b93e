//! Invariants of the discrete forward and adjoint maps under random data.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stefan_mushy::adjoint::{duality_check, solve_backward};
use stefan_mushy::config::RunConfig;
use stefan_mushy::enthalpy::EnthalpyParams;
use stefan_mushy::forward::{mass_balance_defects, propagate, solve_nonlinear, Numerics, PicardSettings, StepOperators};
use stefan_mushy::grid::{l2_norm_space, BoundaryControl, SpaceTimeField, SpatialGrid, TimeGrid};

fn random_ops(two_d: bool, seed: u64) -> (StepOperators, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = if two_d {
        SpatialGrid::rectangle(1.0, 0.5, 6, 5).unwrap()
    } else {
        SpatialGrid::line(1.0, 20).unwrap()
    };
    let times = TimeGrid::new(0.1, 12).unwrap();
    let params = EnthalpyParams::new(rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), 1.0, 1e-3, 0.25, 0.05).unwrap();
    let values: Vec<f64> = (0..grid.cell_count() * times.levels()).map(|_| rng.gen_range(-2.0..3.0)).collect();
    let z = SpaceTimeField::from_values(&grid, times, values).unwrap();
    let ops = StepOperators::from_field(&z, &params, &Numerics::new(grid.dimension()).unwrap()).unwrap();
    (ops, rng)
}

fn random_control(ops: &StepOperators, rng: &mut ChaCha8Rng, scale: f64) -> BoundaryControl {
    let zero = BoundaryControl::zeros(ops.grid(), ops.times());
    let values = (0..zero.values().len()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
    BoundaryControl::from_values(ops.grid(), ops.times(), values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn heat_changes_only_through_the_boundary(seed in any::<u64>(), two_d in any::<bool>()) {
        let (ops, mut rng) = random_ops(two_d, seed);
        let y0: Vec<f64> = (0..ops.grid().cell_count()).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let u = random_control(&ops, &mut rng, 5.0);
        let y = propagate(&ops, &y0, &u).unwrap();
        for d in mass_balance_defects(&y, &u) {
            prop_assert!(d.abs() < 1e-11, "defect {d:e}");
        }
    }

    #[test]
    fn insulated_states_dissipate_and_stay_bounded(seed in any::<u64>(), two_d in any::<bool>()) {
        let (ops, mut rng) = random_ops(two_d, seed);
        let grid = ops.grid().clone();
        let y0: Vec<f64> = (0..grid.cell_count()).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let (lo, hi) = y0.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let y = propagate(&ops, &y0, &BoundaryControl::zeros(&grid, ops.times())).unwrap();
        let mut previous = l2_norm_space(&grid, &y0);
        for n in 1..ops.times().levels() {
            let norm = l2_norm_space(&grid, y.level(n));
            prop_assert!(norm <= previous * (1.0 + 1e-12));
            previous = norm;
            for &v in y.level(n) {
                prop_assert!(v >= lo - 1e-10 && v <= hi + 1e-10);
            }
        }
    }

    #[test]
    fn forward_and_backward_maps_are_dual(seed in any::<u64>(), two_d in any::<bool>()) {
        let (ops, mut rng) = random_ops(two_d, seed);
        let cells = ops.grid().cell_count();
        let y0: Vec<f64> = (0..cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p_t: Vec<f64> = (0..cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = random_control(&ops, &mut rng, 2.0);
        let y = propagate(&ops, &y0, &u).unwrap();
        let p = solve_backward(&ops, &p_t).unwrap();
        let residual = duality_check(&ops, &y, &u, &p);
        prop_assert!(residual <= 1e-9, "residual {residual:e}");
    }

    #[test]
    fn forward_map_is_affine_in_the_control(seed in any::<u64>(), a in -3.0f64..3.0) {
        let (ops, mut rng) = random_ops(false, seed);
        let cells = ops.grid().cell_count();
        let y0: Vec<f64> = (0..cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = random_control(&ops, &mut rng, 1.0);
        let v = random_control(&ops, &mut rng, 1.0);
        let mut w = u.clone();
        w.axpy(a, &v);
        let yu = propagate(&ops, &y0, &u).unwrap();
        let yw = propagate(&ops, &y0, &w).unwrap();
        let yv = propagate(&ops, &vec![0.0; cells], &v).unwrap();
        for ((x, y), d) in yw.values().iter().zip(yu.values()).zip(yv.values()) {
            prop_assert!((x - y - a * d).abs() < 1e-10);
        }
    }
}

#[test]
fn nonlinear_solve_is_independent_of_the_thread_count() {
    let exp = RunConfig::desk().build().unwrap();
    let u = BoundaryControl::from_fn(&exp.grid, exp.times, |t, f| if f.center[0] == 0.0 { 2.0 + t } else { 0.0 });
    let solve = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| solve_nonlinear(&u, &exp.y0, &exp.params, &PicardSettings::default(), &exp.numerics, &exp.grid).unwrap())
    };
    let (a, ra) = solve(1);
    let (b, rb) = solve(4);
    assert_eq!(ra.iterations, rb.iterations);
    assert_eq!(a.values(), b.values());
}
