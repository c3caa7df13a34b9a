mod common;

use common::{oracle_objective, random_grid_params, standard_table};
use induction_cmr::cmr::{analytic_crp, CmrParams};
use induction_cmr::fit::*;
use induction_cmr::LagProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn standard_grid_matches_published_axes() {
    let g = FitGrid::standard();
    assert_eq!(&g.shape()[..3], &[20, 21, 11]);
    assert_eq!(g.beta_enc[0], 0.05);
    assert_eq!(g.beta_rec[0], 0.0);
    assert_eq!(*g.gamma_ft.last().unwrap(), 1.0);
}

#[test]
fn chaining_entry_has_unit_forward_step() {
    let grid = FitGrid::coarse();
    let table = build_crp_table(&grid, 100, 5).unwrap();
    let e = grid.beta_enc.iter().position(|&b| b == 1.0).unwrap();
    let r = grid.beta_rec.iter().position(|&b| b == 1.0).unwrap();
    let t = grid.inv_temp.len() - 1;
    let q = table.q(table.index(e, r, 0, t));
    assert!((q[6] - 1.0).abs() < 1e-9);
    assert!(q.iter().all(|&v| v >= 0.0));
}

#[test]
fn grid_minimum_matches_brute_force_on_random_profiles() {
    let table = standard_table();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let mean: Vec<f64> = (0..11).map(|_| rng.gen_range(0.0..0.5)).collect();
        let var: Vec<f64> = (0..11).map(|_| rng.gen_range(0.001..0.1)).collect();
        let count: Vec<u64> = (0..11).map(|k| 100 - 2 * (k as i64 - 5).unsigned_abs()).collect();
        let profile = LagProfile::new(5, mean.clone(), var.clone(), count.clone()).unwrap();
        let fit = fit_cmr(&profile, &table).unwrap();
        // Independent scan in reverse enumeration order.
        let mut best = f64::INFINITY;
        for i in (0..table.len()).rev() {
            let d = oracle_objective(&mean, &var, &count, table.q(i));
            if d < best {
                best = d;
            }
        }
        assert!((fit.distance - best).abs() <= 1e-10 * best.max(1.0), "{} vs {best}", fit.distance);
        let direct = objective(&profile, table.q(fit.table_index)).unwrap();
        assert!((fit.distance - direct).abs() <= 1e-12);
    }
}

#[test]
fn objective_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..20 {
        let l = rng.gen_range(1..6);
        let len = 2 * l + 1;
        let mean: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let var: Vec<f64> = (0..len).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
        let count: Vec<u64> = (0..len).map(|_| rng.gen_range(0..3)).collect();
        if count.iter().all(|&c| c == 0) {
            continue;
        }
        let q: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = LagProfile::new(l, mean.clone(), var.clone(), count.clone()).unwrap();
        let got = objective(&p, &q).unwrap();
        let want = oracle_objective(&mean, &var, &count, &q);
        assert!((got - want).abs() <= 1e-10 * want.max(1.0));
        let g = fit_gaussian(&p).unwrap();
        let gcurve = gaussian_curve(l, g.c1, g.c2, g.c3, g.c4);
        let gw = oracle_objective(&mean, &var, &count, &gcurve);
        assert!((g.distance - gw).abs() <= 1e-10 * gw.max(1.0));
    }
}

#[test]
fn recovers_grid_points_with_zero_distance() {
    let grid = FitGrid::coarse();
    let table = build_crp_table(&grid, 100, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let params = random_grid_params(&mut rng, &grid);
        let p = analytic_crp(&params, 100, 5).unwrap();
        let fit = fit_cmr(&LagProfile::from_means(5, p.means().to_vec()).unwrap(), &table).unwrap();
        assert!(fit.distance < 1e-20, "{params:?}: {}", fit.distance);
        assert!(fit.ties.contains(&params), "{params:?} not among ties {:?}", fit.ties);
    }
}

#[test]
fn noisy_profile_fit_is_below_noise_floor() {
    let grid = FitGrid::coarse();
    let table = build_crp_table(&grid, 100, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noise = Normal::new(0.0, 0.01).unwrap();
    for _ in 0..10 {
        let params = random_grid_params(&mut rng, &grid);
        let clean = analytic_crp(&params, 100, 5).unwrap();
        let noisy: Vec<f64> = clean.means().iter().map(|m| m + noise.sample(&mut rng)).collect();
        let var = vec![1.0; 11];
        let count = vec![1u64; 11];
        let p = LagProfile::new(5, noisy.clone(), var.clone(), count.clone()).unwrap();
        let fit = fit_cmr(&p, &table).unwrap();
        let at_truth = oracle_objective(&noisy, &var, &count, clean.means());
        assert!(fit.distance <= at_truth + 1e-12, "{params:?} {} {at_truth}", fit.distance);
        // Expected sigma^2 per lag; a generous 5x bound on the realised value.
        assert!(fit.distance <= 5.0 * 0.01f64.powi(2));
    }
}

#[test]
fn sharp_forward_profile_fits_high_beta_rec() {
    let table = standard_table();
    let mut mean = vec![0.001; 11];
    mean[6] = 0.99;
    let p = LagProfile::from_means(5, mean).unwrap();
    let fit = fit_cmr(&p, &table).unwrap();
    assert!(fit.best_params.beta_rec() >= 0.9, "{:?}", fit.best_params);
}

#[test]
fn adding_grid_points_never_increases_distance() {
    let full = build_crp_table(&FitGrid::coarse(), 60, 4).unwrap();
    let mut g = FitGrid::coarse();
    g.beta_rec.retain(|&b| b != 0.6 && b != 0.8);
    g.inv_temp.truncate(4);
    let sub = full.subset(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let mean: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..0.6)).collect();
        let p = LagProfile::from_means(4, mean).unwrap();
        assert!(fit_cmr(&p, &full).unwrap().distance <= fit_cmr(&p, &sub).unwrap().distance);
    }
}

#[test]
fn doubling_variances_halves_cmr_distance() {
    let table = build_crp_table(&FitGrid::coarse(), 60, 4).unwrap();
    let p = LagProfile::new(4, vec![0.02, 0.03, 0.05, 0.1, 0.0, 0.4, 0.1, 0.05, 0.03], vec![0.01; 9], vec![10; 9]).unwrap();
    let a = fit_cmr(&p, &table).unwrap();
    let b = fit_cmr(&p.with_variances(vec![0.02; 9]).unwrap(), &table).unwrap();
    assert!((a.distance - 2.0 * b.distance).abs() <= 1e-12 * a.distance);
    assert_eq!(a.best_params, b.best_params);
}

#[test]
fn gaussian_worse_than_cmr_on_asymmetric_profiles() {
    let table = standard_table();
    for (tau_idx, gamma) in [(8usize, 0.0), (12, 0.0), (16, 0.3)] {
        let params = CmrParams::new(0.7, 0.7, gamma, table.grid().inv_temp[tau_idx]).unwrap();
        let p = analytic_crp(&params, 100, 5).unwrap();
        let p = LagProfile::from_means(5, p.means().to_vec()).unwrap();
        let g = fit_gaussian(&p).unwrap();
        let c = fit_cmr(&p, &table).unwrap();
        assert!(g.distance > c.distance, "{params:?}: gaussian {} cmr {}", g.distance, c.distance);
    }
}

#[test]
fn empty_profile_and_mismatched_table_rejected() {
    let table = build_crp_table(&FitGrid::coarse(), 20, 2).unwrap();
    let undefined = LagProfile::new(2, vec![0.0; 5], vec![1.0; 5], vec![0; 5]).unwrap();
    assert!(fit_cmr(&undefined, &table).is_err());
    assert!(fit_gaussian(&undefined).is_err());
    assert!(fit_cmr(&LagProfile::from_means(3, vec![0.0; 7]).unwrap(), &table).is_err());
}
