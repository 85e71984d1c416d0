//! Estimator values checked against independent textbook computations.

use ate_bounds::estimators::split_halves;
use ate_bounds::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Weighted least squares of `y` on the rows of `phi`.
fn wls(phi: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let p = phi[0].len();
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for ((row, yi), wi) in phi.iter().zip(y).zip(w) {
        for j in 0..p {
            b[j] += wi * row[j] * yi;
            for k in 0..p {
                a[j][k] += wi * row[j] * row[k];
            }
        }
    }
    gauss(a, b)
}

/// Unweighted logistic regression by iteratively reweighted least squares.
fn irls(phi: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let p = phi[0].len();
    let mut beta = vec![0.0; p];
    for _ in 0..50 {
        let mut work = Vec::new();
        let mut w = Vec::new();
        for (row, zi) in phi.iter().zip(z) {
            let s: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let pr = 1.0 / (1.0 + (-s).exp());
            let v = (pr * (1.0 - pr)).max(1e-12);
            work.push(s + (zi - pr) / v);
            w.push(v);
        }
        beta = wls(phi, &work, &w);
    }
    beta
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize, binary_y: bool) -> ObservedDataset {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    for i in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let zi = if i < 2 { i as u8 } else { u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-x[0]).exp())) };
        let mean = 1.0 + 2.0 * zi as f64 + x.iter().sum::<f64>() + 0.3 * x[0] * x[0];
        let yi = if binary_y { f64::from(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-mean / 3.0).exp()))) } else { mean + rng.random_range(-1.0..1.0) };
        rows.push(x);
        y.push(yi);
        z.push(zi);
    }
    ObservedDataset::from_rows(&rows, y, z).unwrap()
}

fn design(data: &ObservedDataset) -> Vec<Vec<f64>> {
    (0..data.len())
        .map(|i| {
            let mut r = vec![1.0, data.treatments()[i] as f64];
            r.extend_from_slice(data.row(i));
            r
        })
        .collect()
}

fn random_weights(rng: &mut ChaCha8Rng, data: &ObservedDataset) -> WeightTable {
    let arm = |rng: &mut ChaCha8Rng, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let s: f64 = raw.iter().sum();
        EmpiricalDistribution::new(raw.iter().map(|v| v / s).collect()).unwrap()
    };
    WeightTable { weights_z0: arm(rng, data.arm_count(0)), weights_z1: arm(rng, data.arm_count(1)) }
}

/// Per-row mass `π_z · w_k`, with `π_z` the arm frequency.
fn row_masses(data: &ObservedDataset, weights: &WeightTable) -> Vec<f64> {
    let n = data.len() as f64;
    let mut pos = [0usize; 2];
    data.treatments()
        .iter()
        .map(|&t| {
            let z = t as usize;
            let w = weights.arm(z).weights()[pos[z]];
            pos[z] += 1;
            data.arm_count(t) as f64 / n * w
        })
        .collect()
}

#[test]
fn pooled_backdoor_is_the_weighted_treatment_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let data = random_data(&mut rng, 60, 3, false);
        let weights = random_weights(&mut rng, &data);
        let spec = EstimatorSpec::backdoor();
        let theta = spec.fit(&weights, &data).unwrap();
        let q = spec.objective(&theta, &weights, &data).unwrap();
        let oracle = wls(&design(&data), data.outcomes(), &row_masses(&data, &weights));
        assert!((q - oracle[1]).abs() < 1e-9, "{} vs {}", q, oracle[1]);
    }
}

#[test]
fn ipw_naive_matches_horvitz_thompson() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let data = random_data(&mut rng, 200, 2, false);
        let phi: Vec<Vec<f64>> = (0..data.len())
            .map(|i| {
                let mut r = vec![1.0];
                r.extend_from_slice(data.row(i));
                r
            })
            .collect();
        let z: Vec<f64> = data.treatments().iter().map(|&t| t as f64).collect();
        let beta = irls(&phi, &z);
        let mut ht = 0.0;
        for i in 0..data.len() {
            let s: f64 = phi[i].iter().zip(&beta).map(|(a, b)| a * b).sum();
            let e = (1.0 / (1.0 + (-s).exp())).clamp(0.01, 0.99);
            let y = data.outcomes()[i];
            ht += if z[i] == 1.0 { y / e } else { -y / (1.0 - e) };
        }
        ht /= data.len() as f64;
        let naive = EstimatorSpec::ipw().naive_estimate(&data).unwrap().value;
        assert!((naive - ht).abs() < 1e-7 * (1.0 + ht.abs()), "{} vs {}", naive, ht);
    }
}

#[test]
fn frontdoor_with_linear_outcome_is_mediator_shift_times_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let data = random_data(&mut rng, 150, 1, true);
        let ols = wls(&design(&data), data.outcomes(), &vec![1.0; data.len()]);
        let mean_x = |t: u8| {
            let rows = data.arm_rows(t);
            rows.iter().map(|&i| data.row(i)[0]).sum::<f64>() / rows.len() as f64
        };
        let oracle = ols[2] * (mean_x(1) - mean_x(0));
        let naive = EstimatorSpec::frontdoor().naive_estimate(&data).unwrap().value;
        assert!((naive - oracle).abs() < 1e-9, "{} vs {}", naive, oracle);
    }
}

#[test]
fn double_ml_uses_the_held_out_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let data = random_data(&mut rng, 300, 3, false);
    for seed in [0, 5] {
        let (fit, eval) = split_halves(data.len(), seed);
        let phi = design(&data);
        let fit_phi: Vec<Vec<f64>> = fit.iter().map(|&i| phi[i].clone()).collect();
        let fit_y: Vec<f64> = fit.iter().map(|&i| data.outcomes()[i]).collect();
        let theta = wls(&fit_phi, &fit_y, &vec![1.0; fit.len()]);
        let treated: Vec<usize> = eval.into_iter().filter(|&i| data.treatments()[i] == 1).collect();
        let oracle = treated
            .iter()
            .map(|&i| data.outcomes()[i] - (theta[0] + data.row(i).iter().zip(&theta[2..]).map(|(a, b)| a * b).sum::<f64>()))
            .sum::<f64>()
            / treated.len() as f64;
        let naive = EstimatorSpec::double_ml().with_split_seed(seed).naive_estimate(&data).unwrap().value;
        assert!((naive - oracle).abs() < 1e-9, "{} vs {}", naive, oracle);
    }
}

#[test]
fn double_ml_recovers_an_exact_partially_linear_effect() {
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
    let z: Vec<u8> = (0..40).map(|i| (i % 3 == 0) as u8).collect();
    let y: Vec<f64> = rows.iter().zip(&z).map(|(r, &t)| 0.5 + r[0] - 2.0 * r[1] + 1.75 * t as f64).collect();
    let data = ObservedDataset::from_rows(&rows, y, z).unwrap();
    let naive = EstimatorSpec::double_ml().naive_estimate(&data).unwrap().value;
    assert!((naive - 1.75).abs() < 1e-9, "{}", naive);
}

#[test]
fn likelihood_constraint_is_mse_gap_to_the_weighted_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let data = random_data(&mut rng, 80, 2, false);
    let weights = random_weights(&mut rng, &data);
    let spec = EstimatorSpec::backdoor().with_slack(estimators::Slack::Absolute(0.0));
    let theta = ModelParams::new(Family::Linear, vec![0.3, 1.0, -0.2, 0.8]).unwrap();
    let mass = row_masses(&data, &weights);
    let phi = design(&data);
    let mse = |t: &[f64]| -> f64 {
        phi.iter().zip(data.outcomes()).zip(&mass).map(|((r, y), m)| m * (y - r.iter().zip(t).map(|(a, b)| a * b).sum::<f64>()).powi(2)).sum()
    };
    let best = wls(&phi, data.outcomes(), &mass);
    let v = spec.likelihood_constraint(&theta, &weights, &data).unwrap();
    let oracle = mse(&theta.theta) - mse(&best);
    assert!((v - oracle).abs() < 1e-10 * (1.0 + oracle), "{} vs {}", v, oracle);
}

#[test]
fn zero_budget_interval_sits_on_the_naive_estimate() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let data = random_data(&mut rng, 120, 2, false);
    for spec in [EstimatorSpec::backdoor(), EstimatorSpec::ipw(), EstimatorSpec::frontdoor(), EstimatorSpec::double_ml()] {
        let r = solve_bounds(&spec, &data, &SolverConfig::default()).unwrap();
        assert!(r.feasible());
        assert!(r.width() <= 1e-3, "{:?}: {:?}", spec.kind, r);
        assert!((r.tau_lower - r.naive).abs() <= 1e-3 && (r.tau_upper - r.naive).abs() <= 1e-3);
    }
}
