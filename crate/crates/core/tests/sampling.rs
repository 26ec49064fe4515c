use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hk_core::matel::polynomial;
use hk_core::sampling::{
    density_eval_unnormalized, direct_sample, effective_sample_size, hmc_potential,
    hmc_potential_gradient, hmc_sample, DensityKind, DensitySpec, DirectSampler, HmcParams,
};
use hk_core::{DoublePhasePoint, GaussianWavepacket, Observable, PhaseSpacePoint, SimConfig, WidthMatrix};

fn psi0(d: usize, eps: f64, width: WidthMatrix) -> GaussianWavepacket {
    let q: Vec<f64> = (0..d).map(|j| 0.5 + 0.25 * j as f64).collect();
    let p: Vec<f64> = (0..d).map(|j| -0.3 * j as f64).collect();
    GaussianWavepacket::new(PhaseSpacePoint::new(q, p).unwrap(), width, SimConfig::new(d, eps).unwrap()).unwrap()
}

fn spec(kind: DensityKind, psi: &GaussianWavepacket) -> DensitySpec {
    DensitySpec::new(kind, psi.clone()).unwrap()
}

fn covariance(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len() as f64;
    let k = rows[0].len();
    let mut mean = DVector::zeros(k);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(k, k);
    for r in rows {
        let c = DVector::from_column_slice(r) - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / (n - 1.0))
}

#[test]
fn gaussian_densities_have_the_stated_covariance() {
    let eps = 0.3;
    let gamma = vec![0.5, 2.0];
    let psi = psi0(2, eps, WidthMatrix::diagonal(gamma.clone()).unwrap());
    // per-seed covariance ε·diag(Γ⁻¹, Γ) for Husimi, twice that for sqrt-Husimi
    let base = [eps / gamma[0], eps / gamma[1], eps * gamma[0], eps * gamma[1]];
    for (kind, scale) in [(DensityKind::HusimiDouble, 1.0), (DensityKind::SqrtHusimiDouble, 2.0)] {
        let batch = direct_sample(&spec(kind, &psi), 200_000, 3).unwrap();
        let rows: Vec<Vec<f64>> = batch.points.iter().map(|w| w.to_vec()).collect();
        let (mean, cov) = covariance(&rows);
        let z0 = psi.center.to_vec();
        for i in 0..8 {
            let var = scale * base[i % 4];
            assert!((mean[i] - z0[i % 4]).abs() < 4.0 * (var / 200_000.0).sqrt());
            assert!((cov[(i, i)] / var - 1.0).abs() < 0.02, "{kind}: var {i}");
            for j in 0..i {
                assert!(cov[(i, j)].abs() < 0.02 * var.max(scale * base[j % 4]));
            }
        }
    }
}

#[test]
fn optimal_identity_sampler_has_the_stated_precision() {
    // ρ ∝ exp(−[|y−z₀|² + |z−z₀|² + |y−z|²]/(4ε)): per coordinate pair the
    // precision is [[2, −1], [−1, 2]]/(2ε)
    let eps = 0.7;
    let d = 2;
    let psi = psi0(d, eps, WidthMatrix::identity(d));
    let batch = direct_sample(&spec(DensityKind::Optimal(Observable::Identity), &psi), 200_000, 5).unwrap();
    let rows: Vec<Vec<f64>> = batch.points.iter().map(|w| w.to_vec()).collect();
    let (_, cov) = covariance(&rows);
    let precision = cov.try_inverse().unwrap();
    let n = 2 * d;
    for i in 0..2 * n {
        for j in 0..2 * n {
            let expected = if i == j {
                1.0 / eps
            } else if i % n == j % n {
                -0.5 / eps
            } else {
                0.0
            };
            assert!((precision[(i, j)] - expected).abs() < 0.05 / eps, "Λ[{i},{j}] = {}", precision[(i, j)]);
        }
    }
}

#[test]
fn normalizers_match_importance_estimates() {
    let d = 2;
    let psi = psi0(d, 0.4, WidthMatrix::identity(d));
    let sqrt_h = spec(DensityKind::SqrtHusimiDouble, &psi);
    let husimi = spec(DensityKind::HusimiDouble, &psi);
    let opt = spec(DensityKind::Optimal(Observable::Identity), &psi);
    let batch = direct_sample(&sqrt_h, 400_000, 11).unwrap();
    let n = batch.len() as f64;
    let mut kappa_opt = 0.0;
    let mut unit = 0.0;
    for (w, lr) in batch.points.iter().zip(&batch.log_density) {
        kappa_opt += (opt.log_density_unnormalized(w) - lr).exp();
        unit += (husimi.log_density(w).unwrap() - lr).exp();
    }
    assert!((kappa_opt / n / (4.0f64 / 3.0).powi(d as i32) - 1.0).abs() < 0.01);
    assert!((unit / n - 1.0).abs() < 0.01);
    assert_eq!(opt.log_normalizer(), Some(d as f64 * (4.0f64 / 3.0).ln()));
    let pos = spec(DensityKind::Optimal(Observable::Position(0)), &psi);
    assert_eq!(pos.log_normalizer(), None);
}

#[test]
fn optimal_density_vanishes_on_the_zero_set_of_the_polynomial() {
    let psi = psi0(2, 1.0, WidthMatrix::identity(2));
    let s = spec(DensityKind::Optimal(Observable::Position(0)), &psi);
    // m₁ = q_y1 + q_z1 + i(p_z1 − p_y1) = 0
    let y = PhaseSpacePoint::new(vec![0.4, 1.0], vec![0.3, 0.0]).unwrap();
    let z = PhaseSpacePoint::new(vec![-0.4, -0.2], vec![0.3, 0.5]).unwrap();
    let pol = polynomial(&Observable::Position(0), &y, &z, &psi.width, 1.0).unwrap();
    assert_eq!(pol.norm(), 0.0);
    let w = DoublePhasePoint::new(y, z).unwrap();
    assert_eq!(density_eval_unnormalized(&s, &w), 0.0);
    assert_eq!(hmc_potential(&s, &w.to_vec()), f64::INFINITY);
    let mut grad = vec![0.0; 8];
    assert_eq!(hmc_potential_gradient(&s, &w.to_vec(), &mut grad).unwrap(), f64::INFINITY);
}

#[test]
fn samplers_reject_unsupported_targets() {
    let psi = psi0(2, 1.0, WidthMatrix::identity(2));
    assert!(DirectSampler::new(&spec(DensityKind::Optimal(Observable::Kinetic), &psi)).is_err());
    let params = HmcParams::default_for(1.0);
    assert!(hmc_sample(&spec(DensityKind::HusimiDouble, &psi), &params, 10, 0).is_err());
    assert!(HmcParams::new(0.1, 0, 10).is_err());
    assert!(HmcParams::new(-0.1, 5, 10).is_err());
    let wide = psi0(2, 1.0, WidthMatrix::diagonal(vec![2.0, 1.0]).unwrap());
    assert!(DensitySpec::new(DensityKind::Optimal(Observable::Kinetic), wide).is_err());
}

#[test]
fn sampling_is_reproducible() {
    let psi = psi0(3, 0.5, WidthMatrix::identity(3));
    for kind in [DensityKind::HusimiDouble, DensityKind::SqrtHusimiDouble, DensityKind::Optimal(Observable::Identity)] {
        let a = direct_sample(&spec(kind, &psi), 5000, 42).unwrap();
        let b = direct_sample(&spec(kind, &psi), 5000, 42).unwrap();
        let c = direct_sample(&spec(kind, &psi), 5000, 43).unwrap();
        assert_eq!(a.points, b.points);
        assert_ne!(a.points, c.points);
        let sampler = DirectSampler::new(&spec(kind, &psi)).unwrap();
        assert_eq!(sampler.draw(42, 1234), a.points[1234]);
    }
    let s = spec(DensityKind::Optimal(Observable::MomentumSq(1)), &psi);
    let params = HmcParams::new(0.1, 10, 200).unwrap();
    let a = hmc_sample(&s, &params, 500, 9).unwrap();
    let b = hmc_sample(&s, &params, 500, 9).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.acceptance_rate, b.acceptance_rate);
}

fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn hmc_matches_direct_sampling_on_the_gaussian_target() {
    let d = 2;
    let psi = psi0(d, 1.0, WidthMatrix::identity(d));
    let s = spec(DensityKind::Optimal(Observable::Identity), &psi);
    let params = HmcParams::default_for(1.0);
    let chain = hmc_sample(&s, &params, 20_000, 21).unwrap();
    assert!(chain.acceptance_rate.unwrap() > 0.5, "acceptance {:?}", chain.acceptance_rate);
    let direct = direct_sample(&s, 20_000, 22).unwrap();
    let z0 = psi.center.to_vec();
    for coord in [0, 3, 5, 6] {
        let mut a: Vec<f64> = chain.points.iter().map(|w| w.to_vec()[coord]).collect();
        let mut b: Vec<f64> = direct.points.iter().map(|w| w.to_vec()[coord]).collect();
        let ess = effective_sample_size(&a);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((mean - z0[coord % (2 * d)]).abs() < 3.0 * (var / ess).sqrt(), "coordinate {coord}");
        let ks = ks_statistic(&mut a, &mut b);
        let m = b.len() as f64;
        // two-sample KS critical value at α = 0.001 with the chain length replaced by its ESS
        let crit = 1.95 * ((ess + m) / (ess * m)).sqrt();
        assert!(ks < crit, "coordinate {coord}: KS {ks} vs {crit} (ESS {ess})");
    }
}

#[test]
fn hmc_matches_reweighted_direct_samples_on_a_non_gaussian_target() {
    // E_opt(Â)[h] = E_opt(Id)[h·|Pol|] / E_opt(Id)[|Pol|]
    let d = 1;
    let psi = psi0(d, 1.0, WidthMatrix::identity(d));
    let obs = Observable::MomentumSq(0);
    let params = HmcParams::default_for(1.0);
    let chain = hmc_sample(&spec(DensityKind::Optimal(obs), &psi), &params, 40_000, 31).unwrap();
    let direct = direct_sample(&spec(DensityKind::Optimal(Observable::Identity), &psi), 400_000, 32).unwrap();
    let h = |w: &DoublePhasePoint| w.y.p[0] * w.z.p[0];
    let (mut num, mut den) = (0.0, 0.0);
    for w in &direct.points {
        let a = polynomial(&obs, &w.y, &w.z, &psi.width, 1.0).unwrap().norm();
        num += h(w) * a;
        den += a;
    }
    let reference = num / den;
    let series: Vec<f64> = chain.points.iter().map(h).collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / series.len() as f64;
    let se = (var / effective_sample_size(&series)).sqrt();
    assert!((mean - reference).abs() < 3.0 * se + 0.01, "{mean} vs {reference} (se {se})");
}

#[test]
fn effective_sample_size_of_an_ar1_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for phi in [0.0, 0.5, 0.9] {
        let mut x = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = phi * x + e;
                x
            })
            .collect();
        let expected = (1.0 - phi) / (1.0 + phi);
        let ratio = effective_sample_size(&series) / series.len() as f64;
        assert!((ratio / expected - 1.0).abs() < 0.1, "φ={phi}: {ratio} vs {expected}");
    }
}

fn optimal_target() -> impl Strategy<Value = Observable> {
    prop_oneof![
        Just(Observable::Identity),
        (0usize..2).prop_map(Observable::Position),
        (0usize..2).prop_map(Observable::PositionSq),
        (0usize..2).prop_map(Observable::Momentum),
        (0usize..2).prop_map(Observable::MomentumSq),
        Just(Observable::Kinetic),
        Just(Observable::PotentialHarmonic),
        Just(Observable::PotentialHenonHeiles { sigma: 0.2 }),
    ]
}

proptest! {
    #[test]
    fn hmc_gradient_matches_finite_differences(
        obs in optimal_target(),
        w in prop::collection::vec(-2.0f64..2.0, 8),
        eps in 0.2f64..2.0,
    ) {
        let psi = psi0(2, eps, WidthMatrix::identity(2));
        let s = spec(DensityKind::Optimal(obs), &psi);
        let point = DoublePhasePoint::from_slice(&w);
        let pol = polynomial(&obs, &point.y, &point.z, &psi.width, eps).unwrap();
        // ln|Pol| is singular on the zero set of Pol; stay away from it
        prop_assume!(pol.norm() > 0.1);
        let mut grad = vec![0.0; 8];
        let u = hmc_potential_gradient(&s, &w, &mut grad).unwrap();
        prop_assert!((u - hmc_potential(&s, &w)).abs() < 1e-12 * u.abs().max(1.0));
        let scale = grad.iter().map(|g| g.abs()).fold(1.0, f64::max);
        for k in 0..8 {
            let h = 1e-5;
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (hmc_potential(&s, &wp) - hmc_potential(&s, &wm)) / (2.0 * h);
            prop_assert!((fd - grad[k]).abs() < 1e-5 * scale, "component {}: {} vs {}", k, fd, grad[k]);
        }
    }
}
