//! Property tests for invariants that must hold on any input.

use std::sync::Arc;

use fppi::csvio::{read_labeled, read_unlabeled, write_labeled, write_unlabeled};
use fppi::data::{Factor, LabeledDataset, Region, SemiSupervised, UnlabeledDataset};
use fppi::glm::{
    amse, estimate_plugin_matrices, fppi_glm_estimate, lambda_star_glm, minimal_amse, GlmFamily,
    OptimizerOptions,
};
use fppi::linalg::{compensated_sum, Cholesky, Matrix};
use fppi::mean::{
    classical_mean, fppi_mean, fppi_mean_variance, lambda_star_population, minimized_variance,
    ppi_plusplus_mean,
};
use fppi::normal::inverse_cdf;
use fppi::region::mis_recovery_probability;
use fppi::rng::{Purpose, Stream};
use proptest::prelude::*;

struct Owned {
    labeled: LabeledDataset,
    unlabeled: UnlabeledDataset,
    f_lab: Vec<f64>,
    f_unl: Vec<f64>,
}

impl Owned {
    fn view(&self) -> SemiSupervised<'_> {
        SemiSupervised::new(&self.labeled, &self.unlabeled, &self.f_lab, &self.f_unl).unwrap()
    }
}

/// Random semi-supervised sample with `p` covariates; y and f are linear in
/// x plus noise, so they are correlated but not identical.
fn sample(seed: u64, n: usize, big_n: usize, p: usize) -> Owned {
    let mut s = Stream::new(seed, Purpose::Probe, 0);
    let beta: Vec<f64> = (0..p).map(|_| s.normal()).collect();
    let mut draw = |rows: usize| {
        let x: Vec<f64> = (0..rows * p).map(|_| s.normal()).collect();
        let lin: Vec<f64> = x.chunks(p).map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
        (Matrix::from_vec(rows, p, x).unwrap(), lin)
    };
    let (xl, lin_l) = draw(n);
    let (xu, lin_u) = draw(big_n);
    let mut s = Stream::new(seed, Purpose::Labeled, 1);
    let y: Vec<f64> = lin_l.iter().map(|v| v + s.normal()).collect();
    let f_lab: Vec<f64> = lin_l.iter().map(|v| 0.8 * v + 0.3 * s.normal()).collect();
    let f_unl: Vec<f64> = lin_u.iter().map(|v| 0.8 * v + 0.3 * s.normal()).collect();
    Owned {
        labeled: LabeledDataset::new(xl, y).unwrap(),
        unlabeled: UnlabeledDataset::new(xu).unwrap(),
        f_lab,
        f_unl,
    }
}

/// `{x : x₀ − t > 0}` written as a sign product.
fn half_space(t: f64, sign: f64) -> Region {
    let g: Factor = Arc::new(move |row, _| sign * (row[0] - t));
    let h: Factor = Arc::new(|_, _| 1.0);
    Region::sign_product(g, h, None, format!("{sign}*(x1 - {t}) > 0"))
}

fn probe(seed: u64, rows: usize) -> (UnlabeledDataset, Vec<f64>) {
    let mut s = Stream::new(seed, Purpose::Probe, 7);
    let x: Vec<f64> = (0..rows).map(|_| s.normal()).collect();
    (UnlabeledDataset::new(Matrix::column(&x)).unwrap(), vec![0.0; rows])
}

fn random_spd(s: &mut Stream, p: usize) -> Matrix {
    let a = Matrix::from_vec(p, p, (0..p * p).map(|_| s.normal()).collect()).unwrap();
    a.matmul(&a.transpose()).unwrap().add_scaled(&Matrix::identity(p), 0.5).unwrap()
}

fn random_psd(s: &mut Stream, p: usize) -> Matrix {
    let a = Matrix::from_vec(p, p, (0..p * p).map(|_| s.normal()).collect()).unwrap();
    a.matmul(&a.transpose()).unwrap()
}

fn quad_form(m: &Matrix, v: &[f64]) -> f64 {
    let mv = m.mat_vec(v).unwrap();
    v.iter().zip(&mv).map(|(a, b)| a * b).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn all_and_empty_are_complementary(row in prop::collection::vec(-1e6f64..1e6, 1..5), f in -1e3f64..1e3) {
        prop_assert!(Region::All.contains(&row, f));
        prop_assert!(!Region::Empty.contains(&row, f));
    }

    #[test]
    fn flipped_sign_product_is_the_complement_off_the_boundary(x in -5f64..5.0, t in -2f64..2.0) {
        prop_assume!(x != t);
        let a = half_space(t, 1.0).contains(&[x], 0.0);
        let b = half_space(t, -1.0).contains(&[x], 0.0);
        prop_assert!(a ^ b);
    }

    #[test]
    fn boundary_rows_are_in_neither_half(t in -2f64..2.0) {
        prop_assert!(!half_space(t, 1.0).contains(&[t], 0.0));
        prop_assert!(!half_space(t, -1.0).contains(&[t], 0.0));
    }

    #[test]
    fn mis_recovery_is_a_metric(seed in 0u64..1000, a in -2f64..2.0, b in -2f64..2.0, c in -2f64..2.0) {
        let (pr, f) = probe(seed, 500);
        let (ra, rb, rc) = (half_space(a, 1.0), half_space(b, 1.0), half_space(c, 1.0));
        let d = |u: &Region, v: &Region| mis_recovery_probability(u, v, &pr, &f).unwrap();
        prop_assert_eq!(d(&ra, &ra), 0.0);
        prop_assert_eq!(d(&ra, &rb), d(&rb, &ra));
        prop_assert!(d(&ra, &rc) <= d(&ra, &rb) + d(&rb, &rc) + 1e-12);
        prop_assert_eq!(d(&Region::All, &Region::Empty), 1.0);
        let dab = d(&ra, &rb);
        prop_assert!((0.0..=1.0).contains(&dab));
    }

    #[test]
    fn degeneracy_chain_holds_exactly(seed in 0u64..10_000, lambda in -2f64..2.0, t in -1f64..1.0) {
        let o = sample(seed, 30, 90, 1);
        let d = o.view();
        let classical = classical_mean(&d).unwrap();
        let at_zero = fppi_mean(&d, &half_space(t, 1.0), 0.0).unwrap();
        let on_empty = fppi_mean(&d, &Region::Empty, lambda).unwrap();
        prop_assert_eq!(at_zero.theta_hat, classical.theta_hat);
        prop_assert_eq!(on_empty.theta_hat, classical.theta_hat);
        let ppp = ppi_plusplus_mean(&d, lambda).unwrap();
        let unfiltered = fppi_mean(&d, &Region::All, lambda).unwrap();
        prop_assert_eq!(ppp.theta_hat, unfiltered.theta_hat);
    }

    #[test]
    fn estimate_is_mean_plus_weighted_correction(seed in 0u64..10_000, lambda in -2f64..2.0, t in -1f64..1.0) {
        let o = sample(seed, 25, 60, 1);
        let region = half_space(t, 1.0);
        let r = fppi_mean(&o.view(), &region, lambda).unwrap();
        let ybar = o.labeled.y().iter().sum::<f64>() / 25.0;
        let (lab_in, unl_in) = o.view().memberships(&region).unwrap();
        let fl: f64 = o.f_lab.iter().zip(&lab_in).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / 25.0;
        let fu: f64 = o.f_unl.iter().zip(&unl_in).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / 60.0;
        let expected = ybar + lambda * (fu - fl);
        prop_assert!((r.theta_hat - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn mean_variance_is_convex_and_minimized_at_lambda_star(
        var_y in 0.01f64..10.0,
        var_f in 0.01f64..10.0,
        rho in -0.99f64..0.99,
        n in 2usize..500,
        big_n in 1usize..5000,
        offset in -3f64..3.0,
    ) {
        let cov = rho * (var_y * var_f).sqrt();
        let star = lambda_star_population(cov, var_f, n, big_n).unwrap();
        let v = |l: f64| fppi_mean_variance(var_y, var_f, cov, l, n, big_n).unwrap();
        let vmin = minimized_variance(var_y, var_f, cov, n, big_n).unwrap();
        let scale = var_y / n as f64;
        prop_assert!((v(star) - vmin).abs() <= 1e-10 * scale);
        prop_assert!(v(star + offset) >= vmin - 1e-12 * scale);
        prop_assert!(vmin <= scale * (1.0 + 1e-12));
        prop_assert!(vmin >= -1e-12 * scale);
        // midpoint convexity
        let (a, b) = (star - offset, star + 2.0 * offset);
        prop_assert!(v(0.5 * (a + b)) <= 0.5 * (v(a) + v(b)) + 1e-12 * scale);
    }

    #[test]
    fn spd_solve_has_small_residual(seed in 0u64..10_000, p in 1usize..7) {
        let mut s = Stream::new(seed, Purpose::Probe, 3);
        let a = random_spd(&mut s, p);
        let b: Vec<f64> = (0..p).map(|_| s.normal()).collect();
        let x = Cholesky::factor(&a).unwrap().solve(&b).unwrap();
        let ax = a.mat_vec(&x).unwrap();
        for (u, v) in ax.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn amse_is_a_convex_quadratic_minimized_at_lambda_star(seed in 0u64..10_000, p in 1usize..5, r in 0f64..3.0) {
        let mut s = Stream::new(seed, Purpose::Probe, 4);
        let sigma = random_spd(&mut s, p);
        let omega = random_psd(&mut s, p).add_scaled(&Matrix::identity(p), 1.0).unwrap();
        let m = random_spd(&mut s, p);
        let g0 = random_psd(&mut s, p);
        let gamma = g0.add_scaled(&g0.transpose(), 1.0).unwrap().scale(0.5);
        let star = lambda_star_glm(&sigma, &gamma, &m, r).unwrap();
        let f = |l: f64| amse(&sigma, &omega, &m, &gamma, l, r).unwrap();
        let fmin = minimal_amse(&sigma, &omega, &m, &gamma, r).unwrap();
        let scale = f(0.0).abs().max(1.0);
        prop_assert!((f(star) - fmin).abs() <= 1e-8 * scale);
        // exact quadratic: the second difference is constant
        let h = 0.7;
        let d2a = f(star + h) - 2.0 * f(star) + f(star - h);
        let d2b = f(star + 3.0 * h) - 2.0 * f(star + 2.0 * h) + f(star + h);
        prop_assert!(d2a > 0.0);
        prop_assert!((d2a - d2b).abs() <= 1e-7 * scale);
        prop_assert!(f(star + 0.3) >= fmin - 1e-9 * scale);
    }

    #[test]
    fn plugin_matrices_are_symmetric_and_psd(seed in 0u64..10_000, t in -1f64..1.0) {
        let o = sample(seed, 40, 120, 3);
        let theta = [0.1, -0.2, 0.3];
        let pm = estimate_plugin_matrices(&o.view(), &half_space(t, 1.0), &theta, GlmFamily::gaussian(1.0)).unwrap();
        let mut s = Stream::new(seed, Purpose::Probe, 5);
        for mat in [&pm.sigma, &pm.m, &pm.omega] {
            prop_assert!(mat.is_symmetric(1e-12 * (1.0 + mat.max_abs())));
            for _ in 0..5 {
                let v: Vec<f64> = (0..3).map(|_| s.normal()).collect();
                prop_assert!(quad_form(mat, &v) >= -1e-10 * (1.0 + mat.max_abs()));
            }
        }
        prop_assert!(pm.gamma.is_symmetric(1e-12 * (1.0 + pm.gamma.max_abs())));
    }

    #[test]
    fn inverse_normal_cdf_is_odd_and_monotone(p in 1e-10f64..0.5, q in 1e-10f64..0.5) {
        prop_assert!((inverse_cdf(p) + inverse_cdf(1.0 - p)).abs() <= 1e-8 * (1.0 + inverse_cdf(p).abs()));
        if p < q {
            prop_assert!(inverse_cdf(p) < inverse_cdf(q));
        }
    }

    #[test]
    fn streams_are_reproducible_and_permutations_complete(seed in any::<u64>(), idx in 0u64..1000, n in 1usize..200) {
        let mut a = Stream::new(seed, Purpose::Split, idx);
        let mut b = Stream::new(seed, Purpose::Split, idx);
        let pa = a.permutation(n);
        prop_assert_eq!(&pa, &b.permutation(n));
        let mut sorted = pa.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let u = a.uniform();
        prop_assert!(u > 0.0 && u < 1.0);
    }

    #[test]
    fn compensated_sum_is_order_insensitive(mut v in prop::collection::vec(-1e12f64..1e12, 0..200)) {
        let forward = compensated_sum(v.iter().copied());
        v.reverse();
        let backward = compensated_sum(v.iter().copied());
        let mag: f64 = v.iter().map(|x| x.abs()).sum();
        prop_assert!((forward - backward).abs() <= 1e-15 * mag.max(1.0) * 4.0);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(
        rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 4), 1..30),
    ) {
        let p = 2;
        let x = Matrix::from_rows(&rows.iter().map(|r| r[..p].to_vec()).collect::<Vec<_>>()).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        let f: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        let lab = LabeledDataset::new(x.clone(), y.clone()).unwrap();
        let mut buf = Vec::new();
        write_labeled(&mut buf, &lab, Some(&f)).unwrap();
        let back = read_labeled(buf.as_slice(), "f").unwrap();
        prop_assert_eq!(back.dropped_rows, 0);
        let bits = |v: &[f64]| v.iter().map(|a| a.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(back.data.x().as_slice()), bits(x.as_slice()));
        prop_assert_eq!(bits(back.data.y()), bits(&y));
        prop_assert_eq!(bits(back.predictions.as_deref().unwrap()), bits(&f));

        let unl = UnlabeledDataset::new(x.clone()).unwrap();
        let mut buf = Vec::new();
        write_unlabeled(&mut buf, &unl, None).unwrap();
        let back = read_unlabeled(buf.as_slice(), "f").unwrap();
        prop_assert!(back.predictions.is_none());
        prop_assert_eq!(bits(back.data.x().as_slice()), bits(x.as_slice()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// For λ ∈ [0, 1] the filtered objective is convex, so every start
    /// lands on the same minimizer.
    #[test]
    fn glm_minimizer_does_not_depend_on_the_start(seed in 0u64..10_000, lambda in 0f64..1.0, t in -1f64..1.0, bern in any::<bool>()) {
        let mut o = sample(seed, 150, 400, 2);
        let family = if bern {
            let y: Vec<f64> = o.labeled.y().iter().map(|v| f64::from(u8::from(*v > 0.0))).collect();
            o.labeled = LabeledDataset::new(o.labeled.x().clone(), y).unwrap();
            o.f_lab.iter_mut().chain(o.f_unl.iter_mut()).for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
            GlmFamily::Bernoulli
        } else {
            GlmFamily::gaussian(1.0)
        };
        let d = o.view();
        let region = half_space(t, 1.0);
        let opts = OptimizerOptions::default();
        let base = fppi_glm_estimate(&d, &region, lambda, family, &opts, None).unwrap().theta;
        let mut s = Stream::new(seed, Purpose::Probe, 9);
        for _ in 0..10 {
            let start: Vec<f64> = (0..2).map(|_| 3.0 * s.normal()).collect();
            let fit = fppi_glm_estimate(&d, &region, lambda, family, &opts, Some(&start)).unwrap();
            for (a, b) in fit.theta.iter().zip(&base) {
                prop_assert!((a - b).abs() <= 1e-4, "start {:?}: {:?} vs {:?}", start, fit.theta, base);
            }
        }
    }
}
