use flowstego::flows::{
    empirical_lipschitz, GaussianEndpoints, GmmSpec, GmmVpModel, Guided, LinearField, RfGaussianField, RfGmmField,
    StraightGaussianField, VelocityField, VpSchedule, VpScoreField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn eval1(f: &impl VelocityField, x: f64, t: f64) -> f64 {
    let mut out = [0.0];
    f.eval_into(&[x], t, None, &mut out).unwrap();
    out[0]
}

/// Monte-Carlo `E[X1 - X0 | X_t ≈ x]` by a local linear fit over the pairs
/// whose interpolant lands within `h` of `x`.
fn mc_conditional(pairs: &[(f64, f64)], x: f64, t: f64, h: f64) -> f64 {
    let (mut n, mut sz, mut sd, mut szz, mut szd) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x0, x1) in pairs {
        let z = (1.0 - t) * x0 + t * x1 - x;
        if z.abs() < h {
            let d = x1 - x0;
            n += 1.0;
            sz += z;
            sd += d;
            szz += z * z;
            szd += z * d;
        }
    }
    assert!(n > 1000.0, "only {n} pairs near x = {x}, t = {t}");
    let slope = (n * szd - sz * sd) / (n * szz - sz * sz);
    (sd - slope * sz) / n
}

fn gaussian_pairs(n: usize, ep: (f64, f64, f64, f64), seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mu0, s0, mu1, s1) = ep;
    (0..n)
        .map(|_| (mu0 + s0 * normal(&mut rng), mu1 + s1 * normal(&mut rng)))
        .collect()
}

#[test]
fn standard_normal_field_matches_closed_value() {
    let field = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1.0, 0.0, 1.0).unwrap());
    assert!((eval1(&field, 1.0, 0.25) + 0.8).abs() < 1e-12);
    let pairs = gaussian_pairs(1_000_000, (0.0, 1.0, 0.0, 1.0), 1);
    let mc = mc_conditional(&pairs, 1.0, 0.25, 0.1);
    assert!((mc + 0.8).abs() < 0.02, "Monte-Carlo {mc}");
}

#[test]
fn gaussian_field_matches_monte_carlo_at_random_probes() {
    let ep = (0.5, 1.0, -1.0, 0.6);
    let field = RfGaussianField::new(GaussianEndpoints::isotropic(1, ep.0, ep.1, ep.2, ep.3).unwrap());
    let pairs = gaussian_pairs(1_000_000, ep, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let t: f64 = rng.random_range(0.05..0.95);
        let (m, s) = (
            (1.0 - t) * ep.0 + t * ep.2,
            ((1.0 - t) * (1.0 - t) * ep.1 * ep.1 + t * t * ep.3 * ep.3).sqrt(),
        );
        let x = m + s * rng.random_range(-1.5..1.5);
        let mc = mc_conditional(&pairs, x, t, 0.1);
        let v = eval1(&field, x, t);
        assert!((mc - v).abs() < 0.05, "t {t} x {x}: field {v} vs Monte-Carlo {mc}");
    }
}

#[test]
fn mixture_field_matches_monte_carlo_at_random_probes() {
    let gmm = GmmSpec::isotropic(vec![0.3, 0.7], vec![vec![-2.0], vec![1.5]], vec![0.4, 0.6], None).unwrap();
    let field = RfGmmField::new(gmm.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pairs: Vec<(f64, f64)> = (0..1_000_000)
        .map(|_| (normal(&mut rng), gmm.sample(&mut rng, None).unwrap()[0]))
        .collect();
    for _ in 0..20 {
        let t: f64 = rng.random_range(0.05..0.9);
        let x = t * if rng.random::<bool>() { -2.0 } else { 1.5 } + rng.random_range(-0.5..0.5);
        let mc = mc_conditional(&pairs, x, t, 0.05);
        let v = eval1(&field, x, t);
        assert!((mc - v).abs() < 0.05, "t {t} x {x}: field {v} vs Monte-Carlo {mc}");
    }
}

/// Classical RK4 with many steps, accurate far below the sampling error.
fn integrate(field: &impl VelocityField, x: &mut [f64]) {
    let n = 200;
    let h = 1.0 / n as f64;
    let d = x.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut y = vec![0.0; d];
    for k in 0..n {
        let t = k as f64 * h;
        field.eval_into(x, t, None, &mut k1).unwrap();
        (0..d).for_each(|i| y[i] = x[i] + 0.5 * h * k1[i]);
        field.eval_into(&y, t + 0.5 * h, None, &mut k2).unwrap();
        (0..d).for_each(|i| y[i] = x[i] + 0.5 * h * k2[i]);
        field.eval_into(&y, t + 0.5 * h, None, &mut k3).unwrap();
        (0..d).for_each(|i| y[i] = x[i] + h * k3[i]);
        field.eval_into(&y, t + h, None, &mut k4).unwrap();
        (0..d).for_each(|i| x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
}

#[test]
fn gaussian_flows_transport_the_marginals() {
    let mu0 = vec![0.0, 1.0, -0.5];
    let s0 = vec![1.0, 0.5, 2.0];
    let mu1 = vec![2.0, -1.0, 0.0];
    let s1 = vec![0.5, 1.5, 1.0];
    let ep = GaussianEndpoints::new(mu0.clone(), s0.clone(), mu1.clone(), s1.clone()).unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let starts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|i| mu0[i] + s0[i] * normal(&mut rng)).collect())
        .collect();
    let fields: [Box<dyn VelocityField>; 2] = [
        Box::new(RfGaussianField::new(ep.clone())),
        Box::new(StraightGaussianField::new(ep)),
    ];
    for field in &fields {
        let ends: Vec<Vec<f64>> = starts
            .iter()
            .map(|x| {
                let mut x = x.clone();
                integrate(field, &mut x);
                x
            })
            .collect();
        for i in 0..3 {
            let m = ends.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            let v = ends.iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = v.sqrt();
            let se_mean = s1[i] / (n as f64).sqrt();
            let se_sd = s1[i] / (2.0 * n as f64).sqrt();
            assert!((m - mu1[i]).abs() < 3.0 * se_mean, "dim {i} mean {m}");
            assert!((sd - s1[i]).abs() < 3.0 * se_sd, "dim {i} std {sd}");
        }
    }
}

#[test]
fn single_gaussian_probability_flow_matches_closed_form() {
    let (mu, s) = (1.0, 0.5);
    let sch = VpSchedule::default();
    let model = GmmVpModel::new(GmmSpec::isotropic(vec![1.0], vec![vec![mu]], vec![s], None).unwrap(), sch).unwrap();
    let field = VpScoreField::new(model);
    let eps = 1e-3;
    for &t in &[0.0, 0.1, 0.37, 0.5, 0.8, 1.0] {
        for &x in &[-2.0, 0.0, 0.3, 1.7] {
            let sd = (1.0 - eps) - t * (1.0 - 2.0 * eps);
            let log_a = -0.25 * sd * sd * (20.0 - 0.1) - 0.5 * sd * 0.1;
            let a = f64::exp(log_a);
            let var = a * a * s * s + 1.0 - a * a;
            let score = -(x - a * mu) / var;
            let beta = 0.1 + sd * (20.0 - 0.1);
            let dx_ds = -0.5 * beta * (x + score);
            let expected = dx_ds * -(1.0 - 2.0 * eps);
            let v = eval1(&field, x, t);
            assert!((v - expected).abs() < 1e-10, "t {t} x {x}: {v} vs {expected}");
        }
    }
}

#[test]
fn symmetric_mixture_has_zero_velocity_at_the_midpoint() {
    let gmm = GmmSpec::isotropic(vec![0.5, 0.5], vec![vec![3.0, 0.0], vec![-3.0, 0.0]], vec![0.5, 0.5], None).unwrap();
    let field = RfGmmField::new(gmm.clone()).unwrap();
    let model = GmmVpModel::new(gmm, VpSchedule::default()).unwrap();
    let mut out = [0.0; 2];
    for &t in &[0.0, 0.2, 0.5, 0.9, 1.0] {
        field.eval_into(&[0.0, 0.0], t, None, &mut out).unwrap();
        assert!(out[0].abs() < 1e-12 && out[1].abs() < 1e-12, "t {t}: {out:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x = [3.0 * normal(&mut rng), normal(&mut rng)];
        let s: f64 = rng.random_range(0.01..1.0);
        let r = model.responsibilities(&x, s, None).unwrap();
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn guidance_blends_conditional_and_unconditional() {
    let gmm = GmmSpec::isotropic(
        vec![0.5, 0.5],
        vec![vec![2.0, 1.0], vec![-2.0, 0.5]],
        vec![0.5, 0.8],
        Some(vec![0, 1]),
    )
    .unwrap();
    let field = RfGmmField::new(gmm).unwrap();
    let x = [0.4, -0.3];
    let (mut c, mut u, mut g) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    field.eval_into(&x, 0.6, Some(0), &mut c).unwrap();
    field.eval_into(&x, 0.6, None, &mut u).unwrap();
    for (w, expect) in [(0.0, u), (1.0, c), (2.0, [2.0 * c[0] - u[0], 2.0 * c[1] - u[1]])] {
        Guided::new(&field, &field, w).eval_into(&x, 0.6, Some(0), &mut g).unwrap();
        for i in 0..2 {
            assert!((g[i] - expect[i]).abs() < 1e-12, "w {w}: {g:?} vs {expect:?}");
        }
    }
}

#[test]
fn declared_lipschitz_bounds_hold_empirically() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ep = GaussianEndpoints::new(vec![0.0, 1.0], vec![1.0, 0.3], vec![1.0, 0.0], vec![2.0, 1.0]).unwrap();
    let fields: [Box<dyn VelocityField>; 3] = [
        Box::new(RfGaussianField::new(ep.clone())),
        Box::new(StraightGaussianField::new(ep)),
        Box::new(LinearField { dim: 2, a: -1.7 }),
    ];
    for f in &fields {
        let bound = f.lipschitz_bound().unwrap();
        let seen = empirical_lipschitz(f, 10_000, 2.0, 1e-3, &mut rng).unwrap();
        assert!(seen <= bound * (1.0 + 1e-9), "slope {seen} above bound {bound}");
        assert!(seen > 0.5 * bound, "bound {bound} is loose against {seen}");
    }
    let rf = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1.0, 0.0, 2.0).unwrap());
    assert!((rf.lipschitz_bound().unwrap() - 1.25).abs() < 1e-12);
}
