use crate::error::{check_dim, Error, Result};
use crate::flows::{check_io, check_time, VelocityField};
use crate::latent::LatentVector;

/// Per-dimension Gaussian laws of the two endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEndpoints {
    pub mu0: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma1: Vec<f64>,
}

impl GaussianEndpoints {
    pub fn new(mu0: Vec<f64>, sigma0: Vec<f64>, mu1: Vec<f64>, sigma1: Vec<f64>) -> Result<Self> {
        let d = mu0.len();
        if d == 0 {
            return Err(Error::Config("endpoints need at least one dimension".into()));
        }
        for v in [&sigma0, &mu1, &sigma1] {
            check_dim(d, v.len())?;
        }
        let bad = |s: &[f64]| s.iter().any(|v| !(*v > 0.0 && v.is_finite()));
        if bad(&sigma0) || bad(&sigma1) || mu0.iter().chain(&mu1).any(|v| !v.is_finite()) {
            return Err(Error::Config("endpoint stds must be positive and all values finite".into()));
        }
        Ok(Self { mu0, sigma0, mu1, sigma1 })
    }

    /// Same law for every dimension.
    pub fn isotropic(dim: usize, mu0: f64, sigma0: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        Self::new(vec![mu0; dim], vec![sigma0; dim], vec![mu1; dim], vec![sigma1; dim])
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

/// Marginal rectified-flow field `E[X1 - X0 | X_t = x]` for independent
/// Gaussian endpoints.
#[derive(Debug, Clone)]
pub struct RfGaussianField {
    ep: GaussianEndpoints,
    lipschitz: f64,
}

impl RfGaussianField {
    pub fn new(ep: GaussianEndpoints) -> Self {
        // max_t |c(t)| = (s0² + s1²) / (2 s0 s1), attained inside [0, 1].
        let lipschitz = ep
            .sigma0
            .iter()
            .zip(&ep.sigma1)
            .map(|(a, b)| (a * a + b * b) / (2.0 * a * b))
            .fold(0.0, f64::max);
        Self { ep, lipschitz }
    }

    pub fn endpoints(&self) -> &GaussianEndpoints {
        &self.ep
    }

    /// Slope of the field in dimension `i` at time `t`.
    pub fn coefficient(&self, i: usize, t: f64) -> f64 {
        let (a, b) = (self.ep.sigma0[i].powi(2), self.ep.sigma1[i].powi(2));
        let s2 = (1.0 - t).powi(2) * a + t * t * b;
        (t * b - (1.0 - t) * a) / s2
    }
}

impl VelocityField for RfGaussianField {
    fn dim(&self) -> usize {
        self.ep.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim(), x, out)?;
        check_time(t)?;
        let ep = &self.ep;
        for i in 0..x.len() {
            let m = (1.0 - t) * ep.mu0[i] + t * ep.mu1[i];
            out[i] = (ep.mu1[i] - ep.mu0[i]) + self.coefficient(i, t) * (x[i] - m);
        }
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

/// The straight transport between two Gaussians: each coordinate moves along
/// `m(t) + ((1-t)σ0 + tσ1)/σ0 · (x0 - μ0)`, a straight line in `t`.
#[derive(Debug, Clone)]
pub struct StraightGaussianField {
    ep: GaussianEndpoints,
}

impl StraightGaussianField {
    pub fn new(ep: GaussianEndpoints) -> Self {
        Self { ep }
    }
}

impl VelocityField for StraightGaussianField {
    fn dim(&self) -> usize {
        self.ep.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim(), x, out)?;
        check_time(t)?;
        let ep = &self.ep;
        for i in 0..x.len() {
            let (s0, s1) = (ep.sigma0[i], ep.sigma1[i]);
            let m = (1.0 - t) * ep.mu0[i] + t * ep.mu1[i];
            out[i] = (ep.mu1[i] - ep.mu0[i]) + (s1 - s0) / ((1.0 - t) * s0 + t * s1) * (x[i] - m);
        }
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        let ep = &self.ep;
        Some(
            ep.sigma0
                .iter()
                .zip(&ep.sigma1)
                .map(|(a, b)| (b - a).abs() / a.min(*b))
                .fold(0.0, f64::max),
        )
    }
}

/// Constant field `v = delta`, the deterministic coupling `X1 = X0 + delta`.
#[derive(Debug, Clone)]
pub struct LinearCouplingField {
    delta: Vec<f64>,
}

impl LinearCouplingField {
    pub fn new(delta: &LatentVector) -> Self {
        Self {
            delta: delta.as_slice().to_vec(),
        }
    }

    pub fn from_slice(delta: &[f64]) -> Result<Self> {
        Ok(Self::new(&LatentVector::new(delta.to_vec())?))
    }
}

impl VelocityField for LinearCouplingField {
    fn dim(&self) -> usize {
        self.delta.len()
    }

    fn eval_into(&self, x: &[f64], t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim(), x, out)?;
        check_time(t)?;
        out.copy_from_slice(&self.delta);
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `v = a·x`, exact solution `x0·e^{a t}`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub dim: usize,
    pub a: f64,
}

impl VelocityField for LinearField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], _t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim, x, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.a * xi;
        }
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        Some(self.a.abs())
    }
}

/// Adds a fixed offset to another field.
#[derive(Debug, Clone)]
pub struct ShiftedField<F> {
    pub inner: F,
    pub shift: Vec<f64>,
}

impl<F: VelocityField> VelocityField for ShiftedField<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_dim(self.inner.dim(), self.shift.len())?;
        self.inner.eval_into(x, t, label, out)?;
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.inner.lipschitz_bound()
    }
}

/// Wraps a closure `(x, t, out)` as a field.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
    pub lipschitz: Option<f64>,
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim, x, out)?;
        (self.f)(x, t, out);
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(f: &impl VelocityField, x: f64, t: f64) -> f64 {
        let mut out = [0.0];
        f.eval_into(&[x], t, None, &mut out).unwrap();
        out[0]
    }

    #[test]
    fn symmetric_standard_pair_vanishes_at_midpoint() {
        let f = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1.0, 0.0, 1.0).unwrap());
        for x in [-3.0, -0.1, 0.0, 2.5] {
            assert_eq!(eval1(&f, x, 0.5), 0.0);
        }
    }

    #[test]
    fn quarter_time_value() {
        let f = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1.0, 0.0, 1.0).unwrap());
        assert!((eval1(&f, 1.0, 0.25) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn narrow_endpoints_give_constant_transport() {
        let f = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1e-9, 3.0, 1e-9).unwrap());
        for t in [0.0, 0.3, 0.9, 1.0] {
            let m = 3.0 * t;
            assert!((eval1(&f, m, t) - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn time_outside_unit_interval_is_rejected() {
        let f = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, 1.0, 0.0, 1.0).unwrap());
        let mut out = [0.0];
        assert!(matches!(f.eval_into(&[0.0], 1.5, None, &mut out), Err(Error::Domain(_))));
        assert!(matches!(f.eval_into(&[0.0], -0.1, None, &mut out), Err(Error::Domain(_))));
    }

    #[test]
    fn lipschitz_closed_form_dominates_scan() {
        for (s0, s1) in [(1.0, 1.0), (1.0, 0.05), (0.3, 2.0)] {
            let f = RfGaussianField::new(GaussianEndpoints::isotropic(1, 0.0, s0, 1.0, s1).unwrap());
            let bound = f.lipschitz_bound().unwrap();
            let scan = (0..=100_000)
                .map(|k| f.coefficient(0, k as f64 / 100_000.0).abs())
                .fold(0.0, f64::max);
            assert!(scan <= bound * (1.0 + 1e-12));
            assert!(scan >= bound * 0.999);
        }
    }

    #[test]
    fn endpoint_validation() {
        assert!(GaussianEndpoints::isotropic(2, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(GaussianEndpoints::new(vec![0.0], vec![1.0, 1.0], vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn coupling_field_is_constant() {
        let f = LinearCouplingField::from_slice(&[1.0, -2.0]).unwrap();
        let mut out = [0.0; 2];
        f.eval_into(&[5.0, 7.0], 0.3, None, &mut out).unwrap();
        assert_eq!(out, [1.0, -2.0]);
    }
}
