//! Velocity fields and noise predictors.
//!
//! Time runs from `t = 0` (the message-bearing latent) to `t = 1` (the
//! output latent). Diffusion-style models are indexed by their own diffusion
//! time `s`, with `s = 0` at the data end; [`VpSchedule`] converts between the two.

mod analytic;
mod basis;
mod gmm;
mod guided;
mod schedule;

pub use analytic::{
    FnField, GaussianEndpoints, LinearCouplingField, LinearField, RfGaussianField, ShiftedField,
    StraightGaussianField,
};
pub use basis::{OrthoBasis, Rotated};
pub use gmm::{GmmSpec, GmmVpModel, RfGmmField, VpScoreField};
pub use guided::Guided;
pub use schedule::VpSchedule;

use std::sync::Arc;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::latent::LatentVector;

/// `(x, t, label) -> v`.
pub trait VelocityField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the velocity into `out`; `label = None` is the unconditional field.
    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()>;

    /// A declared Lipschitz constant in `x`, uniform over `t`, if one is known.
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    fn velocity(&self, x: &LatentVector, t: f64, label: Option<usize>) -> Result<LatentVector> {
        check_dim(self.dim(), x.dim())?;
        let mut out = vec![0.0; x.dim()];
        self.eval_into(x.as_slice(), t, label, &mut out)?;
        x.like(out)
    }
}

/// Noise prediction `ε(x, s, label)` at diffusion time `s`.
pub trait NoisePredictor: Send + Sync {
    fn dim(&self) -> usize;
    fn predict_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()>;
}

macro_rules! forward_impls {
    ($($ptr:ty),*) => {$(
        impl<F: VelocityField + ?Sized> VelocityField for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
                (**self).eval_into(x, t, label, out)
            }
            fn lipschitz_bound(&self) -> Option<f64> {
                (**self).lipschitz_bound()
            }
        }
    )*};
}
forward_impls!(&F, Box<F>, Arc<F>);

macro_rules! forward_noise_impls {
    ($($ptr:ty),*) => {$(
        impl<F: NoisePredictor + ?Sized> NoisePredictor for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn predict_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
                (**self).predict_into(x, s, label, out)
            }
        }
    )*};
}
forward_noise_impls!(&F, Box<F>, Arc<F>);

pub(crate) fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {t} outside [0, 1]")))
    }
}

pub(crate) fn check_io(dim: usize, x: &[f64], out: &[f64]) -> Result<()> {
    check_dim(dim, x.len())?;
    check_dim(dim, out.len())
}

/// Largest finite-difference slope `‖v(x)-v(y)‖ / ‖x-y‖` over random probe
/// pairs with `x ~ N(0, scale²)`, `y = x + h·u` and `t ~ U[0,1]`.
pub fn empirical_lipschitz<F: VelocityField + ?Sized, R: Rng>(
    field: &F,
    n_pairs: usize,
    scale: f64,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    let d = field.dim();
    let mut vx = vec![0.0; d];
    let mut vy = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for _ in 0..n_pairs {
        let x: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|xi| xi + h * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let t: f64 = rng.random();
        field.eval_into(&x, t, None, &mut vx)?;
        field.eval_into(&y, t, None, &mut vy)?;
        let num = l2_dist(&vx, &vy);
        let den = l2_dist(&x, &y);
        if den > 0.0 {
            worst = worst.max(num / den);
        }
    }
    Ok(worst)
}

pub(crate) fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
