use crate::error::{check_dim, Result};
use crate::flows::{NoisePredictor, VelocityField};

/// Guidance blend `u + w·(c - u)`.
///
/// `cond` is evaluated with the requested label and `uncond` without one.
/// At `w = 1` the conditional output is returned untouched.
#[derive(Debug, Clone)]
pub struct Guided<C, U> {
    pub cond: C,
    pub uncond: U,
    pub w: f64,
}

impl<C, U> Guided<C, U> {
    pub fn new(cond: C, uncond: U, w: f64) -> Self {
        Self { cond, uncond, w }
    }
}

fn blend(out: &mut [f64], uncond: &[f64], w: f64) {
    for (o, u) in out.iter_mut().zip(uncond) {
        *o = u + w * (*o - u);
    }
}

impl<C: VelocityField, U: VelocityField> VelocityField for Guided<C, U> {
    fn dim(&self) -> usize {
        self.cond.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_dim(self.cond.dim(), self.uncond.dim())?;
        self.cond.eval_into(x, t, label, out)?;
        if self.w == 1.0 {
            return Ok(());
        }
        let mut u = vec![0.0; out.len()];
        self.uncond.eval_into(x, t, None, &mut u)?;
        blend(out, &u, self.w);
        Ok(())
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        if self.w == 1.0 {
            return self.cond.lipschitz_bound();
        }
        let (c, u) = (self.cond.lipschitz_bound()?, self.uncond.lipschitz_bound()?);
        Some(self.w.abs() * c + (1.0 - self.w).abs() * u)
    }
}

impl<C: NoisePredictor, U: NoisePredictor> NoisePredictor for Guided<C, U> {
    fn dim(&self) -> usize {
        self.cond.dim()
    }

    fn predict_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_dim(self.cond.dim(), self.uncond.dim())?;
        self.cond.predict_into(x, s, label, out)?;
        if self.w == 1.0 {
            return Ok(());
        }
        let mut u = vec![0.0; out.len()];
        self.uncond.predict_into(x, s, None, &mut u)?;
        blend(out, &u, self.w);
        Ok(())
    }
}
