use crate::error::{Error, Result};
use crate::flows::check_time;

/// Linear-β variance-preserving schedule over diffusion time `s ∈ [0, 1]`,
/// with `s = 0` at the data end. Flow time `t` maps onto the clamped interior
/// `s ∈ [ε, 1-ε]`, reversed: `t = 0` is the noise end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    pub eps: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
            eps: 1e-3,
        }
    }
}

impl VpSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta_min > 0.0
            && self.beta_max >= self.beta_min
            && self.eps > 0.0
            && self.eps < 0.5
            && self.beta_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid VP schedule {self:?}")))
        }
    }

    fn check_s(&self, s: f64) -> Result<()> {
        if s > 0.0 && s <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("diffusion time {s} is at or beyond the singular endpoint")))
        }
    }

    pub fn beta(&self, s: f64) -> f64 {
        self.beta_min + s * (self.beta_max - self.beta_min)
    }

    pub fn log_alpha(&self, s: f64) -> f64 {
        -0.25 * s * s * (self.beta_max - self.beta_min) - 0.5 * s * self.beta_min
    }

    pub fn alpha(&self, s: f64) -> f64 {
        self.log_alpha(s).exp()
    }

    pub fn sigma(&self, s: f64) -> f64 {
        (-(2.0 * self.log_alpha(s)).exp_m1()).sqrt()
    }

    /// `(α(s), σ(s))`, rejecting the singular data endpoint.
    pub fn alpha_sigma(&self, s: f64) -> Result<(f64, f64)> {
        self.check_s(s)?;
        Ok((self.alpha(s), self.sigma(s)))
    }

    pub fn s_of_t(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok((1.0 - self.eps) - t * (1.0 - 2.0 * self.eps))
    }

    /// `ds/dt`, constant under the affine time map.
    pub fn ds_dt(&self) -> f64 {
        -(1.0 - 2.0 * self.eps)
    }
}
