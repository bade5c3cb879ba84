//! Forward and reverse integrators plus error diagnostics.

mod ddim;
mod diagnostics;
mod euler;

pub use ddim::{ddim_forward, ddim_inverse, ddim_step, ddpm_forward};
pub use diagnostics::{local_and_global_error, pcli_residual, roundtrip_bound, ErrorBudget, PcliReport};
pub use euler::{euler_forward, euler_inverse};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    EulerRf,
    Ddim,
    /// Ancestral sampling; extraction inverts it with DDIM on the same schedule.
    Ddpm,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::EulerRf, SamplerKind::Ddim, SamplerKind::Ddpm];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::EulerRf => "euler-rf",
            SamplerKind::Ddim => "ddim",
            SamplerKind::Ddpm => "ddpm",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "euler-rf" | "euler" | "rf" => Ok(SamplerKind::EulerRf),
            "ddim" => Ok(SamplerKind::Ddim),
            "ddpm" => Ok(SamplerKind::Ddpm),
            other => Err(Error::Config(format!("unknown sampler {other:?}"))),
        }
    }
}

pub(crate) fn finite_or(step: usize, v: &[f64]) -> crate::Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}
