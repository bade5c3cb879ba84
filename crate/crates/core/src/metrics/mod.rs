//! Evaluation metrics and small statistics helpers.

mod detection;
mod distance;
mod stats;

pub use detection::{detection_error, DetectionReport, DetectionSplit};
pub use distance::{energy_distance, frechet_distance, DistanceReport};
pub use stats::{ks_statistic, MeanSe};

use crate::error::{check_dim, Error, Result};
use crate::latent::{LatentVector, Message, TrajectoryRecord};

/// `1 - hamming(m, m_hat) / L`.
pub fn extraction_accuracy(m: &Message, m_hat: &Message) -> Result<f64> {
    check_dim(m.len(), m_hat.len())?;
    let wrong = m.bits().iter().zip(m_hat.bits()).filter(|(a, b)| a != b).count();
    Ok(1.0 - wrong as f64 / m.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionError {
    pub l2: f64,
    pub linf: f64,
    pub per_dim: Vec<f64>,
}

pub fn inversion_error(x0: &LatentVector, x0_hat: &LatentVector) -> Result<InversionError> {
    check_dim(x0.dim(), x0_hat.dim())?;
    let per_dim: Vec<f64> = x0
        .as_slice()
        .iter()
        .zip(x0_hat.as_slice())
        .map(|(a, b)| (a - b).abs())
        .collect();
    Ok(InversionError {
        l2: per_dim.iter().map(|e| e * e).sum::<f64>().sqrt(),
        linf: per_dim.iter().cloned().fold(0.0, f64::max),
        per_dim,
    })
}

/// Mean distance of the interior nodes from the chord between the endpoints,
/// relative to the chord length. Zero when the endpoints coincide.
pub fn straightness(traj: &TrajectoryRecord) -> Result<f64> {
    let n = traj.grid.n_steps();
    if n < 2 {
        return Err(Error::Config("straightness needs at least two steps".into()));
    }
    let (a, b) = (traj.start().as_slice(), traj.end().as_slice());
    let chord = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
    if chord == 0.0 {
        return Ok(0.0);
    }
    let total: f64 = (1..n)
        .map(|k| {
            let t = traj.grid.t(k);
            traj.states[k]
                .as_slice()
                .iter()
                .zip(a.iter().zip(b))
                .map(|(x, (x0, x1))| {
                    let dev = x - ((1.0 - t) * x0 + t * x1);
                    dev * dev
                })
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / ((n - 1) as f64 * chord))
}
