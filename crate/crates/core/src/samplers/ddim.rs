//! DDIM and DDPM over a VP schedule, driven by a noise predictor.
//!
//! Grid node `n` sits at diffusion time `s_n = s(t_n)`, so a forward pass runs
//! from the noise end towards the data end. Recorded velocities are effective
//! displacements `(x_{n+1} - x_n) / Δt`.

use crate::error::{check_dim, Error, Result};
use crate::flows::{NoisePredictor, VpSchedule};
use crate::keyed::StegoKey;
use crate::latent::{Direction, LatentVector, TimeGrid, TrajectoryRecord};
use crate::samplers::finite_or;

/// Deterministic DDIM update from `(α, σ)` to `(α', σ')` with noise estimate `eps`:
/// `x' = α'·(x - σ·ε)/α + σ'·ε`.
pub fn ddim_step(x: &[f64], eps: &[f64], from: (f64, f64), to: (f64, f64)) -> Vec<f64> {
    let ((a, s), (a2, s2)) = (from, to);
    x.iter()
        .zip(eps)
        .map(|(xi, ei)| a2 * (xi - s * ei) / a + s2 * ei)
        .collect()
}

fn node_coeffs(schedule: &VpSchedule, grid: &TimeGrid) -> Result<Vec<(f64, f64)>> {
    schedule.validate()?;
    grid.nodes()
        .iter()
        .map(|&t| schedule.alpha_sigma(schedule.s_of_t(t)?))
        .collect()
}

fn record(states: Vec<LatentVector>, grid: &TimeGrid, direction: Direction) -> Result<TrajectoryRecord> {
    let dt = grid.dt();
    let velocities = states
        .windows(2)
        .map(|w| {
            let v = w[1].as_slice().iter().zip(w[0].as_slice()).map(|(b, a)| (b - a) / dt).collect();
            w[0].like(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryRecord {
        states,
        velocities,
        grid: grid.clone(),
        direction,
    })
}

pub fn ddim_forward<M: NoisePredictor + ?Sized>(
    x0: &LatentVector,
    model: &M,
    schedule: &VpSchedule,
    grid: &TimeGrid,
    label: Option<usize>,
) -> Result<TrajectoryRecord> {
    ddpm_forward(x0, model, schedule, grid, label, 0.0, None)
}

/// Naive inversion: the noise estimate for the step `n+1 -> n` is taken at the
/// known point `x̂_{n+1}`.
pub fn ddim_inverse<M: NoisePredictor + ?Sized>(
    x_end: &LatentVector,
    model: &M,
    schedule: &VpSchedule,
    grid: &TimeGrid,
    label: Option<usize>,
) -> Result<TrajectoryRecord> {
    check_dim(model.dim(), x_end.dim())?;
    let coeffs = node_coeffs(schedule, grid)?;
    let n = grid.n_steps();
    let mut states = vec![x_end.clone(); n + 1];
    let mut eps = vec![0.0; x_end.dim()];
    for step in (0..n).rev() {
        let s = schedule.s_of_t(grid.t(step + 1))?;
        let x = states[step + 1].as_slice();
        model.predict_into(x, s, label, &mut eps)?;
        let prev = ddim_step(x, &eps, coeffs[step + 1], coeffs[step]);
        finite_or(step, &prev)?;
        states[step] = x_end.like(prev)?;
    }
    record(states, grid, Direction::Reverse)
}

/// Ancestral sampling with noise scale `η` (1 = DDPM, 0 = DDIM). Fresh noise
/// for step `n`, coordinate `i` is the keyed normal at index `n·d + i`.
pub fn ddpm_forward<M: NoisePredictor + ?Sized>(
    x0: &LatentVector,
    model: &M,
    schedule: &VpSchedule,
    grid: &TimeGrid,
    label: Option<usize>,
    noise_scale: f64,
    noise_key: Option<&StegoKey>,
) -> Result<TrajectoryRecord> {
    check_dim(model.dim(), x0.dim())?;
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::Config(format!("noise scale {noise_scale} must be non-negative")));
    }
    if noise_scale > 0.0 && noise_key.is_none() {
        return Err(Error::Config("stochastic sampling needs a noise key".into()));
    }
    let coeffs = node_coeffs(schedule, grid)?;
    let d = x0.dim();
    let n = grid.n_steps();
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut eps = vec![0.0; d];
    for step in 0..n {
        let s = schedule.s_of_t(grid.t(step))?;
        let x = states[step].as_slice();
        model.predict_into(x, s, label, &mut eps)?;
        let (a, sg) = coeffs[step];
        let (a2, sg2) = coeffs[step + 1];
        let var = (noise_scale * noise_scale * (sg2 * sg2) / (sg * sg) * (1.0 - (a * a) / (a2 * a2))).max(0.0);
        let next = if var == 0.0 {
            ddim_step(x, &eps, (a, sg), (a2, sg2))
        } else {
            let dir = (sg2 * sg2 - var).max(0.0).sqrt();
            let key = noise_key.expect("checked above");
            let std = var.sqrt();
            x.iter()
                .zip(&eps)
                .enumerate()
                .map(|(i, (xi, ei))| {
                    let z = key.normal((step * d + i) as u64);
                    a2 * (xi - sg * ei) / a + dir * ei + std * z
                })
                .collect()
        };
        finite_or(step, &next)?;
        states.push(x0.like(next)?);
    }
    record(states, grid, Direction::Forward)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ConstNoise(Vec<f64>);

    impl NoisePredictor for ConstNoise {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn predict_into(&self, _x: &[f64], _s: f64, _l: Option<usize>, out: &mut [f64]) -> Result<()> {
            out.copy_from_slice(&self.0);
            Ok(())
        }
    }

    #[test]
    fn single_step_round_trip_with_constant_prediction() {
        let m = ConstNoise(vec![0.3, -1.1]);
        let sch = VpSchedule::default();
        let grid = TimeGrid::uniform(1).unwrap();
        let x0 = LatentVector::new(vec![0.7, -0.2]).unwrap();
        let fwd = ddim_forward(&x0, &m, &sch, &grid, None).unwrap();
        let back = ddim_inverse(fwd.end(), &m, &sch, &grid, None).unwrap();
        for (a, b) in back.start().as_slice().iter().zip(x0.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_scale_is_ddim() {
        let m = ConstNoise(vec![0.3, -1.1]);
        let sch = VpSchedule::default();
        let grid = TimeGrid::uniform(7).unwrap();
        let x0 = LatentVector::new(vec![0.7, -0.2]).unwrap();
        let key = StegoKey::from_seed(1, "noise");
        let a = ddim_forward(&x0, &m, &sch, &grid, None).unwrap();
        let b = ddpm_forward(&x0, &m, &sch, &grid, None, 0.0, Some(&key)).unwrap();
        assert_eq!(a.end(), b.end());
    }

    #[test]
    fn keyed_noise_is_reproducible() {
        let m = ConstNoise(vec![0.0; 3]);
        let sch = VpSchedule::default();
        let grid = TimeGrid::uniform(5).unwrap();
        let x0 = LatentVector::new(vec![0.1, 0.2, 0.3]).unwrap();
        let key = StegoKey::from_seed(9, "noise");
        let a = ddpm_forward(&x0, &m, &sch, &grid, None, 1.0, Some(&key)).unwrap();
        let b = ddpm_forward(&x0, &m, &sch, &grid, None, 1.0, Some(&key)).unwrap();
        assert_eq!(a.states, b.states);
        assert!(ddpm_forward(&x0, &m, &sch, &grid, None, 1.0, None).is_err());
    }
}
