use crate::error::{Error, Result};
use crate::flows::{l2_dist, VelocityField};
use crate::latent::{Direction, TrajectoryRecord};
use crate::samplers::euler_inverse;

#[derive(Debug, Clone, PartialEq)]
pub struct PcliReport {
    /// `r_n = ‖v(x_n, t_n) - v(x_{n+1}, t_{n+1})‖`.
    pub residuals: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// Velocity mismatch between the two ends of every step of a forward trajectory.
pub fn pcli_residual<F: VelocityField + ?Sized>(
    traj: &TrajectoryRecord,
    field: &F,
    label: Option<usize>,
) -> Result<PcliReport> {
    let d = traj.start().dim();
    let grid = &traj.grid;
    let mut prev = vec![0.0; d];
    let mut next = vec![0.0; d];
    field.eval_into(traj.states[0].as_slice(), grid.t(0), label, &mut prev)?;
    let mut residuals = Vec::with_capacity(grid.n_steps());
    for n in 0..grid.n_steps() {
        field.eval_into(traj.states[n + 1].as_slice(), grid.t(n + 1), label, &mut next)?;
        residuals.push(l2_dist(&prev, &next));
        std::mem::swap(&mut prev, &mut next);
    }
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
    Ok(PcliReport { residuals, max, mean })
}

/// `N·Δt·e^{L}·max_n r_n`, which bounds the Euler forward/reverse round-trip
/// error of a field with Lipschitz constant `L`.
pub fn roundtrip_bound(report: &PcliReport, n_steps: usize, lipschitz: f64) -> f64 {
    let dt = 1.0 / n_steps as f64;
    n_steps as f64 * dt * lipschitz.exp() * report.max
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    /// Per-step local error `‖v_used - v_oracle‖` at the points the subject visited.
    pub deltas: Vec<f64>,
    /// `Δt·Σδ_n`.
    pub weighted_sum: f64,
    /// `e^{L·T}` with `T = 1`.
    pub amplification: f64,
    pub bound: f64,
    /// Distance between the subject's recovered start and the oracle's.
    pub measured: f64,
    pub holds: bool,
}

/// Compares a reverse trajectory of some subject field against an oracle field
/// inverted from the same end point. The measured deviation of the recovered
/// starts is checked against `e^{L}·Δt·Σδ_n`, allowing only rounding slack.
pub fn local_and_global_error<F: VelocityField + ?Sized>(
    subject: &TrajectoryRecord,
    oracle: &F,
    label: Option<usize>,
    lipschitz: Option<f64>,
) -> Result<ErrorBudget> {
    if subject.direction != Direction::Reverse {
        return Err(Error::Config("error budget needs a reverse trajectory".into()));
    }
    let lip = lipschitz
        .or_else(|| oracle.lipschitz_bound())
        .ok_or_else(|| Error::Unsupported("oracle has no Lipschitz bound; supply one".into()))?;
    let grid = &subject.grid;
    let d = subject.start().dim();
    let mut v = vec![0.0; d];
    let mut deltas = Vec::with_capacity(grid.n_steps());
    for n in 0..grid.n_steps() {
        oracle.eval_into(subject.states[n + 1].as_slice(), grid.t(n + 1), label, &mut v)?;
        deltas.push(l2_dist(subject.velocities[n].as_slice(), &v));
    }
    let reference = euler_inverse(subject.end(), oracle, grid, label)?;
    let measured = l2_dist(subject.start().as_slice(), reference.start().as_slice());
    let weighted_sum = grid.dt() * deltas.iter().sum::<f64>();
    let amplification = lip.exp();
    let bound = amplification * weighted_sum;
    let slack = 1e-12 * bound + 1e-14 * (1.0 + subject.end().as_slice().iter().map(|x| x.abs()).fold(0.0, f64::max));
    Ok(ErrorBudget {
        holds: measured <= bound + slack,
        deltas,
        weighted_sum,
        amplification,
        bound,
        measured,
    })
}
