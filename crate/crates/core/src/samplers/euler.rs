use crate::error::{check_dim, Result};
use crate::flows::VelocityField;
use crate::latent::{Direction, LatentVector, TimeGrid, TrajectoryRecord};
use crate::samplers::finite_or;

/// `x_{n+1} = x_n + Δt·v(x_n, t_n)`.
pub fn euler_forward<F: VelocityField + ?Sized>(
    x0: &LatentVector,
    field: &F,
    grid: &TimeGrid,
    label: Option<usize>,
) -> Result<TrajectoryRecord> {
    check_dim(field.dim(), x0.dim())?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut states = Vec::with_capacity(n + 1);
    let mut velocities = Vec::with_capacity(n);
    states.push(x0.clone());
    let mut v = vec![0.0; x0.dim()];
    for step in 0..n {
        let x = states[step].as_slice();
        field.eval_into(x, grid.t(step), label, &mut v)?;
        finite_or(step, &v)?;
        let next: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + dt * vi).collect();
        finite_or(step, &next)?;
        velocities.push(x0.like(v.clone())?);
        states.push(x0.like(next)?);
    }
    Ok(TrajectoryRecord {
        states,
        velocities,
        grid: grid.clone(),
        direction: Direction::Forward,
    })
}

/// `x̂_n = x̂_{n+1} - Δt·v(x̂_{n+1}, t_{n+1})`, from `t = 1` down to `t = 0`.
pub fn euler_inverse<F: VelocityField + ?Sized>(
    x_end: &LatentVector,
    field: &F,
    grid: &TimeGrid,
    label: Option<usize>,
) -> Result<TrajectoryRecord> {
    check_dim(field.dim(), x_end.dim())?;
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut states = vec![x_end.clone(); n + 1];
    let mut velocities = vec![x_end.clone(); n];
    let mut v = vec![0.0; x_end.dim()];
    for step in (0..n).rev() {
        let x = states[step + 1].as_slice();
        field.eval_into(x, grid.t(step + 1), label, &mut v)?;
        finite_or(step, &v)?;
        let prev: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi - dt * vi).collect();
        finite_or(step, &prev)?;
        velocities[step] = x_end.like(v.clone())?;
        states[step] = x_end.like(prev)?;
    }
    Ok(TrajectoryRecord {
        states,
        velocities,
        grid: grid.clone(),
        direction: Direction::Reverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{FnField, LinearCouplingField, LinearField};
    use crate::Error;

    #[test]
    fn constant_field_lands_on_the_exact_endpoint() {
        let f = LinearCouplingField::from_slice(&[1.0, -2.0]).unwrap();
        let x0 = LatentVector::new(vec![0.0, 0.0]).unwrap();
        let tr = euler_forward(&x0, &f, &TimeGrid::uniform(4).unwrap(), None).unwrap();
        assert_eq!(tr.end().as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn compound_growth_on_linear_field() {
        let f = LinearField { dim: 1, a: 1.0 };
        let x0 = LatentVector::new(vec![1.0]).unwrap();
        let tr = euler_forward(&x0, &f, &TimeGrid::uniform(20).unwrap(), None).unwrap();
        // (1 + 1/20)^20
        assert!((tr.end().as_slice()[0] - 2.653_297_705_144_420_8).abs() < 1e-12);
    }

    #[test]
    fn replaying_recorded_velocities_is_bit_exact() {
        let f = FnField {
            dim: 3,
            f: |x: &[f64], t: f64, out: &mut [f64]| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = (xi * 1.3 + t).sin();
                }
            },
            lipschitz: None,
        };
        let x0 = LatentVector::new(vec![0.3, -1.2, 2.0]).unwrap();
        let grid = TimeGrid::uniform(17).unwrap();
        let tr = euler_forward(&x0, &f, &grid, None).unwrap();
        assert_eq!(tr.states.len(), 18);
        assert_eq!(tr.velocities.len(), 17);
        let mut x = x0.as_slice().to_vec();
        for (n, v) in tr.velocities.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(v.as_slice()) {
                *xi += grid.dt() * vi;
            }
            let rec = tr.states[n + 1].as_slice();
            assert!(x.iter().zip(rec).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn blow_up_reports_the_step() {
        let f = LinearField { dim: 1, a: 1e308 };
        let x0 = LatentVector::new(vec![1e10]).unwrap();
        let err = euler_forward(&x0, &f, &TimeGrid::uniform(5).unwrap(), None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 0 }));
    }
}
