use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A distribution distance between two sample sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub value: f64,
    /// A covariance was singular and got a `1e-6` ridge.
    pub regularized: bool,
}

const MIN_SAMPLES: usize = 100;

fn check_sets(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.len() < MIN_SAMPLES || b.len() < MIN_SAMPLES {
        return Err(Error::Config(format!("need at least {MIN_SAMPLES} samples per set")));
    }
    let d = a[0].len();
    if d == 0 || a.iter().chain(b).any(|v| v.len() != d) {
        return Err(Error::DimMismatch { expected: d, got: 0 });
    }
    Ok(d)
}

fn gaussian_fit(rows: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mut m = DVector::zeros(d);
    for r in rows {
        m += DVector::from_column_slice(r);
    }
    m /= rows.len() as f64;
    let mut c = DMatrix::zeros(d, d);
    for r in rows {
        let x = DVector::from_column_slice(r) - &m;
        c.ger(1.0, &x, &x, 1.0);
    }
    c /= (rows.len() - 1) as f64;
    (m, c)
}

fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

fn ridge_if_singular(c: &mut DMatrix<f64>) -> bool {
    let eig = c.clone().symmetric_eigenvalues();
    let top = eig.iter().cloned().fold(0.0, f64::max);
    let low = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if low <= 1e-12 * top.max(1e-300) {
        *c += DMatrix::identity(c.nrows(), c.ncols()) * 1e-6;
        true
    } else {
        false
    }
}

/// Squared Fréchet distance between Gaussian fits of two sample sets:
/// `‖μa - μb‖² + tr(Σa + Σb - 2(Σa^½ Σb Σa^½)^½)`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DistanceReport> {
    let d = check_sets(a, b)?;
    let (ma, mut ca) = gaussian_fit(a, d);
    let (mb, mut cb) = gaussian_fit(b, d);
    let regularized = ridge_if_singular(&mut ca) | ridge_if_singular(&mut cb);
    let root_a = psd_sqrt(ca.clone());
    let mut inner = &root_a * &cb * &root_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = inner.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
    let value = (&ma - &mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(DistanceReport {
        value: value.max(0.0),
        regularized,
    })
}

fn mean_pairwise(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in a {
        for y in b {
            total += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Energy distance `2E‖X-Y‖ - E‖X-X'‖ - E‖Y-Y'‖` with V-statistics.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<DistanceReport> {
    check_sets(a, b)?;
    let value = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
    Ok(DistanceReport {
        value: value.max(0.0),
        regularized: false,
    })
}
