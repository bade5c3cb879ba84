use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::flows::{check_io, NoisePredictor, VelocityField};

/// Orthonormal change of basis on a `rows x cols` grid: either the identity
/// or the separable 2-D DCT-II.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    rows: usize,
    cols: usize,
    kind: Kind,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Identity,
    Dct { cr: Vec<f64>, cc: Vec<f64> },
}

fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for j in 0..n {
            m[k * n + j] = scale * (PI * (2 * j + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

impl OrthoBasis {
    pub fn identity(dim: usize) -> Self {
        Self {
            rows: 1,
            cols: dim,
            kind: Kind::Identity,
        }
    }

    pub fn dct2(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape("DCT basis needs a non-empty grid".into()));
        }
        Ok(Self {
            rows,
            cols,
            kind: Kind::Dct {
                cr: dct_matrix(rows),
                cc: dct_matrix(cols),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Coefficients of `x` in this basis.
    pub fn analysis(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply(x, out, false)
    }

    /// Inverse of [`analysis`](Self::analysis).
    pub fn synthesis(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply(y, out, true)
    }

    fn apply(&self, x: &[f64], out: &mut [f64], inverse: bool) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), out.len())?;
        let (cr, cc) = match &self.kind {
            Kind::Identity => {
                out.copy_from_slice(x);
                return Ok(());
            }
            Kind::Dct { cr, cc } => (cr, cc),
        };
        let (r, c) = (self.rows, self.cols);
        // Forward: Cr X Ccᵀ. Inverse: Crᵀ Y Cc.
        let mut tmp = vec![0.0; r * c];
        for i in 0..r {
            for k in 0..c {
                let mut acc = 0.0;
                for n in 0..c {
                    let m = if inverse { cc[n * c + k] } else { cc[k * c + n] };
                    acc += x[i * c + n] * m;
                }
                tmp[i * c + k] = acc;
            }
        }
        for j in 0..r {
            for k in 0..c {
                let mut acc = 0.0;
                for i in 0..r {
                    let m = if inverse { cr[i * r + j] } else { cr[j * r + i] };
                    acc += m * tmp[i * c + k];
                }
                out[j * c + k] = acc;
            }
        }
        Ok(())
    }
}

/// A field defined in basis coordinates, presented in the original
/// coordinates: `v(x) = B·f(Bᵀx)`.
#[derive(Debug, Clone)]
pub struct Rotated<F> {
    pub inner: F,
    pub basis: OrthoBasis,
}

impl<F> Rotated<F> {
    pub fn new(inner: F, basis: OrthoBasis) -> Self {
        Self { inner, basis }
    }

    fn through(
        &self,
        x: &[f64],
        out: &mut [f64],
        f: impl FnOnce(&[f64], &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        check_io(self.basis.dim(), x, out)?;
        let mut y = vec![0.0; x.len()];
        self.basis.analysis(x, &mut y)?;
        let mut vy = vec![0.0; x.len()];
        f(&y, &mut vy)?;
        self.basis.synthesis(&vy, out)
    }
}

impl<F: VelocityField> VelocityField for Rotated<F> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        self.through(x, out, |y, v| self.inner.eval_into(y, t, label, v))
    }

    fn lipschitz_bound(&self) -> Option<f64> {
        self.inner.lipschitz_bound()
    }
}

impl<F: NoisePredictor> NoisePredictor for Rotated<F> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn predict_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        self.through(x, out, |y, e| self.inner.predict_into(y, s, label, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dct_is_orthonormal_and_invertible() {
        let b = OrthoBasis::dct2(4, 6).unwrap();
        let x: Vec<f64> = (0..24).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut y = vec![0.0; 24];
        let mut back = vec![0.0; 24];
        b.analysis(&x, &mut y).unwrap();
        b.synthesis(&y, &mut back).unwrap();
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let ny: f64 = y.iter().map(|v| v * v).sum();
        assert!((nx - ny).abs() < 1e-10);
        for (a, c) in x.iter().zip(&back) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_grid_has_a_single_dc_coefficient() {
        let b = OrthoBasis::dct2(4, 4).unwrap();
        let mut y = vec![0.0; 16];
        b.analysis(&[1.0; 16], &mut y).unwrap();
        assert!((y[0] - 4.0).abs() < 1e-12);
        assert!(y[1..].iter().all(|v| v.abs() < 1e-12));
    }
}
