//! Lossy post-processing between sender and receiver.
//!
//! Grid distortions read the latent's `(rows, cols)` shape in row-major order
//! and pad by reflection without repeating the edge sample.

use crate::error::{Error, Result};
use crate::keyed::StegoKey;
use crate::latent::LatentVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    GaussianNoise { std: f64 },
    /// Uniform quantization to `2^bits` levels on `[lo, hi]`, dequantized to bin centers.
    Quantize { bits: u32, lo: f64, hi: f64 },
    MedianBlur { k: usize },
    GaussianBlur { k: usize },
    /// Bilinear resample to `scale` times the grid size and back.
    Resize { scale: f64 },
}

impl Distortion {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distortion::GaussianNoise { std } => std >= 0.0 && std.is_finite(),
            Distortion::Quantize { bits, lo, hi } => (1..=16).contains(&bits) && lo < hi && lo.is_finite() && hi.is_finite(),
            Distortion::MedianBlur { k } | Distortion::GaussianBlur { k } => k % 2 == 1,
            Distortion::Resize { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distortion {self:?}")))
        }
    }

    pub fn needs_grid(&self) -> bool {
        matches!(
            self,
            Distortion::MedianBlur { .. } | Distortion::GaussianBlur { .. } | Distortion::Resize { .. }
        )
    }

    /// Short stable label, e.g. `noise(0.05)`.
    pub fn label(&self) -> String {
        match *self {
            Distortion::GaussianNoise { std } => format!("noise({std})"),
            Distortion::Quantize { bits, .. } => format!("quant({bits})"),
            Distortion::MedianBlur { k } => format!("median({k})"),
            Distortion::GaussianBlur { k } => format!("gblur({k})"),
            Distortion::Resize { scale } => format!("resize({scale})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelSpec {
    pub distortions: Vec<Distortion>,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn new(distortions: Vec<Distortion>, seed: u64) -> Self {
        Self { distortions, seed }
    }

    pub fn label(&self) -> String {
        if self.distortions.is_empty() {
            "lossless".into()
        } else {
            self.distortions.iter().map(Distortion::label).collect::<Vec<_>>().join("+")
        }
    }
}

pub fn codec_roundtrip(x: &LatentVector, bits: u32, lo: f64, hi: f64) -> Result<LatentVector> {
    if !(lo < hi) {
        return Err(Error::Config(format!("codec range [{lo}, {hi}] is empty")));
    }
    Distortion::Quantize { bits, lo, hi }.validate()?;
    x.like(quantize(x.as_slice(), bits, lo, hi))
}

fn quantize(x: &[f64], bits: u32, lo: f64, hi: f64) -> Vec<f64> {
    let levels = 1u64 << bits;
    let h = (hi - lo) / levels as f64;
    let top = (levels - 1) as f64;
    x.iter()
        .map(|&v| {
            let idx = ((v.clamp(lo, hi) - lo) / h).floor().clamp(0.0, top);
            lo + (idx + 0.5) * h
        })
        .collect()
}

pub fn apply_channel(x: &LatentVector, spec: &ChannelSpec) -> Result<LatentVector> {
    let mut cur = x.as_slice().to_vec();
    let root = StegoKey::from_seed(spec.seed, "channel");
    for (pos, dist) in spec.distortions.iter().enumerate() {
        dist.validate()?;
        let grid = || {
            x.shape().ok_or_else(|| {
                Error::Shape(format!("{} needs a grid-shaped latent", dist.label()))
            })
        };
        cur = match *dist {
            Distortion::GaussianNoise { std } => {
                let key = root.child("noise", pos as u64);
                cur.iter()
                    .enumerate()
                    .map(|(i, v)| v + std * key.normal(i as u64))
                    .collect()
            }
            Distortion::Quantize { bits, lo, hi } => quantize(&cur, bits, lo, hi),
            Distortion::MedianBlur { k } => median_blur(&cur, grid()?, k),
            Distortion::GaussianBlur { k } => gaussian_blur(&cur, grid()?, k),
            Distortion::Resize { scale } => resize_round_trip(&cur, grid()?, scale),
        };
    }
    x.like(cur)
}

fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

fn median_blur(x: &[f64], (rows, cols): (usize, usize), k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut window = Vec::with_capacity(k * k);
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            window.clear();
            for di in -r..=r {
                for dj in -r..=r {
                    let (a, b) = (reflect(i as isize + di, rows), reflect(j as isize + dj, cols));
                    window.push(x[a * cols + b]);
                }
            }
            window.sort_by(|a, b| a.total_cmp(b));
            out[i * cols + j] = window[window.len() / 2];
        }
    }
    out
}

/// Normalized kernel with the usual size-derived width `0.3·((k-1)/2 - 1) + 0.8`.
fn gaussian_kernel(k: usize) -> Vec<f64> {
    let sigma = 0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let c = (k / 2) as f64;
    let w: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn gaussian_blur(x: &[f64], (rows, cols): (usize, usize), k: usize) -> Vec<f64> {
    let w = gaussian_kernel(k);
    let r = (k / 2) as isize;
    let mut tmp = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            tmp[i * cols + j] = (-r..=r)
                .map(|d| w[(d + r) as usize] * x[i * cols + reflect(j as isize + d, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = (-r..=r)
                .map(|d| w[(d + r) as usize] * tmp[reflect(i as isize + d, rows) * cols + j])
                .sum();
        }
    }
    out
}

/// Bilinear resampling with half-pixel centers and clamped borders.
fn bilinear(x: &[f64], (sr, sc): (usize, usize), (dr, dc): (usize, usize)) -> Vec<f64> {
    let coord = |o: usize, src: usize, dst: usize| {
        let f = ((o as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
        let i0 = f.floor() as usize;
        let i1 = (i0 + 1).min(src - 1);
        (i0, i1, f - i0 as f64)
    };
    let mut out = vec![0.0; dr * dc];
    for i in 0..dr {
        let (y0, y1, fy) = coord(i, sr, dr);
        for j in 0..dc {
            let (x0, x1, fx) = coord(j, sc, dc);
            let top = x[y0 * sc + x0] * (1.0 - fx) + x[y0 * sc + x1] * fx;
            let bot = x[y1 * sc + x0] * (1.0 - fx) + x[y1 * sc + x1] * fx;
            out[i * dc + j] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

fn resize_round_trip(x: &[f64], shape: (usize, usize), scale: f64) -> Vec<f64> {
    let size = |n: usize| ((n as f64 * scale).round() as usize).max(1);
    let mid = (size(shape.0), size(shape.1));
    bilinear(&bilinear(x, shape, mid), mid, shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>, r: usize, c: usize) -> LatentVector {
        LatentVector::with_shape(values, r, c).unwrap()
    }

    #[test]
    fn half_bin_bound_and_idempotence() {
        let x = LatentVector::new((0..1000).map(|i| -7.9 + 0.0158 * i as f64).collect()).unwrap();
        let q = codec_roundtrip(&x, 16, -8.0, 8.0).unwrap();
        let half = 16.0 / 65536.0 / 2.0;
        for (a, b) in x.as_slice().iter().zip(q.as_slice()) {
            assert!((a - b).abs() <= half * (1.0 + 1e-12));
        }
        let qq = codec_roundtrip(&q, 16, -8.0, 8.0).unwrap();
        assert!(q.as_slice().iter().zip(qq.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(codec_roundtrip(&x, 8, 1.0, 1.0).is_err());
        assert!(codec_roundtrip(&x, 17, -1.0, 1.0).is_err());
    }

    #[test]
    fn empty_channel_is_identity() {
        let x = grid((0..16).map(f64::from).collect(), 4, 4);
        assert_eq!(apply_channel(&x, &ChannelSpec::lossless()).unwrap(), x);
    }

    #[test]
    fn median_of_a_constant_grid() {
        let x = grid(vec![0.37; 64], 8, 8);
        for k in [3, 5, 7] {
            let spec = ChannelSpec::new(vec![Distortion::MedianBlur { k }], 0);
            assert_eq!(apply_channel(&x, &spec).unwrap(), x);
        }
    }

    #[test]
    fn blur_and_resize_preserve_constants() {
        let x = grid(vec![-1.25; 64], 8, 8);
        for d in [
            Distortion::GaussianBlur { k: 5 },
            Distortion::Resize { scale: 0.5 },
            Distortion::Resize { scale: 1.5 },
        ] {
            let y = apply_channel(&x, &ChannelSpec::new(vec![d], 0)).unwrap();
            assert!(y.as_slice().iter().all(|v| (v + 1.25).abs() < 1e-12), "{d:?}");
        }
    }

    #[test]
    fn median_removes_an_isolated_spike() {
        let mut v = vec![0.0; 25];
        v[12] = 9.0;
        let y = apply_channel(&grid(v, 5, 5), &ChannelSpec::new(vec![Distortion::MedianBlur { k: 3 }], 0)).unwrap();
        assert!(y.as_slice().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn grid_distortions_need_a_shape() {
        let x = LatentVector::new(vec![0.0; 16]).unwrap();
        let spec = ChannelSpec::new(vec![Distortion::GaussianBlur { k: 3 }], 0);
        assert!(matches!(apply_channel(&x, &spec), Err(Error::Shape(_))));
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 1), 0);
    }
}
