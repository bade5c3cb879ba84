use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Per-class sample counts for the three disjoint splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionSplit {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl DetectionSplit {
    /// 8:1:1 split of `per_class` samples.
    pub fn ratio_8_1_1(per_class: usize) -> Self {
        let val = per_class / 10;
        Self {
            train: per_class - 2 * val,
            val,
            test: val,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
    pub threshold: f64,
    /// The pooled covariance needed a ridge before it could be inverted.
    pub regularized: bool,
}

/// Trains a whitened mean-difference (Fisher) detector on the training split,
/// picks the threshold minimizing the error on the validation split, and
/// reports `P_E = (P_FA + P_MD) / 2` on the test split. Samples are used in
/// the given order: train first, then validation, then test.
pub fn detection_error(cover: &[Vec<f64>], stego: &[Vec<f64>], split: DetectionSplit) -> Result<DetectionReport> {
    let (nc, ns) = (cover.len(), stego.len());
    if nc.abs_diff(ns) as f64 > 0.1 * nc.max(ns) as f64 {
        return Err(Error::Config(format!("class imbalance {nc} vs {ns} exceeds 10%")));
    }
    if nc.min(ns) < split.total() || split.train < 2 || split.val == 0 || split.test == 0 {
        return Err(Error::Config(format!("split {split:?} does not fit {nc}+{ns} samples")));
    }
    let d = cover[0].len();
    if cover.iter().chain(stego).any(|v| v.len() != d) {
        return Err(Error::DimMismatch { expected: d, got: 0 });
    }

    let tr = split.train;
    let mean = |rows: &[Vec<f64>]| {
        let mut m = DVector::zeros(d);
        for r in rows {
            m += DVector::from_column_slice(r);
        }
        m / rows.len() as f64
    };
    let (mc, ms) = (mean(&cover[..tr]), mean(&stego[..tr]));
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (rows, m) in [(&cover[..tr], &mc), (&stego[..tr], &ms)] {
        for r in rows {
            let c = DVector::from_column_slice(r) - m;
            cov.ger(1.0, &c, &c, 1.0);
        }
    }
    cov /= (2 * tr - 2) as f64;
    let diff = &ms - &mc;
    let (w, regularized) = match cov.clone().cholesky() {
        Some(ch) => (ch.solve(&diff), false),
        None => {
            let ridge = 1e-6 * (cov.trace() / d as f64).max(1e-300);
            let ch = (cov + DMatrix::identity(d, d) * ridge)
                .cholesky()
                .ok_or_else(|| Error::Domain("covariance is singular even after ridge".into()))?;
            (ch.solve(&diff), true)
        }
    };
    let score = |r: &Vec<f64>| w.dot(&DVector::from_column_slice(r));

    let val = tr..tr + split.val;
    let sc: Vec<f64> = cover[val.clone()].iter().map(score).collect();
    let ss: Vec<f64> = stego[val].iter().map(score).collect();
    let threshold = best_threshold(&sc, &ss);

    let test = tr + split.val..split.total();
    let p_fa = cover[test.clone()].iter().filter(|r| score(r) > threshold).count() as f64 / split.test as f64;
    let p_md = stego[test].iter().filter(|r| score(r) <= threshold).count() as f64 / split.test as f64;
    Ok(DetectionReport {
        p_fa,
        p_md,
        p_e: 0.5 * (p_fa + p_md),
        threshold,
        regularized,
    })
}

/// Threshold `θ` (rule: stego iff score > θ) minimizing the balanced error.
/// Ties resolve to the middle of the first run of optimal candidates.
fn best_threshold(cover: &[f64], stego: &[f64]) -> f64 {
    let mut all: Vec<f64> = cover.iter().chain(stego).cloned().collect();
    all.sort_by(|a, b| a.total_cmp(b));
    let mut candidates = vec![all[0] - 1.0];
    candidates.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(all[all.len() - 1] + 1.0);
    let err = |th: f64| {
        let fa = cover.iter().filter(|&&s| s > th).count() as f64 / cover.len() as f64;
        let md = stego.iter().filter(|&&s| s <= th).count() as f64 / stego.len() as f64;
        0.5 * (fa + md)
    };
    let errs: Vec<f64> = candidates.iter().map(|&th| err(th)).collect();
    let lowest = errs.iter().cloned().fold(f64::INFINITY, f64::min);
    let first = errs.iter().position(|&e| e == lowest).unwrap_or(0);
    let run = errs[first..].iter().take_while(|&&e| e == lowest).count();
    let (lo, hi) = (candidates[first], candidates[first + run - 1]);
    0.5 * (lo + hi)
}
