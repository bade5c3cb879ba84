use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::flows::{check_io, check_time, NoisePredictor, VelocityField, VpSchedule};

/// Gaussian mixture with diagonal component covariances and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Per-component, per-dimension standard deviations.
    pub stds: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

impl GmmSpec {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stds: Vec<Vec<f64>>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let spec = Self {
            weights,
            means,
            stds,
            labels,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One scalar std per component.
    pub fn isotropic(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        stds: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let d = means.first().map_or(0, Vec::len);
        let stds = stds.into_iter().map(|s| vec![s; d]).collect();
        Self::new(weights, means, stds, labels)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        check_dim(k, self.means.len())?;
        check_dim(k, self.stds.len())?;
        if let Some(l) = &self.labels {
            check_dim(k, l.len())?;
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        let d = self.means[0].len();
        if d == 0 {
            return Err(Error::Config("mixture dimension must be positive".into()));
        }
        for (m, s) in self.means.iter().zip(&self.stds) {
            check_dim(d, m.len())?;
            check_dim(d, s.len())?;
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) || m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("component stds must be positive and means finite".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Components carrying `label`, or all of them for `None`.
    pub fn components(&self, label: Option<usize>) -> Result<Vec<usize>> {
        let all = 0..self.n_components();
        match (label, &self.labels) {
            (None, _) => Ok(all.collect()),
            (Some(l), Some(labels)) => {
                let ks: Vec<usize> = all.filter(|&k| labels[k] == l).collect();
                if ks.is_empty() {
                    Err(Error::Domain(format!("no mixture component carries label {l}")))
                } else {
                    Ok(ks)
                }
            }
            (Some(l), None) => Err(Error::Domain(format!("label {l} requested from an unlabeled mixture"))),
        }
    }

    pub fn label_set(&self) -> Vec<usize> {
        let mut ls = self.labels.clone().unwrap_or_default();
        ls.sort_unstable();
        ls.dedup();
        ls
    }

    /// Draws one sample, optionally restricted to a label.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, label: Option<usize>) -> Result<Vec<f64>> {
        let ks = self.components(label)?;
        let w: Vec<f64> = ks.iter().map(|&k| self.weights[k]).collect();
        let pick = WeightedIndex::new(&w).map_err(|e| Error::Config(e.to_string()))?;
        let k = ks[pick.sample(rng)];
        Ok(self.means[k]
            .iter()
            .zip(&self.stds[k])
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += w * v;
            }
        }
        out
    }
}

fn label_sets(gmm: &GmmSpec) -> Vec<(Option<usize>, Vec<usize>)> {
    let mut sets = vec![(None, gmm.components(None).expect("unconditional set"))];
    for l in gmm.label_set() {
        sets.push((Some(l), gmm.components(Some(l)).expect("label from the mixture")));
    }
    sets
}

fn lookup<'a>(sets: &'a [(Option<usize>, Vec<usize>)], label: Option<usize>) -> Result<&'a [usize]> {
    sets.iter()
        .find(|(l, _)| *l == label)
        .map(|(_, ks)| ks.as_slice())
        .ok_or_else(|| Error::Domain(format!("no mixture component carries label {label:?}")))
}

/// Posterior component weights for a diagonal Gaussian mixture whose
/// component `k` has mean `center(k, i)` and variance `var(k, i)` in dimension `i`.
fn posterior(
    x: &[f64],
    ks: &[usize],
    weights: &[f64],
    center: impl Fn(usize, usize) -> f64,
    var: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let mut logs: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let mut acc = weights[k].ln();
            for (i, xi) in x.iter().enumerate() {
                let v = var(k, i);
                let diff = xi - center(k, i);
                acc -= 0.5 * (diff * diff / v + v.ln());
            }
            acc
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - top).exp();
        total += *l;
    }
    for l in logs.iter_mut() {
        *l /= total;
    }
    logs
}

/// Exact marginal rectified-flow field from a standard-normal prior to a
/// Gaussian mixture under the independent coupling.
#[derive(Debug, Clone)]
pub struct RfGmmField {
    gmm: GmmSpec,
    sets: Vec<(Option<usize>, Vec<usize>)>,
}

impl RfGmmField {
    pub fn new(gmm: GmmSpec) -> Result<Self> {
        gmm.validate()?;
        let sets = label_sets(&gmm);
        Ok(Self { gmm, sets })
    }

    pub fn gmm(&self) -> &GmmSpec {
        &self.gmm
    }
}

impl VelocityField for RfGmmField {
    fn dim(&self) -> usize {
        self.gmm.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.dim(), x, out)?;
        check_time(t)?;
        let g = &self.gmm;
        let ks = lookup(&self.sets, label)?;
        let u = 1.0 - t;
        let var = |k: usize, i: usize| u * u + t * t * g.stds[k][i].powi(2);
        let r = posterior(x, ks, &g.weights, |k, i| t * g.means[k][i], var);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&k, rk) in ks.iter().zip(&r) {
            if *rk == 0.0 {
                continue;
            }
            for i in 0..x.len() {
                let b = g.stds[k][i].powi(2);
                let mu = g.means[k][i];
                let c = (t * b - u) / var(k, i);
                out[i] += rk * (mu + c * (x[i] - t * mu));
            }
        }
        Ok(())
    }
}

/// A Gaussian mixture diffused by a VP schedule, with its exact score.
#[derive(Debug, Clone)]
pub struct GmmVpModel {
    gmm: GmmSpec,
    schedule: VpSchedule,
    sets: Vec<(Option<usize>, Vec<usize>)>,
}

impl GmmVpModel {
    pub fn new(gmm: GmmSpec, schedule: VpSchedule) -> Result<Self> {
        gmm.validate()?;
        schedule.validate()?;
        let sets = label_sets(&gmm);
        Ok(Self { gmm, schedule, sets })
    }

    pub fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }

    pub fn gmm(&self) -> &GmmSpec {
        &self.gmm
    }

    /// Component posteriors of the diffused mixture at diffusion time `s`.
    pub fn responsibilities(&self, x: &[f64], s: f64, label: Option<usize>) -> Result<Vec<f64>> {
        check_dim(self.gmm.dim(), x.len())?;
        let (a, sg) = self.schedule.alpha_sigma(s)?;
        let g = &self.gmm;
        let ks = lookup(&self.sets, label)?;
        Ok(posterior(
            x,
            ks,
            &g.weights,
            |k, i| a * g.means[k][i],
            |k, i| a * a * g.stds[k][i].powi(2) + sg * sg,
        ))
    }

    /// `∇ log p_s(x)`.
    pub fn score_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        check_io(self.gmm.dim(), x, out)?;
        let (a, sg) = self.schedule.alpha_sigma(s)?;
        let g = &self.gmm;
        let ks = lookup(&self.sets, label)?;
        let r = self.responsibilities(x, s, label)?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&k, rk) in ks.iter().zip(&r) {
            if *rk == 0.0 {
                continue;
            }
            for i in 0..x.len() {
                let v = a * a * g.stds[k][i].powi(2) + sg * sg;
                out[i] -= rk * (x[i] - a * g.means[k][i]) / v;
            }
        }
        Ok(())
    }
}

impl NoisePredictor for GmmVpModel {
    fn dim(&self) -> usize {
        self.gmm.dim()
    }

    /// `ε = -σ(s)·∇ log p_s(x)`.
    fn predict_into(&self, x: &[f64], s: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        self.score_into(x, s, label, out)?;
        let sg = self.schedule.sigma(s);
        out.iter_mut().for_each(|o| *o *= -sg);
        Ok(())
    }
}

/// Probability-flow velocity of a diffused mixture, expressed in flow time.
#[derive(Debug, Clone)]
pub struct VpScoreField {
    model: GmmVpModel,
}

impl VpScoreField {
    pub fn new(model: GmmVpModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &GmmVpModel {
        &self.model
    }
}

impl VelocityField for VpScoreField {
    fn dim(&self) -> usize {
        self.model.gmm.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, label: Option<usize>, out: &mut [f64]) -> Result<()> {
        let sch = &self.model.schedule;
        let s = sch.s_of_t(t)?;
        self.model.score_into(x, s, label, out)?;
        // dx/ds = -β/2 (x + score); chain through ds/dt.
        let k = -0.5 * sch.beta(s) * sch.ds_dt();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = k * (xi + *o);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(GmmSpec::isotropic(vec![0.5, 0.4], vec![vec![0.0], vec![1.0]], vec![1.0, 1.0], None).is_err());
        assert!(GmmSpec::isotropic(vec![1.0], vec![vec![0.0]], vec![0.0], None).is_err());
        assert!(GmmSpec::isotropic(vec![1.0], vec![vec![0.0]], vec![1.0], Some(vec![0, 1])).is_err());
    }

    #[test]
    fn label_restriction() {
        let g = GmmSpec::isotropic(
            vec![0.25, 0.25, 0.5],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![1.0; 3],
            Some(vec![1, 0, 1]),
        )
        .unwrap();
        assert_eq!(g.components(Some(1)).unwrap(), vec![0, 2]);
        assert_eq!(g.components(None).unwrap(), vec![0, 1, 2]);
        assert!(g.components(Some(7)).is_err());
        assert_eq!(g.label_set(), vec![0, 1]);
    }

    #[test]
    fn single_component_rf_matches_gaussian_closed_form() {
        use crate::flows::{GaussianEndpoints, RfGaussianField};
        let g = GmmSpec::new(vec![1.0], vec![vec![1.5, -2.0]], vec![vec![0.3, 2.0]], None).unwrap();
        let rf = RfGmmField::new(g).unwrap();
        let ep = GaussianEndpoints::new(vec![0.0; 2], vec![1.0; 2], vec![1.5, -2.0], vec![0.3, 2.0]).unwrap();
        let gauss = RfGaussianField::new(ep);
        for &t in &[0.0, 0.2, 0.7, 1.0] {
            let x = [0.4, -1.1];
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            rf.eval_into(&x, t, None, &mut a).unwrap();
            gauss.eval_into(&x, t, None, &mut b).unwrap();
            for i in 0..2 {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }
}
