//! The synthetic benchmark distribution and the fields derived from it.
//!
//! Data live on a `rows x cols` grid. In DCT coefficients the mixture is
//! narrow (std `subspace_std`) on the `subspace_rank` lowest frequencies,
//! where the component means sit, and unit-variance elsewhere.

use anyhow::{ensure, Result};
use flowstego::flows::{GmmSpec, GmmVpModel, OrthoBasis, RfGmmField, Rotated, VpSchedule};
use flowstego::nn::{train_rectified_flow, transport_pairs, FnPairs, Mlp, TrainConfig, TrainOutcome};
use flowstego::{StegoKey, TimeGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSpec {
    pub components: usize,
    /// Component `k` carries class label `k % labels`.
    pub labels: usize,
    pub amplitude: f64,
    pub subspace_rank: usize,
    pub subspace_std: f64,
    /// `"dct"` or `"identity"`.
    pub basis: String,
    /// Seed for the component means, independent of the trial seed.
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            components: 4,
            labels: 2,
            amplitude: 2.0,
            subspace_rank: 64,
            subspace_std: 0.05,
            basis: "dct".into(),
            seed: 1,
        }
    }
}

pub type TaskField = Rotated<RfGmmField>;
pub type TaskModel = Rotated<GmmVpModel>;

#[derive(Debug, Clone)]
pub struct BenchTask {
    pub gmm: GmmSpec,
    pub basis: OrthoBasis,
    pub grid: (usize, usize),
}

/// Coefficient indices ordered by total frequency, then by row.
fn low_frequencies(rows: usize, cols: usize, count: usize) -> Vec<usize> {
    let mut idx: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
    idx.sort_by_key(|&(r, c)| (r + c, r));
    idx.into_iter().take(count).map(|(r, c)| r * cols + c).collect()
}

impl BenchTask {
    pub fn new(spec: &TaskSpec, grid: (usize, usize)) -> Result<Self> {
        let d = grid.0 * grid.1;
        ensure!(spec.components >= 1 && spec.labels >= 1, "task needs components and labels");
        ensure!(spec.labels <= spec.components, "more labels than components");
        ensure!(spec.subspace_rank <= d, "subspace rank exceeds the latent dimension");
        ensure!(spec.subspace_std > 0.0 && spec.amplitude.is_finite(), "invalid task scales");
        let basis = match spec.basis.as_str() {
            "dct" => OrthoBasis::dct2(grid.0, grid.1)?,
            "identity" => OrthoBasis::identity(d),
            other => anyhow::bail!("unknown basis {other:?}"),
        };
        let sub = low_frequencies(grid.0, grid.1, spec.subspace_rank);
        let key = StegoKey::from_seed(spec.seed, "task/means");
        let k = spec.components;
        let mut means = vec![vec![0.0; d]; k];
        let mut stds = vec![vec![1.0; d]; k];
        for c in 0..k {
            for (j, &i) in sub.iter().enumerate() {
                means[c][i] = spec.amplitude * key.normal((c * d + j) as u64);
                stds[c][i] = spec.subspace_std;
            }
        }
        let labels = (0..k).map(|c| c % spec.labels).collect();
        let gmm = GmmSpec::new(vec![1.0 / k as f64; k], means, stds, Some(labels))?;
        Ok(Self { gmm, basis, grid })
    }

    pub fn dim(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Exact rectified-flow field from `N(0, I)` to the task distribution.
    pub fn rf_field(&self) -> Result<TaskField> {
        Ok(Rotated::new(RfGmmField::new(self.gmm.clone())?, self.basis.clone()))
    }

    /// The task distribution diffused by a VP schedule, with its exact score.
    pub fn vp_model(&self, schedule: VpSchedule) -> Result<TaskModel> {
        Ok(Rotated::new(GmmVpModel::new(self.gmm.clone(), schedule)?, self.basis.clone()))
    }

    /// Trains a network on the coupling induced by the exact field: prior
    /// draws paired with their Euler images over `teacher_steps` steps.
    pub fn train_straightened(
        &self,
        hidden: &[usize],
        t_embed: usize,
        n_pairs: usize,
        teacher_steps: usize,
        cfg: &TrainConfig,
    ) -> Result<TrainOutcome> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // The prior is rotation invariant, so the coupling is built in
        // coefficient space and both endpoints are mapped back afterwards.
        let starts: Vec<Vec<f64>> = (0..n_pairs)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let teacher = RfGmmField::new(self.gmm.clone())?;
        let pairs = transport_pairs(&teacher, starts, &TimeGrid::uniform(teacher_steps)?, None)?;
        let back = |ys: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
            ys.into_iter()
                .map(|y| {
                    let mut x = vec![0.0; d];
                    self.basis.synthesis(&y, &mut x)?;
                    Ok(x)
                })
                .collect()
        };
        let mut pairs = flowstego::nn::CoupledPairs::new(back(pairs.x0)?, back(pairs.x1)?)?;
        let init = Mlp::random(d, hidden, t_embed, &mut rng)?;
        Ok(train_rectified_flow(init, &mut pairs, cfg)?)
    }
    /// Trains a network from scratch on independent prior/data pairs.
    pub fn train_independent(&self, hidden: &[usize], t_embed: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = Mlp::random(d, hidden, t_embed, &mut rng)?;
        let gmm = &self.gmm;
        let basis = &self.basis;
        let mut pairs = FnPairs {
            dim: d,
            f: |rng: &mut ChaCha8Rng, x0: &mut [f64], x1: &mut [f64]| {
                for v in x0.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let y = gmm.sample(rng, None).expect("validated mixture");
                basis.synthesis(&y, x1).expect("matching dimension");
            },
        };
        Ok(train_rectified_flow(init, &mut pairs, cfg)?)
    }
}
