use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::flows::VelocityField;
use crate::latent::{LatentVector, TimeGrid};
use crate::nn::{Mlp, Workspace};
use crate::samplers::euler_forward;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate down to `final_fraction` of it.
    Cosine { final_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_iters: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    /// Iterations per loss-log entry.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            n_iters: 2000,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            eval_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_iters == 0 || self.eval_interval == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("training hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }

    fn lr_at(&self, it: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine { final_fraction } => {
                let p = it as f64 / self.n_iters as f64;
                let c = 0.5 * (1.0 + (std::f64::consts::PI * p).cos());
                self.learning_rate * (final_fraction + (1.0 - final_fraction) * c)
            }
        }
    }
}

/// Source of `(X0, X1)` training pairs.
pub trait PairSource {
    fn dim(&self) -> usize;
    fn sample_pair(&mut self, rng: &mut ChaCha8Rng, x0: &mut [f64], x1: &mut [f64]) -> Result<()>;
}

/// A fixed, deterministic coupling stored as matched endpoint lists.
#[derive(Debug, Clone)]
pub struct CoupledPairs {
    pub x0: Vec<Vec<f64>>,
    pub x1: Vec<Vec<f64>>,
}

impl CoupledPairs {
    pub fn new(x0: Vec<Vec<f64>>, x1: Vec<Vec<f64>>) -> Result<Self> {
        check_dim(x0.len(), x1.len())?;
        if x0.is_empty() {
            return Err(Error::Config("coupling needs at least one pair".into()));
        }
        let d = x0[0].len();
        if x0.iter().chain(&x1).any(|v| v.len() != d) {
            return Err(Error::DimMismatch { expected: d, got: 0 });
        }
        Ok(Self { x0, x1 })
    }

    pub fn len(&self) -> usize {
        self.x0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }
}

impl PairSource for CoupledPairs {
    fn dim(&self) -> usize {
        self.x0[0].len()
    }

    fn sample_pair(&mut self, rng: &mut ChaCha8Rng, x0: &mut [f64], x1: &mut [f64]) -> Result<()> {
        let i = rng.random_range(0..self.x0.len());
        x0.copy_from_slice(&self.x0[i]);
        x1.copy_from_slice(&self.x1[i]);
        Ok(())
    }
}

/// Pairs drawn by a closure, e.g. independent draws from two laws.
pub struct FnPairs<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> PairSource for FnPairs<F>
where
    F: FnMut(&mut ChaCha8Rng, &mut [f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_pair(&mut self, rng: &mut ChaCha8Rng, x0: &mut [f64], x1: &mut [f64]) -> Result<()> {
        (self.f)(rng, x0, x1);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Mlp,
    /// `(iteration, mean loss over the preceding interval)`.
    pub loss_log: Vec<(usize, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Regresses the network onto `X1 - X0` at `X_t = (1-t)X0 + tX1`, `t ~ U[0,1]`.
///
/// Aborts if the loss stays above ten times the first batch's loss for 100
/// consecutive iterations.
pub fn train_rectified_flow(init: Mlp, pairs: &mut dyn PairSource, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let d = init.data_dim();
    check_dim(d, pairs.dim())?;
    let mut net = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bsz = cfg.batch_size;
    let (mut xs, mut ys, mut ts) = (vec![0.0; bsz * d], vec![0.0; bsz * d], vec![0.0; bsz]);
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let mut ws = Workspace::default();
    let mut grad = Vec::new();
    let n_params = net.params().len();
    let (mut m1, mut m2) = (vec![0.0; n_params], vec![0.0; n_params]);

    let mut loss_log = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut window = 0.0;
    let mut over = 0usize;
    for it in 0..cfg.n_iters {
        for k in 0..bsz {
            pairs.sample_pair(&mut rng, &mut a, &mut b)?;
            let t: f64 = rng.random();
            ts[k] = t;
            for i in 0..d {
                xs[k * d + i] = (1.0 - t) * a[i] + t * b[i];
                ys[k * d + i] = b[i] - a[i];
            }
        }
        let loss = net.loss_and_grad(&xs, &ts, &ys, &mut ws, &mut grad)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: it, loss });
        }
        if it == 0 {
            initial_loss = loss;
        }
        over = if loss > 10.0 * initial_loss { over + 1 } else { 0 };
        if over >= 100 {
            return Err(Error::Diverged { iteration: it, loss });
        }

        let lr = cfg.lr_at(it);
        let params = net.params_mut();
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let step = (it + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
                for i in 0..n_params {
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                    params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                }
            }
        }

        window += loss;
        let done = it + 1;
        if done % cfg.eval_interval == 0 || done == cfg.n_iters {
            let span = done - loss_log.last().map_or(0, |(i, _)| *i);
            loss_log.push((done, window / span as f64));
            window = 0.0;
        }
    }
    let final_loss = loss_log.last().map_or(f64::NAN, |(_, l)| *l);
    Ok(TrainOutcome {
        net,
        loss_log,
        initial_loss,
        final_loss,
    })
}

/// Couples every start with its forward-Euler image under `teacher`.
pub fn transport_pairs<F: VelocityField + ?Sized>(
    teacher: &F,
    starts: Vec<Vec<f64>>,
    grid: &TimeGrid,
    label: Option<usize>,
) -> Result<CoupledPairs> {
    let ends = starts
        .iter()
        .map(|x0| {
            let tr = euler_forward(&LatentVector::new(x0.clone())?, teacher, grid, label)?;
            Ok(tr.end().as_slice().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    CoupledPairs::new(starts, ends)
}

/// Re-pairs `n_pairs` prior draws with their images under `net1` and retrains,
/// starting from `net1`'s weights, on that deterministic coupling.
pub fn reflow(
    net1: &Mlp,
    prior: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    grid: &TimeGrid,
    n_pairs: usize,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7265_666c_6f77);
    let starts: Vec<Vec<f64>> = (0..n_pairs).map(|_| prior(&mut rng)).collect();
    let mut pairs = transport_pairs(net1, starts, grid, None)?;
    train_rectified_flow(net1.clone(), &mut pairs, cfg)
}
