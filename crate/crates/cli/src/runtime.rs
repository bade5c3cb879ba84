//! Turns a validated config into fields, models and trial setups.

use std::time::Instant;

use anyhow::{ensure, Result};
use flowstego::channel::Distortion;
use flowstego::flows::{
    GaussianEndpoints, Guided, LinearCouplingField, LinearField, NoisePredictor, RfGaussianField,
    StraightGaussianField, VelocityField, VpSchedule,
};
use flowstego::mapping::MappingParams;
use flowstego::metrics::MeanSe;
use flowstego::nn::read_checkpoint;
use flowstego::samplers::SamplerKind;
use flowstego::TimeGrid;

use crate::config::{ExperimentConfig, FieldConfig};
use crate::pipeline::{Codec, TrialOutcome, TrialSetup, Transport};
use crate::task::{BenchTask, TaskModel};

/// Everything a trial needs besides its keys.
///
/// Diffusion samplers always use the exact score of the task mixture; the
/// `[field]` section only selects what the Euler sampler integrates.
pub struct Models {
    pub field: Box<dyn VelocityField>,
    pub model: TaskModel,
    pub schedule: VpSchedule,
    pub eta: f64,
}

pub fn task(cfg: &ExperimentConfig) -> Result<BenchTask> {
    BenchTask::new(&cfg.task, (cfg.grid[0], cfg.grid[1]))
}

pub fn build_field(cfg: &ExperimentConfig, task: &BenchTask) -> Result<Box<dyn VelocityField>> {
    let d = cfg.dim();
    let iso = |mu0, sigma0, mu1, sigma1| GaussianEndpoints::isotropic(d, mu0, sigma0, mu1, sigma1);
    let field: Box<dyn VelocityField> = match cfg.field {
        FieldConfig::Constant { delta } => Box::new(LinearCouplingField::from_slice(&vec![delta; d])?),
        FieldConfig::Linear { a } => Box::new(LinearField { dim: d, a }),
        FieldConfig::StraightGaussian { mu0, sigma0, mu1, sigma1 } => {
            Box::new(StraightGaussianField::new(iso(mu0, sigma0, mu1, sigma1)?))
        }
        FieldConfig::RfGaussian { mu0, sigma0, mu1, sigma1 } => {
            Box::new(RfGaussianField::new(iso(mu0, sigma0, mu1, sigma1)?))
        }
        FieldConfig::TaskExact => Box::new(task.rf_field()?),
        FieldConfig::Checkpoint { ref path } => {
            let net = read_checkpoint(path)?;
            ensure!(
                net.data_dim() == d,
                "checkpoint {} has dimension {}, config grid has {d}",
                path.display(),
                net.data_dim()
            );
            Box::new(net)
        }
    };
    Ok(field)
}

impl Models {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let task = task(cfg)?;
        let schedule = cfg.schedule.schedule()?;
        Ok(Self {
            field: build_field(cfg, &task)?,
            model: task.vp_model(schedule)?,
            schedule,
            eta: cfg.schedule.ddpm_eta,
        })
    }

    /// Calls `f` with the transport for `kind`, guided at `w` when given and
    /// using the bare conditional field and model otherwise.
    pub fn with_transport<R>(
        &self,
        kind: SamplerKind,
        w: Option<f64>,
        f: impl FnOnce(Transport<'_>) -> Result<R>,
    ) -> Result<R> {
        match w {
            Some(w) => {
                let gf = Guided::new(self.field.as_ref(), self.field.as_ref(), w);
                let gm = Guided::new(&self.model, &self.model, w);
                f(self.transport(kind, &gf, &gm))
            }
            None => f(self.transport(kind, self.field.as_ref(), &self.model)),
        }
    }

    fn transport<'a>(
        &self,
        kind: SamplerKind,
        field: &'a dyn VelocityField,
        model: &'a dyn NoisePredictor,
    ) -> Transport<'a> {
        match kind {
            SamplerKind::EulerRf => Transport::Euler(field),
            SamplerKind::Ddim => Transport::Ddim {
                model,
                schedule: self.schedule,
            },
            SamplerKind::Ddpm => Transport::Ddpm {
                model,
                schedule: self.schedule,
                noise_scale: self.eta,
            },
        }
    }
}

pub fn mapping(cfg: &ExperimentConfig) -> Result<MappingParams> {
    let mut m = MappingParams::new(cfg.dim(), cfg.message_len)?.with_shape(cfg.grid[0], cfg.grid[1])?;
    m.permutation_seeded = cfg.permutation;
    Ok(m)
}

pub fn codec(cfg: &ExperimentConfig) -> Option<Codec> {
    cfg.codec.map(|c| Codec {
        bits: c.bits,
        lo: c.lo,
        hi: c.hi,
    })
}

/// One benchmark cell: the outcomes of `cfg.trials` trials and their summary.
#[derive(Debug, Clone)]
pub struct Cell {
    pub outcomes: Vec<TrialOutcome>,
    pub acc: MeanSe,
    pub l2: MeanSe,
    pub pcli: f64,
    pub wall_secs: f64,
}

impl Cell {
    fn from_outcomes(outcomes: Vec<TrialOutcome>, wall_secs: f64) -> Self {
        let acc = MeanSe::of(&outcomes.iter().map(|o| o.accuracy).collect::<Vec<_>>());
        let l2 = MeanSe::of(&outcomes.iter().map(|o| o.l2_error).collect::<Vec<_>>());
        let pcli = outcomes.iter().map(|o| o.pcli_mean).sum::<f64>() / outcomes.len() as f64;
        Self {
            outcomes,
            acc,
            l2,
            pcli,
            wall_secs,
        }
    }

    /// `self` is no better than `other`, up to one standard error of the difference.
    pub fn not_above(&self, other: &Cell) -> bool {
        self.acc.mean <= other.acc.mean + self.acc.se.hypot(other.acc.se)
    }
}

pub struct CellSpec<'a> {
    pub kind: SamplerKind,
    /// `None` runs the bare conditional transport.
    pub w: Option<f64>,
    pub steps: usize,
    pub distortions: &'a [Distortion],
}

pub fn run_cell(cfg: &ExperimentConfig, models: &Models, spec: &CellSpec<'_>) -> Result<Cell> {
    let start = Instant::now();
    let master = cfg.master_key()?;
    let mapping = mapping(cfg)?;
    let outcomes = models.with_transport(spec.kind, spec.w, |transport| {
        let setup = TrialSetup {
            master,
            mapping,
            transport,
            grid: TimeGrid::uniform(spec.steps)?,
            label: cfg.label,
            codec: codec(cfg),
            distortions: spec.distortions.to_vec(),
        };
        setup.run_many(cfg.trials)
    })?;
    Ok(Cell::from_outcomes(outcomes, start.elapsed().as_secs_f64()))
}
