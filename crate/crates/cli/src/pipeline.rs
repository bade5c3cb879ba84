//! One embed → transport → channel → invert → extract round per trial.

use anyhow::Result;
use flowstego::channel::{apply_channel, codec_roundtrip, ChannelSpec, Distortion};
use flowstego::flows::{NoisePredictor, VelocityField, VpSchedule};
use flowstego::mapping::{embed_message, extract_message, MappingParams};
use flowstego::metrics::{extraction_accuracy, inversion_error};
use flowstego::samplers::{ddim_forward, ddim_inverse, ddpm_forward, euler_forward, euler_inverse, pcli_residual};
use flowstego::{LatentVector, Message, StegoKey, TimeGrid, TrajectoryRecord};
use rayon::prelude::*;

/// How latents are carried from `t = 0` to `t = 1` and back.
#[derive(Clone, Copy)]
pub enum Transport<'a> {
    Euler(&'a dyn VelocityField),
    Ddim {
        model: &'a dyn NoisePredictor,
        schedule: VpSchedule,
    },
    /// Ancestral sampling forward, DDIM inversion backward.
    Ddpm {
        model: &'a dyn NoisePredictor,
        schedule: VpSchedule,
        noise_scale: f64,
    },
}

/// Storage codec applied to every output latent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Codec {
    pub bits: u32,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone)]
pub struct TrialSetup<'a> {
    pub master: StegoKey,
    pub mapping: MappingParams,
    pub transport: Transport<'a>,
    pub grid: TimeGrid,
    pub label: Option<usize>,
    pub codec: Option<Codec>,
    pub distortions: Vec<Distortion>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub accuracy: f64,
    pub l2_error: f64,
    pub pcli_mean: f64,
}

/// Per-trial secrets, all derived from the master key and the trial index.
pub struct TrialKeys {
    pub stego: StegoKey,
    pub message: Message,
    pub noise: StegoKey,
    pub channel_seed: u64,
}

pub fn trial_keys(master: &StegoKey, index: u64, message_len: usize) -> Result<TrialKeys> {
    let tk = master.child("trial", index);
    let mk = tk.with_domain("message");
    let bits = (0..message_len as u64).map(|i| u8::from(mk.uniform(i) < 0.5)).collect();
    let seed_key = tk.with_domain("channel-seed");
    Ok(TrialKeys {
        stego: tk.with_domain("stego"),
        message: Message::new(bits)?,
        noise: tk.with_domain("sampler-noise"),
        channel_seed: (seed_key.uniform(0) * (1u64 << 53) as f64) as u64,
    })
}

fn mean_step_change(traj: &TrajectoryRecord) -> f64 {
    let v = &traj.velocities;
    if v.len() < 2 {
        return 0.0;
    }
    let total: f64 = v
        .windows(2)
        .map(|w| {
            w[0].as_slice()
                .iter()
                .zip(w[1].as_slice())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    total / (v.len() - 1) as f64
}

impl<'a> TrialSetup<'a> {
    pub fn forward(&self, x0: &LatentVector, noise: &StegoKey) -> Result<TrajectoryRecord> {
        Ok(match self.transport {
            Transport::Euler(f) => euler_forward(x0, f, &self.grid, self.label)?,
            Transport::Ddim { model, schedule } => ddim_forward(x0, model, &schedule, &self.grid, self.label)?,
            Transport::Ddpm {
                model,
                schedule,
                noise_scale,
            } => ddpm_forward(x0, model, &schedule, &self.grid, self.label, noise_scale, Some(noise))?,
        })
    }

    pub fn inverse(&self, x_end: &LatentVector) -> Result<TrajectoryRecord> {
        Ok(match self.transport {
            Transport::Euler(f) => euler_inverse(x_end, f, &self.grid, self.label)?,
            Transport::Ddim { model, schedule } | Transport::Ddpm { model, schedule, .. } => {
                ddim_inverse(x_end, model, &schedule, &self.grid, self.label)?
            }
        })
    }

    /// Codec first, then the configured distortions.
    pub fn transmit(&self, x: &LatentVector, channel_seed: u64) -> Result<LatentVector> {
        let coded = match self.codec {
            Some(c) => codec_roundtrip(x, c.bits, c.lo, c.hi)?,
            None => x.clone(),
        };
        Ok(apply_channel(&coded, &ChannelSpec::new(self.distortions.clone(), channel_seed))?)
    }

    /// PCLI residual for flows; consecutive effective-velocity change otherwise.
    fn pcli(&self, traj: &TrajectoryRecord) -> Result<f64> {
        Ok(match self.transport {
            Transport::Euler(f) => pcli_residual(traj, f, self.label)?.mean,
            _ => mean_step_change(traj),
        })
    }

    pub fn run(&self, index: u64) -> Result<TrialOutcome> {
        let keys = trial_keys(&self.master, index, self.mapping.message_len)?;
        let x0 = embed_message(&keys.message, &keys.stego, &self.mapping)?;
        let fwd = self.forward(&x0, &keys.noise)?;
        let received = self.transmit(fwd.end(), keys.channel_seed)?;
        let back = self.inverse(&received)?;
        let decoded = extract_message(back.start(), &keys.stego, &self.mapping)?;
        Ok(TrialOutcome {
            accuracy: extraction_accuracy(&keys.message, &decoded)?,
            l2_error: inversion_error(&x0, back.start())?.l2,
            pcli_mean: self.pcli(&fwd)?,
        })
    }

    /// Trials `0..n`, run in parallel and returned in index order.
    pub fn run_many(&self, n: usize) -> Result<Vec<TrialOutcome>> {
        (0..n as u64).into_par_iter().map(|i| self.run(i)).collect()
    }
}
