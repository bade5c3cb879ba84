//! Experiment configuration: one TOML document, overridable from flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use flowstego::channel::Distortion;
use flowstego::flows::VpSchedule;
use flowstego::nn::{LrSchedule, Optimizer, TrainConfig};
use flowstego::samplers::SamplerKind;
use flowstego::StegoKey;
use serde::{Deserialize, Serialize};

use crate::task::TaskSpec;

pub const STEP_MENU: [usize; 5] = [10, 20, 30, 40, 50];
pub const GUIDANCE_MENU: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];
pub const NOISE_MENU: [f64; 3] = [0.01, 0.05, 0.1];
pub const KERNEL_MENU: [usize; 3] = [3, 5, 7];
pub const RESIZE_MENU: [f64; 4] = [0.5, 0.75, 1.25, 1.5];
pub const SEED_ENV: &str = "FLOWSTEGO_SEED";

/// Velocity field used by the Euler sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    /// `v(x, t) = delta` in every coordinate.
    Constant { delta: f64 },
    /// `v(x, t) = a·x`.
    Linear { a: f64 },
    /// Straight transport between two isotropic Gaussians.
    StraightGaussian { mu0: f64, sigma0: f64, mu1: f64, sigma1: f64 },
    /// Exact rectified flow between two isotropic Gaussians.
    RfGaussian { mu0: f64, sigma0: f64, mu1: f64, sigma1: f64 },
    /// Exact rectified flow onto the `[task]` mixture, label aware.
    TaskExact,
    /// A trained network.
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DistortionConfig {
    Noise { std: f64 },
    Quantize { bits: u32, lo: f64, hi: f64 },
    /// Quantization at the bit depth `[channel_model.jpeg_bits]` assigns to `quality`.
    Jpeg { quality: u32 },
    Median { k: usize },
    GaussianBlur { k: usize },
    Resize { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub beta_min: f64,
    pub beta_max: f64,
    pub eps: f64,
    /// DDPM stochasticity `eta`; 0 reduces DDPM to DDIM.
    pub ddpm_eta: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = VpSchedule::default();
        Self {
            beta_min: s.beta_min,
            beta_max: s.beta_max,
            eps: s.eps,
            ddpm_eta: 0.3,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self) -> Result<VpSchedule> {
        let s = VpSchedule {
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            eps: self.eps,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    pub bits: u32,
    pub lo: f64,
    pub hi: f64,
}

/// Severity model for the distortion presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelModel {
    /// JPEG quality factor to quantizer bit depth.
    pub jpeg_bits: BTreeMap<String, u32>,
    /// Clip range of the JPEG stand-in quantizer.
    pub range: [f64; 2],
}

impl Default for ChannelModel {
    fn default() -> Self {
        let jpeg_bits = [("50", 6), ("70", 7), ("90", 8)]
            .into_iter()
            .map(|(q, b)| (q.to_string(), b))
            .collect();
        Self {
            jpeg_bits,
            range: [-8.0, 8.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub t_embed: usize,
    pub batch_size: usize,
    pub iters: usize,
    pub learning_rate: f64,
    /// `"adam"` or `"sgd"`.
    pub optimizer: String,
    /// `"cosine"` or `"constant"`.
    pub lr_schedule: String,
    pub seed: u64,
    pub eval_interval: usize,
    /// Coupled pairs for reflow.
    pub pairs: usize,
    /// Euler steps used by the teacher when building reflow pairs.
    pub teacher_steps: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            t_embed: 8,
            batch_size: 256,
            iters: 2000,
            learning_rate: 1e-3,
            optimizer: "adam".into(),
            lr_schedule: "cosine".into(),
            seed: 5,
            eval_interval: 500,
            pairs: 8000,
            teacher_steps: 50,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "adam" => Optimizer::adam(),
            "sgd" => Optimizer::Sgd,
            other => bail!("unknown optimizer {other:?}"),
        };
        let lr_schedule = match self.lr_schedule.as_str() {
            "cosine" => LrSchedule::Cosine { final_fraction: 0.0 },
            "constant" => LrSchedule::Constant,
            other => bail!("unknown learning-rate schedule {other:?}"),
        };
        let cfg = TrainConfig {
            batch_size: self.batch_size,
            n_iters: self.iters,
            learning_rate: self.learning_rate,
            optimizer,
            lr_schedule,
            seed: self.seed,
            eval_interval: self.eval_interval,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub samplers: Vec<String>,
    pub steps: Vec<usize>,
    pub guidance: Vec<f64>,
    /// Noise sweep; a leading 0 gives the lossless row.
    pub noise_stds: Vec<f64>,
    pub jpeg_qualities: Vec<u32>,
    pub median_kernels: Vec<usize>,
    pub blur_kernels: Vec<usize>,
    pub resize_scales: Vec<f64>,
    /// Constituents of the combined presets.
    pub combo_noise_std: f64,
    pub combo_jpeg_quality: u32,
    pub combo_median_k: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            samplers: vec!["euler-rf".into(), "ddim".into(), "ddpm".into()],
            steps: STEP_MENU.to_vec(),
            guidance: GUIDANCE_MENU.to_vec(),
            noise_stds: vec![0.0, 0.01, 0.05, 0.1],
            jpeg_qualities: vec![90, 70, 50],
            median_kernels: KERNEL_MENU.to_vec(),
            blur_kernels: KERNEL_MENU.to_vec(),
            resize_scales: RESIZE_MENU.to_vec(),
            combo_noise_std: 0.05,
            combo_jpeg_quality: 50,
            combo_median_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SecuritySection {
    /// Latents per class, split 8:1:1 into train/validation/test.
    pub per_class: usize,
}

impl Default for SecuritySection {
    fn default() -> Self {
        Self { per_class: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Hex stego key; derived from the master seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key_hex: Option<String>,
    pub sampler: String,
    pub steps: usize,
    pub guidance: f64,
    /// Shared class label; absent means unconditional.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub message_len: usize,
    pub permutation: bool,
    pub trials: usize,
    pub grid: [usize; 2],
    pub output_dir: PathBuf,
    pub field: FieldConfig,
    pub task: TaskSpec,
    pub schedule: ScheduleConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub codec: Option<CodecConfig>,
    pub channel: Vec<DistortionConfig>,
    pub channel_model: ChannelModel,
    pub train: TrainSection,
    pub bench: BenchSection,
    pub security: SecuritySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: None,
            key_hex: None,
            sampler: SamplerKind::EulerRf.to_string(),
            steps: 20,
            guidance: 1.25,
            label: None,
            message_len: 64,
            permutation: true,
            trials: 256,
            grid: [16, 16],
            output_dir: PathBuf::from("flowstego-out"),
            field: FieldConfig::TaskExact,
            task: TaskSpec::default(),
            schedule: ScheduleConfig::default(),
            codec: None,
            channel: Vec::new(),
            channel_model: ChannelModel::default(),
            train: TrainSection::default(),
            bench: BenchSection::default(),
            security: SecuritySection::default(),
        }
    }
}

fn in_menu(v: f64, menu: &[f64]) -> bool {
    menu.iter().any(|m| (m - v).abs() < 1e-12)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.master_seed
            .with_context(|| format!("master_seed is required (set it in the config, with --seed, or via {SEED_ENV})"))
    }

    pub fn sampler_kind(&self) -> Result<SamplerKind> {
        Ok(self.sampler.parse()?)
    }

    pub fn dim(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    pub fn master_key(&self) -> Result<StegoKey> {
        match &self.key_hex {
            Some(h) => Ok(StegoKey::from_hex(h, "flowstego/master")?),
            None => Ok(StegoKey::from_seed(self.seed()?, "flowstego/master")),
        }
    }

    pub fn distortion(&self, d: &DistortionConfig) -> Result<Distortion> {
        let out = match *d {
            DistortionConfig::Noise { std } => Distortion::GaussianNoise { std },
            DistortionConfig::Quantize { bits, lo, hi } => Distortion::Quantize { bits, lo, hi },
            DistortionConfig::Jpeg { quality } => {
                let bits = *self
                    .channel_model
                    .jpeg_bits
                    .get(&quality.to_string())
                    .with_context(|| format!("no bit depth declared for JPEG quality {quality}"))?;
                let [lo, hi] = self.channel_model.range;
                Distortion::Quantize { bits, lo, hi }
            }
            DistortionConfig::Median { k } => Distortion::MedianBlur { k },
            DistortionConfig::GaussianBlur { k } => Distortion::GaussianBlur { k },
            DistortionConfig::Resize { scale } => Distortion::Resize { scale },
        };
        out.validate()?;
        Ok(out)
    }

    pub fn distortions(&self) -> Result<Vec<Distortion>> {
        self.channel.iter().map(|d| self.distortion(d)).collect()
    }

    /// Structural checks always; menu checks unless `unsafe_override`.
    pub fn validate(&self, unsafe_override: bool) -> Result<()> {
        self.seed()?;
        self.sampler_kind()?;
        ensure!(self.grid[0] >= 1 && self.grid[1] >= 1, "grid must be non-empty");
        ensure!(self.steps >= 1, "steps must be at least 1");
        ensure!(self.trials >= 1, "trials must be at least 1");
        ensure!(self.guidance.is_finite(), "guidance must be finite");
        ensure!(
            self.message_len >= 1 && self.message_len <= self.dim(),
            "message length {} outside 1..={}",
            self.message_len,
            self.dim()
        );
        if let Some(l) = self.label {
            ensure!(l < self.task.labels, "label {l} outside 0..{}", self.task.labels);
        }
        if let Some(c) = self.codec {
            Distortion::Quantize { bits: c.bits, lo: c.lo, hi: c.hi }.validate()?;
        }
        self.schedule.schedule()?;
        ensure!(
            (0.0..=1.0).contains(&self.schedule.ddpm_eta),
            "ddpm_eta must lie in [0, 1]"
        );
        self.train.train_config()?;
        for s in &self.bench.samplers {
            s.parse::<SamplerKind>()?;
        }
        let mut all = self.channel.clone();
        all.push(DistortionConfig::Noise { std: self.bench.combo_noise_std });
        all.push(DistortionConfig::Jpeg { quality: self.bench.combo_jpeg_quality });
        all.push(DistortionConfig::Median { k: self.bench.combo_median_k });
        all.extend(self.bench.noise_stds.iter().map(|&std| DistortionConfig::Noise { std }));
        all.extend(self.bench.jpeg_qualities.iter().map(|&quality| DistortionConfig::Jpeg { quality }));
        all.extend(self.bench.median_kernels.iter().map(|&k| DistortionConfig::Median { k }));
        all.extend(self.bench.blur_kernels.iter().map(|&k| DistortionConfig::GaussianBlur { k }));
        all.extend(self.bench.resize_scales.iter().map(|&scale| DistortionConfig::Resize { scale }));
        for d in &all {
            self.distortion(d)?;
        }
        ensure!(self.security.per_class >= 100, "security.per_class must be at least 100");
        if unsafe_override {
            return Ok(());
        }
        ensure!(STEP_MENU.contains(&self.steps), "steps {} not in {STEP_MENU:?}", self.steps);
        ensure!(
            in_menu(self.guidance, &GUIDANCE_MENU),
            "guidance {} not in {GUIDANCE_MENU:?}",
            self.guidance
        );
        for &n in &self.bench.steps {
            ensure!(STEP_MENU.contains(&n), "bench step count {n} not in {STEP_MENU:?}");
        }
        for &w in &self.bench.guidance {
            ensure!(in_menu(w, &GUIDANCE_MENU), "bench guidance {w} not in {GUIDANCE_MENU:?}");
        }
        for d in &all {
            match *d {
                DistortionConfig::Noise { std } => ensure!(
                    std == 0.0 || in_menu(std, &NOISE_MENU),
                    "noise std {std} not in {NOISE_MENU:?}"
                ),
                DistortionConfig::Median { k } | DistortionConfig::GaussianBlur { k } => {
                    ensure!(KERNEL_MENU.contains(&k), "kernel {k} not in {KERNEL_MENU:?}")
                }
                DistortionConfig::Resize { scale } => {
                    ensure!(in_menu(scale, &RESIZE_MENU), "resize scale {scale} not in {RESIZE_MENU:?}")
                }
                DistortionConfig::Quantize { .. } | DistortionConfig::Jpeg { .. } => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> ExperimentConfig {
        ExperimentConfig {
            master_seed: Some(3),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_needs_a_seed() {
        let c = ExperimentConfig::default();
        assert!(c.validate(false).is_err());
        assert!(seeded().validate(false).is_ok());
    }

    #[test]
    fn menus_are_enforced_unless_overridden() {
        let c = ExperimentConfig { steps: 7, ..seeded() };
        assert!(c.validate(false).is_err());
        assert!(c.validate(true).is_ok());
        let c = ExperimentConfig {
            channel: vec![DistortionConfig::Noise { std: 0.2 }],
            ..seeded()
        };
        assert!(c.validate(false).is_err());
        assert!(c.validate(true).is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig {
            label: Some(1),
            codec: Some(CodecConfig { bits: 12, lo: -8.0, hi: 8.0 }),
            channel: vec![
                DistortionConfig::Jpeg { quality: 50 },
                DistortionConfig::Median { k: 3 },
            ],
            field: FieldConfig::StraightGaussian {
                mu0: 0.0,
                sigma0: 1.0,
                mu1: 0.5,
                sigma1: 1.5,
            },
            ..seeded()
        };
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("master_seed = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn jpeg_maps_through_declared_table() {
        let c = seeded();
        assert_eq!(
            c.distortion(&DistortionConfig::Jpeg { quality: 50 }).unwrap(),
            Distortion::Quantize { bits: 6, lo: -8.0, hi: 8.0 }
        );
        assert!(c.distortion(&DistortionConfig::Jpeg { quality: 10 }).is_err());
    }
}
