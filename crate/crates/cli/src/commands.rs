//! Subcommand definitions and their drivers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use flowstego::io::{read_latent, write_latent};
use flowstego::mapping::{embed_message, extract_message, tolerance_radius, MappingParams};
use flowstego::metrics::{extraction_accuracy, straightness};
use flowstego::nn::{read_checkpoint, reflow, write_checkpoint, TrainOutcome};
use flowstego::{Message, TimeGrid};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use crate::bench::{self, BenchResult};
use crate::config::{ExperimentConfig, FieldConfig, SEED_ENV};
use crate::output::{schema_help, OutputDir, SCHEMA_VERSION};
use crate::pipeline::{trial_keys, TrialSetup};
use crate::runtime::{self, Models};

#[derive(Debug, Parser)]
#[command(name = "flowstego", version, about = "Message embedding in flow-model latents, with benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the file).
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// euler-rf, ddim or ddpm.
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub guidance: Option<f64>,
    /// Shared class label.
    #[arg(long)]
    pub label: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub message_len: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Use this network checkpoint as the Euler field.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Accept values outside the step, guidance and distortion menus.
    #[arg(long)]
    pub unsafe_override: bool,
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = Some(s);
        }
        if let Some(s) = &self.sampler {
            cfg.sampler = s.clone();
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        if let Some(w) = self.guidance {
            cfg.guidance = w;
        }
        if let Some(l) = self.label {
            cfg.label = Some(l);
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(l) = self.message_len {
            cfg.message_len = l;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(p) = &self.checkpoint {
            cfg.field = FieldConfig::Checkpoint { path: p.clone() };
        }
        cfg.validate(self.unsafe_override)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Exit with status 2 when a trend check fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a message and write the generated latent.
    Embed {
        #[command(flatten)]
        common: Common,
        /// Message as hex digits.
        #[arg(long, group = "msg")]
        message: Option<String>,
        /// Message as a string of 0/1 characters.
        #[arg(long, group = "msg")]
        message_bits: Option<String>,
        /// File holding the message as 0/1 characters (whitespace ignored).
        #[arg(long, group = "msg")]
        message_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also pass the latent through the configured channel.
        #[arg(long)]
        apply_channel: bool,
    },
    /// Invert a received latent and read the message.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth message as hex digits.
        #[arg(long, group = "truth_msg")]
        truth: Option<String>,
        /// Ground-truth message as 0/1 characters.
        #[arg(long, group = "truth_msg")]
        truth_bits: Option<String>,
    },
    /// Train a flow network on independent prior/data pairs.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain on the coupling produced by a teacher ("exact" or a checkpoint).
    Reflow {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "exact")]
        teacher: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy against step count for each sampler.
    #[command(after_help = schema_help())]
    BenchSteps(BenchArgs),
    /// Accuracy against guidance scale for each sampler.
    #[command(after_help = schema_help())]
    BenchGuidance(BenchArgs),
    /// Accuracy under channel distortions and their combinations.
    #[command(after_help = schema_help())]
    BenchRobustness(BenchArgs),
    /// Cover-vs-stego detection error and distribution distances.
    #[command(after_help = schema_help())]
    Security(BenchArgs),
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Embed {
            common,
            message,
            message_bits,
            message_file,
            out,
            apply_channel,
        } => {
            let msg = parse_message(message.as_deref(), message_bits.as_deref(), message_file.as_deref())?
                .context("one of --message, --message-bits or --message-file is required")?;
            embed(&common, &msg, &out, apply_channel)?;
        }
        Command::Extract {
            common,
            input,
            truth,
            truth_bits,
        } => {
            let truth = parse_message(truth.as_deref(), truth_bits.as_deref(), None)?;
            extract(&common, &input, truth.as_ref())?;
        }
        Command::Train { common, out } => train(&common, &out, None)?,
        Command::Reflow { common, teacher, out } => train(&common, &out, Some(&teacher))?,
        Command::BenchSteps(a) => return bench_command("bench-steps", &a, bench::bench_steps),
        Command::BenchGuidance(a) => return bench_command("bench-guidance", &a, bench::bench_guidance),
        Command::BenchRobustness(a) => return bench_command("bench-robustness", &a, bench::bench_robustness),
        Command::Security(a) => return bench_command("security", &a, bench::security),
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_message(hex: Option<&str>, bits: Option<&str>, file: Option<&Path>) -> Result<Option<Message>> {
    if let Some(h) = hex {
        return Ok(Some(Message::from_hex(h)?));
    }
    if let Some(b) = bits {
        return Ok(Some(Message::from_bit_str(b)?));
    }
    if let Some(p) = file {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        return Ok(Some(Message::from_bit_str(&compact)?));
    }
    Ok(None)
}

fn unix_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn echo_config(dir: &OutputDir, name: &str, cfg: &ExperimentConfig) -> Result<()> {
    dir.write_text(&format!("{name}.config.toml"), &cfg.to_toml_string()?)?;
    Ok(())
}

fn mapping_for(cfg: &ExperimentConfig, message_len: usize) -> Result<MappingParams> {
    let mut m = MappingParams::new(cfg.dim(), message_len)?.with_shape(cfg.grid[0], cfg.grid[1])?;
    m.permutation_seeded = cfg.permutation;
    Ok(m)
}

/// Sender side. Uses the keys of trial 0 under the master key.
pub fn embed(common: &Common, msg: &Message, out: &Path, apply_channel: bool) -> Result<()> {
    let mut cfg = common.resolve()?;
    cfg.message_len = msg.len();
    let mapping = mapping_for(&cfg, msg.len())?;
    let keys = trial_keys(&cfg.master_key()?, 0, 1)?;
    let x0 = embed_message(msg, &keys.stego, &mapping)?;
    let models = Models::new(&cfg)?;
    let distortions = if apply_channel { cfg.distortions()? } else { vec![] };
    let (xt, straight) = models.with_transport(cfg.sampler_kind()?, Some(cfg.guidance), |transport| {
        let setup = TrialSetup {
            master: cfg.master_key()?,
            mapping,
            transport,
            grid: TimeGrid::uniform(cfg.steps)?,
            label: cfg.label,
            codec: runtime::codec(&cfg),
            distortions,
        };
        let traj = setup.forward(&x0, &keys.noise)?;
        let straight = if cfg.steps >= 2 { Some(straightness(&traj)?) } else { None };
        Ok((setup.transmit(traj.end(), keys.channel_seed)?, straight))
    })?;
    write_latent(out, &xt)?;
    let report = json!({
        "r_tol": tolerance_radius(&x0, &keys.stego, &mapping),
        "straightness": straight,
        "message_len": msg.len(),
        "dim": cfg.dim(),
        "sampler": cfg.sampler,
        "steps": cfg.steps,
        "guidance": cfg.guidance,
    });
    eprintln!("{report}");
    Ok(())
}

/// Receiver side; returns the recovered message.
pub fn extract(common: &Common, input: &Path, truth: Option<&Message>) -> Result<Message> {
    let mut cfg = common.resolve()?;
    if let (Some(t), None) = (truth, common.message_len) {
        cfg.message_len = t.len();
    }
    let mapping = mapping_for(&cfg, cfg.message_len)?;
    let mut received = read_latent(input)?;
    if received.dim() != cfg.dim() {
        return Err(flowstego::Error::DimMismatch {
            expected: cfg.dim(),
            got: received.dim(),
        }
        .into());
    }
    if received.shape().is_none() {
        received.set_shape(Some((cfg.grid[0], cfg.grid[1])))?;
    }
    let keys = trial_keys(&cfg.master_key()?, 0, 1)?;
    let models = Models::new(&cfg)?;
    let x0_hat = models.with_transport(cfg.sampler_kind()?, Some(cfg.guidance), |transport| {
        let setup = TrialSetup {
            master: cfg.master_key()?,
            mapping,
            transport,
            grid: TimeGrid::uniform(cfg.steps)?,
            label: cfg.label,
            codec: None,
            distortions: vec![],
        };
        Ok(setup.inverse(&received)?.start().clone())
    })?;
    let decoded = extract_message(&x0_hat, &keys.stego, &mapping)?;
    println!("{}", decoded.to_bit_string());
    let accuracy = truth.map(|t| extraction_accuracy(t, &decoded)).transpose()?;
    eprintln!("{}", json!({ "message_len": decoded.len(), "accuracy": accuracy }));
    Ok(decoded)
}

/// `teacher == None` trains a first flow; otherwise reflows from the teacher.
pub fn train(common: &Common, out: &Path, teacher: Option<&str>) -> Result<()> {
    let cfg = common.resolve()?;
    let start = Instant::now();
    let task = runtime::task(&cfg)?;
    let tcfg = cfg.train.train_config()?;
    let t = &cfg.train;
    let outcome: TrainOutcome = match teacher {
        None => task.train_independent(&t.hidden, t.t_embed, &tcfg)?,
        Some("exact") => task.train_straightened(&t.hidden, t.t_embed, t.pairs, t.teacher_steps, &tcfg)?,
        Some(path) => {
            let net1 = read_checkpoint(path)?;
            if net1.data_dim() != cfg.dim() {
                bail!("teacher has dimension {}, config grid has {}", net1.data_dim(), cfg.dim());
            }
            let d = cfg.dim();
            let mut prior = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| StandardNormal.sample(rng)).collect() };
            reflow(&net1, &mut prior, &TimeGrid::uniform(t.teacher_steps)?, t.pairs, &tcfg)?
        }
    };
    write_checkpoint(out, &outcome.net)?;
    let name = if teacher.is_some() { "reflow" } else { "train" };
    let dir = OutputDir::create(&cfg.output_dir)?;
    echo_config(&dir, name, &cfg)?;
    dir.write_json(
        &format!("{name}.meta.json"),
        &json!({
            "command": name,
            "teacher": teacher,
            "checkpoint": out,
            "master_seed": cfg.master_seed,
            "initial_loss": outcome.initial_loss,
            "final_loss": outcome.final_loss,
            "loss_log": outcome.loss_log,
            "finished_unix": unix_secs(),
            "wall_secs": start.elapsed().as_secs_f64(),
        }),
    )?;
    eprintln!(
        "{}",
        json!({ "initial_loss": outcome.initial_loss, "final_loss": outcome.final_loss, "checkpoint": out })
    );
    Ok(())
}

/// Runs a benchmark and writes `<name>.csv`, `<name>.meta.json`,
/// `<name>.config.toml` and `schema.json` into the output directory.
pub fn run_bench(name: &str, cfg: &ExperimentConfig, f: fn(&ExperimentConfig) -> Result<BenchResult>) -> Result<BenchResult> {
    let start = Instant::now();
    let result = f(cfg)?;
    let dir = OutputDir::create(&cfg.output_dir)?;
    let csv = dir.write_csv(name, &result.rows)?;
    dir.write_schema()?;
    echo_config(&dir, name, cfg)?;
    dir.write_json(
        &format!("{name}.meta.json"),
        &json!({
            "command": name,
            "schema_version": SCHEMA_VERSION,
            "csv": csv,
            "master_seed": cfg.master_seed,
            "trials": cfg.trials,
            "finished_unix": unix_secs(),
            "wall_secs": start.elapsed().as_secs_f64(),
            "row_timings": result.timings,
            "checks": result.checks,
            "all_checks_passed": result.all_passed(),
        }),
    )?;
    Ok(result)
}

fn bench_command(name: &str, args: &BenchArgs, f: fn(&ExperimentConfig) -> Result<BenchResult>) -> Result<ExitCode> {
    let cfg = args.common.resolve()?;
    let result = run_bench(name, &cfg, f)?;
    for c in &result.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", cfg.output_dir.join(format!("{name}.csv")).display());
    Ok(if args.strict && !result.all_passed() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}
