//! The four benchmark tables and the trends each is expected to show.

use anyhow::{ensure, Result};
use flowstego::channel::Distortion;
use flowstego::mapping::{embed_message, magnitudes};
use flowstego::metrics::{detection_error, energy_distance, frechet_distance, DetectionSplit};
use flowstego::samplers::SamplerKind;
use flowstego::{LatentVector, StegoKey, TimeGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DistortionConfig, ExperimentConfig};
use crate::output::{fmt_f, Check, SCHEMA_VERSION};
use crate::pipeline::{trial_keys, TrialSetup};
use crate::runtime::{codec, mapping, run_cell, Cell, CellSpec, Models};

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub row: String,
    pub wall_secs: f64,
}

/// Rows for the CSV plus the trend checks and per-row timings.
#[derive(Debug, Clone, Default)]
pub struct BenchResult {
    pub rows: Vec<Vec<String>>,
    pub checks: Vec<Check>,
    pub timings: Vec<Timing>,
}

impl BenchResult {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn samplers(cfg: &ExperimentConfig) -> Result<Vec<SamplerKind>> {
    cfg.bench.samplers.iter().map(|s| Ok(s.parse()?)).collect()
}

fn sampler_row(kind: SamplerKind, steps: usize, w: f64, cfg: &ExperimentConfig, cell: &Cell) -> Vec<String> {
    vec![
        SCHEMA_VERSION.into(),
        kind.to_string(),
        steps.to_string(),
        w.to_string(),
        cfg.trials.to_string(),
        fmt_f(cell.acc.mean),
        fmt_f(cell.acc.se),
        fmt_f(cell.l2.mean),
        fmt_f(cell.l2.se),
        fmt_f(cell.pcli),
    ]
}

fn cell_of(cells: &[(SamplerKind, usize, Cell)], kind: SamplerKind, x: usize) -> Option<&Cell> {
    cells.iter().find(|(k, i, _)| *k == kind && *i == x).map(|(_, _, c)| c)
}

/// `cells[j]` no better than `cells[i]` for every `i < j`, within SE slack.
fn non_increasing(cells: &[&Cell]) -> (bool, String) {
    let mut bad = Vec::new();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            if !cells[j].not_above(cells[i]) {
                bad.push(format!("#{j} {:.4} > #{i} {:.4}", cells[j].acc.mean, cells[i].acc.mean));
            }
        }
    }
    let means: Vec<String> = cells.iter().map(|c| format!("{:.4}", c.acc.mean)).collect();
    let detail = if bad.is_empty() {
        format!("means [{}]", means.join(", "))
    } else {
        format!("means [{}]; violations: {}", means.join(", "), bad.join("; "))
    };
    (bad.is_empty(), detail)
}

/// Accuracy against the number of steps for every sampler, at the config's
/// guidance scale.
pub fn bench_steps(cfg: &ExperimentConfig) -> Result<BenchResult> {
    let models = Models::new(cfg)?;
    let kinds = samplers(cfg)?;
    let mut out = BenchResult::default();
    let mut cells = Vec::new();
    for &kind in &kinds {
        for &n in &cfg.bench.steps {
            let cell = run_cell(
                cfg,
                &models,
                &CellSpec {
                    kind,
                    w: Some(cfg.guidance),
                    steps: n,
                    distortions: &[],
                },
            )?;
            out.rows.push(sampler_row(kind, n, cfg.guidance, cfg, &cell));
            out.timings.push(Timing {
                row: format!("{kind} N={n}"),
                wall_secs: cell.wall_secs,
            });
            cells.push((kind, n, cell));
        }
    }
    use SamplerKind::*;
    for &n in &cfg.bench.steps {
        let (rf, ddim, ddpm) = (cell_of(&cells, EulerRf, n), cell_of(&cells, Ddim, n), cell_of(&cells, Ddpm, n));
        if let (Some(rf), Some(ddim), Some(ddpm)) = (rf, ddim, ddpm) {
            let (a, b, c) = (rf.acc.mean, ddim.acc.mean, ddpm.acc.mean);
            out.checks.push(Check::new(
                format!("ordering_rf_ddim_ddpm_n{n}"),
                a > b && b > c,
                format!("rf {a:.4}, ddim {b:.4}, ddpm {c:.4}"),
            ));
        }
        if let (Some(rf), Some(ddim)) = (rf, ddim) {
            let gap = rf.acc.mean - ddim.acc.mean;
            out.checks.push(Check::new(
                format!("rf_ddim_gap_n{n}"),
                gap >= 0.05,
                format!("gap {:.2} percentage points (need >= 5)", 100.0 * gap),
            ));
        }
    }
    let rf: Vec<&Cell> = cfg.bench.steps.iter().filter_map(|&n| cell_of(&cells, EulerRf, n)).collect();
    if rf.len() >= 2 {
        ensure!(
            cfg.bench.steps.windows(2).all(|w| w[0] < w[1]),
            "bench.steps must be strictly increasing"
        );
        let (ok, detail) = non_increasing(&rf);
        out.checks.push(Check::new("rf_non_increasing_in_n", ok, detail));
    }
    Ok(out)
}

/// Accuracy against the guidance scale at the config's step count.
pub fn bench_guidance(cfg: &ExperimentConfig) -> Result<BenchResult> {
    ensure!(cfg.label.is_some(), "bench-guidance needs a class label");
    ensure!(
        cfg.bench.guidance.windows(2).all(|w| w[0] < w[1]),
        "bench.guidance must be strictly increasing"
    );
    let models = Models::new(cfg)?;
    let kinds = samplers(cfg)?;
    let mut out = BenchResult::default();
    let mut cells = Vec::new();
    for &kind in &kinds {
        for (i, &w) in cfg.bench.guidance.iter().enumerate() {
            let spec = CellSpec {
                kind,
                w: Some(w),
                steps: cfg.steps,
                distortions: &[],
            };
            let cell = run_cell(cfg, &models, &spec)?;
            out.rows.push(sampler_row(kind, cfg.steps, w, cfg, &cell));
            out.timings.push(Timing {
                row: format!("{kind} w={w}"),
                wall_secs: cell.wall_secs,
            });
            if w == 1.0 {
                let bare = run_cell(cfg, &models, &CellSpec { w: None, ..spec })?;
                out.checks.push(Check::new(
                    format!("{kind}_w1_matches_conditional"),
                    bare.outcomes == cell.outcomes,
                    "trial outcomes at w=1 against the unguided conditional run",
                ));
            }
            cells.push((kind, i, cell));
        }
    }
    for &kind in &kinds {
        let col: Vec<&Cell> = (0..cfg.bench.guidance.len()).filter_map(|i| cell_of(&cells, kind, i)).collect();
        if col.len() >= 2 {
            let (ok, detail) = non_increasing(&col);
            out.checks.push(Check::new(format!("{kind}_non_increasing_in_w"), ok, detail));
        }
    }
    for (i, &w) in cfg.bench.guidance.iter().enumerate() {
        if let (Some(ddim), Some(ddpm)) = (
            cell_of(&cells, SamplerKind::Ddim, i),
            cell_of(&cells, SamplerKind::Ddpm, i),
        ) {
            out.checks.push(Check::new(
                format!("ddpm_below_ddim_w{w}"),
                ddpm.acc.mean < ddim.acc.mean,
                format!("ddim {:.4}, ddpm {:.4}", ddim.acc.mean, ddpm.acc.mean),
            ));
        }
    }
    Ok(out)
}

struct RobustRow {
    group: &'static str,
    label: String,
    cell: Cell,
}

/// Accuracy under single and combined distortions with the config's sampler,
/// step count and guidance scale.
pub fn bench_robustness(cfg: &ExperimentConfig) -> Result<BenchResult> {
    let models = Models::new(cfg)?;
    let kind = cfg.sampler_kind()?;
    let b = &cfg.bench;
    let d = |dc: DistortionConfig| cfg.distortion(&dc);
    let mut plan: Vec<(&'static str, Vec<Distortion>)> = Vec::new();
    let mut noise_sweep = b.noise_stds.clone();
    noise_sweep.sort_by(f64::total_cmp);
    for &std in &noise_sweep {
        if std == 0.0 {
            plan.push(("lossless", vec![]));
        } else {
            plan.push(("noise", vec![d(DistortionConfig::Noise { std })?]));
        }
    }
    for &quality in &b.jpeg_qualities {
        plan.push(("jpeg", vec![d(DistortionConfig::Jpeg { quality })?]));
    }
    for &k in &b.median_kernels {
        plan.push(("median", vec![d(DistortionConfig::Median { k })?]));
    }
    for &k in &b.blur_kernels {
        plan.push(("gblur", vec![d(DistortionConfig::GaussianBlur { k })?]));
    }
    for &scale in &b.resize_scales {
        plan.push(("resize", vec![d(DistortionConfig::Resize { scale })?]));
    }
    let q = d(DistortionConfig::Jpeg { quality: b.combo_jpeg_quality })?;
    let n = d(DistortionConfig::Noise { std: b.combo_noise_std })?;
    let m = d(DistortionConfig::Median { k: b.combo_median_k })?;
    for single in [("jpeg", q), ("noise", n), ("median", m)] {
        if !plan.iter().any(|(_, ds)| ds.as_slice() == [single.1]) {
            plan.push((single.0, vec![single.1]));
        }
    }
    let combos = [vec![q, m], vec![q, n], vec![n, m], vec![q, n, m]];
    for c in &combos {
        plan.push(("combined", c.clone()));
    }

    let mut rows = Vec::new();
    for (group, ds) in plan {
        let cell = run_cell(
            cfg,
            &models,
            &CellSpec {
                kind,
                w: Some(cfg.guidance),
                steps: cfg.steps,
                distortions: &ds,
            },
        )?;
        let label = if ds.is_empty() {
            "lossless".to_string()
        } else {
            ds.iter().map(|x| x.label()).collect::<Vec<_>>().join("+")
        };
        rows.push(RobustRow { group, label, cell });
    }

    let mut out = BenchResult::default();
    for r in &rows {
        out.rows.push(vec![
            SCHEMA_VERSION.into(),
            r.group.into(),
            r.label.clone(),
            cfg.trials.to_string(),
            fmt_f(r.cell.acc.mean),
            fmt_f(r.cell.acc.se),
            fmt_f(r.cell.l2.mean),
        ]);
        out.timings.push(Timing {
            row: r.label.clone(),
            wall_secs: r.cell.wall_secs,
        });
    }
    let find = |ds: &[Distortion]| -> &Cell {
        let label = ds.iter().map(|x| x.label()).collect::<Vec<_>>().join("+");
        let label = if label.is_empty() { "lossless".into() } else { label };
        &rows.iter().find(|r| r.label == label).expect("planned row").cell
    };
    if let Some(lossless) = rows.iter().find(|r| r.group == "lossless") {
        out.checks.push(Check::new(
            "lossless_exact",
            lossless.cell.acc.mean == 1.0,
            format!("lossless accuracy {:.6}", lossless.cell.acc.mean),
        ));
    }
    let sweep: Vec<&Cell> = noise_sweep
        .iter()
        .map(|&std| {
            if std == 0.0 {
                find(&[])
            } else {
                find(&[Distortion::GaussianNoise { std }])
            }
        })
        .collect();
    if sweep.len() >= 2 {
        let (ok, detail) = non_increasing(&sweep);
        out.checks.push(Check::new("noise_sweep_non_increasing", ok, detail));
    }
    for c in &combos {
        let combined = find(c);
        let worst = c
            .iter()
            .map(|x| find(std::slice::from_ref(x)))
            .min_by(|a, b| a.acc.mean.total_cmp(&b.acc.mean))
            .expect("non-empty combination");
        out.checks.push(Check::new(
            format!("combined_not_above_constituents:{}", c.iter().map(|x| x.label()).collect::<Vec<_>>().join("+")),
            combined.not_above(worst),
            format!("combined {:.4}, weakest constituent {:.4}", combined.acc.mean, worst.acc.mean),
        ));
    }
    let all = find(&combos[3]);
    let others: Vec<&Cell> = combos[..3].iter().map(|c| find(c)).collect();
    out.checks.push(Check::new(
        "all_three_is_minimum_combination",
        others.iter().all(|o| all.not_above(o)),
        format!(
            "all three {:.4}, pairs [{}]",
            all.acc.mean,
            others.iter().map(|o| format!("{:.4}", o.acc.mean)).collect::<Vec<_>>().join(", ")
        ),
    ));
    Ok(out)
}

/// Which latents a class is made of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    /// Fresh keyed standard normals.
    Cover,
    /// Sign-mapped random messages.
    Stego,
    /// Negative control: magnitudes without signs.
    Broken,
}

impl Source {
    fn tag(self) -> &'static str {
        match self {
            Source::Cover => "cover",
            Source::Stego => "stego",
            Source::Broken => "broken",
        }
    }
}

/// `(x0, xT)` for every sample of one class.
fn security_class(
    cfg: &ExperimentConfig,
    models: &Models,
    source: Source,
    class_key: &StegoKey,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d = cfg.dim();
    let map = mapping(cfg)?;
    let kind = cfg.sampler_kind()?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = models.with_transport(kind, Some(cfg.guidance), |transport| {
        let setup = TrialSetup {
            master: class_key.clone(),
            mapping: map,
            transport,
            grid: TimeGrid::uniform(cfg.steps)?,
            label: cfg.label,
            codec: codec(cfg),
            distortions: vec![],
        };
        (0..cfg.security.per_class as u64)
            .into_par_iter()
            .map(|i| {
                let keys = trial_keys(class_key, i, cfg.message_len)?;
                let x0 = match source {
                    Source::Cover => LatentVector::with_shape(keys.stego.normals(0, d), cfg.grid[0], cfg.grid[1])?,
                    Source::Stego => embed_message(&keys.message, &keys.stego, &map)?,
                    Source::Broken => LatentVector::with_shape(magnitudes(&keys.stego, d), cfg.grid[0], cfg.grid[1])?,
                };
                let traj = setup.forward(&x0, &keys.noise)?;
                let xt = setup.transmit(traj.end(), keys.channel_seed)?;
                Ok((x0.into_vec(), xt.into_vec()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(pairs.into_iter().unzip())
}

/// Cover-vs-stego detectability of initial and transported latents.
pub fn security(cfg: &ExperimentConfig) -> Result<BenchResult> {
    let models = Models::new(cfg)?;
    let root = cfg.master_key()?.child("security", 0);
    let split = DetectionSplit::ratio_8_1_1(cfg.security.per_class);
    let class = |source: Source, replica: u64| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        security_class(cfg, &models, source, &root.child(source.tag(), replica))
    };
    let cover = class(Source::Cover, 0)?;
    let comparisons = [
        ("cover-vs-cover", class(Source::Cover, 1)?),
        ("cover-vs-stego", class(Source::Stego, 0)?),
        ("cover-vs-broken", class(Source::Broken, 0)?),
    ];
    let mut out = BenchResult::default();
    for (name, other) in &comparisons {
        for (stage, a, b) in [("x0", &cover.0, &other.0), ("xT", &cover.1, &other.1)] {
            let start = std::time::Instant::now();
            let det = detection_error(a, b, split)?;
            let fr = frechet_distance(a, b)?;
            let en = energy_distance(a, b)?;
            out.rows.push(vec![
                SCHEMA_VERSION.into(),
                (*name).into(),
                stage.into(),
                cfg.security.per_class.to_string(),
                split.test.to_string(),
                fmt_f(det.p_fa),
                fmt_f(det.p_md),
                fmt_f(det.p_e),
                fmt_f(fr.value),
                fmt_f(en.value),
                u8::from(det.regularized || fr.regularized || en.regularized).to_string(),
            ]);
            out.timings.push(Timing {
                row: format!("{name} {stage}"),
                wall_secs: start.elapsed().as_secs_f64(),
            });
            let (ok, want) = match *name {
                "cover-vs-broken" => (det.p_e < 0.2, "< 0.2"),
                _ => ((0.45..=0.55).contains(&det.p_e), "in [0.45, 0.55]"),
            };
            out.checks.push(Check::new(
                format!("{name}_{stage}_p_e"),
                ok,
                format!("P_E {:.4} (want {want})", det.p_e),
            ));
        }
    }
    Ok(out)
}
