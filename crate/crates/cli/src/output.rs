//! Result files: CSV tables, JSON metadata, the echoed config and the schema.
//!
//! CSV content depends only on the config and seed. Anything time-dependent
//! goes into the metadata file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: &str = "flowstego-results/1";

/// `(table, [(column, description)])`.
pub const TABLES: &[(&str, &[(&str, &str)])] = &[
    (
        "bench-steps",
        &[
            ("schema", "schema version tag"),
            ("sampler", "euler-rf | ddim | ddpm"),
            ("steps", "number of sampling steps N"),
            ("guidance", "guidance scale w"),
            ("trials", "number of trials"),
            ("acc_mean", "mean extraction accuracy"),
            ("acc_se", "standard error of acc_mean"),
            ("l2_mean", "mean l2 inversion error of the initial latent"),
            ("l2_se", "standard error of l2_mean"),
            ("pcli_mean", "mean PCLI residual (effective-velocity change for diffusion samplers)"),
        ],
    ),
    (
        "bench-guidance",
        &[
            ("schema", "schema version tag"),
            ("sampler", "euler-rf | ddim | ddpm"),
            ("steps", "number of sampling steps N"),
            ("guidance", "guidance scale w"),
            ("trials", "number of trials"),
            ("acc_mean", "mean extraction accuracy"),
            ("acc_se", "standard error of acc_mean"),
            ("l2_mean", "mean l2 inversion error of the initial latent"),
            ("l2_se", "standard error of l2_mean"),
            ("pcli_mean", "mean PCLI residual (effective-velocity change for diffusion samplers)"),
        ],
    ),
    (
        "bench-robustness",
        &[
            ("schema", "schema version tag"),
            ("group", "lossless | noise | jpeg | median | gblur | resize | combined"),
            ("channel", "distortions in application order, joined by '+'"),
            ("trials", "number of trials"),
            ("acc_mean", "mean extraction accuracy"),
            ("acc_se", "standard error of acc_mean"),
            ("l2_mean", "mean l2 inversion error of the initial latent"),
        ],
    ),
    (
        "security",
        &[
            ("schema", "schema version tag"),
            ("comparison", "cover-vs-cover | cover-vs-stego | cover-vs-broken"),
            ("stage", "x0 (initial latent) or xT (transported, post-codec)"),
            ("per_class", "latents per class"),
            ("test", "test latents per class"),
            ("p_fa", "false-alarm rate of the linear detector"),
            ("p_md", "missed-detection rate"),
            ("p_e", "detection error (p_fa + p_md) / 2"),
            ("frechet_standin", "raw-latent Frechet distance squared (stand-in for FID)"),
            ("energy_standin", "raw-latent energy distance (stand-in for FID)"),
            ("regularized", "1 if a ridge was needed for a singular covariance"),
        ],
    ),
];

pub fn columns(table: &str) -> Vec<&'static str> {
    TABLES
        .iter()
        .find(|(t, _)| *t == table)
        .map(|(_, cols)| cols.iter().map(|c| c.0).collect())
        .unwrap_or_default()
}

/// Column documentation appended to `--help`.
pub fn schema_help() -> String {
    let mut s = format!("CSV schema {SCHEMA_VERSION} (also written to schema.json):\n");
    for (table, cols) in TABLES {
        s += &format!("  {table}.csv\n");
        for (c, d) in *cols {
            s += &format!("    {c:<16} {d}\n");
        }
    }
    s
}

#[derive(Serialize)]
struct SchemaColumn<'a> {
    name: &'a str,
    description: &'a str,
}

#[derive(Serialize)]
struct SchemaTable<'a> {
    table: &'a str,
    columns: Vec<SchemaColumn<'a>>,
}

#[derive(Serialize)]
struct SchemaFile<'a> {
    version: &'a str,
    tables: Vec<SchemaTable<'a>>,
}

/// A qualitative finding checked against the measured rows.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub fn fmt_f(x: f64) -> String {
    format!("{x:.8}")
}

pub struct OutputDir {
    pub root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_csv(&self, table: &str, rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.path(&format!("{table}.csv"));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(columns(table))?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_schema(&self) -> Result<PathBuf> {
        let file = SchemaFile {
            version: SCHEMA_VERSION,
            tables: TABLES
                .iter()
                .map(|(table, cols)| SchemaTable {
                    table,
                    columns: cols
                        .iter()
                        .map(|(name, description)| SchemaColumn { name, description })
                        .collect(),
                })
                .collect(),
        };
        self.write_json("schema.json", &file)
    }
}
