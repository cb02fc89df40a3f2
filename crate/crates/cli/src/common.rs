use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use serde::Serialize;
use sha2::{Digest, Sha256};

use bsi_core::data::{generate, DataKind, Dataset, DatasetSpec};
use bsi_core::trainer::{load_checkpoint, Checkpoint};

/// Failure classes mapped onto exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    /// one-atom, two-atom, ones, standard-normal, gaussian-mixture, or a JSON dataset spec file
    #[arg(long, default_value = "two-atom")]
    pub dataset: String,
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Quantization levels
    #[arg(long, default_value_t = 256)]
    pub r: u32,
    /// Number of dataset samples to generate
    #[arg(long, default_value_t = 1000)]
    pub num_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

impl DatasetArgs {
    pub fn spec(&self) -> CliResult<DatasetSpec> {
        let n = self.dim;
        if n == 0 {
            return Err(usage("--dim must be at least 1"));
        }
        let kind = match self.dataset.as_str() {
            "one-atom" => DataKind::PointSet {
                atoms: vec![(0..n).map(|d| [0.3, -0.2, 0.5, 0.1][d % 4]).collect()],
                weights: vec![1.0],
            },
            "two-atom" => DataKind::PointSet {
                atoms: vec![vec![-0.5; n], vec![0.5; n]],
                weights: vec![0.5, 0.5],
            },
            "ones" => DataKind::PointSet {
                atoms: vec![vec![1.0; n]],
                weights: vec![1.0],
            },
            "standard-normal" => DataKind::StandardNormal,
            "gaussian-mixture" => DataKind::GaussianMixture {
                means: vec![vec![-0.5; n], vec![0.5; n]],
                std: 0.1,
                weights: vec![0.5, 0.5],
            },
            path if path.ends_with(".json") => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading dataset spec {path}"))?;
                let spec: DatasetSpec = serde_json::from_str(&text)
                    .with_context(|| format!("parsing dataset spec {path}"))?;
                spec.validate()?;
                return Ok(spec);
            }
            other => return Err(usage(format!("unknown dataset '{other}'"))),
        };
        let spec = DatasetSpec {
            kind,
            dim: n,
            r: self.r,
            seed: self.data_seed,
        };
        spec.validate().map_err(|e| usage(e.to_string()))?;
        Ok(spec)
    }

    pub fn load(&self) -> CliResult<(DatasetSpec, Dataset)> {
        if self.num_samples == 0 {
            return Err(usage("--num-samples must be at least 1"));
        }
        let spec = self.spec()?;
        let data = generate(&spec, self.num_samples)?;
        Ok((spec, data))
    }

    /// Dataset file inputs, for hashing.
    pub fn input_files(&self) -> Vec<PathBuf> {
        if self.dataset.ends_with(".json") {
            vec![PathBuf::from(&self.dataset)]
        } else {
            Vec::new()
        }
    }
}

pub fn read_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    load_checkpoint(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(CliError::Runtime)
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// `<path>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("bad value '{v}' in {flag}")))
        })
        .collect()
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    subcommand: &'a str,
    config: &'a C,
    artifacts: Vec<String>,
    inputs: Vec<String>,
    input_sha256: String,
    wall_clock_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<serde_json::Value>,
}

/// Writes `<primary>.manifest.json` describing one run.
pub fn write_manifest<C: Serialize>(
    primary: &Path,
    subcommand: &str,
    config: &C,
    artifacts: &[&Path],
    inputs: &[PathBuf],
    result: Option<serde_json::Value>,
    started: Instant,
) -> CliResult<PathBuf> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config)?);
    for input in inputs {
        let bytes = std::fs::read(input).with_context(|| format!("hashing {}", input.display()))?;
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    let manifest = RunManifest {
        subcommand,
        config,
        artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        input_sha256: hex::encode(hasher.finalize()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        result,
    };
    let path = sibling(primary, "manifest.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}
