use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use bsi_core::data::{empirical_entropy_bits_per_dim, write_csv};

use crate::common::{create, write_manifest, CliResult, DatasetArgs};

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Write integer levels instead of normalized values
    #[arg(long)]
    pub integer: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &DataArgs) -> CliResult<()> {
    let started = Instant::now();
    let (spec, data) = args.data.load()?;
    let mut w = create(&args.out)?;
    write_csv(&mut w, &data, args.integer)?;
    w.flush()?;
    let entropy = empirical_entropy_bits_per_dim(&data.levels)?;
    write_manifest(
        &args.out,
        "data",
        &(args, &spec),
        &[&args.out],
        &args.data.input_files(),
        Some(serde_json::json!({ "empirical_entropy_bits_per_dim": entropy })),
        started,
    )?;
    Ok(())
}
