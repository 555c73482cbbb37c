//! `proofread-sim`: the guided-correction simulation table.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use probseg_core::proofreading::{simulate, ProofreadSample};

use crate::error::{CliError, Result};
use crate::io::{self, write_json};
use crate::npy::read_npy;

#[derive(Debug, Args)]
pub struct ProofreadArgs {
    /// Run directory (env: PROBSEG_DIR).
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Ascending correction budgets.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 5, 10, 15, 20])]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    /// Output CSV (default: <dir>/simulation.csv); a JSON twin with the
    /// full per-threshold tables is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: ProofreadArgs) -> Result<()> {
    let dir = super::resolve_path(args.dir, "PROBSEG_DIR", "--dir")?;
    if args.ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::config("--ks must be ascending"));
    }

    let mut samples = Vec::new();
    for sample in io::list_samples(&dir)? {
        let pred = super::load_prediction(&sample, args.theta)?;
        let gt = super::load_gt(&sample)?;
        let ent_path = sample.join(io::ENTROPY);
        let uncertainty = io::array_to_entropy(&read_npy(&ent_path)?, &ent_path)?;
        samples.push(ProofreadSample {
            pred,
            gt,
            uncertainty,
        });
    }
    let rows = simulate(&samples, &args.ks, args.patch_size)?;

    let out = args.out.unwrap_or_else(|| dir.join("simulation.csv"));
    let tmp = out.with_extension("csv.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    writeln!(f, "corrections,av_ap,ap50,ap75,recall80,av_ap_dsb")
        .map_err(|e| CliError::io(&tmp, e))?;
    for row in &rows {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.corrections,
            row.report.av_ap,
            row.report.ap50,
            row.report.ap75,
            row.report.recall80,
            row.report.av_ap_dsb
        )
        .map_err(|e| CliError::io(&tmp, e))?;
    }
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, &out).map_err(|e| CliError::io(&out, e))?;
    write_json(&out.with_extension("json"), &rows)?;
    for row in &rows {
        println!(
            "k={:<3} avAP {:.3}  AP.5 {:.3}  AP.75 {:.3}  Recall.8 {:.3}  avAP_dsb {:.3}",
            row.corrections,
            row.report.av_ap,
            row.report.ap50,
            row.report.ap75,
            row.report.recall80,
            row.report.av_ap_dsb
        );
    }
    Ok(())
}
