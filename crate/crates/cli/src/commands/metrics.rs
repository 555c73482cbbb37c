//! `metrics`: accuracy-vs-uncertainty curves over the patch grid.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;

use probseg_core::uncertainty::{
    conditional_probs, counts_from_stats, patch_stats, PatchCounts,
};

use crate::error::{CliError, Result};
use crate::io;
use crate::npy::read_npy;

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Run directory (env: PROBSEG_DIR). Patch counts are pooled over all
    /// samples before the conditional probabilities are formed.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Binarization threshold for probability maps.
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub accuracy_threshold: f64,
    /// Comma-separated ascending uncertainty thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Output CSV (default: <dir>/curves.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_thresholds() -> Vec<f64> {
    (0..=14).map(|i| i as f64 * 0.05).collect()
}

pub fn run(args: MetricsArgs) -> Result<()> {
    let dir = super::resolve_path(args.dir, "PROBSEG_DIR", "--dir")?;
    let thresholds = args.thresholds.unwrap_or_else(default_thresholds);
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::config("--thresholds must be ascending"));
    }

    let mut all_stats = Vec::new();
    for sample in io::list_samples(&dir)? {
        let pred = super::load_prediction(&sample, args.theta)?;
        let gt = super::load_gt(&sample)?;
        let ent_path = sample.join(io::ENTROPY);
        let unc = io::array_to_entropy(&read_npy(&ent_path)?, &ent_path)?;
        all_stats.push(patch_stats(&pred.masks, &gt, &unc, args.patch_size)?);
    }

    let out = args.out.unwrap_or_else(|| dir.join("curves.csv"));
    let tmp = out.with_extension("csv.tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    writeln!(
        f,
        "threshold,p_accurate_given_certain,p_uncertain_given_inaccurate,pavpu"
    )
    .map_err(|e| CliError::io(&tmp, e))?;
    for &t in &thresholds {
        let mut pooled = PatchCounts {
            accurate_certain: 0,
            accurate_uncertain: 0,
            inaccurate_certain: 0,
            inaccurate_uncertain: 0,
        };
        for stats in &all_stats {
            let c = counts_from_stats(stats, args.accuracy_threshold, t);
            pooled.accurate_certain += c.accurate_certain;
            pooled.accurate_uncertain += c.accurate_uncertain;
            pooled.inaccurate_certain += c.inaccurate_certain;
            pooled.inaccurate_uncertain += c.inaccurate_uncertain;
        }
        let probs = conditional_probs(&pooled);
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        writeln!(
            f,
            "{:.6},{},{},{}",
            t,
            cell(probs.accurate_given_certain),
            cell(probs.uncertain_given_inaccurate),
            cell(probs.pavpu)
        )
        .map_err(|e| CliError::io(&tmp, e))?;
    }
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, &out).map_err(|e| CliError::io(&out, e))?;
    println!("curves written to {}", out.display());
    Ok(())
}
