//! `evaluate`: benchmark metrics against ground truth.

use std::path::PathBuf;

use clap::Args;

use probseg_core::evaluation::{
    evaluate_dataset, evaluate_image, format_report_table, ScoredPrediction,
};

use crate::error::{CliError, Result};
use crate::io::{self, write_json};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory: evaluates every sample and writes report.json
    /// (env: PROBSEG_DIR).
    #[arg(long, conflicts_with_all = ["pred", "gt"])]
    pub dir: Option<PathBuf>,
    /// Single-pair mode: predicted masks (u8 stack) or probability maps.
    #[arg(long, requires = "gt")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Optional per-instance scores for --pred mask stacks.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Binarization threshold for probability maps.
    #[arg(long, default_value_t = 0.75)]
    pub theta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the metric table.
    #[arg(long, default_value_t = true)]
    pub table: bool,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    if let (Some(pred_path), Some(gt_path)) = (&args.pred, &args.gt) {
        let gt = io::read_masks(gt_path)?;
        let array = crate::npy::read_npy(pred_path)?;
        let pred = match &array.data {
            crate::npy::NpyData::F32(_) => {
                io::scored_from_prob_array(&array, args.theta, pred_path)?
            }
            _ => {
                let masks = io::array_to_masks(&array, pred_path)?;
                match &args.scores {
                    Some(s) => ScoredPrediction::new(masks.clone(), io::read_scores(s, masks.len())?)
                        .map_err(|e| CliError::data(e.to_string()))?,
                    None => ScoredPrediction::uniform(masks),
                }
            }
        };
        let report = evaluate_image(&pred, &gt)?;
        if let Some(out) = &args.out {
            write_json(out, &report)?;
        }
        if args.table {
            print!("{}", format_report_table(&[("prediction".to_string(), &report)]));
        }
        return Ok(());
    }

    let dir = super::resolve_path(args.dir, "PROBSEG_DIR", "--dir")?;
    let mut samples = Vec::new();
    for sample in io::list_samples(&dir)? {
        let pred = super::load_prediction(&sample, args.theta)?;
        let gt = super::load_gt(&sample)?;
        samples.push((pred, gt));
    }
    let (report, skipped) = evaluate_dataset(&samples)?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} image(s) without ground-truth instances");
    }
    let out = args.out.unwrap_or_else(|| dir.join("report.json"));
    write_json(&out, &report)?;
    if args.table {
        print!(
            "{}",
            format_report_table(&[(format!("dataset ({} images)", report.images), &report)])
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}
