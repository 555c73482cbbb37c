//! `render`: PNG visualizations of array files.

use std::path::PathBuf;

use clap::Args;

use crate::error::Result;
use crate::io;
use crate::npy::read_npy;
use crate::render;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Array file to visualize.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub kind: RenderKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RenderKind {
    /// u8 instance-mask stack (K, H, W).
    Masks,
    /// float32 probability maps (K, H, W).
    Prob,
    /// float32 entropy map (H, W).
    Entropy,
}

pub fn run(args: RenderArgs) -> Result<()> {
    let array = read_npy(&args.input)?;
    match args.kind {
        RenderKind::Masks => {
            let masks = io::array_to_masks(&array, &args.input)?;
            render::render_masks(&args.out, &masks)?;
        }
        RenderKind::Prob => render::render_probabilities(&args.out, &array)?,
        RenderKind::Entropy => {
            let unc = io::array_to_entropy(&array, &args.input)?;
            render::render_entropy(&args.out, &unc)?;
        }
    }
    println!("rendered {}", args.out.display());
    Ok(())
}
