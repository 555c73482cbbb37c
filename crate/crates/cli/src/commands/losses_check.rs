//! `losses-check`: gradient self-test against central finite differences,
//! plus an assertion that the default constants are wired as documented.

use clap::Args;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use probseg_core::losses::{
    discriminative_loss, discriminative_loss_grad, DiscriminativeConfig, InstanceAssignment,
};
use probseg_core::{EmbeddingMap, Grid2D};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Args)]
pub struct LossesCheckArgs {
    #[arg(long, default_value_t = 25)]
    pub cases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub max_relative_error: f64,
}

fn random_case(rng: &mut ChaCha8Rng) -> (EmbeddingMap, InstanceAssignment) {
    let h = rng.gen_range(1..=8);
    let w = rng.gen_range(1..=8);
    let d = rng.gen_range(1..=4);
    let c = rng.gen_range(1..=4.min(h * w));
    let mut ids = vec![0u32; h * w];
    for (i, id) in ids.iter_mut().take(c).enumerate() {
        *id = (i + 1) as u32;
    }
    for id in ids.iter_mut().skip(c) {
        *id = rng.gen_range(0..=c) as u32;
    }
    let data: Vec<f64> = (0..h * w * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
    (
        EmbeddingMap::from_vec(h, w, d, data).expect("finite values"),
        InstanceAssignment::from_ids(Grid2D::from_vec(h, w, ids).expect("sized"))
            .expect("contiguous ids"),
    )
}

pub fn run(args: LossesCheckArgs) -> Result<()> {
    // default constants must stay wired as documented
    let cfg = PipelineConfig::default();
    let checks: [(&str, f64, f64); 8] = [
        ("distance_margin", cfg.discriminative.distance_margin, 4.0),
        (
            "regularization_weight",
            cfg.discriminative.regularization_weight,
            0.001,
        ),
        (
            "prior_length_scale_sq",
            cfg.concrete.prior_length_scale_sq,
            1e-6,
        ),
        ("entropy_weight", cfg.concrete.entropy_weight, 1e-3),
        ("draws", cfg.draws as f64, 8.0),
        ("binarize_threshold", cfg.binarize_threshold, 0.75),
        ("patch_size", cfg.patch_size as f64, 4.0),
        ("embedding_dim", cfg.embedding_dim as f64, 16.0),
    ];
    for (name, actual, expected) in checks {
        if actual != expected {
            return Err(CliError::data(format!(
                "default {name} = {actual}, expected {expected}"
            )));
        }
    }
    println!("defaults: ok ({} constants checked)", checks.len());

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 0.0;
    for case in 0..args.cases {
        let (emb, assign) = random_case(&mut rng);
        for squared in [true, false] {
            let loss_cfg = DiscriminativeConfig {
                hinge_on_squared_norm: squared,
                ..DiscriminativeConfig::default()
            };
            let analytic = discriminative_loss_grad(&emb, &assign, &loss_cfg)?;
            for i in 0..emb.as_slice().len() {
                let mut plus = emb.clone();
                plus.as_mut_slice()[i] += args.step;
                let mut minus = emb.clone();
                minus.as_mut_slice()[i] -= args.step;
                let numeric = (discriminative_loss(&plus, &assign, &loss_cfg)?.total
                    - discriminative_loss(&minus, &assign, &loss_cfg)?.total)
                    / (2.0 * args.step);
                let a = analytic.as_slice()[i];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
                if rel >= args.max_relative_error {
                    return Err(CliError::data(format!(
                        "case {case} (squared hinge: {squared}): gradient mismatch, \
                         analytic {a} vs finite-difference {numeric} (relative error {rel:.3e})"
                    )));
                }
            }
        }
    }
    println!(
        "gradients: ok ({} cases, both hinge variants, worst relative error {worst:.3e})",
        args.cases
    );
    Ok(())
}
