//! Scratch probe for the proofreading-trend scenario (not shipped; used to
//! pick stable geometry before freezing the acceptance test).

use std::collections::BTreeSet;

use probseg_core::agglomeration::agglomerate_draws;
use probseg_core::evaluation::ScoredPrediction;
use probseg_core::proofreading::{simulate, ProofreadSample};
use probseg_core::seed::split_seed;
use probseg_core::synthetic::{generate_scene, simulate_draws, NoiseConfig, SceneConfig};
use probseg_core::uncertainty::entropy_map;

fn main() {
    let base_seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(7);
    let n_samples = 50;
    let mut samples = Vec::new();
    let mut clean = Vec::new();
    let mut n_sites = 0usize;
    for i in 0..n_samples {
        let sample_seed = split_seed(base_seed, i as u64);
        let scene = generate_scene(&SceneConfig {
            height: 96,
            width: 96,
            n_instances: 4,
            worm_length_range: (10, 16),
            worm_thickness: 3,
            overlap_fraction: 0.0,
            rng_seed: sample_seed,
        })
        .unwrap();
        assert_eq!(scene.placed, 4, "sample {i} placement shortfall");
        let noise = NoiseConfig {
            split_rate: 0.15,
            merge_rate: 0.15,
            rng_seed: sample_seed,
            ..NoiseConfig::default()
        };
        let sim = simulate_draws(&scene.gt, &noise, 8).unwrap();
        let sites: BTreeSet<usize> = sim
            .events
            .iter()
            .flatten()
            .flat_map(|e| e.instances())
            .collect();
        n_sites += sites.len();
        let p = agglomerate_draws(&sim.draws);
        let (_, combined) = entropy_map(&p);
        samples.push(ProofreadSample {
            pred: ScoredPrediction::from_probabilistic(&p, 0.75).unwrap(),
            gt: scene.gt.clone(),
            uncertainty: combined,
        });

        let clean_sim = simulate_draws(&scene.gt, &NoiseConfig::default(), 8).unwrap();
        let clean_p = agglomerate_draws(&clean_sim.draws);
        clean.push((
            ScoredPrediction::from_probabilistic(&clean_p, 0.75).unwrap(),
            scene.gt.clone(),
        ));
    }
    let (clean_report, _) = probseg_core::evaluation::evaluate_dataset(&clean).unwrap();
    println!("noise-free av_ap_dsb  = {}", clean_report.av_ap_dsb);
    println!("error sites           = {n_sites}");

    let ks = vec![0, 5, 10, 15, 20, n_sites];
    let rows = simulate(&samples, &ks, 4).unwrap();
    for row in &rows {
        println!(
            "k={:<4} av_ap_dsb={:.6} avAP={:.6} recall80={:.6}",
            row.corrections, row.report.av_ap_dsb, row.report.av_ap, row.report.recall80
        );
    }
    let monotone = rows
        .windows(2)
        .all(|w| w[1].report.av_ap_dsb >= w[0].report.av_ap_dsb - 1e-12);
    let last = rows.last().unwrap();
    println!("monotone (all ks)     = {monotone}");
    println!(
        "k=#sites recovers     = {}",
        last.report.av_ap_dsb == clean_report.av_ap_dsb
    );
}
