//! Seeded generators standing in for a trained network: worm-like scenes,
//! noisy embedding maps around planted cluster centers, and posterior draws
//! with controllable split/merge/dropout errors.
//!
//! Everything is a pure function of (config, seed); see [`crate::seed`] for
//! the derivation scheme.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agglomeration::DrawSet;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, Mask};
use crate::mask::InstanceMasks;
use crate::maps::{EmbeddingMap, SemanticClass, SemanticMap};
use crate::seed::stream_rng;

const SCENE_STREAM: u64 = 0x0;
const EMBEDDING_STREAM: u64 = 0x1;
const DRAW_STREAM_BASE: u64 = 0x100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub n_instances: usize,
    /// Inclusive range of walk lengths in pixels.
    pub worm_length_range: (usize, usize),
    pub worm_thickness: usize,
    /// Target fraction of instances that cross another instance.
    pub overlap_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 256,
            width: 256,
            n_instances: 6,
            worm_length_range: (40, 80),
            worm_thickness: 3,
            overlap_fraction: 0.25,
            rng_seed: 0,
        }
    }
}

/// A generated scene. `placed` can fall short of `requested` when the
/// placement retries run out; callers should warn in that case.
#[derive(Debug, Clone)]
pub struct Scene {
    pub gt: InstanceMasks,
    pub sem_gt: SemanticMap,
    pub requested: usize,
    pub placed: usize,
}

const PLACEMENT_ATTEMPTS: usize = 50;

/// Rasterize smoothed random-walk worms and derive the semantic map
/// (pixels covered by two or more instances form the overlap class).
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    if cfg.worm_thickness == 0 {
        return Err(Error::invalid_param("worm_thickness", "must be >= 1"));
    }
    if cfg.worm_length_range.0 == 0 || cfg.worm_length_range.0 > cfg.worm_length_range.1 {
        return Err(Error::invalid_param(
            "worm_length_range",
            "must be a nonempty range of positive lengths",
        ));
    }
    if !(0.0..=1.0).contains(&cfg.overlap_fraction) {
        return Err(Error::OutOfRange {
            name: "overlap_fraction",
            value: cfg.overlap_fraction,
        });
    }
    let (h, w) = (cfg.height, cfg.width);
    let mut gt = InstanceMasks::new(h, w)?;
    let mut rng = stream_rng(cfg.rng_seed, SCENE_STREAM);
    let n = cfg.n_instances;
    let n_overlap = ((cfg.overlap_fraction * n as f64).round() as usize).min(n);
    let radius = cfg.worm_thickness as f64 / 2.0;
    let margin = radius.ceil();

    let mut existing_pixels: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut placed = 0usize;
    for i in 0..n {
        let want_overlap = i + n_overlap >= n && !existing_pixels.is_empty();
        let mut accepted = None;
        for _attempt in 0..PLACEMENT_ATTEMPTS {
            let (start_r, start_c) = if want_overlap {
                let host = rng.gen_range(0..existing_pixels.len());
                let px = existing_pixels[host][rng.gen_range(0..existing_pixels[host].len())];
                (px.0 as f64, px.1 as f64)
            } else {
                (
                    rng.gen_range(margin..h as f64 - margin),
                    rng.gen_range(margin..w as f64 - margin),
                )
            };
            let length = rng.gen_range(cfg.worm_length_range.0..=cfg.worm_length_range.1);
            let mask = walk_worm(&mut rng, (start_r, start_c), length, radius, h, w);
            if mask.count_ones() < length.min(4) {
                continue;
            }
            let crosses = gt.iter().any(|m| m.intersects(&mask));
            if crosses == want_overlap {
                accepted = Some(mask);
                break;
            }
        }
        if let Some(mask) = accepted {
            existing_pixels.push(pixels_of(&mask));
            gt.push(mask)?;
            placed += 1;
        }
    }

    let mut coverage = Grid2D::filled(h, w, 0u8)?;
    for m in gt.iter() {
        for (cov, &on) in coverage.as_mut_slice().iter_mut().zip(m.iter()) {
            *cov = cov.saturating_add(u8::from(on));
        }
    }
    let classes = coverage.map(|&c| match c {
        0 => SemanticClass::Background,
        1 => SemanticClass::Foreground,
        _ => SemanticClass::Overlap,
    });
    Ok(Scene {
        gt,
        sem_gt: SemanticMap::one_hot(&classes),
        requested: n,
        placed,
    })
}

fn walk_worm(
    rng: &mut impl Rng,
    start: (f64, f64),
    length: usize,
    radius: f64,
    h: usize,
    w: usize,
) -> Mask {
    let mut mask = Mask::filled(h, w, false).expect("valid shape");
    let (mut r, mut c) = start;
    let mut theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let margin = radius.ceil().max(1.0);
    let stamp = |mask: &mut Mask, r: f64, c: f64| {
        let reach = radius.ceil() as i64;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if (dr * dr + dc * dc) as f64 <= radius * radius {
                    let rr = r.round() as i64 + dr;
                    let cc = c.round() as i64 + dc;
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        mask.set(rr as usize, cc as usize, true);
                    }
                }
            }
        }
    };
    stamp(&mut mask, r, c);
    for _ in 0..length {
        theta += rng.gen_range(-0.35..0.35);
        let (mut nr, mut nc) = (r + theta.sin(), c + theta.cos());
        // reflect off the borders
        if nr < margin || nr > h as f64 - 1.0 - margin {
            theta = -theta;
            nr = r + theta.sin();
        }
        if nc < margin || nc > w as f64 - 1.0 - margin {
            theta = std::f64::consts::PI - theta;
            nc = c + theta.cos();
        }
        r = nr.clamp(margin, h as f64 - 1.0 - margin);
        c = nc.clamp(margin, w as f64 - 1.0 - margin);
        stamp(&mut mask, r, c);
    }
    mask
}

fn pixels_of(mask: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = mask.shape();
    let mut out = Vec::with_capacity(mask.count_ones());
    for r in 0..h {
        for c in 0..w {
            if *mask.get(r, c) {
                out.push((r, c));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-axis Gaussian noise on instance-pixel embeddings.
    pub embedding_sigma: f64,
    /// Minimum pairwise distance of planted cluster centers.
    pub center_separation: f64,
    /// Per-draw, per-instance error probabilities.
    pub split_rate: f64,
    pub merge_rate: f64,
    pub dropout_rate: f64,
    /// Maximum radius of per-draw boundary erosion/dilation; 0 disables.
    pub boundary_jitter: usize,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            embedding_sigma: 0.3,
            center_separation: 8.0,
            split_rate: 0.0,
            merge_rate: 0.0,
            dropout_rate: 0.0,
            boundary_jitter: 0,
            rng_seed: 0,
        }
    }
}

impl NoiseConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("split_rate", self.split_rate),
            ("merge_rate", self.merge_rate),
            ("dropout_rate", self.dropout_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { name, value: v });
            }
        }
        if self.center_separation <= 0.0 {
            return Err(Error::OutOfRange {
                name: "center_separation",
                value: self.center_separation,
            });
        }
        if self.embedding_sigma < 0.0 {
            return Err(Error::OutOfRange {
                name: "embedding_sigma",
                value: self.embedding_sigma,
            });
        }
        Ok(())
    }
}

/// Planted cluster center for instance `i`: one lattice axis per instance,
/// cycling through dimensions with growing multiples, so pairwise distances
/// are at least `separation`.
fn planted_center(i: usize, dim: usize, separation: f64) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    c[i % dim] = separation * (1 + i / dim) as f64;
    c
}

/// Embeddings for a ground-truth scene: each instance pixel receives its
/// planted center plus Gaussian noise (a pixel shared by several instances
/// follows the lowest instance index); background pixels carry a constant
/// far-away filler vector.
pub fn simulate_embeddings(
    gt: &InstanceMasks,
    cfg: &NoiseConfig,
    dim: usize,
) -> Result<EmbeddingMap> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::invalid_param("dim", "must be >= 1"));
    }
    let (h, w) = gt.shape();
    let centers: Vec<Vec<f64>> = (0..gt.len())
        .map(|i| planted_center(i, dim, cfg.center_separation))
        .collect();
    let filler = vec![-cfg.center_separation; dim];

    let mut owner = Grid2D::filled(h, w, usize::MAX)?;
    for (i, mask) in gt.iter().enumerate().rev() {
        for (o, &on) in owner.as_mut_slice().iter_mut().zip(mask.iter()) {
            if on {
                *o = i;
            }
        }
    }

    let mut rng = stream_rng(cfg.rng_seed, EMBEDDING_STREAM);
    let mut emb = EmbeddingMap::zeros(h, w, dim)?;
    for row in 0..h {
        for col in 0..w {
            let o = *owner.get(row, col);
            let v = emb.vector_mut(row, col);
            if o == usize::MAX {
                v.copy_from_slice(&filler);
            } else {
                v.copy_from_slice(&centers[o]);
                if cfg.embedding_sigma > 0.0 {
                    for x in v.iter_mut() {
                        let n: f64 = rng.sample(StandardNormal);
                        *x += cfg.embedding_sigma * n;
                    }
                }
            }
        }
    }
    Ok(emb)
}

/// An error event injected into one draw. Instance indices refer to the
/// ground-truth instance list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrawEvent {
    Dropped { instance: usize },
    Split { instance: usize },
    Merged { primary: usize, absorbed: usize },
    Jittered { instance: usize, grown: bool, radius: usize },
}

impl DrawEvent {
    /// Ground-truth instances touched by the event.
    pub fn instances(&self) -> Vec<usize> {
        match *self {
            DrawEvent::Dropped { instance }
            | DrawEvent::Split { instance }
            | DrawEvent::Jittered { instance, .. } => vec![instance],
            DrawEvent::Merged { primary, absorbed } => vec![primary, absorbed],
        }
    }
}

/// Draws plus the per-draw provenance log of injected errors.
#[derive(Debug, Clone)]
pub struct SimulatedDraws {
    pub draws: DrawSet,
    pub events: Vec<Vec<DrawEvent>>,
}

/// Perturb the ground truth into `t_draws` posterior draws.
///
/// Per draw and instance, independently: removal with `dropout_rate`, a
/// deterministic halving split with `split_rate`, union with the nearest
/// instance with `merge_rate`, and boundary jitter up to `boundary_jitter`
/// pixels. The split cut and merge partner depend only on the ground truth,
/// so repeated events produce identical error geometry across draws. Jitter
/// applies only to instances free of other events in that draw.
pub fn simulate_draws(gt: &InstanceMasks, cfg: &NoiseConfig, t_draws: usize) -> Result<SimulatedDraws> {
    cfg.validate()?;
    if t_draws == 0 {
        return Err(Error::invalid_param("t_draws", "must be >= 1"));
    }
    let (h, w) = gt.shape();
    let k = gt.len();
    let halves: Vec<Option<(Mask, Mask)>> = gt.iter().map(split_mask).collect();
    let partners: Vec<Option<usize>> = nearest_partners(gt);

    let mut draws = Vec::with_capacity(t_draws);
    let mut all_events = Vec::with_capacity(t_draws);
    for draw_idx in 0..t_draws {
        let mut rng = stream_rng(cfg.rng_seed, DRAW_STREAM_BASE + draw_idx as u64);
        // sample all decisions up front so the stream layout is fixed
        let mut drop_flag = vec![false; k];
        let mut split_flag = vec![false; k];
        let mut merge_flag = vec![false; k];
        let mut jitter: Vec<(bool, usize)> = vec![(false, 0); k];
        for i in 0..k {
            drop_flag[i] = rng.gen_range(0.0..1.0) < cfg.dropout_rate;
            split_flag[i] = rng.gen_range(0.0..1.0) < cfg.split_rate;
            merge_flag[i] = rng.gen_range(0.0..1.0) < cfg.merge_rate;
            if cfg.boundary_jitter > 0 {
                jitter[i] = (rng.gen_bool(0.5), rng.gen_range(0..=cfg.boundary_jitter));
            }
        }

        let mut events = Vec::new();
        let mut consumed = vec![false; k];
        let mut masks: Vec<Mask> = Vec::new();
        for i in 0..k {
            if consumed[i] {
                continue;
            }
            consumed[i] = true;
            if drop_flag[i] {
                events.push(DrawEvent::Dropped { instance: i });
                continue;
            }
            if split_flag[i] {
                if let Some((a, b)) = &halves[i] {
                    masks.push(a.clone());
                    masks.push(b.clone());
                    events.push(DrawEvent::Split { instance: i });
                    continue;
                }
            }
            if merge_flag[i] {
                if let Some(j) = partners[i] {
                    if !consumed[j] && !drop_flag[j] {
                        consumed[j] = true;
                        let mut union = gt.get(i).clone();
                        union.union_with(gt.get(j));
                        masks.push(union);
                        events.push(DrawEvent::Merged {
                            primary: i,
                            absorbed: j,
                        });
                        continue;
                    }
                }
            }
            let (grow, radius) = jitter[i];
            if radius > 0 {
                let jittered = if grow {
                    dilate(gt.get(i), radius)
                } else {
                    erode(gt.get(i), radius)
                };
                if jittered.any() {
                    masks.push(jittered);
                    events.push(DrawEvent::Jittered {
                        instance: i,
                        grown: grow,
                        radius,
                    });
                    continue;
                }
                // erosion wiped the instance out; keep the original
            }
            masks.push(gt.get(i).clone());
        }
        draws.push(InstanceMasks::with_masks(h, w, masks)?);
        all_events.push(events);
    }
    Ok(SimulatedDraws {
        draws: DrawSet::new(draws)?,
        events: all_events,
    })
}

/// Cut a mask into two balanced halves along its longer bounding-box axis.
/// Returns `None` for single-pixel masks.
pub fn split_mask(mask: &Mask) -> Option<(Mask, Mask)> {
    let pixels = pixels_of(mask);
    if pixels.len() < 2 {
        return None;
    }
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for &(r, c) in &pixels {
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let mut ordered = pixels;
    if r1 - r0 >= c1 - c0 {
        ordered.sort_unstable_by_key(|&(r, c)| (r, c));
    } else {
        ordered.sort_unstable_by_key(|&(r, c)| (c, r));
    }
    let (h, w) = mask.shape();
    let mut a = Mask::filled(h, w, false).expect("valid shape");
    let mut b = Mask::filled(h, w, false).expect("valid shape");
    let half = ordered.len() / 2;
    for (idx, &(r, c)) in ordered.iter().enumerate() {
        if idx < half {
            a.set(r, c, true);
        } else {
            b.set(r, c, true);
        }
    }
    Some((a, b))
}

fn centroid(mask: &Mask) -> (f64, f64) {
    let pixels = pixels_of(mask);
    let n = pixels.len() as f64;
    let (sr, sc) = pixels
        .iter()
        .fold((0.0, 0.0), |(ar, ac), &(r, c)| (ar + r as f64, ac + c as f64));
    (sr / n, sc / n)
}

fn nearest_partners(gt: &InstanceMasks) -> Vec<Option<usize>> {
    let centroids: Vec<(f64, f64)> = gt.iter().map(centroid).collect();
    (0..gt.len())
        .map(|i| {
            let mut best: Option<(usize, f64)> = None;
            for (j, &(r, c)) in centroids.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d2 = (r - centroids[i].0).powi(2) + (c - centroids[i].1).powi(2);
                if best.is_none_or(|(_, bd)| d2 < bd) {
                    best = Some((j, d2));
                }
            }
            best.map(|(j, _)| j)
        })
        .collect()
}

/// Morphological dilation by `radius` steps of 8-neighborhood growth.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.shape();
    let mut cur = mask.clone();
    for _ in 0..radius {
        let mut next = cur.clone();
        for r in 0..h {
            for c in 0..w {
                if *cur.get(r, c) {
                    continue;
                }
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let nr = r as i64 + dr;
                        let nc = c as i64 + dc;
                        if nr >= 0
                            && nc >= 0
                            && (nr as usize) < h
                            && (nc as usize) < w
                            && *cur.get(nr as usize, nc as usize)
                        {
                            next.set(r, c, true);
                            break 'scan;
                        }
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

/// Morphological erosion by `radius` steps (8-neighborhood).
pub fn erode(mask: &Mask, radius: usize) -> Mask {
    let (h, w) = mask.shape();
    let mut cur = mask.clone();
    for _ in 0..radius {
        let mut next = cur.clone();
        for r in 0..h {
            for c in 0..w {
                if !*cur.get(r, c) {
                    continue;
                }
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let nr = r as i64 + dr;
                        let nc = c as i64 + dc;
                        if nr < 0
                            || nc < 0
                            || nr as usize >= h
                            || nc as usize >= w
                            || !*cur.get(nr as usize, nc as usize)
                        {
                            next.set(r, c, false);
                            break 'scan;
                        }
                    }
                }
            }
        }
        cur = next;
    }
    cur
}
