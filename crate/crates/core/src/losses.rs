//! Metric-learning losses: the discriminative loss over pixel embeddings
//! with hand-derived gradients, the dropout-rate regularizer with its
//! Bernoulli-entropy reward, the relaxed dropout mask sampler, and the
//! three-class semantic cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::maps::EmbeddingMap;

/// Weights and hinge parameter for the discriminative loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminativeConfig {
    /// Hinge parameter: the distance term activates while cluster centers
    /// are closer than twice this margin.
    pub distance_margin: f64,
    pub variance_weight: f64,
    pub distance_weight: f64,
    pub regularization_weight: f64,
    /// If true (default) the hinge is applied to the *squared* center
    /// distance, `[2*margin - d^2]_+^2`. If false, the classic unsquared
    /// form `[2*margin - d]_+^2` is used instead.
    pub hinge_on_squared_norm: bool,
}

impl Default for DiscriminativeConfig {
    fn default() -> Self {
        Self {
            distance_margin: 4.0,
            variance_weight: 1.0,
            distance_weight: 1.0,
            regularization_weight: 0.001,
            hinge_on_squared_norm: true,
        }
    }
}

/// Per-pixel instance ids; 0 means unassigned/background.
///
/// Ids must form a contiguous range 1..=C with at least one pixel each.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAssignment {
    ids: Grid2D<u32>,
    n_instances: usize,
    pixel_counts: Vec<usize>,
}

impl InstanceAssignment {
    pub fn from_ids(ids: Grid2D<u32>) -> Result<Self> {
        let n_instances = ids.iter().copied().max().unwrap_or(0) as usize;
        let mut pixel_counts = vec![0usize; n_instances];
        for &id in ids.iter() {
            if id > 0 {
                pixel_counts[(id - 1) as usize] += 1;
            }
        }
        if let Some(missing) = pixel_counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid_param(
                "ids",
                format!("instance id {} has no pixels", missing + 1),
            ));
        }
        Ok(Self {
            ids,
            n_instances,
            pixel_counts,
        })
    }

    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    pub fn shape(&self) -> (usize, usize) {
        self.ids.shape()
    }

    #[inline]
    pub fn id_at(&self, row: usize, col: usize) -> u32 {
        *self.ids.get(row, col)
    }

    pub fn pixel_count(&self, instance: usize) -> usize {
        self.pixel_counts[instance]
    }

    pub fn ids(&self) -> &Grid2D<u32> {
        &self.ids
    }
}

/// Value of the discriminative loss, split by term, plus the per-instance
/// embedding centers the terms were evaluated at.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub variance: f64,
    pub distance: f64,
    pub regularization: f64,
    pub centers: Vec<Vec<f64>>,
}

fn check_loss_inputs(emb: &EmbeddingMap, assign: &InstanceAssignment) -> Result<()> {
    if emb.shape() != assign.shape() {
        return Err(Error::ShapeMismatch {
            expected: emb.shape(),
            actual: assign.shape(),
        });
    }
    if assign.n_instances() == 0 {
        return Err(Error::NoInstances);
    }
    Ok(())
}

/// Per-instance embedding means. Pixels with id 0 contribute nowhere.
fn instance_centers(emb: &EmbeddingMap, assign: &InstanceAssignment) -> Vec<Vec<f64>> {
    let d = emb.dim();
    let c = assign.n_instances();
    let mut centers = vec![vec![0.0; d]; c];
    let (h, w) = emb.shape();
    for row in 0..h {
        for col in 0..w {
            let id = assign.id_at(row, col);
            if id == 0 {
                continue;
            }
            let center = &mut centers[(id - 1) as usize];
            for (acc, &v) in center.iter_mut().zip(emb.vector(row, col)) {
                *acc += v;
            }
        }
    }
    for (center, &n) in centers.iter_mut().zip(&assign.pixel_counts) {
        for v in center.iter_mut() {
            *v /= n as f64;
        }
    }
    centers
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The discriminative loss.
///
/// The variance term pulls embeddings towards their instance center and
/// carries no hinge; the distance term pushes centers apart with a squared
/// hinge over ordered center pairs (zero when only one instance exists);
/// the regularization term draws centers towards the origin.
pub fn discriminative_loss(
    emb: &EmbeddingMap,
    assign: &InstanceAssignment,
    cfg: &DiscriminativeConfig,
) -> Result<LossBreakdown> {
    check_loss_inputs(emb, assign)?;
    let centers = instance_centers(emb, assign);
    let c = assign.n_instances();
    let cf = c as f64;

    let mut variance = 0.0;
    let (h, w) = emb.shape();
    for row in 0..h {
        for col in 0..w {
            let id = assign.id_at(row, col);
            if id == 0 {
                continue;
            }
            let k = (id - 1) as usize;
            variance +=
                sq_dist(&centers[k], emb.vector(row, col)) / assign.pixel_count(k) as f64;
        }
    }
    variance /= cf;

    let mut distance = 0.0;
    if c > 1 {
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                let d2 = sq_dist(&centers[a], &centers[b]);
                let arg = if cfg.hinge_on_squared_norm {
                    2.0 * cfg.distance_margin - d2
                } else {
                    2.0 * cfg.distance_margin - d2.sqrt()
                };
                if arg > 0.0 {
                    distance += arg * arg;
                }
            }
        }
        distance /= cf * (cf - 1.0);
    }

    let regularization =
        centers.iter().map(|mu| mu.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / cf;

    let total = cfg.variance_weight * variance
        + cfg.distance_weight * distance
        + cfg.regularization_weight * regularization;

    Ok(LossBreakdown {
        total,
        variance,
        distance,
        regularization,
        centers,
    })
}

/// Exact gradient of [`discriminative_loss`]'s total with respect to every
/// embedding vector; zero at unassigned pixels.
pub fn discriminative_loss_grad(
    emb: &EmbeddingMap,
    assign: &InstanceAssignment,
    cfg: &DiscriminativeConfig,
) -> Result<EmbeddingMap> {
    check_loss_inputs(emb, assign)?;
    let centers = instance_centers(emb, assign);
    let c = assign.n_instances();
    let cf = c as f64;
    let d = emb.dim();

    // Center-level gradient of the distance and regularization terms. The
    // variance term's dependence through the centers cancels, leaving only
    // the direct 2*(e - mu) part handled per pixel below.
    let mut center_grad = vec![vec![0.0; d]; c];
    if c > 1 {
        let norm = cf * (cf - 1.0);
        for a in 0..c {
            for b in 0..c {
                if a == b {
                    continue;
                }
                let d2 = sq_dist(&centers[a], &centers[b]);
                if cfg.hinge_on_squared_norm {
                    let arg = 2.0 * cfg.distance_margin - d2;
                    if arg > 0.0 {
                        // d/d mu_a of [2m - d2]^2, counting both ordered pairs.
                        let coef = cfg.distance_weight * (-8.0) * arg / norm;
                        for i in 0..d {
                            center_grad[a][i] += coef * (centers[a][i] - centers[b][i]);
                        }
                    }
                } else {
                    let dist = d2.sqrt();
                    let arg = 2.0 * cfg.distance_margin - dist;
                    if arg > 0.0 && dist > 1e-12 {
                        let coef = cfg.distance_weight * (-4.0) * arg / (norm * dist);
                        for i in 0..d {
                            center_grad[a][i] += coef * (centers[a][i] - centers[b][i]);
                        }
                    }
                }
            }
        }
    }
    for (g, mu) in center_grad.iter_mut().zip(&centers) {
        for (gi, &mi) in g.iter_mut().zip(mu) {
            *gi += cfg.regularization_weight * 2.0 * mi / cf;
        }
    }

    let (h, w) = emb.shape();
    let mut grad = EmbeddingMap::zeros(h, w, d)?;
    for row in 0..h {
        for col in 0..w {
            let id = assign.id_at(row, col);
            if id == 0 {
                continue;
            }
            let k = (id - 1) as usize;
            let n = assign.pixel_count(k) as f64;
            let var_coef = cfg.variance_weight * 2.0 / (cf * n);
            let e = emb.vector(row, col);
            let g = grad.vector_mut(row, col);
            for i in 0..d {
                g[i] = var_coef * (e[i] - centers[k][i]) + center_grad[k][i] / n;
            }
        }
    }
    Ok(grad)
}

/// One dropout layer's contribution to the rate regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteLayerSpec {
    /// Squared Frobenius norm of the pre-dropout weight matrix.
    pub weight_sq_norm: f64,
    /// Dropout probability, strictly inside (0, 1).
    pub dropout_p: f64,
    /// Number of nodes in the layer.
    pub nodes: usize,
}

/// Global parameters of the dropout-rate regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcreteConfig {
    /// Training-set size N.
    pub train_set_size: usize,
    /// Squared prior length scale.
    pub prior_length_scale_sq: f64,
    /// Weight of the entropy reward on dropout rates.
    pub entropy_weight: f64,
    /// Temperature of the relaxed Bernoulli mask.
    pub temperature: f64,
}

impl Default for ConcreteConfig {
    fn default() -> Self {
        Self {
            train_set_size: 50,
            prior_length_scale_sq: 1e-6,
            entropy_weight: 1e-3,
            temperature: 0.1,
        }
    }
}

fn validate_concrete_cfg(cfg: &ConcreteConfig) -> Result<()> {
    if cfg.train_set_size == 0 {
        return Err(Error::invalid_param("train_set_size", "must be >= 1"));
    }
    if cfg.prior_length_scale_sq <= 0.0 {
        return Err(Error::OutOfRange {
            name: "prior_length_scale_sq",
            value: cfg.prior_length_scale_sq,
        });
    }
    if cfg.entropy_weight < 0.0 {
        return Err(Error::OutOfRange {
            name: "entropy_weight",
            value: cfg.entropy_weight,
        });
    }
    if cfg.temperature <= 0.0 {
        return Err(Error::OutOfRange {
            name: "temperature",
            value: cfg.temperature,
        });
    }
    Ok(())
}

/// Weight-decay-plus-entropy regularizer over dropout layers:
/// `(1/N) * sum_l [ iota^2 (1-p_l)/2 * ||M_l||^2 - zeta * F_l * H(p_l) ]`.
pub fn concrete_regularizer(layers: &[ConcreteLayerSpec], cfg: &ConcreteConfig) -> Result<f64> {
    validate_concrete_cfg(cfg)?;
    if layers.is_empty() {
        return Err(Error::EmptyInput("layers"));
    }
    let mut sum = 0.0;
    for layer in layers {
        if layer.weight_sq_norm < 0.0 {
            return Err(Error::OutOfRange {
                name: "weight_sq_norm",
                value: layer.weight_sq_norm,
            });
        }
        if !(layer.dropout_p > 0.0 && layer.dropout_p < 1.0) {
            return Err(Error::OutOfRange {
                name: "dropout_p",
                value: layer.dropout_p,
            });
        }
        if layer.nodes == 0 {
            return Err(Error::invalid_param("nodes", "must be >= 1"));
        }
        sum += cfg.prior_length_scale_sq * (1.0 - layer.dropout_p) / 2.0 * layer.weight_sq_norm;
        sum -= cfg.entropy_weight * layer.nodes as f64 * bernoulli_entropy(layer.dropout_p)?;
    }
    Ok(sum / cfg.train_set_size as f64)
}

/// Entropy of a Bernoulli variable, `-p ln p - (1-p) ln(1-p)`, with the
/// convention `0 ln 0 = 0`.
pub fn bernoulli_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
        });
    }
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.ln();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).ln();
    }
    Ok(h)
}

/// One sample of the relaxed dropout mask:
/// `z = sigmoid((logit p + logit u) / temperature)`.
///
/// The sample parameterizes *dropping*: as the temperature approaches zero,
/// z converges to 1 with probability p (unit dropped) and to 0 otherwise
/// (unit kept). Deterministic given `(p, temperature, u)`.
pub fn concrete_dropout_mask(p: f64, temperature: f64, u: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange {
            name: "p",
            value: p,
        });
    }
    if temperature <= 0.0 {
        return Err(Error::OutOfRange {
            name: "temperature",
            value: temperature,
        });
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::OutOfRange {
            name: "u",
            value: u,
        });
    }
    let logit = (p.ln() - (1.0 - p).ln() + u.ln() - (1.0 - u).ln()) / temperature;
    Ok(sigmoid(logit))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a class-logit triple.
pub fn softmax3(logits: [f64; 3]) -> [f64; 3] {
    let m = logits[0].max(logits[1]).max(logits[2]);
    let e = [
        (logits[0] - m).exp(),
        (logits[1] - m).exp(),
        (logits[2] - m).exp(),
    ];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn check_ce_inputs(logits: &Grid2D<[f64; 3]>, labels: &Grid2D<u8>) -> Result<()> {
    if !logits.same_shape(labels) {
        return Err(Error::ShapeMismatch {
            expected: logits.shape(),
            actual: labels.shape(),
        });
    }
    if labels.iter().any(|&l| l > 2) {
        return Err(Error::invalid_param("labels", "class ids must be 0, 1 or 2"));
    }
    Ok(())
}

/// Mean softmax cross-entropy of three-class logits against a class grid.
pub fn cross_entropy_loss(logits: &Grid2D<[f64; 3]>, labels: &Grid2D<u8>) -> Result<f64> {
    check_ce_inputs(logits, labels)?;
    let mut sum = 0.0;
    for (l, &label) in logits.iter().zip(labels.iter()) {
        let p = softmax3(*l);
        sum -= p[label as usize].max(f64::MIN_POSITIVE).ln();
    }
    Ok(sum / logits.len() as f64)
}

/// Gradient of [`cross_entropy_loss`] with respect to the logits:
/// `(softmax - onehot) / n_pixels` per pixel.
pub fn cross_entropy_grad(
    logits: &Grid2D<[f64; 3]>,
    labels: &Grid2D<u8>,
) -> Result<Grid2D<[f64; 3]>> {
    check_ce_inputs(logits, labels)?;
    let n = logits.len() as f64;
    let mut out = Vec::with_capacity(logits.len());
    for (l, &label) in logits.iter().zip(labels.iter()) {
        let mut p = softmax3(*l);
        p[label as usize] -= 1.0;
        out.push([p[0] / n, p[1] / n, p[2] / n]);
    }
    Grid2D::from_vec(logits.height(), logits.width(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn emb_1d(values: &[f64]) -> EmbeddingMap {
        EmbeddingMap::from_vec(1, values.len(), 1, values.to_vec()).unwrap()
    }

    fn assign_1xn(ids: &[u32]) -> InstanceAssignment {
        InstanceAssignment::from_ids(Grid2D::from_vec(1, ids.len(), ids.to_vec()).unwrap())
            .unwrap()
    }

    #[test]
    fn rejects_gapped_ids() {
        let ids = Grid2D::from_vec(1, 3, vec![1u32, 3, 3]).unwrap();
        assert!(InstanceAssignment::from_ids(ids).is_err());
    }

    #[test]
    fn single_instance_at_common_mean() {
        let emb = emb_1d(&[2.0, 2.0, 2.0]);
        let assign = assign_1xn(&[1, 1, 1]);
        let cfg = DiscriminativeConfig::default();
        let out = discriminative_loss(&emb, &assign, &cfg).unwrap();
        assert_eq!(out.variance, 0.0);
        assert_eq!(out.distance, 0.0);
        assert_eq!(out.regularization, 4.0); // ||mu||^2 = 4
    }

    #[test]
    fn variance_hand_value() {
        // one instance, embeddings {0, 2}: mu = 1, variance = (1+1)/2 = 1
        let emb = emb_1d(&[0.0, 2.0]);
        let assign = assign_1xn(&[1, 1]);
        let out = discriminative_loss(&emb, &assign, &DiscriminativeConfig::default()).unwrap();
        assert_eq!(out.variance, 1.0);
        assert_eq!(out.centers, vec![vec![1.0]]);
    }

    #[test]
    fn distance_hand_value_squared_hinge() {
        // centers 0 and 2, margin 4: hinge arg = 8 - 4 = 4, sum over ordered
        // pairs = 16 + 16, normalized by C(C-1) = 2 -> 16.
        let emb = emb_1d(&[0.0, 2.0]);
        let assign = assign_1xn(&[1, 2]);
        let out = discriminative_loss(&emb, &assign, &DiscriminativeConfig::default()).unwrap();
        assert_eq!(out.distance, 16.0);
    }

    #[test]
    fn distance_inactive_beyond_hinge() {
        // centers 0 and 3: squared distance 9 > 2*margin = 8
        let emb = emb_1d(&[0.0, 3.0]);
        let assign = assign_1xn(&[1, 2]);
        let out = discriminative_loss(&emb, &assign, &DiscriminativeConfig::default()).unwrap();
        assert_eq!(out.distance, 0.0);
    }

    #[test]
    fn no_instances_is_an_error() {
        let emb = emb_1d(&[0.0, 1.0]);
        let ids = Grid2D::from_vec(1, 2, vec![0u32, 0]).unwrap();
        let assign = InstanceAssignment::from_ids(ids).unwrap();
        assert!(matches!(
            discriminative_loss(&emb, &assign, &DiscriminativeConfig::default()),
            Err(Error::NoInstances)
        ));
    }

    #[test]
    fn gradient_zero_at_stationary_point() {
        let emb = EmbeddingMap::from_vec(1, 3, 2, vec![1.0, -2.0, 1.0, -2.0, 1.0, -2.0]).unwrap();
        let assign = assign_1xn(&[1, 1, 1]);
        let cfg = DiscriminativeConfig {
            regularization_weight: 0.0,
            ..DiscriminativeConfig::default()
        };
        let grad = discriminative_loss_grad(&emb, &assign, &cfg).unwrap();
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_zero_at_unassigned_pixels() {
        let emb = emb_1d(&[1.0, 5.0, -3.0]);
        let assign = assign_1xn(&[1, 0, 2]);
        let grad =
            discriminative_loss_grad(&emb, &assign, &DiscriminativeConfig::default()).unwrap();
        assert_eq!(grad.vector(0, 1), &[0.0]);
    }

    #[test]
    fn doubling_variance_weight_doubles_its_gradient() {
        let emb = emb_1d(&[0.0, 2.0, 7.0]);
        let assign = assign_1xn(&[1, 1, 2]);
        let base = DiscriminativeConfig {
            distance_weight: 0.0,
            regularization_weight: 0.0,
            ..DiscriminativeConfig::default()
        };
        let doubled = DiscriminativeConfig {
            variance_weight: 2.0,
            ..base.clone()
        };
        let g1 = discriminative_loss_grad(&emb, &assign, &base).unwrap();
        let g2 = discriminative_loss_grad(&emb, &assign, &doubled).unwrap();
        for (a, b) in g1.as_slice().iter().zip(g2.as_slice()) {
            assert_abs_diff_eq!(2.0 * a, *b, epsilon = 1e-12);
        }
    }

    /// Central finite differences of the total loss.
    fn numeric_grad(
        emb: &EmbeddingMap,
        assign: &InstanceAssignment,
        cfg: &DiscriminativeConfig,
        step: f64,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(emb.as_slice().len());
        for i in 0..emb.as_slice().len() {
            let mut plus = emb.clone();
            plus.as_mut_slice()[i] += step;
            let mut minus = emb.clone();
            minus.as_mut_slice()[i] -= step;
            let lp = discriminative_loss(&plus, assign, cfg).unwrap().total;
            let lm = discriminative_loss(&minus, assign, cfg).unwrap().total;
            out.push((lp - lm) / (2.0 * step));
        }
        out
    }

    fn random_case(
        rng: &mut ChaCha8Rng,
    ) -> (EmbeddingMap, InstanceAssignment) {
        let h = rng.gen_range(1..=8);
        let w = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=4);
        let c = rng.gen_range(1..=4.min(h * w));
        let mut ids = vec![0u32; h * w];
        // guarantee each id occurs at least once
        for (i, id) in ids.iter_mut().take(c).enumerate() {
            *id = (i + 1) as u32;
        }
        for id in ids.iter_mut().skip(c) {
            *id = rng.gen_range(0..=c) as u32;
        }
        let data: Vec<f64> = (0..h * w * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        (
            EmbeddingMap::from_vec(h, w, d, data).unwrap(),
            InstanceAssignment::from_ids(Grid2D::from_vec(h, w, ids).unwrap()).unwrap(),
        )
    }

    #[test]
    fn gradient_matches_finite_differences_both_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let (emb, assign) = random_case(&mut rng);
            for squared in [true, false] {
                let cfg = DiscriminativeConfig {
                    hinge_on_squared_norm: squared,
                    ..DiscriminativeConfig::default()
                };
                let analytic = discriminative_loss_grad(&emb, &assign, &cfg).unwrap();
                let numeric = numeric_grad(&emb, &assign, &cfg, 1e-4);
                for (&a, &n) in analytic.as_slice().iter().zip(&numeric) {
                    let rel = (a - n).abs() / a.abs().max(n.abs()).max(1.0);
                    assert!(
                        rel < 1e-5,
                        "case {case} squared={squared}: analytic {a} vs numeric {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn translation_leaves_variance_and_distance_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (emb, assign) = random_case(&mut rng);
            let cfg = DiscriminativeConfig::default();
            let before = discriminative_loss(&emb, &assign, &cfg).unwrap();
            let shift: Vec<f64> = (0..emb.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut moved = emb.clone();
            for px in 0..emb.shape().0 * emb.shape().1 {
                for i in 0..emb.dim() {
                    moved.as_mut_slice()[px * emb.dim() + i] += shift[i];
                }
            }
            let after = discriminative_loss(&moved, &assign, &cfg).unwrap();
            assert_abs_diff_eq!(before.variance, after.variance, epsilon = 1e-9);
            assert_abs_diff_eq!(before.distance, after.distance, epsilon = 1e-8);
        }
    }

    #[test]
    fn concrete_regularizer_hand_value() {
        // iota^2=1e-6, zeta=1e-3, N=50, one layer F=100, ||M||^2=2000, p=0.2
        let cfg = ConcreteConfig {
            train_set_size: 50,
            ..ConcreteConfig::default()
        };
        let layers = [ConcreteLayerSpec {
            weight_sq_norm: 2000.0,
            dropout_p: 0.2,
            nodes: 100,
        }];
        let v = concrete_regularizer(&layers, &cfg).unwrap();
        let expected =
            (1e-6 * 0.8 / 2.0 * 2000.0 - 1e-3 * 100.0 * bernoulli_entropy(0.2).unwrap()) / 50.0;
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v, -9.848e-4, epsilon = 1e-7);
    }

    #[test]
    fn concrete_regularizer_small_p_is_weight_decay() {
        let cfg = ConcreteConfig {
            train_set_size: 10,
            ..ConcreteConfig::default()
        };
        let layers = [ConcreteLayerSpec {
            weight_sq_norm: 100.0,
            dropout_p: 1e-12,
            nodes: 1,
        }];
        let v = concrete_regularizer(&layers, &cfg).unwrap();
        let decay_only = 1e-6 * 100.0 / 2.0 / 10.0;
        assert_abs_diff_eq!(v, decay_only, epsilon = 1e-12);
    }

    #[test]
    fn concrete_regularizer_zero_weights_minimized_at_half() {
        let cfg = ConcreteConfig {
            train_set_size: 5,
            ..ConcreteConfig::default()
        };
        let value = |p: f64| {
            concrete_regularizer(
                &[ConcreteLayerSpec {
                    weight_sq_norm: 0.0,
                    dropout_p: p,
                    nodes: 7,
                }],
                &cfg,
            )
            .unwrap()
        };
        let at_half = value(0.5);
        assert_abs_diff_eq!(
            at_half,
            -1e-3 * 7.0 * std::f64::consts::LN_2 / 5.0,
            epsilon = 1e-15
        );
        for p in [0.1, 0.3, 0.7, 0.9] {
            assert!(value(p) > at_half);
        }
    }

    #[test]
    fn entropy_values() {
        assert_abs_diff_eq!(
            bernoulli_entropy(0.5).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(bernoulli_entropy(0.0).unwrap(), 0.0);
        assert_eq!(bernoulli_entropy(1.0).unwrap(), 0.0);
        // H(1/8) = (1/8) ln 8 + (7/8) ln(8/7)
        assert_abs_diff_eq!(bernoulli_entropy(0.125).unwrap(), 0.376770, epsilon = 1e-6);
        assert!(bernoulli_entropy(-0.1).is_err());
        assert!(bernoulli_entropy(1.1).is_err());
    }

    #[test]
    fn entropy_symmetry_and_concavity() {
        for i in 1..50 {
            let p = i as f64 / 50.0;
            assert_abs_diff_eq!(
                bernoulli_entropy(p).unwrap(),
                bernoulli_entropy(1.0 - p).unwrap(),
                epsilon = 1e-12
            );
        }
        // midpoint test on a sampled grid
        for i in 1..24 {
            for j in (i + 1)..25 {
                let p = i as f64 / 25.0;
                let q = j as f64 / 25.0;
                let mid = bernoulli_entropy(0.5 * (p + q)).unwrap();
                let avg = 0.5 * (bernoulli_entropy(p).unwrap() + bernoulli_entropy(q).unwrap());
                assert!(mid > avg);
            }
        }
    }

    #[test]
    fn dropout_mask_symmetry_point() {
        assert_abs_diff_eq!(
            concrete_dropout_mask(0.5, 1.0, 0.5).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dropout_mask_hand_value() {
        // p=0.3, t=0.1, u=0.5: z = sigmoid(ln(3/7)/0.1)
        let z = concrete_dropout_mask(0.3, 0.1, 0.5).unwrap();
        let expected = 1.0 / (1.0 + ((0.7f64 / 0.3).ln() / 0.1).exp());
        assert_abs_diff_eq!(z, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(z, 2.0900e-4, epsilon = 1e-7);
    }

    #[test]
    fn dropout_mask_sharpens_towards_drop() {
        // logit(0.3) + logit(0.9) > 0, so the zero-temperature limit is 1
        let z = concrete_dropout_mask(0.3, 1e-3, 0.9).unwrap();
        assert!(z > 0.999);
    }

    #[test]
    fn dropout_mask_rejects_degenerate_u() {
        assert!(concrete_dropout_mask(0.5, 0.1, 0.0).is_err());
        assert!(concrete_dropout_mask(0.5, 0.1, 1.0).is_err());
    }

    #[test]
    fn dropout_mask_monotone_in_u() {
        for &p in &[0.2, 0.5, 0.8] {
            let mut prev = 0.0;
            for i in 1..100 {
                let u = i as f64 / 100.0;
                let z = concrete_dropout_mask(p, 0.4, u).unwrap();
                assert!(z > prev);
                prev = z;
            }
        }
    }

    #[test]
    fn dropout_mask_mean_approaches_p_at_low_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for &p in &[0.25, 0.5, 0.7] {
            let n = 100_000;
            let mut sum = 0.0;
            for _ in 0..n {
                let u: f64 = rng.gen_range(1e-12..1.0);
                sum += concrete_dropout_mask(p, 0.02, u).unwrap();
            }
            let mean = sum / n as f64;
            assert!(
                (mean - p).abs() < 0.01,
                "mean {mean} should be within 0.01 of p={p}"
            );
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 3;
        let w = 4;
        let logits: Vec<[f64; 3]> = (0..h * w)
            .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let labels: Vec<u8> = (0..h * w).map(|_| rng.gen_range(0..3) as u8).collect();
        let logits = Grid2D::from_vec(h, w, logits).unwrap();
        let labels = Grid2D::from_vec(h, w, labels).unwrap();
        let grad = cross_entropy_grad(&logits, &labels).unwrap();
        let step = 1e-5;
        for px in 0..h * w {
            for k in 0..3 {
                let mut plus = logits.clone();
                plus.as_mut_slice()[px][k] += step;
                let mut minus = logits.clone();
                minus.as_mut_slice()[px][k] -= step;
                let numeric = (cross_entropy_loss(&plus, &labels).unwrap()
                    - cross_entropy_loss(&minus, &labels).unwrap())
                    / (2.0 * step);
                let analytic = grad.as_slice()[px][k];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
                assert!(rel < 1e-5);
            }
        }
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_small() {
        let logits = Grid2D::from_vec(1, 2, vec![[20.0, 0.0, 0.0], [0.0, 20.0, 0.0]]).unwrap();
        let labels = Grid2D::from_vec(1, 2, vec![0u8, 1]).unwrap();
        assert!(cross_entropy_loss(&logits, &labels).unwrap() < 1e-8);
    }
}
