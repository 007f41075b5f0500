//! Dice-family losses with analytic gradients, boundary weight maps, the
//! distance-map regression loss, and the four-part CTV objective.
//!
//! Notation used below: `p` predictions in [0, 1], `q` binary targets,
//! `w` positive per-voxel weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, neighbors6, Mask};

/// Lower/upper clamp applied to predictions before any loss is evaluated.
pub const PRED_CLAMP: f64 = 1e-7;
/// Added to the Dice denominator so empty crops do not divide by zero.
pub const DICE_SMOOTHING: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub boundary_weight: f64,
    pub interior_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            boundary_weight: 0.8,
            interior_weight: 0.2,
        }
    }
}

/// Paired prediction/target/weight grids, flattened.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    p: Vec<f64>,
    q: Vec<f64>,
    w: Vec<f64>,
}

impl LossBatch {
    /// `w = None` means unit weights.
    pub fn new(p: Vec<f64>, q: Vec<f64>, w: Option<Vec<f64>>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::ShapeMismatch(vec![p.len()], vec![q.len()]));
        }
        let w = match w {
            Some(w) if w.len() != p.len() => return Err(Error::ShapeMismatch(vec![p.len()], vec![w.len()])),
            Some(w) => w,
            None => vec![1.0; p.len()],
        };
        if p.is_empty() {
            return Err(Error::InvalidArgument("empty loss batch".into()));
        }
        if q.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("targets must be binary".into()));
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite prediction".into()));
        }
        let p = p.into_iter().map(|v| v.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP)).collect();
        Ok(Self { p, q, w })
    }

    pub fn from_f32(p: &[f32], q: &[f32], w: Option<&[f32]>) -> Result<Self> {
        let cv = |s: &[f32]| s.iter().map(|&v| v as f64).collect::<Vec<_>>();
        Self::new(cv(p), cv(q), w.map(cv))
    }

    pub fn from_mask(p: &[f32], truth: &Mask, w: Option<&[f64]>) -> Result<Self> {
        let q = truth.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new(p.iter().map(|&v| v as f64).collect(), q, w.map(|w| w.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }
}

struct DiceSums {
    overlap: f64,
    denom: f64,
}

fn dice_sums(b: &LossBatch) -> DiceSums {
    let mut overlap = 0.0;
    let mut sp = 0.0;
    let mut sq = 0.0;
    for ((&p, &q), &w) in b.p.iter().zip(&b.q).zip(&b.w) {
        overlap += w * p * q;
        sp += w * p;
        sq += w * q;
    }
    DiceSums {
        overlap,
        denom: sp + sq + DICE_SMOOTHING,
    }
}

/// Weighted negative soft Dice, in [-1, 0].
pub fn dice_loss(b: &LossBatch) -> f64 {
    let s = dice_sums(b);
    -2.0 * s.overlap / s.denom
}

/// Gradient of [`dice_loss`] with respect to each prediction.
///
/// With `A = Σ w p q` and `B = Σ w p + Σ w q + s`, `L = -2A/B` and
/// `∂L/∂p_j = -2 w_j (q_j B - A) / B²`.
pub fn dice_loss_grad(b: &LossBatch) -> Vec<f64> {
    let s = dice_sums(b);
    let b2 = s.denom * s.denom;
    b.q.iter()
        .zip(&b.w)
        .map(|(&q, &w)| -2.0 * w * (q * s.denom - s.overlap) / b2)
        .collect()
}

struct SqrtSums {
    root_overlap: f64,
    root_sum: f64,
    target_sum: f64,
}

fn sqrt_sums(b: &LossBatch, eps: f64) -> SqrtSums {
    let mut root_overlap = 0.0;
    let mut root_sum = 0.0;
    let mut target_sum = 0.0;
    for (&p, &q) in b.p.iter().zip(&b.q) {
        let r = (p + eps).sqrt();
        root_overlap += r * q;
        root_sum += r;
        target_sum += q;
    }
    SqrtSums {
        root_overlap,
        root_sum,
        target_sum,
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")))
    }
}

/// Square-root Dice: `-2 Σ√(p+ε) q / (Σ√(p+ε) + Σq)`. Weights are ignored.
pub fn sqrt_dice_loss(b: &LossBatch, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let s = sqrt_sums(b, eps);
    Ok(-2.0 * s.root_overlap / (s.root_sum + s.target_sum))
}

/// `∂L/∂p_j = -(p_j+ε)^(-1/2) (q_j D - A) / D²` with
/// `A = Σ√(p+ε) q`, `D = Σ√(p+ε) + Σq`.
pub fn sqrt_dice_loss_grad(b: &LossBatch, eps: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    let s = sqrt_sums(b, eps);
    let d = s.root_sum + s.target_sum;
    let d2 = d * d;
    Ok(b.p
        .iter()
        .zip(&b.q)
        .map(|(&p, &q)| -(q * d - s.root_overlap) / ((p + eps).sqrt() * d2))
        .collect())
}

/// 0.8 on voxels whose 6-neighborhood contains both labels, 0.2 elsewhere
/// (with the default config). Both sides of an interface count as boundary.
pub fn boundary_weight_map(mask: &Mask, cfg: &LossConfig) -> Vec<f64> {
    let shape = mask.shape;
    let mut out = vec![cfg.interior_weight; mask.data.len()];
    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                let i = linear_index(shape, x, y, z);
                let v = mask.data[i];
                if neighbors6([x, y, z], shape).any(|q| mask.get(q[0], q[1], q[2]) != v) {
                    out[i] = cfg.boundary_weight;
                }
            }
        }
    }
    out
}

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn mse_loss(pred: &[f32], target: &[f32]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(vec![pred.len()], vec![target.len()]));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty grids".into()));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p as f64 - t as f64;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((sum / n, grad))
}

/// Component values and per-output gradients of the CTV objective.
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    pub total: f64,
    pub main: f64,
    pub aux: [f64; 2],
    pub distance: f64,
    pub grad_main: Vec<f64>,
    pub grad_aux: [Vec<f64>; 2],
    /// `None` when no distance prediction/target was supplied.
    pub grad_distance: Option<Vec<f64>>,
}

/// Boundary-weighted Dice on the main head, unit-weight Dice on the two
/// auxiliary heads, and MSE on the distance head, summed with unit weights.
/// The distance term is skipped when `distance` is `None`.
pub fn composite_ctv_loss(
    main: &[f32],
    aux: [&[f32]; 2],
    distance: Option<(&[f32], &[f32])>,
    truth: &Mask,
    cfg: &LossConfig,
) -> Result<CompositeLoss> {
    let weights = boundary_weight_map(truth, cfg);
    let main_b = LossBatch::from_mask(main, truth, Some(&weights))?;
    let a0 = LossBatch::from_mask(aux[0], truth, None)?;
    let a1 = LossBatch::from_mask(aux[1], truth, None)?;
    let (dist_loss, grad_distance) = match distance {
        Some((pred, target)) => {
            let (l, g) = mse_loss(pred, target)?;
            (l, Some(g))
        }
        None => (0.0, None),
    };
    let main_l = dice_loss(&main_b);
    let aux_l = [dice_loss(&a0), dice_loss(&a1)];
    Ok(CompositeLoss {
        total: main_l + aux_l[0] + aux_l[1] + dist_loss,
        main: main_l,
        aux: aux_l,
        distance: dist_loss,
        grad_main: dice_loss_grad(&main_b),
        grad_aux: [dice_loss_grad(&a0), dice_loss_grad(&a1)],
        grad_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::volume::Spacing;

    fn random_batch(n: usize, seed: u64, weighted: bool) -> LossBatch {
        let mut r = CounterRng::new(seed);
        let p = (0..n).map(|_| r.uniform(0.01, 0.99)).collect();
        let mut q: Vec<f64> = (0..n).map(|_| if r.bernoulli(0.4) { 1.0 } else { 0.0 }).collect();
        q[0] = 1.0;
        let w = weighted.then(|| (0..n).map(|_| r.uniform(0.1, 2.0)).collect());
        LossBatch::new(p, q, w).unwrap()
    }

    #[test]
    fn perfect_overlap_is_minus_one() {
        let q = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let b = LossBatch::new(q.clone(), q, None).unwrap();
        assert!((dice_loss(&b) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn half_probability_half_foreground() {
        let n = 64;
        let q = (0..n).map(|i| if i < n / 2 { 1.0 } else { 0.0 }).collect();
        let b = LossBatch::new(vec![0.5; n], q, None).unwrap();
        assert!((dice_loss(&b) + 0.5).abs() < 1e-9);
    }

    #[test]
    fn dice_matches_direct_summation() {
        for seed in 0..20 {
            let b = random_batch(64, seed, true);
            let num: f64 = (0..64).map(|i| b.w()[i] * b.p()[i] * b.q()[i]).sum();
            let den: f64 = (0..64).map(|i| b.w()[i] * (b.p()[i] + b.q()[i])).sum();
            assert!((dice_loss(&b) - (-2.0 * num / (den + DICE_SMOOTHING))).abs() < 1e-12);
        }
    }

    fn fd_check(b: &LossBatch, f: impl Fn(&LossBatch) -> f64, g: &[f64], h: f64) {
        for j in 0..b.len() {
            let mut plus = b.clone();
            let mut minus = b.clone();
            plus.p[j] += h;
            minus.p[j] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1e-12);
            assert!(rel < 1e-4, "voxel {j}: fd {fd} vs analytic {}", g[j]);
        }
    }

    #[test]
    fn dice_grad_matches_finite_differences() {
        for seed in 0..10 {
            let b = random_batch(36, seed, true);
            fd_check(&b, dice_loss, &dice_loss_grad(&b), 1e-5);
        }
    }

    #[test]
    fn unit_weight_grad_matches_closed_form() {
        let b = random_batch(36, 99, false);
        let sp: f64 = b.p().iter().sum();
        let sq: f64 = b.q().iter().sum();
        let spq: f64 = b.p().iter().zip(b.q()).map(|(p, q)| p * q).sum();
        let g = dice_loss_grad(&b);
        for j in 0..36 {
            let closed = -2.0 * (b.q()[j] * (sp + sq) - spq) / (sp + sq).powi(2);
            assert!((g[j] - closed).abs() < 1e-6 * closed.abs().max(1e-3));
        }
    }

    #[test]
    fn perfect_prediction_gradient() {
        // p == q: background gradient is +2Σq/(2Σq)²
        let q: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let sq: f64 = q.iter().sum();
        let b = LossBatch::new(q.clone(), q.clone(), None).unwrap();
        let g = dice_loss_grad(&b);
        for j in 0..20 {
            let sp: f64 = b.p().iter().sum();
            let spq: f64 = b.p().iter().zip(b.q()).map(|(p, q)| p * q).sum();
            let closed = -2.0 * (b.q()[j] * (sp + sq) - spq) / (sp + sq).powi(2);
            assert!((g[j] - closed).abs() < 1e-6);
            if q[j] == 0.0 {
                assert!((g[j] - 2.0 * sq / (2.0 * sq).powi(2)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn foreground_gets_larger_gradient() {
        let b = random_batch(36, 5, false);
        let g = dice_loss_grad(&b);
        let fg = (0..36)
            .filter(|&i| b.q()[i] == 1.0)
            .map(|i| g[i].abs())
            .fold(f64::MAX, f64::min);
        let bg = (0..36)
            .filter(|&i| b.q()[i] == 0.0)
            .map(|i| g[i].abs())
            .fold(0.0, f64::max);
        assert!(fg > bg);
    }

    #[test]
    fn sqrt_dice_closed_forms() {
        let eps = 1e-6;
        let b = LossBatch::new(vec![1.0; 10], vec![1.0; 10], None).unwrap();
        let want = -2.0 * (1.0f64 + eps).sqrt() / ((1.0f64 + eps).sqrt() + 1.0);
        let got = sqrt_dice_loss(&b, eps).unwrap();
        assert!((got - want).abs() < 1e-6 && (got + 1.0).abs() < 1e-6);
        let b = LossBatch::new(vec![0.0; 10], vec![1.0; 10], None).unwrap();
        let got = sqrt_dice_loss(&b, eps).unwrap();
        // p clamps to 1e-7 before evaluation
        let r = (PRED_CLAMP + eps).sqrt();
        assert!((got - (-2.0 * r / (r + 1.0))).abs() < 1e-12);
        assert!((got + 1.998e-3).abs() < 2e-4);
        assert!(sqrt_dice_loss(&b, 0.0).is_err());
    }

    #[test]
    fn sqrt_dice_matches_direct_summation() {
        for seed in 0..10 {
            let b = random_batch(50, seed, false);
            let eps = 1e-6;
            let a: f64 = (0..50).map(|i| (b.p()[i] + eps).sqrt() * b.q()[i]).sum();
            let s: f64 = (0..50).map(|i| (b.p()[i] + eps).sqrt()).sum();
            let q: f64 = b.q().iter().sum();
            assert!((sqrt_dice_loss(&b, eps).unwrap() + 2.0 * a / (s + q)).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_dice_grad_matches_finite_differences() {
        let eps = 1e-6;
        for seed in 0..10 {
            let b = random_batch(36, seed, false);
            let g = sqrt_dice_loss_grad(&b, eps).unwrap();
            fd_check(&b, |x| sqrt_dice_loss(x, eps).unwrap(), &g, 1e-5);
        }
    }

    #[test]
    fn sqrt_dice_symmetric_at_one() {
        let b = LossBatch::new(vec![1.0; 8], vec![1.0; 8], None).unwrap();
        let g = sqrt_dice_loss_grad(&b, 1e-6).unwrap();
        assert!(g.iter().all(|v| v.is_finite() && *v == g[0]));
    }

    #[test]
    fn scale_free_under_duplication() {
        let b = random_batch(30, 3, true);
        let dup = |v: &[f64]| v.iter().chain(v.iter()).copied().collect::<Vec<_>>();
        let d = LossBatch::new(dup(b.p()), dup(b.q()), Some(dup(b.w()))).unwrap();
        assert!((dice_loss(&b) - dice_loss(&d)).abs() < 1e-8);
        assert!((sqrt_dice_loss(&b, 1e-6).unwrap() - sqrt_dice_loss(&d, 1e-6).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn batch_validation() {
        assert!(LossBatch::new(vec![0.5; 3], vec![1.0; 4], None).is_err());
        assert!(LossBatch::new(vec![0.5; 3], vec![0.5; 3], None).is_err());
        assert!(LossBatch::new(vec![0.5; 3], vec![1.0; 3], Some(vec![0.0; 3])).is_err());
    }

    #[test]
    fn boundary_weights_single_voxel() {
        let sp = Spacing::default();
        let m = Mask::from_fn([7, 7, 7], sp, |x, y, z| (x, y, z) == (3, 3, 3));
        let w = boundary_weight_map(&m, &LossConfig::default());
        let high: Vec<[usize; 3]> = (0..w.len())
            .filter(|&i| w[i] == 0.8)
            .map(|i| crate::volume::unravel(m.shape, i))
            .collect();
        assert_eq!(high.len(), 7);
        assert!(w.iter().all(|&v| v == 0.8 || v == 0.2));
        let full = Mask::from_fn([4, 4, 4], sp, |_, _, _| true);
        assert!(boundary_weight_map(&full, &LossConfig::default())
            .iter()
            .all(|&v| v == 0.2));
        let none = Mask::empty([4, 4, 4], sp);
        assert!(boundary_weight_map(&none, &LossConfig::default())
            .iter()
            .all(|&v| v == 0.2));
    }

    #[test]
    fn boundary_weights_match_brute_force() {
        for seed in 0..10u64 {
            let mut r = CounterRng::new(seed);
            let m = Mask::from_fn([6, 5, 4], Spacing::default(), |_, _, _| r.bernoulli(0.5));
            let w = boundary_weight_map(&m, &LossConfig::default());
            for z in 0..4i64 {
                for y in 0..5i64 {
                    for x in 0..6i64 {
                        let v = m.get(x as usize, y as usize, z as usize);
                        let mut differ = false;
                        for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                            let (a, b, c) = (x + dx, y + dy, z + dz);
                            if (0..6).contains(&a) && (0..5).contains(&b) && (0..4).contains(&c) {
                                differ |= m.get(a as usize, b as usize, c as usize) != v;
                            }
                        }
                        let i = linear_index(m.shape, x as usize, y as usize, z as usize);
                        assert_eq!(w[i], if differ { 0.8 } else { 0.2 });
                    }
                }
            }
        }
    }

    #[test]
    fn mse_cases_and_gradient() {
        let a = [0.1f32, 0.2, 0.3];
        assert_eq!(mse_loss(&a, &a).unwrap().0, 0.0);
        let b = [0.6f32, 0.7, 0.8];
        assert!((mse_loss(&b, &a).unwrap().0 - 0.25).abs() < 1e-7);
        let (_, g) = mse_loss(&a, &b).unwrap();
        let h = 1e-3f32;
        for j in 0..3 {
            let mut p = a;
            let mut m = a;
            p[j] += h;
            m[j] -= h;
            let fd = (mse_loss(&p, &b).unwrap().0 - mse_loss(&m, &b).unwrap().0) / (2.0 * h as f64);
            assert!((fd - g[j]).abs() < 1e-3);
        }
        assert!(mse_loss(&a, &b[..2]).is_err());
    }

    #[test]
    fn composite_perfect_and_additive() {
        let sp = Spacing::default();
        let m = Mask::from_fn([6, 6, 4], sp, |x, y, _| (1..4).contains(&x) && (2..5).contains(&y));
        let p: Vec<f32> = m.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let zeros = vec![0.0f32; p.len()];
        let c = composite_ctv_loss(&p, [&p, &p], Some((&zeros, &zeros)), &m, &LossConfig::default()).unwrap();
        assert!((c.total + 3.0).abs() < 1e-5);
        let d: Vec<f32> = (0..p.len()).map(|i| (i % 5) as f32 * 0.1).collect();
        let c2 = composite_ctv_loss(&p, [&p, &p], Some((&zeros, &d)), &m, &LossConfig::default()).unwrap();
        let md: f64 = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / d.len() as f64;
        assert!((c2.total - c.total - md).abs() < 1e-9);
    }
}
