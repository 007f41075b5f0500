//! Everything between raw volumes and network inputs: intensity windowing,
//! tiled adaptive histogram equalization, centroids, augmentation and
//! slice balancing.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::rng::CounterRng;
use crate::volume::{linear_index, Mask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AheParams {
    /// Tiles per slice along x and y.
    pub tiles: [usize; 2],
    /// Clip limit as a fraction of the tile pixel count; `None` disables clipping.
    pub clip_limit: Option<f64>,
    pub bins: usize,
}

impl Default for AheParams {
    fn default() -> Self {
        Self {
            tiles: [8, 8],
            clip_limit: Some(0.01),
            bins: 256,
        }
    }
}

/// Per-tile cumulative mapping from bin index to [0, 1].
fn tile_mapping(hist: &mut [f64], total: f64, clip: Option<f64>) -> Vec<f32> {
    let bins = hist.len();
    let occupied = hist.iter().filter(|&&h| h > 0.0).count();
    if occupied <= 1 {
        return (0..bins).map(|k| (k + 1) as f32 / bins as f32).collect();
    }
    if let Some(frac) = clip {
        let limit = (frac * total).max(1.0);
        let mut excess = 0.0;
        for h in hist.iter_mut() {
            if *h > limit {
                excess += *h - limit;
                *h = limit;
            }
        }
        let share = excess / bins as f64;
        for h in hist.iter_mut() {
            *h += share;
        }
    }
    let mut acc = 0.0;
    hist.iter()
        .map(|h| {
            acc += h;
            (acc / total).min(1.0) as f32
        })
        .collect()
}

/// Tile `t` of `n` tiles along an axis of length `len`: [start, end).
fn tile_bounds(len: usize, n: usize, t: usize) -> (usize, usize) {
    (t * len / n, (t + 1) * len / n)
}

/// Interpolation between tile centers along one axis: (lower tile, upper tile, weight of upper).
fn interp_axis(u: usize, len: usize, n: usize) -> (usize, usize, f32) {
    let center = |t: usize| {
        let (a, b) = tile_bounds(len, n, t);
        (a + b) as f32 / 2.0 - 0.5
    };
    let uf = u as f32;
    if n == 1 || uf <= center(0) {
        return (0, 0, 0.0);
    }
    if uf >= center(n - 1) {
        return (n - 1, n - 1, 0.0);
    }
    let mut t = 0;
    while center(t + 1) < uf {
        t += 1;
    }
    let (c0, c1) = (center(t), center(t + 1));
    (t, t + 1, (uf - c0) / (c1 - c0))
}

/// Per-slice tiled adaptive histogram equalization with clipping and bilinear
/// interpolation between tile mappings. Output lies in [0, 1].
pub fn ahe(v: &Volume, p: &AheParams) -> Result<Volume> {
    if p.tiles[0] == 0 || p.tiles[1] == 0 || p.bins < 2 {
        return Err(Error::InvalidArgument(format!("bad AHE params {p:?}")));
    }
    if matches!(p.clip_limit, Some(c) if !(c > 0.0)) {
        return Err(Error::InvalidArgument("clip limit must be positive".into()));
    }
    if !v.is_finite() {
        return Err(Error::InvalidArgument("non-finite intensities".into()));
    }
    let [nx, ny, nz] = v.shape;
    let tx = p.tiles[0].min(nx);
    let ty = p.tiles[1].min(ny);
    let lo = v.min();
    let hi = v.max();
    let range = hi - lo;
    let bins = p.bins;
    let bin_of = |val: f32| -> usize {
        if range <= 0.0 {
            0
        } else {
            (((val - lo) / range * bins as f32) as usize).min(bins - 1)
        }
    };

    let mut out = Volume::zeros(v.shape, v.spacing);
    let mut maps = vec![Vec::new(); tx * ty];
    for z in 0..nz {
        for j in 0..ty {
            let (y0, y1) = tile_bounds(ny, ty, j);
            for i in 0..tx {
                let (x0, x1) = tile_bounds(nx, tx, i);
                let mut hist = vec![0.0f64; bins];
                for y in y0..y1 {
                    for x in x0..x1 {
                        hist[bin_of(v.get(x, y, z))] += 1.0;
                    }
                }
                let total = ((x1 - x0) * (y1 - y0)) as f64;
                maps[i + tx * j] = tile_mapping(&mut hist, total, p.clip_limit);
            }
        }
        for y in 0..ny {
            let (j0, j1, wy) = interp_axis(y, ny, ty);
            for x in 0..nx {
                let (i0, i1, wx) = interp_axis(x, nx, tx);
                let b = bin_of(v.get(x, y, z));
                let m = |i: usize, j: usize| maps[i + tx * j][b];
                let top = m(i0, j0) * (1.0 - wx) + m(i1, j0) * wx;
                let bot = m(i0, j1) * (1.0 - wx) + m(i1, j1) * wx;
                out.set(x, y, z, (top * (1.0 - wy) + bot * wy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(out)
}

/// Linear window `[lo, hi] -> [0, 1]` with clamping.
pub fn window(v: &Volume, lo: f32, hi: f32) -> Volume {
    let mut out = v.clone();
    let r = hi - lo;
    for x in out.data.iter_mut() {
        *x = ((*x - lo) / r).clamp(0.0, 1.0);
    }
    out
}

/// Mean foreground voxel index.
pub fn centroid(mask: &Mask) -> Result<[f64; 3]> {
    let mut s = [0.0f64; 3];
    let mut n = 0usize;
    for z in 0..mask.shape[2] {
        for y in 0..mask.shape[1] {
            for x in 0..mask.shape[0] {
                if mask.data[linear_index(mask.shape, x, y, z)] {
                    s[0] += x as f64;
                    s[1] += y as f64;
                    s[2] += z as f64;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("centroid of an empty mask"));
    }
    Ok([s[0] / n as f64, s[1] / n as f64, s[2] / n as f64])
}

/// In-plane average pooling by an integer factor (trailing remainder dropped).
pub fn downsample_xy(v: &Volume, f: usize) -> Volume {
    let [nx, ny, nz] = v.shape;
    let (mx, my) = (nx / f, ny / f);
    let mut sp = v.spacing;
    sp.dx *= f as f64;
    sp.dy *= f as f64;
    let mut out = Volume::zeros([mx, my, nz], sp);
    let norm = 1.0 / (f * f) as f32;
    for z in 0..nz {
        for y in 0..my {
            for x in 0..mx {
                let mut s = 0.0;
                for dy in 0..f {
                    for dx in 0..f {
                        s += v.get(x * f + dx, y * f + dy, z);
                    }
                }
                out.set(x, y, z, s * norm);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Rotation angles are drawn from the open interval (-max, max).
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    /// Random left-right flip.
    pub flip_x: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            max_rotation_deg: 10.0,
            scale_range: (0.9, 1.1),
            flip_x: true,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg <= 10.0) {
            return Err(Error::InvalidArgument(
                "rotation bound must lie in [0, 10] degrees".into(),
            ));
        }
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0) {
            return Err(Error::InvalidArgument("scale range must bracket 1.0".into()));
        }
        Ok(())
    }
}

/// One in-plane similarity transform about the slice center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InPlaneTransform {
    pub angle_deg: f64,
    pub scale: f64,
    pub flip_x: bool,
}

impl InPlaneTransform {
    pub const IDENTITY: Self = Self {
        angle_deg: 0.0,
        scale: 1.0,
        flip_x: false,
    };

    pub fn sample(p: &AugmentParams, rng: &mut CounterRng) -> Self {
        let angle_deg = if p.max_rotation_deg > 0.0 {
            loop {
                let a = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg);
                if a.abs() < p.max_rotation_deg {
                    break a;
                }
            }
        } else {
            0.0
        };
        let scale = rng.uniform(p.scale_range.0, p.scale_range.1);
        let flip_x = p.flip_x && rng.bernoulli(0.5);
        Self {
            angle_deg,
            scale,
            flip_x,
        }
    }

    /// Source coordinate (in-plane) for destination pixel `(x, y)`.
    /// Forward map: rotate, then scale, then flip, about the slice center.
    fn source(&self, x: f64, y: f64, nx: usize, ny: usize, aspect: f64) -> (f64, f64) {
        let cx = (nx as f64 - 1.0) / 2.0;
        let cy = (ny as f64 - 1.0) / 2.0;
        let mut u = x - cx;
        let v = (y - cy) * aspect;
        if self.flip_x {
            u = -u;
        }
        let (u, v) = (u / self.scale, v / self.scale);
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        // inverse rotation
        let (su, sv) = (c * u + s * v, -s * u + c * v);
        (su + cx, sv / aspect + cy)
    }

    pub fn apply_volume(&self, v: &Volume) -> Volume {
        let [nx, ny, nz] = v.shape;
        let aspect = v.spacing.dy / v.spacing.dx;
        let mut out = Volume::zeros(v.shape, v.spacing);
        for y in 0..ny {
            for x in 0..nx {
                let (sx, sy) = self.source(x as f64, y as f64, nx, ny, aspect);
                let sx = sx.clamp(0.0, (nx - 1) as f64);
                let sy = sy.clamp(0.0, (ny - 1) as f64);
                let x0 = sx.floor() as usize;
                let y0 = sy.floor() as usize;
                let x1 = (x0 + 1).min(nx - 1);
                let y1 = (y0 + 1).min(ny - 1);
                let fx = (sx - x0 as f64) as f32;
                let fy = (sy - y0 as f64) as f32;
                for z in 0..nz {
                    let a = v.get(x0, y0, z) * (1.0 - fx) + v.get(x1, y0, z) * fx;
                    let b = v.get(x0, y1, z) * (1.0 - fx) + v.get(x1, y1, z) * fx;
                    out.set(x, y, z, a * (1.0 - fy) + b * fy);
                }
            }
        }
        out
    }

    pub fn apply_mask(&self, m: &Mask) -> Mask {
        let [nx, ny, nz] = m.shape;
        let aspect = m.spacing.dy / m.spacing.dx;
        let mut out = Mask::empty(m.shape, m.spacing);
        for y in 0..ny {
            for x in 0..nx {
                let (sx, sy) = self.source(x as f64, y as f64, nx, ny, aspect);
                let (rx, ry) = (sx.round(), sy.round());
                if rx < 0.0 || ry < 0.0 || rx > (nx - 1) as f64 || ry > (ny - 1) as f64 {
                    continue;
                }
                for z in 0..nz {
                    out.set(x, y, z, m.get(rx as usize, ry as usize, z));
                }
            }
        }
        out
    }
}

/// Mirror along x.
pub fn flip_x(v: &Volume) -> Volume {
    let [nx, ny, nz] = v.shape;
    let mut out = v.clone();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.set(x, y, z, v.get(nx - 1 - x, y, z));
            }
        }
    }
    out
}

/// Apply one random in-plane transform to a volume and all of its masks.
pub fn augment(
    v: &Volume,
    masks: &[Mask],
    params: &AugmentParams,
    rng: &mut CounterRng,
) -> Result<(Volume, Vec<Mask>, InPlaneTransform)> {
    params.validate()?;
    for m in masks {
        check_shape(v.shape, m.shape)?;
    }
    let t = InPlaneTransform::sample(params, rng);
    let out_masks = masks.iter().map(|m| t.apply_mask(m)).collect();
    Ok((t.apply_volume(v), out_masks, t))
}

/// Keep every labeled item; keep each unlabeled item independently with
/// probability `keep_prob_unlabeled`. Order is preserved.
pub fn balance_slices<T: Clone>(
    items: &[T],
    has_label: impl Fn(&T) -> bool,
    keep_prob_unlabeled: f64,
    rng: &mut CounterRng,
) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&keep_prob_unlabeled) {
        return Err(Error::InvalidArgument("keep probability must lie in [0, 1]".into()));
    }
    Ok(items
        .iter()
        .filter(|it| has_label(it) || rng.bernoulli(keep_prob_unlabeled))
        .cloned()
        .collect())
}
