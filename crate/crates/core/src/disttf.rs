//! Exact anisotropic Euclidean distance transform.
//!
//! Separable lower-envelope-of-parabolas algorithm (Felzenszwalb &
//! Huttenlocher), one pass per axis with the squared spacing of that axis.

use crate::error::{Error, Result};
use crate::volume::{linear_index, Mask, Volume};

/// 1D squared-distance transform of `f` under metric `scale2 * (p - q)^2`.
/// Infinite entries of `f` never enter the envelope.
fn dt_1d(f: &[f64], scale2: f64, out: &mut [f64], v: &mut Vec<usize>, zs: &mut Vec<f64>) {
    v.clear();
    zs.clear();
    let n = f.len();
    let inter = |q: usize, r: usize| -> f64 {
        let (qf, rf) = (q as f64, r as f64);
        ((f[q] + scale2 * qf * qf) - (f[r] + scale2 * rf * rf)) / (2.0 * scale2 * (qf - rf))
    };
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    zs.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&r) => {
                    let s = inter(q, r);
                    if s <= *zs.last().unwrap() {
                        v.pop();
                        zs.pop();
                    } else {
                        v.push(q);
                        zs.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while k + 1 < v.len() && zs[k + 1] < pf {
            k += 1;
        }
        let d = pf - v[k] as f64;
        *o = scale2 * d * d + f[v[k]];
    }
}

/// Squared distances in mm² to the nearest foreground voxel center.
pub fn squared_distance_mm2(mask: &Mask) -> Vec<f64> {
    let shape = mask.shape;
    let s = mask.spacing.as_array();
    let mut g: Vec<f64> = mask.data.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let maxn = *shape.iter().max().unwrap();
    let mut line = vec![0.0; maxn];
    let mut out = vec![0.0; maxn];
    let mut v = Vec::with_capacity(maxn);
    let mut zs = Vec::with_capacity(maxn);
    for axis in 0..3 {
        let n = shape[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for b in 0..shape[o2] {
            for a in 0..shape[o1] {
                let idx = |t: usize| {
                    let mut c = [0usize; 3];
                    c[axis] = t;
                    c[o1] = a;
                    c[o2] = b;
                    linear_index(shape, c[0], c[1], c[2])
                };
                for t in 0..n {
                    line[t] = g[idx(t)];
                }
                dt_1d(&line[..n], s[axis] * s[axis], &mut out[..n], &mut v, &mut zs);
                for t in 0..n {
                    g[idx(t)] = out[t];
                }
            }
        }
    }
    g
}

/// Distance in millimeters from each voxel center to the nearest foreground
/// voxel center; zero on the foreground.
pub fn distance_target(mask: &Mask) -> Result<Volume> {
    if mask.is_empty_mask() {
        return Err(Error::EmptyMask("distance target needs a foreground"));
    }
    let d2 = squared_distance_mm2(mask);
    Ok(Volume {
        shape: mask.shape,
        spacing: mask.spacing,
        data: d2.iter().map(|&v| v.sqrt() as f32).collect(),
    })
}

/// `d / diag_mm` clamped to [0, 1].
pub fn normalize_distance(d: &Volume, diag_mm: f64) -> Result<Volume> {
    if !(diag_mm > 0.0) {
        return Err(Error::InvalidArgument("diagonal must be positive".into()));
    }
    let mut out = d.clone();
    for v in out.data.iter_mut() {
        *v = (*v as f64 / diag_mm).clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}
