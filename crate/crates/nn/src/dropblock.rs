//! DropBlock: structured dropout that zeroes contiguous spatial blocks.

use ctvseg_core::CounterRng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropBlockConfig {
    pub keep_prob: f64,
    pub block_size: usize,
}

impl DropBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(NnError::Config(format!("keep_prob {} outside (0, 1]", self.keep_prob)));
        }
        if self.block_size == 0 || self.block_size % 2 == 0 {
            return Err(NnError::Config(format!("block_size {} must be odd", self.block_size)));
        }
        Ok(())
    }

    /// Per-axis block extent on a `[D, H, W]` map: singleton axes get 1 and
    /// axes shorter than the block are covered entirely.
    pub fn block_for(&self, sp: [usize; 3]) -> [usize; 3] {
        sp.map(|n| if n <= 1 { 1 } else { self.block_size.min(n) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropMode {
    Off,
    Stochastic,
}

/// Seed probability so the expected dropped fraction is `1 - keep_prob`
/// when seeds fall only on centres whose block fits inside the map.
pub fn gamma(keep_prob: f64, block: [usize; 3], sp: [usize; 3]) -> f64 {
    let mut g = (1.0 - keep_prob) / block.iter().product::<usize>() as f64;
    for a in 0..3 {
        g *= sp[a] as f64 / (sp[a] - block[a] + 1) as f64;
    }
    g
}

/// Multiplicative mask for a `[C, D, H, W]` map, already rescaled by
/// `count / kept`. Returns `None` when the layer is an identity.
pub fn mask(shape: [usize; 4], keep_prob: f64, block: [usize; 3], rng: &mut CounterRng) -> Result<Option<Vec<f32>>> {
    let [c, d, h, w] = shape;
    let sp = [d, h, w];
    for a in 0..3 {
        if block[a] == 0 || block[a] > sp[a] {
            return Err(NnError::Config(format!("block {block:?} does not fit map {sp:?}")));
        }
    }
    if keep_prob >= 1.0 {
        return Ok(None);
    }
    let g = gamma(keep_prob, block, sp);
    let n = d * h * w;
    let mut m = vec![1.0f32; c * n];
    let lo = block.map(|b| b / 2);
    for ch in 0..c {
        let mc = &mut m[ch * n..(ch + 1) * n];
        for z in lo[0]..lo[0] + d - block[0] + 1 {
            for y in lo[1]..lo[1] + h - block[1] + 1 {
                for x in lo[2]..lo[2] + w - block[2] + 1 {
                    if !rng.bernoulli(g) {
                        continue;
                    }
                    for zz in z - lo[0]..z - lo[0] + block[0] {
                        for yy in y - lo[1]..y - lo[1] + block[1] {
                            let r = (zz * h + yy) * w + x - lo[2];
                            mc[r..r + block[2]].fill(0.0);
                        }
                    }
                }
            }
        }
    }
    let kept = m.iter().filter(|&&v| v != 0.0).count();
    if kept > 0 {
        let s = (m.len() as f64 / kept as f64) as f32;
        m.iter_mut().for_each(|v| *v *= s);
    }
    Ok(Some(m))
}

/// Apply DropBlock to a standalone feature map.
pub fn dropblock(
    features: &[f32],
    shape: [usize; 4],
    keep_prob: f64,
    block_size: usize,
    mode: DropMode,
    rng: &mut CounterRng,
) -> Result<Vec<f32>> {
    let cfg = DropBlockConfig { keep_prob, block_size };
    cfg.validate()?;
    let sp = [shape[1], shape[2], shape[3]];
    let smallest = sp.iter().copied().filter(|&n| n > 1).min().unwrap_or(1);
    if block_size > smallest {
        return Err(NnError::Config(format!(
            "block_size {block_size} exceeds smallest spatial dimension {smallest}"
        )));
    }
    if features.len() != shape.iter().product::<usize>() {
        return Err(NnError::Shape("feature length".into()));
    }
    if mode == DropMode::Off {
        return Ok(features.to_vec());
    }
    Ok(match mask(shape, keep_prob, cfg.block_for(sp), rng)? {
        None => features.to_vec(),
        Some(m) => features.iter().zip(&m).map(|(a, b)| a * b).collect(),
    })
}
