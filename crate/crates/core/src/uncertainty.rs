//! Voxelwise summaries of Monte-Carlo dropout samples and the contour
//! quality score.

use crate::error::{check_shape, Error, Result};
use crate::metrics::dsc;
use crate::volume::{Mask, Volume};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
pub const THRESHOLD: f32 = 0.5;

/// `T` probability volumes from repeated stochastic inference.
#[derive(Debug, Clone, PartialEq)]
pub struct McdoStack {
    pub samples: Vec<Volume>,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

impl McdoStack {
    pub fn new(samples: Vec<Volume>, seeds: Vec<u64>, config_hash: String) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empty MCDO stack".into()));
        }
        if seeds.len() != samples.len() {
            return Err(Error::InvalidArgument("one seed per sample required".into()));
        }
        for s in &samples[1..] {
            check_shape(samples[0].shape, s.shape)?;
        }
        if samples
            .iter()
            .any(|s| s.data.iter().any(|&v| !(0.0..=1.0).contains(&v)))
        {
            return Err(Error::InvalidArgument("sample probabilities outside [0, 1]".into()));
        }
        Ok(Self {
            samples,
            seeds,
            config_hash,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySummary {
    pub mean: Volume,
    /// Population variance.
    pub variance: Volume,
    pub lower: Volume,
    pub upper: Volume,
    pub mean_mask: Mask,
    pub lower_mask: Mask,
    pub upper_mask: Mask,
    /// Voxels inside the upper-bound contour but outside the lower-bound one.
    pub band_mask: Mask,
}

/// Population mean/variance per voxel and clamped `μ ∓ 1.96σ` bounds.
/// Per-voxel values are sorted before accumulation, so the result does not
/// depend on sample order.
pub fn summarize(stack: &McdoStack) -> Result<UncertaintySummary> {
    let t = stack.samples.len();
    if t < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let first = &stack.samples[0];
    let n = first.data.len();
    let mut mean = Volume::zeros(first.shape, first.spacing);
    let mut variance = mean.clone();
    let mut lower = mean.clone();
    let mut upper = mean.clone();
    let mut vals = vec![0f32; t];
    for i in 0..n {
        for (k, s) in stack.samples.iter().enumerate() {
            vals[k] = s.data[i];
        }
        vals.sort_by(f32::total_cmp);
        let mu = vals.iter().map(|&v| v as f64).sum::<f64>() / t as f64;
        let var = vals.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / t as f64;
        let sd = var.sqrt();
        let muf = mu as f32;
        mean.data[i] = muf;
        variance.data[i] = var as f32;
        lower.data[i] = ((mu - Z95 * sd).clamp(0.0, 1.0) as f32).min(muf);
        upper.data[i] = ((mu + Z95 * sd).clamp(0.0, 1.0) as f32).max(muf);
    }
    let mean_mask = mean.threshold(THRESHOLD);
    let lower_mask = lower.threshold(THRESHOLD);
    let upper_mask = upper.threshold(THRESHOLD);
    let band_mask = upper_mask.and_not(&lower_mask)?;
    Ok(UncertaintySummary {
        mean,
        variance,
        lower,
        upper,
        mean_mask,
        lower_mask,
        upper_mask,
        band_mask,
    })
}

/// Mean DSC between each binarized sample and the binarized mean.
/// `Ok(None)` when the mean contour is empty.
pub fn contour_quality(stack: &McdoStack) -> Result<Option<f64>> {
    let t = stack.samples.len();
    if t < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let s = summarize(stack)?;
    contour_quality_with_mean(stack, &s.mean_mask)
}

pub fn contour_quality_with_mean(stack: &McdoStack, mean_mask: &Mask) -> Result<Option<f64>> {
    if mean_mask.is_empty_mask() {
        return Ok(None);
    }
    let mut total = 0.0;
    for s in &stack.samples {
        total += dsc(&s.threshold(THRESHOLD), mean_mask)?;
    }
    Ok(Some(total / stack.samples.len() as f64))
}
