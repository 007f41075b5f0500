//! Monte-Carlo sampling with DropBlock left on at inference.

use ctvseg_core::uncertainty::McdoStack;
use ctvseg_core::{CounterRng, Spacing, Volume};

use crate::dropblock::DropMode;
use crate::error::{NnError, Result};
use crate::nets::Model;
use crate::tensor::Tensor;

/// Default number of samples.
pub const DEFAULT_T: usize = 50;

/// Rng for sample `t`, independent of every other sample index.
pub fn sample_rng(base_seed: u64, t: u64) -> CounterRng {
    CounterRng::stream(base_seed, t)
}

/// One stochastic forward pass; channel `channel` of the main output.
pub fn sample_one(
    model: &Model,
    input: &Tensor,
    base_seed: u64,
    t: u64,
    channel: usize,
    spacing: Spacing,
) -> Result<Volume> {
    let p = model.predict(input, DropMode::Stochastic, &sample_rng(base_seed, t))?;
    Ok(p.main.to_volume(channel, spacing))
}

/// `t_count` samples of main-output channel 0.
pub fn mcdo_sample(
    model: &Model,
    input: &Tensor,
    t_count: usize,
    base_seed: u64,
    spacing: Spacing,
) -> Result<McdoStack> {
    if !model.has_stochastic_layers() {
        return Err(NnError::Config("model has no DropBlock layers".into()));
    }
    if t_count == 0 {
        return Err(NnError::Config("at least one sample required".into()));
    }
    let mut samples = Vec::with_capacity(t_count);
    let mut seeds = Vec::with_capacity(t_count);
    for t in 0..t_count as u64 {
        samples.push(sample_one(model, input, base_seed, t, 0, spacing)?);
        seeds.push(sample_rng(base_seed, t).key());
    }
    Ok(McdoStack::new(samples, seeds, model.config.hash())?)
}
