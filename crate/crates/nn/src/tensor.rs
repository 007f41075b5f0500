//! Dense single-sample tensors laid out `[C, D, H, W]`, W fastest. For
//! volumes D/H/W are z/y/x, matching the x-fastest grid order.

use ctvseg_core::{Spacing, Volume};

use crate::error::{NnError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(NnError::Shape(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    /// D·H·W.
    pub fn spatial_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.spatial_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.spatial_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Stack single-channel volumes (all on one grid) as channels.
    pub fn from_volumes(vols: &[&Volume]) -> Result<Self> {
        let first = vols.first().ok_or_else(|| NnError::Shape("no channels".into()))?;
        let [nx, ny, nz] = first.shape;
        let mut data = Vec::with_capacity(vols.len() * first.data.len());
        for v in vols {
            if v.shape != first.shape {
                return Err(NnError::Shape("channel grids differ".into()));
            }
            data.extend_from_slice(&v.data);
        }
        Ok(Self {
            shape: [vols.len(), nz, ny, nx],
            data,
        })
    }

    /// Channel `c` as a volume with the given spacing.
    pub fn to_volume(&self, c: usize, spacing: Spacing) -> Volume {
        Volume {
            shape: [self.shape[3], self.shape[2], self.shape[1]],
            spacing,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
