//! Grids, masks and volumes of interest.
//!
//! All grids are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};

pub type Shape = [usize; 3];

/// Physical voxel size in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Spacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let s = Self { dx, dy, dz };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.dx, self.dy, self.dz].iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("non-positive spacing {self:?}")))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self {
            dx: 1.17,
            dy: 1.17,
            dz: 3.0,
        }
    }
}

#[inline]
pub fn voxel_count(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

#[inline]
pub fn linear_index(shape: Shape, x: usize, y: usize, z: usize) -> usize {
    x + shape[0] * (y + shape[1] * z)
}

#[inline]
pub fn unravel(shape: Shape, i: usize) -> [usize; 3] {
    let x = i % shape[0];
    let y = (i / shape[0]) % shape[1];
    let z = i / (shape[0] * shape[1]);
    [x, y, z]
}

/// Scalar 3D grid of 32-bit reals with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub shape: Shape,
    pub spacing: Spacing,
    pub data: Vec<f32>,
}

impl Volume {
    pub fn new(shape: Shape, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument(format!("zero-sized shape {shape:?}")));
        }
        spacing.validate()?;
        if data.len() != voxel_count(shape) {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, spacing, data })
    }

    pub fn filled(shape: Shape, spacing: Spacing, value: f32) -> Self {
        Self {
            shape,
            spacing,
            data: vec![value; voxel_count(shape)],
        }
    }

    pub fn zeros(shape: Shape, spacing: Spacing) -> Self {
        Self::filled(shape, spacing, 0.0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[linear_index(self.shape, x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = linear_index(self.shape, x, y, z);
        self.data[i] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Voxels `>= threshold` become foreground.
    pub fn threshold(&self, threshold: f32) -> Mask {
        Mask {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }

    /// Voxelwise product with a mask (zero outside).
    pub fn masked(&self, mask: &Mask) -> Result<Volume> {
        check_shape(self.shape, mask.shape)?;
        let data = self
            .data
            .iter()
            .zip(&mask.data)
            .map(|(&v, &m)| if m { v } else { 0.0 })
            .collect();
        Ok(Volume {
            shape: self.shape,
            spacing: self.spacing,
            data,
        })
    }

    /// Extract axial slice `z` as a row-major (x-fastest) buffer.
    pub fn slice_z(&self, z: usize) -> &[f32] {
        let n = self.shape[0] * self.shape[1];
        &self.data[z * n..(z + 1) * n]
    }
}

/// Binary mask on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub shape: Shape,
    pub spacing: Spacing,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(shape: Shape, spacing: Spacing) -> Self {
        Self {
            shape,
            spacing,
            data: vec![false; voxel_count(shape)],
        }
    }

    pub fn from_fn(shape: Shape, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(voxel_count(shape));
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { shape, spacing, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[linear_index(self.shape, x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = linear_index(self.shape, x, y, z);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Interpret a volume as a mask; every value must be exactly 0 or 1.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let mut data = Vec::with_capacity(v.data.len());
        for &x in &v.data {
            match x {
                0.0 => data.push(false),
                1.0 => data.push(true),
                _ => return Err(Error::Format(format!("mask value {x} is not binary"))),
            }
        }
        Ok(Self {
            shape: v.shape,
            spacing: v.spacing,
            data,
        })
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        check_shape(self.shape, other.shape)?;
        Ok(self.data.iter().zip(&other.data).filter(|(a, b)| **a && **b).count())
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        check_shape(self.shape, other.shape)?;
        Ok(Mask {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        check_shape(self.shape, other.shape)?;
        Ok(Mask {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && !*b).collect(),
        })
    }

    /// One step of 6-connected binary dilation.
    pub fn dilate6(&self) -> Mask {
        let [nx, ny, nz] = self.shape;
        let mut out = self.clone();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if !self.get(x, y, z) {
                        continue;
                    }
                    for [ax, ay, az] in neighbors6([x, y, z], self.shape) {
                        out.set(ax, ay, az, true);
                    }
                }
            }
        }
        out
    }
}

/// In-grid 6-neighbors of a voxel.
pub fn neighbors6(p: [usize; 3], shape: Shape) -> impl Iterator<Item = [usize; 3]> {
    const OFFS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];
    OFFS.into_iter().filter_map(move |o| {
        let mut q = [0usize; 3];
        for a in 0..3 {
            let v = p[a] as isize + o[a];
            if v < 0 || v >= shape[a] as isize {
                return None;
            }
            q[a] = v as usize;
        }
        Some(q)
    })
}

/// A volume of interest. `origin` may be negative or overhang the grid
/// when requested; [`Voi::clamp_to`] resolves it against a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Voi {
    pub origin: [isize; 3],
    pub size: [usize; 3],
}

impl Voi {
    pub fn new(origin: [isize; 3], size: [usize; 3]) -> Self {
        Self { origin, size }
    }

    /// VOI of `size` whose center voxel is nearest to `center`.
    pub fn centered(center: [f64; 3], size: [usize; 3]) -> Self {
        let mut origin = [0isize; 3];
        for a in 0..3 {
            origin[a] = (center[a] - (size[a] as f64 - 1.0) / 2.0).round() as isize;
        }
        Self { origin, size }
    }

    /// Shift the VOI inward so it fits inside `shape`. When the VOI is larger
    /// than the grid along an axis, the origin becomes 0 and the excess is
    /// left for padding.
    pub fn clamp_to(&self, shape: Shape) -> Voi {
        let mut origin = self.origin;
        for a in 0..3 {
            let n = shape[a] as isize;
            let s = self.size[a] as isize;
            origin[a] = if s >= n { 0 } else { origin[a].clamp(0, n - s) };
        }
        Voi {
            origin,
            size: self.size,
        }
    }

    pub fn origin_usize(&self) -> [usize; 3] {
        [
            self.origin[0].max(0) as usize,
            self.origin[1].max(0) as usize,
            self.origin[2].max(0) as usize,
        ]
    }

    /// Physical diagonal of the VOI in millimeters.
    pub fn diagonal_mm(&self, spacing: Spacing) -> f64 {
        let s = spacing.as_array();
        (0..3).map(|a| (self.size[a] as f64 * s[a]).powi(2)).sum::<f64>().sqrt()
    }
}

fn crop_impl<T: Copy>(src: &[T], shape: Shape, voi: &Voi, pad: T) -> Result<(Voi, Vec<T>)> {
    if voi.size.iter().any(|&s| s == 0) {
        return Err(Error::InvalidArgument("zero-size VOI".into()));
    }
    let v = voi.clamp_to(shape);
    let o = v.origin_usize();
    let [sx, sy, sz] = v.size;
    let mut out = vec![pad; sx * sy * sz];
    let cx = sx.min(shape[0] - o[0]);
    for z in 0..sz.min(shape[2] - o[2]) {
        for y in 0..sy.min(shape[1] - o[1]) {
            let si = linear_index(shape, o[0], o[1] + y, o[2] + z);
            let di = linear_index(v.size, 0, y, z);
            out[di..di + cx].copy_from_slice(&src[si..si + cx]);
        }
    }
    Ok((v, out))
}

/// Crop `v` to `voi` after clamping it into the grid. Regions of the VOI
/// outside the grid (only possible when the VOI is larger than the grid) are
/// filled with the minimum intensity of `v`. Returns the clamped VOI too.
pub fn crop(v: &Volume, voi: &Voi) -> Result<(Volume, Voi)> {
    let (clamped, data) = crop_impl(&v.data, v.shape, voi, v.min())?;
    Ok((
        Volume {
            shape: voi.size,
            spacing: v.spacing,
            data,
        },
        clamped,
    ))
}

pub fn crop_mask(m: &Mask, voi: &Voi) -> Result<(Mask, Voi)> {
    let (clamped, data) = crop_impl(&m.data, m.shape, voi, false)?;
    Ok((
        Mask {
            shape: voi.size,
            spacing: m.spacing,
            data,
        },
        clamped,
    ))
}

fn paste_impl<T: Copy>(dst: &mut [T], dshape: Shape, src: &[T], sshape: Shape, origin: [usize; 3]) -> Result<()> {
    for a in 0..3 {
        if origin[a] + sshape[a] > dshape[a] {
            return Err(Error::OutOfBounds(format!(
                "source {sshape:?} at {origin:?} overflows destination {dshape:?}"
            )));
        }
    }
    for z in 0..sshape[2] {
        for y in 0..sshape[1] {
            let si = linear_index(sshape, 0, y, z);
            let di = linear_index(dshape, origin[0], origin[1] + y, origin[2] + z);
            dst[di..di + sshape[0]].copy_from_slice(&src[si..si + sshape[0]]);
        }
    }
    Ok(())
}

/// Copy of `dst` with the region at `origin` replaced by `src`.
pub fn paste(dst: &Volume, src: &Volume, origin: [usize; 3]) -> Result<Volume> {
    let mut out = dst.clone();
    paste_impl(&mut out.data, dst.shape, &src.data, src.shape, origin)?;
    Ok(out)
}

pub fn paste_mask(dst: &Mask, src: &Mask, origin: [usize; 3]) -> Result<Mask> {
    let mut out = dst.clone();
    paste_impl(&mut out.data, dst.shape, &src.data, src.shape, origin)?;
    Ok(out)
}

/// Paste the part of `src` that overlaps `dst` when `src` is placed at the
/// (possibly overhanging) `origin`.
pub fn paste_mask_clipped(dst: &Mask, src: &Mask, origin: [usize; 3]) -> Mask {
    let mut out = dst.clone();
    for z in 0..src.shape[2] {
        for y in 0..src.shape[1] {
            for x in 0..src.shape[0] {
                let (gx, gy, gz) = (origin[0] + x, origin[1] + y, origin[2] + z);
                if gx < dst.shape[0] && gy < dst.shape[1] && gz < dst.shape[2] {
                    out.set(gx, gy, gz, src.get(x, y, z));
                }
            }
        }
    }
    out
}
