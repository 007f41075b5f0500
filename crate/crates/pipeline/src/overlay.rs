//! Axial overlay images: grayscale CT, truth contour in red, mean predicted
//! contour in blue and the confidence band in translucent yellow.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use ctvseg_core::metrics::slice_contour;
use ctvseg_core::uncertainty::UncertaintySummary;
use ctvseg_core::{Mask, StructureId, StructureSet, Volume};

use crate::data::CT_WINDOW;
use crate::error::{PipelineError, Result};
use crate::infer::CaseResult;

pub const RED: [u8; 3] = [255, 0, 0];
pub const BLUE: [u8; 3] = [0, 0, 255];
pub const YELLOW: [u8; 3] = [255, 255, 0];
/// Opacity of the band fill.
pub const BAND_ALPHA: f32 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB, row 0 at y = 0.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        enc.write_header()?.write_image_data(&self.data)?;
        Ok(())
    }
}

/// Inferior, middle and superior representative slices: the median slice of
/// each third of the sorted slice indices that contain `m`. Fewer than
/// three slices are returned when the structure spans fewer.
pub fn representative_slices(m: &Mask) -> Vec<usize> {
    let [nx, ny, nz] = m.shape;
    let n = nx * ny;
    let zs: Vec<usize> = (0..nz)
        .filter(|&z| m.data[z * n..(z + 1) * n].iter().any(|&b| b))
        .collect();
    if zs.len() <= 3 {
        return zs;
    }
    (0..3)
        .map(|k| {
            let lo = k * zs.len() / 3;
            let hi = (k + 1) * zs.len() / 3;
            zs[(lo + hi - 1) / 2]
        })
        .collect()
}

/// Render axial slice `z`, each voxel drawn as a `scale`×`scale` block.
pub fn render_slice(
    ct: &Volume,
    z: usize,
    truth: Option<&Mask>,
    summary: &UncertaintySummary,
    scale: usize,
) -> RgbImage {
    let [nx, ny, _] = ct.shape;
    let scale = scale.max(1);
    let mut img = RgbImage {
        width: nx * scale,
        height: ny * scale,
        data: vec![0; nx * ny * scale * scale * 3],
    };
    let n = nx * ny;
    let band = &summary.band_mask.data[z * n..(z + 1) * n];
    let truth_c = truth.map(|t| slice_contour(t, z));
    let mean_c = slice_contour(&summary.mean_mask, z);
    let (lo, hi) = (CT_WINDOW[0], CT_WINDOW[1]);
    for y in 0..ny {
        for x in 0..nx {
            let i = y * nx + x;
            let g = (((ct.get(x, y, z) - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8;
            let mut c = [g, g, g];
            if band[i] {
                for k in 0..3 {
                    c[k] = (c[k] as f32 * (1.0 - BAND_ALPHA) + YELLOW[k] as f32 * BAND_ALPHA).round() as u8;
                }
            }
            if truth_c.as_ref().is_some_and(|t| t[i]) {
                c = RED;
            }
            if mean_c[i] {
                c = BLUE;
            }
            for dy in 0..scale {
                for dx in 0..scale {
                    img.set(x * scale + dx, y * scale + dy, c);
                }
            }
        }
    }
    img
}

/// Write `<case>_z<zz>.png` overlays of the CTV for the three representative
/// slices into `out_dir`. Slices are chosen from the union of the truth and
/// predicted CTV; slices containing neither are skipped.
pub fn emit_overlays(
    ct: &Volume,
    result: &CaseResult,
    truth: Option<&StructureSet>,
    out_dir: &Path,
    case: &str,
    scale: usize,
) -> Result<Vec<PathBuf>> {
    let summary = result
        .summaries
        .get(&StructureId::Ctv)
        .ok_or_else(|| PipelineError::Data("overlays need an MCDO summary of the CTV".into()))?;
    let truth_ctv = match truth {
        Some(t) => Some(t.require(StructureId::Ctv)?),
        None => None,
    };
    let mut reference = summary.mean_mask.union(&summary.upper_mask)?;
    if let Some(t) = truth_ctv {
        reference = reference.union(t)?;
    }
    fs::create_dir_all(out_dir)?;
    let mut out = Vec::new();
    for z in representative_slices(&reference) {
        let path = out_dir.join(format!("{case}_z{z:02}.png"));
        render_slice(ct, z, truth_ctv, summary, scale).write_png(&path)?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::summary_from_moments;
    use ctvseg_core::Spacing;

    #[test]
    fn thirds_pick_medians() {
        let m = Mask::from_fn([2, 2, 20], Spacing::default(), |_, _, z| (5..14).contains(&z));
        // Slices 5..=13: thirds {5,6,7}, {8,9,10}, {11,12,13}.
        assert_eq!(representative_slices(&m), vec![6, 9, 12]);
        let short = Mask::from_fn([2, 2, 5], Spacing::default(), |_, _, z| z == 2);
        assert_eq!(representative_slices(&short), vec![2]);
    }

    #[test]
    fn zero_variance_has_no_band() {
        let sp = Spacing::default();
        let mean = Volume::new(
            [6, 6, 1],
            sp,
            (0..36).map(|i| if i % 6 > 2 { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        let u = summary_from_moments(mean.clone(), Volume::zeros(mean.shape, sp), mean.clone(), mean.clone()).unwrap();
        let ct = Volume::filled(mean.shape, sp, 500.0);
        let img = render_slice(&ct, 0, None, &u, 1);
        let yellowish = (0..6).flat_map(|y| (0..6).map(move |x| (x, y))).filter(|&(x, y)| {
            let p = img.pixel(x, y);
            p[0] == p[1] && p[2] < p[0]
        });
        assert_eq!(yellowish.count(), 0);
    }
}
