//! Phantom datasets on disk and the encoding of network inputs and labels.

use std::fs;
use std::path::Path;

use ctvseg_core::mivol::{read_mivol, write_mivol};
use ctvseg_core::phantom::{generate_dataset, Dataset, PhantomCase, PhantomMeta, PhantomSpec};
use ctvseg_core::preprocess::{ahe, centroid, downsample_xy, window, AheParams};
use ctvseg_core::volume::{crop, crop_mask};
use ctvseg_core::{Mask, StructureId, StructureSet, Voi, Volume};
use ctvseg_nn::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// Intensity window mapped to [0, 1] for localizer and CTV inputs.
pub const CT_WINDOW: [f32; 2] = [0.0, 1000.0];

/// Localizer output channels, in channel order.
pub const LOCALIZER_CHANNELS: [&str; 5] = ["ctv", "bladder", "rectum", "femoral_heads", "penile_bulb"];

/// AHE settings shared by training and inference of the organ networks.
pub fn ahe_params() -> AheParams {
    AheParams::default()
}

#[derive(Debug, Clone)]
pub struct CaseData {
    pub name: String,
    pub ct: Volume,
    pub truth: StructureSet,
    pub meta: Option<PhantomMeta>,
}

impl CaseData {
    pub fn from_phantom(name: String, c: PhantomCase) -> Self {
        Self {
            name,
            ct: c.ct,
            truth: c.truth,
            meta: Some(c.meta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplits {
    pub base_seed: u64,
    pub train: Vec<CaseData>,
    pub val: Vec<CaseData>,
    pub test: Vec<CaseData>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    base_seed: u64,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

impl DatasetSplits {
    pub fn from_phantom(base_seed: u64, ds: Dataset) -> Self {
        let name = |split: &str, list: Vec<PhantomCase>| -> Vec<CaseData> {
            list.into_iter()
                .enumerate()
                .map(|(i, c)| CaseData::from_phantom(format!("{split}_{i:03}"), c))
                .collect()
        };
        Self {
            base_seed,
            train: name("train", ds.train),
            val: name("val", ds.val),
            test: name("test", ds.test),
        }
    }

    pub fn generate(base_seed: u64, n_train: usize, n_val: usize, n_test: usize) -> Result<Self> {
        let ds = generate_dataset(base_seed, n_train, n_val, n_test, &PhantomSpec::new(0))?;
        Ok(Self::from_phantom(base_seed, ds))
    }

    /// `<dir>/index.json` plus one directory per case holding `ct.mivol`,
    /// `truth/` and, for phantoms, `meta.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for c in self.train.iter().chain(&self.val).chain(&self.test) {
            save_case(c, &dir.join(&c.name))?;
        }
        let names = |l: &[CaseData]| l.iter().map(|c| c.name.clone()).collect();
        let index = Index {
            base_seed: self.base_seed,
            train: names(&self.train),
            val: names(&self.val),
            test: names(&self.test),
        };
        fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join("index.json");
        let text = fs::read_to_string(&index_path)
            .map_err(|e| PipelineError::Data(format!("{}: {e}", index_path.display())))?;
        let index: Index = serde_json::from_str(&text)?;
        let load =
            |names: &[String]| -> Result<Vec<CaseData>> { names.iter().map(|n| load_case(n, &dir.join(n))).collect() };
        Ok(Self {
            base_seed: index.base_seed,
            train: load(&index.train)?,
            val: load(&index.val)?,
            test: load(&index.test)?,
        })
    }
}

pub fn save_case(c: &CaseData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_mivol(&c.ct, dir.join("ct.mivol"))?;
    c.truth.save(dir.join("truth"))?;
    if let Some(m) = &c.meta {
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(m)?)?;
    }
    Ok(())
}

pub fn load_case(name: &str, dir: &Path) -> Result<CaseData> {
    let ct = read_mivol(dir.join("ct.mivol"))?;
    let truth = StructureSet::load(dir.join("truth"))?;
    if truth.shape != ct.shape {
        return Err(PipelineError::Data(format!("{name}: truth grid differs from CT grid")));
    }
    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(meta_path)?)?)
    } else {
        None
    };
    Ok(CaseData {
        name: name.to_string(),
        ct,
        truth,
        meta,
    })
}

/// CT windowed to [0, 1].
pub fn normalize_ct(ct: &Volume) -> Volume {
    window(ct, CT_WINDOW[0], CT_WINDOW[1])
}

/// Downsampled, windowed localizer input volume.
pub fn localizer_image(ct: &Volume, factor: usize) -> Volume {
    normalize_ct(&downsample_xy(ct, factor))
}

/// In-plane downsampling of a mask by majority (ties count as foreground).
pub fn downsample_mask(m: &Mask, factor: usize) -> Mask {
    downsample_xy(&m.to_volume(), factor).threshold(0.5)
}

/// Five coarse label masks in localizer channel order; the two femoral heads
/// share one channel.
pub fn localizer_labels(truth: &StructureSet, factor: usize) -> Result<Vec<Mask>> {
    let mut out: Vec<Option<Mask>> = vec![None; LOCALIZER_CHANNELS.len()];
    for s in StructureId::ALL {
        let m = downsample_mask(truth.require(s)?, factor);
        let ch = s.localizer_channel();
        out[ch] = Some(match out[ch].take() {
            Some(prev) => prev.union(&m)?,
            None => m,
        });
    }
    Ok(out
        .into_iter()
        .map(|m| m.expect("every channel has a structure"))
        .collect())
}

/// One `[1, 1, H, W]` slice of a volume.
pub fn slice_tensor(v: &Volume, z: usize) -> Tensor {
    let [nx, ny, _] = v.shape;
    Tensor::from_vec([1, 1, ny, nx], v.slice_z(z).to_vec()).expect("slice length matches its shape")
}

/// Organ-network input: AHE of the raw CT VOI.
pub fn organ_input(ct_voi: &Volume) -> Result<Tensor> {
    let eq = ahe(ct_voi, &ahe_params())?;
    Ok(Tensor::from_volumes(&[&eq])?)
}

/// CTV-network input. Anatomy-guided variants get three channels: the
/// windowed CT and the windowed CT multiplied by the bladder and the rectum
/// masks; the others get the windowed CT alone.
pub fn ctv_input(ct_voi: &Volume, bladder: &Mask, rectum: &Mask, anatomy_guided: bool) -> Result<Tensor> {
    let ct = normalize_ct(ct_voi);
    if !anatomy_guided {
        return Ok(Tensor::from_volumes(&[&ct])?);
    }
    let b = ct.masked(bladder)?;
    let r = ct.masked(rectum)?;
    Ok(Tensor::from_volumes(&[&ct, &b, &r])?)
}

/// A fixed-size CT crop with its masks. `masks[0]` is the training target;
/// any further masks are guidance inputs.
#[derive(Debug, Clone)]
pub struct Crop {
    pub ct: Volume,
    pub masks: Vec<Mask>,
}

/// A VOI around a structure, cropped with `pad` extra voxels per side so
/// that shifted views can be taken for augmentation.
#[derive(Debug, Clone)]
pub struct VoiSample {
    pub case: String,
    /// Padded crop.
    pub padded: Crop,
    /// The centered VOI on the full grid, clamped into it.
    pub voi: Voi,
    /// Origin of the centered VOI inside the padded crop.
    pub inner: [usize; 3],
}

impl VoiSample {
    pub fn size(&self) -> [usize; 3] {
        self.voi.size
    }

    /// The VOI shifted by `shift` voxels, limited to the padded crop.
    pub fn view(&self, shift: [isize; 3]) -> Result<Crop> {
        let size = self.voi.size;
        let outer = self.padded.ct.shape;
        let mut origin = [0isize; 3];
        for a in 0..3 {
            let max = (outer[a] - size[a]) as isize;
            origin[a] = (self.inner[a] as isize + shift[a]).clamp(0, max);
        }
        let v = Voi::new(origin, size);
        let ct = crop(&self.padded.ct, &v)?.0;
        let masks = self
            .padded
            .masks
            .iter()
            .map(|m| Ok(crop_mask(m, &v)?.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Crop { ct, masks })
    }

    pub fn centered(&self) -> Result<Crop> {
        self.view([0; 3])
    }
}

/// VOI of `size` centered on the mask centroid and clamped into the grid.
pub fn centered_voi(m: &Mask, size: [usize; 3]) -> Result<Voi> {
    Ok(Voi::centered(centroid(m)?, size).clamp_to(m.shape))
}

fn voi_sample(c: &CaseData, voi: Voi, pad: [usize; 3], ids: &[StructureId], guides: &[&Mask]) -> Result<VoiSample> {
    let shape = c.ct.shape;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let o = voi.origin[a].max(0) as usize;
        lo[a] = o.saturating_sub(pad[a]);
        hi[a] = (o + voi.size[a] + pad[a]).min(shape[a]).max(lo[a] + voi.size[a]);
    }
    let outer = Voi::new(lo.map(|v| v as isize), [0, 1, 2].map(|a| hi[a] - lo[a]));
    let (ct, _) = crop(&c.ct, &outer)?;
    let mut masks = Vec::with_capacity(ids.len() + guides.len());
    for &s in ids {
        masks.push(crop_mask(c.truth.require(s)?, &outer)?.0);
    }
    for g in guides {
        masks.push(crop_mask(g, &outer)?.0);
    }
    let o = voi.origin_usize();
    Ok(VoiSample {
        case: c.name.clone(),
        padded: Crop { ct, masks },
        voi,
        inner: [0, 1, 2].map(|a| o[a] - lo[a]),
    })
}

/// Crops around the true centroid of `structure`, padded by `pad`.
pub fn organ_samples(
    cases: &[CaseData],
    structure: StructureId,
    size: [usize; 3],
    pad: [usize; 3],
) -> Result<Vec<VoiSample>> {
    cases
        .iter()
        .map(|c| {
            voi_sample(
                c,
                centered_voi(c.truth.require(structure)?, size)?,
                pad,
                &[structure],
                &[],
            )
        })
        .collect()
}

/// CTV crops around the true CTV centroid with masks `[ctv, bladder, rectum]`.
/// Organ guidance comes from `organs` when given (one set per case), from
/// the ground truth otherwise.
pub fn ctv_samples(
    cases: &[CaseData],
    size: [usize; 3],
    pad: [usize; 3],
    organs: Option<&[StructureSet]>,
) -> Result<Vec<VoiSample>> {
    if let Some(o) = organs {
        if o.len() != cases.len() {
            return Err(PipelineError::Data("one organ set per case required".into()));
        }
    }
    cases
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let voi = centered_voi(c.truth.require(StructureId::Ctv)?, size)?;
            let src = organs.map_or(&c.truth, |o| &o[i]);
            let guides = [src.require(StructureId::Bladder)?, src.require(StructureId::Rectum)?];
            voi_sample(c, voi, pad, &[StructureId::Ctv], &guides)
        })
        .collect()
}
