//! Three-stage inference: localize, segment organs, segment the CTV.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use ctvseg_core::components::{label_components, largest_component, split_bilateral};
use ctvseg_core::metrics::{evaluate_case, EvalRow};
use ctvseg_core::mivol::{read_mivol, write_mivol};
use ctvseg_core::preprocess::centroid;
use ctvseg_core::uncertainty::{contour_quality_with_mean, summarize, UncertaintySummary, THRESHOLD};
use ctvseg_core::volume::{crop, crop_mask, paste, paste_mask_clipped};
use ctvseg_core::{CounterRng, Mask, Shape, StructureId, StructureSet, Voi, Volume};
use ctvseg_nn::mcdo::mcdo_sample;
use ctvseg_nn::{checkpoint, DropMode, Model, NetRole, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::data::{ctv_input, localizer_image, organ_input, slice_tensor, LOCALIZER_CHANNELS};
use crate::error::{PipelineError, Result};
use crate::trainer::CtvVariant;

/// Checkpoint stem of the localizer inside a checkpoint directory.
pub const LOCALIZER_STEM: &str = "localizer";
/// Checkpoint stem of the CTV network inside a checkpoint directory.
pub const CTV_STEM: &str = "ctv";

/// All networks of the pipeline.
#[derive(Debug, Clone)]
pub struct Networks {
    pub localizer: Model,
    pub organs: BTreeMap<StructureId, Model>,
    pub ctv: Model,
}

impl Networks {
    /// Load every checkpoint from `dir`, validating config hashes and roles.
    pub fn load(dir: &Path) -> Result<Self> {
        let load = |stem: &str| -> Result<Model> {
            let path = dir.join(stem);
            if !path.with_extension("json").exists() {
                return Err(PipelineError::Data(format!("missing checkpoint {}", path.display())));
            }
            Ok(checkpoint::load(&path, None)?.0)
        };
        let localizer = load(LOCALIZER_STEM)?;
        let mut organs = BTreeMap::new();
        for s in StructureId::OARS {
            organs.insert(s, load(s.file_stem())?);
        }
        let nets = Self {
            localizer,
            organs,
            ctv: load(CTV_STEM)?,
        };
        nets.validate()?;
        Ok(nets)
    }

    pub fn validate(&self) -> Result<()> {
        if self.localizer.config.role != NetRole::Localizer {
            return Err(PipelineError::Data(
                "localizer checkpoint holds a different network".into(),
            ));
        }
        for (s, m) in &self.organs {
            if m.config.role != (NetRole::Organ { structure: *s }) {
                return Err(PipelineError::Data(format!(
                    "{} checkpoint holds a different network",
                    s.name()
                )));
            }
        }
        self.ctv_variant().map(|_| ())
    }

    pub fn ctv_variant(&self) -> Result<CtvVariant> {
        CtvVariant::of_config(&self.ctv.config)
            .ok_or_else(|| PipelineError::Data("CTV checkpoint holds a different network".into()))
    }
}

/// Per-slice localizer probabilities for a prepared (downsampled, windowed)
/// volume, one volume per output channel.
pub fn localizer_probabilities(model: &Model, image: &Volume) -> Result<Vec<Volume>> {
    let [nx, ny, nz] = image.shape;
    let nch = model.config.out_channels;
    let mut out = vec![Volume::zeros(image.shape, image.spacing); nch];
    let hw = nx * ny;
    let rng = CounterRng::new(0);
    for z in 0..nz {
        let p = model.predict(&slice_tensor(image, z), DropMode::Off, &rng)?;
        for (c, v) in out.iter_mut().enumerate() {
            v.data[z * hw..(z + 1) * hw].copy_from_slice(p.main.channel(c));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Localize,
    Organs,
    Ctv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: Stage,
    pub elapsed_ms: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct InferOptions {
    /// Replace the predicted bladder/rectum masks fed to the CTV network.
    pub organ_override: Option<StructureSet>,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    /// Masks on the full CT grid.
    pub predicted: StructureSet,
    /// Full-grid MCDO summaries for the structures sampled with MCDO.
    pub summaries: BTreeMap<StructureId, UncertaintySummary>,
    pub quality: BTreeMap<StructureId, f64>,
    /// Full-resolution centroids used for cropping.
    pub centroids: BTreeMap<StructureId, [f64; 3]>,
    /// Clamped VOIs the predictions were pasted into.
    pub vois: BTreeMap<StructureId, Voi>,
    pub warnings: Vec<String>,
    pub stages: Vec<StageLog>,
    pub rows: Vec<EvalRow>,
    pub variant: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultDoc {
    variant: String,
    centroids: BTreeMap<StructureId, [f64; 3]>,
    vois: BTreeMap<StructureId, Voi>,
    quality: BTreeMap<StructureId, f64>,
    warnings: Vec<String>,
    stages: Vec<StageLog>,
    summaries: Vec<StructureId>,
}

const SUMMARY_PARTS: [&str; 4] = ["mean", "variance", "lower", "upper"];

impl CaseResult {
    /// Fill `rows` with DSC/ASD against `truth`.
    pub fn evaluate(&mut self, case: &str, truth: &StructureSet) -> Result<&[EvalRow]> {
        self.rows = evaluate_case(case, &self.variant, &self.predicted, truth, &self.quality)?;
        Ok(&self.rows)
    }

    pub fn dsc(&self, s: StructureId) -> Option<f64> {
        self.rows.iter().find(|r| r.structure == s).and_then(|r| r.dsc)
    }

    /// `structures/`, `uncertainty/<stem>_{mean,variance,lower,upper}.mivol`
    /// and `result.json` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.predicted.save(dir.join("structures"))?;
        let udir = dir.join("uncertainty");
        fs::create_dir_all(&udir)?;
        for (s, u) in &self.summaries {
            for (part, v) in SUMMARY_PARTS.iter().zip([&u.mean, &u.variance, &u.lower, &u.upper]) {
                write_mivol(v, udir.join(format!("{}_{part}.mivol", s.file_stem())))?;
            }
        }
        let doc = ResultDoc {
            variant: self.variant.clone(),
            centroids: self.centroids.clone(),
            vois: self.vois.clone(),
            quality: self.quality.clone(),
            warnings: self.warnings.clone(),
            stages: self.stages.clone(),
            summaries: self.summaries.keys().copied().collect(),
        };
        fs::write(dir.join("result.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let doc_path = dir.join("result.json");
        let text =
            fs::read_to_string(&doc_path).map_err(|e| PipelineError::Data(format!("{}: {e}", doc_path.display())))?;
        let doc: ResultDoc = serde_json::from_str(&text)?;
        let predicted = StructureSet::load(dir.join("structures"))?;
        let mut summaries = BTreeMap::new();
        for s in &doc.summaries {
            let read = |part: &str| read_mivol(dir.join("uncertainty").join(format!("{}_{part}.mivol", s.file_stem())));
            summaries.insert(
                *s,
                summary_from_moments(read("mean")?, read("variance")?, read("lower")?, read("upper")?)?,
            );
        }
        Ok(Self {
            predicted,
            summaries,
            quality: doc.quality,
            centroids: doc.centroids,
            vois: doc.vois,
            warnings: doc.warnings,
            stages: doc.stages,
            rows: Vec::new(),
            variant: doc.variant,
        })
    }
}

/// Rebuild the thresholded masks of a summary from its four volumes.
pub fn summary_from_moments(
    mean: Volume,
    variance: Volume,
    lower: Volume,
    upper: Volume,
) -> Result<UncertaintySummary> {
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

/// Paste a VOI-sized summary into zero-filled full-grid volumes.
pub fn paste_summary(u: &UncertaintySummary, voi: &Voi, shape: Shape) -> Result<UncertaintySummary> {
    let put = |v: &Volume| -> Result<Volume> {
        let dst = Volume::zeros(shape, v.spacing);
        let fit = fit_to_grid(v, voi, shape)?;
        Ok(paste(&dst, &fit, voi.origin_usize())?)
    };
    summary_from_moments(put(&u.mean)?, put(&u.variance)?, put(&u.lower)?, put(&u.upper)?)
}

/// The part of a VOI-sized volume that lies inside the grid.
fn fit_to_grid(v: &Volume, voi: &Voi, shape: Shape) -> Result<Volume> {
    let o = voi.origin_usize();
    let size = [0, 1, 2].map(|a| v.shape[a].min(shape[a] - o[a]));
    if size == v.shape {
        return Ok(v.clone());
    }
    Ok(crop(v, &Voi::new([0; 3], size))?.0)
}

/// Keep the two largest 6-connected components.
fn two_largest_components(m: &Mask) -> Mask {
    let (labels, n) = label_components(m);
    if n <= 2 {
        return m.clone();
    }
    let mut sizes = vec![0usize; n + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let mut ids: Vec<usize> = (1..=n).collect();
    ids.sort_by_key(|&i| (std::cmp::Reverse(sizes[i]), i));
    let keep = [ids[0] as u32, ids[1] as u32];
    let mut out = m.clone();
    for (o, &l) in out.data.iter_mut().zip(&labels) {
        *o = keep.contains(&l);
    }
    out
}

/// Map a coarse-grid index to the center of its block on the full grid.
fn upscale_centroid(c: [f64; 3], factor: usize) -> [f64; 3] {
    let f = factor as f64;
    [c[0] * f + (f - 1.0) / 2.0, c[1] * f + (f - 1.0) / 2.0, c[2]]
}

fn grid_center(shape: Shape) -> [f64; 3] {
    shape.map(|n| (n as f64 - 1.0) / 2.0)
}

/// Coarse masks per structure (femoral heads split left/right).
fn coarse_masks(probs: &[Volume]) -> Result<BTreeMap<StructureId, Mask>> {
    let mut out = BTreeMap::new();
    for s in StructureId::ALL {
        let m = probs[s.localizer_channel()].threshold(0.5);
        match s {
            StructureId::FemoralHeadL => {
                let (l, r) = split_bilateral(&two_largest_components(&m))?;
                out.insert(StructureId::FemoralHeadL, l);
                out.insert(StructureId::FemoralHeadR, r);
            }
            StructureId::FemoralHeadR => {}
            _ => {
                out.insert(s, largest_component(&m));
            }
        }
    }
    Ok(out)
}

fn mcdo_seed_for(base: u64, s: StructureId) -> u64 {
    CounterRng::stream(base, 1 + s as u64).key()
}

struct VoiPrediction {
    mask: Mask,
    summary: Option<UncertaintySummary>,
    quality: Option<f64>,
}

fn predict_voi(
    model: &Model,
    input: &Tensor,
    spacing: ctvseg_core::Spacing,
    mcdo_t: usize,
    seed: u64,
) -> Result<VoiPrediction> {
    if mcdo_t >= 2 {
        let stack = mcdo_sample(model, input, mcdo_t, seed, spacing)?;
        let summary = summarize(&stack)?;
        let quality = contour_quality_with_mean(&stack, &summary.mean_mask)?;
        Ok(VoiPrediction {
            mask: summary.mean_mask.clone(),
            summary: Some(summary),
            quality,
        })
    } else {
        let p = model.predict(input, DropMode::Off, &CounterRng::new(0))?;
        Ok(VoiPrediction {
            mask: p.main.to_volume(0, spacing).threshold(0.5),
            summary: None,
            quality: None,
        })
    }
}

fn stage_done(stages: &mut Vec<StageLog>, stage: Stage, t: Instant, detail: String) {
    let elapsed_ms = t.elapsed().as_secs_f64() * 1e3;
    log::info!("stage={stage:?} elapsed_ms={elapsed_ms:.1} {detail}");
    stages.push(StageLog {
        stage,
        elapsed_ms,
        detail,
    });
}

pub fn infer(ct: &Volume, nets: &Networks, cfg: &PipelineConfig) -> Result<CaseResult> {
    infer_with(ct, nets, cfg, &InferOptions::default())
}

pub fn infer_with(ct: &Volume, nets: &Networks, cfg: &PipelineConfig, opts: &InferOptions) -> Result<CaseResult> {
    cfg.validate()?;
    if !ct.is_finite() {
        return Err(PipelineError::Data("CT contains non-finite values".into()));
    }
    let variant = nets.ctv_variant()?;
    let shape = ct.shape;
    let mut stages = Vec::new();
    let mut warnings = Vec::new();
    let mut centroids = BTreeMap::new();

    // Stage 1: coarse localization on downsampled slices.
    let t = Instant::now();
    let f = cfg.localizer_downsample;
    let image = localizer_image(ct, f);
    if image.shape[0] == 0 || image.shape[1] == 0 {
        return Err(PipelineError::Data(
            "CT is smaller than the localizer downsampling".into(),
        ));
    }
    let probs = localizer_probabilities(&nets.localizer, &image)?;
    for (s, m) in coarse_masks(&probs)? {
        let c = match centroid(&m) {
            Ok(c) => upscale_centroid(c, f),
            Err(_) => {
                let w = format!("localizer found no {}; using the grid center", s.name());
                log::warn!("{w}");
                warnings.push(w);
                grid_center(shape)
            }
        };
        centroids.insert(s, c);
    }
    stage_done(
        &mut stages,
        Stage::Localize,
        t,
        format!("channels={}", LOCALIZER_CHANNELS.len()),
    );

    // Stage 2: organ networks on AHE-normalized VOIs.
    let t = Instant::now();
    let mut predicted = StructureSet::new(shape, ct.spacing);
    let mut summaries = BTreeMap::new();
    let mut quality = BTreeMap::new();
    let mut vois = BTreeMap::new();
    let oar_t = if cfg.mcdo_oars { cfg.mcdo_t } else { 0 };
    for s in StructureId::OARS {
        let model = nets
            .organs
            .get(&s)
            .ok_or_else(|| PipelineError::Data(format!("no network for {}", s.name())))?;
        let (ct_voi, voi) = crop(ct, &Voi::centered(centroids[&s], cfg.voi.get(s)))?;
        let input = organ_input(&ct_voi)?;
        let p = predict_voi(model, &input, ct.spacing, oar_t, mcdo_seed_for(cfg.mcdo_seed, s))?;
        let mask = largest_component(&p.mask);
        let full = paste_mask_clipped(&Mask::empty(shape, ct.spacing), &mask, voi.origin_usize());
        predicted.insert(s, full)?;
        if let Some(u) = p.summary {
            summaries.insert(s, paste_summary(&u, &voi, shape)?);
        }
        if let Some(q) = p.quality {
            quality.insert(s, q);
        }
        vois.insert(s, voi);
    }
    stage_done(&mut stages, Stage::Organs, t, format!("mcdo_t={oar_t}"));

    // Stage 3: CTV network with organ guidance.
    let t = Instant::now();
    let guide = opts.organ_override.as_ref().unwrap_or(&predicted);
    let (ct_voi, voi) = crop(ct, &Voi::centered(centroids[&StructureId::Ctv], cfg.voi.ctv))?;
    let bladder = crop_mask(guide.require(StructureId::Bladder)?, &voi)?.0;
    let rectum = crop_mask(guide.require(StructureId::Rectum)?, &voi)?.0;
    let input = ctv_input(&ct_voi, &bladder, &rectum, variant.anatomy_guided())?;
    let p = predict_voi(
        &nets.ctv,
        &input,
        ct.spacing,
        cfg.mcdo_t,
        mcdo_seed_for(cfg.mcdo_seed, StructureId::Ctv),
    )?;
    let full = paste_mask_clipped(&Mask::empty(shape, ct.spacing), &p.mask, voi.origin_usize());
    predicted.insert(StructureId::Ctv, full)?;
    if let Some(u) = p.summary {
        summaries.insert(StructureId::Ctv, paste_summary(&u, &voi, shape)?);
    }
    if let Some(q) = p.quality {
        quality.insert(StructureId::Ctv, q);
    }
    vois.insert(StructureId::Ctv, voi);
    stage_done(
        &mut stages,
        Stage::Ctv,
        t,
        format!("variant={variant} mcdo_t={}", cfg.mcdo_t),
    );

    Ok(CaseResult {
        predicted,
        summaries,
        quality,
        centroids,
        vois,
        warnings,
        stages,
        rows: Vec::new(),
        variant: variant.name().to_string(),
    })
}
