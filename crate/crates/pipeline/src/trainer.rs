//! Training loops for the localizer, the organ networks and the CTV networks.
//!
//! Every random decision (augmentation, slice balancing, sample order,
//! DropBlock masks) draws from its own stream derived from the master seed
//! and the epoch/sample indices, so a run is a pure function of its inputs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ctvseg_core::disttf::{distance_target, normalize_distance};
use ctvseg_core::losses::{
    composite_ctv_loss, dice_loss, dice_loss_grad, sqrt_dice_loss, sqrt_dice_loss_grad, LossBatch,
};
use ctvseg_core::metrics::dsc;
use ctvseg_core::preprocess::{augment, balance_slices};
use ctvseg_core::{CounterRng, Mask, StructureId, Voi};
use ctvseg_nn::checkpoint;
use ctvseg_nn::optim::{scheduled_lr, Adam};
use ctvseg_nn::{DropMode, Grads, Model, NetConfig, NodeId, ParamStore};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{
    ctv_input, localizer_image, localizer_labels, organ_input, slice_tensor, CaseData, Crop, VoiSample,
    LOCALIZER_CHANNELS,
};
use crate::error::{PipelineError, Result};
use crate::infer::localizer_probabilities;

const STREAM_AUG: u64 = 1;
const STREAM_BALANCE: u64 = 2;
const STREAM_ORDER: u64 = 3;
const STREAM_DROP: u64 = 4;

/// The four CTV network variants of the ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CtvVariant {
    #[serde(rename = "AG-MTN")]
    AgMtn,
    #[serde(rename = "MTN")]
    Mtn,
    #[serde(rename = "AG-UNet")]
    AgUnet,
    #[serde(rename = "UNet")]
    Unet,
}

impl CtvVariant {
    pub const ALL: [CtvVariant; 4] = [Self::AgMtn, Self::Mtn, Self::AgUnet, Self::Unet];

    pub fn name(self) -> &'static str {
        match self {
            Self::AgMtn => "AG-MTN",
            Self::Mtn => "MTN",
            Self::AgUnet => "AG-UNet",
            Self::Unet => "UNet",
        }
    }

    pub fn anatomy_guided(self) -> bool {
        matches!(self, Self::AgMtn | Self::AgUnet)
    }

    pub fn multi_task(self) -> bool {
        matches!(self, Self::AgMtn | Self::Mtn)
    }

    pub fn net_config(self) -> NetConfig {
        NetConfig::agmtn(self.anatomy_guided(), self.multi_task())
    }

    /// Variant whose network was built from `cfg`, if any.
    pub fn of_config(cfg: &NetConfig) -> Option<Self> {
        match cfg.role {
            ctvseg_nn::NetRole::Ctv {
                anatomy_guided,
                multi_task,
            } => Self::ALL
                .into_iter()
                .find(|v| v.anatomy_guided() == anatomy_guided && v.multi_task() == multi_task),
            _ => None,
        }
    }
}

impl fmt::Display for CtvVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CtvVariant {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase().replace('-', "") == norm)
            .ok_or_else(|| PipelineError::Config(format!("unknown CTV variant {s:?} (AG-MTN, MTN, AG-UNet, UNet)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Soft Dice (summed over localizer channels).
    Dice,
    /// Square-root Dice fine-tuning of the localizer.
    SqrtDice,
    /// Boundary-weighted main Dice, deep-supervision Dice and, for
    /// multi-task variants, distance MSE.
    Composite,
}

/// Localizer loss for a 1-based epoch: Dice until the last
/// `l2_finetune_epochs` epochs, square-root Dice afterwards.
pub fn localizer_loss_for_epoch(epoch: usize, cfg: &TrainConfig) -> LossKind {
    if epoch > cfg.epochs - cfg.l2_finetune_epochs {
        LossKind::SqrtDice
    } else {
        LossKind::Dice
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss_fn: LossKind,
    pub lr: f64,
    pub loss: f64,
    pub val_dsc: f64,
    /// Foreground recall of the thresholded validation predictions.
    pub val_recall: f64,
    pub val_per_structure: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_dsc: f64,
    pub best_checkpoint: PathBuf,
    pub snapshots: Vec<(usize, PathBuf)>,
    pub wall_clock_s: f64,
}

impl TrainReport {
    /// First epoch trained with the square-root Dice loss.
    pub fn loss_switch_epoch(&self) -> Option<usize> {
        self.epochs
            .iter()
            .find(|r| r.loss_fn == LossKind::SqrtDice)
            .map(|r| r.epoch)
    }

    pub fn record(&self, epoch: usize) -> Option<&EpochRecord> {
        self.epochs.iter().find(|r| r.epoch == epoch)
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.epochs.last().expect("at least one epoch")
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(
            out_dir.join(format!("{}_report.json", self.name)),
            serde_json::to_string_pretty(self)?,
        )?;
        let mut w = csv::Writer::from_path(out_dir.join(format!("{}_epochs.csv", self.name)))?;
        w.write_record(["epoch", "loss", "val_dsc"])?;
        for r in &self.epochs {
            w.write_record([r.epoch.to_string(), r.loss.to_string(), r.val_dsc.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct ValStats {
    dsc: f64,
    recall: f64,
    per_structure: BTreeMap<String, f64>,
}

/// Epoch bookkeeping shared by all trainers: records, best-checkpoint
/// tracking and snapshots.
struct Run {
    name: String,
    out_dir: PathBuf,
    seed: u64,
    snapshot_epochs: Vec<usize>,
    records: Vec<EpochRecord>,
    best: Option<(usize, f64, ParamStore)>,
    snapshots: Vec<(usize, PathBuf)>,
    start: Instant,
}

impl Run {
    fn new(name: &str, cfg: &TrainConfig, out_dir: &Path) -> Result<Self> {
        cfg.validate()?;
        fs::create_dir_all(out_dir)?;
        Ok(Self {
            name: name.to_string(),
            out_dir: out_dir.to_path_buf(),
            seed: cfg.seed,
            snapshot_epochs: cfg.snapshot_epochs.clone(),
            records: Vec::new(),
            best: None,
            snapshots: Vec::new(),
            start: Instant::now(),
        })
    }

    fn best_stem(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    fn end_epoch(&mut self, model: &Model, rec: EpochRecord) -> Result<()> {
        log::info!(
            "train={} epoch={} loss_fn={:?} lr={:.2e} loss={:.5} val_dsc={:.4} val_recall={:.4} elapsed_s={:.1}",
            self.name,
            rec.epoch,
            rec.loss_fn,
            rec.lr,
            rec.loss,
            rec.val_dsc,
            rec.val_recall,
            self.start.elapsed().as_secs_f64()
        );
        if self.best.as_ref().map_or(true, |b| rec.val_dsc > b.1) {
            checkpoint::save(model, &self.best_stem(), self.seed, rec.epoch)?;
            self.best = Some((rec.epoch, rec.val_dsc, model.params.clone()));
        }
        if self.snapshot_epochs.contains(&rec.epoch) {
            let stem = self.out_dir.join(format!("{}_epoch{:03}", self.name, rec.epoch));
            checkpoint::save(model, &stem, self.seed, rec.epoch)?;
            self.snapshots.push((rec.epoch, stem));
        }
        self.records.push(rec);
        Ok(())
    }

    /// Restore the validation-best weights and write the report.
    fn finish(self, mut model: Model) -> Result<(Model, TrainReport)> {
        let best_checkpoint = self.best_stem();
        let (best_epoch, best_val_dsc, params) = self.best.expect("at least one epoch was run");
        model.params = params;
        let report = TrainReport {
            name: self.name,
            config_hash: model.config.hash(),
            seed: self.seed,
            epochs: self.records,
            best_epoch,
            best_val_dsc,
            best_checkpoint,
            snapshots: self.snapshots,
            wall_clock_s: self.start.elapsed().as_secs_f64(),
        };
        report.write(&self.out_dir)?;
        Ok((model, report))
    }
}

fn configure(mut net: NetConfig, cfg: &TrainConfig) -> NetConfig {
    net = net.with_base_width(cfg.base_width);
    if let Some(k) = cfg.keep_prob {
        net = net.with_keep_prob(k);
    }
    net
}

fn epoch_rng(seed: u64, stream: u64, epoch: usize) -> CounterRng {
    CounterRng::stream(seed, stream).derive(epoch as u64)
}

fn shuffle<T>(items: &mut [T], rng: &mut CounterRng) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

fn to_f32(g: &[f64]) -> Vec<f32> {
    g.iter().map(|&v| v as f32).collect()
}

fn mask_f32(m: &[bool]) -> Vec<f32> {
    m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
}

fn apply_step(model: &mut Model, adam: &mut Adam, grads: &Grads, lr: f64) {
    adam.step(&mut model.params, grads, lr);
}

fn recall(pred: &Mask, truth: &Mask) -> Result<Option<f64>> {
    let t = truth.count();
    if t == 0 {
        return Ok(None);
    }
    Ok(Some(pred.intersection_count(truth)? as f64 / t as f64))
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

struct LocCase {
    image: ctvseg_core::Volume,
    labels: Vec<Mask>,
}

fn loc_cases(cases: &[CaseData], factor: usize) -> Result<Vec<LocCase>> {
    cases
        .iter()
        .map(|c| {
            Ok(LocCase {
                image: localizer_image(&c.ct, factor),
                labels: localizer_labels(&c.truth, factor)?,
            })
        })
        .collect()
}

fn slice_has_label(labels: &[Mask], z: usize) -> bool {
    let [nx, ny, _] = labels[0].shape;
    let n = nx * ny;
    labels.iter().any(|m| m.data[z * n..(z + 1) * n].iter().any(|&b| b))
}

fn localizer_validation(model: &Model, val: &[LocCase]) -> Result<ValStats> {
    let nch = LOCALIZER_CHANNELS.len();
    let mut dscs = vec![Vec::new(); nch];
    let mut recalls = vec![Vec::new(); nch];
    for c in val {
        let probs = localizer_probabilities(model, &c.image)?;
        for ch in 0..nch {
            let truth = &c.labels[ch];
            if truth.is_empty_mask() {
                continue;
            }
            let pred = probs[ch].threshold(0.5);
            dscs[ch].push(dsc(&pred, truth)?);
            if let Some(r) = recall(&pred, truth)? {
                recalls[ch].push(r);
            }
        }
    }
    let per: Vec<f64> = dscs.iter().map(|d| mean(d)).collect();
    Ok(ValStats {
        dsc: mean(&per),
        recall: mean(&recalls.iter().map(|r| mean(r)).collect::<Vec<_>>()),
        per_structure: LOCALIZER_CHANNELS
            .iter()
            .zip(&per)
            .map(|(n, &d)| (n.to_string(), d))
            .collect(),
    })
}

/// Train the 2D localizer on in-plane downsampled slices with five labels.
/// Dice summed over channels drives all but the last `l2_finetune_epochs`
/// epochs, which use the square-root Dice. Per-channel losses are computed
/// over the whole batch of slices so empty slices still penalize false
/// positives.
pub fn train_localizer(
    train: &[CaseData],
    val: &[CaseData],
    cfg: &TrainConfig,
    downsample: usize,
    out_dir: &Path,
) -> Result<(Model, TrainReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(PipelineError::Data(
            "localizer training needs training and validation cases".into(),
        ));
    }
    let mut run = Run::new("localizer", cfg, out_dir)?;
    let mut model = Model::new(configure(NetConfig::localizer(), cfg), cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, &model.params);
    let train_cases = loc_cases(train, downsample)?;
    let val_cases = loc_cases(val, downsample)?;
    let nch = LOCALIZER_CHANNELS.len();
    for epoch in 1..=cfg.epochs {
        let kind = localizer_loss_for_epoch(epoch, cfg);
        let lr = scheduled_lr(cfg.adam.lr, epoch - 1, cfg.epochs);
        // Per-epoch augmented copies of every case.
        let mut epoch_cases = Vec::with_capacity(train_cases.len());
        for (i, c) in train_cases.iter().enumerate() {
            let mut rng = epoch_rng(cfg.seed, STREAM_AUG, epoch).derive(i as u64);
            if rng.bernoulli(cfg.augment_prob) {
                let (image, labels, _) = augment(&c.image, &c.labels, &cfg.augment, &mut rng)?;
                epoch_cases.push(LocCase { image, labels });
            } else {
                epoch_cases.push(LocCase {
                    image: c.image.clone(),
                    labels: c.labels.clone(),
                });
            }
        }
        let mut slices = Vec::new();
        for (i, c) in epoch_cases.iter().enumerate() {
            for z in 0..c.image.shape[2] {
                slices.push((i, z, slice_has_label(&c.labels, z)));
            }
        }
        let mut slices = balance_slices(
            &slices,
            |s| s.2,
            cfg.keep_prob_unlabeled,
            &mut epoch_rng(cfg.seed, STREAM_BALANCE, epoch),
        )?;
        shuffle(&mut slices, &mut epoch_rng(cfg.seed, STREAM_ORDER, epoch));
        let mut total = 0.0;
        let mut steps = 0usize;
        for (step, batch) in slices.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params.zero_grads();
            let mut loss = 0.0;
            {
                let drop_base = epoch_rng(cfg.seed, STREAM_DROP, epoch).derive(step as u64);
                let mut passes = Vec::with_capacity(batch.len());
                for (k, &(ci, z, _)) in batch.iter().enumerate() {
                    let input = slice_tensor(&epoch_cases[ci].image, z);
                    passes.push(model.forward(&input, DropMode::Stochastic, &drop_base.derive(k as u64))?);
                }
                let hw = epoch_cases[0].image.shape[0] * epoch_cases[0].image.shape[1];
                let mut seeds = vec![vec![0f32; nch * hw]; batch.len()];
                for ch in 0..nch {
                    let mut p = Vec::with_capacity(batch.len() * hw);
                    let mut q = Vec::with_capacity(batch.len() * hw);
                    for (k, &(ci, z, _)) in batch.iter().enumerate() {
                        let (g, o) = &passes[k];
                        p.extend_from_slice(g.value(o.main).channel(ch));
                        q.extend(mask_f32(&epoch_cases[ci].labels[ch].data[z * hw..(z + 1) * hw]));
                    }
                    let b = LossBatch::from_f32(&p, &q, None)?;
                    let grad = match kind {
                        LossKind::SqrtDice => {
                            loss += sqrt_dice_loss(&b, cfg.loss.epsilon)?;
                            sqrt_dice_loss_grad(&b, cfg.loss.epsilon)?
                        }
                        _ => {
                            loss += dice_loss(&b);
                            dice_loss_grad(&b)
                        }
                    };
                    for k in 0..batch.len() {
                        seeds[k][ch * hw..(ch + 1) * hw].copy_from_slice(&to_f32(&grad[k * hw..(k + 1) * hw]));
                    }
                }
                for (k, (g, o)) in passes.iter().enumerate() {
                    g.backward(&[(o.main, &seeds[k])], &mut grads)?;
                }
            }
            apply_step(&mut model, &mut adam, &grads, lr);
            total += loss;
            steps += 1;
        }
        let v = localizer_validation(&model, &val_cases)?;
        run.end_epoch(
            &model,
            EpochRecord {
                epoch,
                loss_fn: kind,
                lr,
                loss: total / steps.max(1) as f64,
                val_dsc: v.dsc,
                val_recall: v.recall,
                val_per_structure: v.per_structure,
            },
        )?;
    }
    run.finish(model)
}

#[derive(Debug, Clone, Copy)]
enum VolTask {
    Organ,
    Ctv(CtvVariant),
}

impl VolTask {
    fn encode(self, s: &Crop) -> Result<ctvseg_nn::Tensor> {
        match self {
            Self::Organ => organ_input(&s.ct),
            Self::Ctv(v) => {
                if v.anatomy_guided() && s.masks.len() < 3 {
                    return Err(PipelineError::Data("anatomy guidance needs organ masks".into()));
                }
                let (b, r) = if v.anatomy_guided() {
                    (&s.masks[1], &s.masks[2])
                } else {
                    (&s.masks[0], &s.masks[0])
                };
                ctv_input(&s.ct, b, r, v.anatomy_guided())
            }
        }
    }
}

/// Normalized distance regression target for a VOI-sized mask.
pub fn voi_distance_target(truth: &Mask) -> Result<ctvseg_core::Volume> {
    let diag = Voi::new([0; 3], truth.shape).diagonal_mm(truth.spacing);
    Ok(normalize_distance(&distance_target(truth)?, diag)?)
}

/// Forward/backward for one sample; returns its loss. Gradients are added to
/// `grads` scaled by `scale`.
fn volumetric_sample(
    model: &Model,
    task: VolTask,
    s: &Crop,
    cfg: &TrainConfig,
    rng: &CounterRng,
    scale: f64,
    grads: &mut Grads,
) -> Result<f64> {
    let input = task.encode(s)?;
    let (g, o) = model.forward(&input, DropMode::Stochastic, rng)?;
    let truth = &s.masks[0];
    let main = &g.value(o.main).data;
    let mut seeds: Vec<(NodeId, Vec<f32>)> = Vec::new();
    let scaled = |v: &[f64]| -> Vec<f32> { v.iter().map(|&x| (x * scale) as f32).collect() };
    let loss = match task {
        VolTask::Organ => {
            let b = LossBatch::from_mask(main, truth, None)?;
            seeds.push((o.main, scaled(&dice_loss_grad(&b))));
            let mut l = dice_loss(&b);
            if let Some(aux) = o.aux {
                for a in aux {
                    let ab = LossBatch::from_mask(&g.value(a).data, truth, None)?;
                    l += dice_loss(&ab);
                    seeds.push((a, scaled(&dice_loss_grad(&ab))));
                }
            }
            l
        }
        VolTask::Ctv(_) => {
            let aux = o
                .aux
                .ok_or_else(|| PipelineError::Config("CTV networks need deep-supervision outputs".into()))?;
            let target = match o.dist {
                Some(_) => Some(voi_distance_target(truth)?),
                None => None,
            };
            let dist = match (o.dist, &target) {
                (Some(d), Some(t)) => Some((g.value(d).data.as_slice(), t.data.as_slice())),
                _ => None,
            };
            let c = composite_ctv_loss(
                main,
                [&g.value(aux[0]).data, &g.value(aux[1]).data],
                dist,
                truth,
                &cfg.loss,
            )?;
            seeds.push((o.main, scaled(&c.grad_main)));
            seeds.push((aux[0], scaled(&c.grad_aux[0])));
            seeds.push((aux[1], scaled(&c.grad_aux[1])));
            if let (Some(d), Some(gd)) = (o.dist, &c.grad_distance) {
                seeds.push((d, scaled(gd)));
            }
            c.total
        }
    };
    let refs: Vec<(NodeId, &[f32])> = seeds.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    g.backward(&refs, grads)?;
    Ok(loss)
}

/// Mean DSC of thresholded deterministic predictions on unaugmented VOIs.
fn volumetric_validation(model: &Model, task: VolTask, val: &[VoiSample]) -> Result<ValStats> {
    let mut dscs = Vec::with_capacity(val.len());
    let mut recalls = Vec::new();
    for s in val {
        let s = s.centered()?;
        let p = model.predict(&task.encode(&s)?, DropMode::Off, &CounterRng::new(0))?;
        let pred = p.main.to_volume(0, s.ct.spacing).threshold(0.5);
        dscs.push(dsc(&pred, &s.masks[0])?);
        if let Some(r) = recall(&pred, &s.masks[0])? {
            recalls.push(r);
        }
    }
    Ok(ValStats {
        dsc: mean(&dscs),
        recall: mean(&recalls),
        per_structure: BTreeMap::new(),
    })
}

fn train_volumetric(
    name: &str,
    net: NetConfig,
    task: VolTask,
    train: &[VoiSample],
    val: &[VoiSample],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<(Model, TrainReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(PipelineError::Data(format!(
            "{name}: training and validation VOIs required"
        )));
    }
    let mut run = Run::new(name, cfg, out_dir)?;
    let mut model = Model::new(configure(net, cfg), cfg.seed)?;
    let mut adam = Adam::new(cfg.adam, &model.params);
    let loss_fn = match task {
        VolTask::Organ => LossKind::Dice,
        VolTask::Ctv(_) => LossKind::Composite,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        let lr = scheduled_lr(cfg.adam.lr, epoch - 1, cfg.epochs);
        order.sort_unstable();
        shuffle(&mut order, &mut epoch_rng(cfg.seed, STREAM_ORDER, epoch));
        let mut total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let drop_base = epoch_rng(cfg.seed, STREAM_DROP, epoch).derive(step as u64);
            for (k, &i) in batch.iter().enumerate() {
                let mut rng = epoch_rng(cfg.seed, STREAM_AUG, epoch).derive(i as u64);
                let shift = cfg
                    .voi_jitter
                    .map(|j| rng.below(2 * j as u64 + 1) as isize - j as isize);
                let mut s = train[i].view(shift)?;
                if rng.bernoulli(cfg.augment_prob) {
                    let (ct, masks, _) = augment(&s.ct, &s.masks, &cfg.augment, &mut rng)?;
                    s = Crop { ct, masks };
                }
                total += volumetric_sample(&model, task, &s, cfg, &drop_base.derive(k as u64), scale, &mut grads)?;
            }
            apply_step(&mut model, &mut adam, &grads, lr);
        }
        let v = volumetric_validation(&model, task, val)?;
        run.end_epoch(
            &model,
            EpochRecord {
                epoch,
                loss_fn,
                lr,
                loss: total / train.len() as f64,
                val_dsc: v.dsc,
                val_recall: v.recall,
                val_per_structure: v.per_structure,
            },
        )?;
    }
    run.finish(model)
}

/// Checkpoint name of an organ network.
pub fn organ_net_name(s: StructureId) -> &'static str {
    s.file_stem()
}

/// Train one organ network with unit-weight Dice on truth-centered VOIs.
pub fn train_organ(
    structure: StructureId,
    train: &[VoiSample],
    val: &[VoiSample],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<(Model, TrainReport)> {
    let net = NetConfig::organ(structure)?;
    train_volumetric(organ_net_name(structure), net, VolTask::Organ, train, val, cfg, out_dir)
}

/// Train one CTV variant. Samples carry masks `[ctv, bladder, rectum]`; the
/// organ masks are required by anatomy-guided variants.
pub fn train_ctv(
    variant: CtvVariant,
    train: &[VoiSample],
    val: &[VoiSample],
    cfg: &TrainConfig,
    out_dir: &Path,
) -> Result<(Model, TrainReport)> {
    train_volumetric(
        "ctv",
        variant.net_config(),
        VolTask::Ctv(variant),
        train,
        val,
        cfg,
        out_dir,
    )
}

/// Deterministic CTV prediction (probabilities) for one VOI sample.
pub fn predict_ctv_voi(model: &Model, variant: CtvVariant, s: &Crop) -> Result<ctvseg_core::Volume> {
    let p = model.predict(&VolTask::Ctv(variant).encode(s)?, DropMode::Off, &CounterRng::new(0))?;
    Ok(p.main.to_volume(0, s.ct.spacing))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_switch_boundary() {
        let cfg = TrainConfig::localizer().with_epochs(12);
        let kinds: Vec<_> = (1..=12).map(|e| localizer_loss_for_epoch(e, &cfg)).collect();
        assert_eq!(kinds.iter().filter(|&&k| k == LossKind::Dice).count(), 2);
        assert_eq!(kinds[1], LossKind::Dice);
        assert_eq!(kinds[2], LossKind::SqrtDice);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in CtvVariant::ALL {
            assert_eq!(v.name().parse::<CtvVariant>().unwrap(), v);
            assert_eq!(CtvVariant::of_config(&v.net_config()), Some(v));
        }
        assert_eq!("ag_mtn".parse::<CtvVariant>().unwrap(), CtvVariant::AgMtn);
        assert!("deeplab".parse::<CtvVariant>().is_err());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        shuffle(&mut v, &mut CounterRng::new(3));
        let mut s = v.clone();
        s.sort_unstable();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
