//! Whole-pipeline training and evaluation over a dataset.

use std::path::Path;

use ctvseg_core::metrics::{dsc, EvalRow};
use ctvseg_core::uncertainty::{contour_quality_with_mean, summarize};
use ctvseg_core::StructureId;
use ctvseg_nn::mcdo::mcdo_sample;
use ctvseg_nn::Model;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::data::{ctv_samples, organ_input, organ_samples, CaseData, DatasetSplits, VoiSample};
use crate::error::Result;
use crate::infer::{infer, CaseResult, Networks};
use crate::trainer::{train_ctv, train_localizer, train_organ, CtvVariant, TrainReport};

/// Train the localizer, one network per organ at risk and the CTV network
/// of `variant`, writing every checkpoint into `checkpoint_dir`.
pub fn train_all(
    data: &DatasetSplits,
    cfg: &Config,
    variant: CtvVariant,
    checkpoint_dir: &Path,
) -> Result<(Networks, Vec<TrainReport>)> {
    cfg.validate()?;
    let mut reports = Vec::new();
    let (localizer, r) = train_localizer(
        &data.train,
        &data.val,
        &cfg.localizer,
        cfg.pipeline.localizer_downsample,
        checkpoint_dir,
    )?;
    reports.push(r);
    let mut organs = std::collections::BTreeMap::new();
    for s in StructureId::OARS {
        let size = cfg.pipeline.voi.get(s);
        let train = organ_samples(&data.train, s, size, cfg.organ.voi_jitter)?;
        let val = organ_samples(&data.val, s, size, [0; 3])?;
        let (m, r) = train_organ(s, &train, &val, &cfg.organ, checkpoint_dir)?;
        organs.insert(s, m);
        reports.push(r);
    }
    let train = ctv_samples(&data.train, cfg.pipeline.voi.ctv, cfg.ctv.voi_jitter, None)?;
    let val = ctv_samples(&data.val, cfg.pipeline.voi.ctv, [0; 3], None)?;
    let (ctv, r) = train_ctv(variant, &train, &val, &cfg.ctv, checkpoint_dir)?;
    reports.push(r);
    let nets = Networks { localizer, organs, ctv };
    nets.validate()?;
    Ok((nets, reports))
}

/// Run inference on every case and score it against its truth.
pub fn evaluate_cases(cases: &[CaseData], nets: &Networks, cfg: &Config) -> Result<(Vec<CaseResult>, Vec<EvalRow>)> {
    let mut results = Vec::with_capacity(cases.len());
    let mut rows = Vec::new();
    for c in cases {
        let mut r = infer(&c.ct, nets, &cfg.pipeline)?;
        rows.extend_from_slice(r.evaluate(&c.name, &c.truth)?);
        results.push(r);
    }
    Ok((results, rows))
}

/// One (case, checkpoint) observation of MCDO contour quality against the
/// DSC of the mean contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityPoint {
    pub structure: StructureId,
    pub epoch: usize,
    pub case: String,
    /// `None` when the mean contour is empty.
    pub quality: Option<f64>,
    pub dsc: f64,
}

/// MCDO contour quality and DSC-vs-truth of an organ network at several
/// training checkpoints `(epoch, model)` on truth-centred VOIs.
pub fn oar_quality_study(
    structure: StructureId,
    checkpoints: &[(usize, &Model)],
    samples: &[VoiSample],
    mcdo_t: usize,
    seed: u64,
) -> Result<Vec<QualityPoint>> {
    let mut out = Vec::new();
    for &(epoch, model) in checkpoints {
        for s in samples {
            let c = s.centered()?;
            let stack = mcdo_sample(model, &organ_input(&c.ct)?, mcdo_t, seed, c.ct.spacing)?;
            let u = summarize(&stack)?;
            out.push(QualityPoint {
                structure,
                epoch,
                case: s.case.clone(),
                quality: contour_quality_with_mean(&stack, &u.mean_mask)?,
                dsc: dsc(&u.mean_mask, &c.masks[0])?,
            });
        }
    }
    Ok(out)
}
