//! Training and pipeline configuration, loadable from one TOML file.

use std::path::{Path, PathBuf};

use ctvseg_core::losses::LossConfig;
use ctvseg_core::preprocess::AugmentParams;
use ctvseg_core::StructureId;
use ctvseg_nn::optim::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Final epochs of localizer training that switch to the square-root
    /// Dice loss. Unused by the 3D trainers, whose default is 0.
    pub l2_finetune_epochs: usize,
    /// Slices (localizer) or VOIs (3D nets) per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub augment: AugmentParams,
    /// Probability that a training sample is augmented in a given epoch.
    pub augment_prob: f64,
    pub keep_prob_unlabeled: f64,
    /// Maximum random VOI shift in voxels per axis for the 3D trainers,
    /// mimicking localization error.
    pub voi_jitter: [usize; 3],
    pub base_width: usize,
    /// DropBlock keep probability of the trained network; `None` keeps the
    /// architecture default.
    pub keep_prob: Option<f64>,
    pub loss: LossConfig,
    /// 1-based epochs whose weights are saved in addition to the best one.
    pub snapshot_epochs: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::volumetric()
    }
}

impl TrainConfig {
    pub fn localizer() -> Self {
        Self {
            epochs: 50,
            l2_finetune_epochs: 10,
            batch_size: 16,
            base_width: 16,
            ..Self::volumetric()
        }
    }

    /// Organ and CTV networks.
    pub fn volumetric() -> Self {
        Self {
            epochs: 80,
            l2_finetune_epochs: 0,
            batch_size: 2,
            adam: AdamConfig::default(),
            seed: 0,
            augment: AugmentParams::default(),
            augment_prob: 0.5,
            keep_prob_unlabeled: 0.3,
            voi_jitter: [3, 3, 1],
            base_width: 8,
            keep_prob: None,
            loss: LossConfig::default(),
            snapshot_epochs: Vec::new(),
        }
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.l2_finetune_epochs > self.epochs {
            return bad("l2_finetune_epochs exceeds epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return bad("optimizer rates must be positive and betas in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.augment_prob) || !(0.0..=1.0).contains(&self.keep_prob_unlabeled) {
            return bad("probabilities must lie in [0, 1]");
        }
        if let Some(k) = self.keep_prob {
            if !(k > 0.0 && k <= 1.0) {
                return bad("keep_prob must lie in (0, 1]");
            }
        }
        if self.base_width == 0 {
            return bad("base_width must be positive");
        }
        self.augment.validate()?;
        Ok(())
    }
}

/// Fixed VOI size `[x, y, z]` in voxels for each network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiSizes {
    pub ctv: [usize; 3],
    pub bladder: [usize; 3],
    pub rectum: [usize; 3],
    pub femoral_head: [usize; 3],
    pub penile_bulb: [usize; 3],
}

impl Default for VoiSizes {
    fn default() -> Self {
        Self {
            ctv: [40, 48, 32],
            bladder: [48, 40, 24],
            rectum: [32, 32, 48],
            femoral_head: [24, 24, 16],
            penile_bulb: [24, 24, 8],
        }
    }
}

impl VoiSizes {
    pub fn get(&self, s: StructureId) -> [usize; 3] {
        match s {
            StructureId::Ctv => self.ctv,
            StructureId::Bladder => self.bladder,
            StructureId::Rectum => self.rectum,
            StructureId::FemoralHeadL | StructureId::FemoralHeadR => self.femoral_head,
            StructureId::PenileBulb => self.penile_bulb,
        }
    }

    /// Every size must be a positive multiple of the networks' pooling
    /// divisor along each axis.
    pub fn validate(&self, divisor: [usize; 3]) -> Result<()> {
        for s in StructureId::ALL {
            let v = self.get(s);
            for a in 0..3 {
                if v[a] == 0 || v[a] % divisor[a] != 0 {
                    return Err(PipelineError::Config(format!(
                        "{} VOI {v:?} is not a multiple of {divisor:?}",
                        s.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub voi: VoiSizes,
    /// In-plane downsampling of localizer input slices.
    pub localizer_downsample: usize,
    pub checkpoint_dir: PathBuf,
    pub mcdo_t: usize,
    /// Also run MCDO on the organ networks.
    pub mcdo_oars: bool,
    pub mcdo_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            voi: VoiSizes::default(),
            localizer_downsample: 2,
            checkpoint_dir: PathBuf::from("checkpoints"),
            mcdo_t: ctvseg_nn::mcdo::DEFAULT_T,
            mcdo_oars: false,
            mcdo_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.voi.validate([8, 8, 8])?;
        if self.localizer_downsample == 0 {
            return Err(PipelineError::Config("localizer_downsample must be positive".into()));
        }
        if self.mcdo_t == 1 {
            return Err(PipelineError::Config(
                "MCDO needs at least 2 samples (0 disables it)".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a CLI run can configure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub localizer: TrainConfig,
    pub organ: TrainConfig,
    pub ctv: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            localizer: TrainConfig::localizer(),
            organ: TrainConfig::volumetric(),
            ctv: TrainConfig::volumetric(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.localizer.validate()?;
        self.organ.validate()?;
        self.ctv.validate()
    }

    /// Override every master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.localizer.seed = seed;
        self.organ.seed = seed;
        self.ctv.seed = seed;
        self.pipeline.mcdo_seed = seed;
        self
    }
}
