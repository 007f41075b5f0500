use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::mivol::{read_mivol, write_mivol};
use crate::volume::{Mask, Shape, Spacing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructureId {
    #[serde(rename = "CTV")]
    Ctv,
    Bladder,
    Rectum,
    FemoralHeadL,
    FemoralHeadR,
    PenileBulb,
}

impl StructureId {
    pub const ALL: [StructureId; 6] = [
        StructureId::Ctv,
        StructureId::Bladder,
        StructureId::Rectum,
        StructureId::FemoralHeadL,
        StructureId::FemoralHeadR,
        StructureId::PenileBulb,
    ];

    pub const OARS: [StructureId; 5] = [
        StructureId::Bladder,
        StructureId::Rectum,
        StructureId::FemoralHeadL,
        StructureId::FemoralHeadR,
        StructureId::PenileBulb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StructureId::Ctv => "CTV",
            StructureId::Bladder => "Bladder",
            StructureId::Rectum => "Rectum",
            StructureId::FemoralHeadL => "FemoralHeadL",
            StructureId::FemoralHeadR => "FemoralHeadR",
            StructureId::PenileBulb => "PenileBulb",
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            StructureId::Ctv => "ctv",
            StructureId::Bladder => "bladder",
            StructureId::Rectum => "rectum",
            StructureId::FemoralHeadL => "femoral_head_l",
            StructureId::FemoralHeadR => "femoral_head_r",
            StructureId::PenileBulb => "penile_bulb",
        }
    }

    /// Channel of the five-channel localizer output; both femoral heads share one.
    pub fn localizer_channel(self) -> usize {
        match self {
            StructureId::Ctv => 0,
            StructureId::Bladder => 1,
            StructureId::Rectum => 2,
            StructureId::FemoralHeadL | StructureId::FemoralHeadR => 3,
            StructureId::PenileBulb => 4,
        }
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StructureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "ctv" => StructureId::Ctv,
            "bladder" => StructureId::Bladder,
            "rectum" => StructureId::Rectum,
            "femoralheadl" | "femurl" => StructureId::FemoralHeadL,
            "femoralheadr" | "femurr" => StructureId::FemoralHeadR,
            "penilebulb" => StructureId::PenileBulb,
            _ => return Err(Error::InvalidArgument(format!("unknown structure {s:?}"))),
        })
    }
}

/// Per-structure binary masks on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureSet {
    pub shape: Shape,
    pub spacing: Spacing,
    masks: BTreeMap<StructureId, Mask>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    shape: Shape,
    spacing_mm: [f64; 3],
    structures: BTreeMap<StructureId, String>,
}

pub const MANIFEST_FILE: &str = "structures.json";

impl StructureSet {
    pub fn new(shape: Shape, spacing: Spacing) -> Self {
        Self {
            shape,
            spacing,
            masks: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: StructureId, mask: Mask) -> Result<()> {
        check_shape(self.shape, mask.shape)?;
        self.masks.insert(id, mask);
        Ok(())
    }

    pub fn get(&self, id: StructureId) -> Option<&Mask> {
        self.masks.get(&id)
    }

    pub fn require(&self, id: StructureId) -> Result<&Mask> {
        self.get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("structure set lacks {id}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (StructureId, &Mask)> {
        self.masks.iter().map(|(k, v)| (*k, v))
    }

    pub fn ids(&self) -> Vec<StructureId> {
        self.masks.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Write one MIVOL file per structure plus a manifest into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut structures = BTreeMap::new();
        for (id, m) in &self.masks {
            let file = format!("{}.mivol", id.file_stem());
            write_mivol(&m.to_volume(), dir.join(&file))?;
            structures.insert(*id, file);
        }
        let manifest = Manifest {
            shape: self.shape,
            spacing_mm: self.spacing.as_array(),
            structures,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
        let spacing = Spacing::new(manifest.spacing_mm[0], manifest.spacing_mm[1], manifest.spacing_mm[2])?;
        let mut set = StructureSet::new(manifest.shape, spacing);
        for (id, file) in manifest.structures {
            let m = Mask::from_volume(&read_mivol(dir.join(file))?)?;
            set.insert(id, m)?;
        }
        Ok(set)
    }
}
