//! UNet-style segmentation networks: the 2D localizer, per-organ 3D
//! segmenters and the CTV network with optional anatomy-guidance input and a
//! distance-regression decoder.

use ctvseg_core::{CounterRng, StructureId};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dropblock::{self, DropBlockConfig, DropMode};
use crate::error::{NnError, Result};
use crate::graph::{Graph, NodeId};
use crate::kernels::PoolGeom;
use crate::params::{Init, ParamId, ParamStore};
use crate::tensor::Tensor;

const SLOPE: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    PlainConv,
    Residual,
    GroupedResidual,
    MultiBranch,
    SqueezeExcite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    #[serde(rename = "2d")]
    Two,
    #[serde(rename = "3d")]
    Three,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetRole {
    Localizer,
    Organ { structure: StructureId },
    Ctv { anatomy_guided: bool, multi_task: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub role: NetRole,
    pub dims: Dims,
    pub in_channels: usize,
    pub out_channels: usize,
    pub depth: usize,
    pub base_width: usize,
    pub stage_blocks: Vec<BlockKind>,
    /// `None` builds the network without stochastic layers.
    pub dropblock: Option<DropBlockConfig>,
    pub cardinality: usize,
    pub se_reduction: usize,
    pub deep_supervision: bool,
    pub distance_decoder: bool,
}

/// Block family per encoder/decoder stage for a given role.
pub fn stage_blocks(role: NetRole, depth: usize) -> Result<Vec<BlockKind>> {
    Ok(match role {
        NetRole::Localizer | NetRole::Ctv { .. } => vec![BlockKind::PlainConv; depth],
        NetRole::Organ { structure } => match structure {
            StructureId::Bladder | StructureId::FemoralHeadL | StructureId::FemoralHeadR => {
                vec![BlockKind::GroupedResidual; depth]
            }
            StructureId::Rectum => (0..depth)
                .map(|i| {
                    if i % 2 == 0 {
                        BlockKind::Residual
                    } else {
                        BlockKind::MultiBranch
                    }
                })
                .collect(),
            StructureId::PenileBulb => vec![BlockKind::SqueezeExcite; depth],
            StructureId::Ctv => {
                return Err(NnError::Config(
                    "the CTV uses the anatomy-guided network, not an organ network".into(),
                ))
            }
        },
    })
}

impl NetConfig {
    /// 2D slice localizer: 1 input channel, 5 sigmoid outputs.
    pub fn localizer() -> Self {
        let depth = 4;
        Self {
            role: NetRole::Localizer,
            dims: Dims::Two,
            in_channels: 1,
            out_channels: 5,
            depth,
            base_width: 32,
            stage_blocks: vec![BlockKind::PlainConv; depth],
            dropblock: Some(DropBlockConfig {
                keep_prob: 0.9,
                block_size: 5,
            }),
            cardinality: 8,
            se_reduction: 8,
            deep_supervision: false,
            distance_decoder: false,
        }
    }

    pub fn organ(structure: StructureId) -> Result<Self> {
        let role = NetRole::Organ { structure };
        let depth = 4;
        Ok(Self {
            role,
            dims: Dims::Three,
            in_channels: 1,
            out_channels: 1,
            depth,
            base_width: 16,
            stage_blocks: stage_blocks(role, depth)?,
            dropblock: Some(DropBlockConfig {
                keep_prob: 0.9,
                block_size: 3,
            }),
            cardinality: 8,
            se_reduction: 8,
            deep_supervision: false,
            distance_decoder: false,
        })
    }

    /// CTV network; `(false, false)` is a plain 3D UNet.
    pub fn agmtn(anatomy_guided: bool, multi_task: bool) -> Self {
        let role = NetRole::Ctv {
            anatomy_guided,
            multi_task,
        };
        let depth = 4;
        Self {
            role,
            dims: Dims::Three,
            in_channels: if anatomy_guided { 3 } else { 1 },
            out_channels: 1,
            depth,
            base_width: 16,
            stage_blocks: vec![BlockKind::PlainConv; depth],
            dropblock: Some(DropBlockConfig {
                keep_prob: 0.9,
                block_size: 3,
            }),
            cardinality: 8,
            se_reduction: 8,
            deep_supervision: true,
            distance_decoder: multi_task,
        }
    }

    pub fn with_base_width(mut self, w: usize) -> Self {
        self.base_width = w;
        self
    }

    /// Sets the keep probability, adding DropBlock layers if absent.
    pub fn with_keep_prob(mut self, keep_prob: f64) -> Self {
        let block_size = match self.dims {
            Dims::Two => 5,
            Dims::Three => 3,
        };
        let d = self.dropblock.get_or_insert(DropBlockConfig { keep_prob, block_size });
        d.keep_prob = keep_prob;
        self
    }

    pub fn without_dropblock(mut self) -> Self {
        self.dropblock = None;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        self.depth = depth;
        self.stage_blocks = stage_blocks(self.role, depth)?;
        Ok(self)
    }

    pub fn kernel(&self) -> [usize; 3] {
        match self.dims {
            Dims::Two => [1, 3, 3],
            Dims::Three => [3, 3, 3],
        }
    }

    pub fn pool(&self) -> [usize; 3] {
        match self.dims {
            Dims::Two => [1, 2, 2],
            Dims::Three => [2, 2, 2],
        }
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << level
    }

    /// Each spatial axis must be a multiple of this.
    pub fn min_divisor(&self) -> [usize; 3] {
        self.pool().map(|p| p.pow(self.depth as u32 - 1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.depth < 2 {
            return bad(format!("depth {} < 2", self.depth));
        }
        if self.deep_supervision && self.depth < 3 {
            return bad("deep supervision needs depth >= 3".into());
        }
        if self.stage_blocks.len() != self.depth {
            return bad("one block kind per stage required".into());
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.base_width == 0 {
            return bad("channel counts must be positive".into());
        }
        if let Some(d) = &self.dropblock {
            d.validate()?;
        }
        for (i, k) in self.stage_blocks.iter().enumerate() {
            let w = self.width(i);
            match k {
                BlockKind::GroupedResidual if w % self.cardinality.min(w) != 0 => {
                    return bad(format!("width {w} not divisible by cardinality"))
                }
                BlockKind::MultiBranch if w % 4 != 0 => {
                    return bad(format!("multi-branch width {w} not divisible by 4"))
                }
                BlockKind::SqueezeExcite if self.se_reduction == 0 => return bad("zero squeeze reduction".into()),
                _ => {}
            }
        }
        if let NetRole::Ctv {
            anatomy_guided,
            multi_task,
        } = self.role
        {
            if self.in_channels != if anatomy_guided { 3 } else { 1 } || self.distance_decoder != multi_task {
                return bad("CTV channel/decoder layout disagrees with the variant flags".into());
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone)]
struct ConvUnit {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
    groups: usize,
}

#[derive(Debug, Clone)]
enum Block {
    Plain {
        c1: ConvUnit,
        c2: ConvUnit,
    },
    Residual {
        c1: ConvUnit,
        c2: ConvUnit,
        skip: Option<ConvUnit>,
    },
    Grouped {
        reduce: ConvUnit,
        grouped: ConvUnit,
        expand: ConvUnit,
        skip: Option<ConvUnit>,
    },
    Multi {
        b1: ConvUnit,
        b2: [ConvUnit; 2],
        b3: [ConvUnit; 3],
        b4: ConvUnit,
    },
    SqueezeExcite {
        c1: ConvUnit,
        c2: ConvUnit,
        fc1: (ParamId, ParamId),
        fc2: (ParamId, ParamId),
    },
}

#[derive(Debug, Clone)]
struct Decoder {
    /// Indexed by level; `ups[i]` maps level i+1 to level i.
    ups: Vec<(ParamId, ParamId)>,
    blocks: Vec<Block>,
    head: (ParamId, ParamId),
    taps: Vec<(usize, ParamId, ParamId)>,
}

struct Builder<'a> {
    ps: &'a mut ParamStore,
    rng: CounterRng,
    k: [usize; 3],
}

impl Builder<'_> {
    fn unit(&mut self, name: &str, cin: usize, cout: usize, k: [usize; 3], groups: usize) -> ConvUnit {
        let kn = k.iter().product::<usize>();
        let cin_g = cin / groups;
        ConvUnit {
            w: self.ps.add(
                format!("{name}.w"),
                &[cout, cin_g, k[0], k[1], k[2]],
                Init::He {
                    fan_in: cin_g * kn,
                    gain: 1.0,
                },
                &mut self.rng,
            ),
            gamma: self.ps.add(format!("{name}.gamma"), &[cout], Init::Ones, &mut self.rng),
            beta: self.ps.add(format!("{name}.beta"), &[cout], Init::Zeros, &mut self.rng),
            groups,
        }
    }

    fn pointwise(&mut self, name: &str, cin: usize, cout: usize, gain: f32) -> (ParamId, ParamId) {
        (
            self.ps.add(
                format!("{name}.w"),
                &[cout, cin, 1, 1, 1],
                Init::He { fan_in: cin, gain },
                &mut self.rng,
            ),
            self.ps.add(format!("{name}.b"), &[cout], Init::Zeros, &mut self.rng),
        )
    }

    fn block(&mut self, name: &str, kind: BlockKind, cin: usize, cout: usize, cfg: &NetConfig) -> Block {
        let k = self.k;
        let one = [1, 1, 1];
        let skip = |b: &mut Self| (cin != cout).then(|| b.unit(&format!("{name}.skip"), cin, cout, one, 1));
        match kind {
            BlockKind::PlainConv => Block::Plain {
                c1: self.unit(&format!("{name}.c1"), cin, cout, k, 1),
                c2: self.unit(&format!("{name}.c2"), cout, cout, k, 1),
            },
            BlockKind::Residual => Block::Residual {
                c1: self.unit(&format!("{name}.c1"), cin, cout, k, 1),
                c2: self.unit(&format!("{name}.c2"), cout, cout, k, 1),
                skip: skip(self),
            },
            BlockKind::GroupedResidual => {
                let g = cfg.cardinality.min(cout);
                Block::Grouped {
                    reduce: self.unit(&format!("{name}.reduce"), cin, cout, one, 1),
                    grouped: self.unit(&format!("{name}.grouped"), cout, cout, k, g),
                    expand: self.unit(&format!("{name}.expand"), cout, cout, one, 1),
                    skip: skip(self),
                }
            }
            BlockKind::MultiBranch => {
                let q = cout / 4;
                Block::Multi {
                    b1: self.unit(&format!("{name}.b1"), cin, q, one, 1),
                    b2: [
                        self.unit(&format!("{name}.b2a"), cin, q, one, 1),
                        self.unit(&format!("{name}.b2b"), q, q, k, 1),
                    ],
                    b3: [
                        self.unit(&format!("{name}.b3a"), cin, q, one, 1),
                        self.unit(&format!("{name}.b3b"), q, q, k, 1),
                        self.unit(&format!("{name}.b3c"), q, q, k, 1),
                    ],
                    b4: self.unit(&format!("{name}.b4"), cin, q, one, 1),
                }
            }
            BlockKind::SqueezeExcite => {
                let r = (cout / cfg.se_reduction).max(1);
                Block::SqueezeExcite {
                    c1: self.unit(&format!("{name}.c1"), cin, cout, k, 1),
                    c2: self.unit(&format!("{name}.c2"), cout, cout, k, 1),
                    fc1: self.pointwise(&format!("{name}.se1"), cout, r, 1.0),
                    fc2: self.pointwise(&format!("{name}.se2"), r, cout, 1.0),
                }
            }
        }
    }

    fn decoder(&mut self, prefix: &str, cfg: &NetConfig, out: usize, taps: bool) -> Decoder {
        let pool = cfg.pool();
        let mut ups = Vec::new();
        let mut blocks = Vec::new();
        for i in 0..cfg.depth - 1 {
            let (wi, wn) = (cfg.width(i), cfg.width(i + 1));
            ups.push((
                self.ps.add(
                    format!("{prefix}.up{i}.w"),
                    &[wn, wi, pool[0], pool[1], pool[2]],
                    Init::He { fan_in: wn, gain: 1.0 },
                    &mut self.rng,
                ),
                self.ps
                    .add(format!("{prefix}.up{i}.b"), &[wi], Init::Zeros, &mut self.rng),
            ));
            blocks.push(self.block(&format!("{prefix}.dec{i}"), cfg.stage_blocks[i], 2 * wi, wi, cfg));
        }
        let head = self.pointwise(&format!("{prefix}.head"), cfg.width(0), out, 1.0);
        let taps = if taps {
            (1..=2)
                .map(|j| {
                    let level = cfg.depth - 1 - j;
                    let (w, b) = self.pointwise(&format!("{prefix}.aux{j}"), cfg.width(level), out, 1.0);
                    (level, w, b)
                })
                .collect()
        } else {
            Vec::new()
        };
        Decoder {
            ups,
            blocks,
            head,
            taps,
        }
    }
}

/// Node ids of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    /// Sigmoid probabilities at input resolution.
    pub main: NodeId,
    /// Deep-supervision probabilities, upsampled to input resolution.
    pub aux: Option<[NodeId; 2]>,
    /// Linear distance regression at input resolution.
    pub dist: Option<NodeId>,
}

/// Materialized outputs of [`Model::predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub main: Tensor,
    pub aux: Option<[Tensor; 2]>,
    pub dist: Option<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: NetConfig,
    pub params: ParamStore,
    enc: Vec<Block>,
    seg: Decoder,
    dist: Option<Decoder>,
}

/// Stream id for DropBlock masks, derived from the caller's rng.
const DROP_STREAM: u64 = 0xD0;

impl Model {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamStore::new();
        let mut b = Builder {
            ps: &mut ps,
            rng: CounterRng::new(seed),
            k: config.kernel(),
        };
        let enc = (0..config.depth)
            .map(|i| {
                let cin = if i == 0 {
                    config.in_channels
                } else {
                    config.width(i - 1)
                };
                b.block(
                    &format!("enc{i}"),
                    config.stage_blocks[i],
                    cin,
                    config.width(i),
                    &config,
                )
            })
            .collect();
        let seg = b.decoder("seg", &config, config.out_channels, config.deep_supervision);
        let dist = config.distance_decoder.then(|| b.decoder("dist", &config, 1, false));
        Ok(Self {
            config,
            params: ps,
            enc,
            seg,
            dist,
        })
    }

    /// `(stage name, block kind)` for every encoder and decoder stage.
    pub fn manifest(&self) -> Vec<(String, BlockKind)> {
        let c = &self.config;
        let mut m: Vec<_> = (0..c.depth).map(|i| (format!("enc{i}"), c.stage_blocks[i])).collect();
        m.extend((0..c.depth - 1).map(|i| (format!("seg.dec{i}"), c.stage_blocks[i])));
        if self.dist.is_some() {
            m.extend((0..c.depth - 1).map(|i| (format!("dist.dec{i}"), c.stage_blocks[i])));
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn has_stochastic_layers(&self) -> bool {
        self.config.dropblock.is_some()
    }

    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        if shape[0] != self.config.in_channels {
            return Err(NnError::Shape(format!(
                "{} input channels, network expects {}",
                shape[0], self.config.in_channels
            )));
        }
        let div = self.config.min_divisor();
        for a in 0..3 {
            if shape[a + 1] == 0 || shape[a + 1] % div[a] != 0 {
                return Err(NnError::Shape(format!(
                    "spatial {:?} must be a positive multiple of {div:?}",
                    &shape[1..]
                )));
            }
        }
        Ok(())
    }

    /// Record a forward pass. DropBlock is active only in stochastic mode;
    /// equal `rng` states give identical outputs.
    pub fn forward<'a>(&'a self, input: &Tensor, mode: DropMode, rng: &CounterRng) -> Result<(Graph<'a>, Outputs)> {
        self.check_input(input.shape)?;
        let c = &self.config;
        let mut g = Graph::new(&self.params);
        let mut drop = Dropper {
            cfg: c.dropblock,
            mode,
            rng: rng.derive(DROP_STREAM),
            layer: 0,
        };
        let pool = c.pool();
        let down = PoolGeom {
            k: pool,
            s: pool,
            pad: [0; 3],
        };
        let mut x = g.input(input.clone());
        let mut skips = Vec::with_capacity(c.depth);
        for (i, blk) in self.enc.iter().enumerate() {
            if i > 0 {
                x = g.maxpool(x, down)?;
            }
            x = self.run_block(&mut g, blk, x)?;
            skips.push(x);
        }
        let bottom = x;
        let (main, aux) = self.run_decoder(&mut g, &self.seg, bottom, &skips, &mut drop, true)?;
        let dist = match &self.dist {
            Some(d) => Some(self.run_decoder(&mut g, d, bottom, &skips, &mut drop, false)?.0),
            None => None,
        };
        Ok((g, Outputs { main, aux, dist }))
    }

    /// Forward pass returning owned tensors.
    pub fn predict(&self, input: &Tensor, mode: DropMode, rng: &CounterRng) -> Result<Prediction> {
        let (g, o) = self.forward(input, mode, rng)?;
        Ok(Prediction {
            main: g.value(o.main).clone(),
            aux: o.aux.map(|[a, b]| [g.value(a).clone(), g.value(b).clone()]),
            dist: o.dist.map(|d| g.value(d).clone()),
        })
    }

    fn run_decoder(
        &self,
        g: &mut Graph<'_>,
        dec: &Decoder,
        bottom: NodeId,
        skips: &[NodeId],
        drop: &mut Dropper,
        sigmoid: bool,
    ) -> Result<(NodeId, Option<[NodeId; 2]>)> {
        let c = &self.config;
        let pool = c.pool();
        let mut x = bottom;
        let mut tap_nodes = Vec::new();
        for i in (0..c.depth - 1).rev() {
            let (uw, ub) = dec.ups[i];
            let up = g.upconv(x, uw, Some(ub))?;
            let cat = g.concat(&[up, skips[i]])?;
            x = self.run_block(g, &dec.blocks[i], cat)?;
            x = drop.apply(g, x)?;
            for &(level, w, b) in &dec.taps {
                if level == i {
                    let logit = g.conv(x, w, Some(b), 1)?;
                    let p = g.sigmoid(logit);
                    let f = pool.map(|q| q.pow(level as u32));
                    tap_nodes.push(g.upsample(p, f)?);
                }
            }
        }
        let logit = g.conv(x, dec.head.0, Some(dec.head.1), 1)?;
        let out = if sigmoid { g.sigmoid(logit) } else { logit };
        // Taps were collected deepest first.
        let aux = (tap_nodes.len() == 2).then(|| [tap_nodes[1], tap_nodes[0]]);
        Ok((out, aux))
    }

    fn unit(g: &mut Graph<'_>, u: &ConvUnit, x: NodeId, act: bool) -> Result<NodeId> {
        // No conv bias: the normalization removes it.
        let y = g.conv(x, u.w, None, u.groups)?;
        let y = g.instance_norm(y, u.gamma, u.beta)?;
        Ok(if act { g.leaky_relu(y, SLOPE) } else { y })
    }

    fn run_block(&self, g: &mut Graph<'_>, blk: &Block, x: NodeId) -> Result<NodeId> {
        Ok(match blk {
            Block::Plain { c1, c2 } => {
                let h = Self::unit(g, c1, x, true)?;
                Self::unit(g, c2, h, true)?
            }
            Block::Residual { c1, c2, skip } => {
                let h = Self::unit(g, c1, x, true)?;
                let h = Self::unit(g, c2, h, false)?;
                let s = match skip {
                    Some(u) => Self::unit(g, u, x, false)?,
                    None => x,
                };
                let y = g.add(h, s)?;
                g.leaky_relu(y, SLOPE)
            }
            Block::Grouped {
                reduce,
                grouped,
                expand,
                skip,
            } => {
                let h = Self::unit(g, reduce, x, true)?;
                let h = Self::unit(g, grouped, h, true)?;
                let h = Self::unit(g, expand, h, false)?;
                let s = match skip {
                    Some(u) => Self::unit(g, u, x, false)?,
                    None => x,
                };
                let y = g.add(h, s)?;
                g.leaky_relu(y, SLOPE)
            }
            Block::Multi { b1, b2, b3, b4 } => {
                let k = self.config.kernel();
                let y1 = Self::unit(g, b1, x, true)?;
                let mut y2 = x;
                for u in b2 {
                    y2 = Self::unit(g, u, y2, true)?;
                }
                let mut y3 = x;
                for u in b3 {
                    y3 = Self::unit(g, u, y3, true)?;
                }
                let p = g.maxpool(
                    x,
                    PoolGeom {
                        k,
                        s: [1; 3],
                        pad: k.map(|v| v / 2),
                    },
                )?;
                let y4 = Self::unit(g, b4, p, true)?;
                g.concat(&[y1, y2, y3, y4])?
            }
            Block::SqueezeExcite { c1, c2, fc1, fc2 } => {
                let h = Self::unit(g, c1, x, true)?;
                let h = Self::unit(g, c2, h, true)?;
                let s = g.global_avg(h);
                let s = g.conv(s, fc1.0, Some(fc1.1), 1)?;
                let s = g.leaky_relu(s, 0.0);
                let s = g.conv(s, fc2.0, Some(fc2.1), 1)?;
                let s = g.sigmoid(s);
                g.channel_scale(h, s)?
            }
        })
    }
}

struct Dropper {
    cfg: Option<DropBlockConfig>,
    mode: DropMode,
    rng: CounterRng,
    layer: u64,
}

impl Dropper {
    fn apply(&mut self, g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
        self.layer += 1;
        let cfg = match self.cfg {
            Some(c) if self.mode == DropMode::Stochastic && c.keep_prob < 1.0 => c,
            _ => return Ok(x),
        };
        let shape = g.shape(x);
        let block = cfg.block_for([shape[1], shape[2], shape[3]]);
        let mut rng = self.rng.derive(self.layer);
        match dropblock::mask(shape, cfg.keep_prob, block, &mut rng)? {
            Some(m) => g.mask_mul(x, m),
            None => Ok(x),
        }
    }
}

pub fn build_localizer(seed: u64) -> Result<Model> {
    Model::new(NetConfig::localizer(), seed)
}

pub fn build_organ_net(structure: StructureId, seed: u64) -> Result<Model> {
    Model::new(NetConfig::organ(structure)?, seed)
}

pub fn build_agmtn(anatomy_guided: bool, multi_task: bool, seed: u64) -> Result<Model> {
    Model::new(NetConfig::agmtn(anatomy_guided, multi_task), seed)
}
