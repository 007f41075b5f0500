//! Deterministic synthetic pelvic phantoms.
//!
//! Axes: x is left-right (the left femoral head has the smaller x), y runs
//! anterior to posterior, z runs inferior to superior. A voxel `(i, j, k)`
//! sits at `(i·dx, j·dy, k·dz)` millimeters.
//!
//! The CTV has no intensity signature. It is the region between the
//! posterior bladder wall and the anterior rectal wall, from the top of the
//! penile bulb up to the bladder mid-plane (each end shifted by a per-style
//! jitter), within a lateral band whose half-width is a fixed fraction of the
//! distance between the femoral-head centers. Where a negative inferior
//! jitter reaches into the penile bulb, the bulb is carved out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::structure::{StructureId, StructureSet};
use crate::volume::{Mask, Shape, Spacing, Volume};

/// Closed interval that a parameter is drawn uniformly from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn draw(&self, rng: &mut CounterRng) -> f64 {
        rng.uniform(self.lo, self.hi)
    }
}

/// Organ geometry ranges. Offsets are millimeters relative to the center of
/// the field of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRanges {
    pub midline_x: Range,
    pub bladder_semi_axes: [Range; 3],
    pub bladder_offset_y: Range,
    pub bladder_offset_z: Range,
    pub rectum_radius: Range,
    pub rectum_gap: Range,
    pub rectum_curvature: Range,
    pub rectum_offset_x: Range,
    pub rectum_bend_z: Range,
    pub rectum_half_length: f64,
    pub femoral_radius: Range,
    pub femoral_separation: Range,
    pub femoral_offset_y: Range,
    pub femoral_offset_z: Range,
    pub bulb_semi_axes: [Range; 3],
    pub bulb_offset_z: Range,
    pub bulb_rectum_gap: f64,
    /// Half-width of the CTV band as a fraction of the femoral-head distance.
    pub ctv_lateral_fraction: f64,
}

impl Default for GeometryRanges {
    fn default() -> Self {
        Self {
            midline_x: Range::new(-3.0, 3.0),
            bladder_semi_axes: [Range::new(15.0, 21.0), Range::new(13.0, 17.0), Range::new(13.0, 17.0)],
            bladder_offset_y: Range::new(-24.0, -18.0),
            bladder_offset_z: Range::new(22.0, 30.0),
            rectum_radius: Range::new(8.0, 11.0),
            rectum_gap: Range::new(10.0, 16.0),
            rectum_curvature: Range::new(0.0, 5.0),
            rectum_offset_x: Range::new(-2.0, 2.0),
            rectum_bend_z: Range::new(-10.0, 0.0),
            rectum_half_length: 58.0,
            femoral_radius: Range::new(9.0, 12.0),
            femoral_separation: Range::new(68.0, 76.0),
            femoral_offset_y: Range::new(4.0, 10.0),
            femoral_offset_z: Range::new(-2.0, 4.0),
            bulb_semi_axes: [Range::new(7.0, 9.0), Range::new(5.0, 7.0), Range::new(5.0, 7.0)],
            bulb_offset_z: Range::new(-46.0, -40.0),
            bulb_rectum_gap: 4.0,
            ctv_lateral_fraction: 0.2,
        }
    }
}

/// Intensities on a 0–1000 synthetic scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub background: f64,
    pub bladder: f64,
    pub rectum_wall: f64,
    pub rectum_lumen: f64,
    pub femoral_head: f64,
    pub penile_bulb: f64,
}

impl Default for Intensities {
    fn default() -> Self {
        Self {
            background: 500.0,
            bladder: 420.0,
            rectum_wall: 580.0,
            rectum_lumen: 150.0,
            femoral_head: 900.0,
            penile_bulb: 580.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub shape: Shape,
    pub spacing: Spacing,
    pub geometry: GeometryRanges,
    pub intensities: Intensities,
    pub noise_sigma: f64,
    /// Maximum CTV superior/inferior extent jitter in millimeters.
    pub style_jitter_mm: f64,
    /// Selects the contouring "style"; geometry and CT do not depend on it.
    pub style_index: u64,
}

impl PhantomSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            shape: [96, 96, 48],
            spacing: Spacing::default(),
            geometry: GeometryRanges::default(),
            intensities: Intensities::default(),
            noise_sigma: 20.0,
            style_jitter_mm: 3.0,
            style_index: 0,
        }
    }

    pub fn extent_mm(&self) -> [f64; 3] {
        let s = self.spacing.as_array();
        [
            (self.shape[0] - 1) as f64 * s[0],
            (self.shape[1] - 1) as f64 * s[1],
            (self.shape[2] - 1) as f64 * s[2],
        ]
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::new(0)
    }
}

/// Drawn organ parameters (absolute millimeters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganParams {
    pub midline_x: f64,
    pub bladder_center: [f64; 3],
    pub bladder_semi_axes: [f64; 3],
    pub rectum_x: f64,
    /// Center-line y at the bend height.
    pub rectum_y0: f64,
    pub rectum_bend_z: f64,
    pub rectum_curvature: f64,
    pub rectum_radius: f64,
    pub rectum_lumen_radius: f64,
    pub rectum_z_range: [f64; 2],
    pub femoral_centers: [[f64; 3]; 2],
    pub femoral_radius: [f64; 2],
    pub bulb_center: [f64; 3],
    pub bulb_semi_axes: [f64; 3],
}

impl OrganParams {
    /// Rectum center-line y at height z.
    pub fn rectum_center_y(&self, z: f64) -> f64 {
        let t = (z - self.rectum_bend_z) / 40.0;
        self.rectum_y0 + self.rectum_curvature * t * t
    }

    pub fn femoral_distance(&self) -> f64 {
        let [a, b] = self.femoral_centers;
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

/// Parameters of the CTV construction rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtvParams {
    pub jitter_inferior_mm: f64,
    pub jitter_superior_mm: f64,
    pub z_inferior: f64,
    pub z_superior: f64,
    pub lateral_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomMeta {
    pub seed: u64,
    pub style_index: u64,
    pub organs: OrganParams,
    pub ctv: CtvParams,
    pub noise_sigma: f64,
    /// Mean CT inside the CTV minus mean CT in the adjacent background shell.
    pub ctv_contrast: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomCase {
    pub ct: Volume,
    pub truth: StructureSet,
    pub meta: PhantomMeta,
}

const STREAM_GEOMETRY: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_STYLE: u64 = 2;

fn draw_organs(spec: &PhantomSpec, rng: &mut CounterRng) -> OrganParams {
    let g = &spec.geometry;
    let e = spec.extent_mm();
    let c = [e[0] / 2.0, e[1] / 2.0, e[2] / 2.0];

    let midline_x = c[0] + g.midline_x.draw(rng);
    let bsa = [
        g.bladder_semi_axes[0].draw(rng),
        g.bladder_semi_axes[1].draw(rng),
        g.bladder_semi_axes[2].draw(rng),
    ];
    let bladder_center = [
        midline_x,
        c[1] + g.bladder_offset_y.draw(rng),
        c[2] + g.bladder_offset_z.draw(rng),
    ];
    let rectum_radius = g.rectum_radius.draw(rng);
    let gap = g.rectum_gap.draw(rng);
    let rectum_curvature = g.rectum_curvature.draw(rng);
    let rectum_x = midline_x + g.rectum_offset_x.draw(rng);
    let rectum_bend_z = c[2] + g.rectum_bend_z.draw(rng);
    let rectum_y0 = bladder_center[1] + bsa[1] + gap + rectum_radius;

    let femoral_radius = [g.femoral_radius.draw(rng), g.femoral_radius.draw(rng)];
    let sep = g.femoral_separation.draw(rng);
    let fy = bladder_center[1] + g.femoral_offset_y.draw(rng);
    let fz = c[2] + g.femoral_offset_z.draw(rng);
    let femoral_centers = [[midline_x - sep / 2.0, fy, fz], [midline_x + sep / 2.0, fy, fz]];

    let bulb_semi_axes = [
        g.bulb_semi_axes[0].draw(rng),
        g.bulb_semi_axes[1].draw(rng),
        g.bulb_semi_axes[2].draw(rng),
    ];
    let bulb_center = [
        midline_x,
        rectum_y0 - rectum_radius - bulb_semi_axes[1] - g.bulb_rectum_gap,
        c[2] + g.bulb_offset_z.draw(rng),
    ];

    OrganParams {
        midline_x,
        bladder_center,
        bladder_semi_axes: bsa,
        rectum_x,
        rectum_y0,
        rectum_bend_z,
        rectum_curvature,
        rectum_radius,
        rectum_lumen_radius: 0.45 * rectum_radius,
        rectum_z_range: [c[2] - g.rectum_half_length, c[2] + g.rectum_half_length],
        femoral_centers,
        femoral_radius,
        bulb_center,
        bulb_semi_axes,
    }
}

fn ctv_params(spec: &PhantomSpec, organs: &OrganParams) -> CtvParams {
    let mut rng = CounterRng::stream(spec.seed, STREAM_STYLE).derive(spec.style_index);
    let j = spec.style_jitter_mm;
    let (ji, js) = if j > 0.0 {
        (rng.uniform(-j, j), rng.uniform(-j, j))
    } else {
        (0.0, 0.0)
    };
    CtvParams {
        jitter_inferior_mm: ji,
        jitter_superior_mm: js,
        z_inferior: organs.bulb_center[2] + organs.bulb_semi_axes[2] + ji,
        z_superior: organs.bladder_center[2] + js,
        lateral_half_width: spec.geometry.ctv_lateral_fraction * organs.femoral_distance(),
    }
}

fn ellipsoid(p: [f64; 3], c: [f64; 3], a: [f64; 3]) -> bool {
    ((p[0] - c[0]) / a[0]).powi(2) + ((p[1] - c[1]) / a[1]).powi(2) + ((p[2] - c[2]) / a[2]).powi(2) <= 1.0
}

fn rectum_radial2(o: &OrganParams, p: [f64; 3]) -> Option<f64> {
    if p[2] < o.rectum_z_range[0] || p[2] > o.rectum_z_range[1] {
        return None;
    }
    Some((p[0] - o.rectum_x).powi(2) + (p[1] - o.rectum_center_y(p[2])).powi(2))
}

/// Anterior CTV boundary: the posterior bladder wall where the bladder's
/// footprint covers `(x, z)`, its coronal mid-plane elsewhere.
pub fn ctv_anterior_bound(o: &OrganParams, x: f64, z: f64) -> f64 {
    let [bx, by, bz] = o.bladder_center;
    let [ax, ay, az] = o.bladder_semi_axes;
    let f = 1.0 - ((x - bx) / ax).powi(2) - ((z - bz) / az).powi(2);
    by + ay * f.max(0.0).sqrt()
}

/// Posterior CTV boundary: the anterior rectal wall (its center line where
/// `x` lies outside the tube).
pub fn ctv_posterior_bound(o: &OrganParams, x: f64, z: f64) -> f64 {
    let r2 = o.rectum_radius.powi(2) - (x - o.rectum_x).powi(2);
    o.rectum_center_y(z) - r2.max(0.0).sqrt()
}

pub fn in_ctv(o: &OrganParams, c: &CtvParams, p: [f64; 3]) -> bool {
    let [x, y, z] = p;
    !ellipsoid(p, o.bulb_center, o.bulb_semi_axes)
        && z >= c.z_inferior
        && z <= c.z_superior
        && (x - o.midline_x).abs() <= c.lateral_half_width
        && y > ctv_anterior_bound(o, x, z)
        && y < ctv_posterior_bound(o, x, z)
}

fn check_inside(name: &str, lo: [f64; 3], hi: [f64; 3], extent: [f64; 3]) -> Result<()> {
    for a in 0..3 {
        if lo[a] < 0.0 || hi[a] > extent[a] {
            return Err(Error::Infeasible(format!(
                "{name} spans {lo:?}..{hi:?}, outside field of view {extent:?}"
            )));
        }
    }
    Ok(())
}

fn check_geometry(spec: &PhantomSpec, o: &OrganParams) -> Result<()> {
    let e = spec.extent_mm();
    let bc = o.bladder_center;
    let ba = o.bladder_semi_axes;
    check_inside(
        "bladder",
        [bc[0] - ba[0], bc[1] - ba[1], bc[2] - ba[2]],
        [bc[0] + ba[0], bc[1] + ba[1], bc[2] + ba[2]],
        e,
    )?;
    let [z0, z1] = o.rectum_z_range;
    let ymax = o.rectum_center_y(z0).max(o.rectum_center_y(z1)) + o.rectum_radius;
    check_inside(
        "rectum",
        [o.rectum_x - o.rectum_radius, o.rectum_y0 - o.rectum_radius, z0],
        [o.rectum_x + o.rectum_radius, ymax, z1],
        e,
    )?;
    for (c, r) in o.femoral_centers.iter().zip(o.femoral_radius) {
        check_inside(
            "femoral head",
            [c[0] - r, c[1] - r, c[2] - r],
            [c[0] + r, c[1] + r, c[2] + r],
            e,
        )?;
    }
    let pc = o.bulb_center;
    let pa = o.bulb_semi_axes;
    check_inside(
        "penile bulb",
        [pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2]],
        [pc[0] + pa[0], pc[1] + pa[1], pc[2] + pa[2]],
        e,
    )?;
    Ok(())
}

/// Render one phantom. Pure function of `spec`.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.spacing.validate()?;
    if spec.shape.iter().any(|&n| n < 2) {
        return Err(Error::Infeasible(format!("grid {:?} too small", spec.shape)));
    }
    let mut geo_rng = CounterRng::stream(spec.seed, STREAM_GEOMETRY);
    let organs = draw_organs(spec, &mut geo_rng);
    check_geometry(spec, &organs)?;
    let ctv = ctv_params(spec, &organs);

    let shape = spec.shape;
    let sp = spec.spacing;
    let s = sp.as_array();
    let pos = |x: usize, y: usize, z: usize| [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]];

    let bladder = Mask::from_fn(shape, sp, |x, y, z| {
        ellipsoid(pos(x, y, z), organs.bladder_center, organs.bladder_semi_axes)
    });
    let rectum = Mask::from_fn(shape, sp, |x, y, z| {
        rectum_radial2(&organs, pos(x, y, z)).is_some_and(|d2| d2 <= organs.rectum_radius.powi(2))
    });
    let fem = |k: usize| {
        let c = organs.femoral_centers[k];
        let r = organs.femoral_radius[k];
        Mask::from_fn(shape, sp, move |x, y, z| ellipsoid(pos(x, y, z), c, [r, r, r]))
    };
    let fem_l = fem(0);
    let fem_r = fem(1);
    let bulb = Mask::from_fn(shape, sp, |x, y, z| {
        ellipsoid(pos(x, y, z), organs.bulb_center, organs.bulb_semi_axes)
    });
    let ctv_mask = Mask::from_fn(shape, sp, |x, y, z| in_ctv(&organs, &ctv, pos(x, y, z)));

    let organ_masks = [&bladder, &rectum, &fem_l, &fem_r, &bulb];
    for (i, a) in organ_masks.iter().enumerate() {
        if a.is_empty_mask() {
            return Err(Error::Infeasible(format!("organ {i} rasterized empty")));
        }
        for b in &organ_masks[i + 1..] {
            if a.intersection_count(b)? > 0 {
                return Err(Error::Infeasible("organs overlap".into()));
            }
        }
        if ctv_mask.intersection_count(a)? > 0 {
            return Err(Error::Infeasible("CTV overlaps an organ".into()));
        }
    }
    if ctv_mask.is_empty_mask() {
        return Err(Error::Infeasible("CTV rasterized empty".into()));
    }

    // CT rendering; the CTV keeps the background intensity.
    let it = &spec.intensities;
    let mut noise = CounterRng::stream(spec.seed, STREAM_NOISE);
    let mut data = Vec::with_capacity(bladder.data.len());
    let lumen2 = organs.rectum_lumen_radius.powi(2);
    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                let i = crate::volume::linear_index(shape, x, y, z);
                let base = if bladder.data[i] {
                    it.bladder
                } else if rectum.data[i] {
                    let d2 = rectum_radial2(&organs, pos(x, y, z)).unwrap_or(f64::MAX);
                    if d2 <= lumen2 {
                        it.rectum_lumen
                    } else {
                        it.rectum_wall
                    }
                } else if fem_l.data[i] || fem_r.data[i] {
                    it.femoral_head
                } else if bulb.data[i] {
                    it.penile_bulb
                } else {
                    it.background
                };
                data.push((base + spec.noise_sigma * noise.normal()) as f32);
            }
        }
    }
    let ct = Volume::new(shape, sp, data)?;

    let all_organs = organ_masks
        .iter()
        .try_fold(Mask::empty(shape, sp), |acc, m| acc.union(m))?;
    let ctv_contrast = ctv_shell_contrast(&ct, &ctv_mask, &all_organs)?;

    let mut truth = StructureSet::new(shape, sp);
    truth.insert(StructureId::Ctv, ctv_mask)?;
    truth.insert(StructureId::Bladder, bladder)?;
    truth.insert(StructureId::Rectum, rectum)?;
    truth.insert(StructureId::FemoralHeadL, fem_l)?;
    truth.insert(StructureId::FemoralHeadR, fem_r)?;
    truth.insert(StructureId::PenileBulb, bulb)?;

    Ok(PhantomCase {
        ct,
        truth,
        meta: PhantomMeta {
            seed: spec.seed,
            style_index: spec.style_index,
            organs,
            ctv,
            noise_sigma: spec.noise_sigma,
            ctv_contrast,
        },
    })
}

/// Background shell: two 6-dilations of the CTV minus the CTV and all organs.
pub fn background_shell(ctv: &Mask, organs: &Mask) -> Result<Mask> {
    ctv.dilate6().dilate6().and_not(ctv)?.and_not(organs)
}

/// Mean CT inside `ctv` minus mean CT over its background shell.
pub fn ctv_shell_contrast(ct: &Volume, ctv: &Mask, organs: &Mask) -> Result<f64> {
    let shell = background_shell(ctv, organs)?;
    let mean = |m: &Mask| {
        let (s, n) = m
            .data
            .iter()
            .zip(&ct.data)
            .filter(|(b, _)| **b)
            .fold((0.0f64, 0usize), |(s, n), (_, &v)| (s + v as f64, n + 1));
        s / n.max(1) as f64
    };
    Ok(mean(ctv) - mean(&shell))
}

/// Per-case seeds for the three splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSeeds {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl DatasetSeeds {
    pub fn new(base_seed: u64, n_train: usize, n_val: usize, n_test: usize) -> Result<Self> {
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::InvalidArgument("split counts must be >= 1".into()));
        }
        let split = |tag: u64, n: usize| -> Vec<u64> {
            let root = CounterRng::stream(base_seed, 0x5350_4c49_5400 + tag);
            (0..n as u64).map(|i| root.derive(i).key()).collect()
        };
        Ok(Self {
            train: split(0, n_train),
            val: split(1, n_val),
            test: split(2, n_test),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<PhantomCase>,
    pub val: Vec<PhantomCase>,
    pub test: Vec<PhantomCase>,
}

/// Generate train/val/test phantoms from `template` (its seed is replaced
/// per case).
pub fn generate_dataset(
    base_seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    template: &PhantomSpec,
) -> Result<Dataset> {
    let seeds = DatasetSeeds::new(base_seed, n_train, n_val, n_test)?;
    let make = |list: &[u64]| -> Result<Vec<PhantomCase>> {
        list.iter()
            .map(|&seed| {
                generate(&PhantomSpec {
                    seed,
                    ..template.clone()
                })
            })
            .collect()
    };
    Ok(Dataset {
        train: make(&seeds.train)?,
        val: make(&seeds.val)?,
        test: make(&seeds.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_values() {
        let s = PhantomSpec::default();
        assert_eq!(s.shape, [96, 96, 48]);
        assert_eq!(s.spacing, Spacing::new(1.17, 1.17, 3.0).unwrap());
        assert_eq!(s.noise_sigma, 20.0);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = generate(&PhantomSpec::new(42)).unwrap();
        let b = generate(&PhantomSpec::new(42)).unwrap();
        assert_eq!(crate::mivol::encode(&a.ct), crate::mivol::encode(&b.ct));
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.meta, b.meta);
    }

    #[test]
    fn styles_change_only_ctv_extent() {
        let a = generate(&PhantomSpec::new(5)).unwrap();
        // jitter below one slice thickness may not move any voxel; take the
        // first style that does
        let b = (1..20)
            .map(|style_index| {
                generate(&PhantomSpec {
                    style_index,
                    ..PhantomSpec::new(5)
                })
                .unwrap()
            })
            .find(|b| b.truth.get(StructureId::Ctv) != a.truth.get(StructureId::Ctv))
            .expect("some style moves the CTV ends");
        assert_eq!(a.ct, b.ct);
        assert_eq!(a.meta.organs, b.meta.organs);
        for id in StructureId::OARS {
            assert_eq!(a.truth.get(id), b.truth.get(id));
        }
        assert_ne!(a.truth.get(StructureId::Ctv), b.truth.get(StructureId::Ctv));
        assert_eq!(a.meta.ctv.lateral_half_width, b.meta.ctv.lateral_half_width);
        // differences are confined to slices near the superior/inferior ends
        let ca = a.truth.get(StructureId::Ctv).unwrap();
        let cb = b.truth.get(StructureId::Ctv).unwrap();
        let dz = a.ct.spacing.dz;
        for z in 0..a.ct.shape[2] {
            let zmm = z as f64 * dz;
            let lo = a.meta.ctv.z_inferior.min(b.meta.ctv.z_inferior);
            let lo2 = a.meta.ctv.z_inferior.max(b.meta.ctv.z_inferior);
            let hi = a.meta.ctv.z_superior.min(b.meta.ctv.z_superior);
            let hi2 = a.meta.ctv.z_superior.max(b.meta.ctv.z_superior);
            let in_jitter_band = (zmm >= lo && zmm <= lo2) || (zmm >= hi && zmm <= hi2);
            if !in_jitter_band {
                for y in 0..a.ct.shape[1] {
                    for x in 0..a.ct.shape[0] {
                        assert_eq!(ca.get(x, y, z), cb.get(x, y, z));
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_grid_errors() {
        let spec = PhantomSpec {
            shape: [40, 40, 20],
            ..PhantomSpec::new(1)
        };
        assert!(matches!(generate(&spec), Err(Error::Infeasible(_))));
    }

    #[test]
    fn dataset_seeds_distinct_and_reproducible() {
        let a = DatasetSeeds::new(0, 2, 1, 1).unwrap();
        assert_eq!(a, DatasetSeeds::new(0, 2, 1, 1).unwrap());
        let mut all: Vec<u64> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 4);
        assert!(DatasetSeeds::new(0, 0, 1, 1).is_err());
        // a clinical-sized split is expressible
        let big = DatasetSeeds::new(3, 255, 35, 50).unwrap();
        assert_eq!((big.train.len(), big.val.len(), big.test.len()), (255, 35, 50));
    }

    #[test]
    fn seed_collision_scan() {
        let s = DatasetSeeds::new(11, 800, 100, 100).unwrap();
        let set: std::collections::HashSet<u64> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        assert_eq!(set.len(), 1000);
    }
}
