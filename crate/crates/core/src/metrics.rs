//! Overlap and surface metrics, goodness of fit, and paired t-tests.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::disttf::squared_distance_mm2;
use crate::error::{check_shape, Error, Result};
use crate::structure::{StructureId, StructureSet};
use crate::volume::{linear_index, Mask};

/// `2|a∩b| / (|a|+|b|)`, defined as 1 when both are empty.
pub fn dsc(a: &Mask, b: &Mask) -> Result<f64> {
    check_shape(a.shape, b.shape)?;
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Foreground voxels with at least one background 6-neighbor; voxels on the
/// grid border count as touching background.
pub fn surface_voxels(m: &Mask) -> Mask {
    let [nx, ny, nz] = m.shape;
    let mut out = Mask::empty(m.shape, m.spacing);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !m.get(x, y, z) {
                    continue;
                }
                let border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
                let surf = border
                    || !m.get(x - 1, y, z)
                    || !m.get(x + 1, y, z)
                    || !m.get(x, y - 1, z)
                    || !m.get(x, y + 1, z)
                    || !m.get(x, y, z - 1)
                    || !m.get(x, y, z + 1);
                if surf {
                    out.data[linear_index(m.shape, x, y, z)] = true;
                }
            }
        }
    }
    out
}

/// In-plane contour of one axial slice: foreground pixels with a background
/// 4-neighbor (out of slice counts as background). Row-major x-fastest.
pub fn slice_contour(m: &Mask, z: usize) -> Vec<bool> {
    let [nx, ny, _] = m.shape;
    let mut out = vec![false; nx * ny];
    for y in 0..ny {
        for x in 0..nx {
            if !m.get(x, y, z) {
                continue;
            }
            let border = x == 0 || y == 0 || x + 1 == nx || y + 1 == ny;
            out[x + nx * y] =
                border || !m.get(x - 1, y, z) || !m.get(x + 1, y, z) || !m.get(x, y - 1, z) || !m.get(x, y + 1, z);
        }
    }
    out
}

/// Symmetric average surface distance in millimeters between voxel centers.
pub fn asd(a: &Mask, b: &Mask) -> Result<f64> {
    check_shape(a.shape, b.shape)?;
    if a.is_empty_mask() || b.is_empty_mask() {
        return Err(Error::EmptyMask("average surface distance needs two nonempty masks"));
    }
    let sa = surface_voxels(a);
    let sb = surface_voxels(b);
    let da = squared_distance_mm2(&sa);
    let db = squared_distance_mm2(&sb);
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..sa.data.len() {
        if sa.data[i] {
            total += db[i].sqrt();
            n += 1;
        }
        if sb.data[i] {
            total += da[i].sqrt();
            n += 1;
        }
    }
    Ok(total / n as f64)
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Pearson correlation coefficient; 0 when either input is constant.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(vec![x.len()], vec![y.len()]));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Coefficient of determination of the least-squares line of `y` on `x`.
/// Constant `y` gives 0.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(vec![x.len()], vec![y.len()]));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument("need at least 3 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sst: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sst == 0.0 {
        return Ok(0.0);
    }
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let icpt = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - (icpt + slope * a)).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Paired two-sided Student t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(vec![a.len()], vec![b.len()]));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let df = d.len() - 1;
    let (m, sd) = mean_sd(&d);
    if sd == 0.0 {
        if m == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, df });
        }
        let t = m.signum() * f64::INFINITY;
        return Ok(TTest { t, p: 0.0, df });
    }
    let t = m / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(TTest { t, p, df })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub case: String,
    pub structure: StructureId,
    pub variant: String,
    pub dsc: Option<f64>,
    pub asd_mm: Option<f64>,
    pub quality: Option<f64>,
}

/// One row per structure found in either set; structures missing from one
/// side get empty metrics.
pub fn evaluate_case(
    case: &str,
    variant: &str,
    pred: &StructureSet,
    truth: &StructureSet,
    quality: &BTreeMap<StructureId, f64>,
) -> Result<Vec<EvalRow>> {
    check_shape(pred.shape, truth.shape)?;
    let ids: BTreeSet<StructureId> = pred.ids().into_iter().chain(truth.ids()).collect();
    let mut rows = Vec::new();
    for id in ids {
        let (d, a) = match (pred.get(id), truth.get(id)) {
            (Some(p), Some(t)) => (Some(dsc(p, t)?), asd(p, t).ok()),
            _ => (None, None),
        };
        rows.push(EvalRow {
            case: case.to_string(),
            structure: id,
            variant: variant.to_string(),
            dsc: d,
            asd_mm: a,
            quality: quality.get(&id).copied(),
        });
    }
    Ok(rows)
}

pub fn write_eval_csv<W: io::Write>(rows: &[EvalRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["case", "structure", "variant", "dsc", "asd_mm", "quality"])
        .map_err(io::Error::from)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        wr.write_record([
            r.case.clone(),
            r.structure.name().to_string(),
            r.variant.clone(),
            opt(r.dsc),
            opt(r.asd_mm),
            opt(r.quality),
        ])
        .map_err(io::Error::from)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_eval_csv<R: io::Read>(r: R) -> Result<Vec<EvalRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::Format(format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != 6 {
            return Err(Error::Format(format!("expected 6 fields, got {}", rec.len())));
        }
        rows.push(EvalRow {
            case: rec[0].to_string(),
            structure: rec[1].parse()?,
            variant: rec[2].to_string(),
            dsc: opt(&rec[3])?,
            asd_mm: opt(&rec[4])?,
            quality: opt(&rec[5])?,
        });
    }
    Ok(rows)
}

pub fn write_eval_csv_file(rows: &[EvalRow], path: impl AsRef<Path>) -> Result<()> {
    write_eval_csv(rows, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub dsc_mean: f64,
    pub dsc_sd: f64,
    pub asd_mean: f64,
    pub asd_sd: f64,
}

/// Per-(variant, structure) mean ± sd of DSC and ASD.
pub fn summarize_rows(rows: &[EvalRow]) -> BTreeMap<String, BTreeMap<StructureId, MetricSummary>> {
    let mut groups: BTreeMap<(String, StructureId), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let g = groups.entry((r.variant.clone(), r.structure)).or_default();
        if let Some(d) = r.dsc {
            g.0.push(d);
        }
        if let Some(a) = r.asd_mm {
            g.1.push(a);
        }
    }
    let mut out: BTreeMap<String, BTreeMap<StructureId, MetricSummary>> = BTreeMap::new();
    for ((variant, id), (d, a)) in groups {
        let (dm, ds) = mean_sd(&d);
        let (am, asd_) = mean_sd(&a);
        out.entry(variant).or_default().insert(
            id,
            MetricSummary {
                n: d.len(),
                dsc_mean: dm,
                dsc_sd: ds,
                asd_mean: am,
                asd_sd: asd_,
            },
        );
    }
    out
}
