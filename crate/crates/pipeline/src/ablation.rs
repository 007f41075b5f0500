//! Ablation over the four CTV network variants.
//!
//! Each variant is trained once per seed on the same truth-centered VOIs
//! with truth organ masks and evaluated on the held-out cases the same way,
//! so differences come from the network alone.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ctvseg_core::metrics::{dsc, mean_sd, paired_t_test};
use ctvseg_nn::Model;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::data::{ctv_samples, DatasetSplits, VoiSample};
use crate::error::{PipelineError, Result};
use crate::trainer::{predict_ctv_voi, train_ctv, CtvVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    pub variant: CtvVariant,
    pub case: String,
    pub dsc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: CtvVariant,
    pub mean_dsc: f64,
    pub sd_dsc: f64,
    /// Mean over seeds of each seed's mean DSC; one entry per seed.
    pub seed_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: CtvVariant,
    pub b: CtvVariant,
    pub mean_diff: f64,
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
    pub summaries: Vec<VariantSummary>,
    pub comparisons: Vec<PairedComparison>,
}

impl AblationReport {
    pub fn mean(&self, v: CtvVariant) -> Option<f64> {
        self.summaries.iter().find(|s| s.variant == v).map(|s| s.mean_dsc)
    }

    /// DSC values of `v`, ordered by (seed, case), for pairing.
    pub fn paired_values(&self, v: CtvVariant) -> Vec<f64> {
        let mut r: Vec<&AblationRow> = self.rows.iter().filter(|r| r.variant == v).collect();
        r.sort_by(|x, y| (x.seed, &x.case).cmp(&(y.seed, &y.case)));
        r.iter().map(|r| r.dsc).collect()
    }

    pub fn comparison(&self, a: CtvVariant, b: CtvVariant) -> Option<&PairedComparison> {
        self.comparisons.iter().find(|c| c.a == a && c.b == b)
    }

    /// Markdown table of per-variant DSC and the paired tests.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let base = self.mean(CtvVariant::Unet);
        let _ = writeln!(s, "| variant | mean DSC | sd | vs UNet |");
        let _ = writeln!(s, "|---|---|---|---|");
        for v in &self.summaries {
            let delta = base.map_or(String::from("-"), |b| format!("{:+.4}", v.mean_dsc - b));
            let _ = writeln!(s, "| {} | {:.4} | {:.4} | {} |", v.variant, v.mean_dsc, v.sd_dsc, delta);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "| pair | mean diff | t | p (two-sided) | df |");
        let _ = writeln!(s, "|---|---|---|---|---|");
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "| {} vs {} | {:+.4} | {:.3} | {:.4} | {} |",
                c.a, c.b, c.mean_diff, c.t, c.p, c.df
            );
        }
        s
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("ablation.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(out_dir.join("ablation.md"), self.table())?;
        let mut w = csv::Writer::from_path(out_dir.join("ablation.csv"))?;
        w.write_record(["seed", "variant", "case", "dsc"])?;
        for r in &self.rows {
            w.write_record([
                r.seed.to_string(),
                r.variant.to_string(),
                r.case.clone(),
                r.dsc.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-case DSC of a trained CTV network on prepared VOIs.
pub fn evaluate_ctv(model: &Model, variant: CtvVariant, samples: &[VoiSample]) -> Result<Vec<(String, f64)>> {
    samples
        .iter()
        .map(|s| {
            let c = s.centered()?;
            let pred = predict_ctv_voi(model, variant, &c)?.threshold(0.5);
            Ok((s.case.clone(), dsc(&pred, &c.masks[0])?))
        })
        .collect()
}

/// Assemble summaries and all pairwise tests from raw rows.
pub fn summarize_ablation(seeds: Vec<u64>, rows: Vec<AblationRow>) -> Result<AblationReport> {
    let mut report = AblationReport {
        seeds,
        rows,
        summaries: Vec::new(),
        comparisons: Vec::new(),
    };
    let present: Vec<CtvVariant> = CtvVariant::ALL
        .into_iter()
        .filter(|v| report.rows.iter().any(|r| r.variant == *v))
        .collect();
    for &v in &present {
        let vals = report.paired_values(v);
        let (m, sd) = mean_sd(&vals);
        let seed_means = report
            .seeds
            .iter()
            .map(|&s| {
                let x: Vec<f64> = report
                    .rows
                    .iter()
                    .filter(|r| r.variant == v && r.seed == s)
                    .map(|r| r.dsc)
                    .collect();
                mean_sd(&x).0
            })
            .collect();
        report.summaries.push(VariantSummary {
            variant: v,
            mean_dsc: m,
            sd_dsc: sd,
            seed_means,
        });
    }
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            let (xa, xb) = (report.paired_values(a), report.paired_values(b));
            if xa.len() != xb.len() {
                return Err(PipelineError::Data(format!(
                    "{a} and {b} were evaluated on different cases"
                )));
            }
            let t = paired_t_test(&xa, &xb)?;
            let mean_diff = xa.iter().zip(&xb).map(|(x, y)| x - y).sum::<f64>() / xa.len() as f64;
            report.comparisons.push(PairedComparison {
                a,
                b,
                mean_diff,
                t: t.t,
                p: t.p,
                df: t.df,
            });
        }
    }
    Ok(report)
}

/// Train every variant for every seed and compare them on the test split.
/// `pretrained` supplies already-trained `(seed, variant)` networks that
/// were produced with exactly this configuration and seed.
pub fn run_ablation(
    data: &DatasetSplits,
    cfg: &TrainConfig,
    voi: [usize; 3],
    seeds: &[u64],
    out_dir: &Path,
    pretrained: &[(u64, CtvVariant, &Model)],
) -> Result<AblationReport> {
    if seeds.len() < 3 {
        return Err(PipelineError::Config("the ablation needs at least 3 seeds".into()));
    }
    let train = ctv_samples(&data.train, voi, cfg.voi_jitter, None)?;
    let val = ctv_samples(&data.val, voi, [0; 3], None)?;
    let test = ctv_samples(&data.test, voi, [0; 3], None)?;
    let mut rows = Vec::new();
    for &seed in seeds {
        let scfg = TrainConfig { seed, ..cfg.clone() };
        for v in CtvVariant::ALL {
            let trained;
            let model = match pretrained.iter().find(|p| p.0 == seed && p.1 == v) {
                Some(p) => p.2,
                None => {
                    let dir = out_dir.join(format!("seed{seed}")).join(v.name());
                    trained = train_ctv(v, &train, &val, &scfg, &dir)?.0;
                    &trained
                }
            };
            for (case, d) in evaluate_ctv(model, v, &test)? {
                log::info!("ablation seed={seed} variant={v} case={case} dsc={d:.4}");
                rows.push(AblationRow {
                    seed,
                    variant: v,
                    case,
                    dsc: d,
                });
            }
        }
    }
    let report = summarize_ablation(seeds.to_vec(), rows)?;
    report.write(out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[(CtvVariant, [f64; 3])]) -> Vec<AblationRow> {
        let mut out = Vec::new();
        for (v, d) in values {
            for (i, &x) in d.iter().enumerate() {
                out.push(AblationRow {
                    seed: i as u64 % 3,
                    variant: *v,
                    case: format!("c{i}"),
                    dsc: x,
                });
            }
        }
        out
    }

    #[test]
    fn self_comparison_has_unit_p() {
        let vals = [0.7, 0.8, 0.75];
        let r = summarize_ablation(
            vec![0, 1, 2],
            rows(&[(CtvVariant::AgMtn, vals), (CtvVariant::Unet, vals)]),
        )
        .unwrap();
        let c = r.comparison(CtvVariant::AgMtn, CtvVariant::Unet).unwrap();
        assert_eq!(c.p, 1.0);
        assert_eq!(c.mean_diff, 0.0);
    }

    #[test]
    fn summary_and_table() {
        let r = summarize_ablation(
            vec![0, 1, 2],
            rows(&[
                (CtvVariant::AgMtn, [0.9, 0.8, 0.85]),
                (CtvVariant::Unet, [0.7, 0.75, 0.7]),
            ]),
        )
        .unwrap();
        assert!((r.mean(CtvVariant::AgMtn).unwrap() - 0.85).abs() < 1e-12);
        let c = r.comparison(CtvVariant::AgMtn, CtvVariant::Unet).unwrap();
        assert!((c.mean_diff - 0.4 / 3.0).abs() < 1e-12);
        assert!(c.p < 0.1);
        let t = r.table();
        assert!(t.contains("| AG-MTN | 0.8500"));
        assert!(t.contains("AG-MTN vs UNet"));
    }
}
