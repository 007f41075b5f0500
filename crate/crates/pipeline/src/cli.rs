//! The `ctvseg` command line: argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data, 3 runtime failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ctvseg_core::metrics::{evaluate_case, write_eval_csv_file};
use ctvseg_core::mivol::read_mivol;
use ctvseg_core::{StructureId, StructureSet};

use crate::ablation::run_ablation;
use crate::config::Config;
use crate::data::{ctv_samples, load_case, organ_samples, DatasetSplits};
use crate::error::{PipelineError, Result};
use crate::infer::{infer, CaseResult, Networks};
use crate::overlay::emit_overlays;
use crate::trainer::{train_ctv, train_localizer, train_organ, CtvVariant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ctvseg",
    version,
    about = "Pelvic CTV segmentation: phantoms, training, inference, evaluation"
)]
pub struct Cli {
    /// Master seed; overrides every seed in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic phantom datasets.
    #[command(subcommand)]
    Phantom(PhantomCmd),
    /// Train one network of the pipeline.
    Train(TrainArgs),
    /// Run the three-stage pipeline on one CT.
    Infer(InferArgs),
    /// Score predicted structures against truth.
    Eval(EvalArgs),
    /// Train and compare the four CTV network variants over several seeds.
    Ablate(AblateArgs),
    /// Render CTV overlay PNGs for a stored inference result.
    Overlay(OverlayArgs),
}

#[derive(Debug, Subcommand)]
pub enum PhantomCmd {
    /// Generate train/val/test phantom cases (base seed from `--seed`).
    Gen {
        #[arg(long, default_value_t = 40)]
        n_train: usize,
        #[arg(long, default_value_t = 10)]
        n_val: usize,
        #[arg(long, default_value_t = 10)]
        n_test: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(subcommand)]
    pub target: TrainTarget,
    /// TOML config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `phantom gen`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Checkpoint directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TrainTarget {
    Localizer,
    Organ {
        /// bladder, rectum, femoral_head_l, femoral_head_r or penile_bulb.
        structure: String,
    },
    Ctv {
        #[arg(long, default_value = "AG-MTN")]
        variant: String,
    },
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// CT as a MIVOL file or a case directory holding `ct.mivol`.
    #[arg(long)]
    pub ct: PathBuf,
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// MCDO sample count for the CTV network (0 disables MCDO).
    #[arg(long)]
    pub mcdo: Option<usize>,
    /// Also sample the organ networks with MCDO.
    #[arg(long)]
    pub mcdo_oars: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Inference result directory or structure-set directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// Case directory (with `truth/`) or structure-set directory.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
    /// Case name written to the CSV; defaults to the truth directory name.
    #[arg(long)]
    pub case: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated training seeds (at least 3).
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// CT as a MIVOL file or a case directory holding `ct.mivol`.
    #[arg(long)]
    pub ct: PathBuf,
    /// Inference result directory.
    #[arg(long)]
    pub result: PathBuf,
    /// Case directory (with `truth/`) or structure-set directory.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per voxel edge.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

/// Parse `argv`; on failure returns the exit code after printing clap's
/// message (help and version exit 0, usage errors exit 1).
pub fn parse<I, T>(argv: I) -> std::result::Result<Cli, i32>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            EXIT_USAGE
        } else {
            EXIT_OK
        }
    })
}

pub fn exit_code(e: &PipelineError) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_RUNTIME
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let cfg = match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| PipelineError::Config(format!("--{flag} is required")))
}

/// A MIVOL file, or a directory containing `ct.mivol`.
fn read_ct(path: &Path) -> Result<ctvseg_core::Volume> {
    let file = if path.is_dir() {
        path.join("ct.mivol")
    } else {
        path.to_path_buf()
    };
    if !file.exists() {
        return Err(PipelineError::Data(format!("no CT at {}", path.display())));
    }
    Ok(read_mivol(file)?)
}

/// A structure-set directory, or a directory holding one under `sub`.
fn read_structures(path: &Path, sub: &str) -> Result<StructureSet> {
    let nested = path.join(sub);
    let dir = if nested.is_dir() { nested } else { path.to_path_buf() };
    if !dir.is_dir() {
        return Err(PipelineError::Data(format!("no structure set at {}", path.display())));
    }
    Ok(StructureSet::load(dir)?)
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| "case".into(), |n| n.to_string_lossy().into_owned())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Phantom(PhantomCmd::Gen {
            n_train,
            n_val,
            n_test,
            out,
        }) => {
            let data = DatasetSplits::generate(cli.seed.unwrap_or(0), *n_train, *n_val, *n_test)?;
            data.save(out)?;
            log::info!("wrote {} cases to {}", n_train + n_val + n_test, out.display());
        }
        Command::Train(a) => {
            let cfg = load_config(a.config.as_deref(), cli.seed)?;
            let data = DatasetSplits::load(required(&a.data, "data")?)?;
            let out = required(&a.out, "out")?;
            let report = match &a.target {
                TrainTarget::Localizer => {
                    train_localizer(
                        &data.train,
                        &data.val,
                        &cfg.localizer,
                        cfg.pipeline.localizer_downsample,
                        out,
                    )?
                    .1
                }
                TrainTarget::Organ { structure } => {
                    let s: StructureId = structure.parse()?;
                    if s == StructureId::Ctv {
                        return Err(PipelineError::Config("use `train ctv` for the CTV network".into()));
                    }
                    let size = cfg.pipeline.voi.get(s);
                    let train = organ_samples(&data.train, s, size, cfg.organ.voi_jitter)?;
                    let val = organ_samples(&data.val, s, size, [0; 3])?;
                    train_organ(s, &train, &val, &cfg.organ, out)?.1
                }
                TrainTarget::Ctv { variant } => {
                    let v: CtvVariant = variant.parse()?;
                    let size = cfg.pipeline.voi.ctv;
                    let train = ctv_samples(&data.train, size, cfg.ctv.voi_jitter, None)?;
                    let val = ctv_samples(&data.val, size, [0; 3], None)?;
                    train_ctv(v, &train, &val, &cfg.ctv, out)?.1
                }
            };
            log::info!(
                "trained {} best_epoch={} best_val_dsc={:.4}",
                report.name,
                report.best_epoch,
                report.best_val_dsc
            );
        }
        Command::Infer(a) => {
            let mut cfg = load_config(a.config.as_deref(), cli.seed)?;
            if let Some(t) = a.mcdo {
                cfg.pipeline.mcdo_t = t;
            }
            cfg.pipeline.mcdo_oars |= a.mcdo_oars;
            cfg.pipeline.validate()?;
            let ct = read_ct(&a.ct)?;
            let nets = Networks::load(&a.checkpoints)?;
            let result = infer(&ct, &nets, &cfg.pipeline)?;
            result.save(&a.out)?;
        }
        Command::Eval(a) => {
            let truth = read_structures(&a.truth, "truth")?;
            let (pred, quality, variant) = if a.pred.join("result.json").exists() {
                let r = CaseResult::load(&a.pred)?;
                (r.predicted, r.quality, r.variant)
            } else {
                (read_structures(&a.pred, "structures")?, BTreeMap::new(), String::new())
            };
            let case = a.case.clone().unwrap_or_else(|| dir_name(&a.truth));
            let rows = evaluate_case(&case, &variant, &pred, &truth, &quality)?;
            if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            write_eval_csv_file(&rows, &a.out)?;
        }
        Command::Ablate(a) => {
            let cfg = load_config(a.config.as_deref(), cli.seed)?;
            let data = DatasetSplits::load(&a.data)?;
            let report = run_ablation(&data, &cfg.ctv, cfg.pipeline.voi.ctv, &a.seeds, &a.out, &[])?;
            println!("{}", report.table());
        }
        Command::Overlay(a) => {
            let ct = read_ct(&a.ct)?;
            let result = CaseResult::load(&a.result)?;
            let truth = match &a.truth {
                Some(t) if t.join("ct.mivol").exists() => Some(load_case(&dir_name(t), t)?.truth),
                Some(t) => Some(read_structures(t, "truth")?),
                None => None,
            };
            let case = a.truth.as_deref().map_or_else(|| dir_name(&a.result), dir_name);
            let files = emit_overlays(&ct, &result, truth.as_ref(), &a.out, &case, a.scale)?;
            log::info!("wrote {} overlays", files.len());
        }
    }
    Ok(())
}

/// Parse and run; returns the process exit code. Errors are printed to
/// stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match parse(argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
