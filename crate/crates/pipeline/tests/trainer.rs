//! Trainer contracts on tiny networks: reproducibility, the localizer loss
//! switch and checkpoint reload fidelity.

use ctvseg_core::{CounterRng, StructureId};
use ctvseg_nn::{checkpoint, DropMode};
use ctvseg_pipeline::data::{ctv_samples, organ_input, organ_samples};
use ctvseg_pipeline::trainer::LossKind;
use ctvseg_pipeline::*;

fn tiny(cfg: TrainConfig, epochs: usize) -> TrainConfig {
    let mut c = cfg.with_epochs(epochs);
    c.base_width = 2;
    c.batch_size = 2;
    c.snapshot_epochs = vec![1];
    c
}

fn data() -> DatasetSplits {
    DatasetSplits::generate(11, 2, 1, 1).unwrap()
}

#[test]
fn organ_training_is_reproducible_and_reloads_exactly() {
    let d = data();
    let size = [16, 16, 16];
    let train = organ_samples(&d.train, StructureId::PenileBulb, size, [2, 2, 1]).unwrap();
    let val = organ_samples(&d.val, StructureId::PenileBulb, size, [0; 3]).unwrap();
    let cfg = tiny(TrainConfig::volumetric(), 2);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (model, ra) = train_organ(StructureId::PenileBulb, &train, &val, &cfg, a.path()).unwrap();
    let (_, rb) = train_organ(StructureId::PenileBulb, &train, &val, &cfg, b.path()).unwrap();
    assert_eq!(ra.epochs.len(), 2);
    for (x, y) in ra.epochs.iter().zip(&rb.epochs) {
        assert!((x.loss - y.loss).abs() <= 1e-6 && (x.val_dsc - y.val_dsc).abs() <= 1e-6);
    }
    assert_eq!(ra.snapshots.len(), 1);
    assert!(a.path().join("penile_bulb_report.json").exists());
    assert!(a.path().join("penile_bulb_epochs.csv").exists());

    let stem = ra.best_checkpoint.with_extension("");
    let (loaded, side) = checkpoint::load(&stem, Some(&model.config)).unwrap();
    assert_eq!(side.epoch, ra.best_epoch);
    let x = organ_input(&val[0].centered().unwrap().ct).unwrap();
    let rng = CounterRng::new(0);
    let p0 = model.predict(&x, DropMode::Off, &rng).unwrap();
    let p1 = loaded.predict(&x, DropMode::Off, &rng).unwrap();
    assert!(p0.main.max_abs_diff(&p1.main) <= 1e-6);
}

#[test]
fn localizer_switches_to_sqrt_dice_for_the_last_epochs() {
    let d = data();
    let mut cfg = tiny(TrainConfig::localizer(), 3);
    cfg.l2_finetune_epochs = 1;
    cfg.snapshot_epochs.clear();
    let dir = tempfile::tempdir().unwrap();
    let (_, r) = train_localizer(&d.train, &d.val, &cfg, 4, dir.path()).unwrap();
    let kinds: Vec<LossKind> = r.epochs.iter().map(|e| e.loss_fn).collect();
    assert_eq!(kinds, vec![LossKind::Dice, LossKind::Dice, LossKind::SqrtDice]);
    assert_eq!(r.loss_switch_epoch(), Some(cfg.epochs - cfg.l2_finetune_epochs + 1));
}

#[test]
fn anatomy_guided_training_needs_organ_masks_only_when_guided() {
    let d = data();
    let train = ctv_samples(&d.train, [16, 16, 16], [0; 3], None).unwrap();
    let val = ctv_samples(&d.val, [16, 16, 16], [0; 3], None).unwrap();
    let cfg = tiny(TrainConfig::volumetric(), 1);
    let dir = tempfile::tempdir().unwrap();
    let (m, r) = train_ctv(CtvVariant::AgMtn, &train, &val, &cfg, dir.path()).unwrap();
    assert_eq!(CtvVariant::of_config(&m.config), Some(CtvVariant::AgMtn));
    assert!(r.final_record().loss.is_finite());
}
