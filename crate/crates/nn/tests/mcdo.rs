use ctvseg_core::uncertainty::{contour_quality, summarize};
use ctvseg_core::{CounterRng, Spacing};
use ctvseg_nn::mcdo::{mcdo_sample, sample_one, DEFAULT_T};
use ctvseg_nn::{Model, NetConfig, Tensor};

fn input() -> Tensor {
    let mut rng = CounterRng::new(11);
    let n = 3 * 8 * 16 * 16;
    Tensor::from_vec([3, 8, 16, 16], (0..n).map(|_| rng.next_f64() as f32).collect()).unwrap()
}

#[test]
fn requires_stochastic_layers() {
    let m = Model::new(NetConfig::agmtn(true, true).with_base_width(8).without_dropblock(), 0).unwrap();
    assert!(mcdo_sample(&m, &input(), 4, 0, Spacing::default()).is_err());
    let m = Model::new(NetConfig::agmtn(true, true).with_base_width(8), 0).unwrap();
    assert!(mcdo_sample(&m, &input(), 0, 0, Spacing::default()).is_err());
}

#[test]
fn keep_prob_one_gives_identical_samples() {
    let m = Model::new(NetConfig::agmtn(true, true).with_base_width(8).with_keep_prob(1.0), 0).unwrap();
    let stack = mcdo_sample(&m, &input(), DEFAULT_T, 9, Spacing::default()).unwrap();
    assert_eq!(stack.samples.len(), 50);
    assert!(stack.samples.iter().all(|s| s.data == stack.samples[0].data));
    let s = summarize(&stack).unwrap();
    assert!(s.variance.data.iter().all(|&v| v == 0.0));
    assert!(s.band_mask.is_empty_mask());
    if let Some(q) = contour_quality(&stack).unwrap() {
        assert_eq!(q, 1.0);
    }
}

#[test]
fn samples_are_order_insensitive() {
    let m = Model::new(NetConfig::agmtn(true, false).with_base_width(8), 3).unwrap();
    let x = input();
    let stack = mcdo_sample(&m, &x, 6, 42, Spacing::default()).unwrap();
    for t in [5u64, 2, 0, 4, 1, 3] {
        let v = sample_one(&m, &x, 42, t, 0, Spacing::default()).unwrap();
        assert_eq!(v.data, stack.samples[t as usize].data);
    }
    assert!(stack.samples[0].data != stack.samples[1].data);
    assert_eq!(stack.config_hash, m.config.hash());
}
