use swellcast_core::nn::{adam_update, Adam, AdamConfig, LayerSpec, Mode, Network, Tensor};

#[test]
fn adam_minimises_a_parabola() {
    let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
    let mut x = vec![3.0f64];
    let (mut m, mut v) = (vec![0.0], vec![0.0]);
    for step in 1..=200 {
        let g = [2.0 * x[0]];
        adam_update(&mut x, &g, &mut m, &mut v, step, &cfg);
    }
    assert!(x[0].abs() < 0.05, "x = {}", x[0]);
}

#[test]
fn step_size_is_bounded_by_lr() {
    // bias-corrected first steps move at most ~lr regardless of scale
    let cfg = AdamConfig::default();
    for scale in [1e-6, 1.0, 1e6] {
        let mut x = vec![0.0f64];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        for step in 1..=10 {
            let before = x[0];
            adam_update(&mut x, &[scale], &mut m, &mut v, step, &cfg);
            assert!((x[0] - before).abs() <= cfg.lr * 1.0001);
        }
    }
}

#[test]
fn network_state_tracks_every_parameter() {
    let mut net = Network::<f32>::build(&[3], 0, &[LayerSpec::Dense { units: 2 }], 1).unwrap();
    let mut adam = Adam::<f32>::new(AdamConfig::default(), &net);
    assert_eq!(adam.m.iter().map(Vec::len).sum::<usize>(), net.n_params());
    let x = Tensor::from_vec(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let before = net.flat_params();
    let y = net.forward(&x, None, Mode::Train, 0).unwrap();
    net.backward(&Tensor::from_vec(y.shape().to_vec(), vec![1.0, -1.0]).unwrap()).unwrap();
    adam.step(&mut net);
    assert_eq!(adam.step, 1);
    let after = net.flat_params();
    assert!(before.iter().zip(&after).all(|(a, b)| a != b));
}
