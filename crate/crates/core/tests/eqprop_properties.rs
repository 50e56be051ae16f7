mod common;
#[path = "common/oracle.rs"]
mod oracle;

use ising_ep::data::Dataset;
use ising_ep::eqprop::{
    conv_gradient, fc_gradients, train_epoch, BruteForce, EpModel, FcModel, TrainConfig,
};
use ising_ep::ising::{Range, SpinState};
use ising_ep::networks::{ConvArchitecture, ConvLayout, FcArchitecture, FcParameters};
use proptest::prelude::*;

fn spins(bits: u64, n: usize) -> SpinState {
    SpinState::new(
        (0..n)
            .map(|i| if bits >> i & 1 == 1 { 1 } else { -1 })
            .collect(),
    )
    .unwrap()
}

fn tiny_arch() -> FcArchitecture<f64> {
    FcArchitecture {
        n_inputs: 4,
        n_hidden: 3,
        n_classes: 2,
        spins_per_class: 2,
        input_scale: 0.5,
        chip_scale: 0.25,
        j_range: Range::symmetric(0.5),
        h_range: Range::symmetric(1.0),
    }
}

fn tiny_data(seed: u64) -> Dataset<f64> {
    let images: Vec<Vec<f64>> = (0..6u64)
        .map(|i| (0..4).map(|k| ((seed >> (i * 4 + k)) & 1) as f64).collect())
        .collect();
    Dataset::new(images, vec![0, 1, 0, 1, 1, 0], 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn swapping_phases_negates_fc_gradients(a in any::<u64>(), b in any::<u64>(), beta in 0.1f64..5.0) {
        let (hidden, outputs) = ((0..5).collect::<Vec<_>>(), (5..9).collect::<Vec<_>>());
        let (f, n) = (spins(a, 9), spins(b, 9));
        let g = fc_gradients::<f64>(&f, &n, beta, &hidden, &outputs).unwrap();
        let r = fc_gradients::<f64>(&n, &f, beta, &hidden, &outputs).unwrap();
        prop_assert_eq!(g.d_j.map(|v| -v), r.d_j);
        prop_assert_eq!(g.d_h_hidden.iter().map(|v| -v).collect::<Vec<_>>(), r.d_h_hidden);
        prop_assert_eq!(g.d_h_output.iter().map(|v| -v).collect::<Vec<_>>(), r.d_h_output);
        let same = fc_gradients::<f64>(&f, &f, beta, &hidden, &outputs).unwrap();
        prop_assert!(same.d_j.data.iter().chain(&same.d_h_hidden).chain(&same.d_h_output).all(|v| *v == 0.0));
    }

    #[test]
    fn swapping_phases_negates_conv_gradients(a in any::<u64>(), b in any::<u64>(), beta in 0.1f64..5.0) {
        let layout = ConvLayout::of(&ConvArchitecture::<f64>::default());
        let n = layout.n_neurons();
        let (f, nd) = (spins(a, n), spins(b, n));
        let g = conv_gradient::<f64>(&f, &nd, beta, &layout, -1.0);
        let r = conv_gradient::<f64>(&nd, &f, beta, &layout, -1.0);
        prop_assert_eq!(g.map(|v| -v), r);
        prop_assert!(conv_gradient::<f64>(&f, &f, beta, &layout, -1.0).data.iter().all(|v| *v == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn updates_stay_inside_chip_ranges(seed in any::<u64>(), data_bits in any::<u64>()) {
        let arch = tiny_arch();
        let mut model = FcModel { params: FcParameters::init(&arch, seed), arch };
        model.params.j_hidden_output = model.params.j_hidden_output.map(|v| v * 10.0);
        let data = tiny_data(data_bits);
        let mut cfg = TrainConfig::fc_default(seed);
        cfg.lr_w = 0.5;
        cfg.lr_b = 0.5;
        for epoch in 1..=3 {
            train_epoch(&mut model, &data, &BruteForce, &cfg, epoch).unwrap();
            for x in &data.images {
                let p = model.build(x).unwrap().problem;
                for (_, v) in p.couplings() {
                    prop_assert!(arch_range(&model).0.contains(v));
                }
                prop_assert!(p.biases().iter().all(|&h| arch_range(&model).1.contains(h)));
            }
            let a = &model.arch;
            prop_assert!(model.params.j_hidden_output.data.iter().all(|&j| a.j_range.contains(a.chip_scale * j)));
            prop_assert!(model.params.h_bias_output.iter().all(|&b| a.h_range.contains(a.chip_scale * b)));
            prop_assert!(model.params.h_bias_hidden.iter().all(|&b| a.h_range.contains(b)));
        }
    }

    #[test]
    fn skipping_satisfied_nudges_changes_nothing(seed in any::<u64>(), data_bits in any::<u64>()) {
        let arch = tiny_arch();
        let data = tiny_data(data_bits);
        let start = FcModel { params: FcParameters::init(&arch, seed), arch };
        let mut cfg = TrainConfig::fc_default(seed);
        cfg.lr_w = 0.2;
        cfg.lr_b = 0.2;
        let (mut skip, mut full) = (start.clone(), start);
        for epoch in 1..=4 {
            cfg.skip_nudge = true;
            train_epoch(&mut skip, &data, &BruteForce, &cfg, epoch).unwrap();
            cfg.skip_nudge = false;
            train_epoch(&mut full, &data, &BruteForce, &cfg, epoch).unwrap();
            prop_assert_eq!(&skip.params, &full.params);
        }
    }
}

fn arch_range(m: &FcModel<f64>) -> (Range<f64>, Range<f64>) {
    (m.arch.j_range, m.arch.h_range)
}

#[test]
fn ep_update_descends_the_enumerated_loss() {
    let (agree, nonzero) = oracle::run(11, 20, 2.0, 1e-2);
    assert!(nonzero > 50, "too few informative coordinates: {nonzero}");
    assert!(
        agree as f64 >= 0.9 * nonzero as f64,
        "sign agreement {agree}/{nonzero}"
    );
}
