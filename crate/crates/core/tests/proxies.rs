mod common;

use common::graph;
use protonas_core::archspace::{
    apply_static_pruning, decode, sample, Dims, FeatureShape, LayerKind, LayerSpec, Node,
    TemplateLibrary, TIME_SERIES_POOL,
};
use protonas_core::proxies::{
    evaluate_ensemble, meco, meco_tap_score, naswot_from_codes, random_batch, snip, ProxyConfig,
    ZicoAccumulator,
};
use protonas_core::rng::seeded;
use protonas_core::tensorcore::{
    init_params, GradientRecord, LayerGrads, LayerParams, ParamSet, Tensor,
};
use protonas_core::{SearchSpaceDef, TaskShape};

fn codes(bits: &[&str]) -> Vec<Vec<bool>> {
    bits.iter()
        .map(|s| s.chars().map(|c| c == '1').collect())
        .collect()
}

#[test]
fn naswot_orthogonal_codes() {
    let s = naswot_from_codes(&codes(&["1100", "0011"]), 1e-6);
    assert!((s - 2.772588722239781).abs() < 1e-6, "{s}");
}

#[test]
fn naswot_identical_codes_are_finite_and_epsilon_dominated() {
    let eps = 1e-6;
    let s = naswot_from_codes(&codes(&["1010", "1010", "1010"]), eps);
    let want = (4.0f64 * 3.0 + eps).ln() + 2.0 * eps.ln();
    assert!(s.is_finite());
    assert!((s - want).abs() < 1e-6, "{s} vs {want}");
    // No ReLUs at all.
    assert!(naswot_from_codes(&[vec![], vec![]], eps).is_finite());
}

#[test]
fn naswot_is_permutation_invariant() {
    let a = codes(&["110010", "011011", "000111", "101010"]);
    let mut b = a.clone();
    b.swap(0, 3);
    b.swap(1, 2);
    assert!((naswot_from_codes(&a, 1e-6) - naswot_from_codes(&b, 1e-6)).abs() < 1e-9);
}

fn one_layer_record(values: &[f64]) -> GradientRecord {
    GradientRecord {
        layers: vec![Some(LayerGrads {
            weight: Tensor::from_vec(&[values.len()], values.to_vec()).unwrap(),
            bias: None,
        })],
        loss: 0.0,
    }
}

fn one_layer_params(n: usize) -> ParamSet {
    ParamSet {
        layers: vec![Some(LayerParams {
            weight: Tensor::zeros(&[n]),
            bias: None,
        })],
    }
}

#[test]
fn zico_constant_gradient_hits_the_epsilon() {
    let mut acc = ZicoAccumulator::new(&one_layer_params(1));
    acc.push(&one_layer_record(&[1.0]));
    acc.push(&one_layer_record(&[1.0]));
    assert!((acc.score(1e-6) - 13.815510557964274).abs() < 1e-6);
}

#[test]
fn zico_zero_gradients_are_floored() {
    let mut acc = ZicoAccumulator::new(&one_layer_params(3));
    for _ in 0..4 {
        acc.push(&one_layer_record(&[0.0; 3]));
    }
    assert_eq!(acc.score(1e-6), 1e-6f64.ln());
}

#[test]
fn zico_is_scale_invariant() {
    let rows = [
        [0.3, -1.2, 2.0],
        [0.1, 0.4, -0.5],
        [-0.7, 0.9, 1.5],
        [0.2, 0.2, 0.1],
    ];
    let mut one = ZicoAccumulator::new(&one_layer_params(3));
    let mut two = ZicoAccumulator::new(&one_layer_params(3));
    for r in rows {
        one.push(&one_layer_record(&r));
        two.push(&one_layer_record(&r.map(|v| 2.0 * v)));
    }
    assert!((one.score(1e-6) - two.score(1e-6)).abs() < 1e-5);
}

#[test]
fn meco_correlation_half() {
    let a = [1.0, -1.0, 1.0, -1.0];
    let c = [1.0, 1.0, -1.0, -1.0];
    let b: Vec<f64> = a
        .iter()
        .zip(c)
        .map(|(x, y)| 0.5 * x + 0.75f64.sqrt() * y)
        .collect();
    let x: Vec<f64> = a.iter().copied().chain(b).collect();
    assert!((meco_tap_score(&x, 2, 4, 1e-6) - 0.5).abs() < 1e-12);
}

#[test]
fn meco_identical_channels_contribute_zero() {
    let x = [0.5, 2.0, -1.0, 0.5, 2.0, -1.0, 0.5, 2.0, -1.0];
    assert!(meco_tap_score(&x, 3, 3, 1e-6).abs() < 1e-12);
}

/// Two tapped 1×1 identity convs over a 2-channel input whose channels are
/// orthogonal: every tap has identity correlation.
#[test]
fn meco_identity_correlation_counts_taps() {
    let tapped = |inputs| {
        let mut n = Node::new(LayerSpec::conv(2, 2, 1, 1), inputs);
        n.tap = true;
        n
    };
    let nodes = vec![
        tapped(vec![]),
        tapped(vec![0]),
        Node::new(LayerSpec::elementwise(LayerKind::GlobalAvgPool, 2), vec![1]),
        Node::new(LayerSpec::linear(2, 2), vec![2]),
    ];
    let g = graph(
        Dims::Two,
        FeatureShape {
            channels: 2,
            height: 2,
            width: 2,
        },
        2,
        nodes,
    );
    let mut p = ParamSet::zeros(&g);
    for id in [0, 1] {
        let w = p.layers[id].as_mut().unwrap().weight.data_mut();
        w[0] = 1.0;
        w[3] = 1.0;
    }
    let x = Tensor::from_vec(
        &[1, 2, 2, 2],
        vec![1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
    )
    .unwrap();
    let s = meco(&g, &p, &x, 1e-6).unwrap();
    assert!((s - 2.0).abs() < 1e-9, "{s}");
}

fn logistic_graph() -> protonas_core::ArchitectureGraph {
    graph(
        Dims::Two,
        FeatureShape {
            channels: 1,
            height: 1,
            width: 1,
        },
        2,
        vec![
            Node::new(LayerSpec::elementwise(LayerKind::GlobalAvgPool, 1), vec![]),
            Node::new(LayerSpec::linear(1, 2).with_bias(false), vec![0]),
        ],
    )
}

#[test]
fn snip_of_a_logistic_unit() {
    // softmax over logits (w·x, 0) is a logistic unit; for label 0,
    // dL/dw = -(1 - σ(w·x))·x.
    let g = logistic_graph();
    let mut p = ParamSet::zeros(&g);
    p.layers[1].as_mut().unwrap().weight.data_mut()[0] = 0.7;
    let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap();
    let s = snip(&g, &p, &x, &[0]).unwrap();
    assert!((s - 0.2769425560179856).abs() < 1e-12, "{s}");
}

#[test]
fn snip_zero_weights_and_batch_order() {
    let mut rng = seeded(5);
    for _ in 0..5 {
        let g = common::random_small_graph(&mut rng);
        let (x, y) = common::random_batch(&g, 4, &mut rng);
        assert_eq!(snip(&g, &ParamSet::zeros(&g), &x, &y).unwrap(), 0.0);

        let p = init_params(&g, &mut rng);
        let order = [2, 0, 3, 1];
        let per: Vec<f64> = x
            .data()
            .chunks(x.numel() / 4)
            .flat_map(|c| c.to_vec())
            .collect();
        let chunk = per.len() / 4;
        let shuffled: Vec<f64> = order
            .iter()
            .flat_map(|&i| per[i * chunk..(i + 1) * chunk].to_vec())
            .collect();
        let xs = Tensor::from_vec(x.shape(), shuffled).unwrap();
        let ys: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let a = snip(&g, &p, &x, &y).unwrap();
        let b = snip(&g, &p, &xs, &ys).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn ensemble_is_deterministic_and_finite_on_decoded_candidates() {
    let space =
        SearchSpaceDef::standard(TemplateLibrary::builtin().pool(&TIME_SERIES_POOL).unwrap());
    let task = TaskShape::time_series(3, 32, 4);
    let cfg = ProxyConfig::default();
    let mut rng = seeded(11);
    for i in 0..10 {
        let x = sample(&mut rng, &space);
        let g = apply_static_pruning(&decode(&x, &space, &task).unwrap(), &x.pruning_sparsity);
        let run = || {
            let mut r = seeded(100 + i);
            let p = init_params(&g, &mut r);
            evaluate_ensemble(&g, &p, &cfg, &mut r).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.is_finite(), "{a:?}");
        let g2 = g.clone();
        let mut r = seeded(100 + i);
        let p = init_params(&g2, &mut r);
        assert_eq!(evaluate_ensemble(&g2, &p, &cfg, &mut r).unwrap(), a);
    }
}

#[test]
fn ensemble_rejects_bad_config() {
    let g = logistic_graph();
    let p = ParamSet::zeros(&g);
    let cfg = ProxyConfig {
        batch_size: 1,
        ..ProxyConfig::default()
    };
    assert!(evaluate_ensemble(&g, &p, &cfg, &mut seeded(0)).is_err());
    let (x, _) = random_batch(&g, 3, &mut seeded(0));
    assert_eq!(x.shape(), &[3, 1, 1, 1]);
}
