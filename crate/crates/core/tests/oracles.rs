mod common;

use common::*;
use rand::Rng;
use scalingnet::numerics::{conv2d_same, correlate1d_same};
use scalingnet::{Activation, ScalingLayerParams, Tensor};

const TOL: f64 = 1e-12;

#[test]
fn correlate_matches_padded_loops() {
    let mut r = rng(11);
    for _ in 0..100 {
        let t = r.random_range(1..40);
        let k = 2 * r.random_range(0..8) + 1;
        let s = uniform(&mut r, t);
        let w = uniform(&mut r, k);
        let got = correlate1d_same(&Tensor::vector(s.clone()).unwrap(), &Tensor::vector(w.clone()).unwrap()).unwrap();
        assert!(max_abs_diff(got.data(), &naive_correlate(&s, &w)) <= TOL, "T={t} k={k}");
    }
}

#[test]
fn scaling_forward_matches_naive() {
    let mut r = rng(12);
    for case in 0..100 {
        let t = r.random_range(1..64);
        let k0 = 2 * r.random_range(0..20) + 1;
        let relu = case % 2 == 0;
        let w = uniform(&mut r, k0);
        let levels = naive_pyramid(&w).len();
        let b = uniform(&mut r, levels);
        let s = uniform(&mut r, t);
        let act = if relu { Activation::Relu } else { Activation::Identity };
        let layer = ScalingLayerParams::new(Tensor::vector(w.clone()).unwrap(), Tensor::vector(b.clone()).unwrap(), act).unwrap();
        let map = layer.forward(&Tensor::vector(s.clone()).unwrap()).unwrap();
        let want = naive_scaling_forward(&w, &b, relu, &s);
        assert_eq!(map.levels(), want.len());
        for (l, row) in want.iter().enumerate() {
            assert!(max_abs_diff(map.row(l), row) <= TOL, "case {case} level {l}");
        }
    }
}

#[test]
fn conv2d_matches_naive() {
    let mut r = rng(13);
    for case in 0..100 {
        let cin = r.random_range(1..4);
        let cout = r.random_range(1..4);
        let h = r.random_range(1..8);
        let w = r.random_range(1..24);
        let kh = 2 * r.random_range(0..3) + 1;
        let kw = 2 * r.random_range(0..4) + 1;
        let x = uniform(&mut r, cin * h * w);
        let k = uniform(&mut r, cout * cin * kh * kw);
        let b = uniform(&mut r, cout);
        let got = conv2d_same(
            &Tensor::new(vec![cin, h, w], x.clone()).unwrap(),
            &Tensor::new(vec![cout, cin, kh, kw], k.clone()).unwrap(),
            &Tensor::vector(b.clone()).unwrap(),
        )
        .unwrap();
        let nested_in: Vec<Vec<Vec<f64>>> = x.chunks(h * w).map(|p| p.chunks(w).map(<[f64]>::to_vec).collect()).collect();
        let nested_k: Vec<Vec<Vec<Vec<f64>>>> = k
            .chunks(cin * kh * kw)
            .map(|o| o.chunks(kh * kw).map(|i| i.chunks(kw).map(<[f64]>::to_vec).collect()).collect())
            .collect();
        let want: Vec<f64> = naive_conv2d(&nested_in, &nested_k, &b).into_iter().flatten().flatten().collect();
        assert!(max_abs_diff(got.data(), &want) <= TOL, "case {case} ({cin},{cout},{h},{w},{kh},{kw})");
    }
}

#[test]
fn conv2d_matches_naive_at_model_geometry() {
    let mut r = rng(14);
    let (cin, cout, h, w) = (4, 16, 6, 200);
    let x = uniform(&mut r, cin * h * w);
    let k = uniform(&mut r, cout * cin * 15);
    let b = uniform(&mut r, cout);
    let got = conv2d_same(
        &Tensor::new(vec![cin, h, w], x.clone()).unwrap(),
        &Tensor::new(vec![cout, cin, 3, 5], k.clone()).unwrap(),
        &Tensor::vector(b.clone()).unwrap(),
    )
    .unwrap();
    let nested_in: Vec<Vec<Vec<f64>>> = x.chunks(h * w).map(|p| p.chunks(w).map(<[f64]>::to_vec).collect()).collect();
    let nested_k: Vec<Vec<Vec<Vec<f64>>>> = k
        .chunks(cin * 15)
        .map(|o| o.chunks(15).map(|i| i.chunks(5).map(<[f64]>::to_vec).collect()).collect())
        .collect();
    let want: Vec<f64> = naive_conv2d(&nested_in, &nested_k, &b).into_iter().flatten().flatten().collect();
    assert!(max_abs_diff(got.data(), &want) <= TOL);
}

#[test]
fn oracle_pyramid_lengths() {
    let lens: Vec<usize> = naive_pyramid(&[0.0; 33]).iter().map(Vec::len).collect();
    assert_eq!(lens, [33, 17, 9, 5, 3, 1]);
    assert_eq!(naive_pyramid(&[2.0, 4.0, 6.0])[1], [3.0]);
    assert_eq!(naive_pyramid(&[0.0, 1.0, 0.0])[1], [0.5]);
}
