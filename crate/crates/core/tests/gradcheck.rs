mod common;

use common::*;
use pcg_core::nn::Activation;

const TOL: f64 = 1e-4;

#[test]
fn conv_gradients() {
    for (seed, k) in [(1, 3), (2, 2), (3, 5), (4, 1)] {
        let e = check_conv(seed, 2, 6, 7, 3, k, Activation::Relu);
        assert!(e < TOL, "kernel {k}: {e}");
    }
    assert!(check_conv(5, 1, 5, 5, 2, 3, Activation::Identity) < TOL);
}

#[test]
fn maxpool_gradients() {
    assert!(check_pool(6, 2, 6, 6, 2) < TOL);
    assert!(check_pool(7, 1, 7, 8, 3) < TOL);
}

#[test]
fn dense_gradients() {
    assert!(check_dense(8, 12, 3, Activation::Relu) < TOL);
    assert!(check_dense(9, 12, 1, Activation::Sigmoid) < TOL);
}

#[test]
fn fused_sigmoid_bce() {
    assert!(check_bce(0.0, 1.0) < 1e-6);
    assert!(check_bce(1.3, 0.0) < 1e-6);
    assert!(check_bce(-2.1, 1.0) < 1e-6);
}

#[test]
fn miniature_model() {
    for seed in [11, 12, 13] {
        let e = check_model(seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}
