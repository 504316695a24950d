//! End-to-end gradients of the LW loss through an MLP against central finite
//! differences.

use lw_core::losses::{lw_loss, lw_loss_gradient, BinaryLoss, LwConfig, Surrogate};
use lw_core::model::{Network, Workspace};
use lw_core::rng;
use lw_core::PartialLabelSet;
use rand::Rng;

const STEP: f64 = 1e-5;

/// Largest relative error `|a − n| / max(|a| + |n|, 1e-8)` over all
/// parameters, or `None` if a ReLU or ramp kink lies within reach of the
/// finite-difference step.
fn check(net: &Network<f64>, x: &[f64], set: &PartialLabelSet, w: &[f64], cfg: &LwConfig<f64>) -> Option<f64> {
    let mut ws = Workspace::new();
    let g = net.forward_into(x, &mut ws).unwrap().to_vec();
    if ws.pre_activations().flatten().any(|v| v.abs() < 1e-3) {
        return None;
    }
    if cfg.surrogate == Surrogate::Binary(BinaryLoss::Ramp) && g.iter().any(|v| (v.abs() - 1.0).abs() < 1e-3) {
        return None;
    }
    let upstream = lw_loss_gradient(&g, set, w, cfg).unwrap();
    let analytic = net.backward(x, &upstream).unwrap().to_flat();
    let theta = net.to_flat();
    let mut probe = net.clone();
    let loss_at = |probe: &mut Network<f64>, params: &[f64]| {
        probe.set_flat(params).unwrap();
        lw_loss(&probe.forward(x).unwrap(), set, w, cfg).unwrap()
    };
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let mut p = theta.clone();
        p[j] = theta[j] + STEP;
        let up = loss_at(&mut probe, &p);
        p[j] = theta[j] - STEP;
        let down = loss_at(&mut probe, &p);
        let numeric = (up - down) / (2.0 * STEP);
        let rel = (analytic[j] - numeric).abs() / (analytic[j].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Some(worst)
}

fn random_case(rng: &mut impl Rng, k: usize) -> (Vec<f64>, PartialLabelSet, Vec<f64>) {
    let x = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = rng.gen_range(0..k);
    let mask = (rng.gen::<u64>() & ((1 << k) - 1)) | 1 << y;
    let set = PartialLabelSet::from_mask(mask, k).unwrap();
    let w = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    (x, set, w)
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let surrogates = [
        Surrogate::Binary(BinaryLoss::Sigmoid),
        Surrogate::Binary(BinaryLoss::Ramp),
        Surrogate::CrossEntropy,
    ];
    let mut rng = rng::stream(2024, 0);
    for (s, surrogate) in surrogates.into_iter().enumerate() {
        let mut checked = 0;
        let mut attempt = 0;
        while checked < 20 {
            attempt += 1;
            assert!(attempt < 1000, "too many kink rejections");
            let net = Network::<f64>::mlp(5, &[5], 3).unwrap().initialized(100 * s as u64 + attempt);
            let (x, set, w) = random_case(&mut rng, 3);
            let cfg = LwConfig::with_alpha(rng.gen_range(0.1..2.0), rng.gen_range(0.0..4.0), surrogate).unwrap();
            if let Some(rel) = check(&net, &x, &set, &w, &cfg) {
                assert!(rel < 1e-5, "{surrogate:?}: relative error {rel}");
                checked += 1;
            }
        }
    }
}

#[test]
fn deep_net_gradients_match_finite_differences() {
    let mut rng = rng::stream(7, 0);
    let net = Network::<f64>::mlp(5, &[6, 6, 6, 6], 4).unwrap().initialized(7);
    let mut checked = 0;
    while checked < 5 {
        let (x, set, w) = random_case(&mut rng, 4);
        let cfg = LwConfig::new(1.0, Surrogate::CrossEntropy).unwrap();
        if let Some(rel) = check(&net, &x, &set, &w, &cfg) {
            assert!(rel < 1e-5, "relative error {rel}");
            checked += 1;
        }
    }
}
