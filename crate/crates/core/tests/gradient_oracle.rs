//! Analytic gradients against central finite differences on a small network.

use pcc_core::chartnet::loss::{fp_terms, siamese_terms};
use pcc_core::chartnet::{build_model, gradient, ArchSpec, ModelParams};
use pcc_core::Vec2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-4;

fn random_input(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Perturbs biases away from zero so ReLU kinks are not hit exactly.
fn model(arch: &ArchSpec, seed: u64) -> ModelParams {
    let mut params = build_model(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for conv in params.layers.convs.clone() {
        for b in &mut params.theta[conv.bias_offset..conv.bias_offset + conv.output.channels] {
            *b = rng.random_range(-0.05..0.05);
        }
    }
    params
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Sign pattern of every rectified activation; the output layer is linear.
fn relu_pattern(params: &ModelParams, inputs: &[&[f64]]) -> Vec<bool> {
    inputs
        .iter()
        .flat_map(|x| {
            let trace = params.trace(x).unwrap();
            let acts = trace.activations();
            acts[..acts.len() - 1]
                .iter()
                .flat_map(|a| a.iter().map(|v| *v > 0.0))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Worst relative error over 200 coordinates whose stencil stays on one side
/// of every ReLU kink. Coordinates straddling a kink have no derivative to
/// compare against and are redrawn; they must stay rare.
fn check<L>(params: &ModelParams, inputs: &[Vec<f64>], loss: L, seed: u64) -> f64
where
    L: Fn(&[Vec2]) -> (f64, Vec<Vec2>) + Copy,
{
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let (_, grad) = gradient(params, &refs, loss).unwrap();
    let eval = |p: &ModelParams| {
        let outs: Vec<Vec2> = refs.iter().map(|x| p.forward(x).unwrap()).collect();
        loss(&outs).0
    };
    let base = relu_pattern(params, &refs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    while checked < 200 {
        let k = rng.random_range(0..params.len());
        let mut plus = params.clone();
        plus.theta[k] += H;
        let mut minus = params.clone();
        minus.theta[k] -= H;
        if relu_pattern(&plus, &refs) != base || relu_pattern(&minus, &refs) != base {
            skipped += 1;
            continue;
        }
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
        worst = worst.max(relative_error(grad[k], numeric));
        checked += 1;
    }
    assert!(skipped <= 20, "{skipped} stencils crossed a kink");
    worst
}

#[test]
fn siamese_gradient_matches_finite_differences() {
    let arch = ArchSpec::reduced(90, 6);
    assert!(arch.param_count() <= 10_000);
    let params = model(&arch, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inputs = vec![random_input(&mut rng, 540), random_input(&mut rng, 540)];
    let loss = |out: &[Vec2]| {
        let (l, ga, gb) = siamese_terms(out[0], out[1], 0.8, 0.25);
        (l, vec![ga, gb])
    };
    let worst = check(&params, &inputs, loss, 2);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn fp_gradient_matches_finite_differences() {
    let arch = ArchSpec::reduced(90, 6);
    let params = model(&arch, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = vec![random_input(&mut rng, 540)];
    let loss = |out: &[Vec2]| {
        let (l, g) = fp_terms(out[0], Vec2::new(3.0, -1.0));
        (l, vec![g])
    };
    let worst = check(&params, &inputs, loss, 4);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn perfect_fit_has_zero_gradient() {
    let arch = ArchSpec::reduced(90, 6);
    let params = model(&arch, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_input(&mut rng, 540);
    let target = params.forward(&x).unwrap();
    let (loss, grad) = gradient(&params, &[&x], |out| {
        let (l, g) = fp_terms(out[0], target);
        (l, vec![g])
    })
    .unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn gradient_is_linear_in_the_loss() {
    let arch = ArchSpec::reduced(90, 6);
    let params = model(&arch, 14);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_input(&mut rng, 540);
    let target = Vec2::new(1.0, 2.0);
    let (_, g1) = gradient(&params, &[&x], |out| {
        let (l, g) = fp_terms(out[0], target);
        (l, vec![g])
    })
    .unwrap();
    let (_, g2) = gradient(&params, &[&x], |out| {
        let (l, g) = fp_terms(out[0], target);
        (2.0 * l, vec![g * 2.0])
    })
    .unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

#[test]
fn non_finite_loss_is_an_error() {
    let arch = ArchSpec::reduced(90, 6);
    let params = model(&arch, 15);
    let x = vec![0.5; 540];
    let err = gradient(&params, &[&x], |_| (f64::NAN, vec![Vec2::zeros()])).unwrap_err();
    assert!(matches!(err, pcc_core::Error::Numerical(_)));
}
