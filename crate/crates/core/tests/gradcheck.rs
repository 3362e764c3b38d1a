use triage_core::config::{ModelConfig, Variant};
use triage_core::params::init_params;
use triage_core::text::tokenize;
use triage_core::train::{example_grad, example_loss, Example};
use triage_core::Parameters;

const H: f64 = 1e-5;
const SCALE: f64 = 3.0;

fn total(params: &Parameters, config: &ModelConfig, ex: &Example) -> f64 {
    example_loss(params, config, ex).unwrap().total
}

/// Central finite differences over every entry of every tensor.
///
/// Returns, per tensor, the norm-wise relative error
/// `|a - n| / max(|a|, |n|)`. Entry-wise agreement is also asserted with an
/// absolute floor of 1e-8, above the round-off level of a 1e-5 central
/// difference at these loss magnitudes. Weights are scaled up so every tensor
/// carries a gradient well above that floor.
fn check(config: &ModelConfig, ex: &Example) -> Vec<(String, f64)> {
    let mut params = init_params(config, 32).unwrap();
    for (_, t) in params.tensors_mut() {
        for v in t.as_mut_slice() {
            *v *= SCALE;
        }
    }
    let (_, analytic) = example_grad(&params, config, ex).unwrap();
    let analytic: Vec<(String, Vec<f64>)> =
        analytic.tensors().into_iter().map(|(n, t)| (n, t.as_slice().to_vec())).collect();
    let mut probe = params.clone();
    let mut out = Vec::new();
    for (ti, (name, grads)) in analytic.iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for (j, &a) in grads.iter().enumerate() {
            let orig = params.tensors()[ti].1.as_slice()[j];
            probe.tensors_mut()[ti].1.as_mut_slice()[j] = orig + H;
            let up = total(&probe, config, ex);
            probe.tensors_mut()[ti].1.as_mut_slice()[j] = orig - H;
            let down = total(&probe, config, ex);
            probe.tensors_mut()[ti].1.as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * H);
            assert!(
                (a - numeric).abs() <= 1e-4 * a.abs().max(numeric.abs()) + 1e-8,
                "{name}[{j}]: analytic {a:e} numeric {numeric:e}"
            );
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
        }
        let scale = f64::max(na, nn).sqrt();
        out.push((name.clone(), if scale == 0.0 { 0.0 } else { diff.sqrt() / scale }));
    }
    out
}

fn example() -> Example {
    let context = tokenize("ka mo ri su te lo");
    let question = tokenize("what is mo ri");
    assert_eq!((context.len(), question.len()), (6, 4));
    Example { id: "fd".into(), question, context, start: 2, end: 3 }
}

#[test]
fn gradients_match_finite_differences() {
    for variant in [Variant::Independent, Variant::Conditional] {
        for weight_sharing in [false, true] {
            let config = ModelConfig {
                d: 8,
                layers: 4,
                triage_layer: 2,
                variant,
                weight_sharing,
                seed: 17,
                ..ModelConfig::default()
            };
            for (name, err) in check(&config, &example()) {
                assert!(err < 1e-4, "{variant} ws={weight_sharing} {name}: rel err {err:e}");
            }
        }
    }
}

#[test]
fn triage_at_first_layer() {
    let config = ModelConfig { d: 8, layers: 3, triage_layer: 1, seed: 3, ..ModelConfig::default() };
    for (name, err) in check(&config, &example()) {
        assert!(err < 1e-4, "{name}: rel err {err:e}");
    }
}

#[test]
fn descent_step_lowers_the_loss() {
    let config = ModelConfig { d: 8, layers: 4, triage_layer: 2, seed: 1, ..ModelConfig::default() };
    let params = init_params(&config, 32).unwrap();
    let ex = example();
    let (before, g) = example_grad(&params, &config, &ex).unwrap();
    let mut stepped = params.clone();
    stepped.add_scaled(&g, -1e-3).unwrap();
    assert!(total(&stepped, &config, &ex) < before.total);
}
