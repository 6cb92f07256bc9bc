use ndarray::Array2;
use rand::Rng;
use rrn::network::{gradient_check, init_params, relative_error, LayerSpec};
use rrn::seeded_rng;

fn uniform_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = seeded_rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

#[test]
fn backprop_matches_central_differences_on_a_tapered_desk_network() {
    let spec = LayerSpec::new(vec![1024, 256, 64, 32, 64, 256, 1024]).unwrap();
    let params = init_params(&spec, 11);
    let x = uniform_batch(4, 1024, 12);
    let report = gradient_check(&params, x.view(), 200, 1e-2, true, 13).unwrap();
    assert_eq!(report.len(), 6);
    for l in &report {
        assert_eq!(l.samples, 200);
        assert!(l.max_rel_error < 1e-4, "layer {}: {:e}", l.layer, l.max_rel_error);
    }
}

#[test]
fn every_parameter_of_a_small_network_agrees() {
    let spec = LayerSpec::new(vec![64, 48, 32, 48, 64]).unwrap();
    let params = init_params(&spec, 5);
    let x = uniform_batch(3, 64, 6);
    let report = gradient_check(&params, x.view(), usize::MAX, 1e-2, true, 7).unwrap();
    for l in &report {
        assert_eq!(l.samples, params.layers[l.layer].weights.len() + params.layers[l.layer].bias.len());
        assert!(l.max_rel_error < 1e-6, "layer {}: {:e}", l.layer, l.max_rel_error);
    }
}

#[test]
fn relative_error_handles_vanishing_pairs() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert_eq!(relative_error(1.0, 0.0), 1.0);
    assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
}
