//! Gamma fitting on noise-free synthetic delay data: the linear model is
//! exact, the fixed MLP converges, and its loss curve settles monotonically.

use impactcast_core::gamma::{fit_gamma, GammaKind, ImpactTriple};
use impactcast_nn::init;
use rand::Rng;

fn noise_free_linear(n: usize, seed: u64) -> Vec<(ImpactTriple, f64)> {
    let severity_base = [2.0, 5.0, 9.0, 14.0];
    let mut rng = init::stream(seed, "gamma-test/data");
    (0..n)
        .map(|_| {
            let severity = 1 + rng.random_range(0..4u8);
            let duration = rng.random_range(5.0..180.0);
            let distance = rng.random_range(0.0..6.0);
            let delay = 0.3 * duration + 0.5 * distance + severity_base[(severity - 1) as usize];
            (
                ImpactTriple {
                    severity,
                    duration_min: duration,
                    distance_miles: distance,
                },
                delay,
            )
        })
        .collect()
}

#[test]
fn linear_fit_is_exact_on_linear_data() {
    let data = noise_free_linear(5000, 3);
    let (_, metrics, _) = fit_gamma(&data, GammaKind::Linear, 0.85, 42).unwrap();
    assert!(metrics.mse < 1e-6, "held-out mse {}", metrics.mse);
}

#[test]
fn mlp_converges_on_linear_data() {
    let data = noise_free_linear(5000, 3);
    let (_, metrics, curve) = fit_gamma(&data, GammaKind::Mlp, 0.85, 42).unwrap();
    assert!(metrics.mse < 1e-2, "held-out mse {}", metrics.mse);
    assert_eq!(curve.len(), 200, "one loss point per epoch");
    // past the optimizer warm-up the full-train loss settles: minibatch Adam
    // wiggles a few percent around its floor, so the descent property is
    // checked as (a) never rising back above the warm-up level and (b) never
    // straying beyond twice the best loss seen so far
    let mut running_min = curve[20];
    for (e, &loss) in curve.iter().enumerate().skip(20) {
        assert!(
            loss <= curve[20],
            "loss regressed above the warm-up level at epoch {e}: {loss} vs {}",
            curve[20]
        );
        assert!(
            loss <= running_min * 2.0,
            "loss strayed from its floor at epoch {e}: {loss} vs best {running_min}"
        );
        running_min = running_min.min(loss);
    }
    assert!(
        *curve.last().unwrap() < curve[20] * 0.5,
        "loss failed to keep descending: epoch 20 {} vs final {}",
        curve[20],
        curve.last().unwrap()
    );
}

#[test]
fn degenerate_design_is_reported() {
    // constant duration/distance and a single severity leave the design rank
    // deficient (duplicate all-equal columns)
    let data: Vec<(ImpactTriple, f64)> = (0..200)
        .map(|_| {
            (
                ImpactTriple {
                    severity: 2,
                    duration_min: 30.0,
                    distance_miles: 1.0,
                },
                11.5,
            )
        })
        .collect();
    let err = fit_gamma(&data, GammaKind::Linear, 0.85, 1).unwrap_err();
    assert!(matches!(
        err,
        impactcast_core::gamma::GammaError::DegenerateDesign(_)
    ));
}
