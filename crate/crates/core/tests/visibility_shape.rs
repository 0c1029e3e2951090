use homlab::fock::{FockDim, SourceParams};
use homlab::hom::{level_set, log_space, visibility, visibility_map, ModelOptions};

fn v(mu: f64, nbar: f64) -> f64 {
    visibility(&SourceParams::new(mu, nbar, FockDim::PRODUCTION).unwrap())
        .unwrap()
        .visibility
}

#[test]
fn visibility_falls_with_mu_along_nbar_one_percent() {
    let vs: Vec<f64> = log_space(1e-3, 1e-1, 5).into_iter().map(|mu| v(mu, 0.01)).collect();
    assert!(vs.windows(2).all(|w| w[1] < w[0]), "{vs:?}");
}

#[test]
fn roughly_symmetric_in_the_two_sources() {
    let axis = log_space(1e-4, 0.02, 6);
    for &a in &axis {
        for &b in &axis {
            assert!((v(a, b) - v(b, a)).abs() < 0.05, "({a}, {b}): {} vs {}", v(a, b), v(b, a));
        }
    }
}

#[test]
fn low_flux_limit_is_not_worse() {
    assert!(v(1e-4, 1e-4) >= v(0.01, 0.01));
}

#[test]
fn visibility_non_negative_up_to_five_percent() {
    let axis = log_space(1e-4, 0.05, 8);
    let map = visibility_map(&axis, &axis, FockDim::PRODUCTION, &ModelOptions::default()).unwrap();
    for row in &map.values {
        for cell in row {
            let x = cell.unwrap();
            assert!((0.0..=1.0).contains(&x), "{x}");
        }
    }
}

#[test]
fn seventy_percent_contour_near_two_percent() {
    let axis = log_space(1e-4, 0.1, 31);
    let map = visibility_map(&axis, &axis, FockDim::PRODUCTION, &ModelOptions::default()).unwrap();
    let pts = level_set(&map, 0.7);
    assert!(!pts.is_empty(), "visibility never reaches 0.7 on the grid");
    // Where the contour meets the lowest row and column.
    let on_mu = pts.iter().filter(|p| p.1 <= axis[0] * 1.0001).map(|p| p.0).fold(f64::NAN, f64::max);
    let on_nbar = pts.iter().filter(|p| p.0 <= axis[0] * 1.0001).map(|p| p.1).fold(f64::NAN, f64::max);
    for x in [on_mu, on_nbar] {
        assert!((0.01..=0.04).contains(&x), "crossing at {x}");
    }
}
