mod common;

use approx::assert_abs_diff_eq;
use homlab::fock::{annihilation, creation, tensor, DensityMatrix, FockDim, Mode, SourceParams};
use homlab::hom::{
    apply_bs, bs_unitary, clicks_distinguishable, clicks_indistinguishable,
    coincidence_sweep, coincidences_distinguishable, coincidences_indistinguishable,
    layered_clicks, unitarity_error, visibility, BeamSplitter, HeraldArm, ModelOptions, SweepAxis,
};
use homlab::Complex64;
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{oracle_dis, oracle_indis};

#[test]
fn enumeration_oracle_agreement_nmax3() {
    let d = FockDim::new(3).unwrap();
    for mu in [1e-3, 1e-2] {
        for nbar in [1e-3, 1e-2] {
            let p = SourceParams::new(mu, nbar, d).unwrap();
            let got = coincidences_indistinguishable(&p).unwrap();
            assert!((got - oracle_indis(mu, nbar, 3)).abs() < 1e-9);
            let got = coincidences_distinguishable(&p).unwrap();
            assert!((got - oracle_dis(mu, nbar, 3)).abs() < 1e-9);
        }
    }
}

#[test]
fn oracle_agreement_at_oracle_cutoff() {
    let p = SourceParams::new(0.01, 0.01, FockDim::ORACLE).unwrap();
    let got = coincidences_indistinguishable(&p).unwrap();
    assert!((got - oracle_indis(0.01, 0.01, 4)).abs() < 1e-10);
}

/// Coherent light splits into two independent coherent beams of mean mu/2;
/// the signal photons of a k-pair event each pick an output port with
/// probability 1/2. Inclusion-exclusion over the D1/D2 no-click events then
/// gives a closed form.
#[test]
fn distinguishable_closed_form() {
    for (mu, nbar) in [(0.01, 0.01), (0.02, 0.005), (1e-3, 0.02)] {
        let l2: f64 = nbar / (1.0 + nbar);
        let herald = l2;
        let one_port_dark = (1.0 - l2) * (l2 / 2.0) / (1.0 - l2 / 2.0);
        let want = herald - 2.0 * (-mu / 2.0f64).exp() * one_port_dark;
        let p = SourceParams::new(mu, nbar, FockDim::new(16).unwrap()).unwrap();
        assert_abs_diff_eq!(coincidences_distinguishable(&p).unwrap(), want, epsilon = 1e-12);
    }
}

#[test]
fn dense_exponential_oracle() {
    for d in [2usize, 3, 5] {
        let dim = FockDim::new(d).unwrap();
        let a = annihilation(dim);
        let ad = creation(dim);
        let g = ad.kronecker(&a) + a.kronecker(&ad);
        for theta in [0.0, 0.3, std::f64::consts::FRAC_PI_4, 1.2] {
            let want = (g.clone() * Complex64::new(0.0, theta)).exp();
            let got = bs_unitary(&BeamSplitter::new(theta, "a", "b"), dim).unwrap();
            assert!((want - got).norm() < 1e-12, "d = {d}, theta = {theta}");
        }
    }
}

#[test]
fn unitarity_sweep() {
    for d in 2..=16 {
        let s = bs_unitary(&BeamSplitter::balanced("a", "b"), FockDim::new(d).unwrap()).unwrap();
        assert!(unitarity_error(&s) < 1e-10);
    }
}

#[test]
fn balanced_single_photon() {
    let rho = tensor(
        &DensityMatrix::number_state("a", 2, 1).unwrap(),
        &DensityMatrix::vacuum("b", 2).unwrap(),
    )
    .unwrap();
    let out = apply_bs(&rho, &BeamSplitter::balanced("a", "b")).unwrap();
    assert_abs_diff_eq!(out.population(&[1, 0]).unwrap(), 0.5, epsilon = 1e-10);
    assert_abs_diff_eq!(out.population(&[0, 1]).unwrap(), 0.5, epsilon = 1e-10);
}

#[test]
fn apply_bs_unknown_mode() {
    let rho = DensityMatrix::vacuum("a", 2).unwrap();
    assert!(apply_bs(&rho, &BeamSplitter::balanced("a", "zz")).is_err());
}

#[test]
fn two_single_photons() {
    let pair = tensor(
        &DensityMatrix::number_state("wcs", 2, 1).unwrap(),
        &DensityMatrix::number_state("sig", 2, 1).unwrap(),
    )
    .unwrap();
    let bs = BeamSplitter::balanced("wcs", "sig");
    let out = apply_bs(&pair, &bs).unwrap();
    let indis = layered_clicks(&[out], ["wcs", "sig", "idl"], [1.0; 3]).unwrap();
    assert_abs_diff_eq!(indis.pattern(true, true, false), 0.0, epsilon = 1e-15);

    let layer_a = tensor(
        &DensityMatrix::number_state("wcs", 2, 1).unwrap(),
        &DensityMatrix::vacuum("sig", 1).unwrap(),
    )
    .unwrap();
    let layer_b = tensor(
        &DensityMatrix::vacuum("wcs", 1).unwrap(),
        &DensityMatrix::number_state("sig", 2, 1).unwrap(),
    )
    .unwrap();
    let dis = layered_clicks(
        &[apply_bs(&layer_a, &bs).unwrap(), apply_bs(&layer_b, &bs).unwrap()],
        ["wcs", "sig", "idl"],
        [1.0; 3],
    )
    .unwrap();
    let coincidence = dis.pattern(true, true, false);
    assert_abs_diff_eq!(coincidence, 0.5, epsilon = 1e-12);
    // Two photons choosing ports independently with probability 1/2 each.
    let classical = 0.5 * 0.5 + 0.5 * 0.5;
    assert_abs_diff_eq!(coincidence, classical, epsilon = 1e-12);
}

#[test]
fn fock_and_density_paths_agree() {
    // Full five-mode density matrix of the layered construction versus the
    // product-of-marginals shortcut.
    let p = SourceParams::new(0.02, 0.02, FockDim::ORACLE).unwrap();
    let wcs_a = homlab::fock::coherent_state(0.02, p.dim).unwrap().rho;
    let pair = homlab::fock::tmsv_state(0.02, p.dim).unwrap().rho.relabel(&["sig_b", "idl"]).unwrap();
    let rho = tensor(
        &tensor(&wcs_a, &DensityMatrix::vacuum("sig", 1).unwrap()).unwrap(),
        &tensor(&DensityMatrix::vacuum("wcs_b", 1).unwrap(), &pair).unwrap(),
    )
    .unwrap();
    let rho = apply_bs(&rho, &BeamSplitter::balanced("wcs", "sig")).unwrap();
    let rho = apply_bs(&rho, &BeamSplitter::balanced("wcs_b", "sig_b")).unwrap();
    let stats = rho.photon_statistics();
    let mut threefold = 0.0;
    for (k, &pr) in stats.probs.iter().enumerate() {
        let n = stats.numbers(k);
        // modes: wcs, sig, wcs_b, sig_b, idl
        if n[0] + n[2] > 0 && n[1] + n[3] > 0 && n[4] > 0 {
            threefold += pr;
        }
    }
    assert_abs_diff_eq!(coincidences_distinguishable(&p).unwrap(), threefold, epsilon = 1e-14);
}

#[test]
fn efficiencies_reduce_coincidences() {
    let p = SourceParams::new(0.01, 0.01, FockDim::PRODUCTION).unwrap();
    let full = clicks_indistinguishable(&p, &ModelOptions::default()).unwrap().threefold();
    let lossy = ModelOptions {
        efficiencies: [0.5, 0.5, 0.5],
        ..Default::default()
    };
    let part = clicks_indistinguishable(&p, &lossy).unwrap().threefold();
    assert!(part < full);
    let dis = clicks_distinguishable(&p, &lossy).unwrap();
    assert!(dis.threefold() >= part);
}

#[test]
fn separating_splitter_variant_runs() {
    let p = SourceParams::new(0.01, 0.01, FockDim::new(6).unwrap()).unwrap();
    let opts = ModelOptions {
        herald_arm: HeraldArm::SeparatingSplitter,
        ..Default::default()
    };
    let i = clicks_indistinguishable(&p, &opts).unwrap();
    let d = clicks_distinguishable(&p, &opts).unwrap();
    assert_abs_diff_eq!(i.total(), 1.0, epsilon = 1e-12);
    assert!(d.threefold() > i.threefold());
}

#[test]
fn truncation_stability_of_visibility() {
    let v6 = visibility(&SourceParams::new(0.01, 0.01, FockDim::new(6).unwrap()).unwrap()).unwrap();
    let v8 = visibility(&SourceParams::new(0.01, 0.01, FockDim::new(8).unwrap()).unwrap()).unwrap();
    assert!((v6.visibility - v8.visibility).abs() < 1e-6);
}

#[test]
fn visibility_bounds_on_sweep() {
    let axis = homlab::hom::log_space(1e-4, 0.05, 8);
    let map = homlab::hom::visibility_map(&axis, &axis, FockDim::PRODUCTION, &ModelOptions::default())
        .unwrap();
    for row in &map.values {
        for v in row {
            let v = v.unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }
}

#[test]
fn sweep_with_pinned_parameter() {
    let mus = [1e-3, 1e-2, 5e-2];
    let pts = coincidence_sweep(SweepAxis::Mu, &mus, 1e-3, FockDim::PRODUCTION, &ModelOptions::default())
        .unwrap();
    assert_eq!(pts.len(), 3);
    assert!(pts.windows(2).all(|w| w[1].n_indis > w[0].n_indis));
    let nbars = [1e-3, 1e-2];
    let pts = coincidence_sweep(SweepAxis::Nbar, &nbars, 1e-3, FockDim::PRODUCTION, &ModelOptions::default())
        .unwrap();
    assert!(pts[1].n_indis > pts[0].n_indis);
}

fn random_two_mode(entries: &[(f64, f64)], d: usize) -> DensityMatrix {
    let n = d * d;
    let g = DMatrix::from_fn(n, 2, |r, c| {
        let (re, im) = entries[(r * 2 + c) % entries.len()];
        Complex64::new(re, im)
    });
    let mut m = &g * g.adjoint();
    let tr = m.trace();
    m /= tr;
    DensityMatrix::new(vec![Mode::new("a", d), Mode::new("b", d)], m).unwrap()
}

proptest! {
    #[test]
    fn number_distribution_conserved(
        e in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 18),
        theta in -3.2f64..3.2,
    ) {
        let rho = random_two_mode(&e, 3);
        let out = apply_bs(&rho, &BeamSplitter::new(theta, "a", "b")).unwrap();
        let before = rho.photon_statistics().total_number_distribution();
        let after = out.photon_statistics().total_number_distribution();
        for (k, p) in before.iter().enumerate() {
            prop_assert!((p - after[k]).abs() < 1e-12);
        }
        prop_assert!((out.trace() - rho.trace()).abs() < 1e-12);
        prop_assert!((out.purity() - rho.purity()).abs() < 1e-10);
    }

    #[test]
    fn pure_inputs_stay_pure(mu in 0.0f64..0.2, nbar in 0.0f64..0.2) {
        let rho = tensor(
            &homlab::fock::coherent_state(mu, FockDim::new(10).unwrap()).unwrap().rho,
            &homlab::fock::tmsv_state(nbar, FockDim::new(10).unwrap()).unwrap().rho,
        ).unwrap();
        let small = homlab::fock::partial_trace(&rho, &["wcs", "sig"]).unwrap();
        let out = apply_bs(&tensor(
            &homlab::fock::coherent_state(mu, FockDim::new(6).unwrap()).unwrap().rho,
            &DensityMatrix::vacuum("sig", 3).unwrap(),
        ).unwrap(), &BeamSplitter::balanced("wcs", "sig")).unwrap();
        prop_assert!((out.purity() - 1.0).abs() < 1e-10);
        prop_assert!((small.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dis_dominates_indis(mu in 1e-4f64..0.05, nbar in 1e-4f64..0.05) {
        let p = SourceParams::new(mu, nbar, FockDim::PRODUCTION).unwrap();
        let r = visibility(&p).unwrap();
        prop_assert!(r.n_indis <= r.n_dis);
        prop_assert!(r.visibility >= 0.0 && r.visibility <= 1.0);
    }
}
