use approx::assert_relative_eq;
use proptest::prelude::*;
use ringvib::analytical::{soedel_eigenvalues, Branch};
use ringvib::assembly::{assemble_ring, FormulationKind, FormulationSpec};
use ringvib::cantilever::{solve_cantilever, CantileverCase};
use ringvib::eigen::solve_gevp;
use ringvib::ring::RingParams;
use ringvib::spectral::{analyze_ring, SpectralOptions};

#[test]
fn every_formulation_recovers_low_circumferential_modes() {
    let params = RingParams::canonical();
    for kind in FormulationKind::ALL {
        let s = analyze_ring(&FormulationSpec::new(kind, 3, 32), &params, &SpectralOptions::default()).unwrap();
        let e = s.report.entry(Branch::Circumferential, 2).expect("n=2 matched");
        assert!(e.ev_err.abs() < 1e-3, "{kind}: {}", e.ev_err);
        assert_eq!(s.report.n_ambiguous, 0, "{kind}");
    }
}

#[test]
fn locking_free_transverse_eigenvalues_are_accurate_on_coarse_meshes() {
    let params = RingParams::canonical();
    let (exact, _) = soedel_eigenvalues(3, &params);
    for kind in [FormulationKind::BBar, FormulationKind::Dsg, FormulationKind::HellingerReissner] {
        let s = analyze_ring(&FormulationSpec::new(kind, 2, 32), &params, &SpectralOptions::default()).unwrap();
        let e = s.report.entry(Branch::Transverse, 3).unwrap();
        assert_relative_eq!(e.lambda_exact, exact);
        assert!(e.ev_err.abs() < 1e-1, "{kind}: {}", e.ev_err);
    }
    let s = analyze_ring(&FormulationSpec::new(FormulationKind::StandardFull, 2, 32), &params, &SpectralOptions::default())
        .unwrap();
    assert!(s.report.entry(Branch::Transverse, 3).unwrap().ev_err > 1.0);
}

#[test]
fn cantilever_tip_matches_castigliano_for_thick_beam() {
    let case = CantileverCase::new(FormulationKind::BBar, 3, 32, 100.0);
    let sol = solve_cantilever(&case).unwrap();
    let p = case.params;
    let expected = p.radius.powi(3) * std::f64::consts::PI / (4.0 * p.ei());
    let (ux, _) = sol.displacement(0.0).unwrap();
    assert_relative_eq!(ux, expected, max_relative = 2e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stiffness_scales_linearly_with_modulus(scale in 0.5f64..4.0, kind_ix in 0usize..5) {
        let kind = FormulationKind::ALL[kind_ix];
        let spec = FormulationSpec::new(kind, 2, 8);
        let base = RingParams::canonical();
        let a = assemble_ring(&spec, &base).unwrap();
        let b = assemble_ring(&spec, &base.scaled_modulus(scale)).unwrap();
        let diff = (&b.stiffness - &a.stiffness * scale).norm();
        prop_assert!(diff <= 1e-11 * b.stiffness.norm());
        prop_assert!((&b.mass - &a.mass).norm() == 0.0);
    }

    #[test]
    fn eigenvalues_are_nonnegative_for_standard_rings(p in 2usize..4, ne in 8usize..14) {
        let sys = assemble_ring(&FormulationSpec::new(FormulationKind::StandardFull, p, ne), &RingParams::with_slenderness(50.0)).unwrap();
        let modes = solve_gevp(&sys.stiffness, &sys.mass).unwrap();
        let lmax = modes.lambda_max();
        prop_assert!(modes.eigenvalues().iter().all(|&l| l >= -1e-8 * lmax));
    }
}
