use num_complex::Complex64;
use proptest::prelude::*;

use vfsim_core::filament::{self, FilamentSolver, FilamentState, RunStatus};
use vfsim_core::point_vortex::polygon_config;
use vfsim_core::reduced::{self, BmSolver, PhiState};
use vfsim_core::spectral::{make_grid, ComplexField};
use vfsim_core::traveling_wave::{self as tw, WaveParams};

fn bump(l: f64, m: usize, amp: f64, width: f64) -> ComplexField {
    let g = make_grid(l, m).unwrap();
    ComplexField::from_fn(&g, Complex64::new(1.0, 0.0), |s| {
        Complex64::new(1.0 + amp * (-(s / width).powi(2)).exp(), 0.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `0.84 E_GP ≤ E ≤ 5 E_GP` whenever `‖|Φ|²-1‖_∞ ≤ 1/4`.
    #[test]
    fn energy_comparison_on_admissible_bumps(amp in -0.1f64..0.1, width in 0.5f64..4.0, phase in 0.0f64..0.6, omega in 0.1f64..3.0) {
        let phi = bump(32.0, 512, amp, width);
        let phi = phi.map(|z| z * Complex64::from_polar(1.0, phase * (-z.re * z.re).exp()));
        let cmp = reduced::compare_energies(&phi, omega).unwrap();
        if let Some(r) = cmp.ratio {
            prop_assert!((0.84 - 1e-12..=5.0 + 1e-12).contains(&r), "ratio {}", r);
        }
    }

    /// Random square perturbations satisfy the lower coercivity bound.
    #[test]
    fn square_coercivity(a in proptest::collection::vec((0.0f64..0.05, 0.0f64..6.28, -2.0f64..2.0), 4)) {
        let g = make_grid(24.0, 256).unwrap();
        let cfg = polygon_config(4, 1.0, 1.0, None).unwrap();
        let u = a
            .iter()
            .map(|&(amp, ph, c)| {
                ComplexField::from_fn(&g, Complex64::new(0.0, 0.0), |s| {
                    Complex64::from_polar(amp, ph) * (-(s - c).powi(2)).exp()
                })
            })
            .collect();
        let state = FilamentState::new(cfg, u).unwrap();
        let rep = filament::energies(&state).unwrap();
        prop_assert!(rep.e >= -1e-15);
        prop_assert!(filament::coercivity_check(&rep, filament::COERCIVITY_CONSTANT).unwrap().holds);
        let id = filament::square_energy_identity(&state).unwrap();
        prop_assert!(id.residual < 1e-12);
    }
}

#[test]
fn reduced_energy_is_conserved_to_second_order() {
    let phi = bump(64.0, 1024, 0.1, 1.0);
    let state = PhiState::new(phi, 1.0);
    let d1 = BmSolver::default().evolve(&state, 1.0, 2e-3, 50).unwrap().relative_energy_drift();
    let d2 = BmSolver::default().evolve(&state, 1.0, 1e-3, 50).unwrap().relative_energy_drift();
    assert!(d1 < 1e-5 && d2 < d1, "{d1:e} {d2:e}");
}

#[test]
fn triangle_energy_is_conserved() {
    let phi = bump(32.0, 512, 0.05, 1.0);
    let cfg = polygon_config(3, 1.0, 1.0, None).unwrap();
    let state = FilamentState::dilation(cfg, &phi).unwrap();
    let run = FilamentSolver::default().evolve(&state, 0.5, 1e-3).unwrap();
    assert_eq!(run.status, RunStatus::Completed);
    assert!(run.relative_energy_drift() < 1e-6, "{:e}", run.relative_energy_drift());
}

#[test]
fn travelling_wave_translates_under_the_reduced_flow() {
    let g = make_grid(128.0, 2048).unwrap();
    let p = WaveParams::from_c2(1.0, 1.9).unwrap();
    let w = tw::build_wave(&p, &g).unwrap();
    let state = PhiState::new(w.v.clone(), p.omega).with_twist(w.twist);
    let solver = BmSolver {
        boundary_tol: None,
        ..BmSolver::default()
    };
    let run = solver.evolve(&state, 0.5, 1e-3, 500).unwrap();
    let err = run.states.last().unwrap().phi.sup_distance(&w.twist.shift(&w.v, -0.5 * p.c));
    assert!(err < 1e-6, "{err:e}");
}

#[test]
fn collision_profile_solves_the_linear_equation() {
    let g = make_grid(40.0, 2048).unwrap();
    for t in [0.0, 0.5, 0.9] {
        assert!(reduced::collision_residual(&g, t) < 1e-8);
    }
}
