use std::f64::consts::SQRT_2;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use cqed_pairs::analysis::{chsh_fixed, chsh_optimal, merit_figures, TwoQubitState};
use cqed_pairs::coherent::evolve;
use cqed_pairs::fock_space::{Mode, Sector};
use cqed_pairs::model::{build_hamiltonian, off_sector_norm, PulseShape};
use cqed_pairs::{Basis, ModelParams, NamedState, StateVector};

fn mode(i: usize) -> Mode {
    Mode::ALL[i % 4]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.1f64..3.0, -1.0f64..1.0, -1.0f64..1.0, any::<bool>()).prop_map(|(g, dp, dm, square)| {
        ModelParams {
            g,
            shape: if square { PulseShape::Square } else { PulseShape::Gaussian },
            ..ModelParams::default()
        }
        .with_detunings(dp, dm)
    })
}

fn two_qubit() -> impl Strategy<Value = TwoQubitState> {
    prop::collection::vec(-1.0f64..1.0, 32).prop_filter_map("degenerate", |v| {
        let g = Matrix4::from_fn(|r, c| C64::new(v[4 * r + c], v[16 + 4 * r + c]));
        let rho = g * g.adjoint();
        let tr = rho.trace();
        (tr.re > 1e-6).then(|| TwoQubitState::from_matrix(rho / tr).unwrap())
    })
}

proptest! {
    #[test]
    fn creation_is_adjoint_of_annihilation(i in 0usize..15, j in 0usize..15, m in 0usize..4) {
        let basis = Basis::standard();
        let (si, sj) = (basis.state(i), basis.state(j));
        // <s_i| a |s_j> == <s_j| a^dag |s_i>
        let down = si.annihilate(mode(m)).filter(|(s, _)| s == sj).map_or(0.0, |(_, c)| c);
        let up = sj.create(mode(m), basis.n_max()).filter(|(s, _)| s == si).map_or(0.0, |(_, c)| c);
        prop_assert_eq!(down, up);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_sector_diagonal(p in params(), t in 0.0f64..3.0) {
        let h = build_hamiltonian(t, &Basis::standard(), &p).unwrap();
        prop_assert!(h.hermiticity_defect() < 1e-12);
        prop_assert_eq!(off_sector_norm(&h), 0.0);
    }

    #[test]
    fn chsh_optimum_bounds_fixed_setting(rho in two_qubit()) {
        let (fixed, opt) = (chsh_fixed(&rho), chsh_optimal(&rho));
        prop_assert!(opt >= fixed - 1e-12);
        prop_assert!(opt <= 2.0 * SQRT_2 + 1e-12);
    }

    #[test]
    fn populations_ignore_global_phase(phase in 0.0f64..std::f64::consts::TAU) {
        let p = ModelParams::preset("fig4-calibrated").unwrap();
        let basis = Basis::standard();
        let psi = NamedState::I.vector(&basis);
        let rotated = psi.clone().scaled(C64::from_polar(1.0, phase));
        let a = evolve(&psi, &p, 0.0, 1.5, 1e-2).unwrap();
        let b = evolve(&rotated, &p, 0.0, 1.5, 1e-2).unwrap();
        for name in NamedState::ALL {
            let (x, y) = (name.population(a.final_state()), name.population(b.final_state()));
            prop_assert!((x - y).abs() < 1e-13);
        }
        let ma = merit_figures(&[a.final_state().clone()]).unwrap();
        let mb = merit_figures(&[b.final_state().clone()]).unwrap();
        prop_assert!((ma.S_opt - mb.S_opt).abs() < 1e-12);
    }

    #[test]
    fn closed_evolution_stays_in_its_sector(p in params(), k in 0usize..15) {
        let basis = Basis::standard();
        let s = *basis.state(k);
        let psi = StateVector::basis_state(&basis, s).unwrap();
        let run = evolve(&psi, &p, 0.0, p.t_exit(), 5e-3).unwrap();
        let fin = run.final_state();
        let norm = fin.norm_sqr();
        prop_assert!((fin.sector_population(s.sector()) / norm - 1.0).abs() < 1e-14);
        let total: f64 = Sector::SIMULATION.iter().map(|&q| fin.sector_population(q)).sum();
        prop_assert!((total / norm - 1.0).abs() < 1e-14);
    }
}
