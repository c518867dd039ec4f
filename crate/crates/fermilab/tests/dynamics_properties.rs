use fermilab::hierarchy::{closed_form_bounds, kappa_t, simplex_nodes, sine_kernel, time_horizon, BoundParameters};
use fermilab::meanfield::{evolve_meanfield, MeanFieldModel, Propagation};
use fermilab::nbody::{evolve_nbody, nbody_dt_max, NBodyWavefunction};
use fermilab::spectral::{Grid, Potential};
use fermilab::states::families::hermite_functions;
use fermilab::states::OrbitalSet;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn nbody_evolution_is_unitary_and_antisymmetric(center in -0.5f64..0.5, u0 in 0.2f64..2.0, sigma in 0.5f64..1.5) {
        let grid = Grid::line(32, 6.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 2, 1.0, center)).unwrap();
        let psi = NBodyWavefunction::slater(&set, 0.5).unwrap();
        let pot = Potential::gaussian(u0, sigma);
        let dt = (0.5 * nbody_dt_max(&psi, &pot)).min(0.005);
        let traj = evolve_nbody(&psi, &pot, Propagation::new(0.05, dt)).unwrap();
        for st in &traj.states {
            prop_assert!((st.norm() - psi.norm()).abs() < 1e-12);
            prop_assert!(st.antisymmetry_defect() < 1e-12);
        }
    }

    #[test]
    fn meanfield_evolution_keeps_trace_and_pauli(center in -0.5f64..0.5, u0 in 0.2f64..2.0, hf in proptest::bool::ANY) {
        let grid = Grid::line(64, 8.0).unwrap();
        let set = OrbitalSet::slater(grid, hermite_functions(&grid, 3, 1.0, center)).unwrap();
        let model = if hf { MeanFieldModel::HartreeFock } else { MeanFieldModel::Hartree };
        let traj = evolve_meanfield(&set, model, &Potential::gaussian(u0, 1.0), 0.5, Propagation::new(0.05, 0.001)).unwrap();
        for st in &traj.states {
            prop_assert!((st.trace() - 1.0).abs() < 1e-10);
            prop_assert!(st.pauli_max() <= 1.0 / 3.0 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kappa_t_is_monotone_in_time(k1 in 0.1f64..3.0, k2 in 0.1f64..3.0, t in 0.0f64..1.0, dt in 1e-6f64..0.5) {
        prop_assert!(kappa_t(k1, k2, t + dt) > kappa_t(k1, k2, t));
        prop_assert_eq!(kappa_t(k1, k2, 0.0), 0.0);
    }

    #[test]
    fn horizon_solves_its_defining_relation(k1 in 0.05f64..5.0) {
        let t = time_horizon(k1);
        prop_assert!(t > 0.0);
        prop_assert!((7.0 * k1 * k1 * ((4.0 * t + 1.0).powi(2) - 1.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_body_bound_scales_with_lambda(
        k1 in 0.1f64..2.0, k2 in 0.1f64..2.0, c0 in 0.5f64..5.0, t in 0.0f64..0.2,
        ell in 1usize..4, n in 1usize..4, particles in 1usize..100,
    ) {
        let b = closed_form_bounds(&BoundParameters { kappa1: k1, kappa2: k2, c0, t, ell, n, particles }).unwrap();
        let expected = (ell + n).saturating_sub(2) as f64 * b.k_bound / particles as f64;
        prop_assert!((b.m_bound - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert_eq!(b.envelope.is_some(), b.kappa_t < 1.0);
        prop_assert!(b.k_bound > 0.0);
    }

    #[test]
    fn sine_kernel_is_dominated_by_its_argument(eps in 1e-3f64..2.0, z in -50.0f64..50.0) {
        let s = sine_kernel(eps, z);
        prop_assert!(s.abs() <= z.abs() * (1.0 + 1e-12));
        prop_assert!(s.abs() <= 2.0 / eps + 1e-12);
    }

    #[test]
    fn simplex_nodes_are_ordered(n in 1usize..3, t in 0.01f64..1.0, count in 1usize..20) {
        let nodes = simplex_nodes(n, t, count);
        prop_assert_eq!(nodes.len(), count);
        for s in nodes {
            prop_assert_eq!(s.len(), n);
            prop_assert!(s[0] <= t && *s.last().unwrap() >= 0.0);
            prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
