//! Brute-force references: exact evolution with finitely discretized baths,
//! and a Fock-space Redfield integrator for a few fermionic sites.

mod gaussian;
mod redfield;

pub use gaussian::{
    discretize_baths, exact_gaussian_evolve, exact_gaussian_evolve_full, BathGrid, DiscretizedBath, DENSE_LIMIT, MAX_TOTAL_DIMENSION,
};
pub use redfield::{redfield_fock_evolve, FockSpace, RedfieldRun, MAX_SITES};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs, CMat};
    use crate::lyapunov::{solve_differential, Level};
    use crate::model::{build_system, real_matrix, BathAttachment, OpenSystem, Statistics};
    use crate::nonhermitian::NonHermitianSystem;
    use crate::quadrature::QuadConfig;
    use crate::spectral::SpectralFunction;
    use crate::Error;

    fn dimer(eps: f64) -> OpenSystem {
        build_system(
            real_matrix(&[&[0.3, 0.6], &[0.6, -0.2]]),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::WideBand { gamma: 1.0 }, 2.0, 0.4),
                BathAttachment::fermionic(1, SpectralFunction::Lorentzian { gamma: 0.8, center: 0.2, width: 3.0 }, 0.7, -0.3),
            ],
            eps,
            Statistics::Fermionic,
        )
        .unwrap()
    }

    fn grids(m: usize) -> Vec<BathGrid> {
        vec![
            BathGrid { omega_min: -15.0, omega_max: 15.0, modes: m },
            BathGrid { omega_min: -15.0, omega_max: 15.0, modes: m },
        ]
    }

    #[test]
    fn discretization_reproduces_spectral_density() {
        let sys = dimer(0.5);
        let l = SpectralFunction::Lorentzian { gamma: 0.8, center: 0.2, width: 3.0 };
        let e1 = DiscretizedBath::new(&sys, 1, grids(200)[1]).unwrap().reconstruction_l1_error(&l);
        let e2 = DiscretizedBath::new(&sys, 1, grids(400)[1]).unwrap().reconstruction_l1_error(&l);
        assert!(e1 < 0.1 && (e1 / e2 - 2.0).abs() < 0.1, "{e1} {e2}");
        let d = DiscretizedBath::new(&sys, 0, grids(300)[0]).unwrap();
        assert!((d.recurrence_time() - 2.0 * std::f64::consts::PI / 0.1).abs() < 1e-9);
    }

    #[test]
    fn decoupled_and_initial_limits() {
        let sys = dimer(0.5);
        let mut baths = discretize_baths(&sys, &grids(50)).unwrap();
        let c0 = real_matrix(&[&[0.7, 0.2], &[0.2, 0.4]]);
        let out = exact_gaussian_evolve(&sys, &baths, &c0, &[0.0]).unwrap();
        assert!(max_abs(&(&out[0].c - &c0)) < 1e-12);
        for b in &mut baths {
            b.kappa.iter_mut().for_each(|k| *k = 0.0);
        }
        let t = 1.7;
        let out = exact_gaussian_evolve(&sys, &baths, &c0, &[t]).unwrap();
        let u = (sys.hamiltonian.h.map(|z| z * c(0.0, -t))).exp();
        let want = u.map(|z| z.conj()) * &c0 * u.transpose();
        assert!(max_abs(&(&out[0].c - want)) < 1e-12);
    }

    #[test]
    fn full_evolution_conserves_number_and_spectrum() {
        let sys = dimer(0.5);
        let baths = discretize_baths(&sys, &grids(60)).unwrap();
        let c0 = real_matrix(&[&[0.7, 0.2], &[0.2, 0.4]]);
        let full = exact_gaussian_evolve_full(&sys, &baths, &c0, &[0.0, 2.0, 5.0]).unwrap();
        let eig = |m: &CMat| crate::linalg::hermitian_eigenvalues(m);
        let e0 = eig(&full[0]);
        for m in &full[1..] {
            assert!((m.trace() - full[0].trace()).norm() < 1e-10);
            let e = eig(m);
            assert!((e[0] - e0[0]).abs() < 1e-9 && (e[e.len() - 1] - e0[e0.len() - 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_rows_match_dense_diagonalisation() {
        let sys = dimer(0.5);
        let baths = discretize_baths(&sys, &grids(150)).unwrap();
        let c0 = real_matrix(&[&[0.7, 0.2], &[0.2, 0.4]]);
        let times = [0.5, 3.0, 9.0];
        let sparse = gaussian::evolve_with(&sys, &baths, &c0, &times, Some(false)).unwrap();
        let dense = gaussian::evolve_with(&sys, &baths, &c0, &times, Some(true)).unwrap();
        let full = exact_gaussian_evolve_full(&sys, &baths, &c0, &times).unwrap();
        for ((s, d), f) in sparse.iter().zip(&dense).zip(&full) {
            assert!(max_abs(&(&s.c - &d.c)) < 1e-9);
            assert!(max_abs(&(&d.c - f.view((0, 0), (2, 2)))) < 1e-12);
        }
    }

    #[test]
    fn recurrence_and_size_limits() {
        let sys = dimer(0.5);
        let baths = discretize_baths(&sys, &grids(30)).unwrap();
        let c0 = CMat::zeros(2, 2);
        let t_rec = baths[0].recurrence_time();
        assert!(matches!(
            exact_gaussian_evolve(&sys, &baths, &c0, &[0.6 * t_rec]),
            Err(Error::RecurrenceHorizon { .. })
        ));
        let huge = discretize_baths(&sys, &grids(10_000)).unwrap();
        assert!(matches!(
            exact_gaussian_evolve(&sys, &huge, &c0, &[0.1]),
            Err(Error::DimensionTooLarge { .. })
        ));
    }

    fn three_site(eps: f64) -> OpenSystem {
        build_system(
            real_matrix(&[&[0.2, 0.7, 0.0], &[0.7, -0.1, 0.5], &[0.0, 0.5, 0.4]]),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::Lorentzian { gamma: 1.0, center: 0.3, width: 2.0 }, 1.5, 0.5),
                BathAttachment::fermionic(2, SpectralFunction::WideBand { gamma: 0.6 }, 0.8, -0.2),
            ],
            eps,
            Statistics::Fermionic,
        )
        .unwrap()
    }

    #[test]
    fn redfield_matches_level_two_lyapunov() {
        let sys = three_site(0.3);
        let cfg = QuadConfig::with_tol(1e-13, 1e-12);
        let nh = NonHermitianSystem::with_config(&sys, &cfg).unwrap();
        let fs = FockSpace::new(3).unwrap();
        let c0 = real_matrix(&[&[0.8, 0.1, 0.0], &[0.1, 0.3, 0.05], &[0.0, 0.05, 0.5]]);
        let rho0 = fs.gaussian_state(&c0).unwrap();
        assert!(max_abs(&(fs.correlations(&rho0) - &c0)) < 1e-12);
        let times: Vec<f64> = (0..20).map(|k| 0.5 * k as f64).collect();
        let run = redfield_fock_evolve(&sys, &nh, &rho0, &times, &cfg).unwrap();
        let lyap = solve_differential(Level::LevelII, &sys, &nh, &c0, &times, &cfg).unwrap();
        for (a, b) in run.c.iter().zip(&lyap) {
            assert!(max_abs(&(&a.c - &b.c)) < 1e-8, "t={}: {}", a.t, max_abs(&(&a.c - &b.c)));
        }
        assert!(run.trace_defect < 1e-10);
    }

    #[test]
    fn redfield_refusals() {
        let cfg = QuadConfig::default();
        let h = CMat::identity(7, 7);
        let sys = build_system(h, vec![], 0.1, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        assert!(matches!(
            redfield_fock_evolve(&sys, &nh, &CMat::identity(2, 2), &[0.0], &cfg),
            Err(Error::TooManySites { .. })
        ));
        let bos = build_system(
            real_matrix(&[&[1.0]]),
            vec![BathAttachment::new(0, SpectralFunction::OhmicExp { coupling: 0.1, cutoff: 5.0, power: 1.0 }, 1.0, -0.5, Statistics::Bosonic)],
            0.1,
            Statistics::Bosonic,
        )
        .unwrap();
        let nh = NonHermitianSystem::new(&bos).unwrap();
        assert!(matches!(
            redfield_fock_evolve(&bos, &nh, &CMat::identity(2, 2), &[0.0], &cfg),
            Err(Error::NonFermionic)
        ));
    }
}
