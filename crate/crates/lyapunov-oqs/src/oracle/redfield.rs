//! Redfield master equation for a handful of fermionic sites, integrated
//! directly on the Fock-space density matrix.
//!
//! Write `v = P + iR` with `P`, `R` Hermitian. The generator
//!
//! ```text
//! dρ/dt = −i[Ĥ + ε²R̂, ρ]
//!         + Σ_{ℓm} A_ℓm (2 c_m ρ c†_ℓ − {c†_ℓ c_m, ρ})
//!         + Σ_{ℓm} B_ℓm (2 c†_ℓ ρ c_m − {c_m c†_ℓ, ρ})
//! A = ε²(P − Q̄2/2),   B = ε² Q̄2/2
//! ```
//!
//! is the second-order (Born–Markov, no secular step) equation whose
//! correlation matrix obeys the level-II Lyapunov equation. `R` is the Lamb
//! shift matrix plus, for non-flat `J`, the anti-Hermitian part of the `J`
//! term in `v`. Neither `A` nor `B` is positive in general, which is where
//! the O(ε²) positivity violations come from.

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::lyapunov::{build_q2, CorrelationMatrix};
use crate::model::{OpenSystem, Statistics};
use crate::nonhermitian::NonHermitianSystem;
use crate::quadrature::QuadConfig;

/// Largest number of sites accepted (Fock dimension 64).
pub const MAX_SITES: usize = 6;

/// Jordan–Wigner annihilators on `2^N` states. Basis index bit `k` is the
/// occupation of site `k`; the string runs over lower site indices.
#[derive(Debug, Clone)]
pub struct FockSpace {
    pub n: usize,
    pub c: Vec<CMat>,
}

impl FockSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_SITES {
            return Err(Error::TooManySites {
                n_sites: n,
                limit: MAX_SITES,
            });
        }
        let dim = 1usize << n;
        let c = (0..n)
            .map(|j| {
                let mut m = CMat::zeros(dim, dim);
                for s in 0..dim {
                    if s >> j & 1 == 1 {
                        let below = (s & ((1 << j) - 1)).count_ones();
                        let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
                        m[(s & !(1 << j), s)] = c(sign, 0.0);
                    }
                }
                m
            })
            .collect();
        Ok(FockSpace { n, c })
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    /// `Σ_ab M_ab c†_a c_b`.
    pub fn quadratic(&self, m: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for a in 0..self.n {
            let ca = self.c[a].adjoint();
            for b in 0..self.n {
                if m[(a, b)] != C64::new(0.0, 0.0) {
                    out += &ca * &self.c[b] * m[(a, b)];
                }
            }
        }
        out
    }

    /// `C_ℓm = Tr(c†_ℓ c_m ρ)`.
    pub fn correlations(&self, rho: &CMat) -> CMat {
        CMat::from_fn(self.n, self.n, |l, m| (self.c[l].adjoint() * &self.c[m] * rho).trace())
    }

    /// The Gaussian state with correlation matrix `c` (eigenvalues are
    /// clipped into (0, 1) by 1e-13 so that the exponent stays finite).
    pub fn gaussian_state(&self, cm: &CMat) -> Result<CMat> {
        if cm.nrows() != self.n || cm.ncols() != self.n {
            return Err(Error::InvalidParameter {
                name: "c0",
                reason: format!("expected a {0}x{0} matrix", self.n),
            });
        }
        // C = U diag(n) U†; modes d_k = Σ_j U_jk c_j carry occupation n_k,
        // so ρ ∝ exp(Σ_k κ_k d†_k d_k) = exp(c† (Ū κ Uᵀ) c)
        let (occ, u) = linalg::hermitian_eigh(cm, 0.0);
        let kappa: Vec<f64> = occ
            .iter()
            .map(|&x| {
                let x = x.clamp(1e-13, 1.0 - 1e-13);
                (x / (1.0 - x)).ln()
            })
            .collect();
        let k = u.map(|z| z.conj()) * CMat::from_diagonal(&nalgebra::DVector::from_iterator(self.n, kappa.iter().map(|&x| c(x, 0.0)))) * u.transpose();
        let (vals, vecs) = linalg::hermitian_eigh(&self.quadratic(&k), 0.0);
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&x| c((x - top).exp(), 0.0)));
        let rho = &vecs * CMat::from_diagonal(&w) * vecs.adjoint();
        let tr = rho.trace();
        Ok(rho / tr)
    }
}

/// Output of a Redfield run.
#[derive(Debug, Clone)]
pub struct RedfieldRun {
    pub times: Vec<f64>,
    pub rho: Vec<CMat>,
    pub c: Vec<CorrelationMatrix>,
    /// `max_t |Tr ρ(t) − 1|`.
    pub trace_defect: f64,
    /// Smallest eigenvalue of each ρ(t).
    pub min_eig: Vec<f64>,
}

/// Integrates the Redfield equation from `rho0` (adaptive Dormand–Prince,
/// absolute tolerance 1e-12).
pub fn redfield_fock_evolve(sys: &OpenSystem, nh: &NonHermitianSystem, rho0: &CMat, times: &[f64], cfg: &QuadConfig) -> Result<RedfieldRun> {
    if sys.statistics != Statistics::Fermionic {
        return Err(Error::NonFermionic);
    }
    let fs = FockSpace::new(sys.n_sites())?;
    let dim = fs.dim();
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(Error::InvalidParameter {
            name: "rho0",
            reason: format!("expected a {dim}x{dim} density matrix"),
        });
    }
    let defect = linalg::hermitian_defect(rho0);
    if defect > 1e-10 || (rho0.trace() - 1.0).norm() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "rho0",
            reason: "density matrix must be Hermitian with unit trace".into(),
        });
    }
    let eps2 = sys.epsilon * sys.epsilon;
    let q2 = build_q2(sys, cfg)?;
    let v = &nh.v;
    let p = (v + v.adjoint()) * c(0.5, 0.0);
    let r = (v - v.adjoint()) * c(0.0, -0.5);
    let q2c = q2.map(|z| z.conj());
    let a = (&p - &q2c * c(0.5, 0.0)) * c(eps2, 0.0);
    let b = &q2c * c(0.5 * eps2, 0.0);

    let h_f = fs.quadratic(&(&sys.hamiltonian.h + &r * c(eps2, 0.0)));
    let k_a = fs.quadratic(&a);
    // Σ B_ℓm c_m c†_ℓ
    let mut k_b = CMat::zeros(dim, dim);
    for l in 0..fs.n {
        for m in 0..fs.n {
            k_b += &fs.c[m] * fs.c[l].adjoint() * b[(l, m)];
        }
    }
    let x = h_f * c(0.0, -1.0) - k_a - k_b;
    let xd = x.adjoint();
    // jump partners: D_m = Σ_ℓ A_ℓm c†_ℓ, E_ℓ = Σ_m B_ℓm c_m
    let d: Vec<CMat> = (0..fs.n)
        .map(|m| (0..fs.n).fold(CMat::zeros(dim, dim), |acc, l| acc + fs.c[l].adjoint() * a[(l, m)]))
        .collect();
    let e: Vec<CMat> = (0..fs.n)
        .map(|l| (0..fs.n).fold(CMat::zeros(dim, dim), |acc, m| acc + &fs.c[m] * b[(l, m)]))
        .collect();
    let cd: Vec<CMat> = fs.c.iter().map(|m| m.adjoint()).collect();

    let rhs = |_t: f64, y: &[C64], out: &mut [C64]| {
        let rho = CMat::from_column_slice(dim, dim, y);
        let mut drho = &x * &rho + &rho * &xd;
        for j in 0..fs.n {
            drho += (&fs.c[j] * &rho * &d[j]) * c(2.0, 0.0);
            drho += (&cd[j] * &rho * &e[j]) * c(2.0, 0.0);
        }
        out.copy_from_slice(drho.as_slice());
    };
    let states = linalg::dopri5(rhs, rho0.as_slice(), times, 1e-12, 1e-11)?;
    let rho: Vec<CMat> = states.iter().map(|s| CMat::from_column_slice(dim, dim, s)).collect();
    let trace_defect = rho.iter().map(|m| (m.trace() - 1.0).norm()).fold(0.0, f64::max);
    let min_eig = rho.iter().map(linalg::min_hermitian_eigenvalue).collect();
    let cs = rho.iter().zip(times).map(|(m, &t)| CorrelationMatrix::new(fs.correlations(m), t)).collect();
    Ok(RedfieldRun {
        times: times.to_vec(),
        rho,
        c: cs,
        trace_defect,
        min_eig,
    })
}
