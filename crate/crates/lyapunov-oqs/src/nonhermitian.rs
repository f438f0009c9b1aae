//! The dissipator `v`, the non-Hermitian Hamiltonian `H_NH = H − iε²v`, the
//! drift matrix `G = −i H_NH^*` and the Lamb shift.
//!
//! Everything here needs `J` and `J^H` only at the N eigenfrequencies of `H`,
//! so construction costs N Hilbert transforms per bath plus dense algebra.
//!
//! Eigenbasis convention: with `c_ℓ = Σ_α Φ_{ℓα} d_α` the eigenbasis
//! correlation matrix `⟨d†_α d_ν⟩` is
//! `C^E = Φᵀ C Φ^*`, and the drift matrix transforms with the same pair of
//! factors: `g_E = Φᵀ G Φ^* = −iD + ε² conj(v_E)` where `v_E = Φ† v Φ`.

use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::{self, c, max_abs, CMat, EigenDecomposition, C64};
use crate::model::{BathAttachment, OpenSystem};
use crate::quadrature::QuadConfig;
use crate::spectral::{hilbert_transform_with, SpectralFunction};

/// Condition estimate of the eigenvector matrix above which `G` is treated
/// as defective.
pub const NEAR_DEFECTIVE_COND: f64 = 1e8;

/// `J_b(ω_α)` and `J^H_b(ω_α)` for one bath at every eigenfrequency.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpectrum {
    pub j: Vec<f64>,
    pub jh: Vec<f64>,
}

/// The non-Hermitian description of an open system at fixed ε.
#[derive(Debug, Clone)]
pub struct NonHermitianSystem {
    pub epsilon: f64,
    pub v: CMat,
    pub h_nh: CMat,
    pub g: CMat,
    pub g_eig: EigenDecomposition,
    /// Set when the eigenvector condition estimate exceeds [`NEAR_DEFECTIVE_COND`].
    pub near_defective: bool,
    pub lamb_shift: CMat,
    pub v_e: CMat,
    pub g_e: CMat,
    /// One entry per bath, in the order of `sys.baths`.
    pub bath_spectra: Vec<BathSpectrum>,
    /// Contribution of each bath to `v`; these sum (in order) to `v`.
    pub v_per_bath: Vec<CMat>,
}

fn bath_spectra(sys: &OpenSystem, cfg: &QuadConfig) -> Result<Vec<BathSpectrum>> {
    let w = &sys.hamiltonian.eigvals;
    sys.baths
        .par_iter()
        .map(|b| {
            let j: Vec<f64> = w.iter().map(|&x| b.spectral.eval(x)).collect();
            let jh = w
                .par_iter()
                .map(|&x| hilbert_transform_with(&b.spectral, x, cfg))
                .collect::<Result<Vec<f64>>>()?;
            Ok(BathSpectrum { j, jh })
        })
        .collect()
}

/// `v^{(b)}_{ℓm} = ½ δ_{ℓ,site} Σ_α Φ_{ℓα} Φ*_{mα} (J + iJ^H)(ω_α)`.
fn v_of_bath(sys: &OpenSystem, bath: &BathAttachment, sp: &BathSpectrum) -> CMat {
    let n = sys.n_sites();
    let site = bath.site;
    let phi = &sys.hamiltonian.eigvecs;
    let mut v = CMat::zeros(n, n);
    if let SpectralFunction::WideBand { gamma } = bath.spectral {
        // Σ_α Φ_{ℓα}Φ*_{mα} = δ_{ℓm}; skip the sum so the result is exact
        v[(site, site)] = c(0.5 * gamma, 0.0);
        return v;
    }
    for m in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            acc += phi[(site, a)] * phi[(m, a)].conj() * c(sp.j[a], sp.jh[a]);
        }
        v[(site, m)] = acc * 0.5;
    }
    v
}

/// Lamb-shift contribution `¼ Σ_α Φ_{ℓα}Φ*_{mα}(δ_{ℓs} + δ_{ms}) J^H(ω_α)`.
fn lamb_of_bath(sys: &OpenSystem, site: usize, sp: &BathSpectrum) -> CMat {
    let n = sys.n_sites();
    let phi = &sys.hamiltonian.eigvecs;
    let mut l = CMat::zeros(n, n);
    if sp.jh.iter().all(|&x| x == 0.0) {
        return l;
    }
    for m in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            acc += phi[(site, a)] * phi[(m, a)].conj() * sp.jh[a];
        }
        l[(site, m)] += acc * 0.25;
        l[(m, site)] += acc.conj() * 0.25;
    }
    l
}

/// Dissipator matrix `v` (not Hermitian in general).
pub fn build_v(sys: &OpenSystem) -> Result<CMat> {
    build_v_with(sys, &QuadConfig::default())
}

pub fn build_v_with(sys: &OpenSystem, cfg: &QuadConfig) -> Result<CMat> {
    let sp = bath_spectra(sys, cfg)?;
    let n = sys.n_sites();
    let mut v = CMat::zeros(n, n);
    for (b, s) in sys.baths.iter().zip(&sp) {
        v += v_of_bath(sys, b, s);
    }
    Ok(v)
}

/// Lamb-shift matrix (Hermitian; zero for wide-band baths).
pub fn build_lamb_shift(sys: &OpenSystem) -> Result<CMat> {
    let sp = bath_spectra(sys, &QuadConfig::default())?;
    let n = sys.n_sites();
    let mut l = CMat::zeros(n, n);
    for (b, s) in sys.baths.iter().zip(&sp) {
        l += lamb_of_bath(sys, b.site, s);
    }
    Ok(l)
}

impl NonHermitianSystem {
    pub fn new(sys: &OpenSystem) -> Result<Self> {
        Self::with_config(sys, &QuadConfig::default())
    }

    pub fn with_config(sys: &OpenSystem, cfg: &QuadConfig) -> Result<Self> {
        let n = sys.n_sites();
        let eps2 = sys.epsilon * sys.epsilon;
        let bath_spectra = bath_spectra(sys, cfg)?;
        let mut v = CMat::zeros(n, n);
        let mut lamb_shift = CMat::zeros(n, n);
        let mut v_per_bath = Vec::with_capacity(sys.baths.len());
        for (b, s) in sys.baths.iter().zip(&bath_spectra) {
            let vb = v_of_bath(sys, b, s);
            v += &vb;
            v_per_bath.push(vb);
            lamb_shift += lamb_of_bath(sys, b.site, s);
        }
        linalg::hermitize(&mut lamb_shift);

        let h = &sys.hamiltonian.h;
        let h_nh = h - &v * c(0.0, eps2);
        let g = h_nh.map(|z| c(0.0, -1.0) * z.conj());
        let g_eig = linalg::eig(&g)?;
        let near_defective = !(g_eig.cond <= NEAR_DEFECTIVE_COND);

        let phi = &sys.hamiltonian.eigvecs;
        let v_e = phi.adjoint() * &v * phi;
        let g_e = phi.transpose() * &g * phi.map(|z| z.conj());

        Ok(NonHermitianSystem {
            epsilon: sys.epsilon,
            v,
            h_nh,
            g,
            g_eig,
            near_defective,
            lamb_shift,
            v_e,
            g_e,
            bath_spectra,
            v_per_bath,
        })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// Eigenvalues λ_a of G.
    pub fn lambdas(&self) -> &[C64] {
        &self.g_eig.values
    }

    pub fn min_re_lambda(&self) -> f64 {
        self.g_eig.values.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }

    /// `e^{−Gt}`, through the cached decomposition unless G is near-defective.
    pub fn propagator(&self, t: f64) -> CMat {
        if self.near_defective {
            return linalg::expm(&(&self.g * c(-t, 0.0)));
        }
        let e = &self.g_eig;
        let mut sd = e.s.clone();
        for (k, lam) in e.values.iter().enumerate() {
            let f = (-*lam * t).exp();
            let mut col = sd.column_mut(k);
            col *= f;
        }
        sd * &e.s_inv
    }

    /// `‖G‖_max`, the scale used for relative thresholds.
    pub fn g_scale(&self) -> f64 {
        max_abs(&self.g).max(f64::MIN_POSITIVE)
    }
}

/// Modes α with `|Φ_{ℓα}| < tol` at every bath site ℓ.
pub fn dark_states(sys: &OpenSystem, _nh: &NonHermitianSystem, tol: f64) -> Vec<usize> {
    let sites = sys.bath_sites();
    let phi = &sys.hamiltonian.eigvecs;
    (0..sys.n_sites())
        .filter(|&a| sites.iter().all(|&l| phi[(l, a)].norm() < tol))
        .collect()
}

/// True iff every eigenvalue of G has real part above `tol`.
pub fn ness_unique(nh: &NonHermitianSystem, tol: f64) -> bool {
    nh.min_re_lambda() > tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_system, real_matrix, Statistics};

    fn wb(site: usize, g: f64, beta: f64, mu: f64) -> BathAttachment {
        BathAttachment::fermionic(site, SpectralFunction::WideBand { gamma: g }, beta, mu)
    }

    #[test]
    fn resonant_level_wide_band() {
        let sys = build_system(real_matrix(&[&[0.3]]), vec![wb(0, 0.4, 1.0, 0.5), wb(0, 0.6, 2.0, -0.5)], 1.0, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        assert_eq!(nh.v[(0, 0)], c(0.5, 0.0));
        assert!((nh.h_nh[(0, 0)] - c(0.3, -0.5)).norm() < 1e-15);
        assert!((nh.lambdas()[0] - c(0.5, -0.3)).norm() < 1e-14);
        assert!(ness_unique(&nh, 1e-12));
        assert_eq!(max_abs(&nh.lamb_shift), 0.0);
    }

    #[test]
    fn closed_system_has_no_unique_ness() {
        let sys = build_system(real_matrix(&[&[0.0, 1.0], &[1.0, 0.0]]), vec![], 0.5, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        assert_eq!(max_abs(&nh.v), 0.0);
        assert!(!ness_unique(&nh, 1e-12));
    }

    #[test]
    fn single_site_lorentzian_lamb_shift() {
        let lor = SpectralFunction::Lorentzian { gamma: 1.0, center: 0.2, width: 0.7 };
        let sys = build_system(real_matrix(&[&[1.1]]), vec![BathAttachment::fermionic(0, lor.clone(), 1.0, 0.0)], 0.3, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        let jh = hilbert_transform_with(&lor, 1.1, &QuadConfig::default()).unwrap();
        assert!((nh.lamb_shift[(0, 0)].re - jh / 2.0).abs() < 1e-14);
    }

    #[test]
    fn dimer_lorentzian_has_offdiagonal_v_and_consistent_bases() {
        let lor = SpectralFunction::Lorentzian { gamma: 0.8, center: 0.0, width: 1.5 };
        let sys = build_system(real_matrix(&[&[0.0, 0.5], &[0.5, 0.3]]), vec![BathAttachment::fermionic(1, lor, 2.0, 0.1)], 0.2, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        assert!(nh.v[(1, 0)].norm() > 1e-3);
        assert_eq!(nh.v[(0, 1)], c(0.0, 0.0));
        let phi = &sys.hamiltonian.eigvecs;
        let back = phi * &nh.v_e * phi.adjoint();
        assert!(max_abs(&(back - &nh.v)) < 1e-12);
        // g_E = −iD + ε² conj(v_E)
        let eps2 = 0.04;
        let mut expect = nh.v_e.map(|z| z.conj() * eps2);
        for a in 0..2 {
            expect[(a, a)] += c(0.0, -sys.hamiltonian.eigvals[a]);
        }
        assert!(max_abs(&(expect - &nh.g_e)) < 1e-12);
        assert!(nh.min_re_lambda() > 0.0);
    }

    #[test]
    fn middle_mode_of_three_site_chain() {
        let h = real_matrix(&[&[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let ends = build_system(h.clone(), vec![wb(0, 1.0, 1.0, 0.0), wb(2, 1.0, 1.0, 0.0)], 0.1, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&ends).unwrap();
        assert!(dark_states(&ends, &nh, 1e-10).is_empty());
        let mid = build_system(h, vec![wb(1, 1.0, 1.0, 0.0)], 0.1, Statistics::Fermionic).unwrap();
        let nh = NonHermitianSystem::new(&mid).unwrap();
        let dark = dark_states(&mid, &nh, 1e-10);
        assert_eq!(dark, vec![1]);
        assert!(!ness_unique(&nh, 1e-10));
    }
}
