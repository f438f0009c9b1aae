//! System Hamiltonian, bath attachments and the JSON description of both.
//!
//! Conventions used everywhere in the crate: `C_{ℓm} = ⟨c†_ℓ c_m⟩`, ħ = k_B = 1,
//! and the coupling scale ε is kept apart from the spectral functions so that
//! every dissipative quantity carries an explicit ε² factor.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, max_abs, CMat};
use crate::spectral::SpectralFunction;

/// Particle statistics, shared by the system and all its baths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistics {
    #[serde(rename = "fermion")]
    Fermionic,
    #[serde(rename = "boson")]
    Bosonic,
}

/// One thermal bath coupled to one site.
#[derive(Debug, Clone, PartialEq)]
pub struct BathAttachment {
    pub site: usize,
    pub spectral: SpectralFunction,
    pub beta: f64,
    pub mu: f64,
    pub statistics: Statistics,
}

impl BathAttachment {
    pub fn new(site: usize, spectral: SpectralFunction, beta: f64, mu: f64, statistics: Statistics) -> Self {
        BathAttachment {
            site,
            spectral,
            beta,
            mu,
            statistics,
        }
    }

    pub fn fermionic(site: usize, spectral: SpectralFunction, beta: f64, mu: f64) -> Self {
        Self::new(site, spectral, beta, mu, Statistics::Fermionic)
    }

    /// `J(ω) n(ω)`, defined as zero wherever `J` vanishes (so the Bose factor is
    /// never evaluated below the band).
    pub fn noise(&self, omega: f64) -> f64 {
        let j = self.spectral.eval(omega);
        if j == 0.0 {
            return 0.0;
        }
        j * occupation_unchecked(self.statistics, self.beta, self.mu, omega)
    }

    /// Limits of `J n` at ω → −∞ and ω → +∞. Only wide-band fermionic baths
    /// have nonzero limits.
    pub fn noise_asymptotes(&self) -> (f64, f64) {
        match (&self.spectral, self.statistics) {
            (SpectralFunction::WideBand { gamma }, Statistics::Fermionic) => {
                if self.beta == 0.0 {
                    (gamma * 0.5, gamma * 0.5)
                } else if self.beta.is_infinite() || self.beta > 0.0 {
                    (*gamma, 0.0)
                } else {
                    (0.0, *gamma)
                }
            }
            _ => (0.0, 0.0),
        }
    }

    /// Frequencies where `J n` has structure (kinks, peaks, the Fermi edge).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.spectral.breakpoints();
        if self.beta > 0.0 && self.beta.is_finite() {
            let (lo, hi) = self.spectral.support();
            if self.mu > lo && self.mu < hi {
                b.push(self.mu);
                let w = 1.0 / self.beta;
                for k in [-8.0, -2.0, 2.0, 8.0] {
                    b.push(self.mu + k * w);
                }
            }
        } else if self.beta.is_infinite() {
            b.push(self.mu);
        }
        b
    }

    /// A frequency window outside of which `J n` is either negligible or
    /// equal to its asymptote to within the thermal tail.
    pub fn window(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self.spectral.window();
        if self.beta > 0.0 && self.beta.is_finite() {
            let w = (10.0 / self.beta).min(1e4);
            lo = lo.min(self.mu - w);
            hi = hi.max(self.mu + w);
        }
        let (slo, shi) = self.spectral.support();
        (lo.max(slo), hi.min(shi))
    }
}

/// Fermi (`+`) or Bose (`−`) occupation `1/(e^{β(ω−μ)} ± 1)`.
pub fn occupation_function(bath: &BathAttachment, omega: f64) -> Result<f64> {
    if bath.statistics == Statistics::Bosonic && omega <= bath.mu {
        return Err(Error::BosonicDivergence { omega, mu: bath.mu });
    }
    Ok(occupation_unchecked(bath.statistics, bath.beta, bath.mu, omega))
}

pub(crate) fn occupation_unchecked(stat: Statistics, beta: f64, mu: f64, omega: f64) -> f64 {
    let x = beta * (omega - mu);
    match stat {
        Statistics::Fermionic => {
            if x.is_nan() {
                // β = ∞ exactly at ω = μ
                0.5
            } else if x > 0.0 {
                let e = (-x).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + x.exp())
            }
        }
        Statistics::Bosonic => 1.0 / x.exp_m1(),
    }
}

/// The single-particle Hamiltonian and its eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemHamiltonian {
    pub h: CMat,
    /// ω_α, ascending
    pub eigvals: Vec<f64>,
    /// Φ, columns are eigenvectors (real when `h` is real)
    pub eigvecs: CMat,
    /// Smallest gap between consecutive eigenvalues (∞ for N = 1).
    pub min_gap: f64,
    /// Set when `min_gap` falls below `1e-9·max(1, ‖H‖)`.
    pub degenerate: bool,
}

impl SystemHamiltonian {
    pub fn new(h: CMat) -> Result<Self> {
        if h.nrows() != h.ncols() {
            return Err(Error::NotSquare {
                rows: h.nrows(),
                cols: h.ncols(),
            });
        }
        if h.nrows() == 0 {
            return Err(Error::InvalidParameter {
                name: "hamiltonian",
                reason: "empty matrix".into(),
            });
        }
        if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "hamiltonian",
                reason: "non-finite entry".into(),
            });
        }
        let scale = max_abs(&h).max(1.0);
        let defect = linalg::hermitian_defect(&h);
        if defect > 1e-12 * scale {
            return Err(Error::NonHermitianInput { defect });
        }
        let mut h = h;
        linalg::hermitize(&mut h);
        let tol = 1e-9 * scale;
        let (eigvals, eigvecs) = linalg::hermitian_eigh(&h, tol);
        let min_gap = eigvals
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::INFINITY, f64::min);
        Ok(SystemHamiltonian {
            h,
            eigvals,
            eigvecs,
            min_gap,
            degenerate: min_gap < tol,
        })
    }

    /// Nearest-neighbour chain with the given on-site energies and hoppings.
    pub fn tridiagonal(onsite: &[f64], hopping: &[f64]) -> Result<Self> {
        let n = onsite.len();
        if n == 0 || hopping.len() + 1 != n {
            return Err(Error::InvalidParameter {
                name: "tridiagonal",
                reason: format!("need N onsite and N-1 hopping values, got {} and {}", n, hopping.len()),
            });
        }
        let mut h = CMat::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = c(onsite[i], 0.0);
        }
        for i in 0..n - 1 {
            h[(i, i + 1)] = c(hopping[i], 0.0);
            h[(i + 1, i)] = c(hopping[i], 0.0);
        }
        Self::new(h)
    }

    pub fn n_sites(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_real(&self) -> bool {
        linalg::is_real(&self.h, 0.0)
    }

    /// Hopping amplitudes `g_p = H_{p,p+1}` of a real nearest-neighbour chain.
    pub fn chain_hoppings(&self) -> Result<Vec<f64>> {
        let n = self.n_sites();
        for i in 0..n {
            for j in 0..n {
                if (i as isize - j as isize).abs() > 1 && self.h[(i, j)].norm() > 0.0 {
                    return Err(Error::NotTridiagonal { row: i, col: j });
                }
            }
        }
        if !self.is_real() {
            return Err(Error::ComplexHamiltonian);
        }
        Ok((0..n.saturating_sub(1)).map(|p| self.h[(p, p + 1)].re).collect())
    }
}

/// A system, its baths and the coupling scale ε.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSystem {
    pub hamiltonian: SystemHamiltonian,
    pub baths: Vec<BathAttachment>,
    pub epsilon: f64,
    pub statistics: Statistics,
    /// Non-fatal remarks gathered during validation.
    pub warnings: Vec<String>,
}

/// Validates the inputs and caches the eigendecomposition of `h`.
pub fn build_system(h: CMat, baths: Vec<BathAttachment>, epsilon: f64, statistics: Statistics) -> Result<OpenSystem> {
    OpenSystem::new(SystemHamiltonian::new(h)?, baths, epsilon, statistics)
}

impl OpenSystem {
    pub fn new(hamiltonian: SystemHamiltonian, baths: Vec<BathAttachment>, epsilon: f64, statistics: Statistics) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must lie in (0, 1], got {epsilon}"),
            });
        }
        let n = hamiltonian.n_sites();
        let mut warnings = Vec::new();
        for b in &baths {
            if b.site >= n {
                return Err(Error::SiteOutOfRange { site: b.site, n_sites: n });
            }
            if b.statistics != statistics {
                return Err(Error::InvalidParameter {
                    name: "statistics",
                    reason: "every bath must share the system statistics".into(),
                });
            }
            if !(b.beta >= 0.0) || b.mu.is_nan() {
                return Err(Error::InvalidParameter {
                    name: "beta",
                    reason: format!("inverse temperature must be >= 0, got {}", b.beta),
                });
            }
            b.spectral.validate()?;
            if statistics == Statistics::Bosonic {
                if matches!(b.spectral, SpectralFunction::WideBand { .. }) {
                    return Err(Error::BosonicWideBand);
                }
                if b.spectral.eval(0.0) != 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "spectral",
                        reason: "bosonic spectral functions must vanish at omega = 0".into(),
                    });
                }
                if !(b.beta > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "beta",
                        reason: "bosonic baths need a finite positive beta".into(),
                    });
                }
                let (lo, _) = b.spectral.positive_support();
                if !(b.mu < lo) {
                    return Err(Error::BosonicMuAboveBand { mu: b.mu, band_bottom: lo });
                }
            }
        }
        let all_wide_fermi = statistics == Statistics::Fermionic
            && baths.iter().all(|b| matches!(b.spectral, SpectralFunction::WideBand { .. }));
        if epsilon == 1.0 && !all_wide_fermi {
            warnings.push(
                "epsilon = 1 with non-wide-band or bosonic baths: the Markov levels are not controlled".into(),
            );
        }
        if hamiltonian.degenerate {
            warnings.push(format!(
                "single-particle spectrum is degenerate (min gap {:.3e}); mode-sum quantities depend on the eigenbasis convention",
                hamiltonian.min_gap
            ));
        }
        Ok(OpenSystem {
            hamiltonian,
            baths,
            epsilon,
            statistics,
            warnings,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.hamiltonian.n_sites()
    }

    /// Sorted list of sites that carry at least one bath.
    pub fn bath_sites(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.baths.iter().map(|b| b.site).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Same system with a different coupling scale.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        OpenSystem::new(self.hamiltonian.clone(), self.baths.clone(), epsilon, self.statistics)
    }

    /// Same system with only the selected baths.
    pub fn with_baths(&self, baths: Vec<BathAttachment>) -> Result<Self> {
        OpenSystem::new(self.hamiltonian.clone(), baths, self.epsilon, self.statistics)
    }

    pub fn from_config(cfg: &SystemConfig, base_dir: Option<&Path>) -> Result<Self> {
        let h = match &cfg.hamiltonian {
            HamiltonianConfig::Dense(d) => SystemHamiltonian::new(d.to_matrix()?)?,
            HamiltonianConfig::Tridiagonal { onsite, hopping } => SystemHamiltonian::tridiagonal(onsite, hopping)?,
        };
        let baths = cfg
            .baths
            .iter()
            .map(|b| {
                Ok(BathAttachment::new(
                    b.site,
                    b.spectral.resolve(base_dir)?,
                    b.beta,
                    b.mu,
                    cfg.statistics,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        OpenSystem::new(h, baths, cfg.epsilon, cfg.statistics)
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg, base_dir)
    }

    /// Serializes the system as a JSON config with a dense Hamiltonian.
    pub fn to_config(&self) -> SystemConfig {
        SystemConfig {
            hamiltonian: HamiltonianConfig::Dense(DenseMatrix::from_matrix(&self.hamiltonian.h)),
            statistics: self.statistics,
            epsilon: self.epsilon,
            baths: self
                .baths
                .iter()
                .map(|b| BathConfig {
                    site: b.site,
                    beta: b.beta,
                    mu: b.mu,
                    spectral: SpectralSpec::from_function(&b.spectral),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("system config always serializes")
    }
}

// ---------------------------------------------------------------------------
// JSON schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub hamiltonian: HamiltonianConfig,
    pub statistics: Statistics,
    pub epsilon: f64,
    #[serde(default)]
    pub baths: Vec<BathConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum HamiltonianConfig {
    #[serde(rename = "dense")]
    Dense(DenseMatrix),
    #[serde(rename = "tridiagonal")]
    Tridiagonal { onsite: Vec<f64>, hopping: Vec<f64> },
}

/// Row-major complex matrix, either a flat list of `[re, im]` pairs (N² of
/// them) or a list of rows of pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DenseMatrix {
    Flat(Vec<[f64; 2]>),
    Rows(Vec<Vec<[f64; 2]>>),
}

impl DenseMatrix {
    pub fn to_matrix(&self) -> Result<CMat> {
        match self {
            DenseMatrix::Flat(v) => {
                let n = (v.len() as f64).sqrt().round() as usize;
                if n * n != v.len() {
                    return Err(Error::Config(format!(
                        "hamiltonian.dense: {} entries is not a perfect square",
                        v.len()
                    )));
                }
                Ok(CMat::from_fn(n, n, |i, j| c(v[i * n + j][0], v[i * n + j][1])))
            }
            DenseMatrix::Rows(rows) => {
                let n = rows.len();
                if let Some(bad) = rows.iter().position(|r| r.len() != n) {
                    return Err(Error::Config(format!("hamiltonian.dense: row {bad} has the wrong length")));
                }
                Ok(CMat::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1])))
            }
        }
    }

    pub fn from_matrix(m: &CMat) -> Self {
        let n = m.nrows();
        let mut v = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                v.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        DenseMatrix::Flat(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub site: usize,
    pub beta: f64,
    pub mu: f64,
    pub spectral: SpectralSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum SpectralSpec {
    #[serde(rename = "wide_band")]
    WideBand { gamma: f64 },
    #[serde(rename = "lorentzian")]
    Lorentzian { gamma: f64, center: f64, width: f64 },
    #[serde(rename = "ohmic_exp")]
    OhmicExp { coupling: f64, cutoff: f64, power: f64 },
    #[serde(rename = "tabulated")]
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
    /// two-column CSV (omega, J), path relative to the config file
    #[serde(rename = "tabulated_csv")]
    TabulatedCsv { path: String },
}

impl SpectralSpec {
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<SpectralFunction> {
        Ok(match self {
            SpectralSpec::WideBand { gamma } => SpectralFunction::WideBand { gamma: *gamma },
            SpectralSpec::Lorentzian { gamma, center, width } => SpectralFunction::Lorentzian {
                gamma: *gamma,
                center: *center,
                width: *width,
            },
            SpectralSpec::OhmicExp { coupling, cutoff, power } => SpectralFunction::OhmicExp {
                coupling: *coupling,
                cutoff: *cutoff,
                power: *power,
            },
            SpectralSpec::Tabulated { omega, values } => SpectralFunction::Tabulated {
                omega: omega.clone(),
                values: values.clone(),
            },
            SpectralSpec::TabulatedCsv { path } => {
                let p = match base_dir {
                    Some(d) => d.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                crate::spectral::load_tabulated_csv(&p)?
            }
        })
    }

    pub fn from_function(s: &SpectralFunction) -> Self {
        match s {
            SpectralFunction::WideBand { gamma } => SpectralSpec::WideBand { gamma: *gamma },
            SpectralFunction::Lorentzian { gamma, center, width } => SpectralSpec::Lorentzian {
                gamma: *gamma,
                center: *center,
                width: *width,
            },
            SpectralFunction::OhmicExp { coupling, cutoff, power } => SpectralSpec::OhmicExp {
                coupling: *coupling,
                cutoff: *cutoff,
                power: *power,
            },
            SpectralFunction::Tabulated { omega, values } => SpectralSpec::Tabulated {
                omega: omega.clone(),
                values: values.clone(),
            },
        }
    }
}

/// Real symmetric matrix helper used by tests and examples.
pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]);
    m.map(|x| c(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_dimer_eigenvectors() {
        let g = 0.7;
        let h = SystemHamiltonian::new(real_matrix(&[&[0.0, g], &[g, 0.0]])).unwrap();
        assert!((h.eigvals[0] + g).abs() < 1e-14 && (h.eigvals[1] - g).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        // largest component made positive; for (1,-1)/√2 the tie goes to index 0
        assert!((h.eigvecs[(0, 0)].re - s).abs() < 1e-14);
        assert!((h.eigvecs[(1, 0)].re + s).abs() < 1e-14);
        assert!((h.eigvecs[(0, 1)].re - s).abs() < 1e-14);
        assert!((h.eigvecs[(1, 1)].re - s).abs() < 1e-14);
    }

    #[test]
    fn uniform_chain_spectrum() {
        let h = SystemHamiltonian::tridiagonal(&[0.0; 5], &[1.0; 4]).unwrap();
        let mut exact: Vec<f64> = (1..=5)
            .map(|k| 2.0 * (std::f64::consts::PI * k as f64 / 6.0).cos())
            .collect();
        exact.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in h.eigvals.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_non_hermitian_and_bad_sites() {
        let m = real_matrix(&[&[0.0, 1.0], &[0.5, 0.0]]);
        assert!(matches!(SystemHamiltonian::new(m), Err(Error::NonHermitianInput { .. })));
        let wb = SpectralFunction::WideBand { gamma: 1.0 };
        let e = build_system(
            real_matrix(&[&[0.0]]),
            vec![BathAttachment::fermionic(1, wb, 1.0, 0.0)],
            0.5,
            Statistics::Fermionic,
        );
        assert!(matches!(e, Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn bosonic_guards() {
        let h = real_matrix(&[&[1.0]]);
        let wb = BathAttachment::new(0, SpectralFunction::WideBand { gamma: 1.0 }, 1.0, -1.0, Statistics::Bosonic);
        assert_eq!(
            build_system(h.clone(), vec![wb], 0.1, Statistics::Bosonic).unwrap_err(),
            Error::BosonicWideBand
        );
        let ohm = SpectralFunction::OhmicExp {
            coupling: 1.0,
            cutoff: 5.0,
            power: 1.0,
        };
        let hot = BathAttachment::new(0, ohm.clone(), 1.0, 0.5, Statistics::Bosonic);
        assert!(matches!(
            build_system(h.clone(), vec![hot], 0.1, Statistics::Bosonic),
            Err(Error::BosonicMuAboveBand { .. })
        ));
        let ok = BathAttachment::new(0, ohm, 1.0, -0.5, Statistics::Bosonic);
        assert!(build_system(h, vec![ok], 0.1, Statistics::Bosonic).is_ok());
    }

    #[test]
    fn occupation_values() {
        let wb = SpectralFunction::WideBand { gamma: 1.0 };
        let f = BathAttachment::fermionic(0, wb.clone(), 2.0, 0.3);
        assert_eq!(occupation_function(&f, 0.3).unwrap(), 0.5);
        let cold = BathAttachment::fermionic(0, wb.clone(), 1e6, 0.0);
        assert!(occupation_function(&cold, 0.01).unwrap() < 1e-300);
        assert_eq!(occupation_function(&cold, -0.01).unwrap(), 1.0);
        let ohm = SpectralFunction::OhmicExp {
            coupling: 1.0,
            cutoff: 1.0,
            power: 1.0,
        };
        let b = BathAttachment::new(0, ohm, 1.0, 0.0, Statistics::Bosonic);
        let n = occupation_function(&b, 1.0).unwrap();
        // series Σ_k e^{-k}
        let series: f64 = (1..60).map(|k| (-(k as f64)).exp()).sum();
        assert!((n - series).abs() < 1e-15);
        assert!((n - 0.581_976_706_869_326_4).abs() < 1e-15);
        assert!(matches!(occupation_function(&b, 0.0), Err(Error::BosonicDivergence { .. })));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let text = r#"{
            "hamiltonian": {"tridiagonal": {"onsite": [0.1, -0.2, 0.3], "hopping": [1.0, 0.7]}},
            "statistics": "fermion",
            "epsilon": 0.1,
            "baths": [
                {"site": 0, "beta": 2.0, "mu": 0.5, "spectral": {"kind": "lorentzian", "gamma": 1.0, "center": 0.0, "width": 3.0}},
                {"site": 2, "beta": 0.5, "mu": -0.5, "spectral": {"kind": "wide_band", "gamma": 0.3}}
            ]
        }"#;
        let sys = OpenSystem::from_json(text, None).unwrap();
        let again = OpenSystem::from_json(&sys.to_json(), None).unwrap();
        assert_eq!(sys.hamiltonian.h, again.hamiltonian.h);
        assert_eq!(sys.baths, again.baths);
        assert_eq!(sys.epsilon, again.epsilon);
    }

    #[test]
    fn json_unknown_key_is_named() {
        let text = r#"{"hamiltonian": {"dense": [[1.0, 0.0]]}, "statistics": "fermion", "epsilon": 0.5, "bathz": []}"#;
        let err = OpenSystem::from_json(text, None).unwrap_err();
        assert!(err.to_string().contains("bathz"), "{err}");
    }
}
