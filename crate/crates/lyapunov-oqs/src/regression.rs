//! Two-time correlations `C(t+τ, t)_{ℓm} = ⟨c†_ℓ(t+τ) c_m(t)⟩` for τ ≥ 0.
//!
//! Negative lags follow from `C(t, t+τ) = C(t+τ, t)†`. Only the first-Markov
//! and level-I forms exist; replacing the resolvents by their ε → 0 limits
//! inside a τ-dependent integral does not produce a closed equation, so
//! level-II two-time functions are refused.

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64};
use crate::lyapunov::{CorrelationMatrix, FreqEngine, Level};
use crate::model::OpenSystem;
use crate::nonhermitian::NonHermitianSystem;
use crate::quadrature::QuadConfig;

/// `C(t+τ_k, t)` on a lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeCorrelation {
    pub t: f64,
    pub taus: Vec<f64>,
    pub values: Vec<CMat>,
    pub level: Level,
}

impl TwoTimeCorrelation {
    /// `C(t, t+τ_k)`, from the conjugate relation.
    pub fn reversed(&self) -> Vec<CMat> {
        self.values.iter().map(|m| m.adjoint()).collect()
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "taus",
            reason: "lags must be finite and non-negative (use the conjugate relation for τ < 0)".into(),
        });
    }
    Ok(())
}

/// First-Markov two-time function from the initial condition `c0` at time 0.
///
/// ```text
/// C(t+τ, t) = e^{−G(t+τ)} C0 e^{−G†t}
///           + ε² ∫dω/2π e^{iωτ} A(ω,t+τ) F(ω) A(ω,t)†
/// ```
pub fn two_time_first_markov(
    sys: &OpenSystem,
    nh: &NonHermitianSystem,
    c0: &CMat,
    t: f64,
    taus: &[f64],
    cfg: &QuadConfig,
) -> Result<TwoTimeCorrelation> {
    check_taus(taus)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "must be non-negative".into(),
        });
    }
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let eps2 = nh.epsilon * nh.epsilon;
    // numerator e^{iωτ}(1 − E_a e^{−iω t1})(1 − Ē_b e^{iω t})
    let groups: Vec<[f64; 4]> = taus.iter().map(|&tau| [tau, -t, t + tau, 0.0]).collect();
    let group_refs: Vec<&[f64]> = groups.iter().map(|g| &g[..]).collect();
    let ea: Vec<Vec<C64>> = taus
        .iter()
        .map(|&tau| lam.iter().map(|l| (-*l * (t + tau)).exp()).collect())
        .collect();
    let eb: Vec<C64> = lam.iter().map(|l| (-*l * t).exp().conj()).collect();
    let coeff = |g: usize, a: usize, b: usize, j: usize| match j {
        0 => C64::new(1.0, 0.0),
        1 => -ea[g][a],
        2 => -eb[b],
        _ => ea[g][a] * eb[b],
    };
    let fallback = |g: usize, a: usize, b: usize, bath: usize| eng.direct_pair(bath, lam[a], lam[b], t + taus[g], t);
    let noise = eng.noise_blocks(&group_refs, coeff, fallback)?;
    let back = nh.propagator(t).adjoint();
    let values = taus
        .iter()
        .zip(noise)
        .map(|(&tau, x)| nh.propagator(t + tau) * c0 * &back + x * c(eps2, 0.0))
        .collect();
    Ok(TwoTimeCorrelation {
        t,
        taus: taus.to_vec(),
        values,
        level: Level::FirstMarkov,
    })
}

/// Level-I generalized regression from the equal-time matrix `c_t`:
///
/// ```text
/// C(t+τ, t) = e^{−Gτ} C(t) + ε² ∫dω/2π (e^{iωτ} − e^{−Gτ}) (G+iω)⁻¹ F (G†−iω)⁻¹
/// ```
pub fn two_time_level1(
    sys: &OpenSystem,
    nh: &NonHermitianSystem,
    c_t: &CorrelationMatrix,
    taus: &[f64],
    cfg: &QuadConfig,
) -> Result<TwoTimeCorrelation> {
    check_taus(taus)?;
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let eps2 = nh.epsilon * nh.epsilon;
    let groups: Vec<[f64; 2]> = taus.iter().map(|&tau| [tau, 0.0]).collect();
    let group_refs: Vec<&[f64]> = groups.iter().map(|g| &g[..]).collect();
    let coeff = |g: usize, a: usize, _b: usize, j: usize| {
        if j == 0 {
            C64::new(1.0, 0.0)
        } else {
            -(-lam[a] * taus[g]).exp()
        }
    };
    let fallback = |_g: usize, a: usize, b: usize, _bath: usize| -> Result<C64> {
        Err(Error::NonUniqueNess {
            min_re: lam[a].re.min(lam[b].re),
        })
    };
    let noise = eng.noise_blocks(&group_refs, coeff, fallback)?;
    let values = taus
        .iter()
        .zip(noise)
        .map(|(&tau, x)| nh.propagator(tau) * &c_t.c + x * c(eps2, 0.0))
        .collect();
    Ok(TwoTimeCorrelation {
        t: c_t.t,
        taus: taus.to_vec(),
        values,
        level: Level::LevelI,
    })
}

/// Two-time function at the requested level; level II is refused.
pub fn two_time(
    level: Level,
    sys: &OpenSystem,
    nh: &NonHermitianSystem,
    c0: &CMat,
    t: f64,
    taus: &[f64],
    cfg: &QuadConfig,
) -> Result<TwoTimeCorrelation> {
    match level {
        Level::FirstMarkov => two_time_first_markov(sys, nh, c0, t, taus, cfg),
        Level::LevelI => {
            let ct = if t.is_infinite() {
                crate::lyapunov::solve_ness(Level::LevelI, sys, nh, cfg)?
            } else {
                crate::lyapunov::solve_differential(Level::LevelI, sys, nh, c0, &[t], cfg)?.remove(0)
            };
            two_time_level1(sys, nh, &ct, taus, cfg)
        }
        Level::LevelII => Err(Error::UnsupportedLevel {
            what: "two-time correlations at level II",
        }),
    }
}

/// The naive regression rule `dC(t+τ,t)/dτ = −G C(t+τ,t)`, i.e.
/// `C(t+τ, t) = e^{−Gτ} C(t)`. A baseline only: it misses the noise term and
/// is wrong at the steady state unless the bath occupations are flat.
pub fn naive_qme_regression(nh: &NonHermitianSystem, c_t: &CorrelationMatrix, taus: &[f64]) -> Result<TwoTimeCorrelation> {
    check_taus(taus)?;
    Ok(TwoTimeCorrelation {
        t: c_t.t,
        taus: taus.to_vec(),
        values: taus.iter().map(|&tau| nh.propagator(tau) * &c_t.c).collect(),
        level: Level::LevelI,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::lyapunov::{first_markov_at, solve_ness};
    use crate::model::{build_system, real_matrix, BathAttachment, Statistics};
    use crate::spectral::SpectralFunction;

    fn dimer() -> OpenSystem {
        let lor = SpectralFunction::Lorentzian { gamma: 0.6, center: 0.1, width: 2.0 };
        build_system(
            real_matrix(&[&[0.2, 0.5], &[0.5, -0.3]]),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::WideBand { gamma: 0.4 }, 1.0, 0.3),
                BathAttachment::fermionic(1, lor, 2.0, -0.2),
            ],
            0.8,
            Statistics::Fermionic,
        )
        .unwrap()
    }

    #[test]
    fn zero_lag_reproduces_equal_time() {
        let sys = dimer();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        let cfg = QuadConfig::with_tol(1e-12, 1e-11);
        let c0 = real_matrix(&[&[0.7, 0.1], &[0.1, 0.2]]);
        let tt = two_time_first_markov(&sys, &nh, &c0, 1.3, &[0.0, 0.5], &cfg).unwrap();
        let eq = first_markov_at(&sys, &nh, &c0, 1.3, &cfg).unwrap();
        assert!(max_abs(&(&tt.values[0] - &eq.c)) < 1e-12);
        let ct = solve_ness(Level::LevelI, &sys, &nh, &cfg).unwrap();
        let l1 = two_time_level1(&sys, &nh, &ct, &[0.0], &cfg).unwrap();
        assert!(max_abs(&(&l1.values[0] - &ct.c)) < 1e-12);
    }

    #[test]
    fn late_first_markov_equals_level_one_at_ness() {
        let sys = dimer();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        let cfg = QuadConfig::with_tol(1e-12, 1e-11);
        let taus = [0.0, 0.7, 2.0, 5.0];
        let c0 = CMat::zeros(2, 2);
        let fm = two_time_first_markov(&sys, &nh, &c0, 300.0, &taus, &cfg).unwrap();
        let ness = solve_ness(Level::LevelI, &sys, &nh, &cfg).unwrap();
        let l1 = two_time_level1(&sys, &nh, &ness, &taus, &cfg).unwrap();
        for (a, b) in fm.values.iter().zip(&l1.values) {
            assert!(max_abs(&(a - b)) < 1e-9);
        }
    }

    #[test]
    fn level_two_is_refused() {
        let sys = dimer();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        let r = two_time(Level::LevelII, &sys, &nh, &CMat::zeros(2, 2), 1.0, &[0.0], &QuadConfig::default());
        assert!(matches!(r, Err(Error::UnsupportedLevel { .. })));
    }

    #[test]
    fn empty_baths_propagate_homogeneously() {
        // compact band far above μ: F vanishes to double precision
        let sys = build_system(
            real_matrix(&[&[0.0, 1.0], &[1.0, 0.5]]),
            vec![BathAttachment::fermionic(
                0,
                SpectralFunction::Tabulated {
                    omega: vec![-3.0, 0.0, 3.0],
                    values: vec![0.0, 1.0, 0.0],
                },
                5.0,
                -400.0,
            )],
            0.5,
            Statistics::Fermionic,
        )
        .unwrap();
        let nh = NonHermitianSystem::new(&sys).unwrap();
        let c0 = real_matrix(&[&[0.6, 0.2], &[0.2, 0.3]]);
        let (t, tau) = (0.8, 1.1);
        let tt = two_time_first_markov(&sys, &nh, &c0, t, &[tau], &QuadConfig::default()).unwrap();
        let want = nh.propagator(tau) * nh.propagator(t) * &c0 * nh.propagator(t).adjoint();
        assert!(max_abs(&(&tt.values[0] - want)) < 1e-10);
    }
}
