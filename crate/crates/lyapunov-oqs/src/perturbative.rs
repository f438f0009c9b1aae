//! Weak-coupling closed forms in the single-particle eigenbasis.
//!
//! Working in `C^E = Φᵀ C Φ^*` the level-II equation reads
//! `dC^E/dt = −(g_E C^E + C^E g_E†) + ε² q` with `g_E = −iD + ε² k`,
//! `k = conj(v_E)` and `q = Φᵀ Q2 Φ^*`. To leading order the diagonal decouples,
//!
//! ```text
//! dC_αα/dt = −γ_α C_αα + ε² q_αα,   γ_α = ε² f^E_αα(ω_α),   q_αα = F^E_αα(ω_α)
//! ```
//!
//! and each coherence is driven by the populations:
//!
//! ```text
//! dC_αν/dt = −w_αν C_αν + ε² [q_αν − k_αν C_νν − k̄_να C_αα]
//! w_αν = −i(ω_α − ω_ν) + ε²(k_αα + k̄_νν)
//! ```
//!
//! Both are linear ODEs with exponential forcing and are solved exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64};
use crate::lyapunov::{build_q2, solve_algebraic};
use crate::model::{occupation_unchecked, OpenSystem};
use crate::nonhermitian::NonHermitianSystem;
use crate::quadrature::QuadConfig;

/// Options shared by the perturbative formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PertOptions {
    /// Required ratio `|ω_α − ω_ν| / (ε²|v^E_αα + v̄^E_νν|)`.
    pub min_margin: f64,
    pub quad: QuadConfig,
}

impl Default for PertOptions {
    fn default() -> Self {
        PertOptions {
            min_margin: 10.0,
            quad: QuadConfig::default(),
        }
    }
}

/// Outcome of the regime test.
#[derive(Debug, Clone, PartialEq)]
pub struct PertRegime {
    /// Minimum margin over all pairs (∞ for a single mode).
    pub margin: f64,
    /// `(α, ν, margin)` for every pair α < ν.
    pub pairs: Vec<(usize, usize, f64)>,
    pub accepted: bool,
    pub required: f64,
}

/// `f^E_{αν}(ω) = Σ_ℓ Φ*_{ℓα} Φ_{ℓν} J_ℓ(ω)`.
pub fn f_e(sys: &OpenSystem, alpha: usize, nu: usize, omega: f64) -> C64 {
    let phi = &sys.hamiltonian.eigvecs;
    sys.baths
        .iter()
        .map(|b| phi[(b.site, alpha)].conj() * phi[(b.site, nu)] * b.spectral.eval(omega))
        .sum()
}

/// `F^E_{αν}(ω) = Σ_ℓ Φ*_{ℓα} Φ_{ℓν} J_ℓ(ω) n_ℓ(ω)`.
pub fn big_f_e(sys: &OpenSystem, alpha: usize, nu: usize, omega: f64) -> C64 {
    let phi = &sys.hamiltonian.eigvecs;
    sys.baths
        .iter()
        .map(|b| phi[(b.site, alpha)].conj() * phi[(b.site, nu)] * b.noise(omega))
        .sum()
}

/// Checks `|ω_α − ω_ν| ≫ ε²|v^E_αα + v̄^E_νν|` with "≫" meaning a factor of
/// at least `min_margin`.
pub fn check_pert_regime(sys: &OpenSystem, nh: &NonHermitianSystem, min_margin: f64) -> Result<PertRegime> {
    if sys.hamiltonian.degenerate {
        return Err(Error::DegenerateSpectrum {
            gap: sys.hamiltonian.min_gap,
            what: "the perturbative formulas",
        });
    }
    let w = &sys.hamiltonian.eigvals;
    let eps2 = nh.epsilon * nh.epsilon;
    let n = w.len();
    let mut pairs = Vec::new();
    let mut margin = f64::INFINITY;
    for a in 0..n {
        for b in a + 1..n {
            let rate = eps2 * (nh.v_e[(a, a)] + nh.v_e[(b, b)].conj()).norm();
            let m = if rate == 0.0 { f64::INFINITY } else { (w[a] - w[b]).abs() / rate };
            margin = margin.min(m);
            pairs.push((a, b, m));
        }
    }
    Ok(PertRegime {
        margin,
        pairs,
        accepted: margin >= min_margin,
        required: min_margin,
    })
}

/// Quantities shared by the NESS and dynamics formulas.
struct Coefficients {
    omega: Vec<f64>,
    /// γ_α = ε² f^E_αα(ω_α)
    gamma: Vec<f64>,
    /// NESS populations F^E_αα/f^E_αα
    n: Vec<f64>,
    /// ε² q in the eigenbasis
    q: CMat,
    /// ε² k = ε² conj(v_E)
    k: CMat,
}

fn coefficients(sys: &OpenSystem, nh: &NonHermitianSystem, opts: &PertOptions) -> Result<Coefficients> {
    let regime = check_pert_regime(sys, nh, opts.min_margin)?;
    if !regime.accepted {
        return Err(Error::RegimeRejected {
            margin: regime.margin,
            required: regime.required,
        });
    }
    let omega = sys.hamiltonian.eigvals.clone();
    let n = omega.len();
    let eps2 = nh.epsilon * nh.epsilon;
    let scale = sys.baths.iter().map(|b| b.spectral.eval(b.mu).max(b.spectral.peak())).fold(0.0, f64::max);
    let mut gamma = vec![0.0; n];
    let mut pop = vec![0.0; n];
    for a in 0..n {
        let f = f_e(sys, a, a, omega[a]).re;
        if !(f > 1e-14 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::DarkStatePresent { mode: a, rate: f });
        }
        gamma[a] = eps2 * f;
        pop[a] = big_f_e(sys, a, a, omega[a]).re / f;
    }
    let q2 = build_q2(sys, &opts.quad)?;
    let phi = &sys.hamiltonian.eigvecs;
    let q = phi.transpose() * q2 * phi.map(|z| z.conj()) * c(eps2, 0.0);
    let k = nh.v_e.map(|z| z.conj() * eps2);
    Ok(Coefficients {
        omega,
        gamma,
        n: pop,
        q,
        k,
    })
}

impl Coefficients {
    fn w(&self, a: usize, b: usize) -> C64 {
        c(0.0, -(self.omega[a] - self.omega[b])) + self.k[(a, a)] + self.k[(b, b)].conj()
    }

    /// Constant forcing of the coherence `(α, ν)` at the NESS populations.
    fn drive(&self, a: usize, b: usize) -> C64 {
        self.q[(a, b)] - self.k[(a, b)] * self.n[b] - self.k[(b, a)].conj() * self.n[a]
    }
}

/// Perturbative NESS in the eigenbasis.
pub fn pert_ness(sys: &OpenSystem, nh: &NonHermitianSystem, opts: &PertOptions) -> Result<CMat> {
    let co = coefficients(sys, nh, opts)?;
    let n = co.omega.len();
    let mut out = CMat::zeros(n, n);
    for a in 0..n {
        out[(a, a)] = c(co.n[a], 0.0);
        for b in 0..n {
            if a != b {
                out[(a, b)] = co.drive(a, b) / co.w(a, b);
            }
        }
    }
    Ok(out)
}

/// `(e^{−x t} − e^{−y t}) / (y − x)`, with the `t e^{−x t}` limit.
fn exp_diff(x: C64, y: C64, t: f64) -> C64 {
    let d = y - x;
    if (d * t).norm() < 1e-6 {
        (-x * t).exp() * t * (C64::new(1.0, 0.0) - d * t * 0.5)
    } else {
        ((-x * t).exp() - (-y * t).exp()) / d
    }
}

/// Perturbative dynamics in the eigenbasis from the eigenbasis initial
/// condition `c0e` (`C^E(0) = Φᵀ C(0) Φ^*`).
pub fn pert_dynamics(sys: &OpenSystem, nh: &NonHermitianSystem, c0e: &CMat, times: &[f64], opts: &PertOptions) -> Result<Vec<CMat>> {
    let co = coefficients(sys, nh, opts)?;
    let n = co.omega.len();
    if c0e.nrows() != n || c0e.ncols() != n {
        return Err(Error::NotSquare {
            rows: c0e.nrows(),
            cols: c0e.ncols(),
        });
    }
    Ok(times
        .par_iter()
        .map(|&t| {
            let mut out = CMat::zeros(n, n);
            let decay: Vec<f64> = co.gamma.iter().map(|g| (-g * t).exp()).collect();
            for a in 0..n {
                let d = c0e[(a, a)].re - co.n[a];
                out[(a, a)] = c(co.n[a] + d * decay[a], 0.0);
            }
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    let w = co.w(a, b);
                    let ew = (-w * t).exp();
                    let ga = c(co.gamma[a], 0.0);
                    let gb = c(co.gamma[b], 0.0);
                    let da = c0e[(a, a)].re - co.n[a];
                    let db = c0e[(b, b)].re - co.n[b];
                    let mut v = c0e[(a, b)] * ew;
                    v += co.drive(a, b) * phi1(w, t);
                    // population transients feed the coherence
                    v -= co.k[(a, b)] * db * exp_diff(gb, w, t);
                    v -= co.k[(b, a)].conj() * da * exp_diff(ga, w, t);
                    out[(a, b)] = v;
                }
            }
            out
        })
        .collect())
}

/// `(1 − e^{−w t}) / w`
fn phi1(w: C64, t: f64) -> C64 {
    let x = w * t;
    if x.norm() < 1e-6 {
        c(t, 0.0) * (C64::new(1.0, 0.0) - x * 0.5)
    } else {
        (C64::new(1.0, 0.0) - (-x).exp()) / w
    }
}

/// Leading-order `Im C^E_{αν}(∞)` for a real symmetric H:
///
/// ```text
/// ε²/(2(ω_α − ω_ν)) Σ_{x∈{α,ν}} [F^E_αν(ω_x) − n_x f^E_αν(ω_x)]
/// ```
///
/// with `n_x = F^E_xx(ω_x)/f^E_xx(ω_x)`. Vanishes identically when every bath
/// shares one occupation function.
pub fn im_offdiag_ness(sys: &OpenSystem, nh: &NonHermitianSystem, opts: &PertOptions) -> Result<nalgebra::DMatrix<f64>> {
    if !sys.hamiltonian.is_real() {
        return Err(Error::ComplexHamiltonian);
    }
    let co = coefficients(sys, nh, opts)?;
    let n = co.omega.len();
    let eps2 = nh.epsilon * nh.epsilon;
    let mut out = nalgebra::DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let mut s = 0.0;
            for &x in &[a, b] {
                let w = co.omega[x];
                s += big_f_e(sys, a, b, w).re - co.n[x] * f_e(sys, a, b, w).re;
            }
            out[(a, b)] = eps2 * s / (2.0 * (co.omega[a] - co.omega[b]));
        }
    }
    Ok(out)
}

/// `max_α |C^E_αα(∞) − n(ω_α)|` for the level-II steady state when every bath
/// shares `(β, μ)`.
pub fn gibbs_check(sys: &OpenSystem, nh: &NonHermitianSystem, beta: f64, mu: f64, quad: &QuadConfig) -> Result<f64> {
    if sys.baths.is_empty() || sys.baths.iter().any(|b| b.beta != beta || b.mu != mu) {
        return Err(Error::NotEquilibrium);
    }
    let q2 = build_q2(sys, quad)?;
    let ness = solve_algebraic(&nh.g, &q2, sys.epsilon)?;
    let ce = to_eigenbasis(sys, &ness.c);
    Ok((0..sys.n_sites())
        .map(|a| {
            let w = sys.hamiltonian.eigvals[a];
            (ce[(a, a)].re - occupation_unchecked(sys.statistics, beta, mu, w)).abs()
        })
        .fold(0.0, f64::max))
}

/// `C^E = Φᵀ C Φ^*`.
pub fn to_eigenbasis(sys: &OpenSystem, c_site: &CMat) -> CMat {
    let phi = &sys.hamiltonian.eigvecs;
    phi.transpose() * c_site * phi.map(|z| z.conj())
}

/// Inverse of [`to_eigenbasis`]: `C = Φ^* C^E Φᵀ`.
pub fn from_eigenbasis(sys: &OpenSystem, ce: &CMat) -> CMat {
    let phi = &sys.hamiltonian.eigvecs;
    phi.map(|z| z.conj()) * ce * phi.transpose()
}
