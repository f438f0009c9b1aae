//! Physical outputs built from correlation matrices: bond and bath currents,
//! the weak-coupling chain current, the dimensionless conductance and the
//! resonant-level closed forms.
//!
//! Sites and bonds are 0-based; bond `p` joins sites `p` and `p+1`. Currents
//! are particles per unit time, positive from site `p` to `p+1` and positive
//! from a bath into the system.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64};
use crate::lyapunov::{build_q1_for, build_q2_for, CorrelationMatrix, Level};
use crate::model::{occupation_unchecked, OpenSystem, Statistics};
use crate::nonhermitian::NonHermitianSystem;
use crate::perturbative::{check_pert_regime, im_offdiag_ness, PertOptions};
use crate::quadrature::{integrate, tail_minus, tail_plus, QuadConfig, Range, Tail};
use crate::spectral::SpectralFunction;

/// Bond and per-bath currents for one correlation matrix.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CurrentReport {
    /// `I_p` for p = 0..N−2; empty unless H is a real nearest-neighbour chain.
    pub bond: Vec<f64>,
    /// One entry per bath, in the order of `sys.baths`.
    pub bath: Vec<f64>,
    pub level: Level,
    pub epsilon: f64,
    /// Perturbative regime margin, when it could be evaluated.
    pub margin: Option<f64>,
}

impl CurrentReport {
    /// `max_p |I_p − I_0| / |I_0|` (0 for fewer than two bonds).
    pub fn bond_spread(&self) -> f64 {
        match self.bond.first() {
            Some(&i0) if i0 != 0.0 => self.bond.iter().map(|i| (i - i0).abs()).fold(0.0, f64::max) / i0.abs(),
            Some(_) => self.bond.iter().map(|i| i.abs()).fold(0.0, f64::max),
            None => 0.0,
        }
    }

    /// `|Σ_b I_b| / max_b |I_b|`: zero at a steady state by continuity.
    pub fn bath_imbalance(&self) -> f64 {
        let scale = self.bath.iter().map(|i| i.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.bath.iter().sum::<f64>().abs() / scale
    }
}

/// Particle current through bond `p`: `I_p = 2 g_p Im C_{p+1,p}`.
pub fn bond_current(sys: &OpenSystem, c: &CorrelationMatrix, p: usize) -> Result<f64> {
    let g = sys.hamiltonian.chain_hoppings()?;
    if p >= g.len() {
        return Err(Error::InvalidParameter {
            name: "bond",
            reason: format!("bond {p} does not exist in a {}-site chain", sys.n_sites()),
        });
    }
    Ok(2.0 * g[p] * c.c[(p + 1, p)].im)
}

/// All bond currents of a chain.
pub fn bond_currents(sys: &OpenSystem, c: &CorrelationMatrix) -> Result<Vec<f64>> {
    let g = sys.hamiltonian.chain_hoppings()?;
    Ok((0..g.len()).map(|p| 2.0 * g[p] * c.c[(p + 1, p)].im).collect())
}

/// Current from each bath into the system,
/// `I_b = ε²[Tr Q^{(b)} − 2 Re Tr(conj(v_b) C)]`, with `Q^{(b)}` the level-I
/// (also used for first-Markov) or level-II source of bath `b`.
pub fn bath_currents(level: Level, sys: &OpenSystem, nh: &NonHermitianSystem, c: &CorrelationMatrix, cfg: &QuadConfig) -> Result<Vec<f64>> {
    let eps2 = sys.epsilon * sys.epsilon;
    (0..sys.baths.len())
        .map(|b| {
            let q = match level {
                Level::LevelII => build_q2_for(sys, b, cfg)?,
                _ => build_q1_for(sys, nh, &[b], cfg)?,
            };
            let loss = (nh.v_per_bath[b].map(|z| z.conj()) * &c.c).trace().re;
            Ok(eps2 * (q.trace().re - 2.0 * loss))
        })
        .collect()
}

/// Single-site bath currents `I_ℓ = ε²(Q1^{(ℓ)} − Γ_ℓ⟨n⟩)`; `Γ_ℓ` is read
/// from `v` so any spectral function works, wide band being the textbook case.
pub fn bath_current_single_site(sys: &OpenSystem, nh: &NonHermitianSystem, n_ness: f64, cfg: &QuadConfig) -> Result<Vec<f64>> {
    if sys.n_sites() != 1 {
        return Err(Error::NotSingleSite { n_sites: sys.n_sites() });
    }
    let c = CorrelationMatrix::new(CMat::from_element(1, 1, c(n_ness, 0.0)), f64::INFINITY);
    bath_currents(Level::LevelI, sys, nh, &c, cfg)
}

/// Bond and bath currents for a steady state or snapshot.
pub fn current_report(level: Level, sys: &OpenSystem, nh: &NonHermitianSystem, c: &CorrelationMatrix, cfg: &QuadConfig) -> Result<CurrentReport> {
    let bond = match sys.hamiltonian.chain_hoppings() {
        Ok(_) => bond_currents(sys, c)?,
        Err(Error::NotTridiagonal { .. }) | Err(Error::ComplexHamiltonian) => Vec::new(),
        Err(e) => return Err(e),
    };
    let margin = check_pert_regime(sys, nh, 0.0).ok().map(|r| r.margin);
    Ok(CurrentReport {
        bond,
        bath: bath_currents(level, sys, nh, c, cfg)?,
        level,
        epsilon: sys.epsilon,
        margin,
    })
}

/// Sites carrying baths when every bath sits on the first or last site of a
/// chain with N ≥ 2.
fn two_terminal(sys: &OpenSystem) -> bool {
    let n = sys.n_sites();
    n >= 2 && !sys.baths.is_empty() && sys.baths.iter().all(|b| b.site == 0 || b.site == n - 1)
}

/// Weak-coupling bond current from the leading-order coherences:
/// `I_p = 2 g_p Σ_{α≠ν} Φ_{p+1,α} Φ_{p,ν} Im C^E_{αν}`.
pub fn pert_current_double_sum(sys: &OpenSystem, nh: &NonHermitianSystem, p: usize, opts: &PertOptions) -> Result<f64> {
    let g = sys.hamiltonian.chain_hoppings()?;
    if p >= g.len() {
        return Err(Error::InvalidParameter {
            name: "bond",
            reason: format!("bond {p} does not exist in a {}-site chain", sys.n_sites()),
        });
    }
    let im = im_offdiag_ness(sys, nh, opts)?;
    let phi = &sys.hamiltonian.eigvecs;
    let n = sys.n_sites();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            if a != b {
                s += phi[(p + 1, a)].re * phi[(p, b)].re * im[(a, b)];
            }
        }
    }
    Ok(2.0 * g[p] * s)
}

/// Weak-coupling chain current at bond `p`. With baths only at the two ends
/// this is the bond-independent closed form
///
/// ```text
/// I = ε² Σ_α Φ²_{1α}Φ²_{Nα} (F_1 J_N − J_1 F_N) / (Φ²_{1α} J_1 + Φ²_{Nα} J_N)
/// ```
///
/// (all functions at ω_α, `F = J n`); otherwise the double sum over mode pairs.
pub fn pert_current_formula(sys: &OpenSystem, nh: &NonHermitianSystem, p: usize, opts: &PertOptions) -> Result<f64> {
    let g = sys.hamiltonian.chain_hoppings()?;
    let regime = check_pert_regime(sys, nh, opts.min_margin)?;
    if !regime.accepted {
        return Err(Error::RegimeRejected {
            margin: regime.margin,
            required: regime.required,
        });
    }
    if !two_terminal(sys) {
        return pert_current_double_sum(sys, nh, p, opts);
    }
    if p >= g.len() {
        return Err(Error::InvalidParameter {
            name: "bond",
            reason: format!("bond {p} does not exist in a {}-site chain", sys.n_sites()),
        });
    }
    Ok(two_terminal_closed_form(sys))
}

fn two_terminal_closed_form(sys: &OpenSystem) -> f64 {
    let n = sys.n_sites();
    let phi = &sys.hamiltonian.eigvecs;
    let mut total = 0.0;
    for (a, &w) in sys.hamiltonian.eigvals.iter().enumerate() {
        // per-end totals; several baths on one end simply add
        let (mut j1, mut f1, mut jn, mut fnn) = (0.0, 0.0, 0.0, 0.0);
        for b in &sys.baths {
            let (j, f) = (b.spectral.eval(w), b.noise(w));
            if b.site == 0 {
                j1 += j;
                f1 += f;
            } else {
                jn += j;
                fnn += f;
            }
        }
        let (p1, pn) = (phi[(0, a)].norm_sqr(), phi[(n - 1, a)].norm_sqr());
        let den = p1 * j1 + pn * jn;
        if den > 0.0 {
            total += p1 * pn * (f1 * jn - j1 * fnn) / den;
        }
    }
    sys.epsilon * sys.epsilon * total
}

/// `W(r, s) = Σ_α Φ²_{rα}Φ²_{sα}/(Φ²_{rα} + Φ²_{sα})`; modes with no weight on
/// either site contribute nothing.
pub fn dimensionless_conductance(sys: &OpenSystem, r: usize, s: usize) -> Result<f64> {
    if !sys.hamiltonian.is_real() {
        return Err(Error::ComplexHamiltonian);
    }
    let n = sys.n_sites();
    for site in [r, s] {
        if site >= n {
            return Err(Error::SiteOutOfRange { site, n_sites: n });
        }
    }
    let phi = &sys.hamiltonian.eigvecs;
    Ok((0..n)
        .map(|a| {
            let (x, y) = (phi[(r, a)].norm_sqr(), phi[(s, a)].norm_sqr());
            if x + y > 0.0 {
                x * y / (x + y)
            } else {
                0.0
            }
        })
        .sum())
}

/// Parameters of the resonant level between two wide-band fermionic leads.
/// The rates are the full couplings (`ε²Γ` in the model's notation).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonantLevelParams {
    pub eps0: f64,
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub beta_l: f64,
    pub beta_r: f64,
    pub mu_l: f64,
    pub mu_r: f64,
}

impl ResonantLevelParams {
    /// The same model as an [`OpenSystem`] with ε = 1.
    pub fn to_system(&self) -> Result<OpenSystem> {
        use crate::model::{build_system, BathAttachment};
        build_system(
            CMat::from_element(1, 1, c(self.eps0, 0.0)),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::WideBand { gamma: self.gamma_l }, self.beta_l, self.mu_l),
                BathAttachment::fermionic(0, SpectralFunction::WideBand { gamma: self.gamma_r }, self.beta_r, self.mu_r),
            ],
            1.0,
            Statistics::Fermionic,
        )
    }

    /// Left and right parameters exchanged.
    pub fn swapped(&self) -> Self {
        ResonantLevelParams {
            gamma_l: self.gamma_r,
            gamma_r: self.gamma_l,
            beta_l: self.beta_r,
            beta_r: self.beta_l,
            mu_l: self.mu_r,
            mu_r: self.mu_l,
            ..*self
        }
    }

    fn leads(&self) -> [(f64, f64, f64); 2] {
        [(self.gamma_l, self.beta_l, self.mu_l), (self.gamma_r, self.beta_r, self.mu_r)]
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.gamma_l + self.gamma_r)
    }
}

/// Closed-form steady state of the resonant level:
///
/// ```text
/// ⟨n⟩  = ∫dω/2π (Γ_L n_L + Γ_R n_R) / ((ω−ε₀)² + Γ²/4)
/// I    = ∫dω/2π Γ_L Γ_R (n_L − n_R) / ((ω−ε₀)² + Γ²/4)
/// ⟨c†(τ)c⟩ = ∫dω/2π e^{iωτ} (Γ_L n_L + Γ_R n_R) / ((ω−ε₀)² + Γ²/4)
/// ```
///
/// with `Γ = Γ_L + Γ_R` and `I` the current from the left lead into the level.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonantLevelSuite {
    pub params: ResonantLevelParams,
    pub occupation: f64,
    pub current: f64,
    cfg: QuadConfig,
}

/// Evaluates the occupation and current integrals.
pub fn resonant_level_suite(params: ResonantLevelParams, cfg: &QuadConfig) -> Result<ResonantLevelSuite> {
    let p = params;
    if !(p.gamma_l >= 0.0 && p.gamma_r >= 0.0 && p.gamma_l + p.gamma_r > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: "rates must be non-negative with a positive sum".into(),
        });
    }
    if !(p.beta_l >= 0.0 && p.beta_r >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "inverse temperatures must be non-negative".into(),
        });
    }
    let h = p.half_width();
    let nl = |w: f64| occupation_unchecked(Statistics::Fermionic, p.beta_l, p.mu_l, w);
    let nr = |w: f64| occupation_unchecked(Statistics::Fermionic, p.beta_r, p.mu_r, w);
    let (ranges, breaks) = real_line(&p);
    let r = integrate(
        |w, out| {
            let lor = 1.0 / (2.0 * PI * ((w - p.eps0).powi(2) + h * h));
            let (a, b) = (nl(w), nr(w));
            out[0] = c((p.gamma_l * a + p.gamma_r * b) * lor, 0.0);
            out[1] = c(p.gamma_l * p.gamma_r * (a - b) * lor, 0.0);
        },
        2,
        &ranges,
        &breaks,
        cfg,
    )?;
    Ok(ResonantLevelSuite {
        params: p,
        occupation: r.value[0].re,
        current: r.value[1].re,
        cfg: *cfg,
    })
}

/// Split of the real line around the level and both Fermi windows.
fn real_line(p: &ResonantLevelParams) -> (Vec<Range>, Vec<f64>) {
    let h = p.half_width();
    let mut breaks = vec![p.eps0 - h, p.eps0, p.eps0 + h];
    for (_, beta, mu) in p.leads() {
        breaks.push(mu);
        if beta > 0.0 && beta.is_finite() {
            for k in [-37.0, -5.0, 5.0, 37.0] {
                breaks.push(mu + k / beta);
            }
        }
    }
    let lo = breaks.iter().copied().fold(f64::INFINITY, f64::min) - h;
    let hi = breaks.iter().copied().fold(f64::NEG_INFINITY, f64::max) + h;
    (vec![Range::Lower(lo), Range::Finite(lo, hi), Range::Upper(hi)], breaks)
}

fn fermi_c(beta: f64, mu: f64, z: C64) -> C64 {
    C64::new(1.0, 0.0) / ((beta * (z - mu)).exp() + 1.0)
}

impl ResonantLevelSuite {
    /// `⟨c†(τ)c⟩` in the steady state for τ ≥ 0 (use the conjugate for τ < 0).
    ///
    /// Each lead is handled on its own. At finite temperature the integral is
    /// closed in the upper half plane: the Lorentzian pole at `ε₀ + iΓ/2` plus
    /// the Matsubara poles of the lead. At zero temperature the Fermi
    /// function is a step and the two partial fractions of the Lorentzian
    /// integrate to exponential integrals. Lags much shorter than β, where the
    /// Matsubara series converges slowly, use quadrature.
    pub fn two_time_exact(&self, tau: f64) -> Result<C64> {
        let p = &self.params;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: "must be finite and non-negative".into(),
            });
        }
        if tau == 0.0 {
            return Ok(c(self.occupation, 0.0));
        }
        let h = p.half_width();
        let z = c(p.eps0, h);
        let mut total = C64::new(0.0, 0.0);
        for (g, beta, mu) in p.leads() {
            if g == 0.0 {
                continue;
            }
            let part = if beta == 0.0 {
                (c(0.0, tau) * z).exp() * 0.5 / (2.0 * h)
            } else if beta.is_infinite() {
                self.step_part(tau, mu)
            } else if tau / beta > 1e-4 {
                let mut s = (c(0.0, tau) * z).exp() * fermi_c(beta, mu, z) / (2.0 * h);
                let mut k = 0usize;
                loop {
                    let zk = c(mu, PI * (2 * k + 1) as f64 / beta);
                    let x = zk - p.eps0;
                    let term = (c(0.0, tau) * zk).exp() / (x * x + h * h) * c(0.0, -1.0 / beta);
                    s += term;
                    k += 1;
                    if term.norm() < 1e-18 * s.norm().max(1e-300) || k > 5_000_000 {
                        break;
                    }
                }
                s
            } else {
                self.lead_quadrature(tau, beta, mu)?
            };
            total += g * part;
        }
        Ok(total)
    }

    /// `∫_{−∞}^{μ} dω/2π e^{iωτ}/((ω−ε₀)² + Γ²/4)` for τ > 0.
    fn step_part(&self, tau: f64, mu: f64) -> C64 {
        let p = &self.params;
        let h = p.half_width();
        // 1/((ω−z)(ω−z̄)) = [1/(ω−z) − 1/(ω−z̄)]/(2ih), each written as
        // ±i/(h ∓ iε₀ ± iω) for the tail helpers
        let up = tail_plus(tau, c(h, -p.eps0), mu, Tail::Lower) * c(0.0, 1.0);
        let down = tail_minus(tau, c(h, p.eps0), mu, Tail::Lower) * c(0.0, 1.0);
        (up + down) / (c(0.0, 2.0 * h) * (2.0 * PI))
    }

    /// One finite-temperature lead as the step part plus the smooth
    /// remainder `n − θ(μ−ω)`, which lives on μ ± 37/β.
    fn lead_quadrature(&self, tau: f64, beta: f64, mu: f64) -> Result<C64> {
        let p = self.params;
        let h = p.half_width();
        let w = 37.0 / beta;
        let r = integrate(
            |x, out| {
                let lor = 1.0 / (2.0 * PI * ((x - p.eps0).powi(2) + h * h));
                let n = occupation_unchecked(Statistics::Fermionic, beta, mu, x);
                let step = if x < mu { 1.0 } else { 0.0 };
                out[0] = c(0.0, x * tau).exp() * ((n - step) * lor);
            },
            1,
            &[Range::Finite(mu - w, mu + w)],
            &[mu, p.eps0, mu - 5.0 / beta, mu + 5.0 / beta],
            &self.cfg,
        )?;
        Ok(self.step_part(tau, mu) + r.value[0])
    }

    /// Naive regression `⟨n⟩ e^{(iε₀ − Γ/2)τ}`.
    pub fn two_time_naive(&self, tau: f64) -> C64 {
        let p = &self.params;
        (c(-p.half_width(), p.eps0) * tau).exp() * self.occupation
    }
}
