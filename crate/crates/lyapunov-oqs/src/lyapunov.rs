//! Inhomogeneity sources and solvers for `dC/dt = −(GC + CG†) + ε²Q`.
//!
//! The first-Markov quantities are all linear combinations of the scalar
//! resolvent moments
//!
//! ```text
//! P_{a,b}(s) = ∫ dω/2π  F_b(ω) e^{iωs} / (λ_a + iω)
//! ```
//!
//! one per bath `b`, eigenvalue `λ_a` of G, and time shift `s`. After
//! diagonalising G every time integral is elementary, so only this family of
//! frequency integrals is ever computed numerically. A single vector
//! quadrature evaluates all `a` and all requested `s` on shared nodes.
//!
//! For wide-band fermionic baths `F_b` tends to constants at ±∞. Those
//! constants are split off as a step anchored at μ and integrated in closed
//! form ([`tail_plus`]); the remainder is compactly supported to double
//! precision. At `s = 0` the step contributes a cutoff-dependent constant
//! that is the same for every `a`; it cancels in every Hermitian combination
//! built below.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, max_abs, CMat, C64, I};
use crate::model::{BathAttachment, OpenSystem, Statistics};
use crate::nonhermitian::NonHermitianSystem;
use crate::quadrature::{integrate, tail_plus, QuadConfig, Range, Tail};
use crate::spectral::SpectralFunction;

/// Approximation level of the inhomogeneous term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    /// time-dependent `Q(t)`, exact for wide-band fermionic baths at ε = 1
    #[serde(rename = "first")]
    FirstMarkov,
    /// constant `Q1 = Q(∞)`
    #[serde(rename = "l1")]
    LevelI,
    /// constant `Q2`, `Q1` with the resolvent replaced by its ε → 0 limit
    #[serde(rename = "l2")]
    LevelII,
}

impl std::str::FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "first-markov" => Ok(Level::FirstMarkov),
            "l1" | "level1" => Ok(Level::LevelI),
            "l2" | "level2" => Ok(Level::LevelII),
            other => Err(Error::Config(format!("unknown level `{other}` (expected first, l1 or l2)"))),
        }
    }
}

/// A Hermitian correlation matrix at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub c: CMat,
    pub t: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    /// Size of the anti-Hermitian part removed when the matrix was built.
    pub hermitian_defect: f64,
}

impl CorrelationMatrix {
    /// Hermitizes `c` and caches its extreme eigenvalues.
    pub fn new(mut c: CMat, t: f64) -> Self {
        let hermitian_defect = linalg::hermitize(&mut c);
        let ev = linalg::hermitian_eigenvalues(&c);
        let min_eig = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let max_eig = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        CorrelationMatrix {
            c,
            t,
            min_eig,
            max_eig,
            hermitian_defect,
        }
    }

    /// How far the spectrum leaves the physical range: [0, 1] for fermions,
    /// [0, ∞) for bosons. Zero when physical.
    pub fn positivity_defect(&self, stat: Statistics) -> f64 {
        let lo = (-self.min_eig).max(0.0);
        match stat {
            Statistics::Fermionic => lo.max(self.max_eig - 1.0),
            Statistics::Bosonic => lo,
        }
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }
}

// ---------------------------------------------------------------------------
// frequency engine

/// Evaluates the resolvent moments `P_{a,b}(s)` of one system.
pub(crate) struct FreqEngine<'a> {
    pub sys: &'a OpenSystem,
    pub nh: &'a NonHermitianSystem,
    pub cfg: QuadConfig,
}

fn fermi_span(b: &BathAttachment) -> f64 {
    // Fermi factor below 1e-16 relative to its asymptote
    37.0 / b.beta
}

/// Part of `F_b` integrated in closed form against `e^{iωs}/(λ+iω)`.
///
/// `F = weight(ω) · shape(ω) + residual(ω)`, where `weight` is `a₋` below μ
/// and `a₊` above, and the residual is confined to the thermal window around
/// μ (or vanishes at β = 0 and β = ∞).
#[derive(Debug, Clone, Copy)]
enum Split {
    /// everything numeric
    None,
    /// wide band: shape ≡ 1, weights are the noise asymptotes
    Step { lower: f64, upper: f64 },
    /// Lorentzian `K / ((ω − p)(ω − p̄))`, occupation limits as weights
    Lorentz { k: f64, p: C64, lower: f64, upper: f64 },
}

impl Split {
    fn of(b: &BathAttachment, lam: &[C64], active: &[bool]) -> Split {
        let (cm, cp) = b.noise_asymptotes();
        if cm != 0.0 || cp != 0.0 {
            return Split::Step { lower: cm, upper: cp };
        }
        if let SpectralFunction::Lorentzian { gamma, center, width } = b.spectral {
            if b.statistics != Statistics::Fermionic {
                return Split::None;
            }
            let p = c(center, width);
            // a mode pole sitting on a Lorentzian pole needs a double-pole
            // formula; such coincidences go to plain quadrature instead
            let clash = lam.iter().zip(active).any(|(l, &on)| {
                let p3 = I * *l;
                on && ((p3 - p).norm() < 1e-6 * width || (p3 - p.conj()).norm() < 1e-6 * width)
            });
            if clash {
                return Split::None;
            }
            let (lower, upper) = if b.beta == 0.0 { (0.5, 0.5) } else { (1.0, 0.0) };
            return Split::Lorentz {
                k: gamma * width * width,
                p,
                lower,
                upper,
            };
        }
        Split::None
    }

    fn residual(&self, b: &BathAttachment, w: f64) -> f64 {
        let f = b.noise(w);
        match *self {
            Split::None => f,
            Split::Step { lower, upper } => f - if w < b.mu { lower } else { upper },
            Split::Lorentz { lower, upper, .. } => f - b.spectral.eval(w) * if w < b.mu { lower } else { upper },
        }
    }

    /// `∫ weight · shape · e^{iωs}/(λ+iω) dω` (no 1/2π).
    fn analytic(&self, s: f64, lam: C64, mu: f64) -> C64 {
        let mut t = C64::new(0.0, 0.0);
        match *self {
            Split::None => {}
            Split::Step { lower, upper } => {
                if lower != 0.0 {
                    t += tail_plus(s, lam, mu, Tail::Lower) * lower;
                }
                if upper != 0.0 {
                    t += tail_plus(s, lam, mu, Tail::Upper) * upper;
                }
            }
            Split::Lorentz { k, p, lower, upper } => {
                // K/((ω−p)(ω−p̄)(λ+iω)) = −iK Σ_j r_j/(ω − z_j)
                let z = [p, p.conj(), I * lam];
                for j in 0..3 {
                    let mut den = C64::new(1.0, 0.0);
                    for m in 0..3 {
                        if m != j {
                            den *= z[j] - z[m];
                        }
                    }
                    let r = -I * k / den;
                    for (wgt, tail) in [(lower, Tail::Lower), (upper, Tail::Upper)] {
                        if wgt != 0.0 {
                            t += r * wgt * pole_tail(s, z[j], mu, tail);
                        }
                    }
                }
            }
        }
        t
    }
}

/// `∫_tail e^{iωs}/(ω − z) dω` for a pole off the real axis (or on it, as
/// the limit from above).
fn pole_tail(s: f64, z: C64, mu: f64, tail: Tail) -> C64 {
    if z.im >= 0.0 {
        // 1/(ω − z) = i/(−iz + iω), Re(−iz) = Im z ≥ 0
        I * tail_plus(s, -I * z, mu, tail)
    } else {
        (I * tail_plus(-s, -I * z.conj(), mu, tail)).conj()
    }
}

impl<'a> FreqEngine<'a> {
    pub fn new(sys: &'a OpenSystem, nh: &'a NonHermitianSystem, cfg: &QuadConfig) -> Result<Self> {
        if nh.near_defective {
            return Err(Error::NearDefective {
                cond: nh.g_eig.cond,
                what: "the first-Markov frequency integrals",
            });
        }
        Ok(FreqEngine { sys, nh, cfg: *cfg })
    }

    /// Modes whose left eigenvector has weight on the bath site. Moments of
    /// the others are never used (they enter multiplied by `S⁻¹_{aℓ}`) and
    /// may not exist when the mode is dark.
    fn active(&self, site: usize) -> Vec<bool> {
        let si = &self.nh.g_eig.s_inv;
        let scale = max_abs(si);
        (0..si.nrows()).map(|a| si[(a, site)].norm() > 1e-14 * scale).collect()
    }

    /// `P_{a,b}(s_k)` for every mode `a` and shift `s_k`, laid out as
    /// `a * s.len() + k`. Inactive modes are zero.
    pub fn moments(&self, bath: usize, s: &[f64]) -> Result<Vec<C64>> {
        let b = &self.sys.baths[bath];
        let lam = &self.nh.g_eig.values;
        let n = lam.len();
        let ns = s.len();
        let active = self.active(b.site);
        let mut out = vec![C64::new(0.0, 0.0); n * ns];
        if ns == 0 {
            return Ok(out);
        }

        let split = Split::of(b, lam, &active);
        let w0 = b.mu;

        let mut breaks = b.breakpoints();
        let mut pole_lo = f64::INFINITY;
        let mut pole_hi = f64::NEG_INFINITY;
        for (a, l) in lam.iter().enumerate() {
            if !active[a] {
                continue;
            }
            let x0 = -l.im;
            let r = l.re.abs().max(1e-300);
            breaks.push(x0);
            for k in [1.0, 5.0, 25.0] {
                breaks.push(x0 - k * r);
                breaks.push(x0 + k * r);
            }
            pole_lo = pole_lo.min(x0 - 25.0 * r);
            pole_hi = pole_hi.max(x0 + 25.0 * r);
        }
        let thermal = b.beta > 0.0 && b.beta.is_finite();
        let ranges: Vec<Range> = match split {
            Split::None => {
                let (lo, hi) = b.spectral.support();
                let (mut wa, mut wb) = b.window();
                wa = wa.min(pole_lo).max(lo);
                wb = wb.max(pole_hi).min(hi);
                let mut r = Vec::new();
                if lo == f64::NEG_INFINITY {
                    r.push(Range::Lower(wa));
                }
                r.push(Range::Finite(wa, wb));
                // the exponential cutoff makes the rest negligible
                let cut_off = matches!(b.spectral, SpectralFunction::OhmicExp { .. });
                if hi == f64::INFINITY && !cut_off {
                    r.push(Range::Upper(wb));
                }
                r
            }
            // what is left after removing the step is confined to the Fermi window
            _ if thermal => vec![Range::Finite(w0 - fermi_span(b), w0 + fermi_span(b))],
            _ => vec![],
        };

        if !ranges.is_empty() {
            let integrand = |w: f64, o: &mut [C64]| {
                let r = split.residual(b, w);
                if r == 0.0 {
                    o.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                    return;
                }
                let ph: Vec<C64> = s
                    .iter()
                    .map(|&sk| {
                        let (sn, cs) = (w * sk).sin_cos();
                        c(cs * r, sn * r)
                    })
                    .collect();
                for a in 0..n {
                    let slot = &mut o[a * ns..(a + 1) * ns];
                    if !active[a] {
                        slot.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                        continue;
                    }
                    let inv = (lam[a] + I * w).inv();
                    for (z, p) in slot.iter_mut().zip(&ph) {
                        *z = inv * p;
                    }
                }
            };
            let res = integrate(integrand, n * ns, &ranges, &breaks, &self.cfg)?;
            out = res.value;
        }

        for a in 0..n {
            if !active[a] {
                continue;
            }
            for (k, &sk) in s.iter().enumerate() {
                out[a * ns + k] += split.analytic(sk, lam[a], w0);
            }
        }
        let norm = 1.0 / (2.0 * PI);
        out.iter_mut().for_each(|z| *z *= norm);
        Ok(out)
    }

    /// Direct evaluation of
    /// `∫ dω/2π F_b(ω) e^{iω(t1−t2)} a_a(ω,t1) conj(a_b(ω,t2))` with
    /// `a(ω,t) = (1 − e^{−(λ+iω)t})/(λ+iω)`. Used only when the partial
    /// fraction split degenerates (`λ_a + λ̄_b ≈ 0`).
    pub fn direct_pair(&self, bath: usize, la: C64, lb: C64, t1: f64, t2: f64) -> Result<C64> {
        let b = &self.sys.baths[bath];
        let afn = |l: C64, w: f64, t: f64| {
            let z = l + I * w;
            if (z * t).norm() < 1e-6 {
                c(t, 0.0) * (C64::new(1.0, 0.0) - z * t * 0.5)
            } else {
                (C64::new(1.0, 0.0) - (-z * t).exp()) / z
            }
        };
        let (wa, wb) = b.window();
        let (wa, wb) = (wa.min(-la.im.abs() - 1.0), wb.max(la.im.abs() + 1.0));
        let (lo, hi) = b.spectral.support();
        let mut ranges = Vec::new();
        if lo == f64::NEG_INFINITY {
            ranges.push(Range::Lower(wa.max(lo)));
        }
        ranges.push(Range::Finite(wa.max(lo), wb.min(hi)));
        if hi == f64::INFINITY {
            ranges.push(Range::Upper(wb.min(hi)));
        }
        let mut breaks = b.breakpoints();
        breaks.push(-la.im);
        breaks.push(-lb.im);
        let r = integrate(
            |w, o| {
                let f = b.noise(w);
                o[0] = if f == 0.0 {
                    C64::new(0.0, 0.0)
                } else {
                    (I * w * (t1 - t2)).exp() * afn(la, w, t1) * afn(lb, w, t2).conj() * f
                };
            },
            1,
            &ranges,
            &breaks,
            &self.cfg,
        )?;
        Ok(r.value[0] / (2.0 * PI))
    }

    fn small_denominator(&self, d: C64) -> bool {
        d.norm() < 1e-12 * self.nh.g_scale()
    }

    /// `Σ_b S⁻¹_{aℓ_b} conj(S⁻¹_{bℓ_b}) K^{(b)}_{ab}` for the generic kernel
    /// `K = Σ_j coeff_j(a,b) [P_a(s_j) + M_b(s_j)] / (λ_a + λ̄_b)`, where
    /// `M_b(s) = conj(P_b(−s))`, assembled into `S X S†`.
    ///
    /// `shifts` lists the `s_j`; `coeff(a, b, j)` returns the coefficient.
    /// `fallback(a, b, bath)` computes the kernel directly when the
    /// denominator vanishes.
    pub fn noise_block<C, D>(&self, shifts: &[f64], coeff: C, fallback: D) -> Result<CMat>
    where
        C: Fn(usize, usize, usize) -> C64 + Sync,
        D: Fn(usize, usize, usize) -> Result<C64> + Sync,
    {
        let mut out = self.noise_blocks(&[shifts], |_, a, b, j| coeff(a, b, j), |_, a, b, bath| fallback(a, b, bath))?;
        Ok(out.remove(0))
    }

    /// Several kernels at once. All shifts of all groups are integrated in one
    /// pass over ω, so every group sees the same quadrature nodes.
    /// `coeff(g, a, b, j)` and `fallback(g, a, b, bath)` get the group index.
    pub fn noise_blocks<C, D>(&self, groups: &[&[f64]], coeff: C, fallback: D) -> Result<Vec<CMat>>
    where
        C: Fn(usize, usize, usize, usize) -> C64 + Sync,
        D: Fn(usize, usize, usize, usize) -> Result<C64> + Sync,
    {
        let e = &self.nh.g_eig;
        let n = e.values.len();
        // every s and its negative; offsets[g] is where group g starts
        let mut all: Vec<f64> = Vec::new();
        let mut offsets = Vec::with_capacity(groups.len());
        for g in groups {
            offsets.push(all.len());
            for &s in g.iter() {
                all.push(s);
                all.push(-s);
            }
        }
        let ns = all.len();
        let per_bath: Vec<Vec<C64>> = (0..self.sys.baths.len())
            .into_par_iter()
            .map(|b| self.moments(b, &all))
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(groups.len());
        for (gi, g) in groups.iter().enumerate() {
            let off = offsets[gi];
            let mut x = CMat::zeros(n, n);
            for (bi, bath) in self.sys.baths.iter().enumerate() {
                let l = bath.site;
                let p = &per_bath[bi];
                for a in 0..n {
                    let wa = e.s_inv[(a, l)];
                    if wa.norm() == 0.0 {
                        continue;
                    }
                    for bb in 0..n {
                        let w = wa * e.s_inv[(bb, l)].conj();
                        if w.norm() < 1e-300 {
                            continue;
                        }
                        let d = e.values[a] + e.values[bb].conj();
                        if self.small_denominator(d) {
                            x[(a, bb)] += w * fallback(gi, a, bb, bi)?;
                            continue;
                        }
                        let mut acc = C64::new(0.0, 0.0);
                        for j in 0..g.len() {
                            // P_a(s_j) + conj(P_b(−s_j))
                            let pa = p[a * ns + off + 2 * j];
                            let pb = p[bb * ns + off + 2 * j + 1].conj();
                            acc += coeff(gi, a, bb, j) * (pa + pb);
                        }
                        x[(a, bb)] += w * acc / d;
                    }
                }
            }
            out.push(&e.s * x * e.s.adjoint());
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// sources

/// `Q(t)` at first-Markov level, evaluated on demand.
#[derive(Debug, Clone)]
pub struct FirstMarkovSource {
    pub sys: OpenSystem,
    pub nh: NonHermitianSystem,
    pub cfg: QuadConfig,
}

impl FirstMarkovSource {
    pub fn at(&self, t: f64) -> Result<CMat> {
        first_markov_q(&self.sys, &self.nh, t, &self.cfg)
    }
}

/// The inhomogeneous term of the Lyapunov equation at one of the three levels.
#[derive(Debug, Clone)]
pub enum InhomogeneitySource {
    FirstMarkov(Box<FirstMarkovSource>),
    LevelI(CMat),
    LevelII(CMat),
}

impl InhomogeneitySource {
    pub fn level(&self) -> Level {
        match self {
            InhomogeneitySource::FirstMarkov(_) => Level::FirstMarkov,
            InhomogeneitySource::LevelI(_) => Level::LevelI,
            InhomogeneitySource::LevelII(_) => Level::LevelII,
        }
    }

    pub fn at(&self, t: f64) -> Result<CMat> {
        match self {
            InhomogeneitySource::FirstMarkov(s) => s.at(t),
            InhomogeneitySource::LevelI(q) | InhomogeneitySource::LevelII(q) => Ok(q.clone()),
        }
    }
}

/// `Z_b = S (W_b ∘ S⁻¹ e_ℓ) e_ℓᵀ` summed over baths, with `W_{b,a}` from
/// `wfun(bath, a, moments)`. Both `Q1` and `Q(t)` are `Z + Z†`.
fn z_matrix<W>(eng: &FreqEngine, baths: &[usize], shifts: &[f64], wfun: W) -> Result<CMat>
where
    W: Fn(usize, &[C64]) -> C64 + Sync,
{
    let e = &eng.nh.g_eig;
    let n = e.values.len();
    let ns = shifts.len();
    let moments: Vec<Vec<C64>> = baths.par_iter().map(|&b| eng.moments(b, shifts)).collect::<Result<_>>()?;
    let mut z = CMat::zeros(n, n);
    for (k, &bi) in baths.iter().enumerate() {
        let l = eng.sys.baths[bi].site;
        let mut col = vec![C64::new(0.0, 0.0); n];
        for a in 0..n {
            let w = wfun(a, &moments[k][a * ns..(a + 1) * ns]);
            col[a] = w * e.s_inv[(a, l)];
        }
        for r in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..n {
                acc += e.s[(r, a)] * col[a];
            }
            z[(r, l)] += acc;
        }
    }
    Ok(z)
}

fn herm_sum(z: &CMat) -> CMat {
    let mut q = z + z.adjoint();
    linalg::hermitize(&mut q);
    q
}

/// `Q(t) = i(C_ξ(t) − C_ξ(t)†)` at first-Markov level.
pub fn first_markov_q(sys: &OpenSystem, nh: &NonHermitianSystem, t: f64, cfg: &QuadConfig) -> Result<CMat> {
    let n = sys.n_sites();
    if t == 0.0 {
        return Ok(CMat::zeros(n, n));
    }
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let all: Vec<usize> = (0..sys.baths.len()).collect();
    let z = z_matrix(&eng, &all, &[0.0, -t], |a, m| m[0] - (-lam[a] * t).exp() * m[1])?;
    Ok(herm_sum(&z))
}

/// `C_ξ(t) = −i ∫₀ᵗ dt′ ∫ dω/2π F(ω) e^{iωt′} e^{−G†t′}`.
///
/// Finite only when every bath's noise has equal limits at ±∞; a wide-band
/// Fermi bath at finite temperature makes it diverge logarithmically (its
/// anti-Hermitian part, the physically relevant `Q(t)`, stays finite).
pub fn build_c_xi(sys: &OpenSystem, nh: &NonHermitianSystem, t: f64, cfg: &QuadConfig) -> Result<CMat> {
    if t < 0.0 {
        return Err(Error::InvalidParameter {
            name: "t",
            reason: "must be non-negative".into(),
        });
    }
    for b in &sys.baths {
        let (cm, cp) = b.noise_asymptotes();
        if cm != cp {
            return Err(Error::Divergent {
                quantity: "C_xi",
                reason: "wide-band bath with a Fermi edge (noise tends to different constants at ±infinity)".into(),
            });
        }
    }
    let n = sys.n_sites();
    if t == 0.0 {
        return Ok(CMat::zeros(n, n));
    }
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let all: Vec<usize> = (0..sys.baths.len()).collect();
    let z = z_matrix(&eng, &all, &[0.0, -t], |a, m| m[0] - (-lam[a] * t).exp() * m[1])?;
    Ok(z.adjoint() * c(0.0, -1.0))
}

/// `Q1` restricted to the listed baths.
pub fn build_q1_for(sys: &OpenSystem, nh: &NonHermitianSystem, baths: &[usize], cfg: &QuadConfig) -> Result<CMat> {
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let z = z_matrix(&eng, baths, &[0.0], |_, m| m[0])?;
    Ok(herm_sum(&z))
}

/// `Q1 = ∫ dω/2π [F (G† − iω)⁻¹ + (G + iω)⁻¹ F]`.
pub fn build_q1(sys: &OpenSystem, nh: &NonHermitianSystem, cfg: &QuadConfig) -> Result<CMat> {
    let all: Vec<usize> = (0..sys.baths.len()).collect();
    let n = sys.n_sites();
    let mut q = CMat::zeros(n, n);
    for b in all {
        q += build_q1_for(sys, nh, &[b], cfg)?;
    }
    Ok(q)
}

/// `F_b(ω_α)` and the (regularised) `F^H_b(ω_α)` at every eigenfrequency.
fn noise_at_modes(sys: &OpenSystem, bath: &BathAttachment, cfg: &QuadConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = &sys.hamiltonian.eigvals;
    let f = w.iter().map(|&x| bath.noise(x)).collect();
    let fh = w
        .par_iter()
        .map(|&x| bath.noise_hilbert(x, cfg))
        .collect::<Result<Vec<f64>>>()?;
    Ok((f, fh))
}

/// Level-II contribution of one bath:
/// `½ Σ_α Φ*_{ℓα}Φ_{mα} [δ_{ℓs}(F − iF^H) + δ_{ms}(F + iF^H)](ω_α)`.
pub fn build_q2_for(sys: &OpenSystem, bath: usize, cfg: &QuadConfig) -> Result<CMat> {
    let b = &sys.baths[bath];
    let (f, fh) = noise_at_modes(sys, b, cfg)?;
    let phi = &sys.hamiltonian.eigvecs;
    let n = sys.n_sites();
    let s = b.site;
    let mut q = CMat::zeros(n, n);
    for m in 0..n {
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            acc += phi[(s, a)].conj() * phi[(m, a)] * c(f[a], -fh[a]);
        }
        q[(s, m)] += acc * 0.5;
        q[(m, s)] += acc.conj() * 0.5;
    }
    Ok(q)
}

/// `Q2`; needs a non-degenerate spectrum of H.
pub fn build_q2(sys: &OpenSystem, cfg: &QuadConfig) -> Result<CMat> {
    if sys.hamiltonian.degenerate {
        return Err(Error::DegenerateSpectrum {
            gap: sys.hamiltonian.min_gap,
            what: "the level-II source",
        });
    }
    let n = sys.n_sites();
    let mut q = CMat::zeros(n, n);
    for b in 0..sys.baths.len() {
        q += build_q2_for(sys, b, cfg)?;
    }
    linalg::hermitize(&mut q);
    Ok(q)
}

/// Builds the source at the requested level.
pub fn build_q(level: Level, sys: &OpenSystem, nh: &NonHermitianSystem, cfg: &QuadConfig) -> Result<InhomogeneitySource> {
    Ok(match level {
        Level::FirstMarkov => InhomogeneitySource::FirstMarkov(Box::new(FirstMarkovSource {
            sys: sys.clone(),
            nh: nh.clone(),
            cfg: *cfg,
        })),
        Level::LevelI => InhomogeneitySource::LevelI(build_q1(sys, nh, cfg)?),
        Level::LevelII => InhomogeneitySource::LevelII(build_q2(sys, cfg)?),
    })
}

// ---------------------------------------------------------------------------
// solvers

fn check_unique(g: &CMat) -> Result<Vec<C64>> {
    let ev = linalg::eig(g)?.values;
    let min_re = ev.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    if !(min_re > 1e-12 * max_abs(g).max(f64::MIN_POSITIVE)) {
        return Err(Error::NonUniqueNess { min_re });
    }
    Ok(ev)
}

/// Solves `GC + CG† = ε²Q` for the steady state.
pub fn solve_algebraic(g: &CMat, q: &CMat, eps: f64) -> Result<CorrelationMatrix> {
    check_unique(g)?;
    let rhs = q * c(eps * eps, 0.0);
    let x = match linalg::lyapunov_bartels_stewart(g, &rhs) {
        Ok(x) => x,
        Err(Error::IllConditioned { gap }) => {
            if g.nrows() > 64 {
                return Err(Error::IllConditioned { gap });
            }
            linalg::lyapunov_kronecker(g, &rhs)?
        }
        Err(e) => return Err(e),
    };
    let res = max_abs(&(g * &x + &x * g.adjoint() - &rhs));
    let bound = 1e-10 * max_abs(&rhs).max(1.0) * max_abs(g).max(1.0);
    let x = if res > bound && g.nrows() <= 64 {
        linalg::lyapunov_kronecker(g, &rhs)?
    } else {
        x
    };
    Ok(CorrelationMatrix::new(x, f64::INFINITY))
}

/// `(1 − e^{−d t}) / d`, with the `t` limit for small `d t`.
fn phi1(d: C64, t: f64) -> C64 {
    let x = d * t;
    if x.norm() < 1e-4 {
        c(t, 0.0) * (C64::new(1.0, 0.0) - x * 0.5 + x * x / 6.0)
    } else {
        (C64::new(1.0, 0.0) - (-x).exp()) / d
    }
}

/// Homogeneous part `e^{−Gt} C0 e^{−G†t}`.
fn homogeneous(nh: &NonHermitianSystem, c0: &CMat, t1: f64, t2: f64) -> CMat {
    nh.propagator(t1) * c0 * nh.propagator(t2).adjoint()
}

/// C(t) for a constant source through the eigenbasis of G.
fn constant_q_dynamics(nh: &NonHermitianSystem, q: &CMat, c0: &CMat, times: &[f64]) -> Result<Vec<CorrelationMatrix>> {
    let eps2 = nh.epsilon * nh.epsilon;
    if nh.near_defective {
        return ode_dynamics(nh, q, c0, times);
    }
    let e = &nh.g_eig;
    let n = e.values.len();
    let qt = &e.s_inv * q * e.s_inv.adjoint();
    Ok(times
        .par_iter()
        .map(|&t| {
            let mut x = CMat::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    x[(a, b)] = qt[(a, b)] * phi1(e.values[a] + e.values[b].conj(), t);
                }
            }
            let ct = homogeneous(nh, c0, t, t) + &e.s * x * e.s.adjoint() * c(eps2, 0.0);
            CorrelationMatrix::new(ct, t)
        })
        .collect())
}

/// Adaptive Runge–Kutta integration of the matrix ODE (used for
/// near-defective drift matrices).
fn ode_dynamics(nh: &NonHermitianSystem, q: &CMat, c0: &CMat, times: &[f64]) -> Result<Vec<CorrelationMatrix>> {
    let n = nh.n();
    let g = nh.g.clone();
    let gd = g.adjoint();
    let src = q * c(nh.epsilon * nh.epsilon, 0.0);
    let y0: Vec<C64> = c0.iter().copied().collect();
    let mut grid = vec![0.0];
    grid.extend(times.iter().copied().filter(|&t| t > 0.0));
    let sol = linalg::dopri5(
        |_t, y, dy| {
            let cm = CMat::from_column_slice(n, n, y);
            let d = -(&g * &cm + &cm * &gd) + &src;
            dy.copy_from_slice(d.as_slice());
        },
        &y0,
        &grid,
        1e-12,
        1e-10,
    )?;
    let mut out = Vec::with_capacity(times.len());
    let mut k = 1;
    for &t in times {
        if t <= 0.0 {
            out.push(CorrelationMatrix::new(c0.clone(), t));
        } else {
            out.push(CorrelationMatrix::new(CMat::from_column_slice(n, n, &sol[k]), t));
            k += 1;
        }
    }
    Ok(out)
}

/// First-Markov closed form
/// `C(t) = e^{−Gt}C0e^{−G†t} + ε² ∫dω/2π A(ω,t) F(ω) A(ω,t)†`,
/// `A(ω,t) = (1 − e^{−(G+iω)t})/(G+iω)`.
pub fn first_markov_at(sys: &OpenSystem, nh: &NonHermitianSystem, c0: &CMat, t: f64, cfg: &QuadConfig) -> Result<CorrelationMatrix> {
    first_markov_two_time(sys, nh, c0, t, t, cfg).map(|m| CorrelationMatrix::new(m, t))
}

/// `⟨c†_ℓ(t1) c_m(t2)⟩` at first-Markov level (not Hermitized).
///
/// `C(t1,t2) = e^{−Gt1}C0e^{−G†t2} + ε²∫dω/2π e^{iω(t1−t2)} A(ω,t1) F A(ω,t2)†`.
pub fn first_markov_two_time(sys: &OpenSystem, nh: &NonHermitianSystem, c0: &CMat, t1: f64, t2: f64, cfg: &QuadConfig) -> Result<CMat> {
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let eps2 = nh.epsilon * nh.epsilon;
    let tau = t1 - t2;
    // numerator e^{iωτ}(1 − E_a e^{−iωt1})(1 − Ē_b e^{iωt2}) expanded
    let shifts = [tau, -t2, t1, 0.0];
    let ea: Vec<C64> = lam.iter().map(|l| (-*l * t1).exp()).collect();
    let eb: Vec<C64> = lam.iter().map(|l| (-*l * t2).exp().conj()).collect();
    let coeff = |a: usize, b: usize, j: usize| match j {
        0 => C64::new(1.0, 0.0),
        1 => -ea[a],
        2 => -eb[b],
        _ => ea[a] * eb[b],
    };
    let fallback = |a: usize, b: usize, bath: usize| eng.direct_pair(bath, lam[a], lam[b], t1, t2);
    let noise = eng.noise_block(&shifts, coeff, fallback)?;
    Ok(homogeneous(nh, c0, t1, t2) + noise * c(eps2, 0.0))
}

/// `C(∞) = ε² ∫dω/2π (G+iω)⁻¹ F (G†−iω)⁻¹`.
pub fn ness_first_markov(sys: &OpenSystem, nh: &NonHermitianSystem, cfg: &QuadConfig) -> Result<CorrelationMatrix> {
    check_unique(&nh.g)?;
    let eng = FreqEngine::new(sys, nh, cfg)?;
    let lam = nh.g_eig.values.clone();
    let eps2 = nh.epsilon * nh.epsilon;
    let fallback = |a: usize, b: usize, _bath: usize| -> Result<C64> {
        Err(Error::NonUniqueNess {
            min_re: lam[a].re.min(lam[b].re),
        })
    };
    let noise = eng.noise_block(&[0.0], |_, _, _| C64::new(1.0, 0.0), fallback)?;
    Ok(CorrelationMatrix::new(noise * c(eps2, 0.0), f64::INFINITY))
}

/// Time evolution of C at the requested level on a grid of times ≥ 0.
pub fn solve_differential(
    level: Level,
    sys: &OpenSystem,
    nh: &NonHermitianSystem,
    c0: &CMat,
    times: &[f64],
    cfg: &QuadConfig,
) -> Result<Vec<CorrelationMatrix>> {
    if times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "times",
            reason: "must be finite and non-negative".into(),
        });
    }
    if c0.nrows() != sys.n_sites() || c0.ncols() != sys.n_sites() {
        return Err(Error::NotSquare {
            rows: c0.nrows(),
            cols: c0.ncols(),
        });
    }
    match level {
        Level::FirstMarkov => times
            .par_iter()
            .map(|&t| first_markov_at(sys, nh, c0, t, cfg))
            .collect(),
        Level::LevelI => constant_q_dynamics(nh, &build_q1(sys, nh, cfg)?, c0, times),
        Level::LevelII => constant_q_dynamics(nh, &build_q2(sys, cfg)?, c0, times),
    }
}

/// Steady state at the requested level.
pub fn solve_ness(level: Level, sys: &OpenSystem, nh: &NonHermitianSystem, cfg: &QuadConfig) -> Result<CorrelationMatrix> {
    match level {
        Level::FirstMarkov => ness_first_markov(sys, nh, cfg),
        Level::LevelI => solve_algebraic(&nh.g, &build_q1(sys, nh, cfg)?, sys.epsilon),
        Level::LevelII => solve_algebraic(&nh.g, &build_q2(sys, cfg)?, sys.epsilon),
    }
}
