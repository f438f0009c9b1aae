//! Bath spectral functions `J(ω)`, their Hilbert transforms, the noise
//! kernel `F(ω) = J(ω) n(ω)` and the two Markov time scales.
//!
//! Hilbert transforms follow `f^H(ω) = (1/π) PV ∫ f(ω′)/(ω − ω′) dω′`, so that
//! `J + i J^H` is the boundary value of a function analytic in the upper half
//! plane.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{c, C64, I};
use crate::model::{occupation_unchecked, BathAttachment, OpenSystem, Statistics};
use crate::quadrature::{integrate, principal_value, QuadConfig, Range};

/// Shape of one bath's spectral function.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralFunction {
    /// `J(ω) = Γ` on the whole real line.
    WideBand { gamma: f64 },
    /// `J(ω) = γ w² / ((ω − c)² + w²)`, normalised so that `J(c) = γ`.
    Lorentzian { gamma: f64, center: f64, width: f64 },
    /// `J(ω) = coupling · ω^s · e^{−ω/cutoff}` for `ω > 0`, zero otherwise.
    OhmicExp { coupling: f64, cutoff: f64, power: f64 },
    /// Piecewise-linear interpolation of `(omega[i], values[i])`, zero outside.
    Tabulated { omega: Vec<f64>, values: Vec<f64> },
}

impl SpectralFunction {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            SpectralFunction::WideBand { gamma } => *gamma,
            SpectralFunction::Lorentzian { gamma, center, width } => {
                let x = w - center;
                gamma * width * width / (x * x + width * width)
            }
            SpectralFunction::OhmicExp { coupling, cutoff, power } => {
                if w <= 0.0 {
                    0.0
                } else {
                    coupling * w.powf(*power) * (-w / cutoff).exp()
                }
            }
            SpectralFunction::Tabulated { omega, values } => {
                let n = omega.len();
                if !(w >= omega[0] && w <= omega[n - 1]) {
                    return 0.0;
                }
                // first node strictly above w
                let k = omega.partition_point(|&x| x <= w);
                if k == n {
                    return values[n - 1];
                }
                let (x0, x1) = (omega[k - 1], omega[k]);
                let t = (w - x0) / (x1 - x0);
                values[k - 1] * (1.0 - t) + values[k] * t
            }
        }
    }

    /// Closed interval outside of which `J` vanishes identically.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralFunction::WideBand { .. } | SpectralFunction::Lorentzian { .. } => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            SpectralFunction::OhmicExp { .. } => (0.0, f64::INFINITY),
            SpectralFunction::Tabulated { omega, .. } => (omega[0], omega[omega.len() - 1]),
        }
    }

    /// Infimum and supremum of the set where `J > 0`.
    pub fn positive_support(&self) -> (f64, f64) {
        match self {
            SpectralFunction::Tabulated { omega, values } => {
                let n = omega.len();
                let first = values.iter().position(|&v| v > 0.0);
                let last = values.iter().rposition(|&v| v > 0.0);
                match (first, last) {
                    (Some(i), Some(j)) => (omega[i.saturating_sub(1)], omega[(j + 1).min(n - 1)]),
                    _ => (f64::INFINITY, f64::NEG_INFINITY),
                }
            }
            other => other.support(),
        }
    }

    /// Points where `J` has kinks or sharp structure.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            SpectralFunction::WideBand { .. } => vec![],
            SpectralFunction::Lorentzian { center, width, .. } => {
                vec![center - 5.0 * width, center - width, *center, center + width, center + 5.0 * width]
            }
            SpectralFunction::OhmicExp { cutoff, .. } => vec![0.0, *cutoff, 5.0 * cutoff],
            SpectralFunction::Tabulated { omega, .. } => {
                if omega.len() <= 400 {
                    omega.clone()
                } else {
                    let step = omega.len() / 200;
                    let mut v: Vec<f64> = omega.iter().step_by(step).copied().collect();
                    v.push(omega[omega.len() - 1]);
                    v
                }
            }
        }
    }

    /// Window holding the bulk of the spectral weight.
    pub fn window(&self) -> (f64, f64) {
        match self {
            SpectralFunction::WideBand { .. } => (f64::INFINITY, f64::NEG_INFINITY),
            SpectralFunction::Lorentzian { center, width, .. } => (center - 20.0 * width, center + 20.0 * width),
            SpectralFunction::OhmicExp { cutoff, .. } => (0.0, 40.0 * cutoff),
            SpectralFunction::Tabulated { omega, .. } => (omega[0], omega[omega.len() - 1]),
        }
    }

    /// Largest value of `J` (used for the default Markov tolerance).
    pub fn peak(&self) -> f64 {
        match self {
            SpectralFunction::WideBand { gamma } => *gamma,
            SpectralFunction::Lorentzian { gamma, .. } => *gamma,
            SpectralFunction::OhmicExp { coupling, cutoff, power } => {
                // maximum of ω^s e^{−ω/ωc} sits at ω = s·ωc
                let w = power * cutoff;
                coupling * w.powf(*power) * (-w / cutoff).exp()
            }
            SpectralFunction::Tabulated { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// A characteristic inverse time of the bath correlation (its width).
    fn rate_scale(&self) -> (f64, f64) {
        match self {
            SpectralFunction::WideBand { gamma } => (1.0_f64.max(*gamma), 1.0_f64.min(gamma.max(1e-300))),
            SpectralFunction::Lorentzian { width, center, .. } => (width.max(center.abs()), *width),
            SpectralFunction::OhmicExp { cutoff, .. } => (*cutoff, *cutoff),
            SpectralFunction::Tabulated { omega, .. } => {
                let span = omega[omega.len() - 1] - omega[0];
                let edge = omega[0].abs().max(omega[omega.len() - 1].abs());
                let min_step = omega.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
                (span.max(edge).max(1.0 / min_step.max(1e-300)).min(span.max(edge) * 1e3), span)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidParameter { name: "spectral", reason });
        match self {
            SpectralFunction::WideBand { gamma } => {
                if !(*gamma >= 0.0 && gamma.is_finite()) {
                    return bad(format!("wide-band gamma must be finite and >= 0, got {gamma}"));
                }
            }
            SpectralFunction::Lorentzian { gamma, center, width } => {
                if !(*gamma >= 0.0 && gamma.is_finite() && *width > 0.0 && width.is_finite() && center.is_finite()) {
                    return bad("lorentzian needs gamma >= 0, width > 0, finite center".into());
                }
            }
            SpectralFunction::OhmicExp { coupling, cutoff, power } => {
                if !(*coupling >= 0.0 && *cutoff > 0.0 && *power > 0.0 && coupling.is_finite() && cutoff.is_finite()) {
                    return bad("ohmic_exp needs coupling >= 0, cutoff > 0, power > 0".into());
                }
            }
            SpectralFunction::Tabulated { omega, values } => {
                if omega.len() < 2 || omega.len() != values.len() {
                    return bad("tabulated needs at least two (omega, J) pairs of equal length".into());
                }
                if omega.windows(2).any(|p| !(p[1] > p[0])) {
                    return bad("tabulated grid must be strictly increasing".into());
                }
                if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("tabulated values must be finite and nonnegative".into());
                }
            }
        }
        Ok(())
    }
}

/// Reads a two-column `omega,J` CSV (a header row is allowed).
pub fn load_tabulated_csv(path: &Path) -> Result<SpectralFunction> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut omega = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if rec.len() < 2 {
            return Err(Error::Config(format!("{}: row {} needs two columns", path.display(), i + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(w), Ok(j)) => {
                omega.push(w);
                values.push(j);
            }
            _ if i == 0 => continue, // header
            _ => return Err(Error::Config(format!("{}: row {} is not numeric", path.display(), i + 1))),
        }
    }
    let s = SpectralFunction::Tabulated { omega, values };
    s.validate()?;
    Ok(s)
}

/// `J(ω)`.
pub fn eval_j(s: &SpectralFunction, omega: f64) -> f64 {
    s.eval(omega)
}

/// `J^H(ω) = (1/π) PV ∫ J(ω′)/(ω − ω′) dω′`.
pub fn hilbert_transform(s: &SpectralFunction, omega: f64) -> Result<f64> {
    hilbert_transform_with(s, omega, &QuadConfig::default())
}

pub fn hilbert_transform_with(s: &SpectralFunction, omega: f64, cfg: &QuadConfig) -> Result<f64> {
    match s {
        SpectralFunction::WideBand { .. } => Ok(0.0),
        SpectralFunction::Lorentzian { gamma, center, width } => {
            let x = omega - center;
            Ok(gamma * width * x / (x * x + width * width))
        }
        _ => {
            let (lo, hi) = s.support();
            let pv = principal_value(|w| s.eval(w), omega, lo, hi, &s.breakpoints(), cfg)?;
            Ok(pv / PI)
        }
    }
}

/// Diagonal of `F(ω)`, one entry per site.
pub fn eval_f(sys: &OpenSystem, omega: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sys.n_sites()];
    for b in &sys.baths {
        let j = b.spectral.eval(omega);
        if j == 0.0 {
            continue;
        }
        if b.statistics == Statistics::Bosonic && omega <= b.mu {
            return Err(Error::BosonicDivergence { omega, mu: b.mu });
        }
        out[b.site] += j * occupation_unchecked(b.statistics, b.beta, b.mu, omega);
    }
    Ok(out)
}

/// Where a wide-band Fermi step is anchored when splitting off its
/// asymptotes: any finite point works; this one keeps `ln|ω − ω₀|` away from
/// its singularity.
fn step_anchor(bath: &BathAttachment, omega: f64) -> f64 {
    let d = if bath.beta > 0.0 && bath.beta.is_finite() { 1.0 / bath.beta } else { 1.0 };
    if bath.beta.is_infinite() || (omega - bath.mu).abs() >= d {
        bath.mu
    } else {
        bath.mu - d
    }
}

impl BathAttachment {
    /// Hilbert transform of `J n`.
    ///
    /// When `J n` tends to different constants at ±∞ (a wide-band Fermi bath
    /// at finite temperature) the transform diverges like
    /// `(c₋ − c₊) ln Λ / π`. The returned value drops that cutoff term with
    /// the energy unit as reference scale. Every combination the crate builds
    /// from it (the level-II source) multiplies the cutoff term by
    /// `Σ_α Φ*_{ℓα}Φ_{mα} = δ_{ℓm}` against a difference `F^H_ℓ − F^H_m`, so
    /// the choice of scale drops out.
    pub fn noise_hilbert(&self, omega: f64, cfg: &QuadConfig) -> Result<f64> {
        let (cm, cp) = self.noise_asymptotes();
        if cm == 0.0 && cp == 0.0 {
            if let (SpectralFunction::Lorentzian { .. }, true) = (&self.spectral, self.beta == 0.0) {
                // n ≡ 1/2
                return Ok(0.5 * hilbert_transform_with(&self.spectral, omega, cfg)?);
            }
            let (lo, hi) = self.spectral.support();
            let pv = principal_value(|w| self.noise(w), omega, lo, hi, &self.breakpoints(), cfg)?;
            return Ok(pv / PI);
        }
        if cm == cp {
            // constant noise: the transform vanishes
            return Ok(0.0);
        }
        let w0 = step_anchor(self, omega);
        let step = |w: f64| if w < w0 { cm } else { cp };
        let resid = |w: f64| self.noise(w) - step(w);
        let span = 40.0 / self.beta;
        let mut kinks = self.breakpoints();
        kinks.push(w0);
        let (lo, hi) = if self.beta.is_infinite() {
            (w0, w0)
        } else {
            (self.mu.min(w0) - span, self.mu.max(w0) + span)
        };
        let pv = if hi > lo {
            principal_value(resid, omega, lo, hi, &kinks, cfg)?
        } else {
            0.0
        };
        let d = (omega - w0).abs();
        if d == 0.0 {
            return Err(Error::Divergent {
                quantity: "noise Hilbert transform",
                reason: "evaluated exactly at a zero-temperature Fermi edge".into(),
            });
        }
        Ok((pv + (cp - cm) * d.ln()) / PI)
    }
}

/// Markov time scale being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauKind {
    /// decay of `∫ J e^{−iωt} dω/2π` (memory of the damping kernel)
    B1,
    /// decay of `∫ J n e^{iωt} dω/2π` (memory of the noise)
    B2,
}

/// Default tolerance `ε·max J/2π` for the Markov time scale scans.
pub fn default_tau_tolerance(sys: &OpenSystem) -> f64 {
    let jmax = sys.baths.iter().map(|b| b.spectral.peak()).fold(0.0, f64::max);
    sys.epsilon * jmax / (2.0 * PI)
}

/// Per-bath estimate of τ_B1 or τ_B2.
///
/// The kernel modulus is sampled on a log grid (64 points per decade). The
/// estimate is the earliest grid time `t` such that the modulus stays below
/// `tolerance` on every sample in `[t, 10t]`. A kernel that is already below
/// tolerance at the first sample (a wide-band kernel is a pure δ(t)) gives
/// 0. If no such `t` exists before the scan horizon the entry is `+∞`.
pub fn estimate_tau_b(sys: &OpenSystem, kind: TauKind, tolerance: f64) -> Result<Vec<f64>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerance",
            reason: "must be positive".into(),
        });
    }
    sys.baths.iter().map(|b| tau_for_bath(b, kind, tolerance)).collect()
}

fn tau_for_bath(b: &BathAttachment, kind: TauKind, tol: f64) -> Result<f64> {
    let (mut hi_rate, mut lo_rate) = b.spectral.rate_scale();
    if kind == TauKind::B2 && b.beta > 0.0 && b.beta.is_finite() {
        hi_rate = hi_rate.max(PI / b.beta);
        lo_rate = lo_rate.min(PI / b.beta);
    }
    let t_lo = 1e-3 / hi_rate;
    let t_hi = 1e3 / lo_rate.max(1e-12);
    let per_decade = 64.0_f64;
    let decades = (t_hi / t_lo).log10();
    let n = ((decades * per_decade).ceil() as usize).max(2);
    let ts: Vec<f64> = (0..=n)
        .map(|k| t_lo * 10f64.powf(decades * k as f64 / n as f64))
        .collect();
    let mut vals = Vec::with_capacity(ts.len());
    for &t in &ts {
        vals.push(kernel(b, kind, t)?.norm());
    }
    // earliest index i with all samples in [t_i, 10 t_i] below tolerance
    let mut below_run_end = vec![0usize; ts.len()];
    let mut j = ts.len();
    for i in (0..ts.len()).rev() {
        if vals[i] >= tol {
            j = i;
        }
        below_run_end[i] = j; // first index ≥ i that violates
    }
    for i in 0..ts.len() {
        let reach = ts.partition_point(|&t| t <= 10.0 * ts[i] * (1.0 + 1e-12));
        if reach > ts.len() - 1 && 10.0 * ts[i] > ts[ts.len() - 1] * (1.0 + 1e-12) {
            break;
        }
        if below_run_end[i] >= reach {
            return Ok(if i == 0 { 0.0 } else { ts[i] });
        }
    }
    Ok(f64::INFINITY)
}

/// Bath correlation kernels at time `t > 0`.
pub fn kernel(b: &BathAttachment, kind: TauKind, t: f64) -> Result<C64> {
    match (&b.spectral, kind) {
        (SpectralFunction::WideBand { .. }, TauKind::B1) => Ok(c(0.0, 0.0)),
        (SpectralFunction::WideBand { gamma }, TauKind::B2) => {
            // ∫ Γ n(ω) e^{iωt} dω/2π = iΓ e^{iμt} / (2β sinh(πt/β)) for t > 0
            let mag = if b.beta == 0.0 {
                0.0
            } else if b.beta.is_infinite() {
                gamma / (2.0 * PI * t)
            } else {
                let x = PI * t / b.beta;
                if x > 700.0 {
                    0.0
                } else {
                    gamma / (2.0 * b.beta * x.sinh())
                }
            };
            Ok(I * (I * b.mu * t).exp() * mag)
        }
        (SpectralFunction::Lorentzian { gamma, center, width }, TauKind::B1) => {
            Ok((-(I * center + width) * t).exp() * (gamma * width / 2.0))
        }
        (SpectralFunction::Lorentzian { gamma, center, width }, TauKind::B2)
            if b.statistics == Statistics::Fermionic && b.beta.is_finite() =>
        {
            Ok(lorentz_fermi_kernel(*gamma, *center, *width, b.beta, b.mu, t))
        }
        _ => numeric_kernel(b, kind, t),
    }
}

/// Residue sum for `∫ J n e^{iωt} dω/2π` with a Lorentzian `J` and Fermi `n`,
/// closing the contour in the upper half plane.
fn lorentz_fermi_kernel(gamma: f64, c0: f64, w: f64, beta: f64, mu: f64, t: f64) -> C64 {
    let zp = c(c0, w);
    let n_at = |z: C64| C64::new(1.0, 0.0) / ((beta * (z - mu)).exp() + 1.0);
    let mut sum = (I * zp * t).exp() * n_at(zp) * (gamma * w / 2.0);
    if beta == 0.0 {
        return (I * zp * t).exp() * (gamma * w / 4.0);
    }
    let jz = |z: C64| {
        let x = z - c0;
        C64::new(gamma * w * w, 0.0) / (x * x + w * w)
    };
    let mut k = 0usize;
    loop {
        let wk = c(mu, PI * (2 * k + 1) as f64 / beta);
        let term = jz(wk) * (I * wk * t).exp() * (-I / beta);
        sum += term;
        k += 1;
        if term.norm() < 1e-17 * sum.norm().max(1e-300) || k > 2_000_000 {
            break;
        }
    }
    sum
}

fn numeric_kernel(b: &BathAttachment, kind: TauKind, t: f64) -> Result<C64> {
    let (lo, hi) = b.spectral.support();
    let sign = if kind == TauKind::B1 { -1.0 } else { 1.0 };
    let f = |w: f64| -> f64 {
        match kind {
            TauKind::B1 => b.spectral.eval(w),
            TauKind::B2 => b.noise(w),
        }
    };
    let ranges: Vec<Range> = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => vec![Range::Finite(lo, hi)],
        (true, false) => vec![Range::Finite(lo, lo + 40.0 * b.spectral.rate_scale().0), Range::Upper(lo + 40.0 * b.spectral.rate_scale().0)],
        (false, true) => vec![Range::Lower(hi)],
        (false, false) => {
            // algebraic tails oscillate forever under the half-line map, so
            // the line is truncated far out; the dropped part is bounded by
            // J(edge)/t through one integration by parts
            let (a, z) = b.window();
            let pad = 100.0 * (z - a);
            vec![Range::Finite(a - pad, z + pad)]
        }
    };
    let cfg = QuadConfig::with_tol(1e-9, 1e-7);
    let r = integrate(
        |w, out| {
            out[0] = (I * (sign * w * t)).exp() * f(w);
        },
        1,
        &ranges,
        &b.breakpoints(),
        &cfg,
    )?;
    Ok(r.value[0] / (2.0 * PI))
}
