//! Adaptive Gauss–Kronrod quadrature for vector-valued complex integrands,
//! principal-value integrals, and the analytic half-line integrals that close
//! off frequency integrals whose noise kernel tends to a nonzero constant.
//!
//! The adaptive driver is globally adaptive in the QUADPACK sense: the interval
//! with the largest error estimate is bisected until the summed estimate falls
//! under `max(abs_tol, rel_tol·‖I‖)`. Ties are broken by creation order so a
//! run is a deterministic function of its inputs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::linalg::{C64, I};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances and limits for the adaptive driver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_intervals: 200_000,
        }
    }
}

impl QuadConfig {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadConfig {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

/// Result of a vector integration.
#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: Vec<C64>,
    /// Estimated absolute error (max over components).
    pub error: f64,
    pub intervals: usize,
}

/// The integration variable is transformed so that every piece handed to the
/// adaptive driver is a finite interval.
#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// ω = a + (1 − x)/x on x ∈ (0, 1]
    Upper(f64),
    /// ω = b − (1 − x)/x on x ∈ (0, 1]
    Lower(f64),
}

impl Map {
    #[inline]
    fn apply(self, x: f64) -> (f64, f64) {
        match self {
            Map::Identity => (x, 1.0),
            Map::Upper(a) => (a + (1.0 - x) / x, 1.0 / (x * x)),
            Map::Lower(b) => (b - (1.0 - x) / x, 1.0 / (x * x)),
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    map: Map,
    value: Vec<C64>,
    error: f64,
    /// error estimate is pinned at the rounding floor; splitting won't help
    floor: bool,
    order: usize,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct Workspace {
    fv: Vec<Vec<C64>>,
}

fn gk21<F>(f: &F, a: f64, b: f64, map: Map, dim: usize, ws: &mut Workspace) -> (Vec<C64>, f64, bool)
where
    F: Fn(f64, &mut [C64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    if ws.fv.len() < 21 {
        ws.fv = vec![vec![C64::new(0.0, 0.0); dim]; 21];
    }
    for v in ws.fv.iter_mut() {
        v.clear();
        v.resize(dim, C64::new(0.0, 0.0));
    }
    // node 0: center; 1..=10: center - half*x; 11..=20: center + half*x
    let eval = |x: f64, out: &mut Vec<C64>| {
        let (w, jac) = map.apply(x);
        f(w, out);
        if jac != 1.0 {
            for z in out.iter_mut() {
                *z *= jac;
            }
        }
    };
    eval(center, &mut ws.fv[0]);
    for j in 0..10 {
        let dx = half * XGK[j];
        let (lo, hi) = ws.fv.split_at_mut(11 + j);
        eval(center - dx, &mut lo[1 + j]);
        eval(center + dx, &mut hi[0]);
    }
    let mut kron = vec![C64::new(0.0, 0.0); dim];
    let mut err = 0.0_f64;
    let mut floor = true;
    for c in 0..dim {
        let fc = ws.fv[0][c];
        let mut rk = fc * WGK[10];
        let mut rg = C64::new(0.0, 0.0);
        let mut rabs = fc.norm() * WGK[10];
        for j in 0..10 {
            let s = ws.fv[1 + j][c] + ws.fv[11 + j][c];
            rk += s * WGK[j];
            rabs += (ws.fv[1 + j][c].norm() + ws.fv[11 + j][c].norm()) * WGK[j];
            if j % 2 == 1 {
                rg += s * WG[j / 2];
            }
        }
        let mean = rk * 0.5;
        let mut rasc = (fc - mean).norm() * WGK[10];
        for j in 0..10 {
            rasc += ((ws.fv[1 + j][c] - mean).norm() + (ws.fv[11 + j][c] - mean).norm()) * WGK[j];
        }
        let h = half.abs();
        let raw = ((rk - rg) * half).norm();
        let rasc = rasc * h;
        let rabs = rabs * h;
        let mut e = raw;
        if rasc != 0.0 && raw != 0.0 {
            e = rasc * (200.0 * raw / rasc).powf(1.5).min(1.0);
        }
        let fl = 50.0 * f64::EPSILON * rabs;
        if rabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && fl >= e {
            e = fl;
        } else if e > 0.0 {
            floor = false;
        }
        err = err.max(e);
        kron[c] = rk * half;
    }
    (kron, err, floor)
}

/// A finite or semi-infinite piece of the real line.
#[derive(Debug, Clone, Copy)]
pub enum Range {
    Finite(f64, f64),
    /// [a, ∞)
    Upper(f64),
    /// (−∞, b]
    Lower(f64),
}

/// Integrates the vector function `f` (which writes `dim` components) over the
/// union of `ranges`, each optionally pre-split at `breaks`.
pub fn integrate<F>(f: F, dim: usize, ranges: &[Range], breaks: &[f64], cfg: &QuadConfig) -> Result<QuadResult>
where
    F: Fn(f64, &mut [C64]),
{
    let mut ws = Workspace { fv: Vec::new() };
    let mut heap = BinaryHeap::new();
    let mut order = 0usize;
    let mut total = vec![C64::new(0.0, 0.0); dim];
    let mut total_err = 0.0;

    let mut push = |a: f64, b: f64, map: Map, heap: &mut BinaryHeap<Piece>, total: &mut Vec<C64>, total_err: &mut f64, ws: &mut Workspace| {
        let (value, error, floor) = gk21(&f, a, b, map, dim, ws);
        for (t, v) in total.iter_mut().zip(&value) {
            *t += v;
        }
        *total_err += error;
        heap.push(Piece { a, b, map, value, error, floor, order });
        order += 1;
    };

    for r in ranges {
        match *r {
            Range::Finite(a, b) => {
                if !(b > a) {
                    continue;
                }
                let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
                pts.sort_by(|x, y| x.total_cmp(y));
                pts.dedup();
                let mut lo = a;
                for p in pts.into_iter().chain(std::iter::once(b)) {
                    if p - lo > 1e-14 * (1.0 + lo.abs()) {
                        push(lo, p, Map::Identity, &mut heap, &mut total, &mut total_err, &mut ws);
                        lo = p;
                    }
                }
            }
            Range::Upper(a) => {
                // map splits at x = 1/2 (ω = a + 1) and x = 1/8 (ω = a + 7)
                for (lo, hi) in [(0.0, 0.125), (0.125, 0.5), (0.5, 1.0)] {
                    push(lo, hi, Map::Upper(a), &mut heap, &mut total, &mut total_err, &mut ws);
                }
            }
            Range::Lower(b) => {
                for (lo, hi) in [(0.0, 0.125), (0.125, 0.5), (0.5, 1.0)] {
                    push(lo, hi, Map::Lower(b), &mut heap, &mut total, &mut total_err, &mut ws);
                }
            }
        }
    }

    loop {
        let norm = total.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let target = cfg.abs_tol.max(cfg.rel_tol * norm);
        if total_err <= target || heap.is_empty() {
            return Ok(QuadResult {
                value: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= cfg.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                requested: target,
            });
        }
        let worst = heap.pop().unwrap();
        if worst.floor {
            // every remaining estimate is at the rounding level
            heap.push(worst);
            return Ok(QuadResult {
                value: total,
                error: total_err,
                intervals: heap.len(),
            });
        }
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // cannot split any further; accept the estimate as is
            return Err(Error::QuadratureNonConvergence {
                achieved: total_err,
                requested: target,
            });
        }
        for (t, v) in total.iter_mut().zip(&worst.value) {
            *t -= v;
        }
        total_err -= worst.error;
        push(worst.a, mid, worst.map, &mut heap, &mut total, &mut total_err, &mut ws);
        push(mid, worst.b, worst.map, &mut heap, &mut total, &mut total_err, &mut ws);
        // guard against the running error drifting negative through cancellation
        if total_err < 0.0 {
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
}

/// Scalar real integral over one range.
pub fn integrate_real<F>(f: F, range: Range, breaks: &[f64], cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let r = integrate(|x, out| out[0] = C64::new(f(x), 0.0), 1, &[range], breaks, cfg)?;
    Ok(r.value[0].re)
}

/// Principal value `PV ∫ f(x)/(pole − x) dx` over `[a, b]` (either bound may
/// be infinite). The symmetric neighbourhood of the pole is folded so that the
/// integrand `(f(pole − s) − f(pole + s))/s` is regular; `kinks` are points
/// where `f` is not smooth and are honoured as breakpoints on both sides.
pub fn principal_value<F>(f: F, pole: f64, a: f64, b: f64, kinks: &[f64], cfg: &QuadConfig) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let g = |x: f64| f(x) / (pole - x);
    let plain = |lo: f64, hi: f64| -> Result<f64> {
        if !(hi > lo) {
            return Ok(0.0);
        }
        let range = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => Range::Finite(lo, hi),
            (true, false) => Range::Upper(lo),
            (false, true) => Range::Lower(hi),
            (false, false) => {
                let a = integrate_real(g, Range::Lower(0.0), kinks, cfg)?;
                let b = integrate_real(g, Range::Upper(0.0), kinks, cfg)?;
                return Ok(a + b);
            }
        };
        integrate_real(g, range, kinks, cfg)
    };
    if !(pole > a && pole < b) {
        return plain(a, b);
    }
    let mut delta = (pole - a).min(b - pole);
    if !delta.is_finite() {
        delta = 1.0 + pole.abs();
    }
    let sbreaks: Vec<f64> = kinks
        .iter()
        .map(|&k| (k - pole).abs())
        .filter(|&s| s > 0.0 && s < delta)
        .collect();
    let folded = integrate_real(
        |s| (f(pole - s) - f(pole + s)) / s,
        Range::Finite(0.0, delta),
        &sbreaks,
        cfg,
    )?;
    Ok(folded + plain(a, pole - delta)? + plain(pole + delta, b)?)
}

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_43;

/// Scaled exponential integral `e^w E₁(w)` on the principal branch (cut along
/// the negative real axis, upper-side value on the cut).
pub fn expint_e1_scaled(w: C64) -> C64 {
    let mut w = w;
    if w.im == 0.0 {
        w.im = 0.0; // normalise −0.0 so the log picks the upper side of the cut
    }
    let r = w.norm();
    // The series loses roughly e^{|w| + Re w} to cancellation, so it is only
    // used near the origin or close to the negative real axis.
    let use_series = r <= 2.0 || (r + w.re <= 3.0 && r <= 60.0);
    if use_series {
        // E1(w) = −γ − ln w − Σ_{k≥1} (−w)^k / (k·k!)
        let mut sum = C64::new(0.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for k in 1..400 {
            term *= -w / (k as f64);
            let add = term / (k as f64);
            sum += add;
            if add.norm() <= 1e-17 * sum.norm().max(1e-300) {
                break;
            }
        }
        let e1 = -EULER_GAMMA - w.ln() - sum;
        return e1 * w.exp();
    }
    // continued fraction (modified Lentz):
    // e^w E1(w) = 1/(w+1− 1/(w+3− 4/(w+5− …)))
    let tiny = C64::new(1e-300, 0.0);
    let mut b = w + 1.0;
    let mut cc = C64::new(1.0 / 1e-300, 0.0);
    let mut d = C64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..20_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = C64::new(1.0, 0.0) / (d * an + b);
        cc = b + C64::new(an, 0.0) / cc;
        if cc.norm() < 1e-300 {
            cc = tiny;
        }
        let del = cc * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    h
}

/// Which half-line a tail integral covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// (−∞, ω₀]
    Lower,
    /// [ω₀, ∞)
    Upper,
}

/// `∫_tail e^{iωs} / (z + iω) dω` for `Re z ≥ 0`.
///
/// For `s ≠ 0` the integral converges (conditionally) and is expressed through
/// `E₁`. For `s = 0` it diverges logarithmically; the returned value drops the
/// `±i ln L` cutoff term. That term is the same for every `z`, and every
/// physical combination assembled in this crate cancels it (it always appears
/// as an anti-Hermitian multiple of a diagonal projector, or in a pair
/// `1/(z+iω) + 1/(z'−iω)`).
pub fn tail_plus(s: f64, z: C64, omega0: f64, tail: Tail) -> C64 {
    let u0 = z + I * omega0;
    if s == 0.0 {
        let l = u0.ln();
        return match tail {
            Tail::Lower => -I * l + std::f64::consts::FRAC_PI_2,
            Tail::Upper => I * l + std::f64::consts::FRAC_PI_2,
        };
    }
    let mut w = -u0 * s;
    if w.im == 0.0 {
        w.im = 0.0;
    }
    let eval = I * (I * s * omega0).exp() * expint_e1_scaled(w);
    if s < 0.0 {
        return match tail {
            Tail::Lower => eval,
            Tail::Upper => -eval,
        };
    }
    let full = (-z * s).exp() * (2.0 * std::f64::consts::PI);
    if u0.im > 0.0 {
        match tail {
            Tail::Upper => -eval,
            Tail::Lower => full + eval,
        }
    } else {
        match tail {
            Tail::Lower => eval,
            Tail::Upper => full - eval,
        }
    }
}

/// `∫_tail e^{iωs} / (z − iω) dω`, obtained from [`tail_plus`] by ω → −ω.
pub fn tail_minus(s: f64, z: C64, omega0: f64, tail: Tail) -> C64 {
    let flipped = match tail {
        Tail::Lower => Tail::Upper,
        Tail::Upper => Tail::Lower,
    };
    tail_plus(-s, z, -omega0, flipped)
}
