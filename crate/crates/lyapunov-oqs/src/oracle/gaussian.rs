//! Exact quadratic dynamics of the system plus finitely many bath modes.
//!
//! Every bath is replaced by `M` modes on a uniform midpoint grid with
//! `ε²|κ_r|² 2π/Δω = J(Ω_r)`. System and modes together are a closed
//! quadratic model, so `C_tot(t) = Ū C_tot(0) Uᵀ` with `U = e^{−iH_tot t}`
//! is exact; only the system block is returned. The finite grid makes the
//! bath recur after `2π/Δω`, so results are trusted up to half of that.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, C64};
use crate::lyapunov::CorrelationMatrix;
use crate::model::{occupation_function, OpenSystem};
use crate::spectral::SpectralFunction;

/// Largest `N + ΣM` accepted.
pub const MAX_TOTAL_DIMENSION: usize = 20_000;
/// Above this size the system rows of `U` are integrated instead of
/// diagonalising `H_tot`.
pub const DENSE_LIMIT: usize = 1_500;

const KRYLOV: usize = 40;
const LANCZOS_TOL: f64 = 1e-13;

/// Uniform grid for one bath.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BathGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub modes: usize,
}

/// One bath as a finite set of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath {
    pub site: usize,
    /// Mode energies `Ω_r` (cell midpoints).
    pub omega: Vec<f64>,
    /// `κ_r`; the Hamiltonian coupling is `ε κ_r`.
    pub kappa: Vec<f64>,
    /// Initial occupations `n(Ω_r)`.
    pub occupation: Vec<f64>,
    pub epsilon: f64,
    pub d_omega: f64,
}

impl DiscretizedBath {
    /// Discretizes bath `index` of `sys` on `grid`.
    pub fn new(sys: &OpenSystem, index: usize, grid: BathGrid) -> Result<Self> {
        let bath = sys.baths.get(index).ok_or_else(|| Error::InvalidParameter {
            name: "bath",
            reason: format!("no bath with index {index}"),
        })?;
        if !(grid.omega_max > grid.omega_min) || !grid.omega_min.is_finite() || !grid.omega_max.is_finite() || grid.modes == 0 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "need a finite window with omega_max > omega_min and at least one mode".into(),
            });
        }
        if sys.epsilon == 0.0 {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "a discretized bath needs a nonzero coupling".into(),
            });
        }
        let dw = (grid.omega_max - grid.omega_min) / grid.modes as f64;
        let omega: Vec<f64> = (0..grid.modes).map(|r| grid.omega_min + (r as f64 + 0.5) * dw).collect();
        let kappa = omega
            .iter()
            .map(|&w| (bath.spectral.eval(w) * dw / (2.0 * std::f64::consts::PI)).sqrt() / sys.epsilon)
            .collect();
        let occupation = omega.iter().map(|&w| occupation_function(bath, w)).collect::<Result<Vec<_>>>()?;
        Ok(DiscretizedBath {
            site: bath.site,
            omega,
            kappa,
            occupation,
            epsilon: sys.epsilon,
            d_omega: dw,
        })
    }

    pub fn modes(&self) -> usize {
        self.omega.len()
    }

    /// Recurrence time `2π/Δω`.
    pub fn recurrence_time(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.d_omega
    }

    /// `∫|J(ω) − J_M(ω)| dω` over the grid window, where `J_M` is the
    /// reconstruction `2π ε² Σ_r |κ_r|² δ(ω − Ω_r)` binned on the grid cells.
    pub fn reconstruction_l1_error(&self, spectral: &SpectralFunction) -> f64 {
        // |J − J_M| has a kink inside each cell, so a plain midpoint rule
        // on sub-cells is as good as anything fancier
        const SUB: usize = 64;
        let h = self.d_omega / SUB as f64;
        let mut err = 0.0;
        for (r, &mid) in self.omega.iter().enumerate() {
            let binned = 2.0 * std::f64::consts::PI * self.epsilon * self.epsilon * self.kappa[r] * self.kappa[r] / self.d_omega;
            let lo = mid - 0.5 * self.d_omega;
            for k in 0..SUB {
                err += h * (spectral.eval(lo + (k as f64 + 0.5) * h) - binned).abs();
            }
        }
        err
    }
}

/// Discretizes every bath of `sys` on the matching grid.
pub fn discretize_baths(sys: &OpenSystem, grids: &[BathGrid]) -> Result<Vec<DiscretizedBath>> {
    if grids.len() != sys.baths.len() {
        return Err(Error::InvalidParameter {
            name: "grids",
            reason: format!("{} grids for {} baths", grids.len(), sys.baths.len()),
        });
    }
    grids.iter().enumerate().map(|(i, g)| DiscretizedBath::new(sys, i, *g)).collect()
}

struct Total<'a> {
    n: usize,
    h_s: &'a CMat,
    baths: &'a [DiscretizedBath],
    /// offset of each bath's first mode in the total index space
    offsets: Vec<usize>,
    dim: usize,
}

impl<'a> Total<'a> {
    fn new(sys: &'a OpenSystem, baths: &'a [DiscretizedBath]) -> Result<Self> {
        let n = sys.n_sites();
        let mut offsets = Vec::with_capacity(baths.len());
        let mut dim = n;
        for b in baths {
            if b.site >= n {
                return Err(Error::SiteOutOfRange { site: b.site, n_sites: n });
            }
            offsets.push(dim);
            dim += b.modes();
        }
        if dim > MAX_TOTAL_DIMENSION {
            return Err(Error::DimensionTooLarge {
                n_tot: dim,
                limit: MAX_TOTAL_DIMENSION,
            });
        }
        Ok(Total {
            n,
            h_s: &sys.hamiltonian.h,
            baths,
            offsets,
            dim,
        })
    }

    fn dense(&self) -> CMat {
        let mut h = CMat::zeros(self.dim, self.dim);
        h.view_mut((0, 0), (self.n, self.n)).copy_from(self.h_s);
        for (b, &off) in self.baths.iter().zip(&self.offsets) {
            for r in 0..b.modes() {
                let g = b.epsilon * b.kappa[r];
                h[(off + r, off + r)] = c(b.omega[r], 0.0);
                h[(b.site, off + r)] = c(g, 0.0);
                h[(off + r, b.site)] = c(g, 0.0);
            }
        }
        h
    }

    /// `out = H̄ x`, using the star structure.
    fn apply(&self, x: &[C64], out: &mut [C64]) {
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..self.n {
                acc += self.h_s[(i, j)].conj() * x[j];
            }
            out[i] = acc;
        }
        for (b, &off) in self.baths.iter().zip(&self.offsets) {
            let s = b.site;
            let mut to_site = C64::new(0.0, 0.0);
            for r in 0..b.modes() {
                let g = b.epsilon * b.kappa[r];
                out[off + r] = x[off + r] * b.omega[r] + x[s] * g;
                to_site += x[off + r] * g;
            }
            out[s] += to_site;
        }
    }

    /// `e^{−iH̄τ} x` over a single chunk by a Lanczos projection onto
    /// `KRYLOV` vectors. Returns the propagated vector and the usual a
    /// posteriori error indicator `β_m |(e^{−iTτ} e₁)_m|`.
    fn lanczos_step(&self, x: &[C64], tau: f64) -> (Vec<C64>, f64) {
        let dim = x.len();
        let norm0 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return (x.to_vec(), 0.0);
        }
        let mut q: Vec<Vec<C64>> = vec![x.iter().map(|z| z / norm0).collect()];
        let mut alpha = Vec::with_capacity(KRYLOV);
        let mut beta: Vec<f64> = Vec::with_capacity(KRYLOV);
        let mut w = vec![C64::new(0.0, 0.0); dim];
        let mut last_beta = 0.0;
        for j in 0..KRYLOV {
            self.apply(&q[j], &mut w);
            let a: f64 = q[j].iter().zip(&w).map(|(u, v)| (u.conj() * v).re).sum();
            for i in 0..dim {
                w[i] -= q[j][i] * a;
                if j > 0 {
                    w[i] -= q[j - 1][i] * beta[j - 1];
                }
            }
            alpha.push(a);
            let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            last_beta = b;
            if b < 1e-13 * norm0.max(1.0) || j + 1 == KRYLOV {
                break;
            }
            beta.push(b);
            q.push(w.iter().map(|z| z / b).collect());
        }
        let m = alpha.len();
        let t = nalgebra::DMatrix::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let e = nalgebra::SymmetricEigen::new(t);
        // coefficients e^{−iTτ} e₁ = S e^{−iΘτ} Sᵀ e₁
        let coef: Vec<C64> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|k| c(0.0, -e.eigenvalues[k] * tau).exp() * (e.eigenvectors[(i, k)] * e.eigenvectors[(0, k)]))
                    .sum::<C64>()
            })
            .collect();
        let mut y = vec![C64::new(0.0, 0.0); dim];
        for (qi, ci) in q.iter().zip(&coef) {
            let s = ci * norm0;
            for i in 0..dim {
                y[i] += qi[i] * s;
            }
        }
        let est = if m < KRYLOV { 0.0 } else { last_beta * coef[m - 1].norm() * norm0 };
        (y, est)
    }

    /// `e^{−iH̄t} x` at each requested time (ascending). The chunk length
    /// adapts to the error indicator: halved on failure, grown by a quarter
    /// when comfortably inside `LANCZOS_TOL`.
    fn propagate(&self, x0: &[C64], times: &[f64]) -> Vec<Vec<C64>> {
        let mut chunk: f64 = 0.5;
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            while t < target {
                let tau = chunk.min(target - t);
                let (y, est) = self.lanczos_step(&x, tau);
                if est > LANCZOS_TOL && tau > 1e-12 {
                    chunk = 0.5 * tau;
                    continue;
                }
                x = y;
                t += tau;
                if est < 0.1 * LANCZOS_TOL && tau == chunk {
                    chunk *= 1.25;
                }
            }
            out.push(x.clone());
        }
        out
    }

    /// Diagonal of the initial total correlation matrix beyond the system.
    fn bath_occupations(&self) -> Vec<f64> {
        self.baths.iter().flat_map(|b| b.occupation.iter().copied()).collect()
    }
}

fn check_times(times: &[f64], baths: &[DiscretizedBath]) -> Result<()> {
    let t_rec = baths.iter().map(|b| b.recurrence_time()).fold(f64::INFINITY, f64::min);
    for w in times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "must be ascending".into(),
            });
        }
    }
    for &t in times {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "times",
                reason: "must be non-negative".into(),
            });
        }
        if t > 0.5 * t_rec {
            return Err(Error::RecurrenceHorizon { t, t_rec });
        }
    }
    Ok(())
}

/// System block of the exact correlation matrix at each time.
///
/// `C_S(t) = R̄ C_tot(0) Rᵀ` where `R` holds the system rows of `U`. Small
/// totals diagonalise `H_tot`; large ones propagate the columns of `Rᵀ`
/// with short Lanczos steps over the sparse star-shaped `H_tot`, which costs
/// `O(N·N_tot)` per matrix-vector product instead of an `N_tot³`
/// factorisation.
pub fn exact_gaussian_evolve(sys: &OpenSystem, baths: &[DiscretizedBath], c0: &CMat, times: &[f64]) -> Result<Vec<CorrelationMatrix>> {
    evolve_with(sys, baths, c0, times, None)
}

/// As [`exact_gaussian_evolve`] with the propagation method forced
/// (`Some(true)` dense, `Some(false)` row integration).
pub(crate) fn evolve_with(sys: &OpenSystem, baths: &[DiscretizedBath], c0: &CMat, times: &[f64], dense: Option<bool>) -> Result<Vec<CorrelationMatrix>> {
    let tot = Total::new(sys, baths)?;
    check_c0(c0, tot.n)?;
    check_times(times, baths)?;
    let nb = tot.bath_occupations();
    let rows: Vec<CMat> = if dense.unwrap_or(tot.dim <= DENSE_LIMIT) {
        let (vals, vecs) = linalg::hermitian_eigh(&tot.dense(), 0.0);
        let vs = vecs.rows(0, tot.n).into_owned();
        let vh = vecs.adjoint();
        times
            .par_iter()
            .map(|&t| {
                let mut left = vs.clone();
                for (k, &l) in vals.iter().enumerate() {
                    let ph = c(0.0, -l * t).exp();
                    for i in 0..tot.n {
                        left[(i, k)] *= ph;
                    }
                }
                left * &vh
            })
            .collect()
    } else {
        // column i of Rᵀ is e^{−iH̄t} e_i
        let cols: Vec<Vec<Vec<C64>>> = (0..tot.n)
            .into_par_iter()
            .map(|i| {
                let mut y0 = vec![C64::new(0.0, 0.0); tot.dim];
                y0[i] = c(1.0, 0.0);
                tot.propagate(&y0, times)
            })
            .collect();
        (0..times.len())
            .map(|k| CMat::from_fn(tot.n, tot.dim, |i, j| cols[i][k][j]))
            .collect()
    };
    Ok(rows
        .iter()
        .zip(times)
        .map(|(r, &t)| {
            let rs = r.columns(0, tot.n);
            let mut cs = rs.map(|z| z.conj()) * c0 * rs.transpose();
            for (j, &n) in nb.iter().enumerate() {
                let col = r.column(tot.n + j);
                for a in 0..tot.n {
                    let ra = col[a].conj() * n;
                    for b in 0..tot.n {
                        cs[(a, b)] += ra * col[b];
                    }
                }
            }
            CorrelationMatrix::new(cs, t)
        })
        .collect())
}

/// Full `C_tot(t)` by dense diagonalisation (small totals only); used to
/// check conservation laws of the oracle itself.
pub fn exact_gaussian_evolve_full(sys: &OpenSystem, baths: &[DiscretizedBath], c0: &CMat, times: &[f64]) -> Result<Vec<CMat>> {
    let tot = Total::new(sys, baths)?;
    if tot.dim > DENSE_LIMIT {
        return Err(Error::DimensionTooLarge {
            n_tot: tot.dim,
            limit: DENSE_LIMIT,
        });
    }
    check_c0(c0, tot.n)?;
    check_times(times, baths)?;
    let mut ctot = CMat::zeros(tot.dim, tot.dim);
    ctot.view_mut((0, 0), (tot.n, tot.n)).copy_from(c0);
    for (j, n) in tot.bath_occupations().into_iter().enumerate() {
        ctot[(tot.n + j, tot.n + j)] = c(n, 0.0);
    }
    let (vals, vecs) = linalg::hermitian_eigh(&tot.dense(), 0.0);
    Ok(times
        .iter()
        .map(|&t| {
            let mut u = vecs.clone();
            for (k, &l) in vals.iter().enumerate() {
                let ph = c(0.0, -l * t).exp();
                for i in 0..tot.dim {
                    u[(i, k)] *= ph;
                }
            }
            let u = u * vecs.adjoint();
            u.map(|z| z.conj()) * &ctot * u.transpose()
        })
        .collect())
}

fn check_c0(c0: &CMat, n: usize) -> Result<()> {
    if c0.nrows() != n || c0.ncols() != n {
        return Err(Error::InvalidParameter {
            name: "c0",
            reason: format!("expected a {n}x{n} matrix, got {}x{}", c0.nrows(), c0.ncols()),
        });
    }
    Ok(())
}
