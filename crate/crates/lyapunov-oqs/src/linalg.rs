//! Dense complex linear-algebra helpers shared by the solver modules.
//!
//! Everything here works on `DMatrix<Complex64>`. The two non-trivial pieces
//! are the eigendecomposition of a general (non-normal) matrix through the
//! complex Schur form, and a Bartels–Stewart solver for `G X + X G^† = R`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Replaces `m` by its Hermitian part and returns the size of the
/// anti-Hermitian part that was discarded.
pub fn hermitize(m: &mut CMat) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            let a = m[(i, j)];
            let b = m[(j, i)].conj();
            defect = defect.max((a - b).norm() * 0.5);
            let avg = (a + b) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
    defect
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut d = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

pub fn is_real(m: &CMat, tol: f64) -> bool {
    m.iter().all(|z| z.im.abs() <= tol)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut h = m.clone();
    hermitize(&mut h);
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_hermitian_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Hermitian eigendecomposition with the deterministic conventions the rest
/// of the crate relies on: eigenvalues ascending, columns inside a degenerate
/// cluster ordered by the index of their largest component, and the phase of
/// every column fixed so that its largest component is real and positive.
///
/// Real symmetric input goes through the real solver so that the returned
/// eigenvectors are exactly real.
pub fn hermitian_eigh(h: &CMat, degeneracy_tol: f64) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let (vals, vecs): (Vec<f64>, CMat) = if is_real(h, 0.0) {
        let hr = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (h[(i, j)].re + h[(j, i)].re));
        let e = nalgebra::SymmetricEigen::new(hr);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors.map(re))
    } else {
        let mut hh = h.clone();
        hermitize(&mut hh);
        let e = nalgebra::SymmetricEigen::new(hh);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };

    let argmax = |col: usize| -> usize {
        let mut best = 0;
        let mut bv = -1.0;
        for i in 0..n {
            // tie-break toward the lower index so the choice is reproducible
            let v = vecs[(i, col)].norm();
            if v > bv * (1.0 + 1e-12) {
                bv = v;
                best = i;
            }
        }
        best
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    // within clusters, order by the position of the dominant component
    let mut k = 0;
    while k < n {
        let mut e = k + 1;
        while e < n && (vals[order[e]] - vals[order[e - 1]]).abs() < degeneracy_tol {
            e += 1;
        }
        order[k..e].sort_by_key(|&col| (argmax(col), col));
        k = e;
    }

    let mut out = CMat::zeros(n, n);
    let mut sorted_vals = Vec::with_capacity(n);
    for (new, &old) in order.iter().enumerate() {
        sorted_vals.push(vals[old]);
        let p = argmax(old);
        let z = vecs[(p, old)];
        let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { re(1.0) };
        let norm = vecs.column(old).norm();
        for i in 0..n {
            out[(i, new)] = vecs[(i, old)] * phase / norm;
        }
    }
    (sorted_vals, out)
}

/// Eigendecomposition `A = S diag(λ) S⁻¹` of a general square matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub s: CMat,
    pub s_inv: CMat,
    /// One-norm condition estimate `‖S‖₁ ‖S⁻¹‖₁` of the eigenvector matrix.
    pub cond: f64,
    /// `max |A S − S Λ|`.
    pub residual: f64,
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Complex Schur form `A = Q T Q†`.
///
/// nalgebra's shifted QR occasionally cycles on matrices with exact
/// structure (a zero eigenvalue of a symmetric chain next to a purely
/// imaginary pair, for instance). A fixed unitary similarity breaks the
/// symmetry; the rotation is undone on `Q`.
pub fn schur(a: &CMat) -> Result<(CMat, CMat)> {
    if let Some(s) = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000) {
        return Ok(s.unpack());
    }
    let n = a.nrows();
    for seed in 1..=3 {
        let k = CMat::from_fn(n, n, |i, j| {
            let x = ((i * 7 + j * 3 + seed * 13) as f64 * 0.37).sin();
            let y = ((i * 5 + j * 11 + seed * 17) as f64 * 0.23).cos();
            c(x, if i == j { 0.0 } else { y })
        });
        let k = (&k + k.adjoint()) * c(0.0, 0.5);
        let u = k.exp();
        let rotated = u.adjoint() * a * &u;
        if let Some(s) = nalgebra::Schur::try_new(rotated, f64::EPSILON, 10_000) {
            let (q, t) = s.unpack();
            return Ok((u * q, t));
        }
    }
    Err(Error::LinearAlgebra("complex Schur iteration did not converge".into()))
}

/// Eigenvalues and eigenvectors through the complex Schur form.
///
/// Eigenvectors of the triangular factor come from back-substitution. When two
/// eigenvalues coincide to machine precision the denominator is nudged, which
/// produces (nearly) parallel columns; the condition estimate then blows up and
/// callers treat the matrix as near-defective.
pub fn eig(a: &CMat) -> Result<EigenDecomposition> {
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            s: CMat::zeros(0, 0),
            s_inv: CMat::zeros(0, 0),
            cond: 1.0,
            residual: 0.0,
        });
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let (q, t) = schur(a)?;
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();

    let tiny = f64::EPSILON * scale;
    let mut x = CMat::zeros(n, n);
    for k in 0..n {
        x[(k, k)] = re(1.0);
        for j in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for i in (j + 1)..=k {
                acc += t[(j, i)] * x[(i, k)];
            }
            let mut d = t[(j, j)] - t[(k, k)];
            if d.norm() < tiny {
                d = re(tiny);
            }
            x[(j, k)] = -acc / d;
        }
    }
    let mut s = &q * &x;
    for k in 0..n {
        let nrm = s.column(k).norm();
        if nrm > 0.0 {
            let mut col = s.column_mut(k);
            col /= re(nrm);
        }
    }
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::LinearAlgebra("eigenvector matrix is singular".into()))?;
    let cond = norm1(&s) * norm1(&s_inv);
    let lam = CMat::from_diagonal(&DVector::from_vec(values.clone()));
    let residual = max_abs(&(a * &s - &s * lam));
    Ok(EigenDecomposition {
        values,
        s,
        s_inv,
        cond,
        residual,
    })
}

/// Solves `G X + X G^† = R` by Bartels–Stewart on the complex Schur form of G.
///
/// Fails with `IllConditioned` when some `t_ii + conj(t_jj)` is (relatively)
/// zero, i.e. when the Lyapunov operator is singular.
pub fn lyapunov_bartels_stewart(g: &CMat, r: &CMat) -> Result<CMat> {
    let n = g.nrows();
    let scale = max_abs(g).max(f64::MIN_POSITIVE);
    let (q, t) = schur(g)?;
    let qa = q.adjoint();
    let rt = &qa * r * &q;
    let mut y = CMat::zeros(n, n);
    let mut gap = f64::INFINITY;
    for i in (0..n).rev() {
        for j in (0..n).rev() {
            let mut acc = rt[(i, j)];
            for k in (i + 1)..n {
                acc -= t[(i, k)] * y[(k, j)];
            }
            for k in (j + 1)..n {
                acc -= y[(i, k)] * t[(j, k)].conj();
            }
            let d = t[(i, i)] + t[(j, j)].conj();
            gap = gap.min(d.norm());
            if d.norm() <= 1e-13 * scale {
                return Err(Error::IllConditioned { gap: d.norm() });
            }
            y[(i, j)] = acc / d;
        }
    }
    let _ = gap;
    Ok(&q * y * qa)
}

/// Reference solver for `G X + X G^† = R` through the N²×N² Kronecker system
/// `(I ⊗ G + conj(G) ⊗ I) vec(X) = vec(R)` (column-major vec).
pub fn lyapunov_kronecker(g: &CMat, r: &CMat) -> Result<CMat> {
    let n = g.nrows();
    let nn = n * n;
    let mut k = CMat::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            // (G X)_{ij} = Σ_m G_im X_mj
            for m in 0..n {
                k[(row, m + j * n)] += g[(i, m)];
            }
            // (X G†)_{ij} = Σ_m X_im conj(G_jm)
            for m in 0..n {
                k[(row, i + m * n)] += g[(j, m)].conj();
            }
        }
    }
    let rhs = DVector::from_iterator(nn, r.iter().copied());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra("Kronecker Lyapunov system is singular".into()))?;
    Ok(CMat::from_iterator(n, n, sol.iter().copied()))
}

/// Matrix exponential by Padé scaling-and-squaring (nalgebra's implementation).
pub fn expm(a: &CMat) -> CMat {
    a.exp()
}

/// Dormand–Prince 5(4) adaptive integrator for `y' = f(t, y)` on complex
/// state vectors. Returns the state at each requested output time.
pub fn dopri5<F>(
    f: F,
    y0: &[C64],
    times: &[f64],
    atol: f64,
    rtol: f64,
) -> Result<Vec<Vec<C64>>>
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // difference between 5th and embedded 4th order weights
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0_f64;
    let mut out = Vec::with_capacity(times.len());
    let mut k: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); n]; 7];
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut ynew = vec![C64::new(0.0, 0.0); n];
    let mut h = 1e-3_f64;
    f(t, &y, &mut k[0]);

    for &target in times {
        if target < t {
            return Err(Error::Integrator("output times must be ascending and >= 0".into()));
        }
        let mut steps = 0usize;
        while t < target {
            steps += 1;
            if steps > 5_000_000 {
                return Err(Error::Integrator("step budget exhausted".into()));
            }
            let hh = h.min(target - t);
            let stage = |coef: &[(usize, f64)], tmp: &mut Vec<C64>, k: &Vec<Vec<C64>>, y: &Vec<C64>| {
                for i in 0..n {
                    let mut acc = y[i];
                    for &(s, a) in coef {
                        acc += k[s][i] * (a * hh);
                    }
                    tmp[i] = acc;
                }
            };
            stage(&[(0, A21)], &mut tmp, &k, &y);
            let (head, tail) = k.split_at_mut(1);
            f(t + 0.2 * hh, &tmp, &mut tail[0]);
            let _ = head;
            stage(&[(0, A31), (1, A32)], &mut tmp, &k, &y);
            f(t + 0.3 * hh, &tmp, &mut k[2]);
            stage(&[(0, A41), (1, A42), (2, A43)], &mut tmp, &k, &y);
            f(t + 0.8 * hh, &tmp, &mut k[3]);
            stage(&[(0, A51), (1, A52), (2, A53), (3, A54)], &mut tmp, &k, &y);
            f(t + 8.0 / 9.0 * hh, &tmp, &mut k[4]);
            stage(&[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &mut tmp, &k, &y);
            f(t + hh, &tmp, &mut k[5]);
            for i in 0..n {
                ynew[i] = y[i]
                    + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * hh;
            }
            f(t + hh, &ynew, &mut k[6]);
            let mut err = 0.0_f64;
            for i in 0..n {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7)
                    * hh;
                let sc = atol + rtol * y[i].norm().max(ynew[i].norm());
                err = err.max(e.norm() / sc);
            }
            if err <= 1.0 || hh < 1e-14 {
                t += hh;
                std::mem::swap(&mut y, &mut ynew);
                let last = k.pop().unwrap();
                k.insert(0, last); // FSAL: k7 becomes k1 of the next step
                k.truncate(7);
                while k.len() < 7 {
                    k.push(vec![C64::new(0.0, 0.0); n]);
                }
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if hh == h {
                    h *= fac;
                } else {
                    h = h.max(hh * fac);
                }
            } else {
                h = hh * (0.9 * err.powf(-0.25)).clamp(0.1, 0.9);
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
