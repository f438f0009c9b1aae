//! `validate`: a seeded random instance run through the solvers and checked
//! against the oracles and the algebraic identities.

use std::path::Path;

use lyapunov_oqs::linalg::{self, c, max_abs, CMat};
use lyapunov_oqs::lyapunov::{self, build_q1, build_q2, first_markov_at, solve_algebraic, solve_differential, Level};
use lyapunov_oqs::model::{build_system, BathAttachment, OpenSystem, Statistics};
use lyapunov_oqs::nonhermitian::NonHermitianSystem;
use lyapunov_oqs::oracle::{discretize_baths, exact_gaussian_evolve, redfield_fock_evolve, BathGrid, FockSpace, MAX_SITES};
use lyapunov_oqs::perturbative::{self, PertOptions};
use lyapunov_oqs::quadrature::QuadConfig;
use lyapunov_oqs::spectral::SpectralFunction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::output::{fmt, Table};
use crate::{Failure, ValidateLevel};

struct Check {
    name: &'static str,
    level: &'static str,
    value: Option<f64>,
    tolerance: f64,
    note: String,
}

impl Check {
    fn passed(&self) -> Option<bool> {
        self.value.map(|v| v <= self.tolerance)
    }
}

/// Random real symmetric H, a Lorentzian bath on the first site and a
/// wide-band bath on the last one.
struct Instance {
    h: CMat,
    lorentzian: (f64, f64, f64, f64, f64),
    wide: (f64, f64, f64),
}

impl Instance {
    fn draw(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = CMat::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = c(rng.gen_range(-1.0..1.0), 0.0);
            for j in 0..i {
                let x = rng.gen_range(-1.0..1.0);
                h[(i, j)] = c(x, 0.0);
                h[(j, i)] = c(x, 0.0);
            }
        }
        let lorentzian = (
            rng.gen_range(0.5..1.5),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(1.0..3.0),
            rng.gen_range(0.5..3.0),
            rng.gen_range(-0.5..0.5),
        );
        let wide = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..3.0), rng.gen_range(-0.5..0.5));
        Instance { h, lorentzian, wide }
    }

    fn generic(&self, eps: f64) -> lyapunov_oqs::Result<OpenSystem> {
        let n = self.h.nrows();
        let (g, c0, w, b, mu) = self.lorentzian;
        let (gw, bw, muw) = self.wide;
        build_system(
            self.h.clone(),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::Lorentzian { gamma: g, center: c0, width: w }, b, mu),
                BathAttachment::fermionic(n - 1, SpectralFunction::WideBand { gamma: gw }, bw, muw),
            ],
            eps,
            Statistics::Fermionic,
        )
    }

    /// Both baths flat, where the first-Markov level is exact at ε = 1.
    fn flat(&self) -> lyapunov_oqs::Result<OpenSystem> {
        let n = self.h.nrows();
        let (g, _, _, b, mu) = self.lorentzian;
        let (gw, bw, muw) = self.wide;
        build_system(
            self.h.clone(),
            vec![
                BathAttachment::fermionic(0, SpectralFunction::WideBand { gamma: g }, b, mu),
                BathAttachment::fermionic(n - 1, SpectralFunction::WideBand { gamma: gw }, bw, muw),
            ],
            1.0,
            Statistics::Fermionic,
        )
    }
}

fn kronecker_check(sys: &OpenSystem, nh: &NonHermitianSystem, q: &CMat) -> lyapunov_oqs::Result<f64> {
    let eps2 = sys.epsilon * sys.epsilon;
    let a = solve_algebraic(&nh.g, q, sys.epsilon)?;
    let k = linalg::lyapunov_kronecker(&nh.g, &(q * c(eps2, 0.0)))?;
    let res = &nh.g * &a.c + &a.c * nh.g.adjoint() - q * c(eps2, 0.0);
    let scale = 1f64.max(eps2 * max_abs(q));
    Ok((max_abs(&res) / scale).max(max_abs(&(&a.c - k))))
}

fn first_level_checks(inst: &Instance, cfg: &QuadConfig, out: &mut Vec<Check>) -> lyapunov_oqs::Result<()> {
    let sys = inst.flat()?;
    let nh = NonHermitianSystem::with_config(&sys, cfg)?;
    let n = sys.n_sites();
    let c0 = CMat::zeros(n, n);
    // 2000 modes per bath over ±20 keeps the band-truncation error near 5e-3
    let grids = vec![
        BathGrid {
            omega_min: -20.0,
            omega_max: 20.0,
            modes: 2000
        };
        2
    ];
    let baths = discretize_baths(&sys, &grids)?;
    let times = [2.0, 5.0, 10.0, 20.0];
    let exact = exact_gaussian_evolve(&sys, &baths, &c0, &times)?;
    let fm = solve_differential(Level::FirstMarkov, &sys, &nh, &c0, &times, cfg)?;
    let err = exact.iter().zip(&fm).map(|(a, b)| max_abs(&(&a.c - &b.c))).fold(0.0, f64::max);
    out.push(Check {
        name: "first-Markov C(t) vs discretized-bath oracle",
        level: "first",
        value: Some(err),
        tolerance: 2e-2,
        note: "flat J, eps = 1, M = 2000 per bath".into(),
    });
    let dense: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let worst = solve_differential(Level::FirstMarkov, &sys, &nh, &c0, &dense, cfg)?
        .iter()
        .map(|c| c.positivity_defect(Statistics::Fermionic))
        .fold(0.0, f64::max);
    out.push(Check {
        name: "first-Markov positivity defect",
        level: "first",
        value: Some(worst),
        tolerance: 1e-10,
        note: "41 times on [0, 20]".into(),
    });
    let late = first_markov_at(&sys, &nh, &c0, 400.0, cfg)?;
    let l1 = lyapunov::solve_ness(Level::LevelI, &sys, &nh, cfg)?;
    out.push(Check {
        name: "first-Markov C(t -> inf) vs level-I NESS",
        level: "first",
        value: Some(max_abs(&(&late.c - &l1.c))),
        tolerance: 1e-7,
        note: "t = 400".into(),
    });
    Ok(())
}

fn level_one_checks(inst: &Instance, cfg: &QuadConfig, out: &mut Vec<Check>) -> lyapunov_oqs::Result<()> {
    let sys = inst.generic(0.5)?;
    let nh = NonHermitianSystem::with_config(&sys, cfg)?;
    let q1 = build_q1(&sys, &nh, cfg)?;
    out.push(Check {
        name: "Lyapunov residual and Kronecker agreement",
        level: "l1",
        value: Some(kronecker_check(&sys, &nh, &q1)?),
        tolerance: 1e-9,
        note: "eps = 0.5".into(),
    });
    let ness = solve_algebraic(&nh.g, &q1, sys.epsilon)?;
    out.push(Check {
        name: "level-I NESS positivity defect",
        level: "l1",
        value: Some(ness.positivity_defect(Statistics::Fermionic)),
        tolerance: 1e-10,
        note: format!("min eig Q1 = {}", fmt(linalg::min_hermitian_eigenvalue(&q1))),
    });
    Ok(())
}

fn level_two_checks(inst: &Instance, cfg: &QuadConfig, out: &mut Vec<Check>) -> lyapunov_oqs::Result<()> {
    let n = inst.h.nrows();
    let sys = inst.generic(0.3)?;
    let nh = NonHermitianSystem::with_config(&sys, cfg)?;
    let q2 = build_q2(&sys, cfg)?;
    out.push(Check {
        name: "Lyapunov residual and Kronecker agreement",
        level: "l2",
        value: Some(kronecker_check(&sys, &nh, &q2)?),
        tolerance: 1e-9,
        note: "eps = 0.3".into(),
    });
    if n <= MAX_SITES {
        let fs = FockSpace::new(n)?;
        let c0 = CMat::from_fn(n, n, |i, j| if i == j { c(0.2 + 0.6 * (i % 2) as f64, 0.0) } else { c(0.0, 0.0) });
        let rho0 = fs.gaussian_state(&c0)?;
        let times: Vec<f64> = (0..20).map(|k| 0.5 * k as f64).collect();
        let run = redfield_fock_evolve(&sys, &nh, &rho0, &times, cfg)?;
        let lyap = solve_differential(Level::LevelII, &sys, &nh, &c0, &times, cfg)?;
        let err = run.c.iter().zip(&lyap).map(|(a, b)| max_abs(&(&a.c - &b.c))).fold(0.0, f64::max);
        out.push(Check {
            name: "Fock-space Redfield vs level-II C(t)",
            level: "l2",
            value: Some(err),
            tolerance: 1e-8,
            note: "20 times on [0, 9.5]".into(),
        });
        out.push(Check {
            name: "Redfield trace defect",
            level: "l2",
            value: Some(run.trace_defect),
            tolerance: 1e-10,
            note: String::new(),
        });
    } else {
        out.push(Check {
            name: "Fock-space Redfield vs level-II C(t)",
            level: "l2",
            value: None,
            tolerance: 1e-8,
            note: format!("skipped: more than {MAX_SITES} sites"),
        });
    }
    let weak = inst.generic(0.01)?;
    let nhw = NonHermitianSystem::with_config(&weak, cfg)?;
    let opts = PertOptions {
        min_margin: 10.0,
        quad: *cfg,
    };
    match perturbative::pert_ness(&weak, &nhw, &opts) {
        Ok(ce) => {
            let full = lyapunov::solve_ness(Level::LevelII, &weak, &nhw, cfg)?;
            let fe = perturbative::to_eigenbasis(&weak, &full.c);
            let rel = max_abs(&(&ce - &fe)) / max_abs(&fe).max(1e-300);
            out.push(Check {
                name: "weak-coupling NESS vs level-II NESS (relative, / eps^2)",
                level: "l2",
                value: Some(rel / 1e-4),
                tolerance: 10.0,
                note: "eps = 0.01".into(),
            });
        }
        Err(e) => out.push(Check {
            name: "weak-coupling NESS vs level-II NESS (relative, / eps^2)",
            level: "l2",
            value: None,
            tolerance: 10.0,
            note: format!("skipped: {e}"),
        }),
    }
    Ok(())
}

pub fn run(level: ValidateLevel, n: usize, seed: u64, out: Option<&Path>, quad_tol: Option<f64>) -> Result<(), Failure> {
    if n == 0 {
        return Err(Failure::config("--n: need at least one site"));
    }
    let mut cfg = QuadConfig::with_tol(1e-12, 1e-11);
    if let Some(t) = quad_tol {
        if !(t > 0.0) {
            return Err(Failure::config(format!("--quad-tol: must be positive, got {t}")));
        }
        cfg.abs_tol = t;
        cfg.rel_tol = t;
    }
    let inst = Instance::draw(n, seed);
    let mut checks = Vec::new();
    let want = |l| level == ValidateLevel::All || level == l;
    if want(ValidateLevel::First) {
        first_level_checks(&inst, &cfg, &mut checks)?;
    }
    if want(ValidateLevel::L1) {
        level_one_checks(&inst, &cfg, &mut checks)?;
    }
    if want(ValidateLevel::L2) {
        level_two_checks(&inst, &cfg, &mut checks)?;
    }

    println!("instance: {n} sites, seed {seed}");
    println!("{:<58} {:<6} {:>12} {:>10}  result", "check", "level", "value", "tolerance");
    let mut table = Table::new(["check", "level", "value", "tolerance", "result", "note"]);
    let mut failed = 0;
    for ch in &checks {
        let result = match ch.passed() {
            Some(true) => "PASS",
            Some(false) => {
                failed += 1;
                "FAIL"
            }
            None => "SKIP",
        };
        let value = ch.value.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:<58} {:<6} {:>12} {:>10.1e}  {result}  {}", ch.name, ch.level, value, ch.tolerance, ch.note);
        table.push(vec![
            ch.name.into(),
            ch.level.into(),
            ch.value.map(fmt).unwrap_or_default(),
            fmt(ch.tolerance),
            result.into(),
            ch.note.clone(),
        ]);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
        table.write(&dir.join("validate.csv"), &format!("lyapunov-oqs validate n={n} seed={seed}"))?;
    }
    if failed > 0 {
        return Err(Failure::numeric(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
