//! One function per subcommand. Each writes its CSV(s) and a
//! `diagnostics.json`; the manifest is already on disk when they run.

use lyapunov_oqs::linalg::{self, CMat};
use lyapunov_oqs::lyapunov::{self, build_q, CorrelationMatrix, InhomogeneitySource, Level};
use lyapunov_oqs::model::OpenSystem;
use lyapunov_oqs::nonhermitian::{NonHermitianSystem, NEAR_DEFECTIVE_COND};
use lyapunov_oqs::observables;
use lyapunov_oqs::perturbative::{self, PertOptions};
use lyapunov_oqs::regression;
use lyapunov_oqs::spectral::{default_tau_tolerance, estimate_tau_b, TauKind};
use serde_json::{json, Map, Value};

use crate::config::Resolved;
use crate::output::{self, fmt, Table};
use crate::Failure;

pub fn dispatch(name: &str, r: &Resolved) -> Result<(), Failure> {
    match name {
        "ness" => ness(r),
        "dynamics" => dynamics(r),
        "two-time" => two_time(r),
        "pert-ness" => pert_ness(r),
        "resonant-level" => resonant_level(r),
        "chain-current" => chain_current(r),
        "conductance" => conductance(r),
        other => Err(Failure::config(format!("unknown subcommand {other}"))),
    }
}

fn level_name(l: Level) -> &'static str {
    match l {
        Level::FirstMarkov => "first",
        Level::LevelI => "l1",
        Level::LevelII => "l2",
    }
}

/// Drift spectrum, Markov time scales and the quadrature settings; shared by
/// every subcommand that has a system.
fn base_diagnostics(r: &Resolved, sys: &OpenSystem, nh: &NonHermitianSystem) -> Map<String, Value> {
    let mut d = Map::new();
    d.insert("status".into(), json!("ok"));
    d.insert("level".into(), json!(level_name(r.level)));
    d.insert("min_re_lambda".into(), json!(nh.min_re_lambda()));
    d.insert("eigenvector_condition".into(), json!(nh.g_eig.cond));
    d.insert("eigen_residual".into(), json!(nh.g_eig.residual));
    d.insert("near_defective".into(), json!(nh.near_defective));
    d.insert("near_defective_threshold".into(), json!(NEAR_DEFECTIVE_COND));
    let tol = default_tau_tolerance(sys);
    let tau = |k| match estimate_tau_b(sys, k, tol) {
        // ∞ has no JSON spelling; serialize it as a string
        Ok(v) => json!(v.iter().map(|&x| if x.is_finite() { json!(x) } else { json!("inf") }).collect::<Vec<_>>()),
        Err(e) => json!(e.to_string()),
    };
    d.insert("tau_b1".into(), tau(TauKind::B1));
    d.insert("tau_b2".into(), tau(TauKind::B2));
    d.insert("tau_tolerance".into(), json!(tol));
    d.insert(
        "quadrature".into(),
        json!({
            "abs_tol": r.quad.abs_tol,
            "rel_tol": r.quad.rel_tol,
            "max_intervals": r.quad.max_intervals,
            "note": "every adaptive integral met these tolerances or the run failed with exit status 3",
        }),
    );
    d
}

fn write_diagnostics(r: &Resolved, d: Map<String, Value>) -> Result<(), Failure> {
    output::write_json(&r.out.join("diagnostics.json"), &Value::Object(d))
}

fn positivity(c: &CorrelationMatrix, sys: &OpenSystem) -> Value {
    json!({
        "t": if c.t.is_finite() { json!(c.t) } else { json!("inf") },
        "min_eig": c.min_eig,
        "max_eig": c.max_eig,
        "defect": c.positivity_defect(sys.statistics),
        "hermitian_defect": c.hermitian_defect,
    })
}

fn spectrum_csv(r: &Resolved, nh: &NonHermitianSystem, comment: &str) -> Result<(), Failure> {
    let mut t = Table::new(["a", "Re_lambda", "Im_lambda"]);
    for (a, l) in nh.lambdas().iter().enumerate() {
        t.push(vec![a.to_string(), fmt(l.re), fmt(l.im)]);
    }
    t.write(&r.out.join("spectrum.csv"), comment)
}

fn setup(r: &Resolved, command: &str) -> Result<(OpenSystem, NonHermitianSystem, String), Failure> {
    let sys = r.sys()?.clone();
    let nh = NonHermitianSystem::with_config(&sys, &r.quad)?;
    let comment = output::comment(command, r);
    spectrum_csv(r, &nh, &comment)?;
    Ok((sys, nh, comment))
}

fn correlation_table(n: usize) -> Table {
    let mut h = vec!["t".to_string()];
    h.extend(output::upper_triangle_header("C", n));
    h.push("min_eig".into());
    h.push("positivity_defect".into());
    Table::new(h)
}

fn correlation_row(c: &CorrelationMatrix, sys: &OpenSystem) -> Vec<String> {
    let mut row = vec![fmt(c.t)];
    row.extend(output::upper_triangle_values(&c.c));
    row.push(fmt(c.min_eig));
    row.push(fmt(c.positivity_defect(sys.statistics)));
    row
}

fn q_min_eig(r: &Resolved, sys: &OpenSystem, nh: &NonHermitianSystem) -> Value {
    match build_q(r.level, sys, nh, &r.quad) {
        Ok(InhomogeneitySource::LevelI(q)) | Ok(InhomogeneitySource::LevelII(q)) => json!(linalg::min_hermitian_eigenvalue(&q)),
        _ => Value::Null,
    }
}

fn ness(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "ness")?;
    let c = lyapunov::solve_ness(r.level, &sys, &nh, &r.quad)?;
    let mut t = correlation_table(sys.n_sites());
    t.push(correlation_row(&c, &sys));
    t.write(&r.out.join("ness.csv"), &comment)?;
    let mut d = base_diagnostics(r, &sys, &nh);
    d.insert("positivity".into(), positivity(&c, &sys));
    d.insert("q_min_eig".into(), q_min_eig(r, &sys, &nh));
    write_diagnostics(r, d)
}

fn dynamics(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "dynamics")?;
    let c0 = r.initial_matrix(sys.n_sites())?;
    let times = r.time_grid.points();
    let cs = lyapunov::solve_differential(r.level, &sys, &nh, &c0, &times, &r.quad)?;
    let mut t = correlation_table(sys.n_sites());
    for c in &cs {
        t.push(correlation_row(c, &sys));
    }
    t.write(&r.out.join("dynamics.csv"), &comment)?;
    let worst = cs
        .iter()
        .max_by(|a, b| a.positivity_defect(sys.statistics).total_cmp(&b.positivity_defect(sys.statistics)))
        .expect("time grid is never empty");
    let mut d = base_diagnostics(r, &sys, &nh);
    d.insert("worst_positivity".into(), positivity(worst, &sys));
    write_diagnostics(r, d)
}

fn two_time(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "two-time")?;
    let c0 = r.initial_matrix(sys.n_sites())?;
    let taus = r.two_time.taus();
    let t = match (r.two_time.t, r.level) {
        (Some(t), _) => t,
        (None, Level::FirstMarkov) => {
            return Err(Failure::config("two_time.t: the first-Markov two-time function needs a finite earlier time"));
        }
        (None, _) => f64::INFINITY,
    };
    let tt = regression::two_time(r.level, &sys, &nh, &c0, t, &taus, &r.quad)?;
    let naive = if r.with_naive {
        let ct = match r.level {
            Level::FirstMarkov => lyapunov::first_markov_at(&sys, &nh, &c0, t, &r.quad)?,
            _ if t.is_infinite() => lyapunov::solve_ness(r.level, &sys, &nh, &r.quad)?,
            _ => lyapunov::solve_differential(r.level, &sys, &nh, &c0, &[t], &r.quad)?.remove(0),
        };
        Some(regression::naive_qme_regression(&nh, &ct, &taus)?)
    } else {
        None
    };

    let entries = &r.two_time.entries;
    let mut header = vec!["tau".to_string()];
    for [l, m] in entries {
        header.push(format!("ReC_{l}_{m}"));
        header.push(format!("ImC_{l}_{m}"));
    }
    if naive.is_some() {
        for [l, m] in entries {
            header.push(format!("naive_ReC_{l}_{m}"));
            header.push(format!("naive_ImC_{l}_{m}"));
        }
    }
    let mut table = Table::new(header);
    for (k, &tau) in taus.iter().enumerate() {
        let mut row = vec![fmt(tau)];
        let push = |row: &mut Vec<String>, m: &CMat| {
            for &[a, b] in entries {
                row.push(fmt(m[(a, b)].re));
                row.push(fmt(m[(a, b)].im));
            }
        };
        push(&mut row, &tt.values[k]);
        if let Some(nv) = &naive {
            push(&mut row, &nv.values[k]);
        }
        table.push(row);
    }
    table.write(&r.out.join("two_time.csv"), &comment)?;
    let mut d = base_diagnostics(r, &sys, &nh);
    if let Some(nv) = &naive {
        let gap = tt.values.iter().zip(&nv.values).map(|(a, b)| linalg::max_abs(&(a - b))).fold(0.0, f64::max);
        d.insert("max_naive_discrepancy".into(), json!(gap));
    }
    write_diagnostics(r, d)
}

fn regime_json(reg: &perturbative::PertRegime) -> Value {
    json!({
        "margin": if reg.margin.is_finite() { json!(reg.margin) } else { json!("inf") },
        "required": reg.required,
        "accepted": reg.accepted,
    })
}

fn pert_ness(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "pert-ness")?;
    let opts = PertOptions {
        min_margin: r.min_margin,
        quad: r.quad,
    };
    let reg = perturbative::check_pert_regime(&sys, &nh, r.min_margin)?;
    let mut mt = Table::new(["alpha", "nu", "margin"]);
    for &(a, b, m) in &reg.pairs {
        mt.push(vec![a.to_string(), b.to_string(), fmt(m)]);
    }
    mt.write(&r.out.join("pert_regime.csv"), &comment)?;
    let mut d = base_diagnostics(r, &sys, &nh);
    d.insert("regime".into(), regime_json(&reg));
    if !reg.accepted {
        let mut f = Failure::numeric(format!(
            "perturbative regime rejected: margin {:.3e} below required {}",
            reg.margin, reg.required
        ));
        f.diagnostics = Some(Value::Object(d));
        return Err(f);
    }
    let ce = perturbative::pert_ness(&sys, &nh, &opts)?;
    let n = sys.n_sites();
    let mut h: Vec<String> = (0..n).map(|a| format!("omega_{a}")).collect();
    h.extend(output::upper_triangle_header("CE", n));
    let mut t = Table::new(h);
    let mut row: Vec<String> = sys.hamiltonian.eigvals.iter().map(|&w| fmt(w)).collect();
    row.extend(output::upper_triangle_values(&ce));
    t.push(row);
    t.write(&r.out.join("pert_ness.csv"), &comment)?;
    write_diagnostics(r, d)
}

fn resonant_level(r: &Resolved) -> Result<(), Failure> {
    let Some(p) = r.resonant_level else {
        return Err(Failure::config("resonant_level: this subcommand needs a `resonant_level` section"));
    };
    let (sys, nh, comment) = setup(r, "resonant-level")?;
    let suite = observables::resonant_level_suite(p, &r.quad)?;
    let c = lyapunov::solve_ness(r.level, &sys, &nh, &r.quad)?;
    let n_lyap = c.c[(0, 0)].re;
    let currents = observables::bath_current_single_site(&sys, &nh, n_lyap, &r.quad)?;
    let mut t = Table::new(["occupation_exact", "occupation_lyapunov", "current_exact", "current_lyapunov"]);
    t.push(vec![fmt(suite.occupation), fmt(n_lyap), fmt(suite.current), fmt(currents[0])]);
    t.write(&r.out.join("resonant_level.csv"), &comment)?;

    let taus = r.two_time.taus();
    let l1 = regression::two_time_level1(&sys, &nh, &lyapunov::solve_ness(Level::LevelI, &sys, &nh, &r.quad)?, &taus, &r.quad)?;
    let mut h = vec!["tau", "Re_exact", "Im_exact", "Re_level1", "Im_level1"];
    if r.with_naive {
        h.extend(["Re_naive", "Im_naive"]);
    }
    let mut t = Table::new(h);
    let mut worst_l1 = 0.0f64;
    for (k, &tau) in taus.iter().enumerate() {
        let ex = suite.two_time_exact(tau)?;
        let ly = l1.values[k][(0, 0)];
        worst_l1 = worst_l1.max((ex - ly).norm());
        let mut row = vec![fmt(tau), fmt(ex.re), fmt(ex.im), fmt(ly.re), fmt(ly.im)];
        if r.with_naive {
            let nv = suite.two_time_naive(tau);
            row.extend([fmt(nv.re), fmt(nv.im)]);
        }
        t.push(row);
    }
    t.write(&r.out.join("resonant_level_two_time.csv"), &comment)?;
    let mut d = base_diagnostics(r, &sys, &nh);
    d.insert("occupation_error".into(), json!((suite.occupation - n_lyap).abs()));
    d.insert("current_error".into(), json!((suite.current - currents[0]).abs()));
    d.insert("current_balance".into(), json!(currents[0] + currents[1]));
    d.insert("two_time_max_error".into(), json!(worst_l1));
    write_diagnostics(r, d)
}

fn chain_current(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "chain-current")?;
    let c = lyapunov::solve_ness(r.level, &sys, &nh, &r.quad)?;
    let report = observables::current_report(r.level, &sys, &nh, &c, &r.quad)?;
    let opts = PertOptions {
        min_margin: r.min_margin,
        quad: r.quad,
    };
    let reg = perturbative::check_pert_regime(&sys, &nh, r.min_margin)?;
    let pert: Option<Vec<f64>> = if reg.accepted {
        Some(
            (0..report.bond.len())
                .map(|p| observables::pert_current_formula(&sys, &nh, p, &opts))
                .collect::<lyapunov_oqs::Result<_>>()?,
        )
    } else {
        None
    };
    let mut t = Table::new(["bond", "current", "current_weak_coupling"]);
    for (p, &i) in report.bond.iter().enumerate() {
        let w = pert.as_ref().map(|v| fmt(v[p])).unwrap_or_default();
        t.push(vec![p.to_string(), fmt(i), w]);
    }
    t.write(&r.out.join("chain_current.csv"), &comment)?;
    let mut t = Table::new(["bath", "site", "current"]);
    for (b, (&i, bath)) in report.bath.iter().zip(&sys.baths).enumerate() {
        t.push(vec![b.to_string(), bath.site.to_string(), fmt(i)]);
    }
    t.write(&r.out.join("bath_currents.csv"), &comment)?;
    let mut d = base_diagnostics(r, &sys, &nh);
    d.insert("regime".into(), regime_json(&reg));
    d.insert("bond_spread".into(), json!(report.bond_spread()));
    d.insert("bath_imbalance".into(), json!(report.bath_imbalance()));
    d.insert("positivity".into(), positivity(&c, &sys));
    write_diagnostics(r, d)
}

fn conductance(r: &Resolved) -> Result<(), Failure> {
    let (sys, nh, comment) = setup(r, "conductance")?;
    let [a, b] = r.conductance.expect("resolved whenever a system exists");
    let w = observables::dimensionless_conductance(&sys, a, b)?;
    let mut t = Table::new(["r", "s", "W"]);
    t.push(vec![a.to_string(), b.to_string(), fmt(w)]);
    t.write(&r.out.join("conductance.csv"), &comment)?;
    write_diagnostics(r, base_diagnostics(r, &sys, &nh))
}
