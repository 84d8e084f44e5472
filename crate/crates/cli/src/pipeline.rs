//! The `all` subcommand: every stage on one system, one pass/fail line per check.

use resurgence::borel::borel_transform;
use resurgence::cases::Oracle;
use resurgence::laplace::{levels_for_direction, transseries_ode_residual, LevelSet};
use resurgence::resurgence::{check_resurgence, StokesFitParams};
use resurgence::series::{compute_transseries, transseries_residuals};
use resurgence::C64;
use serde::Serialize;

use crate::commands::{average_summary, branches, jump_report, resum_report, sample_xs, stokes_report, Params, Target};
use crate::output::write_json;
use crate::{parse_complex, Cli, Failure, Outcome};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub status: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Serialize)]
struct Summary {
    system: String,
    all_pass: bool,
    checks: Vec<Check>,
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    /// Records `value < threshold`.
    fn below(&mut self, name: &str, value: f64, threshold: f64, detail: String) {
        let status = if value < threshold { "pass" } else { "fail" };
        self.0.push(Check { name: name.into(), status, value, threshold, detail });
    }

    /// Records a stage that could not run as a failure naming the error.
    fn failed(&mut self, name: &str, e: Failure) {
        let detail = match e {
            Failure::Validation(v) => v.join("; "),
            Failure::Numerical(m) => m,
        };
        self.0.push(Check { name: name.into(), status: "fail", value: f64::NAN, threshold: f64::NAN, detail });
    }
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn run_all(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let mut checks = Checks::default();
    formal_checks(t, &mut checks)?;
    let kmax = cli.kmax.unwrap_or(3).max(1);
    let br = branches(t, p, kmax, cli.pmax.unwrap_or(4.0).min(kmax as f64 + 1.0).max(2.5))?;

    let ray = br.plus.iter().chain(&br.minus).map(|b| b.stats.ray_residual).fold(0.0, f64::max);
    checks.below(
        "convolution_equation_residual",
        ray,
        1e-9,
        "worst relative midpoint residual of the ray solves".into(),
    );

    // germ at p = 0 against the solved plus branch
    let ts = compute_transseries(&t.spec, 1, 40)?;
    let mut germ_err = 0.0f64;
    for k in 0..=1 {
        let germ = borel_transform(&ts.levels[k])?;
        let lim = (0.25 * germ.radius).min(0.5);
        let b = &br.plus[k];
        for (i, &s) in b.mesh().nodes().iter().enumerate().filter(|(_, s)| **s <= lim) {
            let g = germ.eval(C64::new(s, 0.0))?;
            for (r, c) in b.comps.iter().enumerate() {
                germ_err = germ_err.max((c.value(i) - g.value[r]).norm() / g.value[r].norm().max(1.0) - g.error_bound);
            }
        }
    }
    checks.below(
        "borel_germ_matches_solution",
        germ_err,
        1e-8,
        "levels 0 and 1 within a quarter of the germ radius".into(),
    );

    let rep = stokes_report(t, &br, &StokesFitParams::default())?;
    let s = rep.s_beta();
    checks.below(
        "stokes_estimators_agree",
        rep.disagreement,
        StokesFitParams::default().tolerance,
        format!("jump {:?} vs fit {:?}; S_beta = {s}", rep.jump.s_beta, rep.fit.s_beta),
    );
    if let Some(c) = &t.case {
        if let Ok(exact) = c.oracle_s_beta() {
            checks.below("stokes_constant_oracle", rel(s, exact), 1e-6, format!("estimated {s}, exact {exact}"));
        }
        if let Some(e) = c.oracle_singular_exponent() {
            let dev = (rep.fitted_exponent - e).abs() / e.abs().max(1.0);
            checks.below("singular_exponent_oracle", dev, 0.02, format!("fitted {}, exact {e}", rep.fitted_exponent));
        }
    }

    match check_resurgence(&br, t.spec.beta(), s, p.tol) {
        Ok(ids) => {
            for r in ids {
                let detail = format!("on ({}, {})", r.interval.0, r.interval.1);
                checks.below(&format!("identity_{}", r.identity), r.residual, r.tolerance, detail);
            }
        }
        Err(e) => checks.failed("identities", e.into()),
    }

    match average_summary(t, &br, s) {
        Ok((_, a)) => {
            // weighted relative norms, so that large or strongly singular solutions are judged alike
            let detail =
                format!("weighted relative norm on (1, 2); max |Y^ba - (Y^+ + Y^-)/2| = {:e}", a.ba_minus_half);
            checks.below("balanced_average_is_half_sum", a.ba_minus_half_scaled, 1e-8, detail);
            if a.real_system {
                let (lo, hi) = a.imaginary_interval;
                let detail = format!("weighted relative norm on ({lo}, {hi}); max |Im Y^ba| = {:e}", a.max_imaginary);
                checks.below("balanced_average_is_real", a.max_imaginary_scaled, 1e-8, detail);
            }
            let c = &a.convolution;
            checks.below(
                "balanced_average_commutes_with_convolution",
                c.ba_residual,
                p.tol,
                format!("on {:?}", c.ba_interval),
            );
            let gap = (c.naive_discrepancy - c.predicted_discrepancy).abs();
            checks.below(
                "naive_continuation_discrepancy",
                gap,
                1e-2 * c.predicted_discrepancy + p.tol,
                format!(
                    "measured {:e}, predicted {:e} on {:?}",
                    c.naive_discrepancy, c.predicted_discrepancy, c.witness_interval
                ),
            );
        }
        Err(e) => checks.failed("balanced_average", e),
    }

    let cfg = p.resum(cli);
    let c = parse_complex(cli.c.as_deref().unwrap_or("0.3"))?;
    let zero = match levels_for_direction(&t.spec, 0.0, &cfg) {
        Ok((set, _)) => {
            resummation_checks(cli, t, p, &set, c, &mut checks);
            Some(set)
        }
        Err(e) => {
            checks.failed("resummation", e.into());
            None
        }
    };

    match jump_report(cli, t, p, s, zero.as_ref()) {
        Ok((_, j)) => {
            if s.norm() > 1e-6 {
                let half = j.half_step_rel_err.unwrap_or(f64::INFINITY);
                checks.below(
                    "stokes_jump_full_step",
                    j.full_step_rel_err,
                    0.05,
                    format!("C(max phi) - C(min phi) vs S_beta {s}"),
                );
                checks.below("stokes_jump_half_step", half, 0.05, "C(0) - C(min phi) vs S_beta/2".into());
            } else {
                let c0 = C64::new(j.rows[0].c[0], j.rows[0].c[1]);
                let spread = j.rows.iter().map(|r| (C64::new(r.c[0], r.c[1]) - c0).norm()).fold(0.0, f64::max);
                checks.below("stokes_jump_constant", spread, 1e-6, "vanishing S_beta: C independent of phi".into());
            }
        }
        Err(e) => checks.failed("stokes_jump", e),
    }

    let all_pass = checks.0.iter().all(|c| c.status == "pass");
    for c in &checks.0 {
        println!("{}: {} ({:e} vs {:e}) {}", c.name, c.status, c.value, c.threshold, c.detail);
    }
    let failed: Vec<String> = checks.0.iter().filter(|c| c.status != "pass").map(|c| c.name.clone()).collect();
    write_json(&cli.out, "summary.json", &Summary { system: t.name.clone(), all_pass, checks: checks.0 })?;
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("failed checks: {}", failed.join(", "))))
    }
}

fn formal_checks(t: &Target, checks: &mut Checks) -> Outcome<()> {
    let ts = compute_transseries(&t.spec, 3, 12)?;
    let scale = ts.levels.iter().flat_map(|l| l.coeffs.iter().flatten()).map(|z| z.norm()).fold(1.0, f64::max);
    let res = transseries_residuals(&t.spec, &ts)?;
    let worst = res.values().flatten().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    checks.below(
        "formal_series_residual",
        worst,
        1e-12,
        format!("{} matched coefficients, kmax 3, order 12", res.len()),
    );
    if let Some(Oracle::Exa1) = t.case.as_ref().map(|c| &c.oracle) {
        // y_0 = 1/x exactly and y_1 = x^{-1/2}
        let y0 = &ts.levels[0];
        let dev = y0.coeffs.iter().enumerate().map(|(i, c)| {
            let exact = if y0.first_power + i == 1 { 1.0 } else { 0.0 };
            (c[0] - exact).norm()
        });
        checks.below("formal_series_oracle", dev.fold(0.0, f64::max), 1e-14, "y_0 = 1/x".into());
    }
    Ok(())
}

fn resummation_checks(cli: &Cli, t: &Target, p: &Params, set: &LevelSet, c: C64, checks: &mut Checks) {
    let cfg = p.resum(cli);
    let xs = match sample_xs(cli, set, c, p.tol, &cfg) {
        Ok(x) => x,
        Err(e) => return checks.failed("resummation", e),
    };
    match resum_report(t, set, c, &xs, p.tol, &cfg) {
        Ok((kind, rep)) => {
            checks.below("resummation_matches_oracle", rep.max_rel_err, p.tol, format!("{kind} oracle, C = {c}"))
        }
        Err(e) => checks.failed("resummation_matches_oracle", e),
    }
    let mut fd = 0.0f64;
    for &x in &xs {
        match transseries_ode_residual(&t.spec, set, c, x, 1e-3, &cfg.laplace) {
            Ok(r) => fd = fd.max(r),
            Err(e) => return checks.failed("resummed_solution_residual", e.into()),
        }
    }
    checks.below("resummed_solution_residual", fd, p.tol, "central differences, h = 1e-3".into());
}
