//! One function per subcommand.

use std::collections::BTreeMap;

use resurgence::borel::borel_transform;
use resurgence::branch::{
    solve_ray_branches, solve_stokes_branches, BranchGrid, BranchLabel, StokesBranches, StokesParams,
};
use resurgence::cases::{case, Oracle, OracleCase};
use resurgence::laplace::{
    fit_window, levels_for_direction, ode_oracle, resum_window, resummation_report, stokes_jump_from_sets,
    sum_transseries, LevelSet, OdeParams, ResumConfig, ResummationReport, StokesJumpReport, Trajectory,
};
use resurgence::resurgence::{
    balanced_average, check_ba_convolution, check_resurgence, estimate_stokes_constant, max_imaginary, scaled_norm,
    stokes_family, StokesReport,
};
use resurgence::series::compute_transseries;
use resurgence::volterra::SolverParams;
use resurgence::{load_system, SystemSpec, C64};
use serde::Serialize;

use crate::output::{num, write_csv, write_json};
use crate::{parse_complex, Cli, Command, Failure, Outcome};

/// The system a run operates on.
pub struct Target {
    pub name: String,
    pub spec: SystemSpec,
    pub case: Option<OracleCase>,
}

impl Target {
    pub fn load(cli: &Cli) -> Outcome<Target> {
        match (&cli.system, &cli.case) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
                let spec = load_system(&text)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                Ok(Target { name, spec, case: None })
            }
            (None, Some(name)) => {
                let c = case(name)?;
                Ok(Target { name: name.clone(), spec: c.spec.clone(), case: Some(c) })
            }
            (None, None) => {
                Err(Failure::Validation(vec!["one of --system <path> or --case <name> is required".into()]))
            }
        }
    }

    /// `true` when every coefficient of the system is real.
    pub fn is_real(&self) -> bool {
        let s = &self.spec;
        let real = |v: &[C64]| v.iter().all(|z| z.im == 0.0);
        real(&s.lambda) && real(&s.b_diag) && s.f0.values().all(|v| real(v)) && s.g.values().all(|v| real(v))
    }

    /// Closed-form solution family, when the case has one and `c` is real.
    pub fn closed_form(&self, c: C64) -> Option<&OracleCase> {
        self.case.as_ref().filter(|k| k.oracle == Oracle::Exa1 && c.im == 0.0)
    }
}

/// Numerical parameters assembled from the flags.
pub struct Params {
    pub solver: SolverParams,
    pub stokes: StokesParams,
    pub tol: f64,
}

impl Params {
    pub fn from_cli(cli: &Cli) -> Outcome<Params> {
        let mut solver = SolverParams::default();
        let m = &mut solver.mesh;
        m.q = cli.q.unwrap_or(m.q);
        m.h_max = cli.h_max.unwrap_or(m.h_max);
        m.h_min = cli.h_min.unwrap_or(m.h_min);
        m.grading = cli.grading.unwrap_or(m.grading);
        m.validate()?;
        let tol = cli.tol.unwrap_or(1e-6);
        if !(tol > 0.0) {
            return Err(Failure::Validation(vec![format!("tolerance must be positive, got {tol}")]));
        }
        if let Some(p) = cli.pmax {
            if !(p > 1.0) || !p.is_finite() {
                return Err(Failure::Validation(vec![format!("pmax must exceed 1, got {p}")]));
            }
        }
        Ok(Params { solver, stokes: StokesParams::default(), tol })
    }

    pub fn resum(&self, cli: &Cli) -> ResumConfig {
        ResumConfig {
            kmax: cli.kmax.unwrap_or(3),
            pmax: cli.pmax.unwrap_or(6.0),
            solver: self.solver,
            stokes: self.stokes,
            ..ResumConfig::default()
        }
    }
}

pub fn run(cli: &Cli) -> Outcome<()> {
    let target = Target::load(cli)?;
    let params = Params::from_cli(cli)?;
    match cli.command {
        Command::Series => series(cli, &target),
        Command::Borel => borel(cli, &target),
        Command::BorelSolve => borel_solve(cli, &target, &params),
        Command::Stokes => stokes(cli, &target, &params),
        Command::Average => average(cli, &target, &params),
        Command::Verify => verify(cli, &target, &params),
        Command::Resum => resum(cli, &target, &params),
        Command::StokesJump => jump(cli, &target, &params),
        Command::All => crate::pipeline::run_all(cli, &target, &params),
    }
}

fn complex_cols(z: C64) -> [String; 2] {
    [num(z.re), num(z.im)]
}

#[derive(Serialize)]
struct SeriesLevel {
    k: usize,
    leading_offset: [f64; 2],
    first_power: usize,
    trusted_order: usize,
}

fn series(cli: &Cli, t: &Target) -> Outcome<()> {
    let ts = compute_transseries(&t.spec, cli.kmax.unwrap_or(3), cli.order.unwrap_or(20))?;
    let mut rows = Vec::new();
    for (k, level) in ts.levels.iter().enumerate() {
        for (i, c) in level.coeffs.iter().enumerate() {
            for (r, z) in c.iter().enumerate() {
                let [re, im] = complex_cols(*z);
                rows.push(vec![k.to_string(), (level.first_power + i).to_string(), r.to_string(), re, im]);
            }
        }
    }
    write_csv(&cli.out, "series.csv", &["k", "j", "component", "re", "im"], &rows)?;
    let levels: Vec<SeriesLevel> = ts
        .levels
        .iter()
        .enumerate()
        .map(|(k, l)| SeriesLevel {
            k,
            leading_offset: [l.leading_offset.re, l.leading_offset.im],
            first_power: l.first_power,
            trusted_order: l.trusted_order,
        })
        .collect();
    let norm = BTreeMap::from([
        ("component", serde_json::json!(ts.normalization.component)),
        ("value", serde_json::json!([ts.normalization.value.re, ts.normalization.value.im])),
    ]);
    write_json(
        &cli.out,
        "series.json",
        &serde_json::json!({ "system": t.name, "levels": levels, "normalization": norm }),
    )
}

#[derive(Serialize)]
struct GermInfo {
    k: usize,
    leading_exponent: [f64; 2],
    radius: Option<f64>,
    terms: usize,
}

fn borel(cli: &Cli, t: &Target) -> Outcome<()> {
    let ts = compute_transseries(&t.spec, cli.kmax.unwrap_or(3), cli.order.unwrap_or(20))?;
    let mut rows = Vec::new();
    let mut info = Vec::new();
    for (k, level) in ts.levels.iter().enumerate() {
        let germ = borel_transform(level)?;
        for (j, c) in germ.taylor.iter().enumerate() {
            for (r, z) in c.iter().enumerate() {
                let [re, im] = complex_cols(*z);
                rows.push(vec![k.to_string(), j.to_string(), r.to_string(), re, im]);
            }
        }
        info.push(GermInfo {
            k,
            leading_exponent: [germ.leading_exponent.re, germ.leading_exponent.im],
            // an infinite radius (terminating germ) is written as null
            radius: germ.radius.is_finite().then_some(germ.radius),
            terms: germ.taylor.len(),
        });
    }
    write_csv(&cli.out, "borel.csv", &["k", "j", "component", "re", "im"], &rows)?;
    write_json(&cli.out, "borel.json", &serde_json::json!({ "system": t.name, "germs": info }))
}

pub fn branches(t: &Target, p: &Params, kmax: usize, pmax: f64) -> Outcome<StokesBranches> {
    Ok(solve_stokes_branches(&t.spec, kmax, pmax, &p.solver, &p.stokes)?)
}

pub fn grid_rows(b: &BranchGrid, rows: &mut Vec<Vec<String>>) {
    let mesh = b.mesh();
    for (i, &t) in mesh.nodes().iter().enumerate() {
        for (r, g) in b.comps.iter().enumerate() {
            let [re, im] = complex_cols(g.value(i));
            rows.push(vec![num(b.phi), num(t), b.level.to_string(), r.to_string(), re, im, b.label.to_string()]);
        }
    }
}

const GRID_HEADER: [&str; 7] = ["phi", "p", "level", "component", "re", "im", "branch"];

#[derive(Serialize)]
struct GridInfo<'a> {
    phi: f64,
    level: usize,
    branch: String,
    nodes: usize,
    singularities: &'a [resurgence::branch::Singularity],
    stats: resurgence::branch::BranchStats,
}

fn grid_info(b: &BranchGrid) -> GridInfo<'_> {
    GridInfo {
        phi: b.phi,
        level: b.level,
        branch: b.label.to_string(),
        nodes: b.mesh().nnodes(),
        singularities: &b.singularities,
        stats: b.stats,
    }
}

fn borel_solve(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let kmax = cli.kmax.unwrap_or(1);
    let pmax = cli.pmax.unwrap_or(3.0);
    let mut grids = Vec::new();
    for &phi in cli.phi.as_deref().unwrap_or(&[0.0]) {
        if phi == 0.0 {
            let br = branches(t, p, kmax, pmax)?;
            grids.extend(br.plus);
            grids.extend(br.minus);
        } else {
            grids.extend(solve_ray_branches(&t.spec, phi, kmax, pmax, &p.solver)?);
        }
    }
    let mut rows = Vec::new();
    for g in &grids {
        grid_rows(g, &mut rows);
    }
    write_csv(&cli.out, "borel_solve.csv", &GRID_HEADER, &rows)?;
    let info: Vec<GridInfo> = grids.iter().map(grid_info).collect();
    write_json(&cli.out, "borel_solve.json", &serde_json::json!({ "system": t.name, "grids": info }))
}

pub fn stokes_report(
    t: &Target,
    br: &StokesBranches,
    fit: &resurgence::resurgence::StokesFitParams,
) -> Outcome<StokesReport> {
    Ok(estimate_stokes_constant(t.spec.beta(), &br.plus[0], &br.minus[0], &br.plus[1], fit)?)
}

fn stokes(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let br = branches(t, p, cli.kmax.unwrap_or(1).max(1), cli.pmax.unwrap_or(2.5))?;
    let rep = stokes_report(t, &br, &Default::default())?;
    if rep.flagged {
        eprintln!("warning: the two S_beta estimators disagree by {:e}", rep.disagreement);
    }
    write_json(&cli.out, "stokes.json", &rep)
}

fn verify(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let br = branches(t, p, cli.kmax.unwrap_or(3).max(1), cli.pmax.unwrap_or(4.0))?;
    let mut rep = stokes_report(t, &br, &Default::default())?;
    rep.identities = check_resurgence(&br, t.spec.beta(), rep.s_beta(), p.tol)?;
    let rows: Vec<Vec<String>> = rep
        .identities
        .iter()
        .map(|r| {
            vec![
                r.identity.clone(),
                num(r.interval.0),
                num(r.interval.1),
                num(r.residual),
                num(r.tolerance),
                if r.pass { "pass" } else { "fail" }.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cli.out,
        "verify.csv",
        &["identity", "interval_lo", "interval_hi", "residual", "tolerance", "status"],
        &rows,
    )?;
    write_json(&cli.out, "verify.json", &rep)?;
    let failed: Vec<String> = rep
        .identities
        .iter()
        .filter(|r| !r.pass)
        .map(|r| {
            format!(
                "{} on ({}, {}): residual {:e} > {:e}",
                r.identity, r.interval.0, r.interval.1, r.residual, r.tolerance
            )
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("identity check failed: {}", failed.join("; "))))
    }
}

/// Diagnostics of the balanced average of `Y_0`.
#[derive(Clone, Debug, Serialize)]
pub struct AverageSummary {
    pub s_beta: [f64; 2],
    /// `max |Y^ba - (Y^+ + Y^-)/2|` on `(1, 2)`.
    pub ba_minus_half: f64,
    /// `max |Im Y^ba|` on `(0, hi)`; meaningful for real systems.
    pub max_imaginary: f64,
    pub imaginary_interval: (f64, f64),
    /// The two quantities above in the weighted norm `max |f| min(1, d)^{1 - Re beta}`
    /// (`d` the distance to the nearest integer), relative to the weighted size of `Y^ba`.
    pub ba_minus_half_scaled: f64,
    pub max_imaginary_scaled: f64,
    pub real_system: bool,
    pub convolution: resurgence::resurgence::ConvolutionCheck,
}

pub fn average_summary(t: &Target, br: &StokesBranches, s: C64) -> Outcome<(BranchGrid, AverageSummary)> {
    let ba = balanced_average(&br.plus, s, 0)?;
    let half = br.plus[0].axpby(C64::new(0.5, 0.0), &br.minus[0], C64::new(0.5, 0.0), BranchLabel::Plus);
    let mesh = ba.mesh().clone();
    // the last unit of the mesh is only fitted from one side near its end
    let hi = (mesh.units as f64 - 1.0).max(1.0);
    let (mut avg, mut imag) = (0.0f64, 0.0f64);
    for (i, &p) in mesh.nodes().iter().enumerate() {
        for (a, h) in ba.comps.iter().zip(&half.comps) {
            if p > 1.0 && p < 2.0 {
                avg = avg.max((a.value(i) - h.value(i)).norm());
            }
            if p < hi {
                imag = imag.max(a.value(i).im.abs());
            }
        }
    }
    let beta = t.spec.beta();
    let size = scaled_norm(&ba.comps, 0.0, hi, beta).max(1e-300);
    let diff = ba.axpby(C64::new(1.0, 0.0), &half, C64::new(-1.0, 0.0), BranchLabel::Balanced);
    let ba_minus_half_scaled = scaled_norm(&diff.comps, 1.0, 2.0, beta) / size;
    let max_imaginary_scaled = max_imaginary(&ba, 0.0, hi, beta) / size;
    let fam = stokes_family(&br.plus, s);
    let conv = check_ba_convolution(&fam, &fam, (hi - 0.5).max(1.5), t.spec.beta())?;
    Ok((
        ba,
        AverageSummary {
            s_beta: [s.re, s.im],
            ba_minus_half: avg,
            max_imaginary: imag,
            imaginary_interval: (0.0, hi),
            ba_minus_half_scaled,
            max_imaginary_scaled,
            real_system: t.is_real(),
            convolution: conv,
        },
    ))
}

fn average(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let br = branches(t, p, cli.kmax.unwrap_or(3).max(1), cli.pmax.unwrap_or(3.5))?;
    let rep = stokes_report(t, &br, &Default::default())?;
    let (ba, summary) = average_summary(t, &br, rep.s_beta())?;
    let mut rows = Vec::new();
    for g in [&br.plus[0], &br.minus[0], &ba] {
        grid_rows(g, &mut rows);
    }
    write_csv(&cli.out, "average.csv", &GRID_HEADER, &rows)?;
    write_json(&cli.out, "average.json", &summary)
}

/// Sample points for resummation: the `--x` list, or 17 equally spaced points on
/// the window of `set` where the truncation bound is below a tenth of `tol`.
pub fn sample_xs(cli: &Cli, set: &LevelSet, c: C64, tol: f64, cfg: &ResumConfig) -> Outcome<Vec<f64>> {
    let xs = match &cli.x {
        Some(x) => x.clone(),
        None => {
            let (a, b) = resum_window(set, c, cfg.window.0, tol, cfg.fit_tol, &cfg.laplace)?;
            (0..=16).map(|i| a + (b - a) * i as f64 / 16.0).collect()
        }
    };
    if xs.is_empty() || xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Failure::Validation(vec!["sample points x must be positive".into()]));
    }
    Ok(xs)
}

/// Oracle values at `xs`: the closed form when known, otherwise the ODE integrated
/// from the resummed value at the largest `x`.
pub fn oracle_values(
    t: &Target,
    set: &LevelSet,
    c: C64,
    xs: &[f64],
    tol: f64,
    cfg: &ResumConfig,
) -> Outcome<(String, Vec<Vec<C64>>)> {
    if let Some(k) = t.closed_form(c) {
        let v = xs
            .iter()
            .map(|&x| k.oracle_eval(c.re, C64::new(x, 0.0)).map(|y| vec![y]))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(("closed_form".into(), v));
    }
    let x0 = xs.iter().copied().fold(f64::MIN, f64::max);
    let y0 = sum_transseries(set, c, C64::new(x0, 0.0), tol, &cfg.laplace)?.value;
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        if x == x0 {
            out.push(y0.clone());
        } else {
            let tr = ode_oracle(&t.spec, C64::new(x0, 0.0), &y0, C64::new(x, 0.0), 1, &OdeParams::default())?;
            out.push(tr.y(tr.len() - 1));
        }
    }
    Ok(("ode".into(), out))
}

pub fn resum_report(
    t: &Target,
    set: &LevelSet,
    c: C64,
    xs: &[f64],
    tol: f64,
    cfg: &ResumConfig,
) -> Outcome<(String, ResummationReport)> {
    let (kind, values) = oracle_values(t, set, c, xs, tol, cfg)?;
    let lookup: BTreeMap<u64, Vec<C64>> = xs.iter().map(|x| x.to_bits()).zip(values).collect();
    let rep = resummation_report(set, c, xs, tol, &cfg.laplace, |x| Ok(lookup[&x.to_bits()].clone()))?;
    Ok((kind, rep))
}

fn resum(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let cfg = p.resum(cli);
    let c = parse_complex(cli.c.as_deref().unwrap_or("0.3"))?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut kind = String::new();
    for &phi in cli.phi.as_deref().unwrap_or(&[0.0]) {
        let (set, _) = levels_for_direction(&t.spec, phi, &cfg)?;
        let xs = sample_xs(cli, &set, c, p.tol, &cfg)?;
        let (k, rep) = resum_report(t, &set, c, &xs, p.tol, &cfg)?;
        kind = k;
        for (i, &x) in rep.xs.iter().enumerate() {
            for (r, (a, o)) in rep.resummed[i].iter().zip(&rep.oracle[i]).enumerate() {
                rows.push(vec![
                    num(phi),
                    num(x),
                    r.to_string(),
                    num(a[0]),
                    num(a[1]),
                    num(o[0]),
                    num(o[1]),
                    num(rep.rel_err[i]),
                ]);
            }
        }
        reports.push(rep);
    }
    let header = ["phi", "x", "component", "resummed_re", "resummed_im", "oracle_re", "oracle_im", "rel_err"];
    write_csv(&cli.out, "resum.csv", &header, &rows)?;
    write_json(&cli.out, "resum.json", &serde_json::json!({ "system": t.name, "oracle": kind, "reports": reports }))?;
    for rep in &reports {
        if rep.max_rel_err > p.tol {
            let i = rep.rel_err.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
            return Err(Failure::Numerical(format!(
                "resummation at phi = {}, x = {} differs from the oracle by {:e} > {:e}",
                rep.phi, rep.xs[i], rep.rel_err[i], p.tol
            )));
        }
    }
    Ok(())
}

/// Initial vector of the stokes-jump trajectory: `--y0` as `re[,im]` per component, `;`-separated.
fn initial_value(text: &str, n: usize) -> Outcome<Vec<C64>> {
    let v = text.split(';').map(parse_complex).collect::<Outcome<Vec<_>>>()?;
    if v.len() == n {
        Ok(v)
    } else {
        Err(Failure::Validation(vec![format!("--y0 needs {n} ';'-separated values, got {}", v.len())]))
    }
}

/// `C(phi)` table. The trajectory starts at `--y0` on the left end of the fit window
/// when given, otherwise it is integrated leftwards from the resummed `phi = 0`
/// solution with constant `--c` (default 0.3) at the right end. `base` may supply
/// the `phi = 0` level set.
pub fn jump_report(
    cli: &Cli,
    t: &Target,
    p: &Params,
    s_beta: C64,
    base: Option<&LevelSet>,
) -> Outcome<(Trajectory, StokesJumpReport)> {
    let mut cfg = p.resum(cli);
    let phis = cli.phi.clone().unwrap_or_else(|| vec![-0.2, 0.0, 0.2]);
    let mut sets = Vec::with_capacity(phis.len());
    for &phi in &phis {
        match base {
            Some(b) if phi == 0.0 => sets.push(b.clone()),
            _ => sets.push(levels_for_direction(&t.spec, phi, &cfg)?.0),
        }
    }
    let c = parse_complex(cli.c.as_deref().unwrap_or("0.3"))?;
    let guess = if cli.y0.is_some() { C64::new(1.0, 0.0) } else { c };
    let mut x_lo = cfg.window.0;
    for set in &sets {
        x_lo = x_lo.max(fit_window(set, guess, cfg.window.0, cfg.fit_tol, &cfg.laplace)?.0);
    }
    cfg.window = (x_lo, 2.0 * x_lo);
    let (a, b) = (C64::new(x_lo, 0.0), C64::new(2.0 * x_lo, 0.0));
    let ode = OdeParams::default();
    let tr = match &cli.y0 {
        Some(text) => ode_oracle(&t.spec, a, &initial_value(text, t.spec.n)?, b, 16, &ode)?,
        None => {
            let zero = match sets.iter().find(|s| s.phi == 0.0) {
                Some(s) => s.clone(),
                None => levels_for_direction(&t.spec, 0.0, &cfg)?.0,
            };
            let yb = sum_transseries(&zero, c, b, p.tol, &cfg.laplace)?.value;
            ode_oracle(&t.spec, b, &yb, a, 16, &ode)?
        }
    };
    let rep = stokes_jump_from_sets(&sets, &tr, s_beta, &cfg)?;
    Ok((tr, rep))
}

fn jump(cli: &Cli, t: &Target, p: &Params) -> Outcome<()> {
    let br = branches(t, p, 1, 2.5)?;
    let s = stokes_report(t, &br, &Default::default())?.s_beta();
    let (_, rep) = jump_report(cli, t, p, s, None)?;
    let rows: Vec<Vec<String>> =
        rep.rows.iter().map(|r| vec![num(r.phi), num(r.c[0]), num(r.c[1]), num(r.spread)]).collect();
    write_csv(&cli.out, "stokes_jump.csv", &["phi", "c_re", "c_im", "spread"], &rows)?;
    write_json(&cli.out, "stokes_jump.json", &rep)
}
