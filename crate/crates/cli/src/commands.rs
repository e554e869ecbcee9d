//! The five commands. Each writes its files into the output directory and
//! returns a human-readable summary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use slowfast::allee::{
    allee_hopf, equilibria, m_star, model_bifurcation_curves, normal_form_coeffs, psi_case_analysis, AlleeParams,
    EquilibriaReport, PsiReport,
};
use slowfast::dynamics::{
    find_cycle, integrate, section_at_e4, seed_height, CycleResult, Direction, IntegratorOptions, RunStats,
};
use slowfast::normalform::{
    analyze, classify_at_eps, lambda_c, lambda_h, HopfClass, NormalFormCoefficients,
};
use slowfast::sdi::{check_factorisation, cyclicity_report, FactorCheck, PhiCase};
use slowfast::suite::{canonical_smoke, cycle_options, format_line, run_all, run_oracles, CheckOutcome, SuiteOptions};

use crate::config::{Command, RunConfig};
use crate::svg::Heatmap;
use crate::CliError;

/// Result of a command that ran to completion. A nonzero `exit_code` marks
/// reported numerical failures.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub exit_code: u8,
}

pub fn run(rc: &RunConfig) -> Result<Outcome, CliError> {
    rc.values.check_keys()?;
    fs::create_dir_all(&rc.output_dir)?;
    match rc.command {
        Command::Analyze => cmd_analyze(rc),
        Command::Sweep => cmd_sweep(rc),
        Command::Simulate => cmd_simulate(rc),
        Command::Sdi => cmd_sdi(rc),
        Command::Verify => cmd_verify(rc),
    }
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))
}

/// Model analysis at one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub mode: &'static str,
    pub params: AlleeParams,
    pub fold: (f64, f64),
    pub equilibria: EquilibriaReport,
    #[serde(rename = "A")]
    pub a: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// ω2 including the quartic term of the prey equation.
    pub omega2_corrected: f64,
    pub rho1: f64,
    pub rho3: f64,
    /// Verdict from the dominant term of the Lyapunov series at ε.
    pub classification: HopfClass,
    /// Verdict with the fixed relative tolerance.
    pub classification_strict: HopfClass,
    pub lambda: f64,
    pub lambda_h: f64,
    pub lambda_c: f64,
    pub beta_star: f64,
    pub beta_h: f64,
    pub beta_c: f64,
    pub psi: PsiReport,
    pub gamma_star: f64,
    pub coincidence_gap: f64,
}

pub fn model_report(p: &AlleeParams) -> Result<ModelReport, CliError> {
    let eq = equilibria(p)?;
    let nf = normal_form_coeffs(p)?;
    let hopf = allee_hopf(&nf);
    let curves = model_bifurcation_curves(p)?;
    Ok(ModelReport {
        mode: "model",
        params: *p,
        fold: nf.fold,
        equilibria: eq,
        a: hopf.a,
        omega1: hopf.omega1,
        omega2: hopf.omega2,
        omega2_corrected: hopf.omega2_corrected,
        rho1: hopf.rho1,
        rho3: hopf.rho3,
        classification: classify_at_eps(hopf.omega1, hopf.omega2_corrected, p.eps)?,
        classification_strict: hopf.classification,
        lambda: nf.lambda,
        lambda_h: curves.lambda_h,
        lambda_c: curves.lambda_c,
        beta_star: curves.beta_star,
        beta_h: curves.beta_h,
        beta_c: curves.beta_c,
        psi: psi_case_analysis(p.m, p.n, p.alpha, p.gamma),
        gamma_star: curves.gamma_star,
        coincidence_gap: curves.coincidence_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawReport {
    pub mode: &'static str,
    pub coefficients: NormalFormCoefficients,
    #[serde(rename = "A")]
    pub a: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub rho1: f64,
    pub rho3: f64,
    pub classification_strict: HopfClass,
    pub eps: Option<f64>,
    pub classification: Option<HopfClass>,
    pub lambda_h: Option<f64>,
    pub lambda_c: Option<f64>,
}

fn raw_report(rc: &RunConfig) -> Result<RawReport, CliError> {
    let nf = rc.values.coefficients()?;
    let h = analyze(&nf)?;
    let eps = rc.values.f64("eps")?;
    let (a1, a5) = (rc.values.f64("a1")?, rc.values.f64("a5")?);
    let (mut lh, mut lc, mut class) = (None, None, None);
    if let Some(e) = eps {
        class = Some(classify_at_eps(h.omega1, h.omega2, e)?);
        if let (Some(a1), Some(a5)) = (a1, a5) {
            lh = Some(lambda_h(a1, a5, e)?);
            lc = Some(lambda_c(a1, a5, h.a, e)?);
        }
    }
    Ok(RawReport {
        mode: "coefficients",
        coefficients: nf,
        a: h.a,
        omega1: h.omega1,
        omega2: h.omega2,
        rho1: h.rho1,
        rho3: h.rho3,
        classification_strict: h.classification,
        eps,
        classification: class,
        lambda_h: lh,
        lambda_c: lc,
    })
}

fn cmd_analyze(rc: &RunConfig) -> Result<Outcome, CliError> {
    let mut files = Vec::new();
    let mut s = String::new();
    if rc.values.is_raw() {
        let r = raw_report(rc)?;
        let _ = writeln!(s, "normal-form coefficients");
        let _ = writeln!(s, "  A = ω1 = {:.6e}, ω2 = {:.6e}", r.a, r.omega2);
        let _ = writeln!(s, "  ρ1 = {:.6e}, ρ3 = {:.6e}", r.rho1, r.rho3);
        let _ = writeln!(s, "  classification (tolerance): {:?}", r.classification_strict);
        if let (Some(e), Some(c)) = (r.eps, r.classification) {
            let _ = writeln!(s, "  classification at ε = {e}: {c:?}");
        }
        if let (Some(h), Some(c)) = (r.lambda_h, r.lambda_c) {
            let _ = writeln!(s, "  λ_h = {h:.6e}, λ_c = {c:.6e}");
        }
        write(&rc.output_dir, "analyze.json", &to_json(&r)?, &mut files)?;
    } else {
        let p = rc.values.model_params()?;
        let r = model_report(&p)?;
        let _ = writeln!(
            s,
            "model m = {}, n = {}, α = {}, β = {}, γ = {}, ε = {}",
            p.m, p.n, p.alpha, p.beta, p.gamma, p.eps
        );
        let _ = writeln!(s, "  fold M = ({:.7}, {:.7})", r.fold.0, r.fold.1);
        if let Some(e4) = r.equilibria.e4 {
            let _ = writeln!(s, "  E4 = ({:.7}, {:.7}), {:?}, trace {:.3e}", e4.x, e4.y, e4.kind, e4.trace);
        }
        let _ = writeln!(s, "  A = {:.6e} (Ψ case {:?}, m* = {:.7})", r.a, r.psi.case, r.psi.m_star);
        let _ = writeln!(s, "  ω1 = {:.6e}, ω2 = {:.6e}, ω2 with quartic term = {:.6e}", r.omega1, r.omega2, r.omega2_corrected);
        let _ = writeln!(s, "  λ = {:.6e}, λ_h = {:.6e}, λ_c = {:.6e}", r.lambda, r.lambda_h, r.lambda_c);
        let _ = writeln!(s, "  β* = {:.7}, β_h = {:.7}, β_c = {:.7}", r.beta_star, r.beta_h, r.beta_c);
        let _ = writeln!(s, "  classification: {:?} (tolerance verdict {:?})", r.classification, r.classification_strict);
        write(&rc.output_dir, "analyze.json", &to_json(&r)?, &mut files)?;
    }
    write(&rc.output_dir, "summary.txt", &s, &mut files)?;
    Ok(Outcome { summary: s, files, exit_code: 0 })
}

/// One axis of a sweep: `name=lo:hi:count`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

const SWEEP_KEYS: [&str; 6] = ["m", "n", "alpha", "beta", "gamma", "eps"];

pub fn parse_grid(text: &str) -> Result<Vec<Axis>, CliError> {
    let bad = |msg: String| CliError::Validation(format!("grid {text:?}: {msg}"));
    let mut axes = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, range) = part.split_once('=').ok_or_else(|| bad("expected name=lo:hi:count".into()))?;
        let name = name.trim();
        if !SWEEP_KEYS.contains(&name) {
            return Err(bad(format!("unknown axis {name}")));
        }
        let f: Vec<&str> = range.split(':').collect();
        if f.len() != 3 {
            return Err(bad("expected lo:hi:count".into()));
        }
        let lo: f64 = f[0].trim().parse().map_err(|_| bad(format!("bad number {}", f[0])))?;
        let hi: f64 = f[1].trim().parse().map_err(|_| bad(format!("bad number {}", f[1])))?;
        let count: usize = f[2].trim().parse().map_err(|_| bad(format!("bad count {}", f[2])))?;
        if count == 0 {
            return Err(bad("empty grid".into()));
        }
        let values = if count == 1 {
            vec![lo]
        } else {
            (0..count).map(|k| if k + 1 == count { hi } else { lo + (hi - lo) * k as f64 / (count - 1) as f64 }).collect()
        };
        axes.push(Axis { name: name.to_string(), values });
    }
    if axes.is_empty() {
        return Err(bad("empty grid".into()));
    }
    if axes.len() > 2 {
        return Err(bad("at most two axes".into()));
    }
    if axes.len() == 2 && axes[0].name == axes[1].name {
        return Err(bad("axes must differ".into()));
    }
    Ok(axes)
}

fn with_value(p: &AlleeParams, name: &str, v: f64) -> AlleeParams {
    let mut q = *p;
    match name {
        "m" => q.m = v,
        "n" => q.n = v,
        "alpha" => q.alpha = v,
        "beta" => q.beta = v,
        "gamma" => q.gamma = v,
        _ => q.eps = v,
    }
    q
}

pub const SWEEP_HEADER: [&str; 17] = [
    "m", "n", "alpha", "beta", "gamma", "eps", "A", "omega1", "omega2", "omega2_corrected", "lambda_h", "lambda_c",
    "beta_h", "beta_c", "psi_case", "classification", "status",
];

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn cmd_sweep(rc: &RunConfig) -> Result<Outcome, CliError> {
    let grid = rc
        .grid
        .clone()
        .or_else(|| rc.values.str("grid"))
        .ok_or_else(|| CliError::Validation("sweep needs --grid name=lo:hi:count[,name=lo:hi:count]".into()))?;
    let axes = parse_grid(&grid)?;
    let base = rc.values.model_params()?;
    let xs = &axes[0];
    let single = Axis { name: String::new(), values: vec![f64::NAN] };
    let ys = axes.get(1).unwrap_or(&single);

    let mut wtr = csv_writer();
    wtr.write_record(SWEEP_HEADER).map_err(csv_err)?;
    let mut cells = Vec::new();
    let (mut ok, mut failed) = (0usize, 0usize);
    for &yv in &ys.values {
        for &xv in &xs.values {
            let mut p = with_value(&base, &xs.name, xv);
            if !ys.name.is_empty() {
                p = with_value(&p, &ys.name, yv);
            }
            let mut row: Vec<String> = [p.m, p.n, p.alpha, p.beta, p.gamma, p.eps].iter().map(|v| num(*v)).collect();
            match model_report(&p) {
                Ok(r) => {
                    ok += 1;
                    cells.push(if r.a > 0.0 { 1.0 } else if r.a < 0.0 { -1.0 } else { 0.0 });
                    for v in [r.a, r.omega1, r.omega2, r.omega2_corrected, r.lambda_h, r.lambda_c, r.beta_h, r.beta_c] {
                        row.push(num(v));
                    }
                    row.push(format!("{:?}", r.psi.case));
                    row.push(format!("{:?}", r.classification));
                    row.push("ok".into());
                }
                Err(e) => {
                    failed += 1;
                    cells.push(f64::NAN);
                    row.extend(std::iter::repeat_n("NaN".to_string(), 8));
                    row.push(String::new());
                    row.push(String::new());
                    row.push(e.to_string());
                }
            }
            wtr.write_record(&row).map_err(csv_err)?;
        }
    }
    let mut files = Vec::new();
    let csv = String::from_utf8(wtr.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    write(&rc.output_dir, "sweep.csv", &csv, &mut files)?;

    let overlay = match (xs.name.as_str(), ys.name.as_str()) {
        ("m", "gamma") => ys.values.iter().map(|&g| (m_star(base.alpha, g), g)).collect(),
        ("gamma", "m") => xs.values.iter().map(|&g| (g, m_star(base.alpha, g))).collect(),
        _ => Vec::new(),
    };
    let y_vals = if ys.name.is_empty() { vec![0.0] } else { ys.values.clone() };
    let svg = Heatmap {
        title: "sign of A",
        x_label: &xs.name,
        y_label: if ys.name.is_empty() { "" } else { &ys.name },
        x_values: &xs.values,
        y_values: &y_vals,
        cells: &cells,
        overlay,
    }
    .render();
    write(&rc.output_dir, "sweep_sign_a.svg", &svg, &mut files)?;
    let summary = format!("sweep over {grid}: {} points, {ok} evaluated, {failed} invalid\n", ok + failed);
    Ok(Outcome { summary, files, exit_code: 0 })
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn parse_point(text: &str) -> Result<[f64; 2], CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("expected x,y, got {text:?}")))?;
    match v[..] {
        [x, y] => Ok([x, y]),
        _ => Err(CliError::Validation(format!("expected x,y, got {text:?}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub params: AlleeParams,
    pub direction: Direction,
    pub start: [f64; 2],
    pub t_end: f64,
    pub final_point: [f64; 2],
    pub stats: RunStats,
    pub cycle: Option<CycleResult>,
    pub cycle_error: Option<String>,
}

fn integrator_options(rc: &RunConfig, t_max: f64) -> Result<IntegratorOptions, CliError> {
    let mut o = IntegratorOptions { t_max, ..Default::default() };
    if let Some(v) = rc.values.f64("rel_tol")? {
        o.rel_tol = v;
    }
    if let Some(v) = rc.values.f64("abs_tol")? {
        o.abs_tol = v;
    }
    if rc.reversed {
        o.direction = Direction::Reversed;
    }
    o.validate()?;
    Ok(o)
}

fn cycle_search(rc: &RunConfig, p: &AlleeParams) -> Result<Option<CycleResult>, CliError> {
    let mut opts = cycle_options();
    if rc.reversed {
        opts = opts.reversed();
    }
    let sec = section_at_e4(p)?;
    let bracket = if let Some(b) = rc.values.str("bracket") {
        let v = parse_point(&b)?;
        (v[0], v[1])
    } else if let Some(seeds) = rc.values.str("seeds") {
        let pts: Vec<[f64; 2]> = seeds.split(';').map(parse_point).collect::<Result<_, _>>()?;
        match pts[..] {
            [a] => {
                let hi = seed_height(p, &sec, a, &opts)?;
                (sec.base[1] + 1e-3 * (hi - sec.base[1]), hi)
            }
            [a, b] => (seed_height(p, &sec, a, &opts)?, seed_height(p, &sec, b, &opts)?),
            _ => return Err(CliError::Validation("seeds takes one or two points x,y;x,y".into())),
        }
    } else {
        return Ok(None);
    };
    Ok(Some(find_cycle(p, &sec, bracket, &opts)?))
}

fn cmd_simulate(rc: &RunConfig) -> Result<Outcome, CliError> {
    let p = rc.values.model_params()?;
    let t_max = rc.values.f64("t_max")?.unwrap_or(1000.0);
    let opts = integrator_options(rc, t_max)?;
    let start = match (rc.values.f64("x0")?, rc.values.f64("y0")?) {
        (Some(x), Some(y)) => [x, y],
        (None, None) => {
            let sec = section_at_e4(&p)?;
            [sec.base[0] + 1e-3, sec.base[1]]
        }
        _ => return Err(CliError::Validation("give both x0 and y0".into())),
    };
    let tr = integrate(&p, start, &opts)?;
    let mut files = Vec::new();
    write(&rc.output_dir, "trajectory.csv", &tr.to_csv(), &mut files)?;
    let (cycle, cycle_error) = match cycle_search(rc, &p) {
        Ok(c) => (c, None),
        Err(CliError::Numerical(e)) => (None, Some(e)),
        Err(e) => return Err(e),
    };
    let report = SimulateReport {
        params: p,
        direction: opts.direction,
        start,
        t_end: tr.t_end(),
        final_point: tr.final_point(),
        stats: tr.stats,
        cycle: cycle.clone(),
        cycle_error: cycle_error.clone(),
    };
    write(&rc.output_dir, "simulate.json", &to_json(&report)?, &mut files)?;
    let mut s = format!(
        "trajectory {:?} from ({}, {}) to t = {}: final ({:.7}, {:.7}), {} steps{}\n",
        opts.direction,
        start[0],
        start[1],
        tr.t_end(),
        report.final_point[0],
        report.final_point[1],
        tr.stats.accepted,
        if tr.stats.stiffness_warning { ", stiffness warning" } else { "" }
    );
    if let Some(c) = &cycle {
        let _ = writeln!(
            s,
            "cycle at y = {:.8}, period {:.3}, forward multiplier {:.6}, {:?}",
            c.section_point[1], c.period, c.multiplier, c.stability
        );
    }
    let exit_code = if let Some(e) = &cycle_error {
        let _ = writeln!(s, "cycle search failed: {e}");
        2
    } else {
        0
    };
    Ok(Outcome { summary: s, files, exit_code })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdiReport {
    pub params: AlleeParams,
    pub case: PhiCase,
    pub zero_count: usize,
    pub y_hat: f64,
    pub s_max: f64,
    pub factor_check: FactorCheck,
}

fn cmd_sdi(rc: &RunConfig) -> Result<Outcome, CliError> {
    let mut p = rc.values.model_params()?;
    if rc.values.bool("coincident")? {
        p.beta = p.beta_star()?;
    }
    let n = match rc.grid.clone().or_else(|| rc.values.str("grid")) {
        Some(g) => g.trim().parse::<usize>().map_err(|_| CliError::Validation(format!("sdi grid must be an integer, got {g:?}")))?,
        None => 40,
    };
    let prof = cyclicity_report(&p, n)?;
    let mut wtr = csv_writer();
    wtr.write_record(["s", "I"]).map_err(csv_err)?;
    for (s, v) in prof.s_grid.iter().zip(&prof.values) {
        wtr.write_record([num(*s), num(*v)]).map_err(csv_err)?;
    }
    let csv = String::from_utf8(wtr.into_inner().map_err(|e| CliError::Numerical(e.to_string()))?)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let mut files = Vec::new();
    write(&rc.output_dir, "sdi.csv", &csv, &mut files)?;
    let report = SdiReport {
        params: p,
        case: prof.case,
        zero_count: prof.zero_count,
        y_hat: prof.y_hat,
        s_max: prof.s_max,
        factor_check: check_factorisation(&p, 0.5 * prof.s_max)?,
    };
    write(&rc.output_dir, "sdi.json", &to_json(&report)?, &mut files)?;
    let summary = format!(
        "slow divergence integral on {n} points of (0, {:.6}): case {:?}, {} sign change(s)\n",
        prof.s_max, prof.case, prof.zero_count
    );
    Ok(Outcome { summary, files, exit_code: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub passed: usize,
    pub failed: usize,
}

fn cmd_verify(rc: &RunConfig) -> Result<Outcome, CliError> {
    let opts = SuiteOptions { seed: rc.seed, omega2_offset: rc.values.f64("omega2_offset")?.unwrap_or(0.0) };
    let mut checks = vec![canonical_smoke()];
    checks.extend(if rc.values.bool("all")? { run_all(&opts) } else { run_oracles(&opts) });
    let failed = checks.iter().filter(|c| !c.passed).count();
    let mut s = String::new();
    for c in &checks {
        let _ = writeln!(s, "{}", format_line(c));
    }
    let _ = writeln!(s, "verify (seed {}): {} passed, {failed} failed", rc.seed, checks.len() - failed);
    let report = VerifyReport { seed: rc.seed, passed: checks.len() - failed, failed, checks };
    let mut files = Vec::new();
    write(&rc.output_dir, "verify.json", &to_json(&report)?, &mut files)?;
    write(&rc.output_dir, "verify.txt", &s, &mut files)?;
    Ok(Outcome { summary: s, files, exit_code: if failed == 0 { 0 } else { 2 } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("m=0.1:0.3:3, gamma=0.2:0.2:1").unwrap();
        assert_eq!(g[0].values, vec![0.1, 0.2, 0.3]);
        assert_eq!(g[1].values, vec![0.2]);
        for bad in ["", "m=0.1:0.3:0", "q=0:1:2", "m=0:1", "m=0:1:2,m=0:1:2", "m=0:1:2,n=0:1:2,gamma=0:1:2"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn example_two_is_degenerate_subcritical() {
        let r = model_report(&AlleeParams::EXAMPLE_2).unwrap();
        assert_eq!(r.classification, HopfClass::DegenerateSubcritical);
        assert!(r.a.abs() < 1e-5);
    }

    #[test]
    fn example_one_has_negative_a() {
        let r = model_report(&AlleeParams::EXAMPLE_1).unwrap();
        assert!(r.a < 0.0);
        assert!(AlleeParams::EXAMPLE_1.m > r.psi.m_star);
        assert_eq!(r.psi.a_sign, -1);
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("0.25, 0.13").unwrap(), [0.25, 0.13]);
        assert!(parse_point("0.25").is_err());
        assert!(parse_point("a,b").is_err());
    }
}
