//! Seeded acceptance checks shared by the acceptance harness and the
//! command-line `verify` command. A failing stage is reported, never raised.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allee::{allee_hopf, fold_point, m_star, normal_form_coeffs, omega2_at_degeneracy, AlleeParams};
use crate::blowup::{
    blow_up, equilibrium_newton, equilibrium_series, fit_l1, fit_lambda1, lyapunov_df, random_record,
    PlanarPolySystem, Stage,
};
use crate::dynamics::{
    find_cycle, invariant_region_check, section_at_e4, seed_height, IntegratorOptions, Stability,
};
use crate::jet::Jet;
use crate::normalform::{compute_a, omega_coefficients, rho_coefficients, HopfClass, NormalFormCoefficients};
use crate::sdi::{admissible_range, cyclicity_report, random_admissible, slow_divergence_integral, slow_divergence_integral_x};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Worst measured quantity, compared against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Added to the closed-form ω2 before it is compared with the fit.
    /// Nonzero values serve as a negative control.
    pub omega2_offset: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seed: 2024, omega2_offset: 0.0 }
    }
}

impl SuiteOptions {
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn outcome(id: u8, name: &'static str, res: Result<(bool, f64, f64, String), String>) -> CheckOutcome {
    match res {
        Ok((passed, worst, tolerance, detail)) => CheckOutcome { id, name, passed, worst, tolerance, detail },
        Err(e) => CheckOutcome { id, name, passed: false, worst: f64::NAN, tolerance: f64::NAN, detail: e },
    }
}

type Measured = Result<(bool, f64, f64, String), String>;

fn omega1_oracle(o: &SuiteOptions) -> Measured {
    let mut rng = o.rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let nf = random_record(&mut rng, false);
        let (w1, _) = omega_coefficients(&nf);
        let fit = fit_l1(&nf).map_err(|e| e.to_string())?;
        worst = worst.max(rel(fit.odd.coeffs[0], w1 / 16.0));
    }
    Ok((worst <= 1e-3, worst, 1e-3, format!("20 records, max relative error {worst:.2e}")))
}

fn omega2_oracle(o: &SuiteOptions) -> Measured {
    let mut rng = o.rng(2);
    let (mut worst, mut even): (f64, f64) = (0.0, 0.0);
    for _ in 0..10 {
        let nf = random_record(&mut rng, true);
        let (_, w2) = omega_coefficients(&nf);
        let w2 = w2 + o.omega2_offset;
        let fit = fit_l1(&nf).map_err(|e| e.to_string())?;
        worst = worst.max(rel(fit.odd.coeffs[1], w2 / 32.0));
        let c0 = fit.general.coeff(0).unwrap_or(f64::NAN).abs();
        let c2 = fit.general.coeff(2).unwrap_or(f64::NAN).abs();
        even = even.max(c0).max(c2);
    }
    let passed = worst <= 1e-2 && even < 1e-6;
    Ok((passed, worst, 1e-2, format!("10 records, max relative error {worst:.2e}, max |r⁰|,|r²| {even:.2e}")))
}

fn rho_oracle(o: &SuiteOptions) -> Measured {
    let mut rng = o.rng(3);
    let (mut w1, mut w3, mut w2): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10 {
        let nf = random_record(&mut rng, false);
        let rho = rho_coefficients(&nf);
        let fit = fit_lambda1(&nf).map_err(|e| e.to_string())?;
        w1 = w1.max(rel(fit.even.coeffs[0], rho.rho1));
        w3 = w3.max(rel(fit.even.coeffs[1], rho.rho3));
        w2 = w2.max(fit.general.coeff(1).unwrap_or(f64::NAN).abs());
    }
    let passed = w1 <= 1e-6 && w3 <= 1e-3 && w2 < 1e-6;
    Ok((passed, w3, 1e-3, format!("10 records, ρ1 rel {w1:.2e}, ρ3 rel {w3:.2e}, |ρ2| {w2:.2e}")))
}

fn series_order(o: &SuiteOptions) -> Measured {
    let mut rng = o.rng(4);
    let mut worst: f64 = 0.0;
    let mut slopes = Vec::new();
    for _ in 0..10 {
        let nf = random_record(&mut rng, false);
        let mut errs = Vec::new();
        for r in [0.1, 0.05, 0.025] {
            let sys = blow_up(&nf, r, 0.3).map_err(|e| e.to_string())?;
            let series = equilibrium_series(&sys, r).map_err(|e| e.to_string())?.point(r);
            let eq = equilibrium_newton(&sys).map_err(|e| e.to_string())?;
            errs.push((eq[0] - series[0]).hypot(eq[1] - series[1]));
        }
        // least-squares slope of log err against log r
        let xs = [0.1f64.ln(), 0.05f64.ln(), 0.025f64.ln()];
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let slope = num / den;
        worst = worst.max((slope - 4.0).abs());
        slopes.push(slope);
    }
    let lo = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok((worst <= 0.3, worst, 0.3, format!("10 records, slopes in [{lo:.3}, {hi:.3}]")))
}

fn allee_degeneracy() -> Measured {
    let (alpha, gamma) = (0.8, 0.4424);
    let ms = m_star(alpha, gamma);
    let dm = (ms - 0.263075).abs();
    let at_star = AlleeParams { m: ms, ..AlleeParams::EXAMPLE_2 };
    let nf = normal_form_coeffs(&at_star).map_err(|e| e.to_string())?;
    let a = compute_a(&nf.coeffs);
    let nf_reference = normal_form_coeffs(&AlleeParams::EXAMPLE_2).map_err(|e| e.to_string())?;
    let a_reference = compute_a(&nf_reference.coeffs);
    let (_, ym) = fold_point(ms, at_star.n).map_err(|e| e.to_string())?;
    let w2 = omega2_at_degeneracy(alpha, gamma, ym).map_err(|e| e.to_string())?;
    let class = allee_hopf(&nf).classification;
    let passed = dm <= 1e-6 && a.abs() < 1e-6 && w2 > 0.0 && class == HopfClass::DegenerateSubcritical;
    Ok((
        passed,
        dm,
        1e-6,
        format!(
            "m* = {ms:.7}, |A(m*)| = {:.1e}, |A(0.263075)| = {:.1e}, ω2 closed form = {w2:.3}, {class:?}",
            a.abs(),
            a_reference.abs()
        ),
    ))
}

/// Options used for return maps at the example parameters.
pub fn cycle_options() -> IntegratorOptions {
    IntegratorOptions { t_max: 5e3, ..IntegratorOptions::precise() }
}

fn example1_cycle() -> Measured {
    let p = AlleeParams::EXAMPLE_1;
    let opts = cycle_options();
    let sec = section_at_e4(&p).map_err(|e| e.to_string())?;
    let seed = seed_height(&p, &sec, [0.2644, 0.0961], &opts).map_err(|e| e.to_string())?;
    let inner = sec.base[1] + 1e-3 * (seed - sec.base[1]);
    let c = find_cycle(&p, &sec, (inner, seed), &opts).map_err(|e| e.to_string())?;
    let passed = c.converged && c.stability == Stability::Stable && c.multiplier < 1.0;
    Ok((
        passed,
        c.multiplier,
        1.0,
        format!("cycle at y = {:.7}, period {:.1}, multiplier {:.6}, {:?}", c.section_point[1], c.period, c.multiplier, c.stability),
    ))
}

fn example2_cycle() -> Measured {
    let p = AlleeParams::EXAMPLE_2;
    let opts = cycle_options().reversed();
    let sec = section_at_e4(&p).map_err(|e| e.to_string())?;
    let a = seed_height(&p, &sec, [0.25, 0.1375], &opts).map_err(|e| e.to_string())?;
    let b = seed_height(&p, &sec, [0.25, 0.13], &opts).map_err(|e| e.to_string())?;
    let c = find_cycle(&p, &sec, (a, b), &opts).map_err(|e| e.to_string())?;
    let passed = c.converged && c.stability == Stability::Unstable;
    Ok((
        passed,
        c.multiplier,
        1.0,
        format!("cycle at y = {:.7}, period {:.1}, forward multiplier {:.6}, {:?}", c.section_point[1], c.period, c.multiplier, c.stability),
    ))
}

fn invariant_region(o: &SuiteOptions) -> Measured {
    let opts = IntegratorOptions { t_max: 1e4, ..IntegratorOptions::default() };
    let rep = invariant_region_check(&AlleeParams::EXAMPLE_2, 100, o.seed, &opts).map_err(|e| e.to_string())?;
    let passed = rep.max_excursion < 1e-9;
    Ok((
        passed,
        rep.max_excursion,
        1e-9,
        format!("100 starts, t ≤ 1e4, max excursion {:.1e}, stiffness warnings {}", rep.max_excursion, rep.stiffness_warnings),
    ))
}

fn sdi_cyclicity(o: &SuiteOptions) -> Measured {
    let mut rng = o.rng(9);
    let (mut zeros, mut worst) = (0usize, 0.0f64);
    for _ in 0..10 {
        let p = random_admissible(&mut rng);
        let prof = cyclicity_report(&p, 24).map_err(|e| e.to_string())?;
        zeros = zeros.max(prof.zero_count);
        let (_, s_max) = admissible_range(&p).map_err(|e| e.to_string())?;
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let y = slow_divergence_integral(&p, 0.0, t * s_max).map_err(|e| e.to_string())?;
            let x = slow_divergence_integral_x(&p, 0.0, t * s_max).map_err(|e| e.to_string())?;
            worst = worst.max(rel(x, y));
        }
    }
    let passed = zeros <= 1 && worst <= 1e-6;
    Ok((passed, worst, 1e-6, format!("10 parameter sets, max zero count {zeros}, max form disagreement {worst:.1e}")))
}

fn cubic_center(sigma: f64) -> Result<PlanarPolySystem, String> {
    let mut fx = Jet::from_terms(2, 4, &[(&[0, 1], -1.0)]).map_err(|e| e.to_string())?;
    if sigma != 0.0 {
        fx.add_term(&[3, 0], sigma).map_err(|e| e.to_string())?;
    }
    let fy = Jet::from_terms(2, 4, &[(&[1, 0], 1.0)]).map_err(|e| e.to_string())?;
    Ok(PlanarPolySystem { fx, fy, stage: Stage::Dnf7 })
}

fn lyapunov_units() -> Measured {
    let mut worst: f64 = 0.0;
    for sigma in [1.0, -1.0, 0.5, -2.25, 3.0] {
        let l = lyapunov_df(&cubic_center(sigma)?).map_err(|e| e.to_string())?;
        worst = worst.max((l - 3.0 * sigma / 8.0).abs());
    }
    let l0 = lyapunov_df(&cubic_center(0.0)?).map_err(|e| e.to_string())?;
    worst = worst.max(l0.abs());
    Ok((worst <= 1e-14, worst, 1e-14, format!("cubic and linear centers, max error {worst:.1e}")))
}

/// Smoke case: the canonical record, where every ω and ρ fit should vanish.
pub fn canonical_smoke() -> CheckOutcome {
    let res = (|| -> Measured {
        let nf = NormalFormCoefficients::default();
        let l1 = fit_l1(&nf).map_err(|e| e.to_string())?;
        let lam = fit_lambda1(&nf).map_err(|e| e.to_string())?;
        let worst = l1
            .general
            .coeffs
            .iter()
            .chain(&l1.odd.coeffs)
            .chain(&lam.general.coeffs)
            .chain(&lam.even.coeffs)
            .fold(0.0f64, |a, c| a.max(c.abs()));
        Ok((worst < 1e-8, worst, 1e-8, format!("canonical record, max |fitted coefficient| {worst:.1e}")))
    })();
    outcome(0, "canonical smoke", res)
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "omega1 oracle"),
    (2, "omega2 oracle"),
    (3, "rho oracle"),
    (4, "equilibrium-series order"),
    (5, "Allee degeneracy"),
    (6, "Example 1 cycle"),
    (7, "Example 2 cycle"),
    (8, "invariant region"),
    (9, "SDI cyclicity"),
    (10, "Lyapunov unit checks"),
];

/// Runs one criterion by number.
pub fn run_check(id: u8, o: &SuiteOptions) -> Option<CheckOutcome> {
    let name = CRITERIA.iter().find(|c| c.0 == id)?.1;
    let res = match id {
        1 => omega1_oracle(o),
        2 => omega2_oracle(o),
        3 => rho_oracle(o),
        4 => series_order(o),
        5 => allee_degeneracy(),
        6 => example1_cycle(),
        7 => example2_cycle(),
        8 => invariant_region(o),
        9 => sdi_cyclicity(o),
        10 => lyapunov_units(),
        _ => return None,
    };
    Some(outcome(id, name, res))
}

/// Checks that compare closed forms against the blow-up oracle.
pub const ORACLE_IDS: [u8; 5] = [1, 2, 3, 4, 10];

pub fn run_all(o: &SuiteOptions) -> Vec<CheckOutcome> {
    CRITERIA.iter().filter_map(|c| run_check(c.0, o)).collect()
}

pub fn run_oracles(o: &SuiteOptions) -> Vec<CheckOutcome> {
    ORACLE_IDS.iter().filter_map(|&id| run_check(id, o)).collect()
}

/// One line per check: `[PASS] 1 omega1 oracle: ...`.
pub fn format_line(c: &CheckOutcome) -> String {
    format!("[{}] {:>2} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.name, c.detail)
}
