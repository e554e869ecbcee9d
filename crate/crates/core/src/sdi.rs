//! Slow divergence integral along canard cycles without head of the
//! Allee model and the resulting bound on the number of limit cycles.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::allee::{critical_curve, equilibria, fold_point, gamma_star, AlleeError, AlleeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdiError {
    #[error(transparent)]
    Allee(#[from] AlleeError),
    #[error("height {0} lies above the fold")]
    AboveFold(f64),
    #[error("s = {s} outside the admissible range (0, {s_max})")]
    Inadmissible { s: f64, s_max: f64 },
    #[error("quadrature did not converge: estimate {value:e}, error {error:e}")]
    Quadrature { value: f64, error: f64 },
    #[error("integrand is not finite at y = {0}")]
    NonFinite(f64),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("grid needs at least two points")]
    EmptyGrid,
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for k in 0..7 {
        let v = f(c - h * GK_NODES[k]) + f(c + h * GK_NODES[k]);
        kronrod += GK_WEIGHTS[k] * v;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * v;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive 15-point Gauss–Kronrod quadrature. Nodes never touch
/// the endpoints, so integrable endpoint singularities are tolerated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64, SdiError> {
    if a == b {
        return Ok(0.0);
    }
    let mut panels = vec![(a, b, gk15(&f, a, b))];
    for _ in 0..4000 {
        let total: f64 = panels.iter().map(|p| p.2 .0).sum();
        let err: f64 = panels.iter().map(|p| p.2 .1).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(SdiError::Quadrature { value: total, error: err });
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        let (k, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("non-empty");
        let (lo, hi, _) = panels.swap_remove(k);
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        panels.push((lo, mid, gk15(&f, lo, mid)));
        panels.push((mid, hi, gk15(&f, mid, hi)));
    }
    let value: f64 = panels.iter().map(|p| p.2 .0).sum();
    let error: f64 = panels.iter().map(|p| p.2 .1).sum();
    Err(SdiError::Quadrature { value, error })
}

/// Right and left preimages of height y on the critical curve, the roots of
/// x² + (m + n + y − 1)x + m(n + y) = 0.
pub fn branch_inverse(y: f64, p: &AlleeParams) -> Result<(f64, f64), SdiError> {
    let (_, ym) = fold_point(p.m, p.n)?;
    let s = 1.0 - p.m - p.n - y;
    let disc = s * s - 4.0 * p.m * (p.n + y);
    if disc < 0.0 {
        // round-off right at the fold
        if y <= ym + 1e-14 && disc > -1e-14 {
            return Ok((s / 2.0, s / 2.0));
        }
        return Err(SdiError::AboveFold(y));
    }
    let r = disc.sqrt();
    Ok(((s + r) / 2.0, (s - r) / 2.0))
}

/// Φ(y) = (α+γ)y + γ + n(α+γ) − √m·α − m(α+γ).
pub fn phi(y: f64, p: &AlleeParams) -> f64 {
    let ag = p.alpha + p.gamma;
    ag * y + p.gamma + p.n * ag - p.m.sqrt() * p.alpha - p.m * ag
}

/// Root of Φ.
pub fn phi_root(p: &AlleeParams) -> f64 {
    let ag = p.alpha + p.gamma;
    (p.m.sqrt() * p.alpha + (p.m - p.n) * ag - p.gamma) / ag
}

/// h(x) = ∂f/∂x / g on the critical curve, with β = β* + lambda0.
fn h_on_curve(x: f64, p: &AlleeParams, beta: f64) -> f64 {
    let fx = critical_curve(p.m, p.n, x);
    let slope = p.m / ((p.m + x) * (p.m + x)) - 1.0;
    x * slope / (fx * (p.alpha * x - beta - p.gamma * fx))
}

/// Lower end ŷ of the height range and the largest admissible s.
pub fn admissible_range(p: &AlleeParams) -> Result<(f64, f64), SdiError> {
    let (_, ym) = fold_point(p.m, p.n)?;
    let y_hat = equilibria(p)?.y_hat();
    Ok((y_hat, ym - y_hat))
}

fn beta_of(p: &AlleeParams, lambda0: f64) -> Result<f64, SdiError> {
    Ok(p.beta_star()? + lambda0)
}

fn check_s(p: &AlleeParams, s: f64) -> Result<f64, SdiError> {
    let (_, s_max) = admissible_range(p)?;
    if !(s > 0.0 && s < s_max) {
        return Err(SdiError::Inadmissible { s, s_max });
    }
    Ok(s_max)
}

/// Quadrature tolerance of the y-form.
pub const SDI_REL_TOL: f64 = 1e-10;

/// I(s) = ∫_{y_M}^{y_M−s} [h(σ(x)) − h(x)] dy with β = β* + lambda0.
/// Substituting y = y_M − u² removes the square-root behaviour at the fold.
pub fn slow_divergence_integral(p: &AlleeParams, lambda0: f64, s: f64) -> Result<f64, SdiError> {
    check_s(p, s)?;
    slow_divergence_integral_unchecked(p, lambda0, s)
}

fn slow_divergence_integral_unchecked(p: &AlleeParams, lambda0: f64, s: f64) -> Result<f64, SdiError> {
    let (_, ym) = fold_point(p.m, p.n)?;
    let beta = beta_of(p, lambda0)?;
    let bad = std::cell::Cell::new(None);
    let integrand = |u: f64| {
        let y = ym - u * u;
        match branch_inverse(y, p) {
            Ok((x, sx)) => {
                let v = (h_on_curve(sx, p, beta) - h_on_curve(x, p, beta)) * (-2.0 * u);
                if !v.is_finite() {
                    bad.set(Some(y));
                    return 0.0;
                }
                v
            }
            Err(_) => {
                bad.set(Some(y));
                0.0
            }
        }
    };
    let value = integrate(integrand, 0.0, s.sqrt(), SDI_REL_TOL, 1e-300)?;
    if let Some(y) = bad.get() {
        return Err(SdiError::NonFinite(y));
    }
    Ok(value)
}

/// Same integral in the original form ∫_{ω_s}^{α_s} (∂f/∂x)·F′/g dx,
/// split at the fold so that no node sits on it.
pub fn slow_divergence_integral_x(p: &AlleeParams, lambda0: f64, s: f64) -> Result<f64, SdiError> {
    check_s(p, s)?;
    let (xm, ym) = fold_point(p.m, p.n)?;
    let beta = beta_of(p, lambda0)?;
    let (omega, alpha_s) = branch_inverse(ym - s, p)?;
    let integrand = |x: f64| {
        let slope = p.m / ((p.m + x) * (p.m + x)) - 1.0;
        h_on_curve(x, p, beta) * slope
    };
    let right = integrate(integrand, omega, xm, SDI_REL_TOL, 1e-300)?;
    let left = integrate(integrand, xm, alpha_s, SDI_REL_TOL, 1e-300)?;
    Ok(right + left)
}

/// Sign of Φ over the height range [ŷ, y_M].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhiCase {
    /// m ≥ m*: Φ < 0 throughout.
    Negative,
    /// Root of Φ at or below the range: Φ > 0 throughout.
    Positive,
    /// Root of Φ inside the range.
    SignChange,
}

pub fn phi_case(p: &AlleeParams, y_hat: f64) -> Result<PhiCase, SdiError> {
    let (_, ym) = fold_point(p.m, p.n)?;
    Ok(if phi(ym, p) <= 0.0 {
        PhiCase::Negative
    } else if phi_root(p) <= y_hat {
        PhiCase::Positive
    } else {
        PhiCase::SignChange
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdiProfile {
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub zero_count: usize,
    pub case: PhiCase,
    pub y_hat: f64,
    pub s_max: f64,
}

fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<f64> = values.iter().filter(|v| **v != 0.0).map(|v| v.signum()).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Tolerance on |γ − γ*| for the cyclicity hypotheses.
pub const GAMMA_TOL: f64 = 1e-6;

/// I(s) on an interior grid of the admissible range, with λ0 = 0.
pub fn cyclicity_report(p: &AlleeParams, grid_size: usize) -> Result<SdiProfile, SdiError> {
    if grid_size < 2 {
        return Err(SdiError::EmptyGrid);
    }
    p.validate()?;
    let gs = gamma_star(p.m, p.n, p.alpha, p.beta)?;
    if (p.gamma - gs).abs() > GAMMA_TOL * gs.abs().max(1.0) {
        return Err(SdiError::Hypothesis(format!("γ = {} differs from γ* = {gs}", p.gamma)));
    }
    let (y_hat, s_max) = admissible_range(p)?;
    let s_grid: Vec<f64> = (1..=grid_size).map(|k| s_max * k as f64 / (grid_size + 1) as f64).collect();
    let values = s_grid
        .iter()
        .map(|&s| slow_divergence_integral_unchecked(p, 0.0, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut zero_count = 0;
    let mut last = None;
    for (k, v) in values.iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        if let Some((j, prev)) = last {
            if f64::signum(prev) != v.signum() {
                // refine the bracket to catch extra changes hiding inside it
                let (a, b) = (s_grid[j], s_grid[k]);
                let fine = (0..=8)
                    .map(|i| {
                        let s = a + (b - a) * i as f64 / 8.0;
                        if i == 0 {
                            Ok(prev)
                        } else if i == 8 {
                            Ok(*v)
                        } else {
                            slow_divergence_integral_unchecked(p, 0.0, s)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                zero_count += sign_changes(&fine);
            }
        }
        last = Some((k, *v));
    }
    Ok(SdiProfile { s_grid, values, zero_count, case: phi_case(p, y_hat)?, y_hat, s_max })
}

/// Pointwise check of the reference factorisation
/// h(σ) − h(x) = Ψ(σ)·Ψ(x)·(σ − x)·m^{2/3}·F(x)·Φ(y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FactorCheck {
    pub y: f64,
    pub lhs: f64,
    /// The right-hand side without the m^{2/3} factor.
    pub rhs_without_factor: f64,
    /// lhs / rhs_without_factor.
    pub measured_factor: f64,
    pub reference_factor: f64,
    /// m^{3/2}, which the measured factor matches.
    pub corrected_factor: f64,
}

pub fn check_factorisation(p: &AlleeParams, s: f64) -> Result<FactorCheck, SdiError> {
    let (_, ym) = fold_point(p.m, p.n)?;
    let beta = p.beta_star()?;
    let y = ym - s;
    let (x, sx) = branch_inverse(y, p)?;
    let aux = |x: f64| {
        let fx = critical_curve(p.m, p.n, x);
        (p.m - p.m.sqrt() + x) / ((p.m + x).powi(2) * (p.alpha * x - beta - p.gamma * fx) * (x / (p.m + x) - p.n - x))
    };
    let lhs = h_on_curve(sx, p, beta) - h_on_curve(x, p, beta);
    let rhs = aux(sx) * aux(x) * (sx - x) * critical_curve(p.m, p.n, x) * phi(y, p);
    Ok(FactorCheck { y, lhs, rhs_without_factor: rhs, measured_factor: lhs / rhs,
        reference_factor: p.m.powf(2.0 / 3.0),
        corrected_factor: p.m.powf(1.5),
    })
}

/// Random parameters satisfying the cyclicity hypotheses: γ = γ* via β = β*.
pub fn random_admissible<R: Rng + ?Sized>(rng: &mut R) -> AlleeParams {
    loop {
        let n = rng.gen_range(0.02..0.4);
        let m = rng.gen_range(0.05..0.95) * (1.0 - f64::sqrt(n)).powi(2);
        let mut p = AlleeParams {
            m,
            n,
            alpha: rng.gen_range(0.3..2.0),
            beta: 1.0,
            gamma: rng.gen_range(0.05..1.0),
            eps: 0.01,
        };
        let Ok(bs) = p.beta_star() else { continue };
        p.beta = bs;
        if p.validate().is_err() {
            continue;
        }
        if let Ok(gs) = gamma_star(p.m, p.n, p.alpha, p.beta) {
            if (gs - p.gamma).abs() <= GAMMA_TOL * gs.abs().max(1.0) {
                p.gamma = gs;
                return p;
            }
        }
    }
}
