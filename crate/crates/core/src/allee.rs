//! Predator-prey model with an Allee effect in the prey:
//! `x' = x(x/(m+x) − n − x − y)`, `y' = ε·y(αx − β − γy)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::{Jet, JetError};
use crate::normalform::{
    classify_hopf, compute_a, default_tol, omega_coefficients, rho_coefficients, HopfClass,
    NormalFormCoefficients,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlleeError {
    #[error("parameter {0} must be finite")]
    NonFinite(&'static str),
    #[error("parameter {name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("n must satisfy 0 < n < 1, got {0}")]
    BadN(f64),
    #[error("fold condition violated: need 0 < m < (1 − √n)² = {bound}, got m = {m}")]
    FoldCondition { m: f64, bound: f64 },
    #[error("eps must lie in (0, 0.1], got {0}")]
    BadEps(f64),
    #[error("fold is degenerate (α·x_M·y_M = {0})")]
    DegenerateFold(f64),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Dimensionless model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlleeParams {
    pub m: f64,
    pub n: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eps: f64,
}

fn check_mn(m: f64, n: f64, allow_boundary: bool) -> Result<(), AlleeError> {
    for (name, v) in [("m", m), ("n", n)] {
        if !v.is_finite() {
            return Err(AlleeError::NonFinite(name));
        }
    }
    if !(n > 0.0 && n < 1.0) {
        return Err(AlleeError::BadN(n));
    }
    let bound = (1.0 - n.sqrt()).powi(2);
    let ok = if allow_boundary { m > 0.0 && m <= bound } else { m > 0.0 && m < bound };
    if !ok {
        return Err(AlleeError::FoldCondition { m, bound });
    }
    Ok(())
}

impl AlleeParams {
    /// Example with a small stable Hopf cycle.
    pub const EXAMPLE_1: AlleeParams =
        AlleeParams { m: 0.3, n: 0.1, alpha: 0.849561, beta: 0.2, gamma: 0.1, eps: 0.0099 };
    /// Example at the degenerate case A = 0 with an unstable cycle.
    pub const EXAMPLE_2: AlleeParams =
        AlleeParams { m: 0.263075, n: 0.1, alpha: 0.8, beta: 0.138485, gamma: 0.4424, eps: 0.01 };

    pub fn validate(&self) -> Result<(), AlleeError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("eps", self.eps)] {
            if !v.is_finite() {
                return Err(AlleeError::NonFinite(name));
            }
        }
        check_mn(self.m, self.n, false)?;
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if value <= 0.0 {
                return Err(AlleeError::NonPositive { name, value });
            }
        }
        if !(self.eps > 0.0 && self.eps <= 0.1) {
            return Err(AlleeError::BadEps(self.eps));
        }
        Ok(())
    }

    /// Prey nullcline `F(x) = x/(m+x) − n − x`.
    pub fn critical_curve(&self, x: f64) -> f64 {
        critical_curve(self.m, self.n, x)
    }

    pub fn rhs(&self, p: [f64; 2]) -> [f64; 2] {
        let [x, y] = p;
        [x * (x / (self.m + x) - self.n - x - y), self.eps * y * (self.alpha * x - self.beta - self.gamma * y)]
    }

    pub fn jacobian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let [x, y] = p;
        let (m, n) = (self.m, self.n);
        let fx = x / (m + x) - n - 2.0 * x - y + x * m / ((m + x) * (m + x));
        let fy = -x;
        let gx = self.eps * self.alpha * y;
        let gy = self.eps * (self.alpha * x - self.beta - 2.0 * self.gamma * y);
        [[fx, fy], [gx, gy]]
    }

    /// β at which the fold is an equilibrium for the given γ.
    pub fn beta_star(&self) -> Result<f64, AlleeError> {
        let (xm, ym) = fold_point(self.m, self.n)?;
        Ok(self.alpha * xm - self.gamma * ym)
    }

    pub fn with_beta(&self, beta: f64) -> AlleeParams {
        AlleeParams { beta, ..*self }
    }
}

pub fn critical_curve(m: f64, n: f64, x: f64) -> f64 {
    x / (m + x) - n - x
}

fn critical_curve_slope(m: f64, x: f64) -> f64 {
    m / ((m + x) * (m + x)) - 1.0
}

/// Fold of the critical curve: `(√m − m, 1 − n + m − 2√m)`.
pub fn fold_point(m: f64, n: f64) -> Result<(f64, f64), AlleeError> {
    check_mn(m, n, true)?;
    let s = m.sqrt();
    Ok((s - m, 1.0 - n + m - 2.0 * s))
}

/// Intervals of x describing the three normally hyperbolic branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalBranches {
    /// Attracting branch on the prey-free axis x = 0, y ≥ 0.
    pub axis_attracting: bool,
    /// Repelling part of the curve y = F(x): x in (left_root, fold_x).
    pub repelling: (f64, f64),
    /// Attracting part of the curve y = F(x): x in (fold_x, right_root).
    pub attracting: (f64, f64),
}

pub fn critical_branches(m: f64, n: f64) -> Result<CriticalBranches, AlleeError> {
    check_mn(m, n, false)?;
    let (xm, _) = fold_point(m, n)?;
    let disc = (1.0 - m - n).powi(2) - 4.0 * m * n;
    let root = disc.max(0.0).sqrt();
    Ok(CriticalBranches {
        axis_attracting: true,
        repelling: ((1.0 - m - n - root) / 2.0, xm),
        attracting: (xm, (1.0 - m - n + root) / 2.0),
    })
}

/// ∂f/∂x on the curve y = F(x).
pub fn fast_divergence_on_curve(m: f64, x: f64) -> f64 {
    x * critical_curve_slope(m, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumKind {
    Saddle,
    StableNode,
    UnstableNode,
    StableFocus,
    UnstableFocus,
    Center,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x: f64,
    pub y: f64,
    pub kind: EquilibriumKind,
    pub trace: f64,
    pub determinant: f64,
    /// Largest |right-hand side| at the point.
    pub residual: f64,
}

fn classify(p: &AlleeParams, x: f64, y: f64) -> Equilibrium {
    let j = p.jacobian([x, y]);
    let trace = j[0][0] + j[1][1];
    let determinant = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let disc = trace * trace - 4.0 * determinant;
    let scale = j.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let tiny = 1e-13 * scale;
    let kind = if determinant < -tiny * scale {
        EquilibriumKind::Saddle
    } else if determinant.abs() <= tiny * scale {
        EquilibriumKind::Degenerate
    } else if disc >= 0.0 {
        if trace < 0.0 {
            EquilibriumKind::StableNode
        } else {
            EquilibriumKind::UnstableNode
        }
    } else if trace < -tiny {
        EquilibriumKind::StableFocus
    } else if trace > tiny {
        EquilibriumKind::UnstableFocus
    } else {
        EquilibriumKind::Center
    };
    let r = p.rhs([x, y]);
    Equilibrium { x, y, kind, trace, determinant, residual: r[0].abs().max(r[1].abs()) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriaReport {
    pub e0: Equilibrium,
    pub delta1: f64,
    pub delta2: f64,
    pub b: f64,
    pub c: f64,
    pub e1: Option<Equilibrium>,
    pub e2: Option<Equilibrium>,
    /// Single boundary equilibrium when the discriminant vanishes.
    pub e12_merged: Option<Equilibrium>,
    pub e3: Option<Equilibrium>,
    pub e4: Option<Equilibrium>,
    pub fold: (f64, f64),
}

impl EquilibriaReport {
    /// Lower end of the canard-family height range.
    pub fn y_hat(&self) -> f64 {
        match self.e3 {
            Some(e) if e.y >= 0.0 => e.y,
            _ => 0.0,
        }
    }
}

/// Tolerance for treating a discriminant as zero.
const DISC_TOL: f64 = 1e-14;

pub fn equilibria(p: &AlleeParams) -> Result<EquilibriaReport, AlleeError> {
    p.validate()?;
    let (m, n, a, b_, g) = (p.m, p.n, p.alpha, p.beta, p.gamma);
    let s = 1.0 - m - n;
    let delta1 = s * s - 4.0 * m * n;
    let (mut e1, mut e2, mut e12_merged) = (None, None, None);
    if s > 0.0 {
        if delta1.abs() <= DISC_TOL {
            e12_merged = Some(classify(p, s / 2.0, 0.0));
        } else if delta1 > 0.0 {
            let r = delta1.sqrt();
            e1 = Some(classify(p, (s - r) / 2.0, 0.0));
            e2 = Some(classify(p, (s + r) / 2.0, 0.0));
        }
    }
    let b = (g * (m + n - 1.0) + m * a - b_) / (a + g);
    let c = m * (g * n - b_) / (a + g);
    let delta2 = b * b - 4.0 * c;
    let (mut e3, mut e4) = (None, None);
    if delta1 > 0.0 && s > 0.0 && delta2 > 0.0 {
        let r = delta2.sqrt();
        let on_line = |x: f64| (x, (a * x - b_) / g);
        let (x3, y3) = on_line((-b - r) / 2.0);
        let (x4, y4) = on_line((-b + r) / 2.0);
        e3 = Some(classify(p, x3, y3));
        e4 = Some(classify(p, x4, y4));
    }
    Ok(EquilibriaReport {
        e0: classify(p, 0.0, 0.0),
        delta1,
        delta2,
        b,
        c,
        e1,
        e2,
        e12_merged,
        e3,
        e4,
        fold: fold_point(m, n)?,
    })
}

/// γ that places the fold on the predator nullcline, in reference form:
/// `(β + αm − α√m) / (−m + 2√m + n − 1)`.
pub fn gamma_star(m: f64, n: f64, alpha: f64, beta: f64) -> Result<f64, AlleeError> {
    let den = -m + 2.0 * m.sqrt() + n - 1.0;
    if den == 0.0 {
        return Err(AlleeError::ZeroDenominator("gamma_star"));
    }
    Ok((beta + alpha * m - alpha * m.sqrt()) / den)
}

/// Same quantity in the form `(α·x_M − β) / y_M`.
pub fn gamma_star_from_fold(m: f64, n: f64, alpha: f64, beta: f64) -> Result<f64, AlleeError> {
    let (xm, ym) = fold_point(m, n)?;
    if ym == 0.0 {
        return Err(AlleeError::ZeroDenominator("gamma_star"));
    }
    Ok((alpha * xm - beta) / ym)
}

/// Normal form of the model at the fold together with the scalings used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlleeNormalForm {
    pub coeffs: NormalFormCoefficients,
    /// x⁴ coefficient of the fast equation, outside the cubic record.
    pub h2_quadratic: f64,
    pub fold: (f64, f64),
    /// √(α·x_M·y_M); also the time scale.
    pub k: f64,
    /// x = x_M + scale_x·X. Negative: the orientation is flipped.
    pub scale_x: f64,
    /// y = y_M + scale_y·Y. Negative as well.
    pub scale_y: f64,
    pub beta_star: f64,
    /// β − β* = λ·lambda_to_beta, with λ the normal-form parameter.
    pub lambda_to_beta: f64,
    /// Normal-form parameter corresponding to the given β.
    pub lambda: f64,
    /// Largest deviation of the fixed entries (0, ±1) from their canonical values.
    pub structure_residual: f64,
}

impl AlleeNormalForm {
    pub fn beta_of_lambda(&self, lambda: f64) -> f64 {
        self.beta_star + lambda * self.lambda_to_beta
    }

    /// The scaled parameter in reference form, which carries the opposite sign.
    pub fn lambda_reference(&self, beta: f64) -> f64 {
        -(beta - self.beta_star) / self.lambda_to_beta
    }

    /// ω2 including the contribution of the x⁴ term: ω2 + 24·ρ1·h2_quadratic.
    pub fn omega2_corrected(&self) -> f64 {
        let (_, w2) = omega_coefficients(&self.coeffs);
        w2 + 24.0 * rho_coefficients(&self.coeffs).rho1 * self.h2_quadratic
    }
}

/// Moves the fold to the origin, rescales to the canonical normal form and
/// reads off the coefficients. The normal form is taken at β = β*.
pub fn normal_form_coeffs(p: &AlleeParams) -> Result<AlleeNormalForm, AlleeError> {
    p.validate()?;
    let (xm, ym) = fold_point(p.m, p.n)?;
    let kk = p.alpha * xm * ym;
    if !(kk > 0.0) {
        return Err(AlleeError::DegenerateFold(kk));
    }
    let k = kk.sqrt();
    let sm1 = p.m.sqrt() - 1.0;
    let sx = k / sm1;
    let sy = p.alpha * ym / sm1;
    let beta_star = p.alpha * xm - p.gamma * ym;
    let lambda_to_beta = p.alpha * k / sm1;

    const D: usize = 5;
    let v = |i| Jet::var(3, D, i);
    let x = v(0)?.scale(sx).add_constant(xm);
    let y = v(1)?.scale(sy).add_constant(ym);
    let beta = v(2)?.scale(lambda_to_beta).add_constant(beta_star);
    let frac = x.mul(&x.add_constant(p.m).recip()?)?;
    let fcurve = frac.sub(&x)?.add_constant(-p.n);
    let fast = x.mul(&fcurve.sub(&y)?)?.scale(1.0 / (sx * k));
    let inner = x.scale(p.alpha).sub(&beta)?.sub(&y.scale(p.gamma))?;
    let slow = y.mul(&inner)?.scale(1.0 / (sy * k));

    let cx = |i: u32, j: u32| fast.coeff(&[i, j, 0]).expect("three variables");
    let cy = |i: u32, j: u32, l: u32| slow.coeff(&[i, j, l]).expect("three variables");
    let mut nf = NormalFormCoefficients::default();
    for (key, i, j) in [("a10", 1, 0), ("a01", 0, 1), ("a20", 2, 0), ("a11", 1, 1), ("a02", 0, 2)] {
        nf.set(key, -cx(i, j + 1)).expect("known key");
    }
    nf.b10 = cx(3, 0);
    nf.d10 = cy(2, 0, 0);
    nf.d20 = cy(3, 0, 0);
    for (key, i, j) in [
        ("e10", 1, 0), ("e01", 0, 1), ("e20", 2, 0), ("e11", 1, 1), ("e02", 0, 2),
        ("e30", 3, 0), ("e21", 2, 1), ("e12", 1, 2), ("e03", 0, 3),
    ] {
        nf.set(key, -cy(i, j, 1)).expect("known key");
    }
    for (key, i, j) in [("f00", 0, 0), ("f10", 1, 0), ("f01", 0, 1), ("f20", 2, 0), ("f11", 1, 1), ("f02", 0, 2)] {
        nf.set(key, cy(i, j + 1, 0)).expect("known key");
    }
    let structure_residual = [
        cx(0, 0),
        cx(1, 0),
        cx(2, 0) - 1.0,
        cx(0, 1) + 1.0,
        cy(0, 0, 0),
        cy(1, 0, 0) - 1.0,
        cy(0, 0, 1) + 1.0,
    ]
    .iter()
    .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(AlleeNormalForm {
        coeffs: nf,
        h2_quadratic: cx(4, 0),
        fold: (xm, ym),
        k,
        scale_x: sx,
        scale_y: sy,
        beta_star,
        lambda_to_beta,
        lambda: (p.beta - beta_star) / lambda_to_beta,
        structure_residual,
    })
}

/// Closed forms of the leading entries: ∂h1/∂x, ∂h2/∂x and h6(0) at the given β.
pub fn leading_closed_forms(p: &AlleeParams) -> Result<(f64, f64, f64), AlleeError> {
    let (xm, ym) = fold_point(p.m, p.n)?;
    let k = (p.alpha * xm * ym).sqrt();
    let sm1 = p.m.sqrt() - 1.0;
    Ok((
        p.alpha * ym / (k * sm1),
        -k / (sm1 * sm1),
        (p.alpha * xm - p.beta - 2.0 * p.gamma * ym) / k,
    ))
}

/// Ψ(m) = 2γ(1 − √m) + α − 3α√m.
pub fn psi(m: f64, alpha: f64, gamma: f64) -> f64 {
    let s = m.sqrt();
    2.0 * gamma * (1.0 - s) + alpha - 3.0 * alpha * s
}

/// Root of Ψ: ((α + 2γ)/(3α + 2γ))².
pub fn m_star(alpha: f64, gamma: f64) -> f64 {
    ((alpha + 2.0 * gamma) / (3.0 * alpha + 2.0 * gamma)).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsiCase {
    /// m* inside the admissible range and m < m*: A > 0.
    BelowRoot,
    /// m* inside the admissible range and m > m*: A < 0.
    AboveRoot,
    /// m = m*: A = 0.
    AtRoot,
    /// m* beyond the admissible range: A > 0 throughout.
    RootOutside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiReport {
    pub psi: f64,
    pub m_star: f64,
    pub case: PsiCase,
    /// Sign of A implied by the case: −1, 0 or 1.
    pub a_sign: i8,
}

/// Ψ within this distance of zero counts as the degenerate case.
pub const PSI_ZERO_TOL: f64 = 1e-12;

pub fn psi_case_analysis(m: f64, n: f64, alpha: f64, gamma: f64) -> PsiReport {
    let value = psi(m, alpha, gamma);
    let ms = m_star(alpha, gamma);
    let case = if n > (2.0 * alpha / (3.0 * alpha + 2.0 * gamma)).powi(2) {
        PsiCase::RootOutside
    } else if value.abs() <= PSI_ZERO_TOL {
        PsiCase::AtRoot
    } else if m < ms {
        PsiCase::BelowRoot
    } else {
        PsiCase::AboveRoot
    };
    let a_sign = match case {
        PsiCase::BelowRoot | PsiCase::RootOutside => 1,
        PsiCase::AboveRoot => -1,
        PsiCase::AtRoot => 0,
    };
    PsiReport { psi: value, m_star: ms, case, a_sign }
}

/// Reference closed form of ω2 on the degenerate locus A = 0.
pub fn omega2_at_degeneracy(alpha: f64, gamma: f64, y_m: f64) -> Result<f64, AlleeError> {
    for (name, value) in [("alpha", alpha), ("gamma", gamma), ("y_M", y_m)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(AlleeError::NonPositive { name, value });
        }
    }
    let s2 = std::f64::consts::SQRT_2;
    let p = 3.0 * alpha + 2.0 * gamma;
    let q = alpha + 2.0 * gamma;
    let inner = 9.0 * s2 * p * q.sqrt() * y_m.powf(1.5) + 8.0 * (s2 * alpha * (q * y_m).sqrt() + 1.0);
    Ok(gamma * p * p * inner / (8.0 * alpha * alpha * q))
}

/// Hopf data of the model at its fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlleeHopf {
    #[serde(rename = "A")]
    pub a: f64,
    pub omega1: f64,
    /// ω2 of the cubic record alone.
    pub omega2: f64,
    /// ω2 including the x⁴ term of the fast equation.
    pub omega2_corrected: f64,
    pub rho1: f64,
    pub rho3: f64,
    pub classification: HopfClass,
}

/// Classification uses the corrected ω2.
pub fn allee_hopf(nf: &AlleeNormalForm) -> AlleeHopf {
    let (omega1, omega2) = omega_coefficients(&nf.coeffs);
    let w2c = nf.omega2_corrected();
    let rho = rho_coefficients(&nf.coeffs);
    AlleeHopf {
        a: compute_a(&nf.coeffs),
        omega1,
        omega2,
        omega2_corrected: w2c,
        rho1: rho.rho1,
        rho3: rho.rho3,
        classification: classify_hopf(omega1, w2c, default_tol(omega1, w2c)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationCurves {
    /// Singular Hopf curve in normal-form λ units.
    pub lambda_h: f64,
    /// Canard explosion curve in normal-form λ units.
    pub lambda_c: f64,
    /// Second reference closed form of the canard curve.
    pub lambda_c_reference: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub beta_star: f64,
    /// β on the Hopf and canard curves, using β − β* = λ·lambda_to_beta.
    pub beta_h: f64,
    pub beta_c: f64,
    pub lambda_to_beta: f64,
    pub gamma_star: f64,
    /// γ − γ*; the formulas assume it vanishes.
    pub coincidence_gap: f64,
    pub coincident: bool,
}

/// Tolerance on |γ − γ*| for the coincidence regime.
pub const COINCIDENCE_TOL: f64 = 1e-6;

pub fn model_bifurcation_curves(p: &AlleeParams) -> Result<BifurcationCurves, AlleeError> {
    p.validate()?;
    let s = 1.0 - p.m - p.n;
    if !(s > 0.0) {
        return Err(AlleeError::Hypothesis(format!("1 − m − n = {s} must be positive")));
    }
    let delta1 = s * s - 4.0 * p.m * p.n;
    if !(delta1 > 0.0) {
        return Err(AlleeError::Hypothesis(format!("boundary discriminant {delta1} must be positive")));
    }
    let nf = normal_form_coeffs(p)?;
    let (xm, ym) = nf.fold;
    let k = nf.k;
    let a = compute_a(&nf.coeffs);
    let eps = p.eps;
    let (_, _, a5) = leading_closed_forms(p)?;
    let lambda_h = -a5 / 2.0 * eps;
    let lambda_c = lambda_h - a / 8.0 * eps;
    let sm = p.m.sqrt();
    let lambda_c_reference = (4.0 * (sm - 1.0) * (p.beta - p.alpha * xm)
        - ym * (p.alpha + 3.0 * p.alpha * sm - 6.0 * p.gamma * (sm - 1.0)))
        / (8.0 * (sm - 1.0) * k)
        * eps;
    let gs = gamma_star(p.m, p.n, p.alpha, p.beta)?;
    let gap = p.gamma - gs;
    Ok(BifurcationCurves {
        lambda_h,
        lambda_c,
        lambda_c_reference,
        a,
        beta_star: nf.beta_star,
        beta_h: nf.beta_of_lambda(lambda_h),
        beta_c: nf.beta_of_lambda(lambda_c),
        lambda_to_beta: nf.lambda_to_beta,
        gamma_star: gs,
        coincidence_gap: gap,
        coincident: gap.abs() <= COINCIDENCE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::omega2_lines;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_params<R: Rng>(rng: &mut R) -> AlleeParams {
        loop {
            let n = rng.gen_range(0.01..0.5);
            let m = rng.gen_range(0.01..0.99) * (1.0 - f64::sqrt(n)).powi(2);
            let p = AlleeParams {
                m,
                n,
                alpha: rng.gen_range(0.2..2.0),
                beta: rng.gen_range(0.01..0.5),
                gamma: rng.gen_range(0.05..1.0),
                eps: 0.01,
            };
            if p.validate().is_ok() {
                return p;
            }
        }
    }

    #[test]
    fn fold_examples() {
        let (x, y) = fold_point(0.25, 0.1).unwrap();
        assert!((x - 0.25).abs() < 1e-15 && (y - 0.15).abs() < 1e-15);
        let (x, y) = fold_point(0.3, 0.1).unwrap();
        assert!((x - 0.2477226).abs() < 1e-7 && (y - 0.1045549).abs() < 1e-7);
        let n: f64 = 0.2;
        let (_, y) = fold_point((1.0 - n.sqrt()).powi(2), n).unwrap();
        assert!(y.abs() < 1e-15);
        assert!(fold_point(0.9, 0.1).is_err());
        assert!(fold_point(0.1, 1.5).is_err());
    }

    #[test]
    fn fold_is_a_maximum() {
        let (m, n) = (0.3, 0.1);
        let (x, _) = fold_point(m, n).unwrap();
        let h = 1e-5;
        let f = |x| critical_curve(m, n, x);
        assert!(((f(x + h) - f(x - h)) / (2.0 * h)).abs() < 1e-9);
        assert!(f(x + h) - 2.0 * f(x) + f(x - h) < 0.0);
    }

    #[test]
    fn branch_stability() {
        let (m, n) = (0.3, 0.1);
        let b = critical_branches(m, n).unwrap();
        assert!((b.repelling.1 - (m.sqrt() - m)).abs() < 1e-15);
        let p = AlleeParams { m, n, ..AlleeParams::EXAMPLE_1 };
        let df = |x: f64| {
            let h = 1e-6;
            let y = critical_curve(m, n, x);
            (p.rhs([x + h, y])[0] - p.rhs([x - h, y])[0]) / (2.0 * h)
        };
        for t in [0.1, 0.5, 0.9] {
            let xa = b.attracting.0 + t * (b.attracting.1 - b.attracting.0);
            let xr = b.repelling.0 + t * (b.repelling.1 - b.repelling.0);
            assert!(df(xa) < 0.0);
            assert!(df(xr) > 0.0);
        }
        assert!(p.rhs([1e-7, 0.3])[0] / 1e-7 < 0.0);
    }

    #[test]
    fn boundary_equilibria() {
        let p = AlleeParams { m: 0.1, n: 0.1, ..AlleeParams::EXAMPLE_1 };
        let r = equilibria(&p).unwrap();
        let (e1, e2) = (r.e1.unwrap(), r.e2.unwrap());
        assert!((e1.x - 0.0127016).abs() < 1e-7);
        assert!((e2.x - 0.7872984).abs() < 1e-7);
        assert!((e1.x + e2.x - 0.8).abs() < 1e-12);
        assert!((e1.x * e2.x - 0.01).abs() < 1e-12);
        assert_eq!(e1.kind, EquilibriumKind::Saddle);
        assert_eq!(e2.kind, EquilibriumKind::Saddle);
        assert_eq!((r.e0.x, r.e0.y), (0.0, 0.0));
        assert_eq!(r.e0.kind, EquilibriumKind::StableNode);
    }

    #[test]
    fn merged_boundary_equilibrium() {
        // Δ1 = 0 exactly needs m on the boundary, which validation rejects;
        // step just inside and check the two roots nearly coincide.
        let n: f64 = 0.25;
        let m = (1.0 - n.sqrt()).powi(2) * (1.0 - 1e-15);
        let p = AlleeParams { m, n, ..AlleeParams::EXAMPLE_1 };
        let r = equilibria(&p).unwrap();
        let count = r.e1.iter().count() + r.e2.iter().count() + r.e12_merged.iter().count();
        assert!(r.e12_merged.is_some() || (r.e2.unwrap().x - r.e1.unwrap().x).abs() < 1e-6);
        assert!(count == 1 || count == 2);
    }

    #[test]
    fn interior_equilibria_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = 0;
        for _ in 0..200 {
            let p = random_params(&mut rng);
            let r = equilibria(&p).unwrap();
            for e in [r.e1, r.e2, r.e3, r.e4].into_iter().flatten() {
                assert!(e.residual < 1e-10, "{e:?}");
            }
            if let (Some(e3), Some(e4)) = (r.e3, r.e4) {
                seen += 1;
                assert!(e3.x < e4.x);
                if e3.x > 0.0 && e4.x > 0.0 && e3.y > 0.0 {
                    assert_eq!(e3.kind, EquilibriumKind::Saddle);
                    assert_ne!(e4.kind, EquilibriumKind::Saddle);
                }
            }
        }
        assert!(seen > 10);
    }

    #[test]
    fn example_1_equilibria() {
        let r = equilibria(&AlleeParams::EXAMPLE_1).unwrap();
        let e4 = r.e4.unwrap();
        assert!((e4.x - r.fold.0).abs() < 1e-3);
        assert_eq!(e4.kind, EquilibriumKind::StableFocus);
    }

    #[test]
    fn gamma_star_forms() {
        assert!((gamma_star(0.25, 0.1, 1.0, 0.2).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((gamma_star_from_fold(0.25, 0.1, 1.0, 0.2).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let a = gamma_star(p.m, p.n, p.alpha, p.beta).unwrap();
            let b = gamma_star_from_fold(p.m, p.n, p.alpha, p.beta).unwrap();
            // both forms divide by y_M, so round-off grows like 1/y_M
            let (_, ym) = fold_point(p.m, p.n).unwrap();
            let tol = 2e-15 * (a.abs() + p.alpha + p.beta) / ym;
            assert!((a - b).abs() < tol, "{a} {b}");
        }
        let (xm, _) = fold_point(0.25, 0.1).unwrap();
        assert!(gamma_star(0.25, 0.1, 1.0, xm).unwrap().abs() < 1e-15);
    }

    #[test]
    fn normal_form_matches_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let nf = normal_form_coeffs(&p).unwrap();
            assert!(nf.structure_residual < 1e-12, "{}", nf.structure_residual);
            let at_base = p.with_beta(nf.beta_star);
            let (a2, a3, a5) = leading_closed_forms(&at_base).unwrap();
            let c = &nf.coeffs;
            assert!((c.a10 - a2).abs() < 1e-12 * a2.abs().max(1.0));
            assert!((c.b10 - a3).abs() < 1e-12 * a3.abs().max(1.0));
            assert!((c.f00 - a5).abs() < 1e-12 * a5.abs().max(1.0));
            assert_eq!(c.c10, 0.0);
            assert!(c.d10.abs() < 1e-12);
            let sm1 = p.m.sqrt() - 1.0;
            assert!((c.e01 - p.alpha / sm1).abs() < 1e-12 * c.e01.abs());
            assert!((c.f10 - p.alpha / sm1).abs() < 1e-12 * c.f10.abs());
            let (xm, ym) = nf.fold;
            let f01 = p.gamma * nf.k / ((1.0 - p.m.sqrt()) * xm);
            assert!((c.f01 - f01).abs() < 1e-12 * f01.abs());
            let b20 = nf.scale_x.powi(3) / (nf.k * p.m.sqrt());
            assert!((nf.h2_quadratic - b20).abs() < 1e-12 * b20.abs());
            let a = compute_a(c);
            let want = psi(p.m, p.alpha, p.gamma) * ym / (nf.k * (1.0 - p.m.sqrt()));
            assert!((a - want).abs() < 1e-11 * want.abs().max(1.0));
            assert_eq!(a.signum() as i8, psi_case_analysis(p.m, p.n, p.alpha, p.gamma).a_sign);
        }
    }

    #[test]
    fn lambda_conversion_round_trip() {
        let p = AlleeParams::EXAMPLE_2;
        let nf = normal_form_coeffs(&p).unwrap();
        assert!((nf.beta_of_lambda(nf.lambda) - p.beta).abs() < 1e-15);
        assert!((nf.lambda_reference(p.beta) + nf.lambda).abs() < 1e-15);
    }

    #[test]
    fn psi_cases() {
        let ms = m_star(0.8, 0.4424);
        assert!((ms - 0.263075).abs() < 1e-6);
        assert!(psi(ms, 0.8, 0.4424).abs() < 1e-15);
        let r = psi_case_analysis(0.3, 0.1, 0.849561, 0.1);
        assert_eq!(r.case, PsiCase::AboveRoot);
        assert_eq!(psi_case_analysis(0.1, 0.1, 0.849561, 0.1).case, PsiCase::BelowRoot);
        assert_eq!(psi_case_analysis(ms, 0.1, 0.8, 0.4424).case, PsiCase::AtRoot);
        // n above (2α/(3α+2γ))²
        let r = psi_case_analysis(0.01, 0.5, 0.8, 0.4424);
        assert_eq!((r.case, r.a_sign), (PsiCase::RootOutside, 1));
    }

    #[test]
    fn m_star_unique_root() {
        let (a, g, n) = (0.8, 0.4424, 0.1);
        let ms = m_star(a, g);
        let top = (1.0 - f64::sqrt(n)).powi(2);
        assert!(ms < top);
        let mut prev = f64::INFINITY;
        for k in 1..200 {
            let m = top * k as f64 / 200.0;
            let v = psi(m, a, g);
            assert!(v < prev);
            prev = v;
            assert_eq!(v > 0.0, m < ms);
        }
    }

    #[test]
    fn omega2_closed_form_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let v = omega2_at_degeneracy(rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0), rng.gen_range(0.01..3.0));
            assert!(v.unwrap() > 0.0);
        }
        assert!(omega2_at_degeneracy(0.8, 1e-12, 0.1).unwrap() < 1e-9);
        assert!(omega2_at_degeneracy(0.8, 0.0, 0.1).is_err());
    }

    #[test]
    fn example_2_degeneracy() {
        let ms = m_star(0.8, 0.4424);
        let p = AlleeParams { m: ms, ..AlleeParams::EXAMPLE_2 };
        let nf = normal_form_coeffs(&p).unwrap();
        let h = allee_hopf(&nf);
        assert!(h.a.abs() < 1e-12);
        assert_eq!(h.classification, HopfClass::DegenerateSubcritical);
        assert!(h.omega2 > 0.0 && h.omega2_corrected > 0.0);
        assert!((h.omega2 - omega2_lines(&nf.coeffs).iter().sum::<f64>()).abs() < 1e-12);
        let reference = omega2_at_degeneracy(p.alpha, p.gamma, nf.fold.1).unwrap();
        assert!(reference > 0.0);
        // the reference value does not reproduce the general ω2
        assert!((reference - h.omega2).abs() / h.omega2 > 0.1);
        // at the rounded m the sign of A still follows Ψ
        let nf = normal_form_coeffs(&AlleeParams::EXAMPLE_2).unwrap();
        let a = compute_a(&nf.coeffs);
        assert!(a.abs() < 1e-5);
        assert_eq!(a.signum() as i8, psi_case_analysis(0.263075, 0.1, 0.8, 0.4424).a_sign);
    }

    #[test]
    fn quartic_correction_matches_oracle() {
        let p = AlleeParams { m: m_star(0.8, 0.4424), ..AlleeParams::EXAMPLE_2 };
        let nf = normal_form_coeffs(&p).unwrap();
        let fit = crate::blowup::fit_l1_extended(&nf.coeffs, nf.h2_quadratic).unwrap();
        let w2 = nf.omega2_corrected();
        assert!((fit.omega2() - w2).abs() < 1e-2 * w2.abs(), "{} vs {}", fit.omega2(), w2);
    }

    #[test]
    fn example_1_curves() {
        let c = model_bifurcation_curves(&AlleeParams::EXAMPLE_1).unwrap();
        assert!(c.lambda_h.is_finite() && c.lambda_h != 0.0);
        assert!(c.coincident);
        assert!(((c.lambda_c - c.lambda_h) + c.a / 8.0 * 0.0099).abs() < 1e-15);
        // E4 is stable above β_h, which lies below β*
        assert!(c.beta_h < c.beta_star);
    }

    #[test]
    fn curves_vanish_with_eps_and_merge_at_degeneracy() {
        let ms = m_star(0.8, 0.4424);
        let mut p = AlleeParams { m: ms, ..AlleeParams::EXAMPLE_2 };
        p.beta = p.beta_star().unwrap();
        let c = model_bifurcation_curves(&p).unwrap();
        assert!((c.lambda_c - c.lambda_h).abs() < 1e-7 * p.eps);
        assert!(c.coincident);
        p.eps = 1e-9;
        let c = model_bifurcation_curves(&p).unwrap();
        assert!(c.lambda_h.abs() < 1e-8 && c.lambda_c.abs() < 1e-8);
    }

    #[test]
    fn reference_canard_form_disagrees() {
        let c = model_bifurcation_curves(&AlleeParams::EXAMPLE_1).unwrap();
        assert!((c.lambda_c - c.lambda_c_reference).abs() > 1e-4);
    }

    #[test]
    fn example_2_is_off_the_coincidence_locus() {
        let c = model_bifurcation_curves(&AlleeParams::EXAMPLE_2).unwrap();
        assert!(!c.coincident);
        assert!((c.gamma_star - 0.44720).abs() < 1e-4);
    }

    #[test]
    fn validation_messages() {
        let p = AlleeParams { n: 1.5, ..AlleeParams::EXAMPLE_1 };
        assert_eq!(p.validate(), Err(AlleeError::BadN(1.5)));
        let p = AlleeParams { m: 0.9, ..AlleeParams::EXAMPLE_1 };
        assert!(p.validate().unwrap_err().to_string().contains("(1 − √n)²"));
        let p = AlleeParams { eps: 0.5, ..AlleeParams::EXAMPLE_1 };
        assert!(p.validate().is_err());
        let p = AlleeParams { alpha: -1.0, ..AlleeParams::EXAMPLE_1 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = serde_json::to_string(&AlleeParams::EXAMPLE_2).unwrap();
        let back: AlleeParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, AlleeParams::EXAMPLE_2);
        assert!(serde_json::from_str::<AlleeParams>(r#"{"m":0.3}"#).is_err());
    }
}
