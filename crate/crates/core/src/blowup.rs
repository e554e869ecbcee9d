//! Blow-up oracle for the normal form: rescale around the fold, follow the
//! equilibrium, move it to the origin, normalise the linear part to a
//! rotation at the Hopf point and evaluate the planar first Lyapunov
//! coefficient. Closed forms in [`crate::normalform`] are checked against
//! least-squares fits of these numbers over a grid of radii.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::jet::{Jet, JetError};
use crate::normalform::NormalFormCoefficients;

/// Degree bound of the planar jets: cubic terms plus one guard order.
pub const SYSTEM_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("vanishing denominator {0}")]
    VanishingDenominator(&'static str),
    #[error("point is not an equilibrium: residual {0:e}")]
    ResidualTooLarge(f64),
    #[error("linear part has real eigenvalues (4N − M² = {0:e})")]
    RealEigenvalues(f64),
    #[error("pivot of branch {0:?} is zero")]
    ZeroPivot(Branch),
    #[error("{what} did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iterations: usize, residual: f64 },
    #[error("linear part is not a pure rotation: trace {0:e}")]
    NonzeroTrace(f64),
    #[error("rotation frequency is zero")]
    ZeroRotation,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("sample radii must be distinct")]
    DuplicateSample,
    #[error("design matrix is rank deficient")]
    RankDeficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    /// Blown-up chart.
    Dnf3,
    /// Equilibrium moved to the origin.
    Dnf5,
    /// Linear part normalised to scaling plus rotation.
    Dnf6,
    /// Pure rotation at the Hopf point.
    Dnf7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    UseN10,
    UseM01,
    Auto,
}

/// Planar polynomial field `x' = fx(x, y)`, `y' = fy(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarPolySystem {
    pub fx: Jet,
    pub fy: Jet,
    pub stage: Stage,
}

impl PlanarPolySystem {
    fn from_tables(m: &[[f64; 5]; 5], n: &[[f64; 5]; 5], stage: Stage) -> Self {
        let mut fx = Jet::zero(2, SYSTEM_DEGREE).expect("two variables");
        let mut fy = fx.clone();
        for i in 0..5u32 {
            for j in 0..5u32 {
                if i + j <= SYSTEM_DEGREE as u32 {
                    fx.set_coeff(&[i, j], m[i as usize][j as usize]).expect("two variables");
                    fy.set_coeff(&[i, j], n[i as usize][j as usize]).expect("two variables");
                }
            }
        }
        PlanarPolySystem { fx, fy, stage }
    }

    pub fn m(&self, i: u32, j: u32) -> f64 {
        self.fx.c2(i, j)
    }

    pub fn n(&self, i: u32, j: u32) -> f64 {
        self.fy.c2(i, j)
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        [self.fx.eval(&p).expect("two variables"), self.fy.eval(&p).expect("two variables")]
    }

    pub fn jacobian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let d = |j: &Jet, v: usize| j.diff(v).expect("two variables").eval(&p).expect("two variables");
        [[d(&self.fx, 0), d(&self.fx, 1)], [d(&self.fy, 0), d(&self.fy, 1)]]
    }

    pub fn linear_part(&self) -> [[f64; 2]; 2] {
        [[self.m(1, 0), self.m(0, 1)], [self.n(1, 0), self.n(0, 1)]]
    }

    /// `(name, value)` for every coefficient with 1 ≤ i+j ≤ 3.
    pub fn named_coefficients(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (tag, jet) in [("m", &self.fx), ("n", &self.fy)] {
            for d in 1..=3u32 {
                for i in (0..=d).rev() {
                    out.push((format!("{tag}{i}{}", d - i), jet.c2(i, d - i)));
                }
            }
        }
        out
    }
}

/// Raw coefficient tables of the blown-up system, indexed `[i][j]` for x1^i y1^j.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dnf3Table {
    m: [[f64; 5]; 5],
    n: [[f64; 5]; 5],
}

impl Dnf3Table {
    fn new(nf: &NormalFormCoefficients, h2_quadratic: f64, r: f64, l1: f64) -> Self {
        let c = nf;
        let r2 = r * r;
        let mut m = [[0.0; 5]; 5];
        let mut n = [[0.0; 5]; 5];
        m[1][0] = r * c.c10;
        m[0][1] = -1.0 + r2 * c.c01;
        m[2][0] = 1.0 + r2 * c.c20;
        m[1][1] = r * (r2 * c.c11 - c.a10);
        m[0][2] = r2 * (r2 * c.c02 - c.a01);
        m[3][0] = r * (c.b10 + r2 * c.c30);
        m[2][1] = r2 * (r2 * c.c21 - c.a20);
        m[1][2] = r2 * r * (r2 * c.c12 - c.a11);
        m[0][3] = r2 * r2 * (r2 * c.c03 - c.a02);
        m[4][0] = r2 * h2_quadratic;
        let lr = l1 * r;
        n[0][0] = -l1;
        n[1][0] = 1.0 - lr * c.e10;
        n[0][1] = r * (c.f00 - lr * c.e01);
        n[2][0] = r * (c.d10 - lr * c.e20);
        n[1][1] = r2 * (c.f10 - lr * c.e11);
        n[0][2] = r2 * r * (c.f01 - lr * c.e02);
        n[3][0] = r2 * (c.d20 - lr * c.e30);
        n[2][1] = r2 * r * (c.f20 - lr * c.e21);
        n[1][2] = r2 * r2 * (c.f11 - lr * c.e12);
        n[0][3] = r2 * r2 * r * (c.f02 - lr * c.e03);
        Dnf3Table { m, n }
    }

    fn eval(t: &[[f64; 5]; 5], x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..5).rev() {
            let mut row = 0.0;
            for j in (0..5 - i).rev() {
                row = row * y + t[i][j];
            }
            acc = acc * x + row;
        }
        acc
    }

    fn dx(t: &[[f64; 5]; 5], x: f64, y: f64) -> f64 {
        let mut d = [[0.0; 5]; 5];
        for i in 1..5 {
            for j in 0..5 - i {
                d[i - 1][j] = i as f64 * t[i][j];
            }
        }
        Self::eval(&d, x, y)
    }

    fn dy(t: &[[f64; 5]; 5], x: f64, y: f64) -> f64 {
        let mut d = [[0.0; 5]; 5];
        for i in 0..5 {
            for j in 1..5 - i {
                d[i][j - 1] = j as f64 * t[i][j];
            }
        }
        Self::eval(&d, x, y)
    }

    fn residual(&self, p: [f64; 2]) -> f64 {
        Self::eval(&self.m, p[0], p[1]).abs().max(Self::eval(&self.n, p[0], p[1]).abs())
    }

    fn jacobian(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        [
            [Self::dx(&self.m, p[0], p[1]), Self::dy(&self.m, p[0], p[1])],
            [Self::dx(&self.n, p[0], p[1]), Self::dy(&self.n, p[0], p[1])],
        ]
    }

    /// Newton from the series head. Residual 1e−12, at most 50 iterations.
    fn equilibrium(&self) -> Result<[f64; 2], BlowupError> {
        let (m, n) = (&self.m, &self.n);
        if n[1][0] == 0.0 || m[0][1] == 0.0 {
            return Err(BlowupError::VanishingDenominator("n10·m01"));
        }
        let mut p = [-n[0][0] / n[1][0], -m[2][0] * n[0][0] * n[0][0] / (m[0][1] * n[1][0] * n[1][0])];
        let mut res = f64::INFINITY;
        for _ in 0..50 {
            let f = [Self::eval(m, p[0], p[1]), Self::eval(n, p[0], p[1])];
            res = f[0].abs().max(f[1].abs());
            let j = self.jacobian(p);
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 {
                return Err(BlowupError::VanishingDenominator("equilibrium Jacobian"));
            }
            let dx = (f[0] * j[1][1] - f[1] * j[0][1]) / det;
            let dy = (j[0][0] * f[1] - j[1][0] * f[0]) / det;
            p = [p[0] - dx, p[1] - dy];
            if res < 1e-12 && dx.abs().max(dy.abs()) < 1e-15 {
                return Ok(p);
            }
        }
        let fin = self.residual(p);
        if fin < 1e-12 {
            return Ok(p);
        }
        Err(BlowupError::NoConvergence { what: "equilibrium Newton", iterations: 50, residual: res.min(fin) })
    }
}

fn check_radius(r: f64) -> Result<(), BlowupError> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(BlowupError::NonPositiveRadius(r))
    }
}

/// Blown-up system from the coefficient tables (x = r·x1, y = r²·y1,
/// λ = r·λ1, ε = r², time divided by r).
pub fn blow_up(nf: &NormalFormCoefficients, r: f64, lambda1: f64) -> Result<PlanarPolySystem, BlowupError> {
    blow_up_extended(nf, 0.0, r, lambda1)
}

/// As [`blow_up`], with an extra x⁴ term `h2_quadratic·x⁴` in the fast equation.
pub fn blow_up_extended(
    nf: &NormalFormCoefficients,
    h2_quadratic: f64,
    r: f64,
    lambda1: f64,
) -> Result<PlanarPolySystem, BlowupError> {
    check_radius(r)?;
    let t = Dnf3Table::new(nf, h2_quadratic, r, lambda1);
    Ok(PlanarPolySystem::from_tables(&t.m, &t.n, Stage::Dnf3))
}

/// The normal form as exact polynomials in (x, y, λ, ε).
pub fn normal_form_jets(nf: &NormalFormCoefficients) -> Result<(Jet, Jet), JetError> {
    normal_form_jets_extended(nf, 0.0)
}

fn normal_form_jets_extended(nf: &NormalFormCoefficients, h2_quadratic: f64) -> Result<(Jet, Jet), JetError> {
    const D: usize = 6;
    let v = |i| Jet::var(4, D, i);
    let (x, y, lam, eps) = (v(0)?, v(1)?, v(2)?, v(3)?);
    let poly = |terms: &[((u32, u32), f64)], constant: f64| -> Result<Jet, JetError> {
        let mut j = Jet::constant(4, D, constant)?;
        for &((i, k), c) in terms {
            j.add_term(&[i, k, 0, 0], c)?;
        }
        Ok(j)
    };
    let h1 = poly(&[((1, 0), nf.a10), ((0, 1), nf.a01), ((2, 0), nf.a20), ((1, 1), nf.a11), ((0, 2), nf.a02)], 1.0)?;
    let h2 = poly(&[((1, 0), nf.b10), ((2, 0), h2_quadratic)], 1.0)?;
    let h3 = poly(
        &[
            ((1, 0), nf.c10), ((0, 1), nf.c01), ((2, 0), nf.c20), ((1, 1), nf.c11), ((0, 2), nf.c02),
            ((3, 0), nf.c30), ((2, 1), nf.c21), ((1, 2), nf.c12), ((0, 3), nf.c03),
        ],
        0.0,
    )?;
    let h4 = poly(&[((1, 0), nf.d10), ((2, 0), nf.d20)], 1.0)?;
    let h5 = poly(
        &[
            ((1, 0), nf.e10), ((0, 1), nf.e01), ((2, 0), nf.e20), ((1, 1), nf.e11), ((0, 2), nf.e02),
            ((3, 0), nf.e30), ((2, 1), nf.e21), ((1, 2), nf.e12), ((0, 3), nf.e03),
        ],
        1.0,
    )?;
    let h6 = poly(
        &[((1, 0), nf.f10), ((0, 1), nf.f01), ((2, 0), nf.f20), ((1, 1), nf.f11), ((0, 2), nf.f02)],
        nf.f00,
    )?;
    let fx = y.scale(-1.0).mul(&h1)?.add(&x.mul(&x)?.mul(&h2)?)?.add(&eps.mul(&h3)?)?;
    let inner = x.mul(&h4)?.sub(&lam.mul(&h5)?)?.add(&y.mul(&h6)?)?;
    let fy = eps.mul(&inner)?;
    Ok((fx, fy))
}

/// Blow-up by composing the normal-form polynomials with the rescaling.
pub fn blow_up_jet(nf: &NormalFormCoefficients, r: f64, lambda1: f64) -> Result<PlanarPolySystem, BlowupError> {
    blow_up_jet_extended(nf, 0.0, r, lambda1)
}

pub fn blow_up_jet_extended(
    nf: &NormalFormCoefficients,
    h2_quadratic: f64,
    r: f64,
    lambda1: f64,
) -> Result<PlanarPolySystem, BlowupError> {
    check_radius(r)?;
    let (fx, fy) = normal_form_jets_extended(nf, h2_quadratic)?;
    let subs = [
        Jet::var(2, SYSTEM_DEGREE, 0)?.scale(r),
        Jet::var(2, SYSTEM_DEGREE, 1)?.scale(r * r),
        Jet::constant(2, SYSTEM_DEGREE, r * lambda1)?,
        Jet::constant(2, SYSTEM_DEGREE, r * r)?,
    ];
    // x1' = x'/r², y1' = y'/r³ after dividing time by r
    let gx = fx.compose(&subs)?.scale(1.0 / (r * r));
    let gy = fy.compose(&subs)?.scale(1.0 / (r * r * r));
    Ok(PlanarPolySystem { fx: gx, fy: gy, stage: Stage::Dnf3 })
}

/// Power of r factored out of each blown-up coefficient before the series
/// formulas are applied.
fn m_strip(i: u32, j: u32) -> i32 {
    match (i, j) {
        (1, 0) => 1,
        (1, 1) | (3, 0) => 1,
        (0, 2) | (2, 1) => 2,
        (1, 2) => 3,
        (0, 3) => 4,
        _ => 0,
    }
}

fn n_strip(i: u32, j: u32) -> i32 {
    match (i, j) {
        (0, 1) | (2, 0) => 1,
        (1, 1) | (3, 0) => 2,
        (0, 2) | (2, 1) => 3,
        (1, 2) => 4,
        (0, 3) => 5,
        _ => 0,
    }
}

/// Coefficients with their leading powers of r divided out.
#[derive(Debug, Clone, Copy)]
struct Stripped {
    m: [[f64; 4]; 4],
    n: [[f64; 4]; 4],
}

impl Stripped {
    fn new(sys: &PlanarPolySystem, r: f64) -> Self {
        let mut m = [[0.0; 4]; 4];
        let mut n = [[0.0; 4]; 4];
        for i in 0..4u32 {
            for j in 0..4u32 - i {
                m[i as usize][j as usize] = sys.m(i, j) / r.powi(m_strip(i, j));
                n[i as usize][j as usize] = sys.n(i, j) / r.powi(n_strip(i, j));
            }
        }
        Stripped { m, n }
    }
}

/// Equilibrium of the blown-up system as x1* = Σ p_k r^k, y1* = Σ q_k r^k.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumSeries {
    pub p: [f64; 4],
    pub q: [f64; 4],
}

impl EquilibriumSeries {
    pub fn point(&self, r: f64) -> [f64; 2] {
        let s = |c: &[f64; 4]| ((c[3] * r + c[2]) * r + c[1]) * r + c[0];
        [s(&self.p), s(&self.q)]
    }
}

pub fn equilibrium_series(sys: &PlanarPolySystem, r: f64) -> Result<EquilibriumSeries, BlowupError> {
    check_radius(r)?;
    let s = Stripped::new(sys, r);
    let m = |i: usize, j: usize| s.m[i][j];
    let n = |i: usize, j: usize| s.n[i][j];
    let (n00, n10, n01, n20, n11, n02, n30, n21) =
        (sys.n(0, 0), n(1, 0), n(0, 1), n(2, 0), n(1, 1), n(0, 2), n(3, 0), n(2, 1));
    let (m10, m01, m20, m11, m02, m30, m21, m12) =
        (m(1, 0), m(0, 1), m(2, 0), m(1, 1), m(0, 2), m(3, 0), m(2, 1), m(1, 2));
    if n10 == 0.0 {
        return Err(BlowupError::VanishingDenominator("n10"));
    }
    if m01 == 0.0 {
        return Err(BlowupError::VanishingDenominator("m01"));
    }
    let p0 = -n00 / n10;
    let q0 = -m20 * n00 * n00 / (m01 * n10 * n10);
    let p1 = -(p0 * p0 * n20 + q0 * n01) / n10;
    let q1 = -(p0 * (p0 * p0 * (m30 * n10 - 2.0 * m20 * n20) + q0 * (m11 * n10 - 2.0 * m20 * n01) + m10 * n10))
        / (m01 * n10);
    let p2 = -(p0 * (p0 * p0 * n30 + 2.0 * p1 * n20 + q0 * n11) + q1 * n01) / n10;
    let q2 = (p0 * p0 * (p1 * (4.0 * m20 * n20 - 3.0 * m30 * n10) + q0 * (2.0 * m20 * n11 - m21 * n10))
        + p0 * q1 * (2.0 * m20 * n01 - m11 * n10)
        - n10 * (p1 * q0 * m11 + p1 * (p1 * m20 + m10) + q0 * q0 * m02)
        + 2.0 * p0.powi(4) * m20 * n30)
        / (m01 * n10);
    let p3 = -(p0 * q1 * n11
        + q0 * (p0 * p0 * n21 + p1 * n11)
        + 3.0 * p1 * p0 * p0 * n30
        + 2.0 * p2 * p0 * n20
        + p1 * p1 * n20
        + q2 * n01
        + q0 * q0 * n02)
        / n10;
    let q3 = (2.0 * p0.powi(3) * m20 * (3.0 * p1 * n30 + q0 * n21)
        + p0 * p0 * (p2 * (4.0 * m20 * n20 - 3.0 * m30 * n10) + q1 * (2.0 * m20 * n11 - m21 * n10))
        + p0 * (2.0 * p1 * q0 * (m20 * n11 - m21 * n10)
            + p1 * p1 * (2.0 * m20 * n20 - 3.0 * m30 * n10)
            + q2 * (2.0 * m20 * n01 - m11 * n10)
            + q0 * q0 * (2.0 * m20 * n02 - m12 * n10))
        - n10 * (p1 * q1 * m11 + q0 * (p2 * m11 + 2.0 * q1 * m02) + p2 * (2.0 * p1 * m20 + m10)))
        / (m01 * n10);
    Ok(EquilibriumSeries { p: [p0, p1, p2, p3], q: [q0, q1, q2, q3] })
}

/// Newton-refined equilibrium of a blown-up system, started from the series head.
pub fn equilibrium_newton(sys: &PlanarPolySystem) -> Result<[f64; 2], BlowupError> {
    let mut t = Dnf3Table { m: [[0.0; 5]; 5], n: [[0.0; 5]; 5] };
    for i in 0..5u32 {
        for j in 0..5u32 - i {
            t.m[i as usize][j as usize] = sys.m(i, j);
            t.n[i as usize][j as usize] = sys.n(i, j);
        }
    }
    t.equilibrium()
}

/// Moves the equilibrium `eq` to the origin by exact re-expansion.
pub fn translate_to_equilibrium(sys: &PlanarPolySystem, eq: [f64; 2]) -> Result<PlanarPolySystem, BlowupError> {
    let v = sys.eval(eq);
    let res = v[0].abs().max(v[1].abs());
    if !(res < 1e-10) {
        return Err(BlowupError::ResidualTooLarge(res));
    }
    let mut fx = sys.fx.recenter(&eq)?;
    let mut fy = sys.fy.recenter(&eq)?;
    fx.set_coeff(&[0, 0], 0.0)?;
    fy.set_coeff(&[0, 0], 0.0)?;
    Ok(PlanarPolySystem { fx, fy, stage: Stage::Dnf5 })
}

/// Translated coefficients predicted by the r-series of the equilibrium.
pub fn reference_translation(sys: &PlanarPolySystem, r: f64) -> Result<PlanarPolySystem, BlowupError> {
    let es = equilibrium_series(sys, r)?;
    let s = Stripped::new(sys, r);
    let m = |i: usize, j: usize| s.m[i][j];
    let n = |i: usize, j: usize| s.n[i][j];
    let [p0, p1, p2, p3] = es.p;
    let [q0, q1, _q2, _] = es.q;
    let q2 = es.q[2];
    let (r2, r3) = (r * r, r * r * r);
    let mut bm = [[0.0; 5]; 5];
    let mut bn = [[0.0; 5]; 5];
    bm[1][0] = 2.0 * p0 * m(2, 0)
        + (m(1, 0) + q0 * m(1, 1) + 2.0 * p1 * m(2, 0) + 3.0 * p0 * p0 * m(3, 0)) * r
        + (q1 * m(1, 1) + 2.0 * p2 * m(2, 0) + 2.0 * p0 * q0 * m(2, 1) + 6.0 * p0 * p1 * m(3, 0)) * r2
        + (m(1, 2) * q0 * q0
            + q2 * m(1, 1)
            + 2.0 * p3 * m(2, 0)
            + 2.0 * (p1 * q0 + p0 * q1) * m(2, 1)
            + (3.0 * p1 * p1 + 6.0 * p0 * p2) * m(3, 0))
            * r3;
    bm[0][1] = m(0, 1)
        + p0 * m(1, 1) * r
        + (p0 * p0 * m(2, 1) + p1 * m(1, 1) + 2.0 * q0 * m(0, 2)) * r2
        + (2.0 * p0 * q0 * m(1, 2) + p2 * m(1, 1) + 2.0 * p0 * p1 * m(2, 1) + 2.0 * q1 * m(0, 2)) * r3;
    bm[2][0] = m(2, 0)
        + 3.0 * p0 * m(3, 0) * r
        + (q0 * m(2, 1) + 3.0 * p1 * m(3, 0)) * r2
        + (q1 * m(2, 1) + 3.0 * p2 * m(3, 0)) * r3;
    bm[1][1] = m(1, 1) * r + 2.0 * p0 * m(2, 1) * r2 + (2.0 * p1 * m(2, 1) + 2.0 * q0 * m(1, 2)) * r3;
    bm[0][2] = m(0, 2) * r2 + p0 * m(1, 2) * r3;
    bm[3][0] = m(3, 0) * r;
    bm[2][1] = m(2, 1) * r2;
    bm[1][2] = m(1, 2) * r3;
    bn[1][0] = n(1, 0)
        + 2.0 * p0 * n(2, 0) * r
        + (3.0 * p0 * p0 * n(3, 0) + 2.0 * p1 * n(2, 0) + q0 * n(1, 1)) * r2
        + (2.0 * p0 * q0 * n(2, 1) + 2.0 * p2 * n(2, 0) + 6.0 * p0 * p1 * n(3, 0) + q1 * n(1, 1)) * r3;
    bn[0][1] = n(0, 1) * r + p0 * n(1, 1) * r2 + (n(2, 1) * p0 * p0 + 2.0 * q0 * n(0, 2) + p1 * n(1, 1)) * r3;
    bn[2][0] = n(2, 0) * r + 3.0 * p0 * n(3, 0) * r2 + (3.0 * p1 * n(3, 0) + q0 * n(2, 1)) * r3;
    bn[1][1] = n(1, 1) * r2 + 2.0 * p0 * n(2, 1) * r3;
    bn[0][2] = n(0, 2) * r3;
    bn[3][0] = n(3, 0) * r2;
    bn[2][1] = n(2, 1) * r3;
    Ok(PlanarPolySystem::from_tables(&bm, &bn, Stage::Dnf5))
}

/// Result of the linear normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub system: PlanarPolySystem,
    /// New coordinates are `transform · old`.
    pub transform: [[f64; 2]; 2],
    pub branch: Branch,
}

/// Linear change of coordinates making the linear part m̃10·I + rotation.
pub fn normalize_linear(sys: &PlanarPolySystem, branch: Branch) -> Result<Normalized, BlowupError> {
    let [[m10, m01], [n10, n01]] = sys.linear_part();
    let big_m = -(m10 + n01);
    let big_n = m10 * n01 - m01 * n10;
    let disc = 4.0 * big_n - big_m * big_m;
    if !(disc > 0.0) {
        return Err(BlowupError::RealEigenvalues(disc));
    }
    let s = disc.sqrt();
    let chosen = match branch {
        Branch::Auto => {
            if n10.abs() >= m01.abs() {
                Branch::UseN10
            } else {
                Branch::UseM01
            }
        }
        b => b,
    };
    let r2 = std::f64::consts::SQRT_2;
    let t = match chosen {
        Branch::UseN10 => {
            if n10 == 0.0 {
                return Err(BlowupError::ZeroPivot(Branch::UseN10));
            }
            [[-r2 * n10, r2 * (m10 + big_m / 2.0)], [0.0, r2 / 2.0 * s]]
        }
        _ => {
            if m01 == 0.0 {
                return Err(BlowupError::ZeroPivot(Branch::UseM01));
            }
            [[r2 * (n01 + big_m / 2.0), -r2 * m01], [r2 / 2.0 * s, 0.0]]
        }
    };
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let ti = [[t[1][1] / det, -t[0][1] / det], [-t[1][0] / det, t[0][0] / det]];
    let deg = sys.fx.degree();
    let u = Jet::var(2, deg, 0)?;
    let v = Jet::var(2, deg, 1)?;
    let old_x = u.scale(ti[0][0]).add(&v.scale(ti[0][1]))?;
    let old_y = u.scale(ti[1][0]).add(&v.scale(ti[1][1]))?;
    let gx = sys.fx.compose(&[old_x.clone(), old_y.clone()])?;
    let gy = sys.fy.compose(&[old_x, old_y])?;
    let fx = gx.scale(t[0][0]).add(&gy.scale(t[0][1]))?;
    let fy = gx.scale(t[1][0]).add(&gy.scale(t[1][1]))?;
    Ok(Normalized { system: PlanarPolySystem { fx, fy, stage: Stage::Dnf6 }, transform: t, branch: chosen })
}

struct Bar {
    m: [[f64; 4]; 4],
    n: [[f64; 4]; 4],
}

impl Bar {
    fn new(sys: &PlanarPolySystem) -> Self {
        let mut b = Bar { m: [[0.0; 4]; 4], n: [[0.0; 4]; 4] };
        for i in 0..4u32 {
            for j in 0..4u32 - i {
                b.m[i as usize][j as usize] = sys.m(i, j);
                b.n[i as usize][j as usize] = sys.n(i, j);
            }
        }
        b
    }
}

/// Closed-form coefficients after the m01-pivot normalisation, as tabulated
/// in terms of the translated coefficients.
pub fn reference_normalization(sys: &PlanarPolySystem) -> PlanarPolySystem {
    let b = Bar::new(sys);
    let (m10, m01, m20, m11, m02, m30, m21, m12, m03) =
        (b.m[1][0], b.m[0][1], b.m[2][0], b.m[1][1], b.m[0][2], b.m[3][0], b.m[2][1], b.m[1][2], b.m[0][3]);
    let (n10, n01, n20, n11, n02, n30, n21, n12, n03) =
        (b.n[1][0], b.n[0][1], b.n[2][0], b.n[1][1], b.n[0][2], b.n[3][0], b.n[2][1], b.n[1][2], b.n[0][3]);
    let sq2 = std::f64::consts::SQRT_2;
    let s = 2.0 * m10 * n01 - 4.0 * m01 * n10 - m10 * m10 - n01 * n01;
    let d = -s;
    let rs = s.sqrt();
    let mut tm = [[0.0; 5]; 5];
    let mut tn = [[0.0; 5]; 5];
    let mt10 = (m10 + n01) / 2.0;
    let mt01 = -0.5 * rs;
    tm[1][0] = mt10;
    tm[0][1] = -mt01;
    tn[1][0] = mt01;
    tn[0][1] = mt10;
    tm[2][0] = (m02 * (n01 - m10) - 2.0 * m01 * n02) / (2.0 * sq2 * m01 * m01);
    tm[1][1] = (m01 * (-m11 * n01 + m10 * (m11 - 2.0 * n02) + 2.0 * m01 * n11 + 2.0 * n02 * n01)
        - m02 * (m10 - n01).powi(2))
        / (sq2 * m01 * m01 * rs);
    tm[0][2] = (m02 * (m10 - n01).powi(3)
        + 2.0
            * m01
            * (4.0 * m01 * m01 * n20
                + 2.0 * m01 * n01 * (n11 - m20)
                + m10 * m10 * (n02 - m11)
                + n01 * n01 * (n02 - m11)
                + 2.0 * m10 * (n01 * (m11 - n02) + m01 * (m20 - n11))))
        / (2.0 * sq2 * m01 * m01 * d);
    tm[3][0] = (m03 * (m10 - n01) + 2.0 * m01 * n03) / (4.0 * m01.powi(3));
    tm[2][1] = (3.0 * m03 * (m10 - n01).powi(2)
        - 2.0 * m01 * (-m12 * n01 + m10 * (m12 - 3.0 * n03) + 2.0 * m01 * n12 + 3.0 * n03 * n01))
        / (4.0 * m01.powi(3) * rs);
    tm[1][2] = -(3.0 * m03 * (m10 - n01).powi(3)
        + 2.0
            * m01
            * (4.0 * m01 * m01 * n21 - 2.0 * m01 * n01 * (m21 - 2.0 * n12)
                + m10 * m10 * (3.0 * n03 - 2.0 * m12)
                + n01 * n01 * (3.0 * n03 - 2.0 * m12)
                + 2.0 * m10 * (n01 * (2.0 * m12 - 3.0 * n03) + m01 * (m21 - 2.0 * n12))))
        / (4.0 * m01.powi(3) * d);
    tm[0][3] = -((2.0
        * m01
        * (8.0 * m01.powi(3) * n30
            + 4.0 * m01 * m01 * n01 * (n21 - m30)
            + 2.0 * m01 * n01 * n01 * (n12 - m21)
            + m10.powi(3) * (m12 - n03)
            + n01.powi(3) * (n03 - m12)
            + m10 * m10 * (3.0 * n01 * (n03 - m12) - 2.0 * m01 * (m21 - n12))
            + m10 * (4.0 * m01 * m01 * (m30 - n21) + 4.0 * m01 * n01 * (m21 - n12) + 3.0 * n01 * n01 * (m12 - n03))))
        - m03 * (m10 - n01).powi(4))
        / (4.0 * m01.powi(3) * s.powf(1.5));
    tn[2][0] = m02 * (m10 * n01 - 2.0 * m01 * n10 - 0.5 * m10 * m10 - 0.5 * n01 * n01).sqrt() / (2.0 * m01 * m01);
    tn[1][1] = (m02 * (m10 - n01) - m01 * m11) / (sq2 * m01 * m01);
    tn[0][2] = (m02 * (m10 - n01).powi(2) + 2.0 * m01 * (m11 * n01 - m10 * m11 + 2.0 * m01 * m20))
        / (2.0 * sq2 * m01 * m01 * rs);
    tn[3][0] = -m03 * rs / (4.0 * m01.powi(3));
    tn[2][1] = (2.0 * m01 * m12 - 3.0 * m03 * (m10 - n01)) / (4.0 * m01.powi(3));
    tn[1][2] = (-3.0 * m03 * (m10 - n01).powi(2) - 4.0 * m01 * (m12 * n01 - m10 * m12 + m01 * m21))
        / (4.0 * m01.powi(3) * rs);
    tn[0][3] = (m03 * (m10 - n01).powi(3)
        - 2.0
            * m01
            * (2.0 * m21 * m01 * n01 + m12 * n01 * n01 - 2.0 * m10 * (m12 * n01 + m01 * m21)
                + 4.0 * m30 * m01 * m01
                + m10 * m10 * m12))
        / (4.0 * m01.powi(3) * d);
    PlanarPolySystem::from_tables(&tm, &tn, Stage::Dnf6)
}

/// Closed-form coefficients of the rotation normal form at the Hopf point,
/// i.e. the m01-pivot tables specialised to zero trace.
pub fn reference_hopf_normalization(sys: &PlanarPolySystem) -> PlanarPolySystem {
    let b = Bar::new(sys);
    let (m10, m01, m20, m11, m02, m30, m21, m12, m03) =
        (b.m[1][0], b.m[0][1], b.m[2][0], b.m[1][1], b.m[0][2], b.m[3][0], b.m[2][1], b.m[1][2], b.m[0][3]);
    let (n10, n20, n11, n02, n30, n21, n12, n03) =
        (b.n[1][0], b.n[2][0], b.n[1][1], b.n[0][2], b.n[3][0], b.n[2][1], b.n[1][2], b.n[0][3]);
    let sq2 = std::f64::consts::SQRT_2;
    let q = -m01 * n10 - m10 * m10;
    let rq = q.sqrt();
    let mut hm = [[0.0; 5]; 5];
    let mut hn = [[0.0; 5]; 5];
    let mh01 = -rq;
    hm[0][1] = -mh01;
    hn[1][0] = mh01;
    hm[2][0] = -(m01 * n02 + m02 * m10) / (sq2 * m01 * m01);
    hm[1][1] = (m01 * (m10 * (m11 - 2.0 * n02) + m01 * n11) - 2.0 * m02 * m10 * m10) / (sq2 * m01 * m01 * rq);
    hm[0][2] = (m01 * (m01 * m01 * n20 + m10 * m01 * (m20 - n11) + m10 * m10 * (n02 - m11)) + m02 * m10.powi(3))
        / (sq2 * m01 * m01 * (m01 * n10 + m10 * m10));
    hm[3][0] = (m01 * n03 + m03 * m10) / (2.0 * m01.powi(3));
    hm[2][1] = (3.0 * m03 * m10 * m10 - m01 * (m10 * (m12 - 3.0 * n03) + m01 * n12)) / (2.0 * m01.powi(3) * rq);
    hm[1][2] = (-m01 * (m01 * m01 * n21 + m10 * m01 * (m21 - 2.0 * n12) + m10 * m10 * (3.0 * n03 - 2.0 * m12))
        + 3.0 * m03 * m10.powi(3))
        / (2.0 * m01.powi(3) * (m01 * n10 + m10 * m10));
    // the operator between m12 and n03 in the last group is missing in the
    // reference table; a minus sign makes it agree with the m̃03 entry
    hm[0][3] = -(m01
        * (m01.powi(3) * n30 + m10 * m01 * m01 * (m30 - n21) + m10 * m10 * m01 * (n12 - m21)
            + m10.powi(3) * (m12 - n03))
        - m03 * m10.powi(4))
        / (2.0 * m01.powi(3) * q.powf(1.5));
    hn[2][0] = m02 * (-2.0 * m01 * n10 - 2.0 * m10 * m10).sqrt() / (2.0 * m01 * m01);
    hn[1][1] = (2.0 * m02 * m10 - m01 * m11) / (sq2 * m01 * m01);
    hn[0][2] = (m02 * m10 * m10 + m01 * (m01 * m20 - m10 * m11)) / (sq2 * m01 * m01 * rq);
    hn[3][0] = -m03 * rq / (2.0 * m01.powi(3));
    hn[2][1] = (m01 * m12 - 3.0 * m03 * m10) / (2.0 * m01.powi(3));
    hn[1][2] = (m01 * (2.0 * m10 * m12 - m01 * m21) - 3.0 * m03 * m10 * m10) / (2.0 * m01.powi(3) * rq);
    hn[0][3] = (m03 * m10.powi(3) - m01 * (m30 * m01 * m01 - m10 * m21 * m01 + m10 * m10 * m12))
        / (2.0 * m01.powi(3) * (m01 * n10 + m10 * m10));
    PlanarPolySystem::from_tables(&hm, &hn, Stage::Dnf7)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientMismatch {
    pub name: String,
    pub reference: f64,
    pub computed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableComparison {
    pub max_abs_diff: f64,
    pub mismatches: Vec<CoefficientMismatch>,
}

/// Entries whose difference exceeds `tol·max(1, |computed|)`.
pub fn compare_tables(reference: &PlanarPolySystem, computed: &PlanarPolySystem, tol: f64) -> TableComparison {
    let mut max_abs_diff: f64 = 0.0;
    let mut mismatches = Vec::new();
    for ((name, p), (_, c)) in reference.named_coefficients().into_iter().zip(computed.named_coefficients()) {
        let diff = (p - c).abs();
        max_abs_diff = max_abs_diff.max(diff);
        if !(diff <= tol * c.abs().max(1.0)) {
            mismatches.push(CoefficientMismatch { name, reference: p, computed: c });
        }
    }
    TableComparison { max_abs_diff, mismatches }
}

/// Absolute trace tolerance for the Lyapunov formula.
pub const TRACE_TOL: f64 = 1e-12;

/// Planar first Lyapunov coefficient of `x' = −β0·y + f`, `y' = β0·x + g`,
/// with β0 read from the x-coefficient of the second equation.
pub fn lyapunov_df(sys: &PlanarPolySystem) -> Result<f64, BlowupError> {
    let trace = sys.m(1, 0) + sys.n(0, 1);
    if !(trace.abs() < TRACE_TOL) {
        return Err(BlowupError::NonzeroTrace(trace));
    }
    let b0 = sys.n(1, 0);
    if b0 == 0.0 {
        return Err(BlowupError::ZeroRotation);
    }
    let (fxx, fxy, fyy) = (2.0 * sys.m(2, 0), sys.m(1, 1), 2.0 * sys.m(0, 2));
    let (gxx, gxy, gyy) = (2.0 * sys.n(2, 0), sys.n(1, 1), 2.0 * sys.n(0, 2));
    let (fxxx, fxyy) = (6.0 * sys.m(3, 0), 2.0 * sys.m(1, 2));
    let (gxxy, gyyy) = (2.0 * sys.n(2, 1), 6.0 * sys.n(0, 3));
    let cubic = fxxx + fxyy + gxxy + gyyy;
    let quad = fxy * (fxx + fyy) - gxy * (gxx + gyy) - fxx * gxx + fyy * gyy;
    Ok((cubic + quad / b0) / 16.0)
}

fn hopf_residual(nf: &NormalFormCoefficients, h2_quadratic: f64, r: f64, l1: f64) -> Result<f64, BlowupError> {
    let t = Dnf3Table::new(nf, h2_quadratic, r, l1);
    let p = t.equilibrium()?;
    let j = t.jacobian(p);
    Ok((j[0][0] + j[1][1]) / 2.0)
}

/// λ1*(r): the blown-up parameter at which the equilibrium has zero trace.
/// The result is O(r); ρ1 and ρ3 are the r and r³ coefficients.
pub fn hopf_lambda1(nf: &NormalFormCoefficients, r: f64) -> Result<f64, BlowupError> {
    hopf_lambda1_extended(nf, 0.0, r)
}

fn hopf_lambda1_extended(nf: &NormalFormCoefficients, h2_quadratic: f64, r: f64) -> Result<f64, BlowupError> {
    check_radius(r)?;
    if r > 0.2 {
        return Err(BlowupError::NonPositiveRadius(r));
    }
    let mut l = -(nf.c10 + nf.f00) / 2.0 * r;
    let mut res = f64::INFINITY;
    for _ in 0..50 {
        res = hopf_residual(nf, h2_quadratic, r, l)?;
        if res.abs() < 1e-15 {
            return Ok(l);
        }
        let h = 1e-6;
        let dres = (hopf_residual(nf, h2_quadratic, r, l + h)? - hopf_residual(nf, h2_quadratic, r, l - h)?) / (2.0 * h);
        if dres == 0.0 {
            break;
        }
        let step = res / dres;
        l -= step;
        if step.abs() < 1e-16 * l.abs().max(1e-3) && res.abs() < 1e-12 {
            return Ok(l);
        }
    }
    let fin = hopf_residual(nf, h2_quadratic, r, l)?;
    if fin.abs() < 1e-12 {
        return Ok(l);
    }
    Err(BlowupError::NoConvergence { what: "Hopf parameter Newton", iterations: 50, residual: res.abs().min(fin.abs()) })
}

/// Every intermediate stage of one oracle evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfPipeline {
    pub r: f64,
    pub lambda1: f64,
    pub blown_up: PlanarPolySystem,
    pub equilibrium: [f64; 2],
    pub translated: PlanarPolySystem,
    pub normalized: Normalized,
    pub l1: f64,
}

pub fn hopf_pipeline(nf: &NormalFormCoefficients, r: f64, branch: Branch) -> Result<HopfPipeline, BlowupError> {
    hopf_pipeline_extended(nf, 0.0, r, branch)
}

/// Pipeline for a normal form carrying an extra x⁴ term in the fast equation.
pub fn hopf_pipeline_extended(
    nf: &NormalFormCoefficients,
    h2_quadratic: f64,
    r: f64,
    branch: Branch,
) -> Result<HopfPipeline, BlowupError> {
    let lambda1 = hopf_lambda1_extended(nf, h2_quadratic, r)?;
    let blown_up = blow_up_extended(nf, h2_quadratic, r, lambda1)?;
    let equilibrium = equilibrium_newton(&blown_up)?;
    let translated = translate_to_equilibrium(&blown_up, equilibrium)?;
    let mut normalized = normalize_linear(&translated, branch)?;
    normalized.system.stage = Stage::Dnf7;
    let l1 = lyapunov_df(&normalized.system)?;
    Ok(HopfPipeline { r, lambda1, blown_up, equilibrium, translated, normalized, l1 })
}

/// Blown-up first Lyapunov coefficient at radius r (m01-pivot branch).
pub fn l1_blowup(nf: &NormalFormCoefficients, r: f64) -> Result<f64, BlowupError> {
    Ok(hopf_pipeline(nf, r, Branch::UseM01)?.l1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub powers: Vec<i32>,
    pub coeffs: Vec<f64>,
    /// Largest absolute residual over the samples.
    pub residual: f64,
}

impl SeriesFit {
    pub fn coeff(&self, power: i32) -> Option<f64> {
        self.powers.iter().position(|&p| p == power).map(|k| self.coeffs[k])
    }
}

/// Least-squares fit of Σ c_k r^{p_k}. Columns are scaled by the largest
/// radius to keep the design well conditioned.
pub fn fit_odd_series(samples: &[(f64, f64)], powers: &[i32]) -> Result<SeriesFit, BlowupError> {
    let need = 2 * powers.len();
    if samples.len() < need {
        return Err(BlowupError::TooFewSamples { need, got: samples.len() });
    }
    let mut rs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    rs.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    if rs.windows(2).any(|w| w[0] == w[1]) {
        return Err(BlowupError::DuplicateSample);
    }
    let scale = rs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if scale == 0.0 {
        return Err(BlowupError::RankDeficient);
    }
    let a = DMatrix::from_fn(samples.len(), powers.len(), |i, k| (samples[i].0 / scale).powi(powers[k]));
    let b = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(BlowupError::RankDeficient);
    }
    let x = svd.solve(&b, 0.0).map_err(|_| BlowupError::RankDeficient)?;
    let residual = (&a * &x - &b).amax();
    let coeffs = powers.iter().zip(x.iter()).map(|(&p, c)| c / scale.powi(p)).collect();
    Ok(SeriesFit { powers: powers.to_vec(), coeffs, residual })
}

/// Radii used by the oracle fits: 20 evenly spaced points on [0.005, 0.05].
pub fn oracle_grid() -> Vec<f64> {
    (0..20).map(|k| 0.005 + 0.045 * k as f64 / 19.0).collect()
}

/// Fits of the blown-up Lyapunov coefficient over [`oracle_grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Fit {
    /// All powers 0..=9; used to check that the even coefficients vanish.
    pub general: SeriesFit,
    /// Odd powers 1, 3, 5, 7, 9; the r and r³ coefficients estimate ω1/16 and ω2/32.
    pub odd: SeriesFit,
}

impl L1Fit {
    pub fn omega1(&self) -> f64 {
        16.0 * self.odd.coeffs[0]
    }

    pub fn omega2(&self) -> f64 {
        32.0 * self.odd.coeffs[1]
    }
}

pub fn fit_l1(nf: &NormalFormCoefficients) -> Result<L1Fit, BlowupError> {
    fit_l1_extended(nf, 0.0)
}

pub fn fit_l1_extended(nf: &NormalFormCoefficients, h2_quadratic: f64) -> Result<L1Fit, BlowupError> {
    let samples = oracle_grid()
        .into_iter()
        .map(|r| Ok((r, hopf_pipeline_extended(nf, h2_quadratic, r, Branch::UseM01)?.l1)))
        .collect::<Result<Vec<_>, BlowupError>>()?;
    Ok(L1Fit {
        general: fit_odd_series(&samples, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9])?,
        odd: fit_odd_series(&samples, &[1, 3, 5, 7, 9])?,
    })
}

/// Fits of λ1*(r)/r over [`oracle_grid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lambda1Fit {
    /// All powers 0..=6; the r¹ coefficient estimates ρ2.
    pub general: SeriesFit,
    /// Even powers 0, 2, 4, 6; the r⁰ and r² coefficients estimate ρ1 and ρ3.
    pub even: SeriesFit,
}

pub fn fit_lambda1(nf: &NormalFormCoefficients) -> Result<Lambda1Fit, BlowupError> {
    let samples = oracle_grid()
        .into_iter()
        .map(|r| Ok((r, hopf_lambda1(nf, r)? / r)))
        .collect::<Result<Vec<_>, BlowupError>>()?;
    Ok(Lambda1Fit {
        general: fit_odd_series(&samples, &[0, 1, 2, 3, 4, 5, 6])?,
        even: fit_odd_series(&samples, &[0, 2, 4, 6])?,
    })
}

/// Margin 4N − M² of the translated linear part at the Hopf point.
pub fn rotation_margin(nf: &NormalFormCoefficients, r: f64) -> Result<f64, BlowupError> {
    let l = hopf_lambda1(nf, r)?;
    let sys = blow_up(nf, r, l)?;
    let eq = equilibrium_newton(&sys)?;
    let [[m10, m01], [n10, n01]] = sys.jacobian(eq);
    let big_m = -(m10 + n01);
    Ok(4.0 * (m10 * n01 - m01 * n10) - big_m * big_m)
}

/// Uniform [−1, 1] record, redrawn until the rotation margin at the largest
/// oracle radius exceeds 0.05 and the Hopf point can be computed.
pub fn random_record<R: Rng + ?Sized>(rng: &mut R, omega1_zero: bool) -> NormalFormCoefficients {
    let r_max = *oracle_grid().last().expect("non-empty grid");
    loop {
        let mut nf = NormalFormCoefficients::random(rng);
        if omega1_zero {
            nf = nf.with_omega1_zero();
        }
        if matches!(rotation_margin(&nf, r_max), Ok(margin) if margin > 0.05) {
            return nf;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalform::{omega_coefficients, rho_coefficients};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn canonical() -> NormalFormCoefficients {
        NormalFormCoefficients::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn canonical_blow_up_coefficients() {
        let s = blow_up(&canonical(), 0.1, 0.2).unwrap();
        assert_eq!(s.m(2, 0), 1.0);
        assert_eq!(s.m(0, 1), -1.0);
        assert_eq!(s.n(1, 0), 1.0);
        assert_eq!(s.n(0, 0), -0.2);
        assert_eq!(s.m(1, 0), 0.0);
    }

    #[test]
    fn table_entries() {
        let nf = NormalFormCoefficients { c10: 0.5, ..Default::default() };
        assert!((blow_up(&nf, 0.1, 0.0).unwrap().m(1, 0) - 0.05).abs() < 1e-16);
        let nf = NormalFormCoefficients { f00: 2.0, e01: 1.0, ..Default::default() };
        assert!((blow_up(&nf, 0.1, 0.3).unwrap().n(0, 1) - 0.197).abs() < 1e-15);
        assert!(blow_up(&nf, 0.0, 0.3).is_err());
        assert!(blow_up(&nf, -0.1, 0.3).is_err());
    }

    #[test]
    fn table_and_jet_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let nf = NormalFormCoefficients::random(&mut rng);
            let r = rng.gen_range(0.01..0.2);
            let l1 = rng.gen_range(-1.0..1.0);
            let a = blow_up(&nf, r, l1).unwrap();
            let b = blow_up_jet(&nf, r, l1).unwrap();
            for ((name, x), (_, y)) in a.named_coefficients().into_iter().zip(b.named_coefficients()) {
                assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0), "{name}: {x} vs {y}");
            }
            assert!((a.n(0, 0) - b.n(0, 0)).abs() < 1e-13);
            assert_eq!(b.m(0, 0), 0.0);
            // nothing above cubic order without the extra quartic term
            assert_eq!(b.fx.c2(4, 0), 0.0);
        }
    }

    #[test]
    fn extended_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nf = NormalFormCoefficients::random(&mut rng);
        let a = blow_up_extended(&nf, 0.7, 0.05, 0.2).unwrap();
        let b = blow_up_jet_extended(&nf, 0.7, 0.05, 0.2).unwrap();
        assert!((a.m(4, 0) - b.m(4, 0)).abs() < 1e-15);
        assert!((a.m(4, 0) - 0.7 * 0.0025).abs() < 1e-15);
    }

    #[test]
    fn canonical_series_head() {
        for l in [0.0, 0.2, -0.35] {
            let s = blow_up(&canonical(), 0.05, l).unwrap();
            let es = equilibrium_series(&s, 0.05).unwrap();
            assert!((es.p[0] - l).abs() < 1e-15);
            assert!((es.q[0] - l * l).abs() < 1e-15);
        }
    }

    #[test]
    fn series_denominators_checked() {
        let mut s = blow_up(&canonical(), 0.1, 0.2).unwrap();
        s.fy.set_coeff(&[1, 0], 0.0).unwrap();
        assert_eq!(equilibrium_series(&s, 0.1), Err(BlowupError::VanishingDenominator("n10")));
    }

    #[test]
    fn series_error_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let nf = NormalFormCoefficients::random(&mut rng);
            let errs: Vec<f64> = [0.1, 0.05, 0.025]
                .iter()
                .map(|&r| {
                    let s = blow_up(&nf, r, 0.3).unwrap();
                    let es = equilibrium_series(&s, r).unwrap().point(r);
                    let eq = equilibrium_newton(&s).unwrap();
                    (eq[0] - es[0]).hypot(eq[1] - es[1])
                })
                .collect();
            let slope = (errs[0] / errs[2]).log2() / 2.0;
            assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
        }
    }

    #[test]
    fn translation_at_origin_is_identity() {
        let s = blow_up(&canonical(), 0.1, 0.0).unwrap();
        let t = translate_to_equilibrium(&s, [0.0, 0.0]).unwrap();
        assert_eq!(t.fx.terms(), s.fx.terms());
        assert_eq!(t.fy.terms(), s.fy.terms());
        assert!(translate_to_equilibrium(&s, [0.3, 0.0]).is_err());
    }

    #[test]
    fn translated_linear_head() {
        let l = 0.2;
        let s = blow_up(&canonical(), 0.1, l).unwrap();
        let eq = equilibrium_newton(&s).unwrap();
        let t = translate_to_equilibrium(&s, eq).unwrap();
        assert!((t.m(1, 0) - 2.0 * l).abs() < 1e-14);
        let p = reference_translation(&s, 0.1).unwrap();
        assert!((p.m(1, 0) - 2.0 * l).abs() < 1e-14);
    }

    #[test]
    fn translation_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let nf = NormalFormCoefficients::random(&mut rng);
            let s = blow_up(&nf, 0.07, 0.1).unwrap();
            let eq = equilibrium_newton(&s).unwrap();
            let j = s.jacobian(eq);
            let t = translate_to_equilibrium(&s, eq).unwrap();
            let lp = t.linear_part();
            assert!(((j[0][0] + j[1][1]) - (lp[0][0] + lp[1][1])).abs() < 1e-12);
            let dj = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            let dl = lp[0][0] * lp[1][1] - lp[0][1] * lp[1][0];
            assert!((dj - dl).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_translation_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nf = NormalFormCoefficients::random(&mut rng);
        let diff = |r: f64| {
            let s = blow_up(&nf, r, 0.3).unwrap();
            let eq = equilibrium_newton(&s).unwrap();
            let t = translate_to_equilibrium(&s, eq).unwrap();
            let p = reference_translation(&s, r).unwrap();
            compare_tables(&p, &t, 0.0).max_abs_diff
        };
        let (a, b) = (diff(0.04), diff(0.02));
        assert!(a < 1e-4);
        assert!((a / b).log2() > 3.5, "ratio {}", a / b);
    }

    #[test]
    fn normalization_preserves_trace_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let nf = NormalFormCoefficients::random(&mut rng);
            let s = blow_up(&nf, 0.05, 0.02).unwrap();
            let t = translate_to_equilibrium(&s, equilibrium_newton(&s).unwrap()).unwrap();
            let [[a, b], [c, d]] = t.linear_part();
            for branch in [Branch::UseN10, Branch::UseM01, Branch::Auto] {
                let nz = normalize_linear(&t, branch).unwrap();
                let [[e, f], [g, h]] = nz.system.linear_part();
                assert!(((a + d) - (e + h)).abs() < 1e-12);
                assert!(((a * d - b * c) - (e * h - f * g)).abs() < 1e-12);
                // scaling plus rotation, eigenvalues m̃10 ± m̃01 i
                assert!((e - h).abs() < 1e-12);
                assert!((f + g).abs() < 1e-12);
                assert!((e - (a + d) / 2.0).abs() < 1e-12);
                let disc = 4.0 * (a * d - b * c) - (a + d) * (a + d);
                assert!((g.abs() - disc.sqrt() / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_errors() {
        let mut s = blow_up(&canonical(), 0.1, 0.0).unwrap();
        // saddle: real eigenvalues
        s.fy.set_coeff(&[1, 0], -1.0).unwrap();
        assert!(matches!(normalize_linear(&s, Branch::Auto), Err(BlowupError::RealEigenvalues(_))));
        let mut s = blow_up(&canonical(), 0.1, 0.0).unwrap();
        s.fx.set_coeff(&[0, 1], 0.0).unwrap();
        assert!(normalize_linear(&s, Branch::UseM01).is_err());
    }

    #[test]
    fn canonical_normalization_head() {
        let s = blow_up(&canonical(), 0.01, 0.0).unwrap();
        let nz = normalize_linear(&s, Branch::UseM01).unwrap();
        assert!(nz.system.m(1, 0).abs() < 1e-15);
        // m̃01 = −√(4N − M²)/2 = −1 sits at the x-entry of the second row
        assert!((nz.system.n(1, 0) + 1.0).abs() < 1e-14);
    }

    #[test]
    fn reference_normalization_matches_m01_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let nf = NormalFormCoefficients::random(&mut rng);
            let s = blow_up(&nf, 0.08, 0.1).unwrap();
            let t = translate_to_equilibrium(&s, equilibrium_newton(&s).unwrap()).unwrap();
            let nz = normalize_linear(&t, Branch::UseM01).unwrap();
            let cmp = compare_tables(&reference_normalization(&t), &nz.system, 1e-11);
            assert!(cmp.mismatches.is_empty(), "{:?}", cmp.mismatches);
        }
    }

    #[test]
    fn reference_hopf_tables_flag_one_entry() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let nf = NormalFormCoefficients::random(&mut rng);
        let pl = hopf_pipeline(&nf, 0.05, Branch::UseM01).unwrap();
        let cmp = compare_tables(&reference_hopf_normalization(&pl.translated), &pl.normalized.system, 1e-9);
        assert!(cmp.mismatches.is_empty(), "{:?}", cmp.mismatches);
        // the m̂12 sign error only shows once the y³ coefficient is O(1)
        let mut t = pl.translated.clone();
        t.fx.set_coeff(&[0, 3], 0.5).unwrap();
        let nz = normalize_linear(&t, Branch::UseM01).unwrap();
        let cmp = compare_tables(&reference_hopf_normalization(&t), &nz.system, 1e-9);
        let names: Vec<&str> = cmp.mismatches.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, vec!["m12"]);
    }

    #[test]
    fn lyapunov_examples() {
        let center = |extra: &[((u32, u32), f64)]| {
            let mut fx = Jet::from_terms(2, 4, &[(&[0, 1], -1.0)]).unwrap();
            for &((i, j), c) in extra {
                fx.add_term(&[i, j], c).unwrap();
            }
            let fy = Jet::from_terms(2, 4, &[(&[1, 0], 1.0)]).unwrap();
            PlanarPolySystem { fx, fy, stage: Stage::Dnf7 }
        };
        for sigma in [1.0, -0.3, 2.5] {
            let l = lyapunov_df(&center(&[((3, 0), sigma)])).unwrap();
            assert!((l - 3.0 * sigma / 8.0).abs() < 1e-14);
        }
        assert_eq!(lyapunov_df(&center(&[])).unwrap(), 0.0);
        let l = lyapunov_df(&center(&[((2, 0), 1.0), ((1, 1), 1.0)])).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
        let mut bad = center(&[]);
        bad.fx.add_term(&[1, 0], 1e-6).unwrap();
        assert!(matches!(lyapunov_df(&bad), Err(BlowupError::NonzeroTrace(_))));
        let mut flat = center(&[]);
        flat.fy = Jet::zero(2, 4).unwrap();
        assert_eq!(lyapunov_df(&flat), Err(BlowupError::ZeroRotation));
    }

    #[test]
    fn canonical_hopf_parameter_is_zero() {
        for r in [0.01, 0.05, 0.1, 0.2] {
            assert!(hopf_lambda1(&canonical(), r).unwrap().abs() < 1e-15);
        }
        assert!(hopf_lambda1(&canonical(), 0.3).is_err());
    }

    #[test]
    fn hopf_parameter_head() {
        let nf = NormalFormCoefficients { c10: 1.0, ..Default::default() };
        let r = 0.001;
        assert!((hopf_lambda1(&nf, r).unwrap() / r + 0.5).abs() < 1e-5);
        // exact: λ1* = −r·c10 / (2(1 + r²·c20))
        let nf = NormalFormCoefficients { c10: 0.8, c20: 0.6, ..Default::default() };
        let r = 0.1;
        let want = -r * 0.8 / (2.0 * (1.0 + r * r * 0.6));
        assert!((hopf_lambda1(&nf, r).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn canonical_l1_is_tiny() {
        for r in [0.02, 0.05, 0.1] {
            assert!(l1_blowup(&canonical(), r).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn b10_alone_gives_three_sixteenths() {
        let nf = NormalFormCoefficients { b10: 1.0, ..Default::default() };
        let fit = fit_l1(&nf).unwrap();
        assert!(rel(fit.odd.coeffs[0], 3.0 / 16.0) < 1e-6);
    }

    #[test]
    fn omega_oracle_few_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..3 {
            let nf = random_record(&mut rng, false);
            let (w1, _) = omega_coefficients(&nf);
            assert!(rel(fit_l1(&nf).unwrap().omega1(), w1) < 1e-4);
            let nf = random_record(&mut rng, true);
            let (_, w2) = omega_coefficients(&nf);
            let fit = fit_l1(&nf).unwrap();
            assert!(rel(fit.omega2(), w2) < 1e-3);
            assert!(fit.general.coeff(0).unwrap().abs() < 1e-6);
            assert!(fit.general.coeff(2).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn rho_oracle_few_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let nf = random_record(&mut rng, false);
            let rho = rho_coefficients(&nf);
            let fit = fit_lambda1(&nf).unwrap();
            assert!(rel(fit.even.coeffs[0], rho.rho1) < 1e-6);
            assert!(rel(fit.even.coeffs[1], rho.rho3) < 1e-3);
            assert!(rel(fit.even.coeffs[1], rho.rho3_reference) > 1.0);
            assert!(fit.general.coeff(1).unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn branches_differ_by_pivot_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let nf = random_record(&mut rng, false);
            let a = hopf_pipeline(&nf, 0.05, Branch::UseN10).unwrap();
            let b = hopf_pipeline(&nf, 0.05, Branch::UseM01).unwrap();
            let lp = a.translated.linear_part();
            // L1 scales like 1/|det T|; the two pivots give det −n̄10·s and m̄01·s
            let lhs = a.l1 * lp[1][0].abs();
            let rhs = b.l1 * lp[0][1].abs();
            assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1e-12), "{lhs} vs {rhs}");
            assert_eq!(a.l1.signum(), b.l1.signum());
        }
    }

    #[test]
    fn fit_examples() {
        let rs: Vec<f64> = (1..=8).map(|k| 0.02 * k as f64).collect();
        let s: Vec<(f64, f64)> = rs.iter().map(|&r| (r, 2.0 * r)).collect();
        let f = fit_odd_series(&s, &[1, 3]).unwrap();
        assert!((f.coeffs[0] - 2.0).abs() < 1e-14 && f.coeffs[1].abs() < 1e-12);
        assert!(f.residual < 1e-14);
        let s: Vec<(f64, f64)> = rs.iter().map(|&r| (r, r + 0.5 * r * r * r)).collect();
        let f = fit_odd_series(&s, &[1, 3]).unwrap();
        assert!((f.coeffs[0] - 1.0).abs() < 1e-12 && (f.coeffs[1] - 0.5).abs() < 1e-10);
        assert!(fit_odd_series(&s[..3], &[1, 3]).is_err());
        let dup = vec![(0.1, 1.0), (0.1, 1.0), (0.2, 2.0), (0.3, 3.0)];
        assert_eq!(fit_odd_series(&dup, &[1]), Err(BlowupError::DuplicateSample));
        assert_eq!(fit_odd_series(&s, &[1, 1]), Err(BlowupError::RankDeficient));
    }

    #[test]
    fn fit_tolerates_small_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<(f64, f64)> = oracle_grid()
            .into_iter()
            .map(|r| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let noise = 1e-10 * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (r, 0.3 * r - 1.2 * r * r * r + noise)
            })
            .collect();
        let f = fit_odd_series(&s, &[1, 3]).unwrap();
        assert!((f.coeffs[0] - 0.3).abs() < 1e-8);
    }
}
