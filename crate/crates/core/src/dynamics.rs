//! Trajectory integration, Poincaré return maps and limit-cycle detection.
//!
//! The integrator is the Dormand–Prince 5(4) pair with its continuous
//! extension and proportional-integral step control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::allee::{equilibria, normal_form_coeffs, model_bifurcation_curves, AlleeError, AlleeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid integrator options: {0}")]
    InvalidOptions(String),
    #[error("initial point must be finite")]
    NonFiniteStart,
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("field evaluation failed at ({x}, {y})")]
    FieldEvaluation { x: f64, y: f64 },
    #[error("step limit of {0} reached")]
    StepLimit(usize),
    #[error("no return to the section within t_max = {t_max}")]
    NoReturn { t_max: f64 },
    #[error("tangential crossing of the section at y = {y}")]
    Tangential { y: f64 },
    #[error("start height {y0} is not on the section ray above {base_y}")]
    OffSection { y0: f64, base_y: f64 },
    #[error("bracket ({y_lo}, {y_hi}) invalid: displacements {d_lo:.3e} and {d_hi:.3e} do not change sign")]
    BracketInvalid { y_lo: f64, y_hi: f64, d_lo: f64, d_hi: f64 },
    #[error("no trace sign change of the interior equilibrium in β ∈ [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("interior equilibrium missing at β = {0}")]
    NoInteriorEquilibrium(f64),
    #[error(transparent)]
    Allee(#[from] AlleeError),
}

/// Planar autonomous vector field.
pub trait PlanarField {
    fn eval(&self, z: [f64; 2]) -> Result<[f64; 2], DynamicsError>;
}

impl<T: PlanarField + ?Sized> PlanarField for &T {
    fn eval(&self, z: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        (**self).eval(z)
    }
}

impl PlanarField for AlleeParams {
    fn eval(&self, z: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        let d = self.m + z[0];
        if d.abs() < 1e-300 {
            return Err(DynamicsError::FieldEvaluation { x: z[0], y: z[1] });
        }
        finite(self.rhs(z), z)
    }
}

/// Wraps a closure as a field.
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2]) -> [f64; 2]> PlanarField for FnField<F> {
    fn eval(&self, z: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
        finite((self.0)(z), z)
    }
}

fn finite(v: [f64; 2], z: [f64; 2]) -> Result<[f64; 2], DynamicsError> {
    if v[0].is_finite() && v[1].is_finite() {
        Ok(v)
    } else {
        Err(DynamicsError::FieldEvaluation { x: z[0], y: z[1] })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Reversed,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reversed => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub t_max: f64,
    pub direction: Direction,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            t_max: 1e4,
            direction: Direction::Forward,
        }
    }
}

impl IntegratorOptions {
    /// Tolerances used for return maps and cycle detection.
    pub fn precise() -> Self {
        IntegratorOptions { rel_tol: 1e-12, abs_tol: 1e-14, ..Default::default() }
    }

    pub fn reversed(self) -> Self {
        IntegratorOptions { direction: Direction::Reversed, ..self }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(DynamicsError::InvalidOptions(format!("{name} = {v} must lie in (0, 1e-2]")));
            }
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(DynamicsError::InvalidOptions(format!("t_max = {} must be positive", self.t_max)));
        }
        if !(self.max_step > 0.0) {
            return Err(DynamicsError::InvalidOptions(format!("max_step = {} must be positive", self.max_step)));
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau. The field is autonomous, so the nodes
// appear only in the consistency test.
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Consecutive rejections that trigger the stiffness guard.
const REJECT_STREAK: usize = 25;
/// How often the guard may tighten tolerances during one run.
const MAX_TIGHTENINGS: usize = 2;
const MAX_STEPS: usize = 20_000_000;
/// Time tolerance for locating section crossings.
pub const EVENT_TIME_TOL: f64 = 1e-10;

/// One accepted step with its interpolant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    coeffs: [[f64; 2]; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> [f64; 2] {
        self.coeffs[0]
    }

    pub fn end(&self) -> [f64; 2] {
        [self.coeffs[0][0] + self.coeffs[1][0], self.coeffs[0][1] + self.coeffs[1][1]]
    }

    /// Fourth-order interpolant for t in [t0, t0 + h].
    pub fn eval(&self, t: f64) -> [f64; 2] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let c = &self.coeffs;
        let mut out = [0.0; 2];
        for i in 0..2 {
            out[i] = c[0][i] + th * (c[1][i] + th1 * (c[2][i] + th * (c[3][i] + th1 * c[4][i])));
        }
        out
    }
}

/// Tells the driver whether to keep going after an accepted step.
pub enum Control<T> {
    Continue,
    Stop(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub stiffness_warning: bool,
    pub final_rel_tol: f64,
}

fn scaled_field<F: PlanarField>(f: &F, z: [f64; 2], s: f64) -> Result<[f64; 2], DynamicsError> {
    let v = f.eval(z)?;
    Ok([s * v[0], s * v[1]])
}

fn axpy(z: [f64; 2], terms: &[(f64, [f64; 2])]) -> [f64; 2] {
    let mut out = z;
    for &(c, k) in terms {
        out[0] += c * k[0];
        out[1] += c * k[1];
    }
    out
}

fn initial_step<F: PlanarField>(
    f: &F,
    z: [f64; 2],
    k1: [f64; 2],
    s: f64,
    rtol: f64,
    atol: f64,
) -> Result<f64, DynamicsError> {
    let norm = |v: [f64; 2]| {
        let a = v[0] / (atol + rtol * z[0].abs());
        let b = v[1] / (atol + rtol * z[1].abs());
        ((a * a + b * b) / 2.0).sqrt()
    };
    let d0 = norm(z);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let z1 = axpy(z, &[(h0, k1)]);
    let k2 = scaled_field(f, z1, s)?;
    let d2 = norm([k2[0] - k1[0], k2[1] - k1[1]]) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1))
}

/// Integrates from `x0` to `opts.t_max`, handing each accepted step to
/// `observe`. The reversed direction integrates the negated field, so time
/// still runs from 0 to t_max.
pub fn drive<F, T, O>(
    field: &F,
    x0: [f64; 2],
    opts: &IntegratorOptions,
    mut observe: O,
) -> Result<(Option<T>, RunStats), DynamicsError>
where
    F: PlanarField,
    O: FnMut(&DenseStep) -> Result<Control<T>, DynamicsError>,
{
    opts.validate()?;
    if !(x0[0].is_finite() && x0[1].is_finite()) {
        return Err(DynamicsError::NonFiniteStart);
    }
    let s = opts.direction.sign();
    let (mut rtol, mut atol) = (opts.rel_tol, opts.abs_tol);
    let mut t = 0.0;
    let mut z = x0;
    let mut k1 = scaled_field(field, z, s)?;
    let mut h = initial_step(field, z, k1, s, rtol, atol)?.min(opts.max_step).min(opts.t_max);
    let mut facold: f64 = 1e-4;
    let mut stats = RunStats { accepted: 0, rejected: 0, stiffness_warning: false, final_rel_tol: rtol };
    let mut streak = 0usize;
    let mut tightenings = 0usize;
    let mut last_rejected = false;
    const BETA: f64 = 0.04;
    const EXPO: f64 = 0.2 - BETA * 0.75;
    const SAFE: f64 = 0.9;

    while t < opts.t_max {
        if stats.accepted + stats.rejected >= MAX_STEPS {
            return Err(DynamicsError::StepLimit(MAX_STEPS));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(DynamicsError::StepUnderflow { t, h });
        }
        if t + 1.01 * h >= opts.t_max {
            h = opts.t_max - t;
        }
        let k2 = scaled_field(field, axpy(z, &[(h * A21, k1)]), s)?;
        let k3 = scaled_field(field, axpy(z, &[(h * A31, k1), (h * A32, k2)]), s)?;
        let k4 = scaled_field(field, axpy(z, &[(h * A41, k1), (h * A42, k2), (h * A43, k3)]), s)?;
        let k5 = scaled_field(
            field,
            axpy(z, &[(h * A51, k1), (h * A52, k2), (h * A53, k3), (h * A54, k4)]),
            s,
        )?;
        let k6 = scaled_field(
            field,
            axpy(z, &[(h * A61, k1), (h * A62, k2), (h * A63, k3), (h * A64, k4), (h * A65, k5)]),
            s,
        )?;
        let z1 = axpy(z, &[(h * A71, k1), (h * A73, k3), (h * A74, k4), (h * A75, k5), (h * A76, k6)]);
        let k7 = scaled_field(field, z1, s)?;
        let mut err = 0.0;
        for i in 0..2 {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = atol + rtol * z[i].abs().max(z1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 2.0).sqrt();
        let fac11 = err.powf(EXPO);
        if err <= 1.0 {
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(0.1, 5.0);
            facold = err.max(1e-4);
            let mut coeffs = [[0.0; 2]; 5];
            for i in 0..2 {
                let diff = z1[i] - z[i];
                let bspl = h * k1[i] - diff;
                coeffs[0][i] = z[i];
                coeffs[1][i] = diff;
                coeffs[2][i] = bspl;
                coeffs[3][i] = diff - h * k7[i] - bspl;
                coeffs[4][i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep { t0: t, h, coeffs };
            stats.accepted += 1;
            streak = 0;
            t += h;
            z = z1;
            k1 = k7;
            if let Control::Stop(v) = observe(&step)? {
                stats.final_rel_tol = rtol;
                return Ok((Some(v), stats));
            }
            let mut hnew = h / fac;
            if last_rejected {
                hnew = hnew.min(h);
            }
            last_rejected = false;
            h = hnew.min(opts.max_step);
        } else {
            stats.rejected += 1;
            streak += 1;
            last_rejected = true;
            h /= (fac11 / SAFE).min(5.0);
            if streak >= REJECT_STREAK && tightenings < MAX_TIGHTENINGS {
                stats.stiffness_warning = true;
                tightenings += 1;
                rtol = (rtol * 0.1).max(1e-15);
                atol = (atol * 0.1).max(1e-300);
                streak = 0;
            }
        }
    }
    stats.final_rel_tol = rtol;
    Ok((None, stats))
}

/// Dense-output trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub direction: Direction,
    pub steps: Vec<DenseStep>,
    pub stats: RunStats,
    pub start: [f64; 2],
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.steps.iter().map(|s| s.t1())).collect()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.end())).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t1())
    }

    pub fn final_point(&self) -> [f64; 2] {
        self.steps.last().map_or(self.start, |s| s.end())
    }

    /// Interpolated state at time t, or None outside [0, t_end].
    pub fn at(&self, t: f64) -> Option<[f64; 2]> {
        if t == 0.0 {
            return Some(self.start);
        }
        if t < 0.0 || t > self.t_end() {
            return None;
        }
        let i = self.steps.partition_point(|s| s.t1() < t);
        self.steps.get(i).map(|s| s.eval(t))
    }

    /// CSV with header `t,x,y`, one row per accepted step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y\n");
        for (t, p) in self.times().into_iter().zip(self.points()) {
            out.push_str(&format!("{t:.12e},{:.15e},{:.15e}\n", p[0], p[1]));
        }
        out
    }
}

pub fn integrate<F: PlanarField>(
    field: &F,
    x0: [f64; 2],
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let mut steps = Vec::new();
    let (_, stats) = drive::<_, (), _>(field, x0, opts, |s| {
        steps.push(*s);
        Ok(Control::Continue)
    })?;
    Ok(Trajectory { direction: opts.direction, steps, stats, start: x0 })
}

/// Vertical ray `{x = base[0], y > base[1]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Section {
    pub base: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnPoint {
    pub y: f64,
    pub time: f64,
}

fn refine_crossing(step: &DenseStep, xs: f64) -> f64 {
    let g = |t: f64| step.eval(t)[0] - xs;
    let (mut a, mut b) = (step.t0, step.t1());
    let ga = g(a);
    while b - a > EVENT_TIME_TOL {
        let mid = 0.5 * (a + b);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm < 0.0) == (ga < 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn check_transversal<F: PlanarField>(field: &F, p: [f64; 2]) -> Result<f64, DynamicsError> {
    let v = field.eval(p)?;
    let size = v[0].abs().max(v[1].abs());
    if v[0].abs() <= 1e-10 * size.max(1e-300) || v[0] == 0.0 {
        return Err(DynamicsError::Tangential { y: p[1] });
    }
    Ok(v[0].signum())
}

/// First crossing of the section ray in the given horizontal sense
/// (`sense` = ±1, or 0 for either), excluding the starting instant.
fn next_crossing<F: PlanarField>(
    field: &F,
    section: &Section,
    start: [f64; 2],
    sense: f64,
    opts: &IntegratorOptions,
) -> Result<ReturnPoint, DynamicsError> {
    let xs = section.base[0];
    let (hit, _) = drive(field, start, opts, |step| {
        let g0 = step.start()[0] - xs;
        let g1 = step.end()[0] - xs;
        let crossed = if sense != 0.0 {
            sense * g0 < 0.0 && sense * g1 >= 0.0
        } else {
            (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0)
        };
        if !crossed {
            return Ok(Control::Continue);
        }
        let tc = refine_crossing(step, xs);
        let p = step.eval(tc);
        if p[1] <= section.base[1] {
            return Ok(Control::Continue);
        }
        let v = field.eval([xs, p[1]])?;
        let size = v[0].abs().max(v[1].abs());
        if v[0].abs() <= 1e-10 * size {
            return Err(DynamicsError::Tangential { y: p[1] });
        }
        Ok(Control::Stop(ReturnPoint { y: p[1], time: tc }))
    })?;
    hit.ok_or(DynamicsError::NoReturn { t_max: opts.t_max })
}

/// Poincaré map of the section: height of the next crossing in the same
/// horizontal sense as the flow at the start.
pub fn return_map<F: PlanarField>(
    field: &F,
    section: &Section,
    y0: f64,
    opts: &IntegratorOptions,
) -> Result<ReturnPoint, DynamicsError> {
    if !(y0 > section.base[1]) {
        return Err(DynamicsError::OffSection { y0, base_y: section.base[1] });
    }
    let start = [section.base[0], y0];
    let sense = check_transversal(field, start)? * opts.direction.sign();
    next_crossing(field, section, start, sense, opts)
}

/// Height at which the orbit through an arbitrary point first meets the
/// section ray.
pub fn seed_height<F: PlanarField>(
    field: &F,
    section: &Section,
    start: [f64; 2],
    opts: &IntegratorOptions,
) -> Result<f64, DynamicsError> {
    Ok(next_crossing(field, section, start, 0.0, opts)?.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Stable,
    Unstable,
    Neutral,
}

/// Half-width of the multiplier band reported as neutral.
pub const NEUTRAL_BAND: f64 = 1e-4;
/// Required fixed-point accuracy of a converged cycle.
pub const CYCLE_TOL: f64 = 1e-8;

pub fn stability_of(multiplier: f64) -> Stability {
    let a = multiplier.abs();
    if (a - 1.0).abs() <= NEUTRAL_BAND {
        Stability::Neutral
    } else if a < 1.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    pub section_point: [f64; 2],
    /// Period in forward time.
    pub period: f64,
    /// Return-map derivative in forward time.
    pub multiplier: f64,
    /// Derivative in the direction the map was iterated.
    pub search_multiplier: f64,
    pub stability: Stability,
    pub converged: bool,
    /// |P(y*) − y*| at the reported point.
    pub residual: f64,
    pub search_direction: Direction,
    pub iterations: usize,
}

/// Locates a fixed point of the return map by bisection on P(y) − y.
pub fn find_cycle<F: PlanarField>(
    field: &F,
    section: &Section,
    bracket: (f64, f64),
    opts: &IntegratorOptions,
) -> Result<CycleResult, DynamicsError> {
    let (y_lo, y_hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let disp = |y: f64| -> Result<(f64, f64), DynamicsError> {
        let r = return_map(field, section, y, opts)?;
        Ok((r.y - y, r.time))
    };
    let (d_lo, _) = disp(y_lo)?;
    let (d_hi, _) = disp(y_hi)?;
    if !(d_lo * d_hi < 0.0) {
        return Err(DynamicsError::BracketInvalid { y_lo, y_hi, d_lo, d_hi });
    }
    let (mut a, mut b, mut da) = (y_lo, y_hi, d_lo);
    let mut iterations = 0;
    let mut best = (0.5 * (a + b), f64::INFINITY, 0.0);
    while iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (a + b);
        let (dm, tm) = disp(mid)?;
        if dm.abs() < best.1 {
            best = (mid, dm.abs(), tm);
        }
        if dm == 0.0 || b - a <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
        if (dm < 0.0) == (da < 0.0) {
            a = mid;
            da = dm;
        } else {
            b = mid;
        }
        if b - a < 1e-13 && best.1 < 1e-11 {
            break;
        }
    }
    let (y_star, residual, period) = best;
    let hstep = 1e-5 * (y_hi - y_lo);
    let p_plus = return_map(field, section, y_star + hstep, opts)?.y;
    let p_minus = return_map(field, section, y_star - hstep, opts)?.y;
    let search_multiplier = (p_plus - p_minus) / (2.0 * hstep);
    let multiplier = match opts.direction {
        Direction::Forward => search_multiplier,
        Direction::Reversed => 1.0 / search_multiplier,
    };
    Ok(CycleResult {
        section_point: [section.base[0], y_star],
        period,
        multiplier,
        search_multiplier,
        stability: stability_of(multiplier),
        converged: residual < CYCLE_TOL,
        residual,
        search_direction: opts.direction,
        iterations,
    })
}

/// Section through the interior equilibrium E4 of the model.
pub fn section_at_e4(p: &AlleeParams) -> Result<Section, DynamicsError> {
    let eq = equilibria(p)?;
    let e4 = eq.e4.ok_or(DynamicsError::NoInteriorEquilibrium(p.beta))?;
    Ok(Section { base: [e4.x, e4.y] })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfOnset {
    /// β where the trace of the Jacobian at E4 vanishes.
    pub beta: f64,
    /// The same point in normal-form λ units.
    pub lambda: f64,
    /// Asymptotic Hopf curve in λ units.
    pub lambda_h: f64,
    pub trace_lo: f64,
    pub trace_hi: f64,
    pub bracket: (f64, f64),
}

fn e4_trace(p: &AlleeParams, beta: f64) -> Result<f64, DynamicsError> {
    let q = p.with_beta(beta);
    let e4 = equilibria(&q)?.e4.ok_or(DynamicsError::NoInteriorEquilibrium(beta))?;
    Ok(e4.trace)
}

/// Scans β over a grid for a sign change of tr J(E4) and bisects it.
pub fn hopf_onset_scan(p: &AlleeParams, beta_range: (f64, f64), steps: usize) -> Result<HopfOnset, DynamicsError> {
    let (lo, hi) = beta_range;
    let steps = steps.max(1);
    let mut prev_b = lo;
    let mut prev_t = e4_trace(p, lo)?;
    let mut found = None;
    for k in 1..=steps {
        let b = lo + (hi - lo) * k as f64 / steps as f64;
        let t = e4_trace(p, b)?;
        if prev_t == 0.0 || prev_t * t < 0.0 {
            found = Some((prev_b, prev_t, b, t));
            break;
        }
        prev_b = b;
        prev_t = t;
    }
    let (mut a, ta0, mut b, tb0) = found.ok_or(DynamicsError::NoSignChange { lo, hi })?;
    let bracket = (a, b);
    let mut ta = ta0;
    if ta != 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let tm = e4_trace(p, mid)?;
            if tm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if (tm < 0.0) == (ta < 0.0) {
                a = mid;
                ta = tm;
            } else {
                b = mid;
            }
        }
    }
    let beta = 0.5 * (a + b);
    let nf = normal_form_coeffs(&p.with_beta(beta))?;
    let curves = model_bifurcation_curves(&p.with_beta(beta))?;
    Ok(HopfOnset {
        beta,
        lambda: (beta - nf.beta_star) / nf.lambda_to_beta,
        lambda_h: curves.lambda_h,
        trace_lo: ta0,
        trace_hi: tb0,
        bracket,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub starts: usize,
    /// Largest distance outside [0, 1] × [0, ∞) seen along any trajectory.
    pub max_excursion: f64,
    pub worst_start: [f64; 2],
    pub stiffness_warnings: usize,
}

/// Distance of a point outside [0, 1] × [0, ∞).
pub fn excursion(z: [f64; 2]) -> f64 {
    (-z[0]).max(z[0] - 1.0).max(-z[1]).max(0.0)
}

/// Integrates seeded random starts from [0, 1] × [0, 2] and records the
/// largest excursion from the invariant region, checked at step ends and
/// step midpoints.
pub fn invariant_region_check(
    p: &AlleeParams,
    starts: usize,
    seed: u64,
    opts: &IntegratorOptions,
) -> Result<InvariantReport, DynamicsError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvariantReport { starts, max_excursion: 0.0, worst_start: [0.0; 2], stiffness_warnings: 0 };
    for _ in 0..starts {
        let z0 = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=2.0)];
        let mut worst: f64 = 0.0;
        let (_, stats) = drive::<_, (), _>(p, z0, opts, |s| {
            let mid = s.eval(s.t0 + 0.5 * s.h);
            worst = worst.max(excursion(s.end())).max(excursion(mid));
            Ok(Control::Continue)
        })?;
        if stats.stiffness_warning {
            report.stiffness_warnings += 1;
        }
        if worst > report.max_excursion {
            report.worst_start = z0;
            report.max_excursion = worst;
        }
    }
    Ok(report)
}
