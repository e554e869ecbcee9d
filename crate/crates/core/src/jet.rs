//! Truncated multivariate power series in up to four variables.
//!
//! Coefficients live in a dense vector ordered by total degree, then by
//! descending exponent of the first variable. A jet also remembers whether it
//! is a complete polynomial (`exact`) or the head of a longer series; only
//! exact jets may be composed with substitutions that carry constant terms.

use thiserror::Error;

pub const MAX_VARS: usize = 4;
pub const DEFAULT_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("jets must have between 1 and {MAX_VARS} variables, got {0}")]
    BadVarCount(usize),
    #[error("variable count mismatch: {0} vs {1}")]
    VarMismatch(usize, usize),
    #[error("expected {expected} substitutions, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    BadVarIndex { index: usize, nvars: usize },
    #[error("point has {got} coordinates, jet has {nvars} variables")]
    PointLength { got: usize, nvars: usize },
    #[error("exponent vector has {got} entries, jet has {nvars} variables")]
    ExponentLength { got: usize, nvars: usize },
    #[error("substitution {index} has a constant term but the target is a truncated series")]
    ConstantIntoSeries { index: usize },
    #[error("series reciprocal needs a nonzero constant term")]
    ZeroConstant,
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of monomials of total degree exactly `d` in `n` variables.
fn count_exact(n: usize, d: usize) -> usize {
    if n == 0 {
        return usize::from(d == 0);
    }
    binom(d + n - 1, n - 1)
}

/// Number of monomials of total degree at most `d` in `n` variables.
fn count_upto(n: usize, d: usize) -> usize {
    binom(d + n, n)
}

fn rank_within(exps: &[u32], d: usize) -> usize {
    if exps.len() <= 1 {
        return 0;
    }
    let e0 = exps[0] as usize;
    let mut skipped = 0;
    for v in (e0 + 1)..=d {
        skipped += count_exact(exps.len() - 1, d - v);
    }
    skipped + rank_within(&exps[1..], d - e0)
}

fn index_of(exps: &[u32]) -> usize {
    let n = exps.len();
    let d: usize = exps.iter().map(|&e| e as usize).sum();
    let offset = if d == 0 { 0 } else { count_upto(n, d - 1) };
    offset + rank_within(exps, d)
}

/// All exponent vectors of total degree ≤ `degree`, in storage order.
pub fn monomials(nvars: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(n: usize, d: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 1 {
            prefix.push(d as u32);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e0 in (0..=d).rev() {
            prefix.push(e0 as u32);
            fill(n - 1, d - e0, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(count_upto(nvars, degree));
    for d in 0..=degree {
        fill(nvars, d, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    nvars: usize,
    degree: usize,
    coeffs: Vec<f64>,
    exact: bool,
}

impl Jet {
    pub fn zero(nvars: usize, degree: usize) -> Result<Jet, JetError> {
        if nvars == 0 || nvars > MAX_VARS {
            return Err(JetError::BadVarCount(nvars));
        }
        Ok(Jet { nvars, degree, coeffs: vec![0.0; count_upto(nvars, degree)], exact: true })
    }

    pub fn constant(nvars: usize, degree: usize, c: f64) -> Result<Jet, JetError> {
        let mut j = Jet::zero(nvars, degree)?;
        j.coeffs[0] = c;
        Ok(j)
    }

    /// The coordinate function of variable `index`.
    pub fn var(nvars: usize, degree: usize, index: usize) -> Result<Jet, JetError> {
        let mut j = Jet::zero(nvars, degree)?;
        if index >= nvars {
            return Err(JetError::BadVarIndex { index, nvars });
        }
        if degree >= 1 {
            let mut e = vec![0u32; nvars];
            e[index] = 1;
            j.coeffs[index_of(&e)] = 1.0;
        } else {
            j.exact = false;
        }
        Ok(j)
    }

    /// Polynomial from `(exponents, coefficient)` terms. Terms above the
    /// degree bound are dropped and the jet is then marked as a series.
    pub fn from_terms(nvars: usize, degree: usize, terms: &[(&[u32], f64)]) -> Result<Jet, JetError> {
        let mut j = Jet::zero(nvars, degree)?;
        for (e, c) in terms {
            j.add_term(e, *c)?;
        }
        Ok(j)
    }

    /// Marks the jet as the head of a longer series.
    pub fn into_series(mut self) -> Jet {
        self.exact = false;
        self
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn coeff(&self, exps: &[u32]) -> Result<f64, JetError> {
        self.check_exps(exps)?;
        let d: usize = exps.iter().map(|&e| e as usize).sum();
        if d > self.degree {
            return Ok(0.0);
        }
        Ok(self.coeffs[index_of(exps)])
    }

    /// Coefficient lookup for two-variable jets.
    pub fn c2(&self, i: u32, j: u32) -> f64 {
        debug_assert_eq!(self.nvars, 2);
        if (i + j) as usize > self.degree {
            return 0.0;
        }
        self.coeffs[index_of(&[i, j])]
    }

    pub fn add_term(&mut self, exps: &[u32], c: f64) -> Result<(), JetError> {
        self.check_exps(exps)?;
        let d: usize = exps.iter().map(|&e| e as usize).sum();
        if d > self.degree {
            if c != 0.0 {
                self.exact = false;
            }
            return Ok(());
        }
        self.coeffs[index_of(exps)] += c;
        Ok(())
    }

    pub fn set_coeff(&mut self, exps: &[u32], c: f64) -> Result<(), JetError> {
        self.check_exps(exps)?;
        let d: usize = exps.iter().map(|&e| e as usize).sum();
        if d > self.degree {
            if c != 0.0 {
                self.exact = false;
            }
            return Ok(());
        }
        self.coeffs[index_of(exps)] = c;
        Ok(())
    }

    /// Nonzero terms in storage order.
    pub fn terms(&self) -> Vec<(Vec<u32>, f64)> {
        monomials(self.nvars, self.degree)
            .into_iter()
            .zip(self.coeffs.iter())
            .filter(|(_, &c)| c != 0.0)
            .map(|(e, &c)| (e, c))
            .collect()
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Highest total degree carrying a nonzero coefficient.
    pub fn actual_degree(&self) -> usize {
        let mons = monomials(self.nvars, self.degree);
        mons.iter()
            .zip(&self.coeffs)
            .filter(|(_, &c)| c != 0.0)
            .map(|(e, _)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check_exps(&self, exps: &[u32]) -> Result<(), JetError> {
        if exps.len() != self.nvars {
            return Err(JetError::ExponentLength { got: exps.len(), nvars: self.nvars });
        }
        Ok(())
    }

    fn check_same(&self, other: &Jet) -> Result<(), JetError> {
        if self.nvars != other.nvars {
            return Err(JetError::VarMismatch(self.nvars, other.nvars));
        }
        Ok(())
    }

    /// Copy with a different degree bound; lowering it may drop terms.
    pub fn with_degree(&self, degree: usize) -> Jet {
        let mut out = Jet::zero(self.nvars, degree).expect("valid nvars");
        out.exact = self.exact;
        for (e, c) in monomials(self.nvars, self.degree).iter().zip(&self.coeffs) {
            out.add_term(e, *c).expect("same nvars");
        }
        if degree > self.degree && !self.exact {
            // the unknown tail now sits inside the bound
            out.exact = false;
        }
        out
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_same(other)?;
        let d = self.degree.min(other.degree);
        let mut out = self.with_degree(d);
        let b = other.with_degree(d);
        for (o, c) in out.coeffs.iter_mut().zip(&b.coeffs) {
            *o += c;
        }
        out.exact = out.exact && b.exact;
        Ok(out)
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= s;
        }
        out
    }

    pub fn add_constant(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// Cauchy product truncated at the smaller degree bound.
    pub fn mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check_same(other)?;
        let d = self.degree.min(other.degree);
        let mut out = Jet::zero(self.nvars, d)?;
        out.exact = self.exact && other.exact;
        let ta = self.terms();
        let tb = other.terms();
        let mut e = vec![0u32; self.nvars];
        for (ea, ca) in &ta {
            for (eb, cb) in &tb {
                for k in 0..self.nvars {
                    e[k] = ea[k] + eb[k];
                }
                out.add_term(&e, ca * cb)?;
            }
        }
        Ok(out)
    }

    pub fn powi(&self, k: u32) -> Result<Jet, JetError> {
        let mut out = Jet::constant(self.nvars, self.degree, 1.0)?;
        out.exact = self.exact;
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Series reciprocal; requires a nonzero constant term.
    pub fn recip(&self) -> Result<Jet, JetError> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 {
            return Err(JetError::ZeroConstant);
        }
        // 1/(c0 + h) = (1/c0) Σ (−h/c0)^k, h without constant term
        let h = self.add_constant(-c0).scale(-1.0 / c0);
        let mut term = Jet::constant(self.nvars, self.degree, 1.0)?;
        let mut acc = term.clone();
        for _ in 0..self.degree {
            term = term.mul(&h)?;
            acc = acc.add(&term)?;
        }
        let mut out = acc.scale(1.0 / c0);
        out.exact = self.actual_degree() == 0 && self.exact;
        Ok(out)
    }

    /// Substitutes `subs[i]` for variable `i`. Substitutions with a constant
    /// term are accepted only when `self` is a complete polynomial.
    pub fn compose(&self, subs: &[Jet]) -> Result<Jet, JetError> {
        if subs.len() != self.nvars {
            return Err(JetError::Arity { expected: self.nvars, got: subs.len() });
        }
        let m = subs[0].nvars;
        for s in subs {
            if s.nvars != m {
                return Err(JetError::VarMismatch(m, s.nvars));
            }
        }
        if !self.exact {
            if let Some(index) = subs.iter().position(|s| s.coeffs[0] != 0.0) {
                return Err(JetError::ConstantIntoSeries { index });
            }
        }
        let d_out = subs.iter().map(|s| s.degree).min().unwrap_or(self.degree);
        let top = self.actual_degree() as u32;
        let mut powers: Vec<Vec<Jet>> = Vec::with_capacity(subs.len());
        for s in subs {
            let s = s.with_degree(d_out);
            let mut p = vec![Jet::constant(m, d_out, 1.0)?];
            for k in 1..=top as usize {
                let next = p[k - 1].mul(&s)?;
                p.push(next);
            }
            powers.push(p);
        }
        let mut out = Jet::zero(m, d_out)?;
        for (e, c) in self.terms() {
            let mut prod = Jet::constant(m, d_out, c)?;
            for (k, &ek) in e.iter().enumerate() {
                if ek > 0 {
                    prod = prod.mul(&powers[k][ek as usize])?;
                }
            }
            out = out.add(&prod)?;
        }
        // a series target leaves an unknown tail; so does any truncation
        out.exact = out.exact && self.exact;
        Ok(out)
    }

    /// Re-expansion about `shift`: the result `g` satisfies g(u) = f(shift + u).
    pub fn recenter(&self, shift: &[f64]) -> Result<Jet, JetError> {
        if shift.len() != self.nvars {
            return Err(JetError::PointLength { got: shift.len(), nvars: self.nvars });
        }
        let subs = (0..self.nvars)
            .map(|i| Ok(Jet::var(self.nvars, self.degree, i)?.add_constant(shift[i])))
            .collect::<Result<Vec<_>, JetError>>()?;
        self.compose(&subs)
    }

    /// Formal partial derivative. The degree bound is kept as is.
    pub fn diff(&self, var: usize) -> Result<Jet, JetError> {
        if var >= self.nvars {
            return Err(JetError::BadVarIndex { index: var, nvars: self.nvars });
        }
        let mut out = Jet::zero(self.nvars, self.degree)?;
        out.exact = self.exact;
        for (mut e, c) in self.terms() {
            if e[var] == 0 {
                continue;
            }
            let k = e[var];
            e[var] -= 1;
            out.add_term(&e, c * k as f64)?;
        }
        Ok(out)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, JetError> {
        if point.len() != self.nvars {
            return Err(JetError::PointLength { got: point.len(), nvars: self.nvars });
        }
        // nested Horner in the first variable, recursing on the rest
        let mut pows: Vec<Vec<f64>> = Vec::with_capacity(self.nvars);
        for &p in point {
            let mut v = vec![1.0; self.degree + 1];
            for k in 1..=self.degree {
                v[k] = v[k - 1] * p;
            }
            pows.push(v);
        }
        let mut acc = 0.0;
        for (e, c) in monomials(self.nvars, self.degree).iter().zip(&self.coeffs) {
            if *c == 0.0 {
                continue;
            }
            let mut t = *c;
            for (k, &ek) in e.iter().enumerate() {
                t *= pows[k][ek as usize];
            }
            acc += t;
        }
        Ok(acc)
    }
}
