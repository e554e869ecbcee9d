//! Coefficients of the canonical slow-fast fold normal form and the closed
//! forms derived from them.
//!
//! The normal form is
//!
//! ```text
//! x' = −y·h1(x, y) + x²·h2(x) + ε·h3(x, y)
//! y' = ε·(x·h4(x) − λ·h5(x, y) + y·h6(x, y))
//! ```
//!
//! with h1 = 1 + Σ a_ij x^i y^j (1 ≤ i+j ≤ 2), h2 = 1 + b10·x,
//! h3 = Σ c_ij (1 ≤ i+j ≤ 3), h4 = 1 + d10·x + d20·x²,
//! h5 = 1 + Σ e_ij (1 ≤ i+j ≤ 3), h6 = Σ f_ij (0 ≤ i+j ≤ 2).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormalFormError {
    #[error("eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("coefficient {0} is not finite")]
    NonFinite(&'static str),
    #[error("unknown coefficient key {0:?}")]
    UnknownKey(String),
}

macro_rules! coefficient_record {
    ($($name:ident),* $(,)?) => {
        /// Constant coefficients of the normal form. Absent entries are zero.
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct NormalFormCoefficients {
            $(pub $name: f64,)*
        }

        impl NormalFormCoefficients {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn get(&self, key: &str) -> Result<f64, NormalFormError> {
                match key {
                    $(stringify!($name) => Ok(self.$name),)*
                    _ => Err(NormalFormError::UnknownKey(key.to_string())),
                }
            }

            pub fn set(&mut self, key: &str, value: f64) -> Result<(), NormalFormError> {
                match key {
                    $(stringify!($name) => { self.$name = value; Ok(()) })*
                    _ => Err(NormalFormError::UnknownKey(key.to_string())),
                }
            }

            pub fn validate(&self) -> Result<(), NormalFormError> {
                $(if !self.$name.is_finite() {
                    return Err(NormalFormError::NonFinite(stringify!($name)));
                })*
                Ok(())
            }

            /// Every entry drawn uniformly from [−1, 1].
            pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
                NormalFormCoefficients { $($name: rng.gen_range(-1.0..=1.0),)* }
            }
        }
    };
}

coefficient_record!(
    a10, a01, a20, a11, a02, b10, c10, c01, c20, c11, c02, c30, c21, c12, c03, d10, d20, e10,
    e01, e20, e11, e02, e30, e21, e12, e03, f00, f10, f01, f20, f11, f02,
);

impl NormalFormCoefficients {
    /// Sets a10 so that the leading Lyapunov coefficient vanishes.
    pub fn with_omega1_zero(mut self) -> Self {
        self.a10 = 3.0 * self.b10 - 2.0 * self.d10 - 2.0 * self.f00;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HopfClass {
    Supercritical,
    Subcritical,
    DegenerateSupercritical,
    DegenerateSubcritical,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoCoefficients {
    pub rho1: f64,
    /// Cubic coefficient of the Hopf curve λ1*(r) = ρ1·r + ρ3·r³ + O(r⁵).
    pub rho3: f64,
    pub rho31: f64,
    pub rho32: f64,
    /// The cubic coefficient with the ρ1/8 prefactor in its common reference form;
    /// exactly a quarter of `rho3`.
    pub rho3_reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfAnalysis {
    #[serde(rename = "A")]
    pub a: f64,
    pub rho1: f64,
    pub rho3: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub classification: HopfClass,
}

/// A = −a10 + 3·b10 − 2·d10 − 2·f00.
pub fn compute_a(nf: &NormalFormCoefficients) -> f64 {
    -nf.a10 + 3.0 * nf.b10 - 2.0 * (nf.d10 + nf.f00)
}

fn check_eps(eps: f64) -> Result<(), NormalFormError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(NormalFormError::NonPositiveEps(eps))
    }
}

/// Leading-order singular Hopf curve −(a1 + a5)·ε/2.
pub fn lambda_h(a1: f64, a5: f64, eps: f64) -> Result<f64, NormalFormError> {
    check_eps(eps)?;
    Ok(-(a1 + a5) * eps / 2.0)
}

/// Leading-order canard explosion curve −((a1 + a5)/2 + A/8)·ε.
pub fn lambda_c(a1: f64, a5: f64, a: f64, eps: f64) -> Result<f64, NormalFormError> {
    check_eps(eps)?;
    Ok(-((a1 + a5) / 2.0 + a / 8.0) * eps)
}

pub fn rho_coefficients(nf: &NormalFormCoefficients) -> RhoCoefficients {
    let rho1 = -(nf.c10 + nf.f00) / 2.0;
    let rho31 = nf.a10 * nf.c10 + 2.0 * nf.c10 * nf.f00 - 2.0 * nf.c20 + nf.e01 - nf.f10;
    let rho32 = nf.a10 - 3.0 * nf.b10 + 2.0 * (nf.d10 - nf.e10 + nf.f00);
    let inner = rho31 + rho1 * rho32;
    RhoCoefficients {
        rho1,
        rho3: rho1 / 2.0 * inner,
        rho31,
        rho32,
        rho3_reference: rho1 / 8.0 * inner,
    }
}

/// The eight grouped sub-sums of ω2, in their usual reference order.
pub fn omega2_lines(nf: &NormalFormCoefficients) -> [f64; 8] {
    let NormalFormCoefficients {
        a10, a01, a20, a11, b10, c10, c01, c20, c11, c30, d10, d20, e10, e01, e20, f00, f10,
        f20, ..
    } = *nf;
    [
        6.0 * a10 * b10 * c10 + 6.0 * a10 * b10 * f00 - 4.0 * a10 * c10 * d10
            + a10 * c10 * e10
            - 4.0 * a10 * c10 * f00,
        -4.0 * a10 * c01 - 2.0 * a10 * a10 * c10 + 2.0 * a20 * c10 - 2.0 * a10 * c20
            - 6.0 * a10 * d10 * f00
            + a10 * e10 * f00,
        -12.0 * a10 * f00 * f00 - 4.0 * a10 * a10 * f00 + 6.0 * a20 * f00
            + 2.0 * a01 * (a10 + 2.0 * f00)
            - 2.0 * a11
            + 2.0 * f20,
        12.0 * b10 * c10 * d10 - 3.0 * b10 * c10 * e10 + 12.0 * b10 * c10 * f00
            + 6.0 * b10 * c01
            + 12.0 * b10 * d10 * f00,
        -3.0 * b10 * e10 * f00 + 18.0 * b10 * f00 * f00 + 4.0 * c10 * d10 * e10
            - 8.0 * c10 * d10 * f00
            - 8.0 * c10 * d10 * d10
            - 4.0 * c01 * d10,
        -4.0 * c20 * d10 + 6.0 * c10 * d20 + 4.0 * c10 * e10 * f00
            - 2.0 * c10 * e01
            - 2.0 * c10 * e20
            - 8.0 * c01 * f00,
        -8.0 * c20 * f00 + 2.0 * c10 * f10 + 2.0 * c11 + 6.0 * c30 + 4.0 * d10 * e10 * f00
            - 16.0 * d10 * f00 * f00
            - 8.0 * d10 * d10 * f00,
        6.0 * d20 * f00 - 2.0 * d10 * f10 + 4.0 * e10 * f00 * f00
            - 2.0 * e01 * f00
            - 2.0 * e20 * f00
            - 8.0 * f00 * f00 * f00
            + 4.0 * f10 * f00,
    ]
}

/// (ω1, ω2): L1(r) = ω1/16·r + ω2/32·r³ + O(r⁵) in the blown-up frame.
pub fn omega_coefficients(nf: &NormalFormCoefficients) -> (f64, f64) {
    (compute_a(nf), omega2_lines(nf).iter().sum())
}

/// Relative default tolerance 1e−9·max(1, |ω1| + |ω2|).
pub fn default_tol(omega1: f64, omega2: f64) -> f64 {
    1e-9 * (omega1.abs() + omega2.abs()).max(1.0)
}

pub fn classify_hopf(omega1: f64, omega2: f64, tol: f64) -> HopfClass {
    if omega1 < -tol {
        HopfClass::Supercritical
    } else if omega1 > tol {
        HopfClass::Subcritical
    } else if omega2 < -tol {
        HopfClass::DegenerateSupercritical
    } else if omega2 > tol {
        HopfClass::DegenerateSubcritical
    } else {
        HopfClass::Undetermined
    }
}

/// Verdict at a fixed ε: the larger of the two terms of [`l1_series`]
/// decides, so a residual ω1 far below ω2·ε/2 counts as degenerate.
pub fn classify_at_eps(omega1: f64, omega2: f64, eps: f64) -> Result<HopfClass, NormalFormError> {
    check_eps(eps)?;
    let (linear, cubic) = (omega1.abs() / 16.0, omega2.abs() * eps / 32.0);
    Ok(if linear > cubic {
        classify_hopf(omega1, 0.0, 0.0)
    } else {
        classify_hopf(0.0, omega2, 0.0)
    })
}

/// Two-term expansion √ε·(ω1/16 + ω2·ε/32).
pub fn l1_series(omega1: f64, omega2: f64, eps: f64) -> Result<f64, NormalFormError> {
    check_eps(eps)?;
    Ok(eps.sqrt() * (omega1 / 16.0 + omega2 * eps / 32.0))
}

pub fn analyze(nf: &NormalFormCoefficients) -> Result<HopfAnalysis, NormalFormError> {
    nf.validate()?;
    let (omega1, omega2) = omega_coefficients(nf);
    let rho = rho_coefficients(nf);
    Ok(HopfAnalysis {
        a: compute_a(nf),
        rho1: rho.rho1,
        rho3: rho.rho3,
        omega1,
        omega2,
        classification: classify_hopf(omega1, omega2, default_tol(omega1, omega2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> NormalFormCoefficients {
        let vals = [
            1.0, -2.0, 3.0, 1.0, -1.0, 2.0, -1.0, 2.0, 1.0, -3.0, 2.0, 1.0, -1.0, 3.0, -2.0, 2.0,
            -1.0, 1.0, -2.0, 3.0, 1.0, -1.0, 2.0, 1.0, -3.0, 2.0, 1.0, 2.0, -1.0, 3.0, -2.0, 1.0,
        ];
        let mut nf = NormalFormCoefficients::default();
        for (k, v) in NormalFormCoefficients::KEYS.iter().zip(vals) {
            nf.set(k, v).unwrap();
        }
        nf
    }

    #[test]
    fn classification_at_eps() {
        assert_eq!(classify_at_eps(-1.0, 5.0, 0.01).unwrap(), HopfClass::Supercritical);
        assert_eq!(classify_at_eps(-2.4e-6, 0.7, 0.01).unwrap(), HopfClass::DegenerateSubcritical);
        assert_eq!(classify_at_eps(1e-7, -0.7, 0.01).unwrap(), HopfClass::DegenerateSupercritical);
        assert_eq!(classify_at_eps(0.0, 0.0, 0.01).unwrap(), HopfClass::Undetermined);
        assert!(classify_at_eps(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn a_examples() {
        let mut nf = NormalFormCoefficients::default();
        assert_eq!(compute_a(&nf), 0.0);
        nf.a10 = 1.0;
        nf.b10 = 1.0;
        assert_eq!(compute_a(&nf), 2.0);
        nf.b10 = 2.0;
        nf.d10 = 3.0;
        nf.f00 = 4.0;
        assert_eq!(compute_a(&nf), -9.0);
        assert_eq!(omega_coefficients(&nf).0, -9.0);
    }

    #[test]
    fn hopf_curve_examples() {
        assert_eq!(lambda_h(0.0, -2.0, 1.0).unwrap(), 1.0);
        assert_eq!(lambda_h(0.0, 0.0, 0.3).unwrap(), 0.0);
        assert!((lambda_h(1.0, 1.0, 0.01).unwrap() + 0.01).abs() < 1e-15);
        assert!(lambda_h(1.0, 1.0, 0.0).is_err());
        assert!(lambda_h(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn canard_curve_examples() {
        assert_eq!(lambda_c(0.0, 0.0, 8.0, 1.0).unwrap(), -1.0);
        assert_eq!(lambda_c(0.3, -0.7, 0.0, 0.2).unwrap(), lambda_h(0.3, -0.7, 0.2).unwrap());
        assert_eq!(lambda_c(0.0, -2.0, 8.0, 0.1).unwrap(), 0.0);
        assert!(lambda_c(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let mut nf = NormalFormCoefficients { c10: 1.0, f00: 3.0, ..Default::default() };
        assert_eq!(rho_coefficients(&nf).rho1, -2.0);
        nf.f00 = 0.0;
        let r = rho_coefficients(&nf);
        assert_eq!((r.rho31, r.rho32, r.rho3), (0.0, 0.0, 0.0));
        let z = rho_coefficients(&NormalFormCoefficients::default());
        assert_eq!((z.rho1, z.rho3), (0.0, 0.0));
    }

    #[test]
    fn rho3_is_four_times_reference() {
        let r = rho_coefficients(&sample());
        assert!((r.rho3 - 4.0 * r.rho3_reference).abs() < 1e-15);
        // c10 and c20 alone: the Hopf curve is −r·c10 / (2(1 + r²·c20)), cubic term c10·c20/2
        let nf = NormalFormCoefficients { c10: 0.6, c20: -0.9, ..Default::default() };
        let r = rho_coefficients(&nf);
        assert!((r.rho3 - 0.6 * -0.9 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn omega2_reference_lines() {
        let lines = omega2_lines(&sample());
        let expect = [11.0, -25.0, -6.0, 6.0, 54.0, -20.0, -68.0, -12.0];
        for (k, (got, want)) in lines.iter().zip(expect).enumerate() {
            assert_eq!(*got, want, "line {}", k + 1);
        }
        assert_eq!(omega_coefficients(&sample()), (-1.0, -60.0));
    }

    #[test]
    fn omega2_ignores_untouched_coefficients() {
        let mut nf = sample();
        let before = omega_coefficients(&nf);
        for k in ["a02", "c02", "c21", "c12", "c03", "e11", "e02", "e30", "e21", "e12", "e03", "f01", "f11", "f02"] {
            nf.set(k, 7.5).unwrap();
        }
        assert_eq!(omega_coefficients(&nf), before);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_hopf(-1.0, 123.0, 1e-9), HopfClass::Supercritical);
        assert_eq!(classify_hopf(1.0, -3.0, 1e-9), HopfClass::Subcritical);
        assert_eq!(classify_hopf(0.0, 5.0, 1e-9), HopfClass::DegenerateSubcritical);
        assert_eq!(classify_hopf(0.0, -5.0, 1e-9), HopfClass::DegenerateSupercritical);
        assert_eq!(classify_hopf(0.0, 0.0, 1e-9), HopfClass::Undetermined);
    }

    #[test]
    fn l1_series_examples() {
        assert!((l1_series(16.0, 0.0, 0.04).unwrap() - 0.2).abs() < 1e-15);
        assert!((l1_series(0.0, 32.0, 0.04).unwrap() - 0.008).abs() < 1e-15);
        assert_eq!(l1_series(0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(l1_series(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rho1_links_to_hopf_curve() {
        let nf = sample();
        let r = rho_coefficients(&nf);
        // ρ1 = −(a1 + a5)/2 with a1 = c10, a5 = f00
        assert_eq!(r.rho1, lambda_h(nf.c10, nf.f00, 1.0).unwrap());
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let nf = sample();
        let s = serde_json::to_string(&nf).unwrap();
        let back: NormalFormCoefficients = serde_json::from_str(&s).unwrap();
        assert_eq!(back, nf);
        let partial: NormalFormCoefficients = serde_json::from_str(r#"{"b10": 1.5}"#).unwrap();
        assert_eq!(partial.b10, 1.5);
        assert_eq!(partial.a10, 0.0);
        assert!(serde_json::from_str::<NormalFormCoefficients>(r#"{"b20": 1.0}"#).is_err());
        assert_eq!(NormalFormCoefficients::KEYS.len(), 32);
    }

    #[test]
    fn validate_rejects_nan() {
        let nf = NormalFormCoefficients { e12: f64::NAN, ..Default::default() };
        assert_eq!(nf.validate(), Err(NormalFormError::NonFinite("e12")));
    }

    #[test]
    fn omega1_zero_constraint() {
        let nf = sample().with_omega1_zero();
        assert_eq!(omega_coefficients(&nf).0, 0.0);
    }

    proptest! {
        #[test]
        fn classification_scale_invariant(w1 in -10.0f64..10.0, w2 in -10.0f64..10.0, s in 0.01f64..100.0) {
            let tol = 1e-9;
            let a = classify_hopf(w1, w2, tol);
            let b = classify_hopf(s * w1, s * w2, tol * s);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn default_tolerance_is_scale_consistent(w1 in -10.0f64..10.0, w2 in -10.0f64..10.0, s in 1.0f64..100.0) {
            prop_assume!(w1.abs() > 1e-6);
            let a = classify_hopf(w1, w2, default_tol(w1, w2));
            let b = classify_hopf(s * w1, s * w2, default_tol(s * w1, s * w2));
            prop_assert_eq!(a, b);
        }
    }
}
