//! Reaction terms, heterogeneous growth rate and admissible initial data.
//!
//! The equation integrated throughout the crate is
//! `u_t = Δu + f(u) + ν(|x|) u`, where `f` is a concave KPP nonlinearity
//! and `ν` is a radially decaying perturbation of the linear growth rate
//! (`μ = 1 + ν`).

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Round-off band tolerated around `[0, 1]` when evaluating the reaction.
pub const EPS_CLIP: f64 = 1e-12;

/// KPP-type nonlinearity.
///
/// `GeneralConcave` is the positive combination `f(u) = Σ_j a_j (u - u^{j+2})`;
/// every term is concave and vanishes at 0 and 1, so any nonnegative
/// coefficient list with a positive sum is admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Nonlinearity {
    QuadraticKpp,
    GeneralConcave { coeffs: Vec<f64> },
}

impl Default for Nonlinearity {
    fn default() -> Self {
        Nonlinearity::QuadraticKpp
    }
}

impl Nonlinearity {
    pub fn general(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("nonlinearity.coeffs", "empty coefficient list"));
        }
        if coeffs.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(invalid(
                "nonlinearity.coeffs",
                "coefficients must be finite and nonnegative",
            ));
        }
        if coeffs.iter().sum::<f64>() <= 0.0 {
            return Err(invalid("nonlinearity.coeffs", "f'(0) must be positive"));
        }
        Ok(Nonlinearity::GeneralConcave { coeffs })
    }

    /// `f(u)` without range checks; used in the hot loops.
    #[inline(always)]
    pub fn f(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::QuadraticKpp => u * (1.0 - u),
            Nonlinearity::GeneralConcave { coeffs } => {
                let mut acc = 0.0;
                let mut pw = u * u;
                for a in coeffs {
                    acc += a * (u - pw);
                    pw *= u;
                }
                acc
            }
        }
    }

    #[inline]
    pub fn fprime(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::QuadraticKpp => 1.0 - 2.0 * u,
            Nonlinearity::GeneralConcave { coeffs } => {
                let mut acc = 0.0;
                let mut pw = u;
                for (j, a) in coeffs.iter().enumerate() {
                    acc += a * (1.0 - (j as f64 + 2.0) * pw);
                    pw *= u;
                }
                acc
            }
        }
    }

    /// `f(1 - v)` evaluated without cancellation for small `v`.
    pub fn f_near_one(&self, v: f64) -> f64 {
        match self {
            Nonlinearity::QuadraticKpp => (1.0 - v) * v,
            Nonlinearity::GeneralConcave { coeffs } => {
                let l = (-v).ln_1p();
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| a * (1.0 - v) * -((j as f64 + 1.0) * l).exp_m1())
                    .sum()
            }
        }
    }

    pub fn fprime0(&self) -> f64 {
        match self {
            Nonlinearity::QuadraticKpp => 1.0,
            Nonlinearity::GeneralConcave { coeffs } => coeffs.iter().sum(),
        }
    }

    pub fn fprime1(&self) -> f64 {
        self.fprime(1.0)
    }

    /// Minimal wave speed `c* = 2 sqrt(f'(0))`.
    pub fn c_star(&self) -> f64 {
        2.0 * self.fprime0().sqrt()
    }
}

/// Checked evaluation of `(f(u), f'(u))`.
pub fn reaction(nl: &Nonlinearity, u: f64) -> Result<(f64, f64)> {
    if !u.is_finite() {
        return Err(Error::NonFinite("u"));
    }
    if !(-EPS_CLIP..=1.0 + EPS_CLIP).contains(&u) {
        return Err(Error::OutOfRange {
            what: "reaction argument",
            value: u,
            lo: -EPS_CLIP,
            hi: 1.0 + EPS_CLIP,
        });
    }
    Ok((nl.f(u), nl.fprime(u)))
}

/// Growth-rate perturbation `ν(r) = λ / max(r, r_c)^α`, frozen inside the
/// crossover radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heterogeneity {
    pub lambda: f64,
    pub alpha: f64,
    pub crossover_radius: f64,
}

impl Default for Heterogeneity {
    fn default() -> Self {
        Heterogeneity::homogeneous()
    }
}

impl Heterogeneity {
    pub fn homogeneous() -> Self {
        Heterogeneity {
            lambda: 0.0,
            alpha: 1.0,
            crossover_radius: 1.0,
        }
    }

    pub fn new(lambda: f64, alpha: f64, crossover_radius: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid("hetero.lambda", "must be finite and >= 0"));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid("hetero.alpha", "must be finite and > 0"));
        }
        if !(crossover_radius.is_finite() && crossover_radius > 0.0) {
            return Err(invalid("hetero.crossover", "must be finite and > 0"));
        }
        Ok(Heterogeneity {
            lambda,
            alpha,
            crossover_radius,
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.lambda == 0.0
    }

    #[inline]
    pub fn nu(&self, r: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        self.lambda / r.max(self.crossover_radius).powf(self.alpha)
    }
}

/// `μ(r) = 1 + ν(r)`.
pub fn mu_eval(h: &Heterogeneity, r: f64) -> f64 {
    1.0 + h.nu(r)
}

/// Truncated Fourier series `ρ(Θ) = a0 + Σ_m (c_m cos mΘ + s_m sin mΘ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularShape {
    pub mean: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl AngularShape {
    pub fn constant(rho: f64) -> Self {
        AngularShape {
            mean: rho,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    /// Parses the flat coefficient list `[a0, c1, s1, c2, s2, ...]`.
    pub fn from_coefficients(coeffs: &[f64]) -> Result<Self> {
        let (&mean, rest) = coeffs
            .split_first()
            .ok_or_else(|| invalid("init.shape", "at least the mean radius is required"))?;
        let mut cos = Vec::new();
        let mut sin = Vec::new();
        for pair in rest.chunks(2) {
            cos.push(pair[0]);
            sin.push(pair.get(1).copied().unwrap_or(0.0));
        }
        Ok(AngularShape { mean, cos, sin })
    }

    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = vec![self.mean];
        for (c, s) in self.cos.iter().zip(&self.sin) {
            out.push(*c);
            out.push(*s);
        }
        out
    }

    pub fn is_isotropic(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|c| *c == 0.0)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let mut rho = self.mean;
        for (m, (c, s)) in self.cos.iter().zip(&self.sin).enumerate() {
            let arg = (m as f64 + 1.0) * theta;
            rho += c * arg.cos() + s * arg.sin();
        }
        rho
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatumKind {
    Ball,
    Blob,
}

/// Compactly supported datum `u0 = 1{|x| <= ρ(Θ)}`, optionally smoothed,
/// squeezed between the indicators of the balls of radii `r1 < r2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDatum {
    pub kind: DatumKind,
    pub r1: f64,
    pub r2: f64,
    pub shape: AngularShape,
    pub smoothing: f64,
}

const SHAPE_SAMPLES: usize = 4096;

impl InitialDatum {
    pub fn ball(r1: f64, r2: f64, rho: f64) -> Result<Self> {
        Self::new(DatumKind::Ball, r1, r2, AngularShape::constant(rho), 0.0)
    }

    pub fn blob(r1: f64, r2: f64, shape: AngularShape) -> Result<Self> {
        Self::new(DatumKind::Blob, r1, r2, shape, 0.0)
    }

    pub fn new(
        kind: DatumKind,
        r1: f64,
        r2: f64,
        shape: AngularShape,
        smoothing: f64,
    ) -> Result<Self> {
        if !(r1.is_finite() && r1 > 0.0) {
            return Err(invalid("init.R1", "must be > 0"));
        }
        if !(r2.is_finite() && r2 > r1) {
            return Err(invalid("init.R2", "must exceed R1"));
        }
        if !(smoothing.is_finite() && smoothing >= 0.0) {
            return Err(invalid("init.smoothing", "must be >= 0"));
        }
        if kind == DatumKind::Ball && !shape.is_isotropic() {
            return Err(invalid("init.shape", "a ball datum takes a constant radius"));
        }
        let datum = InitialDatum {
            kind,
            r1,
            r2,
            shape,
            smoothing,
        };
        for k in 0..SHAPE_SAMPLES {
            datum.rho(TAU * k as f64 / SHAPE_SAMPLES as f64)?;
        }
        Ok(datum)
    }

    pub fn with_smoothing(mut self, width: f64) -> Result<Self> {
        if !(width.is_finite() && width >= 0.0) {
            return Err(invalid("init.smoothing", "must be >= 0"));
        }
        self.smoothing = width;
        Ok(self)
    }

    /// Radius of the support boundary in direction `theta`, checked against `[R1, R2]`.
    pub fn rho(&self, theta: f64) -> Result<f64> {
        let rho = self.shape.eval(theta);
        if !(self.r1..=self.r2).contains(&rho) {
            return Err(Error::OutOfRange {
                what: "angular radius rho(theta)",
                value: rho,
                lo: self.r1,
                hi: self.r2,
            });
        }
        Ok(rho)
    }

    /// Value at polar coordinates `(r, theta)`.
    pub fn eval_polar(&self, r: f64, theta: f64) -> Result<f64> {
        let rho = self.rho(theta)?;
        let r = r.abs();
        if self.smoothing == 0.0 {
            return Ok(if r <= rho { 1.0 } else { 0.0 });
        }
        // the ramp never leaves [R1, R2], so the ball sandwich survives smoothing
        let lo = (rho - 0.5 * self.smoothing).max(self.r1);
        let hi = (rho + 0.5 * self.smoothing).min(self.r2);
        if hi <= lo {
            return Ok(if r <= rho { 1.0 } else { 0.0 });
        }
        Ok(((hi - r) / (hi - lo)).clamp(0.0, 1.0))
    }

    /// Value at a Cartesian point of any dimension. The angle used for the
    /// shape is the planar angle of the first two coordinates.
    pub fn eval_point(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        let theta = match x {
            [] | [_] => 0.0,
            [a, b, ..] => b.atan2(*a).rem_euclid(TAU),
        };
        self.eval_polar(r, theta)
    }
}

/// Free-function form of [`InitialDatum::eval_point`].
pub fn u0_eval(d: &InitialDatum, x: &[f64]) -> Result<f64> {
    d.eval_point(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shipped() -> Vec<Nonlinearity> {
        vec![
            Nonlinearity::QuadraticKpp,
            Nonlinearity::general(vec![0.5, 0.25, 0.25]).unwrap(),
            Nonlinearity::general(vec![0.0, 2.0]).unwrap(),
        ]
    }

    #[test]
    fn quadratic_reaction_examples() {
        let nl = Nonlinearity::QuadraticKpp;
        assert_eq!(reaction(&nl, 0.0).unwrap(), (0.0, 1.0));
        assert_eq!(reaction(&nl, 0.5).unwrap(), (0.25, 0.0));
        assert_eq!(reaction(&nl, 1.0).unwrap(), (0.0, -1.0));
    }

    #[test]
    fn reaction_rejects_bad_input() {
        let nl = Nonlinearity::QuadraticKpp;
        assert!(matches!(reaction(&nl, f64::NAN), Err(Error::NonFinite(_))));
        assert!(matches!(
            reaction(&nl, 1.0 + 1e-9),
            Err(Error::OutOfRange { .. })
        ));
        assert!(reaction(&nl, -0.5e-12).is_ok());
    }

    #[test]
    fn nonlinearity_endpoints_and_slope() {
        for nl in shipped() {
            assert_eq!(nl.f(0.0), 0.0);
            assert_eq!(nl.f(1.0), 0.0);
            assert!(nl.fprime0() > 0.0);
            for k in 1..100 {
                assert!(nl.f(k as f64 / 100.0) > 0.0);
            }
        }
        assert_eq!(Nonlinearity::QuadraticKpp.fprime0(), 1.0);
        assert_eq!(Nonlinearity::QuadraticKpp.c_star(), 2.0);
    }

    #[test]
    fn general_fprime_matches_difference_quotient() {
        let nl = Nonlinearity::general(vec![0.5, 0.25, 0.25]).unwrap();
        for k in 1..20 {
            let u = k as f64 / 20.0;
            let h = 1e-6;
            let fd = (nl.f(u + h) - nl.f(u - h)) / (2.0 * h);
            assert!((fd - nl.fprime(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn near_one_form_agrees() {
        for nl in shipped() {
            for v in [1e-3, 0.1, 0.5, 0.9] {
                assert!((nl.f_near_one(v) - nl.f(1.0 - v)).abs() < 1e-14);
            }
            let v = 1e-14;
            assert!((nl.f_near_one(v) / v - (-nl.fprime1())).abs() < 1e-6);
        }
    }

    #[test]
    fn concavity_midpoint_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for nl in shipped() {
            for _ in 0..1000 {
                let a: f64 = rng.random_range(0.0..1.0);
                let b: f64 = rng.random_range(0.0..1.0);
                let mid = nl.f(0.5 * (a + b));
                assert!(mid >= 0.5 * (nl.f(a) + nl.f(b)) - 1e-14);
            }
        }
    }

    #[test]
    fn general_rejects_negative_coefficients() {
        assert!(Nonlinearity::general(vec![1.0, -0.1]).is_err());
        assert!(Nonlinearity::general(vec![]).is_err());
        assert!(Nonlinearity::general(vec![0.0]).is_err());
    }

    #[test]
    fn mu_examples() {
        let h0 = Heterogeneity::new(0.0, 1.3, 1.0).unwrap();
        assert_eq!(mu_eval(&h0, 5.0), 1.0);
        let h1 = Heterogeneity::new(1.0, 1.0, 1.0).unwrap();
        assert!((mu_eval(&h1, 10.0) - 1.1).abs() < 1e-15);
        let h2 = Heterogeneity::new(1.0, 2.0, 1.0).unwrap();
        assert!((mu_eval(&h2, 10.0) - 1.01).abs() < 1e-15);
        // frozen inside the crossover
        assert_eq!(mu_eval(&h1, 0.0), 2.0);
        assert_eq!(mu_eval(&h1, 0.5), 2.0);
    }

    #[test]
    fn mu_decays_to_one() {
        let h = Heterogeneity::new(2.0, 1.5, 3.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let m = mu_eval(&h, 10f64.powi(k));
            assert!(m <= prev && m > 1.0);
            prev = m;
        }
        assert!(prev - 1.0 < 1e-8);
    }

    #[test]
    fn u0_examples() {
        let d = InitialDatum::ball(1.0, 2.0, 1.5).unwrap();
        assert_eq!(d.eval_point(&[0.5, 0.0]).unwrap(), 1.0);
        assert_eq!(d.eval_point(&[3.0, 0.0]).unwrap(), 0.0);
        let blob = InitialDatum::blob(
            1.0,
            2.0,
            AngularShape::from_coefficients(&[1.5, 0.3]).unwrap(),
        )
        .unwrap();
        assert_eq!(blob.rho(0.0).unwrap(), 1.8);
        assert_eq!(blob.eval_point(&[1.9, 0.0]).unwrap(), 0.0);
        assert_eq!(blob.eval_point(&[1.7, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn u0_rejects_shape_outside_shell() {
        let shape = AngularShape::from_coefficients(&[1.5, 0.6]).unwrap();
        assert!(matches!(
            InitialDatum::blob(1.0, 2.0, shape),
            Err(Error::OutOfRange { .. })
        ));
        assert!(InitialDatum::ball(1.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn u0_respects_sandwich(x in -3.0f64..3.0, y in -3.0f64..3.0, w in 0.0f64..0.8) {
            let shape = AngularShape::from_coefficients(&[1.5, 0.3, -0.1]).unwrap();
            let d = InitialDatum::blob(1.0, 2.0, shape).unwrap().with_smoothing(w).unwrap();
            let u = d.eval_point(&[x, y]).unwrap();
            let r = (x * x + y * y).sqrt();
            let lower = if r <= 1.0 { 1.0 } else { 0.0 };
            let upper = if r <= 2.0 { 1.0 } else { 0.0 };
            prop_assert!(lower <= u && u <= upper);
            prop_assert!((0.0..=1.0).contains(&u));
        }
    }
}
