//! Barrier functions for the hat-transformed self-similar equation and
//! their numerical certification.
//!
//! Supersolution (origin at `ξ_δ^−`):
//! `w̄ = q₁φ₁γ₁ + q₂γ₂e^{−ξ²/16} + ζϕ₀` with `q₁ = q₂ = q/2`, driven by
//! `q̇ + q = Cζe^{−(1/2−δ)τ}`, `ζ̇ = C(q + ζe^{−(1/2−δ)τ})`.
//!
//! Subsolution (origin at `ξ_δ^+`): `w̲ = −q₂γ₂e^{−ξ²/16} + ζϕ₀`. The
//! reversed inequalities are met by the mirrored driver
//! `q̇ + q = Cζe^{−(1/2−δ)τ}`, `ζ̇ = −C(q + ζe^{−(1/2−δ)τ})`, which keeps
//! `ζ` positive and nonincreasing for moderate `C`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::frames::{eigen_data, varphi0, xi_delta, EigenData, SelfSimSnapshot, Side};

pub const MU: f64 = 1.0 / 16.0;
const OVERFLOW: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriverSense {
    /// `ζ̇ = +C(q + ζe^{−(1/2−δ)τ})`.
    Growing,
    /// `ζ̇ = −C(q + ζe^{−(1/2−δ)τ})`.
    Mirrored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QZetaParams {
    pub c: f64,
    pub delta: f64,
    pub q0: f64,
    pub zeta0: f64,
    pub tau_start: f64,
    pub sense: DriverSense,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QZetaTrajectory {
    pub params: QZetaParams,
    pub dtau: f64,
    pub tau: Vec<f64>,
    pub q: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl QZetaParams {
    fn rhs(&self, tau: f64, q: f64, z: f64) -> (f64, f64) {
        let e = (-(0.5 - self.delta) * tau).exp();
        let dq = self.c * z * e - q;
        let dz = self.c * (q + z * e);
        match self.sense {
            DriverSense::Growing => (dq, dz),
            DriverSense::Mirrored => (dq, -dz),
        }
    }

    fn rk4(&self, tau: f64, q: f64, z: f64, h: f64) -> (f64, f64) {
        let (a1, b1) = self.rhs(tau, q, z);
        let (a2, b2) = self.rhs(tau + 0.5 * h, q + 0.5 * h * a1, z + 0.5 * h * b1);
        let (a3, b3) = self.rhs(tau + 0.5 * h, q + 0.5 * h * a2, z + 0.5 * h * b2);
        let (a4, b4) = self.rhs(tau + h, q + h * a3, z + h * b3);
        (
            q + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            z + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
        )
    }
}

/// RK4 solution of the `(q, ζ)` system from `τ = 0`.
pub fn solve_qzeta(c: f64, delta: f64, q0: f64, zeta0: f64, tau_max: f64, dtau: f64) -> Result<QZetaTrajectory> {
    solve_driver(
        QZetaParams {
            c,
            delta,
            q0,
            zeta0,
            tau_start: 0.0,
            sense: DriverSense::Growing,
        },
        tau_max,
        dtau,
    )
}

pub fn solve_driver(params: QZetaParams, tau_max: f64, dtau: f64) -> Result<QZetaTrajectory> {
    let QZetaParams {
        c,
        delta,
        q0,
        zeta0,
        tau_start,
        ..
    } = params;
    if !(c.is_finite() && c >= 0.0) {
        return Err(invalid("C", "must be finite and >= 0"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(invalid("delta", "must lie in (0, 1/2)"));
    }
    if !(q0.is_finite() && q0 > 0.0) {
        return Err(invalid("q0", "must be positive"));
    }
    if !(zeta0.is_finite() && zeta0 >= 0.0) {
        return Err(invalid("zeta0", "must be >= 0"));
    }
    if !(dtau > 0.0 && dtau <= 1e-2) {
        return Err(invalid("dtau", "must lie in (0, 1e-2]"));
    }
    if !(tau_max.is_finite() && tau_max > tau_start) {
        return Err(invalid("tau_max", "must exceed the start time"));
    }
    let n = ((tau_max - tau_start) / dtau).ceil() as usize;
    let h = (tau_max - tau_start) / n as f64;
    let mut tau = Vec::with_capacity(n + 1);
    let mut q = Vec::with_capacity(n + 1);
    let mut zeta = Vec::with_capacity(n + 1);
    let (mut qq, mut zz) = (q0, zeta0);
    tau.push(tau_start);
    q.push(qq);
    zeta.push(zz);
    for i in 0..n {
        let t = tau_start + i as f64 * h;
        (qq, zz) = params.rk4(t, qq, zz, h);
        if !(qq.is_finite() && zz.is_finite()) || qq.abs().max(zz.abs()) > OVERFLOW {
            return Err(Error::Overflow(format!("(q, zeta) left the representable range at tau = {t}")));
        }
        tau.push(tau_start + (i + 1) as f64 * h);
        q.push(qq);
        zeta.push(zz);
    }
    Ok(QZetaTrajectory {
        params,
        dtau: h,
        tau,
        q,
        zeta,
    })
}

impl QZetaTrajectory {
    pub fn tau_max(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    /// `(q, ζ)` at any `τ` in range, by an RK4 step from the preceding node.
    pub fn state_at(&self, tau: f64) -> Result<(f64, f64)> {
        let t0 = self.params.tau_start;
        if !(tau >= t0 - 1e-12 && tau <= self.tau_max() + 1e-12) {
            return Err(Error::OutOfRange {
                what: "driver tau",
                value: tau,
                lo: t0,
                hi: self.tau_max(),
            });
        }
        let s = ((tau - t0) / self.dtau).max(0.0);
        let i = (s.floor() as usize).min(self.tau.len() - 1);
        let h = tau - self.tau[i];
        if h.abs() < 1e-15 {
            return Ok((self.q[i], self.zeta[i]));
        }
        Ok(self.params.rk4(self.tau[i], self.q[i], self.zeta[i], h))
    }

    /// `(q̇, ζ̇)` from the vector field at node `i`.
    pub fn derivative(&self, i: usize) -> (f64, f64) {
        self.params.rhs(self.tau[i], self.q[i], self.zeta[i])
    }

    /// Largest gap between centred differences of the stored trajectory and
    /// the vector field, relative to the local size of `(q, ζ)`.
    pub fn ode_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.tau.len() - 1 {
            let dq = (self.q[i + 1] - self.q[i - 1]) / (2.0 * self.dtau);
            let dz = (self.zeta[i + 1] - self.zeta[i - 1]) / (2.0 * self.dtau);
            let (fq, fz) = self.derivative(i);
            let scale = self.q[i].abs() + self.zeta[i].abs() + 1e-300;
            worst = worst.max(((dq - fq).abs() + (dz - fz).abs()) / scale);
        }
        worst
    }

    /// Least-squares slope `ρ` of `ln q ≈ ln K − ρτ` over the second half.
    pub fn q_decay_exponent(&self) -> f64 {
        let n = self.tau.len();
        let pts: Vec<(f64, f64)> = (n / 2..n)
            .filter(|&i| self.q[i] > 0.0)
            .map(|i| (self.tau[i], self.q[i].ln()))
            .collect();
        -slope(&pts)
    }

    pub fn invariants(&self, tol: f64) -> DriverInvariants {
        let q_positive = self.q.iter().all(|&v| v > 0.0);
        let zeta_positive = self.zeta.iter().skip(1).all(|&v| v > 0.0);
        let dz_min = self
            .zeta
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let dz_max = self
            .zeta
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        DriverInvariants {
            q_positive,
            zeta_positive,
            zeta_monotone: match self.params.sense {
                DriverSense::Growing => dz_min >= -tol,
                DriverSense::Mirrored => dz_max <= tol,
            },
            q_decay_exponent: self.q_decay_exponent(),
        }
    }
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriverInvariants {
    pub q_positive: bool,
    pub zeta_positive: bool,
    pub zeta_monotone: bool,
    pub q_decay_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma31Report {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q0: f64,
    pub tau_max: f64,
    pub k_est: f64,
    pub lambda_root: f64,
    /// `q(τ) <= 2q₀e^{Λτ}` on the whole horizon.
    pub exp_bound_holds: bool,
    /// `q(τ)e^{min(a,b)τ/2}` is nonincreasing over the last tenth of the
    /// horizon, so the supremum is attained.
    pub weighted_tail_settled: bool,
    pub tau_m: f64,
    /// Maximum of `q` over `[τ_m, τ_max]` does not exceed that over `[0, τ_m]`.
    pub max_before_tau_m: bool,
    pub pass: bool,
    #[serde(skip)]
    pub tau: Vec<f64>,
    #[serde(skip)]
    pub q: Vec<f64>,
}

/// Positive root of `Λ² − C(1 + 1/q₀)Λ − C = 0`.
pub fn lambda_root(c: f64, q0: f64) -> f64 {
    let b = c * (1.0 + 1.0 / q0);
    0.5 * (b + (b * b + 4.0 * c).sqrt())
}

/// Smallest `τ_m` with `(3/2)(C/a)e^{−bτ_m} <= q₀/2` and
/// `(C/a)e^{−bτ}(1 + τ) <= 1/3` for all `τ >= τ_m`.
pub fn tau_m(a: f64, b: f64, c: f64, q0: f64) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let t1 = ((3.0 * c / (a * q0)).ln() / b).max(0.0);
    // g(τ) = e^{−bτ}(1+τ) decreases for τ >= 1/b − 1
    let g = |t: f64| c / a * (-b * t).exp() * (1.0 + t);
    let turn = (1.0 / b - 1.0).max(0.0);
    let t2 = if g(0.0) <= 1.0 / 3.0 && g(turn) <= 1.0 / 3.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (turn, turn + 1.0);
        while g(hi) > 1.0 / 3.0 {
            hi = 2.0 * hi + 1.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 1.0 / 3.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    t1.max(t2)
}

/// Integrates the extremal (equality) trajectory
/// `q̇ = −(a − Ce^{−bτ})q + Ce^{−bτ}(1 + Q)`, `Q̇ = q`.
pub fn lemma31_check(a: f64, b: f64, c: f64, q0: f64, tau_max: f64) -> Result<Lemma31Report> {
    for (name, v) in [("a", a), ("b", b), ("q0", q0), ("tau_max", tau_max)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(name, "must be positive"));
        }
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(invalid("C", "must be >= 0"));
    }
    let rhs = |t: f64, q: f64, qq: f64| -> (f64, f64) {
        let e = c * (-b * t).exp();
        (-(a - e) * q + e * (1.0 + qq), q)
    };
    let n = (tau_max / 1e-3).ceil() as usize;
    let h = tau_max / n as f64;
    let mut taus = Vec::with_capacity(n + 1);
    let mut qs = Vec::with_capacity(n + 1);
    let (mut q, mut big_q) = (q0, 0.0);
    taus.push(0.0);
    qs.push(q);
    for i in 0..n {
        let t = i as f64 * h;
        let (a1, b1) = rhs(t, q, big_q);
        let (a2, b2) = rhs(t + 0.5 * h, q + 0.5 * h * a1, big_q + 0.5 * h * b1);
        let (a3, b3) = rhs(t + 0.5 * h, q + 0.5 * h * a2, big_q + 0.5 * h * b2);
        let (a4, b4) = rhs(t + h, q + h * a3, big_q + h * b3);
        q += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        big_q += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if !q.is_finite() {
            break;
        }
        taus.push((i + 1) as f64 * h);
        qs.push(q);
    }
    let m = 0.5 * a.min(b);
    let weighted: Vec<f64> = taus.iter().zip(&qs).map(|(t, q)| q * (m * t).exp()).collect();
    let k_est = weighted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lam = lambda_root(c, q0);
    let exp_bound_holds = taus
        .iter()
        .zip(&qs)
        .all(|(t, q)| *q <= 2.0 * q0 * (lam * t).exp() * (1.0 + 1e-12));
    let tail_start = weighted.len() * 9 / 10;
    let weighted_tail_settled = weighted[tail_start..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let tm = tau_m(a, b, c, q0);
    let split = taus.partition_point(|&t| t <= tm);
    let early = qs[..split.max(1)].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let late = qs[split.min(qs.len())..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_before_tau_m = late <= early * (1.0 + 1e-12);
    let complete = taus.len() == n + 1;
    Ok(Lemma31Report {
        a,
        b,
        c,
        q0,
        tau_max,
        k_est,
        lambda_root: lam,
        exp_bound_holds,
        weighted_tail_settled,
        tau_m: tm,
        max_before_tau_m,
        pass: complete && k_est.is_finite() && exp_bound_holds && weighted_tail_settled,
        tau: taus,
        q: qs,
    })
}

/// Quintic smoothstep `6x⁵ − 15x⁴ + 10x³` clamped to `[0, 1]`.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// `γ₁ = 1` on `(−∞, a0/2]`, `0` on `[2a0/3, ∞)`.
pub fn gamma1(xi: f64, a0: f64) -> f64 {
    let (lo, hi) = (0.5 * a0, 2.0 * a0 / 3.0);
    1.0 - smoothstep((xi - lo) / (hi - lo))
}

/// `γ₂ = 0` on `(−∞, 1]`, `1` on `[2, ∞)`.
pub fn gamma2(xi: f64) -> f64 {
    smoothstep(xi - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    Super,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierPair {
    pub kind: BarrierKind,
    pub a0: f64,
    pub mu_exp: f64,
    pub side: Side,
    pub eigen: EigenData,
    pub driver: QZetaTrajectory,
}

pub fn build_barrier(kind: BarrierKind, a0: f64, driver: QZetaTrajectory) -> Result<BarrierPair> {
    let eigen = eigen_data(a0)?;
    eigen.require_admissible()?;
    let inv = driver.invariants(1e-12);
    if !inv.q_positive {
        return Err(invalid("driver", "q must stay positive"));
    }
    let expected = match kind {
        BarrierKind::Super => DriverSense::Growing,
        BarrierKind::Sub => DriverSense::Mirrored,
    };
    if driver.params.sense != expected {
        return Err(invalid("driver", "driver sense does not match the barrier kind"));
    }
    Ok(BarrierPair {
        kind,
        a0,
        mu_exp: MU,
        side: match kind {
            BarrierKind::Super => Side::Minus,
            BarrierKind::Sub => Side::Plus,
        },
        eigen,
        driver,
    })
}

impl BarrierPair {
    /// Value at `(τ, ξ̂)` in hat coordinates.
    pub fn eval(&self, tau: f64, xi: f64) -> Result<f64> {
        let (q, z) = self.driver.state_at(tau)?;
        Ok(self.eval_with(q, z, xi))
    }

    pub fn eval_with(&self, q: f64, zeta: f64, xi: f64) -> f64 {
        let gauss = (-self.mu_exp * xi * xi).exp();
        match self.kind {
            BarrierKind::Super => {
                let (q1, q2) = (0.5 * q, 0.5 * q);
                q1 * self.eigen.phi1(xi) * gamma1(xi, self.a0) + q2 * gamma2(xi) * gauss + zeta * varphi0(xi)
            }
            BarrierKind::Sub => -q * gamma2(xi) * gauss + zeta * varphi0(xi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionMargins {
    /// `q̇₁ + q₁ − Cζe^{−(1/2−δ)τ}`
    pub q1: f64,
    /// `q̇₂ + q₂ − Cζe^{−(1/2−δ)τ}`
    pub q2: f64,
    /// `ζ̇ − C(q₁ + q₂ + ζe^{−(1/2−δ)τ})`, sign-flipped for the mirrored driver
    pub zeta: f64,
}

impl ConditionMargins {
    pub fn min(&self) -> f64 {
        self.q1.min(self.q2).min(self.zeta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientReport {
    pub c_suff: f64,
    pub c_sys: f64,
    pub worst: ConditionMargins,
    pub ode_defect: f64,
    pub pass: bool,
}

/// Pointwise check of the three sufficient conditions on the driver's
/// τ-grid, with derivatives taken from the vector field. For the growing
/// driver the supersolution split `q₁ = q₂ = q/2` is used; for the mirrored
/// driver `q₂ = q` and the inequalities on `ζ̇` are reversed.
pub fn check_sufficient_conditions(driver: &QZetaTrajectory, c_suff: f64) -> SufficientReport {
    let p = &driver.params;
    let mut worst = ConditionMargins {
        q1: f64::INFINITY,
        q2: f64::INFINITY,
        zeta: f64::INFINITY,
    };
    for i in 0..driver.tau.len() {
        let (q, z) = (driver.q[i], driver.zeta[i]);
        let e = (-(0.5 - p.delta) * driver.tau[i]).exp();
        let (dq, dz) = driver.derivative(i);
        let (m1, m2, m3) = match p.sense {
            DriverSense::Growing => {
                let (q1, dq1) = (0.5 * q, 0.5 * dq);
                let m = dq1 + q1 - c_suff * z * e;
                (m, m, dz - c_suff * (q + z * e))
            }
            DriverSense::Mirrored => {
                let m = dq + q - c_suff * z * e;
                (m, m, -dz - c_suff * (q + z * e))
            }
        };
        worst.q1 = worst.q1.min(m1);
        worst.q2 = worst.q2.min(m2);
        worst.zeta = worst.zeta.min(m3);
    }
    let tol = -1e-10;
    SufficientReport {
        c_suff,
        c_sys: p.c,
        pass: worst.q1 >= tol && worst.q2 >= tol && worst.zeta >= tol,
        worst,
        ode_defect: driver.ode_defect(),
    }
}

/// `ŵ^±(τ, ξ̂) = e^{ξ̂²/8} w(τ, ξ̂ + ξ_δ^±)` on the nodes with `ξ̂ >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HatSnapshot {
    pub tau: f64,
    pub side: Side,
    pub xi_hat: Vec<f64>,
    pub n_theta: usize,
    /// Row-major `[theta][xi_hat]`.
    pub values: Vec<f64>,
}

pub fn hat_transform(s: &SelfSimSnapshot, side: Side, delta: f64) -> Result<HatSnapshot> {
    let xd = xi_delta(s.tau, delta, side);
    let start = (0..s.n_xi).find(|&j| s.xi(j) >= xd - 1e-12 * s.dxi).ok_or(Error::Coverage {
        what: "xi",
        lo: xd,
        hi: xd,
        have_lo: s.xi(0),
        have_hi: s.xi(s.n_xi - 1),
    })?;
    if s.xi(0) > xd + s.dxi {
        return Err(Error::Coverage {
            what: "xi",
            lo: xd,
            hi: s.xi(s.n_xi - 1),
            have_lo: s.xi(0),
            have_hi: s.xi(s.n_xi - 1),
        });
    }
    let xi_hat: Vec<f64> = (start..s.n_xi).map(|j| (s.xi(j) - xd).max(0.0)).collect();
    let mut values = Vec::with_capacity(xi_hat.len() * s.n_theta);
    for th in 0..s.n_theta {
        let row = s.row(th);
        for (k, j) in (start..s.n_xi).enumerate() {
            values.push((xi_hat[k] * xi_hat[k] / 8.0).exp() * row[j]);
        }
    }
    Ok(HatSnapshot {
        tau: s.tau,
        side,
        xi_hat,
        n_theta: s.n_theta,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotMargin {
    pub tau: f64,
    /// Smallest of `w̄ − ŵ` (super) or `ŵ − w̲` (sub) over the grid.
    pub worst_margin: f64,
    pub worst_xi_hat: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub kind: BarrierKind,
    pub per_tau: Vec<SnapshotMargin>,
    pub violations: usize,
    pub grid_points: usize,
    pub pass: bool,
}

/// Compares every snapshot (with `τ` inside the driver's range) against the
/// barrier on `ξ̂ >= 0` and every angle.
pub fn certify_sandwich(snaps: &[SelfSimSnapshot], barrier: &BarrierPair, delta: f64) -> Result<SandwichReport> {
    let t0 = barrier.driver.params.tau_start;
    let in_range: Vec<&SelfSimSnapshot> = snaps.iter().filter(|s| s.tau >= t0 - 1e-12).collect();
    let per_tau = in_range
        .par_iter()
        .map(|s| snapshot_margin(s, barrier, delta))
        .collect::<Result<Vec<_>>>()?;
    let violations = per_tau.iter().map(|m| m.0.violations).sum();
    let grid_points = per_tau.iter().map(|m| m.1).sum();
    Ok(SandwichReport {
        kind: barrier.kind,
        pass: violations == 0 && !per_tau.is_empty(),
        per_tau: per_tau.into_iter().map(|m| m.0).collect(),
        violations,
        grid_points,
    })
}

fn snapshot_margin(s: &SelfSimSnapshot, barrier: &BarrierPair, delta: f64) -> Result<(SnapshotMargin, usize)> {
    let hat = hat_transform(s, barrier.side, delta)?;
    let (q, z) = barrier.driver.state_at(s.tau)?;
    let bar: Vec<f64> = hat.xi_hat.iter().map(|&x| barrier.eval_with(q, z, x)).collect();
    let mut worst = f64::INFINITY;
    let mut worst_xi = 0.0;
    let mut count = 0;
    let n = hat.xi_hat.len();
    for th in 0..hat.n_theta {
        for k in 0..n {
            let w = hat.values[th * n + k];
            let margin = match barrier.kind {
                BarrierKind::Super => bar[k] - w,
                BarrierKind::Sub => w - bar[k],
            };
            if margin < worst {
                worst = margin;
                worst_xi = hat.xi_hat[k];
            }
            if margin < -1e-12 * (1.0 + w.abs()) {
                count += 1;
            }
        }
    }
    let margin = SnapshotMargin {
        tau: s.tau,
        worst_margin: worst,
        worst_xi_hat: worst_xi,
        violations: count,
    };
    Ok((margin, n * hat.n_theta))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutoScaleOptions {
    pub a0: f64,
    pub delta: f64,
    pub c_suff: f64,
    pub q0: f64,
    pub zeta0: f64,
    pub dtau: f64,
    pub max_rounds: usize,
}

impl Default for AutoScaleOptions {
    fn default() -> Self {
        AutoScaleOptions {
            a0: crate::frames::DEFAULT_A0,
            delta: 0.1,
            c_suff: 0.05,
            q0: 1.0,
            zeta0: 1.0,
            dtau: 1e-2,
            max_rounds: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifiedBarrier {
    pub barrier: BarrierPair,
    pub sandwich: SandwichReport,
    pub conditions: SufficientReport,
    /// Scalings needed for the ordering at the anchor time.
    pub anchor_rounds: usize,
    /// Further scalings triggered by violations at later times.
    pub extra_rounds: usize,
}

/// Supersolution certification: the driver starts at `τ = 0` with system
/// constant `2·C_suff`; `(q₀, ζ₀)` are doubled until the ordering holds at
/// the first snapshot and then at every snapshot.
pub fn certify_super(snaps: &[SelfSimSnapshot], opts: &AutoScaleOptions) -> Result<CertifiedBarrier> {
    let tau_max = snaps.iter().map(|s| s.tau).fold(0.0, f64::max).max(opts.dtau) + opts.dtau;
    let (mut q0, mut z0) = (opts.q0, opts.zeta0);
    let first: Vec<SelfSimSnapshot> = snaps.iter().take(1).cloned().collect();
    let mut anchor_rounds = 0;
    let mut extra_rounds = 0;
    for round in 0..opts.max_rounds {
        let driver = solve_driver(
            QZetaParams {
                c: 2.0 * opts.c_suff,
                delta: opts.delta,
                q0,
                zeta0: z0,
                tau_start: 0.0,
                sense: DriverSense::Growing,
            },
            tau_max,
            opts.dtau,
        )?;
        let barrier = build_barrier(BarrierKind::Super, opts.a0, driver)?;
        let anchored = certify_sandwich(&first, &barrier, opts.delta)?.pass;
        if !anchored {
            anchor_rounds = round + 1;
            q0 *= 2.0;
            z0 *= 2.0;
            continue;
        }
        let sandwich = certify_sandwich(snaps, &barrier, opts.delta)?;
        if sandwich.pass {
            let conditions = check_sufficient_conditions(&barrier.driver, opts.c_suff);
            return Ok(CertifiedBarrier {
                barrier,
                sandwich,
                conditions,
                anchor_rounds,
                extra_rounds,
            });
        }
        extra_rounds += 1;
        q0 *= 2.0;
        z0 *= 2.0;
    }
    Err(Error::NoConvergence("supersolution auto-scaling exhausted its rounds".into()))
}

/// Subsolution certification: the mirrored driver starts at the first
/// snapshot with `τ > 0` (at `τ = 0` the hat field vanishes on `ξ̂ >= 0`).
/// The driver is linear, so halving `(q₀, ζ₀)` scales the barrier by 1/2;
/// violations do exactly that, which succeeds wherever `ŵ > 0`. If `ζ` loses
/// positivity the system constant is halved down to `C_suff`, then `q₀/ζ₀`.
pub fn certify_sub(snaps: &[SelfSimSnapshot], opts: &AutoScaleOptions) -> Result<CertifiedBarrier> {
    let anchor = snaps
        .iter()
        .map(|s| s.tau)
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !anchor.is_finite() {
        return Err(invalid("snapshots", "subsolution needs a snapshot with tau > 0"));
    }
    let tau_max = snaps.iter().map(|s| s.tau).fold(0.0, f64::max) + opts.dtau;
    let later: Vec<SelfSimSnapshot> = snaps.iter().filter(|s| s.tau >= anchor).cloned().collect();
    let (mut q0, mut z0) = (opts.q0, opts.zeta0);
    let mut c = 2.0 * opts.c_suff;
    let mut extra_rounds = 0;
    for _ in 0..opts.max_rounds {
        let driver = solve_driver(
            QZetaParams {
                c,
                delta: opts.delta,
                q0,
                zeta0: z0,
                tau_start: anchor,
                sense: DriverSense::Mirrored,
            },
            tau_max,
            opts.dtau,
        )?;
        if !driver.zeta.iter().all(|&z| z > 0.0) {
            if c > opts.c_suff * (1.0 + 1e-12) {
                c = (0.5 * c).max(opts.c_suff);
            } else {
                q0 *= 0.5;
            }
            extra_rounds += 1;
            continue;
        }
        let barrier = build_barrier(BarrierKind::Sub, opts.a0, driver)?;
        let sandwich = certify_sandwich(&later, &barrier, opts.delta)?;
        if sandwich.pass {
            let conditions = check_sufficient_conditions(&barrier.driver, opts.c_suff);
            return Ok(CertifiedBarrier {
                barrier,
                sandwich,
                conditions,
                anchor_rounds: 0,
                extra_rounds,
            });
        }
        extra_rounds += 1;
        q0 *= 0.5;
        z0 *= 0.5;
    }
    Err(Error::NoConvergence("subsolution auto-scaling exhausted its rounds".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryBounds {
    pub q_lower: f64,
    pub q_upper: f64,
    pub holds: bool,
}

/// Tightest constants with `q̲(ξ − ε) <= w <= q̄(ξ + ε)`, `ε = e^{−(1/2−δ)τ}`,
/// over `0 <= ξ <= 1` and snapshots with `τ >= 1`.
pub fn corollary_bounds(snaps: &[SelfSimSnapshot], delta: f64) -> CorollaryBounds {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    let mut seen = false;
    for s in snaps.iter().filter(|s| s.tau >= 1.0) {
        let eps = (-(0.5 - delta) * s.tau).exp();
        for th in 0..s.n_theta {
            let row = s.row(th);
            for (j, &w) in row.iter().enumerate() {
                let xi = s.xi(j);
                if !(0.0..=1.0).contains(&xi) {
                    continue;
                }
                seen = true;
                hi = hi.max(w / (xi + eps));
                if xi > 2.0 * eps {
                    lo = lo.min(w / (xi - eps));
                }
            }
        }
    }
    CorollaryBounds {
        q_lower: lo,
        q_upper: hi,
        holds: seen && lo > 0.0 && lo.is_finite() && hi.is_finite(),
    }
}

/// `sup_{ξ>=0, Θ} e^{ξ²/16} |∂_Θ w|` per snapshot, by centred differences
/// in `Θ`.
pub fn angular_gradient_constants(snaps: &[SelfSimSnapshot]) -> Vec<(f64, f64)> {
    snaps
        .iter()
        .map(|s| {
            let n = s.n_theta;
            let dth = std::f64::consts::TAU / n as f64;
            let mut worst: f64 = 0.0;
            if n > 1 {
                for th in 0..n {
                    let (a, b) = (s.row((th + 1) % n), s.row((th + n - 1) % n));
                    for j in 0..s.n_xi {
                        let xi = s.xi(j);
                        if xi < 0.0 {
                            continue;
                        }
                        let g = (a[j] - b[j]) / (2.0 * dth);
                        worst = worst.max((xi * xi / 16.0).exp() * g.abs());
                    }
                }
            }
            (s.tau, worst)
        })
        .collect()
}
