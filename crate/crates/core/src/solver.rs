//! Finite-difference integration of `∂_t u = Δu + f(u) + ν(r)u` on a
//! co-moving window, for the even line, radially symmetric `R^N`, and the
//! polar plane.
//!
//! Grid nodes sit at `r_i = (origin_cells + i)·dr`, so a snapshot reproduces
//! absolute radii exactly from two integers and `dr`. While the window
//! contains `r = 0` the symmetry stencil `Δu|₀ = 2N(u₁ − u₀)/dr²` closes the
//! system (`N = 1` for the line, which is treated as the even half-line).
//! Once the window has left the origin the trailing ghost copies the first
//! interior value, so the boundary carries the interior trend `1 − ε_b`. The
//! leading ghost is `0`.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::{Heterogeneity, InitialDatum, Nonlinearity};

/// Initial time of every run: `u(1, x) = u0(x)`.
pub const T0: f64 = 1.0;
/// Magnitudes below this are flushed to zero to keep subnormals out of the
/// leading edge.
const FLUSH: f64 = 1e-200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    Line,
    Radial { n: u32 },
    Polar2d { n_theta: usize },
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Geometry::Line => Ok(()),
            Geometry::Radial { n } if n >= 2 => Ok(()),
            Geometry::Radial { .. } => Err(invalid("geometry.N", "radial geometry needs N >= 2")),
            Geometry::Polar2d { n_theta } if n_theta >= 8 && n_theta % 2 == 0 => Ok(()),
            Geometry::Polar2d { .. } => {
                Err(invalid("geometry.n_theta", "must be even and >= 8"))
            }
        }
    }

    /// Spatial dimension of the underlying problem.
    pub fn dimension(&self) -> u32 {
        match *self {
            Geometry::Line => 1,
            Geometry::Radial { n } => n,
            Geometry::Polar2d { .. } => 2,
        }
    }

    /// Factor in the explicit bound `dt <= dr² / (2·dim_factor)`; it is the
    /// weight `N` of the origin stencil (line 1, radial N, polar 2).
    pub fn dim_factor(&self) -> f64 {
        self.dimension() as f64
    }

    pub fn n_theta(&self) -> usize {
        match *self {
            Geometry::Polar2d { n_theta } => n_theta,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WindowPolicy {
    Fixed,
    CoMoving {
        anchor_level: f64,
        margin_back: f64,
        margin_front: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Heun's method on the full semi-discrete system.
    ExplicitRk2,
    /// Implicit radial diffusion, explicit reaction (IMEX Euler).
    SemiImplicit,
}

pub fn stability_bound(dr: f64, geometry: &Geometry) -> f64 {
    dr * dr / (2.0 * geometry.dim_factor())
}

pub fn default_dt(dr: f64, geometry: &Geometry) -> f64 {
    0.4 * dr * dr / geometry.dim_factor()
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub geometry: Geometry,
    pub dr: f64,
    pub dt: f64,
    pub window_width: f64,
    pub window_policy: WindowPolicy,
    pub t_end: f64,
    pub record_times: Vec<f64>,
    pub nl: Nonlinearity,
    pub het: Heterogeneity,
    pub init: InitialDatum,
    pub scheme: TimeScheme,
    /// Polar only: the exact angular diffusion step is applied once every
    /// this many radial steps (Lie splitting).
    pub angular_interval: usize,
}

impl SolverConfig {
    /// Configuration with the default time step, a co-moving window of
    /// width 400 (margins 150 behind, 250 ahead) and the quadratic
    /// homogeneous reaction.
    pub fn new(geometry: Geometry, dr: f64, init: InitialDatum) -> Self {
        SolverConfig {
            geometry,
            dr,
            dt: default_dt(dr, &geometry),
            window_width: 400.0,
            window_policy: WindowPolicy::CoMoving {
                anchor_level: 0.5,
                margin_back: 150.0,
                margin_front: 250.0,
            },
            t_end: 100.0,
            record_times: Vec::new(),
            nl: Nonlinearity::QuadraticKpp,
            het: Heterogeneity::homogeneous(),
            init,
            scheme: TimeScheme::ExplicitRk2,
            angular_interval: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.dr.is_finite() && self.dr > 0.0) {
            return Err(invalid("solver.dr", "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("solver.dt", "must be positive"));
        }
        match self.scheme {
            TimeScheme::ExplicitRk2 => {
                let bound = stability_bound(self.dr, &self.geometry);
                if self.dt > bound * (1.0 + 1e-12) {
                    return Err(Error::UnstableTimeStep {
                        dt: self.dt,
                        bound,
                    });
                }
            }
            TimeScheme::SemiImplicit => {
                // explicit reaction: keep dt·sup|f'| well inside (0, 1)
                let bound = 0.5 / (self.nl.fprime0() + self.het.nu(0.0)).max(1.0);
                if self.dt > bound {
                    return Err(Error::UnstableTimeStep {
                        dt: self.dt,
                        bound,
                    });
                }
            }
        }
        if !(self.window_width.is_finite() && self.window_width >= 10.0 * self.dr) {
            return Err(invalid("solver.window_width", "must hold at least 10 cells"));
        }
        if let WindowPolicy::CoMoving {
            anchor_level,
            margin_back,
            margin_front,
        } = self.window_policy
        {
            if !(anchor_level > 0.0 && anchor_level < 1.0) {
                return Err(invalid("window.anchor_level", "must lie in (0, 1)"));
            }
            if !(margin_back > 0.0 && margin_front > 0.0) {
                return Err(invalid("window.margins", "must be positive"));
            }
            if margin_back + margin_front > self.window_width {
                return Err(invalid("window.margins", "margins exceed the window width"));
            }
        }
        if !(self.t_end.is_finite() && self.t_end >= T0) {
            return Err(invalid("solver.t_end", "must be >= 1"));
        }
        if self.record_times.iter().any(|t| !(t.is_finite() && *t >= T0)) {
            return Err(invalid("solver.record_times", "times must be finite and >= 1"));
        }
        if self.angular_interval == 0 {
            return Err(invalid("solver.angular_interval", "must be >= 1"));
        }
        if self.geometry.n_theta() == 1 && !self.init.shape.is_isotropic() {
            return Err(invalid(
                "init.shape",
                "an angular shape needs the polar geometry",
            ));
        }
        if self.init.r2 >= self.window_width {
            return Err(invalid(
                "solver.window_width",
                "window too narrow to contain the support of u0",
            ));
        }
        Ok(())
    }

    pub fn n_r(&self) -> usize {
        (self.window_width / self.dr).round() as usize + 1
    }
}

/// Immutable snapshot of the solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionField {
    pub t: f64,
    pub geometry: Geometry,
    pub dr: f64,
    /// Absolute radius of node `i` is `(origin_cells + i)·dr`.
    pub origin_cells: u64,
    pub n_r: usize,
    pub n_theta: usize,
    /// Row-major `[theta][r]`.
    pub values: Vec<f64>,
    /// Value imposed behind the trailing edge per row (`None` while the
    /// window contains the origin).
    pub trailing_ghost: Option<Vec<f64>>,
    pub leading_ghost: f64,
}

impl SolutionField {
    #[inline]
    pub fn r(&self, i: usize) -> f64 {
        (self.origin_cells + i as u64) as f64 * self.dr
    }

    pub fn r_min(&self) -> f64 {
        self.r(0)
    }

    pub fn r_max(&self) -> f64 {
        self.r(self.n_r - 1)
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_r..(j + 1) * self.n_r]
    }

    pub fn contains_origin(&self) -> bool {
        self.origin_cells == 0
    }

    /// Linear interpolation in `r` along row `j`; `None` outside the window.
    pub fn sample(&self, j: usize, r: f64) -> Option<f64> {
        let s = r / self.dr - self.origin_cells as f64;
        if !(s >= 0.0 && s <= (self.n_r - 1) as f64) {
            return None;
        }
        let row = self.row(j);
        let i = (s.floor() as usize).min(self.n_r - 2);
        let f = s - i as f64;
        Some(row[i] + f * (row[i + 1] - row[i]))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Per-node stencil `du_i = cm·u_{i−1} + c0·u_i + cp·u_{i+1} + ν_i u_i`.
#[derive(Debug, Clone, Default)]
struct Stencil {
    cm: Vec<f64>,
    c0: Vec<f64>,
    cp: Vec<f64>,
    nu: Vec<f64>,
    at_origin: bool,
}

impl Stencil {
    fn build(cfg: &SolverConfig, origin_cells: u64, n: usize) -> Self {
        let dr = cfg.dr;
        let inv = 1.0 / (dr * dr);
        let curv = cfg.geometry.dimension() as f64 - 1.0;
        let mut s = Stencil {
            cm: vec![inv; n],
            c0: vec![-2.0 * inv; n],
            cp: vec![inv; n],
            nu: vec![0.0; n],
            at_origin: origin_cells == 0,
        };
        for i in 0..n {
            let r = (origin_cells + i as u64) as f64 * dr;
            if r == 0.0 {
                let nn = cfg.geometry.dim_factor();
                s.cm[i] = 0.0;
                s.c0[i] = -2.0 * nn * inv;
                s.cp[i] = 2.0 * nn * inv;
            } else if curv != 0.0 {
                let adv = curv / (2.0 * r * dr);
                s.cm[i] = inv - adv;
                s.cp[i] = inv + adv;
            }
            s.nu[i] = cfg.het.nu(r);
        }
        s
    }
}

/// Writes `out[i] = base[i]·a + (x[i] + dt·F(x)[i])·b` where `F` is the
/// semi-discrete right-hand side of one radial row. `first_nb` replaces
/// `x[1]` in the origin stencil (ring mean in polar geometry).
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn row_update<R: Fn(f64) -> f64>(
    out: &mut [f64],
    base: &[f64],
    x: &[f64],
    st: &Stencil,
    dt: f64,
    first_nb: f64,
    a: f64,
    b: f64,
    react: &R,
) {
    let n = x.len();
    let (cm, c0, cp, nu) = (&st.cm[..n], &st.c0[..n], &st.cp[..n], &st.nu[..n]);
    let out = &mut out[..n];
    let base = &base[..n];
    let flush = |v: f64| if v.abs() < FLUSH { 0.0 } else { v };
    // node 0
    let left = if st.at_origin { 0.0 } else { x[0] };
    let f0 = cm[0] * left + c0[0] * x[0] + cp[0] * first_nb + react(x[0]) + nu[0] * x[0];
    out[0] = flush(a * base[0] + b * (x[0] + dt * f0));
    for i in 1..n - 1 {
        let xi = x[i];
        let d = cm[i] * x[i - 1] + c0[i] * xi + cp[i] * x[i + 1] + react(xi) + nu[i] * xi;
        out[i] = flush(a * base[i] + b * (xi + dt * d));
    }
    let xl = x[n - 1];
    let d = cm[n - 1] * x[n - 2] + c0[n - 1] * xl + react(xl) + nu[n - 1] * xl;
    out[n - 1] = flush(a * base[n - 1] + b * (xl + dt * d));
}

/// One IMEX Euler step for a row: `(I − dt·D) u⁺ = u + dt·R(u)`.
fn row_imex<R: Fn(f64) -> f64>(
    u: &mut [f64],
    st: &Stencil,
    dt: f64,
    first_nb: f64,
    react: &R,
    scratch: &mut Vec<f64>,
) {
    let n = u.len();
    scratch.resize(2 * n, 0.0);
    let (cprime, dprime) = scratch.split_at_mut(n);
    // Thomas algorithm; row 0 folds in the boundary closure
    let mut rhs0 = u[0] + dt * (react(u[0]) + st.nu[0] * u[0]);
    let (mut b0, mut c0) = (1.0 - dt * st.c0[0], -dt * st.cp[0]);
    if st.at_origin && first_nb != u.get(1).copied().unwrap_or(0.0) {
        // polar origin: ring mean enters explicitly
        rhs0 += dt * st.cp[0] * first_nb;
        c0 = 0.0;
    } else if !st.at_origin {
        b0 -= dt * st.cm[0];
    }
    cprime[0] = c0 / b0;
    dprime[0] = rhs0 / b0;
    for i in 1..n {
        let a = -dt * st.cm[i];
        let b = 1.0 - dt * st.c0[i];
        let c = if i + 1 < n { -dt * st.cp[i] } else { 0.0 };
        let rhs = u[i] + dt * (react(u[i]) + st.nu[i] * u[i]);
        let m = b - a * cprime[i - 1];
        cprime[i] = c / m;
        dprime[i] = (rhs - a * dprime[i - 1]) / m;
    }
    u[n - 1] = dprime[n - 1];
    for i in (0..n - 1).rev() {
        u[i] = dprime[i] - cprime[i] * u[i + 1];
    }
    for v in u.iter_mut() {
        if v.abs() < FLUSH {
            *v = 0.0;
        }
    }
}

struct Angular {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

pub struct Solver {
    cfg: SolverConfig,
    t: f64,
    origin_cells: u64,
    n_r: usize,
    n_theta: usize,
    u: Vec<f64>,
    buf: Vec<f64>,
    buf2: Vec<f64>,
    stencil: Stencil,
    angular: Option<Angular>,
    steps: u64,
    steps_since_angular: usize,
    time_since_angular: f64,
    last_check: f64,
    max_seen: f64,
    shifts: Vec<(f64, u64)>,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let n_r = cfg.n_r();
        let n_theta = cfg.geometry.n_theta();
        let mut u = vec![0.0; n_r * n_theta];
        for j in 0..n_theta {
            let theta = TAU * j as f64 / n_theta as f64;
            for i in 0..n_r {
                u[j * n_r + i] = cfg.init.eval_polar(i as f64 * cfg.dr, theta)?;
            }
        }
        Self::assemble(cfg, u)
    }

    /// Starts from explicit grid values (row-major `[theta][r]`, window at
    /// the origin) instead of the configured datum.
    pub fn with_values(cfg: SolverConfig, values: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if values.len() != cfg.n_r() * cfg.geometry.n_theta() {
            return Err(invalid("values", "length does not match the grid"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("values", "must be finite and nonnegative"));
        }
        Self::assemble(cfg, values)
    }

    fn assemble(cfg: SolverConfig, u: Vec<f64>) -> Result<Self> {
        let n_r = cfg.n_r();
        let n_theta = cfg.geometry.n_theta();
        let stencil = Stencil::build(&cfg, 0, n_r);
        let angular = (n_theta > 1).then(|| {
            let mut planner = FftPlanner::new();
            Angular {
                fwd: planner.plan_fft_forward(n_theta),
                inv: planner.plan_fft_inverse(n_theta),
            }
        });
        let max_seen = u.iter().copied().fold(0.0, f64::max);
        Ok(Solver {
            buf: vec![0.0; u.len()],
            buf2: vec![0.0; u.len()],
            u,
            t: T0,
            origin_cells: 0,
            n_r,
            n_theta,
            stencil,
            angular,
            steps: 0,
            steps_since_angular: 0,
            time_since_angular: 0.0,
            last_check: T0,
            max_seen,
            shifts: vec![(T0, 0)],
            cfg,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn origin_cells(&self) -> u64 {
        self.origin_cells
    }

    /// `(t, origin_cells)` after every window shift, starting with `(1, 0)`.
    pub fn window_trajectory(&self) -> &[(f64, u64)] {
        &self.shifts
    }

    /// Largest value observed at any check so far.
    pub fn max_seen(&self) -> f64 {
        self.max_seen
    }

    pub fn record(&self) -> SolutionField {
        SolutionField {
            t: self.t,
            geometry: self.cfg.geometry,
            dr: self.cfg.dr,
            origin_cells: self.origin_cells,
            n_r: self.n_r,
            n_theta: self.n_theta,
            values: self.u.clone(),
            trailing_ghost: (self.origin_cells > 0)
                .then(|| (0..self.n_theta).map(|j| self.u[j * self.n_r]).collect()),
            leading_ghost: 0.0,
        }
    }

    pub fn advance(&mut self, until: f64) -> Result<()> {
        if !(until >= self.t) {
            return Err(invalid("until", "must not precede the current time"));
        }
        let dt = self.cfg.dt;
        while self.t < until {
            let rem = until - self.t;
            let h = if rem <= dt * (1.0 + 1e-9) { rem } else { dt };
            self.step(h);
            if rem <= dt * (1.0 + 1e-9) {
                self.t = until;
            } else {
                self.t += h;
            }
            self.steps += 1;
            if self.t - self.last_check >= 0.5 || self.t >= until {
                self.check()?;
            }
        }
        Ok(())
    }

    /// Advances through every record time (in increasing order) and then to
    /// `t_end`, handing each snapshot to `on_record`.
    pub fn run<F>(&mut self, mut on_record: F) -> Result<()>
    where
        F: FnMut(&SolutionField) -> Result<()>,
    {
        let mut times: Vec<f64> = self
            .cfg
            .record_times
            .iter()
            .copied()
            .filter(|&t| t >= self.t && t <= self.cfg.t_end)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        for t in times {
            self.advance(t)?;
            on_record(&self.record())?;
        }
        self.advance(self.cfg.t_end)
    }

    fn step(&mut self, h: f64) {
        match self.cfg.nl.clone() {
            Nonlinearity::QuadraticKpp => self.step_with(h, &|u: f64| u * (1.0 - u)),
            nl => self.step_with(h, &move |u: f64| nl.f(u)),
        }
        if let Some(ang) = &self.angular {
            self.steps_since_angular += 1;
            self.time_since_angular += h;
            if self.steps_since_angular >= self.cfg.angular_interval {
                let span = self.time_since_angular;
                angular_decay(&mut self.u, self.n_r, self.n_theta, self.origin_cells, self.cfg.dr, span, ang);
                self.steps_since_angular = 0;
                self.time_since_angular = 0.0;
            }
        }
    }

    fn ring_mean(u: &[f64], n_r: usize, n_theta: usize) -> f64 {
        (0..n_theta).map(|j| u[j * n_r + 1]).sum::<f64>() / n_theta as f64
    }

    fn step_with<R: Fn(f64) -> f64 + Sync>(&mut self, h: f64, react: &R) {
        let n_r = self.n_r;
        let n_theta = self.n_theta;
        let st = &self.stencil;
        let polar_origin = st.at_origin && n_theta > 1;
        match self.cfg.scheme {
            TimeScheme::ExplicitRk2 => {
                // stage 1: buf = u + h F(u)
                let nb = if polar_origin { Some(Self::ring_mean(&self.u, n_r, n_theta)) } else { None };
                let first = |x: &[f64]| nb.unwrap_or(x[1]);
                if n_theta == 1 {
                    row_update(&mut self.buf, &self.u, &self.u, st, h, first(&self.u), 0.0, 1.0, react);
                } else {
                    self.buf
                        .par_chunks_mut(n_r)
                        .zip(self.u.par_chunks(n_r))
                        .with_min_len(4)
                        .for_each(|(out, x)| row_update(out, x, x, st, h, first(x), 0.0, 1.0, react));
                }
                // stage 2: u = (u + buf + h F(buf)) / 2, written to buf2
                let nb = if polar_origin { Some(Self::ring_mean(&self.buf, n_r, n_theta)) } else { None };
                let first = |x: &[f64]| nb.unwrap_or(x[1]);
                if n_theta == 1 {
                    row_update(&mut self.buf2, &self.u, &self.buf, st, h, first(&self.buf), 0.5, 0.5, react);
                } else {
                    self.buf2
                        .par_chunks_mut(n_r)
                        .zip(self.u.par_chunks(n_r).zip(self.buf.par_chunks(n_r)))
                        .with_min_len(4)
                        .for_each(|(o, (base, x))| row_update(o, base, x, st, h, first(x), 0.5, 0.5, react));
                }
                std::mem::swap(&mut self.u, &mut self.buf2);
            }
            TimeScheme::SemiImplicit => {
                let nb = if polar_origin { Some(Self::ring_mean(&self.u, n_r, n_theta)) } else { None };
                self.u.par_chunks_mut(n_r).with_min_len(4).for_each_init(Vec::new, |scratch, row| {
                    let first = nb.unwrap_or(row[1]);
                    row_imex(row, st, h, first, react, scratch)
                });
            }
        }
    }

    /// Window bookkeeping, NaN detection and the running maximum.
    fn check(&mut self) -> Result<()> {
        self.last_check = self.t;
        let n_r = self.n_r;
        let mut vmax = f64::NEG_INFINITY;
        for &v in &self.u {
            if !v.is_finite() {
                return Err(Error::NaNDetected { t: self.t });
            }
            vmax = vmax.max(v);
        }
        self.max_seen = self.max_seen.max(vmax);
        let level = match self.cfg.window_policy {
            WindowPolicy::CoMoving { anchor_level, .. } => anchor_level,
            WindowPolicy::Fixed => 0.5,
        };
        let outer = |row: &[f64]| row.iter().rposition(|&v| v >= level);
        let fronts: Vec<Option<usize>> = self.u.chunks(n_r).map(outer).collect();
        let (Some(lo), Some(hi)) = (
            fronts.iter().flatten().min().copied(),
            fronts.iter().flatten().max().copied(),
        ) else {
            return Ok(());
        };
        let dr = self.cfg.dr;
        let mut hi = hi;
        let guard = match self.cfg.window_policy {
            WindowPolicy::CoMoving {
                margin_back,
                margin_front,
                ..
            } => {
                let back_cells = (margin_back / dr).round() as usize;
                if lo > back_cells && fronts.iter().all(|f| f.is_some()) {
                    let shift = lo - back_cells;
                    self.shift(shift);
                    hi -= shift;
                }
                0.5 * margin_front
            }
            WindowPolicy::Fixed => (0.1 * self.cfg.window_width).min(20.0),
        };
        let front_offset = (n_r - 1 - hi) as f64 * dr;
        if front_offset < guard {
            return Err(Error::WindowCollision {
                t: self.t,
                front_offset,
                width: self.cfg.window_width,
            });
        }
        Ok(())
    }

    fn shift(&mut self, cells: usize) {
        let n_r = self.n_r;
        for row in self.u.chunks_mut(n_r) {
            row.copy_within(cells.., 0);
            row[n_r - cells..].fill(0.0);
        }
        self.origin_cells += cells as u64;
        self.stencil = Stencil::build(&self.cfg, self.origin_cells, n_r);
        self.shifts.push((self.t, self.origin_cells));
    }
}

/// Exact decay of each angular Fourier mode over `span`:
/// `û_m ← û_m·exp(−m² span / r²)`.
fn angular_decay(u: &mut [f64], n_r: usize, n_theta: usize, origin_cells: u64, dr: f64, span: f64, ang: &Angular) {
    let mut col = vec![Complex64::new(0.0, 0.0); n_theta];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ang.fwd.get_inplace_scratch_len().max(ang.inv.get_inplace_scratch_len())];
    let norm = 1.0 / n_theta as f64;
    for i in 0..n_r {
        let r = (origin_cells + i as u64) as f64 * dr;
        if r == 0.0 {
            continue;
        }
        let rate = span / (r * r);
        // modes with m² rate beyond ~745 underflow to zero anyway
        for (j, c) in col.iter_mut().enumerate() {
            *c = Complex64::new(u[j * n_r + i], 0.0);
        }
        ang.fwd.process_with_scratch(&mut col, &mut scratch);
        for (k, c) in col.iter_mut().enumerate() {
            let m = if k <= n_theta / 2 { k as f64 } else { k as f64 - n_theta as f64 };
            *c *= (-m * m * rate).exp() * norm;
        }
        ang.inv.process_with_scratch(&mut col, &mut scratch);
        for (j, c) in col.iter().enumerate() {
            let v = c.re;
            u[j * n_r + i] = if v.abs() < FLUSH { 0.0 } else { v };
        }
    }
}
