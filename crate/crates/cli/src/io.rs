//! CSV payloads. Floats use Rust's shortest round-trip formatting.

use std::fmt::Write;

use kpp_core::analysis::{AlphaProfile, LevelCurve};
use kpp_core::barriers::QZetaTrajectory;
use kpp_core::frames::SelfSimSnapshot;
use kpp_core::solver::{Geometry, SolutionField};
use kpp_core::wave::WaveProfile;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("snapshot grid is not uniform: {0}")]
    Grid(String),
}

pub fn snapshot_csv(f: &SolutionField) -> String {
    let mut s = String::from("t,r,theta,u\n");
    for j in 0..f.n_theta {
        let th = f.theta(j);
        for (i, u) in f.row(j).iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", f.t, f.r(i), th, u);
        }
    }
    s
}

/// Inverse of [`snapshot_csv`]; `n` is the spatial dimension (ignored for
/// multi-angle data, which is read as polar).
pub fn parse_snapshot(text: &str, n: u32) -> Result<SolutionField, CsvError> {
    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CsvError::Parse {
                line: k + 1,
                msg: e.to_string(),
            })?;
        if v.len() != 4 {
            return Err(CsvError::Parse {
                line: k + 1,
                msg: "expected 4 columns t,r,theta,u".into(),
            });
        }
        rows.push([v[0], v[1], v[2], v[3]]);
    }
    if rows.len() < 2 {
        return Err(CsvError::Grid("fewer than two rows".into()));
    }
    let t = rows[0][0];
    let theta0 = rows[0][2];
    let n_r = rows.iter().take_while(|r| r[2] == theta0).count();
    if n_r < 2 || rows.len() % n_r != 0 {
        return Err(CsvError::Grid("rows are not a full theta x r block".into()));
    }
    let n_theta = rows.len() / n_r;
    let dr = rows[1][1] - rows[0][1];
    let origin = rows[0][1] / dr;
    if !(dr > 0.0) || (origin - origin.round()).abs() > 1e-6 {
        return Err(CsvError::Grid(format!("r0 = {} is not a multiple of dr = {dr}", rows[0][1])));
    }
    for (idx, r) in rows.iter().enumerate() {
        let i = idx % n_r;
        let expect = rows[0][1] + i as f64 * dr;
        if (r[1] - expect).abs() > 1e-6 * dr.max(expect.abs() * 1e-3) || r[0] != t {
            return Err(CsvError::Grid(format!("row {} breaks the grid", idx + 2)));
        }
    }
    let geometry = if n_theta > 1 {
        Geometry::Polar2d { n_theta }
    } else if n == 1 {
        Geometry::Line
    } else {
        Geometry::Radial { n }
    };
    let origin_cells = origin.round() as u64;
    let values: Vec<f64> = rows.iter().map(|r| r[3]).collect();
    Ok(SolutionField {
        t,
        geometry,
        dr,
        origin_cells,
        n_r,
        n_theta,
        trailing_ghost: (origin_cells > 0).then(|| (0..n_theta).map(|j| values[j * n_r]).collect()),
        values,
        leading_ghost: 0.0,
    })
}

pub fn selfsim_csv(w: &SelfSimSnapshot) -> String {
    let mut s = String::from("tau,xi,theta,w\n");
    for j in 0..w.n_theta {
        let th = w.theta(j);
        for (i, v) in w.row(j).iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", w.tau, w.xi(i), th, v);
        }
    }
    s
}

pub fn levels_csv(curves: &[LevelCurve]) -> String {
    let mut s = String::from("t,theta,r_lambda\n");
    for c in curves {
        for (th, r) in c.theta.iter().zip(&c.r_of_theta) {
            let _ = writeln!(s, "{},{},{}", c.t, th, r);
        }
    }
    s
}

pub fn alpha_csv(a: &AlphaProfile, s_inf: &[f64]) -> String {
    let mut s = String::from("theta,alpha,s_inf\n");
    for ((th, al), si) in a.theta.iter().zip(&a.alpha).zip(s_inf) {
        let _ = writeln!(s, "{th},{al},{si}");
    }
    s
}

pub fn profile_csv(w: &WaveProfile) -> String {
    let mut s = String::from("x,U\n");
    for (i, u) in w.values.iter().enumerate() {
        let _ = writeln!(s, "{},{}", w.x(i), u);
    }
    s
}

pub fn qzeta_csv(tr: &QZetaTrajectory) -> String {
    let mut s = String::from("tau,q,zeta\n");
    for ((t, q), z) in tr.tau.iter().zip(&tr.q).zip(&tr.zeta) {
        let _ = writeln!(s, "{t},{q},{z}");
    }
    s
}
