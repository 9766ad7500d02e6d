//! Spatially periodic patterns selected by the zero-Hamiltonian condition.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::arclength::{bisect, correct, null_tangent, step, tangent, Point, Problem, StepControl};
use super::problems::{PatternProblem, CELL_NODES};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{free_energy_sh23, ModelParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternPoint {
    pub r: f64,
    pub k: f64,
    /// `max|u|` over the cell.
    pub amplitude: f64,
    /// Free energy per unit length.
    pub energy_density: f64,
    pub fold: bool,
    /// Reduced even cell values followed by `k`.
    #[serde(skip)]
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternBranch {
    pub b: f64,
    pub points: Vec<PatternPoint>,
}

impl PatternBranch {
    /// Index pairs of neighbouring points between which the energy density changes sign.
    pub fn energy_roots(&self) -> Vec<(usize, usize)> {
        self.points
            .windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0].energy_density > 0.0) != (w[1].energy_density > 0.0))
            .map(|(i, _)| (i, i + 1))
            .collect()
    }
}

fn check(p: &ModelParams) -> Result<()> {
    p.validate()?;
    if p.alpha != 0.0 || p.beta != 0.0 {
        return Err(Error::UnsupportedParameters { alpha: p.alpha, beta: p.beta });
    }
    Ok(())
}

fn energy_density(x: &[f64], r: f64, b: f64) -> Result<f64> {
    let u = PatternProblem::field(x)?;
    Ok(free_energy_sh23(&u, r, b)? / u.grid().length())
}

fn to_point(x: &[f64], r: f64, b: f64, fold: bool) -> Result<PatternPoint> {
    let u = PatternProblem::field(x)?;
    Ok(PatternPoint {
        r,
        k: x[x.len() - 1],
        amplitude: u.max_abs(),
        energy_density: energy_density(x, r, b)?,
        fold,
        x: x.to_vec(),
    })
}

fn guess(amplitude: f64, k: f64) -> Vec<f64> {
    let m = CELL_NODES / 2 + 1;
    let mut x: Vec<f64> = (0..m).map(|j| amplitude * (2.0 * PI * j as f64 / CELL_NODES as f64).cos()).collect();
    x.push(k);
    x
}

/// Solves for a zero-Hamiltonian pattern at fixed `r` from `u = A cos(kx)`.
/// Returns `(cell field, k)`.
pub fn solve_pattern(p: &ModelParams, amplitude: f64, k: f64) -> Result<(Field, f64)> {
    check(p)?;
    let prob = PatternProblem::new(*p);
    let pred = Point { x: guess(amplitude, k), r: p.r };
    let dir = Point { x: vec![0.0; prob.dim()], r: 1.0 };
    let (q, _) = correct(&prob, &pred, &dir, 40)?;
    let k = q.x[q.x.len() - 1];
    if !(k > 0.0) {
        return Err(Error::NoConvergence { iterations: 40, residual: f64::NAN });
    }
    Ok((PatternProblem::field(&q.x)?, k))
}

/// Continues the zero-Hamiltonian pattern family of the `alpha = beta = 0`
/// model through `r_range`, walking both ways from a large-amplitude pattern
/// found by scanning `r = -0.05, -0.10, ...`.
pub fn pattern_branch(p: &ModelParams, r_range: (f64, f64), max_points: usize) -> Result<PatternBranch> {
    check(p)?;
    let mut prob = PatternProblem::new(*p);
    let fixed = Point { x: vec![0.0; prob.dim()], r: 1.0 };
    let start = (1..=40)
        .map(|i| -0.05 * i as f64)
        .filter(|&r| r >= r_range.0 && r <= r_range.1)
        .find_map(|r| {
            let pred = Point { x: guess(1.2, 1.0), r };
            let (q, _) = correct(&prob, &pred, &fixed, 40).ok()?;
            let amp = PatternProblem::field(&q.x).ok()?.max_abs();
            (amp > 0.5 && q.x[q.x.len() - 1] > 0.5).then_some(q)
        })
        .ok_or_else(|| Error::NoRoot("no large-amplitude pattern found".into()))?;
    let mut halves = Vec::new();
    for sign in [-1.0, 1.0] {
        let orient = Point { x: vec![0.0; prob.dim()], r: sign };
        let mut t = null_tangent(&prob, &start, &orient)?;
        let mut ctl = StepControl { ds: 0.02, ds_min: 1e-5, ds_max: 0.05, max_corrector: 10 };
        let mut prev = start.clone();
        let mut prev_tr = t.r;
        let mut pts = Vec::new();
        while pts.len() < max_points {
            let Ok((q, _)) = step(&prob, &prev, &t, &mut ctl) else { break };
            let sec = q.axpy(-1.0, &prev).normalized(&prob);
            let tq = tangent(&prob, &q, &sec)?;
            if (tq.r > 0.0) != (prev_tr > 0.0) {
                let key = |pr: &PatternProblem, pt: &Point| Ok(tangent(pr, pt, &sec)?.r);
                if let Ok(f) = bisect(&prob, &prev, &q, key, 1e-10, 0.0, 10) {
                    pts.push(to_point(&f.x, f.r, p.b, true)?);
                }
            }
            prob.accept(&q.x);
            let amp = PatternProblem::field(&q.x)?.max_abs();
            // passing through zero amplitude turns the family into its half-period shift
            let through_zero = (q.x[0] > 0.0) != (start.x[0] > 0.0);
            let out = q.r < r_range.0 || q.r > r_range.1 || amp < 1e-3 || through_zero;
            pts.push(to_point(&q.x, q.r, p.b, false)?);
            if out {
                break;
            }
            prev_tr = tq.r;
            t = sec;
            prev = q;
        }
        halves.push(pts);
    }
    let mut points: Vec<PatternPoint> = halves.remove(0).into_iter().rev().collect();
    points.push(to_point(&start.x, start.r, p.b, false)?);
    points.extend(halves.remove(0));
    Ok(PatternBranch { b: p.b, points })
}

/// Root of the energy density along the large-amplitude pattern family:
/// the Maxwell point. Returns `(r, k)`.
pub(crate) fn maxwell_root(p: &ModelParams, branch: &PatternBranch) -> Result<(f64, f64)> {
    let prob = PatternProblem::new(*p);
    let roots = branch.energy_roots();
    let &(i, j) = roots.first().ok_or_else(|| Error::NoRoot("free energy does not change sign on the pattern branch".into()))?;
    let (a, b) = (&branch.points[i], &branch.points[j]);
    let pa = Point { x: a.x.clone(), r: a.r };
    let pb = Point { x: b.x.clone(), r: b.r };
    let key = |_: &PatternProblem, pt: &Point| energy_density(&pt.x, pt.r, p.b);
    let m = bisect(&prob, &pa, &pb, key, 1e-12, 0.0, 10)?;
    Ok((m.r, m.x[m.x.len() - 1]))
}
