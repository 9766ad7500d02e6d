//! Measurements on states and branches: norms, interior wavenumber, the
//! wavenumber loop along snaking segments, and the Maxwell point.

use serde::{Deserialize, Serialize};

use crate::continuation::{pattern_branch, Branch, EventType};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::ModelParams;

/// Minimum number of interior zero crossings for a wavenumber estimate.
pub const MIN_CROSSINGS: usize = 6;
/// Only nodes with `|u| >= ACTIVE_FRACTION * max|u|` delimit the pattern core.
pub const ACTIVE_FRACTION: f64 = 0.25;
/// Resolution of the zero-crossing wavenumber estimator on resolved
/// localized states (measured, see the loop test on the variational branch).
pub const WAVENUMBER_NOISE_FLOOR: f64 = 2e-5;
/// A split above this between up-right and up-left segments is a loop.
pub const LOOP_THRESHOLD: f64 = 1e-4;

/// `sqrt(sum u_j^2 dx)`.
pub fn l2_norm(u: &Field) -> f64 {
    (u.values().iter().map(|v| v * v).sum::<f64>() * u.grid().dx()).sqrt()
}

/// Root in `[x1, x2]` of the cubic through four equally spaced samples.
fn cubic_root(x0: f64, h: f64, y: [f64; 4]) -> f64 {
    // Lagrange cubic on nodes t = -1, 0, 1, 2 (the bracket is [0, 1])
    let p = |t: f64| {
        -y[0] * t * (t - 1.0) * (t - 2.0) / 6.0 + y[1] * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
            - y[2] * (t + 1.0) * t * (t - 2.0) / 2.0
            + y[3] * (t + 1.0) * t * (t - 1.0) / 6.0
    };
    let (mut a, mut b) = (0.0, 1.0);
    let (mut fa, _) = (p(a), p(b));
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = p(m);
        if fm == 0.0 {
            return x0 + m * h;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    x0 + 0.5 * (a + b) * h
}

/// Extent in `x` of the region where `|u| >= ACTIVE_FRACTION max|u|`.
pub fn core_width(u: &Field) -> f64 {
    let amp = u.max_abs();
    let x = u.grid().nodes();
    let active: Vec<usize> = (0..u.grid().n()).filter(|&j| u.values()[j].abs() >= ACTIVE_FRACTION * amp).collect();
    match (active.first(), active.last()) {
        (Some(&a), Some(&b)) if amp > 0.0 => x[b] - x[a],
        _ => 0.0,
    }
}

/// Zero crossings of `u` strictly inside its active core, in increasing `x`.
pub fn interior_crossings(u: &Field) -> Vec<f64> {
    let g = u.grid();
    let v = u.values();
    let n = g.n();
    let amp = u.max_abs();
    if amp == 0.0 {
        return Vec::new();
    }
    let active: Vec<usize> = (0..n).filter(|&j| v[j].abs() >= ACTIVE_FRACTION * amp).collect();
    let (lo, hi) = (active[0], *active.last().unwrap());
    let h = g.dx();
    let x = g.nodes();
    let mut out = Vec::new();
    for j in lo..hi {
        let (a, b) = (v[j], v[j + 1]);
        if a == 0.0 {
            out.push(x[j]);
            continue;
        }
        if (a > 0.0) != (b > 0.0) && b != 0.0 {
            let y = [v[(j + n - 1) % n], a, b, v[(j + 2) % n]];
            out.push(cubic_root(x[j], h, y));
        }
    }
    out
}

/// Interior wavenumber `pi / mean spacing` over the central half of the
/// crossings. An even number of spacings is used so that the unequal
/// spacings of a pattern with a mean offset average out. `None` with fewer
/// than [`MIN_CROSSINGS`] crossings.
pub fn interior_wavenumber(u: &Field) -> Option<f64> {
    let z = interior_crossings(u);
    if z.len() < MIN_CROSSINGS {
        return None;
    }
    let mut count = (z.len() / 2).max(3);
    if count % 2 == 0 {
        count += 1;
    }
    let count = count.min(if z.len() % 2 == 1 { z.len() } else { z.len() - 1 });
    let start = (z.len() - count) / 2;
    let span = z[start + count - 1] - z[start];
    Some(std::f64::consts::PI * (count - 1) as f64 / span)
}

/// Direction of a snaking segment in the (r, norm) plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slant {
    UpRight,
    UpLeft,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WavenumberSegment {
    pub slant: Slant,
    /// `(r, k)` samples sorted by `r`.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LoopReport {
    pub is_loop: bool,
    /// Largest `|k_up_right - k_up_left|` over the common `r` range.
    pub max_split: f64,
    /// Mean of `k_up_right - k_up_left` over the common range.
    pub mean_difference: f64,
}

fn interpolate(samples: &[(f64, f64)], r: f64) -> f64 {
    let i = samples.partition_point(|s| s.0 < r).clamp(1, samples.len() - 1);
    let (r0, k0) = samples[i - 1];
    let (r1, k1) = samples[i];
    if r1 == r0 {
        k0
    } else {
        k0 + (k1 - k0) * (r - r0) / (r1 - r0)
    }
}

/// Compares one up-right and one up-left segment on their common `r` range.
pub fn compare_segments(up_right: &WavenumberSegment, up_left: &WavenumberSegment) -> Result<LoopReport> {
    let (a, b) = (&up_right.samples, &up_left.samples);
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("segments need at least two samples".into()));
    }
    let lo = a[0].0.max(b[0].0);
    let hi = a[a.len() - 1].0.min(b[b.len() - 1].0);
    if hi <= lo {
        return Err(Error::InsufficientData("segments do not overlap in r".into()));
    }
    let m = 200;
    let (mut max_split, mut sum) = (0.0f64, 0.0);
    for i in 0..=m {
        // stay off the fold ends, where k(r) is steep
        let r = lo + (hi - lo) * (0.1 + 0.8 * i as f64 / m as f64);
        let d = interpolate(a, r) - interpolate(b, r);
        max_split = max_split.max(d.abs());
        sum += d;
    }
    Ok(LoopReport { is_loop: max_split > LOOP_THRESHOLD, max_split, mean_difference: sum / (m + 1) as f64 })
}

/// Splits a branch at its folds into segments of measured `(r, k)`.
pub fn wavenumber_segments(branch: &Branch) -> Vec<WavenumberSegment> {
    let mut segments = Vec::new();
    let folds: Vec<usize> = branch.event_indices(EventType::Fold);
    for w in folds.windows(2) {
        let pts = &branch.points[w[0]..=w[1]];
        let (first, last) = (&pts[0], &pts[pts.len() - 1]);
        // "up" is the direction of growing core width
        let grow = core_width(&last.state.u) - core_width(&first.state.u);
        let slant = if (last.r - first.r) * grow > 0.0 { Slant::UpRight } else { Slant::UpLeft };
        let mut samples: Vec<(f64, f64)> =
            pts.iter().filter_map(|p| interior_wavenumber(&p.state.u).map(|k| (p.r, k))).collect();
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        segments.push(WavenumberSegment { slant, samples });
    }
    segments
}

/// Compares the last complete up-right segment with the last complete
/// up-left segment of a snaking branch.
pub fn wavenumber_loop(branch: &Branch) -> Result<LoopReport> {
    let segs = wavenumber_segments(branch);
    let usable = |s: &&WavenumberSegment| s.samples.len() >= 4;
    let ur = segs.iter().filter(usable).rev().find(|s| s.slant == Slant::UpRight);
    let ul = segs.iter().filter(usable).rev().find(|s| s.slant == Slant::UpLeft);
    match (ur, ul) {
        (Some(a), Some(b)) => compare_segments(a, b),
        _ => Err(Error::InsufficientData("need an up-right and an up-left segment with measurable k".into())),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaxwellPoint {
    pub r: f64,
    /// Wavenumber of the zero-Hamiltonian pattern at `r`.
    pub k: f64,
}

/// Where the large-amplitude zero-Hamiltonian pattern has zero free energy.
/// Only defined for `alpha = beta = 0`.
pub fn maxwell_point(p: &ModelParams) -> Result<MaxwellPoint> {
    let branch = pattern_branch(p, (-2.0, 0.05), 4000)?;
    let (r, k) = crate::continuation::maxwell_root(p, &branch)?;
    Ok(MaxwellPoint { r, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    #[test]
    fn l2_norm_of_cosine() {
        let g = Grid::new(2.0 * PI, 64).unwrap();
        let u = Field::from_fn(g.clone(), |x| x.cos());
        assert!((l2_norm(&u) - PI.sqrt()).abs() < 1e-12);
        assert_eq!(l2_norm(&Field::zeros(g)), 0.0);
    }

    #[test]
    fn wavenumber_of_synthetic_localized_pattern() {
        let g = Grid::new(32.0 * PI, 512).unwrap();
        let u = Field::from_fn(g, |x| 1.0 / (x / 10.0).cosh() * (1.05 * x).cos());
        let k = interior_wavenumber(&u).unwrap();
        assert!((k - 1.05).abs() < 5e-3, "{k}");
    }

    #[test]
    fn offset_pattern_with_harmonic() {
        // a mean offset makes crossings alternate between two spacings
        let g = Grid::new(32.0 * PI, 512).unwrap();
        let q = 0.97;
        let u = Field::from_fn(g, |x| {
            let env = (-(x / 30.0).powi(8)).exp();
            env * (0.3 + (q * x).cos() + 0.2 * (2.0 * q * x).cos())
        });
        let k = interior_wavenumber(&u).unwrap();
        assert!((k - q).abs() < WAVENUMBER_NOISE_FLOOR, "{k}");
    }

    #[test]
    fn too_few_crossings() {
        let g = Grid::new(32.0 * PI, 512).unwrap();
        let u = Field::from_fn(g, |x| (-(x * x) / 4.0).exp() * x.cos());
        assert!(interior_wavenumber(&u).is_none());
        assert!(interior_wavenumber(&Field::zeros(Grid::new(32.0 * PI, 512).unwrap())).is_none());
    }

    #[test]
    fn loop_comparison() {
        let seg = |slant, dk: f64| WavenumberSegment {
            slant,
            samples: (0..20).map(|i| (-0.3 + 0.005 * i as f64, 1.0 + dk + 0.01 * i as f64)).collect(),
        };
        let same = compare_segments(&seg(Slant::UpRight, 0.0), &seg(Slant::UpLeft, 0.0)).unwrap();
        assert!(!same.is_loop && same.max_split < 1e-12);
        let split = compare_segments(&seg(Slant::UpRight, 1e-3), &seg(Slant::UpLeft, 0.0)).unwrap();
        assert!(split.is_loop && (split.mean_difference - 1e-3).abs() < 1e-12);
    }
}
