//! Stability annotation, pitchfork/Hopf location and branch switching.

use num_complex::Complex64;
use rayon::prelude::*;

use super::arclength::{bisect, correct, Point};
use super::problems::{EvenProblem, TravellingProblem};
use super::{
    continue_branch, Branch, BranchError, BranchKind, BranchLabel, BranchPoint, ContinuationOptions, Direction,
    EventType, StateProblem,
};
use crate::diagnostics::l2_norm;
use crate::error::{Error, Result};
use crate::grid::{derivative, expand_odd, Field};
use crate::linalg;
use crate::model::{Linearization, ModelParams};
use crate::stability::{compute_spectrum_with, count_unstable, SpectrumOptions, StabilityCounts, GOLDSTONE_TOL};
use crate::steady::{jacobian_even, jacobian_odd, SteadyState};

#[derive(Clone, Copy, Debug)]
pub struct EventOptions {
    /// Spectra are computed at every `stride`-th point, densified where the
    /// counts change.
    pub stride: usize,
    /// Events are bisected until their bracket is shorter than this in `r`.
    pub r_tol: f64,
    pub sigma_tol: f64,
    pub spectrum: SpectrumOptions,
}

impl Default for EventOptions {
    fn default() -> Self {
        EventOptions { stride: 5, r_tol: 1e-7, sigma_tol: GOLDSTONE_TOL, spectrum: SpectrumOptions::default() }
    }
}

/// Largest `|Re sigma|` accepted at a refined pitchfork or Hopf point.
const EVENT_KEY_TOL: f64 = 1e-5;

fn counts_at(state: &SteadyState, p: &ModelParams, opts: &EventOptions) -> Result<StabilityCounts> {
    let spectrum = compute_spectrum_with(state, p, &opts.spectrum)?;
    Ok(count_unstable(&spectrum, opts.sigma_tol))
}

/// Odd-block eigenvalues sorted by modulus. The smallest is the translation
/// mode; the second is the one that crosses at a pitchfork.
fn odd_eigen(u: &Field, p: &ModelParams) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
    let lin = Linearization::new(u, p)?;
    let (vals, vecs) = linalg::eigen(&jacobian_odd(&lin))?;
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()));
    Ok((idx.iter().map(|&i| vals[i]).collect(), idx.iter().map(|&i| vecs[i].clone()).collect()))
}

fn pitchfork_key(prob: &EvenProblem, pt: &Point) -> Result<f64> {
    let (vals, _) = odd_eigen(&prob.field(&pt.x), &prob.params.with_r(pt.r))?;
    Ok(vals.get(1).map_or(-1.0, |z| z.re))
}

fn hopf_key(prob: &EvenProblem, pt: &Point) -> Result<f64> {
    let lin = Linearization::new(&prob.field(&pt.x), &prob.params.with_r(pt.r))?;
    let mut best = f64::NEG_INFINITY;
    for block in [jacobian_even(&lin), jacobian_odd(&lin)] {
        let (vals, _) = linalg::eigen(&block)?;
        for z in vals {
            if z.im.abs() > 1e-8 * (1.0 + z.norm()) {
                best = best.max(z.re);
            }
        }
    }
    // no complex pair at all counts as stable
    Ok(if best.is_finite() { best } else { -1.0 })
}

/// Annotates stability counts along an even branch and inserts refined
/// pitchfork and Hopf points where the counts change.
pub fn detect_bifurcations(branch: &mut Branch, opts: &EventOptions) -> Result<()> {
    if branch.kind != BranchKind::Even {
        return Err(Error::InvalidConfig("bifurcation detection needs an even stationary branch".into()));
    }
    let p = branch.params;
    let n = branch.points.len();
    let stride = opts.stride.max(1);
    let compute = |idx: Vec<usize>, pts: &mut Vec<BranchPoint>| -> Result<()> {
        let out: Vec<Result<StabilityCounts>> = idx
            .par_iter()
            .map(|&i| counts_at(&pts[i].state, &p.with_r(pts[i].r), opts))
            .collect();
        for (i, c) in idx.into_iter().zip(out) {
            pts[i].counts = Some(c?);
        }
        Ok(())
    };
    let mut sampled: Vec<usize> = (0..n).step_by(stride).collect();
    if *sampled.last().unwrap() != n - 1 {
        sampled.push(n - 1);
    }
    compute(sampled.clone(), &mut branch.points)?;
    let mut dense = Vec::new();
    for w in sampled.windows(2) {
        if branch.points[w[0]].counts != branch.points[w[1]].counts {
            dense.extend(w[0] + 1..w[1]);
        }
    }
    compute(dense, &mut branch.points)?;

    let prob = EvenProblem::new(branch.grid().clone(), p);
    let mut inserts: Vec<(usize, BranchPoint)> = Vec::new();
    for i in 0..n - 1 {
        let (Some(a), Some(b)) = (branch.points[i].counts, branch.points[i + 1].counts) else { continue };
        let pa = prob.point(&branch.points[i].state, branch.points[i].r);
        let pb = prob.point(&branch.points[i + 1].state, branch.points[i + 1].r);
        let mut found = Vec::new();
        if a.n_r != b.n_r {
            if let Ok(pt) = bisect(&prob, &pa, &pb, pitchfork_key, opts.r_tol, 0.0, 8) {
                if pitchfork_key(&prob, &pt)?.abs() < EVENT_KEY_TOL {
                    found.push((pt, EventType::Pitchfork));
                }
            }
        }
        if a.m_c + a.n_c != b.m_c + b.n_c {
            // a real pair merging into a complex one also changes the count;
            // only a genuine crossing has a vanishing key
            if let Ok(pt) = bisect(&prob, &pa, &pb, hopf_key, opts.r_tol, 0.0, 8) {
                if hopf_key(&prob, &pt)?.abs() < EVENT_KEY_TOL {
                    found.push((pt, EventType::Hopf));
                }
            }
        }
        // keep the order along the branch
        found.sort_by(|x, y| {
            let dx = |q: &Point| q.axpy(-1.0, &pa).norm(&prob);
            dx(&x.0).total_cmp(&dx(&y.0))
        });
        for (pt, ev) in found {
            let state = prob.state(&pt)?;
            let counts = counts_at(&state, &p.with_r(pt.r), opts)?;
            inserts.push((
                i + 1,
                BranchPoint { r: pt.r, norm: l2_norm(&state.u), state, event: Some(ev), counts: Some(counts) },
            ));
        }
    }
    for (at, bp) in inserts.into_iter().rev() {
        branch.points.insert(at, bp);
    }
    Ok(())
}

/// First point on a bifurcating branch, plus where it came from.
#[derive(Clone, Debug)]
pub struct BranchSeed {
    pub state: SteadyState,
    /// Parameters at the seed (`r` included).
    pub params: ModelParams,
    /// The symmetric state at the bifurcation point.
    pub origin: SteadyState,
    pub origin_r: f64,
    /// Critical odd direction, orthogonal to `d_x u`, with `max|V| = 1`.
    pub direction: Field,
}

/// Leaves the pitchfork at `event_index` along the critical odd eigenvector.
///
/// The eigenvector is orthogonalized against the translation mode `d_x u`
/// (in the drift-pitchfork case the two nearly coincide and only the
/// remainder carries new information). The seed `u* + sign delta V` with
/// `delta = 1e-2 max|u*|` is corrected as a travelling state on the
/// hyperplane that fixes the `V` component.
pub fn branch_switch(branch: &Branch, event_index: usize, sign: f64) -> Result<BranchSeed> {
    let pt = branch.points.get(event_index).ok_or_else(|| {
        Error::InvalidConfig(format!("event index {event_index} out of range ({} points)", branch.points.len()))
    })?;
    if pt.event != Some(EventType::Pitchfork) {
        return Err(Error::WrongEventType(event_index));
    }
    let p = branch.params.with_r(pt.r);
    let u = &pt.state.u;
    let grid = u.grid().clone();
    let (vals, vecs) = odd_eigen(u, &p)?;
    if vals.len() < 2 {
        return Err(Error::Eigen("odd block too small".into()));
    }
    let re: Vec<f64> = vecs[1].iter().map(|z| z.re).collect();
    let im: Vec<f64> = vecs[1].iter().map(|z| z.im).collect();
    let v_re = expand_odd(&grid, &re);
    let v_im = expand_odd(&grid, &im);
    let v = if v_re.max_abs() >= v_im.max_abs() { v_re } else { v_im };
    let ux = derivative(u, 1)?;
    let v = v.axpby(1.0, &ux, -v.dot(&ux)? / ux.dot(&ux)?)?;
    let v = v.scale(1.0 / v.max_abs());
    let delta = 1e-2 * u.max_abs() * sign.signum();

    let seed_u = u.axpby(1.0, &v, delta)?;
    let prob = TravellingProblem::new(grid.clone(), branch.params, &seed_u)?;
    let mut x = seed_u.values().to_vec();
    x.push(0.0);
    let pred = Point { x, r: pt.r };
    let mut dx = v.values().to_vec();
    dx.push(0.0);
    let dir = Point { x: dx, r: 0.0 }.normalized(&prob);
    let (q, _) = correct(&prob, &pred, &dir, 25)?;
    let state = prob.state(&q)?;
    Ok(BranchSeed { state, params: branch.params.with_r(q.r), origin: pt.state.clone(), origin_r: pt.r, direction: v })
}

/// Continues the rung born at the pitchfork `event_index` of an even branch
/// until its drift speed changes sign (the far pitchfork), refined to
/// `|c| < 1e-4`. The bifurcation point itself is the first point.
pub fn trace_rung(
    branch: &Branch,
    event_index: usize,
    rung: usize,
    opts: &ContinuationOptions,
) -> Result<Branch, BranchError> {
    let seed = branch_switch(branch, event_index, 1.0)?;
    let mut o = opts.clone();
    o.direction = Direction::AwayFrom(seed.origin.u.clone());
    o.stop_on_drift_reversal = !branch.params.is_variational();
    let mut rung_branch = continue_branch(&seed.state, &seed.params, BranchLabel::Rung(rung), &o)?;
    let origin = BranchPoint {
        r: seed.origin_r,
        norm: l2_norm(&seed.origin.u),
        state: seed.origin.clone(),
        event: Some(EventType::Pitchfork),
        counts: None,
    };
    rung_branch.points.insert(0, origin);
    Ok(rung_branch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_event_is_rejected() {
        let g = crate::grid::Grid::new(16.0 * std::f64::consts::PI, 128).unwrap();
        let p = ModelParams::new(-0.28, 1.8, 0.0, 0.0).unwrap();
        let guess = Field::from_fn(g, |x| 1.2 / (0.5 * x).cosh() * x.cos());
        let s = crate::steady::newton_stationary(&guess, &p, true).unwrap();
        let branch = Branch {
            label: BranchLabel::L0,
            kind: BranchKind::Even,
            params: p,
            points: vec![BranchPoint { r: p.r, norm: l2_norm(&s.u), state: s, event: None, counts: None }],
            termination: super::super::Termination::MaxPoints,
        };
        assert!(matches!(branch_switch(&branch, 0, 1.0), Err(Error::WrongEventType(0))));
        assert!(branch_switch(&branch, 3, 1.0).is_err());
    }
}
