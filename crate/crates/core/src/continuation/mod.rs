//! Numerical continuation of localized states in `r`.
//!
//! Even stationary branches (`L0`, `L1`) are continued in the even subspace;
//! asymmetric states (rungs) are continued as travelling states with the
//! drift speed `c` as an extra unknown, which is zero for the variational
//! model and nonzero otherwise.

pub(crate) mod arclength;
mod events;
mod pattern;
pub(crate) mod problems;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::l2_norm;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::stability::StabilityCounts;
use crate::steady::{detect_parity, StateParity, SteadyState};
use arclength::{bisect, null_tangent, step, tangent, Point, Problem, StepControl};
use problems::{EvenProblem, TravellingProblem};

pub use events::{branch_switch, detect_bifurcations, trace_rung, BranchSeed, EventOptions};
pub(crate) use pattern::maxwell_root;
pub use pattern::{pattern_branch, solve_pattern, PatternBranch, PatternPoint};

/// Rung ends are refined until `|c|` drops below this.
pub const RUNG_END_SPEED: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BranchLabel {
    L0,
    L1,
    Rung(usize),
    Other(String),
}

impl std::fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BranchLabel::L0 => write!(f, "L0"),
            BranchLabel::L1 => write!(f, "L1"),
            BranchLabel::Rung(k) => write!(f, "rung{k}"),
            BranchLabel::Other(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    Even,
    Travelling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventType {
    Fold,
    Pitchfork,
    Hopf,
    RungEnd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxPoints,
    ParameterBound,
    NormBound,
    FoldLimit,
    DomainFilled,
    DriftReversal,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct BranchPoint {
    pub r: f64,
    pub state: SteadyState,
    pub norm: f64,
    pub event: Option<EventType>,
    pub counts: Option<StabilityCounts>,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub label: BranchLabel,
    pub kind: BranchKind,
    /// Parameters of the family; `r` varies along the branch.
    pub params: ModelParams,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
}

impl Branch {
    pub fn grid(&self) -> &Arc<Grid> {
        self.points[0].state.u.grid()
    }

    pub fn event_indices(&self, kind: EventType) -> Vec<usize> {
        (0..self.points.len()).filter(|&i| self.points[i].event == Some(kind)).collect()
    }

    pub fn folds(&self) -> Vec<&BranchPoint> {
        self.points.iter().filter(|p| p.event == Some(EventType::Fold)).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BranchError {
    #[error(transparent)]
    Setup(#[from] Error),
    #[error("{error} ({} points kept)", partial.points.len())]
    Stalled { error: Error, partial: Box<Branch> },
}

impl BranchError {
    pub fn partial(&self) -> Option<&Branch> {
        match self {
            BranchError::Setup(_) => None,
            BranchError::Stalled { partial, .. } => Some(partial),
        }
    }
}

/// Initial direction of travel along the branch.
#[derive(Clone, Debug)]
pub enum Direction {
    IncreasingR,
    DecreasingR,
    IncreasingNorm,
    DecreasingNorm,
    /// Away from the given state (used when leaving a bifurcation point).
    AwayFrom(Field),
}

#[derive(Clone, Debug)]
pub struct ContinuationOptions {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub max_norm: Option<f64>,
    pub min_norm: Option<f64>,
    pub max_folds: Option<usize>,
    /// Stop once `|u|` at the domain edge exceeds `fill_fraction max|u|`.
    pub stop_when_filled: bool,
    pub fill_fraction: f64,
    pub refine_folds: bool,
    /// Stop where the drift speed changes sign and refine that point.
    pub stop_on_drift_reversal: bool,
    pub direction: Direction,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            ds: 0.05,
            ds_min: 1e-4,
            ds_max: 0.5,
            max_points: 5000,
            r_min: -2.0,
            r_max: 1.0,
            max_norm: None,
            min_norm: None,
            max_folds: None,
            stop_when_filled: true,
            fill_fraction: 1e-2,
            refine_folds: true,
            stop_on_drift_reversal: false,
            direction: Direction::IncreasingNorm,
        }
    }
}

/// Problem-specific glue between raw points and states.
pub(crate) trait StateProblem: Problem {
    fn state(&self, p: &Point) -> Result<SteadyState>;
    fn point(&self, s: &SteadyState, r: f64) -> Point;
    fn drift(&self, _p: &Point) -> Option<f64> {
        None
    }
}

impl StateProblem for EvenProblem {
    fn state(&self, p: &Point) -> Result<SteadyState> {
        let res = self.residual(&p.x, p.r)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(SteadyState {
            u: self.field(&p.x),
            c: 0.0,
            residual_norm: res,
            parity: StateParity::Even,
            residual_history: vec![res],
        })
    }

    fn point(&self, s: &SteadyState, r: f64) -> Point {
        Point { x: self.reduce(&s.u), r }
    }
}

impl StateProblem for TravellingProblem {
    fn state(&self, p: &Point) -> Result<SteadyState> {
        let n = self.grid.n();
        let res = self.residual(&p.x, p.r)?[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let u = self.field(&p.x);
        Ok(SteadyState { parity: detect_parity(&u), u, c: p.x[n], residual_norm: res, residual_history: vec![res] })
    }

    fn point(&self, s: &SteadyState, r: f64) -> Point {
        let mut x = s.u.values().to_vec();
        x.push(s.c);
        Point { x, r }
    }

    fn drift(&self, p: &Point) -> Option<f64> {
        Some(p.x[self.grid.n()])
    }
}

fn branch_point<P: StateProblem>(prob: &P, p: &Point, event: Option<EventType>) -> Result<BranchPoint> {
    let state = prob.state(p)?;
    Ok(BranchPoint { r: p.r, norm: l2_norm(&state.u), state, event, counts: None })
}

fn edge_filled(u: &Field, fraction: f64) -> bool {
    u.values()[0].abs() > fraction * u.max_abs()
}

/// Unit tangent of the fold key, oriented along `sec`.
fn fold_key<P: Problem>(sec: &Point) -> impl Fn(&P, &Point) -> Result<f64> + '_ {
    move |pr: &P, pt: &Point| Ok(tangent(pr, pt, sec)?.r)
}

pub(crate) fn run<P: StateProblem>(
    prob: &mut P,
    start: Point,
    orient: Point,
    opts: &ContinuationOptions,
    label: BranchLabel,
    kind: BranchKind,
    params: ModelParams,
) -> Result<Branch, BranchError> {
    let res = prob.residual(&start.x, start.r)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(res <= 10.0 * prob.tolerance(&start.x)) {
        return Err(Error::InvalidSeed { residual: res }.into());
    }
    let mut t = null_tangent(prob, &start, &orient)?;
    let mut branch = Branch {
        label,
        kind,
        params,
        points: vec![branch_point(prob, &start, None)?],
        termination: Termination::MaxPoints,
    };
    prob.accept(&start.x);
    let mut ctl = StepControl { ds: opts.ds, ds_min: opts.ds_min, ds_max: opts.ds_max, max_corrector: 8 };
    let mut prev = start;
    // a seed at a fold has no usable sign of dr/ds
    let mut prev_tr = if t.r.abs() < 1e-6 { 0.0 } else { t.r };
    let mut folds = 0usize;
    while branch.points.len() < opts.max_points {
        let (q, _) = match step(prob, &prev, &t, &mut ctl) {
            Ok(v) => v,
            Err(error) => {
                branch.termination = Termination::Stalled;
                return Err(BranchError::Stalled { error, partial: Box::new(branch) });
            }
        };
        let sec = q.axpy(-1.0, &prev).normalized(prob);
        let tq = tangent(prob, &q, &sec)?;
        if opts.refine_folds && prev_tr != 0.0 && (tq.r > 0.0) != (prev_tr > 0.0) {
            let fold = bisect(prob, &prev, &q, fold_key(&sec), 1e-10, 0.0, 8)?;
            branch.points.push(branch_point(prob, &fold, Some(EventType::Fold))?);
            folds += 1;
        }
        if opts.stop_on_drift_reversal {
            if let (Some(c0), Some(c1)) = (prob.drift(&prev), prob.drift(&q)) {
                if c0 != 0.0 && (c0 > 0.0) != (c1 > 0.0) {
                    let key = |pr: &P, pt: &Point| Ok(pr.drift(pt).unwrap_or(0.0));
                    let end = bisect(prob, &prev, &q, key, 0.0, RUNG_END_SPEED, 8)?;
                    branch.points.push(branch_point(prob, &end, Some(EventType::RungEnd))?);
                    branch.termination = Termination::DriftReversal;
                    return Ok(branch);
                }
            }
        }
        prob.accept(&q.x);
        let bp = branch_point(prob, &q, None)?;
        let stop = if q.r < opts.r_min || q.r > opts.r_max {
            Some(Termination::ParameterBound)
        } else if opts.max_norm.is_some_and(|m| bp.norm > m) || opts.min_norm.is_some_and(|m| bp.norm < m) {
            Some(Termination::NormBound)
        } else if opts.max_folds.is_some_and(|m| folds >= m) {
            Some(Termination::FoldLimit)
        } else if opts.stop_when_filled && edge_filled(&bp.state.u, opts.fill_fraction) {
            Some(Termination::DomainFilled)
        } else {
            None
        };
        branch.points.push(bp);
        if let Some(s) = stop {
            branch.termination = s;
            return Ok(branch);
        }
        prev_tr = tq.r;
        t = sec;
        prev = q;
    }
    Ok(branch)
}

fn orientation(dir: &Direction, start: &Point, to_point: impl Fn(&Field) -> Vec<f64>) -> Point {
    let zero = vec![0.0; start.x.len()];
    match dir {
        Direction::IncreasingR => Point { x: zero, r: 1.0 },
        Direction::DecreasingR => Point { x: zero, r: -1.0 },
        Direction::IncreasingNorm => Point { x: start.x.clone(), r: 0.0 },
        Direction::DecreasingNorm => Point { x: start.x.iter().map(|v| -v).collect(), r: 0.0 },
        Direction::AwayFrom(f) => {
            let other = to_point(f);
            Point { x: start.x.iter().zip(&other).map(|(a, b)| a - b).collect(), r: 0.0 }
        }
    }
}

/// Continues the branch through `seed` (a steady state at `p.r`).
///
/// Even stationary seeds are continued in the even subspace; anything else
/// as a travelling state with a phase condition.
pub fn continue_branch(
    seed: &SteadyState,
    p: &ModelParams,
    label: BranchLabel,
    opts: &ContinuationOptions,
) -> Result<Branch, BranchError> {
    p.validate()?;
    seed.u.check_finite()?;
    if !(opts.ds_min > 0.0 && opts.ds_min <= opts.ds && opts.ds <= opts.ds_max) {
        return Err(Error::InvalidConfig(format!(
            "step sizes must satisfy 0 < ds_min <= ds <= ds_max (got {}, {}, {})",
            opts.ds_min, opts.ds, opts.ds_max
        ))
        .into());
    }
    let grid = seed.u.grid().clone();
    if seed.parity == StateParity::Even && seed.c == 0.0 && !opts.stop_on_drift_reversal {
        let mut prob = EvenProblem::new(grid, *p);
        let start = prob.point(seed, p.r);
        let orient = orientation(&opts.direction, &start, |f| prob.reduce(f));
        run(&mut prob, start, orient, opts, label, BranchKind::Even, *p)
    } else {
        let mut prob = TravellingProblem::new(grid, *p, &seed.u)?;
        let start = prob.point(seed, p.r);
        let orient = orientation(&opts.direction, &start, |f| {
            let mut x = f.values().to_vec();
            x.push(seed.c);
            x
        });
        run(&mut prob, start, orient, opts, label, BranchKind::Travelling, *p)
    }
}

/// Corrects `guess` at fixed `r` and continues from there.
pub fn continue_from_guess(
    guess: &Field,
    p: &ModelParams,
    label: BranchLabel,
    opts: &ContinuationOptions,
) -> Result<Branch, BranchError> {
    let seed = crate::steady::newton_stationary(guess, p, true)?;
    if seed.u.max_abs() < 1e-6 {
        return Err(Error::InvalidSeed { residual: seed.residual_norm }.into());
    }
    continue_branch(&seed, p, label, opts)
}

/// Mean left and right fold positions of a snaking branch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SnakingRegion {
    pub r_left: f64,
    pub r_right: f64,
    pub left_folds: Vec<f64>,
    pub right_folds: Vec<f64>,
    /// Largest spread among the left folds or among the right folds.
    pub spread: f64,
}

impl SnakingRegion {
    pub fn width(&self) -> f64 {
        self.r_right - self.r_left
    }
}

/// Folds skipped at the start of a branch before measuring alignment.
pub const SKIPPED_FOLDS: usize = 2;
pub const MIN_SNAKING_FOLDS: usize = 6;

/// Snaking region from the folds of a branch, skipping the first two.
pub fn snaking_region(branch: &Branch) -> Result<SnakingRegion> {
    let folds = branch.folds();
    if folds.len() < MIN_SNAKING_FOLDS {
        return Err(Error::InsufficientData(format!(
            "{} folds, need at least {MIN_SNAKING_FOLDS}",
            folds.len()
        )));
    }
    let rs: Vec<f64> = folds[SKIPPED_FOLDS..].iter().map(|p| p.r).collect();
    let mid = rs.iter().sum::<f64>() / rs.len() as f64;
    let (left, right): (Vec<f64>, Vec<f64>) = rs.iter().partition(|&&r| r < mid);
    if left.is_empty() || right.is_empty() {
        return Err(Error::InsufficientData("folds do not alternate".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let range = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(SnakingRegion {
        r_left: mean(&left),
        r_right: mean(&right),
        spread: range(&left).max(range(&right)),
        left_folds: left,
        right_folds: right,
    })
}

/// `(r, norm)` pairs along a branch.
pub fn branch_curve(branch: &Branch) -> Vec<(f64, f64)> {
    branch.points.iter().map(|p| (p.r, p.norm)).collect()
}
