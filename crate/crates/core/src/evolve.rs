//! Time integration: ETDRK4 (exponential, contour-integral coefficients) and
//! a second-order IMEX Runge-Kutta scheme. The linear operator
//! `r - (1 + d_xx)^2` is diagonal in Fourier space; the nonlinear terms are
//! explicit and dealiased.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::l2_norm;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::{free_energy, linear_symbol, nonlinear_spectrum, ModelParams};

/// Points on the contour used for the ETDRK4 coefficients.
const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    Etdrk4,
    Imex2,
}

impl Scheme {
    pub fn order(self) -> u32 {
        match self {
            Scheme::Etdrk4 => 4,
            Scheme::Imex2 => 2,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "etdrk4" => Ok(Scheme::Etdrk4),
            "imex2" => Ok(Scheme::Imex2),
            _ => Err(Error::InvalidConfig(format!("unknown scheme '{s}' (expected etdrk4 or imex2)"))),
        }
    }
}

/// Which scalar series to record at every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitors {
    /// Free energy; only recorded when the parameters are variational.
    pub energy: bool,
    pub norm: bool,
    /// `u` at `x = 0`.
    pub midpoint: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Monitors { energy: true, norm: true, midpoint: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// A snapshot is kept every `record_stride` steps (and at the end).
    pub record_stride: usize,
    pub monitors: Monitors,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { dt: 0.1, t_end: 100.0, scheme: Scheme::Etdrk4, record_stride: 10, monitors: Monitors::default() }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive (got {})", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_end must be positive (got {})", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorSample {
    pub t: f64,
    pub energy: Option<f64>,
    pub norm: Option<f64>,
    pub midpoint: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Times of the snapshots, strictly increasing.
    pub times: Vec<f64>,
    pub snapshots: Vec<Field>,
    /// One sample per step, starting at `t = 0`.
    pub monitors: Vec<MonitorSample>,
}

impl Trajectory {
    pub fn last(&self) -> &Field {
        self.snapshots.last().expect("trajectory holds the initial state")
    }
}

/// A failed run with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct RunError {
    pub source: Error,
    pub partial: Trajectory,
}

/// Precomputed diagonal coefficients for one `(grid, params, dt, scheme)`.
pub struct Stepper {
    params: ModelParams,
    scheme: Scheme,
    coeffs: Coefficients,
}

enum Coefficients {
    Etdrk4 { e: Vec<f64>, e2: Vec<f64>, q: Vec<f64>, f1: Vec<f64>, f2: Vec<f64>, f3: Vec<f64>, dt: f64 },
    Imex2 { lin: Vec<f64>, inv: Vec<f64>, dt: f64 },
}

const IMEX_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

fn imex_delta() -> f64 {
    1.0 - 1.0 / (2.0 * IMEX_GAMMA)
}

/// `phi`-type ETDRK4 coefficients by the mean over a circle of radius one
/// around each `z = dt * lambda`, which avoids cancellation near `z = 0`.
fn etd_coefficients(lin: &[f64], dt: f64) -> [Vec<f64>; 4] {
    let roots: Vec<Complex64> = (0..CONTOUR_POINTS)
        .map(|j| Complex64::from_polar(1.0, std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64))
        .collect();
    let mut out = [vec![0.0; lin.len()], vec![0.0; lin.len()], vec![0.0; lin.len()], vec![0.0; lin.len()]];
    for (m, &l) in lin.iter().enumerate() {
        let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
        for &rt in &roots {
            let z = rt + dt * l;
            let ez = z.exp();
            let z3 = z * z * z;
            q += (((z * 0.5).exp() - 1.0) / z).re;
            f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
            f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
            f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
        }
        let w = dt / CONTOUR_POINTS as f64;
        out[0][m] = q * w;
        out[1][m] = f1 * w;
        out[2][m] = f2 * w;
        out[3][m] = f3 * w;
    }
    out
}

impl Stepper {
    pub fn new(grid: &crate::grid::Grid, params: &ModelParams, dt: f64, scheme: Scheme) -> Result<Stepper> {
        params.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive (got {dt})")));
        }
        let lin = linear_symbol(grid, params);
        let coeffs = match scheme {
            Scheme::Etdrk4 => {
                let [q, f1, f2, f3] = etd_coefficients(&lin, dt);
                let e = lin.iter().map(|l| (l * dt).exp()).collect();
                let e2 = lin.iter().map(|l| (0.5 * l * dt).exp()).collect();
                Coefficients::Etdrk4 { e, e2, q, f1, f2, f3, dt }
            }
            Scheme::Imex2 => {
                let inv = lin.iter().map(|l| 1.0 / (1.0 - IMEX_GAMMA * dt * l)).collect();
                Coefficients::Imex2 { lin, inv, dt }
            }
        };
        Ok(Stepper { params: *params, scheme, coeffs })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dt(&self) -> f64 {
        match &self.coeffs {
            Coefficients::Etdrk4 { dt, .. } | Coefficients::Imex2 { dt, .. } => *dt,
        }
    }

    /// Advances a spectrum by one step.
    fn advance(&self, grid: &crate::grid::Grid, v: &[Complex64]) -> Vec<Complex64> {
        let p = &self.params;
        let nl = |s: &[Complex64]| nonlinear_spectrum(grid, s, p);
        let n = v.len();
        match &self.coeffs {
            Coefficients::Etdrk4 { e, e2, q, f1, f2, f3, .. } => {
                let nv = nl(v);
                let a: Vec<Complex64> = (0..n).map(|m| v[m] * e2[m] + nv[m] * q[m]).collect();
                let na = nl(&a);
                let b: Vec<Complex64> = (0..n).map(|m| v[m] * e2[m] + na[m] * q[m]).collect();
                let nb = nl(&b);
                let c: Vec<Complex64> = (0..n).map(|m| a[m] * e2[m] + (nb[m] * 2.0 - nv[m]) * q[m]).collect();
                let nc = nl(&c);
                (0..n)
                    .map(|m| v[m] * e[m] + nv[m] * f1[m] + (na[m] + nb[m]) * (2.0 * f2[m]) + nc[m] * f3[m])
                    .collect()
            }
            Coefficients::Imex2 { lin, inv, dt } => {
                // ARS(2,2,2): stiffly accurate, L-stable implicit part
                let (g, d) = (IMEX_GAMMA, imex_delta());
                let n0 = nl(v);
                let u1: Vec<Complex64> = (0..n).map(|m| (v[m] + n0[m] * (g * dt)) * inv[m]).collect();
                let n1 = nl(&u1);
                (0..n)
                    .map(|m| {
                        let explicit = n0[m] * (d * dt) + n1[m] * ((1.0 - d) * dt);
                        (v[m] + explicit + u1[m] * ((1.0 - g) * dt * lin[m])) * inv[m]
                    })
                    .collect()
            }
        }
    }

    /// One step of length `dt`.
    pub fn step(&self, u: &Field) -> Result<Field> {
        u.check_finite()?;
        let grid = u.grid();
        let out = grid.inverse(&self.advance(grid, &u.spectrum()));
        Field::new(grid.clone(), out).map_err(|_| Error::BlowUp { time: self.dt() })
    }
}

/// One step from `u`; builds the coefficients each call. Use [`Stepper`] or
/// [`run`] for repeated steps.
pub fn step(u: &Field, p: &ModelParams, dt: f64, scheme: Scheme) -> Result<Field> {
    Stepper::new(u.grid(), p, dt, scheme)?.step(u)
}

fn sample(u: &Field, p: &ModelParams, t: f64, m: &Monitors) -> Result<MonitorSample> {
    let energy = if m.energy && p.is_variational() { Some(free_energy(u, p)?) } else { None };
    Ok(MonitorSample {
        t,
        energy,
        norm: m.norm.then(|| l2_norm(u)),
        midpoint: m.midpoint.then(|| u.values()[u.grid().n() / 2]),
    })
}

/// Integrates from `u0` to `cfg.t_end`. On blow-up the error carries the
/// trajectory up to the last finite state.
pub fn run(u0: &Field, p: &ModelParams, cfg: &EvolveConfig) -> Result<Trajectory, RunError> {
    let mut traj = Trajectory { times: Vec::new(), snapshots: Vec::new(), monitors: Vec::new() };
    let fail = |source: Error, partial: Trajectory| RunError { source, partial };
    if let Err(e) = cfg.validate().and_then(|_| p.validate()).and_then(|_| u0.check_finite()) {
        return Err(fail(e, traj));
    }
    let steps = cfg.steps();
    let full = match Stepper::new(u0.grid(), p, cfg.dt, cfg.scheme) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, traj)),
    };
    let last_dt = cfg.t_end - (steps - 1) as f64 * cfg.dt;
    let mut u = u0.clone();
    traj.times.push(0.0);
    traj.snapshots.push(u.clone());
    match sample(&u, p, 0.0, &cfg.monitors) {
        Ok(s) => traj.monitors.push(s),
        Err(e) => return Err(fail(e, traj)),
    }
    for i in 1..=steps {
        let t = if i == steps { cfg.t_end } else { i as f64 * cfg.dt };
        let next = if i == steps && (last_dt - cfg.dt).abs() > 1e-12 * cfg.dt {
            Stepper::new(u.grid(), p, last_dt, cfg.scheme).and_then(|s| s.step(&u))
        } else {
            full.step(&u)
        };
        u = match next {
            Ok(v) => v,
            Err(_) => return Err(fail(Error::BlowUp { time: t }, traj)),
        };
        match sample(&u, p, t, &cfg.monitors) {
            Ok(s) => traj.monitors.push(s),
            Err(e) => return Err(fail(e, traj)),
        }
        if i % cfg.record_stride == 0 || i == steps {
            traj.times.push(t);
            traj.snapshots.push(u.clone());
        }
    }
    Ok(traj)
}

/// Oscillon test on a trajectory.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OscillonReport {
    /// Peak-to-trough of the norm over the analysis window, relative to its mean.
    pub relative_swing: f64,
    /// Largest `|u|` in the outer region `|x| > 0.4 L` relative to `max|u|`, worst snapshot.
    pub tail_ratio: f64,
    /// Angular frequency of the midpoint value from its mean crossings.
    pub frequency: Option<f64>,
    pub oscillating: bool,
    pub localized: bool,
}

impl OscillonReport {
    pub fn is_oscillon(&self) -> bool {
        self.oscillating && self.localized
    }
}

pub const OSCILLON_SWING: f64 = 1e-3;
pub const OSCILLON_TAIL: f64 = 1e-6;
/// Outer region for the tail check, as a fraction of `L`.
pub const TAIL_REGION: f64 = 0.4;

/// Examines the trajectory for `t >= t_from`: the norm must swing by more
/// than [`OSCILLON_SWING`] of its mean while every snapshot stays below
/// [`OSCILLON_TAIL`] in the outer region.
pub fn detect_oscillon(traj: &Trajectory, t_from: f64) -> Result<OscillonReport> {
    let window: Vec<&MonitorSample> = traj.monitors.iter().filter(|s| s.t >= t_from).collect();
    let norms: Vec<f64> = window.iter().filter_map(|s| s.norm).collect();
    let mids: Vec<(f64, f64)> = window.iter().filter_map(|s| s.midpoint.map(|m| (s.t, m))).collect();
    if norms.len() < 3 || mids.len() < 3 {
        return Err(Error::InsufficientData("need norm and midpoint monitors in the analysis window".into()));
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let (lo, hi) = norms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let relative_swing = if mean > 0.0 { (hi - lo) / mean } else { 0.0 };

    let mut tail_ratio = 0.0f64;
    for (t, u) in traj.times.iter().zip(&traj.snapshots) {
        if *t < t_from {
            continue;
        }
        let amp = u.max_abs();
        let half = TAIL_REGION * u.grid().length();
        let tail = u.grid().nodes().iter().zip(u.values()).filter(|(x, _)| x.abs() > half).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        tail_ratio = tail_ratio.max(if amp > 0.0 { tail / amp } else { 1.0 });
    }

    let mid_mean = mids.iter().map(|m| m.1).sum::<f64>() / mids.len() as f64;
    let ups: Vec<f64> = mids
        .windows(2)
        .filter(|w| w[0].1 < mid_mean && w[1].1 >= mid_mean)
        .map(|w| w[0].0 + (mid_mean - w[0].1) / (w[1].1 - w[0].1) * (w[1].0 - w[0].0))
        .collect();
    let frequency = (ups.len() >= 2)
        .then(|| 2.0 * std::f64::consts::PI * (ups.len() - 1) as f64 / (ups[ups.len() - 1] - ups[0]));

    Ok(OscillonReport {
        relative_swing,
        tail_ratio,
        frequency,
        oscillating: relative_swing > OSCILLON_SWING && frequency.is_some(),
        localized: tail_ratio < OSCILLON_TAIL,
    })
}

/// Observed order from runs at `dt`, `dt/2`, `dt/4` against a `dt/16` reference.
/// Returns the errors and the two successive log2 ratios.
pub fn self_convergence(
    u0: &Field,
    p: &ModelParams,
    t_end: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let solve = |h: f64| -> Result<Field> {
        let cfg = EvolveConfig {
            dt: h,
            t_end,
            scheme,
            record_stride: usize::MAX,
            monitors: Monitors { energy: false, norm: false, midpoint: false },
        };
        run(u0, p, &cfg).map(|t| t.last().clone()).map_err(|e| e.source)
    };
    let reference = solve(dt / 16.0)?;
    let mut errors = Vec::new();
    for h in [dt, dt / 2.0, dt / 4.0] {
        let u = solve(h)?;
        errors.push(u.axpby(1.0, &reference, -1.0)?.max_abs());
    }
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok((errors, orders))
}
