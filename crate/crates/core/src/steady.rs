//! Newton solvers for stationary states and for travelling waves `u(x - ct)`.

use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, even_dim, expand_even, parity_project, Field, Grid, Parity};
use crate::linalg::{self, Lu};
use crate::model::{rhs, Linearization, ModelParams};

pub const MAX_ITERATIONS: usize = 25;
/// Relative part of the Newton tolerance `1e-10 (1 + max|u|)`.
pub const NEWTON_TOL: f64 = 1e-10;

pub fn newton_tolerance(u: &Field) -> f64 {
    NEWTON_TOL * (1.0 + u.max_abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateParity {
    Even,
    Odd,
    None,
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub u: Field,
    /// Drift speed; zero for stationary states.
    pub c: f64,
    pub residual_norm: f64,
    pub parity: StateParity,
    /// `max|F|` before each Newton update and after the last one.
    pub residual_history: Vec<f64>,
}

impl SteadyState {
    pub fn iterations(&self) -> usize {
        self.residual_history.len().saturating_sub(1)
    }
}

/// Reflection parity of `u` up to `1e-10 (1 + max|u|)`.
pub fn detect_parity(u: &Field) -> StateParity {
    let tol = 1e-10 * (1.0 + u.max_abs());
    let v = u.values();
    let g = u.grid();
    let even = (0..g.n()).map(|j| (v[j] - v[g.mirror(j)]).abs()).fold(0.0, f64::max);
    let odd = (0..g.n()).map(|j| (v[j] + v[g.mirror(j)]).abs()).fold(0.0, f64::max);
    if even <= tol {
        StateParity::Even
    } else if odd <= tol {
        StateParity::Odd
    } else {
        StateParity::None
    }
}

/// `rhs(u) + c u_x`, the steady residual in the co-moving frame.
pub fn travelling_residual(u: &Field, c: f64, p: &ModelParams) -> Result<Field> {
    let f = rhs(u, p)?;
    if c == 0.0 {
        return Ok(f);
    }
    let ux = derivative(u, 1)?;
    f.axpby(1.0, &ux, c)
}

/// Dense matrix of `d/dx` on the grid (circulant).
pub fn derivative_matrix(grid: &Arc<Grid>) -> Mat<f64> {
    let n = grid.n();
    let mut e = vec![0.0; n];
    e[0] = 1.0;
    let col = derivative(&Field::from_raw(grid.clone(), e), 1).expect("order 1").into_values();
    Mat::from_fn(n, n, |i, j| col[(i + n - j) % n])
}

/// Full `n x n` Jacobian of `rhs` at `u0`.
pub fn jacobian_full(lin: &Linearization) -> Mat<f64> {
    let n = lin.grid().n();
    let mut jac = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = lin.apply(&e);
        e[j] = 0.0;
        for i in 0..n {
            jac[(i, j)] = col[i];
        }
    }
    jac
}

/// Jacobian restricted to even fields in reduced coordinates (nodes `0..=n/2`).
pub fn jacobian_even(lin: &Linearization) -> Mat<f64> {
    let g = lin.grid();
    let n = g.n();
    let m = even_dim(g);
    let mut jac = Mat::zeros(m, m);
    let mut e = vec![0.0; n];
    for j in 0..m {
        e[j] = 1.0;
        e[g.mirror(j)] = 1.0;
        let col = lin.apply(&e);
        e[j] = 0.0;
        e[g.mirror(j)] = 0.0;
        for i in 0..m {
            jac[(i, j)] = col[i];
        }
    }
    jac
}

/// Jacobian restricted to odd fields in reduced coordinates (nodes `1..n/2`).
pub fn jacobian_odd(lin: &Linearization) -> Mat<f64> {
    let g = lin.grid();
    let n = g.n();
    let m = n / 2 - 1;
    let mut jac = Mat::zeros(m, m);
    let mut e = vec![0.0; n];
    for j in 0..m {
        e[j + 1] = 1.0;
        e[n - j - 1] = -1.0;
        let col = lin.apply(&e);
        e[j + 1] = 0.0;
        e[n - j - 1] = 0.0;
        for i in 0..m {
            jac[(i, j)] = col[i + 1];
        }
    }
    jac
}

fn check_finite(x: &[f64], iterations: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NoConvergence { iterations, residual: f64::NAN })
    }
}

/// Solves `rhs(u) = 0`.
///
/// With `enforce_even` the iteration runs on the even subspace. Otherwise the
/// translation null direction is removed by bordering the Jacobian with
/// `d_x u_guess`.
pub fn newton_stationary(u_guess: &Field, p: &ModelParams, enforce_even: bool) -> Result<SteadyState> {
    u_guess.check_finite()?;
    p.validate()?;
    let grid = u_guess.grid().clone();
    let n = grid.n();
    let mut u = if enforce_even { parity_project(u_guess, Parity::Even) } else { u_guess.clone() };
    let phi = if enforce_even {
        None
    } else {
        let d = derivative(u_guess, 1)?;
        let norm = d.dot(&d)?.sqrt();
        (norm > 1e-8 * (1.0 + u_guess.max_abs())).then(|| d.scale(1.0 / norm).into_values())
    };
    let mut history = Vec::new();
    for it in 0..=MAX_ITERATIONS {
        let f = rhs(&u, p)?;
        let res = f.max_abs();
        history.push(res);
        if !res.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        if res < newton_tolerance(&u) {
            let parity = if enforce_even { StateParity::Even } else { detect_parity(&u) };
            return Ok(SteadyState { u, c: 0.0, residual_norm: res, parity, residual_history: history });
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let lin = Linearization::new(&u, p)?;
        if enforce_even {
            let m = even_dim(&grid);
            let jac = jacobian_even(&lin);
            let rhs_red: Vec<f64> = f.values()[..m].iter().map(|v| -v).collect();
            let du = Lu::new(&jac)?.solve(&rhs_red);
            check_finite(&du, it)?;
            let du = expand_even(&grid, &du);
            u = u.axpby(1.0, &du, 1.0)?;
        } else {
            let jac = jacobian_full(&lin);
            let du = match &phi {
                None => linalg::solve(&jac, &f.values().iter().map(|v| -v).collect::<Vec<_>>())?,
                Some(phi) => {
                    let mut a = Mat::zeros(n + 1, n + 1);
                    for i in 0..n {
                        for j in 0..n {
                            a[(i, j)] = jac[(i, j)];
                        }
                        a[(i, n)] = phi[i];
                        a[(n, i)] = phi[i];
                    }
                    let mut b: Vec<f64> = f.values().iter().map(|v| -v).collect();
                    b.push(0.0);
                    let mut x = linalg::solve(&a, &b)?;
                    x.truncate(n);
                    x
                }
            };
            check_finite(&du, it)?;
            let du = Field::from_raw(grid.clone(), du);
            u = u.axpby(1.0, &du, 1.0)?;
        }
    }
    unreachable!()
}

/// Solves `rhs(u) + c u_x = 0` with the phase condition
/// `<u - u_ref, d_x u_ref> = 0` for `(u, c)`.
pub fn newton_travelling(
    u_guess: &Field,
    c_guess: f64,
    u_ref: &Field,
    p: &ModelParams,
) -> Result<SteadyState> {
    u_guess.check_finite()?;
    u_ref.check_finite()?;
    u_guess.same_grid(u_ref)?;
    p.validate()?;
    if !c_guess.is_finite() {
        return Err(Error::InvalidParameters(format!("c = {c_guess}")));
    }
    let grid = u_guess.grid().clone();
    let n = grid.n();
    let dx = grid.dx();
    let dref = derivative(u_ref, 1)?;
    let d1 = derivative_matrix(&grid);
    let mut u = u_guess.clone();
    let mut c = c_guess;
    let mut history = Vec::new();
    for it in 0..=MAX_ITERATIONS {
        let ux = derivative(&u, 1)?;
        let f = rhs(&u, p)?.axpby(1.0, &ux, c)?;
        let phase = u.axpby(1.0, u_ref, -1.0)?.dot(&dref)?;
        let res = f.max_abs().max(phase.abs());
        history.push(res);
        if !res.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        if res < newton_tolerance(&u) {
            return Ok(SteadyState {
                parity: detect_parity(&u),
                u,
                c,
                residual_norm: res,
                residual_history: history,
            });
        }
        if it == MAX_ITERATIONS {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let lin = Linearization::new(&u, p)?;
        let jac = jacobian_full(&lin);
        let mut a = Mat::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = jac[(i, j)] + c * d1[(i, j)];
            }
            a[(i, n)] = ux.values()[i];
            a[(n, i)] = dref.values()[i] * dx;
        }
        let mut b: Vec<f64> = f.values().iter().map(|v| -v).collect();
        b.push(-phase);
        let x = linalg::solve(&a, &b)?;
        check_finite(&x, it)?;
        let du = Field::from_raw(grid.clone(), x[..n].to_vec());
        u = u.axpby(1.0, &du, 1.0)?;
        c += x[n];
    }
    unreachable!()
}

/// Weakly nonlinear localized state near onset,
/// `sqrt(2r/q2) sech(x sqrt(-r)/2) cos(x + phi)`, which solves the
/// stationary envelope equation `r a + 4 a'' - q2 a^3 = 0`. `phi = 0` gives
/// a maximum at the centre (L0), `phi = pi` a minimum (L1). Needs `r < 0`
/// and `q2 < 0`.
pub fn wnl_seed(grid: &Arc<Grid>, p: &ModelParams, phi: f64) -> Result<Field> {
    let q2 = crate::normal_form::q2_of(p.b, p.alpha, p.beta);
    if !(p.r < 0.0 && q2 < 0.0) {
        return Err(Error::Domain(format!("weakly nonlinear seed needs r < 0 and q2 < 0 (r = {}, q2 = {q2})", p.r)));
    }
    let amp = (2.0 * p.r / q2).sqrt();
    let kappa = 0.5 * (-p.r).sqrt();
    Ok(Field::from_fn(grid.clone(), |x| amp / (kappa * x).cosh() * (x + phi).cos()))
}
