//! Concrete continuation problems: even stationary states, travelling
//! states with a phase condition, and periodic patterns with a free
//! wavenumber fixed by the spatial Hamiltonian.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;

use super::arclength::Problem;
use crate::error::Result;
use crate::grid::{derivative, even_dim, even_weights, expand_even, Field, Grid};
use crate::model::{rhs, spatial_hamiltonian, Linearization, ModelParams};
use crate::steady::{derivative_matrix, jacobian_even, jacobian_full, NEWTON_TOL};

fn tol(x: &[f64]) -> f64 {
    NEWTON_TOL * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Even stationary states in reduced coordinates (nodes `0..=n/2`).
pub(crate) struct EvenProblem {
    pub grid: Arc<Grid>,
    pub params: ModelParams,
    weights: Vec<f64>,
}

impl EvenProblem {
    pub fn new(grid: Arc<Grid>, params: ModelParams) -> EvenProblem {
        let weights = even_weights(&grid);
        EvenProblem { grid, params, weights }
    }

    pub fn field(&self, x: &[f64]) -> Field {
        expand_even(&self.grid, x)
    }

    pub fn reduce(&self, u: &Field) -> Vec<f64> {
        u.values()[..even_dim(&self.grid)].to_vec()
    }
}

impl Problem for EvenProblem {
    fn dim(&self) -> usize {
        even_dim(&self.grid)
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn residual(&self, x: &[f64], r: f64) -> Result<Vec<f64>> {
        let f = rhs(&self.field(x), &self.params.with_r(r))?;
        Ok(f.values()[..self.dim()].to_vec())
    }

    fn jacobian(&self, x: &[f64], r: f64) -> Result<(Mat<f64>, Vec<f64>)> {
        let lin = Linearization::new(&self.field(x), &self.params.with_r(r))?;
        Ok((jacobian_even(&lin), x.to_vec()))
    }

    fn tolerance(&self, x: &[f64]) -> f64 {
        tol(x)
    }
}

/// Travelling states `(u, c)` with `<u - u_ref, d_x u_ref> = 0`.
pub(crate) struct TravellingProblem {
    pub grid: Arc<Grid>,
    pub params: ModelParams,
    weights: Vec<f64>,
    d1: Mat<f64>,
    u_ref: Field,
    dref: Vec<f64>,
}

impl TravellingProblem {
    pub fn new(grid: Arc<Grid>, params: ModelParams, u_ref: &Field) -> Result<TravellingProblem> {
        let mut weights = vec![grid.dx(); grid.n()];
        weights.push(1.0);
        let d1 = derivative_matrix(&grid);
        let dref = derivative(u_ref, 1)?.into_values();
        Ok(TravellingProblem { grid, params, weights, d1, u_ref: u_ref.clone(), dref })
    }

    pub fn field(&self, x: &[f64]) -> Field {
        Field::from_raw(self.grid.clone(), x[..self.grid.n()].to_vec())
    }

    pub fn set_reference(&mut self, u: &Field) {
        self.u_ref = u.clone();
        self.dref = derivative(u, 1).expect("order 1").into_values();
    }
}

impl Problem for TravellingProblem {
    fn dim(&self) -> usize {
        self.grid.n() + 1
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn residual(&self, x: &[f64], r: f64) -> Result<Vec<f64>> {
        let n = self.grid.n();
        let u = self.field(x);
        let c = x[n];
        let ux = derivative(&u, 1)?;
        let f = rhs(&u, &self.params.with_r(r))?;
        let mut out: Vec<f64> = f.values().iter().zip(ux.values()).map(|(a, b)| a + c * b).collect();
        let phase: f64 = (0..n).map(|j| (x[j] - self.u_ref.values()[j]) * self.dref[j]).sum::<f64>() * self.grid.dx();
        out.push(phase);
        Ok(out)
    }

    fn jacobian(&self, x: &[f64], r: f64) -> Result<(Mat<f64>, Vec<f64>)> {
        let n = self.grid.n();
        let u = self.field(x);
        let c = x[n];
        let ux = derivative(&u, 1)?;
        let lin = Linearization::new(&u, &self.params.with_r(r))?;
        let j = jacobian_full(&lin);
        let dx = self.grid.dx();
        let a = Mat::from_fn(n + 1, n + 1, |i, k| match (i < n, k < n) {
            (true, true) => j[(i, k)] + c * self.d1[(i, k)],
            (true, false) => ux.values()[i],
            (false, true) => self.dref[k] * dx,
            (false, false) => 0.0,
        });
        let mut fr = x[..n].to_vec();
        fr.push(0.0);
        Ok((a, fr))
    }

    fn tolerance(&self, x: &[f64]) -> f64 {
        tol(&x[..self.grid.n()])
    }

    fn accept(&mut self, x: &[f64]) {
        let u = self.field(x);
        self.set_reference(&u);
    }
}

/// Nodes per cell for pattern solutions.
pub const CELL_NODES: usize = 64;

/// Even periodic patterns on one cell `[-pi/k, pi/k)`; unknowns are the
/// reduced even values and `k`, the extra equation is `<H> = 0`.
/// Restricted to `alpha = beta = 0`.
pub(crate) struct PatternProblem {
    pub params: ModelParams,
    weights: Vec<f64>,
}

impl PatternProblem {
    pub fn new(params: ModelParams) -> PatternProblem {
        let g = Grid::cell(2.0 * PI, CELL_NODES).expect("valid cell");
        let mut weights = even_weights(&g);
        weights.push(1.0);
        PatternProblem { params, weights }
    }

    pub fn grid(k: f64) -> Result<Arc<Grid>> {
        Grid::cell(2.0 * PI / k, CELL_NODES)
    }

    pub fn field(x: &[f64]) -> Result<Field> {
        let m = x.len() - 1;
        let g = Self::grid(x[m])?;
        Ok(expand_even(&g, &x[..m]))
    }

    fn hamiltonian(&self, u: &Field, r: f64) -> Result<f64> {
        let h = spatial_hamiltonian(u, &self.params.with_r(r))?;
        Ok(h.iter().sum::<f64>() / h.len() as f64)
    }
}

impl Problem for PatternProblem {
    fn dim(&self) -> usize {
        CELL_NODES / 2 + 2
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn residual(&self, x: &[f64], r: f64) -> Result<Vec<f64>> {
        let u = Self::field(x)?;
        let f = rhs(&u, &self.params.with_r(r))?;
        let mut out = f.values()[..CELL_NODES / 2 + 1].to_vec();
        out.push(self.hamiltonian(&u, r)?);
        Ok(out)
    }

    fn jacobian(&self, x: &[f64], r: f64) -> Result<(Mat<f64>, Vec<f64>)> {
        let d = self.dim();
        let m = d - 1;
        let u = Self::field(x)?;
        let lin = Linearization::new(&u, &self.params.with_r(r))?;
        let ju = jacobian_even(&lin);
        let mut a = Mat::zeros(d, d);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = ju[(i, j)];
            }
        }
        // k column and H row by central differences
        let fd = |f: &dyn Fn(&[f64], f64) -> Result<Vec<f64>>, j: Option<usize>| -> Result<Vec<f64>> {
            let h = match j {
                Some(j) => 1e-6 * (1.0 + x[j].abs()),
                None => 1e-6,
            };
            let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
            let (mut rp, mut rm) = (r, r);
            match j {
                Some(j) => {
                    xp[j] += h;
                    xm[j] -= h;
                }
                None => {
                    rp += h;
                    rm -= h;
                }
            }
            let (fp, fm) = (f(&xp, rp)?, f(&xm, rm)?);
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let full = |xx: &[f64], rr: f64| self.residual(xx, rr);
        let kcol = fd(&full, Some(m))?;
        for i in 0..d {
            a[(i, m)] = kcol[i];
        }
        let hrow = |xx: &[f64], rr: f64| -> Result<Vec<f64>> { Ok(vec![self.hamiltonian(&Self::field(xx)?, rr)?]) };
        for j in 0..m {
            a[(m, j)] = fd(&hrow, Some(j))?[0];
        }
        let mut fr = x[..m].to_vec();
        fr.push(fd(&hrow, None)?[0]);
        Ok((a, fr))
    }

    fn tolerance(&self, x: &[f64]) -> f64 {
        // the finite-difference rows limit attainable accuracy slightly
        10.0 * tol(&x[..x.len() - 1])
    }
}
