//! Periodic computational domain with Fourier differentiation, dealiased
//! products and reflection-parity projections.
//!
//! Nodes are `x_j = -L/2 + j L/n`. The reflection `x -> -x` maps node `j`
//! to node `(n - j) mod n`; nodes `0` and `n/2` are fixed by it.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Default domain length: sixteen wavelengths of the critical mode.
pub const DEFAULT_LENGTH: f64 = 32.0 * PI;
/// Default number of nodes.
pub const DEFAULT_NODES: usize = 512;

pub struct Grid {
    length: f64,
    n: usize,
    dx: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    cutoff: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fwd_pad: Arc<dyn Fft<f64>>,
    inv_pad: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

impl Grid {
    /// Builds a grid of `n` nodes on a periodic cell of length `length`.
    ///
    /// `n` must be even and at least 64 for the production domains; the
    /// single-wavelength pattern cells use [`Grid::cell`], which only requires
    /// an even `n >= 8`.
    pub fn new(length: f64, n: usize) -> Result<Arc<Grid>> {
        if n < 64 {
            return Err(Error::InvalidGrid(format!("n = {n} < 64")));
        }
        Self::build(length, n)
    }

    /// Grid for a single periodic cell (used by the pattern branch).
    pub fn cell(length: f64, n: usize) -> Result<Arc<Grid>> {
        if n < 8 {
            return Err(Error::InvalidGrid(format!("n = {n} < 8")));
        }
        Self::build(length, n)
    }

    pub fn default_domain() -> Arc<Grid> {
        Self::new(DEFAULT_LENGTH, DEFAULT_NODES).expect("default grid is valid")
    }

    fn build(length: f64, n: usize) -> Result<Arc<Grid>> {
        if n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} is odd")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length}")));
        }
        let dx = length / n as f64;
        let nodes = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let half = n / 2;
        let wavenumbers = (0..n)
            .map(|m| {
                let signed = if m <= half { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * signed / length
            })
            .collect();
        let mut planner = FftPlanner::new();
        let padded = 3 * n / 2;
        Ok(Arc::new(Grid {
            length,
            n,
            dx,
            nodes,
            wavenumbers,
            cutoff: n / 3,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            fwd_pad: planner.plan_fft_forward(padded),
            inv_pad: planner.plan_fft_inverse(padded),
        }))
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Angular wavenumbers `2 pi m / L` in FFT order; the Nyquist entry is positive.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Largest mode index retained by the dealiasing filter.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Node index of `-x_j`.
    #[inline]
    pub fn mirror(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Unnormalised forward transform of real samples.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse of [`Grid::forward`], keeping the real part.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.inv.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    /// Fourier symbol of `d^order/dx^order` at mode `m`.
    pub fn derivative_symbol(&self, m: usize, order: u32) -> Complex64 {
        let k = self.wavenumbers[m];
        if m == self.n / 2 && order % 2 == 1 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, k).powu(order)
    }

    /// Applies a derivative to a spectrum in place.
    pub fn differentiate_spectrum(&self, spectrum: &mut [Complex64], order: u32) {
        for (m, z) in spectrum.iter_mut().enumerate() {
            *z *= self.derivative_symbol(m, order);
        }
    }

    /// Samples of the trigonometric interpolant of a spectrum on the 3n/2 grid.
    /// The Nyquist mode is dropped.
    pub fn pad(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = self.padded_spectrum(spectrum);
        self.inv_pad.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|z| z.re * scale).collect()
    }

    /// Pads two real fields with one complex transform.
    pub fn pad_pair(&self, a: &[Complex64], b: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let pa = self.padded_spectrum(a);
        let pb = self.padded_spectrum(b);
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = pa.iter().zip(&pb).map(|(x, y)| x + i * y).collect();
        self.inv_pad.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        (
            buf.iter().map(|z| z.re * scale).collect(),
            buf.iter().map(|z| z.im * scale).collect(),
        )
    }

    fn padded_spectrum(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let big = 3 * n / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); big];
        buf[0] = spectrum[0];
        for m in 1..n / 2 {
            buf[m] = spectrum[m];
            buf[big - m] = spectrum[n - m];
        }
        buf
    }

    /// Transforms samples on the 3n/2 grid back to an n-point spectrum and
    /// applies the 2/3-rule filter (modes with |m| > n/3 are zeroed).
    pub fn unpad_filtered(&self, padded: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = padded.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd_pad.process(&mut buf);
        self.truncate(&buf)
    }

    fn truncate(&self, padded_spectrum: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let big = padded_spectrum.len();
        let scale = n as f64 / big as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        out[0] = padded_spectrum[0] * scale;
        for m in 1..=self.cutoff {
            out[m] = padded_spectrum[m] * scale;
            out[n - m] = padded_spectrum[big - m] * scale;
        }
        out
    }

    /// Same as [`Grid::unpad_filtered`] for two real padded fields at once.
    pub fn unpad_filtered_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf: Vec<Complex64> =
            a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.fwd_pad.process(&mut buf);
        let big = buf.len();
        let half = Complex64::new(0.5, 0.0);
        let mut sa = vec![Complex64::new(0.0, 0.0); big];
        let mut sb = vec![Complex64::new(0.0, 0.0); big];
        for m in 0..big {
            let z = buf[m];
            let zc = buf[(big - m) % big].conj();
            sa[m] = (z + zc) * half;
            sb[m] = (z - zc) * Complex64::new(0.0, -0.5);
        }
        (self.truncate(&sa), self.truncate(&sb))
    }
}

/// Real samples of a periodic function on a [`Grid`].
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.n() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(j));
        }
        Ok(Field { grid, values })
    }

    /// Wraps values without the finiteness check. Used internally where
    /// finiteness is checked by the caller.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), grid.n());
        Field { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        let n = grid.n();
        Field { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Field {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(j) => Err(Error::NonFiniteInput(j)),
            None => Ok(()),
        }
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `u(-x)`.
    pub fn reflect(&self) -> Field {
        let values = (0..self.grid.n()).map(|j| self.values[self.grid.mirror(j)]).collect();
        Field { grid: self.grid.clone(), values }
    }

    /// `u(x - s dx)` for an integer node shift `s`.
    pub fn shift(&self, s: isize) -> Field {
        let n = self.grid.n() as isize;
        let values = (0..n)
            .map(|j| self.values[(j - s).rem_euclid(n) as usize])
            .collect();
        Field { grid: self.grid.clone(), values }
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    /// Linear combination `a*self + b*other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Field { grid: self.grid.clone(), values })
    }

    pub fn scale(&self, a: f64) -> Field {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|v| a * v).collect() }
    }

    /// Quadrature inner product `sum u_j v_j dx`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.dx())
    }
}

/// Spectral derivative of order 1..=4. The Nyquist mode is zeroed for odd orders.
pub fn derivative(u: &Field, order: u32) -> Result<Field> {
    if !(1..=4).contains(&order) {
        return Err(Error::DerivativeOrder(order));
    }
    let grid = u.grid();
    let mut s = u.spectrum();
    grid.differentiate_spectrum(&mut s, order);
    Ok(Field::from_raw(grid.clone(), grid.inverse(&s)))
}

/// Product `u v` evaluated alias-free on the 3/2-padded grid, then truncated
/// to modes `|m| <= n/3`.
pub fn dealiased_product(u: &Field, v: &Field) -> Result<Field> {
    u.same_grid(v)?;
    let grid = u.grid();
    let (pu, pv) = grid.pad_pair(&u.spectrum(), &v.spectrum());
    let prod: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a * b).collect();
    let s = grid.unpad_filtered(&prod);
    Ok(Field::from_raw(grid.clone(), grid.inverse(&s)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// `(u(x) + u(-x))/2` or `(u(x) - u(-x))/2`.
pub fn parity_project(u: &Field, parity: Parity) -> Field {
    let grid = u.grid();
    let sign = match parity {
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    let v = u.values();
    let values = (0..grid.n()).map(|j| 0.5 * (v[j] + sign * v[grid.mirror(j)])).collect();
    Field::from_raw(grid.clone(), values)
}

/// Number of independent values of an even field (nodes `0..=n/2`).
pub fn even_dim(grid: &Grid) -> usize {
    grid.n() / 2 + 1
}

/// Number of independent values of an odd field (nodes `1..n/2`).
pub fn odd_dim(grid: &Grid) -> usize {
    grid.n() / 2 - 1
}

/// Expands the reduced coordinates of an even field to all nodes.
pub fn expand_even(grid: &Arc<Grid>, reduced: &[f64]) -> Field {
    let n = grid.n();
    let values = (0..n)
        .map(|j| {
            let i = if j <= n / 2 { j } else { n - j };
            reduced[i]
        })
        .collect();
    Field::from_raw(grid.clone(), values)
}

/// Expands the reduced coordinates of an odd field to all nodes.
pub fn expand_odd(grid: &Arc<Grid>, reduced: &[f64]) -> Field {
    let n = grid.n();
    let mut values = vec![0.0; n];
    for j in 1..n / 2 {
        values[j] = reduced[j - 1];
        values[n - j] = -reduced[j - 1];
    }
    Field::from_raw(grid.clone(), values)
}

/// Quadrature weights of the reduced even coordinates: the full-grid inner
/// product of two even fields equals the weighted sum over reduced values.
pub fn even_weights(grid: &Grid) -> Vec<f64> {
    let n = grid.n();
    (0..=n / 2)
        .map(|j| if j == 0 || j == n / 2 { grid.dx() } else { 2.0 * grid.dx() })
        .collect()
}
