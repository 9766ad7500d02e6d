//! The extended Swift–Hohenberg equation
//!
//! ```text
//! u_t = r u - (1 + d_xx)^2 u + b u^2 - u^3 + alpha u_x^2 + beta u u_xx
//! ```
//!
//! with its exact (dealiased) linearization, free energy and spatial
//! Hamiltonian.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, Field, Grid};

/// Tolerance of the `alpha == beta/2` test.
pub const VARIATIONAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ModelParams {
    pub fn new(r: f64, b: f64, alpha: f64, beta: f64) -> Result<ModelParams> {
        let p = ModelParams { r, b, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.r, self.b, self.alpha, self.beta].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!("{self:?}")))
        }
    }

    pub fn with_r(self, r: f64) -> ModelParams {
        ModelParams { r, ..self }
    }

    pub fn is_variational(&self) -> bool {
        (self.alpha - 0.5 * self.beta).abs() <= VARIATIONAL_TOL
    }

    /// Image under `u -> -u`: `(r, -b, -alpha, -beta)`.
    pub fn inverted(self) -> ModelParams {
        ModelParams { r: self.r, b: -self.b, alpha: -self.alpha, beta: -self.beta }
    }

    /// Growth rate of the mode `e^{ikx}` about `u = 0`.
    pub fn linear_rate(&self, k: f64) -> f64 {
        let s = 1.0 - k * k;
        self.r - s * s
    }
}

pub(crate) fn linear_symbol(grid: &Grid, p: &ModelParams) -> Vec<f64> {
    grid.wavenumbers().iter().map(|&k| p.linear_rate(k)).collect()
}

fn spectral_derivatives(grid: &Grid, s: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut sx = s.to_vec();
    grid.differentiate_spectrum(&mut sx, 1);
    let mut sxx = s.to_vec();
    grid.differentiate_spectrum(&mut sxx, 2);
    (sx, sxx)
}

/// Spectrum of the dealiased nonlinear terms `b u^2 - u^3 + alpha u_x^2 + beta u u_xx`.
pub(crate) fn nonlinear_spectrum(grid: &Grid, s: &[Complex64], p: &ModelParams) -> Vec<Complex64> {
    let (sx, sxx) = spectral_derivatives(grid, s);
    let (up, uxp) = grid.pad_pair(s, &sx);
    let uxxp = grid.pad(&sxx);
    let sq: Vec<f64> = up.iter().map(|u| u * u).collect();
    let quad: Vec<f64> = (0..up.len())
        .map(|j| p.b * sq[j] + p.alpha * uxp[j] * uxp[j] + p.beta * up[j] * uxxp[j])
        .collect();
    let (s_sq, s_quad) = grid.unpad_filtered_pair(&sq, &quad);
    let qp = grid.pad(&s_sq);
    let cube: Vec<f64> = qp.iter().zip(&up).map(|(q, u)| q * u).collect();
    let s_cube = grid.unpad_filtered(&cube);
    s_quad.iter().zip(&s_cube).map(|(a, c)| a - c).collect()
}

/// Right-hand side of the equation evaluated on the grid.
pub fn rhs(u: &Field, p: &ModelParams) -> Result<Field> {
    u.check_finite()?;
    p.validate()?;
    let grid = u.grid();
    let s = u.spectrum();
    let lin = linear_symbol(grid, p);
    let nl = nonlinear_spectrum(grid, &s, p);
    let out: Vec<Complex64> = (0..grid.n()).map(|m| s[m] * lin[m] + nl[m]).collect();
    Ok(Field::from_raw(grid.clone(), grid.inverse(&out)))
}

/// Frozen linearization about `u0`, reusable across many directions.
///
/// This is the exact derivative of the dealiased [`rhs`], so it agrees with
/// finite differences of `rhs` to truncation error.
pub struct Linearization {
    grid: Arc<Grid>,
    params: ModelParams,
    lin: Vec<f64>,
    up: Vec<f64>,
    uxp: Vec<f64>,
    uxxp: Vec<f64>,
    qp: Vec<f64>,
}

impl Linearization {
    pub fn new(u0: &Field, p: &ModelParams) -> Result<Linearization> {
        u0.check_finite()?;
        p.validate()?;
        let grid = u0.grid().clone();
        let s = u0.spectrum();
        let (sx, sxx) = spectral_derivatives(&grid, &s);
        let (up, uxp) = grid.pad_pair(&s, &sx);
        let uxxp = grid.pad(&sxx);
        let sq: Vec<f64> = up.iter().map(|u| u * u).collect();
        let qp = grid.pad(&grid.unpad_filtered(&sq));
        let lin = linear_symbol(&grid, p);
        Ok(Linearization { grid, params: *p, lin, up, uxp, uxxp, qp })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Applies the linearized operator to raw nodal values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let p = &self.params;
        let s = g.forward(v);
        let (sx, sxx) = spectral_derivatives(g, &s);
        let (vp, vxp) = g.pad_pair(&s, &sx);
        let vxxp = g.pad(&sxx);
        let nn = vp.len();
        let mut uv = vec![0.0; nn];
        let mut w = vec![0.0; nn];
        for j in 0..nn {
            uv[j] = self.up[j] * vp[j];
            w[j] = 2.0 * p.b * uv[j] + 2.0 * p.alpha * self.uxp[j] * vxp[j]
                + p.beta * (vp[j] * self.uxxp[j] + self.up[j] * vxxp[j])
                - self.qp[j] * vp[j];
        }
        let (s_uv, s_w) = g.unpad_filtered_pair(&uv, &w);
        let uvp = g.pad(&s_uv);
        let w2: Vec<f64> = uvp.iter().zip(&self.up).map(|(a, u)| 2.0 * a * u).collect();
        let s_w2 = g.unpad_filtered(&w2);
        let out: Vec<Complex64> =
            (0..g.n()).map(|m| s[m] * self.lin[m] + s_w[m] - s_w2[m]).collect();
        g.inverse(&out)
    }

    pub fn apply_field(&self, v: &Field) -> Result<Field> {
        if **v.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Field::from_raw(self.grid.clone(), self.apply(v.values())))
    }
}

/// `L[u0] v`, the linearization of [`rhs`] about `u0` applied to `v`.
pub fn linearized_apply(u0: &Field, v: &Field, p: &ModelParams) -> Result<Field> {
    u0.same_grid(v)?;
    Linearization::new(u0, p)?.apply_field(v)
}

/// Free energy on the periodic cell. Requires `alpha == beta/2`.
///
/// The gradient-flow form of the equation with `alpha = beta/2` follows from
/// the density `-r u^2/2 + ((1+d_xx)u)^2/2 - b u^3/3 + u^4/4 + (beta/2) u u_x^2`.
pub fn free_energy(u: &Field, p: &ModelParams) -> Result<f64> {
    if !p.is_variational() {
        return Err(Error::NotVariational { alpha: p.alpha, half_beta: 0.5 * p.beta });
    }
    free_energy_unchecked(u, p)
}

/// Free energy of the `alpha = beta = 0` model, ignoring `p.alpha` and `p.beta`.
pub fn free_energy_sh23(u: &Field, r: f64, b: f64) -> Result<f64> {
    free_energy_unchecked(u, &ModelParams { r, b, alpha: 0.0, beta: 0.0 })
}

fn free_energy_unchecked(u: &Field, p: &ModelParams) -> Result<f64> {
    u.check_finite()?;
    let ux = derivative(u, 1)?;
    let uxx = derivative(u, 2)?;
    let dx = u.grid().dx();
    let total: f64 = (0..u.grid().n())
        .map(|j| {
            let v = u.values()[j];
            let lu = v + uxx.values()[j];
            let g = ux.values()[j];
            -0.5 * p.r * v * v + 0.5 * lu * lu - p.b * v * v * v / 3.0
                + 0.25 * v * v * v * v
                + 0.5 * p.beta * v * g * g
        })
        .sum();
    Ok(total * dx)
}

/// Pointwise spatial Hamiltonian of the `alpha = beta = 0` model; constant in
/// `x` along steady states.
pub fn spatial_hamiltonian(u: &Field, p: &ModelParams) -> Result<Vec<f64>> {
    if p.alpha != 0.0 || p.beta != 0.0 {
        return Err(Error::UnsupportedParameters { alpha: p.alpha, beta: p.beta });
    }
    u.check_finite()?;
    let d1 = derivative(u, 1)?;
    let d2 = derivative(u, 2)?;
    let d3 = derivative(u, 3)?;
    Ok((0..u.grid().n())
        .map(|j| {
            let v = u.values()[j];
            let (a, bb, c) = (d1.values()[j], d2.values()[j], d3.values()[j]);
            -0.5 * (p.r - 1.0) * v * v + a * a - 0.5 * bb * bb + a * c - p.b * v * v * v / 3.0
                + 0.25 * v * v * v * v
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialRegime {
    HyperbolicQuartet,
    DoubleImaginary,
    TwoImaginaryPairs,
    BeyondUnity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialEigenvalues {
    pub values: [Complex64; 4],
    pub regime: SpatialRegime,
}

/// Roots `lambda` of `(1 + lambda^2)^2 = r`, i.e. spatial growth rates of `u = 0`.
pub fn spatial_eigenvalues(r: f64) -> SpatialEigenvalues {
    let sr = Complex64::new(r, 0.0).sqrt();
    let a = (sr - 1.0).sqrt();
    let b = (-sr - 1.0).sqrt();
    let regime = if r < 0.0 {
        SpatialRegime::HyperbolicQuartet
    } else if r == 0.0 {
        SpatialRegime::DoubleImaginary
    } else if r < 1.0 {
        SpatialRegime::TwoImaginaryPairs
    } else {
        SpatialRegime::BeyondUnity
    };
    SpatialEigenvalues { values: [a, -a, b, -b], regime }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn cell() -> Arc<Grid> {
        Grid::new(2.0 * PI, 64).unwrap()
    }

    fn bump(grid: &Arc<Grid>, a: f64, w: f64, k: f64, phase: f64) -> Field {
        Field::from_fn(grid.clone(), |x| a * (x / w).cosh().recip() * (k * x + phase).cos())
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = Grid::new(30.0, 64).unwrap();
        let p = ModelParams::new(-0.3, 1.8, 0.7, -0.4).unwrap();
        assert!(rhs(&Field::zeros(g.clone()), &p).unwrap().max_abs() == 0.0);
        let u0 = 0.37;
        let f = rhs(&Field::from_fn(g.clone(), |_| u0), &p).unwrap();
        let expect = (p.r - 1.0) * u0 + p.b * u0 * u0 - u0 * u0 * u0;
        for v in f.values() {
            assert!((v - expect).abs() < 1e-14);
        }
    }

    /// Hand expansion of the equation for `u = cos x`:
    /// `u^2 = (1+cos2x)/2`, `u^3 = (3cos x + cos3x)/4`, `u_x^2 = (1-cos2x)/2`,
    /// `u u_xx = -(1+cos2x)/2`, `(1+d_xx)^2 cos x = 0`.
    #[test]
    fn cosine_matches_trig_expansion() {
        let g = cell();
        let p = ModelParams::new(0.3, 1.1, -0.6, 0.9).unwrap();
        let u = Field::from_fn(g.clone(), f64::cos);
        let f = rhs(&u, &p).unwrap();
        for (j, &x) in g.nodes().iter().enumerate() {
            let c1 = x.cos();
            let c2 = (2.0 * x).cos();
            let c3 = (3.0 * x).cos();
            let expect = p.r * c1 + p.b * 0.5 * (1.0 + c2) - 0.25 * (3.0 * c1 + c3)
                + p.alpha * 0.5 * (1.0 - c2)
                - p.beta * 0.5 * (1.0 + c2);
            // roundoff in the high modes is amplified by k^4 ~ 1e6
            assert!((f.values()[j] - expect).abs() < 1e-9, "{j}");
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = Grid::new(30.0, 64).unwrap();
        let mut u = Field::zeros(g);
        u.values_mut()[5] = f64::NAN;
        let p = ModelParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(rhs(&u, &p).unwrap_err(), Error::NonFiniteInput(5));
        assert!(ModelParams::new(f64::INFINITY, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn neutral_mode_at_onset() {
        let g = cell();
        let p = ModelParams::new(0.0, 1.8, 0.5, 0.0).unwrap();
        let v = Field::from_fn(g.clone(), f64::cos);
        let out = linearized_apply(&Field::zeros(g.clone()), &v, &p).unwrap();
        assert!(out.max_abs() < 1e-9);
        let v2 = Field::from_fn(g.clone(), |x| (2.0 * x).cos());
        let p2 = p.with_r(-0.2);
        let out2 = linearized_apply(&Field::zeros(g.clone()), &v2, &p2).unwrap();
        let sigma = p2.linear_rate(2.0);
        assert!(out2.axpby(1.0, &v2, -sigma).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let g = Grid::new(40.0, 128).unwrap();
        let p = ModelParams::new(-0.25, 1.8, 0.5, 0.3).unwrap();
        let u0 = bump(&g, 1.1, 3.0, 1.0, 0.3);
        let v = bump(&g, 0.7, 5.0, 0.8, -1.0);
        let eps = 1e-6;
        let fp = rhs(&u0.axpby(1.0, &v, eps).unwrap(), &p).unwrap();
        let fm = rhs(&u0.axpby(1.0, &v, -eps).unwrap(), &p).unwrap();
        let fd = fp.axpby(0.5 / eps, &fm, -0.5 / eps).unwrap();
        let lv = linearized_apply(&u0, &v, &p).unwrap();
        let err = fd.axpby(1.0, &lv, -1.0).unwrap().max_abs();
        assert!(err < 1e-6 * lv.max_abs(), "{err}");
    }

    #[test]
    fn grid_mismatch_in_linearization() {
        let a = Field::zeros(Grid::new(30.0, 64).unwrap());
        let b = Field::zeros(Grid::new(30.0, 128).unwrap());
        let p = ModelParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(linearized_apply(&a, &b, &p).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn free_energy_of_cosine() {
        let g = cell();
        let (r, b, a) = (-0.3, 1.8, 0.8);
        let p = ModelParams::new(r, b, 0.0, 0.0).unwrap();
        let u = Field::from_fn(g.clone(), |x| a * x.cos());
        let f = free_energy(&u, &p).unwrap();
        let expect = 2.0 * PI * (-r * a * a / 4.0 + 3.0 * a.powi(4) / 32.0);
        assert!((f - expect).abs() < 1e-12);
        assert_eq!(free_energy(&Field::zeros(g.clone()), &p).unwrap(), 0.0);
        let q = ModelParams::new(r, b, 0.3, 0.0).unwrap();
        assert!(matches!(free_energy(&u, &q), Err(Error::NotVariational { .. })));
        assert!((free_energy_sh23(&u, r, b).unwrap() - expect).abs() < 1e-12);
    }

    /// `-dF/du` along any direction `v` equals `<rhs(u), v>` when `alpha = beta/2`.
    #[test]
    fn free_energy_gradient_is_minus_rhs() {
        let g = Grid::new(40.0, 256).unwrap();
        let p = ModelParams::new(-0.2, 1.8, 0.15, 0.3).unwrap();
        let u = bump(&g, 1.0, 4.0, 1.0, 0.0);
        let v = bump(&g, 0.5, 3.0, 1.2, 0.4);
        let eps = 1e-5;
        let dfdv = (free_energy(&u.axpby(1.0, &v, eps).unwrap(), &p).unwrap()
            - free_energy(&u.axpby(1.0, &v, -eps).unwrap(), &p).unwrap())
            / (2.0 * eps);
        let f = rhs(&u, &p).unwrap();
        let ip = f.dot(&v).unwrap();
        assert!((dfdv + ip).abs() < 1e-7 * ip.abs().max(1.0), "{dfdv} vs {ip}");
    }

    #[test]
    fn hamiltonian_restrictions() {
        let g = Grid::new(30.0, 64).unwrap();
        let z = Field::zeros(g.clone());
        let p = ModelParams::new(-0.2, 1.8, 0.0, 0.0).unwrap();
        assert!(spatial_hamiltonian(&z, &p).unwrap().iter().all(|&h| h == 0.0));
        let q = ModelParams::new(-0.2, 1.8, 0.1, 0.0).unwrap();
        assert!(matches!(spatial_hamiltonian(&z, &q), Err(Error::UnsupportedParameters { .. })));
        let gauss = Field::from_fn(g.clone(), |x| (-x * x).exp());
        let h = spatial_hamiltonian(&gauss, &p).unwrap();
        let spread = h.iter().cloned().fold(f64::MIN, f64::max) - h.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 1e-2);
    }

    #[test]
    fn spatial_eigenvalue_values() {
        let e0 = spatial_eigenvalues(0.0);
        assert_eq!(e0.regime, SpatialRegime::DoubleImaginary);
        for z in e0.values {
            assert!(z.re.abs() < 1e-15 && (z.im.abs() - 1.0).abs() < 1e-15);
        }
        let e = spatial_eigenvalues(0.25);
        assert_eq!(e.regime, SpatialRegime::TwoImaginaryPairs);
        let mut im: Vec<f64> = e.values.iter().map(|z| z.im.abs()).collect();
        im.sort_by(f64::total_cmp);
        assert!((im[0] - 0.5f64.sqrt()).abs() < 1e-12 && (im[3] - 1.5f64.sqrt()).abs() < 1e-12);
        assert!(e.values.iter().all(|z| z.re.abs() < 1e-15));
        let q = spatial_eigenvalues(-1.0);
        assert_eq!(q.regime, SpatialRegime::HyperbolicQuartet);
        for z in q.values {
            assert!((z.re.abs() - 0.45509).abs() < 1e-5 && (z.im.abs() - 1.09868).abs() < 1e-5);
        }
        // each value satisfies the characteristic polynomial
        for r in [-1.0, -0.1, 0.25, 2.0] {
            for z in spatial_eigenvalues(r).values {
                let w = (z * z + 1.0) * (z * z + 1.0) - r;
                assert!(w.norm() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn inversion_equivariance(r in -1.0f64..1.0, b in -3.0f64..3.0, al in -3.0f64..3.0,
                                  be in -3.0f64..3.0, a in 0.1f64..1.5, w in 1.0f64..6.0) {
            let g = Grid::new(40.0, 128).unwrap();
            let p = ModelParams::new(r, b, al, be).unwrap();
            let u = bump(&g, a, w, 1.0, 0.2);
            let f = rhs(&u, &p).unwrap();
            let fi = rhs(&u.scale(-1.0), &p.inverted()).unwrap();
            let err = f.axpby(1.0, &fi, 1.0).unwrap().max_abs();
            prop_assert!(err < 1e-12 * (1.0 + f.max_abs()));
        }

        #[test]
        fn reflection_equivariance(b in -3.0f64..3.0, al in -3.0f64..3.0, be in -3.0f64..3.0,
                                   ph in 0.0f64..6.0) {
            let g = Grid::new(40.0, 128).unwrap();
            let p = ModelParams::new(-0.2, b, al, be).unwrap();
            let u = bump(&g, 0.8, 3.0, 1.0, ph).axpby(1.0, &bump(&g, 0.2, 1.0, 2.0, 0.0).shift(7), 1.0).unwrap();
            let lhs = rhs(&u.reflect(), &p).unwrap();
            let rhs_ = rhs(&u, &p).unwrap().reflect();
            prop_assert!(lhs.axpby(1.0, &rhs_, -1.0).unwrap().max_abs() < 1e-12 * (1.0 + lhs.max_abs()));
        }

        #[test]
        fn linearization_is_derivative(b in -3.0f64..3.0, al in -2.0f64..2.0, be in -2.0f64..2.0,
                                       a in 0.2f64..1.5, ph in 0.0f64..6.0) {
            let g = Grid::new(40.0, 128).unwrap();
            let p = ModelParams::new(-0.2, b, al, be).unwrap();
            let u0 = bump(&g, a, 3.0, 1.0, ph);
            let v = bump(&g, 1.0, 2.0, 0.9, -ph);
            let eps = 1e-6;
            let fd = rhs(&u0.axpby(1.0, &v, eps).unwrap(), &p).unwrap()
                .axpby(0.5 / eps, &rhs(&u0.axpby(1.0, &v, -eps).unwrap(), &p).unwrap(), -0.5 / eps).unwrap();
            let lv = linearized_apply(&u0, &v, &p).unwrap();
            prop_assert!(fd.axpby(1.0, &lv, -1.0).unwrap().max_abs() < 1e-6 * lv.max_abs());
        }
    }
}
