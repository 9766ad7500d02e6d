//! Linear stability of steady and travelling states.
//!
//! Even stationary states are handled block-wise: the linearization commutes
//! with the reflection, so the even and odd subspaces are decomposed
//! separately. Everything else goes through the full dense matrix.

use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, expand_even, expand_odd, Field, Grid};
use crate::linalg;
use crate::model::{Linearization, ModelParams};
use crate::steady::{derivative_matrix, jacobian_even, jacobian_full, jacobian_odd, SteadyState, StateParity};

/// Eigenvalues with `|sigma|` below this are candidates for the translation mode.
pub const GOLDSTONE_TOL: f64 = 1e-6;
/// An eigenvector is labelled even (odd) when its odd (even) part is this
/// many times smaller than the other part.
pub const PARITY_FACTOR: f64 = 1e3;
pub const DEFAULT_EIGS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeParity {
    Even,
    Odd,
    Mixed,
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub sigma: Complex64,
    /// Nodal values, unit norm in the `dx`-weighted inner product.
    pub vector: Vec<Complex64>,
    pub parity: ModeParity,
    pub goldstone: bool,
}

/// Unstable counts: `m` even / `n` odd, `_r` real / `_c` complex. Complex
/// eigenvalues are counted individually, so a pair contributes 2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilityCounts {
    pub m_r: usize,
    pub n_r: usize,
    pub m_c: usize,
    pub n_c: usize,
}

impl StabilityCounts {
    pub fn total(&self) -> usize {
        self.m_r + self.n_r + self.m_c + self.n_c
    }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Leading eigenpairs sorted by decreasing real part.
    pub pairs: Vec<Eigenpair>,
}

impl Spectrum {
    pub fn leading(&self) -> Option<&Eigenpair> {
        self.pairs.iter().find(|p| !p.goldstone)
    }
}

fn is_real(z: Complex64) -> bool {
    z.im.abs() <= 1e-8 * (1.0 + z.norm())
}

fn classify(v: &[Complex64], grid: &Grid, factor: f64) -> ModeParity {
    let (mut even, mut odd) = (0.0, 0.0);
    for j in 0..v.len() {
        let m = v[grid.mirror(j)];
        even += (v[j] + m).norm_sqr();
        odd += (v[j] - m).norm_sqr();
    }
    let (even, odd) = (even.sqrt(), odd.sqrt());
    if odd * factor < even {
        ModeParity::Even
    } else if even * factor < odd {
        ModeParity::Odd
    } else {
        ModeParity::Mixed
    }
}

fn normalize(v: &mut [Complex64], dx: f64) {
    let norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt();
    if norm > 0.0 {
        // fix the phase so the largest entry is real and positive
        let big = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap_or_default();
        let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex64::new(1.0, 0.0) };
        for z in v.iter_mut() {
            *z = *z * phase / norm;
        }
    }
}

fn expand_complex(grid: &Arc<Grid>, y: &[Complex64], even: bool) -> Vec<Complex64> {
    let re: Vec<f64> = y.iter().map(|z| z.re).collect();
    let im: Vec<f64> = y.iter().map(|z| z.im).collect();
    let (fr, fi) = if even {
        (expand_even(grid, &re), expand_even(grid, &im))
    } else {
        (expand_odd(grid, &re), expand_odd(grid, &im))
    };
    fr.values().iter().zip(fi.values()).map(|(&a, &b)| Complex64::new(a, b)).collect()
}

/// Normalized overlap `|<a, b>| / (|a| |b|)`.
pub fn overlap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let ab: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        ab.norm() / (na * nb)
    }
}

/// Dense matrix of the linearization about `state` in the co-moving frame.
pub fn jacobian_matrix(state: &SteadyState, p: &ModelParams) -> Result<Mat<f64>> {
    let lin = Linearization::new(&state.u, p)?;
    let mut jac = jacobian_full(&lin);
    if state.c != 0.0 {
        let d1 = derivative_matrix(state.u.grid());
        let n = jac.nrows();
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] += state.c * d1[(i, j)];
            }
        }
    }
    Ok(jac)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Number of leading eigenpairs kept; 0 keeps all.
    pub n_eigs: usize,
    pub goldstone_tol: f64,
    pub parity_factor: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { n_eigs: DEFAULT_EIGS, goldstone_tol: GOLDSTONE_TOL, parity_factor: PARITY_FACTOR }
    }
}

/// Leading `n_eigs` eigenpairs of the linearization about `state`
/// (`n_eigs = 0` keeps all of them).
pub fn compute_spectrum(state: &SteadyState, p: &ModelParams, n_eigs: usize) -> Result<Spectrum> {
    compute_spectrum_with(state, p, &SpectrumOptions { n_eigs, ..SpectrumOptions::default() })
}

pub fn compute_spectrum_with(state: &SteadyState, p: &ModelParams, opts: &SpectrumOptions) -> Result<Spectrum> {
    let n_eigs = opts.n_eigs;
    state.u.check_finite()?;
    let grid = state.u.grid().clone();
    let dx = grid.dx();
    let mut raw: Vec<(Complex64, Vec<Complex64>, Option<ModeParity>)> = Vec::new();
    if state.parity == StateParity::Even && state.c == 0.0 {
        let lin = Linearization::new(&state.u, p)?;
        for even in [true, false] {
            let block = if even { jacobian_even(&lin) } else { jacobian_odd(&lin) };
            let (vals, vecs) = linalg::eigen(&block)?;
            let parity = if even { ModeParity::Even } else { ModeParity::Odd };
            for (s, y) in vals.into_iter().zip(vecs) {
                raw.push((s, expand_complex(&grid, &y, even), Some(parity)));
            }
        }
    } else {
        let jac = jacobian_matrix(state, p)?;
        let (vals, vecs) = linalg::eigen(&jac)?;
        raw.extend(vals.into_iter().zip(vecs).map(|(s, v)| (s, v, None)));
    }
    raw.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    if n_eigs > 0 {
        raw.truncate(n_eigs.max(4));
    }

    let ux: Vec<Complex64> =
        derivative(&state.u, 1)?.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let has_translation = ux.iter().any(|z| z.norm() > 1e-12);
    let mut pairs: Vec<Eigenpair> = raw
        .into_iter()
        .map(|(sigma, mut vector, parity)| {
            normalize(&mut vector, dx);
            let parity = parity.unwrap_or_else(|| classify(&vector, &grid, opts.parity_factor));
            Eigenpair { sigma, vector, parity, goldstone: false }
        })
        .collect();
    if has_translation {
        let best = pairs
            .iter()
            .enumerate()
            .filter(|(_, e)| e.sigma.norm() < opts.goldstone_tol)
            .map(|(i, e)| (i, overlap(&e.vector, &ux)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = best {
            pairs[i].goldstone = true;
        }
    }
    Ok(Spectrum { pairs })
}

/// Counts eigenvalues with `Re sigma > sigma_tol`, excluding the translation mode.
/// Mixed-parity modes (asymmetric states) are counted as even.
pub fn count_unstable(spectrum: &Spectrum, sigma_tol: f64) -> StabilityCounts {
    let mut c = StabilityCounts::default();
    for e in spectrum.pairs.iter().filter(|e| !e.goldstone && e.sigma.re > sigma_tol) {
        let odd = e.parity == ModeParity::Odd;
        match (is_real(e.sigma), odd) {
            (true, false) => c.m_r += 1,
            (true, true) => c.n_r += 1,
            (false, false) => c.m_c += 1,
            (false, true) => c.n_c += 1,
        }
    }
    c
}

/// Follows one eigenvalue through a sequence of spectra by maximal
/// eigenvector overlap, starting from `start` in the first spectrum.
pub fn track_mode(spectra: &[Spectrum], start: usize) -> Result<Vec<Complex64>> {
    let first = spectra.first().ok_or_else(|| Error::InsufficientData("no spectra".into()))?;
    let mut cur = first
        .pairs
        .get(start)
        .ok_or_else(|| Error::InsufficientData(format!("mode {start} not present")))?;
    let mut path = vec![cur.sigma];
    for (k, s) in spectra.iter().enumerate().skip(1) {
        let (best, ov) = s
            .pairs
            .iter()
            .map(|e| (e, overlap(&e.vector, &cur.vector)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::InsufficientData(format!("spectrum {k} is empty")))?;
        if ov < 0.5 {
            return Err(Error::TrackingLost { index: k, overlap: ov });
        }
        path.push(best.sigma);
        cur = best;
    }
    Ok(path)
}

/// Linearization residual `max|J v - sigma v|` for an eigenpair.
pub fn eigen_residual(state: &SteadyState, p: &ModelParams, pair: &Eigenpair) -> Result<f64> {
    let jac = jacobian_matrix(state, p)?;
    let n = jac.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..n {
            s += pair.vector[j] * jac[(i, j)];
        }
        worst = worst.max((s - pair.sigma * pair.vector[i]).norm());
    }
    Ok(worst)
}

/// Real part of an eigenvector as a field.
pub fn mode_field(grid: &Arc<Grid>, pair: &Eigenpair) -> Field {
    Field::from_raw(grid.clone(), pair.vector.iter().map(|z| z.re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::newton_stationary;

    #[test]
    fn trivial_state_spectrum_is_linear_rate() {
        let g = Grid::new(16.0 * std::f64::consts::PI, 64).unwrap();
        let p = ModelParams::new(-0.1, 1.8, 0.0, 0.0).unwrap();
        let state = newton_stationary(&Field::zeros(g.clone()), &p, true).unwrap();
        let spectrum = compute_spectrum(&state, &p, 0).unwrap();
        assert_eq!(spectrum.pairs.len(), 64);
        // each k appears twice (cos and sin), k = 0 and Nyquist once
        let mut got: Vec<f64> = spectrum.pairs.iter().map(|e| e.sigma.re).collect();
        let mut want: Vec<f64> = g.wavenumbers().iter().map(|&k| p.linear_rate(k)).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert!(spectrum.pairs.iter().all(|e| !e.goldstone));
        assert_eq!(count_unstable(&spectrum, GOLDSTONE_TOL).total(), 0);
    }

    #[test]
    fn localized_state_has_goldstone_mode() {
        let g = Grid::new(16.0 * std::f64::consts::PI, 256).unwrap();
        let p = ModelParams::new(-0.28, 1.8, 0.0, 0.0).unwrap();
        let guess = Field::from_fn(g.clone(), |x| 1.2 / (0.5 * x).cosh() * x.cos());
        let state = newton_stationary(&guess, &p, true).unwrap();
        let spectrum = compute_spectrum(&state, &p, 12).unwrap();
        let gold: Vec<_> = spectrum.pairs.iter().filter(|e| e.goldstone).collect();
        assert_eq!(gold.len(), 1);
        assert_eq!(gold[0].parity, ModeParity::Odd);
        for e in &spectrum.pairs {
            let res = eigen_residual(&state, &p, e).unwrap();
            assert!(res < 1e-8 * (1.0 + e.sigma.norm()), "residual {res} at {}", e.sigma);
        }
        // block and full decompositions agree
        let mut full = state.clone();
        full.parity = StateParity::None;
        let spec_full = compute_spectrum(&full, &p, 12).unwrap();
        for (a, b) in spectrum.pairs.iter().zip(&spec_full.pairs).take(6) {
            assert!((a.sigma - b.sigma).norm() < 1e-8, "{} vs {}", a.sigma, b.sigma);
            assert_eq!(a.parity, b.parity);
        }
    }

    #[test]
    fn tracking_follows_a_slowly_moving_mode() {
        let g = Grid::new(16.0 * std::f64::consts::PI, 128).unwrap();
        let guess = Field::from_fn(g.clone(), |x| 1.2 / (0.5 * x).cosh() * x.cos());
        let mut spectra = Vec::new();
        let mut u = guess;
        for i in 0..4 {
            let p = ModelParams::new(-0.28 + 0.002 * i as f64, 1.8, 0.0, 0.0).unwrap();
            let s = newton_stationary(&u, &p, true).unwrap();
            u = s.u.clone();
            spectra.push(compute_spectrum(&s, &p, 8).unwrap());
        }
        let start = spectra[0].pairs.iter().position(|e| !e.goldstone).unwrap();
        let path = track_mode(&spectra, start).unwrap();
        assert_eq!(path.len(), 4);
        for w in path.windows(2) {
            assert!((w[1] - w[0]).norm() < 0.05);
        }
    }
}
