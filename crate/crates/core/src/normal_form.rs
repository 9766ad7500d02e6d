//! Hamiltonian–Hopf normal-form coefficients of the extended equation at
//! onset, regime classification and the reduced potential.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|q2|` at or below this is treated as the codimension-two boundary.
pub const CODIM2_TOL: f64 = 1e-12;

/// Closed-form `q2(b, alpha, beta)`.
pub fn q2_of(b: f64, alpha: f64, beta: f64) -> f64 {
    0.25 * (3.0
        - 2.0 * (b + alpha - beta) * (2.0 * b - beta)
        - (b - alpha - beta) * (2.0 * b + 4.0 * alpha - 5.0 * beta) / 9.0)
}

/// Quadratic-form matrix `M` with `q2 = (27 - p^T M p)/36`, `p = (b, alpha, beta)`,
/// as obtained by expanding [`q2_of`].
pub fn quadratic_form_matrix() -> [[f64; 3]; 3] {
    [[38.0, 19.0, -30.5], [19.0, -4.0, -8.5], [-30.5, -8.5, 23.0]]
}

/// The tabulated reference matrix, whose `(b, alpha)` entry is 17 rather
/// than 19. Its eigenvalues are the reference ones; it does not reproduce
/// [`q2_of`].
pub fn reference_matrix() -> [[f64; 3]; 3] {
    [[38.0, 17.0, -30.5], [17.0, -4.0, -8.5], [-30.5, -8.5, 23.0]]
}

/// `(27 - p^T M p)/36` with the consistent matrix.
pub fn q2_quadratic_form(b: f64, alpha: f64, beta: f64) -> f64 {
    let m = quadratic_form_matrix();
    let p = [b, alpha, beta];
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += p[i] * m[i][j] * p[j];
        }
    }
    (27.0 - s) / 36.0
}

/// Eigenvalues of a symmetric 3x3 matrix in descending order.
pub fn symmetric_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let a = faer::Mat::from_fn(3, 3, |i, j| m[i][j]);
    let mut ev = a
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("3x3 symmetric eigenproblem");
    ev.sort_by(|x, y| y.total_cmp(x));
    [ev[0], ev[1], ev[2]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c1_hat: f64,
    pub c2_hat: f64,
}

/// Multiple-scales coefficient combinations at `(b0, alpha0, beta0)` with
/// parameter increments `(b_hat, alpha_hat, beta_hat)`.
///
/// `c6` uses `b0` in its second bracket.
pub fn c_coefficients(
    b0: f64,
    alpha0: f64,
    beta0: f64,
    b_hat: f64,
    alpha_hat: f64,
    beta_hat: f64,
) -> CCoefficients {
    let (b, a, be) = (b0, alpha0, beta0);
    let c1 = 2.0 * (b + a - be);
    let c2 = (b - a - be) / 9.0;
    let c3 = ((2.0 * b - 4.0 * a - 5.0 * be) * c2 - 1.0) / 64.0;
    let c4 = b * (c1 * c1 + 2.0 * c2 * c2) - 6.0 * (c1 + c2) + 8.0 * c2 * c2 * (a - be);
    let c5 = 2.0 * (a - be);
    let c6 = (2.0 * c1 * c2 * (b - 2.0 * be) + 2.0 * c3 * (b + 3.0 * a - 5.0 * be)
        - 3.0 * (c1 + 2.0 * c2))
        / 9.0;
    let c7 = 2.0 / 9.0 * (24.0 * c2 + (a + be));
    let c8 = b * (-2.0 * c5 + 2.0 * c7)
        + a * (4.0 * c7 + 2.0 * c1 - 4.0 * c2)
        + be * (c5 - 5.0 * c7 + 2.0 * c1 + 8.0 * c2);
    let c9 = b * (2.0 * c5) + a * (2.0 * c1 + 4.0 * c2) + be * (-c5 - 2.0 * c2);
    let c10 = b * (2.0 * c4 + 2.0 * c6 + 2.0 * c2 * c3)
        - 3.0 * (c1 * c1 + c3 + 2.0 * c1 * c2 + 2.0 * c2 * c2)
        + a * (4.0 * c6 + 12.0 * c2 * c3)
        + be * (-c4 - 5.0 * c6 - 13.0 * c2 * c3);
    CCoefficients {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c1_hat: 2.0 * (b_hat + alpha_hat - beta_hat),
        c2_hat: (b_hat - alpha_hat - beta_hat) / 9.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `q2 > 0`, `q4 > 0`.
    SupercriticalQ4Pos,
    /// `q2 > 0`, `q4 < 0`.
    SupercriticalQ4Neg,
    /// `q2 < 0`, `q4 > 0`: small-amplitude localised states and a Maxwell point.
    SubcriticalSnaking,
    /// `q2 < 0`, `q4 < 0`.
    SubcriticalQ4Neg,
    /// `q2 = 0` (or `q4 = 0`): the degenerate boundary.
    Codim2,
}

pub fn classify(q2: f64, q4: f64) -> Regime {
    if q2.abs() <= CODIM2_TOL || q4 == 0.0 {
        Regime::Codim2
    } else {
        match (q2 > 0.0, q4 > 0.0) {
            (true, true) => Regime::SupercriticalQ4Pos,
            (true, false) => Regime::SupercriticalQ4Neg,
            (false, true) => Regime::SubcriticalSnaking,
            (false, false) => Regime::SubcriticalQ4Neg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormReport {
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub coefficients: CCoefficients,
    pub q1: f64,
    pub q2: f64,
    pub p2: f64,
    pub q3: f64,
    pub q4: f64,
    pub regime: Regime,
    pub mu_maxwell: Option<f64>,
}

impl NormalFormReport {
    /// A report carrying only `(q1, q2, q4)`, for exploring the abstract
    /// normal form with other sign conventions.
    pub fn from_q(q1: f64, q2: f64, q4: f64) -> NormalFormReport {
        let mut nf = NormalFormReport {
            b: f64::NAN,
            alpha: f64::NAN,
            beta: f64::NAN,
            coefficients: c_coefficients(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            q1,
            q2,
            p2: f64::NAN,
            q3: f64::NAN,
            q4,
            regime: classify(q2, q4),
            mu_maxwell: None,
        };
        nf.mu_maxwell = maxwell_mu(&nf);
        nf
    }
}

pub fn normal_form_report(b: f64, alpha: f64, beta: f64) -> Result<NormalFormReport> {
    if ![b, alpha, beta].iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameters(format!("({b}, {alpha}, {beta})")));
    }
    let c = c_coefficients(b, alpha, beta, 0.0, 0.0, 0.0);
    let q2 = q2_of(b, alpha, beta);
    let q4 = (-3.0 * c.c8 * c.c8 + 2.0 * c.c8 * c.c9 + 5.0 * c.c9 * c.c9) / 256.0 - 0.25 * c.c10;
    let mut nf = NormalFormReport {
        b,
        alpha,
        beta,
        coefficients: c,
        q1: -0.25,
        q2,
        p2: -(c.c8 + c.c9) / 16.0,
        q3: (c.c8 - 3.0 * c.c9) / 8.0,
        q4,
        regime: classify(q2, q4),
        mu_maxwell: None,
    };
    nf.mu_maxwell = maxwell_mu(&nf);
    Ok(nf)
}

/// Discriminant of `f(y)/y^2`: `q2^2/4 + (4/3) q1 q4 mu`.
pub fn discriminant(mu: f64, nf: &NormalFormReport) -> f64 {
    0.25 * nf.q2 * nf.q2 + 4.0 / 3.0 * nf.q1 * nf.q4 * mu
}

/// Root of the discriminant, `-3 q2^2 / (16 q1 q4)`, when `q2 <= 0` and `q4 > 0`.
///
/// The sign of the result follows `q1`: with `q1 > 0` it is negative, with
/// the matched `q1 = -1/4` it is positive. In both cases the origin is
/// hyperbolic on the same side (`q1 mu < 0`).
pub fn maxwell_mu(nf: &NormalFormReport) -> Option<f64> {
    let q2 = if nf.q2.abs() <= CODIM2_TOL { 0.0 } else { nf.q2 };
    if q2 <= 0.0 && nf.q4 > 0.0 && nf.q1 != 0.0 {
        Some(-3.0 * q2 * q2 / (16.0 * nf.q1 * nf.q4))
    } else {
        None
    }
}

/// `f(y) = 4 q1 mu y^2 - 2 q2 y^3 - (4/3) q4 y^4` for `y >= 0`.
pub fn reduced_potential(y: f64, mu: f64, nf: &NormalFormReport) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::Domain(format!("y = {y} < 0")));
    }
    let y2 = y * y;
    Ok(4.0 * nf.q1 * mu * y2 - 2.0 * nf.q2 * y2 * y - 4.0 / 3.0 * nf.q4 * y2 * y2)
}

/// Whether orbits homoclinic to the origin exist at `mu`.
///
/// Stated in terms of `q1 mu`, which is negative exactly when the origin is
/// hyperbolic, so the test does not depend on the orientation of `mu`.
pub fn homoclinic_exists(mu: f64, nf: &NormalFormReport) -> bool {
    let s = nf.q1 * mu;
    if nf.q4 > 0.0 {
        nf.q2 < 0.0 && s <= 0.0 && discriminant(mu, nf) >= 0.0
    } else if nf.q4 < 0.0 {
        s < 0.0
    } else {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q4: f64,
}

impl SurfaceSample {
    fn at(b: f64, alpha: f64, beta: f64) -> SurfaceSample {
        let q4 = normal_form_report(b, alpha, beta).map(|r| r.q4).unwrap_or(f64::NAN);
        SurfaceSample { b, alpha, beta, q4 }
    }

    pub fn q4_positive(&self) -> bool {
        self.q4 > 0.0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTable {
    pub samples: Vec<SurfaceSample>,
    /// Inputs with no real root on the surface.
    pub omitted: Vec<(f64, f64)>,
}

fn real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // cancellation-free form
    let q = -0.5 * (b + b.signum() * s);
    let mut roots = if q == 0.0 {
        vec![0.0, 0.0]
    } else {
        vec![q / a, c / q]
    };
    roots.sort_by(f64::total_cmp);
    roots
}

/// Values of `b` on `q2 = 0` at fixed `(alpha, beta)`, ascending.
pub fn b_roots(alpha: f64, beta: f64) -> Vec<f64> {
    real_roots(
        38.0,
        38.0 * alpha - 61.0 * beta,
        -(27.0 + 4.0 * alpha * alpha + 17.0 * alpha * beta - 23.0 * beta * beta),
    )
}

/// Values of `alpha` on `q2 = 0` at fixed `(b, beta)`, ascending.
pub fn alpha_roots(b: f64, beta: f64) -> Vec<f64> {
    real_roots(
        4.0,
        -38.0 * b + 17.0 * beta,
        27.0 - 38.0 * b * b + 61.0 * b * beta - 23.0 * beta * beta,
    )
}

/// Samples the surface `q2 = 0` over `(alpha, beta)` pairs, solving for `b`
/// and tagging each root with `q4`.
pub fn sample_q2_surface(points: &[(f64, f64)]) -> Result<SurfaceTable> {
    let mut table = SurfaceTable::default();
    for &(alpha, beta) in points {
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidParameters(format!("({alpha}, {beta})")));
        }
        let roots = b_roots(alpha, beta);
        if roots.is_empty() {
            table.omitted.push((alpha, beta));
        }
        for b in roots {
            table.samples.push(SurfaceSample::at(b, alpha, beta));
        }
    }
    Ok(table)
}

/// Points of `q2 = q4 = 0` on the planar slice `beta = slope * alpha + offset`
/// with `alpha` in `[lo, hi]`, found by bracketing on `samples` intervals and
/// bisection.
pub fn q4_zeros_on_slice(
    slope: f64,
    offset: f64,
    lo: f64,
    hi: f64,
    samples: usize,
) -> Vec<SurfaceSample> {
    let beta_of = |alpha: f64| slope * alpha + offset;
    let mut out = Vec::new();
    for branch in 0..2 {
        let q4_at = |alpha: f64| -> Option<f64> {
            let beta = beta_of(alpha);
            let roots = b_roots(alpha, beta);
            roots.get(branch).map(|&b| SurfaceSample::at(b, alpha, beta).q4)
        };
        let h = (hi - lo) / samples as f64;
        for i in 0..samples {
            let (a0, a1) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
            let (Some(f0), Some(f1)) = (q4_at(a0), q4_at(a1)) else { continue };
            if f0 == 0.0 || f0.signum() == f1.signum() {
                continue;
            }
            let (mut x0, mut x1, mut g0) = (a0, a1, f0);
            for _ in 0..200 {
                let xm = 0.5 * (x0 + x1);
                let Some(gm) = q4_at(xm) else { break };
                if gm.signum() == g0.signum() {
                    x0 = xm;
                    g0 = gm;
                } else {
                    x1 = xm;
                }
                if x1 - x0 < 1e-13 * (1.0 + xm.abs()) {
                    break;
                }
            }
            let a = 0.5 * (x0 + x1);
            out.push(SurfaceSample::at(b_roots(a, beta_of(a))[branch], a, beta_of(a)));
        }
    }
    out.sort_by(|x, y| x.alpha.total_cmp(&y.alpha));
    out
}
