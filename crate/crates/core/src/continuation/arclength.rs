//! Keller pseudo-arclength continuation for `F(x, r) = 0`, `F: R^d x R -> R^d`.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{self, Lu};

/// A square system with one continuation parameter.
pub(crate) trait Problem {
    fn dim(&self) -> usize;
    /// Weights of the inner product on `x`; the parameter has weight 1.
    fn weights(&self) -> &[f64];
    fn residual(&self, x: &[f64], r: f64) -> Result<Vec<f64>>;
    /// `(F_x, F_r)`.
    fn jacobian(&self, x: &[f64], r: f64) -> Result<(Mat<f64>, Vec<f64>)>;
    fn tolerance(&self, x: &[f64]) -> f64;
    /// Called for every accepted point (e.g. to move a phase reference).
    fn accept(&mut self, _x: &[f64]) {}
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Point {
    pub x: Vec<f64>,
    pub r: f64,
}

impl Point {
    pub fn dot<P: Problem + ?Sized>(&self, other: &Point, prob: &P) -> f64 {
        let w = prob.weights();
        self.x.iter().zip(&other.x).zip(w).map(|((a, b), w)| w * a * b).sum::<f64>() + self.r * other.r
    }

    pub fn norm<P: Problem + ?Sized>(&self, prob: &P) -> f64 {
        self.dot(self, prob).sqrt()
    }

    pub fn axpy(&self, a: f64, other: &Point) -> Point {
        Point { x: self.x.iter().zip(&other.x).map(|(s, o)| s + a * o).collect(), r: self.r + a * other.r }
    }

    pub fn scaled(&self, a: f64) -> Point {
        Point { x: self.x.iter().map(|v| a * v).collect(), r: a * self.r }
    }

    pub fn normalized<P: Problem + ?Sized>(&self, prob: &P) -> Point {
        self.scaled(1.0 / self.norm(prob))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn bordered(jx: &Mat<f64>, jr: &[f64], row: &Point, w: &[f64]) -> Mat<f64> {
    let d = jx.nrows();
    Mat::from_fn(d + 1, d + 1, |i, j| match (i < d, j < d) {
        (true, true) => jx[(i, j)],
        (true, false) => jr[i],
        (false, true) => w[j] * row.x[j],
        (false, false) => row.r,
    })
}

/// Newton on `F = 0`, `<X - pred, dir> = 0`. Returns the point and the
/// number of iterations.
pub(crate) fn correct<P: Problem + ?Sized>(
    prob: &P,
    pred: &Point,
    dir: &Point,
    max_iter: usize,
) -> Result<(Point, usize)> {
    let d = prob.dim();
    let w = prob.weights().to_vec();
    let mut p = pred.clone();
    let mut first = f64::NAN;
    for it in 0..=max_iter {
        let f = prob.residual(&p.x, p.r)?;
        let res = max_abs(&f);
        if !res.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        if it == 0 {
            first = res;
        } else if res > 1e3 * first.max(1e-8) {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let g = p.axpy(-1.0, pred).dot(dir, prob);
        if res < prob.tolerance(&p.x) && g.abs() < 1e-9 {
            return Ok((p, it));
        }
        if it == max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        let (jx, jr) = prob.jacobian(&p.x, p.r)?;
        let a = bordered(&jx, &jr, dir, &w);
        let mut b: Vec<f64> = f.iter().map(|v| -v).collect();
        b.push(-g);
        let dx = Lu::new(&a)?.solve(&b);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        p = p.axpy(1.0, &Point { x: dx[..d].to_vec(), r: dx[d] });
    }
    unreachable!()
}

/// Unit tangent at `at`, oriented to have positive overlap with `orient`.
pub(crate) fn tangent<P: Problem + ?Sized>(prob: &P, at: &Point, orient: &Point) -> Result<Point> {
    let d = prob.dim();
    let (jx, jr) = prob.jacobian(&at.x, at.r)?;
    let w = prob.weights().to_vec();
    let a = bordered(&jx, &jr, orient, &w);
    let mut b = vec![0.0; d + 1];
    b[d] = 1.0;
    let z = match Lu::new(&a) {
        Ok(lu) => lu.solve(&b),
        Err(_) => return null_tangent(prob, at, orient),
    };
    let t = Point { x: z[..d].to_vec(), r: z[d] }.normalized(prob);
    Ok(if t.dot(orient, prob) < 0.0 { t.scaled(-1.0) } else { t })
}

/// Tangent from the null vector of `[F_x F_r]` (no orientation reference needed).
pub(crate) fn null_tangent<P: Problem + ?Sized>(prob: &P, at: &Point, orient: &Point) -> Result<Point> {
    let d = prob.dim();
    let (jx, jr) = prob.jacobian(&at.x, at.r)?;
    // scale columns so the SVD works in the weighted geometry
    let w: Vec<f64> = prob.weights().iter().map(|w| w.sqrt()).collect();
    let a = Mat::from_fn(d, d + 1, |i, j| if j < d { jx[(i, j)] / w[j] } else { jr[i] });
    let (v, _) = linalg::null_vector(&a)?;
    let t = Point { x: (0..d).map(|j| v[j] / w[j]).collect(), r: v[d] }.normalized(prob);
    Ok(if t.dot(orient, prob) < 0.0 { t.scaled(-1.0) } else { t })
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct StepControl {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_corrector: usize,
}

/// One accepted step: secant predictor, bordered corrector, halving on failure.
/// Returns the new point and the corrector iteration count.
pub(crate) fn step<P: Problem + ?Sized>(
    prob: &P,
    prev: &Point,
    dir: &Point,
    ctl: &mut StepControl,
) -> Result<(Point, usize)> {
    loop {
        let pred = prev.axpy(ctl.ds, dir);
        let outcome = correct(prob, &pred, dir, ctl.max_corrector).and_then(|(p, it)| {
            // reject steps that jump: the new secant must stay close to the old one
            let sec = p.axpy(-1.0, prev);
            let len = sec.norm(prob);
            if len > 2.0 * ctl.ds || sec.dot(dir, prob) < 0.5 * len {
                Err(Error::NoConvergence { iterations: it, residual: f64::NAN })
            } else {
                Ok((p, it))
            }
        });
        match outcome {
            Ok((p, it)) => {
                if it <= 3 {
                    ctl.ds = (ctl.ds * 1.5).min(ctl.ds_max);
                } else if it >= 6 {
                    ctl.ds = (ctl.ds * 0.7).max(ctl.ds_min);
                }
                return Ok((p, it));
            }
            Err(e) => {
                if ctl.ds <= ctl.ds_min * (1.0 + 1e-12) {
                    return Err(e);
                }
                ctl.ds = (ctl.ds * 0.5).max(ctl.ds_min);
            }
        }
    }
}

/// Bisects a sign change of `key` between the solutions `a` and `b`.
/// Intermediate points come from the corrector on hyperplanes normal to the
/// secant `b - a`. Stops once the bracket is shorter than `r_tol` in `r`
/// (and small in state space), or once `|key| < key_tol` at an end.
pub(crate) fn bisect<P, K>(
    prob: &P,
    a: &Point,
    b: &Point,
    key: K,
    r_tol: f64,
    key_tol: f64,
    max_corrector: usize,
) -> Result<Point>
where
    P: Problem + ?Sized,
    K: Fn(&P, &Point) -> Result<f64>,
{
    let mut a = a.clone();
    let mut b = b.clone();
    let mut ka = key(prob, &a)?;
    let mut kb = key(prob, &b)?;
    if ka.abs() <= key_tol {
        return Ok(a);
    }
    if kb.abs() <= key_tol {
        return Ok(b);
    }
    if (ka > 0.0) == (kb > 0.0) {
        return Err(Error::NoRoot("no sign change in bracket".into()));
    }
    for _ in 0..60 {
        if (a.r - b.r).abs() < r_tol && a.axpy(-1.0, &b).norm(prob) < 1e3 * r_tol.max(1e-9) {
            break;
        }
        let sec = b.axpy(-1.0, &a);
        if sec.norm(prob) < 1e-12 {
            break;
        }
        let dir = sec.normalized(prob);
        let pred = a.axpy(0.5, &sec);
        let (m, _) = correct(prob, &pred, &dir, max_corrector)?;
        let km = key(prob, &m)?;
        if km.abs() <= key_tol {
            return Ok(m);
        }
        if (km > 0.0) == (ka > 0.0) {
            a = m;
            ka = km;
        } else {
            b = m;
            kb = km;
        }
    }
    // the end closer to the root in key value
    Ok(if ka.abs() <= kb.abs() { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Circle `x^2 + r^2 = 1`, with folds at `r = +-1`.
    struct Circle(Vec<f64>);

    impl Problem for Circle {
        fn dim(&self) -> usize {
            1
        }
        fn weights(&self) -> &[f64] {
            &self.0
        }
        fn residual(&self, x: &[f64], r: f64) -> Result<Vec<f64>> {
            Ok(vec![x[0] * x[0] + r * r - 1.0])
        }
        fn jacobian(&self, x: &[f64], r: f64) -> Result<(Mat<f64>, Vec<f64>)> {
            Ok((Mat::from_fn(1, 1, |_, _| 2.0 * x[0]), vec![2.0 * r]))
        }
        fn tolerance(&self, _x: &[f64]) -> f64 {
            1e-13
        }
    }

    #[test]
    fn walks_around_a_circle_and_finds_folds() {
        let prob = Circle(vec![1.0]);
        let mut p = Point { x: vec![1.0], r: 0.0 };
        let mut t = null_tangent(&prob, &p, &Point { x: vec![0.0], r: 1.0 }).unwrap();
        assert!((t.r - 1.0).abs() < 1e-12);
        let mut ctl = StepControl { ds: 0.05, ds_min: 1e-4, ds_max: 0.2, max_corrector: 10 };
        let mut folds = Vec::new();
        for _ in 0..40 {
            let (q, _) = step(&prob, &p, &t, &mut ctl).unwrap();
            let sec = q.axpy(-1.0, &p).normalized(&prob);
            // r-component of the tangent oriented along the step
            let key = |pr: &Circle, pt: &Point| -> Result<f64> { Ok(tangent(pr, pt, &sec)?.r) };
            if (key(&prob, &p).unwrap() > 0.0) != (key(&prob, &q).unwrap() > 0.0) {
                folds.push(bisect(&prob, &p, &q, key, 1e-12, 0.0, 10).unwrap());
            }
            assert!((q.x[0] * q.x[0] + q.r * q.r - 1.0).abs() < 1e-12);
            p = q;
            t = sec;
        }
        assert!(!folds.is_empty());
        assert!((folds[0].r - 1.0).abs() < 1e-9 && folds[0].x[0].abs() < 1e-4);
    }
}
