//! Structural properties of branches, spectra and trajectories of the full
//! model at the default resolution.

mod common;

use std::sync::OnceLock;

use esh_core::continuation::{detect_bifurcations, trace_rung, Branch, EventOptions, EventType, pattern_branch};
use esh_core::diagnostics::{interior_wavenumber, wavenumber_loop, wavenumber_segments, Slant};
use esh_core::evolve::{Scheme, Stepper};
use esh_core::linalg::singular_values;
use esh_core::model::{spatial_hamiltonian, Linearization};
use esh_core::stability::{compute_spectrum, count_unstable, eigen_residual, ModeParity, GOLDSTONE_TOL};
use esh_core::steady::{jacobian_even, newton_stationary, newton_tolerance, newton_travelling, travelling_residual};
use esh_core::Grid;

use common::{options, params, snake};

fn sh23() -> &'static Branch {
    static B: OnceLock<Branch> = OnceLock::new();
    B.get_or_init(|| snake(&Grid::default_domain(), 0.0, 0.0, false, Some(8)))
}

/// L0 at alpha = 0.5 with stability annotation, and its first rung.
fn drifting() -> &'static (Branch, Branch) {
    static B: OnceLock<(Branch, Branch)> = OnceLock::new();
    B.get_or_init(|| {
        let mut b = snake(&Grid::default_domain(), 0.5, 0.0, false, Some(3));
        detect_bifurcations(&mut b, &EventOptions::default()).unwrap();
        let pf = b.event_indices(EventType::Pitchfork)[0];
        let o = esh_core::continuation::ContinuationOptions { ds: 0.01, ds_max: 0.05, max_points: 400, ..options(None) };
        let rung = trace_rung(&b, pf, 0, &o).unwrap();
        (b, rung)
    })
}

fn check_converged(branch: &Branch) {
    for (i, pt) in branch.points.iter().enumerate() {
        let res = travelling_residual(&pt.state.u, pt.state.c, &branch.params.with_r(pt.r)).unwrap().max_abs();
        assert!(res < newton_tolerance(&pt.state.u), "{} point {i}: residual {res:e}", branch.label);
    }
}

#[test]
fn every_branch_point_is_a_steady_state() {
    check_converged(sh23());
    let (b, rung) = drifting();
    check_converged(b);
    check_converged(rung);
}

#[test]
fn norm_varies_continuously() {
    let bound = 10.0 * options(None).ds_max;
    for b in [sh23(), &drifting().1] {
        for w in b.points.windows(2) {
            assert!((w[1].norm - w[0].norm).abs() < bound, "{}: jump at r={}", b.label, w[1].r);
        }
    }
}

#[test]
fn refined_folds_have_singular_jacobians() {
    let b = sh23();
    for f in b.folds() {
        let lin = Linearization::new(&f.state.u, &b.params.with_r(f.r)).unwrap();
        let s = singular_values(&jacobian_even(&lin)).unwrap();
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(lo < 1e-6 * hi, "fold r={}: {lo:e} / {hi:e}", f.r);
    }
}

#[test]
fn folds_exchange_an_even_real_mode() {
    let b = sh23();
    for i in b.event_indices(EventType::Fold) {
        let count = |j: usize| {
            let q = &b.points[j];
            let s = compute_spectrum(&q.state, &b.params.with_r(q.r), 8).unwrap();
            count_unstable(&s, GOLDSTONE_TOL).m_r
        };
        if i + 1 < b.points.len() {
            assert_eq!(count(i - 1).abs_diff(count(i + 1)), 1, "fold at r={}", b.points[i].r);
        }
    }
}

#[test]
fn hamiltonian_is_uniform_in_x() {
    let b = sh23();
    for pt in b.points.iter().step_by(3) {
        let h = spatial_hamiltonian(&pt.state.u, &b.params.with_r(pt.r)).unwrap();
        let spread = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - h.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-6, "r={}: H spread {spread:e}", pt.r);
    }
}

#[test]
fn spectra_have_goldstone_mode_and_small_residuals() {
    let (b, rung) = drifting();
    for branch in [sh23(), b, rung] {
        for pt in branch.points.iter().step_by(7) {
            let p = branch.params.with_r(pt.r);
            let s = compute_spectrum(&pt.state, &p, 12).unwrap();
            let g: Vec<_> = s.pairs.iter().filter(|e| e.goldstone).collect();
            assert_eq!(g.len(), 1, "{} r={}", branch.label, pt.r);
            assert!(g[0].sigma.norm() < 1e-6);
            if pt.state.c == 0.0 {
                assert_eq!(g[0].parity, ModeParity::Odd);
            }
            for e in &s.pairs {
                let res = eigen_residual(&pt.state, &p, e).unwrap();
                assert!(res < 1e-8 * (1.0 + e.sigma.norm()), "residual {res:e} for {}", e.sigma);
            }
        }
    }
}

#[test]
fn up_right_segments_are_stable_without_extra_terms() {
    let b = sh23();
    let folds = b.event_indices(EventType::Fold);
    let segs = wavenumber_segments(b);
    let mut checked = 0;
    for (k, w) in folds.windows(2).enumerate() {
        // the initial small-amplitude segment and the fold neighbourhoods are excluded
        if k == 0 || segs[k].slant != Slant::UpRight || w[1] - w[0] < 6 {
            continue;
        }
        for j in [w[0] + 2, (w[0] + w[1]) / 2, w[1] - 2] {
            let q = &b.points[j];
            let s = compute_spectrum(&q.state, &b.params.with_r(q.r), 8).unwrap();
            assert_eq!(count_unstable(&s, GOLDSTONE_TOL).total(), 0, "segment {k}, r={}", q.r);
            checked += 1;
        }
    }
    assert!(checked >= 6);
}

#[test]
fn pitchforks_are_odd_crossings() {
    let b = &drifting().0;
    let pf = b.event_indices(EventType::Pitchfork);
    assert!(!pf.is_empty());
    for i in pf {
        let q = &b.points[i];
        let s = compute_spectrum(&q.state, &b.params.with_r(q.r), 12).unwrap();
        let crossing = s
            .pairs
            .iter()
            .filter(|e| !e.goldstone)
            .min_by(|a, c| a.sigma.norm().total_cmp(&c.sigma.norm()))
            .unwrap();
        assert!(crossing.sigma.norm() < 1e-5, "{}", crossing.sigma);
        assert_eq!(crossing.parity, ModeParity::Odd);
    }
}

#[test]
fn mirror_of_a_drifting_state_drifts_backwards_with_the_same_spectrum() {
    let rung = &drifting().1;
    let q = &rung.points[rung.points.len() / 2];
    assert!(q.state.c.abs() > 1e-3);
    let p = rung.params.with_r(q.r);
    let m = q.state.u.reflect();
    let mirror = newton_travelling(&m, -q.state.c, &m, &p).unwrap();
    assert!((mirror.c + q.state.c).abs() < 1e-8, "{} vs {}", mirror.c, q.state.c);
    assert!(mirror.u.axpby(1.0, &m, -1.0).unwrap().max_abs() < 1e-8);

    let sorted = |s: esh_core::stability::Spectrum| {
        let mut v: Vec<_> = s.pairs.iter().map(|e| e.sigma).collect();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    };
    let a = sorted(compute_spectrum(&q.state, &p, 10).unwrap());
    let b = sorted(compute_spectrum(&mirror, &p, 10).unwrap());
    // the leading set is closed under conjugation, so conjugate sets compare equal
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y.conj()).norm() < 1e-7 || (x - y).norm() < 1e-7, "{x} vs {y}");
    }
}

#[test]
fn rung_ends_stop_drifting() {
    let rung = &drifting().1;
    let (first, last) = (&rung.points[0], rung.points.last().unwrap());
    assert_eq!(first.state.c, 0.0);
    assert!(last.state.c.abs() < 1e-4, "{}", last.state.c);
}

#[test]
fn newton_converges_quadratically() {
    let grid = Grid::default_domain();
    let p = params(0.0, 0.0).with_r(-0.28);
    let guess = esh_core::Field::from_fn(grid, |x| 1.2 / (0.5 * x).cosh() * x.cos());
    let s = newton_stationary(&guess, &p, false).unwrap();
    let h = &s.residual_history;
    for w in h.windows(2) {
        if w[0] < 1e-3 && w[1] > 1e-12 {
            assert!(w[1] <= 1e3 * w[0] * w[0], "{h:?}");
        }
    }
    let again = newton_stationary(&s.u.reflect(), &p, false).unwrap();
    assert!(again.u.axpby(1.0, &s.u.reflect(), -1.0).unwrap().max_abs() < 1e-9);
}

#[test]
fn steady_states_are_fixed_points_of_the_stepper() {
    let b = sh23();
    let seg = common::one_peak_segment(b);
    let q = &b.points[(seg.start + seg.end) / 2];
    let p = b.params.with_r(q.r);
    let tol = newton_tolerance(&q.state.u);
    for scheme in [Scheme::Etdrk4, Scheme::Imex2] {
        let st = Stepper::new(q.state.u.grid(), &p, 0.1, scheme).unwrap();
        let mut u = q.state.u.clone();
        for _ in 0..100 {
            u = st.step(&u).unwrap();
        }
        let d = u.axpby(1.0, &q.state.u, -1.0).unwrap().max_abs();
        assert!(d < 10.0 * tol, "{scheme:?}: {d:e}");
    }
}

#[test]
fn localized_wavenumber_follows_the_pattern_family() {
    let b = sh23();
    let pat = pattern_branch(&b.params, (-0.5, -0.1), 2000).unwrap();
    // the large-amplitude half beyond the fold, monotone in r
    let fold_amp = pat.points.iter().find(|q| q.fold).unwrap().amplitude;
    let mut big: Vec<(f64, f64)> = pat.points.iter().filter(|q| q.amplitude > fold_amp).map(|q| (q.r, q.k)).collect();
    big.sort_by(|a, c| a.0.total_cmp(&c.0));
    let k_of = |r: f64| {
        let i = big.partition_point(|s| s.0 < r).clamp(1, big.len() - 1);
        let ((r0, k0), (r1, k1)) = (big[i - 1], big[i]);
        k0 + (k1 - k0) * (r - r0) / (r1 - r0)
    };
    let far = b.event_indices(EventType::Fold)[5];
    let mut n = 0;
    for q in &b.points[far..] {
        if let Some(k) = interior_wavenumber(&q.state.u) {
            assert!((k - k_of(q.r)).abs() < 1e-3, "r={}: {k} vs {}", q.r, k_of(q.r));
            n += 1;
        }
    }
    assert!(n > 10);
}

#[test]
fn loop_split_shrinks_towards_the_variational_line() {
    // beta = 0.2; the variational point is alpha = 0.1
    let splits: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = [0.5, 0.3, 0.15]
            .iter()
            .map(|&alpha| s.spawn(move || snake(&Grid::default_domain(), alpha, 0.2, false, Some(12))))
            .collect();
        handles.into_iter().map(|h| wavenumber_loop(&h.join().unwrap()).unwrap().max_split).collect()
    });
    assert!(splits[0] > splits[1] && splits[1] > splits[2], "{splits:?}");
}
