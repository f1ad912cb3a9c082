use std::f64::consts::PI;

use nalgebra::Vector3;
use voxmag_core::dynamics::{
    angular_momentum, em_anchor_positions, kinetic_energy, simulate_maneuver, DynParams, DynState, ForceSource,
};
use voxmag_core::force::{
    discretize, force_current_sweep, force_distance_sweep_with, pair_force_with, CoilSpec, ForceCurve,
    KernelOptions, PermeabilityModel, SweepOptions,
};
use voxmag_core::planner::ManeuverKind;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn currents() -> Vec<f64> {
    (0..=24).map(|k| k as f64 / 20.0).collect()
}

#[test]
fn force_is_bilinear_in_currents() {
    let spec = CoilSpec::default();
    let c1 = discretize(&spec, 1200).unwrap();
    let c2 = c1.translated(Vector3::new(2.0 * spec.outer_radius() + 2e-3, 0.0, 0.0));
    let opts = KernelOptions::default();
    let unit = pair_force_with(&c1.with_current(1.0), &c2.with_current(1.0), 874.0, opts).unwrap();
    for i1 in [0.3, 0.7, 1.2] {
        for i2 in [0.3, 0.7, 1.2] {
            let f = pair_force_with(&c1.with_current(i1), &c2.with_current(i2), 874.0, opts).unwrap();
            let expect = unit * (i1 * i2);
            assert!((f - expect).norm() <= 1e-12 * expect.norm(), "{i1} {i2}");
        }
    }
}

#[test]
fn constant_permeability_gives_square_law() {
    let spec = CoilSpec::default();
    let opts = SweepOptions { elements: 1200, ..Default::default() };
    let curve =
        force_current_sweep(&spec, &spec, &PermeabilityModel::constant(874.0), &[0.5, 1.0], 0.5e-3, opts).unwrap();
    assert_eq!(curve.points[1].force / curve.points[0].force, 4.0);
}

#[test]
fn default_model_uses_874_at_full_current() {
    let spec = CoilSpec::default();
    let opts = SweepOptions { elements: 1200, ..Default::default() };
    let curve = force_current_sweep(&spec, &spec, &PermeabilityModel::default(), &currents(), 0.5e-3, opts).unwrap();
    let last = curve.points.last().unwrap();
    assert_eq!(last.current, 1.2);
    assert_eq!(last.mu_r, 874.0);

    let fixed = force_current_sweep(&spec, &spec, &PermeabilityModel::constant(874.0), &[1.2], 0.5e-3, opts).unwrap();
    assert_eq!(last.force, fixed.points[0].force);
}

#[test]
fn force_per_square_current_falls_with_saturation() {
    let spec = CoilSpec::default();
    let opts = SweepOptions { elements: 1200, ..Default::default() };
    let curve = force_current_sweep(&spec, &spec, &PermeabilityModel::default(), &currents(), 0.5e-3, opts).unwrap();
    let p = &curve.points;
    for w in p[1..].windows(2) {
        let (a, b) = (w[0].force / w[0].current.powi(2), w[1].force / w[1].current.powi(2));
        assert!(b.abs() <= a.abs() * (1.0 + 1e-12), "F/I^2 grew between {} and {} A", w[0].current, w[1].current);
    }
    // F = c mu(I) I^2 with mu linear in I has an inflection at 2 mu0 / (3 |mu'|),
    // about 0.71 A for the default table. Below it no scalar mu can make F concave.
    // Index k of `second` is the curvature at p[k + 1].
    let second: Vec<f64> =
        p.windows(3).map(|w| w[2].force.abs() - 2.0 * w[1].force.abs() + w[0].force.abs()).collect();
    for (w, c) in p[1..].iter().zip(&second).skip(15) {
        assert!(*c < 0.0, "not concave at {} A", w.current);
    }
    for (w, c) in p[1..].iter().zip(&second).take(12) {
        assert!(*c > 0.0, "unexpected curvature at {} A", w.current);
    }
}

fn like_curve() -> ForceCurve {
    let spec = CoilSpec::default();
    let opts = SweepOptions { elements: 2000, ..Default::default() };
    let seps = ForceCurve::default_separations();
    let anti = CoilSpec { current: -spec.current, ..spec };
    force_distance_sweep_with(&spec, &anti, &PermeabilityModel::default(), &seps, opts).unwrap().scaled(-1.0)
}

#[test]
fn stronger_coils_finish_sooner() {
    let base = DynParams::with_curve(&like_curve()).unwrap();
    let mut last = f64::INFINITY;
    for k in [1.0, 2.0, 4.0, 8.0] {
        let p = DynParams { launch: base.launch.scaled(k), catch: base.catch.scaled(k), ..base.clone() };
        let out = simulate_maneuver(ManeuverKind::Pivot, &p).unwrap();
        assert!(out.completed, "scale {k} did not complete");
        assert!(out.duration < last, "scale {k}: {} s not below {last} s", out.duration);
        last = out.duration;
    }
}

#[test]
fn work_matches_kinetic_energy_under_constant_force() {
    for f in [0.05, 0.3, 1.0] {
        let p = DynParams { launch: ForceSource::Constant(f), catch: ForceSource::Constant(-f), ..Default::default() };
        for kind in [ManeuverKind::Pivot, ManeuverKind::Traversal] {
            let out = simulate_maneuver(kind, &p).unwrap();
            let n = if out.completed { out.trajectory.len() - 1 } else { out.trajectory.len() };
            for sample in &out.trajectory[1..n] {
                let s = sample.state;
                let gap = (kinetic_energy(&s, &p) - s.work).abs() / s.work.abs().max(1e-12);
                assert!(gap < 1e-3, "{kind:?} f={f} t={}: gap {gap:e}", s.t);
            }
        }
    }
}

#[test]
fn symmetric_pivot_keeps_zero_angular_momentum() {
    let p = DynParams { launch: ForceSource::Constant(0.4), catch: ForceSource::Constant(-0.4), ..Default::default() };
    let out = simulate_maneuver(ManeuverKind::Pivot, &p).unwrap();
    assert!(out.completed);
    let body = &out.trajectory[..out.trajectory.len() - 1];
    let scale = body.iter().map(|s| p.inertia() * s.state.omega1.abs()).fold(0.0, f64::max);
    for s in body {
        let l = angular_momentum(&s.state, &p);
        assert!(l.abs() <= 1e-9 * scale, "t={}: L={l:e}", s.state.t);
    }
}

#[test]
fn anchor_distances_survive_rigid_rotation() {
    let p = DynParams::default();
    for kind in [ManeuverKind::Pivot, ManeuverKind::Traversal] {
        for (t1, t2) in [(PI / 2.0, 0.0), (2.1, -0.3), (3.0, 0.4)] {
            let s = DynState { theta1: t1, theta2: t2, ..DynState::initial() };
            let a = em_anchor_positions(&s, &p, kind);
            for delta in [0.1, -1.7, PI] {
                let r = DynState { theta1: t1 + delta, theta2: t2 + delta, ..s };
                let b = em_anchor_positions(&r, &p, kind);
                let (d0, d1) = (dist(a.launch[0], a.launch[1]), dist(b.launch[0], b.launch[1]));
                assert!((d0 - d1).abs() < 1e-15, "{kind:?} launch");
                if kind == ManeuverKind::Pivot {
                    let (d0, d1) = (dist(a.catch[0], a.catch[1]), dist(b.catch[0], b.catch[1]));
                    assert!((d0 - d1).abs() < 1e-15, "{kind:?} catch");
                }
            }
        }
    }
}
