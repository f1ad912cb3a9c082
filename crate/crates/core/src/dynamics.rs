//! Planar two-link pendulum model of a maneuver.
//!
//! The hinge edge is the fixed origin. Each cube is a point mass `m` at the end
//! of a massless link of length `L`, at angle `θ` in the plane perpendicular to
//! the hinge. The origin cube starts at `θ2 = 0` and the traveler at
//! `θ1 = π/2`; the traveler moves toward increasing angle. Electromagnet
//! anchors sit on the cube corners at distance `anchor_radius` from the hinge:
//!
//! * launch pair: traveler at `θ1 - π/4`, origin at `θ2 + π/4`
//! * catch pair, pivot: traveler at `θ1 + π/4`, origin at `θ2 - π/4`
//! * catch pair, traversal: traveler at `θ1 + π/4`, destination at `θD - π/4`
//!   with `θD = θ2 + 3π/2`
//!
//! Pair forces act along the line joining the anchors. Each link obeys
//! `m L² θ̈ᵢ = Qᵢ` with `Qᵢ = Σ F_k · ∂r_k/∂θᵢ`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;

use nalgebra::Vector2;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::force::ForceCurve;
use crate::planner::{ManeuverKind, PhaseDurations, PhaseTimings};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynamicsError {
    #[error("invalid parameters: {reason}")]
    InvalidParams { reason: String },
    #[error("non-finite state at t = {t} s")]
    NanDetected { t: f64 },
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: &[(f64, f64)]) -> Option<Self> {
        if points.is_empty() || points.windows(2).any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater)) {
            return None;
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let mut slopes = vec![0.0; n];
        if n > 1 {
            let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])).collect();
            slopes[0] = delta[0];
            slopes[n - 1] = delta[n - 2];
            for i in 1..n - 1 {
                slopes[i] = if delta[i - 1] * delta[i] <= 0.0 {
                    0.0
                } else {
                    let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                    let (w1, w2) = (2.0 * h1 + h0, h1 + 2.0 * h0);
                    (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i])
                };
            }
        }
        Some(MonotoneCubic { xs, ys, slopes })
    }

    /// Value at `x`; clamped below the first knot, zero beyond the last.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x > self.xs[n - 1] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&k| k < x).max(1) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Signed pair force (positive repels) as a function of anchor gap.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ForceSource {
    Curve(MonotoneCubic),
    Constant(f64),
    #[default]
    Off,
}

impl ForceSource {
    pub fn from_curve(curve: &ForceCurve) -> Result<Self, DynamicsError> {
        MonotoneCubic::new(&curve.points)
            .map(ForceSource::Curve)
            .ok_or_else(|| DynamicsError::InvalidParams { reason: "force curve needs increasing separations".into() })
    }

    pub fn eval(&self, gap: f64) -> f64 {
        match self {
            ForceSource::Curve(c) => c.eval(gap),
            ForceSource::Constant(f) => *f,
            ForceSource::Off => 0.0,
        }
    }

    pub fn scaled(&self, k: f64) -> ForceSource {
        match self {
            ForceSource::Curve(c) => ForceSource::Curve(MonotoneCubic {
                ys: c.ys.iter().map(|y| y * k).collect(),
                slopes: c.slopes.iter().map(|s| s * k).collect(),
                xs: c.xs.clone(),
            }),
            ForceSource::Constant(f) => ForceSource::Constant(f * k),
            ForceSource::Off => ForceSource::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynParams {
    pub mass: f64,
    pub link_length: f64,
    /// Hinge-to-anchor distance (cube edge length).
    pub anchor_radius: f64,
    /// Added to every anchor distance before force lookup.
    pub structural_offset: f64,
    /// Launch pair force F.
    pub launch: ForceSource,
    /// Catch pair force G.
    pub catch: ForceSource,
    pub timings: PhaseTimings,
    /// Keep G on from t = 0 instead of only during the catch phase.
    pub catch_always_on: bool,
    pub step: f64,
    pub timeout: f64,
    /// Largest anchor approach speed (m/s) that still counts as a capture.
    pub capture_speed: f64,
}

impl Default for DynParams {
    fn default() -> Self {
        DynParams {
            mass: 0.1031,
            link_length: std::f64::consts::FRAC_1_SQRT_2 * 0.060,
            anchor_radius: 0.060,
            structural_offset: 0.5e-3,
            launch: ForceSource::Off,
            catch: ForceSource::Off,
            timings: PhaseTimings::default(),
            catch_always_on: false,
            step: 1e-3,
            timeout: 5.0,
            capture_speed: 0.5,
        }
    }
}

impl DynParams {
    /// F from the like-polarity curve and G = -F.
    pub fn with_curve(curve: &ForceCurve) -> Result<Self, DynamicsError> {
        let f = ForceSource::from_curve(curve)?;
        Ok(DynParams { catch: f.scaled(-1.0), launch: f, ..Default::default() })
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let checks = [
            ("mass", self.mass),
            ("link length", self.link_length),
            ("anchor radius", self.anchor_radius),
            ("step", self.step),
            ("timeout", self.timeout),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(DynamicsError::InvalidParams { reason: format!("{name} must be positive") });
            }
        }
        if self.structural_offset.is_nan() || self.structural_offset < 0.0 {
            return Err(DynamicsError::InvalidParams { reason: "structural offset must be non-negative".into() });
        }
        Ok(())
    }

    pub fn inertia(&self) -> f64 {
        self.mass * self.link_length * self.link_length
    }

    fn durations(&self, kind: ManeuverKind) -> &PhaseDurations {
        self.timings.for_kind(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynState {
    pub t: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Work done by pair forces since t = 0, integrated with the state.
    pub work: f64,
}

impl DynState {
    pub fn initial() -> Self {
        DynState { theta1: FRAC_PI_2, ..Default::default() }
    }

    pub fn relative_angle(&self) -> f64 {
        self.theta1 - self.theta2
    }

    fn is_finite(&self) -> bool {
        [self.t, self.theta1, self.theta2, self.omega1, self.omega2, self.work].iter().all(|v| v.is_finite())
    }
}

pub fn kinetic_energy(s: &DynState, p: &DynParams) -> f64 {
    0.5 * p.inertia() * (s.omega1 * s.omega1 + s.omega2 * s.omega2)
}

/// Angular momentum about the hinge.
pub fn angular_momentum(s: &DynState, p: &DynParams) -> f64 {
    p.inertia() * (s.omega1 + s.omega2)
}

fn polar(r: f64, angle: f64) -> Vector2<f64> {
    Vector2::new(r * angle.cos(), r * angle.sin())
}

/// Anchor angles of a pair, traveler first.
fn pair_angles(s: &DynState, kind: ManeuverKind, catch: bool) -> (f64, f64) {
    match (catch, kind) {
        (false, _) => (s.theta1 - FRAC_PI_4, s.theta2 + FRAC_PI_4),
        (true, ManeuverKind::Pivot) => (s.theta1 + FRAC_PI_4, s.theta2 - FRAC_PI_4),
        (true, ManeuverKind::Traversal) => (s.theta1 + FRAC_PI_4, s.theta2 + 1.5 * PI - FRAC_PI_4),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPositions {
    pub launch: [[f64; 2]; 2],
    pub catch: [[f64; 2]; 2],
}

/// Launch and catch anchor positions (traveler first) in the hinge plane.
pub fn em_anchor_positions(s: &DynState, p: &DynParams, kind: ManeuverKind) -> AnchorPositions {
    let pos = |catch| {
        let (a, b) = pair_angles(s, kind, catch);
        let (pa, pb) = (polar(p.anchor_radius, a), polar(p.anchor_radius, b));
        [[pa.x, pa.y], [pb.x, pb.y]]
    };
    AnchorPositions { launch: pos(false), catch: pos(true) }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct PairEval {
    gap: f64,
    force: f64,
    q1: f64,
    q2: f64,
}

fn pair_eval(s: &DynState, p: &DynParams, kind: ManeuverKind, catch: bool, source: &ForceSource) -> PairEval {
    let (a1, a2) = pair_angles(s, kind, catch);
    let r1 = polar(p.anchor_radius, a1);
    let r2 = polar(p.anchor_radius, a2);
    let sep = r1 - r2;
    let dist = sep.norm();
    let gap = dist + p.structural_offset;
    let force = source.eval(gap);
    if force == 0.0 {
        return PairEval { gap, ..Default::default() };
    }
    // Coincident anchors: push along the traveler anchor's direction of motion.
    let dir = if dist > 1e-12 { sep / dist } else { Vector2::new(-a1.sin(), a1.cos()) };
    let f1 = dir * force;
    let j1 = Vector2::new(-r1.y, r1.x);
    let j2 = Vector2::new(-r2.y, r2.x);
    let q1 = f1.dot(&j1);
    // The traversal partner is the fixed destination; only the pivot partner moves.
    let q2 = if catch && kind == ManeuverKind::Traversal { 0.0 } else { -f1.dot(&j2) };
    PairEval { gap, force, q1, q2 }
}

fn active(p: &DynParams, kind: ManeuverKind, t: f64) -> (bool, bool) {
    let d = p.durations(kind);
    let launch_end = d.launch_ms as f64 * 1e-3;
    let catch_start = (d.launch_ms + d.travel_ms) as f64 * 1e-3;
    let end = d.total_ms() as f64 * 1e-3;
    let launch = t < launch_end;
    let catch = p.catch_always_on || (t >= catch_start && t < end);
    (launch, catch)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Forces {
    pub launch_gap: f64,
    pub catch_gap: f64,
    pub launch_force: f64,
    pub catch_force: f64,
    pub q1: f64,
    pub q2: f64,
}

/// Active pair forces and generalized forces at a state.
pub fn forces(s: &DynState, p: &DynParams, kind: ManeuverKind) -> Forces {
    let (on_launch, on_catch) = active(p, kind, s.t);
    let off = ForceSource::Off;
    let l = pair_eval(s, p, kind, false, if on_launch { &p.launch } else { &off });
    let c = pair_eval(s, p, kind, true, if on_catch { &p.catch } else { &off });
    let mut q2 = l.q2 + c.q2;
    if kind == ManeuverKind::Traversal {
        q2 = 0.0;
    }
    Forces {
        launch_gap: l.gap,
        catch_gap: c.gap,
        launch_force: l.force,
        catch_force: c.force,
        q1: l.q1 + c.q1,
        q2,
    }
}

fn derivative(s: &DynState, p: &DynParams, kind: ManeuverKind) -> [f64; 5] {
    let f = forces(s, p, kind);
    let i = p.inertia();
    [s.omega1, s.omega2, f.q1 / i, f.q2 / i, f.q1 * s.omega1 + f.q2 * s.omega2]
}

fn offset(s: &DynState, k: &[f64; 5], h: f64) -> DynState {
    DynState {
        t: s.t + h,
        theta1: s.theta1 + h * k[0],
        theta2: s.theta2 + h * k[1],
        omega1: s.omega1 + h * k[2],
        omega2: s.omega2 + h * k[3],
        work: s.work + h * k[4],
    }
}

/// One fourth-order Runge-Kutta step of length `params.step`.
pub fn step(s: &DynState, p: &DynParams, kind: ManeuverKind) -> Result<DynState, DynamicsError> {
    let h = p.step;
    let k1 = derivative(s, p, kind);
    let k2 = derivative(&offset(s, &k1, 0.5 * h), p, kind);
    let k3 = derivative(&offset(s, &k2, 0.5 * h), p, kind);
    let k4 = derivative(&offset(s, &k3, h), p, kind);
    let mix: [f64; 5] = std::array::from_fn(|j| (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) / 6.0);
    let mut next = offset(s, &mix, h);
    next.t = s.t + h;
    if !next.is_finite() {
        return Err(DynamicsError::NanDetected { t: next.t });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynSample {
    pub state: DynState,
    pub forces: Forces,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverOutcome {
    pub kind: ManeuverKind,
    pub trajectory: Vec<DynSample>,
    /// Time the relative angle reached its target, or the time simulated.
    pub duration: f64,
    pub completed: bool,
    /// Catch anchors met slower than `capture_speed`.
    pub captured: bool,
    pub approach_speed: f64,
}

pub fn target_relative_angle(kind: ManeuverKind) -> f64 {
    FRAC_PI_2 + kind.quarter_turns() as f64 * FRAC_PI_2
}

/// Integrate until the relative angle reaches the target or `timeout` elapses.
/// On arrival the traveler stops inelastically.
pub fn simulate_maneuver(kind: ManeuverKind, p: &DynParams) -> Result<ManeuverOutcome, DynamicsError> {
    p.validate()?;
    let target = target_relative_angle(kind);
    let mut s = DynState::initial();
    let mut trajectory = vec![DynSample { state: s, forces: forces(&s, p, kind) }];
    let steps = (p.timeout / p.step).ceil() as usize;
    for _ in 0..steps {
        let next = step(&s, p, kind)?;
        let (r0, r1) = (s.relative_angle(), next.relative_angle());
        if r1 >= target && r1 > r0 {
            let frac = (target - r0) / (r1 - r0);
            let t = s.t + frac * p.step;
            let w_rel = (s.omega1 - s.omega2) + frac * ((next.omega1 - next.omega2) - (s.omega1 - s.omega2));
            let approach_speed = w_rel.abs() * p.anchor_radius;
            // Split the overshoot back so the hinge frame keeps its momentum share.
            let back = r1 - target;
            let share = if kind == ManeuverKind::Traversal { 1.0 } else { 0.5 };
            let stop = DynState {
                t,
                theta1: next.theta1 - back * share,
                theta2: next.theta2 + back * (1.0 - share),
                omega1: 0.0,
                omega2: 0.0,
                work: next.work,
            };
            trajectory.push(DynSample { state: stop, forces: forces(&stop, p, kind) });
            return Ok(ManeuverOutcome {
                kind,
                trajectory,
                duration: t,
                completed: true,
                captured: approach_speed <= p.capture_speed,
                approach_speed,
            });
        }
        s = next;
        trajectory.push(DynSample { state: s, forces: forces(&s, p, kind) });
    }
    Ok(ManeuverOutcome { kind, trajectory, duration: s.t, completed: false, captured: false, approach_speed: 0.0 })
}

/// Independent simulations, in parallel when the feature is enabled.
pub fn simulate_batch(kind: ManeuverKind, params: &[DynParams]) -> Vec<Result<ManeuverOutcome, DynamicsError>> {
    #[cfg(feature = "parallel")]
    {
        params.par_iter().map(|p| simulate_maneuver(kind, p)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        params.iter().map(|p| simulate_maneuver(kind, p)).collect()
    }
}

pub fn trajectory_csv(samples: &[DynSample]) -> String {
    let mut out = String::from("t_s,theta1_rad,theta2_rad,omega1_rad_s,omega2_rad_s,launch_gap_m,catch_gap_m,launch_force_n,catch_force_n\n");
    for d in samples {
        let (s, f) = (d.state, d.forces);
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.6e},{:.6e},{:.6e},{:.6e}",
            s.t, s.theta1, s.theta2, s.omega1, s.omega2, f.launch_gap, f.catch_gap, f.launch_force, f.catch_force
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free(omega1: f64) -> (DynState, DynParams) {
        (DynState { omega1, ..DynState::initial() }, DynParams::default())
    }

    #[test]
    fn equilibrium_without_forces() {
        let (s, p) = free(0.0);
        let n = step(&s, &p, ManeuverKind::Pivot).unwrap();
        assert_eq!((n.theta1, n.theta2, n.omega1, n.omega2), (s.theta1, s.theta2, 0.0, 0.0));
    }

    #[test]
    fn free_rotation_is_linear() {
        let (mut s, p) = free(1.0);
        let e0 = kinetic_energy(&s, &p);
        for _ in 0..10_000 {
            s = step(&s, &p, ManeuverKind::Pivot).unwrap();
        }
        assert!((s.theta1 - (FRAC_PI_2 + 10.0)).abs() < 1e-9);
        assert!((kinetic_energy(&s, &p) - e0).abs() / e0 < 1e-12);
    }

    #[test]
    fn launch_anchors_coincide_at_start_and_catch_at_end() {
        let p = DynParams::default();
        let a = em_anchor_positions(&DynState::initial(), &p, ManeuverKind::Pivot);
        let d = |x: [[f64; 2]; 2]| (x[0][0] - x[1][0]).hypot(x[0][1] - x[1][1]);
        assert!(d(a.launch) < 1e-15);
        let end = DynState { theta1: 1.5 * PI, ..DynState::initial() };
        assert!(d(em_anchor_positions(&end, &p, ManeuverKind::Pivot).catch) < 1e-15);
        let end = DynState { theta1: PI, ..DynState::initial() };
        assert!(d(em_anchor_positions(&end, &p, ManeuverKind::Traversal).catch) < 1e-15);
    }

    #[test]
    fn launch_torques_equal_and_opposite() {
        let p = DynParams { launch: ForceSource::Constant(0.3), ..Default::default() };
        for s in [DynState::initial(), DynState { theta1: 1.9, theta2: -0.2, ..Default::default() }] {
            let f = forces(&s, &p, ManeuverKind::Pivot);
            assert!(f.q1 > 0.0);
            assert!((f.q1 + f.q2).abs() < 1e-15 * f.q1.abs().max(1.0));
        }
    }

    #[test]
    fn zero_force_times_out() {
        let p = DynParams { timeout: 0.5, ..Default::default() };
        let o = simulate_maneuver(ManeuverKind::Pivot, &p).unwrap();
        assert!(!o.completed && !o.captured);
        assert!((o.duration - 0.5).abs() < 1e-9);
    }

    #[test]
    fn monotone_cubic_preserves_shape() {
        let pts = [(1.0, 10.0), (2.0, 4.0), (3.0, 3.9), (4.0, 1.0)];
        let c = MonotoneCubic::new(&pts).unwrap();
        for &(x, y) in &pts {
            assert!((c.eval(x) - y).abs() < 1e-12);
        }
        let mut prev = f64::INFINITY;
        for k in 0..=300 {
            let v = c.eval(1.0 + k as f64 * 0.01);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        assert_eq!(c.eval(4.5), 0.0);
        assert_eq!(c.eval(0.5), 10.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = DynParams { step: 0.0, ..Default::default() };
        assert!(simulate_maneuver(ManeuverKind::Pivot, &p).is_err());
    }
}
