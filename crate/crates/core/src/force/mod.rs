//! Coil geometry and inter-coil forces from the discretized Ampère force law.

mod kernel;
mod sweep;

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{
    geometric_sum, pair_force, pair_force_with, Execution, ForceLaw, KernelOptions,
    MIN_ELEMENT_SEPARATION,
};
pub use sweep::{
    force_current_sweep, force_distance_sweep, force_distance_sweep_with, CurveMetadata,
    CurrentCurve, ForceCurve, SweepOptions,
};

/// μ0 / 4π in SI units.
pub const MU0_OVER_4PI: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForceError {
    #[error("geometry infeasible: {reason}")]
    GeometryInfeasible { reason: String },
    #[error("coils overlap: element pair {separation:.3e} m apart (minimum {minimum:.0e} m)")]
    CoilsOverlapping { separation: f64, minimum: f64 },
    #[error("invalid sweep input: {reason}")]
    InvalidInput { reason: String },
    #[error("malformed curve file, line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn infeasible(reason: impl Into<String>) -> ForceError {
    ForceError::GeometryInfeasible { reason: reason.into() }
}

/// Parametric solenoid. Layer `k` winds at radius `core_radius + k * wire_diameter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub core_radius: f64,
    pub winding_length: f64,
    pub turns: u32,
    /// Axial advance per turn.
    pub pitch: f64,
    pub layers: u32,
    pub wire_diameter: f64,
    pub current: f64,
}

impl Default for CoilSpec {
    fn default() -> Self {
        let wire_diameter = 0.160e-3;
        let winding_length = 55.5e-3;
        let turns = 800;
        CoilSpec {
            core_radius: 1.625e-3,
            winding_length,
            turns,
            pitch: wire_diameter,
            layers: layers_needed(turns, wire_diameter, winding_length),
            wire_diameter,
            current: 1.2,
        }
    }
}

/// Layers needed to fit `turns` of close-wound wire on `length`.
pub fn layers_needed(turns: u32, wire_diameter: f64, length: f64) -> u32 {
    ((turns as f64 * wire_diameter / length) - 1e-12).ceil().max(1.0) as u32
}

impl CoilSpec {
    /// One flat turn of radius `radius`.
    pub fn single_loop(radius: f64, current: f64) -> Self {
        CoilSpec {
            core_radius: radius,
            winding_length: 0.160e-3,
            turns: 1,
            pitch: 0.0,
            layers: 1,
            wire_diameter: 0.160e-3,
            current,
        }
    }

    pub fn with_current(mut self, current: f64) -> Self {
        self.current = current;
        self
    }

    fn turns_per_layer_capacity(&self) -> u32 {
        if self.pitch == 0.0 {
            self.turns
        } else {
            ((self.winding_length / self.pitch) + 1e-9).floor() as u32
        }
    }

    /// Turns on each layer; layers fill in order at the given pitch.
    pub fn layer_turns(&self) -> Vec<u32> {
        let cap = self.turns_per_layer_capacity().max(1);
        let mut left = self.turns;
        let mut out = Vec::new();
        for _ in 0..self.layers {
            let n = left.min(cap);
            if n == 0 {
                break;
            }
            out.push(n);
            left -= n;
        }
        out
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        let dims = [
            ("core radius", self.core_radius),
            ("winding length", self.winding_length),
            ("wire diameter", self.wire_diameter),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(infeasible(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pitch.is_finite() && self.pitch >= 0.0) {
            return Err(infeasible(format!("pitch must be non-negative, got {}", self.pitch)));
        }
        if !self.current.is_finite() {
            return Err(infeasible("current must be finite"));
        }
        if self.turns == 0 || self.layers == 0 {
            return Err(infeasible("turns and layers must be at least 1"));
        }
        let cap = self.turns_per_layer_capacity();
        if cap == 0 {
            return Err(infeasible("pitch exceeds winding length"));
        }
        if (cap as u64) * (self.layers as u64) < self.turns as u64 {
            return Err(infeasible(format!(
                "{} turns do not fit in {} layers of {} turns at pitch {}",
                self.turns, self.layers, cap, self.pitch
            )));
        }
        Ok(())
    }

    /// Radius of the outer surface of the outermost occupied layer.
    pub fn outer_radius(&self) -> f64 {
        let used = self.layer_turns().len().max(1) as f64;
        self.core_radius + (used - 1.0) * self.wire_diameter + 0.5 * self.wire_diameter
    }

    /// Arc length of each layer's helix.
    pub fn layer_lengths(&self) -> Vec<f64> {
        self.layer_turns()
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let r = self.core_radius + k as f64 * self.wire_diameter;
                n as f64 * (2.0 * PI * r).hypot(self.pitch)
            })
            .collect()
    }

    /// Analytic wire length of the multi-layer helix.
    pub fn wire_length(&self) -> f64 {
        self.layer_lengths().iter().sum()
    }
}

/// Coil sampled into straight current elements, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedCoil {
    pub(crate) x: Vec<f64>,
    pub(crate) y: Vec<f64>,
    pub(crate) z: Vec<f64>,
    pub(crate) dx: Vec<f64>,
    pub(crate) dy: Vec<f64>,
    pub(crate) dz: Vec<f64>,
    pub current: f64,
}

/// Sample `spec` into `elements` equal arc-length elements. The coil axis is +z,
/// centered on the origin, with current circulating counterclockwise about +z
/// for positive current.
pub fn discretize(spec: &CoilSpec, elements: usize) -> Result<DiscretizedCoil, ForceError> {
    spec.validate()?;
    if elements < spec.turns as usize {
        return Err(infeasible(format!(
            "{elements} elements is fewer than {} turns",
            spec.turns
        )));
    }
    let turns = spec.layer_turns();
    let lengths = spec.layer_lengths();
    let total: f64 = lengths.iter().sum();
    let ds = total / elements as f64;

    // Per-layer start angle, start z and advance direction; the wire is continuous.
    let mut layers = Vec::with_capacity(turns.len());
    let (mut phi0, mut z0) = (0.0, -0.5 * spec.winding_length);
    let mut start_s = 0.0;
    for (k, (&n, &len)) in turns.iter().zip(&lengths).enumerate() {
        let dir = if k % 2 == 0 { 1.0 } else { -1.0 };
        let r = spec.core_radius + k as f64 * spec.wire_diameter;
        layers.push((start_s, len, r, n as f64, phi0, z0, dir));
        start_s += len;
        phi0 += 2.0 * PI * n as f64;
        z0 += dir * n as f64 * spec.pitch;
    }

    let mut coil = DiscretizedCoil {
        x: Vec::with_capacity(elements),
        y: Vec::with_capacity(elements),
        z: Vec::with_capacity(elements),
        dx: Vec::with_capacity(elements),
        dy: Vec::with_capacity(elements),
        dz: Vec::with_capacity(elements),
        current: spec.current,
    };
    let mut layer = 0;
    for i in 0..elements {
        let s = (i as f64 + 0.5) * ds;
        while layer + 1 < layers.len() && s >= layers[layer + 1].0 {
            layer += 1;
        }
        let (s0, len, r, n, phi_start, z_start, dir) = layers[layer];
        let f = ((s - s0) / len).clamp(0.0, 1.0);
        let phi = phi_start + 2.0 * PI * n * f;
        let (sin, cos) = phi.sin_cos();
        coil.x.push(r * cos);
        coil.y.push(r * sin);
        coil.z.push(z_start + dir * n * spec.pitch * f);
        let t = Vector3::new(-2.0 * PI * r * sin, 2.0 * PI * r * cos, dir * spec.pitch);
        let t = t / t.norm() * ds;
        coil.dx.push(t.x);
        coil.dy.push(t.y);
        coil.dz.push(t.z);
    }
    Ok(coil)
}

impl DiscretizedCoil {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn midpoint(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.x[i], self.y[i], self.z[i])
    }

    pub fn tangent(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.dx[i], self.dy[i], self.dz[i])
    }

    pub fn total_length(&self) -> f64 {
        (0..self.len()).map(|i| self.tangent(i).norm()).sum()
    }

    pub fn translated(&self, by: Vector3<f64>) -> DiscretizedCoil {
        let mut c = self.clone();
        c.x.iter_mut().for_each(|v| *v += by.x);
        c.y.iter_mut().for_each(|v| *v += by.y);
        c.z.iter_mut().for_each(|v| *v += by.z);
        c
    }

    pub fn with_current(&self, current: f64) -> DiscretizedCoil {
        DiscretizedCoil { current, ..self.clone() }
    }

    /// Apply a rotation to every midpoint and tangent.
    pub fn rotated(&self, rot: &nalgebra::Rotation3<f64>) -> DiscretizedCoil {
        let mut c = self.clone();
        for i in 0..self.len() {
            let p = rot * self.midpoint(i);
            let t = rot * self.tangent(i);
            (c.x[i], c.y[i], c.z[i]) = (p.x, p.y, p.z);
            (c.dx[i], c.dy[i], c.dz[i]) = (t.x, t.y, t.z);
        }
        c
    }

    pub(crate) fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for i in 0..self.len() {
            lo = lo.inf(&self.midpoint(i));
            hi = hi.sup(&self.midpoint(i));
        }
        (lo, hi)
    }
}

/// Relative permeability of the core as a function of drive current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermeabilityModel {
    /// (current A, μ_r) knots, current ascending.
    pub table: Vec<(f64, f64)>,
}

impl Default for PermeabilityModel {
    fn default() -> Self {
        PermeabilityModel { table: vec![(0.0, 2000.0), (1.2, 874.0)] }
    }
}

impl PermeabilityModel {
    pub fn constant(mu_r: f64) -> Self {
        PermeabilityModel { table: vec![(0.0, mu_r)] }
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        let bad = |reason: &str| Err(ForceError::InvalidInput { reason: reason.into() });
        if self.table.is_empty() {
            return bad("permeability table is empty");
        }
        for &(i, mu) in &self.table {
            if !(i >= 0.0 && i.is_finite()) || !(1.0..=2000.0).contains(&mu) {
                return bad("permeability knots need current >= 0 and mu_r in [1, 2000]");
            }
        }
        for w in self.table.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 > w[0].1 {
                return bad("permeability table must have increasing currents and non-increasing mu_r");
            }
        }
        Ok(())
    }

    /// Piecewise-linear in |I|, clamped at the end knots.
    pub fn mu_r(&self, current: f64) -> f64 {
        let i = current.abs();
        let t = &self.table;
        if i <= t[0].0 {
            return t[0].1;
        }
        for w in t.windows(2) {
            if i <= w[1].0 {
                let f = (i - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + f * (w[1].1 - w[0].1);
            }
        }
        t[t.len() - 1].1
    }

    /// μ_r for a coil pair: evaluated at the larger drive current.
    pub fn pair_mu_r(&self, i1: f64, i2: f64) -> f64 {
        self.mu_r(i1.abs().max(i2.abs()))
    }
}
