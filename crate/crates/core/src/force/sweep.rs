//! Force-vs-separation and force-vs-current curves for side-by-side coils.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::kernel::{geometric_sum, KernelOptions};
#[cfg(feature = "parallel")]
use super::kernel::Execution;
use super::{discretize, CoilSpec, DiscretizedCoil, ForceError, PermeabilityModel, MU0_OVER_4PI};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Elements per coil.
    pub elements: usize,
    /// Extra center distance between adjacent-edge coils beyond surface contact.
    pub lateral_offset: f64,
    pub kernel: KernelOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { elements: 8000, lateral_offset: 0.0, kernel: KernelOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub spec1: CoilSpec,
    pub spec2: CoilSpec,
    pub mu_r: f64,
    pub elements: usize,
    pub lateral_offset: f64,
}

/// Signed force (positive = repulsive) against surface separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceCurve {
    pub points: Vec<(f64, f64)>,
    pub metadata: Option<CurveMetadata>,
}

fn check_increasing(xs: impl Iterator<Item = f64>, what: &str) -> Result<(), ForceError> {
    let mut prev = f64::NEG_INFINITY;
    for x in xs {
        if !(x.is_finite() && x > 0.0 && x > prev) {
            return Err(ForceError::InvalidInput {
                reason: format!("{what} must be positive and strictly increasing"),
            });
        }
        prev = x;
    }
    Ok(())
}

impl ForceCurve {
    /// 0.5 mm to 20 mm in 0.5 mm steps.
    pub fn default_separations() -> Vec<f64> {
        (1..=40).map(|k| k as f64 * 0.5e-3).collect()
    }

    pub fn separations(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn forces(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn validate(&self) -> Result<(), ForceError> {
        check_increasing(self.separations(), "separations")
    }

    pub fn scaled(&self, k: f64) -> ForceCurve {
        ForceCurve {
            points: self.points.iter().map(|&(s, f)| (s, f * k)).collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# voxmag force curve v1\n");
        if let Some(meta) = &self.metadata {
            let json = serde_json::to_string(meta).expect("metadata serializes");
            let _ = writeln!(out, "# metadata {json}");
        }
        out.push_str("separation_m,force_n\n");
        for (s, f) in &self.points {
            let _ = writeln!(out, "{s:.9e},{f:.12e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ForceCurve, ForceError> {
        let mut points = Vec::new();
        let mut metadata = None;
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| ForceError::Parse { line: i + 1, message };
            let line = line.trim();
            if let Some(json) = line.strip_prefix("# metadata ") {
                metadata = Some(serde_json::from_str(json).map_err(|e| err(e.to_string()))?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with("separation") {
                continue;
            }
            let mut cols = line.split(',');
            let mut num = |name: &str| -> Result<f64, ForceError> {
                cols.next()
                    .ok_or_else(|| err(format!("missing {name}")))?
                    .trim()
                    .parse()
                    .map_err(|e| err(format!("{name}: {e}")))
            };
            let s = num("separation")?;
            let f = num("force")?;
            points.push((s, f));
        }
        let curve = ForceCurve { points, metadata };
        curve.validate()?;
        Ok(curve)
    }
}

/// Place coil 2 beside coil 1 along +x with parallel axes, `gap` between the
/// outer winding surfaces.
fn side_by_side(
    c2: &DiscretizedCoil,
    spec1: &CoilSpec,
    spec2: &CoilSpec,
    gap: f64,
    lateral_offset: f64,
) -> (DiscretizedCoil, f64) {
    let center = spec1.outer_radius() + spec2.outer_radius() + gap + lateral_offset;
    (c2.translated(Vector3::new(center, 0.0, 0.0)), center)
}

/// Signed current-free sum: the x-component of the geometric force on coil 2.
fn signed_sum(c1: &DiscretizedCoil, c2: &DiscretizedCoil, kernel: KernelOptions) -> Result<f64, ForceError> {
    Ok(-geometric_sum(c1, c2, kernel)?.x)
}

pub fn force_distance_sweep(
    spec1: &CoilSpec,
    spec2: &CoilSpec,
    model: &PermeabilityModel,
    separations: &[f64],
) -> Result<ForceCurve, ForceError> {
    force_distance_sweep_with(spec1, spec2, model, separations, SweepOptions::default())
}

/// Sweep the side-by-side configuration. Increments run in parallel when the
/// kernel execution is parallel.
pub fn force_distance_sweep_with(
    spec1: &CoilSpec,
    spec2: &CoilSpec,
    model: &PermeabilityModel,
    separations: &[f64],
    options: SweepOptions,
) -> Result<ForceCurve, ForceError> {
    check_increasing(separations.iter().copied(), "separations")?;
    model.validate()?;
    let c1 = discretize(spec1, options.elements)?;
    let c2 = discretize(spec2, options.elements)?;
    let mu_r = model.pair_mu_r(spec1.current, spec2.current);
    let scale = MU0_OVER_4PI * mu_r * spec1.current * spec2.current;

    let one = |&gap: &f64| -> Result<(f64, f64), ForceError> {
        let (placed, _) = side_by_side(&c2, spec1, spec2, gap, options.lateral_offset);
        Ok((gap, signed_sum(&c1, &placed, options.kernel)? * scale))
    };
    let points: Result<Vec<_>, _> = match options.kernel.execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => separations.par_iter().map(one).collect(),
        _ => separations.iter().map(one).collect(),
    };
    Ok(ForceCurve {
        points: points?,
        metadata: Some(CurveMetadata {
            spec1: *spec1,
            spec2: *spec2,
            mu_r,
            elements: options.elements,
            lateral_offset: options.lateral_offset,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentPoint {
    pub current: f64,
    pub mu_r: f64,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentCurve {
    pub separation: f64,
    pub points: Vec<CurrentPoint>,
}

impl CurrentCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# voxmag force-current curve v1\n# separation_m {:.9e}\ncurrent_a,mu_r,force_n\n", self.separation);
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.6},{:.12e}", p.current, p.mu_r, p.force);
        }
        out
    }
}

/// Force at one separation as both coils are driven at each current. Coil
/// current signs come from the specs; magnitudes from `currents`.
pub fn force_current_sweep(
    spec1: &CoilSpec,
    spec2: &CoilSpec,
    model: &PermeabilityModel,
    currents: &[f64],
    separation: f64,
    options: SweepOptions,
) -> Result<CurrentCurve, ForceError> {
    if let Some(bad) = currents.iter().find(|i| !(0.0..=1.2).contains(*i)) {
        return Err(ForceError::InvalidInput { reason: format!("current {bad} A outside [0, 1.2]") });
    }
    check_increasing(std::iter::once(separation), "separation")?;
    model.validate()?;
    let c1 = discretize(spec1, options.elements)?;
    let c2 = discretize(spec2, options.elements)?;
    let (placed, _) = side_by_side(&c2, spec1, spec2, separation, options.lateral_offset);
    let s = signed_sum(&c1, &placed, options.kernel)?;
    let sign = spec1.current.signum() * spec2.current.signum();
    let points = currents
        .iter()
        .map(|&i| {
            let mu_r = model.mu_r(i);
            CurrentPoint { current: i, mu_r, force: s * (MU0_OVER_4PI * mu_r * i * i) * sign }
        })
        .collect();
    Ok(CurrentCurve { separation, points })
}
