//! Pairwise element double sum.
//!
//! Rows of coil 1 are grouped into fixed-size blocks. Each block is summed in a
//! fixed order and block partials are combined in index order with Neumaier
//! compensation, so the result does not depend on how blocks are scheduled.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{DiscretizedCoil, ForceError, MU0_OVER_4PI};

/// Closest allowed approach between element midpoints of different coils.
pub const MIN_ELEMENT_SEPARATION: f64 = 10e-6;

const ROW_BLOCK: usize = 64;
const LANES: usize = 8;

/// Summand used for each element pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForceLaw {
    /// `-r̂ (dl_p · dl_q) / r²`. Equal to the cross-product form when both
    /// circuits are closed, and antisymmetric under exchange term by term.
    #[default]
    Neumann,
    /// `dl_p × (dl_q × r̂) / r²`, the literal cross-product summand. Pairs of
    /// open segments do not obey action and reaction under this form.
    Grassmann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelOptions {
    pub law: ForceLaw,
    pub execution: Execution,
}

#[derive(Clone, Copy, Default)]
struct Neumaier3 {
    sum: [f64; 3],
    comp: [f64; 3],
}

impl Neumaier3 {
    fn add(&mut self, v: [f64; 3]) {
        for (k, &x) in v.iter().enumerate() {
            let t = self.sum[k] + x;
            if self.sum[k].abs() >= x.abs() {
                self.comp[k] += (self.sum[k] - t) + x;
            } else {
                self.comp[k] += (x - t) + self.sum[k];
            }
            self.sum[k] = t;
        }
    }

    fn total(&self) -> [f64; 3] {
        [self.sum[0] + self.comp[0], self.sum[1] + self.comp[1], self.sum[2] + self.comp[2]]
    }
}

/// Sum over all elements of `c2` for one element of `c1`.
#[inline(always)]
fn row(p: [f64; 3], lp: [f64; 3], c2: &DiscretizedCoil, law: ForceLaw) -> [f64; 3] {
    let n = c2.len();
    let full = n - n % LANES;
    let (mut ax, mut ay, mut az) = ([0.0f64; LANES], [0.0f64; LANES], [0.0f64; LANES]);

    macro_rules! term {
        ($q:expr, $l:expr) => {{
            let q = $q;
            let rx = p[0] - c2.x[q];
            let ry = p[1] - c2.y[q];
            let rz = p[2] - c2.z[q];
            let r2 = rx * rx + ry * ry + rz * rz;
            let inv3 = 1.0 / (r2 * r2.sqrt());
            let dot = lp[0] * c2.dx[q] + lp[1] * c2.dy[q] + lp[2] * c2.dz[q];
            match law {
                ForceLaw::Neumann => {
                    let s = dot * inv3;
                    ax[$l] -= rx * s;
                    ay[$l] -= ry * s;
                    az[$l] -= rz * s;
                }
                ForceLaw::Grassmann => {
                    let s = dot * inv3;
                    let g = (lp[0] * rx + lp[1] * ry + lp[2] * rz) * inv3;
                    ax[$l] += c2.dx[q] * g - rx * s;
                    ay[$l] += c2.dy[q] * g - ry * s;
                    az[$l] += c2.dz[q] * g - rz * s;
                }
            }
        }};
    }

    let mut base = 0;
    while base < full {
        for l in 0..LANES {
            term!(base + l, l);
        }
        base += LANES;
    }
    for q in full..n {
        term!(q, 0);
    }
    let fold = |a: [f64; LANES]| {
        let h = [a[0] + a[4], a[1] + a[5], a[2] + a[6], a[3] + a[7]];
        (h[0] + h[2]) + (h[1] + h[3])
    };
    [fold(ax), fold(ay), fold(az)]
}

fn block(c1: &DiscretizedCoil, c2: &DiscretizedCoil, law: ForceLaw, start: usize) -> [f64; 3] {
    let end = (start + ROW_BLOCK).min(c1.len());
    let mut acc = Neumaier3::default();
    for i in start..end {
        let p = [c1.x[i], c1.y[i], c1.z[i]];
        let lp = [c1.dx[i], c1.dy[i], c1.dz[i]];
        acc.add(row(p, lp, c2, law));
    }
    acc.total()
}

fn min_separation_block(c1: &DiscretizedCoil, c2: &DiscretizedCoil, start: usize) -> f64 {
    let end = (start + ROW_BLOCK).min(c1.len());
    let mut best = f64::INFINITY;
    for i in start..end {
        for q in 0..c2.len() {
            let r2 = (c1.x[i] - c2.x[q]).powi(2) + (c1.y[i] - c2.y[q]).powi(2) + (c1.z[i] - c2.z[q]).powi(2);
            if r2 < best {
                best = r2;
            }
        }
    }
    best
}

fn map_blocks<T: Send, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync + Send,
{
    let starts = (0..n).step_by(ROW_BLOCK);
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => starts.collect::<Vec<_>>().into_par_iter().map(f).collect(),
        _ => starts.map(f).collect(),
    }
}

/// Reject coil pairs whose elements come closer than [`MIN_ELEMENT_SEPARATION`].
/// Disjoint bounding boxes skip the element scan.
fn check_separation(c1: &DiscretizedCoil, c2: &DiscretizedCoil, execution: Execution) -> Result<(), ForceError> {
    let (lo1, hi1) = c1.bounds();
    let (lo2, hi2) = c2.bounds();
    let gap = Vector3::from_fn(|k, _| (lo2[k] - hi1[k]).max(lo1[k] - hi2[k]).max(0.0));
    if gap.norm() >= MIN_ELEMENT_SEPARATION {
        return Ok(());
    }
    let min2 = map_blocks(c1.len(), execution, |s| min_separation_block(c1, c2, s))
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if min2 < MIN_ELEMENT_SEPARATION * MIN_ELEMENT_SEPARATION {
        return Err(ForceError::CoilsOverlapping {
            separation: min2.sqrt(),
            minimum: MIN_ELEMENT_SEPARATION,
        });
    }
    Ok(())
}

/// Current-free double sum `S` (m⁰ units of dl·dl/r²). The force on coil 1 is
/// `1e-7 · μ_r · I1 · I2 · S`.
pub fn geometric_sum(
    c1: &DiscretizedCoil,
    c2: &DiscretizedCoil,
    options: KernelOptions,
) -> Result<Vector3<f64>, ForceError> {
    check_separation(c1, c2, options.execution)?;
    let partials = map_blocks(c1.len(), options.execution, |s| block(c1, c2, options.law, s));
    let mut acc = Neumaier3::default();
    for p in partials {
        acc.add(p);
    }
    Ok(Vector3::from(acc.total()))
}

/// Force on `c1` due to `c2`, in newtons.
pub fn pair_force(c1: &DiscretizedCoil, c2: &DiscretizedCoil, mu_r: f64) -> Result<Vector3<f64>, ForceError> {
    pair_force_with(c1, c2, mu_r, KernelOptions::default())
}

pub fn pair_force_with(
    c1: &DiscretizedCoil,
    c2: &DiscretizedCoil,
    mu_r: f64,
    options: KernelOptions,
) -> Result<Vector3<f64>, ForceError> {
    let s = geometric_sum(c1, c2, options)?;
    Ok(s * (MU0_OVER_4PI * mu_r * c1.current * c2.current))
}
