//! Scenario files: an initial shape plus named maneuver scripts.
//!
//! ```toml
//! format = "voxmag-scenario/1"
//! name = "two-cube pivot"
//!
//! [[cube]]
//! id = 1
//! at = [0, 0, 0]
//!
//! [[cube]]
//! id = 2
//! at = [0, 0, 1]
//! orientation = [1.0, 0.0, 0.0, 0.0]   # optional, w x y z
//!
//! [[script]]
//! name = "pivot"
//! steps = ["2 y ccw"]
//! expect = [[0, 0, 0], [1, 0, 0]]      # optional final occupancy
//!
//! [timings.pivot]                      # optional overrides
//! launch_ms = 400
//! travel_ms = 930
//! catch_ms = 200
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Axis, Cube, CubeId, GridAddress, LatticeState, Orientation};
use crate::planner::{
    resolve_maneuver_with, Direction, ManeuverPlan, ManeuverRequest, PhaseDurations, PhaseTimings, PlanError,
};

pub const FORMAT_TAG: &str = "voxmag-scenario/1";

/// Shipped chair, table and couch reconstruction (19 cubes).
pub const CORPUS_FURNITURE: &str = include_str!("../corpus/chair_table_couch.toml");
pub const CORPUS_TWO_CUBE: &str = include_str!("../corpus/two_cube_pivot.toml");
pub const CORPUS_THREE_CUBE: &str = include_str!("../corpus/three_cube_traversal.toml");

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {}", violations.join("; "))]
    Validation { violations: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum ScriptError {
    #[error("script {script:?} step {step}: {error}")]
    Plan { script: String, step: usize, error: PlanError },
    #[error("script {script:?} ended with occupancy different from its expected shape")]
    ExpectationMismatch { script: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub name: String,
    pub steps: Vec<ManeuverRequest>,
    pub expect: Option<BTreeSet<GridAddress>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub cubes: Vec<Cube>,
    pub scripts: Vec<Script>,
    pub timings: PhaseTimings,
}

/// Parse a step such as `"12 y ccw"`.
pub fn parse_step(s: &str) -> Result<ManeuverRequest, String> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let [id, axis, dir] = parts[..] else {
        return Err(format!("step {s:?} should be `<cube> <x|y|z> <cw|ccw>`"));
    };
    let id: u32 = id.parse().map_err(|_| format!("step {s:?}: bad cube id"))?;
    let cube = CubeId::new(id).map_err(|e| format!("step {s:?}: {e}"))?;
    let axis = match axis.to_ascii_lowercase().as_str() {
        "x" => Axis::X,
        "y" => Axis::Y,
        "z" => Axis::Z,
        _ => return Err(format!("step {s:?}: axis must be x, y or z")),
    };
    let direction = match dir.to_ascii_lowercase().as_str() {
        "cw" => Direction::Cw,
        "ccw" => Direction::Ccw,
        _ => return Err(format!("step {s:?}: direction must be cw or ccw")),
    };
    Ok(ManeuverRequest::new(cube, axis, direction))
}

pub fn format_step(r: &ManeuverRequest) -> String {
    format!("{} {} {}", r.cube, r.axis, r.direction)
}

pub struct StepDisplay<'a>(pub &'a ManeuverRequest);

impl fmt::Display for StepDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_step(self.0))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCube {
    id: u32,
    at: [i32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    orientation: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    name: String,
    steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expect: Option<Vec<[i32; 3]>>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTimings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pivot: Option<PhaseDurations>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    traversal: Option<PhaseDurations>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    format: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timings: Option<RawTimings>,
    #[serde(default, rename = "cube")]
    cubes: Vec<RawCube>,
    #[serde(default, rename = "script")]
    scripts: Vec<RawScript>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

/// Parse and validate. Validation reports every violation found.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ScenarioError::Parse { line, column, message: e.message().to_string() }
    })?;

    let mut violations = Vec::new();
    if raw.format != FORMAT_TAG {
        violations.push(format!("format tag {:?}, expected {FORMAT_TAG:?}", raw.format));
    }
    let mut ids = HashSet::new();
    let mut addresses = HashSet::new();
    let mut cubes = Vec::new();
    for (i, c) in raw.cubes.iter().enumerate() {
        let at = GridAddress::from_array(c.at);
        let id = match CubeId::new(c.id) {
            Ok(id) => id,
            Err(e) => {
                violations.push(format!("cube[{i}]: {e}"));
                continue;
            }
        };
        if !ids.insert(id) {
            violations.push(format!("cube[{i}]: duplicate id {id}"));
        }
        if !addresses.insert(at) {
            violations.push(format!("cube[{i}]: duplicate address {at}"));
        }
        let orientation = match c.orientation {
            None => Orientation::identity(),
            Some([w, x, y, z]) => match (w * w + x * x + y * y + z * z).sqrt() {
                n if n.is_finite() && n > 1e-9 && Orientation::from_wxyz(w, x, y, z).is_axis_aligned(1e-6) => {
                    Orientation::from_wxyz(w, x, y, z).snapped()
                }
                _ => {
                    violations.push(format!("cube[{i}]: orientation is not a cube rotation"));
                    continue;
                }
            },
        };
        cubes.push(Cube::new(id, at).with_orientation(orientation));
    }

    let mut scripts = Vec::new();
    for s in &raw.scripts {
        let mut steps = Vec::new();
        for (k, step) in s.steps.iter().enumerate() {
            match parse_step(step) {
                Ok(r) if !ids.contains(&r.cube) => {
                    violations.push(format!("script {:?} step {}: unknown cube {}", s.name, k + 1, r.cube))
                }
                Ok(r) => steps.push(r),
                Err(e) => violations.push(format!("script {:?} step {}: {e}", s.name, k + 1)),
            }
        }
        let expect = s.expect.as_ref().map(|cells| cells.iter().map(|&c| GridAddress::from_array(c)).collect());
        if let Some(e) = &expect {
            let e: &BTreeSet<GridAddress> = e;
            if e.len() != raw.cubes.len() {
                violations.push(format!(
                    "script {:?}: expected shape has {} cells for {} cubes",
                    s.name,
                    e.len(),
                    raw.cubes.len()
                ));
            }
        }
        scripts.push(Script { name: s.name.clone(), steps, expect });
    }

    let mut timings = PhaseTimings::default();
    if let Some(t) = &raw.timings {
        if let Some(p) = t.pivot {
            timings.pivot = p;
        }
        if let Some(p) = t.traversal {
            timings.traversal = p;
        }
    }

    if !violations.is_empty() {
        return Err(ScenarioError::Validation { violations });
    }
    Ok(Scenario { name: raw.name, description: raw.description, cubes, scripts, timings })
}

pub fn save_scenario(s: &Scenario) -> String {
    let defaults = PhaseTimings::default();
    let timings = (s.timings != defaults).then(|| RawTimings {
        pivot: (s.timings.pivot != defaults.pivot).then_some(s.timings.pivot),
        traversal: (s.timings.traversal != defaults.traversal).then_some(s.timings.traversal),
    });
    let raw = RawScenario {
        format: FORMAT_TAG.to_string(),
        name: s.name.clone(),
        description: s.description.clone(),
        timings,
        cubes: s
            .cubes
            .iter()
            .map(|c| RawCube {
                id: c.id.get() as u32,
                at: [c.address.x, c.address.y, c.address.z],
                orientation: (c.orientation != Orientation::identity()).then(|| c.orientation.wxyz()),
            })
            .collect(),
        scripts: s
            .scripts
            .iter()
            .map(|sc| RawScript {
                name: sc.name.clone(),
                steps: sc.steps.iter().map(format_step).collect(),
                expect: sc.expect.as_ref().map(|e| e.iter().map(|a| [a.x, a.y, a.z]).collect()),
            })
            .collect(),
    };
    toml::to_string(&raw).expect("scenario serializes")
}

impl Scenario {
    pub fn initial_state(&self) -> LatticeState {
        LatticeState::from_cubes(self.cubes.iter().copied()).expect("validated scenario has unique cubes")
    }

    pub fn script(&self, name: &str) -> Option<&Script> {
        self.scripts.iter().find(|s| s.name == name)
    }

    /// Every step of every script, in order.
    pub fn requests(&self) -> impl Iterator<Item = &ManeuverRequest> {
        self.scripts.iter().flat_map(|s| s.steps.iter())
    }
}

#[derive(Debug, Clone)]
pub struct ScriptResult {
    pub name: String,
    pub plans: Vec<ManeuverPlan>,
    pub state: LatticeState,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scripts: Vec<ScriptResult>,
    pub final_state: LatticeState,
}

impl ScenarioRun {
    pub fn plans(&self) -> impl Iterator<Item = &ManeuverPlan> {
        self.scripts.iter().flat_map(|s| s.plans.iter())
    }
}

/// Fold the planner over one list of requests. Errors carry the 1-based step.
pub fn run_steps(
    state: &LatticeState,
    steps: &[ManeuverRequest],
    timings: &PhaseTimings,
) -> Result<(LatticeState, Vec<ManeuverPlan>), (usize, PlanError)> {
    let mut state = state.clone();
    let mut plans = Vec::with_capacity(steps.len());
    for (i, req) in steps.iter().enumerate() {
        let plan = resolve_maneuver_with(&state, req, timings).map_err(|e| (i + 1, e))?;
        state = plan.apply(&state).map_err(|e| (i + 1, e))?;
        plans.push(plan);
    }
    Ok((state, plans))
}

/// Run every script in order, each starting where the previous one ended.
pub fn run_script(scenario: &Scenario) -> Result<ScenarioRun, ScriptError> {
    let mut state = scenario.initial_state();
    let mut scripts = Vec::new();
    for script in &scenario.scripts {
        let (next, plans) = run_steps(&state, &script.steps, &scenario.timings).map_err(|(step, error)| {
            ScriptError::Plan { script: script.name.clone(), step, error }
        })?;
        if let Some(expect) = &script.expect {
            if &next.occupancy() != expect {
                return Err(ScriptError::ExpectationMismatch { script: script.name.clone() });
            }
        }
        state = next;
        scripts.push(ScriptResult { name: script.name.clone(), plans, state: state.clone() });
    }
    Ok(ScenarioRun { scripts, final_state: state })
}
