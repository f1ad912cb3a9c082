//! Pivot and traversal planning with Launch/Travel/Catch electromagnet
//! schedules.
//!
//! Geometry vocabulary used throughout, all in lattice units:
//!
//! * `n`: unit normal of the shared face, from the traveler toward the origin cube.
//! * `w = -n`: the same normal seen from the origin toward the traveler.
//! * `u`: unit tangent of the traveler's motion at launch. For a request with
//!   rotation sign `s` (+1 counter-clockwise about +axis) `u = s * (n x axis)`.
//! * hinge: the traveler/origin edge at `traveler + n/2 + u/2`.
//! * `d1 = traveler + u`: landing cell after a quarter turn.
//! * `d2 = origin + u`: landing cell after a half turn.
//!
//! If `d2` is occupied the move is a traversal onto that cube, otherwise a
//! pivot back onto the origin.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{
    world_edge_to_body_em, Axis, CubeId, EdgeId, EdgeLocation, Face, GridAddress, LatticeError,
    LatticeState, Orientation, WorldEdge,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Clockwise about +axis.
    Cw,
    /// Counter-clockwise about +axis (right-hand rule).
    Ccw,
}

impl Direction {
    pub fn sign(self) -> i32 {
        match self {
            Direction::Ccw => 1,
            Direction::Cw => -1,
        }
    }

    pub fn reversed(self) -> Direction {
        match self {
            Direction::Ccw => Direction::Cw,
            Direction::Cw => Direction::Ccw,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Cw => "cw",
            Direction::Ccw => "ccw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManeuverRequest {
    pub cube: CubeId,
    pub axis: Axis,
    pub direction: Direction,
}

impl ManeuverRequest {
    pub fn new(cube: CubeId, axis: Axis, direction: Direction) -> Self {
        ManeuverRequest { cube, axis, direction }
    }

    pub fn inverse(&self) -> Self {
        ManeuverRequest { direction: self.direction.reversed(), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManeuverKind {
    Pivot,
    Traversal,
}

impl ManeuverKind {
    pub fn quarter_turns(self) -> u8 {
        match self {
            ManeuverKind::Pivot => 2,
            ManeuverKind::Traversal => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseKind {
    Launch,
    Travel,
    Catch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairRole {
    Repel,
    Hinge,
    Attach,
    Catch,
}

/// Electromagnet drive state, signed along the edge's world-frame +axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Polarity {
    Minus,
    Off,
    Plus,
}

impl Polarity {
    pub fn value(self) -> i8 {
        match self {
            Polarity::Minus => -1,
            Polarity::Off => 0,
            Polarity::Plus => 1,
        }
    }

    pub fn from_value(v: i8) -> Option<Polarity> {
        match v {
            -1 => Some(Polarity::Minus),
            0 => Some(Polarity::Off),
            1 => Some(Polarity::Plus),
            _ => None,
        }
    }

    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Minus => Polarity::Plus,
            Polarity::Off => Polarity::Off,
            Polarity::Plus => Polarity::Minus,
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        p.value()
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, String> {
        Polarity::from_value(v).ok_or_else(|| format!("polarity {v} not in -1..=1"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmAssignment {
    pub cube: CubeId,
    pub em: EdgeId,
    pub polarity: Polarity,
}

/// Two coincident parallel electromagnets acting together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgePair {
    pub role: PairRole,
    pub location: EdgeLocation,
    /// Traveler for repel/hinge/catch pairs, lower-id cube for attach pairs.
    pub first: (CubeId, EdgeId),
    pub second: (CubeId, EdgeId),
}

impl EdgePair {
    /// Whether the pair attracts under `assignments` (unlike signs), repels
    /// (like signs), or is inactive.
    pub fn interaction(&self, assignments: &BTreeSet<EmAssignment>) -> Option<bool> {
        let pol = |(c, e): (CubeId, EdgeId)| {
            assignments
                .iter()
                .find(|a| a.cube == c && a.em == e)
                .map(|a| a.polarity.value())
                .unwrap_or(0)
        };
        let p = pol(self.first) * pol(self.second);
        match p {
            0 => None,
            v => Some(v < 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub kind: PhaseKind,
    pub duration_ms: u32,
    pub pairs: Vec<EdgePair>,
    /// Nonzero electromagnets during this phase; everything unlisted is OFF.
    pub assignments: BTreeSet<EmAssignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDurations {
    pub launch_ms: u32,
    pub travel_ms: u32,
    pub catch_ms: u32,
}

impl PhaseDurations {
    pub fn total_ms(&self) -> u32 {
        self.launch_ms + self.travel_ms + self.catch_ms
    }

    pub fn get(&self, kind: PhaseKind) -> u32 {
        match kind {
            PhaseKind::Launch => self.launch_ms,
            PhaseKind::Travel => self.travel_ms,
            PhaseKind::Catch => self.catch_ms,
        }
    }
}

/// Per-kind phase durations. Defaults reproduce maneuver spans of 1530 ms
/// (pivot) and 1030 ms (traversal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub pivot: PhaseDurations,
    pub traversal: PhaseDurations,
}

impl Default for PhaseTimings {
    fn default() -> Self {
        PhaseTimings {
            pivot: PhaseDurations { launch_ms: 400, travel_ms: 930, catch_ms: 200 },
            traversal: PhaseDurations { launch_ms: 300, travel_ms: 530, catch_ms: 200 },
        }
    }
}

impl PhaseTimings {
    pub fn for_kind(&self, kind: ManeuverKind) -> &PhaseDurations {
        match kind {
            ManeuverKind::Pivot => &self.pivot,
            ManeuverKind::Traversal => &self.traversal,
        }
    }
}

/// Resolved hinge geometry for one candidate neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HingeGeometry {
    pub axis: Axis,
    /// +1 counter-clockwise, -1 clockwise.
    pub sense: i32,
    pub traveler_at: GridAddress,
    pub origin_at: GridAddress,
    pub u: GridAddress,
    pub w: GridAddress,
    pub hinge: EdgeLocation,
}

impl HingeGeometry {
    pub fn d1(&self) -> GridAddress {
        self.traveler_at + self.u
    }

    pub fn d2(&self) -> GridAddress {
        self.origin_at + self.u
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClearanceReport {
    pub required_empty: Vec<GridAddress>,
    pub blocking: Vec<GridAddress>,
}

impl ClearanceReport {
    pub fn evaluate(state: &LatticeState, required_empty: Vec<GridAddress>) -> Self {
        let blocking = required_empty.iter().copied().filter(|a| state.is_occupied(*a)).collect();
        ClearanceReport { required_empty, blocking }
    }

    pub fn is_clear(&self) -> bool {
        self.blocking.is_empty()
    }
}

/// Cells swept by the traveler for a rotation of `quarter_turns` x 90 degrees.
///
/// Each quarter turn needs its landing cell plus the two cells the corner
/// arc (radius sqrt(2) about the hinge) bulges into.
pub fn clearance_cells(geom: &HingeGeometry, quarter_turns: u8) -> Vec<GridAddress> {
    let (u, w) = (geom.u, geom.w);
    let d1 = geom.d1();
    let d2 = geom.d2();
    let mut cells = Vec::new();
    if quarter_turns >= 1 {
        cells.extend([d1, geom.traveler_at + w, d1 + w]);
    }
    if quarter_turns >= 2 {
        cells.extend([d2, d2 + u, d1 + u]);
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanError {
    #[error("cube {cube} is not in the lattice")]
    UnknownCube { cube: CubeId },
    #[error("cube {cube} has no face neighbor to hinge on for a rotation about {axis}")]
    NoValidHinge { cube: CubeId, axis: Axis },
    #[error("maneuver path obstructed at {}", fmt_cells(&report.blocking))]
    Obstructed { report: ClearanceReport },
    #[error("lattice update failed: {message}")]
    Lattice { message: String },
}

fn fmt_cells(cells: &[GridAddress]) -> String {
    cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

impl From<LatticeError> for PlanError {
    fn from(e: LatticeError) -> Self {
        match e {
            LatticeError::UnknownCube(cube) => PlanError::UnknownCube { cube },
            other => PlanError::Lattice { message: other.to_string() },
        }
    }
}

/// One face neighbor that could serve as the hinge partner.
#[derive(Debug, Clone, PartialEq)]
pub struct HingeCandidate {
    pub origin: CubeId,
    pub face: Face,
    pub geometry: HingeGeometry,
    pub kind: ManeuverKind,
    pub clearance: ClearanceReport,
}

/// Every occupied face neighbor perpendicular to the request axis, each with
/// the hinge its rotation sense implies and the clearance it needs.
///
/// At most one candidate is ever clear: an adjacent candidate occupies the
/// other's `d1`, an opposite one occupies the other's `traveler + w`.
pub fn hinge_candidates(
    state: &LatticeState,
    req: &ManeuverRequest,
) -> Result<Vec<HingeCandidate>, PlanError> {
    let traveler = *state.cube(req.cube)?;
    let a = GridAddress::from_array(req.axis.unit());
    let sense = req.direction.sign();
    let mut out = Vec::new();
    for (face, neighbor) in state.neighbors(req.cube)? {
        let Some(origin) = neighbor else { continue };
        if face.axis == req.axis {
            continue;
        }
        let n = face.normal();
        let u = n.cross(a).scale(sense);
        let t2 = traveler.address.scale(2);
        let hinge = EdgeLocation::new(req.axis, (t2 + n + u).to_array())
            .expect("hinge midpoint is a lattice edge");
        let geometry = HingeGeometry {
            axis: req.axis,
            sense,
            traveler_at: traveler.address,
            origin_at: origin.address,
            u,
            w: -n,
            hinge,
        };
        let kind = if state.is_occupied(geometry.d2()) {
            ManeuverKind::Traversal
        } else {
            ManeuverKind::Pivot
        };
        let clearance =
            ClearanceReport::evaluate(state, clearance_cells(&geometry, kind.quarter_turns()));
        out.push(HingeCandidate { origin: origin.id, face, geometry, kind, clearance });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverPlan {
    pub request: ManeuverRequest,
    pub kind: ManeuverKind,
    pub traveler: CubeId,
    pub origin: CubeId,
    pub destination: CubeId,
    /// Rotation magnitude in radians (pi for pivots, pi/2 for traversals).
    pub angle: f64,
    pub geometry: HingeGeometry,
    pub start: GridAddress,
    pub landing: GridAddress,
    /// Traveler orientation once the maneuver settles.
    pub final_orientation: Orientation,
    pub clearance: ClearanceReport,
    pub phases: Vec<Phase>,
    /// Sign of each participating electromagnet's body axis along the world
    /// axis it is parallel to. Converts world polarities to body polarities.
    pub body_axis_signs: BTreeMap<(CubeId, EdgeId), i8>,
    pub warnings: Vec<String>,
}

impl ManeuverPlan {
    pub fn hinge(&self) -> WorldEdge {
        WorldEdge { cube: self.traveler, location: self.geometry.hinge }
    }

    pub fn phase(&self, kind: PhaseKind) -> Option<&Phase> {
        self.phases.iter().find(|p| p.kind == kind)
    }

    pub fn total_ms(&self) -> u32 {
        self.phases.iter().map(|p| p.duration_ms).sum()
    }

    /// Polarity as seen by the cube's own electronics.
    pub fn body_polarity(&self, a: &EmAssignment) -> Polarity {
        match self.body_axis_signs.get(&(a.cube, a.em)) {
            Some(-1) => a.polarity.flipped(),
            _ => a.polarity,
        }
    }

    /// Re-time the phases from a timing table.
    pub fn with_timings(mut self, timings: &PhaseTimings) -> Self {
        let d = *timings.for_kind(self.kind);
        for p in &mut self.phases {
            p.duration_ms = d.get(p.kind);
        }
        self
    }

    /// State after the traveler settles at its landing cell.
    pub fn apply(&self, state: &LatticeState) -> Result<LatticeState, PlanError> {
        Ok(state.with_moved(self.traveler, self.landing, self.final_orientation)?)
    }
}

fn pair(
    state_before: &LatticeState,
    traveler_after: &crate::lattice::Cube,
    role: PairRole,
    location: EdgeLocation,
    first: CubeId,
    second: CubeId,
) -> Result<EdgePair, PlanError> {
    let body = |id: CubeId, use_final: bool| -> Result<EdgeId, PlanError> {
        let cube = if use_final { traveler_after } else { state_before.cube(id)? };
        Ok(world_edge_to_body_em(cube, &WorldEdge { cube: id, location })?)
    };
    let traveler_final = role == PairRole::Catch;
    let f = body(first, traveler_final && first == traveler_after.id)?;
    let s = body(second, traveler_final && second == traveler_after.id)?;
    Ok(EdgePair { role, location, first: (first, f), second: (second, s) })
}

/// Resolve a rotation request with default phase timings.
pub fn resolve_maneuver(
    state: &LatticeState,
    req: &ManeuverRequest,
) -> Result<ManeuverPlan, PlanError> {
    resolve_maneuver_with(state, req, &PhaseTimings::default())
}

pub fn resolve_maneuver_with(
    state: &LatticeState,
    req: &ManeuverRequest,
    timings: &PhaseTimings,
) -> Result<ManeuverPlan, PlanError> {
    let candidates = hinge_candidates(state, req)?;
    if candidates.is_empty() {
        return Err(PlanError::NoValidHinge { cube: req.cube, axis: req.axis });
    }
    let Some(chosen) = candidates.iter().find(|c| c.clearance.is_clear()) else {
        let report = candidates
            .into_iter()
            .min_by_key(|c| c.clearance.blocking.len())
            .map(|c| c.clearance)
            .unwrap_or_default();
        return Err(PlanError::Obstructed { report });
    };

    let g = chosen.geometry;
    let kind = chosen.kind;
    let quarter_turns = kind.quarter_turns();
    let traveler = *state.cube(req.cube)?;
    let origin = chosen.origin;
    let destination = match kind {
        ManeuverKind::Pivot => origin,
        ManeuverKind::Traversal => state.at(g.d2()).expect("traversal target is occupied").id,
    };
    let landing = match kind {
        ManeuverKind::Pivot => g.d2(),
        ManeuverKind::Traversal => g.d1(),
    };
    let angle = quarter_turns as f64 * FRAC_PI_2;
    let rotation = Orientation::about(g.axis, g.sense as f64 * angle);
    let final_orientation = traveler.orientation.then(&rotation).snapped();
    let traveler_after = crate::lattice::Cube { address: landing, orientation: final_orientation, ..traveler };

    let a = GridAddress::from_array(g.axis.unit());
    let n = -g.w;
    let t2 = g.traveler_at.scale(2);
    let o2 = g.origin_at.scale(2);
    let loc = |axis: Axis, mid2: GridAddress| {
        EdgeLocation::new(axis, mid2.to_array()).expect("pair midpoint is a lattice edge")
    };

    let hinge = pair(state, &traveler_after, PairRole::Hinge, g.hinge, traveler.id, origin)?;
    let repel = pair(state, &traveler_after, PairRole::Repel, loc(g.axis, t2 + n - g.u), traveler.id, origin)?;
    let catch_mid = match kind {
        ManeuverKind::Pivot => o2 + g.u - g.w,
        ManeuverKind::Traversal => g.d2().scale(2) + g.u + g.w,
    };
    let catch = pair(state, &traveler_after, PairRole::Catch, loc(g.axis, catch_mid), traveler.id, destination)?;

    let mut attach = Vec::new();
    if kind == ManeuverKind::Traversal {
        let w_axis = Axis::ALL[g.w.to_array().iter().position(|v| *v != 0).expect("unit normal")];
        let (lo, hi) = if origin < destination { (origin, destination) } else { (destination, origin) };
        for s in [-1, 1] {
            let mid = o2 + g.u + a.scale(s);
            attach.push(pair(state, &traveler_after, PairRole::Attach, loc(w_axis, mid), lo, hi)?);
        }
    }

    let durations = timings.for_kind(kind);
    let mut phases = Vec::with_capacity(3);
    for (pk, mut pairs) in [
        (PhaseKind::Launch, vec![repel, hinge]),
        (PhaseKind::Travel, vec![hinge]),
        (PhaseKind::Catch, vec![catch]),
    ] {
        pairs.extend(attach.iter().copied());
        phases.push(Phase {
            kind: pk,
            duration_ms: durations.get(pk),
            pairs,
            assignments: BTreeSet::new(),
        });
    }

    let mut body_axis_signs = BTreeMap::new();
    for p in phases.iter().flat_map(|p| &p.pairs) {
        for (cube_id, em) in [p.first, p.second] {
            let cube = if p.role == PairRole::Catch && cube_id == traveler.id {
                traveler_after
            } else {
                *state.cube(cube_id)?
            };
            let m = cube.orientation.matrix();
            let body_axis = em.axis().index();
            let world_axis = p.location.axis.index();
            body_axis_signs.insert((cube_id, em), m[world_axis][body_axis] as i8);
        }
    }

    let mut plan = ManeuverPlan {
        request: *req,
        kind,
        traveler: traveler.id,
        origin,
        destination,
        angle,
        geometry: g,
        start: traveler.address,
        landing,
        final_orientation,
        clearance: chosen.clearance.clone(),
        phases,
        body_axis_signs,
        warnings: Vec::new(),
    };
    plan = assign_polarities(plan);
    if !plan.apply(state)?.is_connected() {
        plan.warnings.push("lattice is disconnected after this maneuver".to_string());
    }
    Ok(plan)
}

/// Fill concrete world-frame signs: repel pairs (+1, +1); hinge, attach and
/// catch pairs (+1, -1) with +1 on the pair's first member.
pub fn assign_polarities(mut plan: ManeuverPlan) -> ManeuverPlan {
    for phase in &mut plan.phases {
        phase.assignments.clear();
        for p in &phase.pairs {
            let second = match p.role {
                PairRole::Repel => Polarity::Plus,
                _ => Polarity::Minus,
            };
            phase.assignments.insert(EmAssignment { cube: p.first.0, em: p.first.1, polarity: Polarity::Plus });
            phase.assignments.insert(EmAssignment { cube: p.second.0, em: p.second.1, polarity: second });
        }
    }
    plan
}
