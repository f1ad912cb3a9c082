//! World model: cubes on an integer lattice, their orientations, and the
//! body-frame numbering of the twelve edge electromagnets.
//!
//! Edge numbering is the hardware wiring contract. An edge is identified by
//! the body axis it runs along and the signs of the two remaining body
//! coordinates, taken in cyclic order (X -> (y, z), Y -> (z, x), Z -> (x, y)):
//!
//! ```text
//! id = 4 * axis_index + 2 * bit(s2) + bit(s1) + 1      bit(-) = 0, bit(+) = 1
//! ```
//!
//! so ids 1..=4 run along X, 5..=8 along Y and 9..=12 along Z.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::sync::OnceLock;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Physical side length of one cube.
pub const CUBE_SIDE_M: f64 = 0.060;

/// Largest cube id representable in a command word.
pub const MAX_CUBE_ID: u16 = 1023;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("cube id {0} outside 1..=1023")]
    InvalidCubeId(u32),
    #[error("electromagnet id {0} outside 1..=12")]
    InvalidEdgeId(u8),
    #[error("duplicate cube id {0}")]
    DuplicateId(CubeId),
    #[error("address {0} already occupied")]
    DuplicateAddress(GridAddress),
    #[error("cube {0} is not in the lattice")]
    UnknownCube(CubeId),
    #[error("edge does not lie on cube {0}")]
    EdgeNotOnCube(CubeId),
    #[error("orientation of cube {0} is not one of the 24 cube rotations")]
    NotAxisAligned(CubeId),
    #[error("lattice is not face-connected")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i % 3]
    }

    pub fn unit(self) -> [i32; 3] {
        let mut v = [0; 3];
        v[self.index()] = 1;
        v
    }

    /// The two remaining axes in cyclic order.
    pub fn cyclic_others(self) -> (Axis, Axis) {
        let i = self.index();
        (Axis::from_index(i + 1), Axis::from_index(i + 2))
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn of(v: i32) -> Sign {
        if v < 0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value(self) -> i32 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    fn bit(self) -> u8 {
        match self {
            Sign::Minus => 0,
            Sign::Plus => 1,
        }
    }
}

/// Integer lattice address of a cube center, in cube-side units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridAddress {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl GridAddress {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        GridAddress { x, y, z }
    }

    pub fn from_array(v: [i32; 3]) -> Self {
        GridAddress::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }

    pub fn get(self, axis: Axis) -> i32 {
        self.to_array()[axis.index()]
    }

    pub fn dot(self, other: GridAddress) -> i32 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, o: GridAddress) -> GridAddress {
        GridAddress::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn scale(self, k: i32) -> GridAddress {
        GridAddress::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Add for GridAddress {
    type Output = GridAddress;
    fn add(self, o: GridAddress) -> GridAddress {
        GridAddress::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for GridAddress {
    type Output = GridAddress;
    fn sub(self, o: GridAddress) -> GridAddress {
        GridAddress::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for GridAddress {
    type Output = GridAddress;
    fn neg(self) -> GridAddress {
        GridAddress::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for GridAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// One of the six face directions of a cube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    pub axis: Axis,
    pub sign: Sign,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face { axis: Axis::X, sign: Sign::Minus },
        Face { axis: Axis::X, sign: Sign::Plus },
        Face { axis: Axis::Y, sign: Sign::Minus },
        Face { axis: Axis::Y, sign: Sign::Plus },
        Face { axis: Axis::Z, sign: Sign::Minus },
        Face { axis: Axis::Z, sign: Sign::Plus },
    ];

    pub fn normal(self) -> GridAddress {
        GridAddress::from_array(self.axis.unit()).scale(self.sign.value())
    }

    /// Face whose outward normal is `v`; `v` must be a signed unit lattice vector.
    pub fn from_normal(v: GridAddress) -> Option<Face> {
        Face::ALL.into_iter().find(|f| f.normal() == v)
    }
}

/// Cube identifier, 1..=1023.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CubeId(u16);

impl CubeId {
    pub fn new(id: u32) -> Result<CubeId, LatticeError> {
        if (1..=MAX_CUBE_ID as u32).contains(&id) {
            Ok(CubeId(id as u16))
        } else {
            Err(LatticeError::InvalidCubeId(id))
        }
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u32> for CubeId {
    type Error = LatticeError;
    fn try_from(v: u32) -> Result<Self, Self::Error> {
        CubeId::new(v)
    }
}

impl From<CubeId> for u32 {
    fn from(c: CubeId) -> u32 {
        c.0 as u32
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Body-frame electromagnet (edge) id, 1..=12.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct EdgeId(u8);

impl EdgeId {
    pub fn new(id: u8) -> Result<EdgeId, LatticeError> {
        if (1..=12).contains(&id) {
            Ok(EdgeId(id))
        } else {
            Err(LatticeError::InvalidEdgeId(id))
        }
    }

    pub fn all() -> impl Iterator<Item = EdgeId> {
        (1..=12).map(EdgeId)
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn from_parts(axis: Axis, s1: Sign, s2: Sign) -> EdgeId {
        EdgeId(4 * axis.index() as u8 + 2 * s2.bit() + s1.bit() + 1)
    }

    pub fn parts(self) -> (Axis, Sign, Sign) {
        let k = self.0 - 1;
        let sign = |b: u8| if b == 1 { Sign::Plus } else { Sign::Minus };
        (Axis::from_index((k / 4) as usize), sign(k & 1), sign((k >> 1) & 1))
    }

    pub fn axis(self) -> Axis {
        self.parts().0
    }

    /// Edge midpoint relative to the cube center, in half-cube units.
    pub fn body_midpoint2(self) -> [i32; 3] {
        let (axis, s1, s2) = self.parts();
        let (a1, a2) = axis.cyclic_others();
        let mut m = [0; 3];
        m[a1.index()] = s1.value();
        m[a2.index()] = s2.value();
        m
    }
}

impl TryFrom<u8> for EdgeId {
    type Error = LatticeError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        EdgeId::new(v)
    }
}

impl From<EdgeId> for u8 {
    fn from(e: EdgeId) -> u8 {
        e.0
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

type IMat3 = [[i32; 3]; 3];

fn imat_mul_vec(m: &IMat3, v: [i32; 3]) -> [i32; 3] {
    let mut out = [0; 3];
    for (r, row) in m.iter().enumerate() {
        out[r] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

fn imat_transpose(m: &IMat3) -> IMat3 {
    let mut t = [[0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            t[c][r] = m[r][c];
        }
    }
    t
}

fn canonical_sign(q: Quaternion<f64>) -> Quaternion<f64> {
    let c = [q.w, q.i, q.j, q.k];
    let first = c.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
    if first < 0.0 {
        -q
    } else {
        q
    }
}

struct CanonicalRotation {
    matrix: IMat3,
    quat: UnitQuaternion<f64>,
}

/// The 24 proper rotations of the cube, each with an exact integer matrix and
/// a fixed canonical quaternion.
fn cube_rotations() -> &'static [CanonicalRotation] {
    static TABLE: OnceLock<Vec<CanonicalRotation>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out: Vec<CanonicalRotation> = Vec::with_capacity(24);
        // Enumerate signed permutation matrices with determinant +1.
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for p in perms {
            for signs in 0..8u8 {
                let mut m = [[0i32; 3]; 3];
                for r in 0..3 {
                    m[r][p[r]] = if signs >> r & 1 == 1 { -1 } else { 1 };
                }
                let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                if det != 1 {
                    continue;
                }
                let fm = nalgebra::Matrix3::from_fn(|r, c| m[r][c] as f64);
                let rot = Rotation3::from_matrix_unchecked(fm);
                let q = UnitQuaternion::from_rotation_matrix(&rot);
                let q = UnitQuaternion::new_normalize(canonical_sign(q.into_inner()));
                out.push(CanonicalRotation { matrix: m, quat: q });
            }
        }
        debug_assert_eq!(out.len(), 24);
        out
    })
}

/// Unit quaternion orientation, canonicalized so that the first nonzero
/// component (w first) is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation(UnitQuaternion<f64>);

impl Default for Orientation {
    fn default() -> Self {
        Orientation::identity()
    }
}

impl Orientation {
    pub fn identity() -> Self {
        Orientation(UnitQuaternion::identity())
    }

    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        let q = UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z));
        Orientation(UnitQuaternion::new_unchecked(canonical_sign(q.into_inner())))
    }

    /// Rotation by `angle` radians about a world axis (right-hand rule).
    pub fn about(axis: Axis, angle: f64) -> Self {
        let a = axis.unit();
        let v = Vector3::new(a[0] as f64, a[1] as f64, a[2] as f64);
        let q = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(v), angle);
        Orientation(UnitQuaternion::new_unchecked(canonical_sign(q.into_inner())))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// `rotation` applied after `self` (world-frame composition), renormalized.
    pub fn then(&self, rotation: &Orientation) -> Orientation {
        let q = (rotation.0 * self.0).into_inner();
        Orientation(UnitQuaternion::new_unchecked(canonical_sign(q.normalize())))
    }

    pub fn inverse(&self) -> Orientation {
        Orientation(UnitQuaternion::new_unchecked(canonical_sign(
            self.0.inverse().into_inner(),
        )))
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::new(v[0], v[1], v[2]);
        [r.x, r.y, r.z]
    }

    /// Same rotation up to the quaternion double cover.
    pub fn approx_eq(&self, other: &Orientation, tol: f64) -> bool {
        let a = self.wxyz();
        let b = other.wxyz();
        let same = a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= tol);
        let flipped = a.iter().zip(&b).all(|(x, y)| (x + y).abs() <= tol);
        same || flipped
    }

    fn nearest_rotation(&self) -> &'static CanonicalRotation {
        let m = self.0.to_rotation_matrix();
        let mut rounded = [[0i32; 3]; 3];
        for (r, row) in rounded.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)].round() as i32;
            }
        }
        cube_rotations()
            .iter()
            .find(|cr| cr.matrix == rounded)
            .unwrap_or_else(|| {
                // Not near any cube rotation; fall back to the closest by quaternion distance.
                cube_rotations()
                    .iter()
                    .max_by(|a, b| {
                        let da = a.quat.coords.dot(&self.0.coords).abs();
                        let db = b.quat.coords.dot(&self.0.coords).abs();
                        da.total_cmp(&db)
                    })
                    .expect("table is non-empty")
            })
    }

    /// Snap to the nearest of the 24 cube rotations, returning its canonical quaternion.
    pub fn snapped(&self) -> Orientation {
        Orientation(self.nearest_rotation().quat)
    }

    /// Whether the orientation maps body axes onto world axes within `tol` per matrix entry.
    pub fn is_axis_aligned(&self, tol: f64) -> bool {
        let m = self.0.to_rotation_matrix();
        let nearest = self.nearest_rotation();
        (0..3).all(|r| (0..3).all(|c| (m[(r, c)] - nearest.matrix[r][c] as f64).abs() <= tol))
    }

    /// Integer rotation matrix of the nearest cube rotation.
    pub fn matrix(&self) -> [[i32; 3]; 3] {
        self.nearest_rotation().matrix
    }

    /// All 24 canonical cube orientations.
    pub fn all_cube_rotations() -> Vec<Orientation> {
        cube_rotations().iter().map(|c| Orientation(c.quat)).collect()
    }
}

impl Serialize for Orientation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wxyz().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        Ok(Orientation::from_wxyz(w, x, y, z))
    }
}

/// Position of an edge in the world: the axis it runs along and its
/// midpoint, stored in half-cube units so comparisons are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeLocation {
    pub axis: Axis,
    pub mid2: [i32; 3],
}

impl EdgeLocation {
    /// Build from a midpoint given in half units; exactly two coordinates must
    /// be odd (half-integers) and the edge-axis coordinate even.
    pub fn new(axis: Axis, mid2: [i32; 3]) -> Option<EdgeLocation> {
        let ok = (0..3).all(|i| {
            let odd = mid2[i].rem_euclid(2) == 1;
            if i == axis.index() {
                !odd
            } else {
                odd
            }
        });
        ok.then_some(EdgeLocation { axis, mid2 })
    }

    pub fn midpoint(&self) -> [f64; 3] {
        self.mid2.map(|v| v as f64 * 0.5)
    }
}

/// World-frame twin of [`EdgeId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldEdge {
    pub cube: CubeId,
    pub location: EdgeLocation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub id: CubeId,
    pub address: GridAddress,
    pub orientation: Orientation,
}

impl Cube {
    pub fn new(id: CubeId, address: GridAddress) -> Cube {
        Cube { id, address, orientation: Orientation::identity() }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Cube {
        self.orientation = orientation;
        self
    }
}

/// World-frame axis and midpoint of one of a cube's edges.
pub fn edge_world_pose(cube: &Cube, edge: EdgeId) -> WorldEdge {
    let m = cube.orientation.matrix();
    let axis_w = imat_mul_vec(&m, edge.axis().unit());
    let axis = Axis::ALL[axis_w.iter().position(|v| *v != 0).expect("rotation of a unit axis")];
    let local = imat_mul_vec(&m, edge.body_midpoint2());
    let a = cube.address.to_array();
    let mid2 = [2 * a[0] + local[0], 2 * a[1] + local[1], 2 * a[2] + local[2]];
    WorldEdge { cube: cube.id, location: EdgeLocation { axis, mid2 } }
}

/// Inverse of [`edge_world_pose`]: the body electromagnet found at a world edge.
pub fn world_edge_to_body_em(cube: &Cube, world: &WorldEdge) -> Result<EdgeId, LatticeError> {
    if world.cube != cube.id {
        return Err(LatticeError::EdgeNotOnCube(cube.id));
    }
    let mt = imat_transpose(&cube.orientation.matrix());
    let a = cube.address.to_array();
    let rel = [
        world.location.mid2[0] - 2 * a[0],
        world.location.mid2[1] - 2 * a[1],
        world.location.mid2[2] - 2 * a[2],
    ];
    let body = imat_mul_vec(&mt, rel);
    let body_axis = imat_mul_vec(&mt, world.location.axis.unit());
    let zero_at: Vec<usize> = (0..3).filter(|&i| body[i] == 0).collect();
    if zero_at.len() != 1 || body.iter().any(|v| v.abs() > 1) {
        return Err(LatticeError::EdgeNotOnCube(cube.id));
    }
    let axis = Axis::from_index(zero_at[0]);
    if body_axis[axis.index()] == 0 {
        return Err(LatticeError::EdgeNotOnCube(cube.id));
    }
    let (a1, a2) = axis.cyclic_others();
    Ok(EdgeId::from_parts(axis, Sign::of(body[a1.index()]), Sign::of(body[a2.index()])))
}

/// Immutable occupancy snapshot. Mutators return a new state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatticeState {
    cubes: BTreeMap<CubeId, Cube>,
    index: HashMap<GridAddress, CubeId>,
    require_connected: bool,
}

impl LatticeState {
    pub fn new() -> Self {
        LatticeState::default()
    }

    pub fn from_cubes(cubes: impl IntoIterator<Item = Cube>) -> Result<Self, LatticeError> {
        let mut state = LatticeState::new();
        for c in cubes {
            state.insert_in_place(c)?;
        }
        Ok(state)
    }

    /// Turn on the connectivity invariant; fails if the state is not connected.
    pub fn requiring_connectivity(mut self) -> Result<Self, LatticeError> {
        if !self.is_connected() {
            return Err(LatticeError::Disconnected);
        }
        self.require_connected = true;
        Ok(self)
    }

    pub fn requires_connectivity(&self) -> bool {
        self.require_connected
    }

    fn insert_in_place(&mut self, cube: Cube) -> Result<(), LatticeError> {
        if !cube.orientation.is_axis_aligned(1e-6) {
            return Err(LatticeError::NotAxisAligned(cube.id));
        }
        if self.cubes.contains_key(&cube.id) {
            return Err(LatticeError::DuplicateId(cube.id));
        }
        if self.index.contains_key(&cube.address) {
            return Err(LatticeError::DuplicateAddress(cube.address));
        }
        let cube = Cube { orientation: cube.orientation.snapped(), ..cube };
        self.index.insert(cube.address, cube.id);
        self.cubes.insert(cube.id, cube);
        Ok(())
    }

    pub fn with_cube(&self, cube: Cube) -> Result<Self, LatticeError> {
        let mut next = self.clone();
        next.insert_in_place(cube)?;
        if next.require_connected && !next.is_connected() {
            return Err(LatticeError::Disconnected);
        }
        Ok(next)
    }

    /// Relocate and reorient one cube. The orientation is snapped to the
    /// nearest cube rotation.
    pub fn with_moved(
        &self,
        id: CubeId,
        address: GridAddress,
        orientation: Orientation,
    ) -> Result<Self, LatticeError> {
        let old = *self.cube(id)?;
        if let Some(&other) = self.index.get(&address) {
            if other != id {
                return Err(LatticeError::DuplicateAddress(address));
            }
        }
        let mut next = self.clone();
        next.index.remove(&old.address);
        next.index.insert(address, id);
        next.cubes
            .insert(id, Cube { id, address, orientation: orientation.snapped() });
        if next.require_connected && !next.is_connected() {
            return Err(LatticeError::Disconnected);
        }
        Ok(next)
    }

    pub fn cube(&self, id: CubeId) -> Result<&Cube, LatticeError> {
        self.cubes.get(&id).ok_or(LatticeError::UnknownCube(id))
    }

    pub fn at(&self, address: GridAddress) -> Option<&Cube> {
        self.index.get(&address).map(|id| &self.cubes[id])
    }

    pub fn is_occupied(&self, address: GridAddress) -> bool {
        self.index.contains_key(&address)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// Cubes in ascending id order.
    pub fn cubes(&self) -> impl Iterator<Item = &Cube> {
        self.cubes.values()
    }

    pub fn occupancy(&self) -> BTreeSet<GridAddress> {
        self.index.keys().copied().collect()
    }

    /// All six faces of `id` in [`Face::ALL`] order, with the neighbor cube if occupied.
    pub fn neighbors(&self, id: CubeId) -> Result<Vec<(Face, Option<&Cube>)>, LatticeError> {
        let cube = self.cube(id)?;
        Ok(Face::ALL
            .iter()
            .map(|&f| (f, self.at(cube.address + f.normal())))
            .collect())
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.index.keys().next().copied() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(a) = queue.pop_front() {
            for f in Face::ALL {
                let b = a + f.normal();
                if self.index.contains_key(&b) && seen.insert(b) {
                    queue.push_back(b);
                }
            }
        }
        seen.len() == self.index.len()
    }

    /// Canonical text form used for hashing and byte-level comparison.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        for c in self.cubes.values() {
            let [w, x, y, z] = c.orientation.wxyz();
            s.push_str(&format!(
                "{} {} {} {} {:?} {:?} {:?} {:?}\n",
                c.id, c.address.x, c.address.y, c.address.z, w, x, y, z
            ));
        }
        s
    }

    /// Hex SHA-256 of [`Self::canonical_string`].
    pub fn state_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
