//! Brute-force hinge oracle: sweep the traveler's cross-section about each
//! candidate edge and look for overlap with occupied cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxmag_core::lattice::{edge_world_pose, Axis, Cube, GridAddress, LatticeState, Orientation};
use voxmag_core::planner::{
    resolve_maneuver, Direction, ManeuverKind, ManeuverPlan, ManeuverRequest, PairRole, PhaseKind, PlanError,
};

type V3 = [f64; 3];

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: V3, k: f64) -> V3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

fn f(a: GridAddress) -> V3 {
    a.to_array().map(|v| v as f64)
}

/// Rotate `p` about the line through `h` along unit `axis` by `angle` (Rodrigues).
fn rotate_about(p: V3, h: V3, axis: V3, angle: f64) -> V3 {
    let r = sub(p, h);
    let (s, c) = angle.sin_cos();
    let rot = add(add(scale(r, c), scale(cross(axis, r), s)), scale(axis, dot(axis, r) * (1.0 - c)));
    add(h, rot)
}

/// What the sweep oracle makes of one candidate hinge.
pub struct Sweep {
    pub hinge: V3,
    pub landing: GridAddress,
    pub quarter_turns: u8,
    pub obstructed: bool,
}

/// Boundary samples of the traveler's cross-section perpendicular to `axis`.
fn section_samples(center: V3, axis: usize) -> Vec<V3> {
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut pts = vec![center];
    let n = 12;
    for k in 0..=n {
        let t = -0.5 + k as f64 / n as f64;
        for (a, b) in [(t, -0.5), (t, 0.5), (-0.5, t), (0.5, t)] {
            let mut p = center;
            p[i] += a;
            p[j] += b;
            pts.push(p);
        }
    }
    pts
}

fn strictly_inside(p: V3, cell: V3) -> bool {
    (0..3).all(|k| (p[k] - cell[k]).abs() < 0.5 - 1e-7)
}

fn sweep(state: &LatticeState, traveler: &Cube, hinge: V3, axis: Axis, sense: f64) -> Sweep {
    let a = axis.unit().map(|v| v as f64);
    let t = f(traveler.address);
    let land90 = rotate_about(t, hinge, a, sense * std::f64::consts::FRAC_PI_2).map(f64::round);
    let d1 = GridAddress::new(land90[0] as i32, land90[1] as i32, land90[2] as i32);
    // 180 degree landing spot, reached only when the cell beside d1 is free.
    let land180 = rotate_about(t, hinge, a, sense * std::f64::consts::PI).map(f64::round);
    let d2 = GridAddress::new(land180[0] as i32, land180[1] as i32, land180[2] as i32);
    let quarter_turns = if state.is_occupied(d2) { 1 } else { 2 };
    let landing = if quarter_turns == 1 { d1 } else { d2 };

    let blockers: Vec<V3> = state
        .cubes()
        .filter(|c| c.id != traveler.id && c.address.get(axis) == traveler.address.get(axis))
        .map(|c| f(c.address))
        .collect();
    let samples = section_samples(t, axis.index());
    let steps = 48 * quarter_turns as usize;
    let total = sense * quarter_turns as f64 * std::f64::consts::FRAC_PI_2;
    let obstructed = (1..=steps).any(|k| {
        let ang = total * k as f64 / steps as f64;
        samples.iter().any(|&p| {
            let q = rotate_about(p, hinge, a, ang);
            blockers.iter().any(|&c| strictly_inside(q, c))
        })
    });
    Sweep { hinge, landing, quarter_turns, obstructed }
}

/// Brute force: every face neighbor perpendicular to the axis offers two
/// coincident parallel edges; keep the ones whose rotation moves the traveler
/// away from that neighbor, then sweep each.
pub fn oracle(state: &LatticeState, req: &ManeuverRequest) -> Result<Vec<Sweep>, String> {
    let traveler = *state.cube(req.cube).unwrap();
    let a = req.axis.unit().map(|v| v as f64);
    let sense = req.direction.sign() as f64;
    let t = f(traveler.address);
    let mut out = Vec::new();
    for n in super::DIRS {
        let nv = n.map(|v| v as f64);
        if dot(nv, a) != 0.0 || !state.is_occupied(traveler.address + GridAddress::from_array(n)) {
            continue;
        }
        let e = cross(a, nv);
        let mut admissible = Vec::new();
        for s in [-1.0, 1.0] {
            let hinge = add(t, scale(add(nv, scale(e, s)), 0.5));
            let r = sub(t, hinge);
            let v = scale(cross(a, r), sense);
            // Away from the neighbor means the center velocity points against n.
            if dot(v, nv) < 0.0 {
                admissible.push(hinge);
            }
        }
        if admissible.len() != 1 {
            return Err(format!("neighbor {n:?} offers {} admissible edges", admissible.len()));
        }
        out.push(sweep(state, &traveler, admissible[0], req.axis, sense));
    }
    Ok(out)
}

fn check_assignment_edges(state: &LatticeState, plan: &ManeuverPlan) -> Result<(), String> {
    let traveler_after = Cube { address: plan.landing, orientation: plan.final_orientation, ..*state.cube(plan.traveler).unwrap() };
    for phase in &plan.phases {
        for pair in &phase.pairs {
            let parallel = pair.location.axis == plan.request.axis;
            if parallel == (pair.role == PairRole::Attach) {
                return Err(format!("{:?} pair runs along {}", pair.role, pair.location.axis));
            }
            for (cube, em) in [pair.first, pair.second] {
                let c = if pair.role == PairRole::Catch && cube == plan.traveler {
                    traveler_after
                } else {
                    *state.cube(cube).unwrap()
                };
                if edge_world_pose(&c, em).location != pair.location {
                    return Err(format!("{:?} pair names an electromagnet off its edge", pair.role));
                }
            }
        }
    }
    Ok(())
}

fn check_repel_tie_break(plan: &ManeuverPlan) -> Result<(), String> {
    let launch = plan.phase(PhaseKind::Launch).ok_or("no launch phase")?;
    let repel: Vec<_> = launch.pairs.iter().filter(|p| p.role == PairRole::Repel).collect();
    if repel.len() != 1 {
        return Err(format!("{} repel pairs", repel.len()));
    }
    // Repel partner is the hinge-forming cube, on the trailing side of their shared face.
    let g = plan.geometry;
    let expect = (g.traveler_at.scale(2) - g.w - g.u).to_array();
    if repel[0].first.0 != plan.traveler || repel[0].second.0 != plan.origin || repel[0].location.mid2 != expect {
        return Err(format!("repel pair {:?} is not the traveler/origin trailing edge", repel[0]));
    }
    Ok(())
}


#[derive(Debug, Default)]
pub struct HingeStats {
    pub plans: usize,
    pub traversals: usize,
    pub obstructed: usize,
    pub no_hinge: usize,
}

/// Random 2 to 10 cube lattices with random orientations, one random request
/// each, checked against the sweep oracle.
pub fn check_random_lattices(count: usize, seed: u64) -> Result<HingeStats, String> {
    let rotations = Orientation::all_cube_rotations();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = HingeStats::default();
    for _ in 0..count {
        let n = rng.gen_range(2..=10);
        let cells = super::random_polycube(&mut rng, n);
        let cubes: Vec<Cube> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Cube::new(super::id(i as u32 + 1), GridAddress::from_array(*c))
                    .with_orientation(rotations[rng.gen_range(0..24)])
            })
            .collect();
        let state = LatticeState::from_cubes(cubes).unwrap();
        let req = ManeuverRequest::new(
            super::id(rng.gen_range(1..=n as u32)),
            Axis::ALL[rng.gen_range(0..3)],
            if rng.gen_bool(0.5) { Direction::Cw } else { Direction::Ccw },
        );
        let ctx = |msg: String| format!("{req:?} in {cells:?}: {msg}");
        let sweeps = oracle(&state, &req).map_err(ctx)?;
        let clear: Vec<&Sweep> = sweeps.iter().filter(|s| !s.obstructed).collect();
        if clear.len() > 1 {
            return Err(ctx(format!("{} unobstructed hinges", clear.len())));
        }
        match resolve_maneuver(&state, &req) {
            Ok(plan) => {
                let Some(s) = clear.first() else {
                    return Err(ctx("planner accepted a blocked sweep".into()));
                };
                if plan.geometry.hinge.midpoint() != s.hinge
                    || plan.landing != s.landing
                    || plan.kind.quarter_turns() != s.quarter_turns
                {
                    return Err(ctx(format!("planner chose {:?}, sweep says {:?}", plan.geometry.hinge, s.hinge)));
                }
                check_assignment_edges(&state, &plan).map_err(ctx)?;
                check_repel_tie_break(&plan).map_err(ctx)?;
                stats.plans += 1;
                if plan.kind == ManeuverKind::Traversal {
                    stats.traversals += 1;
                }
            }
            Err(PlanError::NoValidHinge { .. }) if sweeps.is_empty() => stats.no_hinge += 1,
            Err(PlanError::Obstructed { .. }) if clear.is_empty() && !sweeps.is_empty() => stats.obstructed += 1,
            Err(e) => return Err(ctx(format!("planner rejected with {e}, sweep found {} clear", clear.len()))),
        }
    }
    Ok(stats)
}
