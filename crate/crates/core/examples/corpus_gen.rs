//! Regenerates `corpus/chair_table_couch.toml`.
//!
//! Each script is built greedily: a misplaced cube is routed by breadth-first
//! search over single maneuvers (other cubes fixed, floor at z = 0, lattice
//! kept connected) to an empty target cell. Seeds and couch placements are
//! searched until the scripts have the requested lengths.
//!
//! Usage: cargo run --example corpus_gen -- [output-path]

use std::collections::{BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxmag_core::lattice::{Axis, Cube, CubeId, GridAddress, LatticeState};
use voxmag_core::planner::{resolve_maneuver, Direction, ManeuverRequest};
use voxmag_core::scenario::{load_scenario, run_script, save_scenario, Scenario, Script};

const CHAIR_TO_TABLE: usize = 22;
const TABLE_TO_COUCH: usize = 40;

fn cells(ranges: &[([i32; 2], [i32; 2], [i32; 2])]) -> BTreeSet<GridAddress> {
    let mut out = BTreeSet::new();
    for &(xs, ys, zs) in ranges {
        for x in xs[0]..=xs[1] {
            for y in ys[0]..=ys[1] {
                for z in zs[0]..=zs[1] {
                    out.insert(GridAddress::new(x, y, z));
                }
            }
        }
    }
    out
}

fn chair() -> BTreeSet<GridAddress> {
    cells(&[
        ([0, 0], [0, 0], [0, 0]),
        ([2, 2], [0, 0], [0, 0]),
        ([0, 0], [2, 2], [0, 0]),
        ([2, 2], [2, 2], [0, 0]),
        ([0, 2], [0, 2], [1, 1]),
        ([0, 2], [2, 2], [2, 3]),
    ])
}

fn table() -> BTreeSet<GridAddress> {
    cells(&[
        ([0, 0], [0, 0], [0, 0]),
        ([2, 2], [0, 0], [0, 0]),
        ([0, 0], [4, 4], [0, 0]),
        ([2, 2], [4, 4], [0, 0]),
        ([0, 2], [0, 4], [1, 1]),
    ])
}

fn couch(dx: i32, dy: i32) -> BTreeSet<GridAddress> {
    cells(&[
        ([0, 2], [0, 4], [0, 0]),
        ([1, 2], [0, 0], [1, 1]),
        ([1, 2], [4, 4], [1, 1]),
    ])
    .into_iter()
    .map(|c| GridAddress::new(c.x + dx, c.y + dy, c.z))
    .collect()
}

const MOVES: [(Axis, Direction); 6] = [
    (Axis::X, Direction::Cw),
    (Axis::X, Direction::Ccw),
    (Axis::Y, Direction::Cw),
    (Axis::Y, Direction::Ccw),
    (Axis::Z, Direction::Cw),
    (Axis::Z, Direction::Ccw),
];

/// Shortest single-cube route from the cube's cell to `goal`.
fn route(state: &LatticeState, id: CubeId, goal: GridAddress, rng: &mut ChaCha8Rng) -> Option<Vec<ManeuverRequest>> {
    let start = state.cube(id).ok()?.address;
    let mut parent: HashMap<GridAddress, (GridAddress, ManeuverRequest)> = HashMap::new();
    let mut states = HashMap::from([(start, state.clone())]);
    let mut queue = VecDeque::from([start]);
    while let Some(at) = queue.pop_front() {
        if at == goal {
            let mut path = Vec::new();
            let mut cur = at;
            while cur != start {
                let (prev, req) = parent[&cur];
                path.push(req);
                cur = prev;
            }
            path.reverse();
            return Some(path);
        }
        let s = states[&at].clone();
        let mut moves = MOVES;
        moves.shuffle(rng);
        for (axis, dir) in moves {
            let req = ManeuverRequest::new(id, axis, dir);
            let Ok(plan) = resolve_maneuver(&s, &req) else { continue };
            let land = plan.landing;
            if land.z < 0 || states.contains_key(&land) || !plan.warnings.is_empty() {
                continue;
            }
            let Ok(next) = plan.apply(&s) else { continue };
            if !next.is_connected() {
                continue;
            }
            parent.insert(land, (at, req));
            states.insert(land, next);
            queue.push_back(land);
        }
    }
    None
}

fn transform(
    start: &LatticeState,
    target: &BTreeSet<GridAddress>,
    rng: &mut ChaCha8Rng,
    limit: usize,
) -> Option<(LatticeState, Vec<ManeuverRequest>)> {
    let mut state = start.clone();
    let mut script = Vec::new();
    for _ in 0..200 {
        let occupied = state.occupancy();
        let mut misplaced: Vec<CubeId> =
            state.cubes().filter(|c| !target.contains(&c.address)).map(|c| c.id).collect();
        if misplaced.is_empty() {
            return Some((state, script));
        }
        let holes: Vec<GridAddress> = target.difference(&occupied).copied().collect();
        misplaced.shuffle(rng);
        let mut moved = false;
        for id in misplaced {
            let goal = holes[rng.gen_range(0..holes.len())];
            if let Some(path) = route(&state, id, goal, rng) {
                for req in &path {
                    let plan = resolve_maneuver(&state, req).expect("route replays");
                    state = plan.apply(&state).expect("route replays");
                }
                script.extend(path);
                moved = true;
                break;
            }
        }
        if !moved || script.len() > limit {
            return None;
        }
    }
    None
}

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "crates/core/corpus/chair_table_couch.toml".into());
    let cubes: Vec<Cube> = chair()
        .into_iter()
        .enumerate()
        .map(|(i, at)| Cube::new(CubeId::new(i as u32 + 1).unwrap(), at))
        .collect();
    let start = LatticeState::from_cubes(cubes.clone()).unwrap();

    let (table_state, first) = (0u64..)
        .find_map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            transform(&start, &table(), &mut rng, CHAIR_TO_TABLE)
                .filter(|(_, s)| s.len() == CHAIR_TO_TABLE)
                .inspect(|_| eprintln!("chair-to-table: seed {seed}"))
        })
        .unwrap();

    let placements = [(0, 0), (-1, 0), (1, 0)];
    let (couch_cells, second) = (0u64..2000)
        .find_map(|seed| {
            placements.iter().find_map(|&(dx, dy)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let target = couch(dx, dy);
                transform(&table_state, &target, &mut rng, TABLE_TO_COUCH)
                    .filter(|(_, s)| s.len() == TABLE_TO_COUCH)
                    .inspect(|_| eprintln!("table-to-couch: seed {seed}, offset ({dx}, {dy})"))
                    .map(|(_, s)| (target, s))
            })
        })
        .expect("no seed reached the couch in the requested number of maneuvers");

    let scenario = Scenario {
        name: "chair-table-couch".into(),
        description: Some(
            "Reconstructed 19-cube furniture sequence: chair to table in 22 maneuvers, then table to couch in 40. \
             Coordinates are a reconstruction; the maneuver counts are the contract."
                .into(),
        ),
        cubes,
        scripts: vec![
            Script { name: "chair-to-table".into(), steps: first, expect: Some(table()) },
            Script { name: "table-to-couch".into(), steps: second, expect: Some(couch_cells) },
        ],
        timings: Default::default(),
    };
    let text = save_scenario(&scenario);
    let reloaded = load_scenario(&text).expect("generated scenario loads");
    run_script(&reloaded).expect("generated scripts replay");
    std::fs::write(&out, text).unwrap();
    eprintln!("wrote {out}");
}
