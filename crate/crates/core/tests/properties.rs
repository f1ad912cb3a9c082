mod common;

use std::collections::BTreeSet;

use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use voxmag_core::codec::{
    compile_timeline_with, decode, encode, encode_fields, BroadcastMode, CommandTimeline, CompileOptions,
};
use voxmag_core::force::{discretize, pair_force_with, CoilSpec, Execution, ForceLaw, KernelOptions, PermeabilityModel};
use voxmag_core::lattice::{Axis, Cube, GridAddress, LatticeState, Orientation};
use voxmag_core::planner::{
    resolve_maneuver, Direction, EmAssignment, ManeuverKind, ManeuverRequest, PhaseKind, PhaseTimings,
};
use voxmag_core::scenario::{load_scenario, save_scenario, Scenario, Script};

fn axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
}

fn direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Cw), Just(Direction::Ccw)]
}

fn rotation() -> impl Strategy<Value = Orientation> {
    (0..24usize).prop_map(|i| Orientation::all_cube_rotations()[i])
}

/// Two face-adjacent cubes with arbitrary orientations.
fn two_cubes() -> impl Strategy<Value = LatticeState> {
    (0..6usize, rotation(), rotation()).prop_map(|(d, r1, r2)| {
        LatticeState::from_cubes([
            Cube::new(common::id(1), GridAddress::new(0, 0, 0)).with_orientation(r1),
            Cube::new(common::id(2), GridAddress::from_array(common::DIRS[d])).with_orientation(r2),
        ])
        .unwrap()
    })
}

/// Random polycube with random orientations and a request on one of its cubes.
fn lattice_and_request() -> impl Strategy<Value = (LatticeState, ManeuverRequest)> {
    (2..=10usize, any::<u64>(), prop::collection::vec(rotation(), 10), axis(), direction(), 0..10usize).prop_map(
        |(n, seed, rots, axis, dir, pick)| {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cells = common::random_polycube(&mut rng, n);
            let state = LatticeState::from_cubes(cells.iter().enumerate().map(|(i, c)| {
                Cube::new(common::id(i as u32 + 1), GridAddress::from_array(*c)).with_orientation(rots[i])
            }))
            .unwrap();
            let req = ManeuverRequest::new(common::id((pick % n) as u32 + 1), axis, dir);
            (state, req)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trips_valid_fields(cube in 1u32..=1023, em in 1u8..=12, pol in -1i8..=1) {
        let word = encode_fields(cube, em, pol).unwrap();
        let a = decode(word.raw()).unwrap();
        prop_assert_eq!(a.cube.get() as u32, cube);
        prop_assert_eq!(a.em.get(), em);
        prop_assert_eq!(a.polarity.value(), pol);
        let code = match pol { 0 => 0u16, 1 => 1, _ => 2 };
        prop_assert_eq!(word.bits(), em as u16 | (cube as u16) << 4 | code << 14);
    }

    #[test]
    fn decode_then_encode_is_identity(raw in any::<i16>()) {
        if let Ok(a) = decode(raw) {
            prop_assert_eq!(encode(&a).raw(), raw);
        }
    }

    #[test]
    fn lattice_hash_ignores_insertion_order(n in 2usize..=10, seed in any::<u64>(), shift in 0usize..10) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cells = common::random_polycube(&mut rng, n);
        let cubes: Vec<Cube> = cells.iter().enumerate()
            .map(|(i, c)| Cube::new(common::id(i as u32 + 1), GridAddress::from_array(*c)))
            .collect();
        let mut rotated = cubes.clone();
        rotated.rotate_left(shift % n);
        let a = LatticeState::from_cubes(cubes).unwrap();
        let b = LatticeState::from_cubes(rotated).unwrap();
        prop_assert_eq!(a.state_hash(), b.state_hash());
        prop_assert!(a.is_connected());
    }

    #[test]
    fn plan_shape_and_polarity_symmetry((state, req) in lattice_and_request()) {
        let Ok(plan) = resolve_maneuver(&state, &req) else { return Ok(()) };
        let counts: Vec<usize> = [PhaseKind::Launch, PhaseKind::Travel, PhaseKind::Catch]
            .iter().map(|k| plan.phase(*k).unwrap().assignments.len()).collect();
        match plan.kind {
            ManeuverKind::Pivot => {
                prop_assert_eq!(counts, vec![4, 2, 2]);
                prop_assert_eq!(plan.origin, plan.destination);
            }
            ManeuverKind::Traversal => {
                prop_assert_eq!(counts, vec![8, 6, 6]);
                prop_assert_ne!(plan.origin, plan.destination);
            }
        }
        for phase in &plan.phases {
            let flipped: BTreeSet<EmAssignment> = phase.assignments.iter()
                .map(|a| EmAssignment { polarity: a.polarity.flipped(), ..*a })
                .collect();
            for p in &phase.pairs {
                prop_assert!(p.interaction(&phase.assignments).is_some());
                prop_assert_eq!(p.interaction(&phase.assignments), p.interaction(&flipped));
            }
        }
        let after = plan.apply(&state).unwrap();
        prop_assert_eq!(after.len(), state.len());
        prop_assert!(after.is_occupied(plan.landing));
        prop_assert!(!after.is_occupied(plan.start));
    }

    #[test]
    fn inverse_request_restores_two_cube_state(state in two_cubes(), axis in axis(), dir in direction()) {
        let req = ManeuverRequest::new(common::id(2), axis, dir);
        let Ok(plan) = resolve_maneuver(&state, &req) else { return Ok(()) };
        prop_assert_eq!(plan.kind, ManeuverKind::Pivot);
        let moved = plan.apply(&state).unwrap();
        let back_plan = resolve_maneuver(&moved, &req.inverse()).unwrap();
        let back = back_plan.apply(&moved).unwrap();
        prop_assert_eq!(back.occupancy(), state.occupancy());
        let (c0, c1) = (state.cube(common::id(2)).unwrap(), back.cube(common::id(2)).unwrap());
        prop_assert!(c0.orientation.approx_eq(&c1.orientation, 1e-12));
        prop_assert_eq!(back.state_hash(), state.state_hash());
    }

    #[test]
    fn timeline_serializations_round_trip(state in two_cubes(), axis in axis(), dir in direction(),
                                          full in any::<bool>(), duty in prop::option::of(any::<u8>())) {
        let Ok(plan) = resolve_maneuver(&state, &ManeuverRequest::new(common::id(2), axis, dir)) else { return Ok(()) };
        let mode = if full { BroadcastMode::Full } else { BroadcastMode::Delta };
        let tl = compile_timeline_with(&plan, &PhaseTimings::default(), CompileOptions { mode, pwm_duty: duty }).unwrap();
        tl.validate().unwrap();
        prop_assert_eq!(&CommandTimeline::from_text(&tl.to_text()).unwrap().entries, &tl.entries);
        prop_assert_eq!(&CommandTimeline::read_binary(&tl.to_binary()[..]).unwrap().entries, &tl.entries);
        // Everything is OFF once the timeline has played.
        let mut on = BTreeSet::new();
        for (_, a) in tl.commands() {
            if a.polarity.value() == 0 { on.remove(&(a.cube, a.em)); } else { on.insert((a.cube, a.em)); }
        }
        prop_assert!(on.is_empty());
    }

    #[test]
    fn scenario_save_load_round_trip((state, req) in lattice_and_request(), steps in 0usize..5) {
        let s = Scenario {
            name: "prop".into(),
            description: Some("generated".into()),
            cubes: state.cubes().copied().collect(),
            scripts: vec![Script { name: "s".into(), steps: vec![req; steps], expect: Some(state.occupancy()) }],
            timings: PhaseTimings::default(),
        };
        let back = load_scenario(&save_scenario(&s)).unwrap();
        prop_assert_eq!(back.initial_state().state_hash(), state.state_hash());
        prop_assert_eq!(&back.scripts, &s.scripts);
        prop_assert_eq!(back.timings, s.timings);
    }

    #[test]
    fn permeability_table_stays_in_range(i in -5.0f64..5.0) {
        let m = PermeabilityModel::default();
        let mu = m.mu_r(i);
        prop_assert!((874.0..=2000.0).contains(&mu));
        prop_assert_eq!(mu, m.mu_r(-i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn force_is_antisymmetric(gap_mm in 0.5f64..20.0, dy_mm in -10.0f64..10.0, tilt in -0.6f64..0.6) {
        let spec = CoilSpec::default();
        let r = spec.outer_radius();
        let c1 = discretize(&spec, 1000).unwrap();
        let c2 = c1.rotated(&Rotation3::from_axis_angle(&Vector3::y_axis(), tilt))
            .translated(Vector3::new(2.0 * r + gap_mm * 1e-3 + 0.03, dy_mm * 1e-3, 0.0));
        let opts = KernelOptions { law: ForceLaw::Neumann, execution: Execution::Sequential };
        let f12 = pair_force_with(&c1, &c2, 874.0, opts).unwrap();
        let f21 = pair_force_with(&c2, &c1, 874.0, opts).unwrap();
        let rel = (f12 + f21).norm() / f12.norm();
        prop_assert!(rel <= 1e-12, "relative imbalance {rel:e}");
    }

    #[test]
    fn force_scales_with_current_product(k1 in 0.05f64..3.0, k2 in 0.05f64..3.0) {
        let spec = CoilSpec::default();
        let c1 = discretize(&spec, 1000).unwrap();
        let c2 = c1.translated(Vector3::new(2.0 * spec.outer_radius() + 1e-3, 0.0, 0.0));
        let base = pair_force_with(&c1, &c2, 874.0, KernelOptions::default()).unwrap();
        let scaled = pair_force_with(&c1.with_current(k1 * c1.current), &c2.with_current(k2 * c2.current), 874.0,
            KernelOptions::default()).unwrap();
        let expect = base * (k1 * k2);
        prop_assert!((scaled - expect).norm() <= 1e-14 * expect.norm());
    }
}
