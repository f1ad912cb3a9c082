#![allow(dead_code)]

pub mod sweep;

use std::f64::consts::PI;

use rand::Rng;
use voxmag_core::lattice::{Cube, CubeId, GridAddress, LatticeState};

pub const MU0: f64 = 4e-7 * PI;

/// Complete elliptic integrals K(k) and E(k) by the arithmetic-geometric mean.
pub fn elliptic_ke(k: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&k), "modulus out of range: {k}");
    let (mut a, mut b) = (1.0_f64, (1.0 - k * k).sqrt());
    let mut c = k;
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..64 {
        if (a - b).abs() <= f64::EPSILON * a {
            break;
        }
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * c * c;
    }
    let kk = PI / (2.0 * a);
    (kk, kk * (1.0 - sum))
}

fn modulus(a: f64, b: f64, z: f64) -> f64 {
    (4.0 * a * b / ((a + b).powi(2) + z * z)).sqrt()
}

/// Mutual inductance of two coaxial circular loops of radii `a`, `b` whose
/// planes are `z` apart.
pub fn mutual_inductance(a: f64, b: f64, z: f64) -> f64 {
    let k = modulus(a, b, z);
    let (kk, ee) = elliptic_ke(k);
    MU0 * (a * b).sqrt() * ((2.0 / k - k) * kk - 2.0 / k * ee)
}

/// Attraction between coaxial loops carrying like currents `i1`, `i2`
/// (closed form of `-i1 i2 dM/dz`).
pub fn coaxial_loop_force(a: f64, b: f64, z: f64, i1: f64, i2: f64) -> f64 {
    let k = modulus(a, b, z);
    let (kk, ee) = elliptic_ke(k);
    let k2 = k * k;
    MU0 * i1 * i2 * z * k / (4.0 * (a * b).sqrt()) * ((2.0 - k2) / (1.0 - k2) * ee - 2.0 * kk)
}

pub fn id(n: u32) -> CubeId {
    CubeId::new(n).unwrap()
}

pub fn state(cells: &[(u32, [i32; 3])]) -> LatticeState {
    LatticeState::from_cubes(cells.iter().map(|(i, a)| Cube::new(id(*i), GridAddress::from_array(*a)))).unwrap()
}

pub const DIRS: [[i32; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// Face-connected random polycube of `n` cells grown from the origin.
pub fn random_polycube<R: Rng>(rng: &mut R, n: usize) -> Vec<[i32; 3]> {
    let mut cells = vec![[0, 0, 0]];
    while cells.len() < n {
        let base = cells[rng.gen_range(0..cells.len())];
        let d = DIRS[rng.gen_range(0..6)];
        let c = [base[0] + d[0], base[1] + d[1], base[2] + d[2]];
        if !cells.contains(&c) {
            cells.push(c);
        }
    }
    cells
}

pub fn lattice_from_cells(cells: &[[i32; 3]]) -> LatticeState {
    LatticeState::from_cubes(
        cells.iter().enumerate().map(|(i, c)| Cube::new(id(i as u32 + 1), GridAddress::from_array(*c))),
    )
    .unwrap()
}
