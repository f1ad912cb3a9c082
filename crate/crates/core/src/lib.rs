//! Planning and physics for electromagnet-actuated pivoting cubes.
//!
//! * [`lattice`]: cubes, orientations and edge electromagnet numbering.
//! * [`planner`]: pivot/traversal resolution with Launch/Travel/Catch schedules.
//! * [`codec`]: 16-bit wire commands and timed command streams.
//! * [`force`]: coil discretization and the pairwise force kernel.
//! * [`dynamics`]: two-link pendulum model of a maneuver.
//! * [`scenario`]: scenario files and the shipped demonstration corpus.
//! * [`service`]: session actor and line-delimited JSON socket service.

pub mod lattice;
pub mod planner;
pub mod codec;
pub mod force;
pub mod dynamics;
pub mod scenario;
pub mod service;
