//! Experiment drivers and command-line front end for the joint radio/compute
//! solver: strict TOML configs, seeded scenario generation, the static-split
//! baseline, three reproducible experiment drivers, and a post-hoc
//! feasibility audit of everything they emit.

pub mod audit;
pub mod config;
pub mod csvout;
pub mod dra;
pub mod experiments;
pub mod scenario_gen;
