//! Master-slave multi-agent navigation over a deterministic grid world.
//!
//! The geometric and metric kernels are generic over the scalar type
//! ([`num::Real`]); system-level code is fixed to `f64` through the aliases
//! below.

pub mod agents;
pub mod evalkit;
pub mod geom;
pub mod llm;
pub mod mapper;
pub mod memory;
pub mod num;
pub mod orchestrator;
pub mod reflection;
pub mod simworld;

pub use geom::{Action, Direction, Heading};

pub type Pose = geom::Pose<f64>;
pub type Point = geom::Point<f64>;
pub type WorldMap = mapper::WorldMap<f64>;
pub type GeometricMap = mapper::GeometricMap<f64>;
pub type MapSnapshot = mapper::MapSnapshot<f64>;

pub type Pose32 = geom::Pose<f32>;
pub type Point32 = geom::Point<f32>;
pub type WorldMap32 = mapper::WorldMap<f32>;
