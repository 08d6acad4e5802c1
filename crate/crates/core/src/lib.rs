//! Core of the vrgl indoor-scene learning testbed.
//!
//! A deterministic fixed-timestep indoor scene simulator with fluents and
//! attachment-based grasping, session logging and replay, gym-style task
//! environments, desk-scale RL and IRL solvers, intention predictors and a
//! reactive social-response state machine. Networking lives in `vrgl-bridge`.

pub mod datalog;
pub mod envs;
pub mod intent;
pub mod irl;
pub mod rl;
pub mod scene;
pub mod social;

pub use scene::{Pose, SceneGraph};
