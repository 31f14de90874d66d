pub mod baselines;
pub mod bundled;
pub mod dexterity;
pub mod error;
pub mod evaluation;
pub mod framework;
pub mod geometry;
pub mod kinematics;
pub mod optimizer;
pub mod scene;
pub mod scoring;

pub use error::{Error, Result};
