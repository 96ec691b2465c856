//! Adaptive iterative linearized finite elements for energy-minimizing
//! elliptic problems, with local energy-reduction indicators.

pub mod adaptivity;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod models;
pub mod solver;
pub mod run;
pub mod meshio;
pub mod report;
