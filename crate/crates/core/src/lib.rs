pub mod engine;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mixture;
pub mod nnls;
pub mod optimizer;
pub mod targets;
