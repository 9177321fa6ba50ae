pub mod geometry;
pub mod mesh;
pub mod basis;
pub mod method;
pub mod local_ops;
pub mod par;
pub mod sparse;
pub mod assembly;
pub mod solve;
pub mod eigen;
pub mod analysis;
pub mod harness;
