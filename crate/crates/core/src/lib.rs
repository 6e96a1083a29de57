pub mod fem;
pub mod materials;
pub mod mesh;
pub mod objective;
pub mod optimizer;
pub mod polarization;
pub mod problem;
pub mod sensitivity;
