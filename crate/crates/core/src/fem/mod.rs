//! P1 finite elements on interval and structured triangle meshes.

mod assembly;
mod mesh;
mod space;

pub use assembly::{
    assemble_mass, assemble_stiffness, assemble_truncated_mass, DirichletSolver, Stiffness,
};
pub use mesh::{Domain, Mesh, Point};
pub use space::{
    l2_inner, l2_norm, ControlField, FeFunction, FeSpace, PointLabel, PointwiseClassification,
    QuadratureRule,
};
