//! Differentiable Monte Carlo inverse rendering: joint recovery of a
//! far-field environment map, spatially varying BRDF parameters and
//! per-image masks of occluders that never appear in the images, plus a
//! one-dimensional conditioning analyzer for the same problem.

pub mod autodiff;
pub mod envlight;
pub mod flatland;
pub mod geometry;
pub mod material;
pub mod occluder;
pub mod renderer;
pub mod sampling;
pub mod solver;
pub mod workbench;

pub use autodiff::{ParamGroup, ParameterStore, Tape, Var};
pub use envlight::{EnvSamplingTable, EnvironmentPyramid};
pub use geometry::{ObjectGeometry, Ray, SurfaceHit, TriangleMesh, Vec3};
pub use material::{BrdfKind, BrdfParams, MaterialField, MaterialModel};
pub use occluder::OccluderModel;
pub use renderer::{Camera, Image, RenderSettings, Scene};
