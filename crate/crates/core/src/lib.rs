//! Geometry, registration, rendering and dataset tooling for building
//! city-scale panorama datasets aligned with CAD models.

pub mod autodiff;
pub mod dataset;
pub mod geometry;
pub mod georeg;
pub mod holistic;
pub mod mesh;
pub mod pipeline;
pub mod pose;
pub mod raycast;
pub mod render;
pub mod stats;
pub mod synth;

pub use geometry::{CameraPose, EquirectGrid, PerspectiveIntrinsics, UnitDir3};
pub use mesh::{CityMesh, SemanticTag};

/// Any error raised by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    GeoReg(#[from] georeg::GeoRegError),
    #[error(transparent)]
    Pose(#[from] pose::PoseError),
    #[error(transparent)]
    Render(#[from] render::RenderError),
    #[error(transparent)]
    Holistic(#[from] holistic::HolisticError),
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}
