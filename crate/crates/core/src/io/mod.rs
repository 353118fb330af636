//! Model description XML, `.fmu` archive metadata and trajectory CSV files.

mod archive;
mod csv;
mod xml;

pub use archive::{open_archive, write_archive, ArchiveManifest, KNOWN_PLATFORMS};
pub use csv::{
    read_named_trajectory_csv, read_trajectory, read_trajectory_csv, write_trajectory, write_trajectory_csv,
    NamedTrajectory,
};
pub use xml::{parse_model_description, serialize_model_description};
