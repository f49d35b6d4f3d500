//! Artifact persistence and configuration files.

mod artifacts;
pub mod config;
mod container;

pub use artifacts::{
    compressed_from_container, compressed_to_container, cube_from_container, cube_to_container,
    model_from_container, model_to_container, network_envelope_len, network_from_container,
    network_to_container, reflectivity_from_container, reflectivity_to_container, Artifact,
    KIND_COMPRESSED, KIND_CUBE, KIND_MODEL, KIND_NETWORK, KIND_REFLECTIVITY,
};
pub use container::{Block, Container, FORMAT_VERSION, MAGIC, PREAMBLE_LEN};
