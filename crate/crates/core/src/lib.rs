//! ViewPoint panorama maps: conversion between equirectangular, cubemap and
//! ViewPoint representations, overlap fusion, condition masks and metrics.

pub mod cubemap;
pub mod erp;
pub mod error;
pub mod fusion;
pub mod image;
pub mod io;
pub mod metrics;
pub mod sphere;
pub mod tensor_layout;
pub mod viewpoint;

pub use cubemap::CubemapImage;
pub use erp::{ErpDims, ErpImage, SphereSource};
pub use error::{Error, Result};
pub use image::{ColorSpace, ImageBuffer};
pub use sphere::{CameraPose, Direction, FaceId, LonLat};
pub use viewpoint::{Subregion, ViewPointImage, ViewPointLayout};
