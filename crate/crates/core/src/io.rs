//! PNG files, cubemap layouts on disk, ViewPoint sidecars and frame sequences.
//!
//! Files are 8-bit PNG. Colour images are stored sRGB-encoded; single-channel
//! images (masks) are stored as plain grey levels. Every write goes to a
//! temporary file in the destination directory and is renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::cubemap::CubemapImage;
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::sphere::{CameraPose, FaceId};
use crate::viewpoint::{ViewPointImage, ViewPointLayout, ViewPointSidecar, LAYOUT_VERSION};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Writes `bytes` to `path` through a temporary sibling file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes an image as 8-bit PNG. Linear colour images are converted to sRGB first.
pub fn encode_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let stored = if img.channels() > 1 && img.colorspace() == ColorSpace::Linear {
        img.to_colorspace(ColorSpace::Srgb)
    } else {
        img.clone()
    };
    let (w, h) = (stored.width() as u32, stored.height() as u32);
    let bytes: Vec<u8> = stored.data().iter().map(|&v| quantize(v)).collect();
    let dynamic = match stored.channels() {
        1 => image::GrayImage::from_raw(w, h, bytes).map(DynamicImage::ImageLuma8),
        3 => image::RgbImage::from_raw(w, h, bytes).map(DynamicImage::ImageRgb8),
        _ => image::RgbaImage::from_raw(w, h, bytes).map(DynamicImage::ImageRgba8),
    }
    .expect("buffer length matches dimensions");
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|source| Error::Codec {
            path: PathBuf::from("<memory>"),
            source,
        })?;
    Ok(out.into_inner())
}

pub fn save_png(path: &Path, img: &ImageBuffer) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

/// Width and height from the PNG header, without decoding pixels.
pub fn png_dimensions(path: &Path) -> Result<(usize, usize)> {
    let (w, h) = image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(source) => Error::io(path, source),
        source => Error::Codec {
            path: path.to_path_buf(),
            source,
        },
    })?;
    Ok((w as usize, h as usize))
}

/// Loads an 8-bit PNG. Grey images load as 1 channel tagged linear, colour
/// images as 3 or 4 channels tagged sRGB.
pub fn load_png(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let dynamic = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let (channels, raw, cs) = match dynamic {
        DynamicImage::ImageLuma8(g) => (1, g.into_raw(), ColorSpace::Linear),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgba8(_) => (4, dynamic.to_rgba8().into_raw(), ColorSpace::Srgb),
        other => (3, other.to_rgb8().into_raw(), ColorSpace::Srgb),
    };
    let data = raw.into_iter().map(|b| b as f32 / 255.0).collect();
    ImageBuffer::from_vec(w, h, channels, cs, data)
}

/// `<dir>/<stem>.json` next to a map file.
pub fn sidecar_path(map: &Path) -> PathBuf {
    map.with_extension("json")
}

pub fn save_viewpoint(path: &Path, vp: &ViewPointImage) -> Result<()> {
    save_png(path, vp.buffer())?;
    let json = serde_json::to_vec_pretty(&vp.sidecar()).expect("sidecar serializes");
    write_atomic(&sidecar_path(path), &json)
}

/// Loads a ViewPoint map; without a sidecar the layout is inferred from the side length.
pub fn load_viewpoint(path: &Path) -> Result<ViewPointImage> {
    let buffer = load_png(path)?;
    let side = sidecar_path(path);
    let layout = if side.exists() {
        let text = fs::read(&side).map_err(|e| Error::io(&side, e))?;
        let meta: ViewPointSidecar = serde_json::from_slice(&text).map_err(|e| Error::Metadata {
            path: side.clone(),
            reason: e.to_string(),
        })?;
        if meta.layout_version != LAYOUT_VERSION {
            return Err(Error::Metadata {
                path: side,
                reason: format!("unsupported layout version {}", meta.layout_version),
            });
        }
        ViewPointLayout::new(meta.n)?
    } else {
        ViewPointLayout::from_map_side(buffer.width())?
    };
    ViewPointImage::new(buffer, layout)
}

/// Saves a cubemap as a 3:2 atlas when `path` ends in `.png`, otherwise as a
/// directory of `F.png`, `R.png`, ... files.
pub fn save_cubemap(path: &Path, cm: &CubemapImage) -> Result<()> {
    if is_png(path) {
        return save_png(path, &cm.to_atlas());
    }
    for face in FaceId::ALL {
        save_png(&path.join(format!("{}.png", face.letter())), cm.face(face))?;
    }
    Ok(())
}

pub fn load_cubemap(path: &Path) -> Result<CubemapImage> {
    if path.is_dir() {
        let faces = FaceId::ALL
            .iter()
            .map(|f| load_png(&path.join(format!("{}.png", f.letter()))))
            .collect::<Result<Vec<_>>>()?;
        CubemapImage::new(faces)
    } else {
        CubemapImage::from_atlas(&load_png(path)?)
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Erp,
    Cubemap,
    Viewpoint,
    Perspective,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "erp" => Ok(Self::Erp),
            "cubemap" | "cp" => Ok(Self::Cubemap),
            "viewpoint" | "vp" => Ok(Self::Viewpoint),
            "perspective" => Ok(Self::Perspective),
            _ => Err(Error::InvalidParameter(format!("unknown representation {s:?}"))),
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Erp => "erp",
            Self::Cubemap => "cubemap",
            Self::Viewpoint => "viewpoint",
            Self::Perspective => "perspective",
        })
    }
}

/// Frame sequence manifest. Cubemap frames are 3:2 atlases; `width` and
/// `height` are the per-frame PNG dimensions. Poses are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub representation: Representation,
    pub frames: usize,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<Vec<CameraPose>>,
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("frame_{index:05}.png"))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_slice(&text).map_err(|e| Error::Metadata {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let bad = |reason: String| Error::Metadata {
        path: path.clone(),
        reason,
    };
    if m.schema != MANIFEST_SCHEMA {
        return Err(bad(format!("unsupported schema {}", m.schema)));
    }
    if let Some(p) = &m.poses {
        if p.len() != 1 && p.len() != m.frames {
            return Err(bad(format!("{} poses for {} frames", p.len(), m.frames)));
        }
    }
    for i in 0..m.frames {
        if !frame_path(dir, i).is_file() {
            return Err(Error::io(
                frame_path(dir, i),
                std::io::Error::new(std::io::ErrorKind::NotFound, "frame missing from sequence"),
            ));
        }
    }
    Ok(m)
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let json = serde_json::to_vec_pretty(m).expect("manifest serializes");
    write_atomic(&dir.join(MANIFEST_NAME), &json)
}

/// Loads frame `index` and checks it against the manifest dimensions.
pub fn load_frame(dir: &Path, m: &Manifest, index: usize) -> Result<ImageBuffer> {
    let img = load_png(&frame_path(dir, index))?;
    if img.width() != m.width || img.height() != m.height {
        return Err(Error::ShapeMismatch(format!(
            "frame {index} is {}x{}, manifest says {}x{}",
            img.width(),
            img.height(),
            m.width,
            m.height
        )));
    }
    Ok(img)
}
