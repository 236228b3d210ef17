//! Equirectangular maps: column 0 at longitude -π, row 0 at the north pole.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::sphere::{direction_to_lonlat, lonlat_to_direction, sample_bilinear, Direction, LonLat};

/// Anything that can be sampled by direction.
pub trait SphereSource: Sync {
    fn channels(&self) -> usize;

    fn colorspace(&self) -> crate::ColorSpace;

    /// Writes the value seen along `d` into `out` (length [`channels`](Self::channels)).
    fn sample(&self, d: Direction, out: &mut [f32]) -> Result<()>;
}

/// Equirectangular panorama with `width == 2 * height`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    buffer: ImageBuffer,
}

impl ErpImage {
    pub fn new(buffer: ImageBuffer) -> Result<Self> {
        check_dims(buffer.width(), buffer.height())?;
        Ok(Self { buffer })
    }

    pub fn buffer(&self) -> &ImageBuffer {
        &self.buffer
    }

    pub fn into_buffer(self) -> ImageBuffer {
        self.buffer
    }

    pub fn width(&self) -> usize {
        self.buffer.width()
    }

    pub fn height(&self) -> usize {
        self.buffer.height()
    }

    pub fn dims(&self) -> ErpDims {
        ErpDims {
            width: self.width(),
            height: self.height(),
        }
    }
}

/// Size of an equirectangular raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErpDims {
    pub width: usize,
    pub height: usize,
}

impl ErpDims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self { width, height })
    }

    pub fn from_width(width: usize) -> Result<Self> {
        Self::new(width, width / 2)
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if height == 0 || width != 2 * height {
        return Err(Error::Shape(format!(
            "equirectangular map must be 2:1, got {width}x{height}"
        )));
    }
    Ok(())
}

pub fn erp_pixel_to_direction(dims: ErpDims, x: f64, y: f64) -> Direction {
    let lon = (x / dims.width as f64 - 0.5) * TAU;
    let lat = (0.5 - y / dims.height as f64) * PI;
    lonlat_to_direction(LonLat::new(lon, lat))
}

/// Inverse of [`erp_pixel_to_direction`]; `x` lands in `[0, width)`.
pub fn direction_to_erp_pixel(d: Direction, dims: ErpDims) -> (f64, f64) {
    let c = direction_to_lonlat(d);
    let w = dims.width as f64;
    let x = ((c.lon() / TAU + 0.5) * w).rem_euclid(w);
    let y = (0.5 - c.lat() / PI) * dims.height as f64;
    (x, y)
}

impl SphereSource for ErpImage {
    fn channels(&self) -> usize {
        self.buffer.channels()
    }

    fn colorspace(&self) -> crate::ColorSpace {
        self.buffer.colorspace()
    }

    fn sample(&self, d: Direction, out: &mut [f32]) -> Result<()> {
        let (x, y) = direction_to_erp_pixel(d, self.dims());
        sample_bilinear(&self.buffer, x, y, true, out);
        Ok(())
    }
}

/// Renders `source` into an equirectangular map of size `dims`.
pub fn resample_to_erp<S: SphereSource + ?Sized>(source: &S, dims: ErpDims) -> Result<ErpImage> {
    let buffer = ImageBuffer::try_from_fn(
        dims.width,
        dims.height,
        source.channels(),
        source.colorspace(),
        |x, y, out| source.sample(erp_pixel_to_direction(dims, x as f64 + 0.5, y as f64 + 0.5), out),
    )?;
    ErpImage::new(buffer)
}
