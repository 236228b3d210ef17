//! Floating-point rasters shared by every representation.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Transfer function of the stored samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    #[default]
    Srgb,
    Linear,
}

/// Row-major `height × width × channels` raster with samples nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    colorspace: ColorSpace,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, colorspace: ColorSpace) -> Result<Self> {
        Self::from_vec(width, height, channels, colorspace, vec![0.0; width * height * channels])
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        colorspace: ColorSpace,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty image {width}x{height}")));
        }
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            colorspace,
            data,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        colorspace: ColorSpace,
        value: &[f32],
    ) -> Result<Self> {
        let data = value.iter().copied().cycle().take(width * height * value.len()).collect();
        Self::from_vec(width, height, value.len(), colorspace, data)
    }

    /// Builds an image by evaluating `f(x, y, out)` for every pixel, rows in parallel.
    pub fn from_fn<F>(
        width: usize,
        height: usize,
        channels: usize,
        colorspace: ColorSpace,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize, &mut [f32]) + Sync,
    {
        Self::try_from_fn(width, height, channels, colorspace, |x, y, out| {
            f(x, y, out);
            Ok(())
        })
    }

    pub fn try_from_fn<F>(
        width: usize,
        height: usize,
        channels: usize,
        colorspace: ColorSpace,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(usize, usize, &mut [f32]) -> Result<()> + Sync,
    {
        let mut img = Self::new(width, height, channels, colorspace)?;
        img.data
            .par_chunks_mut(width * channels)
            .enumerate()
            .try_for_each(|(y, row)| {
                row.chunks_mut(channels)
                    .enumerate()
                    .try_for_each(|(x, px)| f(x, y, px))
            })?;
        Ok(img)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn colorspace(&self) -> ColorSpace {
        self.colorspace
    }

    pub fn set_colorspace_tag(&mut self, colorspace: ColorSpace) {
        self.colorspace = colorspace;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Copies the `w × h` window at `(x0, y0)` into a new image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Shape(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Self::from_vec(w, h, c, self.colorspace, data)
    }

    /// Writes `src` into this image with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, src: &Self, x0: usize, y0: usize) -> Result<()> {
        if src.channels != self.channels
            || x0 + src.width > self.width
            || y0 + src.height > self.height
        {
            return Err(Error::ShapeMismatch(format!(
                "cannot paste {}x{}x{} at +{x0}+{y0} into {}x{}x{}",
                src.width, src.height, src.channels, self.width, self.height, self.channels
            )));
        }
        let c = self.channels;
        for y in 0..src.height {
            let dst = ((y0 + y) * self.width + x0) * c;
            let s = y * src.width * c;
            self.data[dst..dst + src.width * c].copy_from_slice(&src.data[s..s + src.width * c]);
        }
        Ok(())
    }

    /// Returns a copy with samples in linear light.
    pub fn to_linear(&self) -> Self {
        match self.colorspace {
            ColorSpace::Linear => self.clone(),
            ColorSpace::Srgb => self.map_color(srgb_to_linear, ColorSpace::Linear),
        }
    }

    /// Returns a copy re-encoded to `target`.
    pub fn to_colorspace(&self, target: ColorSpace) -> Self {
        match (self.colorspace, target) {
            (a, b) if a == b => self.clone(),
            (ColorSpace::Srgb, ColorSpace::Linear) => self.map_color(srgb_to_linear, target),
            _ => self.map_color(linear_to_srgb, target),
        }
    }

    // Alpha (fourth channel) is always stored linearly.
    fn map_color(&self, f: fn(f32) -> f32, target: ColorSpace) -> Self {
        let c = self.channels;
        let data = self
            .data
            .par_iter()
            .enumerate()
            .map(|(i, &v)| if c == 4 && i % 4 == 3 { v } else { f(v) })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            channels: c,
            colorspace: target,
            data,
        }
    }
}

pub fn srgb_to_linear(v: f32) -> f32 {
    let v = v as f64;
    let l = if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    };
    l as f32
}

pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v as f64;
    let s = if v <= 0.003_130_8 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    };
    s as f32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths_and_channels() {
        assert!(ImageBuffer::from_vec(2, 2, 3, ColorSpace::Linear, vec![0.0; 11]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, ColorSpace::Linear).is_err());
        assert!(ImageBuffer::new(0, 2, 1, ColorSpace::Linear).is_err());
    }

    #[test]
    fn crop_and_paste_round_trip() {
        let img = ImageBuffer::from_fn(5, 4, 1, ColorSpace::Linear, |x, y, o| {
            o[0] = (y * 5 + x) as f32
        })
        .unwrap();
        let tile = img.crop(1, 2, 3, 2).unwrap();
        assert_eq!(tile.data(), &[11.0, 12.0, 13.0, 16.0, 17.0, 18.0]);
        let mut blank = ImageBuffer::new(5, 4, 1, ColorSpace::Linear).unwrap();
        blank.paste(&tile, 1, 2).unwrap();
        assert_eq!(blank.pixel(3, 3), &[18.0]);
        assert!(blank.paste(&tile, 3, 3).is_err());
    }

    #[test]
    fn srgb_transfer_is_inverse() {
        for i in 0..=1000 {
            let v = i as f32 / 1000.0;
            assert!((linear_to_srgb(srgb_to_linear(v)) - v).abs() < 1e-6);
        }
    }

    #[test]
    fn alpha_is_not_transcoded() {
        let img = ImageBuffer::filled(2, 1, ColorSpace::Srgb, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let lin = img.to_linear();
        assert_eq!(lin.pixel(0, 0)[3], 0.5);
        assert!((lin.pixel(0, 0)[0] - 0.214_041).abs() < 1e-5);
    }
}
