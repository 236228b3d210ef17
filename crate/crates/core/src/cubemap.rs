//! Six-face cubemaps and pinhole view extraction.

use crate::erp::{resample_to_erp, ErpDims, ErpImage, SphereSource};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::sphere::{
    camera_ray, direction_to_face_coord, face_coord_to_direction, sample_bilinear, CameraPose,
    Direction, FaceCoord, FaceId,
};

/// Six square faces of equal side, indexed by [`FaceId`].
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapImage {
    faces: Vec<ImageBuffer>,
}

impl CubemapImage {
    /// `faces` in [`FaceId::ALL`] order.
    pub fn new(faces: Vec<ImageBuffer>) -> Result<Self> {
        if faces.len() != 6 {
            return Err(Error::Shape(format!("cubemap needs 6 faces, got {}", faces.len())));
        }
        let first = &faces[0];
        if first.width() != first.height() {
            return Err(Error::Shape(format!(
                "cube faces must be square, got {}x{}",
                first.width(),
                first.height()
            )));
        }
        if let Some((i, f)) = faces.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::ShapeMismatch(format!(
                "face {} is {}x{}x{}, expected {}x{}x{}",
                FaceId::ALL[i],
                f.width(),
                f.height(),
                f.channels(),
                first.width(),
                first.height(),
                first.channels()
            )));
        }
        Ok(Self { faces })
    }

    pub fn face(&self, f: FaceId) -> &ImageBuffer {
        &self.faces[f.index()]
    }

    pub fn faces(&self) -> &[ImageBuffer] {
        &self.faces
    }

    pub fn face_side(&self) -> usize {
        self.faces[0].width()
    }

    /// Packs the faces into a 3:2 atlas with rows `[F R B]` and `[L U D]`.
    pub fn to_atlas(&self) -> ImageBuffer {
        let a = self.face_side();
        let mut atlas = ImageBuffer::new(3 * a, 2 * a, self.faces[0].channels(), self.faces[0].colorspace())
            .expect("face dimensions already validated");
        for (i, face) in self.faces.iter().enumerate() {
            atlas
                .paste(face, (i % 3) * a, (i / 3) * a)
                .expect("atlas sized for six faces");
        }
        atlas
    }

    pub fn from_atlas(atlas: &ImageBuffer) -> Result<Self> {
        let a = atlas.width() / 3;
        if a == 0 || atlas.width() != 3 * a || atlas.height() != 2 * a {
            return Err(Error::Shape(format!(
                "cubemap atlas must be 3:2, got {}x{}",
                atlas.width(),
                atlas.height()
            )));
        }
        let faces = (0..6)
            .map(|i| atlas.crop((i % 3) * a, (i / 3) * a, a, a))
            .collect::<Result<Vec<_>>>()?;
        Self::new(faces)
    }
}

/// Continuous face-pixel coordinates of gnomonic `(u, v)` on a face of side `a`.
pub fn face_uv_to_pixel(u: f64, v: f64, a: usize) -> (f64, f64) {
    ((u + 1.0) * 0.5 * a as f64, (1.0 - v) * 0.5 * a as f64)
}

pub fn face_pixel_to_uv(x: f64, y: f64, a: usize) -> (f64, f64) {
    (2.0 * x / a as f64 - 1.0, 1.0 - 2.0 * y / a as f64)
}

impl SphereSource for CubemapImage {
    fn channels(&self) -> usize {
        self.faces[0].channels()
    }

    fn colorspace(&self) -> ColorSpace {
        self.faces[0].colorspace()
    }

    // Clamped inside the selected face: no filtering across face borders.
    fn sample(&self, d: Direction, out: &mut [f32]) -> Result<()> {
        let fc = direction_to_face_coord(d);
        let (x, y) = face_uv_to_pixel(fc.u, fc.v, self.face_side());
        sample_bilinear(self.face(fc.face), x, y, false, out);
        Ok(())
    }
}

/// Renders one face of side `face_side` from any spherical source.
pub fn render_face<S: SphereSource + ?Sized>(source: &S, face: FaceId, face_side: usize) -> Result<ImageBuffer> {
    ImageBuffer::try_from_fn(face_side, face_side, source.channels(), source.colorspace(), |x, y, out| {
        let (u, v) = face_pixel_to_uv(x as f64 + 0.5, y as f64 + 0.5, face_side);
        source.sample(face_coord_to_direction(FaceCoord { face, u, v }), out)
    })
}

pub fn to_cubemap<S: SphereSource + ?Sized>(source: &S, face_side: usize) -> Result<CubemapImage> {
    if face_side < 2 {
        return Err(Error::InvalidParameter(format!("face side {face_side} < 2")));
    }
    let faces = FaceId::ALL
        .iter()
        .map(|&f| render_face(source, f, face_side))
        .collect::<Result<Vec<_>>>()?;
    CubemapImage::new(faces)
}

pub fn erp_to_cubemap(erp: &ErpImage, face_side: usize) -> Result<CubemapImage> {
    to_cubemap(erp, face_side)
}

pub fn cubemap_to_erp(cm: &CubemapImage, dims: ErpDims) -> Result<ErpImage> {
    resample_to_erp(cm, dims)
}

/// Pinhole rendering of `source` through `cam` into a `width × height` image.
pub fn extract_perspective<S: SphereSource + ?Sized>(
    source: &S,
    cam: &CameraPose,
    width: usize,
    height: usize,
) -> Result<ImageBuffer> {
    cam.validate()?;
    let frame = cam.frame();
    ImageBuffer::try_from_fn(width, height, source.channels(), source.colorspace(), |x, y, out| {
        let ray = camera_ray(cam, &frame, x as f64 + 0.5, y as f64 + 0.5, width, height);
        source.sample(ray, out)
    })
}

/// The six 90° views through the cube faces, in [`FaceId::ALL`] order.
pub fn extract_face_views<S: SphereSource + ?Sized>(source: &S, side: usize) -> Result<Vec<ImageBuffer>> {
    FaceId::ALL
        .iter()
        .map(|&f| extract_perspective(source, &CameraPose::for_face(f), side, side))
        .collect()
}
