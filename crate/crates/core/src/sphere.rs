//! Spherical and camera geometry shared by every projection.
//!
//! World frame is right-handed with `+Z` forward (face F), `+X` right (face R)
//! and `+Y` up (face U). Pixel centers sit at `index + 0.5`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Unit vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    pub const FORWARD: Direction = Direction::raw(0.0, 0.0, 1.0);
    pub const RIGHT: Direction = Direction::raw(1.0, 0.0, 0.0);
    pub const UP: Direction = Direction::raw(0.0, 1.0, 0.0);

    /// Builds a direction without normalizing. Callers guarantee unit length.
    pub const fn raw(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Normalizes `(x, y, z)`; `None` for the zero vector or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if norm > 0.0 && norm.is_finite() {
            Some(Self::raw(x / norm, y / norm, z / norm))
        } else {
            None
        }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::raw(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        Self::new(self.x, self.y, self.z).unwrap_or(Self::FORWARD)
    }

    /// Great-circle angle to `o`, robust for nearly parallel vectors.
    pub fn angle_to(self, o: Self) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Direction {
    type Output = Direction;
    fn add(self, o: Self) -> Self {
        Self::raw(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Direction {
    type Output = Direction;
    fn sub(self, o: Self) -> Self {
        Self::raw(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Direction {
    type Output = Direction;
    fn mul(self, k: f64) -> Self {
        Self::raw(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Direction {
    type Output = Direction;
    fn neg(self) -> Self {
        Self::raw(-self.x, -self.y, -self.z)
    }
}

/// Longitude in `[-π, π)`, latitude in `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LonLat {
    lon: f64,
    lat: f64,
}

impl LonLat {
    /// Wraps `lon` into `[-π, π)` and clamps `lat` to the closed polar range.
    pub fn new(lon: f64, lat: f64) -> Self {
        let mut lon = (lon + PI).rem_euclid(TAU) - PI;
        if lon >= PI {
            lon -= TAU;
        }
        Self {
            lon,
            lat: lat.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn lon(self) -> f64 {
        self.lon
    }

    pub fn lat(self) -> f64 {
        self.lat
    }
}

pub fn lonlat_to_direction(c: LonLat) -> Direction {
    let (sl, cl) = c.lat.sin_cos();
    let (so, co) = c.lon.sin_cos();
    Direction::raw(cl * so, sl, cl * co)
}

/// Inverse of [`lonlat_to_direction`]; longitude is 0 at the poles.
pub fn direction_to_lonlat(d: Direction) -> LonLat {
    let horizontal = d.x.hypot(d.z);
    let lat = d.y.atan2(horizontal);
    // Below this the longitude is numerically meaningless.
    let lon = if horizontal < 1e-15 { 0.0 } else { d.x.atan2(d.z) };
    LonLat::new(lon, lat)
}

/// The six cube faces. Declaration order is the tie-break order at edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceId {
    F,
    R,
    B,
    L,
    U,
    D,
}

impl FaceId {
    pub const ALL: [FaceId; 6] = [FaceId::F, FaceId::R, FaceId::B, FaceId::L, FaceId::U, FaceId::D];
    pub const HORIZONTAL: [FaceId; 4] = [FaceId::F, FaceId::R, FaceId::B, FaceId::L];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_horizontal(self) -> bool {
        !self.is_polar()
    }

    pub fn is_polar(self) -> bool {
        matches!(self, FaceId::U | FaceId::D)
    }

    pub fn letter(self) -> &'static str {
        match self {
            FaceId::F => "F",
            FaceId::R => "R",
            FaceId::B => "B",
            FaceId::L => "L",
            FaceId::U => "U",
            FaceId::D => "D",
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.letter() == s)
    }

    /// Horizontal neighbor across the `u = +1` edge (F→R→B→L→F).
    pub fn right_neighbor(self) -> Option<Self> {
        match self {
            FaceId::F => Some(FaceId::R),
            FaceId::R => Some(FaceId::B),
            FaceId::B => Some(FaceId::L),
            FaceId::L => Some(FaceId::F),
            _ => None,
        }
    }

    /// Horizontal neighbor across the `u = -1` edge.
    pub fn left_neighbor(self) -> Option<Self> {
        match self {
            FaceId::F => Some(FaceId::L),
            FaceId::L => Some(FaceId::B),
            FaceId::B => Some(FaceId::R),
            FaceId::R => Some(FaceId::F),
            _ => None,
        }
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// Orthonormal frame of a cube face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceBasis {
    pub normal: Direction,
    pub right: Direction,
    pub up: Direction,
}

pub fn face_basis(f: FaceId) -> FaceBasis {
    let d = Direction::raw;
    let (normal, right, up) = match f {
        FaceId::F => (d(0.0, 0.0, 1.0), d(1.0, 0.0, 0.0), d(0.0, 1.0, 0.0)),
        FaceId::R => (d(1.0, 0.0, 0.0), d(0.0, 0.0, -1.0), d(0.0, 1.0, 0.0)),
        FaceId::B => (d(0.0, 0.0, -1.0), d(-1.0, 0.0, 0.0), d(0.0, 1.0, 0.0)),
        FaceId::L => (d(-1.0, 0.0, 0.0), d(0.0, 0.0, 1.0), d(0.0, 1.0, 0.0)),
        FaceId::U => (d(0.0, 1.0, 0.0), d(1.0, 0.0, 0.0), d(0.0, 0.0, -1.0)),
        FaceId::D => (d(0.0, -1.0, 0.0), d(1.0, 0.0, 0.0), d(0.0, 0.0, 1.0)),
    };
    FaceBasis { normal, right, up }
}

/// Gnomonic coordinates on one cube face, `u` along the face's right axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCoord {
    pub face: FaceId,
    pub u: f64,
    pub v: f64,
}

impl FaceCoord {
    pub fn new(face: FaceId, u: f64, v: f64) -> Result<Self> {
        const SLACK: f64 = 1.0 + 1e-9;
        if !(u.abs() <= SLACK && v.abs() <= SLACK) {
            return Err(Error::Domain(format!("face coordinate ({u}, {v}) outside [-1, 1]^2")));
        }
        Ok(Self { face, u, v })
    }
}

pub fn face_coord_to_direction(fc: FaceCoord) -> Direction {
    let b = face_basis(fc.face);
    (b.normal + b.right * fc.u + b.up * fc.v).normalized()
}

/// Face whose normal has the largest dot product with `d`; ties keep the earlier face.
pub fn select_face(d: Direction) -> FaceId {
    let scores = [d.z, d.x, -d.z, -d.x, d.y, -d.y];
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    FaceId::ALL[best]
}

pub fn direction_to_face_coord(d: Direction) -> FaceCoord {
    let face = select_face(d);
    let b = face_basis(face);
    let depth = d.dot(b.normal);
    FaceCoord {
        face,
        u: (d.dot(b.right) / depth).clamp(-1.0, 1.0),
        v: (d.dot(b.up) / depth).clamp(-1.0, 1.0),
    }
}

/// Bilinear sample at continuous pixel coordinates `(x, y)`.
///
/// With `wrap_x` the column index wraps modulo the width; otherwise `x` is
/// clamped to the outer pixel centers. `y` always clamps to `[0.5, height - 0.5]`.
pub fn sample_bilinear(img: &ImageBuffer, x: f64, y: f64, wrap_x: bool, out: &mut [f32]) {
    sample_bilinear_window(img, Window::full(img), x, y, wrap_x, out);
}

/// Axis-aligned pixel window of an image used as an independent sampling domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Window {
    pub fn full(img: &ImageBuffer) -> Self {
        Self {
            x0: 0,
            y0: 0,
            width: img.width(),
            height: img.height(),
        }
    }
}

/// Bilinear sample restricted to `win`; coordinates are relative to the window origin.
pub fn sample_bilinear_window(
    img: &ImageBuffer,
    win: Window,
    x: f64,
    y: f64,
    wrap_x: bool,
    out: &mut [f32],
) {
    let w = win.width as f64;
    let h = win.height as f64;
    let y = y.clamp(0.5, h - 0.5) - 0.5;
    let (x0, x1, fx) = if wrap_x {
        let xs = (x - 0.5).rem_euclid(w);
        let base = xs.floor();
        let i0 = (base as usize).min(win.width - 1);
        (i0, (i0 + 1) % win.width, xs - base)
    } else {
        let xs = x.clamp(0.5, w - 0.5) - 0.5;
        let base = xs.floor();
        let i0 = base as usize;
        (i0, (i0 + 1).min(win.width - 1), xs - base)
    };
    let base_y = y.floor();
    let y0 = base_y as usize;
    let y1 = (y0 + 1).min(win.height - 1);
    let fy = y - base_y;

    let p00 = img.pixel(win.x0 + x0, win.y0 + y0);
    let p10 = img.pixel(win.x0 + x1, win.y0 + y0);
    let p01 = img.pixel(win.x0 + x0, win.y0 + y1);
    let p11 = img.pixel(win.x0 + x1, win.y0 + y1);
    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    for (c, o) in out.iter_mut().enumerate() {
        let v = p00[c] as f64 * w00
            + p10[c] as f64 * w10
            + p01[c] as f64 * w01
            + p11[c] as f64 * w11;
        *o = v as f32;
    }
}

/// Pinhole camera orientation and field of view (radians).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraPose {
    pub yaw: f64,
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
    pub hfov: f64,
    pub vfov: f64,
}

/// Camera axes in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub forward: Direction,
    pub right: Direction,
    pub up: Direction,
}

impl CameraPose {
    pub fn new(yaw: f64, pitch: f64, roll: f64, hfov: f64, vfov: f64) -> Result<Self> {
        let pose = Self {
            yaw,
            pitch,
            roll,
            hfov,
            vfov,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |a: f64| a > 0.0 && a < PI;
        if !(ok(self.hfov) && ok(self.vfov)) {
            return Err(Error::InvalidParameter(format!(
                "field of view ({}, {}) must lie strictly inside (0, pi)",
                self.hfov, self.vfov
            )));
        }
        if ![self.yaw, self.pitch, self.roll].iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidParameter("camera angles must be finite".into()));
        }
        Ok(())
    }

    /// The 90°×90° camera looking through the center of `face` with the face's own axes.
    pub fn for_face(face: FaceId) -> Self {
        let (yaw, pitch) = match face {
            FaceId::F => (0.0, 0.0),
            FaceId::R => (FRAC_PI_2, 0.0),
            FaceId::B => (PI, 0.0),
            FaceId::L => (-FRAC_PI_2, 0.0),
            FaceId::U => (0.0, FRAC_PI_2),
            FaceId::D => (0.0, -FRAC_PI_2),
        };
        Self {
            yaw,
            pitch,
            roll: 0.0,
            hfov: FRAC_PI_2,
            vfov: FRAC_PI_2,
        }
    }

    /// Axes after yaw about world Y, pitch about the camera X axis, then roll about
    /// the viewing axis. Positive pitch looks up; positive roll turns the image
    /// counterclockwise as seen by the viewer.
    pub fn frame(&self) -> CameraFrame {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        let forward = Direction::raw(cp * sy, sp, cp * cy);
        let right0 = Direction::raw(cy, 0.0, -sy);
        let up0 = Direction::raw(-sp * sy, cp, -sp * cy);
        CameraFrame {
            forward,
            right: right0 * cr + up0 * sr,
            up: up0 * cr - right0 * sr,
        }
    }
}

/// Projection of a ray into a camera image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumHit {
    /// Normalized image-plane coordinates in `[-1, 1]`, `v` up.
    pub ndc: (f64, f64),
    /// Continuous pixel coordinates in a `width × height` image.
    pub pixel: (f64, f64),
}

/// Projects `d` through the pinhole camera; `None` if the ray misses the frustum.
pub fn direction_in_frustum(
    d: Direction,
    cam: &CameraPose,
    width: usize,
    height: usize,
) -> Option<FrustumHit> {
    let frame = cam.frame();
    let depth = d.dot(frame.forward);
    if depth <= 0.0 {
        return None;
    }
    let u = d.dot(frame.right) / depth / (cam.hfov * 0.5).tan();
    let v = d.dot(frame.up) / depth / (cam.vfov * 0.5).tan();
    if u.abs() > 1.0 || v.abs() > 1.0 {
        return None;
    }
    Some(FrustumHit {
        ndc: (u, v),
        pixel: ((u + 1.0) * 0.5 * width as f64, (1.0 - v) * 0.5 * height as f64),
    })
}

/// World ray through the center of pixel `(x, y)` of a `width × height` camera image.
pub fn camera_ray(cam: &CameraPose, frame: &CameraFrame, x: f64, y: f64, width: usize, height: usize) -> Direction {
    let u = (2.0 * x / width as f64 - 1.0) * (cam.hfov * 0.5).tan();
    let v = (1.0 - 2.0 * y / height as f64) * (cam.vfov * 0.5).tan();
    (frame.forward + frame.right * u + frame.up * v).normalized()
}
