//! ViewPoint maps.
//!
//! A subregion is a square of side `s = 2n` pixels built around one horizontal
//! cube face. The central face appears as a diamond touching the midpoints of
//! the square's sides; the four corner triangles hold the quarters of the
//! neighboring faces that touch the central face, rigidly unfolded, except the
//! U corner which holds the whole semicircle of U adjacent to the central face,
//! squeezed radially into the triangle.
//!
//! Geometry is expressed in the *unfolded plane* of a subregion: `(p, q)` in
//! face units, the central face spanning `[-1, 1]²` with `p` along its right
//! axis and `q` along its up axis. The subregion square is `|p| + |q| <= 2`.
//!
//! The four subregions are laid out in a 2×2 grid `[L F / B R]` so that their
//! D corners meet at the map center and the D face is continuous there.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::erp::{resample_to_erp, ErpDims, ErpImage, SphereSource};
use crate::error::{Error, Result};
use crate::image::{linear_to_srgb, srgb_to_linear, ColorSpace, ImageBuffer};
use crate::sphere::{
    direction_in_frustum, face_basis, sample_bilinear, sample_bilinear_window, select_face,
    CameraPose, Direction, FaceId, Window,
};

/// Subregion identified by its central face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subregion {
    L,
    F,
    B,
    R,
}

impl Subregion {
    /// Grid order: top-left, top-right, bottom-left, bottom-right.
    pub const ALL: [Subregion; 4] = [Subregion::L, Subregion::F, Subregion::B, Subregion::R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn face(self) -> FaceId {
        match self {
            Subregion::L => FaceId::L,
            Subregion::F => FaceId::F,
            Subregion::B => FaceId::B,
            Subregion::R => FaceId::R,
        }
    }

    pub fn from_face(f: FaceId) -> Option<Self> {
        match f {
            FaceId::L => Some(Subregion::L),
            FaceId::F => Some(Subregion::F),
            FaceId::B => Some(Subregion::B),
            FaceId::R => Some(Subregion::R),
            _ => None,
        }
    }

    /// Subregion whose central face is the right neighbor of this one's.
    pub fn right(self) -> Self {
        Self::from_face(self.face().right_neighbor().unwrap()).unwrap()
    }

    pub fn left(self) -> Self {
        Self::from_face(self.face().left_neighbor().unwrap()).unwrap()
    }

    /// Image direction (x right, y up; unnormalized signs) of the central face's
    /// up axis inside the subregion image.
    ///
    /// Frozen so that the rotated overlap quadrants addressed by the fusion
    /// update coincide pixel for pixel: F keeps L top-left, R bottom-right, U
    /// top-right; the other three follow by the quarter turns the update applies.
    pub fn up_in_image(self) -> (f64, f64) {
        match self {
            Subregion::F => (1.0, 1.0),
            Subregion::L => (-1.0, 1.0),
            Subregion::B => (-1.0, -1.0),
            Subregion::R => (1.0, -1.0),
        }
    }

    /// Image direction of the central face's right axis (up turned clockwise).
    pub fn right_in_image(self) -> (f64, f64) {
        let (ux, uy) = self.up_in_image();
        (uy, -ux)
    }
}

/// Which piece of a subregion a point of its unfolded plane falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    Central,
    LeftNeighbor,
    RightNeighbor,
    Up,
    Down,
}

pub fn classify_plane_point(p: f64, q: f64) -> Piece {
    if p.abs() <= 1.0 && q.abs() <= 1.0 {
        Piece::Central
    } else if p < -1.0 && p.abs() >= q.abs() {
        Piece::LeftNeighbor
    } else if p > 1.0 && p.abs() >= q.abs() {
        Piece::RightNeighbor
    } else if q > 1.0 {
        Piece::Up
    } else {
        Piece::Down
    }
}

/// Where a subregion sits in the 2×2 map grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub col: usize,
    pub row: usize,
    /// Clockwise quarter turns applied to the subregion image when placed.
    pub quarter_turns: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPointLayout {
    n: usize,
}

pub const LAYOUT_VERSION: u32 = 1;

impl ViewPointLayout {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("ViewPoint quadrant side n = {n} < 2")));
        }
        Ok(Self { n })
    }

    /// Layout whose map side equals `map_side` (must be a multiple of 4).
    pub fn from_map_side(map_side: usize) -> Result<Self> {
        if !map_side.is_multiple_of(4) {
            return Err(Error::Shape(format!("ViewPoint map side {map_side} is not a multiple of 4")));
        }
        Self::new(map_side / 4)
    }

    /// Quadrant side.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Subregion side `s = 2n`.
    pub fn subregion_side(&self) -> usize {
        2 * self.n
    }

    pub fn map_side(&self) -> usize {
        4 * self.n
    }

    /// Central face side in pixels, `s / √2`.
    pub fn face_side(&self) -> f64 {
        self.subregion_side() as f64 * FRAC_1_SQRT_2
    }

    pub fn placement(&self, sub: Subregion) -> Placement {
        let (col, row) = match sub {
            Subregion::L => (0, 0),
            Subregion::F => (1, 0),
            Subregion::B => (0, 1),
            Subregion::R => (1, 1),
        };
        // Map center corner of the cell, in x-right/y-up signs.
        let target = (if col == 0 { 1.0 } else { -1.0 }, if row == 0 { -1.0 } else { 1.0 });
        let (ux, uy) = sub.up_in_image();
        let mut d_corner = (-ux, -uy);
        let mut turns = 0u8;
        while d_corner != target {
            d_corner = (d_corner.1, -d_corner.0);
            turns += 1;
        }
        Placement {
            col,
            row,
            quarter_turns: turns,
        }
    }

    pub fn window(&self, sub: Subregion) -> Window {
        let s = self.subregion_side();
        let pl = self.placement(sub);
        Window {
            x0: pl.col * s,
            y0: pl.row * s,
            width: s,
            height: s,
        }
    }

    /// Subregion coordinates `(i, j)` (row, column) to unfolded-plane `(p, q)`.
    pub fn plane_of(&self, sub: Subregion, i: f64, j: f64) -> (f64, f64) {
        let n = self.n as f64;
        let dx = j - n;
        let dy = n - i;
        let (ux, uy) = sub.up_in_image();
        let (rx, ry) = sub.right_in_image();
        ((dx * rx + dy * ry) / n, (dx * ux + dy * uy) / n)
    }

    /// Inverse of [`plane_of`](Self::plane_of).
    pub fn subregion_of_plane(&self, sub: Subregion, p: f64, q: f64) -> (f64, f64) {
        let half = self.n as f64 * 0.5;
        let (ux, uy) = sub.up_in_image();
        let (rx, ry) = sub.right_in_image();
        let dx = half * (p * rx + q * ux);
        let dy = half * (p * ry + q * uy);
        (self.n as f64 - dy, self.n as f64 + dx)
    }

    /// Subregion `(i, j)` to continuous map pixel coordinates `(x, y)`.
    pub fn subregion_to_map(&self, sub: Subregion, i: f64, j: f64) -> (f64, f64) {
        let s = self.subregion_side() as f64;
        let pl = self.placement(sub);
        let (mut x, mut y) = (j, i);
        for _ in 0..pl.quarter_turns {
            (x, y) = (s - y, x);
        }
        (x + (pl.col as f64) * s, y + (pl.row as f64) * s)
    }

    /// Map pixel coordinates to the subregion covering them and its `(i, j)`.
    pub fn map_to_subregion(&self, x: f64, y: f64) -> SubregionCoord {
        let s = self.subregion_side() as f64;
        let col = if x < s { 0 } else { 1 };
        let row = if y < s { 0 } else { 1 };
        let sub = Subregion::ALL[row * 2 + col];
        let pl = self.placement(sub);
        let (mut lx, mut ly) = ((x - col as f64 * s).clamp(0.0, s), (y - row as f64 * s).clamp(0.0, s));
        for _ in 0..pl.quarter_turns {
            (lx, ly) = (ly, s - lx);
        }
        SubregionCoord { sub, i: ly, j: lx }
    }
}

impl Default for ViewPointLayout {
    /// `n = 256`, a 1024×1024 map for 1024×512 equirectangular inputs.
    fn default() -> Self {
        Self { n: 256 }
    }
}

/// Continuous position inside one subregion image, `i` row and `j` column in `[0, s]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubregionCoord {
    pub sub: Subregion,
    pub i: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedCoord {
    pub coord: SubregionCoord,
    pub weight: f64,
}

/// One or two subregion positions showing the same direction, with blend weights summing to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpPixelSource {
    entries: [WeightedCoord; 2],
    len: usize,
}

impl VpPixelSource {
    fn single(coord: SubregionCoord) -> Self {
        let e = WeightedCoord { coord, weight: 1.0 };
        Self {
            entries: [e, e],
            len: 1,
        }
    }

    fn pair(a: SubregionCoord, wa: f64, b: SubregionCoord) -> Self {
        Self {
            entries: [
                WeightedCoord { coord: a, weight: wa },
                WeightedCoord {
                    coord: b,
                    weight: 1.0 - wa,
                },
            ],
            len: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[WeightedCoord] {
        &self.entries[..self.len]
    }

    /// Entry with the largest weight; the first one on ties.
    pub fn dominant(&self) -> &WeightedCoord {
        let e = self.entries();
        if e.len() == 2 && e[1].weight > e[0].weight {
            &e[1]
        } else {
            &e[0]
        }
    }
}

// ---------------------------------------------------------------------------
// Semicircle <-> triangle warp

/// Radial extent of the triangle with legs meeting at the apex, per polar angle.
pub fn triangle_extent(theta: f64, a: f64) -> f64 {
    a / (theta.sin() + theta.cos().abs())
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("angle {theta} outside [0, pi]")));
    }
    Ok(())
}

/// Squeezes the point `(r, θ)` of the semicircle of radius `a` into the
/// right isosceles triangle on the same diameter. The angle is unchanged.
pub fn semicircle_to_triangle(r: f64, theta: f64, a: f64) -> Result<(f64, f64)> {
    check_angle(theta)?;
    if a.is_nan() || a <= 0.0 || !(0.0..=a).contains(&r) {
        return Err(Error::Domain(format!("radius {r} outside [0, {a}]")));
    }
    Ok((triangle_extent(theta, a) * (r / a), theta))
}

/// Exact inverse of [`semicircle_to_triangle`].
pub fn triangle_to_semicircle(r_star: f64, theta: f64, a: f64) -> Result<(f64, f64)> {
    check_angle(theta)?;
    let d = triangle_extent(theta, a);
    if a.is_nan() || a <= 0.0 || r_star < 0.0 || r_star > d * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("radius {r_star} outside the triangle (extent {d})")));
    }
    Ok((a * (r_star / d).min(1.0), theta))
}

// Cartesian forms of the warp in the unfolded plane, polar origin at the
// midpoint (0, 1) of the edge shared with U and unit radius.

pub(crate) fn plane_triangle_to_semicircle(p: f64, q: f64) -> (f64, f64) {
    let h = q - 1.0;
    let r_star = p.hypot(h);
    if r_star == 0.0 {
        return (p, q);
    }
    // r = r*·(sin θ + |cos θ|) = |p| + h
    let k = (p.abs() + h) / r_star;
    (p * k, 1.0 + h * k)
}

pub(crate) fn plane_semicircle_to_triangle(p: f64, q: f64) -> (f64, f64) {
    let h = q - 1.0;
    let r = p.hypot(h);
    if r == 0.0 {
        return (p, q);
    }
    let k = r / (p.abs() + h);
    (p * k, 1.0 + h * k)
}

// ---------------------------------------------------------------------------
// Unfolded plane <-> cube surface

/// Cube-surface point (on `[-1, 1]³`) shown at plane position `(p, q)` of
/// `sub`, by rigid unfolding of the adjacent faces. No warp is applied.
pub(crate) fn plane_to_cube_point(sub: Subregion, p: f64, q: f64) -> Direction {
    let b = face_basis(sub.face());
    match classify_plane_point(p, q) {
        Piece::Central => b.normal + b.right * p + b.up * q,
        Piece::LeftNeighbor => b.normal * (2.0 + p) - b.right + b.up * q,
        Piece::RightNeighbor => b.normal * (2.0 - p) + b.right + b.up * q,
        Piece::Down => b.normal * (2.0 + q) + b.right * p - b.up,
        Piece::Up => b.normal * (2.0 - q) + b.right * p + b.up,
    }
}

/// Rigid unfolding into `sub`'s plane of a cube point `c` lying on `face`,
/// which must be `sub`'s central face or one of its four neighbors.
pub(crate) fn cube_point_to_plane(sub: Subregion, face: FaceId, c: Direction) -> (f64, f64) {
    let b = face_basis(sub.face());
    let n = face_basis(face).normal;
    let p = c.dot(b.right);
    let q = c.dot(b.up);
    let depth = 1.0 - c.dot(b.normal);
    if n == b.right {
        (1.0 + depth, q)
    } else if n == -b.right {
        (-1.0 - depth, q)
    } else if n == b.up {
        (p, 1.0 + depth)
    } else if n == -b.up {
        (p, -1.0 - depth)
    } else {
        (p, q)
    }
}

fn to_cube_point(d: Direction) -> Direction {
    let m = d.x.abs().max(d.y.abs()).max(d.z.abs());
    d * (1.0 / m)
}

/// Plane position of `(i, j)` after undoing the U warp, i.e. rigid plane coordinates.
fn rigid_plane_of(layout: &ViewPointLayout, sc: SubregionCoord) -> (f64, f64) {
    let s = layout.subregion_side() as f64;
    let (p, q) = layout.plane_of(sc.sub, sc.i.clamp(0.0, s), sc.j.clamp(0.0, s));
    if classify_plane_point(p, q) == Piece::Up {
        plane_triangle_to_semicircle(p, q)
    } else {
        (p, q)
    }
}

pub fn subregion_coord_to_direction(sc: SubregionCoord, layout: &ViewPointLayout) -> Direction {
    let (p, q) = rigid_plane_of(layout, sc);
    plane_to_cube_point(sc.sub, p, q).normalized()
}

// ---------------------------------------------------------------------------
// Overlap weights

/// Weight of a subregion's own copy at horizontal plane offset `|p|` from its
/// center, inside a shared quadrant. At pixel centers this is exactly the
/// gradient matrix used by the fusion update.
pub fn rhombus_weight(n: usize, abs_p: f64) -> f64 {
    let n = n as f64;
    ((2.0 * n - 1.0 - n * abs_p) / (2.0 * (n - 1.0))).clamp(0.0, 1.0)
}

/// Plane center of a neighbor's U semicircle as seen from `sub`'s plane.
pub(crate) fn neighbor_semicircle_center(left: bool) -> (f64, f64) {
    if left {
        (-1.0, 2.0)
    } else {
        (1.0, 2.0)
    }
}

/// Own weight of a point in the lens where the unit semicircles centered at
/// `own` and `other` overlap: the point's depth inside its own circle relative
/// to the summed depths, so 0 on its own boundary and 1 on the other's. Along
/// the center axis this is the linear ramp `(1 - t) / (2 - |other - own|)`.
pub fn petal_weight(own: (f64, f64), other: (f64, f64), point: (f64, f64)) -> f64 {
    let depth = |c: (f64, f64)| (1.0 - (point.0 - c.0).hypot(point.1 - c.1)).max(0.0);
    let (a, b) = (depth(own), depth(other));
    if a + b == 0.0 {
        return 0.5;
    }
    a / (a + b)
}

// ---------------------------------------------------------------------------
// Direction -> subregions

const U_SLACK: f64 = 1e-9;

/// Every subregion position showing `d`, with fusion weights.
pub fn direction_to_subregion_coords(d: Direction, layout: &ViewPointLayout) -> VpPixelSource {
    let c = to_cube_point(d);
    let face = select_face(d);
    let coord = |sub: Subregion, p: f64, q: f64| {
        let (i, j) = layout.subregion_of_plane(sub, p, q);
        SubregionCoord { sub, i, j }
    };
    match face {
        FaceId::U => {
            let mut hits: [(Subregion, f64, f64, f64); 4] = [(Subregion::L, 0.0, 0.0, f64::INFINITY); 4];
            let mut count = 0;
            for sub in Subregion::ALL {
                let (p, q) = cube_point_to_plane(sub, FaceId::U, c);
                let r = p.hypot(q - 1.0);
                if r <= 1.0 + U_SLACK {
                    hits[count] = (sub, p, q, r);
                    count += 1;
                }
            }
            if count == 0 {
                // Coverage is complete; only rounding at a face corner lands here.
                for sub in Subregion::ALL {
                    let (p, q) = cube_point_to_plane(sub, FaceId::U, c);
                    let r = p.hypot(q - 1.0);
                    if r < hits[0].3 {
                        hits[0] = (sub, p, q, r);
                    }
                }
                count = 1;
            }
            if count > 2 {
                // Only at the U center, where every semicircle boundary meets.
                hits[..count].sort_by(|a, b| a.3.total_cmp(&b.3));
                count = 2;
            }
            let warp = |h: &(Subregion, f64, f64, f64)| {
                let (p, q) = plane_semicircle_to_triangle(h.1, h.2.max(1.0));
                coord(h.0, p, q)
            };
            if count == 1 {
                return VpPixelSource::single(warp(&hits[0]));
            }
            let (a, b) = (&hits[0], &hits[1]);
            let other_center = if b.0 == a.0.left() {
                neighbor_semicircle_center(true)
            } else if b.0 == a.0.right() {
                neighbor_semicircle_center(false)
            } else {
                (0.0, 3.0)
            };
            let w = petal_weight((0.0, 1.0), other_center, (a.1, a.2));
            VpPixelSource::pair(warp(a), w, warp(b))
        }
        FaceId::D => {
            let mut best = Subregion::L;
            let mut best_score = f64::NEG_INFINITY;
            for sub in Subregion::ALL {
                let score = c.dot(face_basis(sub.face()).normal);
                if score > best_score {
                    best = sub;
                    best_score = score;
                }
            }
            let (p, q) = cube_point_to_plane(best, FaceId::D, c);
            VpPixelSource::single(coord(best, p, q))
        }
        _ => {
            let own = Subregion::from_face(face).unwrap();
            let b = face_basis(face);
            let (u, v) = (c.dot(b.right), c.dot(b.up));
            let primary = coord(own, u, v);
            if u.abs() > v.abs() {
                let other = if u > 0.0 { own.right() } else { own.left() };
                let (p, q) = cube_point_to_plane(other, face, c);
                let w = rhombus_weight(layout.n(), u.abs());
                VpPixelSource::pair(primary, w, coord(other, p, q))
            } else {
                VpPixelSource::single(primary)
            }
        }
    }
}

pub fn viewpoint_pixel_to_direction(x: f64, y: f64, layout: &ViewPointLayout) -> Direction {
    subregion_coord_to_direction(layout.map_to_subregion(x, y), layout)
}

// ---------------------------------------------------------------------------
// Images

#[derive(Debug, Clone, PartialEq)]
pub struct ViewPointImage {
    buffer: ImageBuffer,
    layout: ViewPointLayout,
}

/// Sidecar metadata stored next to a ViewPoint map on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPointSidecar {
    pub n: usize,
    pub layout_version: u32,
}

impl ViewPointImage {
    pub fn new(buffer: ImageBuffer, layout: ViewPointLayout) -> Result<Self> {
        let side = layout.map_side();
        if buffer.width() != side || buffer.height() != side {
            return Err(Error::ShapeMismatch(format!(
                "ViewPoint map is {}x{}, layout n = {} needs {side}x{side}",
                buffer.width(),
                buffer.height(),
                layout.n()
            )));
        }
        Ok(Self { buffer, layout })
    }

    pub fn buffer(&self) -> &ImageBuffer {
        &self.buffer
    }

    pub fn into_buffer(self) -> ImageBuffer {
        self.buffer
    }

    pub fn layout(&self) -> &ViewPointLayout {
        &self.layout
    }

    pub fn sidecar(&self) -> ViewPointSidecar {
        ViewPointSidecar {
            n: self.layout.n(),
            layout_version: LAYOUT_VERSION,
        }
    }

    /// Bilinear sample inside one subregion, clamped to its own tile.
    pub fn sample_subregion(&self, sc: SubregionCoord, out: &mut [f32]) {
        let (x, y) = self.layout.subregion_to_map(sc.sub, sc.i, sc.j);
        let win = self.layout.window(sc.sub);
        sample_bilinear_window(&self.buffer, win, x - win.x0 as f64, y - win.y0 as f64, false, out);
    }

    /// Subregion tile in its native orientation (placement rotation undone).
    pub fn tile(&self, sub: Subregion) -> ImageBuffer {
        let win = self.layout.window(sub);
        let cell = self
            .buffer
            .crop(win.x0, win.y0, win.width, win.height)
            .expect("window inside map");
        let turns = self.layout.placement(sub).quarter_turns;
        crate::fusion::rotate_image_quarters(&cell, (4 - turns % 4) % 4)
    }

    /// Reassembles a map from four native-orientation tiles in [`Subregion::ALL`] order.
    pub fn from_tiles(tiles: &[ImageBuffer; 4], layout: ViewPointLayout) -> Result<Self> {
        let s = layout.subregion_side();
        let first = &tiles[0];
        let mut buffer = ImageBuffer::new(layout.map_side(), layout.map_side(), first.channels(), first.colorspace())?;
        for (sub, tile) in Subregion::ALL.iter().zip(tiles) {
            if tile.width() != s || tile.height() != s || tile.channels() != first.channels() {
                return Err(Error::ShapeMismatch(format!("tile {sub:?} does not match layout")));
            }
            let placed = crate::fusion::rotate_image_quarters(tile, layout.placement(*sub).quarter_turns);
            let win = layout.window(*sub);
            buffer.paste(&placed, win.x0, win.y0)?;
        }
        Self::new(buffer, layout)
    }
}

/// Renders a ViewPoint map from any spherical source.
pub fn to_viewpoint<S: SphereSource + ?Sized>(source: &S, layout: ViewPointLayout) -> Result<ViewPointImage> {
    let side = layout.map_side();
    let buffer = ImageBuffer::try_from_fn(side, side, source.channels(), source.colorspace(), |x, y, out| {
        source.sample(viewpoint_pixel_to_direction(x as f64 + 0.5, y as f64 + 0.5, &layout), out)
    })?;
    ViewPointImage::new(buffer, layout)
}

pub fn erp_to_viewpoint(erp: &ErpImage, layout: ViewPointLayout) -> Result<ViewPointImage> {
    to_viewpoint(erp, layout)
}

pub fn cubemap_to_viewpoint(cm: &crate::cubemap::CubemapImage, layout: ViewPointLayout) -> Result<ViewPointImage> {
    to_viewpoint(cm, layout)
}

/// A ViewPoint map viewed as a spherical source.
#[derive(Debug, Clone, Copy)]
pub struct ViewPointSource<'a> {
    pub map: &'a ViewPointImage,
    /// Blend overlapping copies with their weights instead of taking the dominant one.
    pub fuse: bool,
}

impl SphereSource for ViewPointSource<'_> {
    fn channels(&self) -> usize {
        self.map.buffer.channels()
    }

    fn colorspace(&self) -> ColorSpace {
        self.map.buffer.colorspace()
    }

    fn sample(&self, d: Direction, out: &mut [f32]) -> Result<()> {
        let src = direction_to_subregion_coords(d, &self.map.layout);
        if src.is_empty() {
            return Err(Error::UncoveredDirection { x: d.x, y: d.y, z: d.z });
        }
        if !self.fuse || src.len() == 1 {
            self.map.sample_subregion(src.dominant().coord, out);
            return Ok(());
        }
        let e = src.entries();
        let mut a = [0.0f32; 4];
        let mut b = [0.0f32; 4];
        let c = out.len();
        self.map.sample_subregion(e[0].coord, &mut a[..c]);
        self.map.sample_subregion(e[1].coord, &mut b[..c]);
        let srgb = self.map.buffer.colorspace() == ColorSpace::Srgb;
        for k in 0..c {
            let color = srgb && !(c == 4 && k == 3);
            let (va, vb) = if color {
                (srgb_to_linear(a[k]) as f64, srgb_to_linear(b[k]) as f64)
            } else {
                (a[k] as f64, b[k] as f64)
            };
            let v = (va * e[0].weight + vb * e[1].weight) as f32;
            out[k] = if color { linear_to_srgb(v) } else { v };
        }
        Ok(())
    }
}

pub fn reconstruct_erp(vp: &ViewPointImage, dims: ErpDims, fuse: bool) -> Result<ErpImage> {
    resample_to_erp(&ViewPointSource { map: vp, fuse }, dims)
}

/// Projects a perspective frame seen through `cam` onto the ViewPoint map.
///
/// Returns the condition map (frame content where visible, 0 elsewhere) and a
/// single-channel binary mask.
pub fn project_condition(
    layout: ViewPointLayout,
    cam: &CameraPose,
    frame: &ImageBuffer,
) -> Result<(ViewPointImage, ViewPointImage)> {
    cam.validate()?;
    let side = layout.map_side();
    let (fw, fh) = (frame.width(), frame.height());
    let condition = ImageBuffer::from_fn(side, side, frame.channels(), frame.colorspace(), |x, y, out| {
        let d = viewpoint_pixel_to_direction(x as f64 + 0.5, y as f64 + 0.5, &layout);
        match direction_in_frustum(d, cam, fw, fh) {
            Some(hit) => sample_bilinear(frame, hit.pixel.0, hit.pixel.1, false, out),
            None => out.fill(0.0),
        }
    })?;
    let mask = ImageBuffer::from_fn(side, side, 1, ColorSpace::Linear, |x, y, out| {
        let d = viewpoint_pixel_to_direction(x as f64 + 0.5, y as f64 + 0.5, &layout);
        out[0] = if direction_in_frustum(d, cam, fw, fh).is_some() { 1.0 } else { 0.0 };
    })?;
    Ok((ViewPointImage::new(condition, layout)?, ViewPointImage::new(mask, layout)?))
}

/// Great-circle arcs along which reconstructions switch between subregions:
/// the four vertical cube edges and the half-diagonals of U and D.
pub fn layout_seams() -> Vec<(Direction, Direction)> {
    let corner = |x: f64, y: f64, z: f64| Direction::new(x, y, z).unwrap();
    let mut arcs = Vec::with_capacity(12);
    for (x, z) in [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)] {
        arcs.push((corner(x, 1.0, z), corner(x, -1.0, z)));
        arcs.push((Direction::UP, corner(x, 1.0, z)));
        arcs.push((-Direction::UP, corner(x, -1.0, z)));
    }
    arcs
}

/// Number of subregions representing `d` (1 or 2).
pub fn multiplicity(d: Direction, layout: &ViewPointLayout) -> usize {
    direction_to_subregion_coords(d, layout).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{direction_to_face_coord, face_coord_to_direction, FaceCoord};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn layout(n: usize) -> ViewPointLayout {
        ViewPointLayout::new(n).unwrap()
    }

    #[test]
    fn warp_examples() {
        let a = 2.5;
        assert_eq!(semicircle_to_triangle(a, 0.0, a).unwrap().0, a);
        let (r, _) = semicircle_to_triangle(a, FRAC_PI_4, a).unwrap();
        assert!((r - a / SQRT_2).abs() < 1e-15);
        let (r, _) = semicircle_to_triangle(a / 2.0, FRAC_PI_2, a).unwrap();
        assert!((r - a / 2.0).abs() < 1e-15);
        assert_eq!(triangle_to_semicircle(a, 0.0, a).unwrap().0, a);
        assert!((triangle_to_semicircle(a / SQRT_2, FRAC_PI_4, a).unwrap().0 - a).abs() < 1e-14);
        assert!((triangle_to_semicircle(a / 2.0, FRAC_PI_2, a).unwrap().0 - a / 2.0).abs() < 1e-15);
    }

    #[test]
    fn warp_domain_errors() {
        assert!(semicircle_to_triangle(-0.1, 0.3, 1.0).is_err());
        assert!(semicircle_to_triangle(1.1, 0.3, 1.0).is_err());
        assert!(semicircle_to_triangle(0.5, -0.1, 1.0).is_err());
        assert!(semicircle_to_triangle(0.5, PI + 0.1, 1.0).is_err());
        assert!(triangle_to_semicircle(0.9, FRAC_PI_4, 1.0).is_err());
        assert!(triangle_to_semicircle(-0.1, FRAC_PI_4, 1.0).is_err());
    }

    #[test]
    fn warp_boundary_maps_to_boundary() {
        for k in 0..=64 {
            let theta = PI * k as f64 / 64.0;
            let d = triangle_extent(theta, 3.0);
            assert_eq!(semicircle_to_triangle(3.0, theta, 3.0).unwrap().0, d);
            assert_eq!(triangle_to_semicircle(d, theta, 3.0).unwrap().0, 3.0);
        }
    }

    #[test]
    fn cartesian_warp_agrees_with_polar_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let r: f64 = rng.gen_range(0.0..1.0);
            let theta: f64 = rng.gen_range(0.0..PI);
            let (rs, _) = semicircle_to_triangle(r, theta, 1.0).unwrap();
            let (p, q) = plane_semicircle_to_triangle(r * theta.cos(), 1.0 + r * theta.sin());
            assert!((p - rs * theta.cos()).abs() < 1e-12 && (q - 1.0 - rs * theta.sin()).abs() < 1e-12);
            let (bp, bq) = plane_triangle_to_semicircle(p, q);
            assert!((bp - r * theta.cos()).abs() < 1e-12 && (bq - 1.0 - r * theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn placement_puts_d_corners_at_map_center() {
        let l = layout(8);
        for sub in Subregion::ALL {
            // D center is the plane point (0, -2).
            let (i, j) = l.subregion_of_plane(sub, 0.0, -2.0);
            let (x, y) = l.subregion_to_map(sub, i, j);
            assert!((x - 16.0).abs() < 1e-12 && (y - 16.0).abs() < 1e-12, "{sub:?}: ({x}, {y})");
            assert_eq!(l.placement(sub).quarter_turns, 0);
        }
    }

    #[test]
    fn plane_coordinates_round_trip() {
        let l = layout(16);
        for sub in Subregion::ALL {
            for &(i, j) in &[(0.0, 0.0), (3.25, 30.0), (16.0, 16.0), (31.5, 7.75)] {
                let (p, q) = l.plane_of(sub, i, j);
                let (bi, bj) = l.subregion_of_plane(sub, p, q);
                assert!((bi - i).abs() < 1e-12 && (bj - j).abs() < 1e-12);
                let sc = l.map_to_subregion(l.subregion_to_map(sub, i, j).0, l.subregion_to_map(sub, i, j).1);
                if i < 32.0 && j < 32.0 {
                    assert_eq!(sc.sub, sub);
                    assert!((sc.i - i).abs() < 1e-12 && (sc.j - j).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn subregion_examples() {
        let l = layout(64);
        let s = 128.0;
        let center = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i: 64.0, j: 64.0 }, &l);
        assert!((center - Direction::FORWARD).norm() < 1e-15);
        // Midpoint of the F/R edge: plane (1, 0).
        let (i, j) = l.subregion_of_plane(Subregion::F, 1.0, 0.0);
        let edge = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i, j }, &l);
        let expected = face_coord_to_direction(FaceCoord { face: FaceId::F, u: 1.0, v: 0.0 });
        assert!((edge - expected).norm() < 1e-15);
        assert!((edge - Direction::new(1.0, 0.0, 1.0).unwrap()).norm() < 1e-15);
        // Apex of the U triangle is the top-right corner of S_F: the semicircle's
        // far point at θ = π/2, which is the center of U.
        let apex = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i: 0.0, j: s }, &l);
        assert!((apex - Direction::UP).norm() < 1e-15);
        // Top-left corner of S_F is the center of L.
        let lc = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i: 0.0, j: 0.0 }, &l);
        assert!((lc - Direction::raw(-1.0, 0.0, 0.0)).norm() < 1e-15);
        // Bottom-left corner is the center of D.
        let dc = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i: s, j: 0.0 }, &l);
        assert!((dc + Direction::UP).norm() < 1e-15);
    }

    #[test]
    fn subregion_corner_orientation_table() {
        let l = layout(32);
        let s = 64.0;
        let corners = [(0.0, 0.0), (0.0, s), (s, 0.0), (s, s)]; // TL, TR, BL, BR
        let expected = |sub: Subregion| -> [FaceId; 4] {
            match sub {
                Subregion::F => [FaceId::L, FaceId::U, FaceId::D, FaceId::R],
                Subregion::L => [FaceId::U, FaceId::F, FaceId::B, FaceId::D],
                Subregion::B => [FaceId::L, FaceId::D, FaceId::U, FaceId::R],
                Subregion::R => [FaceId::D, FaceId::F, FaceId::B, FaceId::U],
            }
        };
        for sub in Subregion::ALL {
            for (k, &(i, j)) in corners.iter().enumerate() {
                // Step slightly inside so the sample lands on the face, not its center on an edge.
                let ii = i + if i == 0.0 { 2.0 } else { -2.0 };
                let jj = j + if j == 0.0 { 2.0 } else { -2.0 };
                let d = subregion_coord_to_direction(SubregionCoord { sub, i: ii, j: jj }, &l);
                assert_eq!(select_face(d), expected(sub)[k], "{sub:?} corner {k}");
            }
        }
    }

    fn random_direction(rng: &mut ChaCha8Rng) -> Direction {
        loop {
            let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            if n2 > 1e-6 && n2 <= 1.0 {
                return Direction::new(v[0], v[1], v[2]).unwrap();
            }
        }
    }

    #[test]
    fn every_entry_maps_back_to_the_direction() {
        let l = layout(32);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50_000 {
            let d = random_direction(&mut rng);
            let src = direction_to_subregion_coords(d, &l);
            assert!(!src.is_empty());
            let total: f64 = src.entries().iter().map(|e| e.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for e in src.entries() {
                let s = l.subregion_side() as f64;
                assert!((-1e-9..=s + 1e-9).contains(&e.coord.i) && (-1e-9..=s + 1e-9).contains(&e.coord.j));
                let back = subregion_coord_to_direction(e.coord, &l);
                assert!(d.angle_to(back) < 1e-9, "{d:?} via {:?}", e.coord);
            }
        }
    }

    #[test]
    fn subregion_coords_round_trip_interior() {
        let l = layout(64);
        let s = l.subregion_side() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 20_000 {
            let sub = Subregion::ALL[rng.gen_range(0..4)];
            let (i, j) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
            let (p, q) = l.plane_of(sub, i, j);
            // Keep clear of the piecewise boundaries.
            let margins = [(p.abs() - 1.0).abs(), (q.abs() - 1.0).abs(), (p.abs() - q.abs()).abs(), 2.0 - p.abs() - q.abs()];
            if margins.iter().any(|&m| m < 1e-3) {
                continue;
            }
            checked += 1;
            let d = subregion_coord_to_direction(SubregionCoord { sub, i, j }, &l);
            let src = direction_to_subregion_coords(d, &l);
            let hit = src
                .entries()
                .iter()
                .find(|e| e.coord.sub == sub)
                .unwrap_or_else(|| panic!("{sub:?} ({i}, {j}) missing from {src:?}"));
            assert!((hit.coord.i - i).abs() < 1e-6 && (hit.coord.j - j).abs() < 1e-6);
        }
    }

    #[test]
    fn overlap_multiplicity_by_region() {
        let l = layout(32);
        let dir = |f: FaceId, u: f64, v: f64| face_coord_to_direction(FaceCoord { face: f, u, v });
        assert_eq!(multiplicity(dir(FaceId::F, 0.7, 0.1), &l), 2);
        assert_eq!(multiplicity(dir(FaceId::F, 0.1, 0.7), &l), 1);
        assert_eq!(multiplicity(dir(FaceId::F, 0.0, -0.7), &l), 1);
        assert_eq!(multiplicity(dir(FaceId::D, 0.3, 0.2), &l), 1);
        // U: near an edge midpoint only one semicircle, near a corner two.
        assert_eq!(multiplicity(dir(FaceId::U, 0.0, -0.9), &l), 1);
        assert_eq!(multiplicity(dir(FaceId::U, 0.6, -0.6), &l), 2);
    }

    #[test]
    fn rhombus_weights_are_complementary() {
        let l = layout(16);
        let d = face_coord_to_direction(FaceCoord { face: FaceId::R, u: -0.4, v: 0.2 });
        let src = direction_to_subregion_coords(d, &l);
        assert_eq!(src.len(), 2);
        let e = src.entries();
        assert_eq!(e[0].coord.sub, Subregion::R);
        assert_eq!(e[1].coord.sub, Subregion::F);
        assert!(e[0].weight > 0.5);
        assert_eq!(e[0].weight + e[1].weight, 1.0);
        assert_eq!(rhombus_weight(16, 1.0), 0.5);
    }

    #[test]
    fn petal_weights() {
        let own = (0.0, 1.0);
        let other = (1.0, 2.0);
        // midpoint between the centers
        assert!((petal_weight(own, other, (0.5, 1.5)) - 0.5).abs() < 1e-15);
        let near_own = 2.0f64.sqrt() - 1.0;
        let p = (near_own / 2.0f64.sqrt(), 1.0 + near_own / 2.0f64.sqrt());
        assert!((petal_weight(own, other, p) - 1.0).abs() < 1e-12);
        let far = (FRAC_1_SQRT_2, 1.0 + FRAC_1_SQRT_2);
        assert!(petal_weight(own, other, far).abs() < 1e-12);
        // linear along the axis
        for t in [0.45, 0.6, 0.9] {
            let p = (t / 2.0f64.sqrt(), 1.0 + t / 2.0f64.sqrt());
            let linear = (1.0 - t) / (2.0 - 2.0f64.sqrt());
            assert!((petal_weight(own, other, p) - linear).abs() < 1e-12);
        }
        // off the axis the boundaries still carry weights 1 and 0
        let on_other = (1.0 - 0.95f64.cos(), 2.0 - 0.95f64.sin());
        assert!((petal_weight(own, other, on_other) - 1.0).abs() < 1e-12);
        let on_own = (0.3f64.cos(), 1.0 + 0.3f64.sin());
        assert!(petal_weight(own, other, on_own).abs() < 1e-12);
    }

    #[test]
    fn vertical_edge_continuity_inside_subregion() {
        // Walk across the F/R edge inside S_F: consecutive angular steps must stay
        // within twice the interior step.
        let l = layout(64);
        for &q in &[-0.8, -0.3, 0.0, 0.5, 0.9] {
            let dirs: Vec<Direction> = (0..=40)
                .map(|k| {
                    let p = 0.8 + 0.01 * k as f64;
                    let (i, j) = l.subregion_of_plane(Subregion::F, p, q);
                    subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i, j }, &l)
                })
                .collect();
            let steps: Vec<f64> = dirs.windows(2).map(|w| w[0].angle_to(w[1])).collect();
            let interior = steps[5];
            for (k, s) in steps.iter().enumerate() {
                assert!(*s <= 2.0 * interior, "q={q} step {k}: {s} vs {interior}");
            }
        }
    }

    #[test]
    fn d_face_is_continuous_across_subregions() {
        // The two sides of each shared D half-diagonal at the map center show the same points.
        let l = layout(32);
        let c = l.map_side() as f64 / 2.0;
        for k in 1..16 {
            let t = k as f64;
            for (x, y, dx, dy) in [(c, c - t, 1e-7, 0.0), (c + t, c, 0.0, 1e-7), (c, c + t, 1e-7, 0.0), (c - t, c, 0.0, 1e-7)] {
                let a = viewpoint_pixel_to_direction(x - dx, y - dy, &l);
                let b = viewpoint_pixel_to_direction(x + dx, y + dy, &l);
                assert_eq!(select_face(a), FaceId::D);
                assert!(a.angle_to(b) < 1e-6, "at ({x}, {y})");
            }
        }
    }

    #[test]
    fn layout_validation() {
        assert!(ViewPointLayout::new(1).is_err());
        assert!(ViewPointLayout::from_map_side(30).is_err());
        assert_eq!(ViewPointLayout::from_map_side(1024).unwrap(), ViewPointLayout::default());
        let img = ImageBuffer::new(10, 10, 1, ColorSpace::Linear).unwrap();
        assert!(ViewPointImage::new(img, layout(2)).is_err());
    }

    #[test]
    fn face_coord_of_unfolded_quarters() {
        // L quarter of S_F is the right quarter of face L.
        let l = layout(32);
        let (i, j) = l.subregion_of_plane(Subregion::F, -1.5, 0.2);
        let d = subregion_coord_to_direction(SubregionCoord { sub: Subregion::F, i, j }, &l);
        let fc = direction_to_face_coord(d);
        assert_eq!(fc.face, FaceId::L);
        assert!((fc.u - 0.5).abs() < 1e-12 && (fc.v - 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn warp_round_trip(r in 0.0..1.0f64, theta in 0.0..PI, a in 0.1..10.0f64) {
            let r = r * a;
            let (rs, t) = semicircle_to_triangle(r, theta, a).unwrap();
            let (back, t2) = triangle_to_semicircle(rs, t, a).unwrap();
            prop_assert_eq!(t2, theta);
            prop_assert!((back - r).abs() <= 1e-12 * r.max(f64::MIN_POSITIVE));
        }
    }
}
