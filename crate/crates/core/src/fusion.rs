//! Gradient fusion of the overlapping parts of a ViewPoint map.
//!
//! Each subregion shares two `n × n` quadrants with its horizontal neighbors.
//! The shared content is blended with the gradient matrix `W` and its quarter
//! turns, reading every neighbor from an unmodified snapshot so that the four
//! updates are simultaneous. The U semicircles overlap pairwise in lens shaped
//! petals, blended the same way along the axis joining the semicircle centers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::viewpoint::{
    classify_plane_point, neighbor_semicircle_center, petal_weight, plane_semicircle_to_triangle,
    plane_to_cube_point, cube_point_to_plane, plane_triangle_to_semicircle, Piece,
    Subregion, SubregionCoord, ViewPointImage, ViewPointLayout,
};
use crate::sphere::FaceId;

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| (i == j) as u8 as f64)
    }

    /// Anti-diagonal identity.
    pub fn exchange(n: usize) -> Self {
        Self::from_fn(n, |i, j| (i + j + 1 == n) as u8 as f64)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("matrix rows must form a square".into()));
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based element access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self::from_fn(self.n, |i, j| (0..self.n).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn rotate(&self, rot: Rotation) -> Self {
        Self::from_fn(self.n, |i, j| {
            let (si, sj) = rot.source_index(self.n, i, j);
            self.get(si, sj)
        })
    }
}

/// Quarter-turn rotations written as products with the exchange matrix `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rotation {
    /// `Aᵀ·J`, a clockwise quarter turn.
    Cw90,
    /// `J·Aᵀ`, a counterclockwise quarter turn.
    Ccw90,
    /// `J·A·J`.
    Half,
}

impl Rotation {
    /// Index of `A` that lands at `(i, j)` of the rotated matrix (0-based).
    #[inline]
    pub fn source_index(self, n: usize, i: usize, j: usize) -> (usize, usize) {
        match self {
            Rotation::Cw90 => (n - 1 - j, i),
            Rotation::Ccw90 => (j, n - 1 - i),
            Rotation::Half => (n - 1 - i, n - 1 - j),
        }
    }
}

pub fn rotate90(a: &SquareMatrix) -> SquareMatrix {
    a.rotate(Rotation::Cw90)
}

pub fn rotate_minus90(a: &SquareMatrix) -> SquareMatrix {
    a.rotate(Rotation::Ccw90)
}

pub fn rotate180(a: &SquareMatrix) -> SquareMatrix {
    a.rotate(Rotation::Half)
}

/// Applies `rot` to a square image tile, channel by channel.
pub fn rotate_tile(tile: &ImageBuffer, rot: Rotation) -> Result<ImageBuffer> {
    let n = tile.width();
    if tile.height() != n {
        return Err(Error::Shape(format!("tile {}x{} is not square", n, tile.height())));
    }
    ImageBuffer::from_fn(n, n, tile.channels(), tile.colorspace(), |j, i, out| {
        let (si, sj) = rot.source_index(n, i, j);
        out.copy_from_slice(tile.pixel(sj, si));
    })
}

/// `k` clockwise quarter turns of a square tile.
pub(crate) fn rotate_image_quarters(tile: &ImageBuffer, k: u8) -> ImageBuffer {
    match k % 4 {
        0 => tile.clone(),
        1 => rotate_tile(tile, Rotation::Cw90).expect("square tile"),
        2 => rotate_tile(tile, Rotation::Half).expect("square tile"),
        _ => rotate_tile(tile, Rotation::Ccw90).expect("square tile"),
    }
}

/// Gradient matrix `W[i][j] = (i + j - 2) / (2(n - 1))` (1-based) and its rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub w: SquareMatrix,
    pub r90: SquareMatrix,
    pub r_minus90: SquareMatrix,
    pub r180: SquareMatrix,
}

impl FusionWeights {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("fusion weights need n >= 2, got {n}")));
        }
        let denom = 2.0 * (n as f64 - 1.0);
        let w = SquareMatrix::from_fn(n, |i, j| (i + j) as f64 / denom);
        Ok(Self {
            r90: rotate90(&w),
            r_minus90: rotate_minus90(&w),
            r180: rotate180(&w),
            w,
        })
    }

    pub fn n(&self) -> usize {
        self.w.n()
    }

    fn get(&self, which: WeightKind) -> &SquareMatrix {
        match which {
            WeightKind::W => &self.w,
            WeightKind::R90 => &self.r90,
            WeightKind::Rm90 => &self.r_minus90,
            WeightKind::R180 => &self.r180,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum WeightKind {
    W,
    R90,
    Rm90,
    R180,
}

/// One branch of the per-subregion update: the quadrant at `own` (row, col
/// offsets in units of `n`) is blended with quadrant `src` of the rotated neighbor.
#[derive(Debug, Clone, Copy)]
struct Branch {
    own: (usize, usize),
    own_weight: WeightKind,
    neighbor: Subregion,
    rotation: Rotation,
    src: (usize, usize),
    neighbor_weight: WeightKind,
}

fn branches(sub: Subregion) -> [Branch; 2] {
    use Rotation::*;
    use Subregion as S;
    use WeightKind::*;
    let b = |own, own_weight, neighbor, rotation, src, neighbor_weight| Branch {
        own,
        own_weight,
        neighbor,
        rotation,
        src,
        neighbor_weight,
    };
    match sub {
        S::L => [
            b((0, 1), R90, S::F, Ccw90, (1, 0), Rm90),
            b((1, 0), Rm90, S::B, Cw90, (0, 1), R90),
        ],
        S::R => [
            b((0, 1), R90, S::F, Cw90, (1, 0), Rm90),
            b((1, 0), Rm90, S::B, Ccw90, (0, 1), R90),
        ],
        S::F => [
            b((0, 0), W, S::L, Cw90, (1, 1), R180),
            b((1, 1), R180, S::R, Ccw90, (0, 0), W),
        ],
        S::B => [
            b((0, 0), W, S::L, Ccw90, (1, 1), R180),
            b((1, 1), R180, S::R, Cw90, (0, 0), W),
        ],
    }
}

/// Four subregion tiles in [`Subregion::ALL`] order (L, F, B, R).
pub type SubregionTiles = [ImageBuffer; 4];

fn check_tiles(tiles: &SubregionTiles, weights: &FusionWeights) -> Result<()> {
    let s = 2 * weights.n();
    for (sub, t) in Subregion::ALL.iter().zip(tiles) {
        if t.width() != s || t.height() != s || !t.same_shape(&tiles[0]) {
            return Err(Error::ShapeMismatch(format!(
                "tile {sub:?} is {}x{}x{}, expected {s}x{s}x{}",
                t.width(),
                t.height(),
                t.channels(),
                tiles[0].channels()
            )));
        }
    }
    Ok(())
}

/// Blends the shared quadrants of the four subregions simultaneously.
pub fn fuse_subregions(tiles: &SubregionTiles, weights: &FusionWeights) -> Result<SubregionTiles> {
    fuse_subregions_in_order(tiles, weights, Subregion::ALL)
}

/// [`fuse_subregions`] with an explicit evaluation order. Reads come from the
/// untouched input tiles, so the order cannot change the result.
pub fn fuse_subregions_in_order(
    tiles: &SubregionTiles,
    weights: &FusionWeights,
    order: [Subregion; 4],
) -> Result<SubregionTiles> {
    check_tiles(tiles, weights)?;
    let n = weights.n();
    let s = 2 * n;
    let c = tiles[0].channels();
    let mut out = tiles.clone();
    for sub in order {
        let target = &mut out[sub.index()];
        for br in branches(sub) {
            let nb = &tiles[br.neighbor.index()];
            let w_own = weights.get(br.own_weight);
            let w_nb = weights.get(br.neighbor_weight);
            let data = target.data_mut();
            data.par_chunks_mut(s * c)
                .enumerate()
                .skip(br.own.0 * n)
                .take(n)
                .for_each(|(i, row)| {
                    let a = i - br.own.0 * n;
                    for b in 0..n {
                        let j = br.own.1 * n + b;
                        // pixel of the rotated neighbor at (a, b) of its src quadrant
                        let (ri, rj) = (br.src.0 * n + a, br.src.1 * n + b);
                        let (si, sj) = br.rotation.source_index(s, ri, rj);
                        let nv = nb.pixel(sj, si);
                        let (wo, wn) = (w_own.get(a, b), w_nb.get(a, b));
                        let px = &mut row[j * c..(j + 1) * c];
                        for k in 0..c {
                            px[k] = (px[k] as f64 * wo + nv[k] as f64 * wn) as f32;
                        }
                    }
                });
        }
    }
    Ok(out)
}

fn with_linear_light(
    vp: &ViewPointImage,
    f: impl FnOnce(&ViewPointImage) -> Result<ViewPointImage>,
) -> Result<ViewPointImage> {
    let cs = vp.buffer().colorspace();
    if cs == ColorSpace::Linear {
        return f(vp);
    }
    let linear = ViewPointImage::new(vp.buffer().to_linear(), *vp.layout())?;
    let fused = f(&linear)?;
    ViewPointImage::new(fused.buffer().to_colorspace(cs), *vp.layout())
}

/// Blends the lens-shaped overlaps of adjacent U semicircles.
pub fn fuse_u_petals(vp: &ViewPointImage) -> Result<ViewPointImage> {
    with_linear_light(vp, fuse_u_petals_raw)
}

/// Rhombus fusion followed by petal fusion, in linear light.
pub fn fuse_viewpoint(vp: &ViewPointImage) -> Result<ViewPointImage> {
    with_linear_light(vp, |lin| {
        let layout = *lin.layout();
        let weights = FusionWeights::new(layout.n())?;
        let tiles: SubregionTiles = Subregion::ALL.map(|sub| lin.tile(sub));
        let fused = fuse_subregions(&tiles, &weights)?;
        let rhombi = ViewPointImage::from_tiles(&fused, layout)?;
        fuse_u_petals_raw(&rhombi)
    })
}

/// The lens partner of a U-triangle position, if it lies in a petal.
pub(crate) struct PetalPartner {
    pub coord: SubregionCoord,
    /// Weight of the position's own subregion.
    pub own_weight: f64,
}

/// For a point `(p, q)` of `sub`'s plane inside its U triangle, finds the
/// adjacent subregion whose semicircle also covers it.
pub(crate) fn petal_partner(layout: &ViewPointLayout, sub: Subregion, p: f64, q: f64) -> Option<PetalPartner> {
    if classify_plane_point(p, q) != Piece::Up {
        return None;
    }
    let (sp, sq) = plane_triangle_to_semicircle(p, q);
    let mut best: Option<(Subregion, (f64, f64), f64)> = None;
    for left in [true, false] {
        let center = neighbor_semicircle_center(left);
        let dist = (sp - center.0).hypot(sq - center.1);
        if dist < 1.0 && best.is_none_or(|b| dist < b.2) {
            let other = if left { sub.left() } else { sub.right() };
            best = Some((other, center, dist));
        }
    }
    let (other, center, _) = best?;
    let c = plane_to_cube_point(sub, sp, sq);
    let (op, oq) = cube_point_to_plane(other, FaceId::U, c);
    let (tp, tq) = plane_semicircle_to_triangle(op, oq.max(1.0));
    let (i, j) = layout.subregion_of_plane(other, tp, tq);
    Some(PetalPartner {
        coord: SubregionCoord { sub: other, i, j },
        own_weight: petal_weight((0.0, 1.0), center, (sp, sq)),
    })
}

fn fuse_u_petals_raw(vp: &ViewPointImage) -> Result<ViewPointImage> {
    let layout = *vp.layout();
    let src = vp.buffer();
    let side = layout.map_side();
    let buffer = ImageBuffer::from_fn(side, side, src.channels(), src.colorspace(), |x, y, out| {
        out.copy_from_slice(src.pixel(x, y));
        let sc = layout.map_to_subregion(x as f64 + 0.5, y as f64 + 0.5);
        let (p, q) = layout.plane_of(sc.sub, sc.i, sc.j);
        if let Some(partner) = petal_partner(&layout, sc.sub, p, q) {
            let mut other = [0.0f32; 4];
            let other = &mut other[..out.len()];
            vp.sample_subregion(partner.coord, other);
            let w = partner.own_weight;
            for (o, v) in out.iter_mut().zip(other.iter()) {
                *o = (*o as f64 * w + *v as f64 * (1.0 - w)) as f32;
            }
        }
    })?;
    ViewPointImage::new(buffer, layout)
}
