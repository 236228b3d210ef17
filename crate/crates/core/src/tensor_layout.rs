//! Splitting a ViewPoint latent grid into four quadrant tensors and back.
//!
//! A `(batch, channels, frames, height, width)` grid becomes
//! `(4·batch, channels, frames, height/2, width/2)`. Sub-batch `b·4 + k` holds
//! quadrant `k` of batch `b`, quadrants in raster order TL, TR, BL, BR.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapeError {
    #[error("data length {len} does not match dims {dims:?}")]
    Length { dims: [usize; 5], len: usize },
    #[error("spatial dims {height}x{width} must both be even")]
    OddSpatial { height: usize, width: usize },
    #[error("batch {0} is not a multiple of 4")]
    Batch(usize),
}

impl From<ShapeError> for crate::Error {
    fn from(e: ShapeError) -> Self {
        crate::Error::Shape(e.to_string())
    }
}

/// Row-major 5-D tensor `(batch, channels, frames, height, width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid<T = f32> {
    dims: [usize; 5],
    data: Vec<T>,
}

impl<T: Copy> LatentGrid<T> {
    pub fn new(dims: [usize; 5], data: Vec<T>) -> Result<Self, ShapeError> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(ShapeError::Length { dims, len: data.len() });
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 5], mut f: impl FnMut([usize; 5]) -> T) -> Self {
        let [b, c, t, h, w] = dims;
        let mut data = Vec::with_capacity(b * c * t * h * w);
        for ib in 0..b {
            for ic in 0..c {
                for it in 0..t {
                    for y in 0..h {
                        for x in 0..w {
                            data.push(f([ib, ic, it, y, x]));
                        }
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 5] {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, idx: [usize; 5]) -> T {
        self.data[self.offset(idx)]
    }

    fn offset(&self, [b, c, t, y, x]: [usize; 5]) -> usize {
        let [_, nc, nt, nh, nw] = self.dims;
        (((b * nc + c) * nt + t) * nh + y) * nw + x
    }
}

/// Splits each spatial plane into its four quadrants along the batch axis.
pub fn pano_to_perspective<T: Copy>(g: &LatentGrid<T>) -> Result<LatentGrid<T>, ShapeError> {
    let [b, c, t, h, w] = g.dims;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(ShapeError::OddSpatial { height: h, width: w });
    }
    let (hh, hw) = (h / 2, w / 2);
    let mut data = Vec::with_capacity(g.data.len());
    for ib in 0..b {
        for k in 0..4 {
            let (y0, x0) = ((k / 2) * hh, (k % 2) * hw);
            for ic in 0..c {
                for it in 0..t {
                    for y in 0..hh {
                        let start = g.offset([ib, ic, it, y0 + y, x0]);
                        data.extend_from_slice(&g.data[start..start + hw]);
                    }
                }
            }
        }
    }
    Ok(LatentGrid { dims: [4 * b, c, t, hh, hw], data })
}

/// Inverse of [`pano_to_perspective`].
pub fn perspective_to_pano<T: Copy>(g: &LatentGrid<T>) -> Result<LatentGrid<T>, ShapeError> {
    let [b4, c, t, hh, hw] = g.dims;
    if b4 % 4 != 0 {
        return Err(ShapeError::Batch(b4));
    }
    let (b, h, w) = (b4 / 4, 2 * hh, 2 * hw);
    let mut out = LatentGrid::<T> {
        dims: [b, c, t, h, w],
        data: g.data.clone(),
    };
    for ib in 0..b {
        for k in 0..4 {
            let (y0, x0) = ((k / 2) * hh, (k % 2) * hw);
            for ic in 0..c {
                for it in 0..t {
                    for y in 0..hh {
                        let src = g.offset([ib * 4 + k, ic, it, y, 0]);
                        let dst = out.offset([ib, ic, it, y0 + y, x0]);
                        out.data[dst..dst + hw].copy_from_slice(&g.data[src..src + hw]);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_split() {
        let g = LatentGrid::new([1, 1, 1, 2, 2], vec![1, 2, 3, 4]).unwrap();
        let s = pano_to_perspective(&g).unwrap();
        assert_eq!(s.dims(), [4, 1, 1, 1, 1]);
        assert_eq!(s.data(), &[1, 2, 3, 4]);
        assert_eq!(perspective_to_pano(&s).unwrap(), g);
    }

    #[test]
    fn constant_grid_splits_to_constants() {
        let g = LatentGrid::new([2, 3, 2, 4, 6], vec![7u8; 2 * 3 * 2 * 4 * 6]).unwrap();
        let s = pano_to_perspective(&g).unwrap();
        assert_eq!(s.dims(), [8, 3, 2, 2, 3]);
        assert!(s.data().iter().all(|&v| v == 7));
    }

    #[test]
    fn quadrants_follow_coordinate_oracle() {
        let dims = [2, 3, 5, 8, 8];
        let g = LatentGrid::from_fn(dims, |i| i);
        let s = pano_to_perspective(&g).unwrap();
        let [b4, c, t, h, w] = s.dims();
        for ib in 0..b4 {
            let (b, k) = (ib / 4, ib % 4);
            for ic in 0..c {
                for it in 0..t {
                    for y in 0..h {
                        for x in 0..w {
                            let src = [b, ic, it, (k / 2) * h + y, (k % 2) * w + x];
                            assert_eq!(s.get([ib, ic, it, y, x]), src);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let g = LatentGrid::new([1, 1, 1, 3, 2], vec![0.0f32; 6]).unwrap();
        assert!(matches!(pano_to_perspective(&g), Err(ShapeError::OddSpatial { .. })));
        let g = LatentGrid::new([3, 1, 1, 1, 1], vec![0.0f32; 3]).unwrap();
        assert_eq!(perspective_to_pano(&g), Err(ShapeError::Batch(3)));
        assert!(LatentGrid::new([1, 1, 1, 2, 2], vec![0.0f32; 3]).is_err());
    }

    proptest! {
        #[test]
        fn merge_inverts_split(b in 1usize..3, c in 1usize..4, t in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
            let dims = [b, c, t, 2 * h, 2 * w];
            let mut s = seed;
            let g = LatentGrid::from_fn(dims, |_| { s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223); s });
            let split = pano_to_perspective(&g).unwrap();
            let mut a = g.data().to_vec();
            let mut bsorted = split.data().to_vec();
            a.sort_unstable();
            bsorted.sort_unstable();
            prop_assert_eq!(a, bsorted);
            prop_assert_eq!(perspective_to_pano(&split).unwrap(), g);
        }
    }
}
