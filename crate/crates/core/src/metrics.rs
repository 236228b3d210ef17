//! PSNR, round-trip reports, overlap consistency and seam scores.
//!
//! Sums are accumulated per row in parallel and combined in row order, so
//! results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::erp::{erp_pixel_to_direction, ErpDims, ErpImage};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};
use crate::sphere::{direction_to_lonlat, select_face, Direction, FaceId};
use crate::viewpoint::{
    direction_to_subregion_coords, viewpoint_pixel_to_direction, ViewPointImage, ViewPointLayout,
};

pub const REPORT_SCHEMA: u32 = 1;

/// Pole bands start at this absolute latitude.
pub const POLE_BAND_LAT: f64 = 75.0 * PI / 180.0;

/// PSNR in dB; serialized as the string `"inf"` when the images are identical.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Decibels(pub f64);

impl Decibels {
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl std::fmt::Display for Decibels {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf dB")
        } else {
            write!(f, "{:.2} dB", self.0)
        }
    }
}

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Decibels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Decibels(v)),
            Raw::Str(s) if s == "inf" => Ok(Decibels(f64::INFINITY)),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad decibel value {s:?}"))),
        }
    }
}

fn mse_to_db(mse: f64) -> Decibels {
    if mse == 0.0 {
        Decibels(f64::INFINITY)
    } else {
        Decibels(10.0 * (1.0 / mse).log10())
    }
}

fn check_same(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// PSNR with peak 1.0 over all channels, in the stored encoding.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Decibels> {
    check_same(a, b)?;
    let row = a.width() * a.channels();
    let sum: f64 = a
        .data()
        .par_chunks(row)
        .zip(b.data().par_chunks(row))
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(&x, &y)| {
                    let d = x as f64 - y as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(mse_to_db(sum / a.data().len() as f64))
}

/// Per-pixel squared error sums grouped by a region label.
#[derive(Debug, Default, Clone, Copy)]
struct Acc {
    sq: f64,
    count: usize,
}

impl Acc {
    fn add(&mut self, sq: f64, n: usize) {
        self.sq += sq;
        self.count += n;
    }

    fn merge(mut self, o: Acc) -> Acc {
        self.add(o.sq, o.count);
        self
    }

    fn db(self) -> Option<Decibels> {
        (self.count > 0).then(|| mse_to_db(self.sq / self.count as f64))
    }
}

/// Errors of a reconstructed panorama against its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub schema: u32,
    /// `erp->viewpoint->erp` and the like.
    pub path: String,
    pub psnr_db: Decibels,
    pub max_abs_err: f64,
    pub mean_abs_err: f64,
    /// Both pole bands together.
    pub pole_psnr_db: Decibels,
    pub north_pole_psnr_db: Decibels,
    pub south_pole_psnr_db: Decibels,
    pub per_face_psnr_db: BTreeMap<String, Decibels>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_subregion_psnr_db: BTreeMap<String, Decibels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Box<RoundTripReport>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    total: Acc,
    abs_sum: f64,
    abs_max: f64,
    north: Acc,
    south: Acc,
    faces: [Acc; 6],
    subs: [Acc; 4],
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.total = self.total.merge(o.total);
        self.abs_sum += o.abs_sum;
        self.abs_max = self.abs_max.max(o.abs_max);
        self.north = self.north.merge(o.north);
        self.south = self.south.merge(o.south);
        for i in 0..6 {
            self.faces[i] = self.faces[i].merge(o.faces[i]);
        }
        for i in 0..4 {
            self.subs[i] = self.subs[i].merge(o.subs[i]);
        }
        self
    }
}

/// Compares two panoramas of equal size. With a `layout`, errors are also
/// grouped by the subregion that dominates each direction.
pub fn round_trip_report(
    path: &str,
    original: &ErpImage,
    reconstructed: &ErpImage,
    layout: Option<&ViewPointLayout>,
) -> Result<RoundTripReport> {
    let (a, b) = (original.buffer(), reconstructed.buffer());
    check_same(a, b)?;
    let dims = original.dims();
    let c = a.channels();
    let row_tally = |y: usize| {
        let mut t = Tally::default();
        for x in 0..dims.width {
            let d = erp_pixel_to_direction(dims, x as f64 + 0.5, y as f64 + 0.5);
            let (pa, pb) = (a.pixel(x, y), b.pixel(x, y));
            let mut sq = 0.0;
            for k in 0..c {
                let e = (pa[k] as f64 - pb[k] as f64).abs();
                sq += e * e;
                t.abs_sum += e;
                t.abs_max = t.abs_max.max(e);
            }
            t.total.add(sq, c);
            let lat = direction_to_lonlat(d).lat();
            if lat > POLE_BAND_LAT {
                t.north.add(sq, c);
            } else if lat < -POLE_BAND_LAT {
                t.south.add(sq, c);
            }
            t.faces[select_face(d).index()].add(sq, c);
            if let Some(l) = layout {
                let sub = direction_to_subregion_coords(d, l).dominant().coord.sub;
                t.subs[sub.index()].add(sq, c);
            }
        }
        t
    };
    let t = (0..dims.height)
        .into_par_iter()
        .map(row_tally)
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::merge);
    let inf = Decibels(f64::INFINITY);
    let per_face_psnr_db = FaceId::ALL
        .iter()
        .filter_map(|f| t.faces[f.index()].db().map(|db| (f.letter().to_string(), db)))
        .collect();
    let per_subregion_psnr_db = if layout.is_some() {
        crate::viewpoint::Subregion::ALL
            .iter()
            .filter_map(|s| t.subs[s.index()].db().map(|db| (format!("{s:?}"), db)))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(RoundTripReport {
        schema: REPORT_SCHEMA,
        path: path.to_string(),
        psnr_db: t.total.db().unwrap_or(inf),
        max_abs_err: t.abs_max,
        mean_abs_err: t.abs_sum / a.data().len() as f64,
        pole_psnr_db: t.north.merge(t.south).db().unwrap_or(inf),
        north_pole_psnr_db: t.north.db().unwrap_or(inf),
        south_pole_psnr_db: t.south.db().unwrap_or(inf),
        per_face_psnr_db,
        per_subregion_psnr_db,
        baseline: None,
    })
}

/// Absolute differences between the two stored copies of every overlap pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub mean_abs: f64,
    pub max_abs: f64,
    /// Number of map pixels that have a partner copy.
    pub pixels: usize,
}

/// Compares each duplicated map pixel with its partner copy, located by
/// geometry and sampled bilinearly inside the partner's tile.
pub fn overlap_consistency(vp: &ViewPointImage) -> OverlapStats {
    let layout = *vp.layout();
    let side = layout.map_side();
    let buf = vp.buffer();
    let c = buf.channels();
    let (sum, max, pixels) = (0..side)
        .into_par_iter()
        .map(|y| {
            let mut acc = (0.0f64, 0.0f64, 0usize);
            let mut other = [0.0f32; 4];
            for x in 0..side {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                let own = layout.map_to_subregion(fx, fy).sub;
                let src = direction_to_subregion_coords(viewpoint_pixel_to_direction(fx, fy, &layout), &layout);
                if src.len() < 2 || !src.entries().iter().any(|e| e.coord.sub == own) {
                    continue;
                }
                let partner = src.entries().iter().find(|e| e.coord.sub != own).unwrap();
                vp.sample_subregion(partner.coord, &mut other[..c]);
                let px = buf.pixel(x, y);
                let mut d = 0.0f64;
                for k in 0..c {
                    d = d.max((px[k] as f64 - other[k] as f64).abs());
                }
                acc.0 += d;
                acc.1 = acc.1.max(d);
                acc.2 += 1;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0f64, 0.0f64, 0usize), |a, b| (a.0 + b.0, a.1.max(b.1), a.2 + b.2));
    OverlapStats {
        mean_abs: if pixels > 0 { sum / pixels as f64 } else { 0.0 },
        max_abs: max,
        pixels,
    }
}

/// Angular distance from `d` to the minor great-circle arc `a`-`b`.
pub fn distance_to_arc(d: Direction, a: Direction, b: Direction) -> f64 {
    let nrm = a.cross(b).normalized();
    let off = d.dot(nrm);
    let p = d - nrm * off;
    let inside = a.cross(p).dot(nrm) >= 0.0 && p.cross(b).dot(nrm) >= 0.0;
    if inside && p.norm() > 0.0 {
        off.abs().clamp(0.0, 1.0).asin()
    } else {
        d.angle_to(a).min(d.angle_to(b))
    }
}

/// Mean gradient magnitude near seams minus that of a surrounding control band.
///
/// Seam pixels lie within one pixel height (`π/H`) of an arc; control pixels
/// lie between 3 and 6 pixel heights away. Gradients are central differences
/// in pixel units, wrapping in longitude and clamping at the poles.
pub fn seam_energy(erp: &ErpImage, seams: &[(Direction, Direction)]) -> f64 {
    let dims = erp.dims();
    let buf = erp.buffer();
    let c = buf.channels();
    let delta = PI / dims.height as f64;
    let (w, h) = (dims.width, dims.height);
    let (seam, control) = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut acc = ((0.0f64, 0usize), (0.0f64, 0usize));
            for x in 0..w {
                let d = erp_pixel_to_direction(dims, x as f64 + 0.5, y as f64 + 0.5);
                let dist = seams
                    .iter()
                    .map(|&(a, b)| distance_to_arc(d, a, b))
                    .fold(f64::INFINITY, f64::min);
                let band = if dist <= delta {
                    &mut acc.0
                } else if (3.0 * delta..=6.0 * delta).contains(&dist) {
                    &mut acc.1
                } else {
                    continue;
                };
                let (xl, xr) = ((x + w - 1) % w, (x + 1) % w);
                let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                let mut g2 = 0.0f64;
                for k in 0..c {
                    let gx = (buf.pixel(xr, y)[k] as f64 - buf.pixel(xl, y)[k] as f64) / 2.0;
                    let gy = (buf.pixel(x, yd)[k] as f64 - buf.pixel(x, yu)[k] as f64) / (yd - yu) as f64;
                    g2 += gx * gx + gy * gy;
                }
                band.0 += g2.sqrt();
                band.1 += 1;
            }
            acc
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(((0.0, 0), (0.0, 0)), |a, b| {
            ((a.0 .0 + b.0 .0, a.0 .1 + b.0 .1), (a.1 .0 + b.1 .0, a.1 .1 + b.1 .1))
        });
    let mean = |(s, n): (f64, usize)| if n > 0 { s / n as f64 } else { 0.0 };
    mean(seam) - mean(control)
}

/// Parameters of one plane-wave term `cos(f·(d·ω) + φ)` of the fixture.
#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    freq: f64,
    dir: Direction,
    phase: f64,
}

const WAVES_PER_CHANNEL: usize = 6;

/// Smooth seeded 3-channel panorama: per channel a sum of plane waves on the
/// sphere with spatial frequency at most `cutoff`, offset to 0.5 and scaled
/// into `[0.05, 0.95]`.
pub fn band_limited_sphere_image(dims: ErpDims, seed: u64, cutoff: f64) -> Result<ErpImage> {
    if cutoff.is_nan() || cutoff < 1.0 {
        return Err(Error::InvalidParameter(format!("cutoff {cutoff} < 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels: Vec<Vec<Wave>> = (0..3)
        .map(|_| {
            let mut waves: Vec<Wave> = (0..WAVES_PER_CHANNEL)
                .map(|_| {
                    let dir = loop {
                        let v = Direction::raw(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                        let n = v.norm();
                        if n > 1e-3 && n <= 1.0 {
                            break v * (1.0 / n);
                        }
                    };
                    Wave {
                        amp: rng.gen_range(0.2..1.0),
                        freq: rng.gen_range(1.0..=cutoff),
                        dir,
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    }
                })
                .collect();
            let total: f64 = waves.iter().map(|w| w.amp).sum();
            for w in &mut waves {
                w.amp *= 0.45 / total;
            }
            waves
        })
        .collect();
    let buffer = ImageBuffer::from_fn(dims.width, dims.height, 3, ColorSpace::Srgb, |x, y, out| {
        let d = erp_pixel_to_direction(dims, x as f64 + 0.5, y as f64 + 0.5);
        for (o, waves) in out.iter_mut().zip(&channels) {
            let v: f64 = waves.iter().map(|w| w.amp * (w.freq * d.dot(w.dir) + w.phase).cos()).sum();
            *o = (0.5 + v) as f32;
        }
    })?;
    ErpImage::new(buffer)
}
