//! Invariant checks bundled into the binary (`vpk selftest`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpk_core::fusion::{fuse_subregions, rotate90, FusionWeights, SquareMatrix};
use vpk_core::tensor_layout::{pano_to_perspective, perspective_to_pano, LatentGrid};
use vpk_core::viewpoint::{semicircle_to_triangle, triangle_to_semicircle};
use vpk_core::{ColorSpace, ImageBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![partition_of_unity(), warp_bijection(), split_merge_identity(), golden_fusion_n2()]
}

fn partition_of_unity() -> CheckResult {
    let mut worst = 0.0f64;
    for n in [2, 3, 16, 256] {
        let w = FusionWeights::new(n).expect("n >= 2");
        for i in 0..n {
            for j in 0..n {
                worst = worst
                    .max((w.r90.get(i, j) + w.r_minus90.get(i, j) - 1.0).abs())
                    .max((w.w.get(i, j) + w.r180.get(i, j) - 1.0).abs());
            }
        }
        let jj = SquareMatrix::exchange(n);
        if jj.matmul(&jj) != SquareMatrix::identity(n) {
            return check("partition of unity", false, format!("J*J != I at n = {n}"));
        }
    }
    check("partition of unity", worst == 0.0, format!("max |w + w' - 1| = {worst:e}"))
}

fn warp_bijection() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (r, theta) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=std::f64::consts::PI));
        let (rs, t) = semicircle_to_triangle(r, theta, 1.0).expect("in domain");
        let (back, _) = triangle_to_semicircle(rs, t, 1.0).expect("in domain");
        worst = worst.max((back - r).abs() / r.max(f64::MIN_POSITIVE));
    }
    check("warp bijection", worst < 1e-12, format!("max relative error {worst:e}"))
}

fn split_merge_identity() -> CheckResult {
    let dims = [2, 3, 5, 8, 8];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = LatentGrid::from_fn(dims, |_| rng.gen::<f32>());
    let ok = pano_to_perspective(&g)
        .and_then(|s| perspective_to_pano(&s))
        .is_ok_and(|back| back == g);
    check("split/merge identity", ok, format!("shape {dims:?}"))
}

fn golden_fusion_n2() -> CheckResult {
    let w = FusionWeights::new(2).expect("n >= 2");
    let tiles = [1.0f32, 0.0, 0.0, 0.0].map(|v| ImageBuffer::filled(4, 4, ColorSpace::Linear, &[v]).expect("tile"));
    let out = fuse_subregions(&tiles, &w).expect("matching tiles");
    let expected = rotate90(&w.w);
    let ok = (0..2).all(|i| (0..2).all(|j| out[0].pixel(2 + j, i)[0] as f64 == expected.get(i, j)));
    check("n=2 golden fusion", ok, "S_L top-right quadrant == R90(W)".to_string())
}
