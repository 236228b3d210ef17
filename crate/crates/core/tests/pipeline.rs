use vpk_core::cubemap::{cubemap_to_erp, erp_to_cubemap};
use vpk_core::fusion::fuse_viewpoint;
use vpk_core::metrics::{band_limited_sphere_image, overlap_consistency, psnr, round_trip_report, seam_energy};
use vpk_core::viewpoint::{cubemap_to_viewpoint, erp_to_viewpoint, layout_seams, reconstruct_erp};
use vpk_core::{ColorSpace, ErpDims, ErpImage, ImageBuffer, ViewPointLayout};

fn fixture(width: usize, seed: u64) -> ErpImage {
    band_limited_sphere_image(ErpDims::from_width(width).unwrap(), seed, 8.0).unwrap()
}

#[test]
fn cubemap_round_trip_of_constant_is_exact() {
    let erp = ErpImage::new(ImageBuffer::filled(256, 128, ColorSpace::Srgb, &[0.25, 0.5, 0.75]).unwrap()).unwrap();
    let back = cubemap_to_erp(&erp_to_cubemap(&erp, 64).unwrap(), erp.dims()).unwrap();
    assert!(psnr(erp.buffer(), back.buffer()).unwrap().0 >= 60.0);
}

#[test]
fn cubemap_round_trip_of_smooth_sphere() {
    let erp = fixture(512, 1);
    let back = cubemap_to_erp(&erp_to_cubemap(&erp, 128).unwrap(), erp.dims()).unwrap();
    let db = psnr(erp.buffer(), back.buffer()).unwrap().0;
    assert!(db >= 30.0, "{db}");
}

#[test]
fn viewpoint_round_trip_report() {
    let erp = fixture(512, 2);
    let layout = ViewPointLayout::new(128).unwrap();
    let vp = erp_to_viewpoint(&erp, layout).unwrap();
    let back = reconstruct_erp(&vp, erp.dims(), true).unwrap();
    let r = round_trip_report("erp->viewpoint->erp", &erp, &back, Some(&layout)).unwrap();
    assert!(r.psnr_db.0 >= 32.0 && r.pole_psnr_db.0 >= 28.0, "{r:?}");
    assert_eq!(r.per_subregion_psnr_db.len(), 4);
    assert_eq!(r.per_face_psnr_db.len(), 6);
    assert!(r.max_abs_err >= r.mean_abs_err);
}

#[test]
fn overlap_copies_agree_on_consistent_maps() {
    let erp = fixture(512, 3);
    let vp = erp_to_viewpoint(&erp, ViewPointLayout::new(128).unwrap()).unwrap();
    let s = overlap_consistency(&vp);
    assert!(s.max_abs < 1e-2, "{s:?}");
}

#[test]
fn fusion_does_not_raise_seam_energy() {
    let erp = fixture(512, 4);
    let vp = erp_to_viewpoint(&erp, ViewPointLayout::new(128).unwrap()).unwrap();
    let before = seam_energy(&reconstruct_erp(&vp, erp.dims(), true).unwrap(), &layout_seams());
    let fused = fuse_viewpoint(&vp).unwrap();
    let after = seam_energy(&reconstruct_erp(&fused, erp.dims(), true).unwrap(), &layout_seams());
    assert!(after <= before + 1e-6, "{before} -> {after}");
}

#[test]
fn cubemap_and_erp_sources_give_matching_maps() {
    let erp = fixture(1024, 5);
    let layout = ViewPointLayout::new(64).unwrap();
    let direct = erp_to_viewpoint(&erp, layout).unwrap();
    let via_cube = cubemap_to_viewpoint(&erp_to_cubemap(&erp, 256).unwrap(), layout).unwrap();
    let db = psnr(direct.buffer(), via_cube.buffer()).unwrap().0;
    assert!(db >= 40.0, "{db}");
}
