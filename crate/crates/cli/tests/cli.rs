use std::fs;
use std::path::{Path, PathBuf};

use vpk_cli::{run, EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_SHAPE, EXIT_THRESHOLD};
use vpk_core::io::{self, Manifest, Representation, MANIFEST_SCHEMA};
use vpk_core::metrics::{band_limited_sphere_image, RoundTripReport};
use vpk_core::{CameraPose, ColorSpace, ErpDims, FaceId, ImageBuffer};

fn vpk(args: &[&str]) -> i32 {
    run(std::iter::once("vpk").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_erp(path: &Path, width: usize, seed: u64) {
    let erp = band_limited_sphere_image(ErpDims::from_width(width).unwrap(), seed, 6.0).unwrap();
    io::save_png(path, erp.buffer()).unwrap();
}

fn sequence(dir: &Path, repr: Representation, frames: &[ImageBuffer], poses: Option<Vec<CameraPose>>) {
    for (i, f) in frames.iter().enumerate() {
        io::save_png(&io::frame_path(dir, i), f).unwrap();
    }
    let m = Manifest {
        schema: MANIFEST_SCHEMA,
        representation: repr,
        frames: frames.len(),
        fps: 12.0,
        width: frames[0].width(),
        height: frames[0].height(),
        n: None,
        face_side: None,
        poses,
    };
    io::write_manifest(dir, &m).unwrap();
}

#[test]
fn selftest_passes() {
    assert_eq!(vpk(&["selftest"]), EXIT_OK);
}

#[test]
fn six_directed_conversions() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let erp = t.join("pano.png");
    write_erp(&erp, 256, 1);
    let cube_dir = t.join("cube");
    assert_eq!(vpk(&["convert", "-i", s(&erp), "-o", s(&cube_dir), "--to", "cubemap"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&cube_dir.join("F.png")).unwrap(), (64, 64));
    let vp = t.join("vp.png");
    assert_eq!(vpk(&["convert", "-i", s(&cube_dir), "-o", s(&vp), "--to", "viewpoint"]), EXIT_OK);
    assert_eq!(io::load_viewpoint(&vp).unwrap().layout().n(), 64);
    let back = t.join("back.png");
    assert_eq!(vpk(&["convert", "-i", s(&vp), "-o", s(&back), "--to", "erp", "--fuse"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&back).unwrap(), (256, 128));
    let atlas = t.join("atlas.png");
    assert_eq!(vpk(&["convert", "-i", s(&vp), "-o", s(&atlas), "--to", "cubemap", "--face-side", "32"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&atlas).unwrap(), (96, 64));
    let erp2 = t.join("erp2.png");
    assert_eq!(vpk(&["convert", "-i", s(&atlas), "-o", s(&erp2), "--to", "erp", "--erp-width", "128"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&erp2).unwrap(), (128, 64));
    let vp2 = t.join("vp2.png");
    assert_eq!(vpk(&["convert", "-i", s(&erp), "-o", s(&vp2), "--to", "vp", "--n", "16"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&vp2).unwrap(), (64, 64));
    assert_eq!(vpk(&["convert", "-i", s(&erp), "-o", s(&vp2), "--to", "erp"]), EXIT_CONFIG);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let erp = t.join("pano.png");
    write_erp(&erp, 128, 2);
    let cfg = t.join("job.conf");
    fs::write(&cfg, format!("# defaults\ninput = \"{}\"\nto = viewpoint\nn = 8\n", s(&erp))).unwrap();
    let out = t.join("a.png");
    assert_eq!(vpk(&["--config", s(&cfg), "convert", "-o", s(&out)]), EXIT_OK);
    assert_eq!(io::png_dimensions(&out).unwrap(), (32, 32));
    assert_eq!(vpk(&["--config", s(&cfg), "convert", "-o", s(&out), "--n", "4"]), EXIT_OK);
    assert_eq!(io::png_dimensions(&out).unwrap(), (16, 16));
    fs::write(&cfg, "speed = 11\n").unwrap();
    assert_eq!(vpk(&["--config", s(&cfg), "selftest"]), EXIT_CONFIG);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    assert_eq!(vpk(&["convert", "-i", s(&t.join("missing.png")), "-o", "x.png", "--to", "erp"]), EXIT_IO);
    assert_eq!(vpk(&["convert", "--to", "erp"]), EXIT_CONFIG);
    assert_eq!(vpk(&["convert", "-i", "a", "-o", "b", "--to", "mercator"]), EXIT_CONFIG);
    assert_eq!(vpk(&["--threads", "0", "selftest"]), EXIT_CONFIG);
    assert_eq!(vpk(&["frobnicate"]), EXIT_CONFIG);
    let odd = t.join("odd.png");
    io::save_png(&odd, &ImageBuffer::filled(30, 10, ColorSpace::Srgb, &[0.5; 3]).unwrap()).unwrap();
    assert_eq!(vpk(&["convert", "-i", s(&odd), "-o", s(&t.join("o.png")), "--to", "cubemap", "--from", "erp"]), EXIT_SHAPE);
}

#[test]
fn sequence_shape_mismatch_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let seq = t.join("seq");
    let good = ImageBuffer::filled(64, 32, ColorSpace::Srgb, &[0.5; 3]).unwrap();
    let bad = ImageBuffer::filled(32, 16, ColorSpace::Srgb, &[0.5; 3]).unwrap();
    sequence(&seq, Representation::Erp, &[good.clone(), bad], None);
    let out = t.join("out");
    assert_eq!(vpk(&["convert", "-i", s(&seq), "-o", s(&out), "--to", "viewpoint"]), EXIT_SHAPE);
    assert!(!out.exists());
    sequence(&seq, Representation::Erp, &[good.clone(), good], None);
    assert_eq!(vpk(&["convert", "-i", s(&seq), "-o", s(&out), "--to", "cubemap"]), EXIT_OK);
    let m = io::read_manifest(&out).unwrap();
    assert_eq!((m.representation, m.frames, m.face_side, m.width, m.height), (Representation::Cubemap, 2, Some(16), 48, 32));
    let vp = t.join("vp");
    assert_eq!(vpk(&["convert", "-i", s(&out), "-o", s(&vp), "--to", "viewpoint", "--n", "8"]), EXIT_OK);
    assert_eq!(io::read_manifest(&vp).unwrap().n, Some(8));
    assert_eq!(vpk(&["fuse", "-i", s(&vp)]), EXIT_OK);
}

#[test]
fn roundtrip_report_and_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let erp = t.join("pano.png");
    write_erp(&erp, 256, 3);
    let report = t.join("report.json");
    assert_eq!(
        vpk(&["roundtrip", "-i", s(&erp), "--to", "viewpoint", "--psnr-min", "25", "--report", s(&report)]),
        EXIT_OK
    );
    let r: RoundTripReport = serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(r.schema, 1);
    assert_eq!(r.path, "erp->viewpoint->erp");
    assert!(r.psnr_db.0 > 25.0);
    assert_eq!(r.baseline.as_ref().unwrap().path, "erp->cubemap->erp");
    assert_eq!(
        vpk(&["roundtrip", "-i", s(&erp), "--psnr-min", "200", "--report", s(&report)]),
        EXIT_THRESHOLD
    );
    let vp = t.join("vp.png");
    assert_eq!(vpk(&["convert", "-i", s(&erp), "-o", s(&vp), "--to", "viewpoint"]), EXIT_OK);
    assert_eq!(vpk(&["roundtrip", "-i", s(&vp)]), EXIT_CONFIG);
}

#[test]
fn mask_of_forward_camera() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let frame = t.join("frame.png");
    io::save_png(&frame, &ImageBuffer::filled(32, 32, ColorSpace::Srgb, &[1.0, 0.0, 0.0]).unwrap()).unwrap();
    let out = t.join("m");
    assert_eq!(vpk(&["mask", "-i", s(&frame), "-o", s(&out), "--n", "16"]), EXIT_OK);
    let mask = io::load_png(&out.join("mask.png")).unwrap();
    assert_eq!((mask.width(), mask.channels()), (64, 1));
    let covered = mask.data().iter().filter(|&&v| v == 1.0).count();
    assert!(covered > 0 && covered < 64 * 64 / 2, "{covered}");
    assert!(out.join("condition.json").is_file());

    let seq = t.join("seq");
    let img = ImageBuffer::filled(16, 16, ColorSpace::Srgb, &[0.5; 3]).unwrap();
    let poses = vec![CameraPose::for_face(FaceId::F), CameraPose::for_face(FaceId::B)];
    sequence(&seq, Representation::Perspective, &[img.clone(), img], Some(poses));
    let out = t.join("ms");
    assert_eq!(vpk(&["mask", "-i", s(&seq), "-o", s(&out), "--n", "8"]), EXIT_OK);
    let a = io::load_png(&io::frame_path(&out.join("mask"), 0)).unwrap();
    let b = io::load_png(&io::frame_path(&out.join("mask"), 1)).unwrap();
    assert_ne!(a, b);
    assert_eq!(io::read_manifest(&out.join("condition")).unwrap().n, Some(8));
}

#[test]
fn extract_views() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let erp = t.join("pano.png");
    write_erp(&erp, 128, 4);
    let six = t.join("six");
    assert_eq!(vpk(&["extract", "-i", s(&erp), "-o", s(&six), "--six", "--face-side", "24"]), EXIT_OK);
    let names: Vec<PathBuf> = FaceId::ALL.iter().map(|f| six.join(format!("{}.png", f.letter()))).collect();
    assert!(names.iter().all(|p| io::png_dimensions(p).unwrap() == (24, 24)));
    let view = t.join("view.png");
    assert_eq!(
        vpk(&["extract", "-i", s(&erp), "-o", s(&view), "--yaw", "-45", "--hfov", "60", "--width", "40", "--height", "30"]),
        EXIT_OK
    );
    assert_eq!(io::png_dimensions(&view).unwrap(), (40, 30));
    assert_eq!(vpk(&["extract", "-i", s(&erp), "-o", s(&view), "--hfov", "180"]), EXIT_CONFIG);
}
