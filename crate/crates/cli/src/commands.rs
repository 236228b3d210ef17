use std::path::{Path, PathBuf};

use rayon::prelude::*;
use vpk_core::cubemap::{erp_to_cubemap, extract_face_views, extract_perspective, to_cubemap};
use vpk_core::erp::resample_to_erp;
use vpk_core::fusion::fuse_viewpoint;
use vpk_core::io::{self, Manifest, Representation, MANIFEST_NAME, MANIFEST_SCHEMA};
use vpk_core::metrics::{round_trip_report, RoundTripReport};
use vpk_core::viewpoint::{project_condition, reconstruct_erp, to_viewpoint, ViewPointSource};
use vpk_core::{
    CameraPose, CubemapImage, ErpDims, ErpImage, FaceId, ImageBuffer, SphereSource, ViewPointImage, ViewPointLayout,
};

use crate::config::{pick, ConfigFile};
use crate::{Cli, CliError, Command, JobArgs};

const DEFAULT_FPS: f64 = 24.0;
const DEFAULT_VIEW_SIDE: usize = 512;

/// Fully resolved options: flags, then config file, then defaults.
#[derive(Debug, Clone)]
pub struct Job {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub from: Option<Representation>,
    pub to: Option<Representation>,
    pub n: Option<usize>,
    pub face_side: Option<usize>,
    pub erp_width: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    /// Set when any camera flag or key was given.
    pub pose: Option<CameraPose>,
    pub fuse: bool,
    pub six: bool,
    pub psnr_min: Option<f64>,
    pub report: Option<PathBuf>,
    pub fps: f64,
}

fn parse_repr(s: Option<String>) -> Result<Option<Representation>, CliError> {
    s.map(|v| v.parse::<Representation>().map_err(|e| CliError::config(e.to_string())))
        .transpose()
}

impl Job {
    pub fn resolve(args: JobArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let angles = [
            ("yaw", args.yaw),
            ("pitch", args.pitch),
            ("roll", args.roll),
            ("hfov", args.hfov),
            ("vfov", args.vfov),
        ]
        .into_iter()
        .map(|(k, v)| pick(v, cfg, k))
        .collect::<Result<Vec<_>, _>>()?;
        let pose = if angles.iter().any(Option::is_some) {
            let deg = |i: usize, default: f64| angles[i].unwrap_or(default).to_radians();
            let p = CameraPose::new(deg(0, 0.0), deg(1, 0.0), deg(2, 0.0), deg(3, 90.0), deg(4, 90.0))?;
            Some(p)
        } else {
            None
        };
        let flag_or = |flag: bool, key: &str| -> Result<bool, CliError> {
            Ok(flag || cfg.get_bool(key)?.unwrap_or(false))
        };
        let job = Self {
            input: pick(args.input, cfg, "input")?,
            output: pick(args.output, cfg, "output")?,
            from: parse_repr(pick(args.from, cfg, "from")?)?,
            to: parse_repr(pick(args.to, cfg, "to")?)?,
            n: pick(args.n, cfg, "n")?,
            face_side: pick(args.face_side, cfg, "face_side")?,
            erp_width: pick(args.erp_width, cfg, "erp_width")?,
            width: pick(args.width, cfg, "width")?,
            height: pick(args.height, cfg, "height")?,
            pose,
            fuse: flag_or(args.fuse, "fuse")?,
            six: flag_or(args.six, "six")?,
            psnr_min: pick(args.psnr_min, cfg, "psnr_min")?,
            report: pick(args.report, cfg, "report")?,
            fps: pick(args.fps, cfg, "fps")?.unwrap_or(DEFAULT_FPS),
        };
        for (name, v) in [("n", job.n), ("face-side", job.face_side), ("erp-width", job.erp_width)] {
            if v == Some(0) {
                return Err(CliError::config(format!("--{name} must be positive")));
            }
        }
        Ok(job)
    }

    fn input(&self) -> Result<&Path, CliError> {
        self.input.as_deref().ok_or_else(|| CliError::config("--input is required"))
    }

    fn output(&self) -> Result<&Path, CliError> {
        self.output.as_deref().ok_or_else(|| CliError::config("--output is required"))
    }

    fn pose_or_forward(&self) -> CameraPose {
        self.pose.unwrap_or_else(|| CameraPose::for_face(FaceId::F))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads = pick(cli.threads, &cfg, "threads")?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Convert(a) => cmd_convert(&Job::resolve(a, &cfg)?),
        Command::Fuse(a) => cmd_fuse(&Job::resolve(a, &cfg)?),
        Command::Mask(a) => cmd_mask(&Job::resolve(a, &cfg)?),
        Command::Roundtrip(a) => cmd_roundtrip(&Job::resolve(a, &cfg)?).map(|_| ()),
        Command::Extract(a) => cmd_extract(&Job::resolve(a, &cfg)?),
        Command::Selftest => selftest_command(),
    })
}

fn selftest_command() -> Result<(), CliError> {
    let results = crate::selftest::run_all();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    if results.iter().all(|r| r.passed) {
        Ok(())
    } else {
        Err(CliError::threshold("self-test failed"))
    }
}

/// A panorama in one of the three spherical representations.
#[derive(Debug, Clone)]
pub enum Pano {
    Erp(ErpImage),
    Cubemap(CubemapImage),
    Viewpoint(ViewPointImage),
}

impl Pano {
    pub fn representation(&self) -> Representation {
        match self {
            Pano::Erp(_) => Representation::Erp,
            Pano::Cubemap(_) => Representation::Cubemap,
            Pano::Viewpoint(_) => Representation::Viewpoint,
        }
    }

    fn from_buffer(buf: ImageBuffer, repr: Representation, n: Option<usize>) -> Result<Self, CliError> {
        Ok(match repr {
            Representation::Erp => Pano::Erp(ErpImage::new(buf)?),
            Representation::Cubemap => Pano::Cubemap(CubemapImage::from_atlas(&buf)?),
            Representation::Viewpoint => {
                let layout = match n {
                    Some(n) => ViewPointLayout::new(n)?,
                    None => ViewPointLayout::from_map_side(buf.width())?,
                };
                Pano::Viewpoint(ViewPointImage::new(buf, layout)?)
            }
            Representation::Perspective => {
                return Err(CliError::config("a perspective frame is not a panorama"));
            }
        })
    }

    /// Single-file form: ERP and ViewPoint maps as-is, cubemaps as atlases.
    fn to_frame(&self) -> ImageBuffer {
        match self {
            Pano::Erp(e) => e.buffer().clone(),
            Pano::Cubemap(c) => c.to_atlas(),
            Pano::Viewpoint(v) => v.buffer().clone(),
        }
    }

    fn save(&self, path: &Path) -> Result<(), CliError> {
        match self {
            Pano::Erp(e) => io::save_png(path, e.buffer())?,
            Pano::Cubemap(c) => io::save_cubemap(path, c)?,
            Pano::Viewpoint(v) => io::save_viewpoint(path, v)?,
        }
        Ok(())
    }

    fn default_n(&self) -> usize {
        match self {
            Pano::Erp(e) => (e.height() / 2).max(2),
            Pano::Cubemap(c) => c.face_side().max(2),
            Pano::Viewpoint(v) => v.layout().n(),
        }
    }

    fn default_face_side(&self) -> usize {
        match self {
            Pano::Erp(e) => (e.height() / 2).max(2),
            Pano::Cubemap(c) => c.face_side(),
            Pano::Viewpoint(v) => v.layout().n(),
        }
    }

    fn default_erp_width(&self) -> usize {
        match self {
            Pano::Erp(e) => e.width(),
            Pano::Cubemap(c) => 4 * c.face_side(),
            Pano::Viewpoint(v) => 4 * v.layout().n(),
        }
    }

    /// Samples the panorama by direction; ViewPoint overlaps are blended when `fuse`.
    fn with_source<R>(&self, fuse: bool, f: impl FnOnce(&dyn SphereSource) -> R) -> R {
        match self {
            Pano::Erp(e) => f(e),
            Pano::Cubemap(c) => f(c),
            Pano::Viewpoint(v) => f(&ViewPointSource { map: v, fuse }),
        }
    }
}

/// Converts `pano` to `to` using the job's layout options.
pub fn convert(pano: &Pano, to: Representation, job: &Job) -> Result<Pano, CliError> {
    if pano.representation() == to {
        return Err(CliError::config(format!("source and target are both {to}")));
    }
    Ok(match to {
        Representation::Erp => {
            let dims = ErpDims::from_width(job.erp_width.unwrap_or_else(|| pano.default_erp_width()))?;
            match pano {
                Pano::Viewpoint(v) => Pano::Erp(reconstruct_erp(v, dims, job.fuse)?),
                _ => Pano::Erp(pano.with_source(job.fuse, |s| resample_to_erp(s, dims))?),
            }
        }
        Representation::Cubemap => {
            let a = job.face_side.unwrap_or_else(|| pano.default_face_side());
            match pano {
                Pano::Erp(e) => Pano::Cubemap(erp_to_cubemap(e, a)?),
                _ => Pano::Cubemap(pano.with_source(job.fuse, |s| to_cubemap(s, a))?),
            }
        }
        Representation::Viewpoint => {
            let layout = ViewPointLayout::new(job.n.unwrap_or_else(|| pano.default_n()))?;
            let vp = pano.with_source(false, |s| to_viewpoint(s, layout))?;
            Pano::Viewpoint(if job.fuse { fuse_viewpoint(&vp)? } else { vp })
        }
        Representation::Perspective => {
            return Err(CliError::config("use `vpk extract` for perspective output"));
        }
    })
}

fn is_sequence(path: &Path) -> bool {
    path.join(MANIFEST_NAME).is_file()
}

/// Guesses the representation of a single image or cubemap directory.
fn infer_repr(path: &Path, explicit: Option<Representation>) -> Result<Representation, CliError> {
    if let Some(r) = explicit {
        return Ok(r);
    }
    if path.is_dir() {
        return Ok(Representation::Cubemap);
    }
    let (w, h) = image_dims(path)?;
    Ok(if w == 2 * h {
        Representation::Erp
    } else if 2 * w == 3 * h {
        Representation::Cubemap
    } else if w == h {
        Representation::Viewpoint
    } else {
        return Err(CliError::config(format!(
            "cannot infer the representation of a {w}x{h} image; pass --from"
        )));
    })
}

fn image_dims(path: &Path) -> Result<(usize, usize), CliError> {
    Ok(io::png_dimensions(path)?)
}

fn load_pano(path: &Path, repr: Representation, n: Option<usize>) -> Result<Pano, CliError> {
    Ok(match repr {
        Representation::Cubemap => Pano::Cubemap(io::load_cubemap(path)?),
        Representation::Viewpoint if n.is_none() => Pano::Viewpoint(io::load_viewpoint(path)?),
        r => Pano::from_buffer(io::load_png(path)?, r, n)?,
    })
}

/// Checks that every frame exists and matches the manifest size, reading headers only.
fn validate_sequence(dir: &Path) -> Result<Manifest, CliError> {
    let m = io::read_manifest(dir)?;
    if m.frames == 0 {
        return Err(CliError::config(format!("{} holds no frames", dir.display())));
    }
    for i in 0..m.frames {
        let (w, h) = image_dims(&io::frame_path(dir, i))?;
        if (w, h) != (m.width, m.height) {
            return Err(vpk_core::Error::ShapeMismatch(format!(
                "frame {i} is {w}x{h}, manifest says {}x{}",
                m.width, m.height
            ))
            .into());
        }
    }
    Ok(m)
}

fn output_manifest(repr: Representation, frames: usize, fps: f64, sample: &ImageBuffer) -> Manifest {
    Manifest {
        schema: MANIFEST_SCHEMA,
        representation: repr,
        frames,
        fps,
        width: sample.width(),
        height: sample.height(),
        n: None,
        face_side: None,
        poses: None,
    }
}

fn pano_manifest(p: &Pano, frames: usize, fps: f64) -> Manifest {
    let mut m = output_manifest(p.representation(), frames, fps, &p.to_frame());
    match p {
        Pano::Cubemap(c) => m.face_side = Some(c.face_side()),
        Pano::Viewpoint(v) => m.n = Some(v.layout().n()),
        Pano::Erp(_) => {}
    }
    m
}

/// Applies `f` to every frame of a sequence in parallel, writing frames as
/// they finish and the manifest last.
fn map_sequence(
    input: &Path,
    output: &Path,
    f: impl Fn(&Manifest, ImageBuffer) -> Result<Pano, CliError> + Sync,
) -> Result<(), CliError> {
    let m = validate_sequence(input)?;
    let first = (0..m.frames)
        .into_par_iter()
        .map(|i| -> Result<Option<Manifest>, CliError> {
            let out = f(&m, io::load_frame(input, &m, i)?)?;
            io::save_png(&io::frame_path(output, i), &out.to_frame())?;
            Ok((i == 0).then(|| pano_manifest(&out, m.frames, m.fps)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let manifest = first.into_iter().flatten().next().expect("frame 0 processed");
    io::write_manifest(output, &manifest)?;
    Ok(())
}

pub fn cmd_convert(job: &Job) -> Result<(), CliError> {
    let input = job.input()?;
    let output = job.output()?;
    let to = job.to.ok_or_else(|| CliError::config("--to is required"))?;
    if is_sequence(input) {
        let m = io::read_manifest(input)?;
        if job.from.is_some_and(|f| f != m.representation) {
            return Err(CliError::config("--from disagrees with the sequence manifest"));
        }
        let n = m.n;
        return map_sequence(input, output, |m, buf| {
            let pano = Pano::from_buffer(buf, m.representation, n)?;
            convert(&pano, to, job)
        });
    }
    let from = infer_repr(input, job.from)?;
    let pano = load_pano(input, from, None)?;
    convert(&pano, to, job)?.save(output)
}

pub fn cmd_fuse(job: &Job) -> Result<(), CliError> {
    let input = job.input()?;
    let output = job.output.as_deref().unwrap_or(input);
    if job.from.is_some_and(|f| f != Representation::Viewpoint) {
        return Err(CliError::config("fuse works on viewpoint maps only"));
    }
    let fuse = |p: Pano| -> Result<Pano, CliError> {
        match p {
            Pano::Viewpoint(v) => Ok(Pano::Viewpoint(fuse_viewpoint(&v)?)),
            _ => Err(CliError::config("fuse works on viewpoint maps only")),
        }
    };
    if is_sequence(input) {
        let m = io::read_manifest(input)?;
        if m.representation != Representation::Viewpoint {
            return Err(CliError::config("fuse works on viewpoint sequences only"));
        }
        let n = m.n;
        return map_sequence(input, output, |m, buf| fuse(Pano::from_buffer(buf, m.representation, n)?));
    }
    fuse(load_pano(input, Representation::Viewpoint, job.n)?)?.save(output)
}

pub fn cmd_mask(job: &Job) -> Result<(), CliError> {
    let input = job.input()?;
    let output = job.output()?;
    let layout = ViewPointLayout::new(job.n.unwrap_or(ViewPointLayout::default().n()))?;
    if !is_sequence(input) {
        let frame = io::load_png(input)?;
        let (cond, mask) = project_condition(layout, &job.pose_or_forward(), &frame)?;
        io::save_viewpoint(&output.join("condition.png"), &cond)?;
        io::save_viewpoint(&output.join("mask.png"), &mask)?;
        return Ok(());
    }
    let m = validate_sequence(input)?;
    if m.representation != Representation::Perspective {
        return Err(CliError::config("mask expects a perspective sequence"));
    }
    let pose_of = |i: usize| match (&job.pose, &m.poses) {
        (Some(p), _) => *p,
        (None, Some(ps)) => ps[if ps.len() == 1 { 0 } else { i }],
        (None, None) => job.pose_or_forward(),
    };
    let (cdir, mdir) = (output.join("condition"), output.join("mask"));
    (0..m.frames).into_par_iter().try_for_each(|i| -> Result<(), CliError> {
        let frame = io::load_frame(input, &m, i)?;
        let (cond, mask) = project_condition(layout, &pose_of(i), &frame)?;
        io::save_png(&io::frame_path(&cdir, i), cond.buffer())?;
        io::save_png(&io::frame_path(&mdir, i), mask.buffer())?;
        Ok(())
    })?;
    let side = ImageBuffer::new(layout.map_side(), layout.map_side(), 1, vpk_core::ColorSpace::Linear)?;
    for dir in [&cdir, &mdir] {
        let mut man = output_manifest(Representation::Viewpoint, m.frames, m.fps, &side);
        man.n = Some(layout.n());
        io::write_manifest(dir, &man)?;
    }
    Ok(())
}

/// Runs ERP -> target -> ERP on one image and returns the report. A ViewPoint
/// round trip also carries the cubemap round trip as its baseline.
pub fn cmd_roundtrip(job: &Job) -> Result<RoundTripReport, CliError> {
    let input = job.input()?;
    let from = infer_repr(input, job.from)?;
    if from != Representation::Erp {
        return Err(CliError::config("roundtrip starts from an erp image"));
    }
    let to = job.to.unwrap_or(Representation::Viewpoint);
    let Pano::Erp(erp) = load_pano(input, from, None)? else {
        unreachable!("loaded as erp")
    };
    let job = Job {
        erp_width: Some(erp.width()),
        ..job.clone()
    };
    let trip = |to: Representation| -> Result<RoundTripReport, CliError> {
        let src = Pano::Erp(erp.clone());
        let mid = convert(&src, to, &job)?;
        let Pano::Erp(back) = convert(&mid, Representation::Erp, &job)? else {
            unreachable!("converted to erp")
        };
        let layout = match &mid {
            Pano::Viewpoint(v) => Some(*v.layout()),
            _ => None,
        };
        Ok(round_trip_report(&format!("erp->{to}->erp"), &erp, &back, layout.as_ref())?)
    };
    let mut report = trip(to)?;
    if to == Representation::Viewpoint {
        report.baseline = Some(Box::new(trip(Representation::Cubemap)?));
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &job.report {
        Some(p) => io::write_atomic(p, json.as_bytes())?,
        None => println!("{json}"),
    }
    eprintln!("{}: psnr {} (poles {})", report.path, report.psnr_db, report.pole_psnr_db);
    if let Some(min) = job.psnr_min {
        if report.psnr_db.0 < min {
            return Err(CliError::threshold(format!("psnr {} below {min} dB", report.psnr_db)));
        }
    }
    Ok(report)
}

pub fn cmd_extract(job: &Job) -> Result<(), CliError> {
    let input = job.input()?;
    let output = job.output()?;
    let render = |pano: &Pano| -> Result<Vec<(String, ImageBuffer)>, CliError> {
        if job.six {
            let a = job.face_side.unwrap_or_else(|| pano.default_face_side());
            let views = pano.with_source(job.fuse, |s| extract_face_views(s, a))?;
            Ok(FaceId::ALL.iter().map(|f| f.letter().to_string()).zip(views).collect())
        } else {
            let (w, h) = (
                job.width.unwrap_or(DEFAULT_VIEW_SIDE),
                job.height.unwrap_or(job.width.unwrap_or(DEFAULT_VIEW_SIDE)),
            );
            let view = pano.with_source(job.fuse, |s| extract_perspective(s, &job.pose_or_forward(), w, h))?;
            Ok(vec![(String::new(), view)])
        }
    };
    if !is_sequence(input) {
        let pano = load_pano(input, infer_repr(input, job.from)?, None)?;
        for (name, view) in render(&pano)? {
            let path = if name.is_empty() { output.to_path_buf() } else { output.join(format!("{name}.png")) };
            io::save_png(&path, &view)?;
        }
        return Ok(());
    }
    let m = validate_sequence(input)?;
    (0..m.frames).into_par_iter().try_for_each(|i| -> Result<(), CliError> {
        let pano = Pano::from_buffer(io::load_frame(input, &m, i)?, m.representation, m.n)?;
        for (name, view) in render(&pano)? {
            io::save_png(&io::frame_path(&output.join(&name), i), &view)?;
        }
        Ok(())
    })?;
    let first = Pano::from_buffer(io::load_frame(input, &m, 0)?, m.representation, m.n)?;
    for (name, view) in render(&first)? {
        let mut man = output_manifest(Representation::Perspective, m.frames, m.fps, &view);
        man.poses = Some(vec![match FaceId::from_letter(&name) {
            Some(face) => CameraPose::for_face(face),
            None => job.pose_or_forward(),
        }]);
        io::write_manifest(&output.join(name), &man)?;
    }
    Ok(())
}
