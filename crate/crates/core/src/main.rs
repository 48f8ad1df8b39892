use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cli_error::{fail, CliResult};
use serde::{Deserialize, Serialize};

use active_recon::coverage::coverage_map;
use active_recon::fusion::{fuse, merge, score_views, FusedSurface};
use active_recon::geometry::{load_cameras, save_cameras, CameraModel, Vec2, Vec3};
use active_recon::meshing::RgbImage;
use active_recon::nbv::{plan_nbvs, Pose, ViewCandidate};
use active_recon::ply::PlyFormat;
use active_recon::sim::{self, ScenePoint, SceneSpec};
use active_recon::{config, Config};

/// Tiny error plumbing: every failure becomes a message and exit code 1.
mod cli_error {
    pub type CliResult<T = ()> = Result<T, String>;

    pub fn fail<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> String {
        move |e| format!("{context}: {e}")
    }
}

#[derive(Parser)]
#[command(
    name = "active-recon",
    version,
    about = "Piecewise-planar MVS, coverage evaluation and next-best-view planning"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Over-segment and triangulate an image; writes mesh.ply.
    Mesh { image: PathBuf },
    /// Render a scene from cameras; writes view_NN.png and points.json.
    Render {
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Per-view inverse-depth solve; writes views.json.
    Solve(ViewInputs),
    /// Solve, score and fuse; writes fused.ply, confidence.ply, fusion.json.
    Fuse(ViewInputs),
    /// Coverage of a fused surface; writes coverage.ply and coverage.json.
    Coverage {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
    },
    /// Next-best views for a fused surface; writes nbv.json and plan.json.
    PlanNbv {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
    },
    /// Collision-free path through NBVs; writes path.json.
    PlanPath {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        nbv: PathBuf,
        /// Start position `x,y,z`.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        start: Vec3,
    },
    /// The full capture loop; writes iter_NN/ directories and metrics.json.
    Simulate {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Accuracy and completeness against scene ground truth; writes evaluation.json.
    Evaluate {
        #[arg(long)]
        surface: PathBuf,
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Refine alignment with ICP before measuring.
        #[arg(long)]
        icp: bool,
    },
}

#[derive(Args)]
struct ViewInputs {
    #[arg(long)]
    cameras: PathBuf,
    /// One PNG per camera, in camera order.
    #[arg(long, num_args = 1.., required = true)]
    images: Vec<PathBuf>,
    #[arg(long)]
    points: PathBuf,
}

/// Scene point on disk: observations are `[view, x, y]`.
#[derive(Debug, Serialize, Deserialize)]
struct PointJson {
    position: [f64; 3],
    observations: Vec<(usize, f64, f64)>,
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> =
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string())).collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(Vec3::new(x, y, z)),
        _ => Err("expected x,y,z".into()),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(fail(path.display()))?;
    serde_json::from_str(&text).map_err(fail(path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    sim::write_json(path, value).map_err(fail(path.display()))
}

fn read_surface(path: &Path) -> CliResult<FusedSurface> {
    FusedSurface::read_ply(File::open(path).map_err(fail(path.display()))?).map_err(fail(path.display()))
}

fn read_cameras(path: &Path) -> CliResult<Vec<CameraModel>> {
    load_cameras(path).map_err(fail(path.display()))
}

fn read_scene(path: Option<&Path>) -> CliResult<SceneSpec> {
    path.map_or_else(|| Ok(SceneSpec::box_with_overhang()), read_json)
}

fn write_file(path: &Path, f: impl FnOnce(&mut File) -> std::io::Result<()>) -> CliResult {
    let mut file = File::create(path).map_err(fail(path.display()))?;
    f(&mut file).map_err(fail(path.display()))
}

fn load_views(inputs: &ViewInputs, params: &Config) -> CliResult<Vec<active_recon::view::ViewFrame>> {
    let cameras = read_cameras(&inputs.cameras)?;
    if inputs.images.len() != cameras.len() {
        return Err(format!("{} images for {} cameras", inputs.images.len(), cameras.len()));
    }
    let points: Vec<PointJson> = read_json(&inputs.points)?;
    let points: Vec<ScenePoint> = points
        .into_iter()
        .map(|p| {
            let position = Vec3::from(p.position);
            ScenePoint {
                position,
                true_position: position,
                observations: p.observations.iter().map(|&(v, x, y)| (v, Vec2::new(x, y))).collect(),
                triangle: 0,
                noise: 0.0,
            }
        })
        .collect();
    let mut frames = Vec::with_capacity(cameras.len());
    for (v, (cam, path)) in cameras.iter().zip(&inputs.images).enumerate() {
        let img = image::open(path).map_err(fail(path.display()))?.to_rgb8();
        if (img.width(), img.height()) != (cam.width(), cam.height()) {
            return Err(format!("{}: size does not match camera {v}", path.display()));
        }
        let mesh = sim::mesh_image(&RgbImage::from_rgb8(&img), &params.recon);
        let obs = sim::observations_for_view(&points, v, cam);
        frames.push(
            sim::solve_view(v, cam.clone(), mesh, &obs, &params.recon, &params.solve)
                .map_err(fail(format!("view {v}")))?,
        );
    }
    Ok(frames)
}

fn run(cli: Cli) -> CliResult {
    let mut params = match &cli.common.config {
        Some(path) => config::load(path).map_err(fail(path.display()))?,
        None => Config::default(),
    };
    if let Some(seed) = cli.common.seed {
        params.seed = seed;
    }
    let out = &cli.common.out;
    std::fs::create_dir_all(out).map_err(fail(out.display()))?;
    let intr = params.camera.intrinsics();

    match cli.command {
        Command::Mesh { image } => {
            let img = image::open(&image).map_err(fail(image.display()))?.to_rgb8();
            let mesh = sim::mesh_image(&RgbImage::from_rgb8(&img), &params.recon);
            write_file(&out.join("mesh.ply"), |f| mesh.write_ply(f))?;
            println!("{} triangles, {} slots", mesh.num_triangles(), mesh.num_slots());
        }
        Command::Render { cameras, scene } => {
            let spec = read_scene(scene.as_deref())?;
            let scene = sim::build_scene(&spec).map_err(fail("scene"))?;
            let cameras = read_cameras(&cameras)?;
            for (v, cam) in cameras.iter().enumerate() {
                let path = out.join(format!("view_{v:02}.png"));
                sim::render_view(&scene, cam).image.to_rgb8().save(&path).map_err(fail(path.display()))?;
            }
            let points = sim::synth_scene_points(&scene, &cameras, &params.points, params.seed);
            let json: Vec<PointJson> = points
                .iter()
                .map(|p| PointJson {
                    position: p.position.into(),
                    observations: p.observations.iter().map(|(v, px)| (*v, px.x, px.y)).collect(),
                })
                .collect();
            write_json(&out.join("points.json"), &json)?;
            println!("{} views, {} scene points", cameras.len(), points.len());
        }
        Command::Solve(inputs) => {
            let frames = load_views(&inputs, &params)?;
            let json: Vec<_> = frames
                .iter()
                .map(|f| {
                    serde_json::json!({
                        "view": f.id,
                        "triangles": f.mesh.num_triangles(),
                        "supported": f.support.num_supported(),
                        "inverse_depths": f.depths,
                    })
                })
                .collect();
            write_json(&out.join("views.json"), &json)?;
        }
        Command::Fuse(inputs) => {
            let mut frames = load_views(&inputs, &params)?;
            score_views(&mut frames, &params.fusion);
            let report = fuse(&mut frames, &params.solve, &params.fusion).map_err(fail("fusion"))?;
            score_views(&mut frames, &params.fusion);
            let surface = merge(&frames);
            write_file(&out.join("fused.ply"), |f| surface.write_ply(f, PlyFormat::BinaryLittleEndian))?;
            write_file(&out.join("confidence.ply"), |f| {
                surface.write_confidence_ply(f, PlyFormat::BinaryLittleEndian)
            })?;
            write_json(&out.join("fusion.json"), &report)?;
            println!("{} fused triangles", surface.len());
        }
        Command::Coverage { surface, cameras } => {
            let surface = read_surface(&surface)?;
            let cameras = read_cameras(&cameras)?;
            let map = coverage_map(&surface, &cameras, &params.coverage).map_err(fail("coverage"))?;
            write_file(&out.join("coverage.ply"), |f| map.write_ply(f, PlyFormat::BinaryLittleEndian))?;
            write_json(&out.join("coverage.json"), &map.summary)?;
            println!("{}", serde_json::to_string(&map.summary).expect("summary serializes"));
        }
        Command::PlanNbv { surface, cameras } => {
            let surface = read_surface(&surface)?;
            let cameras = read_cameras(&cameras)?;
            let map = coverage_map(&surface, &cameras, &params.coverage).map_err(fail("coverage"))?;
            let poses: Vec<Pose> = cameras.iter().map(Pose::of).collect();
            let plan = plan_nbvs(&map, &surface.bvh(), intr, &poses, &params.nbv, params.coverage.occlusion())
                .map_err(fail("nbv"))?;
            write_json(&out.join("nbv.json"), &sim::nbv_json(Some(&plan.outcome)))?;
            write_json(&out.join("plan.json"), &plan)?;
            let nbv_cams: Vec<CameraModel> = match &plan.outcome {
                active_recon::nbv::NbvOutcome::Selected { nbvs, .. } => nbvs.iter().map(|c| c.camera(intr)).collect(),
                _ => Vec::new(),
            };
            save_cameras(&out.join("nbv_cameras.json"), &nbv_cams).map_err(fail("nbv_cameras.json"))?;
            println!("{}", serde_json::to_string(&plan.outcome).expect("outcome serializes"));
        }
        Command::PlanPath { surface, nbv, start } => {
            let surface = read_surface(&surface)?;
            let records: Vec<sim::NbvJson> = read_json(&nbv)?;
            let Some(first) = records.first() else {
                write_json(&out.join("path.json"), &Vec::<()>::new())?;
                return Ok(());
            };
            let altitude = first.position[2];
            let nbvs: Vec<ViewCandidate> = records
                .iter()
                .map(|r| ViewCandidate {
                    position: Vec3::from(r.position),
                    yaw_deg: r.yaw_deg,
                    pitch_deg: r.pitch_deg,
                    score: r.score,
                    reachable: true,
                })
                .collect();
            let path = sim::plan_flight(&surface.bvh(), altitude, &start, &nbvs, &params.nbv).map_err(fail("path"))?;
            write_json(&out.join("path.json"), &path.waypoints)?;
            println!(
                "length {:.3} m, visit order {:?}, unreachable {:?}",
                path.length, path.visit_order, path.unreachable
            );
        }
        Command::Simulate { scene, max_iterations } => {
            if let Some(m) = max_iterations {
                params.max_iterations = m;
            }
            let spec = read_scene(scene.as_deref())?;
            let initial = sim::rectangular_orbit(&params.orbit, intr);
            let state = sim::run_loop(&spec, initial, &params).map_err(|e| e.to_string())?;
            sim::write_state(&state, out).map_err(fail(out.display()))?;
            for r in &state.iterations {
                let s = r.summary();
                println!(
                    "iteration {}: {} views, covered {} uncovered {} ignored {} fraction {}",
                    r.iteration,
                    r.cameras.len(),
                    s.covered,
                    s.uncovered,
                    s.ignored,
                    s.fraction.map_or("n/a".into(), |f| format!("{f:.4}"))
                );
            }
            println!("termination: {}", serde_json::to_string(&state.termination).expect("serializes"));
        }
        Command::Evaluate { surface, scene, icp } => {
            let surface = read_surface(&surface)?;
            let spec = read_scene(scene.as_deref())?;
            let scene = sim::build_scene(&spec).map_err(fail("scene"))?;
            let gt: Vec<Vec3> =
                active_recon::coverage::sample_iso_points(&scene.triangles, params.eval.sample_radius, params.seed)
                    .map_err(fail("ground truth"))?
                    .into_iter()
                    .map(|s| s.position)
                    .collect();
            let mut vertices: Vec<Vec3> = surface.triangles.iter().flatten().copied().collect();
            let mut residuals = Vec::new();
            if icp {
                let report = sim::icp_refine(&vertices, &scene.bvh, sim::Similarity::identity(), 50, false)
                    .map_err(fail("icp"))?;
                vertices = vertices.iter().map(|v| report.transform.apply(v)).collect();
                residuals = report.residuals;
            }
            let nv = sim::NearestVertex::new(vertices);
            let acc = sim::accuracy(&gt, &nv).map_err(fail("accuracy"))?;
            let comp = sim::completeness(&gt, &nv, params.eval.completeness_distance).map_err(fail("completeness"))?;
            let json = serde_json::json!({
                "ground_truth_samples": gt.len(),
                "accuracy": acc,
                "completeness": comp,
                "completeness_distance": params.eval.completeness_distance,
                "icp_residuals": residuals,
            });
            write_json(&out.join("evaluation.json"), &json)?;
            println!("{}", serde_json::to_string(&json).expect("serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
