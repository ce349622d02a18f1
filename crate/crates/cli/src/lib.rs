//! `animflow` subcommands. Each `cmd_*` returns the process exit code:
//! 0 on success, 1 for invalid input, 2 when a run fails after validation.

use animflow::flowfield::{load_flo, save_flo, FlowError};
use animflow::geometry::{mesh_mask, Mask, MeshQuality, TriMesh, DEFAULT_MAX_AREA, DEFAULT_MIN_ANGLE, DEFAULT_SPACING};
use animflow::imaging::{flow_magnitude_weights, forward_warp, ImageBuffer, DEFAULT_ALPHA};
use animflow::scene::{
    apply_override, load_scene_value, parse_scene_value, prepare, run_pipeline, simulate_prepared, Scene,
    SceneError,
};
use clap::{Parser, Subcommand};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "animflow", version, about = "Physics-driven animation of 2D illustrations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline for a scene: mesh, simulate, write flows and frames.
    Run {
        /// Scene JSON file; relative paths inside resolve against its directory.
        #[arg(long, value_name = "PATH")]
        scene: PathBuf,
        /// Override a scene value by dotted path, e.g. sim.frame_count=8 or strokes[0].strength=40.
        /// Values parse as JSON, falling back to a string. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Mesh a mask and write the mesh as JSON plus a wireframe PNG next to it.
    Mesh {
        /// Mask PNG; pixels with luminance ≥ 128 are foreground.
        #[arg(long, value_name = "PATH")]
        mask: PathBuf,
        /// Output mesh JSON; the wireframe goes to the same path with a .png extension.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Boundary sample spacing, in pixels.
        #[arg(long, value_name = "N", default_value_t = DEFAULT_SPACING)]
        spacing: f64,
        /// Largest triangle area, in square pixels.
        #[arg(long, value_name = "N", default_value_t = DEFAULT_MAX_AREA)]
        max_area: f64,
        /// Smallest triangle angle, in degrees (at most 28).
        #[arg(long, value_name = "N", default_value_t = DEFAULT_MIN_ANGLE)]
        min_angle: f64,
    },
    /// Forward-warp an image by a .flo field, weighting pixels by flow magnitude.
    Warp {
        /// Input PNG (grayscale or RGB).
        #[arg(long, value_name = "PATH")]
        image: PathBuf,
        /// Flow field in Middlebury .flo format, displacements in pixels.
        #[arg(long, value_name = "PATH")]
        flow: PathBuf,
        /// Output PNG.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Softmax temperature, per pixel of flow magnitude (dimensionless).
        #[arg(long, value_name = "F", default_value_t = DEFAULT_ALPHA)]
        alpha: f32,
        /// Fill value for pixels nothing lands on, in [0, 1] for every channel.
        /// Defaults to 1 (white paper) for grayscale images and 0 for color.
        #[arg(long, value_name = "F")]
        background: Option<f32>,
    },
    /// Simulate a scene and write every frame's vertex positions as JSON.
    Simulate {
        /// Scene JSON file.
        #[arg(long, value_name = "PATH")]
        scene: PathBuf,
        /// Output JSON: a list of {frame, time (seconds), positions (pixels, per body)}.
        #[arg(long, value_name = "PATH")]
        snapshots: PathBuf,
    },
    /// Simulate a scene up to one frame and write that frame's flow.
    Flow {
        /// Scene JSON file.
        #[arg(long, value_name = "PATH")]
        scene: PathBuf,
        /// Frame index, 0 to sim.frame_count (frames are 1/fps seconds apart).
        #[arg(long, value_name = "N")]
        frame: usize,
        /// Output .flo file.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Start the local authoring service on 127.0.0.1.
    Serve {
        /// TCP port.
        #[arg(long, value_name = "N", default_value_t = animflow_service::DEFAULT_PORT)]
        port: u16,
    },
}

pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { scene, set } => cmd_run(&scene, &set),
        Command::Mesh {
            mask,
            out,
            spacing,
            max_area,
            min_angle,
        } => cmd_mesh(&mask, &out, spacing, max_area, min_angle),
        Command::Warp {
            image,
            flow,
            out,
            alpha,
            background,
        } => cmd_warp(&image, &flow, &out, alpha, background),
        Command::Simulate { scene, snapshots } => cmd_simulate(&scene, &snapshots),
        Command::Flow { scene, frame, out } => cmd_flow(&scene, frame, &out),
        Command::Serve { port } => cmd_serve(port),
    }
}

/// Exit code for a scene error: bad input is 1, anything failing later is 2.
pub fn exit_code(e: &SceneError) -> i32 {
    match e {
        SceneError::Parse(_) | SceneError::Validation { .. } | SceneError::FileNotFound(_) => EXIT_INVALID,
        SceneError::Stage { .. } | SceneError::Simulation(_) | SceneError::Io { .. } => EXIT_FAILED,
    }
}

fn fail(e: SceneError) -> i32 {
    eprintln!("error: {e}");
    exit_code(&e)
}

/// Loads a scene file and applies `key=value` overrides before parsing.
pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Scene, SceneError> {
    let (mut doc, base) = load_scene_value(path)?;
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| SceneError::validation(o.as_str(), "override must look like key=value"))?;
        apply_override(&mut doc, key.trim(), value.trim())?;
    }
    parse_scene_value(doc, base)
}

pub fn cmd_run(scene_path: &Path, overrides: &[String]) -> i32 {
    let scene = match load_with_overrides(scene_path, overrides) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match run_pipeline(&scene) {
        Ok(report) => {
            println!("{}", report.output_dir.join("report.json").display());
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

pub fn cmd_simulate(scene_path: &Path, out: &Path) -> i32 {
    let result = load_with_overrides(scene_path, &[])
        .and_then(|s| prepare(&s))
        .and_then(|p| {
            let n = p.scene.sim.frame_count;
            simulate_prepared(&p, |snap| {
                eprintln!("frame {}/{n}", snap.frame);
                ControlFlow::Continue(())
            })
        });
    match result {
        Ok(snaps) => {
            let json = serde_json::to_string(&snaps).expect("snapshots serialize");
            if let Err(e) = std::fs::write(out, json) {
                eprintln!("error: {}: {e}", out.display());
                return EXIT_FAILED;
            }
            println!("{}", out.display());
            EXIT_OK
        }
        Err(e) => fail(e),
    }
}

pub fn cmd_flow(scene_path: &Path, frame: usize, out: &Path) -> i32 {
    let mut scene = match load_with_overrides(scene_path, &[]) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if frame > scene.sim.frame_count {
        return fail(SceneError::validation(
            "frame",
            format!("frame {frame} exceeds sim.frame_count {}", scene.sim.frame_count),
        ));
    }
    scene.sim.frame_count = frame;
    let result = prepare(&scene).and_then(|p| {
        let snaps = simulate_prepared(&p, |_| ControlFlow::Continue(()))?;
        p.flow(&snaps[frame]).map(|(f, _)| f)
    });
    match result {
        Ok(flow) => match save_flo(&flow, out) {
            Ok(()) => {
                println!("{}", out.display());
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {}: {e}", out.display());
                EXIT_FAILED
            }
        },
        Err(e) => fail(e),
    }
}

pub fn cmd_mesh(mask_path: &Path, out: &Path, spacing: f64, max_area: f64, min_angle: f64) -> i32 {
    let mask = match Mask::load_png(mask_path) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {}: {e}", mask_path.display());
            return EXIT_INVALID;
        }
    };
    let quality = MeshQuality {
        max_area,
        min_angle,
        ..MeshQuality::default()
    };
    let parts = match mesh_mask::<f64>(&mask, spacing, &quality) {
        Ok(p) if !p.is_empty() => p,
        Ok(_) => {
            eprintln!("error: {}: mask has no foreground pixels", mask_path.display());
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", mask_path.display());
            return EXIT_INVALID;
        }
    };
    let docs: Vec<_> = parts.iter().map(TriMesh::to_document).collect();
    let json = if docs.len() == 1 {
        serde_json::to_string_pretty(&docs[0])
    } else {
        serde_json::to_string_pretty(&docs)
    }
    .expect("mesh serializes");
    let png = match wireframe(&mask, &parts).encode_png() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILED;
        }
    };
    let png_path = out.with_extension("png");
    for (path, bytes) in [(out, json.as_bytes()), (png_path.as_path(), &png[..])] {
        if let Err(e) = std::fs::write(path, bytes) {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_FAILED;
        }
    }
    let triangles: usize = parts.iter().map(TriMesh::triangle_count).sum();
    let area: f64 = parts.iter().map(TriMesh::total_area).sum();
    eprintln!(
        "{} component(s), {triangles} triangles, area {area:.1} px² for {} mask pixels",
        parts.len(),
        mask.count()
    );
    println!("{}", out.display());
    EXIT_OK
}

const WIREFRAME_SCALE: usize = 4;

/// Mesh edges drawn over the mask at 4× scale: mask gray, edges black.
pub fn wireframe(mask: &Mask, meshes: &[TriMesh<f64>]) -> ImageBuffer {
    let s = WIREFRAME_SCALE;
    let (w, h) = (mask.width() * s, mask.height() * s);
    let mut px = vec![1.0f32; w * h];
    for row in 0..h {
        for col in 0..w {
            if mask.get((col / s) as isize, (row / s) as isize) {
                px[row * w + col] = 0.8;
            }
        }
    }
    for m in meshes {
        let p = m.rest_positions();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (p[t[k]] * s as f64, p[t[(k + 1) % 3]] * s as f64);
                let n = ((b - a).norm().ceil() as usize).max(1);
                for i in 0..=n {
                    let q = a + (b - a) * (i as f64 / n as f64);
                    let (c, r) = (q.x.floor(), q.y.floor());
                    if c >= 0.0 && r >= 0.0 && (c as usize) < w && (r as usize) < h {
                        px[r as usize * w + c as usize] = 0.0;
                    }
                }
            }
        }
    }
    ImageBuffer::new(w, h, 1, px).expect("wireframe dimensions are consistent")
}

pub fn cmd_warp(image_path: &Path, flow_path: &Path, out: &Path, alpha: f32, background: Option<f32>) -> i32 {
    if alpha.is_nan() || alpha < 0.0 || !alpha.is_finite() {
        eprintln!("error: alpha must be a finite value ≥ 0, got {alpha}");
        return EXIT_INVALID;
    }
    if let Some(b) = background.filter(|b| !(0.0..=1.0).contains(b)) {
        eprintln!("error: background must lie in [0, 1], got {b}");
        return EXIT_INVALID;
    }
    let image = match ImageBuffer::load_png(image_path) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {}: {e}", image_path.display());
            return EXIT_INVALID;
        }
    };
    let flow = match load_flo(flow_path) {
        Ok(f) => f,
        Err(FlowError::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => {
            eprintln!("error: file not found: {}", flow_path.display());
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", flow_path.display());
            return EXIT_INVALID;
        }
    };
    let weights = flow_magnitude_weights(&flow);
    let fill = background.unwrap_or(if image.channels() == 1 { 1.0 } else { 0.0 });
    let bg = vec![fill; image.channels()];
    let warped = match forward_warp(&image, &flow, &weights, alpha, &bg) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match warped.save_png(out) {
        Ok(()) => {
            println!("{}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}: {e}", out.display());
            EXIT_FAILED
        }
    }
}

pub fn cmd_serve(port: u16) -> i32 {
    match animflow_service::serve_blocking(port) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

