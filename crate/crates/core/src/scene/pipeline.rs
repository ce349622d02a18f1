use super::{Scene, SceneError};
use crate::dynamics::{RigPoint, Simulation, Snapshot};
use crate::elastics::{BodyState, Material};
use crate::flowfield::{encode_flo, rasterize_bodies, FlowField};
use crate::geometry::{mesh_mask, Mask, MeshQuality, TriMesh};
use crate::imaging::{extract_sketch, flow_magnitude_weights, forward_warp, gaussian_blur, ImageBuffer};
use crate::linalg::Vec2;
use crate::strokes::StrokeField;
use serde::Serialize;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Everything derived from a scene before simulation: decoded assets,
/// meshes, materials and resolved rigs.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub scene: Scene,
    pub image: ImageBuffer,
    pub masks: Vec<Mask>,
    pub meshes: Vec<Arc<TriMesh<f64>>>,
    pub materials: Vec<Material<f64>>,
    /// Rigs per body, with vertices resolved.
    pub rigs: Vec<Vec<RigPoint<f64>>>,
    pub mesh_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub mesh_ms: f64,
    pub simulate_ms: f64,
    pub flow_ms: f64,
    pub warp_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FileCounts {
    pub flows: usize,
    pub frames: usize,
    pub sketches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub output_dir: PathBuf,
    pub frame_count: usize,
    pub substeps_per_frame: usize,
    pub vertices: Vec<usize>,
    pub triangles: Vec<usize>,
    pub rigged_vertices: Vec<usize>,
    pub files: FileCounts,
    /// Largest flow magnitude per output frame (1..=frame_count).
    pub max_flow_magnitude: Vec<f32>,
    /// Pixels covered by more than one body's rest mesh.
    pub overlap_pixels: usize,
    pub timings: Timings,
    pub settings: Scene,
}

fn stage(stage: &'static str, frame: Option<usize>) -> impl Fn(String) -> SceneError {
    move |message| SceneError::Stage {
        stage,
        frame,
        message,
    }
}

/// Merges a mask's components into one mesh.
fn merge(parts: Vec<TriMesh<f64>>) -> Result<TriMesh<f64>, String> {
    if parts.len() == 1 {
        return Ok(parts.into_iter().next().unwrap());
    }
    let mut pos = Vec::new();
    let mut tris = Vec::new();
    let mut edges = Vec::new();
    for m in parts {
        let off = pos.len();
        pos.extend_from_slice(m.rest_positions());
        tris.extend(m.triangles().iter().map(|t| t.map(|v| v + off)));
        edges.extend(m.boundary_edges().iter().map(|e| e.map(|v| v + off)));
    }
    TriMesh::new(pos, tris, edges).map_err(|e| e.to_string())
}

/// Validates the scene, loads assets, meshes every body and resolves rigs.
pub fn prepare(scene: &Scene) -> Result<PreparedScene, SceneError> {
    prepare_reusing(scene, None)
}

/// Like [`prepare`], but takes a body's mesh from `previous` when its mask
/// file and mesh parameters are unchanged.
pub fn prepare_reusing(scene: &Scene, previous: Option<&PreparedScene>) -> Result<PreparedScene, SceneError> {
    let masks = scene.validate()?;
    let image_path = scene.image_path();
    let image = ImageBuffer::load_png(&image_path)
        .map_err(|e| SceneError::validation("image", format!("{}: {e}", image_path.display())))?;
    let t0 = Instant::now();
    let mut meshes = Vec::with_capacity(masks.len());
    let mut materials = Vec::with_capacity(masks.len());
    for (b, (mask, body)) in masks.iter().zip(&scene.bodies).enumerate() {
        materials.push(body.material()?);
        let reused = previous.and_then(|p| {
            let old = p.scene.bodies.get(b)?;
            let same = p.scene.mask_path(b) == scene.mask_path(b) && old.mesh == body.mesh && p.masks[b] == *mask;
            same.then(|| p.meshes[b].clone())
        });
        if let Some(m) = reused {
            meshes.push(m);
            continue;
        }
        let quality = MeshQuality {
            max_area: body.mesh.max_area,
            min_angle: body.mesh.min_angle,
            ..MeshQuality::default()
        };
        let parts = mesh_mask::<f64>(mask, body.mesh.spacing, &quality)
            .map_err(|e| stage("meshing", None)(format!("body {b}: {e}")))?;
        let mesh = merge(parts).map_err(|e| stage("meshing", None)(format!("body {b}: {e}")))?;
        meshes.push(Arc::new(mesh));
    }
    let mesh_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut rigs = vec![Vec::new(); meshes.len()];
    for (i, r) in scene.rigs.iter().enumerate() {
        let anchor = Vec2::from(r.anchor);
        let b = r
            .body
            .or_else(|| masks.iter().position(|m| m.contains_point(anchor)))
            .ok_or_else(|| {
                SceneError::validation(format!("rigs[{i}].anchor"), "anchor lies outside every mask")
            })?;
        let mesh = &meshes[b];
        let kind = r.rig_kind();
        let vertices: Vec<usize> = match r.radius {
            Some(rad) => (0..mesh.vertex_count())
                .filter(|&v| (mesh.rest_positions()[v] - anchor).norm() <= rad)
                .collect(),
            None => mesh.nearest_vertex(anchor).into_iter().collect(),
        };
        if vertices.is_empty() {
            return Err(SceneError::validation(
                format!("rigs[{i}].radius"),
                "no mesh vertex lies within the rig radius",
            ));
        }
        for v in vertices {
            rigs[b].push(RigPoint {
                vertex: v,
                anchor: mesh.rest_positions()[v],
                kind: kind.clone(),
            });
        }
    }
    Ok(PreparedScene {
        scene: scene.clone(),
        image,
        masks,
        meshes,
        materials,
        rigs,
        mesh_ms,
    })
}

impl PreparedScene {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn simulation(&self) -> Result<Simulation<f64>, SceneError> {
        let bodies = self
            .meshes
            .iter()
            .zip(&self.materials)
            .map(|(m, mat)| BodyState::at_rest(m.clone(), mat.density))
            .collect();
        Ok(Simulation::new(
            bodies,
            self.materials.clone(),
            self.rigs.clone(),
            self.scene.sim.params(),
        )?)
    }

    pub fn stroke_field(&self) -> StrokeField<f64> {
        StrokeField::new(self.scene.strokes.iter().map(|s| s.to_stroke()).collect())
    }

    /// Flow of frame `snapshot` over the image canvas, plus overlap count.
    pub fn flow(&self, snapshot: &Snapshot<f64>) -> Result<(FlowField, usize), SceneError> {
        let meshes: Vec<&TriMesh<f64>> = self.meshes.iter().map(|m| m.as_ref()).collect();
        rasterize_bodies(&meshes, &snapshot.positions, self.width(), self.height())
            .map_err(|e| stage("flow", Some(snapshot.frame))(e.to_string()))
    }

    /// The line sketch of the input image and its blurred version.
    pub fn sketches(&self) -> (ImageBuffer, ImageBuffer) {
        let sketch = extract_sketch(&self.image);
        let blurred = gaussian_blur(&sketch, self.scene.output.blur_sigma as f32);
        (sketch, blurred)
    }
}

/// Runs the simulation, calling `on_frame` after every completed frame.
/// Returning `Break` stops early with [`crate::dynamics::DynamicsError::Cancelled`].
pub fn simulate_prepared(
    prepared: &PreparedScene,
    mut on_frame: impl FnMut(&Snapshot<f64>) -> ControlFlow<()>,
) -> Result<Vec<Snapshot<f64>>, SceneError> {
    let mut sim = prepared.simulation()?;
    let mut field = prepared.stroke_field();
    let frames = prepared.scene.sim.frame_count;
    let mut out = Vec::with_capacity(frames + 1);
    out.push(sim.snapshot());
    for _ in 0..frames {
        let snap = sim.advance_frame(&mut field)?;
        let stop = on_frame(&snap).is_break();
        out.push(snap);
        if stop {
            return Err(crate::dynamics::DynamicsError::Cancelled.into());
        }
    }
    Ok(out)
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), SceneError> {
    std::fs::write(&path, bytes).map_err(|source| SceneError::Io { path, source })
}

/// Writes flows, sketches and warped frames for `snapshots` (as produced by
/// [`simulate_prepared`]) into `out_dir`, plus `report.json`.
pub fn render_outputs(
    prepared: &PreparedScene,
    snapshots: &[Snapshot<f64>],
    out_dir: &Path,
) -> Result<PipelineReport, SceneError> {
    let out = &prepared.scene.output;
    std::fs::create_dir_all(out_dir).map_err(|source| SceneError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut files = FileCounts::default();
    let mut timings = Timings {
        mesh_ms: prepared.mesh_ms,
        ..Timings::default()
    };
    let background = [out.background as f32];

    let t = Instant::now();
    let (sketch, blurred) = prepared.sketches();
    if out.emit_sketches {
        let png = sketch
            .encode_png()
            .map_err(|e| stage("sketch", Some(0))(e.to_string()))?;
        write(out_dir.join("sketch_0000.png"), &png)?;
        files.sketches += 1;
    }
    timings.warp_ms += t.elapsed().as_secs_f64() * 1e3;

    let mut max_flow = Vec::new();
    let mut overlap_pixels = 0;
    for snap in snapshots.iter().skip(1) {
        let k = snap.frame;
        let t = Instant::now();
        let (flow, overlap) = prepared.flow(snap)?;
        overlap_pixels = overlap_pixels.max(overlap);
        max_flow.push(flow.max_magnitude());
        if out.emit_flows {
            write(out_dir.join(format!("flow_{k:04}.flo")), &encode_flo(&flow))?;
            files.flows += 1;
        }
        timings.flow_ms += t.elapsed().as_secs_f64() * 1e3;
        if out.emit_warped {
            let t = Instant::now();
            let weights = flow_magnitude_weights(&flow);
            let warped = forward_warp(&blurred, &flow, &weights, out.alpha as f32, &background)
                .map_err(|e| stage("warp", Some(k))(e.to_string()))?;
            let png = warped
                .encode_png()
                .map_err(|e| stage("warp", Some(k))(e.to_string()))?;
            write(out_dir.join(format!("frame_{k:04}.png")), &png)?;
            files.frames += 1;
            timings.warp_ms += t.elapsed().as_secs_f64() * 1e3;
        }
    }
    if overlap_pixels > 0 {
        log::warn!("{overlap_pixels} pixels are covered by more than one body; later bodies win");
    }

    let report = PipelineReport {
        output_dir: out_dir.to_path_buf(),
        frame_count: snapshots.len().saturating_sub(1),
        substeps_per_frame: prepared.scene.sim.params().substeps_per_frame(),
        vertices: prepared.meshes.iter().map(|m| m.vertex_count()).collect(),
        triangles: prepared.meshes.iter().map(|m| m.triangle_count()).collect(),
        rigged_vertices: prepared.rigs.iter().map(Vec::len).collect(),
        files,
        max_flow_magnitude: max_flow,
        overlap_pixels,
        timings,
        settings: prepared.scene.clone(),
    };
    Ok(report)
}

fn write_report(report: &mut PipelineReport, total_ms: f64) -> Result<(), SceneError> {
    report.timings.total_ms = total_ms;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write(report.output_dir.join("report.json"), json.as_bytes())
}

/// Scene → meshes → simulation → flows → sketch → warped frames, written to
/// the scene's output directory.
pub fn run_pipeline(scene: &Scene) -> Result<PipelineReport, SceneError> {
    let start = Instant::now();
    let prepared = prepare(scene)?;
    let t = Instant::now();
    let snapshots = simulate_prepared(&prepared, |snap| {
        log::info!("frame {}/{}", snap.frame, scene.sim.frame_count);
        ControlFlow::Continue(())
    })?;
    let simulate_ms = t.elapsed().as_secs_f64() * 1e3;
    let mut report = render_outputs(&prepared, &snapshots, &scene.output_dir())?;
    report.timings.simulate_ms = simulate_ms;
    write_report(&mut report, start.elapsed().as_secs_f64() * 1e3)?;
    Ok(report)
}

/// Like [`run_pipeline`] but from snapshots computed elsewhere.
pub fn export_outputs(
    prepared: &PreparedScene,
    snapshots: &[Snapshot<f64>],
    out_dir: &Path,
) -> Result<PipelineReport, SceneError> {
    let start = Instant::now();
    let mut report = render_outputs(prepared, snapshots, out_dir)?;
    write_report(&mut report, start.elapsed().as_secs_f64() * 1e3)?;
    Ok(report)
}
