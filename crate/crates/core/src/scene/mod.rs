//! Scene description: strict JSON parsing, defaults, validation, and the
//! end-to-end pipeline.
//!
//! Relative paths in a scene resolve against the directory of the scene file
//! (or the base directory passed to [`parse_scene`]).

mod pipeline;

pub use pipeline::{
    export_outputs, prepare, prepare_reusing, render_outputs, run_pipeline, simulate_prepared, FileCounts,
    PipelineReport,
    PreparedScene, Timings,
};

use crate::dynamics::{DynamicsError, RigKind, SimParams};
use crate::elastics::{material_from_young_poisson, ElasticsError, Material};
use crate::geometry::{Mask, DEFAULT_MAX_AREA, DEFAULT_MIN_ANGLE, DEFAULT_SPACING, MAX_MIN_ANGLE};
use crate::linalg::Vec2;
use crate::strokes::{
    EnergyStroke, StrokeError, StrokeKind, DEFAULT_EMIT_RATE, DEFAULT_PARTICLE_SPEED, DEFAULT_RADIUS,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DEFAULT_YOUNG: f64 = 1.0e4;
pub const DEFAULT_POISSON: f64 = 0.3;
pub const DEFAULT_DENSITY: f64 = 1.0;
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene is not valid JSON: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{stage} failed{}: {message}", frame_suffix(*.frame))]
    Stage {
        stage: &'static str,
        frame: Option<usize>,
        message: String,
    },
    #[error("simulation failed: {0}")]
    Simulation(#[from] DynamicsError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn frame_suffix(frame: Option<usize>) -> String {
    frame.map(|f| format!(" at frame {f}")).unwrap_or_default()
}

impl SceneError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        SceneError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub image: PathBuf,
    pub bodies: Vec<BodySpec>,
    #[serde(default)]
    pub strokes: Vec<StrokeSpec>,
    #[serde(default)]
    pub rigs: Vec<RigSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodySpec {
    pub mask: PathBuf,
    #[serde(default)]
    pub material: MaterialSpec,
    #[serde(default = "default_density")]
    pub density: f64,
    #[serde(default)]
    pub mesh: MeshSpec,
}

/// Either Lamé parameters `{mu, lambda}` or `{young, poisson}`. An empty
/// object means Young's modulus 1e4 and Poisson ratio 0.3.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub young: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    pub spacing: f64,
    pub max_area: f64,
    pub min_angle: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec {
            spacing: DEFAULT_SPACING,
            max_area: DEFAULT_MAX_AREA,
            min_angle: DEFAULT_MIN_ANGLE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrokeSpec {
    pub kind: StrokeKind,
    pub path: Vec<[f64; 2]>,
    pub strength: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_speed")]
    pub particle_speed: f64,
    #[serde(default = "default_emit_rate")]
    pub emit_rate: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub end: Option<f64>,
}

impl StrokeSpec {
    pub fn to_stroke(&self) -> EnergyStroke<f64> {
        EnergyStroke {
            kind: self.kind,
            path: self.path.iter().map(|&p| Vec2::from(p)).collect(),
            strength: self.strength,
            radius: self.radius,
            particle_speed: self.particle_speed,
            emit_rate: self.emit_rate,
            active: (self.start, self.end),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigKindName {
    #[default]
    Fixed,
    Wavy,
    Trajectory,
}

/// A rigging point. Without `radius` it pins the rest vertex nearest to
/// `anchor`; with `radius` it pins every vertex within that distance, each
/// following the same motion relative to its own rest position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    pub anchor: [f64; 2],
    /// Body index; defaults to the first body whose mask contains `anchor`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default)]
    pub kind: RigKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 2]>,
    /// `[time, [dx, dy]]` offsets from the rest position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframes: Option<Vec<(f64, [f64; 2])>>,
}

impl RigSpec {
    pub fn rig_kind(&self) -> RigKind<f64> {
        match self.kind {
            RigKindName::Fixed => RigKind::Fixed,
            RigKindName::Wavy => RigKind::Wavy {
                amplitude: self.amplitude.unwrap_or(0.0),
                frequency: self.frequency.unwrap_or(1.0),
                direction: self.direction.map(Vec2::from).unwrap_or(Vec2::new(1.0, 0.0)),
            },
            RigKindName::Trajectory => RigKind::Trajectory {
                keyframes: self
                    .keyframes
                    .iter()
                    .flatten()
                    .map(|&(t, p)| (t, Vec2::from(p)))
                    .collect(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub fps: f64,
    pub frame_count: usize,
    pub damping: f64,
    pub gravity: [f64; 2],
}

impl Default for SimSpec {
    fn default() -> Self {
        let p = SimParams::<f64>::default();
        SimSpec {
            dt: p.dt,
            fps: p.fps,
            frame_count: p.frame_count,
            damping: p.damping,
            gravity: p.gravity.into(),
        }
    }
}

impl SimSpec {
    pub fn params(&self) -> SimParams<f64> {
        SimParams {
            dt: self.dt,
            fps: self.fps,
            frame_count: self.frame_count,
            damping: self.damping,
            gravity: Vec2::from(self.gravity),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub emit_flows: bool,
    pub emit_sketches: bool,
    pub emit_warped: bool,
    /// Gaussian blur applied to the sketch before warping, pixels.
    pub blur_sigma: f64,
    /// Softmax splatting temperature.
    pub alpha: f64,
    /// Fill for disoccluded pixels, 1.0 is white paper.
    pub background: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
            emit_flows: true,
            emit_sketches: true,
            emit_warped: true,
            blur_sigma: DEFAULT_BLUR_SIGMA,
            alpha: crate::imaging::DEFAULT_ALPHA as f64,
            background: 1.0,
        }
    }
}

type Flag = (&'static str, bool);

fn default_density() -> f64 {
    DEFAULT_DENSITY
}
fn default_radius() -> f64 {
    DEFAULT_RADIUS
}
fn default_speed() -> f64 {
    DEFAULT_PARTICLE_SPEED
}
fn default_emit_rate() -> f64 {
    DEFAULT_EMIT_RATE
}

impl BodySpec {
    pub fn material(&self) -> Result<Material<f64>, SceneError> {
        self.material.resolve(self.density)
    }
}

impl MaterialSpec {
    pub fn resolve(&self, density: f64) -> Result<Material<f64>, SceneError> {
        let lame = self.mu.is_some() || self.lambda.is_some();
        let engineering = self.young.is_some() || self.poisson.is_some();
        if lame && engineering {
            return Err(SceneError::validation(
                "material",
                "give either {mu, lambda} or {young, poisson}, not both",
            ));
        }
        let res = if lame {
            match (self.mu, self.lambda) {
                (Some(mu), Some(lambda)) => Material::new(mu, lambda, density),
                (None, _) => return Err(SceneError::validation("material.mu", "required with lambda")),
                (_, None) => return Err(SceneError::validation("material.lambda", "required with mu")),
            }
        } else {
            material_from_young_poisson(
                self.young.unwrap_or(DEFAULT_YOUNG),
                self.poisson.unwrap_or(DEFAULT_POISSON),
                density,
            )
        };
        res.map_err(|e| match e {
            ElasticsError::InvalidPoisson(_) => SceneError::validation("material.poisson", e.to_string()),
            ElasticsError::InvalidMaterial { field: "density", message } => {
                SceneError::validation("density", message)
            }
            ElasticsError::InvalidMaterial { field, message } => {
                SceneError::validation(format!("material.{field}"), message)
            }
            other => SceneError::validation("material", other.to_string()),
        })
    }
}

impl Scene {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn image_path(&self) -> PathBuf {
        self.resolve(&self.image)
    }

    pub fn mask_path(&self, body: usize) -> PathBuf {
        self.resolve(&self.bodies[body].mask)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Checks every numeric invariant and that referenced files exist, then
    /// loads the masks to check rig anchors. Returns the loaded masks.
    pub fn validate(&self) -> Result<Vec<Mask>, SceneError> {
        self.validate_values()?;
        let image = self.image_path();
        if !image.is_file() {
            return Err(SceneError::FileNotFound(image));
        }
        let (iw, ih) = image::image_dimensions(&image).map_err(|e| {
            SceneError::validation("image", format!("{}: {e}", image.display()))
        })?;
        let mut masks = Vec::with_capacity(self.bodies.len());
        for b in 0..self.bodies.len() {
            let path = self.mask_path(b);
            if !path.is_file() {
                return Err(SceneError::FileNotFound(path));
            }
            let mask = Mask::load_png(&path)
                .map_err(|e| SceneError::validation(format!("bodies[{b}].mask"), e.to_string()))?;
            if (mask.width(), mask.height()) != (iw as usize, ih as usize) {
                return Err(SceneError::validation(
                    format!("bodies[{b}].mask"),
                    format!(
                        "mask is {}x{} but image is {iw}x{ih}",
                        mask.width(),
                        mask.height()
                    ),
                ));
            }
            masks.push(mask);
        }
        for (i, r) in self.rigs.iter().enumerate() {
            let p = Vec2::from(r.anchor);
            let ok = match r.body {
                Some(b) => masks[b].contains_point(p),
                None => masks.iter().any(|m| m.contains_point(p)),
            };
            if !ok {
                return Err(SceneError::validation(
                    format!("rigs[{i}].anchor"),
                    "anchor lies outside the body mask",
                ));
            }
        }
        Ok(masks)
    }

    /// Invariants that need no file access.
    pub fn validate_values(&self) -> Result<(), SceneError> {
        let err = |path: String, msg: String| Err(SceneError::validation(path, msg));
        if self.bodies.is_empty() {
            return err("bodies".into(), "at least one body is required".into());
        }
        for (b, body) in self.bodies.iter().enumerate() {
            let at = |f: &str| format!("bodies[{b}].{f}");
            body.material.resolve(body.density).map_err(|e| match e {
                SceneError::Validation { path, message } => SceneError::Validation {
                    path: at(&path),
                    message,
                },
                other => other,
            })?;
            let m = &body.mesh;
            if !(m.spacing > 0.0) || !m.spacing.is_finite() {
                return err(at("mesh.spacing"), format!("must be positive, got {}", m.spacing));
            }
            if !(m.max_area > 0.0) {
                return err(at("mesh.max_area"), format!("must be positive, got {}", m.max_area));
            }
            if !(m.min_angle > 0.0 && m.min_angle <= MAX_MIN_ANGLE) {
                return err(
                    at("mesh.min_angle"),
                    format!("must lie in (0, {MAX_MIN_ANGLE}], got {}", m.min_angle),
                );
            }
        }
        for (i, s) in self.strokes.iter().enumerate() {
            let at = |f: &str| format!("strokes[{i}].{f}");
            if let Err(StrokeError::Invalid { field, message }) = s.to_stroke().validate() {
                return err(at(field), message);
            }
        }
        for (i, r) in self.rigs.iter().enumerate() {
            let at = |f: &str| format!("rigs[{i}].{f}");
            if !Vec2::from(r.anchor).is_finite() {
                return err(at("anchor"), "must be finite".into());
            }
            if let Some(b) = r.body {
                if b >= self.bodies.len() {
                    return err(at("body"), format!("no body {b} (scene has {})", self.bodies.len()));
                }
            }
            if let Some(rad) = r.radius {
                if !(rad > 0.0) || !rad.is_finite() {
                    return err(at("radius"), format!("must be positive, got {rad}"));
                }
            }
            let wavy = [
                ("amplitude", r.amplitude.is_some()),
                ("frequency", r.frequency.is_some()),
                ("direction", r.direction.is_some()),
            ];
            let traj = [("keyframes", r.keyframes.is_some())];
            let (required, forbidden): (&[Flag], Vec<Flag>) = match r.kind {
                RigKindName::Fixed => (&[], wavy.iter().chain(&traj).cloned().collect()),
                RigKindName::Wavy => (&wavy, traj.to_vec()),
                RigKindName::Trajectory => (&traj, wavy.to_vec()),
            };
            if let Some((f, _)) = required.iter().find(|(_, present)| !present) {
                return err(at(f), format!("required for a {:?} rig", r.kind).to_lowercase());
            }
            if let Some((f, _)) = forbidden.iter().find(|(_, present)| *present) {
                return err(at(f), format!("not allowed on a {:?} rig", r.kind).to_lowercase());
            }
            let rig = crate::dynamics::RigPoint {
                vertex: 0,
                anchor: Vec2::from(r.anchor),
                kind: r.rig_kind(),
            };
            if let Err(DynamicsError::InvalidRig { field, message }) = rig.validate() {
                return err(at(field), message);
            }
        }
        let sim = &self.sim;
        if let Err(DynamicsError::InvalidParams { field, message }) = sim.params().validate() {
            return err(format!("sim.{field}"), message);
        }
        let o = &self.output;
        if !(o.blur_sigma >= 0.0) || !o.blur_sigma.is_finite() {
            return err("output.blur_sigma".into(), format!("must be non-negative, got {}", o.blur_sigma));
        }
        if !(o.alpha >= 0.0) || !o.alpha.is_finite() {
            return err("output.alpha".into(), format!("must be non-negative, got {}", o.alpha));
        }
        if !(0.0..=1.0).contains(&o.background) {
            return err("output.background".into(), format!("must lie in [0, 1], got {}", o.background));
        }
        Ok(())
    }
}

/// Parses a scene document without touching the filesystem. Syntax errors
/// become [`SceneError::Parse`]; type errors and unknown keys become
/// [`SceneError::Validation`] with the JSON path; numeric invariants are then
/// checked by [`Scene::validate_values`].
pub fn parse_scene_value(doc: Value, base_dir: impl Into<PathBuf>) -> Result<Scene, SceneError> {
    let mut scene: Scene = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        SceneError::validation(
            if path == "." { "(root)".into() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    scene.base_dir = base_dir.into();
    scene.validate_values()?;
    Ok(scene)
}

pub fn parse_scene(text: &str, base_dir: impl Into<PathBuf>) -> Result<Scene, SceneError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    parse_scene_value(doc, base_dir)
}

/// Reads the scene file; relative paths resolve against its directory.
pub fn load_scene_value(path: &Path) -> Result<(Value, PathBuf), SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => SceneError::FileNotFound(path.to_path_buf()),
        _ => SceneError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let doc = serde_json::from_str(&text).map_err(|e| SceneError::Parse(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((doc, base))
}

pub fn load_scene(path: &Path) -> Result<Scene, SceneError> {
    let (doc, base) = load_scene_value(path)?;
    parse_scene_value(doc, base)
}

/// Sets the value at a dotted path such as `sim.frame_count` or
/// `strokes.0.strength` (also `strokes[0].strength`). The raw value is parsed
/// as JSON, falling back to a plain string.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<(), SceneError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let normalized = key.replace('[', ".").replace(']', "");
    let parts: Vec<&str> = normalized.split('.').filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err(SceneError::validation(key, "empty override key"));
    }
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    SceneError::validation(key, format!("'{part}' is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    SceneError::validation(key, format!("index {idx} out of range (length {len})"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(SceneError::validation(
                    key,
                    format!("'{part}' does not name a field of a scalar"),
                ))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}
