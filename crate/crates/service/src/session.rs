use crate::protocol::{Envelope, ServiceError};
use animflow::dynamics::{DynamicsError, Snapshot};
use animflow::geometry::{Mask, MeshDocument};
use animflow::imaging::{flow_magnitude_weights, forward_warp, ImageBuffer};
use animflow::scene::{export_outputs, parse_scene_value, prepare_reusing, simulate_prepared, PreparedScene, SceneError};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};
use std::collections::HashMap;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

/// Longest side of the preview PNGs attached to frame events.
pub const PREVIEW_MAX_SIDE: usize = 256;

/// Receives the events of a running simulation, in order.
pub type EventSink = Arc<dyn Fn(Envelope) + Send + Sync>;

struct SimCache {
    revision: u64,
    frame_count: usize,
    snapshots: Arc<Vec<Snapshot<f64>>>,
}

struct Run {
    cancel: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

struct Session {
    id: String,
    doc: Value,
    prepared: Arc<PreparedScene>,
    revision: u64,
    cache: Option<SimCache>,
    run: Option<Run>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Created {
    pub session: String,
    pub meshes: Vec<MeshDocument>,
    pub scene: Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mutated {
    pub revision: u64,
    /// Present when a body's mesh had to be rebuilt.
    pub meshes: Option<Vec<MeshDocument>>,
}

/// All sessions of one service instance. Uploaded assets live under
/// `root/<session id>/`.
pub struct SessionManager {
    root: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn meshes_of(p: &PreparedScene) -> Vec<MeshDocument> {
    p.meshes.iter().map(|m| m.to_document()).collect()
}

fn decode(what: &str, b64: &Value) -> Result<Vec<u8>, ServiceError> {
    let s = b64
        .as_str()
        .ok_or_else(|| ServiceError::BadRequest(format!("{what} must be a base64 string")))?;
    B64.decode(s)
        .map_err(|e| ServiceError::BadImage(format!("{what}: {e}")))
}

fn parse(doc: &Value, dir: &Path) -> Result<animflow::scene::Scene, ServiceError> {
    Ok(parse_scene_value(doc.clone(), dir)?)
}

impl SessionManager {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SessionManager {
            root: root.into(),
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.into()))
    }

    /// `body`: `{"image": base64 PNG, "masks": [base64 PNG, ...]}`.
    pub fn create_session(&self, body: &Value) -> Result<Created, ServiceError> {
        let image_bytes = decode("image", &body["image"])?;
        let image = ImageBuffer::decode_png(&image_bytes).map_err(|e| ServiceError::BadImage(format!("image: {e}")))?;
        let masks = body["masks"]
            .as_array()
            .filter(|m| !m.is_empty())
            .ok_or_else(|| ServiceError::BadRequest("masks must be a non-empty array".into()))?;
        let mut mask_bytes = Vec::with_capacity(masks.len());
        for (i, m) in masks.iter().enumerate() {
            let what = format!("masks[{i}]");
            let bytes = decode(&what, m)?;
            let mask = Mask::decode_png(&bytes).map_err(|e| ServiceError::BadImage(format!("{what}: {e}")))?;
            if (mask.width(), mask.height()) != (image.width(), image.height()) {
                return Err(ServiceError::DimensionMismatch {
                    what,
                    got_w: mask.width(),
                    got_h: mask.height(),
                    want_w: image.width(),
                    want_h: image.height(),
                });
            }
            mask_bytes.push(bytes);
        }

        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        let write = |name: &str, bytes: &[u8]| {
            std::fs::write(dir.join(name), bytes).map_err(|e| ServiceError::Failed(format!("{name}: {e}")))
        };
        std::fs::create_dir_all(&dir).map_err(|e| ServiceError::Failed(format!("{}: {e}", dir.display())))?;
        write("image.png", &image_bytes)?;
        let mut bodies = Vec::new();
        for (i, b) in mask_bytes.iter().enumerate() {
            let name = format!("mask_{i}.png");
            write(&name, b)?;
            bodies.push(json!({ "mask": dir.join(&name) }));
        }
        let doc = json!({
            "image": dir.join("image.png"),
            "bodies": bodies,
            "output": { "dir": dir.join("out") },
        });
        let scene = parse(&doc, &dir)?;
        let prepared = Arc::new(prepare_reusing(&scene, None)?);
        let created = Created {
            session: id.clone(),
            meshes: meshes_of(&prepared),
            scene: doc.clone(),
        };
        let session = Session {
            id: id.clone(),
            doc,
            prepared,
            revision: 0,
            cache: None,
            run: None,
        };
        lock(&self.sessions).insert(id, Arc::new(Mutex::new(session)));
        Ok(created)
    }

    /// Applies a JSON merge patch to the scene draft. `revision` must equal
    /// the session's current revision. A running simulation is cancelled.
    pub fn mutate(&self, id: &str, revision: u64, patch: &Value) -> Result<Mutated, ServiceError> {
        let session = self.get(id)?;
        let mut s = lock(&session);
        if revision != s.revision {
            return Err(ServiceError::StaleRevision {
                got: revision,
                current: s.revision,
            });
        }
        if !patch.is_object() {
            return Err(ServiceError::BadRequest("patch must be a JSON object".into()));
        }
        let mut doc = s.doc.clone();
        json_patch::merge(&mut doc, patch);
        let dir = self.root.join(&s.id);
        let scene = parse(&doc, &dir)?;
        let prepared = prepare_reusing(&scene, Some(&s.prepared))?;
        let rebuilt = prepared
            .meshes
            .iter()
            .zip(s.prepared.meshes.iter().map(Some).chain(std::iter::repeat(None)))
            .any(|(new, old)| old.is_none_or(|o| !Arc::ptr_eq(new, o)))
            || prepared.meshes.len() != s.prepared.meshes.len();
        let run = s.run.take();
        s.doc = doc;
        s.prepared = Arc::new(prepared);
        s.revision += 1;
        s.cache = None;
        let out = Mutated {
            revision: s.revision,
            meshes: rebuilt.then(|| meshes_of(&s.prepared)),
        };
        drop(s);
        stop(run);
        Ok(out)
    }

    pub fn get_scene(&self, id: &str) -> Result<(Value, u64), ServiceError> {
        let session = self.get(id)?;
        let s = lock(&session);
        Ok((s.doc.clone(), s.revision))
    }

    pub fn revision(&self, id: &str) -> Result<u64, ServiceError> {
        let session = self.get(id)?;
        let r = lock(&session).revision;
        Ok(r)
    }

    /// Cancels the running simulation, if any, and waits for it to stop.
    /// Returns whether one was running.
    pub fn cancel(&self, id: &str) -> Result<bool, ServiceError> {
        let session = self.get(id)?;
        let run = lock(&session).run.take();
        let was_running = run.as_ref().is_some_and(|r| !r.thread.is_finished());
        stop(run);
        Ok(was_running)
    }

    /// Starts simulating the current revision on its own thread, replacing
    /// any earlier run. Emits `frame` events, then exactly one of `done`,
    /// `cancelled` or `failed`. Returns the revision being simulated.
    pub fn simulate(
        &self,
        id: &str,
        frame_count: Option<usize>,
        preview: bool,
        sink: EventSink,
    ) -> Result<u64, ServiceError> {
        let session = self.get(id)?;
        let previous = lock(&session).run.take();
        stop(previous);

        let mut s = lock(&session);
        let revision = s.revision;
        let mut prepared = (*s.prepared).clone();
        if let Some(n) = frame_count {
            prepared.scene.sim.frame_count = n;
        }
        let cancel = Arc::new(AtomicBool::new(false));
        let flag = cancel.clone();
        let id = s.id.clone();
        let owner = session.clone();
        let thread = std::thread::spawn(move || {
            run_simulation(&id, revision, prepared, preview, &flag, &owner, &*sink);
        });
        s.run = Some(Run { cancel, thread });
        Ok(revision)
    }

    /// Blocks until the session's current simulation (if any) has finished.
    pub fn wait(&self, id: &str) -> Result<(), ServiceError> {
        let session = self.get(id)?;
        let run = lock(&session).run.take();
        if let Some(run) = run {
            let _ = run.thread.join();
        }
        Ok(())
    }

    /// Writes the artifacts of the cached simulation into `dir`, together
    /// with `scene.json`, the equivalent headless scene. `output` is merged
    /// into the scene's output settings for this export only.
    pub fn export(&self, id: &str, dir: &Path, output: Option<&Value>) -> Result<(Value, PathBuf), ServiceError> {
        let session = self.get(id)?;
        let s = lock(&session);
        let cache = match &s.cache {
            Some(c) if c.revision == s.revision => c,
            _ => return Err(ServiceError::StaleSimulation(s.revision)),
        };
        let mut doc = s.doc.clone();
        if let Some(o) = output {
            let mut patch = json!({ "output": o });
            patch["output"]["dir"] = json!(dir);
            json_patch::merge(&mut doc, &patch);
        } else {
            doc["output"]["dir"] = json!(dir);
        }
        doc["sim"]["frame_count"] = json!(cache.frame_count);
        let scene = parse(&doc, &self.root.join(&s.id))?;
        let mut prepared = (*s.prepared).clone();
        prepared.scene = scene;
        let snapshots = cache.snapshots.clone();
        drop(s);

        let report = export_outputs(&prepared, &snapshots, dir)?;
        let scene_path = dir.join("scene.json");
        let text = serde_json::to_string_pretty(&doc).expect("scene serializes");
        std::fs::write(&scene_path, text).map_err(|e| ServiceError::Failed(format!("{}: {e}", scene_path.display())))?;
        Ok((serde_json::to_value(&report).expect("report serializes"), scene_path))
    }
}

/// Must be called without the session lock held: a finishing run takes it.
fn stop(run: Option<Run>) {
    if let Some(run) = run {
        run.cancel.store(true, Ordering::SeqCst);
        let _ = run.thread.join();
    }
}

fn run_simulation(
    id: &str,
    revision: u64,
    prepared: PreparedScene,
    preview: bool,
    cancel: &AtomicBool,
    owner: &Mutex<Session>,
    sink: &(dyn Fn(Envelope) + Send + Sync),
) {
    let blurred = preview.then(|| prepared.sketches().1);
    let background = [prepared.scene.output.background as f32];
    let alpha = prepared.scene.output.alpha as f32;
    let result = simulate_prepared(&prepared, |snap| {
        if cancel.load(Ordering::SeqCst) {
            return ControlFlow::Break(());
        }
        let mut body = json!({
            "frame": snap.frame,
            "time": snap.time,
            "positions": snap.positions,
        });
        if let Some(b) = &blurred {
            match preview_png(&prepared, b, snap, alpha, &background) {
                Ok(png) => body["preview"] = json!(B64.encode(png)),
                Err(e) => log::warn!("preview for frame {} failed: {e}", snap.frame),
            }
        }
        sink(Envelope::event("frame", id, revision, body));
        ControlFlow::Continue(())
    });
    match result {
        Ok(snapshots) => {
            let frames = snapshots.len() - 1;
            {
                let mut s = lock(owner);
                if s.revision == revision {
                    s.cache = Some(SimCache {
                        revision,
                        frame_count: prepared.scene.sim.frame_count,
                        snapshots: Arc::new(snapshots),
                    });
                }
            }
            sink(Envelope::event("done", id, revision, json!({ "frames": frames })));
        }
        Err(SceneError::Simulation(DynamicsError::Cancelled)) => {
            sink(Envelope::event("cancelled", id, revision, json!({})));
        }
        Err(e) => {
            let mut body = json!({ "error": { "code": "SimulationFailed", "message": e.to_string() } });
            if let SceneError::Simulation(DynamicsError::NonFiniteState {
                frame,
                substep,
                body: b,
                vertex,
            }) = e
            {
                body["error"]["frame"] = json!(frame);
                body["error"]["substep"] = json!(substep);
                body["error"]["body"] = json!(b);
                body["error"]["vertex"] = json!(vertex);
            }
            sink(Envelope::event("failed", id, revision, body));
        }
    }
}

fn preview_png(
    prepared: &PreparedScene,
    blurred: &ImageBuffer,
    snap: &Snapshot<f64>,
    alpha: f32,
    background: &[f32],
) -> Result<Vec<u8>, String> {
    let (flow, _) = prepared.flow(snap).map_err(|e| e.to_string())?;
    let weights = flow_magnitude_weights(&flow);
    let warped = forward_warp(blurred, &flow, &weights, alpha, background).map_err(|e| e.to_string())?;
    warped.downsample(PREVIEW_MAX_SIDE).encode_png().map_err(|e| e.to_string())
}
