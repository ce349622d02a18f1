//! Local session service for interactive authoring.
//!
//! Clients connect a WebSocket to `ws://127.0.0.1:<port>/ws` and exchange
//! JSON [`Envelope`]s. Requests carry `kind: "request"`, an `op`, the
//! session id and the revision they were composed against; every response
//! echoes op, session and revision. Simulation progress arrives as events.
//!
//! | op | body | response body |
//! |----|------|---------------|
//! | `create_session` | `{image, masks: [..]}` (base64 PNGs) | `{session, revision: 0, meshes, scene}` |
//! | `mutate` | `{patch}`, a JSON merge patch of the scene | `{revision}`; `meshes` event if a mesh changed |
//! | `simulate` | `{frame_count?, preview?}` | `{revision, started}`; then `frame`* and one of `done`/`cancelled`/`failed` |
//! | `cancel` | `{}` | `{cancelled}` |
//! | `export` | `{dir, output?}` | `{report, scene_path}` |
//! | `get_scene` | `{}` | `{scene, revision}` |
//!
//! Failures come back as `{error: {code, message, path?}}` with codes
//! `BadImage`, `DimensionMismatch`, `UnknownSession`, `StaleRevision`,
//! `ValidationError`, `StaleSimulation`, `BadRequest`, `Failed`.

mod protocol;
mod server;
mod session;

pub use protocol::{Envelope, Kind, ServiceError};
pub use server::{dispatch, router, serve_blocking, spawn, DEFAULT_PORT};
pub use session::{Created, EventSink, Mutated, SessionManager, PREVIEW_MAX_SIDE};
