use crate::protocol::{Envelope, Kind, ServiceError};
use crate::session::{EventSink, SessionManager};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

pub const DEFAULT_PORT: u16 = 8787;

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/", get(|| async { "animflow service; connect a WebSocket to /ws\n" }))
        .route("/ws", get(upgrade))
        .with_state(manager)
}

async fn upgrade(ws: WebSocketUpgrade, State(manager): State<Arc<SessionManager>>) -> impl IntoResponse {
    ws.max_message_size(256 << 20)
        .on_upgrade(move |socket| connection(socket, manager))
}

async fn connection(socket: WebSocket, manager: Arc<SessionManager>) {
    let (mut tx_sock, mut rx_sock) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Envelope>();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            let text = serde_json::to_string(&env).expect("envelope serializes");
            if tx_sock.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = rx_sock.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let req = match serde_json::from_str::<Envelope>(&text) {
            Ok(r) if r.kind == Kind::Request => r,
            Ok(r) => {
                let e = ServiceError::BadRequest(format!("expected a request, got {:?}", r.kind));
                let _ = tx.send(Envelope::response_to(&r, e.to_body()));
                continue;
            }
            Err(e) => {
                let bad = Envelope::request("unknown", None, 0, Value::Null);
                let _ = tx.send(Envelope::response_to(&bad, ServiceError::BadRequest(e.to_string()).to_body()));
                continue;
            }
        };
        let sink_tx = tx.clone();
        let sink: EventSink = Arc::new(move |env| {
            let _ = sink_tx.send(env);
        });
        let m = manager.clone();
        let r = req.clone();
        let out = tokio::task::spawn_blocking(move || dispatch(&m, &r, sink))
            .await
            .unwrap_or_else(|e| vec![Envelope::response_to(&req, ServiceError::Failed(e.to_string()).to_body())]);
        for env in out {
            if tx.send(env).is_err() {
                break;
            }
        }
    }
    drop(tx);
    let _ = writer.await;
}

fn session_of(req: &Envelope) -> Result<&str, ServiceError> {
    req.session
        .as_deref()
        .ok_or_else(|| ServiceError::BadRequest(format!("{} needs a session", req.op)))
}

/// Handles one request; returns the response followed by any immediate events.
pub fn dispatch(manager: &SessionManager, req: &Envelope, sink: EventSink) -> Vec<Envelope> {
    match handle(manager, req, sink) {
        Ok(out) => out,
        Err(e) => vec![Envelope::response_to(req, e.to_body())],
    }
}

fn handle(manager: &SessionManager, req: &Envelope, sink: EventSink) -> Result<Vec<Envelope>, ServiceError> {
    let reply = |body: Value| Envelope::response_to(req, body);
    match req.op.as_str() {
        "create_session" => {
            let c = manager.create_session(&req.body)?;
            let mut resp = reply(json!({
                "session": c.session,
                "revision": 0,
                "meshes": c.meshes,
                "scene": c.scene,
            }));
            resp.session = Some(c.session);
            Ok(vec![resp])
        }
        "mutate" => {
            let id = session_of(req)?;
            let patch = req.body.get("patch").unwrap_or(&req.body);
            let m = manager.mutate(id, req.revision, patch)?;
            let mut out = vec![reply(json!({ "revision": m.revision }))];
            if let Some(meshes) = m.meshes {
                out.push(Envelope::event("meshes", id, m.revision, json!({ "meshes": meshes })));
            }
            Ok(out)
        }
        "simulate" => {
            let id = session_of(req)?;
            let frame_count = match req.body.get("frame_count") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    v.as_u64()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| ServiceError::Validation {
                            path: "frame_count".into(),
                            message: format!("must be a positive integer, got {v}"),
                        })? as usize,
                ),
            };
            let preview = req.body.get("preview").and_then(Value::as_bool).unwrap_or(true);
            let revision = manager.simulate(id, frame_count, preview, sink)?;
            Ok(vec![reply(json!({ "revision": revision, "started": true }))])
        }
        "cancel" => {
            let id = session_of(req)?;
            let was_running = manager.cancel(id)?;
            Ok(vec![reply(json!({ "cancelled": was_running }))])
        }
        "export" => {
            let id = session_of(req)?;
            let dir = req
                .body
                .get("dir")
                .and_then(Value::as_str)
                .map(PathBuf::from)
                .ok_or_else(|| ServiceError::BadRequest("export needs body.dir".into()))?;
            let (report, scene) = manager.export(id, &dir, req.body.get("output"))?;
            Ok(vec![reply(json!({ "report": report, "scene_path": scene }))])
        }
        "get_scene" => {
            let id = session_of(req)?;
            let (scene, revision) = manager.get_scene(id)?;
            Ok(vec![reply(json!({ "scene": scene, "revision": revision }))])
        }
        other => Err(ServiceError::BadRequest(format!("unknown op {other}"))),
    }
}

/// Binds 127.0.0.1:`port` (0 picks a free port) and serves until the task is dropped.
pub async fn spawn(manager: Arc<SessionManager>, port: u16) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    let app = router(manager);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok((addr, handle))
}

/// Runs the service in the foreground with sessions stored under the system
/// temporary directory.
pub fn serve_blocking(port: u16) -> std::io::Result<()> {
    let root = std::env::temp_dir().join("animflow-sessions");
    std::fs::create_dir_all(&root)?;
    let manager = Arc::new(SessionManager::new(root));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let (addr, handle) = spawn(manager, port).await?;
        eprintln!("listening on ws://{addr}/ws");
        handle.await.map_err(std::io::Error::other)
    })
}
