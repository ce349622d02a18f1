use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Every message on the socket, in both directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub kind: Kind,
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[serde(default)]
    pub revision: u64,
    #[serde(default)]
    pub body: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Request,
    Response,
    Event,
}

impl Envelope {
    pub fn request(op: &str, session: Option<&str>, revision: u64, body: Value) -> Self {
        Envelope {
            kind: Kind::Request,
            op: op.into(),
            session: session.map(str::to_string),
            revision,
            body,
        }
    }

    /// A response echoing `req`'s op, session and revision.
    pub fn response_to(req: &Envelope, body: Value) -> Self {
        Envelope {
            kind: Kind::Response,
            body,
            ..req.clone()
        }
    }

    pub fn event(op: &str, session: &str, revision: u64, body: Value) -> Self {
        Envelope {
            kind: Kind::Event,
            op: op.into(),
            session: Some(session.into()),
            revision,
            body,
        }
    }

    /// The `error` object of a failed response, if any.
    pub fn error(&self) -> Option<&Value> {
        self.body.get("error")
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad image: {0}")]
    BadImage(String),
    #[error("{what} is {got_w}×{got_h} but the image is {want_w}×{want_h}")]
    DimensionMismatch {
        what: String,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("request cites revision {got} but the session is at {current}")]
    StaleRevision { got: u64, current: u64 },
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("no simulation matches revision {0}; simulate again before exporting")]
    StaleSimulation(u64),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{0}")]
    Failed(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::BadImage(_) => "BadImage",
            ServiceError::DimensionMismatch { .. } => "DimensionMismatch",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::StaleRevision { .. } => "StaleRevision",
            ServiceError::Validation { .. } => "ValidationError",
            ServiceError::StaleSimulation(_) => "StaleSimulation",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Failed(_) => "Failed",
        }
    }

    pub fn to_body(&self) -> Value {
        let mut e = json!({"code": self.code(), "message": self.to_string()});
        if let ServiceError::Validation { path, .. } = self {
            e["path"] = json!(path);
        }
        json!({ "error": e })
    }
}

impl From<animflow::scene::SceneError> for ServiceError {
    fn from(e: animflow::scene::SceneError) -> Self {
        use animflow::scene::SceneError;
        match e {
            SceneError::Validation { path, message } => ServiceError::Validation { path, message },
            SceneError::Parse(m) => ServiceError::Validation {
                path: "(root)".into(),
                message: m,
            },
            SceneError::FileNotFound(p) => ServiceError::Validation {
                path: "(files)".into(),
                message: format!("file not found: {}", p.display()),
            },
            other => ServiceError::Failed(other.to_string()),
        }
    }
}
