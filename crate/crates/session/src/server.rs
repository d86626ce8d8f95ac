//! HTTP API over a running session.
//!
//! The session loop runs on its own thread. Handlers read the last published
//! snapshot and hand human answers to the oracle channel.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cape_core::metrics::MetricsRow;
use cape_core::oracle::{HumanOutlet, SubmitError};
use cape_core::{Error, History, Label, Result};
use serde_json::{json, Value};
use tokio::sync::watch;
use tower_http::services::ServeDir;

use crate::artifacts::RoundRecord;
use crate::session::{RoundOutcome, Session, SessionSummary, Status};

/// What the handlers see of the session.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub summary: SessionSummary,
    pub marginals: Vec<f64>,
    pub history: History,
    pub records: Vec<RoundRecord>,
}

impl Snapshot {
    pub fn of(s: &Session) -> Self {
        Self {
            summary: s.summary(),
            marginals: s.particles().edge_marginals(),
            history: s.history().clone(),
            records: s.records().to_vec(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    snapshot: Arc<RwLock<Snapshot>>,
    outlet: Option<HumanOutlet>,
    tick: watch::Receiver<u64>,
    /// How long `POST /api/answer` waits for the posterior update.
    answer_wait: Duration,
}

impl AppState {
    pub fn snapshot(&self) -> Snapshot {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// A session running on a background thread.
pub struct SessionHandle {
    pub state: AppState,
    stop: Arc<AtomicBool>,
    join: JoinHandle<Result<Session>>,
}

impl SessionHandle {
    /// Asks the loop to checkpoint and return.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn join(self) -> Result<Session> {
        self.join.join().unwrap_or_else(|_| Err(Error::Config("session thread panicked".into())))
    }
}

/// Starts the loop. Human queries are re-asked every `poll` so a stop
/// request is noticed while waiting.
pub fn spawn(mut session: Session, poll: Duration) -> SessionHandle {
    session.set_human_timeout(Some(poll));
    let snapshot = Arc::new(RwLock::new(Snapshot::of(&session)));
    let (tx, rx) = watch::channel(0u64);
    let stop = Arc::new(AtomicBool::new(false));
    let state = AppState {
        snapshot: snapshot.clone(),
        outlet: session.human_outlet(),
        tick: rx,
        answer_wait: Duration::from_secs(30),
    };
    let flag = stop.clone();
    let join = std::thread::spawn(move || {
        let publish = |s: &Session| {
            *snapshot.write().unwrap_or_else(|e| e.into_inner()) = Snapshot::of(s);
            tx.send_modify(|v| *v += 1);
        };
        let mut shown = session.status();
        loop {
            if flag.load(Ordering::SeqCst) {
                let r = session.interrupt();
                publish(&session);
                return r.map(|_| session);
            }
            match session.run_round() {
                Ok(RoundOutcome::Advanced(_)) => publish(&session),
                Ok(RoundOutcome::Paused) => {
                    if shown != Status::Paused {
                        publish(&session);
                    }
                }
                Ok(RoundOutcome::Done(_)) => {
                    publish(&session);
                    // keep serving the final state until stopped
                    while !flag.load(Ordering::SeqCst) {
                        std::thread::sleep(poll);
                    }
                    return Ok(session);
                }
                Err(e) => {
                    publish(&session);
                    return Err(e);
                }
            }
            shown = session.status();
        }
    });
    SessionHandle { state, stop, join }
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(json!({ "error": msg.into() }))).into_response()
}

/// The API routes, plus static files from `ui_dir` when given.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/query", get(get_query))
        .route("/api/marginals", get(get_marginals))
        .route("/api/metrics", get(get_metrics))
        .route("/api/history", get(get_history))
        .route("/api/answer", post(post_answer))
        .route("/api/{*rest}", get(not_found).post(not_found))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such endpoint")
}

fn pending_json(st: &AppState, snap: &Snapshot) -> Value {
    let q = st.outlet.as_ref().and_then(HumanOutlet::pending);
    let names = q.as_ref().and_then(|q| {
        snap.summary.names.as_ref().map(|n| json!([n[q.i], n[q.j]]))
    });
    json!({ "query": q, "names": names })
}

async fn get_session(State(st): State<AppState>) -> Response {
    let snap = st.snapshot();
    let mut v = serde_json::to_value(&snap.summary).expect("summary serializes");
    v["pending"] = pending_json(&st, &snap)["query"].clone();
    v["human"] = json!(st.outlet.is_some());
    Json(v).into_response()
}

async fn get_query(State(st): State<AppState>) -> Response {
    let snap = st.snapshot();
    let mut v = pending_json(&st, &snap);
    v["status"] = json!(snap.summary.status);
    v["round"] = json!(snap.summary.round);
    Json(v).into_response()
}

async fn get_marginals(State(st): State<AppState>) -> Response {
    let snap = st.snapshot();
    let d = snap.summary.d;
    let rows: Vec<&[f64]> = snap.marginals.chunks(d.max(1)).collect();
    Json(json!({ "d": d, "names": snap.summary.names, "round": snap.summary.round, "marginals": rows }))
        .into_response()
}

async fn get_metrics(State(st): State<AppState>) -> Response {
    let snap = st.snapshot();
    let mut out = serde_json::Map::new();
    out.insert("round".into(), json!(snap.records.iter().map(|r| r.round).collect::<Vec<_>>()));
    for (k, name) in MetricsRow::NAMES.iter().enumerate() {
        let col: Vec<Value> = snap.records.iter().map(|r| json!(r.metrics.values()[k])).collect();
        out.insert(name.to_string(), Value::Array(col));
    }
    Json(Value::Object(out)).into_response()
}

async fn get_history(State(st): State<AppState>) -> Response {
    Json(st.snapshot().history).into_response()
}

fn parse_label(v: &Value) -> Option<Label> {
    if let Some(n) = v.as_u64() {
        return u8::try_from(n).ok().and_then(|n| Label::try_from(n).ok());
    }
    match v.as_str()? {
        "forward" | "i_to_j" => Some(Label::Forward),
        "reverse" | "j_to_i" => Some(Label::Reverse),
        "no_edge" | "none" => Some(Label::NoEdge),
        _ => None,
    }
}

fn parse_answer(body: &[u8]) -> std::result::Result<(usize, usize, Label), String> {
    let v: Value = serde_json::from_slice(body).map_err(|e| format!("body is not JSON: {e}"))?;
    let pair = v
        .get("pair")
        .and_then(Value::as_array)
        .filter(|p| p.len() == 2)
        .ok_or("expected \"pair\": [i, j]")?;
    let idx = |x: &Value| x.as_u64().map(|n| n as usize).ok_or("pair entries must be non-negative integers");
    let (i, j) = (idx(&pair[0])?, idx(&pair[1])?);
    let label = v
        .get("label")
        .and_then(parse_label)
        .ok_or("label must be 0, 1, 2 or one of reverse, forward, no_edge")?;
    Ok((i, j, label))
}

async fn post_answer(State(st): State<AppState>, body: Bytes) -> Response {
    let (i, j, label) = match parse_answer(&body) {
        Ok(a) => a,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    let Some(outlet) = &st.outlet else {
        return error(StatusCode::CONFLICT, "this session does not take human answers");
    };
    let before = st.snapshot().summary.round;
    let mut tick = st.tick.clone();
    tick.mark_unchanged();
    match outlet.submit(i, j, label) {
        Ok(()) => {}
        Err(e @ (SubmitError::NoPending | SubmitError::Mismatch { .. })) => {
            return error(StatusCode::CONFLICT, e.to_string())
        }
        Err(e @ SubmitError::Closed) => return error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    }
    let advanced = tokio::time::timeout(st.answer_wait, async {
        loop {
            if tick.changed().await.is_err() {
                return;
            }
            let s = st.snapshot().summary;
            if s.round > before || s.status.is_done() {
                return;
            }
        }
    })
    .await;
    if advanced.is_err() {
        return error(StatusCode::ACCEPTED, "answer accepted; update still running");
    }
    Json(st.snapshot().summary).into_response()
}

/// Serves the API until Ctrl-C, then checkpoints and returns the session.
pub async fn serve(handle: SessionHandle, bind: SocketAddr, ui_dir: Option<PathBuf>) -> Result<Session> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    ::log::info!("listening on http://{}", listener.local_addr()?);
    let app = router(handle.state.clone(), ui_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            ::log::info!("interrupted; checkpointing");
        })
        .await?;
    handle.stop();
    tokio::task::spawn_blocking(move || handle.join())
        .await
        .map_err(|e| Error::Config(format!("session thread failed: {e}")))?
}
