//! HTTP API. One pipeline thread owns the assistant; handlers send it jobs
//! and read state from a snapshot refreshed after every job.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc;
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::body::Body;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use harmony_core::memory::{MemoryEntry, MemoryKind, Rule};
use harmony_core::{Assistant, DeviceCommand, Interaction};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{broadcast, oneshot};
use tower_http::services::ServeDir;

use crate::backend::BackendFactory;
use crate::PipelineArgs;

#[derive(clap::Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Where memory, rules and logs/interactions.jsonl live.
    #[arg(long, env = "HARMONY_DATA_DIR", default_value = "harmony-data")]
    data_dir: PathBuf,
    /// Serve a built dashboard from this directory at `/`.
    #[arg(long)]
    serve_ui: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ApiReply {
    reply: String,
    commands: Vec<DeviceCommand>,
    conversation_id: String,
}

impl From<Interaction> for ApiReply {
    fn from(i: Interaction) -> Self {
        ApiReply {
            reply: i.reply,
            commands: i.commands,
            conversation_id: i.conversation_id,
        }
    }
}

enum Job {
    Utterance(String, oneshot::Sender<ApiReply>),
    Sensor(String, Value, oneshot::Sender<Result<ApiReply, String>>),
    Scenario(String, oneshot::Sender<Option<ApiReply>>),
    DeleteRule(u64, oneshot::Sender<bool>),
}

#[derive(Default)]
struct Snapshot {
    home: Value,
    rules: Vec<Rule>,
    memory: Vec<MemoryEntry>,
}

impl Snapshot {
    fn of(a: &Assistant) -> Self {
        Snapshot {
            home: serde_json::to_value(a.home()).expect("home serializes"),
            rules: a.memory().rules().cloned().collect(),
            memory: a.memory().entries(None).into_iter().cloned().collect(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    jobs: mpsc::Sender<Job>,
    snapshot: Arc<RwLock<Snapshot>>,
    events: broadcast::Sender<String>,
}

pub fn run(args: ServeArgs) -> anyhow::Result<()> {
    let home = args.pipeline.load_home()?;
    let scenarios = args.pipeline.load_scenarios()?;
    // Built before any async runtime exists: the HTTP client blocks.
    let backend = BackendFactory::from_args(&args.pipeline)?.build();
    let mut assistant = Assistant::open(home, scenarios, backend, &args.data_dir)
        .with_context(|| format!("opening data dir {}", args.data_dir.display()))?;
    for c in assistant.memory().corrupt_records() {
        tracing::warn!("skipped corrupt record {}:{}", c.file, c.line);
    }

    let (events, _) = broadcast::channel::<String>(4096);
    let tx = events.clone();
    assistant.subscribe(move |record| {
        let _ = tx.send(record.to_line());
    });
    let snapshot = Arc::new(RwLock::new(Snapshot::of(&assistant)));
    let (jobs, inbox) = mpsc::channel::<Job>();
    let pipeline = {
        let snapshot = snapshot.clone();
        std::thread::Builder::new()
            .name("pipeline".into())
            .spawn(move || pipeline_loop(assistant, inbox, snapshot))?
    };

    let state = AppState {
        jobs,
        snapshot,
        events,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .with_context(|| format!("invalid address {}:{}", args.host, args.port))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))?;
        let local = listener.local_addr()?;
        println!("harmony listening on http://{local}");
        let app = router(state, args.serve_ui);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    drop(runtime);
    let _ = pipeline.join();
    Ok(())
}

fn pipeline_loop(mut a: Assistant, inbox: mpsc::Receiver<Job>, snapshot: Arc<RwLock<Snapshot>>) {
    for job in inbox {
        match job {
            Job::Utterance(text, reply) => {
                let _ = reply.send(a.handle_utterance(&text).into());
            }
            Job::Sensor(id, value, reply) => {
                let r = a.handle_sensor(&id, &value).map(ApiReply::from).map_err(|e| e.to_string());
                let _ = reply.send(r);
            }
            Job::Scenario(name, reply) => {
                let _ = reply.send(a.run_scenario(&name).map(ApiReply::from));
            }
            Job::DeleteRule(id, reply) => {
                let _ = reply.send(a.memory_mut().delete_rule(id).is_ok());
            }
        }
        *snapshot.write().expect("snapshot lock") = Snapshot::of(&a);
    }
}

fn router(state: AppState, ui: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/state", get(get_state))
        .route("/api/utterance", post(post_utterance))
        .route("/api/sensor", post(post_sensor))
        .route("/api/scenario/{name}", post(post_scenario))
        .route("/api/rules", get(get_rules))
        .route("/api/rules/{id}", delete(delete_rule))
        .route("/api/memory", get(get_memory))
        .route("/api/events", get(get_events))
        .with_state(state);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({"error": message.into()}))).into_response()
}

async fn submit<T>(state: &AppState, job: Job, rx: oneshot::Receiver<T>) -> Result<T, Response> {
    state
        .jobs
        .send(job)
        .map_err(|_| error(StatusCode::SERVICE_UNAVAILABLE, "pipeline stopped"))?;
    rx.await
        .map_err(|_| error(StatusCode::SERVICE_UNAVAILABLE, "pipeline stopped"))
}

async fn get_state(State(s): State<AppState>) -> Response {
    Json(s.snapshot.read().expect("snapshot lock").home.clone()).into_response()
}

#[derive(Deserialize)]
struct UtteranceBody {
    text: String,
}

async fn post_utterance(State(s): State<AppState>, Json(body): Json<UtteranceBody>) -> Response {
    let (tx, rx) = oneshot::channel();
    match submit(&s, Job::Utterance(body.text, tx), rx).await {
        Ok(r) => Json(r).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct SensorBody {
    sensor_id: String,
    value: Value,
}

async fn post_sensor(State(s): State<AppState>, Json(body): Json<SensorBody>) -> Response {
    let (tx, rx) = oneshot::channel();
    match submit(&s, Job::Sensor(body.sensor_id, body.value, tx), rx).await {
        Ok(Ok(r)) => Json(r).into_response(),
        Ok(Err(e)) => error(StatusCode::BAD_REQUEST, e),
        Err(resp) => resp,
    }
}

async fn post_scenario(State(s): State<AppState>, Path(name): Path<String>) -> Response {
    let (tx, rx) = oneshot::channel();
    match submit(&s, Job::Scenario(name.clone(), tx), rx).await {
        Ok(Some(r)) => Json(r).into_response(),
        Ok(None) => error(StatusCode::NOT_FOUND, format!("no scenario named {name:?}")),
        Err(resp) => resp,
    }
}

async fn get_rules(State(s): State<AppState>) -> Response {
    Json(s.snapshot.read().expect("snapshot lock").rules.clone()).into_response()
}

async fn delete_rule(State(s): State<AppState>, Path(id): Path<u64>) -> Response {
    let (tx, rx) = oneshot::channel();
    match submit(&s, Job::DeleteRule(id, tx), rx).await {
        Ok(true) => Json(serde_json::json!({"deleted": id})).into_response(),
        Ok(false) => error(StatusCode::NOT_FOUND, format!("no rule with id {id}")),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
struct MemoryQuery {
    kind: Option<String>,
}

async fn get_memory(State(s): State<AppState>, Query(q): Query<MemoryQuery>) -> Response {
    let kind = match q.kind.as_deref().filter(|k| !k.is_empty()).map(str::parse::<MemoryKind>) {
        None => None,
        Some(Ok(k)) => Some(k),
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e),
    };
    let snap = s.snapshot.read().expect("snapshot lock");
    let entries: Vec<&MemoryEntry> = snap
        .memory
        .iter()
        .filter(|e| kind.is_none_or(|k| e.kind == k))
        .collect();
    Json(entries).into_response()
}

async fn get_events(State(s): State<AppState>) -> Response {
    let rx = s.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(line) => return Some((Ok::<_, Infallible>(line), rx)),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!("event stream consumer lagged by {n} records");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "application/x-ndjson")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}
