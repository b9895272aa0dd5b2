#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use blockies::config::StudyDefinition;
use blockies::fsutil::{encode_png, write_json};
use blockies::server::{router, AppState, Clock, ServerConfig};
use blockies_core::advisor::{scripted_schedule, ScriptedConfidence};
use blockies_core::dataset::{generate_sample, SampleRecord, Split};
use blockies_core::generation::GenerationConfig;
use blockies_core::render::{render, RenderSettings};
use blockies_core::study::{build_plan, StudyDesign, StudyPlan};

pub const ADMIN: &str = "admin-secret-token";
pub const STUDY_ID: &str = "fixture-study";

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub plan: StudyPlan,
    pub plan_path: PathBuf,
    pub study_path: PathBuf,
    pub study: StudyDefinition,
    pub data_dir: PathBuf,
    pub records: Vec<SampleRecord>,
}

pub fn experimental_records(n: u64, seed: u64) -> Vec<SampleRecord> {
    let cfg = GenerationConfig::default();
    (0..n).map(|i| generate_sample(&cfg, Split::Experimental, seed, i).unwrap()).collect()
}

/// Plan over a 200-sample experimental split with a 70%-correct scripted
/// advisor; only the 60 plan images are rendered, at 64 px.
pub fn fixture_with(closed: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let records = experimental_records(200, 11);
    let truth: Vec<_> = records.iter().map(|r| (r.sample_id.clone(), r.label)).collect();
    let table = scripted_schedule(&truth, 140, 5, "fixture", &ScriptedConfidence::default()).unwrap();
    let plan = build_plan(&records, &table, StudyDesign::default(), 9).unwrap();

    let media = dir.path().join("media");
    std::fs::create_dir_all(&media).unwrap();
    let settings = RenderSettings::default().with_resolution(64);
    for s in plan.samples.values() {
        let rec = records.iter().find(|r| r.image_name() == s.image).unwrap();
        std::fs::write(media.join(&s.image), encode_png(&render(&rec.params, &settings).unwrap()).unwrap()).unwrap();
    }
    let plan_path = dir.path().join("plan.json");
    write_json(&plan_path, &plan).unwrap();
    let study_path = dir.path().join("study.toml");
    std::fs::write(
        &study_path,
        format!(
            "study_id = \"{STUDY_ID}\"\nplan = \"plan.json\"\nmedia = \"media\"\nassignment_seed = 3\nstrata = [\"female\", \"male\", \"other\"]\nclosed = {closed}\n"
        ),
    )
    .unwrap();
    let study = StudyDefinition::load(&study_path).unwrap();
    let data_dir = dir.path().join("study-data");
    Fixture { dir, plan, plan_path, study_path, study, data_dir, records }
}

pub fn fixture() -> Fixture {
    fixture_with(false)
}

impl Fixture {
    pub fn server_config(&self) -> ServerConfig {
        ServerConfig {
            study: self.study.clone(),
            data_dir: self.data_dir.clone(),
            admin_token: Some(ADMIN.into()),
            static_dir: None,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

/// Manually advanced clock in milliseconds.
#[derive(Clone)]
pub struct TestClock(pub Arc<AtomicU64>);

impl TestClock {
    pub fn new(start: u64) -> Self {
        Self(Arc::new(AtomicU64::new(start)))
    }
    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
    pub fn clock(&self) -> Clock {
        let c = self.0.clone();
        Arc::new(move || c.load(Ordering::SeqCst))
    }
}

/// In-process server on an ephemeral port, stopped on drop.
pub struct RunningServer {
    pub url: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

pub fn start_server(cfg: &ServerConfig, clock: Clock) -> RunningServer {
    let app = AppState::load(cfg, clock).unwrap();
    let app = router(app, cfg.static_dir.clone());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<SocketAddr>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
    });
    let addr = addr_rx.recv().unwrap();
    RunningServer { url: format!("http://{addr}"), shutdown: Some(tx), thread: Some(thread) }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Every object key anywhere in a JSON value.
pub fn all_keys(v: &serde_json::Value, out: &mut Vec<String>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, x) in m {
                out.push(k.clone());
                all_keys(x, out);
            }
        }
        serde_json::Value::Array(a) => a.iter().for_each(|x| all_keys(x, out)),
        _ => {}
    }
}

pub fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}
