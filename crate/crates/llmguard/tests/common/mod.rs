//! Helpers shared by the integration tests: a gateway on an ephemeral port,
//! a blocking JSON client and a call-counting upstream.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use llmguard::gateway::{bind, serve, GatewayState};
use llmguard::{load_config, GatewayOptions};
use llmguard_core::{Upstream, UpstreamError};
use serde_json::Value;

/// The checked-in config directory with the trained bundles.
pub fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Wraps an upstream and counts its invocations.
pub struct Counting<U> {
    calls: AtomicUsize,
    inner: U,
}

impl<U: Upstream> Counting<U> {
    pub fn new(inner: U) -> Arc<Self> {
        Arc::new(Counting { calls: AtomicUsize::new(0), inner })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<U: Upstream> Upstream for Counting<U> {
    fn complete(&self, prompt: &str) -> Result<String, UpstreamError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(prompt)
    }
}

pub fn state(dir: &Path, upstream: Arc<dyn Upstream>, tweak: impl FnOnce(&mut GatewayOptions)) -> Arc<GatewayState> {
    let cfg = load_config(dir).expect("config loads");
    let mut options = cfg.gateway;
    tweak(&mut options);
    Arc::new(GatewayState::new(cfg.registry, cfg.policy, options, upstream))
}

/// A gateway running on its own runtime thread; stopped on drop.
pub struct Server {
    pub base: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(state: Arc<GatewayState>) -> Server {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().expect("runtime");
            rt.block_on(async move {
                let (listener, addr) = bind("127.0.0.1:0").await.expect("bind");
                addr_tx.send(addr).expect("report address");
                serve(listener, state, async {
                    let _ = stop_rx.await;
                })
                .await
                .expect("serve");
            });
        });
        let addr = addr_rx.recv().expect("server address");
        Server { base: format!("http://{addr}"), stop: Some(stop_tx), thread: Some(thread) }
    }

    pub fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let mut resp = agent()
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .expect("request");
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().expect("body");
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub fn post_json(&self, path: &str, body: &Value) -> (u16, Value) {
        self.post(path, &body.to_string())
    }

    pub fn get(&self, path: &str) -> (u16, String) {
        let mut resp = agent().get(&format!("{}{path}", self.base)).call().expect("request");
        (resp.status().as_u16(), resp.body_mut().read_to_string().expect("body"))
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}
