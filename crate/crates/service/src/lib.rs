//! Annotation service: studies of side-by-side tasks, per-rater assignment
//! with seeded side randomization, an fsynced append-only rating log and
//! canonical-frame export.

pub mod http;
pub mod service;
pub mod store;
pub mod study;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread::JoinHandle;

use thiserror::Error;
use tokio::sync::oneshot;

pub use service::{OpenReport, Service, ServiceError, Submission, TaskView};
pub use study::{CreateStudy, SideManifest, StudyConfig, TaskManifest};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub store: PathBuf,
    /// Served under `/static/` when set.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    report: OpenReport,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServeError>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn open_report(&self) -> &OpenReport {
        &self.report
    }

    /// Stops accepting connections, drains in-flight requests and joins.
    pub fn shutdown(mut self) -> Result<(), ServeError> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| {
                Err(ServeError::Io(std::io::Error::other(
                    "server thread panicked",
                )))
            }),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, ServeError> {
    Ok(tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?)
}

async fn bind(addr: SocketAddr) -> Result<tokio::net::TcpListener, ServeError> {
    tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind { addr, source })
}

/// Opens the store, binds and serves in the background. Port 0 picks a
/// free port; see [`ServerHandle::addr`].
pub fn spawn(config: ServeConfig) -> Result<ServerHandle, ServeError> {
    let (svc, report) = Service::open(&config.store)?;
    let app = http::router(Arc::new(svc), config.static_dir.as_deref());
    let rt = runtime()?;
    let listener = rt.block_on(bind(config.addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })?;
        Ok(())
    });
    Ok(ServerHandle {
        addr,
        report,
        stop: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until ctrl-c. `on_ready` gets the bound address and replay report.
pub fn run(
    config: ServeConfig,
    on_ready: impl FnOnce(SocketAddr, &OpenReport),
) -> Result<(), ServeError> {
    let (svc, report) = Service::open(&config.store)?;
    let app = http::router(Arc::new(svc), config.static_dir.as_deref());
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = bind(config.addr).await?;
        on_ready(listener.local_addr()?, &report);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
