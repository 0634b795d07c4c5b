//! Service startup and shutdown.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use courseops_core::ops::{OpsCommand, OpsError};
use thiserror::Error;
use tokio::net::TcpListener;

use crate::api::{router, AppState, Clock};
use crate::config::Config;
use crate::data::{CourseData, DataError};
use crate::store::Store;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {port} on {bind} is already in use")]
    PortInUse { bind: std::net::IpAddr, port: u16 },
    #[error("cannot listen on {addr}: {reason}")]
    Bind { addr: SocketAddr, reason: String },
    #[error("event log is corrupt at seq {seq} (line {line}): {reason}; refusing to start")]
    CorruptLog { seq: u64, line: usize, reason: String },
    #[error("course data: {0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Ops(OpsError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

impl From<OpsError> for ServeError {
    fn from(e: OpsError) -> Self {
        match e {
            OpsError::CorruptLog { seq, line, reason } => ServeError::CorruptLog { seq, line, reason },
            e => ServeError::Ops(e),
        }
    }
}

/// A service that has restored its state and bound its port, ready to run.
pub struct Server {
    listener: TcpListener,
    state: Arc<AppState>,
}

impl Server {
    pub async fn bind(config: Config, clock: Clock) -> Result<Server, ServeError> {
        let data = CourseData::load(&config.data_dir)?;
        let ctx = Arc::new(data.context(&config)?);
        let store = Store::open(&config.data_dir, ctx.clone(), config.snapshot_every)?;
        let addr = SocketAddr::new(config.bind, config.port);
        let listener = match TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => {
                // release the writer before reporting
                let _ = store.close();
                return Err(if e.kind() == std::io::ErrorKind::AddrInUse {
                    ServeError::PortInUse { bind: config.bind, port: config.port }
                } else {
                    ServeError::Bind { addr, reason: e.to_string() }
                });
            }
        };
        Ok(Server { listener, state: Arc::new(AppState { store, ctx, data, config, clock }) })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> Arc<AppState> {
        self.state.clone()
    }

    /// Serves until `shutdown` resolves, then drains the writer and writes
    /// the final snapshot.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServeError> {
        let Server { listener, state } = self;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        let ticker = (state.config.tick_secs > 0).then(|| tokio::spawn(tick(state.clone())));
        axum::serve(listener, router(state.clone())).with_graceful_shutdown(shutdown).await?;
        if let Some(t) = ticker {
            t.abort();
        }
        let store_state = state.clone();
        tokio::task::spawn_blocking(move || store_state.store.close())
            .await
            .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
        Ok(())
    }
}

/// Periodic escalation and revert sweeps, as ordinary commands.
async fn tick(state: Arc<AppState>) {
    let mut interval = tokio::time::interval(Duration::from_secs(state.config.tick_secs));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        interval.tick().await;
        let now = (state.clock)();
        let today = state.ctx.today(now);
        for command in [OpsCommand::EscalateDue, OpsCommand::RunReverts { as_of: today }] {
            match state.store.submit(command, None, now).await {
                Ok(applied) if !applied.commit.records.is_empty() => {
                    tracing::info!(events = applied.commit.records.len(), "sweep recorded changes")
                }
                Ok(_) => {}
                Err(OpsError::Io(_)) => return,
                Err(e) => tracing::warn!(error = %e, "sweep failed"),
            }
        }
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
