//! Runs the HTTP front end on a background thread.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc;
use std::thread::JoinHandle;

use tokio::sync::oneshot;

use crate::error::ServiceError;
use crate::http::router;
use crate::service::OracleService;

pub const PORT_ENV: &str = "ORACLE_PORT";
pub const DEFAULT_PORT: u16 = 8765;

/// Port from `ORACLE_PORT`, or [`DEFAULT_PORT`] when unset.
pub fn port_from_env() -> Result<u16, ServiceError> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| ServiceError::Env {
            var: PORT_ENV,
            msg: format!("'{v}' is not a port number"),
        }),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_PORT),
        Err(e) => Err(ServiceError::Env {
            var: PORT_ENV,
            msg: e.to_string(),
        }),
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServiceError>>>,
}

impl ServerHandle {
    /// The bound address (useful with port 0).
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn shutdown(mut self) -> Result<(), ServiceError> {
        self.stop()
    }

    /// Blocks until the server exits.
    pub fn wait(mut self) -> Result<(), ServiceError> {
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| ServiceError::Server("server thread panicked".into()))?,
            None => Ok(()),
        }
    }

    fn stop(&mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| ServiceError::Server("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Binds `addr` and serves the API (and `static_dir`, if given) until the
/// handle is shut down or dropped.
pub fn spawn(service: OracleService, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<ServerHandle, ServiceError> {
    let (ready_tx, ready_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("oracle-http".into())
        .spawn(move || -> Result<(), ServiceError> {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .map_err(|e| ServiceError::Server(e.to_string()))?;
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(addr).await {
                    Ok(l) => l,
                    Err(e) => {
                        let msg = format!("cannot bind {addr}: {e}");
                        let _ = ready_tx.send(Err(msg.clone()));
                        return Err(ServiceError::Server(msg));
                    }
                };
                let bound = listener.local_addr().map_err(|e| ServiceError::Server(e.to_string()))?;
                let _ = ready_tx.send(Ok(bound));
                axum::serve(listener, router(service, static_dir))
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .map_err(|e| ServiceError::Server(e.to_string()))
            })
        })
        .map_err(|e| ServiceError::Server(e.to_string()))?;
    match ready_rx.recv() {
        Ok(Ok(addr)) => Ok(ServerHandle {
            addr,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }),
        Ok(Err(msg)) => {
            let _ = thread.join();
            Err(ServiceError::Server(msg))
        }
        Err(_) => Err(ServiceError::Server("server thread exited before binding".into())),
    }
}
