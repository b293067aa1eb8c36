//! Listeners for the framed protocol and the HTTP API.

use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::config::Config;
use crate::state::AppState;
use crate::{http, session};

pub struct Server {
    pub addr: SocketAddr,
    pub http_addr: Option<SocketAddr>,
    pub state: Arc<AppState>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds both listeners and starts serving in the background.
    pub async fn start(cfg: Config) -> anyhow::Result<Self> {
        let listen = cfg.listen;
        let http_listen = cfg.http_listen;
        let state = Arc::new(tokio::task::spawn_blocking(move || AppState::new(cfg)).await??);
        let tcp = TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
        let addr = tcp.local_addr()?;
        let (shutdown, rx) = watch::channel(false);
        let mut tasks = vec![tokio::spawn(accept_loop(state.clone(), tcp, rx.clone()))];
        let mut http_addr = None;
        if let Some(h) = http_listen {
            let l = TcpListener::bind(h).await.with_context(|| format!("binding {h}"))?;
            http_addr = Some(l.local_addr()?);
            let app = http::router(state.clone());
            let mut rx = rx;
            tasks.push(tokio::spawn(async move {
                let stop = async move {
                    let _ = rx.wait_for(|s| *s).await;
                };
                if let Err(e) = axum::serve(l, app).with_graceful_shutdown(stop).await {
                    tracing::error!(error = %e, "http server failed");
                }
            }));
        }
        tracing::info!(%addr, ?http_addr, mode = %state.mode(), "prover listening");
        Ok(Self {
            addr,
            http_addr,
            state,
            shutdown,
            tasks,
        })
    }

    /// Stops accepting; in-flight connections finish on their own.
    pub async fn stop(self) {
        let _ = self.shutdown.send(true);
        for t in self.tasks {
            let _ = t.await;
        }
    }

    pub async fn run_until_ctrl_c(self) -> anyhow::Result<()> {
        tokio::signal::ctrl_c().await?;
        tracing::info!("shutting down");
        self.stop().await;
        Ok(())
    }
}

async fn accept_loop(state: Arc<AppState>, listener: TcpListener, mut stop: watch::Receiver<bool>) {
    loop {
        tokio::select! {
            _ = stop.wait_for(|s| *s) => break,
            accepted = listener.accept() => match accepted {
                // The peer address is dropped here and never reaches the session.
                Ok((stream, _peer)) => {
                    let _ = stream.set_nodelay(true);
                    tokio::spawn(session::handle(state.clone(), stream));
                }
                Err(e) => tracing::warn!(error = %e, "accept failed"),
            },
        }
    }
}
