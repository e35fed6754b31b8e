//! Serve any [`Scorer`] behind the `/v1/score` wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use crate::scorer::{self, ScoreError, ScoreRequest, Scorer};

type SharedScorer = Arc<dyn Scorer>;

pub fn router(scorer: SharedScorer) -> Router {
    Router::new()
        .route("/v1/score", post(score_handler))
        .with_state(scorer)
}

fn error(status: StatusCode, message: String) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn score_handler(State(scorer): State<SharedScorer>, body: Bytes) -> Response {
    let request: ScoreRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let result = tokio::task::spawn_blocking(move || scorer::score(&*scorer, &request)).await;
    match result {
        Ok(Ok(scores)) => Json(json!({ "scores": scores })).into_response(),
        Ok(Err(e @ ScoreError::InvalidRequest(_))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e @ ScoreError::MissingFixture(_))) => error(StatusCode::NOT_FOUND, e.to_string()),
        Ok(Err(e)) => error(StatusCode::BAD_GATEWAY, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// A running server on its own thread and runtime.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting requests and wait for the server thread.
    pub fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.join()
    }

    /// Block until the server exits.
    pub fn join(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| std::io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind `addr` (port 0 picks a free port) and serve `scorer` until shutdown.
pub fn spawn(scorer: SharedScorer, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router(scorer))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    log::info!("scoring server listening on {addr}");
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retry::RetryPolicy;
    use crate::scorer::{LexicalScorer, RemoteScorer};

    #[test]
    fn remote_client_matches_in_process_scores() {
        let server = spawn(Arc::new(LexicalScorer), "127.0.0.1:0".parse().unwrap()).unwrap();
        let remote = RemoteScorer::new(&server.url(), RetryPolicy::immediate(1)).unwrap();
        let req = ScoreRequest::new("gaming mouse", vec!["Gaming Mouse X".into(), "Piano".into()]);
        assert_eq!(
            scorer::score(&remote, &req).unwrap(),
            scorer::score(&LexicalScorer, &req).unwrap()
        );
        server.shutdown().unwrap();
    }

    #[test]
    fn invalid_request_is_a_client_error() {
        let server = spawn(Arc::new(LexicalScorer), "127.0.0.1:0".parse().unwrap()).unwrap();
        let resp = reqwest::blocking::Client::new()
            .post(format!("{}/v1/score", server.url()))
            .body("{\"instruction\": 1}")
            .send()
            .unwrap();
        assert_eq!(resp.status().as_u16(), 400);
    }
}
