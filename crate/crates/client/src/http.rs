//! Async client for the prover's HTTP/JSON API.

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::ClientError;

pub struct ProverHttp {
    base: String,
    client: reqwest::Client,
}

fn http_err(e: reqwest::Error) -> ClientError {
    ClientError::Http(e.to_string())
}

impl ProverHttp {
    /// `addr` is `host:port` or a full `http://` base URL.
    pub fn new(addr: &str) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{addr}")
        };
        Self {
            base,
            client: reqwest::Client::new(),
        }
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.map_err(http_err)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(ClientError::Http(format!("{status}: {body}")));
        }
        resp.json().await.map_err(http_err)
    }

    pub async fn health(&self) -> Result<Value, ClientError> {
        self.get("/healthz").await
    }

    pub async fn stats(&self) -> Result<Value, ClientError> {
        self.get("/v1/stats").await
    }

    pub async fn token(&self, id_hex: &str) -> Result<Value, ClientError> {
        self.get(&format!("/v1/tokens/{id_hex}")).await
    }

    pub async fn cache_snapshot(&self) -> Result<String, ClientError> {
        let resp = self
            .client
            .get(format!("{}/v1/cache/snapshot", self.base))
            .send()
            .await
            .map_err(http_err)?;
        if !resp.status().is_success() {
            return Err(ClientError::Http(resp.status().to_string()));
        }
        resp.text().await.map_err(http_err)
    }
}
