#![allow(dead_code)]

use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use mems_testbed_gateway::{router, AppState, GatewayConfig};

pub struct Client {
    pub app: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

impl Client {
    pub fn unpaced() -> Self {
        Self::with(GatewayConfig {
            pace: 0.0,
            ..GatewayConfig::default()
        })
    }

    pub fn with(config: GatewayConfig) -> Self {
        Self {
            app: router(AppState::new(config)),
        }
    }

    pub async fn send(&self, method: &str, uri: &str, body: Option<&[u8]>) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(
                body.map(|b| Body::from(b.to_vec()))
                    .unwrap_or_else(Body::empty),
            )
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string());
        let body = resp
            .into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec();
        Reply {
            status,
            content_type,
            body,
        }
    }

    pub async fn get(&self, uri: &str) -> Reply {
        self.send("GET", uri, None).await
    }

    pub async fn post(&self, uri: &str, body: &Value) -> Reply {
        self.send("POST", uri, Some(body.to_string().as_bytes()))
            .await
    }

    pub async fn create(&self, config: &Value) -> u64 {
        let r = self.post("/sessions", config).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        r.json()["id"].as_u64().unwrap()
    }

    pub async fn command(&self, id: u64, command: &str) -> Reply {
        self.post(
            &format!("/sessions/{id}/command"),
            &json!({ "command": command }),
        )
        .await
    }

    pub async fn state(&self, id: u64) -> String {
        let r = self.get(&format!("/sessions/{id}")).await;
        r.json()["state"].as_str().unwrap().to_string()
    }

    pub async fn wait_for(&self, id: u64, state: &str) {
        for _ in 0..2000 {
            if self.state(id).await == state {
                return;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        panic!("session {id} never reached {state}");
    }

    /// Opens a telemetry stream. The subscription is registered before this
    /// returns; the frames are read by awaiting the returned future.
    pub async fn subscribe(
        &self,
        id: u64,
        query: &str,
    ) -> impl std::future::Future<Output = Vec<SseFrame>> {
        let req = Request::builder()
            .uri(format!("/sessions/{id}/telemetry{query}"))
            .body(Body::empty())
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(
            resp.headers().get("content-type").unwrap(),
            "text/event-stream"
        );
        async move {
            let bytes = tokio::time::timeout(Duration::from_secs(60), resp.into_body().collect())
                .await
                .expect("telemetry stream ends")
                .unwrap()
                .to_bytes();
            parse_sse(std::str::from_utf8(&bytes).unwrap())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseFrame {
    pub event: String,
    pub id: Option<u64>,
    pub data: Value,
}

pub fn parse_sse(text: &str) -> Vec<SseFrame> {
    let mut out = Vec::new();
    for block in text.split("\n\n") {
        let mut event = None;
        let mut id = None;
        let mut data = String::new();
        for line in block.lines() {
            if let Some(v) = line.strip_prefix("event:") {
                event = Some(v.trim().to_string());
            } else if let Some(v) = line.strip_prefix("id:") {
                id = Some(v.trim().parse().unwrap());
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.trim_start());
            }
        }
        if let Some(event) = event {
            out.push(SseFrame {
                event,
                id,
                data: serde_json::from_str(&data).unwrap(),
            });
        }
    }
    out
}

/// Short benign cruise.
pub fn short_cruise(duration: f64) -> Value {
    json!({ "seed": 7, "duration": duration })
}
