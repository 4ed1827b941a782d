#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use jsonschema::{Resource, Validator};
use ncsde_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const BASE: &str = "json-schema:///";

fn validators() -> &'static HashMap<&'static str, Validator> {
    static CELL: OnceLock<HashMap<&'static str, Validator>> = OnceLock::new();
    CELL.get_or_init(|| {
        let docs: Vec<(&str, Value)> = ncsde_service::schema_names()
            .into_iter()
            .map(|n| (n, serde_json::from_str(ncsde_service::schema(n).unwrap()).unwrap()))
            .collect();
        docs.iter()
            .map(|(name, doc)| {
                let mut opts = jsonschema::options().with_base_uri(format!("{BASE}{name}.json"));
                for (other, other_doc) in &docs {
                    opts = opts.with_resource(
                        format!("{BASE}{other}.json"),
                        Resource::from_contents(other_doc.clone()).unwrap(),
                    );
                }
                (*name, opts.build(doc).unwrap_or_else(|e| panic!("schema {name}: {e}")))
            })
            .collect()
    })
}

pub fn assert_schema(name: &str, value: &Value) {
    let validator = validators().get(name).unwrap_or_else(|| panic!("no schema {name}"));
    let errors: Vec<String> = validator.iter_errors(value).map(|e| format!("{e} at {}", e.instance_path)).collect();
    assert!(errors.is_empty(), "response does not match {name}: {errors:?}\n{value}");
}

pub struct Api {
    pub router: Router,
    pub state: AppState,
}

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig::new(dir)
}

impl Api {
    pub fn open(config: ServiceConfig) -> Self {
        let state = AppState::open(config).unwrap();
        Self {
            router: router(state.clone()),
            state,
        }
    }

    pub async fn send(&self, method: &str, uri: &str, body: Option<Vec<u8>>) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map_or_else(Body::empty, Body::from))
            .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value: Value = serde_json::from_slice(&bytes)
            .unwrap_or_else(|e| panic!("{method} {uri}: body is not JSON ({e}): {}", String::from_utf8_lossy(&bytes)));
        if !status.is_success() {
            assert_schema("error", &value);
            assert_eq!(value["error"]["status"], status.as_u16());
        }
        (status, value)
    }

    /// Sends the request and checks status and schema.
    pub async fn expect(&self, method: &str, uri: &str, body: Option<Value>, status: u16, schema: &str) -> Value {
        let bytes = body.map(|b| serde_json::to_vec(&b).unwrap());
        let (got, value) = self.send(method, uri, bytes).await;
        assert_eq!(got.as_u16(), status, "{method} {uri}: {value}");
        assert_schema(schema, &value);
        value
    }

    pub async fn get(&self, uri: &str, schema: &str) -> Value {
        self.expect("GET", uri, None, 200, schema).await
    }

    pub async fn error(&self, method: &str, uri: &str, body: Option<Vec<u8>>, status: u16) -> Value {
        let (got, value) = self.send(method, uri, body).await;
        assert_eq!(got.as_u16(), status, "{method} {uri}: {value}");
        value
    }

    pub async fn simulate(&self, body: Value) -> Value {
        self.expect("POST", "/datasets/simulate", Some(body), 201, "dataset").await
    }

    pub async fn submit_fit(&self, body: Value) -> String {
        let v = self.expect("POST", "/fits", Some(body), 202, "fit_accepted").await;
        v["job_id"].as_str().unwrap().to_owned()
    }

    /// Polls until the job is done or failed, returning every snapshot.
    pub async fn wait(&self, id: &str) -> Vec<Value> {
        let mut seen = Vec::new();
        for _ in 0..6000 {
            let v = self.get(&format!("/fits/{id}"), "fit").await;
            let state = v["state"].as_str().unwrap().to_owned();
            seen.push(v);
            if state == "done" || state == "failed" {
                return seen;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("fit {id} did not finish");
    }
}

/// Three AR spectra whose log densities are nearly equidistant, so the
/// elbow sits at three groups.
pub fn three_group_design(n: usize, m: usize, seed: u64) -> Value {
    json!({
        "n": n,
        "m": m,
        "seed": seed,
        "models": [
            {"phi": [0.7, 0.0, 0.0], "sigma2": 1.0},
            {"phi": [-0.7, 0.0, 0.0], "sigma2": 1.0},
            {"phi": [0.0, -0.85, 0.0], "sigma2": 1.0}
        ],
        "probs": [0.34, 0.33, 0.33]
    })
}

pub fn small_fit(dataset_id: &str, k: usize) -> Value {
    json!({
        "dataset_id": dataset_id,
        "config": {
            "basis": {"L": 10},
            "fit": {"K": k, "lambda": {"mode": "fixed", "value": 1.0}, "max_outer_iters": 200}
        }
    })
}

pub fn csv(n: usize, m: usize) -> Vec<u8> {
    let mut out = (1..=m).map(|j| format!("s{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    let mut state = 12345u64;
    for _ in 0..n {
        let row: Vec<String> = (0..m)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                format!("{:.6}", (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}
