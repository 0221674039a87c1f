//! The HTTP ask-service: POST /v1/ask and GET /healthz.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ebmrag_core::pipeline::{Engine, RunOptions};

#[derive(Debug, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub options: Vec<crate::dataset::QuestionOption>,
}

#[derive(Debug, Serialize)]
pub struct EvidenceEntry {
    pub doc_id: String,
    pub fine_score: f64,
    pub f_h: u8,
    pub f_u: f64,
    pub f_g: f64,
}

#[derive(Debug, Serialize)]
pub struct AskResponse {
    pub answer: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    pub termination_reason: ebmrag_core::pipeline::TerminationReason,
    pub iterations: usize,
    pub evidence: Vec<EvidenceEntry>,
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/v1/ask", post(ask))
        .route("/healthz", get(healthz))
        .with_state(engine)
}

async fn ask(
    State(engine): State<Arc<Engine>>,
    body: Result<Json<AskRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match body {
        Ok(body) => body,
        Err(rejection) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({ "error": { "message": rejection.body_text() } })),
            )
                .into_response();
        }
    };
    if request.question.trim().is_empty() {
        return (
            StatusCode::BAD_REQUEST,
            Json(json!({ "error": { "message": "missing or empty `question`" } })),
        )
            .into_response();
    }

    let result = match engine.run(&request.question, &RunOptions::default()).await {
        Ok(result) => result,
        Err(e) => {
            return (
                StatusCode::BAD_GATEWAY,
                Json(json!({
                    "error": {
                        "stage": e.stage.to_string(),
                        "iteration": e.iteration,
                        "message": e.source.to_string(),
                    }
                })),
            )
                .into_response();
        }
    };

    let options: Vec<(String, String)> =
        request.options.iter().map(|o| (o.label.clone(), o.text.clone())).collect();
    let outcome = match ebmrag_core::pipeline::answer(
        &request.question,
        &options,
        &result,
        &engine.index,
        &engine.gateway,
        &engine.prompts,
        engine.cfg.answer.cot_mode,
        &[],
    )
    .await
    {
        Ok(outcome) => outcome,
        Err(e) => {
            return (
                StatusCode::BAD_GATEWAY,
                Json(json!({
                    "error": { "stage": "answer", "iteration": result.traces.len(), "message": e.to_string() }
                })),
            )
                .into_response();
        }
    };

    let evidence = result
        .final_packed
        .iter()
        .map(|s| EvidenceEntry {
            doc_id: s.doc_id.clone(),
            fine_score: s.fine_score,
            f_h: s.f_h,
            f_u: s.f_u,
            f_g: s.f_g,
        })
        .collect();
    (
        StatusCode::OK,
        Json(AskResponse {
            answer: outcome.text,
            extracted: outcome.extracted,
            termination_reason: result.termination_reason,
            iterations: result.traces.len(),
            evidence,
        }),
    )
        .into_response()
}

/// 200 when the index is loaded and every backend is reachable. Scripted
/// backends are always reachable; HTTP endpoints are probed and any
/// response, success or error status, counts as reachable.
async fn healthz(State(engine): State<Arc<Engine>>) -> Response {
    let mut unreachable = Vec::new();
    for (name, url) in engine.gateway.profile_urls() {
        if url.starts_with("mock://") {
            continue;
        }
        let client = match reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(2))
            .build()
        {
            Ok(client) => client,
            Err(_) => {
                unreachable.push(name);
                continue;
            }
        };
        if client.head(&url).send().await.is_err() {
            unreachable.push(name);
        }
    }
    if unreachable.is_empty() {
        (StatusCode::OK, Json(json!({ "status": "ok", "docs": engine.index.doc_count() })))
            .into_response()
    } else {
        (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "unreachable", "profiles": unreachable })),
        )
            .into_response()
    }
}
