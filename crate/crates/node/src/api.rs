//! HTTP/JSON routes over [`Node`].

use std::collections::HashMap;
use std::sync::Arc;

use aidchain_core::ledger::Transaction;
use aidchain_core::{Address, Digest};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

use crate::auth::{NONCE_HEADER, SENDER_HEADER, SIGNATURE_HEADER};
use crate::registry::{ActorRecord, Role};
use crate::service::{EventFilter, Node, NodeError};

impl NodeError {
    pub fn status(&self) -> StatusCode {
        match self {
            NodeError::BadRequest(_) | NodeError::BadFilter(_) => StatusCode::BAD_REQUEST,
            NodeError::Unauthorized(_) => StatusCode::UNAUTHORIZED,
            NodeError::Forbidden(_) => StatusCode::FORBIDDEN,
            NodeError::NotFound(_) => StatusCode::NOT_FOUND,
            NodeError::BadNonce { .. }
            | NodeError::StaleRequestNonce { .. }
            | NodeError::DuplicateTransaction(_)
            | NodeError::DuplicateKey(_)
            | NodeError::SecondOrganization => StatusCode::CONFLICT,
            NodeError::BadSignature(_)
            | NodeError::Contract(_)
            | NodeError::NoRegisteredAccount(_)
            | NodeError::NoAllowances(_) => StatusCode::UNPROCESSABLE_ENTITY,
            NodeError::MempoolFull(_) => StatusCode::SERVICE_UNAVAILABLE,
            NodeError::Startup(_) | NodeError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body: `{"error": code, "message": text}` plus detail fields for
/// nonce and contract errors.
impl IntoResponse for NodeError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        match &self {
            NodeError::BadNonce { expected, got } => {
                body["expected"] = json!(expected);
                body["got"] = json!(got);
            }
            NodeError::StaleRequestNonce { last, got } => {
                body["last"] = json!(last);
                body["got"] = json!(got);
            }
            NodeError::Contract(e) => {
                body["reason"] = json!(e.code());
            }
            _ => {}
        }
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, NodeError>;

pub fn router(node: Arc<Node>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any);
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/actors", post(register_actor).get(list_actors))
        .route("/v1/actors/{address}", get(get_actor))
        .route("/v1/nonces/{address}", get(nonces))
        .route("/v1/txs", post(submit_tx))
        .route("/v1/txs/{hash}", get(get_tx))
        .route("/v1/balances/{address}", get(balance))
        .route("/v1/events", get(events))
        .route("/v1/blocks/{height}", get(block))
        .route("/v1/settlements/{address}", post(settlement))
        .layer(cors)
        .with_state(node)
}

fn header<'a>(headers: &'a HeaderMap, name: &str) -> Result<&'a str, NodeError> {
    headers
        .get(name)
        .ok_or_else(|| NodeError::Unauthorized(format!("missing {name} header")))?
        .to_str()
        .map_err(|_| NodeError::Unauthorized(format!("{name} is not ASCII")))
}

fn authenticate(node: &Node, method: &Method, uri: &Uri, headers: &HeaderMap, body: &[u8]) -> Result<ActorRecord, NodeError> {
    let sender: Address = header(headers, SENDER_HEADER)?
        .parse()
        .map_err(|e| NodeError::Unauthorized(format!("{SENDER_HEADER}: {e}")))?;
    let nonce: u64 = header(headers, NONCE_HEADER)?
        .parse()
        .map_err(|e| NodeError::Unauthorized(format!("{NONCE_HEADER}: {e}")))?;
    let signature = hex::decode(header(headers, SIGNATURE_HEADER)?.trim_start_matches("0x"))
        .map_err(|e| NodeError::Unauthorized(format!("{SIGNATURE_HEADER}: {e}")))?;
    node.authenticate(method.as_str(), uri.path(), &sender, nonce, body, &signature)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, NodeError> {
    serde_json::from_slice(body).map_err(|e| NodeError::BadRequest(format!("invalid JSON body: {e}")))
}

fn parse_address(s: &str) -> Result<Address, NodeError> {
    s.parse().map_err(|e| NodeError::BadRequest(format!("address {s:?}: {e}")))
}

async fn health(State(node): State<Arc<Node>>) -> impl IntoResponse {
    Json(node.health())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisterActorRequest {
    pub public_key: String,
    pub role: Role,
    pub display_name: String,
}

async fn register_actor(
    State(node): State<Arc<Node>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<ActorRecord>), NodeError> {
    let caller = authenticate(&node, &method, &uri, &headers, &body)?;
    let req: RegisterActorRequest = parse_json(&body)?;
    let record = node.register_actor(&caller, &req.public_key, req.role, &req.display_name)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_actors(State(node): State<Arc<Node>>) -> impl IntoResponse {
    Json(node.actors())
}

async fn get_actor(State(node): State<Arc<Node>>, Path(address): Path<String>) -> Result<impl IntoResponse, NodeError> {
    let address = parse_address(&address)?;
    node.actor(&address)
        .map(Json)
        .ok_or_else(|| NodeError::NotFound(format!("no actor {address}")))
}

async fn nonces(State(node): State<Arc<Node>>, Path(address): Path<String>) -> Result<impl IntoResponse, NodeError> {
    Ok(Json(node.nonces(&parse_address(&address)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub tx_hash: Digest,
}

async fn submit_tx(
    State(node): State<Arc<Node>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<SubmitResponse>), NodeError> {
    let caller = authenticate(&node, &method, &uri, &headers, &body)?;
    let tx: Transaction = parse_json(&body)?;
    let tx_hash = node.submit_transaction(&caller, tx)?;
    Ok((StatusCode::ACCEPTED, Json(SubmitResponse { tx_hash })))
}

async fn get_tx(State(node): State<Arc<Node>>, Path(hash): Path<String>) -> Result<impl IntoResponse, NodeError> {
    let hash: Digest = hash
        .parse()
        .map_err(|e| NodeError::BadRequest(format!("hash {hash:?}: {e}")))?;
    Ok(Json(node.transaction(&hash)?))
}

async fn balance(
    State(node): State<Arc<Node>>,
    Path(address): Path<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
) -> Result<impl IntoResponse, NodeError> {
    let caller = authenticate(&node, &method, &uri, &headers, &[])?;
    Ok(Json(node.query_balance(&caller, &parse_address(&address)?)?))
}

fn parse_filter(params: &HashMap<String, String>) -> Result<EventFilter, NodeError> {
    let mut filter = EventFilter::default();
    for (k, v) in params {
        if v.is_empty() {
            continue;
        }
        let bad = |e: String| NodeError::BadFilter(format!("{k}: {e}"));
        match k.as_str() {
            "kind" => filter.kind = Some(v.parse().map_err(bad)?),
            "address" => filter.address = Some(v.parse().map_err(|e: aidchain_core::types::ParseError| bad(e.to_string()))?),
            "from" => filter.from = Some(v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
            "to" => filter.to = Some(v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
            other => return Err(NodeError::BadFilter(format!("unknown filter {other:?}"))),
        }
    }
    Ok(filter)
}

async fn events(State(node): State<Arc<Node>>, Query(params): Query<HashMap<String, String>>) -> ApiResult<Vec<crate::views::EventView>> {
    Ok(Json(node.query_events(&parse_filter(&params)?)?))
}

async fn block(State(node): State<Arc<Node>>, Path(height): Path<String>) -> Result<impl IntoResponse, NodeError> {
    let height: u64 = height
        .parse()
        .map_err(|_| NodeError::BadRequest(format!("height {height:?} is not a number")))?;
    Ok(Json(node.block(height)?))
}

async fn settlement(
    State(node): State<Arc<Node>>,
    Path(address): Path<String>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, NodeError> {
    let caller = authenticate(&node, &method, &uri, &headers, &body)?;
    Ok(Json(node.export_settlement(&caller, &parse_address(&address)?)?))
}
