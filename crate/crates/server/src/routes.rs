use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use molscope_core::analysis::{self, ClusterRequest, EmbedRequest, FingerprintRequest};
use molscope_core::docstore::{Document, FetchQuery, Filter, Limit, SummaryOpts};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::session::{Fingerprints, Session};
use crate::{ApiError, AppState};

/// JSON body whose rejections use the `{code, message}` error shape. An empty
/// body reads as `{}`.
pub struct Body<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::invalid_request(e.to_string()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(Body).map_err(|e| ApiError::invalid_request(e.to_string()))
    }
}

/// Runs CPU-heavy work off the async threads.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new("internal", e.to_string()))?
}

pub async fn list_collections(State(state): State<Arc<AppState>>) -> impl IntoResponse {
    Json(state.store.collection_infos())
}

pub async fn collection_fields(
    State(state): State<Arc<AppState>>,
    Path(collection): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.store.fields(&collection)?))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryRequest {
    pub filter: Filter,
    /// Defaults to every field except `smiles`.
    pub fields: Option<Vec<String>>,
    pub opts: SummaryOpts,
}

pub async fn summarize(
    State(state): State<Arc<AppState>>,
    Path(collection): Path<String>,
    Body(req): Body<SummaryRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let fields = match req.fields {
        Some(f) => f,
        None => state.store.fields(&collection)?.into_iter().map(|f| f.name).filter(|n| n != "smiles").collect(),
    };
    let summaries = blocking(move || Ok(state.store.summarize(&collection, &fields, &req.filter, &req.opts)?)).await?;
    Ok(Json(summaries))
}

pub async fn fetch(
    State(state): State<Arc<AppState>>,
    Path(collection): Path<String>,
    Body(query): Body<FetchQuery>,
) -> Result<Json<Vec<Document>>, ApiError> {
    Ok(Json(state.store.fetch(&collection, &query)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub collection: String,
    #[serde(default)]
    pub filter: Filter,
    #[serde(default)]
    pub limit: Limit,
}

#[derive(Debug, Serialize)]
pub struct SessionCreated {
    pub id: String,
    pub count: usize,
}

pub async fn create_session(
    State(state): State<Arc<AppState>>,
    Body(req): Body<CreateSession>,
) -> Result<Response, ApiError> {
    let query = FetchQuery { filter: req.filter, fields: None, limit: req.limit };
    let docs = state.store.fetch(&req.collection, &query)?;
    let session = state.sessions.insert(req.collection, docs);
    let body = SessionCreated { id: session.id.clone(), count: session.docs.len() };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

#[derive(Debug, Serialize)]
pub struct SessionInfo<'a> {
    pub id: &'a str,
    pub collection: &'a str,
    pub count: usize,
    pub documents: &'a [Document],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprints: Option<&'a analysis::FingerprintStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering: Option<&'a analysis::ClusterResponse>,
}

pub async fn session_info(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let data = session.data();
    let info = SessionInfo {
        id: &session.id,
        collection: &session.collection,
        count: session.docs.len(),
        documents: &session.docs,
        fingerprints: data.fingerprints.as_ref().map(|f| &f.stats),
        clustering: data.clustering.as_ref(),
    };
    Ok(Json(info).into_response())
}

pub async fn fingerprint(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(req): Body<FingerprintRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.sessions.get(&id)?;
    let stats = blocking(move || {
        let spec = req.spec()?;
        let (records, stats) = analysis::fingerprint_documents(&session.docs, &spec)?;
        let features = analysis::features(&records)?;
        session.data().set_fingerprints(Fingerprints { records, features, stats: stats.clone() });
        Ok(stats)
    })
    .await?;
    Ok(Json(stats))
}

/// Per-molecule bit lists, in session order.
pub async fn fingerprints(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let data = session.data();
    let fps = data.fingerprints.as_ref().ok_or_else(ApiError::fingerprints_missing)?;
    Ok(Json(&fps.records).into_response())
}

fn with_features<T>(session: &Session, f: impl FnOnce(&molscope_core::embed::FeatureSet) -> Result<T, ApiError>) -> Result<T, ApiError> {
    let data = session.data();
    let fps = data.fingerprints.as_ref().ok_or_else(ApiError::fingerprints_missing)?;
    f(&fps.features)
}

pub async fn cluster(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(req): Body<ClusterRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.sessions.get(&id)?;
    let response = blocking(move || {
        let response = with_features(&session, |f| Ok(analysis::cluster(f, &req)?))?;
        session.data().clustering = Some(response.clone());
        Ok(response)
    })
    .await?;
    Ok(Json(response))
}

pub async fn embed(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Body(req): Body<EmbedRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let session = state.sessions.get(&id)?;
    let response = blocking(move || {
        // the solve runs under the session lock so it never overlaps an interaction
        let mut data = session.data();
        let fps = data.fingerprints.as_ref().ok_or_else(ApiError::fingerprints_missing)?;
        let outcome = analysis::embed(&fps.features, &req)?;
        Ok(data.install(outcome.response, outcome.session))
    })
    .await?;
    Ok(Json(response))
}

pub async fn current_embedding(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    let data = session.data();
    match &data.embedding {
        Some(e) => Ok(Json(e).into_response()),
        None => Err(ApiError::new("no_embedding", "this session has no embedding yet")),
    }
}

#[derive(Debug, Deserialize)]
pub struct SearchQuery {
    #[serde(default)]
    pub q: String,
}

#[derive(Debug, Serialize)]
pub struct SearchHit {
    pub index: usize,
    pub id: String,
    pub smiles: String,
}

pub async fn search(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<SearchQuery>,
) -> Result<Json<Vec<SearchHit>>, ApiError> {
    let session = state.sessions.get(&id)?;
    let hits = session
        .docs
        .iter()
        .enumerate()
        .filter(|(_, d)| d.id.contains(&query.q) || d.smiles().contains(&query.q))
        .map(|(index, d)| SearchHit { index, id: d.id.clone(), smiles: d.smiles().to_string() })
        .collect();
    Ok(Json(hits))
}

pub async fn delete_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    state.sessions.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn not_found() -> ApiError {
    ApiError::new("not_found", "no such route")
}
