use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use futures_util::{SinkExt, StreamExt};
use http_body_util::BodyExt;
use molscope_core::docstore::{Document, Format, Store, Value};
use molscope_server::{router, AppState, ServerConfig};
use serde_json::{json, Value as Json};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

const FIXTURE: &str = include_str!("../../../fixtures/molecules_300.csv");

fn state_with_fixture() -> Arc<AppState> {
    let store = Store::in_memory();
    store.ingest("mols", FIXTURE.as_bytes(), Format::Csv).unwrap();
    // 1000 documents for sampling
    let big: Vec<Document> = (0..1000)
        .map(|i| Document::new(format!("b{i}"), "CCO").with("rank", Value::Number(i as f64)))
        .collect();
    store.insert("big", big).unwrap();
    AppState::new(Arc::new(store), ServerConfig::default())
}

async fn call(state: &Arc<AppState>, method: Method, uri: &str, body: Option<Json>) -> (StatusCode, Json) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = if bytes.is_empty() { Json::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, json)
}

async fn post(state: &Arc<AppState>, uri: &str, body: Json) -> (StatusCode, Json) {
    call(state, Method::POST, uri, Some(body)).await
}

async fn get(state: &Arc<AppState>, uri: &str) -> (StatusCode, Json) {
    call(state, Method::GET, uri, None).await
}

/// Creates a session over the first `n` fixture molecules with path fingerprints.
async fn fingerprinted_session(state: &Arc<AppState>, n: usize) -> String {
    let (s, created) = post(state, "/sessions", json!({"collection": "mols", "limit": {"mode": "first", "n": n}})).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = created["id"].as_str().unwrap().to_string();
    let (s, stats) = post(state, &format!("/sessions/{id}/fingerprint"), json!({"method": "hashed_path"})).await;
    assert_eq!(s, StatusCode::OK, "{stats}");
    id
}

fn coords(v: &Json) -> Vec<[f64; 2]> {
    serde_json::from_value(v.clone()).unwrap()
}

fn max_diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    a.iter().zip(b).flat_map(|(p, q)| [(p[0] - q[0]).abs(), (p[1] - q[1]).abs()]).fold(0.0, f64::max)
}

#[tokio::test]
async fn collections_fields_and_summary() {
    let state = state_with_fixture();
    let (s, list) = get(&state, "/collections").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list, json!([{"name": "big", "size": 1000}, {"name": "mols", "size": 300}]));
    let (_, fields) = get(&state, "/collections/mols/fields").await;
    let mass = fields.as_array().unwrap().iter().find(|f| f["name"] == "mass").unwrap();
    assert_eq!(mass["type"], "number");
    let (s, summary) = post(&state, "/collections/mols/summary", json!({"fields": ["mass"], "filter": {"scaffold": "benzene"}})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary[0]["kind"], "numeric");
    assert!(summary[0]["count"].as_u64().unwrap() > 10);
    let (s, docs) = post(&state, "/collections/mols/fetch", json!({"filter": {"mass": {"$lt": 80}}, "fields": ["mass"]})).await;
    assert_eq!(s, StatusCode::OK);
    for d in docs.as_array().unwrap() {
        assert!(d["mass"].as_f64().unwrap() < 80.0);
        assert!(d.get("logp").is_none());
    }
}

#[tokio::test]
async fn sampled_session_has_requested_size() {
    let state = state_with_fixture();
    let (s, created) = post(&state, "/sessions", json!({"collection": "big", "filter": {}, "limit": {"mode": "sample", "n": 300, "seed": 5}})).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["count"], 300);
}

#[tokio::test]
async fn error_mapping() {
    let state = state_with_fixture();
    let (s, body) = get(&state, "/collections/nope/fields").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_collection");
    assert!(body["message"].is_string());
    let (s, body) = post(&state, "/sessions", json!({"collection": "nope"})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_collection")));
    let (s, body) = get(&state, "/sessions/missing/embedding").await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));

    let (_, created) = post(&state, "/sessions", json!({"collection": "mols", "limit": {"mode": "first", "n": 20}})).await;
    let id = created["id"].as_str().unwrap();
    let (s, body) = post(&state, &format!("/sessions/{id}/cluster"), json!({"algo": "kmeans", "k": 3})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::CONFLICT, Some("fingerprints_missing")));
    let (s, body) = post(&state, &format!("/sessions/{id}/embed"), json!({"method": "pca"})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::CONFLICT, Some("fingerprints_missing")));

    post(&state, &format!("/sessions/{id}/fingerprint"), json!({"method": "atmo_keys"})).await;
    let (s, body) = post(&state, &format!("/sessions/{id}/cluster"), json!({"algo": "kmeans", "k": 21})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("k_too_large")));
    let (s, body) = post(&state, &format!("/sessions/{id}/cluster"), json!({"algo": "kmeans", "k": "three"})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_request")));
    let (s, body) = post(&state, "/collections/mols/summary", json!({"filter": {"$bogus": 1}})).await;
    assert_eq!((s, body["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("invalid_request")));
    let (s, _) = get(&state, "/no/such/route").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cluster_embed_search_and_teardown() {
    let state = state_with_fixture();
    let id = fingerprinted_session(&state, 60).await;
    let (s, c) = post(&state, &format!("/sessions/{id}/cluster"), json!({"algo": "agglomerative", "k": 4, "linkage": "average"})).await;
    assert_eq!(s, StatusCode::OK, "{c}");
    assert_eq!(c["labels"].as_array().unwrap().len(), 60);
    assert!(c["validity"]["silhouette"].is_number());

    let (_, kpca) = post(&state, &format!("/sessions/{id}/embed"), json!({"method": "kpca", "kernel": "rbf"})).await;
    let (s, ckpca) = post(&state, &format!("/sessions/{id}/embed"), json!({"method": "ckpca", "kernel": "rbf"})).await;
    assert_eq!(s, StatusCode::OK, "{ckpca}");
    assert!(max_diff(&coords(&kpca["coords"]), &coords(&ckpca["coords"])) < 1e-8);
    assert!(ckpca["version"].as_u64() > kpca["version"].as_u64());
    assert!(ckpca["quality"]["trustworthiness"].is_number());

    let (_, hits) = get(&state, &format!("/sessions/{id}/search?q=c1ccc")).await;
    let hits = hits.as_array().unwrap();
    assert!(!hits.is_empty());
    assert!(hits.iter().all(|h| h["smiles"].as_str().unwrap().contains("c1ccc")));
    let (_, by_id) = get(&state, &format!("/sessions/{id}/search?q=mol-007")).await;
    assert_eq!(by_id.as_array().unwrap().len(), 1);

    let (s, _) = call(&state, Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = get(&state, &format!("/sessions/{id}/embedding")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let state = state_with_fixture();
    let (_, a) = post(&state, "/sessions", json!({"collection": "mols"})).await;
    assert_eq!(state.sessions.len(), 1);
    assert_eq!(state.sessions.evict_idle(Instant::now(), Duration::from_secs(3600)), 0);
    let later = Instant::now() + Duration::from_secs(2);
    assert_eq!(state.sessions.evict_idle(later, Duration::from_secs(1)), 1);
    let (s, _) = get(&state, &format!("/sessions/{}", a["id"].as_str().unwrap())).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

// ------------------------------------------------------------------ websocket

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn spawn_server(state: Arc<AppState>) -> std::net::SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    addr
}

async fn connect(addr: std::net::SocketAddr, id: &str) -> Socket {
    tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/interact")).await.unwrap().0
}

async fn send(ws: &mut Socket, msg: Json) {
    ws.send(Message::Text(msg.to_string().into())).await.unwrap();
}

async fn next_event(ws: &mut Socket) -> Json {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next()).await.expect("event in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn ckpca_session(state: &Arc<AppState>, n: usize) -> (String, Vec<[f64; 2]>) {
    let id = fingerprinted_session(state, n).await;
    let (s, e) = post(state, &format!("/sessions/{id}/embed"), json!({"method": "ckpca", "kernel": "rbf"})).await;
    assert_eq!(s, StatusCode::OK, "{e}");
    (id, coords(&e["coords"]))
}

fn diameter(c: &[[f64; 2]]) -> f64 {
    let mut best = 0.0f64;
    for a in c {
        for b in c {
            best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
        }
    }
    best
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pinning_a_point_in_place_barely_moves_anything() {
    let state = state_with_fixture();
    let (id, base) = ckpca_session(&state, 80).await;
    let addr = spawn_server(state.clone()).await;
    let mut ws = connect(addr, &id).await;
    send(&mut ws, json!({"type": "add_control", "index": 5, "x": base[5][0], "y": base[5][1]})).await;
    let ev = next_event(&mut ws).await;
    assert_eq!(ev["type"], "embedding");
    let moved = coords(&ev["coords"]);
    assert!(max_diff(&moved, &base) < 1e-3 * diameter(&base), "{}", max_diff(&moved, &base));
    assert_eq!(ev["constraints"]["control_points"][0]["index"], 5);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rapid_moves_coalesce_and_the_last_target_wins() {
    let state = state_with_fixture();
    let (id, base) = ckpca_session(&state, 80).await;
    let addr = spawn_server(state.clone()).await;
    let mut ws = connect(addr, &id).await;
    send(&mut ws, json!({"type": "add_control", "index": 3, "x": base[3][0], "y": base[3][1]})).await;
    let first = next_event(&mut ws).await;
    let mut last_version = first["version"].as_u64().unwrap();

    let target = |i: usize| [-0.9 + 0.018 * i as f64, 0.5 - 0.01 * i as f64];
    for i in 0..100 {
        let [x, y] = target(i);
        send(&mut ws, json!({"type": "move_control", "index": 3, "x": x, "y": y})).await;
    }
    let mut events = 0;
    let want = target(99);
    loop {
        let ev = next_event(&mut ws).await;
        assert_eq!(ev["type"], "embedding", "{ev}");
        let v = ev["version"].as_u64().unwrap();
        assert!(v > last_version);
        last_version = v;
        events += 1;
        let cp = &ev["constraints"]["control_points"][0];
        if cp["x"].as_f64() == Some(want[0]) && cp["y"].as_f64() == Some(want[1]) {
            let (_, current) = get(&state, &format!("/sessions/{id}/embedding")).await;
            assert_eq!(current["version"], ev["version"]);
            assert_eq!(current["coords"], ev["coords"]);
            assert_eq!(current["constraints"], ev["constraints"]);
            break;
        }
    }
    assert!((1..=100).contains(&events), "{events}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn zero_strength_must_link_matches_no_link() {
    let state = state_with_fixture();
    let (id, base) = ckpca_session(&state, 60).await;
    let addr = spawn_server(state.clone()).await;
    let mut ws = connect(addr, &id).await;
    send(&mut ws, json!({"type": "add_control", "index": 0, "x": 0.8, "y": 0.8})).await;
    let without = coords(&next_event(&mut ws).await["coords"]);
    send(&mut ws, json!({"type": "add_link", "kind": "must", "i": 10, "j": 40})).await;
    let with = coords(&next_event(&mut ws).await["coords"]);
    assert!(max_diff(&with, &without) > 1e-6);
    send(&mut ws, json!({"type": "set_strength", "target": "must", "value": 0.0})).await;
    let zeroed = coords(&next_event(&mut ws).await["coords"]);
    assert!(max_diff(&zeroed, &without) < 1e-8);
    assert_ne!(base, zeroed);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn interaction_errors_come_back_as_events() {
    let state = state_with_fixture();
    let id = fingerprinted_session(&state, 40).await;
    post(&state, &format!("/sessions/{id}/embed"), json!({"method": "kpca"})).await;
    let addr = spawn_server(state.clone()).await;
    let mut ws = connect(addr, &id).await;
    send(&mut ws, json!({"type": "add_control", "index": 1, "x": 0.0, "y": 0.0})).await;
    let ev = next_event(&mut ws).await;
    assert_eq!((ev["type"].as_str(), ev["code"].as_str()), (Some("error"), Some("not_ckpca")));
    send(&mut ws, json!({"type": "wiggle"})).await;
    assert_eq!(next_event(&mut ws).await["code"], "invalid_message");

    post(&state, &format!("/sessions/{id}/embed"), json!({"method": "ckpca"})).await;
    send(&mut ws, json!({"type": "move_control", "index": 1, "x": 0.0, "y": 0.0})).await;
    assert_eq!(next_event(&mut ws).await["code"], "unknown_control");
    send(&mut ws, json!({"type": "add_control", "index": 400, "x": 0.0, "y": 0.0})).await;
    assert_eq!(next_event(&mut ws).await["code"], "invalid_constraints");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sessions_do_not_share_state() {
    let state = state_with_fixture();
    let (a, base_a) = ckpca_session(&state, 50).await;
    let (b, base_b) = ckpca_session(&state, 50).await;
    assert!(max_diff(&base_a, &base_b) < 1e-12);
    let addr = spawn_server(state.clone()).await;
    let mut wa = connect(addr, &a).await;
    let mut wb = connect(addr, &b).await;
    send(&mut wa, json!({"type": "add_control", "index": 2, "x": 0.9, "y": -0.9})).await;
    send(&mut wb, json!({"type": "add_control", "index": 7, "x": -0.5, "y": 0.5})).await;
    let ea = next_event(&mut wa).await;
    let eb = next_event(&mut wb).await;
    assert_eq!(ea["constraints"]["control_points"].as_array().unwrap().len(), 1);
    assert_eq!(ea["constraints"]["control_points"][0]["index"], 2);
    assert_eq!(eb["constraints"]["control_points"][0]["index"], 7);

    // replaying b's single message on a fresh session reproduces b exactly
    let (c, _) = ckpca_session(&state, 50).await;
    let mut wc = connect(addr, &c).await;
    send(&mut wc, json!({"type": "add_control", "index": 7, "x": -0.5, "y": 0.5})).await;
    let ec = next_event(&mut wc).await;
    assert_eq!(ec["coords"], eb["coords"]);
    assert_ne!(ea["coords"], eb["coords"]);
}
