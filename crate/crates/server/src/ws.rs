use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures_util::{SinkExt, StreamExt};
use molscope_core::embed::Interaction;
use tokio::sync::{broadcast, mpsc};

use crate::session::{Event, Session};
use crate::{ApiError, AppState};

pub async fn interact(
    ws: WebSocketUpgrade,
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.sessions.get(&id)?;
    Ok(ws.on_upgrade(move |socket| run(socket, session)))
}

async fn run(socket: WebSocket, session: Arc<Session>) {
    let (mut sink, mut stream) = socket.split();
    let mut events = session.events.subscribe();
    // replies meant only for this client (bad messages, not_ckpca)
    let (direct_tx, mut direct_rx) = mpsc::unbounded_channel::<Event>();

    let writer = tokio::spawn(async move {
        loop {
            let event = tokio::select! {
                received = events.recv() => match received {
                    Ok(e) => e,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                Some(e) = direct_rx.recv() => e,
            };
            let text = serde_json::to_string(&event).expect("event serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        session.touch();
        match serde_json::from_str::<Interaction>(&text) {
            Ok(m) if session.has_live_embedding() => session.mailbox.push(m),
            Ok(_) => {
                let _ = direct_tx.send(ApiError::not_ckpca().into());
            }
            Err(e) => {
                let _ = direct_tx.send(ApiError::new("invalid_message", e.to_string()).into());
            }
        }
    }
    writer.abort();
}
