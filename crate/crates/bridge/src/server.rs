//! Websocket service. The simulation runs in its own task and talks to
//! connection tasks only through queues: commands come in on an mpsc
//! queue, frames go out on a broadcast channel as encoded text, errors go
//! back to the one client that caused them.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use crate::protocol::{decode_command, encode_frame, ServerMessage};
use crate::session::CockpitSession;

pub const TICK: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("cannot listen on {addr}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server failed: {0}")]
    Serve(#[from] std::io::Error),
}

type ClientId = u64;

enum Inbound {
    Connect { id: ClientId, reply: mpsc::UnboundedSender<String> },
    Text { id: ClientId, text: String },
    Disconnect { id: ClientId },
}

#[derive(Clone)]
struct Shared {
    inbound: mpsc::UnboundedSender<Inbound>,
    frames: broadcast::Sender<Arc<str>>,
    next_id: Arc<std::sync::atomic::AtomicU64>,
}

/// A bound but not yet running bridge.
pub struct Bridge {
    listener: TcpListener,
    session: CockpitSession,
}

impl Bridge {
    pub async fn bind(addr: SocketAddr, session: CockpitSession) -> Result<Self, BridgeError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| BridgeError::Bind { addr, source })?;
        Ok(Self { listener, session })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serves until `shutdown` resolves.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), BridgeError> {
        let (inbound, rx) = mpsc::unbounded_channel();
        let (frames, _) = broadcast::channel(64);
        let shared = Shared {
            inbound,
            frames: frames.clone(),
            next_id: Arc::default(),
        };
        let (stop_sim, sim_stopped) = oneshot::channel();
        let sim = tokio::spawn(sim_loop(self.session, rx, frames, sim_stopped));
        let app = Router::new()
            .route("/teleop", get(upgrade))
            .route("/", get(index))
            .with_state(shared);
        let served = axum::serve(self.listener, app).with_graceful_shutdown(shutdown).await;
        let _ = stop_sim.send(());
        let _ = sim.await;
        Ok(served?)
    }
}

async fn index() -> Html<&'static str> {
    Html(concat!(
        "<!doctype html><title>teleop bridge</title>",
        "<p>Connect a cockpit to the <code>/teleop</code> websocket.</p>"
    ))
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(socket: WebSocket, shared: Shared) {
    let id = shared.next_id.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let (reply_tx, mut replies) = mpsc::unbounded_channel();
    let mut frames = shared.frames.subscribe();
    if shared.inbound.send(Inbound::Connect { id, reply: reply_tx }).is_err() {
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let writer = async {
        loop {
            let text = tokio::select! {
                frame = frames.recv() => match frame {
                    Ok(text) => text.to_string(),
                    // a slow client just misses frames
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                reply = replies.recv() => match reply {
                    Some(text) => text,
                    None => break,
                },
            };
            if sink.send(Message::Text(text)).await.is_err() {
                break;
            }
        }
    };
    let reader = async {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Text(text) => {
                    if shared.inbound.send(Inbound::Text { id, text }).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    let _ = shared.inbound.send(Inbound::Disconnect { id });
}

/// Connected clients in arrival order; the first one drives.
#[derive(Default)]
struct Clients {
    list: Vec<(ClientId, mpsc::UnboundedSender<String>)>,
}

impl Clients {
    fn controller(&self) -> Option<ClientId> {
        self.list.first().map(|(id, _)| *id)
    }

    fn reply(&self, id: ClientId, msg: &ServerMessage) {
        if let Some((_, tx)) = self.list.iter().find(|(c, _)| *c == id) {
            let _ = tx.send(encode_frame(msg));
        }
    }
}

async fn sim_loop(
    mut session: CockpitSession,
    mut inbound: mpsc::UnboundedReceiver<Inbound>,
    frames: broadcast::Sender<Arc<str>>,
    mut stop: oneshot::Receiver<()>,
) {
    let mut clients = Clients::default();
    let mut ticker = tokio::time::interval(TICK);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let publish = |msg: &ServerMessage| {
        // no receivers is fine
        let _ = frames.send(Arc::from(encode_frame(msg)));
    };
    loop {
        tokio::select! {
            _ = &mut stop => break,
            _ = ticker.tick() => match session.tick() {
                Ok(frame) => publish(&ServerMessage::Frame(frame)),
                Err(e) => {
                    tracing::error!("simulation step failed: {e}");
                    publish(&ServerMessage::error(None, format!("simulation stopped: {e}; restarting")));
                    if let Err(e) = session.restart(session.mode()) {
                        tracing::error!("restart failed: {e}");
                        break;
                    }
                }
            },
            event = inbound.recv() => match event {
                None => break,
                Some(Inbound::Connect { id, reply }) => {
                    clients.list.push((id, reply));
                    if clients.controller() == Some(id) {
                        session.new_controller();
                    }
                }
                Some(Inbound::Disconnect { id }) => {
                    let was_controller = clients.controller() == Some(id);
                    clients.list.retain(|(c, _)| *c != id);
                    if was_controller {
                        session.new_controller();
                    }
                }
                Some(Inbound::Text { id, text }) => {
                    let msg = match decode_command(&text) {
                        Ok(m) => m,
                        Err(e) => {
                            clients.reply(id, &ServerMessage::error(None, e.to_string()));
                            continue;
                        }
                    };
                    if clients.controller() != Some(id) {
                        clients.reply(id, &ServerMessage::error(Some(msg.seq()), "another client holds control"));
                        continue;
                    }
                    match session.handle(msg) {
                        Ok(Some(frame)) => publish(&ServerMessage::Frame(frame)),
                        Ok(None) => {}
                        Err(e) => clients.reply(id, &ServerMessage::error(Some(msg.seq()), e.to_string())),
                    }
                }
            },
        }
    }
}
