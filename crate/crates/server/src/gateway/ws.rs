//! WebSocket push for group chat.
//!
//! Each connection owns one bounded outbound queue. Acks and group messages
//! share that queue, and posts are published while the store write lock is
//! held, so a subscriber sees exactly the messages after the seq in its
//! `subscribed` ack, in order. A connection whose queue overflows is closed;
//! the client reconnects and backfills with `since`.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message as WsMessage, WebSocket};
use futures::{SinkExt, StreamExt};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Notify};

use super::Gateway;
use crate::constellation::Message;

const CLOSE_GOING_AWAY: u16 = 1001;
const CLOSE_TRY_AGAIN_LATER: u16 = 1013;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Subscribe { group_id: String },
    Unsubscribe { group_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    GroupMessage {
        group_id: String,
        seq: u64,
        message_id: String,
        sender: String,
        body: String,
        timestamp: i64,
    },
    /// Live delivery starts after `seq`; earlier messages come from `since`.
    Subscribed { group_id: String, seq: u64 },
    Unsubscribed { group_id: String },
    Error {
        code: String,
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        group_id: Option<String>,
    },
}

impl ServerFrame {
    fn error(code: &str, message: impl Into<String>, group_id: Option<&str>) -> Self {
        ServerFrame::Error {
            code: code.to_string(),
            message: message.into(),
            group_id: group_id.map(str::to_string),
        }
    }
}

impl From<&Message> for ServerFrame {
    fn from(m: &Message) -> Self {
        ServerFrame::GroupMessage {
            group_id: m.group_id.clone(),
            seq: m.seq,
            message_id: m.message_id.clone(),
            sender: m.sender.clone(),
            body: m.body.clone(),
            timestamp: m.timestamp,
        }
    }
}

struct Kill {
    notify: Notify,
    code: AtomicU16,
}

struct Conn {
    email: String,
    tx: mpsc::Sender<ServerFrame>,
    kill: Arc<Kill>,
    groups: BTreeSet<String>,
}

#[derive(Default)]
struct HubInner {
    next_id: u64,
    conns: HashMap<u64, Conn>,
    groups: HashMap<String, BTreeSet<u64>>,
}

impl HubInner {
    fn evict(&mut self, id: u64, code: u16) {
        if let Some(conn) = self.conns.remove(&id) {
            for g in &conn.groups {
                if let Some(set) = self.groups.get_mut(g) {
                    set.remove(&id);
                    if set.is_empty() {
                        self.groups.remove(g);
                    }
                }
            }
            conn.kill.code.store(code, Ordering::SeqCst);
            conn.kill.notify.notify_one();
        }
    }

    /// Queues a frame; an overflowing connection is evicted.
    fn send(&mut self, id: u64, frame: ServerFrame) {
        let Some(conn) = self.conns.get(&id) else { return };
        if conn.tx.try_send(frame).is_err() {
            self.evict(id, CLOSE_TRY_AGAIN_LATER);
        }
    }

    fn unsubscribe(&mut self, id: u64, group_id: &str) {
        if let Some(conn) = self.conns.get_mut(&id) {
            conn.groups.remove(group_id);
        }
        if let Some(set) = self.groups.get_mut(group_id) {
            set.remove(&id);
            if set.is_empty() {
                self.groups.remove(group_id);
            }
        }
    }
}

pub(crate) struct Hub {
    queue: usize,
    inner: Mutex<HubInner>,
}

impl Hub {
    pub(crate) fn new(queue: usize) -> Self {
        Hub {
            queue: queue.max(1),
            inner: Mutex::new(HubInner::default()),
        }
    }

    fn register(&self, email: &str) -> (u64, mpsc::Receiver<ServerFrame>, Arc<Kill>) {
        let (tx, rx) = mpsc::channel(self.queue);
        let kill = Arc::new(Kill {
            notify: Notify::new(),
            code: AtomicU16::new(CLOSE_GOING_AWAY),
        });
        let mut inner = self.inner.lock();
        inner.next_id += 1;
        let id = inner.next_id;
        inner.conns.insert(
            id,
            Conn {
                email: email.to_string(),
                tx,
                kill: kill.clone(),
                groups: BTreeSet::new(),
            },
        );
        (id, rx, kill)
    }

    fn deregister(&self, id: u64) {
        let mut inner = self.inner.lock();
        inner.evict(id, CLOSE_GOING_AWAY);
    }

    fn send(&self, id: u64, frame: ServerFrame) {
        self.inner.lock().send(id, frame);
    }

    /// Must be called with the store lock held (read or write).
    fn subscribe(&self, id: u64, group_id: &str, seq: u64) {
        let mut inner = self.inner.lock();
        let Some(conn) = inner.conns.get_mut(&id) else { return };
        conn.groups.insert(group_id.to_string());
        inner.groups.entry(group_id.to_string()).or_default().insert(id);
        inner.send(
            id,
            ServerFrame::Subscribed {
                group_id: group_id.to_string(),
                seq,
            },
        );
    }

    fn unsubscribe(&self, id: u64, group_id: &str) {
        let mut inner = self.inner.lock();
        inner.unsubscribe(id, group_id);
        inner.send(
            id,
            ServerFrame::Unsubscribed {
                group_id: group_id.to_string(),
            },
        );
    }

    /// Must be called with the store write lock held.
    pub(crate) fn publish(&self, msg: &Message) {
        let mut inner = self.inner.lock();
        let Some(ids) = inner.groups.get(&msg.group_id) else { return };
        let ids: Vec<u64> = ids.iter().copied().collect();
        let frame = ServerFrame::from(msg);
        for id in ids {
            inner.send(id, frame.clone());
        }
    }

    /// Ends every subscription `email` holds on `group_id`.
    pub(crate) fn drop_member(&self, group_id: &str, email: &str) {
        let mut inner = self.inner.lock();
        let ids: Vec<u64> = inner
            .groups
            .get(group_id)
            .map(|set| {
                set.iter()
                    .copied()
                    .filter(|id| inner.conns.get(id).is_some_and(|c| c.email == email))
                    .collect()
            })
            .unwrap_or_default();
        for id in ids {
            inner.unsubscribe(id, group_id);
            inner.send(
                id,
                ServerFrame::Unsubscribed {
                    group_id: group_id.to_string(),
                },
            );
        }
    }

    pub(crate) fn close_all(&self) {
        let mut inner = self.inner.lock();
        let ids: Vec<u64> = inner.conns.keys().copied().collect();
        for id in ids {
            inner.evict(id, CLOSE_GOING_AWAY);
        }
    }

    #[cfg(test)]
    fn subscribers(&self, group_id: &str) -> usize {
        self.inner.lock().groups.get(group_id).map_or(0, BTreeSet::len)
    }
}

impl Gateway {
    fn handle_frame(&self, conn: u64, email: &str, text: &str) {
        let frame = match serde_json::from_str::<ClientFrame>(text) {
            Ok(f) => f,
            Err(e) => {
                self.hub.send(conn, ServerFrame::error("BadFrame", e.to_string(), None));
                return;
            }
        };
        match frame {
            ClientFrame::Subscribe { group_id } => {
                // The read lock keeps posts out until the subscription is in place.
                let store = self.store.read();
                let constellation = &store.state().constellation;
                match constellation.group(&group_id) {
                    Some(g) if g.is_member(email) => {
                        let seq = constellation.last_seq(&group_id).unwrap_or(0);
                        self.hub.subscribe(conn, &group_id, seq);
                    }
                    found => {
                        let why = if found.is_some() {
                            "not a member of this group"
                        } else {
                            "group not found"
                        };
                        self.hub
                            .send(conn, ServerFrame::error("SubscribeRefused", why, Some(&group_id)));
                    }
                }
            }
            ClientFrame::Unsubscribe { group_id } => self.hub.unsubscribe(conn, &group_id),
        }
    }

    pub(crate) async fn run_socket(self: Arc<Self>, email: String, socket: WebSocket) {
        let (conn, mut rx, kill) = self.hub.register(&email);
        let (mut sink, mut stream) = socket.split();
        loop {
            tokio::select! {
                frame = rx.recv() => {
                    let Some(frame) = frame else { break };
                    let text = serde_json::to_string(&frame).expect("frame serializes");
                    if sink.send(WsMessage::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                incoming = stream.next() => match incoming {
                    Some(Ok(WsMessage::Text(text))) => self.handle_frame(conn, &email, text.as_str()),
                    Some(Ok(WsMessage::Binary(_))) => {
                        self.hub.send(conn, ServerFrame::error("BadFrame", "expected a JSON text frame", None));
                    }
                    Some(Ok(WsMessage::Close(_))) | Some(Err(_)) | None => break,
                    Some(Ok(_)) => {}
                },
                _ = kill.notify.notified() => {
                    let code = kill.code.load(Ordering::SeqCst);
                    let reason = if code == CLOSE_TRY_AGAIN_LATER { "outbound queue full" } else { "server closing" };
                    let _ = sink
                        .send(WsMessage::Close(Some(CloseFrame { code, reason: reason.into() })))
                        .await;
                    break;
                }
            }
        }
        self.hub.deregister(conn);
    }
}
