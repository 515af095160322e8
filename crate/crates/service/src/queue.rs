use std::collections::VecDeque;
use std::sync::Mutex;

use neuroadapt::session::ServerMessage;
use tokio::sync::Notify;

/// Per-client outbound queue. When full, the oldest non-chat message is
/// dropped first; chat only goes when nothing else is left.
#[derive(Debug)]
pub struct FeedQueue {
    capacity: usize,
    inner: Mutex<Inner>,
    notify: Notify,
}

#[derive(Debug, Default)]
struct Inner {
    buf: VecDeque<ServerMessage>,
    dropped: u64,
    closed: bool,
}

impl FeedQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            inner: Mutex::new(Inner::default()),
            notify: Notify::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&self, msg: ServerMessage) {
        {
            let mut q = self.inner.lock().expect("queue lock");
            if q.closed {
                return;
            }
            if q.buf.len() >= self.capacity {
                let victim = q.buf.iter().position(|m| !m.is_chat()).unwrap_or(0);
                q.buf.remove(victim);
                q.dropped += 1;
            }
            q.buf.push_back(msg);
        }
        self.notify.notify_one();
    }

    pub fn try_pop(&self) -> Option<ServerMessage> {
        self.inner.lock().expect("queue lock").buf.pop_front()
    }

    /// Next message; `None` once closed and drained.
    pub async fn pop(&self) -> Option<ServerMessage> {
        loop {
            let notified = self.notify.notified();
            {
                let mut q = self.inner.lock().expect("queue lock");
                if let Some(m) = q.buf.pop_front() {
                    return Some(m);
                }
                if q.closed {
                    return None;
                }
            }
            notified.await;
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.notify.notify_one();
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("queue lock").dropped
    }
}
