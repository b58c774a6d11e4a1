//! A scripted chat-completions server for exercising the remote critic
//! without network access.
//!
//! A script is a JSON array of replies, or an object
//! `{"replies": [...], "default": ...}` whose default answers every request
//! after the list runs out. A reply is either the assistant text or an
//! object `{"status": 500, "body": "..."}` sent verbatim.

use std::io;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StubReply {
    Content(String),
    Raw {
        #[serde(default = "ok_status")]
        status: u16,
        body: String,
    },
}

fn ok_status() -> u16 {
    200
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
pub struct StubScript {
    pub replies: Vec<StubReply>,
    #[serde(default)]
    pub default: Option<StubReply>,
}

impl StubScript {
    pub fn from_replies<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        Self {
            replies: replies.into_iter().map(|s| StubReply::Content(s.into())).collect(),
            default: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Form {
            List(Vec<StubReply>),
            Full(StubScript),
        }
        match serde_json::from_str::<Form>(text).map_err(|e| e.to_string())? {
            Form::List(replies) => Ok(Self { replies, default: None }),
            Form::Full(s) => Ok(s),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordedRequest {
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

struct State {
    script: StubScript,
    next: usize,
    requests: Vec<RecordedRequest>,
}

pub struct StubServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    state: Arc<Mutex<State>>,
    worker: Option<JoinHandle<()>>,
}

fn completion(index: usize, content: &str) -> String {
    json!({
        "id": format!("stub-{index}"),
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop",
        }],
    })
    .to_string()
}

impl StubServer {
    /// Binds `127.0.0.1:port` (0 picks a free port) and serves in a
    /// background thread until dropped.
    pub fn start(port: u16, script: StubScript) -> io::Result<Self> {
        let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("stub server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let state = Arc::new(Mutex::new(State {
            script,
            next: 0,
            requests: vec![],
        }));
        let worker = {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let authorization = request
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("authorization"))
                        .map(|h| h.value.as_str().to_string());
                    let (status, text) = {
                        let mut st = state.lock().expect("stub state lock");
                        st.requests.push(RecordedRequest {
                            path: request.url().to_string(),
                            authorization,
                            body,
                        });
                        let index = st.next;
                        st.next += 1;
                        let reply = st.script.replies.get(index).or(st.script.default.as_ref()).cloned();
                        match reply {
                            Some(StubReply::Content(c)) => (200, completion(index, &c)),
                            Some(StubReply::Raw { status, body }) => (status, body),
                            None => (500, json!({"error": "stub script exhausted"}).to_string()),
                        }
                    };
                    let header = tiny_http::Header::from_bytes("content-type", "application/json")
                        .expect("static header");
                    let response = tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header);
                    let _ = request.respond(response);
                }
            })
        };
        Ok(Self {
            addr,
            server,
            state,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().expect("stub state lock").requests.clone()
    }

    /// Blocks until the server thread ends (it runs until the process is
    /// killed).
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_forms() {
        let list = StubScript::parse(r#"["a", {"status": 503, "body": "busy"}]"#).unwrap();
        assert_eq!(list.replies.len(), 2);
        assert_eq!(
            list.replies[1],
            StubReply::Raw {
                status: 503,
                body: "busy".into()
            }
        );
        let full = StubScript::parse(r#"{"replies": ["x"], "default": "ANSWER: 0"}"#).unwrap();
        assert_eq!(full.default, Some(StubReply::Content("ANSWER: 0".into())));
        assert!(StubScript::parse("{").is_err());
    }
}
