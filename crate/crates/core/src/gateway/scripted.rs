use serde::Deserialize;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

fn canned(content: String) -> ChatResponse {
    ChatResponse {
        content,
        finish_reason: "stop".into(),
        usage: Usage::default(),
        latency: Duration::ZERO,
        attempt_count: 1,
    }
}

#[derive(Default)]
struct Script {
    queue: VecDeque<String>,
    by_tag: HashMap<String, VecDeque<String>>,
}

/// Answers from hand-written replies, either in call order or keyed by request tag.
///
/// Tagged replies take precedence; the ordered queue is the fallback.
#[derive(Default)]
pub struct ScriptedBackend {
    script: Mutex<Script>,
    label: String,
}

/// A scripted reply: literal text, or a JSON object sent as a fenced block.
#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Text(String),
    Block(serde_json::Map<String, serde_json::Value>),
}

impl Reply {
    fn into_text(self) -> String {
        match self {
            Reply::Text(text) => text,
            Reply::Block(map) => {
                let body = serde_json::to_string_pretty(&map).unwrap_or_default();
                format!("```json\n{body}\n```")
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Reply),
    Many(Vec<Reply>),
}

#[derive(Deserialize)]
struct ScriptFile {
    #[serde(default)]
    replies: BTreeMap<String, OneOrMany>,
    #[serde(default)]
    queue: Vec<Reply>,
}

impl ScriptedBackend {
    pub fn queue<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let backend = ScriptedBackend { label: "scripted".into(), ..Default::default() };
        backend.lock().queue = replies.into_iter().map(Into::into).collect();
        backend
    }

    pub fn tagged() -> Self {
        ScriptedBackend { label: "scripted".into(), ..Default::default() }
    }

    pub fn reply(self, tag: impl Into<String>, content: impl Into<String>) -> Self {
        self.lock().by_tag.entry(tag.into()).or_default().push_back(content.into());
        self
    }

    /// Loads `{"replies": {"<tag>": reply | [reply, ...]}, "queue": [reply, ...]}`
    /// where a reply is a string or a JSON object (sent as a fenced block).
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let file: ScriptFile =
            serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut backend = ScriptedBackend::queue(file.queue.into_iter().map(Reply::into_text));
        backend.label = format!("scripted:{}", path.display());
        for (tag, replies) in file.replies {
            let replies = match replies {
                OneOrMany::One(r) => vec![r],
                OneOrMany::Many(v) => v,
            };
            backend.lock().by_tag.insert(tag, replies.into_iter().map(Reply::into_text).collect());
        }
        Ok(backend)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Script> {
        self.script.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn remaining(&self) -> usize {
        let script = self.lock();
        script.queue.len() + script.by_tag.values().map(VecDeque::len).sum::<usize>()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut script = self.lock();
        let tagged = script.by_tag.get_mut(&request.request_tag).and_then(VecDeque::pop_front);
        let content = match tagged {
            Some(c) => c,
            None => script
                .queue
                .pop_front()
                .ok_or_else(|| GatewayError::ScriptExhausted { request_tag: request.request_tag.clone() })?,
        };
        Ok(canned(content))
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// Backend computing each reply with a closure; handy for protocol tests.
pub struct FnBackend<F> {
    reply: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    pub fn new(reply: F) -> Self {
        FnBackend { reply }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (self.reply)(request).map(canned)
    }

    fn describe(&self) -> String {
        "function".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn req(tag: &str) -> ChatRequest {
        ChatRequest::new("m", tag, vec![ChatMessage::user("x")])
    }

    #[test]
    fn queued_reply_is_returned_verbatim() {
        let b = ScriptedBackend::queue(["```json\n{}\n```"]);
        let r = b.complete(&req("any")).unwrap();
        assert_eq!(r.content, "```json\n{}\n```");
        assert_eq!(r.attempt_count, 1);
        assert!(matches!(b.complete(&req("any")), Err(GatewayError::ScriptExhausted { .. })));
    }

    #[test]
    fn tagged_replies_take_precedence() {
        let b = ScriptedBackend::queue(["fallback"]).reply("a", "one").reply("a", "two");
        assert_eq!(b.complete(&req("a")).unwrap().content, "one");
        assert_eq!(b.complete(&req("a")).unwrap().content, "two");
        assert_eq!(b.complete(&req("a")).unwrap().content, "fallback");
        assert_eq!(b.remaining(), 0);
    }

    #[test]
    fn loads_script_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"replies": {"x": "1", "y": ["2", "3"]}}"#).unwrap();
        let b = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(b.remaining(), 3);
        assert_eq!(b.complete(&req("y")).unwrap().content, "2");
    }

    #[test]
    fn object_replies_become_fenced_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, r#"{"replies": {"x": {"goals": []}}, "queue": [{"a": 1}]}"#).unwrap();
        let b = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(b.complete(&req("x")).unwrap().content, "```json\n{\n  \"goals\": []\n}\n```");
        assert!(b.complete(&req("other")).unwrap().content.starts_with("```json\n{"));
    }
}
