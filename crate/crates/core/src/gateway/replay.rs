use std::collections::HashMap;
use std::path::Path;

use super::{read_transcript, ChatBackend, ChatRequest, ChatResponse, GatewayError};

/// Answers each request with the recorded response whose request matched on
/// (request tag, message contents). Call order does not matter.
pub struct ReplayBackend {
    responses: HashMap<String, ChatResponse>,
    label: String,
}

impl ReplayBackend {
    pub fn from_transcript(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let (_, entries) = read_transcript(path)?;
        let mut responses = HashMap::with_capacity(entries.len());
        for entry in entries {
            let digest = entry.request.digest();
            if responses.insert(digest.clone(), entry.response).is_some() {
                return Err(GatewayError::DuplicateKey {
                    path: path.display().to_string(),
                    request_tag: entry.request.request_tag,
                    digest,
                });
            }
        }
        Ok(ReplayBackend { responses, label: format!("replay:{}", path.display()) })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let digest = request.digest();
        self.responses
            .get(&digest)
            .cloned()
            .ok_or_else(|| GatewayError::ReplayMiss { request_tag: request.request_tag.clone(), digest })
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
