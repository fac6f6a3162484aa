use std::collections::VecDeque;
use std::sync::Mutex;

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Stage};

type Responder = Box<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Deterministic backend answering from per-stage queues or a responder
/// function. Every request is kept for inspection.
pub struct ScriptedBackend {
    queues: Mutex<Vec<(Option<Stage>, VecDeque<String>)>>,
    responder: Option<Responder>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    /// Replies in order regardless of stage.
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend {
            queues: Mutex::new(vec![(None, replies.into_iter().map(Into::into).collect())]),
            responder: None,
            requests: Mutex::new(Vec::new()),
        }
    }

    /// An empty script; add per-stage replies with [`ScriptedBackend::stage`].
    pub fn empty() -> Self {
        ScriptedBackend {
            queues: Mutex::new(Vec::new()),
            responder: None,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn stage<I, S>(self, stage: Stage, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.queues
            .lock()
            .expect("script lock")
            .push((Some(stage), replies.into_iter().map(Into::into).collect()));
        self
    }

    /// Fallback consulted when no queue has a reply for the request.
    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    {
        self.responder = Some(Box::new(f));
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("request lock").clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let n = {
            let mut reqs = self.requests.lock().expect("request lock");
            reqs.push(request.clone());
            reqs.len()
        };
        let queued = {
            let mut queues = self.queues.lock().expect("script lock");
            let pos = queues
                .iter()
                .position(|(s, q)| !q.is_empty() && s.map_or(true, |s| s == request.stage));
            pos.and_then(|i| queues[i].1.pop_front())
        };
        let text = queued
            .or_else(|| self.responder.as_ref().and_then(|f| f(request)))
            .ok_or(LlmError::ScriptExhausted(n))?;
        Ok(ChatResponse::estimated(request, &text))
    }
}
