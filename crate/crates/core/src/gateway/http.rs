//! OpenAI-compatible HTTP backends.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::backend::{BackendError, ChatBackend, EmbeddingBackend};
use super::GatewayRequest;

#[derive(Debug, Clone)]
pub struct Endpoint {
    /// Identifier recorded with transcripts, e.g. `openai:gpt-4o`.
    pub name: String,
    pub api_base: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Extra request fields passed through unchanged (e.g. `reasoning_effort`).
    pub extra: Map<String, Value>,
    pub timeout: Duration,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

fn post(agent: &ureq::Agent, endpoint: &Endpoint, path: &str, body: &Value) -> Result<Value, BackendError> {
    let url = format!("{}/{}", endpoint.api_base.trim_end_matches('/'), path);
    let mut req = agent.post(&url).header("Content-Type", "application/json");
    if let Some(key) = &endpoint.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send(body.to_string()).map_err(|e| BackendError::Transient(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Transient(e.to_string()))?;
    match status {
        200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::Permanent(format!("bad response body: {e}"))),
        429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}: {text}"))),
        _ => Err(BackendError::Permanent(format!("HTTP {status}: {text}"))),
    }
}

fn with_extra(mut body: Value, extra: &Map<String, Value>) -> Value {
    if let Value::Object(map) = &mut body {
        for (k, v) in extra {
            map.insert(k.clone(), v.clone());
        }
    }
    body
}

pub struct HttpChat {
    endpoint: Endpoint,
    agent: ureq::Agent,
}

impl HttpChat {
    pub fn new(endpoint: Endpoint) -> Self {
        let agent = agent(endpoint.timeout);
        Self { endpoint, agent }
    }
}

impl ChatBackend for HttpChat {
    fn name(&self) -> &str {
        &self.endpoint.name
    }

    fn complete(&self, request: &GatewayRequest, prompt: &str) -> Result<String, BackendError> {
        let body = with_extra(
            json!({
                "model": self.endpoint.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": request.decoding().temperature(),
                "max_tokens": request.decoding().max_output(),
            }),
            &self.endpoint.extra,
        );
        let value = post(&self.agent, &self.endpoint, "chat/completions", &body)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Permanent("response has no choices[0].message.content".into()))
    }
}

pub struct HttpEmbedding {
    endpoint: Endpoint,
    dimension: usize,
    agent: ureq::Agent,
}

impl HttpEmbedding {
    pub fn new(endpoint: Endpoint, dimension: usize) -> Self {
        let agent = agent(endpoint.timeout);
        Self { endpoint, dimension, agent }
    }
}

impl EmbeddingBackend for HttpEmbedding {
    fn name(&self) -> &str {
        &self.endpoint.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        let body = with_extra(json!({"model": self.endpoint.model, "input": texts}), &self.endpoint.extra);
        let value = post(&self.agent, &self.endpoint, "embeddings", &body)?;
        let data = value["data"].as_array().ok_or_else(|| BackendError::Permanent("response has no data array".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map(|i| i as usize).unwrap_or(pos);
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| BackendError::Permanent("embedding entry without vector".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| BackendError::Permanent("non-numeric embedding component".into()))?;
            *out.get_mut(index).ok_or_else(|| BackendError::Permanent(format!("embedding index {index} out of range")))? =
                vector;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{templates, Role};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves the given (status, body) pairs, one per connection, and reports
    /// each request body.
    fn mock(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; length];
                reader.read_exact(&mut buf).unwrap();
                tx.send(String::from_utf8(buf).unwrap()).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn endpoint(base: String) -> Endpoint {
        let mut extra = Map::new();
        extra.insert("reasoning_effort".into(), json!("medium"));
        Endpoint {
            name: "mock:model".into(),
            api_base: base,
            model: "m".into(),
            api_key: Some("k".into()),
            extra,
            timeout: Duration::from_secs(10),
        }
    }

    fn request() -> GatewayRequest {
        GatewayRequest::new(Role::Judge, templates::EVAL_MATCH).unwrap().var("predicted", "[]").var("expected", "[]")
    }

    #[test]
    fn chat_request_shape_and_response() {
        let (base, rx) = mock(vec![(200, r#"{"choices":[{"message":{"content":"hi"}}]}"#.into())]);
        let chat = HttpChat::new(endpoint(base));
        assert_eq!(chat.complete(&request(), "prompt text").unwrap(), "hi");
        let sent: Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][0]["content"], "prompt text");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["max_tokens"], 2048);
        assert_eq!(sent["reasoning_effort"], "medium");
    }

    #[test]
    fn status_codes_are_classified() {
        let (base, _rx) = mock(vec![(429, "{}".into()), (401, "{}".into())]);
        let chat = HttpChat::new(endpoint(base));
        assert!(matches!(chat.complete(&request(), "p"), Err(BackendError::Transient(_))));
        assert!(matches!(chat.complete(&request(), "p"), Err(BackendError::Permanent(_))));
    }

    #[test]
    fn embeddings_are_reordered_by_index() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.5]}]}"#;
        let (base, _rx) = mock(vec![(200, body.into())]);
        let e = HttpEmbedding::new(endpoint(base), 2);
        let v = e.embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
    }
}
