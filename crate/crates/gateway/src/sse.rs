//! Minimal server-sent-events framing for chat-completion streams.

use axum::body::Bytes;

/// Splits a byte stream into whole events, each including its blank-line
/// terminator, so events can be relayed verbatim.
#[derive(Debug, Default)]
pub struct SseFramer {
    buf: Vec<u8>,
}

impl SseFramer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, chunk: &[u8]) -> Vec<Bytes> {
        self.buf.extend_from_slice(chunk);
        let mut out = Vec::new();
        let mut start = 0;
        while let Some(end) = event_end(&self.buf[start..]) {
            out.push(Bytes::copy_from_slice(&self.buf[start..start + end]));
            start += end;
        }
        self.buf.drain(..start);
        out
    }

    /// Whatever trailing bytes never got a terminator.
    pub fn take_remainder(&mut self) -> Bytes {
        Bytes::from(std::mem::take(&mut self.buf))
    }
}

fn event_end(buf: &[u8]) -> Option<usize> {
    let lf = find(buf, b"\n\n").map(|i| i + 2);
    let crlf = find(buf, b"\r\n\r\n").map(|i| i + 4);
    match (lf, crlf) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

/// What an event carries, as far as the monitor cares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    Done,
    /// Reasoning supplied out of band (`reasoning_content` / `reasoning`).
    Delta {
        reasoning: Option<String>,
        content: Option<String>,
    },
    Other,
}

pub fn parse_event(event: &[u8]) -> EventPayload {
    let text = String::from_utf8_lossy(event);
    let data: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("data:"))
        .map(|d| d.strip_prefix(' ').unwrap_or(d))
        .collect();
    if data.is_empty() {
        return EventPayload::Other;
    }
    let data = data.join("\n");
    if data.trim() == "[DONE]" {
        return EventPayload::Done;
    }
    let Ok(value) = serde_json::from_str::<serde_json::Value>(&data) else {
        return EventPayload::Other;
    };
    let delta = &value["choices"][0]["delta"];
    let field = |name: &str| delta.get(name).and_then(|v| v.as_str()).map(str::to_string);
    EventPayload::Delta {
        reasoning: field("reasoning_content").or_else(|| field("reasoning")),
        content: field("content"),
    }
}

pub fn event(name: &str, data: &serde_json::Value) -> Bytes {
    Bytes::from(format!("event: {name}\ndata: {data}\n\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_across_chunks() {
        let mut f = SseFramer::new();
        assert!(f.push(b"data: {\"a\":1}\n").is_empty());
        let ev = f.push(b"\ndata: [DO");
        assert_eq!(ev.len(), 1);
        assert_eq!(&ev[0][..], b"data: {\"a\":1}\n\n");
        let ev = f.push(b"NE]\n\n");
        assert_eq!(parse_event(&ev[0]), EventPayload::Done);
        assert!(f.take_remainder().is_empty());
    }

    #[test]
    fn crlf_events() {
        let mut f = SseFramer::new();
        let ev = f.push(b"data: x\r\n\r\ndata: y\r\n\r\n");
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn delta_fields() {
        let e = br#"data: {"choices":[{"delta":{"content":"hi","reasoning_content":"hmm"}}]}"#;
        assert_eq!(
            parse_event(e),
            EventPayload::Delta {
                reasoning: Some("hmm".into()),
                content: Some("hi".into())
            }
        );
        assert_eq!(parse_event(b": keep-alive\n\n"), EventPayload::Other);
    }
}
