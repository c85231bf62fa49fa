//! Pulling the reasoning region out of streamed content.

use serde::{Deserialize, Serialize};

/// Sentinel pair bracketing the reasoning region, e.g. `<think>`/`</think>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub open: String,
    pub close: String,
}

impl Delimiters {
    pub fn think_tags() -> Self {
        Self {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Before,
    Inside,
    After,
}

/// Incremental extractor; tolerant of sentinels split across chunks.
///
/// With no delimiters everything is reasoning. With delimiters, only text
/// between the first open and the following close is; a missing close means
/// the rest of the stream is treated as reasoning.
#[derive(Debug, Clone)]
pub struct ReasoningExtractor {
    delimiters: Option<Delimiters>,
    region: Region,
    held: String,
}

impl ReasoningExtractor {
    pub fn new(delimiters: Option<Delimiters>) -> Self {
        let region = if delimiters.is_some() {
            Region::Before
        } else {
            Region::Inside
        };
        Self {
            delimiters,
            region,
            held: String::new(),
        }
    }

    /// True once the closing sentinel has been seen; no further reasoning follows.
    pub fn is_closed(&self) -> bool {
        self.region == Region::After
    }

    /// Feed content; returns the reasoning text it completes.
    pub fn push(&mut self, text: &str) -> String {
        let Some(delims) = &self.delimiters else {
            return text.to_string();
        };
        let mut out = String::new();
        self.held.push_str(text);
        loop {
            match self.region {
                Region::After => {
                    self.held.clear();
                    break;
                }
                Region::Before => match self.held.find(&delims.open) {
                    Some(at) => {
                        self.held.drain(..at + delims.open.len());
                        self.region = Region::Inside;
                    }
                    None => {
                        let keep = partial_suffix(&self.held, &delims.open);
                        self.held.drain(..self.held.len() - keep);
                        break;
                    }
                },
                Region::Inside => match self.held.find(&delims.close) {
                    Some(at) => {
                        out.push_str(&self.held[..at]);
                        self.held.clear();
                        self.region = Region::After;
                    }
                    None => {
                        let keep = partial_suffix(&self.held, &delims.close);
                        let cut = self.held.len() - keep;
                        out.push_str(&self.held[..cut]);
                        self.held.drain(..cut);
                        break;
                    }
                },
            }
        }
        out
    }

    /// End of stream: returns any held reasoning and whether the region was
    /// left unclosed.
    pub fn finish(&mut self) -> (String, bool) {
        let unclosed = self.delimiters.is_some() && self.region == Region::Inside;
        let tail = if self.region == Region::Inside {
            std::mem::take(&mut self.held)
        } else {
            self.held.clear();
            String::new()
        };
        (tail, unclosed)
    }
}

/// Length of the longest proper suffix of `s` that is a prefix of `pat`.
fn partial_suffix(s: &str, pat: &str) -> usize {
    let max = pat.len().saturating_sub(1).min(s.len());
    (1..=max)
        .rev()
        .find(|&n| s.is_char_boundary(s.len() - n) && pat.as_bytes().starts_with(&s.as_bytes()[s.len() - n..]))
        .unwrap_or(0)
}
