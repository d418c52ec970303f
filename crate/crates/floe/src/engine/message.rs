//! The unit of dataflow: an opaque payload with routing metadata.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Application data.
    Data,
    /// Marks a position in the stream (window boundary, logic update). Never
    /// split: delivered on every outgoing edge.
    Landmark,
    /// Coordination traffic (superstep barriers). Never split either.
    Control,
}

/// Messages are cheap to clone; duplicate splits clone one per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    /// Strictly increasing per (source pellet, out-port); stamped on emit.
    pub seq: u64,
    /// Emitting pellet id; stamped on emit, empty until then.
    pub source: String,
    pub kind: MessageKind,
    /// Routing key for key-hash splits.
    pub key: Option<Vec<u8>>,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn data(payload: impl Into<Vec<u8>>) -> Self {
        Message {
            seq: 0,
            source: String::new(),
            kind: MessageKind::Data,
            key: None,
            payload: payload.into(),
        }
    }

    pub fn keyed(key: impl Into<Vec<u8>>, payload: impl Into<Vec<u8>>) -> Self {
        Message {
            key: Some(key.into()),
            ..Message::data(payload)
        }
    }

    /// Landmarks must carry a non-empty label.
    pub fn landmark(label: &str) -> Self {
        assert!(!label.is_empty(), "landmark requires a label");
        Message {
            kind: MessageKind::Landmark,
            ..Message::data(label.as_bytes().to_vec())
        }
    }

    /// Control messages must carry a non-empty label.
    pub fn control(label: &str) -> Self {
        assert!(!label.is_empty(), "control message requires a label");
        Message {
            kind: MessageKind::Control,
            ..Message::data(label.as_bytes().to_vec())
        }
    }

    /// Payload as UTF-8, for label-carrying messages and text fixtures.
    pub fn text(&self) -> &str {
        std::str::from_utf8(&self.payload).unwrap_or("")
    }

    pub fn key_str(&self) -> Option<&str> {
        self.key
            .as_deref()
            .and_then(|k| std::str::from_utf8(k).ok())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            MessageKind::Data => "data",
            MessageKind::Landmark => "landmark",
            MessageKind::Control => "control",
        };
        write!(f, "{kind}#{} from {}", self.seq, self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors() {
        let m = Message::keyed("k1", "v1");
        assert_eq!(m.kind, MessageKind::Data);
        assert_eq!(m.key_str(), Some("k1"));
        assert_eq!(m.text(), "v1");

        let l = Message::landmark("update:3");
        assert_eq!(l.kind, MessageKind::Landmark);
        assert_eq!(l.text(), "update:3");
    }

    #[test]
    #[should_panic(expected = "label")]
    fn empty_landmark_label_panics() {
        let _ = Message::landmark("");
    }
}
