//! The behavior interface user code implements, the invocation input
//! shapes, and the registry resolving graph impl names to behaviors.

use super::message::Message;
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BehaviorError {
    #[error("state access from a stateless pellet")]
    Stateless,
    #[error("unknown out-port: {0}")]
    UnknownPort(String),
    #[error("{0}")]
    Failed(String),
}

/// Input to one push invocation.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkInput {
    /// One message from one in-port.
    Single { port: String, msg: Message },
    /// Synchronous merge: one message per in-port.
    Tuple(BTreeMap<String, Message>),
    /// A full window from one in-port.
    Batch { port: String, msgs: Vec<Message> },
}

impl WorkInput {
    pub fn message_count(&self) -> u64 {
        match self {
            WorkInput::Single { .. } => 1,
            WorkInput::Tuple(t) => t.len() as u64,
            WorkInput::Batch { msgs, .. } => msgs.len() as u64,
        }
    }
}

/// Execution context handed to behaviors. Emission routes immediately;
/// state access serializes per flake.
pub trait PelletContext {
    /// Stamp and route a message out of a declared port.
    fn emit(&mut self, port: &str, msg: Message) -> Result<(), BehaviorError>;
    /// Read the flake's state object. Errors on stateless pellets.
    fn get_state(&self) -> Result<Option<Vec<u8>>, BehaviorError>;
    /// Replace the flake's state object. Errors on stateless pellets.
    fn put_state(&mut self, state: Vec<u8>) -> Result<(), BehaviorError>;
    /// True when the engine asks long invocations to wind down.
    fn interrupted(&self) -> bool;
    /// Number of graph edges feeding one of this pellet's in-ports.
    fn in_degree(&self, port: &str) -> usize;
    /// Append a note to the engine event log (for ordering assertions).
    fn note(&mut self, note: &str);
}

/// One pellet's logic. Behaviors are shared across data-parallel instances,
/// so implementations must be stateless or internally synchronized; durable
/// per-flake state belongs in the context's state object.
pub trait PelletBehavior: Send + Sync {
    /// Push trigger: called once per message, tuple, or window batch.
    fn on_push(&self, input: WorkInput, ctx: &mut dyn PelletContext) -> Result<(), BehaviorError> {
        let _ = (input, ctx);
        Err(BehaviorError::Failed("pellet has no push logic".into()))
    }

    /// Pull trigger: called with an iterator over the currently available
    /// backlog, each item tagged with its in-port. The engine re-invokes
    /// when more input arrives, so behaviors must persist progress in state.
    fn on_pull(
        &self,
        inputs: &mut dyn Iterator<Item = (String, Message)>,
        ctx: &mut dyn PelletContext,
    ) -> Result<(), BehaviorError> {
        let _ = (inputs, ctx);
        Err(BehaviorError::Failed("pellet has no pull logic".into()))
    }
}

/// Maps graph impl names to behavior implementations.
#[derive(Default, Clone)]
pub struct BehaviorRegistry {
    entries: BTreeMap<String, Arc<dyn PelletBehavior>>,
}

impl BehaviorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, behavior: Arc<dyn PelletBehavior>) {
        self.entries.insert(name.to_string(), behavior);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn PelletBehavior>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

impl std::fmt::Debug for BehaviorRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BehaviorRegistry")
            .field("names", &self.names())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Noop;
    impl PelletBehavior for Noop {}

    #[test]
    fn registry_resolves_by_name() {
        let mut reg = BehaviorRegistry::new();
        reg.register("noop", Arc::new(Noop));
        assert!(reg.get("noop").is_some());
        assert!(reg.get("other").is_none());
        assert_eq!(reg.names(), ["noop"]);
    }

    #[test]
    fn default_hooks_reject_wrong_trigger() {
        let b = Noop;
        let mut it = std::iter::empty();
        struct NullCtx;
        impl PelletContext for NullCtx {
            fn emit(&mut self, _: &str, _: Message) -> Result<(), BehaviorError> {
                Ok(())
            }
            fn get_state(&self) -> Result<Option<Vec<u8>>, BehaviorError> {
                Err(BehaviorError::Stateless)
            }
            fn put_state(&mut self, _: Vec<u8>) -> Result<(), BehaviorError> {
                Err(BehaviorError::Stateless)
            }
            fn interrupted(&self) -> bool {
                false
            }
            fn in_degree(&self, _: &str) -> usize {
                0
            }
            fn note(&mut self, _: &str) {}
        }
        assert!(b.on_pull(&mut it, &mut NullCtx).is_err());
        let input = WorkInput::Single {
            port: "in".into(),
            msg: Message::data("hello"),
        };
        assert!(b.on_push(input, &mut NullCtx).is_err());
    }

    #[test]
    fn work_input_counts_messages() {
        let m = Message::data("p");
        assert_eq!(
            WorkInput::Single {
                port: "in".into(),
                msg: m.clone()
            }
            .message_count(),
            1
        );
        assert_eq!(
            WorkInput::Batch {
                port: "in".into(),
                msgs: vec![m.clone(), m.clone(), m]
            }
            .message_count(),
            3
        );
    }
}
