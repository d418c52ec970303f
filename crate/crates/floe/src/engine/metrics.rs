//! Per-flake instrumentation sampled by the allocation controllers.

/// Snapshot of one flake's load. `arrival_rate` and `mean_latency` are
/// windowed means over the engine's sampling window; `mean_latency` is 0.0
/// until the first invocation completes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlakeMetrics {
    /// Messages waiting across all input queues.
    pub queue_length: u64,
    /// D: messages/second entering the flake.
    pub arrival_rate: f64,
    /// L: seconds per message for one instance.
    pub mean_latency: f64,
    /// N: running instance budget, always cores x alpha.
    pub instances: u32,
    pub processed_total: u64,
    pub emitted_total: u64,
}

impl FlakeMetrics {
    /// Shorthand used by controller code and tests: the (D, L, N) triple
    /// plus queue length that the adaptation algorithms read.
    pub fn sample(queue_length: u64, arrival_rate: f64, mean_latency: f64, instances: u32) -> Self {
        FlakeMetrics {
            queue_length,
            arrival_rate,
            mean_latency,
            instances,
            processed_total: 0,
            emitted_total: 0,
        }
    }
}
